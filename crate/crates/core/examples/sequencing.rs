//! Builds the three input/target formats for one training triple and pulls
//! the premise back out of a generated argument.

use enthymeme::sequencing::{
    build_decoder_target, build_encoder_input, build_zero_shot_prompt, extract_implicit_premise,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let o1 = "Amy was looking through her mother's old scrapbooks.";
    let o2 = "Amy realized her mother had dated her history professor.";
    let h = "Amy found pictures of her history professor and mother together.";

    println!("encoder:            {}", build_encoder_input(o1, o2, None)?.text());
    println!("encoder + phrase:   {}", build_encoder_input(o1, o2, Some("to find something"))?.text());
    let target = build_decoder_target(o1, h, o2)?;
    println!("decoder target:     {}", target.text());
    println!("zero-shot prompt:   {}", build_zero_shot_prompt("Smoking harms bystanders", "Smoking should be banned.")?.text());

    let extraction = extract_implicit_premise(target.text())?;
    println!("extracted premise:  {} (fallback: {})", extraction.premise, extraction.fallback);

    // no marker: the middle sentence of a three-sentence output is taken
    let unmarked = extract_implicit_premise("Taxes are high. People leave the city. The city loses money.")?;
    println!("unmarked output:    {} (fallback: {})", unmarked.premise, unmarked.fallback);
    Ok(())
}
