//! Scores two systems against gold premises with BLEU-1/2 and BERTScore,
//! then tests the difference with the signed-rank test.

use std::path::Path;

use enthymeme::corpus::{load_d3, InputFormat};
use enthymeme::generator::{GeneratedPremise, GenerationRecord, Setting};
use enthymeme::metrics::{bleu, compare, evaluate_corpus, render_score_table, tokenize, StaticEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/d3_microtext.jsonl");
    let gold = load_d3(&path, InputFormat::Microtext)?.records;

    let cand = tokenize("the the the");
    println!("clipping: BLEU-1('the the the' | 'the cat') = {:.4}", bleu(&cand, &[tokenize("the cat")], 1)?);

    // one system copies the stated claim, the other paraphrases the gold premise
    let system = |setting: Setting, pick: &dyn Fn(&enthymeme::corpus::Enthymeme) -> String| -> Vec<GenerationRecord> {
        gold.iter()
            .map(|e| {
                let premise = pick(e);
                GenerationRecord::Generated(GeneratedPremise {
                    enthymeme_id: e.id.clone(),
                    setting,
                    full_argument: format!("{} And since {} {}", e.stated_premise, premise, e.stated_claim),
                    implicit_premise: premise,
                    extraction_fallback: false,
                })
            })
            .collect()
    };
    let copy = system(Setting::FineTuned, &|e| e.stated_claim.clone());
    let close = system(Setting::FineTunedKnowledge, &|e| e.gold_premises[0].replace("should", "ought to"));

    let embedder = StaticEmbedder::default();
    let a = evaluate_corpus(&close, &gold, &embedder)?;
    let b = evaluate_corpus(&copy, &gold, &embedder)?;
    let test = compare(&a, &b)?;
    let mut first = a.report.clone();
    first.p_value = Some(test.p_value);
    print!("{}", render_score_table(&[first, b.report]));
    println!("W+ = {}, n = {}, exact = {}", test.w_plus, test.n, test.exact);
    Ok(())
}
