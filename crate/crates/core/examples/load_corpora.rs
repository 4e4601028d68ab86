//! Loads the bundled fixtures in their native formats and prints the filter statistics.

use std::path::Path;

use enthymeme::corpus::{load_art, load_test_set, InputFormat, Split, TestSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let art = load_art(&fixtures.join("art_train.jsonl"), Split::Train, InputFormat::Anlg)?;
    println!("{}", art.stats.summary());
    for (file, set, format) in [
        ("d1_arct.tsv", TestSet::D1, InputFormat::Arct),
        ("d2_forum.jsonl", TestSet::D2, InputFormat::Forum),
        ("d3_microtext.jsonl", TestSet::D3, InputFormat::Microtext),
    ] {
        let loaded = load_test_set(&fixtures.join(file), set, format)?;
        println!("{}", loaded.stats.summary());
        if let Some(first) = loaded.records.first() {
            println!("  e.g. {} | {} | gold: {}", first.stated_premise, first.stated_claim, first.gold_premises[0]);
        }
    }
    Ok(())
}
