//! Runs the generation pipeline over the D3 fixture with the deterministic
//! stub model in every setting.

use std::path::Path;

use enthymeme::corpus::{load_d3, InputFormat};
use enthymeme::generator::{generate_for_corpus, GenerationConfig, KnowledgeSource, Setting, StubBackend};
use enthymeme::knowledge::StubKnowledgeBackend;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/d3_microtext.jsonl");
    let enthymemes = load_d3(&path, InputFormat::Microtext)?.records;
    let knowledge = StubKnowledgeBackend::new();
    for setting in [Setting::ZeroShot, Setting::FineTuned, Setting::FineTunedKnowledge] {
        let config = GenerationConfig::new(setting);
        let source = (setting == Setting::FineTunedKnowledge).then_some(KnowledgeSource::Backend(&knowledge));
        let records = generate_for_corpus(&enthymemes[..3], &mut StubBackend::new(), &config, source)?;
        println!("{setting}");
        for r in &records {
            if let Some(p) = r.premise() {
                println!("  {} -> {}", p.full_argument, p.implicit_premise);
            }
        }
    }
    Ok(())
}
