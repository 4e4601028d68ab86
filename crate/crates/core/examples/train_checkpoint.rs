//! Trains the lexical checkpoint on the ART fixture with stub commonsense,
//! reloads it from disk and decodes premises for a few enthymemes.

use std::collections::BTreeMap;
use std::path::Path;

use enthymeme::corpus::{load_art, load_d3, InputFormat, Split};
use enthymeme::generator::{
    fine_tune, generate_for_corpus, CheckpointBackend, GenerationConfig, KnowledgeSource, Setting, TrainingConfig,
    TrainingManifest,
};
use enthymeme::knowledge::{infer, select_intent, StubKnowledgeBackend};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let pairs = load_art(&fixtures.join("art_train.jsonl"), Split::Train, InputFormat::Anlg)?.records;
    let kb = StubKnowledgeBackend::new();
    let mut phrases = BTreeMap::new();
    for p in &pairs {
        let bundle = infer(&[p.obs1.clone(), p.obs2.clone()], &kb)?;
        phrases.insert(p.id.clone(), select_intent(&bundle)?);
    }

    let dir = tempfile_dir()?;
    let mut config = TrainingConfig::new(&dir);
    config.epochs = 5;
    fine_tune(&pairs, Some(&phrases), &config)?;
    let manifest = TrainingManifest::load(&dir)?;
    println!("trained on {} pairs, loss per epoch {:?}", manifest.examples_used, manifest.loss);

    let mut backend = CheckpointBackend::open(&dir)?;
    let enthymemes = load_d3(&fixtures.join("d3_microtext.jsonl"), InputFormat::Microtext)?.records;
    let config = GenerationConfig::new(Setting::FineTunedKnowledge);
    let records = generate_for_corpus(&enthymemes[..4], &mut backend, &config, Some(KnowledgeSource::Backend(&kb)))?;
    for r in records.iter().filter_map(|r| r.premise()) {
        println!("{}\n  premise: {}", r.full_argument, r.implicit_premise);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("enthymeme-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
