#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use enthymeme::annotation::{router, AnnotationItem, AnnotationStore, ItemView};
use enthymeme::corpus::{Enthymeme, TestSet};
use enthymeme::generator::{GeneratedPremise, GenerationRecord, Setting};
use sha2::{Digest, Sha256};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_enthymeme"));
    // keep ambient configuration out of the runs
    for (key, _) in std::env::vars() {
        if key.starts_with("ENTHYMEME_") || key == "ANNOTATION_PORT" {
            cmd.env_remove(key);
        }
    }
    cmd
}

pub fn run_ok(args: &[&str], dir: &Path) -> Output {
    let out = bin().args(args).current_dir(dir).output().expect("binary runs");
    assert!(
        out.status.success(),
        "enthymeme {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Runs prepare -> augment(stub) -> generate(stub, both settings) -> evaluate(static)
/// -> batch -> report in `dir`, with a scripted journal so the report has content.
/// Returns the produced files (manifests excluded).
pub fn stub_pipeline(dir: &Path) -> Vec<PathBuf> {
    let d3 = fixture("d3_microtext.jsonl");
    let d3 = d3.to_str().unwrap();
    run_ok(&["prepare", "--dataset", "d3", "--in", d3, "--format", "microtext", "--out", "d3.jsonl"], dir);
    run_ok(&["augment", "--in", "d3.jsonl", "--backend", "stub", "--out", "d3k.jsonl"], dir);
    for (setting, out) in [("fine_tuned_knowledge", "gen_k.jsonl"), ("fine_tuned", "gen_p.jsonl")] {
        run_ok(
            &["generate", "--enthymemes", "d3k.jsonl", "--setting", setting, "--stub", "--out", out],
            dir,
        );
    }
    run_ok(
        &["evaluate", "--generations", "gen_k.jsonl", "--gold", "d3.jsonl", "--embedder", "static", "--out", "scores.json"],
        dir,
    );
    run_ok(
        &["batch", "--generations", "gen_k.jsonl", "--generations", "gen_p.jsonl", "--gold", "d3.jsonl",
          "--sample-size", "4", "--out", "batch.jsonl"],
        dir,
    );
    let items: Vec<AnnotationItem> = enthymeme::jsonl::read_all(&dir.join("batch.jsonl")).unwrap();
    let mut journal = String::new();
    for item in &items {
        for judge in ["j1", "j2", "j3"] {
            let record = serde_json::json!({
                "item_id": item.item_id,
                "annotator_id": judge,
                "plausible": scripted_vote(&item.item_id, judge),
                "submitted_at": "2024-01-01T00:00:00Z",
            });
            journal.push_str(&record.to_string());
            journal.push('\n');
        }
    }
    std::fs::write(dir.join("journal.jsonl"), journal).unwrap();
    run_ok(&["report", "--journal", "journal.jsonl", "--batch", "batch.jsonl", "--out", "report.json"], dir);
    ["d3.jsonl", "d3k.jsonl", "gen_k.jsonl", "gen_p.jsonl", "scores.json", "batch.jsonl", "report.json"]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

/// Deterministic pseudo-random judgment for an (item, annotator) pair.
pub fn scripted_vote(item_id: &str, annotator: &str) -> bool {
    let digest = Sha256::digest(format!("{item_id}/{annotator}").as_bytes());
    digest[0] % 3 != 0
}

pub fn enthymemes(n: usize, source: TestSet) -> Vec<Enthymeme> {
    (0..n)
        .map(|i| Enthymeme {
            id: format!("{}-{i}", source.to_string().to_lowercase()),
            stated_premise: format!("Premise number {i} is stated."),
            stated_claim: format!("Claim number {i} follows."),
            gold_premises: vec![format!("Gold premise {i} holds.")],
            source,
            scheme: None,
            raw_meta: BTreeMap::new(),
            knowledge_phrase: None,
        })
        .collect()
}

pub fn generations(es: &[Enthymeme], setting: Setting) -> Vec<GenerationRecord> {
    es.iter()
        .map(|e| {
            GenerationRecord::Generated(GeneratedPremise {
                enthymeme_id: e.id.clone(),
                setting,
                full_argument: format!("{} And since it holds. {}", e.stated_premise, e.stated_claim),
                implicit_premise: format!("It holds for {}.", e.id),
                extraction_fallback: false,
            })
        })
        .collect()
}

/// Serves `store` on an ephemeral port from a background thread; returns the base url.
pub fn spawn_service(store: AnnotationStore) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, router(store, None)).await.unwrap();
        });
    });
    format!("http://{addr}")
}

/// Annotators take turns asking for their next item and judging it until
/// the service has nothing left for anyone. Returns the votes cast.
pub fn simulate_annotators(base: &str, annotators: &[&str]) -> Vec<(String, String, bool)> {
    let client = reqwest::blocking::Client::new();
    let mut cast = Vec::new();
    loop {
        let mut progressed = false;
        for a in annotators {
            let resp = client.get(format!("{base}/items/next?annotator={a}")).send().unwrap();
            if resp.status() == reqwest::StatusCode::NO_CONTENT {
                continue;
            }
            assert_eq!(resp.status(), reqwest::StatusCode::OK);
            let view: ItemView = resp.json().unwrap();
            let plausible = scripted_vote(&view.item_id, a);
            let resp = client
                .post(format!("{base}/judgments"))
                .json(&serde_json::json!({"item_id": view.item_id, "annotator_id": a, "plausible": plausible}))
                .send()
                .unwrap();
            assert_eq!(resp.status(), reqwest::StatusCode::CREATED);
            cast.push((view.item_id, a.to_string(), plausible));
            progressed = true;
        }
        if !progressed {
            return cast;
        }
    }
}
