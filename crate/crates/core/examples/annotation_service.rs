//! Builds a blind annotation batch, serves it over HTTP and lets three
//! scripted annotators judge every item before printing the report.
//!
//! With ANNOTATION_PORT set the service stays up for manual use (the UI is
//! read from annotation_ui/dist); otherwise it runs the simulation and exits.

use std::collections::BTreeMap;
use std::net::SocketAddr;

use enthymeme::annotation::{create_batch, render_report_table, router, serve, AggregateReport, AnnotationStore, ItemView, PORT_ENV};
use enthymeme::corpus::{Enthymeme, TestSet};
use enthymeme::generator::{GeneratedPremise, GenerationRecord, Setting};

fn fixture() -> (Vec<Enthymeme>, Vec<GenerationRecord>) {
    let rows = [
        ("Homework takes time away from family life.", "Schools should limit homework.", "Family time matters for a child's development."),
        ("Cycling lanes encourage people to cycle.", "The city should build cycling lanes.", "More cycling improves public health."),
        ("Plastic bags pollute the oceans.", "Plastic bags should carry a charge.", "A charge reduces the use of plastic bags."),
    ];
    let mut es = Vec::new();
    let mut gens = Vec::new();
    for (i, (p, c, g)) in rows.iter().enumerate() {
        let id = format!("demo-{i}");
        for (setting, premise) in [(Setting::FineTuned, "It is good."), (Setting::FineTunedKnowledge, *g)] {
            gens.push(GenerationRecord::Generated(GeneratedPremise {
                enthymeme_id: id.clone(),
                setting,
                full_argument: format!("{p} And since {premise} {c}"),
                implicit_premise: premise.to_string(),
                extraction_fallback: false,
            }));
        }
        es.push(Enthymeme {
            id,
            stated_premise: p.to_string(),
            stated_claim: c.to_string(),
            gold_premises: vec![g.to_string()],
            source: TestSet::D3,
            scheme: None,
            raw_meta: BTreeMap::new(),
            knowledge_phrase: None,
        });
    }
    (es, gens)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (es, gens) = fixture();
    let store = AnnotationStore::new(create_batch(&gens, &es, 3, 13)?)?;

    if let Ok(port) = std::env::var(PORT_ENV) {
        let addr = SocketAddr::from(([127, 0, 0, 1], port.parse()?));
        println!("serving on http://{addr} (ctrl-c to stop)");
        serve(store, addr, Some("annotation_ui/dist".into())).await?;
        return Ok(());
    }

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, router(store, None)).await });

    let base_for_judges = base.clone();
    let report = tokio::task::spawn_blocking(move || -> Result<AggregateReport, reqwest::Error> {
        let client = reqwest::blocking::Client::new();
        for annotator in ["ann-1", "ann-2", "ann-3"] {
            loop {
                let resp = client.get(format!("{base_for_judges}/items/next?annotator={annotator}")).send()?;
                if resp.status() == reqwest::StatusCode::NO_CONTENT {
                    break;
                }
                let item: ItemView = resp.json()?;
                // a crude judge: premises of three words or fewer are implausible
                let plausible = item.candidate_premise.split_whitespace().count() > 3;
                client
                    .post(format!("{base_for_judges}/judgments"))
                    .json(&serde_json::json!({"item_id": item.item_id, "annotator_id": annotator, "plausible": plausible}))
                    .send()?;
            }
        }
        client.get(format!("{base_for_judges}/report")).send()?.json()
    })
    .await??;
    print!("{}", render_report_table(&report));
    Ok(())
}
