//! Queries a knowledge backend for a two-sentence discourse and selects the
//! intent phrase that goes between the delimiters. Set KNOWLEDGE_BACKEND_URL
//! to use a running model server; otherwise the deterministic stub answers.

use enthymeme::knowledge::{
    infer, select_intent, HttpKnowledgeBackend, KnowledgeBackend, RelationName, StubKnowledgeBackend, BACKEND_URL_ENV,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let discourse = vec![
        "Amy was looking through her mother's old scrapbooks.".to_string(),
        "Amy realized her mother had dated her history professor.".to_string(),
    ];
    let backend: Box<dyn KnowledgeBackend> = if std::env::var_os(BACKEND_URL_ENV).is_some() {
        Box::new(HttpKnowledgeBackend::from_env()?)
    } else {
        Box::new(StubKnowledgeBackend::new().with_beams(
            &discourse[0],
            RelationName::XIntent,
            &["to find something", "to remember", "to learn more"],
        ))
    };
    let bundle = infer(&discourse, backend.as_ref())?;
    for ((sentence, relation), beams) in bundle.inferences() {
        if *sentence == 0 {
            println!("S{} {:<10} {}", sentence + 1, relation.as_str(), beams.join(" | "));
        }
    }
    println!("selected phrase: {}", select_intent(&bundle)?);
    Ok(())
}
