//! Build a hybrid pool of generated and retrieved candidates and let a
//! scripted model pick the most diverse half; then watch the cosine fallback.
//!
//! cargo run --example hybrid_pool

use std::sync::Arc;

use relshot::llm::{Gateway, GatewayConfig, MockEntry, MockTransport, ScriptedReply, TemplateId};
use relshot::model::RelationSpec;
use relshot::select::{assemble_hybrid_pool, PoolCandidate, Provenance};
use relshot::tagged::parse_tagged;

fn main() -> anyhow::Result<()> {
    let spec = RelationSpec {
        name: "org:founded_by".into(),
        description: "the person who founded the organization".into(),
        subject_type: "ORGANIZATION".into(),
        object_type: "PERSON".into(),
    };
    let generated: Vec<PoolCandidate> = [
        "<subject>Acme</subject> was founded by <object>Jane Roe</object>",
        "<object>Jane Roe</object> started <subject>Acme</subject> in a garage",
        "<subject>Acme</subject> owes its birth to <object>Jane Roe</object>",
    ]
    .iter()
    .map(|s| PoolCandidate::generated(parse_tagged(s).unwrap()))
    .collect();
    let retrieved = (0..3)
        .map(|i| PoolCandidate {
            sentence: parse_tagged(&format!("<subject>Org{i}</subject> , created by <object>Founder{i}</object> , grew")).unwrap(),
            vector: Some(vec![1.0 - 0.3 * i as f32, 0.3 * i as f32]),
            store_id: Some(i),
        })
        .collect::<Vec<_>>();
    let gold_vector = [1.0f32, 0.0];

    let pool = assemble_hybrid_pool(generated, retrieved, 42)?;
    for e in &pool.entries {
        println!("{:>2} {:<9?} {}", e.pool_id, e.provenance, e.candidate.sentence.render());
    }

    let script = |reply: &str| {
        let mock = MockTransport::new(vec![MockEntry::fallback(TemplateId::HybridPick, vec![ScriptedReply::text(reply)])]).unwrap();
        Gateway::new(Arc::new(mock), GatewayConfig { backoff_ms: 0, ..GatewayConfig::default() })
    };

    let picked = script("[2, 5, 6]").pick_diverse(&spec, &pool, 3, Some(&gold_vector))?;
    let generated_picks = picked.ids.iter().filter(|&&id| pool.get(id).unwrap().provenance == Provenance::Generated).count();
    println!("\nmodel picked {:?} ({generated_picks} generated)", picked.ids);

    let fallback = script("I like all of them").pick_diverse(&spec, &pool, 3, Some(&gold_vector))?;
    println!("unparseable replies -> cosine fallback {:?} (fell_back = {})", fallback.ids, fallback.fell_back);
    Ok(())
}
