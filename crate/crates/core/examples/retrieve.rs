//! Exact cosine retrieval from a type-partitioned embedding store.
//!
//! cargo run --example retrieve

use std::path::PathBuf;

use relshot::model::TypePair;
use relshot::store::{load_embeddings, VectorSource};

fn main() -> anyhow::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let index = load_embeddings(&fixtures.join("store.jsonl"), None, VectorSource::SentenceEmbedding)?;
    println!("{} records, dim {:?}", index.len(), index.dim());
    for (pair, n) in index.partition_sizes() {
        println!("  {pair}: {n}");
    }

    let pair = TypePair::new("ORGANIZATION", "PERSON");
    // Use a stored vector as the query: it must come back first with score 1.
    let probe = index.records().find(|r| r.type_pair == pair).expect("partition not empty").id;
    let query = index.vector(probe).unwrap().to_vec();

    println!("\ntop 5 for record {probe}:");
    for hit in index.retrieve_topk(&query, 5, &pair)? {
        println!("  {:>4}  {:.4}  {}", hit.id, hit.score, index.record(hit.id).unwrap().sentence.render());
    }
    let pool = index.retrieve_threshold(&query, 0.6, &pair)?;
    println!("\n{} records at cosine >= 0.6", pool.len());

    // The same query against another type pair only sees that partition.
    let other = TypePair::new("PERSON", "DATE");
    let hits = index.retrieve_topk(&query, 5, &other)?;
    assert!(hits.iter().all(|h| index.record(h.id).unwrap().type_pair == other));
    println!("{} hits under {other}, best score {:.4}", hits.len(), hits[0].score);
    Ok(())
}
