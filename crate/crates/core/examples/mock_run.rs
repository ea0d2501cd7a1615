//! A full run over the fixture episodes with a scripted model, then scoring.
//!
//! cargo run --example mock_run [strategy] [shots]
//!
//! The run directory lands in the system temp dir; the scores and the first
//! selection trace are printed.

use std::path::PathBuf;
use std::sync::Arc;

use relshot::eval::{emit_report, score_table, ReportOptions};
use relshot::llm::{Gateway, GatewayConfig, MockTransport};
use relshot::pipeline::{read_traces, run, RunConfig, RunInput, Stores, TRACES_FILE};
use relshot::select::{SelectionStrategy, StrategyKind};
use relshot::store::{load_embeddings, read_embeddings, SupportVectors, VectorSource};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut args = std::env::args().skip(1);
    let kind: StrategyKind = args.next().as_deref().unwrap_or("hybrid").parse()?;
    let shots: usize = args.next().as_deref().unwrap_or("5").parse()?;

    let stores = Stores::new(
        Some(load_embeddings(&fixtures.join("store.jsonl"), None, VectorSource::SentenceEmbedding)?),
        Some(SupportVectors::from_records(read_embeddings(
            &fixtures.join("support_vectors.jsonl"),
            None,
            VectorSource::SentenceEmbedding,
        )?)?),
    );
    let mock = MockTransport::load(&fixtures.join("mock.jsonl"))?;
    let gateway = Gateway::new(Arc::new(mock), GatewayConfig { backoff_ms: 0, ..GatewayConfig::default() });

    let strategy = if shots <= 1 { SelectionStrategy::gold_only() } else { SelectionStrategy::new(kind, shots) };
    let mut config = RunConfig::new(strategy);
    config.parallelism = 4;
    let out = std::env::temp_dir().join(format!("relshot-mock-{kind}-{shots}"));
    let artifacts = run(&config, &RunInput::new(vec![fixtures.join("episodes.jsonl")], &out), &stores, &gateway)?;
    println!("{:?}\n", artifacts.summary);

    let scores = emit_report(std::slice::from_ref(&out), &out, &ReportOptions { seed_sweep: 3 })?;
    print!("{}", score_table(&scores));

    if let Some(t) = read_traces(out.join(TRACES_FILE))?.first() {
        println!("\n{} / {}: pool {} k {} starved {}", t.episode_id, t.relation, t.pool_n, t.k, t.starved);
        for c in &t.chosen {
            println!("  [{:?}] {}", c.provenance, c.text);
        }
    }
    println!("\nartifacts in {}", out.display());
    Ok(())
}
