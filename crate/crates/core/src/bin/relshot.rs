use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use relshot::eval::{self, ReportOptions};
use relshot::llm::{ChatTransport, DecodingProfile, Gateway, GatewayConfig, HttpConfig, HttpTransport, MockTransport};
use relshot::pipeline::{self, read_traces, InferenceMode, NerFilterMode, RunConfig, RunInput, Stores, TRACES_FILE};
use relshot::select::{ClusterPolicy, Init, Representation, SelectionStrategy, StrategyKind};
use relshot::store::{load_embeddings, read_embeddings, SupportVectors, VectorSource};

#[derive(Parser)]
#[command(name = "relshot", version, about = "K-shot support selection and scoring for few-shot relation extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes through selection and inference.
    Run(Box<RunArgs>),
    /// Score run directories and write scores.jsonl, report.txt and f1_bars.tsv.
    Score(ScoreArgs),
    /// Token-overlap and cosine diversity of the selected examples.
    Diversity(DiversityArgs),
    /// Mean generated/retrieved split of hybrid picks.
    Provenance(ProvenanceArgs),
    /// Compare runs against the first one.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusterArg {
    Kmeans,
    #[value(name = "kmeans++")]
    KmeansPlusPlus,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Random,
    Closest,
    Farthest,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReprArg {
    Sentence,
    Rule,
}

#[derive(Clone, Copy, ValueEnum)]
enum NerArg {
    Off,
    Deterministic,
    Llm,
    DeterministicThenLlm,
}

#[derive(Clone, Copy, ValueEnum)]
enum InferenceArg {
    Binary,
    MultiClass,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, num_args = 1.., required = true)]
    episodes: Vec<PathBuf>,
    /// gold-only, llm-paraphrase, llm-generate, retrieve-closest, retrieve-cluster or hybrid.
    #[arg(long, default_value = "gold-only")]
    strategy: StrategyKind,
    /// Total examples per relation, gold included.
    #[arg(long, default_value_t = 1)]
    shots: usize,
    #[arg(long, default_value_t = pipeline::DEFAULT_TAU)]
    tau: f64,
    #[arg(long, value_enum, default_value = "sentence")]
    representation: ReprArg,
    #[arg(long, value_enum)]
    cluster: Option<ClusterArg>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Mix generated and retrieved candidates and let the model pick.
    #[arg(long)]
    hybrid: bool,
    /// Replace additional examples by their summaries.
    #[arg(long)]
    summarize: bool,
    #[arg(long, value_enum, default_value = "deterministic-then-llm")]
    ner: NerArg,
    #[arg(long, value_enum, default_value = "binary")]
    inference: InferenceArg,
    /// Base URL of an OpenAI-compatible server.
    #[arg(long, conflicts_with = "mock")]
    endpoint: Option<String>,
    #[arg(long, default_value = "default")]
    model: String,
    /// Scripted reply fixture instead of an endpoint.
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the selection draws; defaults to --seed.
    #[arg(long)]
    selection_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Embedding store for the retrieval strategies.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Binary vector sidecar of --store.
    #[arg(long, requires = "store")]
    sidecar: Option<PathBuf>,
    /// Vectors of the gold supports, when the store does not contain them.
    #[arg(long)]
    support_embeddings: Option<PathBuf>,
    /// qwen, gemma or greedy.
    #[arg(long, default_value = "qwen")]
    decoding: String,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 250)]
    backoff_ms: u64,
    /// Concurrent requests to the endpoint.
    #[arg(long, default_value_t = 8)]
    max_in_flight: usize,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Report directory; defaults to the first run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-break multi-yes ties with this many seeds and report the spread.
    #[arg(long, default_value_t = 0)]
    seed_sweep: u64,
}

#[derive(Args)]
struct DiversityArgs {
    #[arg(num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, requires = "store")]
    sidecar: Option<PathBuf>,
    /// Vectors keyed by tagged text, for gold supports and generated examples.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct ProvenanceArgs {
    #[arg(num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Baseline run first.
    #[arg(num_args = 2.., required = true)]
    runs: Vec<PathBuf>,
}

fn load_stores(store: Option<&Path>, sidecar: Option<&Path>, supports: Option<&Path>, source: VectorSource) -> Result<Stores> {
    let index = match store {
        Some(p) => Some(load_embeddings(p, sidecar, source).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    let supports = match supports {
        Some(p) => Some(
            SupportVectors::from_records(read_embeddings(p, None, VectorSource::SentenceEmbedding)?)
                .with_context(|| format!("loading {}", p.display()))?,
        ),
        None => None,
    };
    Ok(Stores::new(index, supports))
}

fn strategy_from(a: &RunArgs) -> Result<SelectionStrategy> {
    let mut kind = a.strategy;
    if a.hybrid {
        kind = match kind {
            StrategyKind::RetrieveClosest | StrategyKind::RetrieveCluster | StrategyKind::Hybrid => StrategyKind::Hybrid,
            other => bail!("--hybrid combines with a retrieval strategy, not {other}"),
        };
    }
    let mut s = SelectionStrategy::new(kind, a.shots);
    s.representation = match a.representation {
        ReprArg::Sentence => Representation::Sentence,
        ReprArg::Rule => Representation::Rule,
    };
    s.clustering = a.cluster.map(|c| match c {
        ClusterArg::Kmeans => Init::Random,
        ClusterArg::KmeansPlusPlus => Init::PlusPlus,
    });
    s.cluster_policy = a.policy.map(|p| match p {
        PolicyArg::Random => ClusterPolicy::Random,
        PolicyArg::Closest => ClusterPolicy::Closest,
        PolicyArg::Farthest => ClusterPolicy::FarthestFirst,
    });
    s.summarize = a.summarize;
    s.seed = a.selection_seed.unwrap_or(a.seed);
    s.validate()?;
    Ok(s)
}

fn cmd_run(a: &RunArgs) -> Result<ExitCode> {
    let strategy = strategy_from(a)?;
    let decoding = DecodingProfile::preset(&a.decoding)?;
    let mut config = RunConfig::new(strategy);
    config.tau = a.tau;
    config.seed = a.seed;
    config.parallelism = a.parallelism;
    config.decoding = decoding.clone();
    config.ner_filter = match a.ner {
        NerArg::Off => NerFilterMode::Off,
        NerArg::Deterministic => NerFilterMode::Deterministic,
        NerArg::Llm => NerFilterMode::Llm,
        NerArg::DeterministicThenLlm => NerFilterMode::DeterministicThenLlm,
    };
    config.inference_mode = match a.inference {
        InferenceArg::Binary => InferenceMode::Binary,
        InferenceArg::MultiClass => InferenceMode::MultiClass,
    };

    let transport: Arc<dyn ChatTransport> = match (&a.mock, &a.endpoint) {
        (Some(p), _) => Arc::new(MockTransport::load(p).with_context(|| format!("loading {}", p.display()))?),
        (None, Some(url)) => {
            let mut hc = HttpConfig::new(url, &a.model);
            hc.max_in_flight = a.max_in_flight.max(1);
            Arc::new(HttpTransport::new(hc))
        }
        (None, None) => bail!("one of --endpoint or --mock is required"),
    };
    let gateway = Gateway::new(
        transport,
        GatewayConfig { retries: a.retries, backoff_ms: a.backoff_ms, decoding, ..GatewayConfig::default() },
    );
    let source = match a.representation {
        ReprArg::Sentence => VectorSource::SentenceEmbedding,
        ReprArg::Rule => VectorSource::RuleEmbedding,
    };
    let stores = load_stores(a.store.as_deref(), a.sidecar.as_deref(), a.support_embeddings.as_deref(), source)?;
    let input = RunInput::new(a.episodes.clone(), &a.out);

    let artifacts = match pipeline::run(&config, &input, &stores, &gateway) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::FAILURE);
        }
    };
    let s = &artifacts.summary;
    println!(
        "{} episodes ({} failed), {} queries, {}/{} pairs prompted -> {}",
        s.episodes,
        s.failed,
        s.queries,
        s.prompted_pairs,
        s.candidate_pairs,
        artifacts.out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_score(a: &ScoreArgs) -> Result<ExitCode> {
    let out = a.out.clone().unwrap_or_else(|| a.runs[0].clone());
    let runs = eval::emit_report(&a.runs, &out, &ReportOptions { seed_sweep: a.seed_sweep })?;
    print!("{}", eval::score_table(&runs));
    Ok(ExitCode::SUCCESS)
}

fn traces_of(runs: &[PathBuf]) -> Result<Vec<pipeline::SelectionTrace>> {
    let mut all = Vec::new();
    for d in runs {
        let p = d.join(TRACES_FILE);
        all.extend(read_traces(&p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(all)
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

fn cmd_diversity(a: &DiversityArgs) -> Result<ExitCode> {
    let stores = load_stores(a.store.as_deref(), a.sidecar.as_deref(), a.embeddings.as_deref(), VectorSource::SentenceEmbedding)?;
    let traces = traces_of(&a.runs)?;
    println!("strategy\tG+A\trelations\tgold_overlap_pct\tgold_cosine\tamong_overlap_pct\tamong_cosine");
    for r in eval::trace_diversity(&traces, &stores) {
        println!(
            "{}\t1+{}\t{}\t{:.1}\t{}\t{}\t{}",
            r.strategy,
            r.shots.saturating_sub(1),
            r.relations,
            r.gold_overlap_pct,
            opt(r.gold_cosine, 3),
            opt(r.among_overlap_pct, 1),
            opt(r.among_cosine, 3)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_provenance(a: &ProvenanceArgs) -> Result<ExitCode> {
    let traces = traces_of(&a.runs)?;
    println!("strategy\tG+A\trelations\tgenerated\tretrieved");
    for r in eval::pick_provenance(&traces) {
        println!("{}\t1+{}\t{}\t{:.2}\t{:.2}", r.strategy, r.shots.saturating_sub(1), r.relations, r.generated, r.retrieved);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ablate(a: &AblateArgs) -> Result<ExitCode> {
    let runs = a.runs.iter().map(|d| eval::load_run(d).and_then(|r| eval::score_run(&r))).collect::<Result<Vec<_>, _>>()?;
    print!("{}", eval::ablation_table(&runs));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Score(a) => cmd_score(a),
        Command::Diversity(a) => cmd_diversity(a),
        Command::Provenance(a) => cmd_provenance(a),
        Command::Ablate(a) => cmd_ablate(a),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
