//! Command-line front end: index building, feature extraction, labeling,
//! training, routing, benchmarking and end-to-end reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tailcut::bench::{
    classification_metrics, format_latency_table, format_table, overlap_report, percentile_report, write_latency_csv,
};
use tailcut::desk::{generate, DeskConfig};
use tailcut::features;
use tailcut::labels::{label_queries, read_labels, write_labels, LabelConfig, MedMode};
use tailcut::metrics::trec::{read_qrels, read_run, write_run};
use tailcut::pipeline::{
    extract_all, models_from, rho_for_budget, run_pipeline, score_pools, train_all, CvTable, EvalConfig,
    PipelineConfig, Pool, TrainConfig, TrainedModels,
};
use tailcut::queries::read_queries;
use tailcut::router::{read_log, run_fixed_all, write_log, Algorithm, FixedSystem, LogRow, Router, RouterConfig};
use tailcut::timing::Clock;
use tailcut::{build_index, Index, IndexConfig, RankedList};

#[derive(Parser)]
#[command(name = "tailcut", version, about = "Stage-0 candidate generation with tail-latency aware routing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic desk collection (corpus, queries, reference run, qrels)
    GenDesk(GenDeskArgs),
    /// Build the document-ordered and impact-ordered indexes from a JSONL corpus
    BuildIndex(BuildIndexArgs),
    /// Write the pre-retrieval feature CSV for a query set
    ExtractFeatures(ExtractArgs),
    /// Compute k*, rho* and BMW/JASS time labels against a reference run
    Label(LabelArgs),
    /// Train depth, budget and time models (optionally with out-of-fold predictions)
    Train(TrainArgs),
    /// Route queries with a trained router or run a fixed system
    Route(RouteArgs),
    /// Latency percentiles, tail overlap and tail classification from decision logs
    Bench(BenchArgs),
    /// Effectiveness of candidate pools against a reference run
    Eval(EvalArgs),
    /// Run the whole pipeline on a generated desk collection and write every artifact
    Report(ReportArgs),
}

#[derive(Args)]
struct DeskArgs {
    /// Number of documents
    #[arg(long, default_value_t = 10_000)]
    docs: usize,
    /// Number of queries
    #[arg(long, default_value_t = 500)]
    queries: usize,
    /// Vocabulary size
    #[arg(long, default_value_t = 6_000)]
    vocab: usize,
}

impl DeskArgs {
    fn config(&self, seed: u64) -> DeskConfig {
        DeskConfig {
            docs: self.docs,
            queries: self.queries,
            vocab: self.vocab,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct GenDeskArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Seed for every random choice
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[command(flatten)]
    desk: DeskArgs,
}

#[derive(Args)]
struct BuildIndexArgs {
    /// JSONL corpus with `id` and `text` fields
    #[arg(long)]
    corpus: PathBuf,
    /// Output index directory
    #[arg(long)]
    out: PathBuf,
    /// Impact quantization bits
    #[arg(long, default_value_t = 8)]
    bits: u32,
    /// Postings per block
    #[arg(long, default_value_t = 64)]
    block_size: usize,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    index: PathBuf,
    /// Query file (`qid<TAB>text`)
    #[arg(long)]
    queries: PathBuf,
    /// Output feature CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pool,
    List,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Reference run in TREC format
    #[arg(long)]
    reference: PathBuf,
    /// Output labels CSV
    #[arg(long)]
    out: PathBuf,
    /// MED tolerance
    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,
    /// RBP persistence
    #[arg(long, default_value_t = 0.95)]
    persistence: f64,
    /// MED comparison: reference vs its restriction to the pool, or list vs list
    #[arg(long, value_enum, default_value_t = ModeArg::Pool)]
    mode: ModeArg,
    /// Timing source: `model` (deterministic cost model) or `wall`
    #[arg(long, default_value = "model")]
    clock: String,
    /// Timed repetitions per query (mean reported)
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Output model directory
    #[arg(long)]
    out: PathBuf,
    /// Also write out-of-fold predictions here
    #[arg(long)]
    cv_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Quantile for the depth and budget models
    #[arg(long, default_value_t = 0.55)]
    tau: f64,
    /// Percentile of training BMW times that defines the tail threshold
    #[arg(long, default_value_t = 0.95)]
    tail_percentile: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    /// Predict depth only
    #[value(name = "1")]
    One,
    /// Predict depth and BMW time
    #[value(name = "2")]
    Two,
    /// Fixed BMW at --k and --theta
    Bmw,
    /// Fixed JASS at --k and --rho
    Jass,
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long, value_enum)]
    alg: AlgArg,
    #[arg(long)]
    index: PathBuf,
    /// Model directory (required for --alg 1 and 2)
    #[arg(long)]
    models: Option<PathBuf>,
    /// Out-of-fold predictions to use for the queries they cover
    #[arg(long)]
    cv: Option<PathBuf>,
    #[arg(long)]
    queries: PathBuf,
    /// Decision log CSV
    #[arg(long)]
    out: PathBuf,
    /// Candidate pools as a TREC run
    #[arg(long)]
    run_out: Option<PathBuf>,
    /// Depth threshold T_k
    #[arg(long, default_value_t = 1000.0)]
    t_k: f64,
    /// Time threshold T_t in ms (default: the learned tail threshold)
    #[arg(long)]
    t_t: Option<f64>,
    /// Postings cap for JASS (default: derived from T_t under the cost model)
    #[arg(long)]
    rho_max: Option<u64>,
    /// BMW aggression
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Fixed-system depth
    #[arg(long, default_value_t = 1000)]
    k: usize,
    /// Fixed JASS budget (0 = unlimited)
    #[arg(long, default_value_t = 0)]
    rho: u64,
    #[arg(long, default_value = "model")]
    clock: String,
    #[arg(long, default_value_t = 200.0)]
    budget_ms: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// Decision logs as NAME=PATH (repeatable)
    #[arg(long = "log", value_parser = parse_named)]
    logs: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = 200.0)]
    budget_ms: f64,
    /// Percentile that defines each system's tail set for the overlap table
    #[arg(long, default_value_t = 0.95)]
    percentile: f64,
    /// Latency CSV output
    #[arg(long)]
    out: Option<PathBuf>,
    /// Out-of-fold predictions for the tail classification table
    #[arg(long, requires = "labels")]
    cv: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Tail threshold in ms (default: percentile of labeled BMW times)
    #[arg(long)]
    threshold_ms: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Candidate runs as NAME=PATH (repeatable)
    #[arg(long = "run", value_parser = parse_named, required = true)]
    runs: Vec<(String, PathBuf)>,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    persistence: f64,
    /// Effectiveness CSV output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Artifact directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[command(flatten)]
    desk: DeskArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 1000.0)]
    t_k: f64,
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
        _ => Err(format!("expected NAME=PATH, got `{s}`")),
    }
}

fn clock(s: &str) -> Result<Clock> {
    Clock::parse(s).with_context(|| format!("unknown clock `{s}` (expected model or wall)"))
}

fn load_index(dir: &Path) -> Result<Index> {
    Index::load(dir).with_context(|| format!("loading index from {}", dir.display()))
}

fn gen_desk(a: GenDeskArgs) -> Result<()> {
    let desk = generate(&a.desk.config(a.seed), IndexConfig::default())?;
    desk.write(&a.out)?;
    println!(
        "wrote {} documents and {} queries to {}",
        desk.docs.len(),
        desk.queries.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_build_index(a: BuildIndexArgs) -> Result<()> {
    let cfg = IndexConfig {
        bits: a.bits,
        block_size: a.block_size,
        ..Default::default()
    };
    let index = build_index(&a.corpus, cfg)?;
    index.save(&a.out)?;
    println!(
        "indexed {} documents, {} terms into {}",
        index.num_docs(),
        index.num_terms(),
        a.out.display()
    );
    Ok(())
}

fn extract_features(a: ExtractArgs) -> Result<()> {
    let index = load_index(&a.index)?;
    let queries = read_queries(&a.queries)?;
    let rows = extract_all(&index, &queries);
    features::write_csv(&a.out, &rows)?;
    println!("{} of {} queries have features", rows.len(), queries.len());
    Ok(())
}

fn label(a: LabelArgs) -> Result<()> {
    let index = load_index(&a.index)?;
    let queries = read_queries(&a.queries)?;
    let reference = read_run(&a.reference)?.into_iter().collect();
    let cfg = LabelConfig {
        epsilon: a.epsilon,
        persistence: a.persistence,
        mode: match a.mode {
            ModeArg::Pool => MedMode::Pool,
            ModeArg::List => MedMode::List,
        },
        clock: clock(&a.clock)?,
        repetitions: a.reps,
        ..Default::default()
    };
    let labels = label_queries(&index, &queries, &reference, &cfg)?;
    write_labels(&a.out, &labels)?;
    let attainable = labels.iter().filter(|l| l.attainable()).count();
    println!("labeled {} queries ({attainable} attainable)", labels.len());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let features = features::read_csv(&a.features)?;
    let labels = read_labels(&a.labels)?;
    let mut cfg = TrainConfig::new(a.seed);
    cfg.folds = a.folds;
    cfg.qr_k.tau = a.tau;
    cfg.qr_rho.tau = a.tau;
    cfg.tail_percentile = a.tail_percentile;
    let models = train_all(&features, &labels, &cfg)?;
    models.save(&a.out)?;
    println!(
        "trained models in {} (tail threshold {:.4} ms)",
        a.out.display(),
        models.tail_threshold_ms().unwrap_or(f64::NAN)
    );
    if let Some(path) = a.cv_out {
        tailcut::pipeline::cross_validate_all(&features, &labels, &cfg)?.write_csv(&path)?;
        println!("wrote out-of-fold predictions to {}", path.display());
    }
    Ok(())
}

fn route(a: RouteArgs) -> Result<()> {
    let index = load_index(&a.index)?;
    let queries = read_queries(&a.queries)?;
    let clock = clock(&a.clock)?;
    let decisions = match a.alg {
        AlgArg::Bmw => run_fixed_all(FixedSystem::Bmw { theta: a.theta }, a.k, &index, &queries, &clock)?,
        AlgArg::Jass => {
            let rho = if a.rho == 0 { tailcut::saat::UNLIMITED } else { a.rho };
            run_fixed_all(FixedSystem::Jass { rho }, a.k, &index, &queries, &clock)?
        }
        AlgArg::One | AlgArg::Two => {
            let Some(dir) = &a.models else {
                bail!("--models is required for --alg 1 and 2");
            };
            let full = TrainedModels::load(dir)?;
            let models = match &a.cv {
                Some(p) => CvTable::read_csv(p)?.router_models(&full),
                None => models_from(&full),
            };
            let t_t = a.t_t.or(full.tail_threshold_ms()).unwrap_or(f64::INFINITY);
            let rho_max = match (a.rho_max, clock) {
                (Some(r), _) => r,
                (None, Clock::Model(m)) if t_t.is_finite() => rho_for_budget(&m, t_t),
                _ => RouterConfig::default().rho_max,
            };
            let cfg = RouterConfig {
                t_k: a.t_k,
                t_t,
                rho_max,
                theta: a.theta,
                budget_ms: a.budget_ms,
                ..Default::default()
            };
            let alg = match a.alg {
                AlgArg::One => Algorithm::PredictK,
                _ => Algorithm::PredictKAndTime,
            };
            Router::new(cfg, models, clock)?.route_all(alg, &index, &queries)?
        }
    };
    let rows: Vec<LogRow> = decisions.iter().map(LogRow::from).collect();
    write_log(&a.out, &rows)?;
    if let Some(p) = &a.run_out {
        write_run(p, decisions.iter().map(|d| &d.candidates), "tailcut")?;
    }
    println!("routed {} queries to {}", rows.len(), a.out.display());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut logs = Vec::new();
    for (name, path) in &a.logs {
        logs.push((name.clone(), read_log(path)?));
    }
    if !logs.is_empty() {
        let reports = logs
            .iter()
            .map(|(n, l)| percentile_report(n, l, a.budget_ms))
            .collect::<tailcut::Result<Vec<_>>>()?;
        println!("{}", format_latency_table(&reports));
        if let Some(out) = &a.out {
            write_latency_csv(out, &reports)?;
        }
        if logs.len() > 1 {
            let rows: Vec<Vec<String>> = overlap_report(&logs, a.percentile)?
                .into_iter()
                .map(|o| vec![o.a, o.b, format!("{:.1}", o.overlap_pct)])
                .collect();
            println!("{}", format_table(&["a", "b", "overlap_pct"], &rows));
        }
    }
    if let (Some(cv), Some(labels)) = (&a.cv, &a.labels) {
        let cv = CvTable::read_csv(cv)?;
        let labels = read_labels(labels)?;
        let times: BTreeMap<&str, f64> = labels.iter().map(|l| (l.query_id.as_str(), l.time_ms_bmw)).collect();
        let threshold = match a.threshold_ms {
            Some(t) => t,
            None => tailcut::labels::tail_threshold(&times.values().copied().collect::<Vec<_>>(), a.percentile)?,
        };
        let mut rows = Vec::new();
        for (name, preds) in [("QR", &cv.time_qr), ("LR", &cv.time_lr)] {
            let ids: Vec<&String> = preds.keys().filter(|q| times.contains_key(q.as_str())).collect();
            if ids.is_empty() {
                continue;
            }
            let p: Vec<f64> = ids.iter().map(|q| preds[*q]).collect();
            let t: Vec<f64> = ids.iter().map(|q| times[q.as_str()].max(1e-6).ln()).collect();
            let r = classification_metrics(&p, &t, threshold.max(1e-6).ln())?;
            rows.push(vec![
                name.to_string(),
                format!("{:.3}", r.rmse),
                format!("{:.3}", r.precision),
                format!("{:.3}", r.recall),
                format!("{:.3}", r.f1),
                format!("{:.3}", r.macro_f1),
                r.auc.map_or("-".into(), |v| format!("{v:.3}")),
            ]);
        }
        println!("tail threshold {threshold:.4} ms");
        println!(
            "{}",
            format_table(&["model", "RMSE", "P", "R", "F", "macro_F", "AUC"], &rows)
        );
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let reference: BTreeMap<String, RankedList> = read_run(&a.reference)?;
    let qrels = read_qrels(&a.qrels)?;
    let cfg = EvalConfig {
        persistence: a.persistence,
        ..Default::default()
    };
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for (name, path) in &a.runs {
        let run = read_run(path)?;
        let pools: Vec<Pool> = run
            .iter()
            .filter(|(q, _)| reference.contains_key(*q))
            .map(|(q, list)| Pool {
                query_id: q,
                k: list.len(),
                candidates: list,
            })
            .collect();
        let (e, _) = score_pools(name, &pools, &reference, &qrels, &cfg)?;
        table.push(vec![
            e.system.clone(),
            e.queries.to_string(),
            format!("{:.5}", e.mean_med),
            format!("{:.1}", e.mean_k),
            format!("{:.4}", e.ndcg10),
            format!("{:.4}", e.err10),
            e.tost_equivalent.to_string(),
        ]);
        rows.push(e);
    }
    println!(
        "{}",
        format_table(&["system", "queries", "mean_MED", "mean_k", "NDCG@10", "ERR@10", "TOST_equiv"], &table)
    );
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
        for e in &rows {
            w.serialize(e)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut cfg = PipelineConfig::new(a.seed);
    cfg.desk = a.desk.config(a.seed);
    cfg.train.folds = a.folds;
    cfg.eval.router.t_k = a.t_k;
    let run = run_pipeline(&cfg, Some(&a.out))?;
    println!("{}", run.eval.summary());
    println!("artifacts written to {}", a.out.display());
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("TAILCUT_THREADS") {
        let n: usize = v.parse().with_context(|| format!("TAILCUT_THREADS must be a number, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::GenDesk(a) => gen_desk(a),
        Command::BuildIndex(a) => cmd_build_index(a),
        Command::ExtractFeatures(a) => extract_features(a),
        Command::Label(a) => label(a),
        Command::Train(a) => train(a),
        Command::Route(a) => route(a),
        Command::Bench(a) => bench(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
