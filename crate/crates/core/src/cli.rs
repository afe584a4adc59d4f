//! `hnswlab` command line.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::dataset::Dataset;
use crate::dimest::{self, DEFAULT_LID_NEIGHBOURS, DEFAULT_THETA};
use crate::error::{Error, Result, StageExt};
use crate::hnsw::{self, HnswIndex, HnswParams, NeighborSelect};
use crate::io;
use crate::knn::{self, Baseline};
use crate::lab::{self, ExperimentConfig};
use crate::metrics::{self, Gain};
use crate::orders::{self, Direction, OrderPlan, Strategy};
use crate::synth::SynthSpec;
use crate::vecmath::Metric;

const AFTER_HELP: &str = "\
Defaults M=16, ef-construction=128 and k=10 are the fixed settings of the \
insertion-order study this tool reproduces; ef-search points 10 and 40 are \
its two operating points. Baseline cache directory: $HNSWLAB_CACHE_DIR.

Exit codes: 0 ok, 2 usage error, 3 data error, 4 internal invariant violation.";

#[derive(Debug, Parser)]
#[command(name = "hnswlab", version, about = "HNSW insertion-order laboratory", after_help = AFTER_HELP)]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset spanning k random orthonormal directions.
    #[command(after_help = AFTER_HELP)]
    SynthGen(SynthGenArgs),
    /// PCA intrinsic dimensionality and the cumulative variance curve.
    #[command(after_help = AFTER_HELP)]
    IdEstimate(IdEstimateArgs),
    /// Pointwise LID (MLE over k nearest neighbours) for every vector.
    #[command(after_help = AFTER_HELP)]
    LidProfile(LidProfileArgs),
    /// Exact k-NN ground truth for a query set.
    #[command(after_help = AFTER_HELP)]
    ExactBaseline(ExactBaselineArgs),
    /// Build an HNSW index in a chosen insertion order.
    #[command(after_help = AFTER_HELP)]
    Build(BuildArgs),
    /// Search an index and score recall (and NDCG with qrels).
    #[command(after_help = AFTER_HELP)]
    SearchEval(SearchEvalArgs),
    /// Layer-0 connectivity, path length and degree histograms.
    #[command(after_help = AFTER_HELP)]
    GraphStats(GraphStatsArgs),
    /// Run an experiment config or rerun a manifest.
    #[command(after_help = AFTER_HELP)]
    Experiment(ExperimentArgs),
    /// Verify a report and print its summary or CSV.
    #[command(after_help = AFTER_HELP)]
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    /// Ambient dimension.
    #[arg(long)]
    pub d: usize,
    /// Basis vectors (intrinsic dimension).
    #[arg(long)]
    pub k: usize,
    /// Number of vectors.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output fvecs path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also draw this many queries from the same span.
    #[arg(long, requires = "queries_out")]
    pub queries: Option<usize>,
    #[arg(long)]
    pub queries_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdEstimateArgs {
    pub data: PathBuf,
    /// Variance threshold.
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
    /// NDJSON labels; adds per-category estimates.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Write the C(k) curve CSV here instead of stdout.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LidProfileArgs {
    pub data: PathBuf,
    /// Neighbours per estimate.
    #[arg(long, default_value_t = DEFAULT_LID_NEIGHBOURS)]
    pub neighbours: usize,
    #[arg(long, default_value = "l2")]
    pub metric: Metric,
    /// Binary profile path; the summary goes to <out>.summary.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExactBaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = lab::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value = "l2")]
    pub metric: Metric,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_m(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v < 2 {
        return Err(format!("M must be at least 2, got {v}"));
    }
    Ok(v)
}

fn parse_positive(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v == 0 {
        return Err("must be at least 1".into());
    }
    Ok(v)
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Links per node above layer 0.
    #[arg(long = "M", default_value_t = hnsw::DEFAULT_M, value_parser = parse_m)]
    pub m: usize,
    /// Layer-0 link cap [default: 2·M].
    #[arg(long = "M0")]
    pub m0: Option<usize>,
    #[arg(long, default_value_t = hnsw::DEFAULT_EF_CONSTRUCTION, value_parser = parse_positive)]
    pub ef_construction: usize,
    /// Neighbour selection: heuristic or simple.
    #[arg(long, default_value = "heuristic")]
    pub select: NeighborSelect,
    #[arg(long, default_value = "l2")]
    pub metric: Metric,
    /// Level-assignment seed (and random-order seed).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl IndexArgs {
    fn params(&self) -> Result<HnswParams> {
        let mut p = HnswParams::with_m(self.m);
        if let Some(m0) = self.m0 {
            p.m0 = m0;
        }
        p.ef_construction = self.ef_construction;
        p.neighbor_select = self.select;
        p.metric = self.metric;
        p.seed = self.seed;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// identity, random, lid_asc, lid_desc or category.
    #[arg(long, default_value = "random", conflicts_with = "order_file")]
    pub order: Strategy,
    /// Saved order plan to replay.
    #[arg(long)]
    pub order_file: Option<PathBuf>,
    /// Precomputed LID profile for LID orders (computed otherwise).
    #[arg(long)]
    pub lid_profile: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LID_NEIGHBOURS)]
    pub lid_neighbours: usize,
    /// NDJSON labels for category orders.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Comma-separated category sequence.
    #[arg(long, value_delimiter = ',')]
    pub sequence: Vec<String>,
    #[command(flatten)]
    pub index: IndexArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also save the order plan used.
    #[arg(long)]
    pub order_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchEvalArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Dataset the index was built from.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Saved exact baseline (computed, via the cache, otherwise).
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Repeatable.
    #[arg(long = "ef-search", default_values_t = [hnsw::DEFAULT_EF_SEARCH])]
    pub ef_search: Vec<usize>,
    #[arg(long, default_value_t = lab::DEFAULT_K)]
    pub k: usize,
    /// TSV judgments keyed by query and document row positions.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long, default_value = "linear")]
    pub gain: String,
    /// Write per-query results as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraphStatsArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// BFS sources sampled for the average path length.
    #[arg(long, default_value_t = hnsw::DEFAULT_PATH_SOURCES)]
    pub sources: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON experiment config.
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    pub config: Option<PathBuf>,
    /// Manifest of a previous run to reproduce.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub report: PathBuf,
    /// Print report.csv rows instead of the summary.
    #[arg(long)]
    pub csv: bool,
    /// Regenerate plotdata/*.csv into this directory.
    #[arg(long)]
    pub plotdata: Option<PathBuf>,
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    if cli.threads > 0 {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 2 {
                eprintln!("run with --help for usage");
            }
            e.exit_code()
        }
    }
}

fn announce(config: &impl Serialize) -> Result<()> {
    eprintln!("config: {}", serde_json::to_string(config)?);
    Ok(())
}

fn emit(cli: &Cli, value: &serde_json::Value, text: impl FnOnce() -> String) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let s = if cli.json {
        serde_json::to_string_pretty(value)?
    } else {
        text()
    };
    writeln!(out, "{s}").map_err(|e| Error::io("<stdout>", e))
}

fn read_data(path: &Path) -> Result<Dataset> {
    io::read_fvecs(path).stage("load")
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SynthGen(a) => synth_gen(cli, a),
        Command::IdEstimate(a) => id_estimate(cli, a),
        Command::LidProfile(a) => lid_profile(cli, a),
        Command::ExactBaseline(a) => exact_baseline(cli, a),
        Command::Build(a) => build(cli, a),
        Command::SearchEval(a) => search_eval(cli, a),
        Command::GraphStats(a) => graph_stats(cli, a),
        Command::Experiment(a) => experiment(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

fn synth_gen(cli: &Cli, a: &SynthGenArgs) -> Result<()> {
    let spec = SynthSpec {
        d: a.d,
        k: a.k,
        n: a.n,
        seed: a.seed,
    };
    announce(&json!({ "command": "synth-gen", "spec": spec, "out": a.out, "queries": a.queries, "queries_out": a.queries_out }))?;
    let (basis, x) = spec.generate().stage("synth")?;
    io::write_fvecs(&x, &a.out).stage("write")?;
    let mut value = json!({ "out": a.out, "n": x.len(), "dim": x.dim(), "sha256": io::file_hash(&a.out)? });
    if let (Some(nq), Some(path)) = (a.queries, &a.queries_out) {
        let q = spec.queries(&basis, nq).stage("synth")?;
        io::write_fvecs(&q, path).stage("write")?;
        value["queries_out"] = json!(path);
        value["queries_sha256"] = json!(io::file_hash(path)?);
    }
    emit(cli, &value, || format!("wrote {} vectors of dim {} to {}", x.len(), x.dim(), a.out.display()))
}

fn id_estimate(cli: &Cli, a: &IdEstimateArgs) -> Result<()> {
    announce(&json!({ "command": "id-estimate", "data": a.data, "theta": a.theta, "categories": a.categories }))?;
    if !(a.theta > 0.0 && a.theta <= 1.0) {
        return Err(Error::invalid(format!("theta must be in (0, 1], got {}", a.theta)));
    }
    let x = read_data(&a.data)?;
    let report = dimest::pca_intrinsic_dim(&x, a.theta).stage("id_estimate")?;
    let per_category = match &a.categories {
        Some(p) => {
            let labels = io::read_categories(p).stage("categories")?;
            let cats = io::join_categories(&labels, x.len()).stage("categories")?;
            Some(dimest::per_category_intrinsic_dim(&x, &cats, a.theta).stage("id_estimate")?)
        }
        None => None,
    };
    let mut curve = String::from("k,explained_variance_ratio,cumulative\n");
    for (i, (r, c)) in report.explained_variance_ratios.iter().zip(&report.cumulative).enumerate() {
        curve.push_str(&format!("{},{r},{c}\n", i + 1));
    }
    if let Some(p) = &a.curve_out {
        io::write_atomic(p, curve.as_bytes())?;
    }
    let value = json!({ "pca": report, "per_category": per_category });
    emit(cli, &value, || {
        let mut s = format!("k_intrinsic {} (theta {})\n", report.k_intrinsic, a.theta);
        if let Some(pc) = &per_category {
            for (name, r) in &pc.per_category {
                s.push_str(&format!("category {name}: k_intrinsic {}\n", r.k_intrinsic));
            }
        }
        if a.curve_out.is_none() {
            s.push_str(&curve);
        }
        s.trim_end().to_string()
    })
}

fn lid_profile(cli: &Cli, a: &LidProfileArgs) -> Result<()> {
    announce(&json!({ "command": "lid-profile", "data": a.data, "neighbours": a.neighbours, "metric": a.metric, "out": a.out }))?;
    let x = read_data(&a.data)?;
    let profile = dimest::lid_profile(&x, a.neighbours, a.metric).stage("lid")?;
    let summary_path = io::save_lid_profile(&profile, &a.out).stage("write")?;
    let summary = profile.summary();
    let value = json!({ "out": a.out, "summary_path": summary_path, "summary": summary });
    emit(cli, &value, || {
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        format!(
            "LID over {} points (k={}): mean {} median {} min {} max {}, {} saturated",
            summary.count,
            summary.k_neighbours,
            f(summary.mean),
            f(summary.median),
            f(summary.min),
            f(summary.max),
            summary.sentinel_count
        )
    })
}

fn exact_baseline(cli: &Cli, a: &ExactBaselineArgs) -> Result<()> {
    announce(&json!({ "command": "exact-baseline", "data": a.data, "queries": a.queries, "k": a.k, "metric": a.metric, "out": a.out }))?;
    let x = read_data(&a.data)?;
    let q = io::read_fvecs(&a.queries).stage("load")?;
    let b = Baseline::compute(&x, &q, a.k, a.metric).stage("baseline")?;
    io::save_baseline(&b, &a.out).stage("write")?;
    let value = json!({ "out": a.out, "queries": b.results.len(), "k": b.k, "key": b.cache_key() });
    emit(cli, &value, || format!("exact top-{} for {} queries written to {}", b.k, b.results.len(), a.out.display()))
}

fn build_plan(a: &BuildArgs, x: &Dataset, params: &HnswParams) -> Result<OrderPlan> {
    if let Some(p) = &a.order_file {
        let plan = io::load_order_plan(p)?;
        plan.verify_for(x.len())?;
        return Ok(plan);
    }
    let ids: Vec<usize> = (0..x.len()).collect();
    match a.order {
        Strategy::Identity => Ok(OrderPlan::identity(x.len())),
        Strategy::Random => orders::order_random(&ids, params.seed),
        Strategy::LidAsc | Strategy::LidDesc => {
            let profile = match &a.lid_profile {
                Some(p) => {
                    let profile = io::load_lid_profile(p)?;
                    let found = x.content_hash();
                    if profile.dataset_hash != found {
                        return Err(Error::HashMismatch {
                            what: format!("LID profile {}", p.display()),
                            expected: profile.dataset_hash,
                            found,
                        });
                    }
                    profile
                }
                None => dimest::lid_profile(x, a.lid_neighbours, params.metric)?,
            };
            let dir = if a.order == Strategy::LidAsc {
                Direction::Asc
            } else {
                Direction::Desc
            };
            orders::order_by_lid(&profile, dir)
        }
        Strategy::Category => {
            let path = a
                .categories
                .as_ref()
                .ok_or_else(|| Error::invalid("--order category needs --categories"))?;
            let labels = io::read_categories(path)?;
            let cats = io::join_categories(&labels, x.len())?;
            let sequence = if a.sequence.is_empty() {
                orders::distinct_categories(&cats)
            } else {
                a.sequence.clone()
            };
            orders::order_by_category(&cats, &sequence, params.seed)
        }
    }
}

fn build(cli: &Cli, a: &BuildArgs) -> Result<()> {
    let params = a.index.params()?;
    announce(&json!({
        "command": "build", "data": a.data, "order": a.order, "order_file": a.order_file,
        "params": params, "out": a.out,
    }))?;
    let x = read_data(&a.data)?;
    let plan = build_plan(a, &x, &params).stage("order")?;
    let start = std::time::Instant::now();
    let index = HnswIndex::build(&x, &plan, params).stage("build")?;
    let seconds = start.elapsed().as_secs_f64();
    io::save_index(&index, &x, &a.out).stage("write")?;
    if let Some(p) = &a.order_out {
        io::save_order_plan(&plan, p).stage("write")?;
    }
    let value = json!({
        "out": a.out, "nodes": index.len(), "max_level": index.max_level(),
        "entry_point": index.entry_point(), "order": plan.label(), "build_seconds": seconds,
    });
    emit(cli, &value, || {
        format!(
            "built {} nodes in {:.2}s (order {}, max level {}), saved to {}",
            index.len(),
            seconds,
            plan.label(),
            index.max_level().unwrap_or(0),
            a.out.display()
        )
    })
}

fn search_eval(cli: &Cli, a: &SearchEvalArgs) -> Result<()> {
    announce(&json!({
        "command": "search-eval", "index": a.index, "data": a.data, "queries": a.queries,
        "baseline": a.baseline, "ef_search": a.ef_search, "k": a.k, "qrels": a.qrels, "gain": a.gain,
    }))?;
    let gain = match a.gain.as_str() {
        "linear" => Gain::Linear,
        "exponential" | "exp" => Gain::Exponential,
        other => return Err(Error::invalid(format!("unknown gain '{other}'"))),
    };
    if let Some(&ef) = a.ef_search.iter().find(|&&ef| ef < a.k) {
        return Err(Error::invalid(format!("ef-search {ef} is below k={}", a.k)));
    }
    let x = read_data(&a.data)?;
    let q = io::read_fvecs(&a.queries).stage("load")?;
    let index = io::load_index(&a.index, &x).stage("load")?;
    let metric = index.params().metric;
    let baseline = match &a.baseline {
        Some(p) => {
            let b = io::load_baseline(p).stage("baseline")?;
            b.verify(&x, &q).stage("baseline")?;
            if b.k < a.k || b.metric != metric {
                return Err(Error::KeyMismatch(format!(
                    "baseline has k={} metric={}, need k>={} metric={metric}",
                    b.k, b.metric, a.k
                ))
                .at_stage("baseline"));
            }
            b
        }
        None => knn::cached_baseline(&x, &q, a.k, metric, knn::default_cache_dir().as_deref()).stage("baseline")?,
    };
    let qrels = match &a.qrels {
        Some(p) => Some(io::read_qrels(p).stage("qrels")?),
        None => None,
    };
    let query_ids: Vec<String> = (0..q.len()).map(|i| i.to_string()).collect();
    let doc_ids: Vec<String> = (0..x.len()).map(|i| i.to_string()).collect();
    let exact: Vec<_> = baseline
        .results
        .iter()
        .map(|r| knn::SearchResult {
            ids: r.ids.iter().take(a.k).copied().collect(),
            distances: r.distances.iter().take(a.k).copied().collect(),
        })
        .collect();
    let mut rows = Vec::new();
    let mut per_query = Vec::new();
    for &ef in &a.ef_search {
        let (results, hops, evals) = lab::search_all(&index, &q, a.k, ef).stage("search")?;
        let ctx = qrels.as_ref().map(|qr| (qr, query_ids.as_slice(), doc_ids.as_slice()));
        let eval = metrics::evaluate(&results, &exact, a.k, ctx, gain).stage("evaluate")?;
        rows.push(json!({
            "ef_search": ef, "k": a.k, "mean_recall": eval.mean_recall_at_k,
            "mean_ndcg": eval.mean_ndcg_at_k, "mean_search_hops": hops, "mean_distance_evals": evals,
        }));
        per_query.push(json!({ "ef_search": ef, "evaluation": eval, "results": results }));
    }
    if let Some(p) = &a.out {
        io::save_json(&per_query, p).stage("write")?;
    }
    let value = json!({ "rows": rows });
    emit(cli, &value, || {
        let mut s = String::from("ef_search,k,mean_recall,mean_ndcg,mean_search_hops\n");
        for r in &rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r["ef_search"],
                r["k"],
                r["mean_recall"],
                r["mean_ndcg"].as_f64().map(|v| v.to_string()).unwrap_or_default(),
                r["mean_search_hops"]
            ));
        }
        s.trim_end().to_string()
    })
}

fn graph_stats(cli: &Cli, a: &GraphStatsArgs) -> Result<()> {
    announce(&json!({ "command": "graph-stats", "index": a.index, "data": a.data, "sources": a.sources, "seed": a.seed }))?;
    let x = read_data(&a.data)?;
    let index = io::load_index(&a.index, &x).stage("load")?;
    let stats = index.graph_stats(a.sources, a.seed);
    emit(cli, &serde_json::to_value(&stats)?, || {
        let mut s = format!(
            "nodes {}\nmax level {}\nlayer-0 components {}\navg path length (layer 0, {} sources) {:.4}\n",
            stats.node_count,
            stats.max_level,
            stats.connected_components_layer0,
            stats.sampled_sources,
            stats.avg_path_length_layer0
        );
        for (layer, hist) in stats.degree_histogram.iter().enumerate() {
            let nodes: usize = hist.iter().sum();
            let mean = hist.iter().enumerate().map(|(d, c)| d * c).sum::<usize>() as f64 / nodes.max(1) as f64;
            s.push_str(&format!("layer {layer}: {nodes} nodes, mean degree {mean:.2}\n"));
        }
        s.trim_end().to_string()
    })
}

fn experiment(cli: &Cli, a: &ExperimentArgs) -> Result<()> {
    let (mut cfg, manifest) = match (&a.config, &a.manifest) {
        (Some(p), _) => (ExperimentConfig::load(p).stage("config")?, None),
        (None, Some(p)) => {
            let m = lab::load_manifest(p).stage("config")?;
            (m.config.clone(), Some(m))
        }
        (None, None) => return Err(Error::invalid("either --config or --manifest is required")),
    };
    if manifest.is_some() && a.seed.is_some() {
        return Err(Error::invalid("--seed cannot override a manifest"));
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(out) = &a.out {
        cfg.output_dir = Some(out.clone());
    }
    let out_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::invalid("no output directory: set output_dir or pass --out"))?;
    announce(&cfg.resolved())?;
    let exp = match manifest {
        Some(mut m) => {
            m.config.output_dir = cfg.output_dir.clone();
            lab::rerun_manifest(&m)?
        }
        None => lab::run_experiment(&cfg)?,
    };
    exp.write(&out_dir)?;
    let report = &exp.report;
    let value = json!({
        "output_dir": out_dir, "rows": report.rows.len(),
        "summary": summary_rows(report), "correlations": report.correlations,
    });
    emit(cli, &value, || {
        let mut s = format!("{} cells written to {}\n", report.rows.len(), out_dir.display());
        s.push_str(&summary_text(report));
        s.trim_end().to_string()
    })
}

fn summary_rows(report: &lab::RunReport) -> Vec<serde_json::Value> {
    let mut cells: std::collections::BTreeMap<(String, String, usize), Vec<f64>> = Default::default();
    for r in &report.rows {
        cells.entry((r.dataset.clone(), r.order.clone(), r.ef_search)).or_default().push(r.mean_recall);
    }
    cells
        .into_iter()
        .map(|((dataset, order, ef), v)| {
            json!({ "dataset": dataset, "order": order, "ef_search": ef, "runs": v.len(),
                    "mean_recall": metrics::mean(&v).unwrap_or(0.0) })
        })
        .collect()
}

fn summary_text(report: &lab::RunReport) -> String {
    let mut s = String::from("dataset,order,ef_search,runs,mean_recall\n");
    for r in summary_rows(report) {
        s.push_str(&format!(
            "{},{},{},{},{:.4}\n",
            r["dataset"].as_str().unwrap_or(""),
            r["order"].as_str().unwrap_or(""),
            r["ef_search"],
            r["runs"],
            r["mean_recall"].as_f64().unwrap_or(0.0)
        ));
    }
    for c in &report.correlations {
        if let Some(p) = c.recall_vs_avg_path_length {
            s.push_str(&format!("pearson(recall, avg path length) at ef {}: {p:.4}\n", c.ef_search));
        }
    }
    s
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    announce(&json!({ "command": "report", "report": a.report, "csv": a.csv, "plotdata": a.plotdata }))?;
    let report = lab::load_report(&a.report).stage("report")?;
    if let Some(dir) = &a.plotdata {
        for (name, body) in lab::plot_data(&report) {
            io::write_atomic(&dir.join(name), body.as_bytes()).stage("write")?;
        }
    }
    let value = json!({ "verified": true, "rows": report.rows.len(), "summary": summary_rows(&report),
                        "correlations": report.correlations });
    emit(cli, &value, || {
        if a.csv {
            lab::report_csv(&report).trim_end().to_string()
        } else {
            format!("report verified: {} cells\n{}", report.rows.len(), summary_text(&report))
                .trim_end()
                .to_string()
        }
    })
}
