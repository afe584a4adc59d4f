//! Experiment orchestration: dataset assembly, exact baselines, order
//! plans, one index build per (dataset, order), evaluation at every
//! `ef_search`, and report output.
//!
//! The experiment seed is split into independent `data`, `levels` and
//! `order` substreams, so changing one factor leaves the others fixed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dimest::{self, CategoryIdReport, LidProfile, LidSummary, PcaReport};
use crate::error::{Error, Result, StageExt};
use crate::hnsw::{self, GraphStats, HnswIndex, HnswParams, NeighborSelect};
use crate::io::{self, Versioned};
use crate::knn::{self, Baseline, SearchResult};
use crate::metrics::{self, Gain, Qrels};
use crate::orders::{self, Direction, OrderPlan, Strategy};
use crate::seed;
use crate::synth::{self, SynthSpec};
use crate::vecmath::{Matrix, Metric};

pub const REPORT_FORMAT: &str = "hnswlab.report";
pub const MANIFEST_FORMAT: &str = "hnswlab.manifest";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_K: usize = 10;

// ----------------------------------------------------------------- config

/// Where the indexed vectors come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synth { d: usize, k: usize, n: usize },
    /// One synthetic dataset per basis count, each with its own seed.
    SynthSweep { d: usize, n: usize, basis_counts: Vec<usize> },
    Mixture(MixtureSpec),
    Fvecs {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sha256: Option<String>,
    },
}

/// Where the queries come from. `Generated` draws from the dataset's own
/// generator with an independent stream and needs a synthetic source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuerySource {
    Generated {
        n: usize,
    },
    Fvecs {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sha256: Option<String>,
    },
}

/// Points from several low-rank subspaces plus full-rank background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub d: usize,
    pub components: Vec<MixtureComponent>,
    #[serde(default)]
    pub background: usize,
    /// Draw all component subspaces from one orthonormal basis, making
    /// them mutually orthogonal.
    #[serde(default)]
    pub orthogonal: bool,
    /// Standard deviation of each component's centre; 0 keeps every
    /// subspace through the origin.
    #[serde(default)]
    pub centre_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    /// Subspace dimension.
    pub k: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

pub const BACKGROUND_CATEGORY: &str = "background";

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() && self.background == 0 {
            return Err(Error::EmptyDataset);
        }
        let total_k: usize = self.components.iter().map(|c| c.k).sum();
        for (i, c) in self.components.iter().enumerate() {
            if c.k == 0 || c.k > self.d || c.n == 0 {
                return Err(Error::invalid(format!(
                    "mixture component {i}: need 1 <= k <= d and n >= 1 (k={}, n={})",
                    c.k, c.n
                )));
            }
        }
        if self.orthogonal && total_k > self.d {
            return Err(Error::invalid(format!(
                "orthogonal components need sum of k ({total_k}) <= d ({})",
                self.d
            )));
        }
        if !(self.centre_scale >= 0.0 && self.centre_scale.is_finite()) {
            return Err(Error::invalid("centre_scale must be finite and >= 0"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in self.category_names() {
            if !seen.insert(name.clone()) {
                return Err(Error::invalid(format!("duplicate mixture category '{name}'")));
            }
        }
        Ok(())
    }

    fn category_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| c.category.clone().unwrap_or_else(|| format!("c{i}")))
            .collect();
        if self.background > 0 {
            names.push(BACKGROUND_CATEGORY.to_string());
        }
        names
    }

    fn bases(&self, seed: u64) -> Result<Vec<Matrix>> {
        if self.orthogonal {
            let total: usize = self.components.iter().map(|c| c.k).sum();
            if total == 0 {
                return Ok(Vec::new());
            }
            let all = synth::generate_basis(self.d, total, seed::derive(seed, "mixture.basis"))?;
            let mut start = 0;
            self.components
                .iter()
                .map(|c| {
                    let rows = all.data()[start * self.d..(start + c.k) * self.d].to_vec();
                    start += c.k;
                    Matrix::from_rows_data(c.k, self.d, rows)
                })
                .collect()
        } else {
            self.components
                .iter()
                .enumerate()
                .map(|(i, c)| synth::generate_basis(self.d, c.k, seed::derive(seed, &format!("mixture.basis.{i}"))))
                .collect()
        }
    }

    fn centre(&self, seed: u64, i: usize) -> Vec<f64> {
        if self.centre_scale == 0.0 {
            return vec![0.0; self.d];
        }
        let mut rng = seed::substream(seed::derive(seed, "mixture.centre"), i as u64);
        (0..self.d)
            .map(|_| self.centre_scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn assemble(&self, seed: u64, counts: &[usize], background: usize, label: &str) -> Result<Dataset> {
        let bases = self.bases(seed)?;
        let names = self.category_names();
        let mut parts = Vec::new();
        let mut categories = Vec::new();
        for (i, (basis, &n)) in bases.iter().zip(counts).enumerate() {
            if n == 0 {
                continue;
            }
            let mut part = synth::generate_dataset(basis, n, seed::derive(seed, &format!("mixture.{label}.{i}")))?;
            let centre = self.centre(seed, i);
            if centre.iter().any(|&c| c != 0.0) {
                let shifted: Vec<f64> = part
                    .data()
                    .chunks_exact(self.d)
                    .flat_map(|row| row.iter().zip(&centre).map(|(a, b)| a + b))
                    .collect();
                part = Dataset::new(self.d, shifted)?;
            }
            parts.push(part);
            categories.extend(std::iter::repeat_n(names[i].clone(), n));
        }
        if background > 0 {
            let ident = Matrix::identity(self.d);
            parts.push(synth::generate_dataset(
                &ident,
                background,
                seed::derive(seed, &format!("mixture.{label}.background")),
            )?);
            categories.extend(std::iter::repeat_n(BACKGROUND_CATEGORY.to_string(), background));
        }
        Dataset::concat(&parts)?.with_categories(categories)
    }

    /// Components in order, then the background; categories attached.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let counts: Vec<usize> = self.components.iter().map(|c| c.n).collect();
        self.assemble(seed, &counts, self.background, "data")
    }

    /// `n_q` queries split across components and background in proportion
    /// to their sizes (largest remainder), from independent streams.
    pub fn queries(&self, seed: u64, n_q: usize) -> Result<Dataset> {
        self.validate()?;
        let mut sizes: Vec<usize> = self.components.iter().map(|c| c.n).collect();
        sizes.push(self.background);
        let total: usize = sizes.iter().sum();
        let mut counts: Vec<usize> = sizes.iter().map(|s| s * n_q / total).collect();
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(sizes[i] * n_q % total), i));
        let short = n_q - counts.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            counts[i] += 1;
        }
        let background = counts.pop().unwrap_or(0);
        self.assemble(seed, &counts, background, "queries")
    }
}

/// One order strategy. Random and category orders produce one plan per
/// seed; with no seeds listed, one plan from the experiment's order stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSpec {
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    /// Category sequences to run; empty means every permutation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sequences: Vec<Vec<String>>,
}

impl OrderSpec {
    pub fn new(strategy: Strategy) -> Self {
        OrderSpec {
            strategy,
            seeds: Vec::new(),
            sequences: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    #[serde(default = "default_m", rename = "M")]
    pub m: usize,
    /// Layer-0 cap; defaults to 2·M.
    #[serde(default, rename = "M0", skip_serializing_if = "Option::is_none")]
    pub m0: Option<usize>,
    #[serde(default = "default_ef_construction")]
    pub ef_construction: usize,
    #[serde(default = "default_select")]
    pub neighbor_select: NeighborSelect,
}

fn default_m() -> usize {
    hnsw::DEFAULT_M
}
fn default_ef_construction() -> usize {
    hnsw::DEFAULT_EF_CONSTRUCTION
}
fn default_select() -> NeighborSelect {
    NeighborSelect::Heuristic
}
fn default_ef_search() -> Vec<usize> {
    hnsw::EF_SEARCH_POINTS.to_vec()
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_theta() -> f64 {
    dimest::DEFAULT_THETA
}
fn default_lid_neighbours() -> usize {
    dimest::DEFAULT_LID_NEIGHBOURS
}
fn default_path_sources() -> usize {
    hnsw::DEFAULT_PATH_SOURCES
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            m: default_m(),
            m0: None,
            ef_construction: default_ef_construction(),
            neighbor_select: default_select(),
        }
    }
}

impl IndexConfig {
    pub fn params(&self, metric: Metric, seed: u64) -> HnswParams {
        let mut p = HnswParams::with_m(self.m);
        if let Some(m0) = self.m0 {
            p.m0 = m0;
        }
        p.ef_construction = self.ef_construction;
        p.neighbor_select = self.neighbor_select;
        p.metric = metric;
        p.seed = seed;
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DataSource,
    pub queries: QuerySource,
    /// Defaults to L2 for generated data and cosine for fvecs input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default)]
    pub params: IndexConfig,
    #[serde(default = "default_ef_search")]
    pub ef_search: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    pub orders: Vec<OrderSpec>,
    /// NDJSON labels joined onto fvecs data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<PathBuf>,
    /// TSV judgments; query and document ids are row positions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrels: Option<PathBuf>,
    #[serde(default)]
    pub gain: Gain,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_lid_neighbours")]
    pub lid_neighbours: usize,
    #[serde(default = "default_path_sources")]
    pub path_sources: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Baseline cache; falls back to the cache environment variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

/// Seeds derived from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStreams {
    pub experiment: u64,
    pub data: u64,
    pub levels: u64,
    pub order: u64,
}

impl SeedStreams {
    pub fn new(experiment: u64) -> Self {
        SeedStreams {
            experiment,
            data: seed::derive(experiment, "data"),
            levels: seed::derive(experiment, "levels"),
            order: seed::derive(experiment, "order"),
        }
    }
}

impl ExperimentConfig {
    /// Minimal config: one dataset, one query source, default parameters.
    pub fn new(dataset: DataSource, queries: QuerySource, orders: Vec<OrderSpec>) -> Self {
        ExperimentConfig {
            name: String::new(),
            seed: 0,
            dataset,
            queries,
            metric: None,
            params: IndexConfig::default(),
            ef_search: default_ef_search(),
            k: DEFAULT_K,
            orders,
            categories: None,
            qrels: None,
            gain: Gain::default(),
            theta: default_theta(),
            lid_neighbours: default_lid_neighbours(),
            path_sources: default_path_sources(),
            output_dir: None,
            cache_dir: None,
        }
    }

    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: ExperimentConfig = io::load_json(path)?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        cfg.rebase(&base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Fvecs { path, .. } = &mut self.dataset {
            fix(path);
        }
        if let QuerySource::Fvecs { path, .. } = &mut self.queries {
            fix(path);
        }
        for p in [&mut self.categories, &mut self.qrels, &mut self.output_dir, &mut self.cache_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn resolved_metric(&self) -> Metric {
        self.metric.unwrap_or(match self.dataset {
            DataSource::Fvecs { .. } => Metric::Cosine,
            _ => Metric::L2,
        })
    }

    pub fn seeds(&self) -> SeedStreams {
        SeedStreams::new(self.seed)
    }

    pub fn hnsw_params(&self) -> HnswParams {
        self.params.params(self.resolved_metric(), self.seeds().levels)
    }

    /// Fills implicit defaults so the echo in reports is self-contained.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.metric = Some(self.resolved_metric());
        if c.params.m0.is_none() {
            c.params.m0 = Some(2 * c.params.m);
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() {
            return Err(Error::invalid("at least one order strategy is required"));
        }
        if self.ef_search.is_empty() {
            return Err(Error::invalid("ef_search list is empty"));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        let min_ef = *self.ef_search.iter().min().expect("non-empty");
        if self.k > min_ef {
            return Err(Error::invalid(format!(
                "k={} exceeds the smallest ef_search ({min_ef})",
                self.k
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::invalid(format!("theta must be in (0, 1], got {}", self.theta)));
        }
        self.hnsw_params().validate()?;
        match &self.dataset {
            DataSource::Synth { d, k, n } => SynthSpec { d: *d, k: *k, n: *n, seed: 0 }.validate()?,
            DataSource::SynthSweep { d, n, basis_counts } => {
                if basis_counts.is_empty() {
                    return Err(Error::invalid("synth_sweep needs at least one basis count"));
                }
                for &k in basis_counts {
                    SynthSpec { d: *d, k, n: *n, seed: 0 }.validate()?;
                }
            }
            DataSource::Mixture(m) => m.validate()?,
            DataSource::Fvecs { path, .. } => require_file(path)?,
        }
        match &self.queries {
            QuerySource::Generated { n } => {
                if matches!(self.dataset, DataSource::Fvecs { .. }) {
                    return Err(Error::invalid("generated queries need a synthetic dataset source"));
                }
                if *n == 0 {
                    return Err(Error::invalid("query count must be >= 1"));
                }
            }
            QuerySource::Fvecs { path, .. } => require_file(path)?,
        }
        for p in [&self.categories, &self.qrels].into_iter().flatten() {
            require_file(p)?;
        }
        let needs_lid = self
            .orders
            .iter()
            .any(|o| matches!(o.strategy, Strategy::LidAsc | Strategy::LidDesc));
        if needs_lid && self.resolved_metric() == Metric::InnerProduct {
            return Err(Error::invalid("LID orders need a distance metric (l2 or cosine)"));
        }
        if needs_lid && self.lid_neighbours < 2 {
            return Err(Error::invalid("lid_neighbours must be >= 2"));
        }
        Ok(())
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::invalid(format!("input file not found: {}", p.display())))
    }
}

// ----------------------------------------------------------------- report

/// One (dataset, order, ef_search) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_count: Option<usize>,
    pub order: String,
    pub strategy: Strategy,
    pub order_seed: u64,
    pub levels_seed: u64,
    pub ef_search: usize,
    pub k: usize,
    pub mean_recall: f64,
    pub per_query_recall: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ndcg: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_query_ndcg: Vec<Option<f64>>,
    pub mean_search_hops: f64,
    pub mean_distance_evals: f64,
    pub graph: GraphStats,
    /// Wall-clock time of the index build; the only non-deterministic field.
    pub build_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_count: Option<usize>,
    pub n: usize,
    pub dim: usize,
    pub n_queries: usize,
    pub dataset_hash: String,
    pub query_hash: String,
    pub baseline_key: String,
    pub pca: PcaReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<CategoryIdReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lid: Option<LidSummary>,
}

/// Pearson correlations across all rows sharing one `ef_search`; absent
/// when fewer than two rows or a constant series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub ef_search: usize,
    pub rows: usize,
    pub recall_vs_avg_path_length: Option<f64>,
    pub recall_vs_search_hops: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub seeds: SeedStreams,
    pub datasets: Vec<DatasetSummary>,
    pub rows: Vec<RunRow>,
    pub correlations: Vec<Correlation>,
}

impl Versioned for RunReport {
    const FORMAT: &'static str = REPORT_FORMAT;
    const VERSION: u32 = io::JSON_ARTIFACT_VERSION;
    fn format_tag(&self) -> (&str, u32) {
        (&self.format, self.version)
    }
}

impl RunReport {
    /// Recomputes every aggregate from the per-query values.
    pub fn verify(&self) -> Result<()> {
        for r in &self.rows {
            let mean = metrics::mean(&r.per_query_recall)?;
            if mean != r.mean_recall {
                return Err(Error::Invariant(format!(
                    "row {}/{}/ef={}: mean recall {} != recomputed {mean}",
                    r.dataset, r.order, r.ef_search, r.mean_recall
                )));
            }
            if r.per_query_recall.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Invariant(format!("row {}/{}: recall out of [0, 1]", r.dataset, r.order)));
            }
            let judged: Vec<f64> = r.per_query_ndcg.iter().flatten().copied().collect();
            let ndcg = if judged.is_empty() {
                None
            } else {
                Some(metrics::mean(&judged)?)
            };
            if ndcg != r.mean_ndcg {
                return Err(Error::Invariant(format!(
                    "row {}/{}/ef={}: mean NDCG does not match per-query values",
                    r.dataset, r.order, r.ef_search
                )));
            }
        }
        let expected = correlations(&self.rows);
        if expected != self.correlations {
            return Err(Error::Invariant("correlations do not match rows".into()));
        }
        Ok(())
    }

    /// Copy with wall-clock fields zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.build_seconds = 0.0;
        }
        r
    }

    /// Mean of `mean_recall` over rows matching the filter.
    pub fn mean_recall_where(&self, pred: impl Fn(&RunRow) -> bool) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| pred(r)).map(|r| r.mean_recall).collect();
        metrics::mean(&v).ok()
    }
}

fn correlations(rows: &[RunRow]) -> Vec<Correlation> {
    let mut by_ef: BTreeMap<usize, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        by_ef.entry(r.ef_search).or_default().push(r);
    }
    by_ef
        .into_iter()
        .map(|(ef, rs)| {
            let recall: Vec<f64> = rs.iter().map(|r| r.mean_recall).collect();
            let path: Vec<f64> = rs.iter().map(|r| r.graph.avg_path_length_layer0).collect();
            let hops: Vec<f64> = rs.iter().map(|r| r.mean_search_hops).collect();
            Correlation {
                ef_search: ef,
                rows: rs.len(),
                recall_vs_avg_path_length: metrics::pearson(&recall, &path).ok(),
                recall_vs_search_hops: metrics::pearson(&recall, &hops).ok(),
            }
        })
        .collect()
}

/// Saved order plan referenced by a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRef {
    pub dataset: String,
    pub label: String,
    pub seed: u64,
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub label: String,
    pub dataset_hash: String,
    pub query_hash: String,
}

/// Everything needed to rerun an experiment and check the inputs match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub metric: Metric,
    pub params: HnswParams,
    pub ef_search: Vec<usize>,
    pub seeds: SeedStreams,
    pub datasets: Vec<DatasetRef>,
    pub orders: Vec<OrderRef>,
}

impl Versioned for RunManifest {
    const FORMAT: &'static str = MANIFEST_FORMAT;
    const VERSION: u32 = io::JSON_ARTIFACT_VERSION;
    fn format_tag(&self) -> (&str, u32) {
        (&self.format, self.version)
    }
}

// -------------------------------------------------------------- execution

/// A dataset and its queries, ready for indexing.
#[derive(Debug, Clone)]
pub struct Materialized {
    pub label: String,
    pub basis_count: Option<usize>,
    pub data: Dataset,
    pub queries: Dataset,
}

fn check_hash(what: &str, expected: &Option<String>, path: &Path) -> Result<()> {
    if let Some(expected) = expected {
        let found = io::file_hash(path)?;
        if &found != expected {
            return Err(Error::HashMismatch {
                what: format!("{what} {}", path.display()),
                expected: expected.clone(),
                found,
            });
        }
    }
    Ok(())
}

fn load_queries(source: &QuerySource) -> Result<Option<Dataset>> {
    match source {
        QuerySource::Fvecs { path, sha256 } => {
            check_hash("queries", sha256, path)?;
            io::read_fvecs(path).map(Some)
        }
        QuerySource::Generated { .. } => Ok(None),
    }
}

/// Builds the dataset(s) and query sets a config describes.
pub fn materialize(cfg: &ExperimentConfig) -> Result<Vec<Materialized>> {
    let seeds = cfg.seeds();
    let external_queries = load_queries(&cfg.queries).stage("queries")?;
    let n_q = match cfg.queries {
        QuerySource::Generated { n } => n,
        QuerySource::Fvecs { .. } => 0,
    };
    let pick = |generated: Dataset| external_queries.clone().unwrap_or(generated);
    let mut out = match &cfg.dataset {
        DataSource::Synth { d, k, n } => {
            let spec = SynthSpec { d: *d, k: *k, n: *n, seed: seeds.data };
            let (basis, data) = spec.generate().stage("dataset")?;
            let queries = match &external_queries {
                Some(q) => q.clone(),
                None => spec.queries(&basis, n_q).stage("queries")?,
            };
            vec![Materialized {
                label: format!("synth-d{d}-k{k}"),
                basis_count: Some(*k),
                data,
                queries,
            }]
        }
        DataSource::SynthSweep { d, n, basis_counts } => basis_counts
            .iter()
            .map(|&k| {
                let spec = SynthSpec {
                    d: *d,
                    k,
                    n: *n,
                    seed: seed::derive(seeds.data, &format!("basis_count.{k}")),
                };
                let (basis, data) = spec.generate().stage("dataset")?;
                let queries = match &external_queries {
                    Some(q) => q.clone(),
                    None => spec.queries(&basis, n_q).stage("queries")?,
                };
                Ok(Materialized {
                    label: format!("synth-d{d}-k{k}"),
                    basis_count: Some(k),
                    data,
                    queries,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        DataSource::Mixture(m) => {
            let data = m.generate(seeds.data).stage("dataset")?;
            let queries = match &external_queries {
                Some(q) => q.clone(),
                None => m.queries(seeds.data, n_q).stage("queries")?,
            };
            vec![Materialized {
                label: "mixture".into(),
                basis_count: None,
                data,
                queries,
            }]
        }
        DataSource::Fvecs { path, sha256 } => {
            check_hash("dataset", sha256, path).stage("dataset")?;
            let data = io::read_fvecs(path).stage("dataset")?;
            let queries = pick(data.clone());
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "fvecs".into());
            vec![Materialized {
                label,
                basis_count: None,
                data,
                queries,
            }]
        }
    };
    if let Some(path) = &cfg.categories {
        let labels = io::read_categories(path).stage("categories")?;
        for m in &mut out {
            let cats = io::join_categories(&labels, m.data.len()).stage("categories")?;
            m.data = m.data.clone().with_categories(cats).stage("categories")?;
        }
    }
    for m in &out {
        if m.queries.dim() != m.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.data.dim(),
                got: m.queries.dim(),
            }
            .at_stage("queries"));
        }
    }
    Ok(out)
}

/// Order plans for one dataset, in config order.
pub fn plan_orders(
    cfg: &ExperimentConfig,
    data: &Dataset,
    profile: Option<&LidProfile>,
) -> Result<Vec<OrderPlan>> {
    let ids: Vec<usize> = (0..data.len()).collect();
    let order_seed = cfg.seeds().order;
    let mut plans = Vec::new();
    for spec in &cfg.orders {
        let seeds = if spec.seeds.is_empty() {
            vec![order_seed]
        } else {
            spec.seeds.clone()
        };
        match spec.strategy {
            Strategy::Identity => plans.push(OrderPlan::identity(data.len())),
            Strategy::Random => {
                for s in seeds {
                    plans.push(orders::order_random(&ids, s)?);
                }
            }
            Strategy::LidAsc | Strategy::LidDesc => {
                let profile = profile.ok_or_else(|| Error::Invariant("LID profile missing".into()))?;
                let dir = if spec.strategy == Strategy::LidAsc {
                    Direction::Asc
                } else {
                    Direction::Desc
                };
                plans.push(orders::order_by_lid(profile, dir)?);
            }
            Strategy::Category => {
                let cats = data
                    .categories()
                    .ok_or_else(|| Error::Category("category order needs category labels".into()))?;
                let sequences = if spec.sequences.is_empty() {
                    orders::all_sequences(&orders::distinct_categories(cats))
                } else {
                    spec.sequences.clone()
                };
                for seq in &sequences {
                    for &s in &seeds {
                        plans.push(orders::order_by_category(cats, seq, s)?);
                    }
                }
            }
        }
    }
    Ok(plans)
}

/// Judgments plus the id mapping used to look up queries and documents.
pub struct QrelsContext<'a> {
    pub qrels: &'a Qrels,
    pub query_ids: Vec<String>,
    pub doc_ids: Vec<String>,
    pub gain: Gain,
}

/// Shared knobs for evaluating order plans.
#[derive(Debug, Clone)]
pub struct CellOptions {
    pub ef_search: Vec<usize>,
    pub k: usize,
    pub path_sources: usize,
    /// Seed for sampling BFS sources.
    pub stats_seed: u64,
}

impl CellOptions {
    pub fn new(ef_search: &[usize], k: usize) -> Self {
        CellOptions {
            ef_search: ef_search.to_vec(),
            k,
            path_sources: hnsw::DEFAULT_PATH_SOURCES,
            stats_seed: 0,
        }
    }
}

/// Builds one index per plan (in parallel) and evaluates it at every
/// `ef_search`. Rows come back in plan order, then ef order.
pub fn run_cells(
    m: &Materialized,
    baseline: &Baseline,
    plans: &[OrderPlan],
    params: &HnswParams,
    opts: &CellOptions,
    qrels: Option<&QrelsContext<'_>>,
) -> Result<Vec<RunRow>> {
    let cells: Vec<Result<Vec<RunRow>>> = plans
        .par_iter()
        .map(|plan| {
            let start = Instant::now();
            let index = HnswIndex::build(&m.data, plan, *params).stage("build")?;
            let build_seconds = start.elapsed().as_secs_f64();
            let graph = index.graph_stats(opts.path_sources, opts.stats_seed);
            opts.ef_search
                .iter()
                .map(|&ef| {
                    let (results, hops, evals) = search_all(&index, &m.queries, opts.k, ef)?;
                    let q = qrels.map(|c| (c.qrels, c.query_ids.as_slice(), c.doc_ids.as_slice()));
                    let gain = qrels.map_or(Gain::default(), |c| c.gain);
                    let eval = metrics::evaluate(&results, &baseline.results, opts.k, q, gain)?;
                    Ok(RunRow {
                        dataset: m.label.clone(),
                        basis_count: m.basis_count,
                        order: plan.label(),
                        strategy: plan.strategy,
                        order_seed: plan.seed,
                        levels_seed: params.seed,
                        ef_search: ef,
                        k: opts.k,
                        mean_recall: eval.mean_recall_at_k,
                        per_query_recall: eval.per_query_recall,
                        mean_ndcg: eval.mean_ndcg_at_k,
                        per_query_ndcg: if qrels.is_some() { eval.per_query_ndcg } else { Vec::new() },
                        mean_search_hops: hops,
                        mean_distance_evals: evals,
                        graph: graph.clone(),
                        build_seconds,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .stage("evaluate")
        })
        .collect();
    let mut rows = Vec::new();
    for c in cells {
        rows.extend(c?);
    }
    Ok(rows)
}

/// Searches every query; returns results plus mean hops and distance
/// evaluations per query.
pub fn search_all(index: &HnswIndex, queries: &Dataset, k: usize, ef: usize) -> Result<(Vec<SearchResult>, f64, f64)> {
    let out: Vec<_> = (0..queries.len())
        .into_par_iter()
        .map(|i| index.search(queries.row(i), k, ef))
        .collect::<Result<Vec<_>>>()?;
    let n = out.len().max(1) as f64;
    let hops = out.iter().map(|(_, s)| s.hops as f64).sum::<f64>() / n;
    let evals = out.iter().map(|(_, s)| s.distance_evals as f64).sum::<f64>() / n;
    Ok((out.into_iter().map(|(r, _)| r).collect(), hops, evals))
}

/// Output of [`run_experiment`], held in memory until written.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: RunReport,
    pub manifest: RunManifest,
    /// (relative path, plan) for every order used.
    pub plans: Vec<(PathBuf, OrderPlan)>,
}

fn plan_file_name(dataset: &str, plan: &OrderPlan) -> PathBuf {
    let label: String = plan
        .label()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    PathBuf::from("orders").join(format!("{dataset}.{label}.s{}.order", plan.seed))
}

/// Runs every configured cell. Nothing is written; see [`Experiment::write`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate().stage("config")?;
    let config = cfg.resolved();
    let metric = config.resolved_metric();
    let params = config.hnsw_params();
    let seeds = config.seeds();
    let cache_dir = config.cache_dir.clone().or_else(knn::default_cache_dir);
    let qrels = match &config.qrels {
        Some(p) => Some(io::read_qrels(p).stage("qrels")?),
        None => None,
    };
    let needs_lid = config
        .orders
        .iter()
        .any(|o| matches!(o.strategy, Strategy::LidAsc | Strategy::LidDesc));

    let opts = CellOptions {
        ef_search: config.ef_search.clone(),
        k: config.k,
        path_sources: config.path_sources,
        stats_seed: seed::derive(seeds.experiment, "graph_stats"),
    };

    let mut datasets = Vec::new();
    let mut rows = Vec::new();
    let mut plans_out = Vec::new();
    let mut order_refs = Vec::new();
    let mut dataset_refs = Vec::new();
    for m in materialize(&config)? {
        let baseline = knn::cached_baseline(&m.data, &m.queries, config.k, metric, cache_dir.as_deref())
            .stage("baseline")?;
        let pca = dimest::pca_intrinsic_dim(&m.data, config.theta).stage("id_estimate")?;
        let categories = match m.data.categories() {
            Some(c) => Some(dimest::per_category_intrinsic_dim(&m.data, c, config.theta).stage("id_estimate")?),
            None => None,
        };
        let profile = if needs_lid {
            Some(dimest::lid_profile(&m.data, config.lid_neighbours, metric).stage("lid")?)
        } else {
            None
        };
        let plans = plan_orders(&config, &m.data, profile.as_ref()).stage("order")?;
        let ctx = qrels.as_ref().map(|q| QrelsContext {
            qrels: q,
            query_ids: (0..m.queries.len()).map(|i| i.to_string()).collect(),
            doc_ids: (0..m.data.len()).map(|i| i.to_string()).collect(),
            gain: config.gain,
        });
        rows.extend(run_cells(&m, &baseline, &plans, &params, &opts, ctx.as_ref())?);

        for plan in plans {
            let rel = plan_file_name(&m.label, &plan);
            let text = io::encode_order_plan(&plan).stage("order")?;
            order_refs.push(OrderRef {
                dataset: m.label.clone(),
                label: plan.label(),
                seed: plan.seed,
                path: rel.clone(),
                sha256: hex::encode(<sha2::Sha256 as sha2::Digest>::digest(text.as_bytes())),
            });
            plans_out.push((rel, plan));
        }
        dataset_refs.push(DatasetRef {
            label: m.label.clone(),
            dataset_hash: baseline.dataset_hash.clone(),
            query_hash: baseline.query_hash.clone(),
        });
        datasets.push(DatasetSummary {
            label: m.label.clone(),
            basis_count: m.basis_count,
            n: m.data.len(),
            dim: m.data.dim(),
            n_queries: m.queries.len(),
            dataset_hash: baseline.dataset_hash.clone(),
            query_hash: baseline.query_hash.clone(),
            baseline_key: baseline.cache_key(),
            pca,
            categories,
            lid: profile.as_ref().map(LidProfile::summary),
        });
    }

    let report = RunReport {
        format: REPORT_FORMAT.into(),
        version: io::JSON_ARTIFACT_VERSION,
        tool_version: TOOL_VERSION.into(),
        config: config.clone(),
        seeds,
        datasets,
        correlations: correlations(&rows),
        rows,
    };
    report.verify().stage("report")?;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        version: io::JSON_ARTIFACT_VERSION,
        tool_version: TOOL_VERSION.into(),
        config,
        metric,
        params,
        ef_search: opts.ef_search.clone(),
        seeds,
        datasets: dataset_refs,
        orders: order_refs,
    };
    Ok(Experiment {
        report,
        manifest,
        plans: plans_out,
    })
}

/// Reruns a manifest's config and checks inputs and order plans match.
pub fn rerun_manifest(manifest: &RunManifest) -> Result<Experiment> {
    let exp = run_experiment(&manifest.config)?;
    if exp.manifest.datasets != manifest.datasets {
        return Err(Error::HashMismatch {
            what: "manifest datasets".into(),
            expected: format!("{:?}", manifest.datasets),
            found: format!("{:?}", exp.manifest.datasets),
        });
    }
    for (want, got) in manifest.orders.iter().zip(&exp.manifest.orders) {
        if want.sha256 != got.sha256 {
            return Err(Error::HashMismatch {
                what: format!("order plan {}", want.path.display()),
                expected: want.sha256.clone(),
                found: got.sha256.clone(),
            });
        }
    }
    Ok(exp)
}

pub const REPORT_CSV_HEADER: &str = "dataset,basis_count,order,strategy,order_seed,ef_search,k,mean_recall,mean_ndcg,avg_path_length,components,mean_search_hops,mean_distance_evals,build_seconds";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report_csv(report: &RunReport) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.dataset),
            opt(r.basis_count),
            csv_field(&r.order),
            r.strategy,
            r.order_seed,
            r.ef_search,
            r.k,
            r.mean_recall,
            opt(r.mean_ndcg),
            r.graph.avg_path_length_layer0,
            r.graph.connected_components_layer0,
            r.mean_search_hops,
            r.mean_distance_evals,
            r.build_seconds
        );
    }
    out
}

/// `plotdata/*.csv` contents keyed by file name.
pub fn plot_data(report: &RunReport) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();

    // order label → ef → mean over seeds and datasets
    let mut by_order: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in &report.rows {
        by_order.entry((r.order.clone(), r.ef_search)).or_default().push(r.mean_recall);
    }
    let mut s = String::from("order,ef_search,runs,mean_recall\n");
    for ((order, ef), v) in &by_order {
        let _ = writeln!(s, "{},{ef},{},{}", csv_field(order), v.len(), metrics::mean(v).unwrap_or(0.0));
    }
    files.insert("recall_by_order.csv".into(), s);

    let swept: Vec<&DatasetSummary> = report.datasets.iter().filter(|d| d.basis_count.is_some()).collect();
    if !swept.is_empty() {
        let mut s = String::from("basis_count,k_intrinsic,ef_search,mean_recall\n");
        for d in swept {
            let mut by_ef: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for r in report.rows.iter().filter(|r| r.dataset == d.label) {
                by_ef.entry(r.ef_search).or_default().push(r.mean_recall);
            }
            for (ef, v) in by_ef {
                let _ = writeln!(
                    s,
                    "{},{},{ef},{}",
                    opt(d.basis_count),
                    d.pca.k_intrinsic,
                    metrics::mean(&v).unwrap_or(0.0)
                );
            }
        }
        files.insert("recall_by_basis_count.csv".into(), s);
    }

    let mut s = String::from("dataset,order,order_seed,ef_search,avg_path_length,mean_search_hops,mean_recall\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            csv_field(&r.dataset),
            csv_field(&r.order),
            r.order_seed,
            r.ef_search,
            r.graph.avg_path_length_layer0,
            r.mean_search_hops,
            r.mean_recall
        );
    }
    files.insert("recall_vs_path_length.csv".into(), s);

    for d in &report.datasets {
        let mut s = String::from("k,explained_variance_ratio,cumulative\n");
        for (i, (r, c)) in d.pca.explained_variance_ratios.iter().zip(&d.pca.cumulative).enumerate() {
            let _ = writeln!(s, "{},{r},{c}", i + 1);
        }
        files.insert(format!("pca_{}.csv", d.label), s);
    }
    files
}

impl Experiment {
    /// Writes report.json, report.csv, manifest.json, plotdata/*.csv and
    /// orders/*.order. Files are staged in a scratch directory and moved
    /// into place only after all of them were written.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let staging = dir.join(format!(".staging-{}", std::process::id()));
        let _ = fs::remove_dir_all(&staging);
        let mut files: Vec<(PathBuf, Vec<u8>)> = vec![
            (
                "report.json".into(),
                (serde_json::to_string_pretty(&self.report)? + "\n").into_bytes(),
            ),
            ("report.csv".into(), report_csv(&self.report).into_bytes()),
            (
                "manifest.json".into(),
                (serde_json::to_string_pretty(&self.manifest)? + "\n").into_bytes(),
            ),
        ];
        for (name, body) in plot_data(&self.report) {
            files.push((Path::new("plotdata").join(name), body.into_bytes()));
        }
        for (rel, plan) in &self.plans {
            files.push((rel.clone(), io::encode_order_plan(plan)?.into_bytes()));
        }
        let staged = (|| {
            for (rel, body) in &files {
                io::write_atomic(&staging.join(rel), body)?;
            }
            Ok::<_, Error>(())
        })();
        if let Err(e) = staged {
            let _ = fs::remove_dir_all(&staging);
            return Err(e.at_stage("report"));
        }
        let mut written = Vec::new();
        for (rel, _) in &files {
            let target = dir.join(rel);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::rename(staging.join(rel), &target).map_err(|e| Error::io(&target, e))?;
            written.push(target);
        }
        let _ = fs::remove_dir_all(&staging);
        Ok(written)
    }
}

pub fn load_report(path: impl AsRef<Path>) -> Result<RunReport> {
    let r: RunReport = io::load_versioned(path)?;
    r.verify()?;
    Ok(r)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    io::load_versioned(path)
}

// ---------------------------------------------------------------- studies

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub basis_count: usize,
    pub k_intrinsic: usize,
    pub ef_search: usize,
    pub mean_recall: f64,
}

/// Recall against basis count: one synthetic dataset and query set per
/// count, each from its own seed, indexed in random order.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_id_sweep(
    d: usize,
    n: usize,
    n_q: usize,
    basis_counts: &[usize],
    params: &HnswParams,
    ef_search: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut cfg = ExperimentConfig::new(
        DataSource::SynthSweep {
            d,
            n,
            basis_counts: basis_counts.to_vec(),
        },
        QuerySource::Generated { n: n_q },
        vec![OrderSpec::new(Strategy::Random)],
    );
    cfg.seed = seed;
    cfg.metric = Some(params.metric);
    cfg.params = IndexConfig {
        m: params.m,
        m0: Some(params.m0),
        ef_construction: params.ef_construction,
        neighbor_select: params.neighbor_select,
    };
    cfg.ef_search = ef_search.to_vec();
    cfg.k = k;
    cfg.validate()?;
    let levels = cfg.hnsw_params();
    let opts = CellOptions::new(ef_search, k);
    let mut out = Vec::new();
    for m in materialize(&cfg)? {
        let baseline = Baseline::compute(&m.data, &m.queries, k, params.metric).stage("baseline")?;
        let pca = dimest::pca_intrinsic_dim(&m.data, dimest::DEFAULT_THETA).stage("id_estimate")?;
        let plans = plan_orders(&cfg, &m.data, None)?;
        for r in run_cells(&m, &baseline, &plans, &levels, &opts, None)? {
            out.push(SweepRow {
                basis_count: m.basis_count.expect("sweep datasets carry a basis count"),
                k_intrinsic: pca.k_intrinsic,
                ef_search: r.ef_search,
                mean_recall: r.mean_recall,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudy {
    pub rows: Vec<RunRow>,
    pub lid: LidSummary,
    pub correlations: Vec<Correlation>,
}

impl OrderStudy {
    pub fn mean_recall(&self, strategy: Strategy, ef: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.strategy == strategy && r.ef_search == ef)
            .map(|r| r.mean_recall)
            .collect();
        metrics::mean(&v).ok()
    }

    pub fn recall(&self, strategy: Strategy, ef: usize, seed: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.ef_search == ef && r.levels_seed == seed)
            .map(|r| r.mean_recall)
    }
}

/// DESC, ASC and RANDOM LID orders on a fixed dataset. Each seed sets the
/// level assignment and the random order; the LID orders themselves are
/// deterministic. Rows carry the seed in `levels_seed`.
#[allow(clippy::too_many_arguments)]
pub fn lid_order_study(
    x: &Dataset,
    queries: &Dataset,
    params: &HnswParams,
    ef_search: &[usize],
    k: usize,
    seeds: &[u64],
    lid_neighbours: usize,
) -> Result<OrderStudy> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    let baseline = Baseline::compute(x, queries, k, params.metric).stage("baseline")?;
    let profile = dimest::lid_profile(x, lid_neighbours, params.metric).stage("lid")?;
    let desc = orders::order_by_lid(&profile, Direction::Desc)?;
    let asc = orders::order_by_lid(&profile, Direction::Asc)?;
    let ids: Vec<usize> = (0..x.len()).collect();
    let m = Materialized {
        label: "data".into(),
        basis_count: None,
        data: x.clone(),
        queries: queries.clone(),
    };
    let opts = CellOptions::new(ef_search, k);
    let mut rows = Vec::new();
    for &s in seeds {
        let mut p = *params;
        p.seed = s;
        let plans = vec![desc.clone(), asc.clone(), orders::order_random(&ids, s)?];
        rows.extend(run_cells(&m, &baseline, &plans, &p, &opts, None)?);
    }
    Ok(OrderStudy {
        correlations: correlations(&rows),
        lid: profile.summary(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryStudy {
    pub rows: Vec<RunRow>,
    pub id_report: CategoryIdReport,
}

impl CategoryStudy {
    /// Max minus min mean recall across sequences at `ef`.
    pub fn spread(&self, ef: usize) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.ef_search == ef).map(|r| r.mean_recall).collect();
        let max = v.iter().copied().reduce(f64::max)?;
        let min = v.iter().copied().reduce(f64::min)?;
        Some(max - min)
    }
}

/// One index per category sequence (empty `sequences` = all of them).
/// `seed` fixes both level assignment and the in-block shuffles.
#[allow(clippy::too_many_arguments)]
pub fn category_order_study(
    x: &Dataset,
    queries: &Dataset,
    sequences: &[Vec<String>],
    params: &HnswParams,
    ef_search: &[usize],
    k: usize,
    seed: u64,
    theta: f64,
) -> Result<CategoryStudy> {
    let cats = x
        .categories()
        .ok_or_else(|| Error::Category("dataset has no category labels".into()))?;
    let id_report = dimest::per_category_intrinsic_dim(x, cats, theta).stage("id_estimate")?;
    let sequences = if sequences.is_empty() {
        orders::all_sequences(&orders::distinct_categories(cats))
    } else {
        sequences.to_vec()
    };
    let plans = sequences
        .iter()
        .map(|s| orders::order_by_category(cats, s, seed))
        .collect::<Result<Vec<_>>>()
        .stage("order")?;
    let baseline = Baseline::compute(x, queries, k, params.metric).stage("baseline")?;
    let m = Materialized {
        label: "data".into(),
        basis_count: None,
        data: x.clone(),
        queries: queries.clone(),
    };
    let mut p = *params;
    p.seed = seed;
    let rows = run_cells(&m, &baseline, &plans, &p, &CellOptions::new(ef_search, k), None)?;
    Ok(CategoryStudy { rows, id_report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            DataSource::Synth { d: 16, k: 4, n: 300 },
            QuerySource::Generated { n: 20 },
            vec![
                OrderSpec::new(Strategy::Random),
                OrderSpec::new(Strategy::LidDesc),
                OrderSpec::new(Strategy::LidAsc),
            ],
        );
        cfg.lid_neighbours = 20;
        cfg.params.ef_construction = 32;
        cfg.seed = 7;
        cfg
    }

    #[test]
    fn config_defaults_from_json() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"dataset":{"kind":"synth","d":8,"k":2,"n":50},
                "queries":{"kind":"generated","n":5},
                "orders":[{"strategy":"random"}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.ef_search, vec![10, 40]);
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.params.m, 16);
        assert_eq!(cfg.params.ef_construction, 128);
        assert_eq!(cfg.resolved_metric(), Metric::L2);
        assert_eq!(cfg.hnsw_params().m0, 32);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_rejections() {
        let mut c = small_cfg();
        c.orders.clear();
        assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))));
        let mut c = small_cfg();
        c.ef_search = vec![5, 40];
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.params.m = 1;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.dataset = DataSource::Fvecs {
            path: "/nonexistent.fvecs".into(),
            sha256: None,
        };
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.metric = Some(Metric::InnerProduct);
        assert!(c.validate().is_err());
    }

    #[test]
    fn experiment_cells_and_consistency() {
        let exp = run_experiment(&small_cfg()).unwrap();
        let r = &exp.report;
        assert_eq!(r.rows.len(), 3 * 2);
        assert_eq!(exp.plans.len(), 3);
        r.verify().unwrap();
        for row in &r.rows {
            assert_eq!(row.per_query_recall.len(), 20);
        }
        let ds = &r.datasets[0];
        assert_eq!(ds.pca.k_intrinsic, 4);
        assert!(ds.lid.is_some());
        let mut tampered = r.clone();
        tampered.rows[0].mean_recall += 1e-9;
        assert!(tampered.verify().is_err());
    }

    #[test]
    fn experiment_is_deterministic() {
        let a = run_experiment(&small_cfg()).unwrap();
        let b = run_experiment(&small_cfg()).unwrap();
        assert_eq!(a.report.without_timings(), b.report.without_timings());
        assert_eq!(a.manifest, b.manifest);
    }

    #[test]
    fn write_outputs_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let exp = run_experiment(&small_cfg()).unwrap();
        exp.write(dir.path()).unwrap();
        for f in ["report.json", "report.csv", "manifest.json", "plotdata/recall_by_order.csv"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let loaded = load_report(dir.path().join("report.json")).unwrap();
        assert_eq!(loaded, exp.report);
        let manifest = load_manifest(dir.path().join("manifest.json")).unwrap();
        for o in &manifest.orders {
            assert_eq!(io::file_hash(dir.path().join(&o.path)).unwrap(), o.sha256);
        }
        let again = rerun_manifest(&manifest).unwrap();
        assert_eq!(again.report.without_timings(), exp.report.without_timings());
        let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + exp.report.rows.len());
        assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e
            .unwrap()
            .file_name()
            .to_string_lossy()
            .starts_with(".staging")));
    }

    #[test]
    fn mixture_shapes_and_labels() {
        let m = MixtureSpec {
            d: 32,
            components: vec![
                MixtureComponent { k: 2, n: 30, category: Some("a".into()) },
                MixtureComponent { k: 3, n: 20, category: None },
            ],
            background: 10,
            orthogonal: true,
            centre_scale: 0.0,
        };
        let x = m.generate(1).unwrap();
        assert_eq!(x.len(), 60);
        let cats = x.categories().unwrap();
        assert_eq!(cats[0], "a");
        assert_eq!(cats[30], "c1");
        assert_eq!(cats[59], BACKGROUND_CATEGORY);
        let rep = dimest::per_category_intrinsic_dim(&x, cats, 0.99).unwrap();
        assert_eq!(rep.per_category["a"].k_intrinsic, 2);
        assert_eq!(rep.per_category["c1"].k_intrinsic, 3);
        let q = m.queries(1, 7).unwrap();
        assert_eq!(q.len(), 7);
        assert_eq!(m.generate(1).unwrap(), x);
    }

    #[test]
    fn single_seed_single_order_study() {
        let spec = SynthSpec { d: 12, k: 3, n: 200, seed: 2 };
        let (b, x) = spec.generate().unwrap();
        let q = spec.queries(&b, 10).unwrap();
        let p = HnswParams {
            ef_construction: 32,
            ..HnswParams::default()
        };
        let s = lid_order_study(&x, &q, &p, &[10], 10, &[1], 20).unwrap();
        assert_eq!(s.rows.len(), 3);
        assert!(s.mean_recall(Strategy::LidDesc, 10).is_some());
    }

    #[test]
    fn one_category_is_single_sequence() {
        let spec = SynthSpec { d: 8, k: 3, n: 120, seed: 3 };
        let (b, x) = spec.generate().unwrap();
        let x = x.with_categories(vec!["only".into(); 120]).unwrap();
        let q = spec.queries(&b, 5).unwrap();
        let s = category_order_study(&x, &q, &[], &HnswParams::default(), &[10], 10, 4, 0.99).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.spread(10), Some(0.0));
    }
}
