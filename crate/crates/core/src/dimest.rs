//! Intrinsic dimensionality: a global PCA threshold estimate and pointwise
//! local intrinsic dimensionality (LID) by maximum likelihood over exact
//! nearest-neighbour distances.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knn;
use crate::vecmath::Metric;

pub const DEFAULT_THETA: f64 = 0.99;
pub const DEFAULT_LID_NEIGHBOURS: usize = 100;
/// Zero neighbour distances are clamped to this fraction of the k-th one.
pub const LID_ZERO_CLAMP: f64 = 1e-12;
/// Slack when comparing a cumulative ratio against the threshold, so that
/// `theta = 1` is reachable despite rounding in the running sum.
pub const CUMULATIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub explained_variance_ratios: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub k_intrinsic: usize,
    pub theta: f64,
}

impl PcaReport {
    /// Smallest k (1-based) with `C(k) >= theta`.
    pub fn k_at(&self, theta: f64) -> usize {
        threshold_index(&self.cumulative, theta)
    }
}

fn threshold_index(cumulative: &[f64], theta: f64) -> usize {
    cumulative
        .iter()
        .position(|&c| c >= theta - CUMULATIVE_SLACK)
        .map_or(cumulative.len(), |i| i + 1)
}

/// Explained-variance ratios from the eigenvalues of the (centered) Gram
/// matrix; the smaller of `XᵀX` and `XXᵀ` is decomposed.
pub fn pca_intrinsic_dim(x: &Dataset, theta: f64) -> Result<PcaReport> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid(format!("theta must be in (0, 1], got {theta}")));
    }
    let (n, d) = (x.len(), x.dim());
    if n < 2 {
        return Err(Error::invalid("PCA needs at least 2 rows"));
    }
    let mut centered = DMatrix::from_row_slice(n, d, x.data());
    for mut col in centered.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    let gram = if n >= d {
        centered.tr_mul(&centered)
    } else {
        &centered * centered.transpose()
    };
    let eig = SymmetricEigen::new(gram);
    let mut values: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    report_from_spectrum(&values, theta)
}

/// Builds the report from non-negative variances sorted descending.
pub(crate) fn report_from_spectrum(variances: &[f64], theta: f64) -> Result<PcaReport> {
    let total: f64 = variances.iter().sum();
    if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::ZeroVariance("all rows are identical".into()));
    }
    let ratios: Vec<f64> = variances.iter().map(|v| v / total).collect();
    let mut cumulative = Vec::with_capacity(ratios.len());
    let mut acc = 0.0;
    for r in &ratios {
        acc += r;
        cumulative.push(acc.min(1.0));
    }
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0;
    }
    let k_intrinsic = threshold_index(&cumulative, theta);
    Ok(PcaReport {
        explained_variance_ratios: ratios,
        cumulative,
        k_intrinsic,
        theta,
    })
}

/// MLE of local intrinsic dimensionality from ascending neighbour
/// distances `T_1..T_k`:
///
/// ```text
/// m̂ = [ 1/(k−1) · Σ_{j<k} ln(T_k / T_j) ]⁻¹
/// ```
///
/// Returns `+∞` when all distances are equal.
pub fn lid_mle(distances: &[f64]) -> Result<f64> {
    let k = distances.len();
    if k < 2 {
        return Err(Error::invalid("LID MLE needs at least 2 distances"));
    }
    if distances.windows(2).any(|w| w[0].partial_cmp(&w[1]).is_none_or(|o| o.is_gt())) || distances[0] < 0.0 {
        return Err(Error::invalid("neighbour distances must be non-negative and ascending"));
    }
    let t_k = distances[k - 1];
    if t_k <= 0.0 {
        return Err(Error::DuplicateSaturated);
    }
    let floor = LID_ZERO_CLAMP * t_k;
    let sum: f64 = distances[..k - 1]
        .iter()
        .map(|&t| (t_k / t.max(floor)).ln())
        .sum();
    if sum <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((k - 1) as f64 / sum)
}

/// Pointwise LID for every row, with the neighbour lists behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct LidProfile {
    pub k_neighbours: usize,
    pub metric: Metric,
    pub dataset_hash: String,
    /// One value per id; `+∞` marks a degenerate neighbourhood.
    pub lid: Vec<f64>,
    /// Row-major `n × k_neighbours` neighbour ids.
    pub neighbour_ids: Vec<usize>,
    /// Row-major `n × k_neighbours` ascending distances.
    pub neighbour_distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidSummary {
    pub count: usize,
    pub k_neighbours: usize,
    pub metric: Metric,
    /// Aggregates over finite estimates; absent when there are none.
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Points whose estimate is the `+∞` sentinel.
    pub sentinel_count: usize,
    pub dataset_hash: String,
}

impl LidProfile {
    pub fn len(&self) -> usize {
        self.lid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lid.is_empty()
    }

    pub fn distances_of(&self, id: usize) -> &[f64] {
        &self.neighbour_distances[id * self.k_neighbours..(id + 1) * self.k_neighbours]
    }

    pub fn neighbours_of(&self, id: usize) -> &[usize] {
        &self.neighbour_ids[id * self.k_neighbours..(id + 1) * self.k_neighbours]
    }

    pub fn sentinel_count(&self) -> usize {
        self.lid.iter().filter(|v| v.is_infinite()).count()
    }

    /// Aggregates over the finite estimates.
    pub fn summary(&self) -> LidSummary {
        let mut finite: Vec<f64> = self.lid.iter().copied().filter(|v| v.is_finite()).collect();
        finite.sort_by(f64::total_cmp);
        let (mean, median, min, max) = if finite.is_empty() {
            (None, None, None, None)
        } else {
            let m = finite.len();
            let median = if m % 2 == 1 {
                finite[m / 2]
            } else {
                0.5 * (finite[m / 2 - 1] + finite[m / 2])
            };
            (
                Some(finite.iter().sum::<f64>() / m as f64),
                Some(median),
                Some(finite[0]),
                Some(finite[m - 1]),
            )
        };
        LidSummary {
            count: self.lid.len(),
            k_neighbours: self.k_neighbours,
            metric: self.metric,
            mean,
            median,
            min,
            max,
            sentinel_count: self.sentinel_count(),
            dataset_hash: self.dataset_hash.clone(),
        }
    }
}

/// Exact `k_neighbours`-NN of every point (self excluded, ties by id) and
/// the MLE over their distances. Points whose neighbours all sit at
/// distance zero get the `+∞` sentinel.
pub fn lid_profile(x: &Dataset, k_neighbours: usize, metric: Metric) -> Result<LidProfile> {
    if k_neighbours < 2 {
        return Err(Error::invalid("k_neighbours must be >= 2"));
    }
    if x.len() <= k_neighbours {
        return Err(Error::invalid(format!(
            "LID profile with {k_neighbours} neighbours needs more than {k_neighbours} points, got {}",
            x.len()
        )));
    }
    if metric == Metric::InnerProduct {
        return Err(Error::invalid(
            "LID needs non-negative distances; use l2 or cosine",
        ));
    }
    let neighbours = knn::knn_tiled(x, x, k_neighbours, metric, true);
    let lid: Vec<f64> = neighbours
        .par_iter()
        .map(|nbrs| {
            let t: Vec<f64> = nbrs.iter().map(|n| n.dist.max(0.0)).collect();
            match lid_mle(&t) {
                Ok(v) => Ok(v),
                Err(Error::DuplicateSaturated) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut neighbour_ids = Vec::with_capacity(x.len() * k_neighbours);
    let mut neighbour_distances = Vec::with_capacity(x.len() * k_neighbours);
    for nbrs in &neighbours {
        neighbour_ids.extend(nbrs.iter().map(|n| n.id));
        neighbour_distances.extend(nbrs.iter().map(|n| n.dist));
    }
    Ok(LidProfile {
        k_neighbours,
        metric,
        dataset_hash: x.content_hash(),
        lid,
        neighbour_ids,
        neighbour_distances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryIdReport {
    pub per_category: BTreeMap<String, PcaReport>,
    pub whole: PcaReport,
}

/// PCA intrinsic dimensionality of each labelled subset and of the union.
pub fn per_category_intrinsic_dim(
    x: &Dataset,
    categories: &[String],
    theta: f64,
) -> Result<CategoryIdReport> {
    if categories.len() != x.len() {
        return Err(Error::Category(format!(
            "{} labels for {} rows",
            categories.len(),
            x.len()
        )));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (id, c) in categories.iter().enumerate() {
        groups.entry(c.as_str()).or_default().push(id);
    }
    let too_small: Vec<&str> = groups
        .iter()
        .filter(|(_, ids)| ids.len() < 2 || !has_two_distinct(x, ids))
        .map(|(c, _)| *c)
        .collect();
    if !too_small.is_empty() {
        return Err(Error::Category(format!(
            "categories need at least 2 distinct rows: {}",
            too_small.join(", ")
        )));
    }
    let mut per_category = BTreeMap::new();
    for (c, ids) in &groups {
        let subset = x.select(ids)?;
        per_category.insert((*c).to_string(), pca_intrinsic_dim(&subset, theta)?);
    }
    Ok(CategoryIdReport {
        per_category,
        whole: pca_intrinsic_dim(x, theta)?,
    })
}

fn has_two_distinct(x: &Dataset, ids: &[usize]) -> bool {
    let first = x.row(ids[0]);
    ids[1..].iter().any(|&i| x.row(i) != first)
}
