//! Retrieval quality: recall@k against the exact retriever, NDCG@k against
//! graded judgments, leaderboard rank shifts, and Pearson correlation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::SearchResult;

/// Relevance judgments: query id → (doc id → grade).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Qrels {
    pub judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn insert(&mut self, query: &str, doc: &str, grade: u32) -> Result<()> {
        let docs = self.judgments.entry(query.to_string()).or_default();
        if docs.insert(doc.to_string(), grade).is_some() {
            return Err(Error::invalid(format!(
                "duplicate judgment for query {query}, doc {doc}"
            )));
        }
        Ok(())
    }

    pub fn get(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Gain applied to a relevance grade.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// `rel`, as trec_eval computes it.
    #[default]
    Linear,
    /// `2^rel − 1`.
    Exponential,
}

impl Gain {
    fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => f64::from(grade),
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

/// `|top_k(approx) ∩ top_k(exact)| / |top_k(exact)|`.
pub fn recall_at_k(approx: &SearchResult, exact: &SearchResult, k: usize) -> Result<f64> {
    let truth: HashSet<usize> = exact.ids.iter().take(k).copied().collect();
    if truth.is_empty() {
        return Err(Error::invalid("exact result set is empty"));
    }
    let hits = approx
        .ids
        .iter()
        .take(k)
        .collect::<HashSet<_>>()
        .into_iter()
        .filter(|id| truth.contains(id))
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("mean of an empty set"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean of per-query recall values.
pub fn mean_recall(per_query: &[f64]) -> Result<f64> {
    mean(per_query)
}

/// NDCG for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ndcg {
    pub value: f64,
    /// False when the judgments hold no positive grade (value is then 0).
    pub has_relevant: bool,
}

/// `DCG@k / IDCG@k` with `DCG = Σ gain(rel_i) / log2(i + 1)` over ranks
/// `i = 1..k`; the ideal ranking sorts the judged grades descending.
pub fn ndcg_at_k<S: AsRef<str>>(
    ranked: &[S],
    judgments: &BTreeMap<String, u32>,
    k: usize,
    gain: Gain,
) -> Result<Ndcg> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let discount = |rank: usize| ((rank + 1) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, doc)| {
            let grade = judgments.get(doc.as_ref()).copied().unwrap_or(0);
            gain.apply(grade) / discount(i + 1)
        })
        .sum();
    let mut grades: Vec<u32> = judgments.values().copied().filter(|&g| g > 0).collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.apply(g) / discount(i + 1))
        .sum();
    if idcg == 0.0 {
        return Ok(Ndcg {
            value: 0.0,
            has_relevant: false,
        });
    }
    Ok(Ndcg {
        value: (dcg / idcg).min(1.0),
        has_relevant: true,
    })
}

/// Per-query and mean recall/NDCG for one result set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub k: usize,
    pub mean_recall_at_k: f64,
    pub per_query_recall: Vec<f64>,
    /// Mean over judged queries; absent without qrels.
    pub mean_ndcg_at_k: Option<f64>,
    /// `None` for queries missing from the qrels.
    pub per_query_ndcg: Vec<Option<f64>>,
    /// Queries left out of the NDCG mean because they have no judgments.
    pub ndcg_unjudged: usize,
    /// Judged queries with no positive grade (scored 0).
    pub ndcg_no_relevant: usize,
}

/// Scores `approx` against `exact`, and against `qrels` when given. Query
/// `i` is looked up in the qrels as `query_ids[i]`, and result ids are
/// mapped to document ids through `doc_ids`.
pub fn evaluate(
    approx: &[SearchResult],
    exact: &[SearchResult],
    k: usize,
    qrels: Option<(&Qrels, &[String], &[String])>,
    gain: Gain,
) -> Result<EvalSummary> {
    if approx.len() != exact.len() {
        return Err(Error::invalid(format!(
            "{} approximate results for {} exact ones",
            approx.len(),
            exact.len()
        )));
    }
    let per_query_recall = approx
        .iter()
        .zip(exact)
        .map(|(a, e)| recall_at_k(a, e, k))
        .collect::<Result<Vec<_>>>()?;
    let mean_recall_at_k = mean_recall(&per_query_recall)?;

    let mut per_query_ndcg = vec![None; approx.len()];
    let mut ndcg_unjudged = 0;
    let mut ndcg_no_relevant = 0;
    let mut mean_ndcg_at_k = None;
    if let Some((qrels, query_ids, doc_ids)) = qrels {
        if query_ids.len() != approx.len() {
            return Err(Error::invalid("one query id per query is required"));
        }
        let mut judged = Vec::new();
        for (i, r) in approx.iter().enumerate() {
            let Some(j) = qrels.get(&query_ids[i]) else {
                ndcg_unjudged += 1;
                continue;
            };
            let ranked = r
                .ids
                .iter()
                .map(|&id| {
                    doc_ids
                        .get(id)
                        .map(String::as_str)
                        .ok_or(Error::UnknownId(id as u64))
                })
                .collect::<Result<Vec<&str>>>()?;
            let n = ndcg_at_k(&ranked, j, k, gain)?;
            if !n.has_relevant {
                ndcg_no_relevant += 1;
            }
            per_query_ndcg[i] = Some(n.value);
            judged.push(n.value);
        }
        if !judged.is_empty() {
            mean_ndcg_at_k = Some(mean(&judged)?);
        }
    }
    Ok(EvalSummary {
        k,
        mean_recall_at_k,
        per_query_recall,
        mean_ndcg_at_k,
        per_query_ndcg,
        ndcg_unjudged,
        ndcg_no_relevant,
    })
}

/// 1-based ranks by descending score, ties by ascending name.
fn ranks(scores: &BTreeMap<String, f64>) -> BTreeMap<&str, i64> {
    let mut names: Vec<(&str, f64)> = scores.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    names.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    names
        .into_iter()
        .enumerate()
        .map(|(i, (name, _))| (name, i as i64 + 1))
        .collect()
}

/// `rank_exact − rank_approx` per model; positive means the model moved up
/// when scored with approximate retrieval.
pub fn rank_change(
    scores_exact: &BTreeMap<String, f64>,
    scores_approx: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, i64>> {
    if scores_exact.keys().ne(scores_approx.keys()) {
        let a: Vec<&String> = scores_exact.keys().filter(|k| !scores_approx.contains_key(*k)).collect();
        let b: Vec<&String> = scores_approx.keys().filter(|k| !scores_exact.contains_key(*k)).collect();
        return Err(Error::KeyMismatch(format!(
            "only in exact: {a:?}; only in approximate: {b:?}"
        )));
    }
    let re = ranks(scores_exact);
    let ra = ranks(scores_approx);
    Ok(re
        .iter()
        .map(|(name, r)| (name.to_string(), r - ra[name]))
        .collect())
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::invalid("pearson needs at least 2 pairs"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance("pearson input is constant".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
