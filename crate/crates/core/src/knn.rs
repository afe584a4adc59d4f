//! Exact brute-force top-k retrieval, the ground truth every approximate
//! result is scored against.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::vecmath::Metric;

/// A candidate ordered by `(distance, id)`; the id breaks ties so that
/// every ranking in the crate is total and reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub dist: f64,
    pub id: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Ranked ids, best first, with their distances.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchResult {
    pub ids: Vec<usize>,
    pub distances: Vec<f64>,
}

impl SearchResult {
    pub fn from_sorted(neighbors: &[Neighbor]) -> Self {
        SearchResult {
            ids: neighbors.iter().map(|n| n.id).collect(),
            distances: neighbors.iter().map(|n| n.dist).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Bounded selection of the `k` smallest neighbours.
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Neighbor>,
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, cand: Neighbor) {
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(top) = self.heap.peek() {
            if cand < *top {
                self.heap.pop();
                self.heap.push(cand);
            }
        }
    }

    pub(crate) fn into_sorted(self) -> Vec<Neighbor> {
        self.heap.into_sorted_vec()
    }
}

fn check_query(x: &Dataset, dim: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if dim != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: dim,
        });
    }
    Ok(())
}

/// The `k` nearest rows of `x` to `q`; all rows, ranked, when `k >= n`.
pub fn exact_search(x: &Dataset, q: &[f64], k: usize, metric: Metric) -> Result<SearchResult> {
    check_query(x, q.len(), k)?;
    let mut top = TopK::new(k);
    for (id, row) in x.rows().enumerate() {
        top.push(Neighbor {
            dist: metric.eval(q, row),
            id,
        });
    }
    Ok(SearchResult::from_sorted(&top.into_sorted()))
}

// Queries per tile. Each data row is loaded once per tile and compared
// against every query in it.
const QUERY_TILE: usize = 16;

/// Tiled all-pairs kernel. With `exclude_self`, query `i` skips data id `i`
/// (queries are the data itself).
pub(crate) fn knn_tiled(
    x: &Dataset,
    queries: &Dataset,
    k: usize,
    metric: Metric,
    exclude_self: bool,
) -> Vec<Vec<Neighbor>> {
    let nq = queries.len();
    let tiles: Vec<usize> = (0..nq).step_by(QUERY_TILE).collect();
    let per_tile: Vec<Vec<Vec<Neighbor>>> = tiles
        .par_iter()
        .map(|&start| {
            let end = (start + QUERY_TILE).min(nq);
            let mut tops: Vec<TopK> = (start..end).map(|_| TopK::new(k)).collect();
            for (id, row) in x.rows().enumerate() {
                for (off, top) in tops.iter_mut().enumerate() {
                    let qi = start + off;
                    if exclude_self && qi == id {
                        continue;
                    }
                    top.push(Neighbor {
                        dist: metric.eval(queries.row(qi), row),
                        id,
                    });
                }
            }
            tops.into_iter().map(TopK::into_sorted).collect()
        })
        .collect();
    per_tile.into_iter().flatten().collect()
}

/// [`exact_search`] for every row of `queries`, in query order.
pub fn exact_search_batch(
    x: &Dataset,
    queries: &Dataset,
    k: usize,
    metric: Metric,
) -> Result<Vec<SearchResult>> {
    check_query(x, queries.dim(), k)?;
    Ok(knn_tiled(x, queries, k, metric, false)
        .iter()
        .map(|n| SearchResult::from_sorted(n))
        .collect())
}

/// Exact results for a query set, tagged with what produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub k: usize,
    pub metric: Metric,
    pub dataset_hash: String,
    pub query_hash: String,
    pub results: Vec<SearchResult>,
}

impl Baseline {
    pub fn compute(x: &Dataset, queries: &Dataset, k: usize, metric: Metric) -> Result<Self> {
        Ok(Baseline {
            k,
            metric,
            dataset_hash: x.content_hash(),
            query_hash: queries.content_hash(),
            results: exact_search_batch(x, queries, k, metric)?,
        })
    }

    pub fn cache_key(&self) -> String {
        cache_key(&self.dataset_hash, &self.query_hash, self.k, self.metric)
    }

    /// Fails unless this baseline was computed for exactly these inputs.
    pub fn verify(&self, x: &Dataset, queries: &Dataset) -> Result<()> {
        for (what, expected, found) in [
            ("baseline dataset", &self.dataset_hash, x.content_hash()),
            ("baseline queries", &self.query_hash, queries.content_hash()),
        ] {
            if *expected != found {
                return Err(Error::HashMismatch {
                    what: what.into(),
                    expected: expected.clone(),
                    found,
                });
            }
        }
        Ok(())
    }
}

pub fn cache_key(dataset_hash: &str, query_hash: &str, k: usize, metric: Metric) -> String {
    let mut h = Sha256::new();
    h.update(dataset_hash.as_bytes());
    h.update(b"/");
    h.update(query_hash.as_bytes());
    h.update((k as u64).to_le_bytes());
    h.update([metric.tag()]);
    hex::encode(h.finalize())
}

/// Environment variable naming the baseline cache directory.
pub const CACHE_DIR_ENV: &str = "HNSWLAB_CACHE_DIR";

pub fn default_cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from)
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("baseline-{key}.hlb"))
}

/// Loads the baseline from `cache_dir` if present and valid, otherwise
/// computes it and stores it there.
pub fn cached_baseline(
    x: &Dataset,
    queries: &Dataset,
    k: usize,
    metric: Metric,
    cache_dir: Option<&Path>,
) -> Result<Baseline> {
    let Some(dir) = cache_dir else {
        return Baseline::compute(x, queries, k, metric);
    };
    let key = cache_key(&x.content_hash(), &queries.content_hash(), k, metric);
    let path = cache_path(dir, &key);
    if path.exists() {
        if let Ok(b) = crate::io::load_baseline(&path) {
            if b.verify(x, queries).is_ok() && b.k == k && b.metric == metric {
                return Ok(b);
            }
        }
    }
    let b = Baseline::compute(x, queries, k, metric)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::io::save_baseline(&b, &path)?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn ds(rows: &[Vec<f64>]) -> Dataset {
        Dataset::from_rows(rows).unwrap()
    }

    fn random_ds(n: usize, d: usize, s: u64) -> Dataset {
        let mut rng = seed::rng(s);
        Dataset::new(d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn hand_case() {
        let x = ds(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 0.0]]);
        let r = exact_search(&x, &[0.9, 0.0], 2, Metric::L2).unwrap();
        assert_eq!(r.ids, vec![1, 0]);
        assert!((r.distances[0] - 0.1).abs() < 1e-12);
        assert!((r.distances[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn k_at_least_n_returns_everything_ranked() {
        let x = ds(&[vec![3.0], vec![1.0], vec![2.0]]);
        let r = exact_search(&x, &[0.0], 10, Metric::L2).unwrap();
        assert_eq!(r.ids, vec![1, 2, 0]);
    }

    #[test]
    fn ties_break_by_lower_id() {
        let x = ds(&[vec![2.0], vec![-1.0], vec![1.0]]);
        let r = exact_search(&x, &[0.0], 2, Metric::L2).unwrap();
        assert_eq!(r.ids, vec![1, 2]);
    }

    #[test]
    fn errors() {
        let x = ds(&[vec![0.0, 0.0]]);
        assert!(matches!(
            exact_search(&x, &[0.0], 1, Metric::L2),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(exact_search(&x, &[0.0, 0.0], 0, Metric::L2).is_err());
    }

    #[test]
    fn batch_matches_single_calls() {
        let x = random_ds(300, 7, 1);
        let q = random_ds(20, 7, 2);
        let batch = exact_search_batch(&x, &q, 5, Metric::L2).unwrap();
        for (i, r) in batch.iter().enumerate() {
            assert_eq!(*r, exact_search(&x, q.row(i), 5, Metric::L2).unwrap());
        }
        let one = q.select(&[3]).unwrap();
        assert_eq!(
            exact_search_batch(&x, &one, 5, Metric::L2).unwrap()[0],
            batch[3]
        );
    }

    #[test]
    fn batch_independent_of_worker_count() {
        let x = random_ds(400, 6, 3);
        let q = random_ds(50, 6, 4);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| exact_search_batch(&x, &q, 8, Metric::Cosine).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn optimal_against_full_scan() {
        let x = random_ds(200, 4, 5);
        let q = random_ds(10, 4, 6);
        for qi in 0..q.len() {
            let r = exact_search(&x, q.row(qi), 7, Metric::L2).unwrap();
            let worst = *r.distances.last().unwrap();
            for id in 0..x.len() {
                if !r.ids.contains(&id) {
                    assert!(Metric::L2.eval(q.row(qi), x.row(id)) >= worst);
                }
            }
            assert!(r.distances.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn row_permutation_invariance() {
        let x = random_ds(100, 3, 9);
        let perm: Vec<usize> = (0..100).rev().collect();
        let y = x.select(&perm).unwrap();
        let q = [0.1, -0.2, 0.3];
        let a = exact_search(&x, &q, 6, Metric::L2).unwrap();
        let b = exact_search(&y, &q, 6, Metric::L2).unwrap();
        let relabeled: Vec<usize> = b.ids.iter().map(|&i| perm[i]).collect();
        assert_eq!(a.ids, relabeled);
        assert_eq!(a.distances, b.distances);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = random_ds(120, 5, 10);
        let q = random_ds(9, 5, 11);
        let a = cached_baseline(&x, &q, 4, Metric::L2, Some(dir.path())).unwrap();
        let path = cache_path(dir.path(), &a.cache_key());
        assert!(path.exists());
        let b = cached_baseline(&x, &q, 4, Metric::L2, Some(dir.path())).unwrap();
        assert_eq!(a, b);
    }
}
