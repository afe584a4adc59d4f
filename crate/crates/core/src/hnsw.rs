//! Hierarchical Navigable Small World graph, built strictly sequentially so
//! that insertion order is the only thing that varies between two builds
//! with equal parameters.
//!
//! Each node draws a level `floor(−ln(u)·mL)`, `u ∈ (0, 1]`, from a ChaCha8
//! stream seeded by the parameters. Insertion greedily descends from the
//! entry point to the node's level, then on every layer at or below it runs
//! a best-first search with `ef_construction` candidates, selects `M`
//! neighbours, links both directions and shrinks any neighbour list that
//! outgrew its cap (`M` above layer 0, `M0` on layer 0) by re-running the
//! selection.
//!
//! Ids index dense storage: inserting id `i` reserves rows `0..=i`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knn::{Neighbor, SearchResult};
use crate::orders::OrderPlan;
use crate::seed::{self, LabRng};
use crate::vecmath::Metric;

pub const DEFAULT_M: usize = 16;
pub const DEFAULT_EF_CONSTRUCTION: usize = 128;
pub const DEFAULT_EF_SEARCH: usize = 10;
/// The two search-time operating points studied.
pub const EF_SEARCH_POINTS: [usize; 2] = [10, 40];
/// BFS sources sampled by [`HnswIndex::graph_stats`] by default.
pub const DEFAULT_PATH_SOURCES: usize = 64;
const MAX_LEVEL: usize = 48;

/// How a node's neighbour list is chosen from its candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSelect {
    /// Keep the `M` closest candidates.
    Simple,
    /// Walk candidates closest-first and keep one only if it is closer to
    /// the base point than to every neighbour already kept.
    Heuristic,
}

impl NeighborSelect {
    pub fn tag(self) -> u8 {
        match self {
            NeighborSelect::Simple => 0,
            NeighborSelect::Heuristic => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(NeighborSelect::Simple),
            1 => Some(NeighborSelect::Heuristic),
            _ => None,
        }
    }
}

impl fmt::Display for NeighborSelect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeighborSelect::Simple => "simple",
            NeighborSelect::Heuristic => "heuristic",
        })
    }
}

impl FromStr for NeighborSelect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simple" => Ok(NeighborSelect::Simple),
            "heuristic" => Ok(NeighborSelect::Heuristic),
            other => Err(Error::invalid(format!("unknown neighbour selection '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Links per node on layers above 0.
    pub m: usize,
    /// Link cap on layer 0.
    pub m0: usize,
    pub ef_construction: usize,
    /// Level multiplier.
    pub ml: f64,
    pub seed: u64,
    pub metric: Metric,
    pub neighbor_select: NeighborSelect,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams::with_m(DEFAULT_M)
    }
}

impl HnswParams {
    /// Defaults for a given `M`: `M0 = 2·M`, `mL = 1/ln M`.
    pub fn with_m(m: usize) -> Self {
        HnswParams {
            m,
            m0: 2 * m,
            ef_construction: DEFAULT_EF_CONSTRUCTION,
            ml: 1.0 / (m.max(2) as f64).ln(),
            seed: 0,
            metric: Metric::L2,
            neighbor_select: NeighborSelect::Heuristic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid(format!("M must be >= 2, got {}", self.m)));
        }
        if self.m0 < self.m {
            return Err(Error::invalid(format!(
                "M0 ({}) must be >= M ({})",
                self.m0, self.m
            )));
        }
        if self.ef_construction < self.m {
            return Err(Error::invalid(format!(
                "ef_construction ({}) must be >= M ({})",
                self.ef_construction, self.m
            )));
        }
        if !(self.ml.is_finite() && self.ml > 0.0) {
            return Err(Error::invalid(format!("mL must be positive, got {}", self.ml)));
        }
        Ok(())
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            self.m0
        } else {
            self.m
        }
    }
}

/// Work done by one search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Nodes expanded across all layers.
    pub hops: usize,
    /// Nodes expanded on layer 0 alone.
    pub layer0_hops: usize,
    pub distance_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    /// Mean BFS hop distance over reachable (source, target) pairs on the
    /// undirected layer-0 graph.
    pub avg_path_length_layer0: f64,
    /// `degree_histogram[layer][deg]` = nodes at `layer` with `deg` out-links.
    pub degree_histogram: Vec<Vec<usize>>,
    pub connected_components_layer0: usize,
    pub sampled_sources: usize,
    pub node_count: usize,
    pub max_level: usize,
}

/// Epoch-stamped visited set; clearing is a counter bump.
struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(len: usize) -> Self {
        Visited {
            marks: vec![0; len],
            epoch: 0,
        }
    }

    fn reset(&mut self, len: usize) {
        if self.marks.len() < len {
            self.marks.resize(len, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    /// Marks `id`; false if it was already marked.
    #[inline]
    fn insert(&mut self, id: usize) -> bool {
        let slot = &mut self.marks[id];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

pub struct HnswIndex {
    params: HnswParams,
    dim: usize,
    vectors: Vec<f64>,
    /// Per id: `Some(level)` once inserted.
    levels: Vec<Option<usize>>,
    /// Per id, per layer `0..=level`: neighbour ids.
    links: Vec<Vec<Vec<usize>>>,
    entry_point: Option<usize>,
    insertion_log: Vec<usize>,
    level_rng: LabRng,
    scratch: Visited,
}

impl fmt::Debug for HnswIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HnswIndex")
            .field("params", &self.params)
            .field("dim", &self.dim)
            .field("len", &self.len())
            .field("entry_point", &self.entry_point)
            .field("max_level", &self.max_level())
            .finish()
    }
}

impl HnswIndex {
    pub fn new(params: HnswParams, dim: usize) -> Result<Self> {
        params.validate()?;
        if dim == 0 {
            return Err(Error::invalid("index dim must be >= 1"));
        }
        Ok(HnswIndex {
            params,
            dim,
            vectors: Vec::new(),
            levels: Vec::new(),
            links: Vec::new(),
            entry_point: None,
            insertion_log: Vec::new(),
            level_rng: seed::rng(seed::derive(params.seed, "levels")),
            scratch: Visited::new(0),
        })
    }

    /// Inserts `order.ids` from `dataset` one after another.
    pub fn build(dataset: &Dataset, order: &OrderPlan, params: HnswParams) -> Result<Self> {
        order.verify_for(dataset.len())?;
        let mut index = HnswIndex::new(params, dataset.dim())?;
        index.reserve(dataset.len());
        for &id in &order.ids {
            index.insert(id, dataset.row(id))?;
        }
        Ok(index)
    }

    /// Assembles an index from stored parts, checking every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        params: HnswParams,
        dim: usize,
        vectors: Vec<f64>,
        levels: Vec<Option<usize>>,
        links: Vec<Vec<Vec<usize>>>,
        entry_point: Option<usize>,
        insertion_log: Vec<usize>,
        level_rng_word_pos: u128,
    ) -> Result<Self> {
        params.validate()?;
        if dim == 0 || vectors.len() != levels.len() * dim || links.len() != levels.len() {
            return Err(Error::Invariant("index part sizes disagree".into()));
        }
        let mut level_rng = seed::rng(seed::derive(params.seed, "levels"));
        level_rng.set_word_pos(level_rng_word_pos);
        let index = HnswIndex {
            params,
            dim,
            scratch: Visited::new(levels.len()),
            vectors,
            levels,
            links,
            entry_point,
            insertion_log,
            level_rng,
        };
        index.check_invariants()?;
        Ok(index)
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.insertion_log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insertion_log.is_empty()
    }

    /// One past the largest id slot.
    pub fn capacity(&self) -> usize {
        self.levels.len()
    }

    pub fn entry_point(&self) -> Option<usize> {
        self.entry_point
    }

    pub fn max_level(&self) -> Option<usize> {
        self.entry_point.and_then(|e| self.levels[e])
    }

    pub fn level(&self, id: usize) -> Option<usize> {
        self.levels.get(id).copied().flatten()
    }

    pub fn levels(&self) -> &[Option<usize>] {
        &self.levels
    }

    pub fn insertion_log(&self) -> &[usize] {
        &self.insertion_log
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn level_rng_word_pos(&self) -> u128 {
        self.level_rng.get_word_pos()
    }

    /// Out-links of `id` on `layer`; empty if absent.
    pub fn neighbors(&self, id: usize, layer: usize) -> &[usize] {
        self.links
            .get(id)
            .and_then(|l| l.get(layer))
            .map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, id: usize) -> bool {
        self.level(id).is_some()
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        &self.vectors[id * self.dim..(id + 1) * self.dim]
    }

    fn reserve(&mut self, capacity: usize) {
        if capacity > self.levels.len() {
            self.vectors.resize(capacity * self.dim, 0.0);
            self.levels.resize(capacity, None);
            self.links.resize_with(capacity, Vec::new);
        }
    }

    fn draw_level(&mut self) -> usize {
        let u = 1.0 - self.level_rng.random::<f64>();
        ((-u.ln() * self.params.ml).floor() as usize).min(MAX_LEVEL)
    }

    #[inline]
    fn dist_to(&self, q: &[f64], id: usize) -> f64 {
        self.params.metric.eval(q, self.vector(id))
    }

    pub fn insert(&mut self, id: usize, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if self.contains(id) {
            return Err(Error::DuplicateId(id as u64));
        }
        if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        if id >= u32::MAX as usize {
            return Err(Error::invalid(format!("id {id} out of range")));
        }
        self.reserve(id + 1);
        self.vectors[id * self.dim..(id + 1) * self.dim].copy_from_slice(v);
        let level = self.draw_level();
        self.levels[id] = Some(level);
        self.links[id] = vec![Vec::new(); level + 1];
        self.insertion_log.push(id);

        let Some(entry) = self.entry_point else {
            self.entry_point = Some(id);
            return Ok(());
        };
        let top = self.levels[entry].unwrap_or(0);
        let q = v.to_vec();
        let mut visited = std::mem::replace(&mut self.scratch, Visited::new(0));
        let mut stats = SearchStats::default();

        let mut current = vec![Neighbor {
            dist: self.dist_to(&q, entry),
            id: entry,
        }];
        for layer in (level + 1..=top).rev() {
            current = self.search_layer(&q, &current, 1, layer, &mut visited, &mut stats);
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(
                &q,
                &current,
                self.params.ef_construction,
                layer,
                &mut visited,
                &mut stats,
            );
            let chosen = self.select_neighbors(&found, self.params.m);
            self.links[id][layer] = chosen.iter().map(|n| n.id).collect();
            for n in &chosen {
                self.link_back(n.id, id, layer);
            }
            current = found;
        }
        self.scratch = visited;

        if level > top {
            self.entry_point = Some(id);
        }
        Ok(())
    }

    /// Adds `new` to `node`'s list on `layer`, shrinking it if over cap.
    fn link_back(&mut self, node: usize, new: usize, layer: usize) {
        let cap = self.params.cap(layer);
        self.links[node][layer].push(new);
        if self.links[node][layer].len() <= cap {
            return;
        }
        let base = self.vector(node).to_vec();
        let mut cands: Vec<Neighbor> = self.links[node][layer]
            .iter()
            .map(|&id| Neighbor {
                dist: self.dist_to(&base, id),
                id,
            })
            .collect();
        cands.sort();
        let kept = self.select_neighbors(&cands, cap);
        self.links[node][layer] = kept.iter().map(|n| n.id).collect();
    }

    /// `candidates` must be sorted closest-first.
    fn select_neighbors(&self, candidates: &[Neighbor], m: usize) -> Vec<Neighbor> {
        match self.params.neighbor_select {
            NeighborSelect::Simple => candidates.iter().take(m).copied().collect(),
            NeighborSelect::Heuristic => {
                let mut kept: Vec<Neighbor> = Vec::with_capacity(m);
                for cand in candidates {
                    if kept.len() >= m {
                        break;
                    }
                    let v = self.vector(cand.id);
                    let dominated = kept
                        .iter()
                        .any(|k| self.params.metric.eval(v, self.vector(k.id)) < cand.dist);
                    if !dominated {
                        kept.push(*cand);
                    }
                }
                kept
            }
        }
    }

    /// Best-first search on one layer; returns up to `ef` results sorted
    /// closest-first.
    fn search_layer(
        &self,
        q: &[f64],
        entry: &[Neighbor],
        ef: usize,
        layer: usize,
        visited: &mut Visited,
        stats: &mut SearchStats,
    ) -> Vec<Neighbor> {
        visited.reset(self.levels.len());
        let mut candidates: BinaryHeap<Reverse<Neighbor>> = BinaryHeap::with_capacity(ef * 2);
        let mut results: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(ef + 1);
        for e in entry {
            if visited.insert(e.id) {
                candidates.push(Reverse(*e));
                results.push(*e);
                if results.len() > ef {
                    results.pop();
                }
            }
        }
        while let Some(Reverse(closest)) = candidates.pop() {
            if let Some(worst) = results.peek() {
                if results.len() >= ef && closest > *worst {
                    break;
                }
            }
            stats.hops += 1;
            if layer == 0 {
                stats.layer0_hops += 1;
            }
            for &nb in &self.links[closest.id][layer] {
                if !visited.insert(nb) {
                    continue;
                }
                let cand = Neighbor {
                    dist: self.dist_to(q, nb),
                    id: nb,
                };
                stats.distance_evals += 1;
                let admit = results.len() < ef || results.peek().is_some_and(|w| cand < *w);
                if admit {
                    candidates.push(Reverse(cand));
                    results.push(cand);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    pub fn search(&self, q: &[f64], k: usize, ef_search: usize) -> Result<(SearchResult, SearchStats)> {
        if k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if ef_search < k {
            return Err(Error::invalid(format!(
                "ef_search ({ef_search}) must be >= k ({k})"
            )));
        }
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        let entry = self.entry_point.ok_or(Error::EmptyIndex)?;
        let top = self.levels[entry].unwrap_or(0);
        let mut visited = Visited::new(self.levels.len());
        let mut stats = SearchStats {
            distance_evals: 1,
            ..SearchStats::default()
        };
        let mut current = vec![Neighbor {
            dist: self.dist_to(q, entry),
            id: entry,
        }];
        for layer in (1..=top).rev() {
            current = self.search_layer(q, &current, 1, layer, &mut visited, &mut stats);
        }
        let mut found = self.search_layer(q, &current, ef_search, 0, &mut visited, &mut stats);
        found.truncate(k);
        Ok((SearchResult::from_sorted(&found), stats))
    }

    /// Checks degree caps, edge endpoints, entry point and insertion log.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invariant(m));
        let mut present = 0usize;
        for (id, level) in self.levels.iter().enumerate() {
            let Some(level) = *level else {
                if !self.links[id].is_empty() {
                    return fail(format!("absent id {id} has links"));
                }
                continue;
            };
            present += 1;
            if self.links[id].len() != level + 1 {
                return fail(format!("id {id} has {} layers, level {level}", self.links[id].len()));
            }
            for (layer, nbrs) in self.links[id].iter().enumerate() {
                if nbrs.len() > self.params.cap(layer) {
                    return fail(format!(
                        "id {id} has {} links on layer {layer}, cap {}",
                        nbrs.len(),
                        self.params.cap(layer)
                    ));
                }
                for &nb in nbrs {
                    if nb == id {
                        return fail(format!("id {id} links to itself on layer {layer}"));
                    }
                    if self.level(nb).is_none_or(|l| l < layer) {
                        return fail(format!("edge {id}->{nb} on layer {layer} has no endpoint"));
                    }
                }
            }
        }
        if present != self.insertion_log.len() {
            return fail(format!(
                "{present} nodes but {} logged insertions",
                self.insertion_log.len()
            ));
        }
        let mut seen = vec![false; self.levels.len()];
        for &id in &self.insertion_log {
            if id >= seen.len() || !self.contains(id) || std::mem::replace(&mut seen[id], true) {
                return fail(format!("insertion log entry {id} invalid or repeated"));
            }
        }
        match self.entry_point {
            None if present > 0 => fail("non-empty index without entry point".into()),
            None => Ok(()),
            Some(e) => {
                let Some(top) = self.level(e) else {
                    return fail(format!("entry point {e} not present"));
                };
                // earliest inserted node among those of maximum level
                let max = self.levels.iter().flatten().copied().max().unwrap_or(0);
                let expected = self
                    .insertion_log
                    .iter()
                    .copied()
                    .find(|&id| self.level(id) == Some(max));
                if expected != Some(e) {
                    return fail(format!("entry point {e} (level {top}) is not the first max-level node"));
                }
                Ok(())
            }
        }
    }

    fn undirected_layer0(&self) -> Vec<Vec<usize>> {
        let mut undirected: Vec<Vec<usize>> = vec![Vec::new(); self.levels.len()];
        for &id in &self.insertion_log {
            for &nb in self.neighbors(id, 0) {
                undirected[id].push(nb);
                undirected[nb].push(id);
            }
        }
        for list in &mut undirected {
            list.sort_unstable();
            list.dedup();
        }
        undirected
    }

    /// Mean BFS hop count from the given layer-0 sources to every node they
    /// reach (the source itself excluded).
    pub fn avg_path_length_from(&self, sources: &[usize]) -> f64 {
        mean_bfs_hops(&self.undirected_layer0(), sources)
    }

    /// Connected-component label of every slot in the undirected layer-0
    /// graph, numbered in insertion-log order; `usize::MAX` for empty slots.
    pub fn layer0_components(&self) -> Vec<usize> {
        component_labels(&self.undirected_layer0(), &self.insertion_log)
    }

    /// BFS statistics of the undirected layer-0 graph plus per-layer degree
    /// histograms.
    pub fn graph_stats(&self, sample_sources: usize, seed: u64) -> GraphStats {
        let nodes: Vec<usize> = self.insertion_log.clone();
        let n = nodes.len();
        let max_level = self.max_level().unwrap_or(0);
        let mut degree_histogram = vec![Vec::<usize>::new(); if n == 0 { 0 } else { max_level + 1 }];
        for &id in &nodes {
            for (layer, nbrs) in self.links[id].iter().enumerate() {
                let hist = &mut degree_histogram[layer];
                if hist.len() <= nbrs.len() {
                    hist.resize(nbrs.len() + 1, 0);
                }
                hist[nbrs.len()] += 1;
            }
        }

        let undirected = self.undirected_layer0();
        let components = count_components(&component_labels(&undirected, &nodes));

        let sources: Vec<usize> = if sample_sources >= n {
            nodes.clone()
        } else {
            let mut rng = seed::rng(seed);
            let mut picked: Vec<usize> = sample(&mut rng, n, sample_sources)
                .into_iter()
                .map(|i| nodes[i])
                .collect();
            picked.sort_unstable();
            picked
        };
        let avg_path_length_layer0 = mean_bfs_hops(&undirected, &sources);
        GraphStats {
            avg_path_length_layer0,
            degree_histogram,
            connected_components_layer0: components,
            sampled_sources: sources.len(),
            node_count: n,
            max_level,
        }
    }
}

fn component_labels(undirected: &[Vec<usize>], nodes: &[usize]) -> Vec<usize> {
    let mut component = vec![usize::MAX; undirected.len()];
    let mut next = 0;
    for &start in nodes {
        if component[start] != usize::MAX {
            continue;
        }
        component[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &w in &undirected[u] {
                if component[w] == usize::MAX {
                    component[w] = next;
                    queue.push_back(w);
                }
            }
        }
        next += 1;
    }
    component
}

fn count_components(labels: &[usize]) -> usize {
    labels.iter().filter(|&&c| c != usize::MAX).max().map_or(0, |m| m + 1)
}

fn mean_bfs_hops(undirected: &[Vec<usize>], sources: &[usize]) -> f64 {
    let mut total_hops = 0u64;
    let mut pairs = 0u64;
    let mut dist = vec![usize::MAX; undirected.len()];
    for &s in sources {
        if s >= undirected.len() {
            continue;
        }
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &w in &undirected[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    total_hops += dist[w] as u64;
                    pairs += 1;
                    queue.push_back(w);
                }
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total_hops as f64 / pairs as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::exact_search;
    use crate::orders::{order_random, OrderPlan};
    use rand::Rng;

    fn random_ds(n: usize, d: usize, s: u64) -> Dataset {
        let mut rng = seed::rng(s);
        Dataset::new(d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn identity(n: usize) -> OrderPlan {
        OrderPlan::identity(n)
    }

    fn small_params(m: usize) -> HnswParams {
        HnswParams {
            ef_construction: 64,
            ..HnswParams::with_m(m)
        }
    }

    #[test]
    fn defaults() {
        let p = HnswParams::default();
        assert_eq!((p.m, p.m0, p.ef_construction), (16, 32, 128));
        assert!((p.ml - 1.0 / 16f64.ln()).abs() < 1e-15);
        assert_eq!(p.neighbor_select, NeighborSelect::Heuristic);
        assert!(HnswIndex::new(p, 4).is_ok());
    }

    #[test]
    fn parameter_validation() {
        assert!(HnswIndex::new(HnswParams::with_m(2), 3).is_ok());
        assert!(HnswIndex::new(HnswParams::with_m(1), 3).is_err());
        let p = HnswParams {
            ef_construction: 8,
            ..HnswParams::with_m(16)
        };
        assert!(p.validate().is_err());
        let p = HnswParams {
            ml: 0.0,
            ..HnswParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn first_insert_becomes_entry_point() {
        let mut idx = HnswIndex::new(HnswParams::default(), 2).unwrap();
        idx.insert(5, &[1.0, 2.0]).unwrap();
        assert_eq!(idx.entry_point(), Some(5));
        assert_eq!(idx.len(), 1);
        let (r, _) = idx.search(&[0.0, 0.0], 1, 1).unwrap();
        assert_eq!(r.ids, vec![5]);
    }

    #[test]
    fn insert_errors() {
        let mut idx = HnswIndex::new(HnswParams::default(), 2).unwrap();
        idx.insert(0, &[1.0, 2.0]).unwrap();
        assert!(matches!(idx.insert(0, &[1.0, 2.0]), Err(Error::DuplicateId(0))));
        assert!(matches!(
            idx.insert(1, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn search_errors() {
        let idx = HnswIndex::new(HnswParams::default(), 2).unwrap();
        assert!(matches!(idx.search(&[0.0, 0.0], 1, 1), Err(Error::EmptyIndex)));
        let x = random_ds(20, 2, 1);
        let idx = HnswIndex::build(&x, &identity(20), small_params(4)).unwrap();
        assert!(idx.search(&[0.0, 0.0], 5, 4).is_err());
        assert!(idx.search(&[0.0], 1, 4).is_err());
    }

    #[test]
    fn caps_hold_after_every_insert() {
        let x = random_ds(400, 6, 2);
        let params = small_params(4);
        let mut idx = HnswIndex::new(params, 6).unwrap();
        for id in 0..x.len() {
            idx.insert(id, x.row(id)).unwrap();
            if id % 37 == 0 {
                idx.check_invariants().unwrap();
            }
        }
        idx.check_invariants().unwrap();
        for id in 0..x.len() {
            assert!(idx.neighbors(id, 0).len() <= 8);
            for layer in 1..=idx.level(id).unwrap() {
                assert!(idx.neighbors(id, layer).len() <= 4);
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let x = random_ds(300, 5, 3);
        let order = order_random(&(0..300).collect::<Vec<_>>(), 9).unwrap();
        let a = HnswIndex::build(&x, &order, small_params(6)).unwrap();
        let b = HnswIndex::build(&x, &order, small_params(6)).unwrap();
        assert_eq!(a.links, b.links);
        assert_eq!(a.levels, b.levels);
        assert_eq!(a.insertion_log(), order.ids.as_slice());
    }

    #[test]
    fn order_changes_graph_but_not_id_set() {
        let x = random_ds(1000, 8, 4);
        let fwd = HnswIndex::build(&x, &identity(1000), small_params(8)).unwrap();
        let rev_ids: Vec<usize> = (0..1000).rev().collect();
        let rev = HnswIndex::build(&x, &OrderPlan::from_ids(rev_ids).unwrap(), small_params(8)).unwrap();
        assert_ne!(fwd.links, rev.links);
        let mut a = fwd.insertion_log().to_vec();
        let mut b = rev.insertion_log().to_vec();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn build_rejects_non_permutation() {
        let x = random_ds(10, 2, 5);
        let bad = OrderPlan {
            ids: vec![0, 1, 2],
            ..OrderPlan::identity(3)
        };
        assert!(HnswIndex::build(&x, &bad, small_params(4)).is_err());
    }

    #[test]
    fn full_ef_matches_exact_search() {
        let x = random_ds(500, 6, 6);
        let idx = HnswIndex::build(&x, &identity(500), small_params(6)).unwrap();
        let stats = idx.graph_stats(usize::MAX, 0);
        assert_eq!(stats.connected_components_layer0, 1);
        let q = random_ds(20, 6, 7);
        for qi in 0..q.len() {
            let (approx, _) = idx.search(q.row(qi), 10, 500).unwrap();
            let exact = exact_search(&x, q.row(qi), 10, Metric::L2).unwrap();
            assert_eq!(approx, exact);
        }
    }

    #[test]
    fn search_distances_match_recomputation() {
        let x = random_ds(300, 4, 8);
        let params = HnswParams {
            metric: Metric::Cosine,
            ..small_params(5)
        };
        let idx = HnswIndex::build(&x, &identity(300), params).unwrap();
        let q = [0.3, -0.1, 0.2, 0.9];
        let (r, stats) = idx.search(&q, 10, 20).unwrap();
        assert!(stats.distance_evals > 0 && stats.hops > 0);
        let mut seen = std::collections::HashSet::new();
        for (id, d) in r.ids.iter().zip(&r.distances) {
            assert!(seen.insert(*id));
            assert_eq!(*d, crate::vecmath::distance(&q, x.row(*id), Metric::Cosine).unwrap());
        }
    }

    #[test]
    fn simple_selection_fills_to_m() {
        let x = random_ds(200, 3, 9);
        let params = HnswParams {
            neighbor_select: NeighborSelect::Simple,
            ..small_params(4)
        };
        let idx = HnswIndex::build(&x, &identity(200), params).unwrap();
        idx.check_invariants().unwrap();
        // once the graph holds more than M nodes every layer-0 list is non-trivial
        assert!(idx.neighbors(199, 0).len() == 4);
    }

    #[test]
    fn path_graph_stats() {
        // a(0) - b(1) - c(2) on a line, hand-wired layer 0
        let params = HnswParams::with_m(2);
        let idx = HnswIndex::from_parts(
            params,
            1,
            vec![0.0, 1.0, 2.0],
            vec![Some(0), Some(0), Some(0)],
            vec![vec![vec![1]], vec![vec![0, 2]], vec![vec![1]]],
            Some(0),
            vec![0, 1, 2],
            0,
        )
        .unwrap();
        assert_eq!(idx.avg_path_length_from(&[0]), 1.5);
        assert_eq!(idx.graph_stats(1, 0).sampled_sources, 1);
        // sources a, b, c give 1.5, 1, 1.5
        let all = idx.graph_stats(3, 0);
        assert!((all.avg_path_length_layer0 - (1.5 + 1.0 + 1.5) / 3.0).abs() < 1e-12);
        assert_eq!(all.connected_components_layer0, 1);
        assert_eq!(all.degree_histogram[0], vec![0, 2, 1]);
    }

    #[test]
    fn complete_graph_stats() {
        let n = 5;
        let params = HnswParams::with_m(4);
        let links = (0..n)
            .map(|i| vec![(0..n).filter(|&j| j != i).collect::<Vec<_>>()])
            .collect();
        let idx = HnswIndex::from_parts(
            params,
            1,
            (0..n).map(|i| i as f64).collect(),
            vec![Some(0); n],
            links,
            Some(0),
            (0..n).collect(),
            0,
        )
        .unwrap();
        assert_eq!(idx.graph_stats(64, 1).avg_path_length_layer0, 1.0);
    }

    #[test]
    fn single_node_stats() {
        let mut idx = HnswIndex::new(HnswParams::default(), 1).unwrap();
        idx.insert(0, &[1.0]).unwrap();
        let s = idx.graph_stats(64, 0);
        assert_eq!(s.avg_path_length_layer0, 0.0);
        assert_eq!(s.connected_components_layer0, 1);
    }

    #[test]
    fn from_parts_rejects_broken_graphs() {
        let params = HnswParams::with_m(2);
        // edge to a node that is absent
        let r = HnswIndex::from_parts(
            params,
            1,
            vec![0.0, 1.0],
            vec![Some(0), None],
            vec![vec![vec![1]], vec![]],
            Some(0),
            vec![0],
            0,
        );
        assert!(matches!(r, Err(Error::Invariant(_))));
        // degree above M0 = 4
        let r = HnswIndex::from_parts(
            params,
            1,
            (0..6).map(f64::from).collect(),
            vec![Some(0); 6],
            (0..6)
                .map(|i| vec![(0..6).filter(|&j| j != i).collect::<Vec<_>>()])
                .collect(),
            Some(0),
            (0..6).collect(),
            0,
        );
        assert!(matches!(r, Err(Error::Invariant(_))));
    }

    #[test]
    fn level_distribution_matches_geometric_law() {
        // P(level >= 1) = exp(-1/mL) = 1/M for mL = 1/ln M
        let n = 50_000usize;
        let mut idx = HnswIndex::new(HnswParams::default(), 1).unwrap();
        let mut above = 0usize;
        for _ in 0..n {
            if idx.draw_level() >= 1 {
                above += 1;
            }
        }
        let p = (-1.0 / idx.params.ml).exp();
        let expected = p * n as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((above as f64 - expected).abs() <= 3.0 * sigma, "{above} vs {expected}");
    }
}
