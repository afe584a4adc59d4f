//! Insertion-order plans: random, by local intrinsic dimensionality, and
//! category-sequenced.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dimest::LidProfile;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Ids in ascending order (or an explicit list loaded from disk).
    Identity,
    Random,
    LidAsc,
    LidDesc,
    Category,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Identity => "identity",
            Strategy::Random => "random",
            Strategy::LidAsc => "lid_asc",
            Strategy::LidDesc => "lid_desc",
            Strategy::Category => "category",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "identity" => Ok(Strategy::Identity),
            "random" => Ok(Strategy::Random),
            "lid_asc" | "asc" => Ok(Strategy::LidAsc),
            "lid_desc" | "desc" => Ok(Strategy::LidDesc),
            "category" => Ok(Strategy::Category),
            other => Err(Error::invalid(format!("unknown order strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderDetail {
    /// How equal keys are ordered.
    pub tie_break: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_sequence: Option<Vec<String>>,
    /// Hash of the LID profile's dataset, for LID orders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lid_dataset_hash: Option<String>,
}

/// A permutation of dataset ids with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderPlan {
    pub ids: Vec<usize>,
    pub strategy: Strategy,
    pub seed: u64,
    pub detail: OrderDetail,
}

fn check_permutation(ids: &[usize], n: usize) -> Result<()> {
    if ids.len() != n {
        return Err(Error::NotPermutation(format!(
            "{} ids for a dataset of {n}",
            ids.len()
        )));
    }
    let mut seen = vec![false; n];
    for &id in ids {
        if id >= n {
            return Err(Error::NotPermutation(format!("id {id} out of range 0..{n}")));
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::NotPermutation(format!("id {id} repeated")));
        }
    }
    Ok(())
}

impl OrderPlan {
    pub fn identity(n: usize) -> Self {
        OrderPlan {
            ids: (0..n).collect(),
            strategy: Strategy::Identity,
            seed: 0,
            detail: OrderDetail {
                tie_break: "none".into(),
                ..OrderDetail::default()
            },
        }
    }

    /// Explicit order; must be a permutation of `0..ids.len()`.
    pub fn from_ids(ids: Vec<usize>) -> Result<Self> {
        check_permutation(&ids, ids.len())?;
        Ok(OrderPlan {
            ids,
            ..OrderPlan::identity(0)
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Fails unless `ids` is a permutation of `0..n`.
    pub fn verify_for(&self, n: usize) -> Result<()> {
        check_permutation(&self.ids, n)
    }

    /// Short label such as `lid_desc` or `category:b-a-c`.
    pub fn label(&self) -> String {
        match &self.detail.category_sequence {
            Some(seq) if self.strategy == Strategy::Category => {
                format!("category:{}", seq.join("-"))
            }
            _ => self.strategy.to_string(),
        }
    }
}

/// Uniform shuffle of `ids`, deterministic per seed.
pub fn order_random(ids: &[usize], seed: u64) -> Result<OrderPlan> {
    if ids.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = ids.to_vec();
    out.shuffle(&mut seed::rng(seed::derive(seed, "order.random")));
    Ok(OrderPlan {
        ids: out,
        strategy: Strategy::Random,
        seed,
        detail: OrderDetail {
            tie_break: "none".into(),
            ..OrderDetail::default()
        },
    })
}

/// Stable sort of ids by LID. Equal values (including `+∞` sentinels) keep
/// ascending id order; `Desc` puts sentinels first.
pub fn order_by_lid(profile: &LidProfile, direction: Direction) -> Result<OrderPlan> {
    order_by_lid_values(&profile.lid, direction).map(|mut plan| {
        plan.detail.lid_dataset_hash = Some(profile.dataset_hash.clone());
        plan
    })
}

pub fn order_by_lid_values(lid: &[f64], direction: Direction) -> Result<OrderPlan> {
    if lid.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(id) = lid.iter().position(|v| v.is_nan()) {
        return Err(Error::invalid(format!("LID profile has no value for id {id}")));
    }
    let mut ids: Vec<usize> = (0..lid.len()).collect();
    match direction {
        Direction::Asc => ids.sort_by(|&a, &b| lid[a].total_cmp(&lid[b]).then(a.cmp(&b))),
        Direction::Desc => ids.sort_by(|&a, &b| lid[b].total_cmp(&lid[a]).then(a.cmp(&b))),
    }
    Ok(OrderPlan {
        ids,
        strategy: match direction {
            Direction::Asc => Strategy::LidAsc,
            Direction::Desc => Strategy::LidDesc,
        },
        seed: 0,
        detail: OrderDetail {
            tie_break: "ascending id".into(),
            ..OrderDetail::default()
        },
    })
}

/// Concatenates per-category blocks in `sequence` order. Each block is
/// shuffled with a substream keyed by the category name, so a category's
/// internal order does not depend on where it sits in the sequence.
pub fn order_by_category(categories: &[String], sequence: &[String], seed: u64) -> Result<OrderPlan> {
    if categories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut blocks: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (id, c) in categories.iter().enumerate() {
        blocks.entry(c.as_str()).or_default().push(id);
    }
    let listed: BTreeSet<&str> = sequence.iter().map(String::as_str).collect();
    if listed.len() != sequence.len() {
        return Err(Error::Category(format!(
            "sequence repeats a category: {}",
            sequence.join("-")
        )));
    }
    let missing: Vec<&str> = blocks.keys().filter(|c| !listed.contains(*c)).copied().collect();
    let unknown: Vec<&str> = listed.iter().filter(|c| !blocks.contains_key(*c)).copied().collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(Error::Category(format!(
            "sequence must list every category once (missing: [{}], unknown: [{}])",
            missing.join(", "),
            unknown.join(", ")
        )));
    }
    let mut ids = Vec::with_capacity(categories.len());
    for c in sequence {
        let mut block = blocks.remove(c.as_str()).unwrap_or_default();
        let label = format!("order.category.{c}");
        block.shuffle(&mut seed::rng(seed::derive(seed, &label)));
        ids.extend(block);
    }
    Ok(OrderPlan {
        ids,
        strategy: Strategy::Category,
        seed,
        detail: OrderDetail {
            tie_break: "shuffled within category".into(),
            category_sequence: Some(sequence.to_vec()),
            lid_dataset_hash: None,
        },
    })
}

/// Distinct labels in first-appearance order.
pub fn distinct_categories(categories: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    categories
        .iter()
        .filter(|c| seen.insert(c.as_str()))
        .cloned()
        .collect()
}

/// All orderings of `items`, lexicographic by position.
pub fn all_sequences(items: &[String]) -> Vec<Vec<String>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in all_sequences(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn random_single_is_identity() {
        assert_eq!(order_random(&[0], 5).unwrap().ids, vec![0]);
        assert!(order_random(&[], 5).is_err());
    }

    #[test]
    fn random_is_seeded() {
        let ids: Vec<usize> = (0..200).collect();
        let a = order_random(&ids, 1).unwrap();
        assert_eq!(a, order_random(&ids, 1).unwrap());
        assert_ne!(a.ids, order_random(&ids, 2).unwrap().ids);
        a.verify_for(200).unwrap();
    }

    #[test]
    fn lid_desc_hand_case() {
        let plan = order_by_lid_values(&[2.0, 5.0, 3.5], Direction::Desc).unwrap();
        assert_eq!(plan.ids, vec![1, 2, 0]);
        assert_eq!(plan.strategy, Strategy::LidDesc);
    }

    #[test]
    fn lid_asc_reverses_desc_when_distinct() {
        let lid = [0.3, 9.0, 1.5, 4.0, 2.2];
        let mut asc = order_by_lid_values(&lid, Direction::Asc).unwrap().ids;
        asc.reverse();
        assert_eq!(asc, order_by_lid_values(&lid, Direction::Desc).unwrap().ids);
    }

    #[test]
    fn lid_ties_and_sentinels() {
        let lid = [3.0, f64::INFINITY, 3.0, 1.0, f64::INFINITY];
        assert_eq!(
            order_by_lid_values(&lid, Direction::Desc).unwrap().ids,
            vec![1, 4, 0, 2, 3]
        );
        assert_eq!(
            order_by_lid_values(&lid, Direction::Asc).unwrap().ids,
            vec![3, 0, 2, 1, 4]
        );
        assert!(order_by_lid_values(&[1.0, f64::NAN], Direction::Asc).is_err());
    }

    #[test]
    fn category_blocks_follow_sequence() {
        let cats = labels(&["A", "A", "B"]);
        let plan = order_by_category(&cats, &labels(&["B", "A"]), 3).unwrap();
        assert_eq!(plan.ids[0], 2);
        let mut rest = plan.ids[1..].to_vec();
        rest.sort_unstable();
        assert_eq!(rest, vec![0, 1]);
        assert_eq!(plan.label(), "category:B-A");
    }

    #[test]
    fn category_sequence_errors() {
        let cats = labels(&["A", "B", "B"]);
        assert!(order_by_category(&cats, &labels(&["A"]), 0).is_err());
        assert!(order_by_category(&cats, &labels(&["A", "B", "A"]), 0).is_err());
        assert!(order_by_category(&cats, &labels(&["A", "B", "C"]), 0).is_err());
    }

    #[test]
    fn single_category_is_a_shuffle() {
        let cats = vec!["x".to_string(); 100];
        let plan = order_by_category(&cats, &labels(&["x"]), 8).unwrap();
        plan.verify_for(100).unwrap();
        assert_ne!(plan.ids, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn twelve_category_sequence() {
        let names: Vec<String> = (1..=12).map(|i| i.to_string()).collect();
        let cats: Vec<String> = (0..240).map(|i| names[i % 12].clone()).collect();
        let plan = order_by_category(&cats, &names, 0).unwrap();
        assert_eq!(plan.label(), "category:1-2-3-4-5-6-7-8-9-10-11-12");
        let along: Vec<&str> = plan.ids.iter().map(|&i| cats[i].as_str()).collect();
        // non-interleaved: each label forms one contiguous run
        let mut runs = along.clone();
        runs.dedup();
        assert_eq!(runs.len(), 12);
    }

    #[test]
    fn sequences_enumerated() {
        let seqs = all_sequences(&labels(&["a", "b", "c"]));
        assert_eq!(seqs.len(), 6);
        assert_eq!(seqs[0], labels(&["a", "b", "c"]));
        assert_eq!(seqs[5], labels(&["c", "b", "a"]));
    }

    #[test]
    fn from_ids_checks_permutation() {
        assert!(OrderPlan::from_ids(vec![1, 0, 2]).is_ok());
        assert!(OrderPlan::from_ids(vec![1, 1, 2]).is_err());
        assert!(OrderPlan::from_ids(vec![0, 3]).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn plans_are_permutations(
                lid in prop::collection::vec(prop_oneof![0.1..50.0f64, Just(f64::INFINITY), Just(2.0)], 1..200),
                seed in any::<u64>(),
            ) {
                let n = lid.len();
                for dir in [Direction::Asc, Direction::Desc] {
                    let a = order_by_lid_values(&lid, dir).unwrap();
                    a.verify_for(n).unwrap();
                    prop_assert_eq!(&a, &order_by_lid_values(&lid, dir).unwrap());
                }
                let ids: Vec<usize> = (0..n).collect();
                order_random(&ids, seed).unwrap().verify_for(n).unwrap();
                let cats: Vec<String> = (0..n).map(|i| format!("c{}", i % 3)).collect();
                let seq = distinct_categories(&cats);
                let plan = order_by_category(&cats, &seq, seed).unwrap();
                plan.verify_for(n).unwrap();
                let mut runs: Vec<&str> = plan.ids.iter().map(|&i| cats[i].as_str()).collect();
                runs.dedup();
                prop_assert_eq!(runs.len(), seq.len());
            }
        }
    }
}
