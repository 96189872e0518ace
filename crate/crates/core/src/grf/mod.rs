//! Honest causal forest over a block training set.
//!
//! Each tree draws a subsample without replacement, chooses splits on one half
//! with the pseudo-outcome criterion and fills its leaves with the other half.
//! A query's forest weights are the leaf co-membership frequencies of the
//! honest rows, and the growth rate solves the weighted moment condition.

mod split;
mod tree;

use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{Arm, TrainingSet};
use crate::error::{Error, Result};
use crate::ingest::FeatureVector;
use crate::panel::{CountyId, DayIndex};

pub use split::{best_split, node_tau, pseudo_outcomes, NodeStats, Split};
pub use tree::{Node, Tree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub num_trees: usize,
    pub subsample_fraction: f64,
    pub honesty_fraction: f64,
    /// Candidate features per split; `None` means `ceil(sqrt(m))`.
    pub mtry: Option<usize>,
    /// Minimum rows of each treatment arm in a child.
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            num_trees: 500,
            subsample_fraction: 0.5,
            honesty_fraction: 0.5,
            mtry: None,
            min_leaf: 5,
            max_depth: None,
            seed: 42,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.num_trees == 0 {
            return bad("num_trees must be positive");
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad("subsample_fraction must be in (0, 1]");
        }
        if !(self.honesty_fraction > 0.0 && self.honesty_fraction < 1.0) {
            return bad("honesty_fraction must be in (0, 1)");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be >= 1");
        }
        if self.mtry == Some(0) {
            return bad("mtry must be positive");
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be positive");
        }
        Ok(())
    }

    pub fn resolved_mtry(&self, num_features: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (num_features as f64).sqrt().ceil() as usize)
            .clamp(1, num_features.max(1))
    }
}

/// A fitted forest. Leaves reference rows of the training set it was fit on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub num_features: usize,
    pub num_rows: usize,
    pub trees: Vec<Tree>,
}

/// Per-tree RNG: one ChaCha stream per tree index under the forest seed.
fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Fits `params.num_trees` honest trees. Trees are built in parallel; each
/// has its own RNG stream, so the result does not depend on thread count.
pub fn fit_forest(ts: &TrainingSet, params: &ForestParams) -> Result<Forest> {
    params.validate()?;
    let n = ts.len();
    if ts.count(Arm::Treated) == 0 || ts.count(Arm::Control) == 0 {
        return Err(Error::Unfit(format!(
            "training set needs both arms ({} treated, {} control)",
            ts.count(Arm::Treated),
            ts.count(Arm::Control)
        )));
    }
    let m = ts.num_features();
    let settings = tree::GrowSettings {
        mtry: params.resolved_mtry(m),
        min_leaf: params.min_leaf,
        max_depth: params.max_depth,
    };
    let sub = ((params.subsample_fraction * n as f64).round() as usize).clamp(1, n);
    let split_n = ((params.honesty_fraction * sub as f64).round() as usize).min(sub);
    let presorted = tree::Presorted::new(ts);

    let trees = (0..params.num_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = tree_rng(params.seed, b);
            let drawn: Vec<u32> = index::sample(&mut rng, n, sub)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            let mut split_rows = drawn[..split_n].to_vec();
            let mut honest_rows = drawn[split_n..].to_vec();
            split_rows.sort_unstable();
            honest_rows.sort_unstable();
            let nodes = tree::grow(ts, &presorted, &split_rows, settings, &mut rng);
            let mut tree = Tree {
                nodes,
                split_rows,
                honest_rows,
            };
            // A tree whose splitting half cannot split estimates from the
            // whole subsample.
            let rows = if tree.is_split() {
                tree.honest_rows.clone()
            } else {
                let mut all = drawn;
                all.sort_unstable();
                all
            };
            tree.populate(ts, &rows);
            tree
        })
        .collect();
    Ok(Forest {
        params: params.clone(),
        num_features: m,
        num_rows: n,
        trees,
    })
}

/// Weighted moment solution at one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub r_hat: f64,
    /// Training rows with positive weight.
    pub support: usize,
}

impl Forest {
    /// Forest weights `α_i(x)` as (row, weight) pairs sorted by row. Trees whose
    /// leaf is empty are skipped, so the weights sum to one.
    pub fn weights(&self, query: &[f64]) -> Result<Vec<(u32, f64)>> {
        if query.len() != self.num_features {
            return Err(Error::InvalidArgument(format!(
                "query has {} features, forest expects {}",
                query.len(),
                self.num_features
            )));
        }
        let mut dense = vec![0.0; self.num_rows];
        let mut used = 0usize;
        for tree in &self.trees {
            let rows = tree.leaf_rows(query);
            if rows.is_empty() {
                continue;
            }
            used += 1;
            let share = 1.0 / rows.len() as f64;
            for &r in rows {
                dense[r as usize] += share;
            }
        }
        if used == 0 {
            return Err(Error::NoSupport);
        }
        let scale = 1.0 / used as f64;
        Ok(dense
            .into_iter()
            .enumerate()
            .filter(|&(_, a)| a > 0.0)
            .map(|(i, a)| (i as u32, a * scale))
            .collect())
    }

    /// `r̂ = Σ α_i (W_i - W̄_α)(Y_i - Ȳ_α) / Σ α_i (W_i - W̄_α)²`.
    pub fn predict(&self, ts: &TrainingSet, query: &[f64]) -> Result<Prediction> {
        if ts.len() != self.num_rows {
            return Err(Error::InvalidArgument(
                "training set does not match the fitted forest".into(),
            ));
        }
        let alpha = self.weights(query)?;
        let total: f64 = alpha.iter().map(|&(_, a)| a).sum();
        let (mut w_bar, mut y_bar) = (0.0, 0.0);
        for &(i, a) in &alpha {
            w_bar += a * ts.arm(i as usize).indicator();
            y_bar += a * ts.outcome(i as usize);
        }
        w_bar /= total;
        y_bar /= total;
        let (mut num, mut den) = (0.0, 0.0);
        for &(i, a) in &alpha {
            let dw = ts.arm(i as usize).indicator() - w_bar;
            num += a * dw * (ts.outcome(i as usize) - y_bar);
            den += a * dw * dw;
        }
        if den <= 0.0 {
            return Err(Error::NoSupport);
        }
        Ok(Prediction {
            r_hat: num / den,
            support: alpha.len(),
        })
    }

    /// Predictions for many queries, in input order.
    pub fn predict_many(&self, ts: &TrainingSet, queries: &[&[f64]]) -> Vec<Result<Prediction>> {
        queries.par_iter().map(|q| self.predict(ts, q)).collect()
    }
}

/// Instantaneous growth rate of one county on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub county: CountyId,
    pub day: DayIndex,
    pub r_hat: f64,
    pub num_effective_rows: f64,
}

pub fn predict_rate(
    forest: &Forest,
    ts: &TrainingSet,
    county: &CountyId,
    day: DayIndex,
    query: &FeatureVector,
) -> Result<GrowthEstimate> {
    let p = forest.predict(ts, &query.values)?;
    Ok(GrowthEstimate {
        county: county.clone(),
        day,
        r_hat: p.r_hat,
        num_effective_rows: p.support as f64,
    })
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A forest together with the training rows its leaves index into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format_version: u32,
    pub training: TrainingSet,
    pub forest: Forest,
}

impl FittedModel {
    pub fn new(training: TrainingSet, forest: Forest) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            training,
            forest,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let model: FittedModel = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::Serialization(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FeatureRegistry, Provenance};
    use rand::Rng;
    use std::sync::Arc;

    fn registry(m: usize) -> Arc<FeatureRegistry> {
        let mut r = FeatureRegistry::new();
        for j in 0..m {
            r.push(format!("x{j}"), Provenance::Derived).unwrap();
        }
        Arc::new(r)
    }

    fn county() -> CountyId {
        CountyId::new("01001", "AL").unwrap()
    }

    /// Paired rows: treated with outcome `effect(x)`, control with 0, same x.
    fn paired(n_pairs: usize, m: usize, seed: u64, effect: impl Fn(&[f64]) -> f64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for i in 0..n_pairs {
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = effect(&x);
            rows.push((x.clone(), y, Arm::Treated, DayIndex(2 * i as u32 + 1), county()));
            rows.push((x, 0.0, Arm::Control, DayIndex(2 * i as u32), county()));
        }
        TrainingSet::from_rows(DayIndex(1), registry(m), rows).unwrap()
    }

    #[test]
    fn constant_effect_everywhere() {
        let ts = paired(200, 3, 1, |_| 0.07);
        let params = ForestParams { num_trees: 20, ..Default::default() };
        let f = fit_forest(&ts, &params).unwrap();
        for q in [[0.0, 0.0, 0.0], [1.9, -1.9, 0.3], [-5.0, 5.0, 0.0]] {
            let p = f.predict(&ts, &q).unwrap();
            assert!((p.r_hat - 0.07).abs() < 1e-10, "{}", p.r_hat);
        }
    }

    #[test]
    fn weights_sum_to_one() {
        let ts = paired(300, 4, 2, |x| if x[0] > 0.0 { 0.2 } else { -0.1 });
        let f = fit_forest(&ts, &ForestParams { num_trees: 30, ..Default::default() }).unwrap();
        let w = f.weights(&[0.5, 0.0, 0.0, 0.0]).unwrap();
        let s: f64 = w.iter().map(|&(_, a)| a).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unsplit_tree_is_difference_of_means() {
        let ts = paired(40, 2, 3, |x| x[0] * 0.1 + 0.05);
        let params = ForestParams {
            num_trees: 1,
            min_leaf: 10_000,
            subsample_fraction: 1.0,
            ..Default::default()
        };
        let f = fit_forest(&ts, &params).unwrap();
        assert!(!f.trees[0].is_split());
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..ts.len() {
            match ts.arm(i) {
                Arm::Treated => {
                    s1 += ts.outcome(i);
                    n1 += 1.0
                }
                Arm::Control => {
                    s0 += ts.outcome(i);
                    n0 += 1.0
                }
            }
        }
        let p = f.predict(&ts, &[0.3, 0.3]).unwrap();
        assert!((p.r_hat - (s1 / n1 - s0 / n0)).abs() < 1e-10);
        assert_eq!(p.support, ts.len());
    }

    #[test]
    fn honesty_separates_rows() {
        let ts = paired(200, 3, 4, |x| if x[1] > 0.0 { 0.3 } else { 0.0 });
        let f = fit_forest(&ts, &ForestParams { num_trees: 10, ..Default::default() }).unwrap();
        for t in &f.trees {
            assert!(t.is_split());
            let split: std::collections::BTreeSet<u32> = t.split_rows.iter().copied().collect();
            for n in &t.nodes {
                if let Node::Leaf { rows } = n {
                    assert!(rows.iter().all(|r| !split.contains(r)));
                }
            }
            let in_leaves: usize = t
                .nodes
                .iter()
                .map(|n| match n {
                    Node::Leaf { rows } => rows.len(),
                    _ => 0,
                })
                .sum();
            assert_eq!(in_leaves, t.honest_rows.len());
        }
    }

    #[test]
    fn recovers_step_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rows = Vec::new();
        for i in 0..4000u32 {
            let x: Vec<f64> = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let treated = rng.random_bool(0.5);
            let effect = if x[0] > 0.0 { 0.2 } else { -0.1 };
            let y = if treated { effect } else { 0.0 } + 0.05 * rng.random_range(-1.0..1.0);
            let arm = if treated { Arm::Treated } else { Arm::Control };
            rows.push((x, y, arm, DayIndex(i), county()));
        }
        let ts = TrainingSet::from_rows(DayIndex(1), registry(2), rows).unwrap();
        let f = fit_forest(&ts, &ForestParams { num_trees: 100, ..Default::default() }).unwrap();
        for (q, want) in [([0.5, 0.0], 0.2), ([-0.5, 0.3], -0.1)] {
            let got = f.predict(&ts, &q).unwrap().r_hat;
            assert!((got - want).abs() < 0.03, "{q:?}: {got}");
        }
    }

    #[test]
    fn single_arm_is_unfit() {
        let rows = vec![(vec![0.0], 0.1, Arm::Treated, DayIndex(1), county())];
        let ts = TrainingSet::from_rows(DayIndex(1), registry(1), rows).unwrap();
        assert!(matches!(
            fit_forest(&ts, &ForestParams::default()),
            Err(Error::Unfit(_))
        ));
    }

    #[test]
    fn params_validation() {
        let ok = ForestParams::default();
        assert!(ok.validate().is_ok());
        assert!(ForestParams { honesty_fraction: 1.0, ..ok.clone() }.validate().is_err());
        assert!(ForestParams { subsample_fraction: 0.0, ..ok.clone() }.validate().is_err());
        assert!(ForestParams { min_leaf: 0, ..ok.clone() }.validate().is_err());
        assert_eq!(ok.resolved_mtry(10), 4);
        assert_eq!(ok.resolved_mtry(9), 3);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let ts = paired(300, 4, 5, |x| 0.1 * x[0] + if x[2] > 0.5 { 0.1 } else { 0.0 });
        let params = ForestParams { num_trees: 16, ..Default::default() };
        let fit_with = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fit_forest(&ts, &params).unwrap())
        };
        let a = fit_with(1);
        let b = fit_with(8);
        assert_eq!(a, b);
        let q = [0.2, -0.4, 0.9, 0.0];
        assert_eq!(
            a.predict(&ts, &q).unwrap().r_hat.to_bits(),
            b.predict(&ts, &q).unwrap().r_hat.to_bits()
        );
    }

    #[test]
    fn model_round_trip_is_exact() {
        let ts = paired(100, 3, 6, |x| x[0].sin() * 0.1);
        let f = fit_forest(&ts, &ForestParams { num_trees: 5, ..Default::default() }).unwrap();
        let model = FittedModel::new(ts, f);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        assert_eq!(FittedModel::load(&path).unwrap(), model);
    }
}
