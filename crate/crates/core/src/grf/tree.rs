use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::{improves, node_tau, pseudo_outcome, scan_feature, NodeStats};
use crate::blocks::{Arm, TrainingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Honest-half training rows that fall in this leaf.
    Leaf { rows: Vec<u32> },
}

/// One honest causal tree; nodes live in an arena rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Rows used to choose splits.
    pub split_rows: Vec<u32>,
    /// Rows used to populate leaves.
    pub honest_rows: Vec<u32>,
}

impl Tree {
    /// Index of the leaf reached by `x`.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn leaf_rows(&self, x: &[f64]) -> &[u32] {
        match &self.nodes[self.leaf_of(x)] {
            Node::Leaf { rows } => rows,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn is_split(&self) -> bool {
        matches!(self.nodes[0], Node::Split { .. })
    }

    /// Drops `rows` down the tree and records them in the leaves they reach.
    pub(crate) fn populate(&mut self, ts: &TrainingSet, rows: &[u32]) {
        for &r in rows {
            let leaf = self.leaf_of(ts.features(r as usize));
            if let Node::Leaf { rows } = &mut self.nodes[leaf] {
                rows.push(r);
            }
        }
    }
}

/// Tree growth settings, resolved against the training set.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowSettings {
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

/// Row order of every feature over a whole training set, ties by row index.
pub(crate) struct Presorted(Vec<Vec<u32>>);

impl Presorted {
    pub(crate) fn new(ts: &TrainingSet) -> Self {
        let n = ts.len() as u32;
        Self(
            (0..ts.num_features())
                .map(|j| {
                    let mut o: Vec<u32> = (0..n).collect();
                    o.sort_by(|&a, &b| {
                        ts.feature(a as usize, j)
                            .total_cmp(&ts.feature(b as usize, j))
                            .then(a.cmp(&b))
                    });
                    o
                })
                .collect(),
        )
    }
}

/// Grows the split structure of a tree on `rows` (sorted ascending; leaves
/// left empty).
///
/// Every feature keeps its own copy of the node's rows sorted by that
/// feature; a split stably partitions each copy, so no node re-sorts.
pub(crate) fn grow<R: Rng>(
    ts: &TrainingSet,
    presorted: &Presorted,
    rows: &[u32],
    settings: GrowSettings,
    rng: &mut R,
) -> Vec<Node> {
    debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
    let m = ts.num_features();
    let n = rows.len();
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|j| rows.iter().map(|&r| ts.feature(r as usize, j)).collect())
        .collect();
    // local index of each training row, or MAX when the row is not in `rows`
    let mut local = vec![u32::MAX; ts.len()];
    for (i, &r) in rows.iter().enumerate() {
        local[r as usize] = i as u32;
    }
    let order: Vec<Vec<u32>> = presorted
        .0
        .iter()
        .map(|global| {
            global
                .iter()
                .map(|&r| local[r as usize])
                .filter(|&l| l != u32::MAX)
                .collect()
        })
        .collect();
    let mut g = Grower {
        outcomes: rows.iter().map(|&r| ts.outcome(r as usize)).collect(),
        treated: rows
            .iter()
            .map(|&r| ts.arm(r as usize) == Arm::Treated)
            .collect(),
        columns,
        order,
        rho: vec![0.0; n],
        goes_left: vec![false; n],
        scratch: Vec::with_capacity(n),
        node_y: Vec::with_capacity(n),
        node_w: Vec::with_capacity(n),
        settings,
        nodes: Vec::new(),
    };
    g.grow(0, n, 0, rng);
    g.nodes
}

struct Grower {
    columns: Vec<Vec<f64>>,
    outcomes: Vec<f64>,
    treated: Vec<bool>,
    order: Vec<Vec<u32>>,
    rho: Vec<f64>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    node_y: Vec<f64>,
    node_w: Vec<f64>,
    settings: GrowSettings,
    nodes: Vec<Node>,
}

impl Grower {
    fn leaf(&mut self) -> usize {
        self.nodes.push(Node::Leaf { rows: Vec::new() });
        self.nodes.len() - 1
    }

    fn grow<R: Rng>(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut R) -> usize {
        let m = self.columns.len();
        let n = hi - lo;
        let n1 = self.order.first().map_or(0, |o| {
            o[lo..hi].iter().filter(|&&r| self.treated[r as usize]).count()
        });
        let min_leaf = self.settings.min_leaf;
        if m == 0
            || n1 < 2 * min_leaf
            || n - n1 < 2 * min_leaf
            || self.settings.max_depth.is_some_and(|d| depth >= d)
        {
            return self.leaf();
        }

        self.node_y.clear();
        self.node_w.clear();
        for &r in &self.order[0][lo..hi] {
            self.node_y.push(self.outcomes[r as usize]);
            self.node_w.push(if self.treated[r as usize] { 1.0 } else { 0.0 });
        }
        let stats: NodeStats = match node_tau(&self.node_y, &self.node_w) {
            Ok(s) => s,
            Err(_) => return self.leaf(),
        };
        let mut sum = 0.0;
        for (k, &r) in self.order[0][lo..hi].iter().enumerate() {
            let rho = pseudo_outcome(self.node_y[k], self.node_w[k], &stats);
            self.rho[r as usize] = rho;
            sum += rho;
        }

        let mut candidates = index::sample(rng, m, self.settings.mtry.min(m)).into_vec();
        candidates.sort_unstable();
        let mut best: Option<(usize, f64, f64)> = None;
        for &j in &candidates {
            let col = &self.columns[j];
            let sorted = self.order[j][lo..hi].iter().map(|&r| {
                let r = r as usize;
                (col[r], self.rho[r], self.treated[r])
            });
            if let Some((crit, thr)) = scan_feature(sorted, (sum, n, n1), min_leaf) {
                if best.is_none_or(|(_, _, b)| improves(crit, b)) {
                    best = Some((j, thr, crit));
                }
            }
        }
        let Some((feature, threshold, crit)) = best else {
            return self.leaf();
        };
        if crit <= 0.0 {
            return self.leaf();
        }

        let col = &self.columns[feature];
        let mut n_left = 0;
        for &r in &self.order[0][lo..hi] {
            let left = col[r as usize] <= threshold;
            self.goes_left[r as usize] = left;
            n_left += usize::from(left);
        }
        for j in 0..m {
            self.scratch.clear();
            let seg = &mut self.order[j][lo..hi];
            let mut w = 0;
            for k in 0..seg.len() {
                let r = seg[k];
                if self.goes_left[r as usize] {
                    seg[w] = r;
                    w += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
        }

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { rows: Vec::new() });
        let left = self.grow(lo, lo + n_left, depth + 1, rng);
        let right = self.grow(lo + n_left, hi, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}
