//! Node estimates, pseudo-outcomes and the gradient-based split search.

use crate::error::{Error, Result};

/// Sample statistics of a node under the local linear moment condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStats {
    pub tau: f64,
    pub w_bar: f64,
    pub y_bar: f64,
    /// `(1/n) Σ (W_i - W̄)²`.
    pub a: f64,
}

/// Solves `Σ (W_i - W̄)(Y_i - Ȳ - tau (W_i - W̄)) = 0` over a node.
///
/// With a binary treatment this is the difference of arm means.
pub fn node_tau(outcomes: &[f64], treatments: &[f64]) -> Result<NodeStats> {
    let n = outcomes.len();
    if n == 0 || n != treatments.len() {
        return Err(Error::DegenerateNode(format!(
            "{n} outcomes, {} treatments",
            treatments.len()
        )));
    }
    let nf = n as f64;
    let w_bar = treatments.iter().sum::<f64>() / nf;
    let y_bar = outcomes.iter().sum::<f64>() / nf;
    let mut sww = 0.0;
    let mut swy = 0.0;
    for (&y, &w) in outcomes.iter().zip(treatments) {
        let dw = w - w_bar;
        sww += dw * dw;
        swy += dw * (y - y_bar);
    }
    if sww <= 0.0 {
        return Err(Error::DegenerateNode("node has a single treatment arm".into()));
    }
    Ok(NodeStats {
        tau: swy / sww,
        w_bar,
        y_bar,
        a: sww / nf,
    })
}

/// Influence-function pseudo-outcomes
/// `ρ_i = (W_i - W̄)(Y_i - Ȳ - tau (W_i - W̄)) / A` of a node.
pub fn pseudo_outcomes(outcomes: &[f64], treatments: &[f64], stats: &NodeStats) -> Result<Vec<f64>> {
    if stats.a <= 0.0 {
        return Err(Error::DegenerateNode("zero treatment variance".into()));
    }
    Ok(outcomes
        .iter()
        .zip(treatments)
        .map(|(&y, &w)| pseudo_outcome(y, w, stats))
        .collect())
}

#[inline]
pub(crate) fn pseudo_outcome(y: f64, w: f64, stats: &NodeStats) -> f64 {
    let dw = w - stats.w_bar;
    dw * (y - stats.y_bar - stats.tau * dw) / stats.a
}

/// An axis-aligned split: rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// `Σ_child (Σ_{i∈child} ρ_i)² / |child|`.
    pub criterion: f64,
}

/// Whether `new` beats `old` by more than summation-order noise; candidates
/// within that band count as ties and keep the earlier one.
pub(crate) fn improves(new: f64, old: f64) -> bool {
    new - old > 1e-12 * new.abs().max(old.abs())
}

/// Best threshold along one feature. `sorted` yields `(x, ρ, treated)` in
/// ascending `x`; `total` is `(Σρ, n, n_treated)` of the node.
pub(crate) fn scan_feature(
    sorted: impl Iterator<Item = (f64, f64, bool)>,
    total: (f64, usize, usize),
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let (sum, n, n1) = total;
    let mut best: Option<(f64, f64)> = None;
    let mut left_sum = 0.0;
    let mut left_n = 0;
    let mut left_n1 = 0;
    let mut prev: Option<f64> = None;
    for (x, rho, treated) in sorted {
        if let Some(px) = prev {
            if px < x {
                let right_n = n - left_n;
                let right_n1 = n1 - left_n1;
                if left_n1 >= min_leaf
                    && left_n - left_n1 >= min_leaf
                    && right_n1 >= min_leaf
                    && right_n - right_n1 >= min_leaf
                {
                    let right_sum = sum - left_sum;
                    let crit = left_sum * left_sum / left_n as f64
                        + right_sum * right_sum / right_n as f64;
                    if best.is_none_or(|(b, _)| improves(crit, b)) {
                        best = Some((crit, (px + x) / 2.0));
                    }
                }
            }
        }
        left_sum += rho;
        left_n += 1;
        left_n1 += usize::from(treated);
        prev = Some(x);
    }
    best
}

/// Searches the candidate features of a node for the split maximizing the
/// pseudo-outcome criterion, with at least `min_leaf` rows of each arm on
/// both sides. `columns[j][i]` is feature `j` of node row `i`.
///
/// Ties go to the lowest feature index, then the lowest threshold.
pub fn best_split(
    columns: &[Vec<f64>],
    outcomes: &[f64],
    treatments: &[f64],
    candidates: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let stats = node_tau(outcomes, treatments).ok()?;
    let rho = pseudo_outcomes(outcomes, treatments, &stats).ok()?;
    let n = outcomes.len();
    let n1 = treatments.iter().filter(|&&w| w > 0.5).count();
    let sum: f64 = rho.iter().sum();
    let mut candidates = candidates.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    let mut best: Option<Split> = None;
    let mut order: Vec<usize> = (0..n).collect();
    for &j in &candidates {
        let col = &columns[j];
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        let sorted = order.iter().map(|&i| (col[i], rho[i], treatments[i] > 0.5));
        if let Some((criterion, threshold)) = scan_feature(sorted, (sum, n, n1), min_leaf) {
            if best.is_none_or(|b| improves(criterion, b.criterion)) {
                best = Some(Split {
                    feature: j,
                    threshold,
                    criterion,
                });
            }
        }
    }
    best
}
