//! Fit an honest causal forest to rows with a known heterogeneous effect.
//!
//! The effect is 0.3 when the first feature is positive and -0.1 otherwise;
//! the second feature is noise. The fitted model is saved and reloaded.

use std::sync::Arc;

use adaptive_growth::blocks::{Arm, TrainingSet};
use adaptive_growth::grf::{fit_forest, FittedModel, ForestParams};
use adaptive_growth::ingest::{FeatureRegistry, Provenance};
use adaptive_growth::{CountyId, DayIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut registry = FeatureRegistry::new();
    registry.push("signal", Provenance::Derived)?;
    registry.push("noise", Provenance::Derived)?;
    let county = CountyId::new("01001", "AL")?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows = (0..4000)
        .map(|i| {
            let x: Vec<f64> = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let arm = if i % 2 == 0 { Arm::Treated } else { Arm::Control };
            let effect = if x[0] > 0.0 { 0.3 } else { -0.1 };
            let y = 0.05 * x[1] + arm.indicator() * effect + rng.random_range(-0.05..0.05);
            (x, y, arm, DayIndex::from_offset(i), county.clone())
        })
        .collect();
    let ts = TrainingSet::from_rows(DayIndex(4000), Arc::new(registry), rows)?;

    let params = ForestParams { num_trees: 200, ..ForestParams::default() };
    let forest = fit_forest(&ts, &params)?;
    let depth: usize = forest.trees.iter().map(|t| t.depth()).max().unwrap_or(0);
    println!("{} trees, deepest {depth}", forest.trees.len());

    println!("{:>7} {:>9} {:>9} {:>8}", "signal", "truth", "r_hat", "support");
    for k in -4..=4 {
        let x0 = k as f64 / 5.0 + 0.01;
        let p = forest.predict(&ts, &[x0, 0.0])?;
        let truth = if x0 > 0.0 { 0.3 } else { -0.1 };
        println!("{x0:>7.2} {truth:>9.3} {:>9.4} {:>8}", p.r_hat, p.support);
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.json");
    FittedModel::new(ts, forest).save(&path)?;
    let model = FittedModel::load(&path)?;
    let again = model.forest.predict(&model.training, &[0.5, 0.0])?;
    println!("reloaded model predicts {:.4} at signal 0.5", again.r_hat);
    Ok(())
}
