//! Finite-sample EPR-Bohm experiments: outcome streams, coincidence
//! counts, and estimators with statistical errors.
//!
//! Each setting pair runs on its own generator stream derived from
//! `(seed, setting index)`, so adding settings never perturbs earlier
//! columns and tables are reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::geometry::UnitVector;
use crate::measures::VectorPairMeasure;
use crate::models::{Outcome, OutcomeModel};
use crate::{Error, Result};

/// Count index order: `(+,+), (+,-), (-,+), (-,-)`.
pub const OUTCOME_ORDER: [(Outcome, Outcome); 4] = [
    (Outcome::Plus, Outcome::Plus),
    (Outcome::Plus, Outcome::Minus),
    (Outcome::Minus, Outcome::Plus),
    (Outcome::Minus, Outcome::Minus),
];

/// Coincidence counts per setting pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceTable {
    pub settings: Vec<(UnitVector, UnitVector)>,
    /// `counts[setting][k]` in [`OUTCOME_ORDER`] order.
    pub counts: Vec<[u64; 4]>,
    pub n: u64,
    pub seed: u64,
}

/// Which detector arm an estimator refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Left,
    Right,
}

/// Runs `n` trials per setting pair: draw `(u, v)` from the measure, then
/// the outcome pair from the model joint by inverse transform on the
/// fixed outcome order.
pub fn run_experiment(
    model: &OutcomeModel,
    measure: &VectorPairMeasure,
    settings: &[(UnitVector, UnitVector)],
    n: u64,
    seed: u64,
) -> Result<CoincidenceTable> {
    if settings.is_empty() {
        return Err(Error::invalid("run_experiment needs at least one setting pair"));
    }
    if n < 1 {
        return Err(Error::invalid("run_experiment needs n >= 1 trials"));
    }
    let counts: Vec<[u64; 4]> = settings
        .par_iter()
        .enumerate()
        .map(|(idx, (a, b))| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let mut col = [0u64; 4];
            for _ in 0..n {
                let (u, v) = measure.sample_pair(&mut rng);
                let r = rng.random::<f64>();
                let (s, t) = model.sample_outcomes(&u, &v, a, b, r);
                let k = OUTCOME_ORDER
                    .iter()
                    .position(|&(os, ot)| os == s && ot == t)
                    .unwrap();
                col[k] += 1;
            }
            col
        })
        .collect();
    Ok(CoincidenceTable {
        settings: settings.to_vec(),
        counts,
        n,
        seed,
    })
}

/// Empirical correlator and its standard error for one setting column.
pub fn estimate_correlator(table: &CoincidenceTable, setting: usize) -> Result<(f64, f64)> {
    let col = column(table, setting)?;
    let n = table.n as f64;
    let c = OUTCOME_ORDER
        .iter()
        .zip(col)
        .map(|(&(s, t), k)| s.value() * t.value() * *k as f64)
        .sum::<f64>()
        / n;
    // The product sigma tau is +/-1, so the sample variance is n(1-c^2)/(n-1).
    let var = (1.0 - c * c).max(0.0) * n / (n - 1.0);
    Ok((c, (var / n).sqrt()))
}

/// Empirical single-arm average and its standard error.
pub fn singles_average(table: &CoincidenceTable, setting: usize, arm: Arm) -> Result<(f64, f64)> {
    let col = column(table, setting)?;
    let n = table.n as f64;
    let pick = |s: Outcome, t: Outcome| match arm {
        Arm::Left => s.value(),
        Arm::Right => t.value(),
    };
    let mean = OUTCOME_ORDER
        .iter()
        .zip(col)
        .map(|(&(s, t), k)| pick(s, t) * *k as f64)
        .sum::<f64>()
        / n;
    let var = (1.0 - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

fn column<'t>(table: &'t CoincidenceTable, setting: usize) -> Result<&'t [u64; 4]> {
    if table.n < 2 {
        return Err(Error::invalid("estimators need n >= 2 trials"));
    }
    table
        .counts
        .get(setting)
        .ok_or_else(|| Error::invalid(format!("no setting column {setting}")))
}
