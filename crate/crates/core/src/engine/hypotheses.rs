//! Structured checks of the model hypotheses: normalization, the two
//! locality properties, the Malus marginal, plus two diagnostics that are
//! deliberately not required (outcome-independence factorization and the
//! deterministic latent form).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::geometry::UnitVector;
use crate::measures::VectorPairMeasure;
use crate::models::{Outcome, OutcomeModel};
use crate::{Error, Resolution, Result};

#[derive(Debug, Clone)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    pub max_deviation: f64,
    /// Whether the check is part of the hypothesis set that the bounds
    /// rest on. Diagnostics have `required = false`.
    pub required: bool,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    /// True when every required check passed.
    pub fn hypotheses_pass(&self) -> bool {
        self.checks.iter().filter(|c| c.required).all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HypothesisOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for HypothesisOptions {
    fn default() -> Self {
        HypothesisOptions {
            samples: 10_000,
            seed: 0x1e99e77,
        }
    }
}

const EXACT_TOL: f64 = 1e-12;

/// Runs all hypothesis checks for a hidden-variable model over a measure.
///
/// Errors for the quantum reference model, which has no hidden pair to
/// check.
pub fn check_hypotheses(
    model: &OutcomeModel,
    measure: &VectorPairMeasure,
    opts: &HypothesisOptions,
) -> Result<HypothesisReport> {
    if !model.is_hidden_variable() {
        return Err(Error::NotHiddenVariableModel);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();

    let mut rand_unit = |rng: &mut ChaCha12Rng| {
        UnitVector::from_uniforms(rng.random::<f64>(), rng.random::<f64>())
    };

    // Joint probabilities sum to one everywhere.
    let mut norm_dev: f64 = 0.0;
    for _ in 0..opts.samples {
        let u = rand_unit(&mut rng);
        let v = rand_unit(&mut rng);
        let a = rand_unit(&mut rng);
        let b = rand_unit(&mut rng);
        let total: f64 = Outcome::BOTH
            .iter()
            .flat_map(|&s| Outcome::BOTH.iter().map(move |&t| (s, t)))
            .map(|(s, t)| model.joint_prob(s, t, &u, &v, &a, &b))
            .sum();
        norm_dev = norm_dev.max((total - 1.0).abs());
    }
    checks.push(HypothesisCheck {
        name: "normalization",
        passed: norm_dev < EXACT_TOL,
        max_deviation: norm_dev,
        required: true,
        note: "joint probabilities sum to one".to_string(),
    });

    // Locality of the measure is structural: the sampling and quadrature
    // interfaces take no detector arguments. Cross-check that sampled
    // pair statistics agree with the quadrature view of the same measure.
    let res = Resolution::new(32, 96, 32);
    let moments_quad = [
        measure.integrate_pairs(&res, |u, v| u.dot(&v)),
        measure.integrate_pairs(&res, |u, _| u.z()),
        measure.integrate_pairs(&res, |_, v| v.z()),
        measure.integrate_pairs(&res, |u, _| u.z() * u.z()),
    ];
    let n_mc = 200_000u64;
    let mut sums = [0.0f64; 4];
    let mut sq = [0.0f64; 4];
    for _ in 0..n_mc {
        let (u, v) = measure.sample_pair(&mut rng);
        let vals = [u.dot(&v), u.z(), v.z(), u.z() * u.z()];
        for (k, val) in vals.iter().enumerate() {
            sums[k] += val;
            sq[k] += val * val;
        }
    }
    let mut measure_dev: f64 = 0.0;
    let mut measure_ok = true;
    for k in 0..4 {
        let mean = sums[k] / n_mc as f64;
        let var = (sq[k] / n_mc as f64 - mean * mean).max(0.0);
        let stderr = (var / n_mc as f64).sqrt();
        let dev = (mean - moments_quad[k]).abs();
        measure_dev = measure_dev.max(dev);
        // Quadrature error is far below the Monte Carlo band here.
        if dev > 5.0 * stderr + 1e-4 {
            measure_ok = false;
        }
    }
    checks.push(HypothesisCheck {
        name: "measure_locality",
        passed: measure_ok,
        max_deviation: measure_dev,
        required: true,
        note: "setting-free by construction; sampler consistent with quadrature view".to_string(),
    });

    // Remote-setting invariance of the single-arm marginals.
    let mut remote_dev: f64 = 0.0;
    let scan: Vec<UnitVector> = (0..32)
        .map(|k| {
            let t = (k as f64 + 0.5) / 32.0;
            UnitVector::from_uniforms(t, ((k * 7) % 32) as f64 / 32.0)
        })
        .collect();
    for _ in 0..(opts.samples / 32).max(32) {
        let u = rand_unit(&mut rng);
        let v = rand_unit(&mut rng);
        let a = rand_unit(&mut rng);
        let b = rand_unit(&mut rng);
        for s in Outcome::BOTH {
            let left_ref: f64 = Outcome::BOTH
                .iter()
                .map(|&t| model.joint_prob(s, t, &u, &v, &a, &scan[0]))
                .sum();
            let right_ref: f64 = Outcome::BOTH
                .iter()
                .map(|&t| model.joint_prob(t, s, &u, &v, &scan[0], &b))
                .sum();
            for remote in &scan[1..] {
                let left: f64 = Outcome::BOTH
                    .iter()
                    .map(|&t| model.joint_prob(s, t, &u, &v, &a, remote))
                    .sum();
                let right: f64 = Outcome::BOTH
                    .iter()
                    .map(|&t| model.joint_prob(t, s, &u, &v, remote, &b))
                    .sum();
                remote_dev = remote_dev.max((left - left_ref).abs());
                remote_dev = remote_dev.max((right - right_ref).abs());
            }
        }
    }
    checks.push(HypothesisCheck {
        name: "marginal_locality",
        passed: remote_dev < EXACT_TOL,
        max_deviation: remote_dev,
        required: true,
        note: "single-arm marginals ignore the remote setting".to_string(),
    });

    // Malus marginal in both arms.
    let mut malus_dev: f64 = 0.0;
    for _ in 0..opts.samples {
        let u = rand_unit(&mut rng);
        let v = rand_unit(&mut rng);
        let a = rand_unit(&mut rng);
        let b = rand_unit(&mut rng);
        for s in Outcome::BOTH {
            let left: f64 = Outcome::BOTH
                .iter()
                .map(|&t| model.joint_prob(s, t, &u, &v, &a, &b))
                .sum();
            malus_dev = malus_dev.max((left - 0.5 * (1.0 + s.value() * u.dot(&a))).abs());
            let right: f64 = Outcome::BOTH
                .iter()
                .map(|&t| model.joint_prob(t, s, &u, &v, &a, &b))
                .sum();
            malus_dev = malus_dev.max((right - 0.5 * (1.0 + s.value() * v.dot(&b))).abs());
        }
    }
    checks.push(HypothesisCheck {
        name: "malus",
        passed: malus_dev < EXACT_TOL,
        max_deviation: malus_dev,
        required: true,
        note: "marginal equals (1 + sigma u.a)/2".to_string(),
    });

    // Outcome-independence factorization, a diagnostic only: the bounds
    // hold with or without it.
    let mut oi_dev: f64 = 0.0;
    let grid = 17;
    for i in 0..grid {
        for j in 0..grid {
            let tu = std::f64::consts::PI * (i as f64 + 0.5) / grid as f64;
            let tv = std::f64::consts::PI * (j as f64 + 0.5) / grid as f64;
            oi_dev = oi_dev.max(factorization_deviation_xy(model, tu.cos(), tv.cos()));
        }
    }
    oi_dev = oi_dev.max(factorization_deviation_xy(model, 0.0, 0.0));
    for _ in 0..opts.samples {
        let x = rng.random::<f64>() * 2.0 - 1.0;
        let y = rng.random::<f64>() * 2.0 - 1.0;
        oi_dev = oi_dev.max(factorization_deviation_xy(model, x, y));
    }
    checks.push(HypothesisCheck {
        name: "outcome_independence",
        passed: oi_dev < EXACT_TOL,
        max_deviation: oi_dev,
        required: false,
        note: "not required for the two-plane bound".to_string(),
    });

    // Deterministic latent form, when the model exposes one.
    if model.has_latent_form() {
        let mut det_ok = true;
        let mut det_dev: f64 = 0.0;
        for _ in 0..opts.samples {
            let u = rand_unit(&mut rng);
            let v = rand_unit(&mut rng);
            let a = rand_unit(&mut rng);
            let b = rand_unit(&mut rng);
            let l1 = rng.random::<f64>();
            let l2 = rng.random::<f64>();
            let mut total = 0.0;
            for s in Outcome::BOTH {
                for t in Outcome::BOTH {
                    let val =
                        crate::models::deterministic_malus_joint(s, t, &u, &v, l1, l2, &a, &b);
                    if val != 0.0 && val != 1.0 {
                        det_ok = false;
                    }
                    total += val;
                }
            }
            det_dev = det_dev.max((total - 1.0).abs());
        }
        checks.push(HypothesisCheck {
            name: "determinism",
            passed: det_ok && det_dev < EXACT_TOL,
            max_deviation: det_dev,
            required: false,
            note: "latent form is an indicator selecting exactly one outcome pair".to_string(),
        });
    }

    Ok(HypothesisReport { checks })
}

fn factorization_deviation_xy(model: &OutcomeModel, x: f64, y: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for s in Outcome::BOTH {
        for t in Outcome::BOTH {
            let joint = model.joint_xy(s, t, x, y, 0.0);
            let left: f64 = Outcome::BOTH
                .iter()
                .map(|&tt| model.joint_xy(s, tt, x, y, 0.0))
                .sum();
            let right: f64 = Outcome::BOTH
                .iter()
                .map(|&ss| model.joint_xy(ss, t, x, y, 0.0))
                .sum();
            worst = worst.max((joint - left * right).abs());
        }
    }
    worst
}
