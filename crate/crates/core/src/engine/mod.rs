//! The inequality chain: correlators, plane averages, the kernel
//! integrals, envelope and two-plane bounds, CHSH, and hypothesis checks.

mod bounds;
mod hypotheses;
mod kernels;

pub use bounds::{
    chsh_value, envelope_check, intermediate_bound, leggett_bound, leggett_lhs,
    max_qm_violation, qm_small_angle_threshold, qm_violation_upper_edge, sqrt_lemma_check,
    xy_plane_inequality, BoundReport, QmViolation,
};
pub use hypotheses::{check_hypotheses, HypothesisCheck, HypothesisOptions, HypothesisReport};
pub use kernels::{compute_j, compute_l, compute_r, decompose_n_delta, kernel_n, JForm, NDelta, RlForm};

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::geometry::{Frame, UnitVector};
use crate::measures::{azimuth_nodes, polar_nodes, VectorPairMeasure};
use crate::models::{Outcome, OutcomeModel};
use crate::quad::{gauss_legendre_unit, monte_carlo_mean, par_block_sum};
use crate::{Error, Resolution, Result};

/// How an observable expectation is integrated over the measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegrationMethod {
    Quadrature(Resolution),
    MonteCarlo { n: u64, seed: u64 },
}

/// A value together with a numerical error estimate: half-resolution
/// difference for quadrature, standard error for Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Where a correlator's values come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Analytic,
    Quadrature(Resolution),
    MonteCarlo { n: u64, seed: u64 },
}

/// A spin correlator `(a, b) -> [-1, 1]`.
#[derive(Clone)]
pub struct CorrelatorFn {
    eval: Arc<dyn Fn(UnitVector, UnitVector) -> f64 + Send + Sync>,
    provenance: Provenance,
}

impl std::fmt::Debug for CorrelatorFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorrelatorFn")
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl CorrelatorFn {
    pub fn analytic(f: impl Fn(UnitVector, UnitVector) -> f64 + Send + Sync + 'static) -> Self {
        CorrelatorFn {
            eval: Arc::new(f),
            provenance: Provenance::Analytic,
        }
    }

    /// The singlet-state correlator `-a.b`.
    pub fn qm_singlet() -> Self {
        CorrelatorFn::analytic(|a, b| -a.dot(&b))
    }

    /// Correlator observed when `model` is averaged over `measure`.
    pub fn from_model(
        model: &OutcomeModel,
        measure: &VectorPairMeasure,
        method: IntegrationMethod,
    ) -> Self {
        let model = model.clone();
        let measure = measure.clone();
        let eval = move |a: UnitVector, b: UnitVector| match method {
            IntegrationMethod::Quadrature(res) => {
                correlator_quadrature_value(&model, &measure, &a, &b, &res)
            }
            IntegrationMethod::MonteCarlo { n, seed } => {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let ab = a.dot(&b);
                monte_carlo_mean(
                    &mut rng,
                    n,
                    |r| measure.sample_pair(r),
                    |(u, v)| model.correlator_xy(u.dot(&a), v.dot(&b), ab),
                )
                .map(|e| e.mean)
                .unwrap_or(f64::NAN)
            }
        };
        CorrelatorFn {
            eval: Arc::new(eval),
            provenance: match method {
                IntegrationMethod::Quadrature(res) => Provenance::Quadrature(res),
                IntegrationMethod::MonteCarlo { n, seed } => Provenance::MonteCarlo { n, seed },
            },
        }
    }

    pub fn eval(&self, a: UnitVector, b: UnitVector) -> f64 {
        let c = (self.eval)(a, b);
        debug_assert!(c.abs() <= 1.0 + 1e-9, "correlator out of range: {c}");
        c
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// Conditional correlator for fixed hidden vectors:
/// `sum over outcomes of sigma tau P(sigma, tau | u, v; a, b)`.
pub fn correlator_given_uv(
    model: &OutcomeModel,
    u: &UnitVector,
    v: &UnitVector,
    a: &UnitVector,
    b: &UnitVector,
) -> f64 {
    let mut acc = 0.0;
    for sigma in Outcome::BOTH {
        for tau in Outcome::BOTH {
            acc += sigma.value() * tau.value() * model.joint_prob(sigma, tau, u, v, a, b);
        }
    }
    acc
}

/// Expectation over the measure of a function of the two projections
/// `(u.a, v.b)`.
///
/// The product kind pushes forward to two independent uniforms on
/// `[-1, 1]`; the aligned kinds stream their two-angle grid; discrete
/// tables sum their atoms.
fn measure_expectation_xy(
    measure: &VectorPairMeasure,
    a: &UnitVector,
    b: &UnitVector,
    res: &Resolution,
    g: impl Fn(f64, f64) -> f64 + Sync,
) -> f64 {
    match measure {
        VectorPairMeasure::ProductUniform => {
            let (xs, ws) = gauss_legendre_unit(res.theta);
            par_block_sum(xs.len(), |i| {
                let mut acc = 0.0;
                for (j, &y) in xs.iter().enumerate() {
                    acc += ws[j] * g(xs[i], y);
                }
                ws[i] * acc
            }) / 4.0
        }
        VectorPairMeasure::AlignedUniform { sign } => {
            let (thetas, tw) = polar_nodes(res.theta);
            let phis = azimuth_nodes(res.azimuthal);
            let wphi = 1.0 / res.azimuthal as f64;
            let s = *sign as f64;
            // u.a = sin(t) (cos(p) ax + sin(p) ay) + cos(t) az; hoist the
            // azimuthal part.
            let ta: Vec<f64> = phis
                .iter()
                .map(|p| p.cos() * a.x() + p.sin() * a.y())
                .collect();
            let tb: Vec<f64> = phis
                .iter()
                .map(|p| p.cos() * b.x() + p.sin() * b.y())
                .collect();
            par_block_sum(thetas.len(), |i| {
                let (st, ct) = thetas[i].sin_cos();
                let mut acc = 0.0;
                for j in 0..ta.len() {
                    let x = st * ta[j] + ct * a.z();
                    let y = s * (st * tb[j] + ct * b.z());
                    acc += g(x, y);
                }
                tw[i] * acc * wphi
            })
        }
        VectorPairMeasure::CustomGrid(_) => {
            // Few atoms; go through the generic pair stream.
            measure.integrate_pairs(res, |u, v| g(u.dot(a), v.dot(b)))
        }
    }
}

fn correlator_quadrature_value(
    model: &OutcomeModel,
    measure: &VectorPairMeasure,
    a: &UnitVector,
    b: &UnitVector,
    res: &Resolution,
) -> f64 {
    let ab = a.dot(b);
    measure_expectation_xy(measure, a, b, res, |x, y| model.correlator_xy(x, y, ab))
}

/// The observed spin correlator `C(a, b)`: the conditional correlator
/// integrated over the measure, with an error estimate.
pub fn observed_correlator(
    model: &OutcomeModel,
    measure: &VectorPairMeasure,
    a: &UnitVector,
    b: &UnitVector,
    method: IntegrationMethod,
) -> Result<Estimate> {
    match method {
        IntegrationMethod::Quadrature(res) => {
            if res.theta < 2 || res.azimuthal < 2 {
                return Err(Error::invalid(
                    "observed_correlator needs at least 2 quadrature points per axis",
                ));
            }
            let value = correlator_quadrature_value(model, measure, a, b, &res);
            let coarse = correlator_quadrature_value(model, measure, a, b, &res.halved());
            Ok(Estimate {
                value,
                error: (value - coarse).abs(),
            })
        }
        IntegrationMethod::MonteCarlo { n, seed } => {
            if n < 2 {
                return Err(Error::invalid("observed_correlator needs n >= 2 samples"));
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let ab = a.dot(b);
            let est = monte_carlo_mean(
                &mut rng,
                n,
                |r| measure.sample_pair(r),
                |(u, v)| model.correlator_xy(u.dot(a), v.dot(b), ab),
            )?;
            Ok(Estimate {
                value: est.mean,
                error: est.stderr,
            })
        }
    }
}

/// Single-arm averages `<sigma>` and `<tau>` under the measure.
///
/// For a Malus-compliant model these are the measure averages of `u.a`
/// and `v.b`; a nonzero value means plain expectation values already
/// discriminate the model, so callers warn on it.
pub fn singles_averages(
    model: &OutcomeModel,
    measure: &VectorPairMeasure,
    a: &UnitVector,
    b: &UnitVector,
    res: &Resolution,
) -> (f64, f64) {
    let ab = a.dot(b);
    let left = measure_expectation_xy(measure, a, b, res, |x, y| {
        let mut acc = 0.0;
        for s in Outcome::BOTH {
            for t in Outcome::BOTH {
                acc += s.value() * model.joint_xy(s, t, x, y, ab);
            }
        }
        acc
    });
    let right = measure_expectation_xy(measure, a, b, res, |x, y| {
        let mut acc = 0.0;
        for s in Outcome::BOTH {
            for t in Outcome::BOTH {
                acc += t.value() * model.joint_xy(s, t, x, y, ab);
            }
        }
        acc
    });
    (left, right)
}

/// Average of the correlator over rigid rotations of both detectors in
/// the plane orthogonal to `p`, keeping their relative angle `phi`.
pub fn azimuthal_avg_correlator(
    corr: &CorrelatorFn,
    p: UnitVector,
    phi: f64,
    n_xi: usize,
) -> Result<f64> {
    if n_xi < 8 {
        return Err(Error::invalid("azimuthal average needs at least 8 nodes"));
    }
    let frame = Frame::orthonormal(p);
    let mut acc = 0.0;
    for k in 0..n_xi {
        let xi = (k as f64 + 0.5) * TAU / n_xi as f64;
        let a = frame.in_plane(xi + phi / 2.0);
        let b = frame.in_plane(xi - phi / 2.0);
        acc += corr.eval(a, b);
    }
    Ok(acc / n_xi as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::PI;

    fn res() -> Resolution {
        Resolution::new(32, 96, 32)
    }

    #[test]
    fn conditional_correlators_match_closed_forms() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..200 {
            let u = UnitVector::from_uniforms(rng.random(), rng.random());
            let v = UnitVector::from_uniforms(rng.random(), rng.random());
            let a = UnitVector::from_uniforms(rng.random(), rng.random());
            let b = UnitVector::from_uniforms(rng.random(), rng.random());
            let (x, y) = (u.dot(&a), v.dot(&b));
            assert_abs_diff_eq!(
                correlator_given_uv(&OutcomeModel::ProductMalus, &u, &v, &a, &b),
                x * y,
                epsilon = 1e-13
            );
            assert_abs_diff_eq!(
                correlator_given_uv(&OutcomeModel::ComonotoneMalus, &u, &v, &a, &b),
                1.0 - (x - y).abs(),
                epsilon = 1e-13
            );
            assert_abs_diff_eq!(
                correlator_given_uv(&OutcomeModel::AntitoneMalus, &u, &v, &a, &b),
                -1.0 + (x + y).abs(),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn observed_correlator_product_malus_aligned() {
        // Sphere average of (u.a)(u.b) is (a.b)/3, so the antialigned
        // measure gives -(a.b)/3.
        let m = VectorPairMeasure::aligned_uniform(-1).unwrap();
        let a = UnitVector::new(1.0, 2.0, -0.5).unwrap();
        let b = UnitVector::new(-0.3, 0.4, 0.9).unwrap();
        let est = observed_correlator(
            &OutcomeModel::ProductMalus,
            &m,
            &a,
            &b,
            IntegrationMethod::Quadrature(res()),
        )
        .unwrap();
        assert_abs_diff_eq!(est.value, -a.dot(&b) / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn comonotone_saturates_at_equal_projections() {
        let m = VectorPairMeasure::aligned_uniform(1).unwrap();
        let a = UnitVector::new(0.6, -0.1, 0.7).unwrap();
        let est = observed_correlator(
            &OutcomeModel::ComonotoneMalus,
            &m,
            &a,
            &a,
            IntegrationMethod::Quadrature(res()),
        )
        .unwrap();
        assert_abs_diff_eq!(est.value, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn quadrature_and_monte_carlo_agree() {
        let m = VectorPairMeasure::product_uniform();
        let model = OutcomeModel::ComonotoneMalus;
        let a = UnitVector::X;
        let b = UnitVector::new(0.5, 0.5, 0.7).unwrap();
        let q = observed_correlator(&model, &m, &a, &b, IntegrationMethod::Quadrature(res()))
            .unwrap();
        let mc = observed_correlator(
            &model,
            &m,
            &a,
            &b,
            IntegrationMethod::MonteCarlo { n: 400_000, seed: 9 },
        )
        .unwrap();
        assert!((q.value - mc.value).abs() < 4.0 * mc.error);
    }

    #[test]
    fn invalid_methods_are_rejected() {
        let m = VectorPairMeasure::product_uniform();
        let model = OutcomeModel::ProductMalus;
        let a = UnitVector::X;
        assert!(observed_correlator(
            &model,
            &m,
            &a,
            &a,
            IntegrationMethod::MonteCarlo { n: 1, seed: 0 }
        )
        .is_err());
        let bad = Resolution { theta: 1, azimuthal: 4, xi: 8, psi: 8 };
        assert!(observed_correlator(&model, &m, &a, &a, IntegrationMethod::Quadrature(bad)).is_err());
    }

    #[test]
    fn azimuthal_average_of_singlet_is_minus_cos_phi() {
        let corr = CorrelatorFn::qm_singlet();
        for p in [UnitVector::Z, UnitVector::new(1.0, 1.0, 0.3).unwrap()] {
            for phi in [0.0, 0.4, 1.3, PI - 0.1] {
                let c = azimuthal_avg_correlator(&corr, p, phi, 64).unwrap();
                assert_abs_diff_eq!(c, -phi.cos(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn azimuthal_average_rejects_tiny_grids() {
        let corr = CorrelatorFn::qm_singlet();
        assert!(azimuthal_avg_correlator(&corr, UnitVector::Z, 0.3, 4).is_err());
    }

    #[test]
    fn product_malus_aligned_plane_average() {
        let m = VectorPairMeasure::aligned_uniform(-1).unwrap();
        let corr = CorrelatorFn::from_model(
            &OutcomeModel::ProductMalus,
            &m,
            IntegrationMethod::Quadrature(res()),
        );
        let c = azimuthal_avg_correlator(&corr, UnitVector::Z, 0.8, 32).unwrap();
        assert_abs_diff_eq!(c, -(0.8f64.cos()) / 3.0, epsilon = 1e-7);
    }

    #[test]
    fn singles_vanish_for_symmetric_measures() {
        let m = VectorPairMeasure::product_uniform();
        let (l, r) = singles_averages(
            &OutcomeModel::ProductMalus,
            &m,
            &UnitVector::X,
            &UnitVector::Y,
            &res(),
        );
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn singles_nonzero_for_biased_atom() {
        let m = VectorPairMeasure::custom_grid(&[crate::measures::GridAtom {
            theta_u: PI / 2.0,
            phi_u: 0.0,
            theta_v: PI / 2.0,
            phi_v: 0.0,
            weight: 1.0,
        }])
        .unwrap();
        let (l, _) = singles_averages(
            &OutcomeModel::ProductMalus,
            &m,
            &UnitVector::X,
            &UnitVector::Y,
            &res(),
        );
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-12);
    }
}
