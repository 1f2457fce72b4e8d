//! Bound evaluations: the pointwise envelope, the plane-averaged
//! intermediate bound, the single-plane inequality, the final two-plane
//! bound and its quantum violation, and the CHSH comparator.

use std::f64::consts::PI;

use crate::engine::kernels::{compute_j, compute_l, compute_r, JForm, RlForm};
use crate::engine::{azimuthal_avg_correlator, correlator_given_uv, CorrelatorFn};
use crate::geometry::UnitVector;
use crate::measures::VectorPairMeasure;
use crate::models::OutcomeModel;
use crate::{Error, Resolution, Result};

/// Tolerance for analytic (non-quadrature) identities.
pub const ANALYTIC_TOL: f64 = 1e-12;

/// Orthogonality tolerance for plane-normal pairs.
const ORTHO_TOL: f64 = 1e-10;

/// One evaluated inequality: `lhs <= rhs` up to `tolerance`.
///
/// Verdicts are one-sided: `satisfied` means `slack >= -tolerance`, so
/// numerical noise can never manufacture a violation.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub satisfied: bool,
    pub terms: Vec<(String, f64)>,
}

impl BoundReport {
    pub fn new(lhs: f64, rhs: f64, tolerance: f64, terms: Vec<(String, f64)>) -> Self {
        let slack = rhs - lhs;
        BoundReport {
            lhs,
            rhs,
            slack,
            tolerance,
            satisfied: slack >= -tolerance,
            terms,
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// Checks the pointwise envelope
/// `-1 + |u.a + v.b| <= C(u,v;a,b) <= 1 - |u.a - v.b|`
/// for the given model and inputs. The binding side becomes `lhs`/`rhs`.
pub fn envelope_check(
    model: &OutcomeModel,
    u: &UnitVector,
    v: &UnitVector,
    a: &UnitVector,
    b: &UnitVector,
) -> BoundReport {
    let c = correlator_given_uv(model, u, v, a, b);
    let ua = u.dot(a);
    let vb = v.dot(b);
    let upper = 1.0 - (ua - vb).abs();
    let lower = -1.0 + (ua + vb).abs();
    let upper_slack = upper - c;
    let lower_slack = c - lower;
    let terms = vec![
        ("c".to_string(), c),
        ("upper".to_string(), upper),
        ("lower".to_string(), lower),
        ("upper_slack".to_string(), upper_slack),
        ("lower_slack".to_string(), lower_slack),
    ];
    if upper_slack <= lower_slack {
        BoundReport::new(c, upper, ANALYTIC_TOL, terms)
    } else {
        BoundReport::new(lower, c, ANALYTIC_TOL, terms)
    }
}

/// The pointwise lemma behind the two-plane combination: for orthogonal
/// `p`, `p'` and any unit `u`, `v`,
/// `sqrt(2 - (p.u)^2 - (p.v)^2) + sqrt(2 - (p'.u)^2 - (p'.v)^2) >= sqrt(2)`.
pub fn sqrt_lemma_check(
    u: &UnitVector,
    v: &UnitVector,
    p: &UnitVector,
    p_prime: &UnitVector,
) -> Result<BoundReport> {
    let ortho = p.dot(p_prime).abs();
    if ortho > ORTHO_TOL {
        return Err(Error::PlanesNotOrthogonal(ortho));
    }
    let term = |n: &UnitVector| {
        let cu = n.dot(u);
        let cv = n.dot(v);
        (2.0 - cu * cu - cv * cv).max(0.0).sqrt()
    };
    let first = term(p);
    let second = term(p_prime);
    let sum = first + second;
    Ok(BoundReport::new(
        2.0f64.sqrt(),
        sum,
        ORTHO_TOL,
        vec![
            ("first_plane".to_string(), first),
            ("second_plane".to_string(), second),
        ],
    ))
}

/// Plane-averaged sandwich `-1 + L_p(phi) <= C_p(phi) <= 1 - R_p(phi)`.
///
/// The binding side becomes `lhs`/`rhs`; both slacks are in `terms`. The
/// tolerance is three times the summed half-resolution error estimates.
pub fn intermediate_bound(
    corr: &CorrelatorFn,
    measure: &VectorPairMeasure,
    p: UnitVector,
    phi: f64,
    res: &Resolution,
) -> Result<BoundReport> {
    let c = azimuthal_avg_correlator(corr, p, phi, res.xi)?;
    let c_coarse = azimuthal_avg_correlator(corr, p, phi, res.halved().xi)?;
    let r = compute_r(measure, p, phi, RlForm::FourAngle, res);
    let r_coarse = compute_r(measure, p, phi, RlForm::FourAngle, &res.halved());
    let l = compute_l(measure, p, phi, RlForm::FourAngle, res);
    let l_coarse = compute_l(measure, p, phi, RlForm::FourAngle, &res.halved());
    let est = (c - c_coarse).abs() + (r - r_coarse).abs().max((l - l_coarse).abs());
    let tolerance = (3.0 * est).max(1e-9);
    let upper = 1.0 - r;
    let lower = -1.0 + l;
    let upper_slack = upper - c;
    let lower_slack = c - lower;
    let terms = vec![
        ("c_p".to_string(), c),
        ("r_p".to_string(), r),
        ("l_p".to_string(), l),
        ("upper".to_string(), upper),
        ("lower".to_string(), lower),
        ("upper_slack".to_string(), upper_slack),
        ("lower_slack".to_string(), lower_slack),
        ("error_estimate".to_string(), est),
    ];
    Ok(if upper_slack <= lower_slack {
        BoundReport::new(c, upper, tolerance, terms)
    } else {
        BoundReport::new(lower, c, tolerance, terms)
    })
}

/// Single-plane inequality
/// `|C_p(phi) + C_p(phi')| <= 2 - (2 sqrt(2) / pi) sin(|phi - phi'| / 2) J`.
///
/// `phi` and `phi'` are relative detector angles in `(-pi, pi]`; the
/// half-difference is taken without wrapping so the sine argument stays
/// in `[0, pi]`.
pub fn xy_plane_inequality(
    corr: &CorrelatorFn,
    measure: &VectorPairMeasure,
    p: UnitVector,
    phi: f64,
    phi_prime: f64,
    res: &Resolution,
) -> Result<BoundReport> {
    let c1 = azimuthal_avg_correlator(corr, p, phi, res.xi)?;
    let c2 = azimuthal_avg_correlator(corr, p, phi_prime, res.xi)?;
    let c1_coarse = azimuthal_avg_correlator(corr, p, phi, res.halved().xi)?;
    let c2_coarse = azimuthal_avg_correlator(corr, p, phi_prime, res.halved().xi)?;
    let j = compute_j(measure, p, JForm::Invariant, res);
    let j_coarse = compute_j(measure, p, JForm::Invariant, &res.halved());
    let sin_half = ((phi - phi_prime).abs() / 2.0).sin();
    let coeff = 2.0 * 2.0f64.sqrt() / PI * sin_half;
    let lhs = (c1 + c2).abs();
    let rhs = 2.0 - coeff * j;
    let est = (c1 - c1_coarse).abs() + (c2 - c2_coarse).abs() + coeff * (j - j_coarse).abs();
    Ok(BoundReport::new(
        lhs,
        rhs,
        (3.0 * est).max(1e-9),
        vec![
            ("c_p_phi".to_string(), c1),
            ("c_p_phi_prime".to_string(), c2),
            ("j".to_string(), j),
            ("error_estimate".to_string(), est),
        ],
    ))
}

/// Measure-independent right-hand side of the two-plane inequality:
/// `4 - (4/pi) sin(|phi - phi'| / 2)`.
pub fn leggett_bound(phi: f64, phi_prime: f64) -> f64 {
    4.0 - 4.0 / PI * ((phi - phi_prime).abs() / 2.0).sin()
}

/// Two-plane left-hand side
/// `|C_p(phi) + C_p(phi')| + |C_p'(phi) + C_p'(phi')|`
/// for orthogonal plane normals.
pub fn leggett_lhs(
    corr: &CorrelatorFn,
    p: UnitVector,
    p_prime: UnitVector,
    phi: f64,
    phi_prime: f64,
    n_xi: usize,
) -> Result<f64> {
    let ortho = p.dot(&p_prime).abs();
    if ortho > ORTHO_TOL {
        return Err(Error::PlanesNotOrthogonal(ortho));
    }
    let mut total = 0.0;
    for plane in [p, p_prime] {
        let c1 = azimuthal_avg_correlator(corr, plane, phi, n_xi)?;
        let c2 = azimuthal_avg_correlator(corr, plane, phi_prime, n_xi)?;
        total += (c1 + c2).abs();
    }
    Ok(total)
}

/// Result of the violation search over the symmetric configuration
/// `phi' = -phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmViolation {
    pub phi_star: f64,
    pub violation: f64,
}

fn qm_objective(n_xi: usize) -> impl Fn(f64) -> f64 {
    let corr = CorrelatorFn::qm_singlet();
    move |phi: f64| {
        let lhs = leggett_lhs(&corr, UnitVector::Z, UnitVector::X, phi, -phi, n_xi)
            .expect("canonical planes are orthogonal");
        lhs - leggett_bound(phi, -phi)
    }
}

/// Locates the maximal singlet violation of the two-plane bound by a
/// dense scan over `phi in (0, pi/2]` followed by golden-section
/// refinement.
pub fn max_qm_violation(scan_resolution: usize) -> Result<QmViolation> {
    if scan_resolution < 1000 {
        return Err(Error::invalid(
            "violation scan needs at least 1000 points",
        ));
    }
    let f = qm_objective(64);
    let step = PI / 2.0 / scan_resolution as f64;
    let mut best_phi = step;
    let mut best = f64::NEG_INFINITY;
    for i in 1..=scan_resolution {
        let phi = i as f64 * step;
        let v = f(phi);
        if v > best {
            best = v;
            best_phi = phi;
        }
    }
    // Golden-section refinement of the scan winner.
    let golden = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut lo = (best_phi - step).max(step * 1e-3);
    let mut hi = (best_phi + step).min(PI / 2.0);
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = f(x1);
        }
    }
    let phi_star = 0.5 * (lo + hi);
    Ok(QmViolation {
        phi_star,
        violation: f(phi_star),
    })
}

/// Upper edge of the violation window: the sign change of the scan
/// objective, refined by bisection.
pub fn qm_violation_upper_edge(scan_resolution: usize) -> Result<f64> {
    if scan_resolution < 1000 {
        return Err(Error::invalid("edge scan needs at least 1000 points"));
    }
    let f = qm_objective(64);
    let step = PI / 2.0 / scan_resolution as f64;
    let mut last_positive = None;
    for i in 1..=scan_resolution {
        let phi = i as f64 * step;
        if f(phi) > 0.0 {
            last_positive = Some(phi);
        }
    }
    let lo0 = last_positive.ok_or_else(|| Error::invalid("no violation found in scan"))?;
    let mut lo = lo0;
    let mut hi = (lo0 + step).min(PI / 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Small-angle threshold of the violation window from the quadratic
/// expansion of the objective at zero: with `f = a1 x + a2 x^2 + ...`,
/// the predicted edge is `-a1 / a2`.
///
/// The coefficients come from an exact cubic fit through three forward
/// samples of the evaluated pipeline, so this is a numerical statement
/// about the implemented objective, not a closed-form shortcut.
pub fn qm_small_angle_threshold() -> f64 {
    let f = qm_objective(64);
    let h = 0.02;
    let f1 = f(h);
    let f2 = f(2.0 * h);
    let f3 = f(3.0 * h);
    let a1 = (18.0 * f1 - 9.0 * f2 + 2.0 * f3) / (6.0 * h);
    let a2 = (-5.0 * f1 + 4.0 * f2 - f3) / (2.0 * h * h);
    -a1 / a2
}

/// `|C(a,b) + C(a,b') + C(a',b) - C(a',b')|`.
pub fn chsh_value(
    corr: &CorrelatorFn,
    a: &UnitVector,
    a_prime: &UnitVector,
    b: &UnitVector,
    b_prime: &UnitVector,
) -> f64 {
    (corr.eval(*a, *b) + corr.eval(*a, *b_prime) + corr.eval(*a_prime, *b)
        - corr.eval(*a_prime, *b_prime))
    .abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::IntegrationMethod;
    use crate::models::Outcome;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn res() -> Resolution {
        Resolution::new(32, 96, 32)
    }

    #[test]
    fn outcome_product_identity_on_all_corners() {
        for s in Outcome::BOTH {
            for t in Outcome::BOTH {
                let sv = s.value();
                let tv = t.value();
                assert_eq!(-1.0 + (sv + tv).abs(), sv * tv);
                assert_eq!(1.0 - (sv - tv).abs(), sv * tv);
            }
        }
    }

    #[test]
    fn envelope_holds_for_product_and_saturates_for_couplings() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..2000 {
            let u = UnitVector::from_uniforms(rng.random(), rng.random());
            let v = UnitVector::from_uniforms(rng.random(), rng.random());
            let a = UnitVector::from_uniforms(rng.random(), rng.random());
            let b = UnitVector::from_uniforms(rng.random(), rng.random());
            let rep = envelope_check(&OutcomeModel::ProductMalus, &u, &v, &a, &b);
            assert!(rep.satisfied);
            let co = envelope_check(&OutcomeModel::ComonotoneMalus, &u, &v, &a, &b);
            assert!(co.term("upper_slack").unwrap().abs() < 1e-12);
            let an = envelope_check(&OutcomeModel::AntitoneMalus, &u, &v, &a, &b);
            assert!(an.term("lower_slack").unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn sqrt_lemma_equality_and_interior() {
        let p = UnitVector::Z;
        let q = UnitVector::X;
        // u = v = p hits equality.
        let eq = sqrt_lemma_check(&p, &p, &p, &q).unwrap();
        assert_abs_diff_eq!(eq.rhs, 2.0f64.sqrt(), epsilon = 1e-12);
        assert!(eq.satisfied);
        // u = v orthogonal to both planes: both terms are sqrt(2).
        let u = UnitVector::Y;
        let wide = sqrt_lemma_check(&u, &u, &p, &q).unwrap();
        assert_abs_diff_eq!(wide.rhs, 2.0 * 2.0f64.sqrt(), epsilon = 1e-12);
        // Non-orthogonal planes are rejected.
        assert!(matches!(
            sqrt_lemma_check(&u, &u, &p, &p),
            Err(Error::PlanesNotOrthogonal(_))
        ));
    }

    #[test]
    fn leggett_bound_values() {
        assert_abs_diff_eq!(leggett_bound(0.7, 0.7), 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(leggett_bound(0.0, PI), 4.0 - 4.0 / PI, epsilon = 1e-15);
        assert_abs_diff_eq!(
            leggett_bound(0.4, -0.9),
            leggett_bound(-0.9, 0.4),
            epsilon = 1e-15
        );
    }

    #[test]
    fn singlet_lhs_closed_form() {
        let corr = CorrelatorFn::qm_singlet();
        for (phi, phip) in [(0.3, -0.3), (1.0, 0.2), (0.0, PI)] {
            let lhs = leggett_lhs(&corr, UnitVector::Z, UnitVector::X, phi, phip, 64).unwrap();
            assert_abs_diff_eq!(
                lhs,
                2.0 * (phi.cos() + phip.cos()).abs(),
                epsilon = 1e-12
            );
        }
        // Antiperiodic pair cancels.
        let lhs = leggett_lhs(&corr, UnitVector::Z, UnitVector::X, 0.8, 0.8 - PI, 64).unwrap();
        assert_abs_diff_eq!(
            lhs,
            2.0 * (0.8f64.cos() + (0.8 - PI).cos()).abs(),
            epsilon = 1e-12
        );
        assert!(leggett_lhs(&corr, UnitVector::Z, UnitVector::Z, 0.1, 0.2, 64).is_err());
    }

    #[test]
    fn max_violation_matches_dense_scan_oracle() {
        // Oracle: dense scan of the closed-form objective.
        let mut best = f64::NEG_INFINITY;
        let mut best_phi = 0.0;
        for i in 1..1_000_000u32 {
            let phi = i as f64 * (PI / 2.0) / 1_000_000.0;
            let v = 4.0 * phi.cos() + 4.0 / PI * phi.sin() - 4.0;
            if v > best {
                best = v;
                best_phi = phi;
            }
        }
        let found = max_qm_violation(20_000).unwrap();
        assert_abs_diff_eq!(found.phi_star, best_phi, epsilon = 1e-4);
        assert_abs_diff_eq!(found.violation, best, epsilon = 1e-9);
        assert_abs_diff_eq!(found.phi_star, (1.0 / PI).atan(), epsilon = 1e-6);
        assert!(max_qm_violation(10).is_err());
    }

    #[test]
    fn violation_window_edges() {
        // Exact sign change at 2 atan(1/pi).
        let edge = qm_violation_upper_edge(20_000).unwrap();
        assert_abs_diff_eq!(edge, 2.0 * (1.0 / PI).atan(), epsilon = 1e-6);
        // Quadratic small-angle prediction lands on 2/pi.
        let threshold = qm_small_angle_threshold();
        assert_abs_diff_eq!(threshold, 2.0 / PI, epsilon = 1e-3);
    }

    #[test]
    fn chsh_reaches_quantum_maximum_and_classical_bound() {
        let corr = CorrelatorFn::qm_singlet();
        // Angle set {0, pi/2, pi/4, 3pi/4} arranged so the minus term
        // picks up the odd correlator.
        let f = crate::geometry::Frame::canonical();
        let a = f.in_plane(PI / 2.0);
        let ap = f.in_plane(0.0);
        let b = f.in_plane(PI / 4.0);
        let bp = f.in_plane(3.0 * PI / 4.0);
        assert_abs_diff_eq!(
            chsh_value(&corr, &a, &ap, &b, &bp),
            2.0 * 2.0f64.sqrt(),
            epsilon = 1e-12
        );

        // A hidden-variable model stays at or below 2.
        let m = VectorPairMeasure::aligned_uniform(-1).unwrap();
        let hv = CorrelatorFn::from_model(
            &OutcomeModel::ProductMalus,
            &m,
            IntegrationMethod::Quadrature(res()),
        );
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..50 {
            let a = UnitVector::from_uniforms(rng.random(), rng.random());
            let ap = UnitVector::from_uniforms(rng.random(), rng.random());
            let b = UnitVector::from_uniforms(rng.random(), rng.random());
            let bp = UnitVector::from_uniforms(rng.random(), rng.random());
            assert!(chsh_value(&hv, &a, &ap, &b, &bp) <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn intermediate_bound_saturates_and_flags_singlet() {
        let r = res();
        // Comonotone on the fully correlated measure saturates the upper
        // side.
        let m = VectorPairMeasure::aligned_uniform(1).unwrap();
        let corr = CorrelatorFn::from_model(
            &OutcomeModel::ComonotoneMalus,
            &m,
            IntegrationMethod::Quadrature(r),
        );
        let rep = intermediate_bound(&corr, &m, UnitVector::Z, 1.1, &r).unwrap();
        assert!(rep.satisfied);
        assert!(rep.term("upper_slack").unwrap().abs() < 1e-4);

        // The singlet violates the sandwich built from the antialigned
        // measure somewhere in (2pi/3, pi).
        let m = VectorPairMeasure::aligned_uniform(-1).unwrap();
        let singlet = CorrelatorFn::qm_singlet();
        let rep = intermediate_bound(&singlet, &m, UnitVector::Z, 2.7, &r).unwrap();
        assert!(!rep.satisfied, "slack {}", rep.slack);
    }

    #[test]
    fn plane_inequality_for_saturating_model() {
        let r = res();
        let m = VectorPairMeasure::aligned_uniform(1).unwrap();
        let corr = CorrelatorFn::from_model(
            &OutcomeModel::ComonotoneMalus,
            &m,
            IntegrationMethod::Quadrature(r),
        );
        for (phi, phip) in [(0.5, -0.5), (1.2, 0.1), (2.0, -2.0)] {
            let rep = xy_plane_inequality(&corr, &m, UnitVector::Z, phi, phip, &r).unwrap();
            assert!(rep.satisfied, "slack {}", rep.slack);
        }
        // Equal angles make the bound trivially 2.
        let rep = xy_plane_inequality(&corr, &m, UnitVector::Z, 0.9, 0.9, &r).unwrap();
        assert_abs_diff_eq!(rep.rhs, 2.0, epsilon = 1e-12);
        assert!(rep.satisfied);
    }
}
