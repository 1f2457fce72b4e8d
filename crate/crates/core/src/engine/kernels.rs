//! The angular kernel and the measure integrals `R`, `L` and `J` that
//! bound the plane-averaged correlator.

use std::f64::consts::{PI, TAU};

use crate::geometry::{Frame, UnitVector};
use crate::measures::{azimuth_nodes, polar_nodes, VectorPairMeasure};
use crate::quad::{midpoint_nodes, par_block_sum, weighted_abs_diff_sum};
use crate::Resolution;

/// Envelope kernel
/// `N(tu, tv, alpha) = sqrt((sin tu + sin tv)^2 sin^2(alpha/2)
///                        + (sin tu - sin tv)^2 cos^2(alpha/2))`.
///
/// A negated polar argument flips which sine combination carries the
/// half-angle sine, which is how the lower-bound variant is obtained.
pub fn kernel_n(theta_u: f64, theta_v: f64, alpha: f64) -> f64 {
    let su = theta_u.sin();
    let sv = theta_v.sin();
    let (sh, ch) = (alpha / 2.0).sin_cos();
    let plus = (su + sv) * sh;
    let minus = (su - sv) * ch;
    (plus * plus + minus * minus).sqrt()
}

/// Amplitude and phase of the kernel decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NDelta {
    pub n: f64,
    pub delta: f64,
    /// Set when the amplitude vanishes and the phase is conventionally 0.
    pub degenerate: bool,
}

/// Splits the in-plane difference into amplitude `N >= 0` and phase
/// `delta`:
/// `N cos(delta) = (sin tu - sin tv) cos(beta)`,
/// `N sin(delta) = (sin tu + sin tv) sin(beta)`.
pub fn decompose_n_delta(theta_u: f64, theta_v: f64, beta: f64) -> NDelta {
    let su = theta_u.sin();
    let sv = theta_v.sin();
    let (sb, cb) = beta.sin_cos();
    let nc = (su - sv) * cb;
    let ns = (su + sv) * sb;
    let n = nc.hypot(ns);
    if n < 1e-300 {
        NDelta {
            n: 0.0,
            delta: 0.0,
            degenerate: true,
        }
    } else {
        NDelta {
            n,
            delta: ns.atan2(nc),
            degenerate: false,
        }
    }
}

/// Integration route for the `R` and `L` terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlForm {
    /// Kernel against the measure over all four angles.
    FourAngle,
    /// Kernel against the `(tu, tv, chi)` marginal.
    MarginalRho,
    /// Plane average of the absolute-difference expectation at explicit
    /// detector settings; no kernel involved.
    DirectXiAverage,
}

#[derive(Clone, Copy)]
enum AbsSign {
    Minus,
    Plus,
}

/// `R_p(phi) = (2/pi) E[ N(tu, tv, chi - phi) ]`, the upper-margin
/// integral in the plane orthogonal to `p`.
pub fn compute_r(
    measure: &VectorPairMeasure,
    p: UnitVector,
    phi: f64,
    form: RlForm,
    res: &Resolution,
) -> f64 {
    rl_integral(measure, p, phi, form, res, AbsSign::Minus)
}

/// `L_p(phi)`, the lower-margin integral: same as [`compute_r`] with the
/// sign-flipped polar argument in the kernel.
pub fn compute_l(
    measure: &VectorPairMeasure,
    p: UnitVector,
    phi: f64,
    form: RlForm,
    res: &Resolution,
) -> f64 {
    rl_integral(measure, p, phi, form, res, AbsSign::Plus)
}

fn rl_integral(
    measure: &VectorPairMeasure,
    p: UnitVector,
    phi: f64,
    form: RlForm,
    res: &Resolution,
    sign: AbsSign,
) -> f64 {
    let frame = Frame::orthonormal(p);
    let kernel = move |tu: f64, tv: f64, chi: f64| match sign {
        AbsSign::Minus => kernel_n(tu, tv, chi - phi),
        AbsSign::Plus => kernel_n(tu, -tv, chi - phi),
    };
    match form {
        RlForm::FourAngle => {
            (2.0 / PI) * measure.integrate_frame_angles(&frame, res, kernel)
        }
        RlForm::MarginalRho => {
            (2.0 / PI)
                * measure
                    .marginal_rho(&frame, res.psi)
                    .integrate(res, kernel)
        }
        RlForm::DirectXiAverage => {
            let n_xi = res.xi.max(8);
            let mut acc = 0.0;
            for k in 0..n_xi {
                let xi = (k as f64 + 0.5) * TAU / n_xi as f64;
                acc += direct_abs_expectation(
                    measure,
                    &frame,
                    xi + phi / 2.0,
                    xi - phi / 2.0,
                    sign,
                    res,
                );
            }
            acc / n_xi as f64
        }
    }
}

/// `E | u.a -/+ v.b |` at explicit in-plane azimuths `phi_a`, `phi_b`.
fn direct_abs_expectation(
    measure: &VectorPairMeasure,
    frame: &Frame,
    phi_a: f64,
    phi_b: f64,
    sign: AbsSign,
    res: &Resolution,
) -> f64 {
    let a = frame.in_plane(phi_a);
    let b = frame.in_plane(phi_b);
    match measure {
        VectorPairMeasure::ProductUniform => {
            // Independent arms: push each sphere grid through its
            // projection and sweep the two sorted weighted point sets.
            // The azimuthal resolution is doubled because the projection
            // values are only piecewise smooth in the detector azimuth.
            let n_phi = 2 * res.azimuthal;
            let (thetas, tw) = polar_nodes(res.theta);
            let phis = azimuth_nodes(n_phi);
            let wphi = 1.0 / n_phi as f64;
            let side = |det_phi: f64, flip: f64| {
                let mut pts = Vec::with_capacity(thetas.len() * phis.len());
                for (i, &t) in thetas.iter().enumerate() {
                    let st = t.sin();
                    let w = tw[i] * wphi;
                    for &p in &phis {
                        pts.push((flip * st * (p - det_phi).cos(), w));
                    }
                }
                pts.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
                pts
            };
            let xs = side(phi_a, 1.0);
            let ys = match sign {
                AbsSign::Minus => side(phi_b, 1.0),
                AbsSign::Plus => side(phi_b, -1.0),
            };
            weighted_abs_diff_sum(&xs, &ys)
        }
        VectorPairMeasure::AlignedUniform { sign: align } => {
            let (thetas, tw) = polar_nodes(res.theta);
            let phis = azimuth_nodes(2 * res.azimuthal);
            let wphi = 1.0 / (2 * res.azimuthal) as f64;
            let s = *align as f64;
            let flip = match sign {
                AbsSign::Minus => 1.0,
                AbsSign::Plus => -1.0,
            };
            par_block_sum(thetas.len(), |i| {
                let st = thetas[i].sin();
                let mut acc = 0.0;
                for &p in &phis {
                    let x = st * (p - phi_a).cos();
                    let y = s * st * (p - phi_b).cos();
                    acc += (x - flip * y).abs();
                }
                tw[i] * acc * wphi
            })
        }
        VectorPairMeasure::CustomGrid(_) => measure.integrate_pairs(res, |u, v| match sign {
            AbsSign::Minus => (u.dot(&a) - v.dot(&b)).abs(),
            AbsSign::Plus => (u.dot(&a) + v.dot(&b)).abs(),
        }),
    }
}

/// Integration route for the plane-independent coefficient `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JForm {
    /// `E[ sqrt(sin^2 tu + sin^2 tv) ]` through the polar marginal.
    ThetaMarginal,
    /// `E[ sqrt(2 - (p.u)^2 - (p.v)^2) ]` over the raw pair measure.
    Invariant,
}

/// The coefficient that multiplies the relative-angle term in the plane
/// inequality. Both routes agree; they discretize different forms.
pub fn compute_j(measure: &VectorPairMeasure, p: UnitVector, form: JForm, res: &Resolution) -> f64 {
    match form {
        JForm::ThetaMarginal => {
            let frame = Frame::orthonormal(p);
            measure
                .marginal_mu(&frame, res.psi)
                .integrate(res, |tu, tv| {
                    (tu.sin().powi(2) + tv.sin().powi(2)).sqrt()
                })
        }
        JForm::Invariant => measure.integrate_pairs(res, |u, v| {
            let pu = p.dot(&u);
            let pv = p.dot(&v);
            (2.0 - pu * pu - pv * pv).max(0.0).sqrt()
        }),
    }
}

/// Fine 1d check value used in tests and reports: `E[sin theta]` on the
/// uniform sphere, which equals `pi/4`.
#[allow(dead_code)]
pub(crate) fn mean_sin_theta(n: usize) -> f64 {
    let (thetas, tw) = polar_nodes(n);
    thetas.iter().zip(&tw).map(|(t, w)| w * t.sin()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn res() -> Resolution {
        Resolution::new(48, 128, 64)
    }

    #[test]
    fn kernel_values() {
        assert_abs_diff_eq!(kernel_n(FRAC_PI_2, FRAC_PI_2, PI), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(kernel_n(FRAC_PI_2, FRAC_PI_2, 0.0), 0.0, epsilon = 1e-14);
        for (tu, tv) in [(0.3, 1.1), (2.0, 0.4), (1.3, 1.3)] {
            assert_abs_diff_eq!(
                kernel_n(tu, tv, 0.0),
                (tu.sin() - tv.sin()).abs(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn decomposition_is_consistent_with_kernel() {
        for (tu, tv, beta) in [(0.4, 1.0, 0.3), (1.9, 2.5, -1.2), (0.7, 0.7, 0.9), (1.0, 2.0, 0.0)] {
            let d = decompose_n_delta(tu, tv, beta);
            assert!(d.n >= 0.0);
            assert_abs_diff_eq!(d.n, kernel_n(tu, tv, 2.0 * beta), epsilon = 1e-12);
            if tu == tv && !d.degenerate {
                assert_abs_diff_eq!(d.delta.abs(), FRAC_PI_2, epsilon = 1e-12);
            }
            if beta == 0.0 && tu != tv && !d.degenerate {
                assert!(d.delta.abs() < 1e-12 || (d.delta.abs() - PI).abs() < 1e-12);
            }
        }
        let degenerate = decompose_n_delta(0.5, 0.5, 0.0);
        assert!(degenerate.degenerate);
        assert_eq!(degenerate.delta, 0.0);
    }

    #[test]
    fn aligned_margins_match_closed_forms() {
        // v = -u: R_p(phi) = cos(phi/2), L_p(phi) = |sin(phi/2)|.
        let m = VectorPairMeasure::aligned_uniform(-1).unwrap();
        let r = res();
        for phi in [0.0, 0.7, 1.9, 3.0] {
            for form in [RlForm::FourAngle, RlForm::MarginalRho] {
                assert_abs_diff_eq!(
                    compute_r(&m, UnitVector::Z, phi, form, &r),
                    (phi / 2.0).cos(),
                    epsilon = 1e-9
                );
                assert_abs_diff_eq!(
                    compute_l(&m, UnitVector::Z, phi, form, &r),
                    (phi / 2.0).sin().abs(),
                    epsilon = 1e-9
                );
            }
        }
        // v = +u swaps the two margins.
        let m = VectorPairMeasure::aligned_uniform(1).unwrap();
        assert_abs_diff_eq!(
            compute_r(&m, UnitVector::Z, 1.1, RlForm::FourAngle, &r),
            (1.1f64 / 2.0).sin().abs(),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            compute_l(&m, UnitVector::Z, 1.1, RlForm::FourAngle, &r),
            (1.1f64 / 2.0).cos(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn product_uniform_margins_are_constant_two_thirds() {
        // Both projections are independent uniforms on [-1, 1], so
        // E|X - Y| = E|X + Y| = 2/3 regardless of the settings.
        let m = VectorPairMeasure::product_uniform();
        let r = res();
        for phi in [0.0, 1.0, 2.5] {
            for form in [RlForm::FourAngle, RlForm::MarginalRho, RlForm::DirectXiAverage] {
                assert_abs_diff_eq!(
                    compute_r(&m, UnitVector::Z, phi, form, &r),
                    2.0 / 3.0,
                    epsilon = 2e-4
                );
                assert_abs_diff_eq!(
                    compute_l(&m, UnitVector::Z, phi, form, &r),
                    2.0 / 3.0,
                    epsilon = 2e-4
                );
            }
        }
    }

    #[test]
    fn all_three_routes_agree_for_aligned() {
        let m = VectorPairMeasure::aligned_uniform(-1).unwrap();
        let r = res();
        for phi in [0.4, 1.3, 2.8] {
            let four = compute_r(&m, UnitVector::Z, phi, RlForm::FourAngle, &r);
            let rho = compute_r(&m, UnitVector::Z, phi, RlForm::MarginalRho, &r);
            let direct = compute_r(&m, UnitVector::Z, phi, RlForm::DirectXiAverage, &r);
            assert_abs_diff_eq!(four, rho, epsilon = 1e-10);
            assert_abs_diff_eq!(four, direct, epsilon = 1e-4);
        }
    }

    #[test]
    fn margins_are_frame_independent_for_isotropic_measures() {
        let m = VectorPairMeasure::aligned_uniform(-1).unwrap();
        let r = res();
        let p = UnitVector::new(0.3, -0.8, 0.52).unwrap();
        assert_abs_diff_eq!(
            compute_r(&m, p, 1.2, RlForm::FourAngle, &r),
            compute_r(&m, UnitVector::Z, 1.2, RlForm::FourAngle, &r),
            epsilon = 1e-12
        );
    }

    #[test]
    fn custom_atoms_use_frame_angles() {
        // A single pair along +x for both arms: in the canonical frame
        // tu = tv = pi/2, chi = 0, so R reduces to the kernel itself.
        let m = VectorPairMeasure::custom_grid(&[crate::measures::GridAtom {
            theta_u: FRAC_PI_2,
            phi_u: 0.0,
            theta_v: FRAC_PI_2,
            phi_v: 0.0,
            weight: 3.0,
        }])
        .unwrap();
        let r = res();
        let phi = 0.9;
        let expect = (2.0 / PI) * kernel_n(FRAC_PI_2, FRAC_PI_2, -phi);
        assert_abs_diff_eq!(
            compute_r(&m, UnitVector::Z, phi, RlForm::FourAngle, &r),
            expect,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            compute_r(&m, UnitVector::Z, phi, RlForm::MarginalRho, &r),
            expect,
            epsilon = 1e-12
        );
    }

    #[test]
    fn j_closed_forms_and_route_agreement() {
        let r = res();
        // Point mass with both vectors on the axis: J = 0. In the plane:
        // J = sqrt(2).
        let polar = VectorPairMeasure::custom_grid(&[crate::measures::GridAtom {
            theta_u: 0.0,
            phi_u: 0.0,
            theta_v: 0.0,
            phi_v: 0.0,
            weight: 1.0,
        }])
        .unwrap();
        assert_abs_diff_eq!(
            compute_j(&polar, UnitVector::Z, JForm::ThetaMarginal, &r),
            0.0,
            epsilon = 1e-12
        );
        let equatorial = VectorPairMeasure::custom_grid(&[crate::measures::GridAtom {
            theta_u: FRAC_PI_2,
            phi_u: 0.3,
            theta_v: FRAC_PI_2,
            phi_v: 0.3,
            weight: 1.0,
        }])
        .unwrap();
        assert_abs_diff_eq!(
            compute_j(&equatorial, UnitVector::Z, JForm::Invariant, &r),
            2.0f64.sqrt(),
            epsilon = 1e-12
        );

        // Antialigned uniform: J = sqrt(2) pi / 4; 1d quadrature oracle.
        let m = VectorPairMeasure::aligned_uniform(-1).unwrap();
        let grid = crate::quad::gauss_legendre(200, 0.0, PI).unwrap();
        let oracle = grid.integrate(|t| 2.0f64.sqrt() * t[0].sin() * t[0].sin() / 2.0);
        let theta_form = compute_j(&m, UnitVector::Z, JForm::ThetaMarginal, &r);
        let invariant_form = compute_j(&m, UnitVector::Z, JForm::Invariant, &r);
        assert_abs_diff_eq!(theta_form, oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(theta_form, invariant_form, epsilon = 1e-6);
        assert_abs_diff_eq!(oracle, 2.0f64.sqrt() * PI / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn j_routes_agree_for_product_uniform() {
        let m = VectorPairMeasure::product_uniform();
        let small = Resolution::new(32, 48, 16);
        let t = compute_j(&m, UnitVector::Z, JForm::ThetaMarginal, &small);
        let i = compute_j(&m, UnitVector::Z, JForm::Invariant, &small);
        assert_abs_diff_eq!(t, i, epsilon = 1e-5);
    }
}
