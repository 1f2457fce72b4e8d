//! The distribution of the hidden polarization pair `(u, v)`.
//!
//! A measure never sees detector settings; that locality property is
//! structural. Three kinds are built in:
//!
//! * `ProductUniform` — `u` and `v` independent and uniform on the sphere.
//! * `AlignedUniform` — `v = sign * u` with `u` uniform (the perfectly
//!   correlated / anticorrelated cases).
//! * `CustomGrid` — an arbitrary discrete table of weighted `(u, v)`
//!   pairs, normalized to total mass one at construction.
//!
//! Angular marginals are expressed in a detector frame: `rho(tu, tv, chi)`
//! over the two polar angles and the azimuth difference `chi`, and
//! `mu(tu, tv)` with `chi` integrated out. For kinds with point masses the
//! marginals are exposed as cell masses rather than densities.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rayon::prelude::*;

use crate::geometry::{Frame, SphericalAngles, UnitVector};
use crate::quad::{gauss_legendre_unit, midpoint_nodes, par_block_sum};
use crate::{Error, Resolution, Result};

/// Spherical coordinates of a pair of unit vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairAngles {
    pub theta_u: f64,
    pub phi_u: f64,
    pub theta_v: f64,
    pub phi_v: f64,
}

impl PairAngles {
    /// Azimuth difference on the open interval `(-2pi, 2pi)`.
    ///
    /// This is the plain difference of the wrapped azimuths, not a wrapped
    /// angle: the change of variables behind the marginals runs over the
    /// square, not the torus.
    pub fn chi(&self) -> f64 {
        self.phi_u - self.phi_v
    }
}

/// One weighted pair in a discrete measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAtom {
    pub theta_u: f64,
    pub phi_u: f64,
    pub theta_v: f64,
    pub phi_v: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct CustomGrid {
    atoms: Vec<Atom>,
    cdf: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Atom {
    angles: PairAngles,
    u: UnitVector,
    v: UnitVector,
    weight: f64,
}

/// The measure over hidden vector pairs.
#[derive(Debug, Clone)]
pub enum VectorPairMeasure {
    ProductUniform,
    AlignedUniform { sign: i8 },
    CustomGrid(CustomGrid),
}

/// Node of a materialized pair quadrature.
#[derive(Debug, Clone)]
pub struct PairNode {
    pub u: UnitVector,
    pub v: UnitVector,
    pub angles: PairAngles,
    pub weight: f64,
}

/// Materialized quadrature view of a measure.
///
/// `dimension` is the number of free angular variables: 4 for the product
/// kind, 2 for the aligned kinds (the pair is a function of `u`), 0 for a
/// discrete table.
#[derive(Debug, Clone)]
pub struct PairQuadrature {
    pub nodes: Vec<PairNode>,
    pub dimension: usize,
}

impl PairQuadrature {
    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    pub fn expectation(&self, f: impl Fn(&PairNode) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n)).sum()
    }
}

/// Hard cap on materialized views; the streaming integrators have no such
/// limit.
const MAX_VIEW_NODES: usize = 50_000_000;

/// Polar Gauss-Legendre nodes on `[0, pi]` with `sin` folded in, weights
/// normalized to a probability.
pub(crate) fn polar_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre_unit(n);
    let thetas: Vec<f64> = xs.iter().map(|x| 0.5 * PI * (x + 1.0)).collect();
    let mut weights: Vec<f64> = thetas
        .iter()
        .zip(&ws)
        .map(|(t, w)| w * t.sin())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (thetas, weights)
}

/// Uniform azimuth midpoints on `(-pi, pi]` with probability weights.
pub(crate) fn azimuth_nodes(n: usize) -> Vec<f64> {
    midpoint_nodes(n, -PI, PI).0
}

impl VectorPairMeasure {
    pub fn product_uniform() -> Self {
        VectorPairMeasure::ProductUniform
    }

    pub fn aligned_uniform(sign: i8) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::invalid(format!(
                "aligned_uniform sign must be +1 or -1, got {sign}"
            )));
        }
        Ok(VectorPairMeasure::AlignedUniform { sign })
    }

    /// Builds a discrete measure; weights are normalized to total mass one.
    pub fn custom_grid(atoms: &[GridAtom]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("custom grid needs at least one atom"));
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if atoms.iter().any(|a| a.weight < 0.0) {
            return Err(Error::invalid("custom grid weights must be nonnegative"));
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::invalid("custom grid weights must have positive total"));
        }
        let mut built = Vec::with_capacity(atoms.len());
        let mut cdf = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for a in atoms {
            let au = SphericalAngles::new(a.theta_u, a.phi_u);
            let av = SphericalAngles::new(a.theta_v, a.phi_v);
            let weight = a.weight / total;
            acc += weight;
            cdf.push(acc);
            built.push(Atom {
                angles: PairAngles {
                    theta_u: au.theta(),
                    phi_u: au.phi(),
                    theta_v: av.theta(),
                    phi_v: av.phi(),
                },
                u: UnitVector::from_spherical(au),
                v: UnitVector::from_spherical(av),
                weight,
            });
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(VectorPairMeasure::CustomGrid(CustomGrid { atoms: built, cdf }))
    }

    pub fn name(&self) -> String {
        match self {
            VectorPairMeasure::ProductUniform => "product_uniform".to_string(),
            VectorPairMeasure::AlignedUniform { sign } => {
                format!("aligned_uniform({:+})", sign)
            }
            VectorPairMeasure::CustomGrid(g) => format!("custom_grid({} atoms)", g.atoms.len()),
        }
    }

    /// Density of the product-uniform kind with respect to
    /// `dtu dtv dpu dpv`; `None` for kinds with point masses.
    pub fn pair_density(&self, angles: &PairAngles) -> Option<f64> {
        match self {
            VectorPairMeasure::ProductUniform => {
                Some(angles.theta_u.sin() * angles.theta_v.sin() / (16.0 * PI * PI))
            }
            _ => None,
        }
    }

    /// Draws one `(u, v)` pair. The caller owns the generator, so
    /// reproducibility is the caller's seed policy.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (UnitVector, UnitVector) {
        match self {
            VectorPairMeasure::ProductUniform => {
                let r1 = rng.random::<f64>();
                let r2 = rng.random::<f64>();
                let r3 = rng.random::<f64>();
                let r4 = rng.random::<f64>();
                (
                    UnitVector::from_uniforms(r1, r2),
                    UnitVector::from_uniforms(r3, r4),
                )
            }
            VectorPairMeasure::AlignedUniform { sign } => {
                let r1 = rng.random::<f64>();
                let r2 = rng.random::<f64>();
                let u = UnitVector::from_uniforms(r1, r2);
                let v = if *sign == 1 { u } else { -u };
                (u, v)
            }
            VectorPairMeasure::CustomGrid(g) => {
                let r = rng.random::<f64>();
                let idx = g.cdf.partition_point(|&c| c < r).min(g.atoms.len() - 1);
                (g.atoms[idx].u, g.atoms[idx].v)
            }
        }
    }

    /// Materializes the quadrature nodes of this measure.
    pub fn quadrature_view(&self, res: &Resolution) -> Result<PairQuadrature> {
        if res.theta < 2 || res.azimuthal < 2 {
            return Err(Error::invalid("quadrature view needs at least 2 points per axis"));
        }
        match self {
            VectorPairMeasure::ProductUniform => {
                let n = res.theta * res.theta * res.azimuthal * res.azimuthal;
                if n > MAX_VIEW_NODES {
                    return Err(Error::invalid(format!(
                        "quadrature view would materialize {n} nodes; use the streaming integrators"
                    )));
                }
                let (thetas, tw) = polar_nodes(res.theta);
                let phis = azimuth_nodes(res.azimuthal);
                let wphi = 1.0 / res.azimuthal as f64;
                let mut nodes = Vec::with_capacity(n);
                for (iu, &tu) in thetas.iter().enumerate() {
                    for &pu in &phis {
                        let u = UnitVector::from_spherical(SphericalAngles::new(tu, pu));
                        for (iv, &tv) in thetas.iter().enumerate() {
                            for &pv in &phis {
                                let v =
                                    UnitVector::from_spherical(SphericalAngles::new(tv, pv));
                                nodes.push(PairNode {
                                    u,
                                    v,
                                    angles: PairAngles {
                                        theta_u: tu,
                                        phi_u: pu,
                                        theta_v: tv,
                                        phi_v: pv,
                                    },
                                    weight: tw[iu] * wphi * tw[iv] * wphi,
                                });
                            }
                        }
                    }
                }
                Ok(PairQuadrature { nodes, dimension: 4 })
            }
            VectorPairMeasure::AlignedUniform { sign } => {
                let (thetas, tw) = polar_nodes(res.theta);
                let phis = azimuth_nodes(res.azimuthal);
                let wphi = 1.0 / res.azimuthal as f64;
                let s = *sign as f64;
                let mut nodes = Vec::with_capacity(res.theta * res.azimuthal);
                for (iu, &tu) in thetas.iter().enumerate() {
                    for &pu in &phis {
                        let u = UnitVector::from_spherical(SphericalAngles::new(tu, pu));
                        let v = if s > 0.0 { u } else { -u };
                        let va = v.spherical_in(&Frame::canonical());
                        nodes.push(PairNode {
                            u,
                            v,
                            angles: PairAngles {
                                theta_u: tu,
                                phi_u: pu,
                                theta_v: va.theta(),
                                phi_v: va.phi(),
                            },
                            weight: tw[iu] * wphi,
                        });
                    }
                }
                Ok(PairQuadrature { nodes, dimension: 2 })
            }
            VectorPairMeasure::CustomGrid(g) => {
                if g.atoms.is_empty() {
                    return Err(Error::invalid("custom grid has no atoms"));
                }
                let nodes = g
                    .atoms
                    .iter()
                    .map(|a| PairNode {
                        u: a.u,
                        v: a.v,
                        angles: a.angles,
                        weight: a.weight,
                    })
                    .collect();
                Ok(PairQuadrature { nodes, dimension: 0 })
            }
        }
    }

    /// Streaming expectation of `f(u, v)` without materializing nodes.
    ///
    /// Deterministic regardless of thread count: partial sums are formed
    /// per polar block and combined in index order.
    pub fn integrate_pairs(
        &self,
        res: &Resolution,
        f: impl Fn(UnitVector, UnitVector) -> f64 + Sync,
    ) -> f64 {
        match self {
            VectorPairMeasure::ProductUniform => {
                let (thetas, tw) = polar_nodes(res.theta);
                let phis = azimuth_nodes(res.azimuthal);
                let wphi = 1.0 / res.azimuthal as f64;
                let us: Vec<(UnitVector, f64)> = thetas
                    .iter()
                    .zip(&tw)
                    .flat_map(|(&t, &w)| {
                        let phis = &phis;
                        phis.iter().map(move |&p| {
                            (
                                UnitVector::from_spherical(SphericalAngles::new(t, p)),
                                w * wphi,
                            )
                        })
                    })
                    .collect();
                par_block_sum(us.len(), |i| {
                    let (u, wu) = us[i];
                    let mut acc = 0.0;
                    for &(v, wv) in &us {
                        acc += wv * f(u, v);
                    }
                    wu * acc
                })
            }
            VectorPairMeasure::AlignedUniform { sign } => {
                let (thetas, tw) = polar_nodes(res.theta);
                let phis = azimuth_nodes(res.azimuthal);
                let wphi = 1.0 / res.azimuthal as f64;
                let s = *sign;
                par_block_sum(thetas.len(), |i| {
                    let mut acc = 0.0;
                    for &p in &phis {
                        let u = UnitVector::from_spherical(SphericalAngles::new(thetas[i], p));
                        let v = if s == 1 { u } else { -u };
                        acc += wphi * f(u, v);
                    }
                    tw[i] * acc
                })
            }
            VectorPairMeasure::CustomGrid(g) => {
                g.atoms.iter().map(|a| a.weight * f(a.u, a.v)).sum()
            }
        }
    }

    /// Streaming expectation of `g(tu, tv, chi)` where the angles are
    /// taken in the given detector frame.
    ///
    /// `g` must be `2pi`-periodic in `chi`; for the product kind the
    /// azimuth double sum then collapses exactly onto the difference grid
    /// (uniform nodes, so each residue appears with equal multiplicity).
    pub fn integrate_frame_angles(
        &self,
        frame: &Frame,
        res: &Resolution,
        g: impl Fn(f64, f64, f64) -> f64 + Sync,
    ) -> f64 {
        match self {
            VectorPairMeasure::ProductUniform => {
                // Isotropic, so the frame drops out; integrate in frame
                // coordinates directly.
                let (thetas, tw) = polar_nodes(res.theta);
                let (chis, _) = midpoint_nodes(res.azimuthal, 0.0, TAU);
                let wchi = 1.0 / res.azimuthal as f64;
                par_block_sum(thetas.len(), |i| {
                    let tu = thetas[i];
                    let mut acc = 0.0;
                    for (j, &tv) in thetas.iter().enumerate() {
                        let mut inner = 0.0;
                        for &chi in &chis {
                            inner += g(tu, tv, chi);
                        }
                        acc += tw[j] * inner * wchi;
                    }
                    tw[i] * acc
                })
            }
            VectorPairMeasure::AlignedUniform { sign } => {
                let (thetas, tw) = polar_nodes(res.theta);
                par_block_sum(thetas.len(), |i| {
                    let tu = thetas[i];
                    let val = if *sign == 1 {
                        g(tu, tu, 0.0)
                    } else {
                        0.5 * (g(tu, PI - tu, PI) + g(tu, PI - tu, -PI))
                    };
                    tw[i] * val
                })
            }
            VectorPairMeasure::CustomGrid(grid) => grid
                .atoms
                .iter()
                .map(|a| {
                    let au = a.u.spherical_in(frame);
                    let av = a.v.spherical_in(frame);
                    a.weight * g(au.theta(), av.theta(), au.phi() - av.phi())
                })
                .sum(),
        }
    }

    /// Marginal over `(tu, tv, chi)` in the given frame.
    pub fn marginal_rho(&self, frame: &Frame, psi_points: usize) -> MarginalRho {
        let kind = match self {
            VectorPairMeasure::ProductUniform => RhoKind::ProductUniform,
            VectorPairMeasure::AlignedUniform { sign } => RhoKind::Aligned { sign: *sign },
            VectorPairMeasure::CustomGrid(g) => RhoKind::Atoms(
                g.atoms
                    .iter()
                    .map(|a| {
                        let au = a.u.spherical_in(frame);
                        let av = a.v.spherical_in(frame);
                        (au.theta(), av.theta(), au.phi() - av.phi(), a.weight)
                    })
                    .collect(),
            ),
        };
        MarginalRho {
            kind,
            psi_points: psi_points.max(2),
        }
    }

    /// Marginal over `(tu, tv)` in the given frame.
    pub fn marginal_mu(&self, frame: &Frame, psi_points: usize) -> MarginalMu {
        MarginalMu {
            rho: self.marginal_rho(frame, psi_points),
        }
    }
}

/// The `(tu, tv, chi)` marginal of a pair measure.
///
/// For the product kind this is an honest density; for the aligned and
/// discrete kinds the mass sits on lower-dimensional sets, so only cell
/// masses and integrals are defined.
#[derive(Debug, Clone)]
pub struct MarginalRho {
    kind: RhoKind,
    psi_points: usize,
}

#[derive(Debug, Clone)]
enum RhoKind {
    ProductUniform,
    Aligned { sign: i8 },
    Atoms(Vec<(f64, f64, f64, f64)>),
}

/// Half-open interval used for cell masses.
fn in_cell(x: f64, cell: (f64, f64)) -> bool {
    x >= cell.0 && x < cell.1
}

impl MarginalRho {
    /// Density at `(tu, tv, chi)`, integrating the pair density over the
    /// inner azimuth-sum window `[-pi + |chi|/2, pi - |chi|/2]`.
    ///
    /// Errors for kinds whose marginal has point masses.
    pub fn density(&self, theta_u: f64, theta_v: f64, chi: f64) -> Result<f64> {
        match &self.kind {
            RhoKind::ProductUniform => {
                let width = TAU - chi.abs();
                if width <= 0.0 {
                    return Ok(0.0);
                }
                // The product density does not depend on the azimuths, so
                // the window integral is width times the density.
                Ok(width * theta_u.sin() * theta_v.sin() / (16.0 * PI * PI))
            }
            _ => Err(Error::AtomicMeasure),
        }
    }

    /// Probability mass of a half-open box in `(tu, tv, chi)`.
    pub fn cell_mass(&self, tu: (f64, f64), tv: (f64, f64), chi: (f64, f64)) -> f64 {
        match &self.kind {
            RhoKind::ProductUniform => {
                let cu = (tu.0.cos() - tu.1.cos()).max(0.0);
                let cv = (tv.0.cos() - tv.1.cos()).max(0.0);
                let lo = chi.0.clamp(-TAU, TAU);
                let hi = chi.1.clamp(-TAU, TAU);
                if hi <= lo {
                    return 0.0;
                }
                // int (2pi - |x|) dx, split at zero.
                let prim = |x: f64| TAU * x - 0.5 * x * x * x.signum();
                let tent = prim(hi) - prim(lo);
                cu * cv * tent / (16.0 * PI * PI)
            }
            RhoKind::Aligned { sign } => {
                let (theta_lo, theta_hi, chi_share) = match sign {
                    1 => (tv.0, tv.1, if in_cell(0.0, chi) { 1.0 } else { 0.0 }),
                    _ => {
                        let share = 0.5 * (in_cell(PI, chi) as u8 + in_cell(-PI, chi) as u8) as f64;
                        (PI - tv.1, PI - tv.0, share)
                    }
                };
                let lo = tu.0.max(theta_lo).clamp(0.0, PI);
                let hi = tu.1.min(theta_hi).clamp(0.0, PI);
                if hi <= lo || chi_share == 0.0 {
                    return 0.0;
                }
                chi_share * 0.5 * (lo.cos() - hi.cos())
            }
            RhoKind::Atoms(atoms) => atoms
                .iter()
                .filter(|(a_tu, a_tv, a_chi, _)| {
                    in_cell(*a_tu, tu) && in_cell(*a_tv, tv) && in_cell(*a_chi, chi)
                })
                .map(|(_, _, _, w)| w)
                .sum(),
        }
    }

    /// Expectation of `g(tu, tv, chi)` under this marginal.
    pub fn integrate(&self, res: &Resolution, g: impl Fn(f64, f64, f64) -> f64 + Sync) -> f64 {
        match &self.kind {
            RhoKind::ProductUniform => {
                let (thetas, tw) = polar_nodes(res.theta);
                let n_chi = (4 * res.azimuthal).max(64);
                let (chis, hchi) = midpoint_nodes(n_chi, -TAU, TAU);
                // Discrete mass for renormalization: the polar weights are
                // already a probability, the chi tent integrates to one
                // after the same rule.
                let tent: f64 = chis.iter().map(|c| (TAU - c.abs()).max(0.0)).sum::<f64>()
                    * hchi
                    / (4.0 * PI * PI);
                par_block_sum(thetas.len(), |i| {
                    let tu = thetas[i];
                    let mut acc = 0.0;
                    for (j, &tv) in thetas.iter().enumerate() {
                        let mut inner = 0.0;
                        for &chi in &chis {
                            inner += (TAU - chi.abs()).max(0.0) * g(tu, tv, chi);
                        }
                        acc += tw[j] * inner * hchi / (4.0 * PI * PI);
                    }
                    tw[i] * acc
                }) / tent
            }
            RhoKind::Aligned { sign } => {
                let (thetas, tw) = polar_nodes(res.theta);
                par_block_sum(thetas.len(), |i| {
                    let tu = thetas[i];
                    let val = if *sign == 1 {
                        g(tu, tu, 0.0)
                    } else {
                        0.5 * (g(tu, PI - tu, PI) + g(tu, PI - tu, -PI))
                    };
                    tw[i] * val
                })
            }
            RhoKind::Atoms(atoms) => atoms
                .iter()
                .map(|(tu, tv, chi, w)| w * g(*tu, *tv, *chi))
                .sum(),
        }
    }

    /// Number of points of the inner azimuth-sum quadrature, kept so the
    /// density path stays configurable even though the built-in product
    /// density is azimuth-free.
    pub fn psi_points(&self) -> usize {
        self.psi_points
    }
}

/// The `(tu, tv)` marginal, i.e. the chi integral of [`MarginalRho`].
#[derive(Debug, Clone)]
pub struct MarginalMu {
    rho: MarginalRho,
}

impl MarginalMu {
    /// Density at `(tu, tv)` by quadrature over `chi`; errors for kinds
    /// with point masses.
    pub fn density(&self, theta_u: f64, theta_v: f64) -> Result<f64> {
        match &self.rho.kind {
            RhoKind::ProductUniform => {
                let (chis, h) = midpoint_nodes(1024, -TAU, TAU);
                let mut acc = 0.0;
                for &chi in &chis {
                    acc += self.rho.density(theta_u, theta_v, chi)?;
                }
                Ok(acc * h)
            }
            _ => Err(Error::AtomicMeasure),
        }
    }

    pub fn cell_mass(&self, tu: (f64, f64), tv: (f64, f64)) -> f64 {
        self.rho.cell_mass(tu, tv, (-TAU - 1.0, TAU + 1.0))
    }

    /// Expectation of `g(tu, tv)` under this marginal.
    pub fn integrate(&self, res: &Resolution, g: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
        self.rho.integrate(res, |tu, tv, _chi| g(tu, tv))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn small_res() -> Resolution {
        Resolution::new(24, 64, 32)
    }

    #[test]
    fn aligned_sampling_is_exactly_antipodal() {
        let m = VectorPairMeasure::aligned_uniform(-1).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (u, v) = m.sample_pair(&mut rng);
            assert_eq!(v.x(), -u.x());
            assert_eq!(v.y(), -u.y());
            assert_eq!(v.z(), -u.z());
        }
    }

    #[test]
    fn product_sampling_has_uncorrelated_pairs() {
        let m = VectorPairMeasure::product_uniform();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let est = crate::quad::monte_carlo_mean(
            &mut rng,
            1_000_000,
            |r| m.sample_pair(r),
            |(u, v)| u.dot(v),
        )
        .unwrap();
        assert!(est.mean.abs() < 4.0 * est.stderr);
    }

    #[test]
    fn single_atom_grid_always_returns_it() {
        let m = VectorPairMeasure::custom_grid(&[GridAtom {
            theta_u: PI / 2.0,
            phi_u: 0.0,
            theta_v: PI / 2.0,
            phi_v: 0.0,
            weight: 1.0,
        }])
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..10 {
            let (u, v) = m.sample_pair(&mut rng);
            assert_abs_diff_eq!(u.x(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v.x(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(VectorPairMeasure::custom_grid(&[]).is_err());
        assert!(VectorPairMeasure::custom_grid(&[GridAtom {
            theta_u: 0.0,
            phi_u: 0.0,
            theta_v: 0.0,
            phi_v: 0.0,
            weight: -1.0,
        }])
        .is_err());
        assert!(VectorPairMeasure::aligned_uniform(2).is_err());
    }

    #[test]
    fn views_are_normalized() {
        let res = small_res();
        for m in [
            VectorPairMeasure::product_uniform(),
            VectorPairMeasure::aligned_uniform(-1).unwrap(),
            VectorPairMeasure::aligned_uniform(1).unwrap(),
        ] {
            let view = m.quadrature_view(&res).unwrap();
            assert_abs_diff_eq!(view.total_weight(), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn aligned_view_reduces_to_two_variables() {
        let res = small_res();
        let view = VectorPairMeasure::aligned_uniform(-1)
            .unwrap()
            .quadrature_view(&res)
            .unwrap();
        assert_eq!(view.dimension, 2);
        assert_eq!(view.nodes.len(), res.theta * res.azimuthal);
        let uv = view.expectation(|n| n.u.dot(&n.v));
        assert_abs_diff_eq!(uv, -1.0, epsilon = 1e-10);
    }

    #[test]
    fn oversized_view_is_refused() {
        let res = Resolution::default();
        assert!(VectorPairMeasure::product_uniform()
            .quadrature_view(&res)
            .is_err());
        // Streaming path still works at the same resolution.
        let one = VectorPairMeasure::product_uniform().integrate_pairs(&res, |_, _| 1.0);
        assert_abs_diff_eq!(one, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rho_density_matches_psi_quadrature_oracle() {
        let m = VectorPairMeasure::product_uniform();
        let rho = m.marginal_rho(&Frame::canonical(), 64);
        for &(tu, tv, chi) in &[
            (0.7, 1.9, 0.0),
            (1.2, 0.4, 1.5),
            (2.0, 2.5, -3.0),
            (0.3, 0.3, 5.8),
        ] {
            // Oracle: integrate the pair density over the psi window with
            // an independent fine midpoint rule.
            let half = chi.abs() / 2.0;
            let (lo, hi) = (-PI + half, PI - half);
            let oracle = if hi <= lo {
                0.0
            } else {
                let (psis, h) = midpoint_nodes(20_000, lo, hi);
                psis.iter()
                    .map(|&psi| {
                        m.pair_density(&PairAngles {
                            theta_u: tu,
                            phi_u: psi + chi / 2.0,
                            theta_v: tv,
                            phi_v: psi - chi / 2.0,
                        })
                        .unwrap()
                    })
                    .sum::<f64>()
                    * h
            };
            assert_abs_diff_eq!(rho.density(tu, tv, chi).unwrap(), oracle, epsilon = 1e-10);
        }
        // Empty window at the end of the chi range.
        assert_eq!(rho.density(1.0, 1.0, TAU).unwrap(), 0.0);
        assert_eq!(rho.density(1.0, 1.0, -TAU).unwrap(), 0.0);
    }

    #[test]
    fn rho_normalization_product() {
        let m = VectorPairMeasure::product_uniform();
        let rho = m.marginal_rho(&Frame::canonical(), 32);
        let total = rho.integrate(&small_res(), |_, _, _| 1.0);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        // Direct 3d quadrature of the density as an independent check.
        let theta_grid = crate::quad::gauss_legendre(32, 0.0, PI).unwrap();
        let (chis, h) = midpoint_nodes(512, -TAU, TAU);
        let mut acc = 0.0;
        for nu in &theta_grid.nodes {
            for nv in &theta_grid.nodes {
                let mut inner = 0.0;
                for &chi in &chis {
                    inner += rho.density(nu.point[0], nv.point[0], chi).unwrap();
                }
                acc += nu.weight * nv.weight * inner * h;
            }
        }
        assert_abs_diff_eq!(acc, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn mu_density_matches_closed_form() {
        let m = VectorPairMeasure::product_uniform();
        let mu = m.marginal_mu(&Frame::canonical(), 32);
        for &(tu, tv) in &[(0.5, 0.5), (1.0, 2.2), (2.9, 0.2)] {
            let expect = tu.sin() * tv.sin() / 4.0;
            assert_abs_diff_eq!(mu.density(tu, tv).unwrap(), expect, epsilon = 1e-6);
        }
        let total = mu.integrate(&small_res(), |_, _| 1.0);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn aligned_marginals_sit_on_the_antipodal_curve() {
        let m = VectorPairMeasure::aligned_uniform(-1).unwrap();
        let mu = m.marginal_mu(&Frame::canonical(), 8);
        // Mass concentrates on tv = pi - tu.
        let on = mu.cell_mass((0.9, 1.1), (PI - 1.1, PI - 0.9));
        let off = mu.cell_mass((0.9, 1.1), (0.2, 0.4));
        assert!(on > 0.0);
        assert_eq!(off, 0.0);
        let total = mu.cell_mass((0.0, PI + 1e-9), (0.0, PI + 1e-9));
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        // Chi atoms at plus/minus pi carry half the mass each.
        let rho = m.marginal_rho(&Frame::canonical(), 8);
        let plus = rho.cell_mass((0.0, PI + 1e-9), (0.0, PI + 1e-9), (0.0, TAU));
        assert_abs_diff_eq!(plus, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn marginal_consistency_rho_vs_mu() {
        // For every kind: summing rho cells over chi reproduces mu cells
        // on a 16 x 16 polar grid.
        let atoms = [
            GridAtom { theta_u: 0.4, phi_u: 0.3, theta_v: 1.8, phi_v: -2.0, weight: 0.25 },
            GridAtom { theta_u: 2.1, phi_u: -1.0, theta_v: 0.6, phi_v: 2.8, weight: 0.75 },
        ];
        for m in [
            VectorPairMeasure::product_uniform(),
            VectorPairMeasure::aligned_uniform(-1).unwrap(),
            VectorPairMeasure::aligned_uniform(1).unwrap(),
            VectorPairMeasure::custom_grid(&atoms).unwrap(),
        ] {
            let rho = m.marginal_rho(&Frame::canonical(), 16);
            let mu = m.marginal_mu(&Frame::canonical(), 16);
            let n = 16;
            let h = PI / n as f64;
            let n_chi = 64;
            let hc = 2.0 * TAU / n_chi as f64;
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let tu = (i as f64 * h, (i + 1) as f64 * h + if i == n - 1 { 1e-9 } else { 0.0 });
                    let tv = (j as f64 * h, (j + 1) as f64 * h + if j == n - 1 { 1e-9 } else { 0.0 });
                    let mut sum = 0.0;
                    for k in 0..n_chi {
                        let c = (-TAU + k as f64 * hc, -TAU + (k + 1) as f64 * hc);
                        sum += rho.cell_mass(tu, tv, c);
                    }
                    worst = worst.max((sum - mu.cell_mass(tu, tv)).abs());
                }
            }
            assert!(worst < 1e-6, "{}: worst {:.2e}", m.name(), worst);
        }
    }

    #[test]
    fn frame_angle_integrals_match_pair_integrals() {
        // Both streaming forms compute the same expectation for an
        // integrand expressible either way.
        let res = small_res();
        let f = Frame::canonical();
        for m in [
            VectorPairMeasure::product_uniform(),
            VectorPairMeasure::aligned_uniform(-1).unwrap(),
        ] {
            // E[(p.u)^2 + (p.v)^2] via vectors and via frame angles.
            let via_pairs = m.integrate_pairs(&res, |u, v| u.z() * u.z() + v.z() * v.z());
            let via_angles =
                m.integrate_frame_angles(&f, &res, |tu, tv, _| tu.cos().powi(2) + tv.cos().powi(2));
            assert_abs_diff_eq!(via_pairs, via_angles, epsilon = 1e-10);
        }
    }

    #[test]
    fn custom_grid_normalizes_weights() {
        let atoms = [
            GridAtom { theta_u: 1.0, phi_u: 0.0, theta_v: 1.0, phi_v: 0.0, weight: 2.0 },
            GridAtom { theta_u: 2.0, phi_u: 1.0, theta_v: 2.0, phi_v: 1.0, weight: 2.0 },
        ];
        let m = VectorPairMeasure::custom_grid(&atoms).unwrap();
        let view = m.quadrature_view(&small_res()).unwrap();
        assert_eq!(view.nodes.len(), 2);
        assert_abs_diff_eq!(view.nodes[0].weight, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(view.total_weight(), 1.0, epsilon = 1e-15);
    }
}
