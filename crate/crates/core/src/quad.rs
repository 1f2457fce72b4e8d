//! Integration backends: deterministic product quadrature and seeded
//! Monte Carlo with standard errors.
//!
//! Polar integrals use Gauss-Legendre rules; periodic azimuthal integrals
//! use uniform midpoint rules, which are spectrally accurate for smooth
//! periodic integrands. Parallel reductions are chunked with a fixed
//! order so results do not depend on the thread count.

use rayon::prelude::*;

use crate::{Error, Result};

/// Nodes and weights of a (possibly multi-dimensional) quadrature rule.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<GridNode>,
    pub dimension: usize,
}

#[derive(Debug, Clone)]
pub struct GridNode {
    pub point: Vec<f64>,
    pub weight: f64,
}

impl QuadratureGrid {
    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// Applies the rule to a function of the node coordinates.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.weight * f(&n.point))
            .sum()
    }
}

/// One-dimensional Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence; accurate to machine
/// precision for the orders used here.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and P_n' by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    if n == 1 {
        nodes[0] = 0.0;
        weights[0] = 2.0;
    }
    (nodes, weights)
}

/// `n`-point Gauss-Legendre rule mapped to `[lo, hi]`.
pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> Result<QuadratureGrid> {
    if n < 1 {
        return Err(Error::invalid("gauss_legendre needs n >= 1"));
    }
    if !(lo < hi) {
        return Err(Error::invalid(format!(
            "gauss_legendre needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    let (xs, ws) = gauss_legendre_unit(n);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let nodes = xs
        .iter()
        .zip(&ws)
        .map(|(&x, &w)| GridNode {
            point: vec![mid + half * x],
            weight: w * half,
        })
        .collect();
    Ok(QuadratureGrid {
        nodes,
        dimension: 1,
    })
}

/// Uniform midpoint rule on `[lo, hi]`, exact total weight.
///
/// For integrands periodic on the interval this converges spectrally.
pub fn uniform_midpoint(n: usize, lo: f64, hi: f64) -> Result<QuadratureGrid> {
    if n < 1 {
        return Err(Error::invalid("uniform_midpoint needs n >= 1"));
    }
    if !(lo < hi) {
        return Err(Error::invalid(format!(
            "uniform_midpoint needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    let h = (hi - lo) / n as f64;
    let nodes = (0..n)
        .map(|i| GridNode {
            point: vec![lo + (i as f64 + 0.5) * h],
            weight: h,
        })
        .collect();
    Ok(QuadratureGrid {
        nodes,
        dimension: 1,
    })
}

/// Midpoint nodes without the grid wrapper, for hot loops.
pub(crate) fn midpoint_nodes(n: usize, lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let h = (hi - lo) / n as f64;
    let nodes = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
    (nodes, h)
}

/// Tensor product of the given grids; weights multiply.
pub fn product_grid(grids: &[QuadratureGrid]) -> Result<QuadratureGrid> {
    if grids.is_empty() {
        return Err(Error::invalid("product_grid needs at least one grid"));
    }
    let dimension = grids.iter().map(|g| g.dimension).sum();
    let mut nodes = vec![GridNode {
        point: Vec::new(),
        weight: 1.0,
    }];
    for grid in grids {
        let mut next = Vec::with_capacity(nodes.len() * grid.nodes.len());
        for base in &nodes {
            for n in &grid.nodes {
                let mut point = base.point.clone();
                point.extend_from_slice(&n.point);
                next.push(GridNode {
                    point,
                    weight: base.weight * n.weight,
                });
            }
        }
        nodes = next;
    }
    Ok(QuadratureGrid { nodes, dimension })
}

/// Mean, standard error and sample count of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

/// Streaming mean/stderr over `n` draws. Same seed, same result, bitwise.
pub fn monte_carlo_mean<R, T>(
    rng: &mut R,
    n: u64,
    mut sample: impl FnMut(&mut R) -> T,
    f: impl Fn(&T) -> f64,
) -> Result<McEstimate>
where
    R: rand::Rng,
{
    if n < 2 {
        return Err(Error::invalid(
            "monte_carlo_mean needs n >= 2 for a standard error",
        ));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let x = f(&sample(rng));
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(McEstimate {
        mean,
        stderr: (var / n as f64).max(0.0).sqrt(),
        n,
    })
}

/// Deterministic parallel sum: blocks are reduced independently and then
/// combined in index order, so the result does not depend on how rayon
/// schedules them.
pub fn par_block_sum(blocks: usize, block: impl Fn(usize) -> f64 + Send + Sync) -> f64 {
    if blocks == 0 {
        return 0.0;
    }
    let partials: Vec<f64> = (0..blocks).into_par_iter().map(block).collect();
    partials.iter().sum()
}

/// Weighted sum of `|x - y|` over all pairs of two sorted weighted point
/// sets, in a single merge sweep.
///
/// Equivalent to the full double loop: for each `y`, points below
/// contribute `y W - S` and points above `S - y W`, with `W`/`S` the
/// cumulative weight and weighted sum of the `x` side.
pub(crate) fn weighted_abs_diff_sum(xs: &[(f64, f64)], ys: &[(f64, f64)]) -> f64 {
    debug_assert!(xs.windows(2).all(|w| w[0].0 <= w[1].0));
    debug_assert!(ys.windows(2).all(|w| w[0].0 <= w[1].0));
    let total_w: f64 = xs.iter().map(|p| p.1).sum();
    let total_s: f64 = xs.iter().map(|p| p.0 * p.1).sum();
    let mut below_w = 0.0;
    let mut below_s = 0.0;
    let mut i = 0;
    let mut acc = 0.0;
    for &(y, wy) in ys {
        while i < xs.len() && xs[i].0 <= y {
            below_w += xs[i].1;
            below_s += xs[i].0 * xs[i].1;
            i += 1;
        }
        let above_w = total_w - below_w;
        let above_s = total_s - below_s;
        acc += wy * ((y * below_w - below_s) + (above_s - y * above_w));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    use crate::geometry::UnitVector;

    #[test]
    fn single_point_rule_is_midpoint() {
        let g = gauss_legendre(1, -1.0, 1.0).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_abs_diff_eq!(g.nodes[0].point[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.nodes[0].weight, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn two_point_rule_matches_reference() {
        let g = gauss_legendre(2, -1.0, 1.0).unwrap();
        let inv_sqrt3 = 1.0 / 3.0f64.sqrt();
        assert_abs_diff_eq!(g.nodes[0].point[0], -inv_sqrt3, epsilon = 1e-15);
        assert_abs_diff_eq!(g.nodes[1].point[0], inv_sqrt3, epsilon = 1e-15);
        assert_abs_diff_eq!(g.nodes[0].weight, 1.0, epsilon = 1e-15);
        // Exact for cubics: int x^2 over [-1,1] = 2/3.
        let v = g.integrate(|p| p[0] * p[0]);
        assert_abs_diff_eq!(v, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_bounds_are_rejected() {
        assert!(gauss_legendre(4, 1.0, 1.0).is_err());
        assert!(gauss_legendre(4, 2.0, -1.0).is_err());
        assert!(gauss_legendre(0, 0.0, 1.0).is_err());
        assert!(uniform_midpoint(0, 0.0, 1.0).is_err());
    }

    #[test]
    fn product_of_two_grids() {
        let g = gauss_legendre(2, -1.0, 1.0).unwrap();
        let p = product_grid(&[g.clone(), g]).unwrap();
        assert_eq!(p.nodes.len(), 4);
        assert_eq!(p.dimension, 2);
        assert_abs_diff_eq!(p.total_weight(), 4.0, epsilon = 1e-14);
        let v = p.integrate(|q| q[0] * q[0] * q[1] * q[1]);
        assert_abs_diff_eq!(v, 4.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn empty_product_is_rejected() {
        assert!(product_grid(&[]).is_err());
    }

    #[test]
    fn smooth_convergence_below_1e8_by_64() {
        // Smooth but not polynomial; error should drop monotonically with
        // refinement until it reaches the requested level.
        let exact = 2.0 * 3.0f64.sinh() / 3.0;
        let mut prev = f64::INFINITY;
        for n in [4usize, 8, 16, 32, 64] {
            let g = gauss_legendre(n, -1.0, 1.0).unwrap();
            let err = (g.integrate(|p| (3.0 * p[0]).exp()) - exact).abs();
            assert!(err <= prev + 1e-15, "error grew at n = {n}");
            prev = err;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn mc_constant_has_zero_stderr() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let est = monte_carlo_mean(&mut rng, 1000, |r| r.random::<f64>(), |_| 2.5).unwrap();
        assert_eq!(est.mean, 2.5);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn mc_needs_two_samples() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        assert!(monte_carlo_mean(&mut rng, 1, |r| r.random::<f64>(), |x| *x).is_err());
    }

    #[test]
    fn mc_is_deterministic_per_seed() {
        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(123);
            monte_carlo_mean(&mut rng, 5000, |r| r.random::<f64>(), |x| x * x).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn mc_sphere_component_is_centered() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let est = monte_carlo_mean(
            &mut rng,
            1_000_000,
            |r| UnitVector::from_uniforms(r.random(), r.random()),
            |u| u.z(),
        )
        .unwrap();
        assert!(est.mean.abs() < 4.0 * est.stderr.max(1e-9));
    }

    #[test]
    fn mc_squared_projection_matches_quadrature_oracle() {
        // Oracle: the projection on a fixed axis is uniform on [-1, 1], so
        // its square integrates to 1/3; checked by a 1d rule.
        let g = gauss_legendre(32, -1.0, 1.0).unwrap();
        let oracle = 0.5 * g.integrate(|p| p[0] * p[0]);
        assert_abs_diff_eq!(oracle, 1.0 / 3.0, epsilon = 1e-12);

        let a = UnitVector::new(0.3, -0.5, 0.8).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let est = monte_carlo_mean(
            &mut rng,
            1_000_000,
            |r| UnitVector::from_uniforms(r.random(), r.random()),
            |u| u.dot(&a).powi(2),
        )
        .unwrap();
        assert!((est.mean - oracle).abs() < 4.0 * est.stderr);
    }

    #[test]
    fn abs_diff_sweep_matches_double_loop() {
        let xs: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 * 0.07 - 1.0, 0.3 + 0.01 * i as f64)).collect();
        let ys: Vec<(f64, f64)> = (0..33).map(|i| (i as f64 * 0.09 - 1.2, 0.5 + 0.02 * i as f64)).collect();
        let brute: f64 = xs
            .iter()
            .flat_map(|&(x, wx)| ys.iter().map(move |&(y, wy)| wx * wy * (x - y).abs()))
            .sum();
        let fast = weighted_abs_diff_sum(&xs, &ys);
        assert_abs_diff_eq!(fast, brute, epsilon = 1e-10);
    }

    #[test]
    fn par_block_sum_is_thread_count_independent() {
        let f = |i: usize| ((i * 2654435761) % 1000) as f64 * 1e-3;
        let serial: f64 = (0..512).map(f).sum();
        let parallel = par_block_sum(512, f);
        assert_eq!(serial.to_bits(), parallel.to_bits());
    }
}
