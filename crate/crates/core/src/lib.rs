//! Numerical laboratory for hidden-variable models of EPR-Bohm spin
//! correlations.
//!
//! The crate builds up, layer by layer, everything needed to evaluate the
//! inequality chain that constrains Malus-compliant local hidden-variable
//! models and to demonstrate its quantum-mechanical violation:
//!
//! * [`geometry`] — unit vectors, spherical angles, detector-plane frames.
//! * [`quad`] — Gauss-Legendre and uniform periodic quadrature, seeded
//!   Monte Carlo estimates.
//! * [`measures`] — the distribution of the hidden polarization pair
//!   `(u, v)` with its angular marginals.
//! * [`models`] — conditional outcome models `P(sigma, tau | u, v; a, b)`.
//! * [`engine`] — correlators, the `R`/`L`/`J` integrals, envelope and
//!   plane inequalities, the final two-plane bound, CHSH, and hypothesis
//!   checks.
//! * [`eventsim`] — finite-sample coincidence experiments.
//! * [`modelspec`] — the text format describing measures, models and jobs.
//! * [`report`] — CSV artifacts with reproducibility metadata.

pub mod engine;
pub mod eventsim;
pub mod geometry;
pub mod measures;
pub mod models;
pub mod modelspec;
pub mod quad;
pub mod report;

mod error;

pub use error::{Error, Result};

/// Grid sizes used by the deterministic integration routines.
///
/// Polar integrals use Gauss-Legendre rules with `theta` points per axis.
/// Periodic azimuthal integrals use uniform midpoint rules with
/// `azimuthal` points per axis, `xi` points for detector-plane averages
/// and `psi` points for the inner integral of the angular marginals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub theta: usize,
    pub azimuthal: usize,
    pub xi: usize,
    pub psi: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            theta: 64,
            azimuthal: 256,
            xi: 128,
            psi: 64,
        }
    }
}

impl Resolution {
    pub fn new(theta: usize, azimuthal: usize, xi: usize) -> Self {
        Resolution {
            theta,
            azimuthal,
            xi,
            psi: azimuthal.div_ceil(4).max(16),
        }
    }

    /// Coarsened copy used to estimate discretization error by comparison.
    pub fn halved(&self) -> Self {
        Resolution {
            theta: (self.theta / 2).max(8),
            azimuthal: (self.azimuthal / 2).max(32),
            xi: (self.xi / 2).max(8),
            psi: (self.psi / 2).max(8),
        }
    }
}
