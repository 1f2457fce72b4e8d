//! Unit vectors, spherical coordinates and orthonormal frames.
//!
//! All angle conventions live here so that the integration code downstream
//! works on a single, consistent domain: polar angles in `[0, pi]`,
//! azimuths in `(-pi, pi]`.

use std::f64::consts::{PI, TAU};
use std::ops::Neg;

/// Tolerance for the unit-norm and orthogonality invariants.
pub const GEOMETRY_TOL: f64 = 1e-12;

/// A point on the unit sphere.
///
/// Instances are normalized on construction; the components are read-only
/// afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector {
    pub(crate) x: f64,
    pub(crate) y: f64,
    pub(crate) z: f64,
}

impl UnitVector {
    /// Normalizes the given components. Returns `None` for a null or
    /// non-finite vector.
    pub fn new(x: f64, y: f64, z: f64) -> Option<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return None;
        }
        Some(UnitVector {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    pub const X: UnitVector = UnitVector { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: UnitVector = UnitVector { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: UnitVector = UnitVector { x: 0.0, y: 0.0, z: 1.0 };

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// `(sin t cos p, sin t sin p, cos t)` for polar angle `t` and azimuth `p`.
    pub fn from_spherical(angles: SphericalAngles) -> Self {
        let (st, ct) = angles.theta.sin_cos();
        let (sp, cp) = angles.phi.sin_cos();
        UnitVector {
            x: st * cp,
            y: st * sp,
            z: ct,
        }
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &UnitVector) -> UnitVector {
        UnitVector {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    /// Polar angle and azimuth of this vector in the given frame.
    pub fn spherical_in(&self, frame: &Frame) -> SphericalAngles {
        let cz = self.dot(&frame.n).clamp(-1.0, 1.0);
        let theta = cz.acos();
        let cx = self.dot(&frame.e1);
        let cy = self.dot(&frame.e2);
        let phi = if cx == 0.0 && cy == 0.0 {
            0.0
        } else {
            cy.atan2(cx)
        };
        SphericalAngles::new(theta, phi)
    }

    /// Uniform sample on the sphere from two unit uniforms.
    pub(crate) fn from_uniforms(r1: f64, r2: f64) -> Self {
        let z = 1.0 - 2.0 * r1;
        let s = (1.0 - z * z).max(0.0).sqrt();
        let phi = TAU * r2 - PI;
        let (sp, cp) = phi.sin_cos();
        UnitVector {
            x: s * cp,
            y: s * sp,
            z,
        }
    }
}

impl Neg for UnitVector {
    type Output = UnitVector;

    fn neg(self) -> UnitVector {
        UnitVector {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

/// Polar angle in `[0, pi]` and azimuth in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalAngles {
    theta: f64,
    phi: f64,
}

impl SphericalAngles {
    /// Clamps the polar angle and wraps the azimuth onto the canonical
    /// domain.
    pub fn new(theta: f64, phi: f64) -> Self {
        SphericalAngles {
            theta: theta.clamp(0.0, PI),
            phi: wrap_azimuth(phi),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// Wraps an angle onto `(-pi, pi]`.
pub fn wrap_azimuth(phi: f64) -> f64 {
    if phi > -PI && phi <= PI {
        return phi;
    }
    let r = phi.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Right-handed orthonormal triple `(e1, e2, n)` spanning the detector
/// plane orthogonal to `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    e1: UnitVector,
    e2: UnitVector,
    n: UnitVector,
}

impl Frame {
    /// Deterministic frame for a plane normal.
    ///
    /// `e1` is the normalized rejection of the canonical axis with the
    /// smallest component along `n`, ties broken toward the x axis, so the
    /// construction is reproducible and never degenerate. For `n = Z` this
    /// yields the canonical frame `e1 = X`, `e2 = Y`.
    pub fn orthonormal(n: UnitVector) -> Frame {
        let axes = [UnitVector::X, UnitVector::Y, UnitVector::Z];
        let mut best = 0;
        let mut best_abs = f64::INFINITY;
        for (i, axis) in axes.iter().enumerate() {
            let c = axis.dot(&n).abs();
            if c < best_abs - GEOMETRY_TOL {
                best = i;
                best_abs = c;
            }
        }
        let c = axes[best];
        let proj = c.dot(&n);
        let e1 = UnitVector::new(
            c.x - proj * n.x,
            c.y - proj * n.y,
            c.z - proj * n.z,
        )
        .expect("rejection of the least-aligned axis is nonzero");
        let e2 = n.cross(&e1);
        Frame { e1, e2, n }
    }

    pub fn canonical() -> Frame {
        Frame {
            e1: UnitVector::X,
            e2: UnitVector::Y,
            n: UnitVector::Z,
        }
    }

    pub fn e1(&self) -> UnitVector {
        self.e1
    }

    pub fn e2(&self) -> UnitVector {
        self.e2
    }

    pub fn normal(&self) -> UnitVector {
        self.n
    }

    /// Detector direction at the given azimuth inside the plane:
    /// `cos(az) e1 + sin(az) e2`.
    pub fn in_plane(&self, azimuth: f64) -> UnitVector {
        let (s, c) = azimuth.sin_cos();
        UnitVector {
            x: c * self.e1.x + s * self.e2.x,
            y: c * self.e1.y + s * self.e2.y,
            z: c * self.e1.z + s * self.e2.z,
        }
    }
}
