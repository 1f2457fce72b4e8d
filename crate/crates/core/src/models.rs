//! Conditional outcome models `P(sigma, tau | u, v; a, b)`.
//!
//! Every hidden-variable builtin reproduces the spin Malus marginal
//! `P(sigma | u, v; a) = (1 + sigma u.a) / 2` exactly; they differ in how
//! the two arms are coupled:
//!
//! * `ProductMalus` — independent arms, the joint factorizes.
//! * `ComonotoneMalus` — both thresholds driven by one shared latent
//!   uniform, the maximal coupling compatible with the marginals.
//! * `AntitoneMalus` — the shared latent drives the arms in opposite
//!   directions, the minimal coupling.
//! * `DeterministicMalus` — two independent latents exposed explicitly;
//!   averaging them out gives `ProductMalus`.
//!
//! `QmSinglet` is the quantum reference point; it ignores the hidden pair
//! and is not a hidden-variable model.

use crate::geometry::UnitVector;

/// A detector outcome, `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn value(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }
}

/// Expression over the two dot products `ua = u.a` and `vb = v.b`,
/// used for correlator-form models loaded from configuration text.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelatorExpr {
    Num(f64),
    DotUA,
    DotVB,
    Neg(Box<CorrelatorExpr>),
    Add(Box<CorrelatorExpr>, Box<CorrelatorExpr>),
    Sub(Box<CorrelatorExpr>, Box<CorrelatorExpr>),
    Mul(Box<CorrelatorExpr>, Box<CorrelatorExpr>),
    Div(Box<CorrelatorExpr>, Box<CorrelatorExpr>),
    Abs(Box<CorrelatorExpr>),
    Min(Box<CorrelatorExpr>, Box<CorrelatorExpr>),
    Max(Box<CorrelatorExpr>, Box<CorrelatorExpr>),
}

impl CorrelatorExpr {
    pub fn eval(&self, ua: f64, vb: f64) -> f64 {
        match self {
            CorrelatorExpr::Num(c) => *c,
            CorrelatorExpr::DotUA => ua,
            CorrelatorExpr::DotVB => vb,
            CorrelatorExpr::Neg(e) => -e.eval(ua, vb),
            CorrelatorExpr::Add(a, b) => a.eval(ua, vb) + b.eval(ua, vb),
            CorrelatorExpr::Sub(a, b) => a.eval(ua, vb) - b.eval(ua, vb),
            CorrelatorExpr::Mul(a, b) => a.eval(ua, vb) * b.eval(ua, vb),
            CorrelatorExpr::Div(a, b) => a.eval(ua, vb) / b.eval(ua, vb),
            CorrelatorExpr::Abs(e) => e.eval(ua, vb).abs(),
            CorrelatorExpr::Min(a, b) => a.eval(ua, vb).min(b.eval(ua, vb)),
            CorrelatorExpr::Max(a, b) => a.eval(ua, vb).max(b.eval(ua, vb)),
        }
    }
}

impl std::fmt::Display for CorrelatorExpr {
    /// Canonical form with explicit parentheses; reparsing it yields an
    /// identical tree.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CorrelatorExpr::Num(c) => write!(f, "{c}"),
            CorrelatorExpr::DotUA => write!(f, "ua"),
            CorrelatorExpr::DotVB => write!(f, "vb"),
            CorrelatorExpr::Neg(e) => write!(f, "(-{e})"),
            CorrelatorExpr::Add(a, b) => write!(f, "({a} + {b})"),
            CorrelatorExpr::Sub(a, b) => write!(f, "({a} - {b})"),
            CorrelatorExpr::Mul(a, b) => write!(f, "({a} * {b})"),
            CorrelatorExpr::Div(a, b) => write!(f, "({a} / {b})"),
            CorrelatorExpr::Abs(e) => write!(f, "abs({e})"),
            CorrelatorExpr::Min(a, b) => write!(f, "min({a}, {b})"),
            CorrelatorExpr::Max(a, b) => write!(f, "max({a}, {b})"),
        }
    }
}

/// A conditional outcome model.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeModel {
    ProductMalus,
    ComonotoneMalus,
    AntitoneMalus,
    DeterministicMalus,
    QmSinglet,
    /// Malus-compliant model reconstructed from a correlator expression:
    /// the joint is `(1 + sigma ua + tau vb + sigma tau C(ua, vb)) / 4`.
    CorrelatorForm(CorrelatorExpr),
}

impl OutcomeModel {
    pub fn name(&self) -> &'static str {
        match self {
            OutcomeModel::ProductMalus => "product_malus",
            OutcomeModel::ComonotoneMalus => "comonotone_malus",
            OutcomeModel::AntitoneMalus => "antitone_malus",
            OutcomeModel::DeterministicMalus => "deterministic_malus",
            OutcomeModel::QmSinglet => "qm_singlet",
            OutcomeModel::CorrelatorForm(_) => "correlator_form",
        }
    }

    /// False only for the quantum reference, which carries no hidden pair.
    pub fn is_hidden_variable(&self) -> bool {
        !matches!(self, OutcomeModel::QmSinglet)
    }

    /// Whether the model exposes an explicit deterministic latent form.
    pub fn has_latent_form(&self) -> bool {
        matches!(self, OutcomeModel::DeterministicMalus)
    }

    pub fn joint_prob(
        &self,
        sigma: Outcome,
        tau: Outcome,
        u: &UnitVector,
        v: &UnitVector,
        a: &UnitVector,
        b: &UnitVector,
    ) -> f64 {
        self.joint_xy(sigma, tau, u.dot(a), v.dot(b), a.dot(b))
    }

    /// Joint probability as a function of the two dot products. `ab` is
    /// only used by the quantum reference.
    pub fn joint_xy(&self, sigma: Outcome, tau: Outcome, ua: f64, vb: f64, ab: f64) -> f64 {
        let s = sigma.value();
        let t = tau.value();
        match self {
            OutcomeModel::ProductMalus | OutcomeModel::DeterministicMalus => {
                0.25 * (1.0 + s * ua) * (1.0 + t * vb)
            }
            OutcomeModel::ComonotoneMalus => {
                let pa = 0.5 * (1.0 + ua);
                let pb = 0.5 * (1.0 + vb);
                match (sigma, tau) {
                    (Outcome::Plus, Outcome::Plus) => pa.min(pb),
                    (Outcome::Plus, Outcome::Minus) => (pa - pb).max(0.0),
                    (Outcome::Minus, Outcome::Plus) => (pb - pa).max(0.0),
                    (Outcome::Minus, Outcome::Minus) => 1.0 - pa.max(pb),
                }
            }
            OutcomeModel::AntitoneMalus => {
                let pa = 0.5 * (1.0 + ua);
                let pb = 0.5 * (1.0 + vb);
                match (sigma, tau) {
                    (Outcome::Plus, Outcome::Plus) => (pa + pb - 1.0).max(0.0),
                    (Outcome::Plus, Outcome::Minus) => pa.min(1.0 - pb),
                    (Outcome::Minus, Outcome::Plus) => pb.min(1.0 - pa),
                    (Outcome::Minus, Outcome::Minus) => (1.0 - pa - pb).max(0.0),
                }
            }
            OutcomeModel::QmSinglet => 0.25 * (1.0 - s * t * ab),
            OutcomeModel::CorrelatorForm(expr) => {
                0.25 * (1.0 + s * ua + t * vb + s * t * expr.eval(ua, vb))
            }
        }
    }

    /// Conditional correlator `sum sigma tau P` as a function of the dot
    /// products.
    pub fn correlator_xy(&self, ua: f64, vb: f64, ab: f64) -> f64 {
        match self {
            OutcomeModel::ProductMalus | OutcomeModel::DeterministicMalus => ua * vb,
            OutcomeModel::ComonotoneMalus => 1.0 - (ua - vb).abs(),
            OutcomeModel::AntitoneMalus => -1.0 + (ua + vb).abs(),
            OutcomeModel::QmSinglet => -ab,
            OutcomeModel::CorrelatorForm(expr) => expr.eval(ua, vb),
        }
    }

    /// Draws an outcome pair using inverse transform sampling on the
    /// fixed order `(+,+), (+,-), (-,+), (-,-)` from a single uniform.
    pub fn sample_outcomes(
        &self,
        u: &UnitVector,
        v: &UnitVector,
        a: &UnitVector,
        b: &UnitVector,
        uniform: f64,
    ) -> (Outcome, Outcome) {
        let ua = u.dot(a);
        let vb = v.dot(b);
        let ab = a.dot(b);
        let mut acc = 0.0;
        for sigma in Outcome::BOTH {
            for tau in Outcome::BOTH {
                acc += self.joint_xy(sigma, tau, ua, vb, ab);
                if uniform < acc {
                    return (sigma, tau);
                }
            }
        }
        (Outcome::Minus, Outcome::Minus)
    }
}

/// Outcome-independent Malus joint: `(1 + sigma u.a)(1 + tau v.b) / 4`.
pub fn product_malus_joint(
    sigma: Outcome,
    tau: Outcome,
    u: &UnitVector,
    v: &UnitVector,
    a: &UnitVector,
    b: &UnitVector,
) -> f64 {
    OutcomeModel::ProductMalus.joint_prob(sigma, tau, u, v, a, b)
}

/// Joint induced by a single shared uniform latent driving both threshold
/// rules in the same direction; saturates the upper envelope
/// `C = 1 - |u.a - v.b|`.
pub fn comonotone_malus_joint(
    sigma: Outcome,
    tau: Outcome,
    u: &UnitVector,
    v: &UnitVector,
    a: &UnitVector,
    b: &UnitVector,
) -> f64 {
    OutcomeModel::ComonotoneMalus.joint_prob(sigma, tau, u, v, a, b)
}

/// Joint induced by a shared latent driving the arms in opposite
/// directions; saturates the lower envelope `C = -1 + |u.a + v.b|`.
pub fn antitone_malus_joint(
    sigma: Outcome,
    tau: Outcome,
    u: &UnitVector,
    v: &UnitVector,
    a: &UnitVector,
    b: &UnitVector,
) -> f64 {
    OutcomeModel::AntitoneMalus.joint_prob(sigma, tau, u, v, a, b)
}

/// Deterministic latent form: indicator that the outcomes equal the
/// threshold rules `sigma = sign((1 + u.a)/2 - l1)`,
/// `tau = sign((1 + v.b)/2 - l2)`. Averaging over uniform `(l1, l2)`
/// reproduces [`product_malus_joint`].
pub fn deterministic_malus_joint(
    sigma: Outcome,
    tau: Outcome,
    u: &UnitVector,
    v: &UnitVector,
    l1: f64,
    l2: f64,
    a: &UnitVector,
    b: &UnitVector,
) -> f64 {
    let pa = 0.5 * (1.0 + u.dot(a));
    let pb = 0.5 * (1.0 + v.dot(b));
    let s = if pa - l1 >= 0.0 { Outcome::Plus } else { Outcome::Minus };
    let t = if pb - l2 >= 0.0 { Outcome::Plus } else { Outcome::Minus };
    if s == sigma && t == tau {
        1.0
    } else {
        0.0
    }
}

/// Singlet-state joint `(1 - sigma tau a.b) / 4`; the quantum reference
/// the inequalities are compared against.
pub fn qm_singlet_joint(sigma: Outcome, tau: Outcome, a: &UnitVector, b: &UnitVector) -> f64 {
    0.25 * (1.0 - sigma.value() * tau.value() * a.dot(b))
}

/// All Malus-compliant builtins, in a fixed order used by scans and the
/// acceptance checks.
pub fn hidden_variable_builtins() -> Vec<OutcomeModel> {
    vec![
        OutcomeModel::ProductMalus,
        OutcomeModel::ComonotoneMalus,
        OutcomeModel::AntitoneMalus,
        OutcomeModel::DeterministicMalus,
    ]
}
