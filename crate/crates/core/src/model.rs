//! Participants, attack parameters and the fork win probabilities.
//!
//! All hash power is normalised to one. Four classes of miner take part in
//! a round: the attacker (`alpha`), the infiltrated victim pool (`beta`,
//! excluding the attacker's infiltration), the bribed target pool (`eta`) and
//! everybody else (`delta`, always derived as the complement).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{integrate, ratio_or_zero};

/// Slack allowed when checking that `alpha + beta + eta <= 1`.
const NORMALISATION_SLACK: f64 = 1e-12;

/// Normalised mining power of the four participant classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PowerInput", into = "PowerInput")]
pub struct PowerProfile {
    alpha: f64,
    beta: f64,
    eta: f64,
    delta: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerInput {
    alpha: f64,
    beta: f64,
    eta: f64,
}

impl TryFrom<PowerInput> for PowerProfile {
    type Error = Error;

    fn try_from(p: PowerInput) -> Result<Self> {
        PowerProfile::new(p.alpha, p.beta, p.eta)
    }
}

impl From<PowerProfile> for PowerInput {
    fn from(p: PowerProfile) -> Self {
        PowerInput {
            alpha: p.alpha,
            beta: p.beta,
            eta: p.eta,
        }
    }
}

impl PowerProfile {
    /// Builds a profile, deriving `delta = 1 - alpha - beta - eta`.
    pub fn new(alpha: f64, beta: f64, eta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::ThreatModel(alpha));
        }
        for (name, value) in [("beta", beta), ("eta", eta)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::NegativePower { name, value });
            }
        }
        let allocated = alpha + beta + eta;
        if allocated > 1.0 + NORMALISATION_SLACK {
            return Err(Error::OverAllocated(allocated));
        }
        let mut delta = 1.0 - alpha - beta - eta;
        if delta < NORMALISATION_SLACK {
            delta = 0.0;
        }
        Ok(Self {
            alpha,
            beta,
            eta,
            delta,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Power of the miners who are neither attacker, victim nor target.
    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Rule used to pick the effective mean infiltration fraction r̄ that
/// weights the attacker's share of a victim-pool block after power adjusting.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbarPolicy {
    /// `(r1 + r2) / 2`.
    #[default]
    Mean,
    R1Only,
    R2Only,
    /// Exact expected share split of a Case-5 round with exponential phase
    /// durations, converted back to an infiltration fraction.
    TimeWeighted,
    /// A value measured from simulation (see `sim::empirical_rbar`).
    Empirical(f64),
}

impl RbarPolicy {
    /// Whether r̄ is an affine function of `(r1, r2)`; returns its weights.
    pub(crate) fn linear_weights(&self) -> Option<(f64, f64)> {
        match self {
            RbarPolicy::Mean => Some((0.5, 0.5)),
            RbarPolicy::R1Only => Some((1.0, 0.0)),
            RbarPolicy::R2Only => Some((0.0, 1.0)),
            RbarPolicy::Empirical(_) => Some((0.0, 0.0)),
            RbarPolicy::TimeWeighted => None,
        }
    }
}

impl fmt::Display for RbarPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RbarPolicy::Mean => f.write_str("mean"),
            RbarPolicy::R1Only => f.write_str("r1_only"),
            RbarPolicy::R2Only => f.write_str("r2_only"),
            RbarPolicy::TimeWeighted => f.write_str("time_weighted"),
            RbarPolicy::Empirical(v) => write!(f, "empirical({v})"),
        }
    }
}

/// The attacker's strategy parameters.
///
/// Fields are public for convenience; use [`AttackParams::new`] or
/// [`AttackParams::validate`] before handing values to the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackParams {
    /// Infiltration fraction of `alpha` before power adjusting.
    pub r1: f64,
    /// Infiltration fraction of `alpha` after power adjusting.
    pub r2: f64,
    /// Fraction of other miners that build on the attacker's branch in a fork.
    pub gamma: f64,
    /// Bribe fraction of the attacker's block reward in Case 5-2.
    pub eps1: f64,
    /// Bribe fraction of the attacker's block reward in Case 5-4.
    pub eps2: f64,
    #[serde(default)]
    pub rbar_policy: RbarPolicy,
}

impl AttackParams {
    pub fn new(r1: f64, r2: f64, gamma: f64, eps1: f64, eps2: f64) -> Result<Self> {
        let params = Self {
            r1,
            r2,
            gamma,
            eps1,
            eps2,
            rbar_policy: RbarPolicy::Mean,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_policy(mut self, policy: RbarPolicy) -> Self {
        self.rbar_policy = policy;
        self
    }

    pub fn with_infiltration(mut self, r1: f64, r2: f64) -> Self {
        self.r1 = r1;
        self.r2 = r2;
        self
    }

    pub fn with_bribes(mut self, eps1: f64, eps2: f64) -> Self {
        self.eps1 = eps1;
        self.eps2 = eps2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("r1", self.r1),
            ("r2", self.r2),
            ("gamma", self.gamma),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
        ];
        for (name, value) in fields {
            check_fraction(name, value)?;
        }
        if let RbarPolicy::Empirical(v) = self.rbar_policy {
            check_fraction("rbar", v)?;
        }
        Ok(())
    }
}

pub(crate) fn check_fraction(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::FractionOutOfRange { name, value })
    }
}

/// How the attacker and target behave in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// All attacker power mines honestly.
    Honest,
    /// Power adjusting withholding; the target denies every bribe.
    Paw,
    /// Power adjusting withholding with bribes the target accepts.
    BmPaw,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Honest => "honest",
            Strategy::Paw => "paw",
            Strategy::BmPaw => "bmpaw",
        })
    }
}

/// Probability that the attacker's withheld block ends up on the main chain
/// in each fork case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinProbabilities {
    /// Case 5-2, target accepts the bribe.
    pub c52: f64,
    /// Case 5-4, target accepts the bribe (always one).
    pub c54: f64,
    /// Case 5-2, target denies.
    pub c52d: f64,
    /// Case 5-4, target denies.
    pub c54d: f64,
}

/// Fork win probabilities after power adjusting. Only `r2` and `gamma` of
/// the attack parameters matter.
pub fn win_probabilities(profile: &PowerProfile, params: &AttackParams) -> WinProbabilities {
    let PowerProfile {
        alpha,
        beta,
        eta,
        delta,
    } = *profile;
    let r2 = params.r2;
    let gamma = params.gamma;
    let publishing = 1.0 - r2 * alpha;
    let innocent = (1.0 - r2) * alpha;
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    WinProbabilities {
        c52: clamp((innocent + eta + beta + gamma * delta) / publishing),
        c54: 1.0,
        c52d: clamp((innocent + beta + gamma * (delta + eta)) / publishing),
        c54d: clamp((innocent + beta + gamma * delta) / publishing),
    }
}

/// Effective mean infiltration fraction r̄ under the configured policy.
pub fn effective_infiltration(profile: &PowerProfile, params: &AttackParams) -> f64 {
    match params.rbar_policy {
        RbarPolicy::Mean => 0.5 * (params.r1 + params.r2),
        RbarPolicy::R1Only => params.r1,
        RbarPolicy::R2Only => params.r2,
        RbarPolicy::Empirical(v) => v,
        RbarPolicy::TimeWeighted => time_weighted_rbar(profile, params.r1, params.r2),
    }
}

/// Attacker's fraction of a victim-pool block when infiltrating with `rbar`.
pub fn share_fraction(profile: &PowerProfile, rbar: f64) -> f64 {
    let infiltration = rbar * profile.alpha;
    ratio_or_zero(infiltration, infiltration + profile.beta)
}

/// Inverse of [`share_fraction`]: the r̄ that yields share fraction `f`.
pub fn rbar_from_share_fraction(profile: &PowerProfile, f: f64) -> Option<f64> {
    if profile.beta == 0.0 || !(0.0..1.0).contains(&f) {
        return None;
    }
    Some(profile.beta * f / (profile.alpha * (1.0 - f)))
}

/// Expected attacker share fraction of a Case-5 round.
///
/// The pre-adjust phase lasts `T1 ~ Exp(1)` with infiltration `r1`, the
/// post-adjust phase `T2 ~ Exp(1 - r2*alpha)` with infiltration `r2`; shares
/// arrive at rates proportional to power. With `W = T1/(T1+T2)` the split is
/// a function of `W` alone, whose density is `λ / (w + λ(1-w))²`.
pub fn expected_case5_share_fraction(profile: &PowerProfile, r1: f64, r2: f64) -> f64 {
    let alpha = profile.alpha;
    let beta = profile.beta;
    let lambda = 1.0 - r2 * alpha;
    let split = |w: f64| {
        let attacker = alpha * (r1 * w + r2 * (1.0 - w));
        ratio_or_zero(attacker, attacker + beta * (w + (1.0 - w)))
    };
    if r1 == r2 {
        return split(0.5);
    }
    let density = |w: f64| {
        let d = w + lambda * (1.0 - w);
        lambda / (d * d)
    };
    integrate(|w| split(w) * density(w), 0.0, 1.0, 1e-14)
}

fn time_weighted_rbar(profile: &PowerProfile, r1: f64, r2: f64) -> f64 {
    if r1 == r2 {
        return r1;
    }
    let f = expected_case5_share_fraction(profile, r1, r2);
    rbar_from_share_fraction(profile, f).unwrap_or(0.5 * (r1 + r2))
}
