//! Incentive-compatible bribe pricing.
//!
//! Both incentive constraints share the linear form `a1·ε1 + a2·ε2` with
//! `a1 = δ·c52` and `a2 = η·c54`. The attacker gains over plain PAW while
//! that form stays below [`attacker_ceiling`]; the target gains from
//! accepting once it exceeds [`target_floor`]. The feasible set is the slab
//! between the two parallel lines, clipped to the unit square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    effective_infiltration, share_fraction, win_probabilities, AttackParams, PowerProfile,
};

/// Golden-ratio conjugate, used to spread sample points along a line.
const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BribeRegion {
    pub a1: f64,
    pub a2: f64,
    pub ceiling: f64,
    /// Infinite when there is no infiltration.
    pub floor: f64,
    pub feasible: bool,
    pub sample_points: Vec<(f64, f64)>,
}

impl BribeRegion {
    /// Value of the shared linear form at `(eps1, eps2)`.
    pub fn level(&self, eps1: f64, eps2: f64) -> f64 {
        self.a1 * eps1 + self.a2 * eps2
    }

    /// Whether `(eps1, eps2)` satisfies both strict inequalities.
    pub fn contains(&self, eps1: f64, eps2: f64) -> bool {
        let l = self.level(eps1, eps2);
        self.floor < l && l < self.ceiling
    }
}

/// Coefficients `(δ·c52, η·c54)` of the shared linear form.
pub fn constraint_coefficients(profile: &PowerProfile, params: &AttackParams) -> (f64, f64) {
    let c = win_probabilities(profile, params);
    (profile.delta() * c.c52, profile.eta() * c.c54)
}

/// Largest value of the bribe form for which the attacker still beats PAW.
pub fn attacker_ceiling(profile: &PowerProfile, params: &AttackParams) -> f64 {
    let c = win_probabilities(profile, params);
    profile.delta() * (c.c52 - c.c52d) + profile.eta() * (c.c54 - c.c54d)
}

/// Smallest value of the bribe form at which the target prefers accepting.
pub fn target_floor(profile: &PowerProfile, params: &AttackParams) -> Result<f64> {
    let rbar = effective_infiltration(profile, params);
    if !(rbar * profile.alpha() > 0.0) {
        return Err(Error::NoInfiltration(rbar));
    }
    let c = win_probabilities(profile, params);
    Ok(profile.eta() * (1.0 - c.c54d) / share_fraction(profile, rbar))
}

/// Computes the bribe region and, when it is non-empty, `n_samples` points
/// strictly inside it.
pub fn feasible_bribe_region(
    profile: &PowerProfile,
    params: &AttackParams,
    n_samples: usize,
) -> BribeRegion {
    let (a1, a2) = constraint_coefficients(profile, params);
    let ceiling = attacker_ceiling(profile, params);
    let floor = target_floor(profile, params).unwrap_or(f64::INFINITY);
    let feasible = floor < ceiling;
    let mut region = BribeRegion {
        a1,
        a2,
        ceiling,
        floor,
        feasible,
        sample_points: Vec::new(),
    };
    if feasible {
        region.sample_points = (0..n_samples)
            .map(|k| {
                let frac = if n_samples > 1 {
                    0.25 + 0.5 * k as f64 / (n_samples - 1) as f64
                } else {
                    0.5
                };
                let level = floor + (ceiling - floor) * frac;
                let position = 0.1 + 0.8 * (0.5 + k as f64 * GOLDEN).fract();
                point_on_line(a1, a2, level, position)
            })
            .collect();
    }
    region
}

/// Point at relative `position` ∈ [0, 1] along the segment of the line
/// `a1·ε1 + a2·ε2 = level` inside the unit square. The caller guarantees
/// the segment is non-empty.
fn point_on_line(a1: f64, a2: f64, level: f64, position: f64) -> (f64, f64) {
    if a1 == 0.0 {
        return (position, (level / a2).clamp(0.0, 1.0));
    }
    if a2 == 0.0 {
        return ((level / a1).clamp(0.0, 1.0), position);
    }
    let lo = ((level - a2) / a1).max(0.0);
    let hi = (level / a1).min(1.0);
    let eps1 = lo + (hi - lo) * position;
    let eps2 = ((level - a1 * eps1) / a2).clamp(0.0, 1.0);
    (eps1, eps2)
}

/// Point with equal coordinates on the line `a1·ε1 + a2·ε2 = level`.
///
/// Since the form is increasing in both coordinates, the line meets the unit
/// square exactly when `0 <= level <= a1 + a2`, and then the diagonal point
/// is inside it; no coordinate ever needs clamping.
fn boundary_point(a1: f64, a2: f64, level: f64) -> Result<(f64, f64)> {
    let sum = a1 + a2;
    if sum > 0.0 && (0.0..=sum).contains(&level) {
        let e = (level / sum).min(1.0);
        Ok((e, e))
    } else {
        Err(Error::NoBoundaryPoint { level })
    }
}

fn require_feasible(profile: &PowerProfile, params: &AttackParams) -> Result<BribeRegion> {
    let region = feasible_bribe_region(profile, params, 0);
    if region.feasible {
        Ok(region)
    } else {
        Err(Error::InfeasibleBribe {
            floor: region.floor,
            ceiling: region.ceiling,
        })
    }
}

/// Cheapest bribe the target accepts: a point on the floor line.
pub fn minimum_eps(profile: &PowerProfile, params: &AttackParams) -> Result<(f64, f64)> {
    let r = require_feasible(profile, params)?;
    boundary_point(r.a1, r.a2, r.floor)
}

/// Most generous bribe the attacker can afford: a point on the ceiling line.
pub fn maximum_eps(profile: &PowerProfile, params: &AttackParams) -> Result<(f64, f64)> {
    let r = require_feasible(profile, params)?;
    boundary_point(r.a1, r.a2, r.ceiling)
}
