//! Closed-form expected per-round rewards for the attacker and the target.
//!
//! The block reward is normalised to one, so every value here is an expected
//! fraction of one block per round.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    effective_infiltration, share_fraction, win_probabilities, AttackParams, PowerProfile,
    Strategy, WinProbabilities,
};
use crate::numeric::ratio_or_zero;

/// Probabilities of the five first-block cases and, given Case 5, of the
/// four post-adjustment sub-cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseDistribution {
    /// Cases 1 to 5 (attacker innocent, others, victim, target, infiltration).
    pub first: [f64; 5],
    /// Cases 5-1 to 5-4 conditional on Case 5.
    pub after_adjust: [f64; 4],
}

impl CaseDistribution {
    /// Unconditional probabilities of Cases 1–4 and 5-1–5-4, in that order.
    pub fn joint(&self) -> [f64; 8] {
        let p5 = self.first[4];
        let mut out = [0.0; 8];
        out[..4].copy_from_slice(&self.first[..4]);
        for (k, q) in self.after_adjust.iter().enumerate() {
            out[4 + k] = p5 * q;
        }
        out
    }
}

pub fn case_distribution(profile: &PowerProfile, params: &AttackParams) -> CaseDistribution {
    let alpha = profile.alpha();
    let (r1, r2) = (params.r1, params.r2);
    let publishing = 1.0 - r2 * alpha;
    CaseDistribution {
        first: [
            (1.0 - r1) * alpha,
            profile.delta(),
            profile.beta(),
            profile.eta(),
            r1 * alpha,
        ],
        after_adjust: [
            (1.0 - r2) * alpha / publishing,
            profile.delta() / publishing,
            profile.beta() / publishing,
            profile.eta() / publishing,
        ],
    }
}

/// Attacker reward decomposed by channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Innocent mining (Cases 1 and 5-1).
    pub imr: f64,
    /// Share reward (Cases 3 and 5-3).
    pub sr: f64,
    /// Forking reward when the target accepts (Cases 5-2 and 5-4).
    pub fr: f64,
    /// Forking reward when the target denies.
    pub fr_denied: f64,
    /// Bribe money paid.
    pub bm: f64,
    /// `imr + sr + fr - bm`.
    pub total_bmpaw: f64,
    /// `imr + sr + fr_denied`.
    pub total_paw: f64,
    /// `total_bmpaw - total_paw`.
    pub extra: f64,
}

/// Everything the reward formulas share for one (profile, params) point.
struct Channels {
    profile: PowerProfile,
    p5: f64,
    q: [f64; 4],
    /// Attacker's split of a Case-3 block (pre-adjust infiltration only).
    split_pre: f64,
    /// Attacker's split of a victim block after adjusting, from r̄.
    split_post: f64,
    c: WinProbabilities,
}

impl Channels {
    fn new(profile: &PowerProfile, params: &AttackParams) -> Self {
        let dist = case_distribution(profile, params);
        let rbar = effective_infiltration(profile, params);
        let infiltration = params.r1 * profile.alpha();
        Self {
            profile: *profile,
            p5: dist.first[4],
            q: dist.after_adjust,
            split_pre: ratio_or_zero(infiltration, infiltration + profile.beta()),
            split_post: share_fraction(profile, rbar),
            c: win_probabilities(profile, params),
        }
    }

    /// Case 5-2 and 5-4 weights `r1·α·x/(1-r2·α)·split_post`.
    fn fork_weights(&self) -> (f64, f64) {
        let w = self.p5 * self.split_post;
        (w * self.q[1], w * self.q[3])
    }
}

pub fn attacker_rewards(profile: &PowerProfile, params: &AttackParams) -> RewardBreakdown {
    let ch = Channels::new(profile, params);
    let alpha = profile.alpha();
    let imr = (1.0 - params.r1) * alpha + ch.p5 * ch.q[0];
    let sr = profile.beta() * ch.split_pre + ch.p5 * ch.q[2] * ch.split_post;
    let (w52, w54) = ch.fork_weights();
    let fr = ch.c.c52 * w52 + ch.c.c54 * w54;
    let fr_denied = ch.c.c52d * w52 + ch.c.c54d * w54;
    let bm = params.eps1 * ch.c.c52 * w52 + params.eps2 * ch.c.c54 * w54;
    let total_bmpaw = imr + sr + fr - bm;
    let total_paw = imr + sr + fr_denied;
    RewardBreakdown {
        imr,
        sr,
        fr,
        fr_denied,
        bm,
        total_bmpaw,
        total_paw,
        extra: total_bmpaw - total_paw,
    }
}

/// Breakdown for an attacker whose target accepts bribes. Identical to
/// [`attacker_rewards`]; `total_bmpaw` is the headline value.
pub fn attacker_reward_bmpaw(profile: &PowerProfile, params: &AttackParams) -> RewardBreakdown {
    attacker_rewards(profile, params)
}

/// Breakdown for a plain PAW attacker. Identical to [`attacker_rewards`];
/// `total_paw` is the headline value and `bm` is not charged against it.
pub fn attacker_reward_paw(profile: &PowerProfile, params: &AttackParams) -> RewardBreakdown {
    attacker_rewards(profile, params)
}

/// Attacker's system reward excluding bribes paid (`imr + sr + fr`).
pub fn attacker_reward_gross(profile: &PowerProfile, params: &AttackParams) -> f64 {
    let b = attacker_rewards(profile, params);
    b.imr + b.sr + b.fr
}

/// Extra reward of BM-PAW over PAW, as `fr - bm - fr_denied`.
pub fn attacker_extra_reward(profile: &PowerProfile, params: &AttackParams) -> f64 {
    let b = attacker_rewards(profile, params);
    b.fr - b.bm - b.fr_denied
}

/// Closed form of the attacker's extra reward, evaluated independently of
/// [`attacker_rewards`].
pub fn attacker_extra_reward_closed_form(profile: &PowerProfile, params: &AttackParams) -> f64 {
    let alpha = profile.alpha();
    let publishing = 1.0 - params.r2 * alpha;
    let c = win_probabilities(profile, params);
    let split = share_fraction(profile, effective_infiltration(profile, params));
    let bracket = ((1.0 - params.eps1) * c.c52 - c.c52d) * profile.delta() / publishing
        + ((1.0 - params.eps2) * c.c54 - c.c54d) * profile.eta() / publishing;
    params.r1 * alpha * bracket * split
}

/// Target pool reward when it accepts bribes, including
/// [`target_fork_resolution_term`].
pub fn target_reward_bmpaw(profile: &PowerProfile, params: &AttackParams) -> f64 {
    let ch = Channels::new(profile, params);
    let (w52, w54) = ch.fork_weights();
    profile.eta()
        + target_fork_resolution_term(profile, params)
        + params.eps1 * ch.c.c52 * w52
        + params.eps2 * ch.c.c54 * w54
}

/// Target pool reward when it denies bribes, including
/// [`target_fork_resolution_term`].
pub fn target_reward_paw(profile: &PowerProfile, params: &AttackParams) -> f64 {
    let ch = Channels::new(profile, params);
    let eta = profile.eta();
    let qd = ch.q[1];
    let qe = ch.q[3];
    eta + ch.p5 * qd * qe + ch.p5 * qe * (1.0 - ch.c.c54d + qe)
}

/// The term `r1·α·(δ+η)/(1-r2·α) · η/(1-r2·α)` present in both target
/// reward formulas. It credits the target with the block that resolves a
/// fork, which a one-block-per-round accounting does not pay out.
pub fn target_fork_resolution_term(profile: &PowerProfile, params: &AttackParams) -> f64 {
    let ch = Channels::new(profile, params);
    ch.p5 * (ch.q[1] + ch.q[3]) * ch.q[3]
}

/// `target_reward_bmpaw - target_reward_paw`.
pub fn target_extra_reward(profile: &PowerProfile, params: &AttackParams) -> f64 {
    target_reward_bmpaw(profile, params) - target_reward_paw(profile, params)
}

/// Closed form of the target's extra reward.
pub fn target_extra_reward_closed_form(profile: &PowerProfile, params: &AttackParams) -> f64 {
    let alpha = profile.alpha();
    let publishing = 1.0 - params.r2 * alpha;
    let c = win_probabilities(profile, params);
    let split = share_fraction(profile, effective_infiltration(profile, params));
    let p5 = params.r1 * alpha;
    p5 * (params.eps1 * c.c52 * profile.delta() / publishing
        + params.eps2 * c.c54 * profile.eta() / publishing)
        * split
        - p5 * profile.eta() / publishing * (1.0 - c.c54d)
}

/// Relative extra reward `(s1 - s2) / s2`.
pub fn rer(reward_s1: f64, reward_s2: f64) -> Result<f64> {
    if !(reward_s2 > 0.0) {
        return Err(Error::UndefinedRer(reward_s2));
    }
    Ok((reward_s1 - reward_s2) / reward_s2)
}

/// Expected per-round reward of every participant class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleRewards {
    pub attacker: f64,
    pub victim: f64,
    pub target: f64,
    pub others: f64,
}

impl RoleRewards {
    pub fn as_array(&self) -> [f64; 4] {
        [self.attacker, self.victim, self.target, self.others]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

/// Per-role expected rewards with exactly one block paid out per round.
///
/// The attacker's entry equals [`attacker_rewards`]. The target's
/// entry equals [`target_reward_bmpaw`] or [`target_reward_paw`] minus
/// [`target_fork_resolution_term`].
pub fn expected_role_rewards(
    profile: &PowerProfile,
    params: &AttackParams,
    strategy: Strategy,
) -> RoleRewards {
    if strategy == Strategy::Honest {
        return RoleRewards {
            attacker: profile.alpha(),
            victim: profile.beta(),
            target: profile.eta(),
            others: profile.delta(),
        };
    }
    let ch = Channels::new(profile, params);
    let (c52, c54) = match strategy {
        Strategy::BmPaw => (ch.c.c52, ch.c.c54),
        _ => (ch.c.c52d, ch.c.c54d),
    };
    let (eps1, eps2) = match strategy {
        Strategy::BmPaw => (params.eps1, params.eps2),
        _ => (0.0, 0.0),
    };
    let alpha = ch.profile.alpha();
    let beta = ch.profile.beta();
    let [q1, q2, q3, q4] = ch.q;
    let s = ch.split_post;
    let pool_blocks_post = q3 + q2 * c52 + q4 * c54;
    let bribes = ch.p5 * s * (q2 * c52 * eps1 + q4 * c54 * eps2);

    let attacker =
        (1.0 - params.r1) * alpha + beta * ch.split_pre + ch.p5 * (q1 + pool_blocks_post * s)
            - bribes;
    let victim = beta * (1.0 - ch.split_pre) + ch.p5 * pool_blocks_post * (1.0 - s);
    let target = ch.profile.eta() + bribes + ch.p5 * q4 * (1.0 - c54);
    let others = ch.profile.delta() + ch.p5 * q2 * (1.0 - c52);
    RoleRewards {
        attacker,
        victim,
        target,
        others,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RbarPolicy;
    use crate::model::Strategy;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use proptest::strategy::Strategy as _;

    fn profile(a: f64, b: f64, e: f64) -> PowerProfile {
        PowerProfile::new(a, b, e).unwrap()
    }

    #[test]
    fn reference_case_distribution() {
        let p = profile(0.2, 0.2, 0.2);
        let a = AttackParams::new(0.5, 0.5, 0.5, 0.0, 0.0).unwrap();
        let d = case_distribution(&p, &a);
        let expected = [0.1, 0.4, 0.2, 0.2, 0.1];
        for (x, y) in d.first.iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn no_infiltration_edge_cases() {
        let p = profile(0.3, 0.2, 0.1);
        let a = AttackParams::new(0.0, 0.6, 0.5, 0.1, 0.1).unwrap();
        let d = case_distribution(&p, &a);
        assert_eq!(d.first[4], 0.0);
        assert_eq!(d.first[0], 0.3);
        let full = case_distribution(&p, &a.with_infiltration(0.4, 1.0));
        assert_eq!(full.after_adjust[0], 0.0);
    }

    #[test]
    fn honest_baseline_is_alpha() {
        let p = profile(0.3, 0.25, 0.15);
        let a = AttackParams::new(0.0, 0.8, 0.3, 0.2, 0.4).unwrap();
        let b = attacker_rewards(&p, &a);
        assert!((b.total_bmpaw - 0.3).abs() < 1e-12);
        assert!((b.total_paw - 0.3).abs() < 1e-12);
        assert!(attacker_extra_reward(&p, &a).abs() < 1e-15);
        assert!((target_reward_bmpaw(&p, &a) - 0.15).abs() < 1e-12);
        assert!((target_reward_paw(&p, &a) - 0.15).abs() < 1e-12);
        assert_eq!(target_extra_reward(&p, &a), 0.0);
    }

    #[test]
    fn free_bribes_cost_nothing() {
        let p = profile(0.2, 0.2, 0.2);
        let a = AttackParams::new(0.5, 0.5, 0.5, 0.0, 0.0).unwrap();
        let b = attacker_rewards(&p, &a);
        assert_eq!(b.bm, 0.0);
        assert!((b.total_bmpaw - (b.imr + b.sr + b.fr)).abs() < 1e-15);
    }

    #[test]
    fn reference_point_hand_values() {
        // α=β=η=0.2, γ=0.5, r1=r2=0.5: P5 = 0.1, q = (1/9, 4/9, 2/9, 2/9),
        // Case-3 split 0.1/0.3, post split 0.1/0.3.
        let p = profile(0.2, 0.2, 0.2);
        let a = AttackParams::new(0.5, 0.5, 0.5, 0.05, 0.05).unwrap();
        let b = attacker_rewards(&p, &a);
        let s = 1.0 / 3.0;
        let imr = 0.1 + 0.1 / 9.0;
        let sr = 0.2 * s + 0.1 * (2.0 / 9.0) * s;
        let fr = 0.1 * s * (7.0 / 9.0 * 4.0 / 9.0 + 2.0 / 9.0);
        let fr_d = 0.1 * s * (6.0 / 9.0 * 4.0 / 9.0 + 5.0 / 9.0 * 2.0 / 9.0);
        let bm = 0.05 * fr;
        assert!((b.imr - imr).abs() < 1e-14);
        assert!((b.sr - sr).abs() < 1e-14);
        assert!((b.fr - fr).abs() < 1e-14);
        assert!((b.fr_denied - fr_d).abs() < 1e-14);
        assert!((b.bm - bm).abs() < 1e-14);
    }

    #[test]
    fn paw_degenerate_point() {
        // γ = 0, η = 0: c54d channel has zero weight, c52d = ((1-r2)α+β)/(1-r2α).
        let p = profile(0.25, 0.3, 0.0);
        let a = AttackParams::new(0.6, 0.4, 0.0, 0.0, 0.0).unwrap();
        let b = attacker_rewards(&p, &a);
        let publishing = 1.0 - 0.4 * 0.25;
        let c52d = (0.6 * 0.25 + 0.3) / publishing;
        let split = 0.5 * 0.25 / (0.5 * 0.25 + 0.3);
        let expected = c52d * 0.6 * 0.25 * (0.45 / publishing) * split;
        assert!((b.fr_denied - expected).abs() < 1e-14);
    }

    #[test]
    fn extra_reward_free_bribe_formula() {
        let p = profile(0.2, 0.2, 0.2);
        let a = AttackParams::new(0.5, 0.5, 0.5, 0.0, 0.0).unwrap();
        let c = win_probabilities(&p, &a);
        let s = 1.0 / 3.0;
        let expected = 0.1 * ((c.c52 - c.c52d) * 0.4 + (c.c54 - c.c54d) * 0.2) / 0.9 * s;
        assert!((attacker_extra_reward(&p, &a) - expected).abs() < 1e-14);
    }

    #[test]
    fn target_extra_without_bribes_is_compliance_loss() {
        let p = profile(0.2, 0.2, 0.2);
        let a = AttackParams::new(0.5, 0.5, 0.5, 0.0, 0.0).unwrap();
        let c = win_probabilities(&p, &a);
        let expected = -0.1 * (0.2 / 0.9) * (1.0 - c.c54d);
        assert!((target_extra_reward(&p, &a) - expected).abs() < 1e-14);
        assert!(expected < 0.0);
    }

    #[test]
    fn rer_arithmetic() {
        assert!((rer(0.22, 0.20).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(rer(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(rer(0.3, 0.0), Err(Error::UndefinedRer(0.0)));
    }

    #[test]
    fn round_conserving_target_differs_by_fork_resolution_term() {
        let p = profile(0.25, 0.2, 0.15);
        let a = AttackParams::new(0.4, 0.7, 0.3, 0.1, 0.2).unwrap();
        let k = target_fork_resolution_term(&p, &a);
        let bm = expected_role_rewards(&p, &a, Strategy::BmPaw);
        let paw = expected_role_rewards(&p, &a, Strategy::Paw);
        assert!((bm.target + k - target_reward_bmpaw(&p, &a)).abs() < 1e-14);
        assert!((paw.target + k - target_reward_paw(&p, &a)).abs() < 1e-14);
        assert!((bm.attacker - attacker_reward_bmpaw(&p, &a).total_bmpaw).abs() < 1e-14);
        assert!((paw.attacker - attacker_reward_paw(&p, &a).total_paw).abs() < 1e-14);
    }

    fn arb_inputs() -> impl proptest::strategy::Strategy<Value = (PowerProfile, AttackParams)> {
        (
            0.01f64..0.49,
            0.0f64..1.0,
            0.0f64..1.0,
            (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0),
            (0.0f64..=1.0, 0.0f64..=1.0),
            0usize..4,
        )
            .prop_map(|(alpha, b, e, (r1, r2, gamma), (e1, e2), pol)| {
                let rest = 1.0 - alpha;
                let beta = rest * b;
                let eta = (rest - beta) * e;
                let policy = [
                    RbarPolicy::Mean,
                    RbarPolicy::R1Only,
                    RbarPolicy::R2Only,
                    RbarPolicy::TimeWeighted,
                ][pol];
                (
                    PowerProfile::new(alpha, beta, eta).unwrap(),
                    AttackParams::new(r1, r2, gamma, e1, e2)
                        .unwrap()
                        .with_policy(policy),
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn probabilities_are_conserved((p, a) in arb_inputs()) {
            let d = case_distribution(&p, &a);
            prop_assert!((d.first.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((d.after_adjust.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((d.joint().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn breakdown_identities_hold((p, a) in arb_inputs()) {
            let b = attacker_rewards(&p, &a);
            prop_assert!((b.total_bmpaw - (b.imr + b.sr + b.fr - b.bm)).abs() < 1e-12);
            prop_assert!((b.total_paw - (b.imr + b.sr + b.fr_denied)).abs() < 1e-12);
            prop_assert!((b.extra - (b.fr - b.bm - b.fr_denied)).abs() < 1e-12);
            for v in [b.imr, b.sr, b.fr, b.fr_denied, b.bm, b.total_bmpaw, b.total_paw] {
                prop_assert!(v >= 0.0);
            }
        }

        #[test]
        fn closed_forms_agree_with_differences((p, a) in arb_inputs()) {
            prop_assert!((attacker_extra_reward(&p, &a)
                - attacker_extra_reward_closed_form(&p, &a)).abs() < 1e-12);
            prop_assert!((target_extra_reward(&p, &a)
                - target_extra_reward_closed_form(&p, &a)).abs() < 1e-12);
        }

        #[test]
        fn honest_identity((p, a) in arb_inputs()) {
            let a = a.with_infiltration(0.0, a.r2);
            let b = attacker_rewards(&p, &a);
            prop_assert!((b.total_bmpaw - p.alpha()).abs() < 1e-12);
            prop_assert!((b.total_paw - p.alpha()).abs() < 1e-12);
            prop_assert!((target_reward_bmpaw(&p, &a) - p.eta()).abs() < 1e-12);
            prop_assert!((target_reward_paw(&p, &a) - p.eta()).abs() < 1e-12);
        }

        #[test]
        fn free_bribes_never_hurt_the_attacker((p, a) in arb_inputs()) {
            let a = a.with_bribes(0.0, 0.0);
            prop_assert!(attacker_extra_reward(&p, &a) >= -1e-15);
        }

        #[test]
        fn role_rewards_conserve_one_block((p, a) in arb_inputs()) {
            for s in [Strategy::Honest, Strategy::Paw, Strategy::BmPaw] {
                let r = expected_role_rewards(&p, &a, s);
                prop_assert!((r.total() - 1.0).abs() < 1e-12);
                for v in r.as_array() {
                    prop_assert!(v >= -1e-15);
                }
            }
        }

        #[test]
        fn bribe_bound_inequalities((p, a) in arb_inputs()) {
            let c = win_probabilities(&p, &a);
            let lhs = p.delta() * c.c52 * a.eps1 + p.eta() * c.c54 * a.eps2;
            let ceiling = p.delta() * (c.c52 - c.c52d) + p.eta() * (c.c54 - c.c54d);
            let rbar = effective_infiltration(&p, &a);
            let extra = attacker_extra_reward(&p, &a);
            if a.r1 > 0.0 && rbar > 0.0 && lhs < ceiling - 1e-9 {
                prop_assert!(extra > 0.0);
            }
            if a.r1 > 0.0 && rbar > 0.0 {
                let s = share_fraction(&p, rbar);
                let floor = p.eta() * (1.0 - c.c54d) / s;
                if lhs > floor + 1e-9 {
                    prop_assert!(target_extra_reward(&p, &a) > 0.0);
                }
            }
        }
    }
}
