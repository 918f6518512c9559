//! Analytic and simulated rewards for bribed power-adjusting withholding
//! (BM-PAW) attacks against proof-of-work mining pools.
//!
//! Hash power is normalised to one and every reward is the expected fraction
//! of a block earned per round, where a round ends when a block is accepted.

pub mod error;
pub mod game;
pub mod model;
pub mod numeric;
pub mod optimizer;
pub mod pricing;
pub mod rewards;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    effective_infiltration, share_fraction, win_probabilities, AttackParams, PowerProfile,
    RbarPolicy, Strategy, WinProbabilities,
};
pub use rewards::{
    attacker_extra_reward, attacker_reward_bmpaw, attacker_reward_paw, attacker_rewards,
    case_distribution, expected_role_rewards, rer, target_extra_reward, target_reward_bmpaw,
    target_reward_paw, CaseDistribution, RewardBreakdown, RoleRewards,
};
