//! Monte Carlo simulator of the one-pool attack round.
//!
//! A round ends when one main-chain block is fixed. Each round first draws
//! every random quantity it may need ([`RoundSample`]); the sample is then
//! settled deterministically for a strategy. Settling one sample under
//! several strategies gives common random numbers for paired comparisons.
//!
//! Rounds are grouped in chunks of [`CHUNK_ROUNDS`]. Chunk `k` draws from
//! ChaCha8 stream `k` of the configured seed, chunks run in parallel and are
//! merged in index order, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    rbar_from_share_fraction, win_probabilities, AttackParams, PowerProfile, Strategy,
    WinProbabilities,
};
use crate::rewards::{case_distribution, RoleRewards};
use crate::stats::{Estimate, Moments, Z99};

pub const CHUNK_ROUNDS: u64 = 65_536;

/// Index of each role in per-role arrays.
pub const ATTACKER: usize = 0;
pub const VICTIM: usize = 1;
pub const TARGET: usize = 2;
pub const OTHERS: usize = 3;

/// Cases 1–5 followed by sub-cases 5-1 to 5-4.
pub const CASE_LABELS: [&str; 9] = ["1", "2", "3", "4", "5", "5-1", "5-2", "5-3", "5-4"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub profile: PowerProfile,
    pub params: AttackParams,
    pub strategy: Strategy,
    pub n_rounds: u64,
    pub seed: u64,
    /// Expected number of shares found per unit of power per block interval.
    pub shares_per_block: f64,
}

impl SimConfig {
    pub fn new(
        profile: PowerProfile,
        params: AttackParams,
        strategy: Strategy,
        n_rounds: u64,
        seed: u64,
    ) -> Self {
        Self {
            profile,
            params,
            strategy,
            n_rounds,
            seed,
            shares_per_block: 1000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_rounds == 0 {
            return Err(Error::InvalidSimulation(
                "n_rounds must be at least 1".into(),
            ));
        }
        if !(self.shares_per_block >= 1.0) || !self.shares_per_block.is_finite() {
            return Err(Error::InvalidSimulation(format!(
                "shares_per_block = {} must be at least 1",
                self.shares_per_block
            )));
        }
        Ok(())
    }
}

/// Every random quantity one round may consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundSample {
    /// Picks the first block finder.
    pub u_first: f64,
    /// Picks the finder after power adjusting (Case 5 only).
    pub u_second: f64,
    /// Resolves a fork: the attacker's branch wins when `u_fork < c`.
    pub u_fork: f64,
    /// Pre-adjust phase length, `Exp(1)`.
    pub t1: f64,
    /// Post-adjust phase length, `Exp(1 - r2·α)` (Case 5 only).
    pub t2: f64,
    pub pre_attacker_shares: u64,
    pub pre_victim_shares: u64,
    pub post_attacker_shares: u64,
    pub post_victim_shares: u64,
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean > 0.0 {
        // `Poisson::new` only fails for non-positive or non-finite means.
        Poisson::new(mean)
            .map(|d| d.sample(rng) as u64)
            .unwrap_or(0)
    } else {
        0
    }
}

/// Draws a round for the given profile and infiltration fractions.
pub fn sample_round<R: Rng>(
    rng: &mut R,
    profile: &PowerProfile,
    params: &AttackParams,
    shares_per_block: f64,
) -> RoundSample {
    let alpha = profile.alpha();
    let beta = profile.beta();
    let u_first: f64 = rng.random();
    let t1: f64 = Exp1.sample(rng);
    let pre_attacker_shares = poisson(rng, shares_per_block * params.r1 * alpha * t1);
    let pre_victim_shares = poisson(rng, shares_per_block * beta * t1);
    let mut sample = RoundSample {
        u_first,
        u_second: 0.0,
        u_fork: 0.0,
        t1,
        t2: 0.0,
        pre_attacker_shares,
        pre_victim_shares,
        post_attacker_shares: 0,
        post_victim_shares: 0,
    };
    if first_finder(profile, params.r1, u_first) == 4 {
        let publishing = 1.0 - params.r2 * alpha;
        sample.u_second = rng.random();
        let e: f64 = Exp1.sample(rng);
        sample.t2 = e / publishing;
        sample.post_attacker_shares =
            poisson(rng, shares_per_block * params.r2 * alpha * sample.t2);
        sample.post_victim_shares = poisson(rng, shares_per_block * beta * sample.t2);
        sample.u_fork = rng.random();
    }
    sample
}

/// Index 0..5 of the first-finder case (Cases 1–5) for uniform `u`.
fn first_finder(profile: &PowerProfile, r1: f64, u: f64) -> usize {
    let alpha = profile.alpha();
    let weights = [
        (1.0 - r1) * alpha,
        profile.delta(),
        profile.beta(),
        profile.eta(),
        r1 * alpha,
    ];
    pick(&weights, u)
}

/// Inverse-CDF pick over weights summing to one (up to rounding).
fn pick(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = k;
            acc += w;
            if target < acc {
                return k;
            }
        }
    }
    last_positive
}

/// The settled result of one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome {
    /// Index into [`CASE_LABELS`] of the first-level case.
    pub case: usize,
    /// Index into [`CASE_LABELS`] of the sub-case, for Case 5.
    pub sub_case: Option<usize>,
    /// Role whose block (or pool's block) became the main-chain block.
    pub block_owner: usize,
    pub rewards: [f64; 4],
    pub innocent: f64,
    pub share: f64,
    /// Attacker's gross share of a fork won by its withheld block.
    pub fork: f64,
    pub bribe: f64,
    pub case3_fraction: Option<f64>,
    pub case5_fraction: Option<f64>,
}

/// Settles a round for `strategy`. Honest settlement ignores infiltration.
pub fn settle(
    sample: &RoundSample,
    profile: &PowerProfile,
    params: &AttackParams,
    c: &WinProbabilities,
    strategy: Strategy,
) -> RoundOutcome {
    let alpha = profile.alpha();
    let beta = profile.beta();
    let r1 = if strategy == Strategy::Honest {
        0.0
    } else {
        params.r1
    };
    let mut out = RoundOutcome {
        case: first_finder(profile, r1, sample.u_first),
        sub_case: None,
        block_owner: ATTACKER,
        rewards: [0.0; 4],
        innocent: 0.0,
        share: 0.0,
        fork: 0.0,
        bribe: 0.0,
        case3_fraction: None,
        case5_fraction: None,
    };
    match out.case {
        0 => {
            out.rewards[ATTACKER] = 1.0;
            out.innocent = 1.0;
        }
        1 => {
            out.block_owner = OTHERS;
            out.rewards[OTHERS] = 1.0;
        }
        2 => {
            let attacker_shares = if r1 > 0.0 {
                sample.pre_attacker_shares
            } else {
                0
            };
            let f = split(attacker_shares, sample.pre_victim_shares, r1 * alpha, beta);
            out.block_owner = VICTIM;
            out.rewards[ATTACKER] = f;
            out.rewards[VICTIM] = 1.0 - f;
            out.share = f;
            out.case3_fraction = Some(f);
        }
        3 => {
            out.block_owner = TARGET;
            out.rewards[TARGET] = 1.0;
        }
        _ => settle_case5(sample, profile, params, c, strategy, &mut out),
    }
    out
}

fn settle_case5(
    sample: &RoundSample,
    profile: &PowerProfile,
    params: &AttackParams,
    c: &WinProbabilities,
    strategy: Strategy,
    out: &mut RoundOutcome,
) {
    let alpha = profile.alpha();
    let beta = profile.beta();
    let (r1, r2) = (params.r1, params.r2);
    let weights = [(1.0 - r2) * alpha, profile.delta(), beta, profile.eta()];
    let second = pick(&weights, sample.u_second);
    out.sub_case = Some(5 + second);

    let s = split(
        sample.pre_attacker_shares + sample.post_attacker_shares,
        sample.pre_victim_shares + sample.post_victim_shares,
        alpha * (r1 * sample.t1 + r2 * sample.t2),
        beta * (sample.t1 + sample.t2),
    );
    out.case5_fraction = Some(s);
    let accepts = strategy == Strategy::BmPaw;

    // A pool block won by the withheld FPoW, with an optional bribe to the target.
    let pool_block = |out: &mut RoundOutcome, eps: f64, via_fork: bool| {
        let bribe = s * eps;
        out.block_owner = VICTIM;
        out.rewards[ATTACKER] = s - bribe;
        out.rewards[VICTIM] = 1.0 - s;
        out.rewards[TARGET] = bribe;
        out.bribe = bribe;
        if via_fork {
            out.fork = s;
        } else {
            out.share = s;
        }
    };
    match second {
        0 => {
            out.rewards[ATTACKER] = 1.0;
            out.innocent = 1.0;
        }
        1 => {
            let (win, eps) = if accepts {
                (c.c52, params.eps1)
            } else {
                (c.c52d, 0.0)
            };
            if sample.u_fork < win {
                pool_block(out, eps, true);
            } else {
                out.block_owner = OTHERS;
                out.rewards[OTHERS] = 1.0;
            }
        }
        2 => pool_block(out, 0.0, false),
        _ => {
            let (win, eps) = if accepts {
                (c.c54, params.eps2)
            } else {
                (c.c54d, 0.0)
            };
            if sample.u_fork < win {
                pool_block(out, eps, true);
            } else {
                out.block_owner = TARGET;
                out.rewards[TARGET] = 1.0;
            }
        }
    }
}

/// Attacker fraction of the victim pool's shares; falls back to the
/// intensity ratio when no shares were drawn.
fn split(attacker: u64, victim: u64, attacker_intensity: f64, victim_intensity: f64) -> f64 {
    let total = attacker + victim;
    if total > 0 {
        attacker as f64 / total as f64
    } else {
        let t = attacker_intensity + victim_intensity;
        if t > 0.0 {
            attacker_intensity / t
        } else {
            0.0
        }
    }
}

/// Aggregated counters of a simulation run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTally {
    pub rounds: u64,
    /// Indexed like [`CASE_LABELS`].
    pub case_counts: [u64; 9],
    /// Main-chain blocks by owner: attacker, victim pool, target, others.
    pub blocks_won: [u64; 4],
    pub role_rewards: [Moments; 4],
    pub innocent_reward: f64,
    pub share_reward: f64,
    pub fork_reward: f64,
    pub bribes_paid: f64,
    pub bribes_received: f64,
    pub attacker_share_units: u64,
    pub victim_pool_share_units: u64,
    pub case3_fraction: Moments,
    pub case5_fraction: Moments,
}

impl SimTally {
    fn record(&mut self, sample: &RoundSample, o: &RoundOutcome) {
        self.rounds += 1;
        self.case_counts[o.case] += 1;
        if let Some(sub) = o.sub_case {
            self.case_counts[sub] += 1;
        }
        self.blocks_won[o.block_owner] += 1;
        for (m, &r) in self.role_rewards.iter_mut().zip(&o.rewards) {
            m.push(r);
        }
        self.innocent_reward += o.innocent;
        self.share_reward += o.share;
        self.fork_reward += o.fork;
        self.bribes_paid += o.bribe;
        self.bribes_received += o.bribe;
        self.attacker_share_units += sample.pre_attacker_shares + sample.post_attacker_shares;
        self.victim_pool_share_units += sample.pre_victim_shares + sample.post_victim_shares;
        if let Some(f) = o.case3_fraction {
            self.case3_fraction.push(f);
        }
        if let Some(f) = o.case5_fraction {
            self.case5_fraction.push(f);
        }
    }

    pub fn merge(&mut self, other: &SimTally) {
        self.rounds += other.rounds;
        for k in 0..9 {
            self.case_counts[k] += other.case_counts[k];
        }
        for k in 0..4 {
            self.blocks_won[k] += other.blocks_won[k];
            self.role_rewards[k].merge(&other.role_rewards[k]);
        }
        self.innocent_reward += other.innocent_reward;
        self.share_reward += other.share_reward;
        self.fork_reward += other.fork_reward;
        self.bribes_paid += other.bribes_paid;
        self.bribes_received += other.bribes_received;
        self.attacker_share_units += other.attacker_share_units;
        self.victim_pool_share_units += other.victim_pool_share_units;
        self.case3_fraction.merge(&other.case3_fraction);
        self.case5_fraction.merge(&other.case5_fraction);
    }

    /// Sum of all rewards paid out; equals `rounds` up to rounding.
    pub fn total_reward(&self) -> f64 {
        self.role_rewards.iter().map(|m| m.sum).sum()
    }
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

fn chunk_sizes(n_rounds: u64) -> Vec<(u64, u64)> {
    let n_chunks = n_rounds.div_ceil(CHUNK_ROUNDS);
    (0..n_chunks)
        .map(|k| (k, CHUNK_ROUNDS.min(n_rounds - k * CHUNK_ROUNDS)))
        .collect()
}

/// Runs `strategies` on the same sampled rounds; `visit` sees each outcome.
fn run_chunks<T, F>(config: &SimConfig, init: impl Fn() -> T + Sync, visit: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut T, &RoundSample) + Sync,
{
    chunk_sizes(config.n_rounds)
        .into_par_iter()
        .map(|(k, n)| {
            let mut rng = chunk_rng(config.seed, k);
            let mut acc = init();
            for _ in 0..n {
                let s = sample_round(
                    &mut rng,
                    &config.profile,
                    &config.params,
                    config.shares_per_block,
                );
                visit(&mut acc, &s);
            }
            acc
        })
        .collect()
}

pub fn simulate(config: &SimConfig) -> Result<SimTally> {
    config.validate()?;
    let c = win_probabilities(&config.profile, &config.params);
    let chunks = run_chunks(config, SimTally::default, |tally, s| {
        let o = settle(s, &config.profile, &config.params, &c, config.strategy);
        tally.record(s, &o);
    });
    let mut total = SimTally::default();
    for t in &chunks {
        total.merge(t);
    }
    Ok(total)
}

/// Joint moments of a per-round difference `d` and a baseline `b`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairedMoments {
    pub diff: Moments,
    pub base: Moments,
    pub sum_cross: f64,
}

impl PairedMoments {
    fn push(&mut self, d: f64, b: f64) {
        self.diff.push(d);
        self.base.push(b);
        self.sum_cross += d * b;
    }

    fn merge(&mut self, o: &PairedMoments) {
        self.diff.merge(&o.diff);
        self.base.merge(&o.base);
        self.sum_cross += o.sum_cross;
    }

    /// Ratio `E[d]/E[b]` with a delta-method standard error.
    pub fn ratio(&self) -> Estimate {
        let n = self.diff.n as f64;
        let mb = self.base.mean();
        let r = self.diff.mean() / mb;
        if self.diff.n < 2 {
            return Estimate::new(r, f64::INFINITY);
        }
        let cov = (self.sum_cross - self.diff.sum * self.base.sum / n) / (n - 1.0);
        let var = self.diff.variance() - 2.0 * r * cov + r * r * self.base.variance();
        Estimate::new(r, (var.max(0.0) / n).sqrt() / mb.abs())
    }
}

/// Two strategies simulated on identical rounds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairedTally {
    pub first: SimTally,
    pub second: SimTally,
    /// Per role: `first - second` paired with `second`.
    pub paired: [PairedMoments; 4],
}

impl PairedTally {
    /// Relative extra reward of the first strategy over the second.
    pub fn rer(&self, role: usize) -> Estimate {
        self.paired[role].ratio()
    }

    /// Mean per-round reward difference of the first over the second.
    pub fn difference(&self, role: usize) -> Estimate {
        self.paired[role].diff.estimate()
    }
}

/// Simulates `first` and `second` on the same sampled rounds. The
/// `strategy` field of `config` is ignored.
pub fn simulate_paired(
    config: &SimConfig,
    first: Strategy,
    second: Strategy,
) -> Result<PairedTally> {
    config.validate()?;
    let c = win_probabilities(&config.profile, &config.params);
    let chunks = run_chunks(config, PairedTally::default, |acc, s| {
        let a = settle(s, &config.profile, &config.params, &c, first);
        let b = settle(s, &config.profile, &config.params, &c, second);
        acc.first.record(s, &a);
        acc.second.record(s, &b);
        for k in 0..4 {
            acc.paired[k].push(a.rewards[k] - b.rewards[k], b.rewards[k]);
        }
    });
    let mut total = PairedTally::default();
    for t in &chunks {
        total.first.merge(&t.first);
        total.second.merge(&t.second);
        for k in 0..4 {
            total.paired[k].merge(&t.paired[k]);
        }
    }
    Ok(total)
}

/// Per-round empirical rewards with 99% confidence intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRewards {
    pub attacker: Estimate,
    pub victim: Estimate,
    pub target: Estimate,
    pub others: Estimate,
    pub imr: f64,
    pub sr: f64,
    pub fr: f64,
    pub bm: f64,
    /// Roles whose per-round reward never varied.
    pub degenerate: [bool; 4],
}

impl EmpiricalRewards {
    pub fn role(&self, role: usize) -> Estimate {
        [self.attacker, self.victim, self.target, self.others][role]
    }

    pub fn means(&self) -> RoleRewards {
        RoleRewards {
            attacker: self.attacker.mean,
            victim: self.victim.mean,
            target: self.target.mean,
            others: self.others.mean,
        }
    }
}

pub const MIN_ROUNDS_FOR_CI: u64 = 1000;

pub fn empirical_rewards(tally: &SimTally) -> Result<EmpiricalRewards> {
    if tally.rounds < MIN_ROUNDS_FOR_CI {
        return Err(Error::InsufficientData(format!(
            "{} rounds; confidence intervals need at least {MIN_ROUNDS_FOR_CI}",
            tally.rounds
        )));
    }
    let n = tally.rounds as f64;
    let est = |k: usize| tally.role_rewards[k].estimate();
    Ok(EmpiricalRewards {
        attacker: est(ATTACKER),
        victim: est(VICTIM),
        target: est(TARGET),
        others: est(OTHERS),
        imr: tally.innocent_reward / n,
        sr: tally.share_reward / n,
        fr: tally.fork_reward / n,
        bm: tally.bribes_paid / n,
        degenerate: std::array::from_fn(|k| tally.role_rewards[k].variance() == 0.0),
    })
}

/// The r̄ that reproduces the observed mean Case-5 share split.
pub fn empirical_rbar(tally: &SimTally, profile: &PowerProfile) -> Result<f64> {
    if tally.case5_fraction.n == 0 {
        return Err(Error::InsufficientData("no Case 5 rounds observed".into()));
    }
    rbar_from_share_fraction(profile, tally.case5_fraction.mean()).ok_or_else(|| {
        Error::InsufficientData("share split is degenerate (no victim power)".into())
    })
}

/// Confidence interval for [`empirical_rbar`], mapped from the split's CI.
pub fn empirical_rbar_interval(tally: &SimTally, profile: &PowerProfile) -> Result<Estimate> {
    let mean = empirical_rbar(tally, profile)?;
    let m = tally.case5_fraction;
    let se = m.std_error();
    let lo = rbar_from_share_fraction(profile, (m.mean() - Z99 * se).max(0.0)).unwrap_or(0.0);
    let hi = rbar_from_share_fraction(profile, (m.mean() + Z99 * se).min(1.0 - 1e-15))
        .unwrap_or(f64::INFINITY);
    Ok(Estimate {
        mean,
        std_error: (hi - lo) / (2.0 * Z99),
        ci_low: lo,
        ci_high: hi,
    })
}

/// Pearson chi-square statistic of the observed joint case frequencies
/// (Cases 1–4 and 5-1 to 5-4) against the analytic distribution.
/// Returns the statistic and its degrees of freedom.
pub fn case_chi_square(
    tally: &SimTally,
    profile: &PowerProfile,
    params: &AttackParams,
) -> (f64, usize) {
    let joint = case_distribution(profile, params).joint();
    let observed = [
        tally.case_counts[0],
        tally.case_counts[1],
        tally.case_counts[2],
        tally.case_counts[3],
        tally.case_counts[5],
        tally.case_counts[6],
        tally.case_counts[7],
        tally.case_counts[8],
    ];
    let n = tally.rounds as f64;
    let mut stat = 0.0;
    let mut cells = 0;
    for (&o, &p) in observed.iter().zip(&joint) {
        if p > 0.0 {
            let e = n * p;
            stat += (o as f64 - e) * (o as f64 - e) / e;
            cells += 1;
        } else if o > 0 {
            return (f64::INFINITY, cells.max(1));
        }
    }
    (stat, cells.saturating_sub(1))
}
