//! Two pools running the withholding attack against each other.
//!
//! Each pool `k` has power `α_k` and infiltrates its opponent with
//! `r1_k·α_k` until its own infiltrators find a withheld block, after which it
//! switches to `r2_k·α_k`. A round is the event tree of who finds the next
//! block:
//!
//! * a pool's innocent miners or the other miners publish immediately;
//! * an infiltrator's block is withheld and its pool adjusts. The next
//!   publisher either ends the round plainly, forks against the withheld
//!   block (other miners, two branches, withheld block wins with `c`), or is
//!   the opponent's infiltration, which withholds as well;
//! * with two withheld blocks, the next publisher creates a three-branch fork
//!   where each withheld block wins with `c3` and the published one with
//!   `1 - 2·c3`.
//!
//! A withheld block that wins is a block of the pool it was mined in.
//! [`GameAccounting`] decides how pool blocks turn into pool rewards.
//!
//! Per-pool quantities are always computed from that pool's own perspective
//! with commutative operations, so swapping the pools swaps every result
//! bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Estimate;

/// How pool blocks are converted into the two pools' rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameAccounting {
    /// Each pool pays its members, including the opponent's infiltrators, by
    /// submitted work, and a pool's revenue includes what its infiltrators
    /// earn abroad. The two revenue densities solve a 2×2 linear system.
    /// Infiltration weight is `r1` in rounds without adjustment and the
    /// mean of `r1` and `r2` in rounds with it, weighted by how often each
    /// happens.
    #[default]
    RevenueDensity,
    /// Each block is split on the spot between the pool's innocent miners and
    /// the opponent's infiltrators, using `r1` or the mean of `r1` and `r2`
    /// depending on whether the pool has adjusted in the round.
    /// Infiltrator earnings are not fed back into the home pool's payout.
    DirectShares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Two-branch win probability of a withheld block.
    pub c: f64,
    /// Three-branch win probability of each withheld block.
    pub c3: f64,
    /// Bribe fraction for a withheld block winning against other miners.
    pub eps1: f64,
    /// Bribe fraction for a withheld block winning against a pool's
    /// innocent block.
    pub eps2: f64,
    pub accounting: GameAccounting,
}

impl GameConfig {
    /// Configuration with `c3 = c/2`, no bribes and the default accounting.
    pub fn new(alpha1: f64, alpha2: f64, c: f64) -> Result<Self> {
        let cfg = Self {
            alpha1,
            alpha2,
            c,
            c3: 0.5 * c,
            eps1: 0.0,
            eps2: 0.0,
            accounting: GameAccounting::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGame(msg));
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0) {
            return bad(format!(
                "pool powers must be positive (alpha1 = {}, alpha2 = {})",
                self.alpha1, self.alpha2
            ));
        }
        if !(self.alpha1 + self.alpha2 < 1.0) {
            return bad(format!(
                "alpha1 + alpha2 = {} must be below 1",
                self.alpha1 + self.alpha2
            ));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return bad(format!("c = {} is outside [0, 1]", self.c));
        }
        if !(0.0..=0.5).contains(&self.c3) {
            return bad(format!("c3 = {} is outside [0, 0.5]", self.c3));
        }
        for (name, v) in [("eps1", self.eps1), ("eps2", self.eps2)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn alpha(&self, pool: usize) -> f64 {
        [self.alpha1, self.alpha2][pool]
    }

    pub fn others(&self) -> f64 {
        1.0 - (self.alpha1 + self.alpha2)
    }

    /// The same game with the pools relabelled.
    pub fn swapped(&self) -> Self {
        Self {
            alpha1: self.alpha2,
            alpha2: self.alpha1,
            ..*self
        }
    }
}

/// Infiltration fractions of both pools.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub r1_1: f64,
    pub r2_1: f64,
    pub r1_2: f64,
    pub r2_2: f64,
}

impl StrategyProfile {
    pub const HONEST: Self = Self {
        r1_1: 0.0,
        r2_1: 0.0,
        r1_2: 0.0,
        r2_2: 0.0,
    };

    pub fn pool(&self, k: usize) -> (f64, f64) {
        if k == 0 {
            (self.r1_1, self.r2_1)
        } else {
            (self.r1_2, self.r2_2)
        }
    }

    pub fn with_pool(mut self, k: usize, r1: f64, r2: f64) -> Self {
        if k == 0 {
            self.r1_1 = r1;
            self.r2_1 = r2;
        } else {
            self.r1_2 = r1;
            self.r2_2 = r2;
        }
        self
    }

    pub fn swapped(&self) -> Self {
        Self {
            r1_1: self.r1_2,
            r2_1: self.r2_2,
            r1_2: self.r1_1,
            r2_2: self.r2_1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.r1_1, self.r2_1, self.r1_2, self.r2_2] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidGame(format!(
                    "infiltration fraction {v} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    fn max_distance(&self, other: &Self) -> f64 {
        [
            self.r1_1 - other.r1_1,
            self.r2_1 - other.r2_1,
            self.r1_2 - other.r1_2,
            self.r2_2 - other.r2_2,
        ]
        .iter()
        .fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// Derived rates of one pool.
#[derive(Debug, Clone, Copy)]
struct Pool {
    alpha: f64,
    r1: f64,
    r2: f64,
}

impl Pool {
    fn innocent(&self) -> f64 {
        (1.0 - self.r1) * self.alpha
    }
    fn infiltration(&self) -> f64 {
        self.r1 * self.alpha
    }
    fn innocent_adjusted(&self) -> f64 {
        (1.0 - self.r2) * self.alpha
    }
    fn adjusted_infiltration(&self) -> f64 {
        self.r2 * self.alpha
    }
    /// Publishing power while this pool alone withholds.
    fn publishing(&self) -> f64 {
        1.0 - self.adjusted_infiltration()
    }
    fn rbar(&self) -> f64 {
        0.5 * (self.r1 + self.r2)
    }
    /// Infiltration fraction in force.
    fn fraction(&self, adjusted: bool) -> f64 {
        if adjusted {
            self.rbar()
        } else {
            self.r1
        }
    }
}

fn pools(cfg: &GameConfig, s: &StrategyProfile) -> [Pool; 2] {
    [
        Pool {
            alpha: cfg.alpha1,
            r1: s.r1_1,
            r2: s.r2_1,
        },
        Pool {
            alpha: cfg.alpha2,
            r1: s.r1_2,
            r2: s.r2_2,
        },
    ]
}

/// Adjustment state of a block from the owning pool's perspective:
/// `own + 2·other`, where each flag says whether that pool has adjusted.
const PLAIN: usize = 0;
const OWN_ADJUSTED: usize = 1;
const OTHER_ADJUSTED: usize = 2;
const BOTH_ADJUSTED: usize = 3;

/// Fork kinds, by what the winning withheld block beat.
const VS_OTHERS: usize = 0;
const VS_INNOCENT: usize = 1;

/// Per-round frequencies of everything the accounting needs, per pool and
/// from each pool's own perspective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GameFrequencies {
    /// `[pool][state]`: main-chain blocks of the pool.
    pub pool_blocks: [[f64; 4]; 2],
    /// Probability that the pool adjusts during a round.
    pub adjusted: [f64; 2],
    /// `[pool][kind][state]`: forks won by the pool's withheld block, which
    /// is a block of the opponent; state is from the opponent's perspective.
    pub fork_wins: [[[f64; 4]; 2]; 2],
}

/// A case of the round event tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameCase {
    /// 0 for "other miners publish first", otherwise the case number 1–8.
    pub id: u8,
    /// The pool that parameterises the case, where applicable.
    pub pool: Option<usize>,
    pub probability: f64,
    pub rule: &'static str,
}

/// Index of each case in [`enumerate_cases`] order.
const CASE_COUNT: usize = 15;

fn case_index(id: u8, pool: Option<usize>) -> usize {
    match (id, pool) {
        (0, _) => 0,
        (7, _) => 13,
        (8, _) => 14,
        (id, Some(k)) => 1 + 2 * (id as usize - 1) + k,
        (id, None) => 1 + 2 * (id as usize - 1),
    }
}

/// Lists the cases with their probabilities. Pool-indexed cases come in the
/// order pool 1, pool 2.
pub fn enumerate_cases(cfg: &GameConfig, s: &StrategyProfile) -> Vec<GameCase> {
    let p = pools(cfg, s);
    let o = cfg.others();
    let double = double_withhold(&p);
    let d12 = 1.0 - (p[0].adjusted_infiltration() + p[1].adjusted_infiltration());
    let mut out = vec![GameCase {
        id: 0,
        pool: None,
        probability: o,
        rule: "other miners publish; no pool block",
    }];
    let rules = [
        "pool innocent block",
        "own withheld block discarded; own innocent block after adjusting",
        "opponent's withheld block discarded; own innocent block",
        "three-branch fork (pool 1 withheld first) against own innocent block",
        "three-branch fork (pool 2 withheld first) against own innocent block",
        "two-branch fork of opponent's withheld block against other miners",
    ];
    for id in 1..=6u8 {
        for k in 0..2 {
            let j = 1 - k;
            let probability = match id {
                1 => p[k].innocent(),
                2 => p[k].infiltration() * p[k].innocent_adjusted() / p[k].publishing(),
                3 => p[j].infiltration() * p[k].innocent() / p[j].publishing(),
                4 => double[0] * p[k].innocent_adjusted() / d12,
                5 => double[1] * p[k].innocent_adjusted() / d12,
                _ => p[j].infiltration() * o / p[j].publishing(),
            };
            out.push(GameCase {
                id,
                pool: Some(k),
                probability,
                rule: rules[id as usize - 1],
            });
        }
    }
    out.push(GameCase {
        id: 7,
        pool: None,
        probability: double[0] * o / d12,
        rule: "three-branch fork (pool 1 withheld first) against other miners",
    });
    out.push(GameCase {
        id: 8,
        pool: None,
        probability: double[1] * o / d12,
        rule: "three-branch fork (pool 2 withheld first) against other miners",
    });
    out
}

/// Probability of reaching the double-withhold state with pool 1 (index 0)
/// or pool 2 (index 1) withholding first.
fn double_withhold(p: &[Pool; 2]) -> [f64; 2] {
    [
        p[0].infiltration() * p[1].infiltration() / p[0].publishing(),
        p[1].infiltration() * p[0].infiltration() / p[1].publishing(),
    ]
}

/// Analytic per-round frequencies.
pub fn analytic_frequencies(cfg: &GameConfig, s: &StrategyProfile) -> GameFrequencies {
    let p = pools(cfg, s);
    let o = cfg.others();
    let (c, c3) = (cfg.c, cfg.c3);
    let d12 = 1.0 - (p[0].adjusted_infiltration() + p[1].adjusted_infiltration());
    let both = p[0].infiltration() * p[1].infiltration() / p[0].publishing()
        + p[1].infiltration() * p[0].infiltration() / p[1].publishing();
    let third_innocent = p[0].innocent_adjusted() + p[1].innocent_adjusted();
    let mut f = GameFrequencies::default();
    for k in 0..2 {
        let j = 1 - k;
        let blocks = &mut f.pool_blocks[k];
        blocks[PLAIN] = p[k].innocent();
        blocks[OWN_ADJUSTED] = p[k].infiltration() * p[k].innocent_adjusted() / p[k].publishing();
        blocks[OTHER_ADJUSTED] =
            p[j].infiltration() * (p[k].innocent() + o * c) / p[j].publishing();
        blocks[BOTH_ADJUSTED] = if both > 0.0 {
            both * (p[k].innocent_adjusted() * (1.0 - 2.0 * c3) / d12 + c3)
        } else {
            0.0
        };
        f.adjusted[k] =
            p[k].infiltration() + p[j].infiltration() * p[k].infiltration() / p[j].publishing();
        f.fork_wins[k][VS_OTHERS][OTHER_ADJUSTED] = p[k].infiltration() * o / p[k].publishing() * c;
        if both > 0.0 {
            f.fork_wins[k][VS_OTHERS][BOTH_ADJUSTED] = both * o / d12 * c3;
            f.fork_wins[k][VS_INNOCENT][BOTH_ADJUSTED] = both * third_innocent / d12 * c3;
        }
    }
    f
}

/// Turns frequencies into the two pools' per-round rewards.
pub fn account(cfg: &GameConfig, s: &StrategyProfile, f: &GameFrequencies) -> [f64; 2] {
    let p = pools(cfg, s);
    match cfg.accounting {
        GameAccounting::RevenueDensity => revenue_density(cfg, &p, f),
        GameAccounting::DirectShares => direct_shares(cfg, &p, f),
    }
}

fn revenue_density(cfg: &GameConfig, p: &[Pool; 2], f: &GameFrequencies) -> [f64; 2] {
    let weight = |k: usize| {
        let pa = f.adjusted[k];
        p[k].alpha * ((1.0 - pa) * p[k].r1 + pa * p[k].rbar())
    };
    let x = [weight(0), weight(1)];
    let net = |k: usize| {
        let j = 1 - k;
        let direct: f64 = f.pool_blocks[k].iter().sum();
        let share = x[k] / (p[j].alpha + x[k]);
        let won = |kind: usize| f.fork_wins[k][kind].iter().sum::<f64>();
        direct - share * (cfg.eps1 * won(VS_OTHERS) + cfg.eps2 * won(VS_INNOCENT))
    };
    let n = [net(0), net(1)];
    let det = (p[0].alpha + x[1]) * (p[1].alpha + x[0]) - x[0] * x[1];
    let density = |k: usize| {
        let j = 1 - k;
        (n[k] * (p[j].alpha + x[k]) + x[k] * n[j]) / det
    };
    [p[0].alpha * density(0), p[1].alpha * density(1)]
}

/// Fraction of a pool-`owner` block in `state` paid to the opponent's
/// infiltrators.
fn infiltrator_split(p: &[Pool; 2], owner: usize, state: usize) -> f64 {
    let guest = 1 - owner;
    let own_adjusted = state & OWN_ADJUSTED != 0;
    let guest_adjusted = state & OTHER_ADJUSTED != 0;
    let infiltrators = p[guest].fraction(guest_adjusted) * p[guest].alpha;
    let members = (1.0 - p[owner].fraction(own_adjusted)) * p[owner].alpha;
    let total = infiltrators + members;
    if total > 0.0 {
        infiltrators / total
    } else {
        0.0
    }
}

fn direct_shares(cfg: &GameConfig, p: &[Pool; 2], f: &GameFrequencies) -> [f64; 2] {
    let reward = |k: usize| {
        let j = 1 - k;
        let mut r = 0.0;
        for state in 0..4 {
            r += f.pool_blocks[k][state] * (1.0 - infiltrator_split(p, k, state));
            r += f.pool_blocks[j][state] * infiltrator_split(p, j, state);
            let won = cfg.eps1 * f.fork_wins[k][VS_OTHERS][state]
                + cfg.eps2 * f.fork_wins[k][VS_INNOCENT][state];
            r -= won * infiltrator_split(p, j, state);
        }
        r
    };
    [reward(0), reward(1)]
}

/// How pool rewards are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameMode {
    Analytic,
    MonteCarlo { n_rounds: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolRewards {
    pub rewards: [f64; 2],
    /// Batch-means standard errors; zero in analytic mode.
    pub std_errors: [f64; 2],
}

impl PoolRewards {
    pub fn estimate(&self, pool: usize) -> Estimate {
        Estimate::new(self.rewards[pool], self.std_errors[pool])
    }

    /// Relative extra reward of each pool over honest mining.
    pub fn rer(&self, cfg: &GameConfig) -> [f64; 2] {
        [
            (self.rewards[0] - cfg.alpha1) / cfg.alpha1,
            (self.rewards[1] - cfg.alpha2) / cfg.alpha2,
        ]
    }

    pub fn others(&self) -> f64 {
        1.0 - (self.rewards[0] + self.rewards[1])
    }
}

pub fn pool_rewards(cfg: &GameConfig, s: &StrategyProfile, mode: GameMode) -> Result<PoolRewards> {
    cfg.validate()?;
    s.validate()?;
    match mode {
        GameMode::Analytic => Ok(PoolRewards {
            rewards: account(cfg, s, &analytic_frequencies(cfg, s)),
            std_errors: [0.0; 2],
        }),
        GameMode::MonteCarlo { n_rounds, seed } => {
            let tally = simulate_game(cfg, s, n_rounds, seed)?;
            Ok(tally.rewards(cfg, s))
        }
    }
}

/// Rounds per Monte Carlo batch; each batch is also a batch-means sample.
pub const GAME_CHUNK_ROUNDS: u64 = 10_000;

/// Counters of a simulated game.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GameTally {
    pub rounds: u64,
    /// Indexed in [`enumerate_cases`] order.
    pub case_counts: Vec<u64>,
    pub pool_blocks: [[u64; 4]; 2],
    pub adjusted: [u64; 2],
    pub fork_wins: [[[u64; 4]; 2]; 2],
    /// Per-batch rewards, for batch-means errors.
    pub batch_rewards: Vec<(u64, [f64; 2])>,
}

impl GameTally {
    fn empty() -> Self {
        Self {
            case_counts: vec![0; CASE_COUNT],
            ..Self::default()
        }
    }

    pub fn frequencies(&self) -> GameFrequencies {
        let n = self.rounds.max(1) as f64;
        let mut f = GameFrequencies::default();
        for k in 0..2 {
            for s in 0..4 {
                f.pool_blocks[k][s] = self.pool_blocks[k][s] as f64 / n;
                for kind in 0..2 {
                    f.fork_wins[k][kind][s] = self.fork_wins[k][kind][s] as f64 / n;
                }
            }
            f.adjusted[k] = self.adjusted[k] as f64 / n;
        }
        f
    }

    fn merge(&mut self, o: &GameTally) {
        self.rounds += o.rounds;
        for (a, b) in self.case_counts.iter_mut().zip(&o.case_counts) {
            *a += b;
        }
        for k in 0..2 {
            self.adjusted[k] += o.adjusted[k];
            for s in 0..4 {
                self.pool_blocks[k][s] += o.pool_blocks[k][s];
                for kind in 0..2 {
                    self.fork_wins[k][kind][s] += o.fork_wins[k][kind][s];
                }
            }
        }
        self.batch_rewards.extend_from_slice(&o.batch_rewards);
    }

    /// Rewards from the pooled frequencies with batch-means errors.
    pub fn rewards(&self, cfg: &GameConfig, s: &StrategyProfile) -> PoolRewards {
        let rewards = account(cfg, s, &self.frequencies());
        let total = self.rounds as f64;
        let b = self.batch_rewards.len();
        let mut std_errors = [0.0; 2];
        if b > 1 {
            for k in 0..2 {
                let ss: f64 = self
                    .batch_rewards
                    .iter()
                    .map(|(n, r)| {
                        let w = *n as f64 / total;
                        w * w * (r[k] - rewards[k]) * (r[k] - rewards[k])
                    })
                    .sum();
                std_errors[k] = (ss * b as f64 / (b as f64 - 1.0)).sqrt();
            }
        }
        PoolRewards {
            rewards,
            std_errors,
        }
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = k;
            acc += w;
            if target < acc {
                return k;
            }
        }
    }
    last
}

fn play_round<R: Rng>(rng: &mut R, cfg: &GameConfig, p: &[Pool; 2], t: &mut GameTally) {
    let o = cfg.others();
    t.rounds += 1;
    let first = pick(
        &[
            p[0].innocent(),
            p[1].innocent(),
            p[0].infiltration(),
            p[1].infiltration(),
            o,
        ],
        rng.random(),
    );
    match first {
        0 | 1 => {
            t.case_counts[case_index(1, Some(first))] += 1;
            t.pool_blocks[first][PLAIN] += 1;
        }
        4 => t.case_counts[0] += 1,
        _ => {
            let i = first - 2;
            let j = 1 - i;
            t.adjusted[i] += 1;
            let next = pick(
                &[
                    p[i].innocent_adjusted(),
                    p[j].innocent(),
                    o,
                    p[j].infiltration(),
                ],
                rng.random(),
            );
            match next {
                0 => {
                    t.case_counts[case_index(2, Some(i))] += 1;
                    t.pool_blocks[i][OWN_ADJUSTED] += 1;
                }
                1 => {
                    t.case_counts[case_index(3, Some(j))] += 1;
                    t.pool_blocks[j][OTHER_ADJUSTED] += 1;
                }
                2 => {
                    t.case_counts[case_index(6, Some(j))] += 1;
                    if rng.random::<f64>() < cfg.c {
                        t.pool_blocks[j][OTHER_ADJUSTED] += 1;
                        t.fork_wins[i][VS_OTHERS][OTHER_ADJUSTED] += 1;
                    }
                }
                _ => {
                    t.adjusted[j] += 1;
                    let third = pick(
                        &[p[0].innocent_adjusted(), p[1].innocent_adjusted(), o],
                        rng.random(),
                    );
                    // Case 4 when pool 1 withheld first, Case 5 otherwise;
                    // Cases 7 and 8 likewise for other miners.
                    let id = match (third, i) {
                        (2, 0) => 7,
                        (2, _) => 8,
                        (_, 0) => 4,
                        _ => 5,
                    };
                    let pool = (third < 2).then_some(third);
                    t.case_counts[case_index(id, pool)] += 1;
                    let kind = if third < 2 { VS_INNOCENT } else { VS_OTHERS };
                    let u: f64 = rng.random();
                    if u < cfg.c3 {
                        // Pool i's withheld block, mined in pool j, wins.
                        t.pool_blocks[j][BOTH_ADJUSTED] += 1;
                        t.fork_wins[i][kind][BOTH_ADJUSTED] += 1;
                    } else if u < 2.0 * cfg.c3 {
                        t.pool_blocks[i][BOTH_ADJUSTED] += 1;
                        t.fork_wins[j][kind][BOTH_ADJUSTED] += 1;
                    } else if third < 2 {
                        t.pool_blocks[third][BOTH_ADJUSTED] += 1;
                    }
                }
            }
        }
    }
}

/// Simulates the event tree; chunk `k` uses ChaCha8 stream `k` of `seed`.
pub fn simulate_game(
    cfg: &GameConfig,
    s: &StrategyProfile,
    n_rounds: u64,
    seed: u64,
) -> Result<GameTally> {
    cfg.validate()?;
    s.validate()?;
    if n_rounds == 0 {
        return Err(Error::InvalidSimulation(
            "n_rounds must be at least 1".into(),
        ));
    }
    let p = pools(cfg, s);
    let n_chunks = n_rounds.div_ceil(GAME_CHUNK_ROUNDS);
    let chunks: Vec<GameTally> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let n = GAME_CHUNK_ROUNDS.min(n_rounds - k * GAME_CHUNK_ROUNDS);
            let mut t = GameTally::empty();
            for _ in 0..n {
                play_round(&mut rng, cfg, &p, &mut t);
            }
            let r = account(cfg, s, &t.frequencies());
            t.batch_rewards.push((n, r));
            t
        })
        .collect();
    let mut total = GameTally::empty();
    for c in &chunks {
        total.merge(c);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameSolverConfig {
    /// Grid points per axis for each best response.
    pub resolution: usize,
    /// Strategy change (max-norm) at which iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest unilateral gain tolerated when verifying an equilibrium.
    pub verify_tolerance: f64,
}

impl Default for GameSolverConfig {
    fn default() -> Self {
        Self {
            resolution: 101,
            tolerance: 1e-4,
            max_iterations: 200,
            verify_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub r1: f64,
    pub r2: f64,
    pub reward: f64,
    /// Best value found on the grid before refinement.
    pub grid_reward: f64,
}

fn analytic_reward(cfg: &GameConfig, s: &StrategyProfile, pool: usize) -> f64 {
    account(cfg, s, &analytic_frequencies(cfg, s))[pool]
}

/// Best `(r1, r2)` for `pool` against the opponent's strategy in `current`:
/// grid search, then compass refinement from the best grid point.
pub fn best_response(
    cfg: &GameConfig,
    current: &StrategyProfile,
    pool: usize,
    solver: &GameSolverConfig,
) -> BestResponse {
    let n = solver.resolution.max(2);
    let h = 1.0 / (n - 1) as f64;
    let value = |r1: f64, r2: f64| analytic_reward(cfg, &current.with_pool(pool, r1, r2), pool);
    let rows: Vec<(usize, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..n {
                let v = value(i as f64 * h, j as f64 * h);
                if v > best.1 {
                    best = (j, v);
                }
            }
            best
        })
        .collect();
    let mut best = (0, 0, f64::NEG_INFINITY);
    for (i, &(j, v)) in rows.iter().enumerate() {
        if v > best.2 {
            best = (i, j, v);
        }
    }
    let grid_reward = best.2;
    let mut x = [best.0 as f64 * h, best.1 as f64 * h];
    let mut fx = grid_reward;
    let mut step = h;
    while step > 1e-7 {
        let mut moved = false;
        for (d0, d1) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let y = [(x[0] + d0).clamp(0.0, 1.0), (x[1] + d1).clamp(0.0, 1.0)];
            let fy = value(y[0], y[1]);
            if fy > fx + 1e-15 {
                x = y;
                fx = fy;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    BestResponse {
        r1: x[0],
        r2: x[1],
        reward: fx,
        grid_reward,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashResult {
    pub strategies: StrategyProfile,
    pub rewards: [f64; 2],
    pub rer: [f64; 2],
    /// Strategy changes fell below the tolerance.
    pub converged: bool,
    /// Neither pool gains more than the verification tolerance by deviating.
    pub verified: bool,
    /// Largest unilateral gain found ex post.
    pub max_deviation_gain: f64,
    pub iterations: usize,
    pub damped: bool,
    pub trajectory: Vec<StrategyProfile>,
}

/// Alternating best responses from the honest profile. When the iteration
/// returns to the profile of two steps before, later steps move half way.
pub fn nash_equilibrium(cfg: &GameConfig, solver: &GameSolverConfig) -> Result<NashResult> {
    cfg.validate()?;
    let mut s = StrategyProfile::HONEST;
    let mut trajectory = vec![s];
    let mut converged = false;
    let mut damped = false;
    let mut iterations = 0;
    for it in 1..=solver.max_iterations {
        iterations = it;
        let mut next = s;
        let b1 = best_response(cfg, &next, 0, solver);
        next = next.with_pool(0, b1.r1, b1.r2);
        let b2 = best_response(cfg, &next, 1, solver);
        next = next.with_pool(1, b2.r1, b2.r2);
        if !damped && trajectory.len() >= 2 {
            let before = trajectory[trajectory.len() - 2];
            if next.max_distance(&before) < 1e-9 && next.max_distance(&s) >= solver.tolerance {
                damped = true;
            }
        }
        if damped {
            next = StrategyProfile {
                r1_1: 0.5 * (s.r1_1 + next.r1_1),
                r2_1: 0.5 * (s.r2_1 + next.r2_1),
                r1_2: 0.5 * (s.r1_2 + next.r1_2),
                r2_2: 0.5 * (s.r2_2 + next.r2_2),
            };
        }
        let change = next.max_distance(&s);
        s = next;
        trajectory.push(s);
        if change < solver.tolerance {
            converged = true;
            break;
        }
    }
    let rewards = account(cfg, &s, &analytic_frequencies(cfg, &s));
    let mut gain: f64 = 0.0;
    for pool in 0..2 {
        let br = best_response(cfg, &s, pool, solver);
        gain = gain.max(br.reward - rewards[pool]);
    }
    let pr = PoolRewards {
        rewards,
        std_errors: [0.0; 2],
    };
    Ok(NashResult {
        strategies: s,
        rewards,
        rer: pr.rer(cfg),
        converged,
        verified: gain <= solver.verify_tolerance,
        max_deviation_gain: gain,
        iterations,
        damped,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameCell {
    pub alpha1: f64,
    pub alpha2: f64,
    pub c: f64,
    pub result: NashResult,
}

/// Equilibrium RERs over `alpha2s × cs` with pool 1 fixed at `base.alpha1`.
pub fn game_rer_table(
    base: &GameConfig,
    alpha2s: &[f64],
    cs: &[f64],
    solver: &GameSolverConfig,
) -> Result<Vec<GameCell>> {
    let cells: Vec<(f64, f64)> = alpha2s
        .iter()
        .flat_map(|&a2| cs.iter().map(move |&c| (a2, c)))
        .collect();
    cells
        .par_iter()
        .map(|&(alpha2, c)| {
            let cfg = GameConfig {
                alpha2,
                c,
                c3: 0.5 * c,
                ..*base
            };
            let result = nash_equilibrium(&cfg, solver)?;
            Ok(GameCell {
                alpha1: cfg.alpha1,
                alpha2,
                c,
                result,
            })
        })
        .collect()
}
