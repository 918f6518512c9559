//! The attacker's infiltration program: maximise the system reward over
//! `(r1, r2) ∈ [0, 1]²` for fixed `γ`, `ε1`, `ε2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{effective_infiltration, AttackParams, PowerProfile, RbarPolicy};
use crate::pricing::{maximum_eps, minimum_eps};
use crate::rewards::{attacker_reward_gross, attacker_rewards};

/// Which attacker reward the optimiser maximises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Total reward after paying bribes.
    #[default]
    Net,
    /// Reward before bribes are deducted.
    Gross,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub objective: Objective,
    /// Points per axis of the cross-checking grid.
    pub grid_resolution: usize,
    pub max_iterations: usize,
    /// Projected-gradient infinity norm at which a start is converged.
    pub gradient_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Net,
            grid_resolution: 101,
            max_iterations: 500,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub r1_hat: f64,
    pub r2_hat: f64,
    pub reward_at_opt: f64,
    pub kkt_residual: f64,
    pub method: String,
    pub oracle_gap: f64,
    /// False when no start met the gradient tolerance and the grid result
    /// was used instead.
    pub converged: bool,
}

const FD_STEP: f64 = 1e-6;

pub fn objective_value(
    profile: &PowerProfile,
    params: &AttackParams,
    objective: Objective,
    r1: f64,
    r2: f64,
) -> f64 {
    let at = params.with_infiltration(r1, r2);
    match objective {
        Objective::Net => attacker_rewards(profile, &at).total_bmpaw,
        Objective::Gross => attacker_reward_gross(profile, &at),
    }
}

/// Gradient of the objective with respect to `(r1, r2)`, coded by hand.
///
/// Returns `None` for r̄ policies that are not affine in `(r1, r2)`.
pub fn analytic_gradient(
    profile: &PowerProfile,
    params: &AttackParams,
    objective: Objective,
    r1: f64,
    r2: f64,
) -> Option<[f64; 2]> {
    let (p, q) = params.rbar_policy.linear_weights()?;
    let (a, beta, eta, delta) = (
        profile.alpha(),
        profile.beta(),
        profile.eta(),
        profile.delta(),
    );
    let at = params.with_infiltration(r1, r2);
    let (w1, w2) = match objective {
        Objective::Net => (1.0 - params.eps1, 1.0 - params.eps2),
        Objective::Gross => (1.0, 1.0),
    };
    let d = 1.0 - r2 * a;
    let n52 = (1.0 - r2) * a + eta + beta + params.gamma * delta;
    let rbar = effective_infiltration(profile, &at);
    let denom = rbar * a + beta;
    let (s, ds) = if denom > 0.0 {
        (rbar * a / denom, a * beta / (denom * denom))
    } else {
        (0.0, 0.0)
    };
    let b = beta / d + w1 * delta * n52 / (d * d) + w2 * eta / d;
    let db_dr2 = beta * a / (d * d)
        + w1 * delta * (2.0 * a * n52 - a * d) / (d * d * d)
        + w2 * eta * a / (d * d);

    let imr_r1 = -a + a * a * (1.0 - r2) / d;
    let imr_r2 = r1 * a * a * (a - 1.0) / (d * d);
    let c3 = r1 * a + beta;
    let case3_r1 = if c3 > 0.0 {
        a * beta * beta / (c3 * c3)
    } else {
        0.0
    };
    let g_r1 = a * s * b + r1 * a * ds * p * b;
    let g_r2 = r1 * a * (ds * q * b + s * db_dr2);
    Some([imr_r1 + case3_r1 + g_r1, imr_r2 + g_r2])
}

/// Finite-difference gradient: central with step `FD_STEP`, one-sided where
/// a central stencil would leave the unit square.
pub fn numeric_gradient(
    profile: &PowerProfile,
    params: &AttackParams,
    objective: Objective,
    r1: f64,
    r2: f64,
) -> [f64; 2] {
    let f = |x: f64, y: f64| objective_value(profile, params, objective, x, y);
    let partial = |x: [f64; 2], i: usize| {
        let mut lo = x;
        let mut hi = x;
        lo[i] = (x[i] - FD_STEP).max(0.0);
        hi[i] = (x[i] + FD_STEP).min(1.0);
        (f(hi[0], hi[1]) - f(lo[0], lo[1])) / (hi[i] - lo[i])
    };
    [partial([r1, r2], 0), partial([r1, r2], 1)]
}

fn gradient(
    profile: &PowerProfile,
    params: &AttackParams,
    objective: Objective,
    x: [f64; 2],
) -> [f64; 2] {
    analytic_gradient(profile, params, objective, x[0], x[1])
        .unwrap_or_else(|| numeric_gradient(profile, params, objective, x[0], x[1]))
}

fn project(x: [f64; 2]) -> [f64; 2] {
    [x[0].clamp(0.0, 1.0), x[1].clamp(0.0, 1.0)]
}

/// Which coordinates sit on a bound with the gradient pushing outward.
/// `g` is the gradient of the function being minimised.
fn active_set(x: [f64; 2], g: [f64; 2]) -> [bool; 2] {
    let mut active = [false; 2];
    for i in 0..2 {
        active[i] = (x[i] <= 0.0 && g[i] > 0.0) || (x[i] >= 1.0 && g[i] < 0.0);
    }
    active
}

fn projected_gradient_norm(x: [f64; 2], g: [f64; 2]) -> f64 {
    let active = active_set(x, g);
    (0..2)
        .filter(|&i| !active[i])
        .map(|i| g[i].abs())
        .fold(0.0, f64::max)
}

struct LocalResult {
    x: [f64; 2],
    value: f64,
    converged: bool,
}

/// Projected BFGS on the negated objective, started from `start`.
fn maximise_from(
    profile: &PowerProfile,
    params: &AttackParams,
    cfg: &SolverConfig,
    start: [f64; 2],
) -> LocalResult {
    let f = |x: [f64; 2]| -objective_value(profile, params, cfg.objective, x[0], x[1]);
    let grad = |x: [f64; 2]| {
        let g = gradient(profile, params, cfg.objective, x);
        [-g[0], -g[1]]
    };
    let identity = [[1.0, 0.0], [0.0, 1.0]];

    let mut x = project(start);
    let mut fx = f(x);
    let mut g = grad(x);
    let mut h = identity;
    let mut active = active_set(x, g);
    let mut converged = false;

    for _ in 0..cfg.max_iterations {
        let pg = projected_gradient_norm(x, g);
        if pg < cfg.gradient_tolerance {
            converged = true;
            break;
        }
        let mut dir = [0.0; 2];
        for i in 0..2 {
            if !active[i] {
                dir[i] = -(0..2)
                    .filter(|&j| !active[j])
                    .map(|j| h[i][j] * g[j])
                    .sum::<f64>();
            }
        }
        if !(dir[0] * g[0] + dir[1] * g[1] < 0.0) {
            h = identity;
            for i in 0..2 {
                dir[i] = if active[i] { 0.0 } else { -g[i] };
            }
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = project([x[0] + t * dir[0], x[1] + t * dir[1]]);
            let ft = f(trial);
            let decrease = g[0] * (trial[0] - x[0]) + g[1] * (trial[1] - x[1]);
            if ft <= fx + 1e-4 * decrease {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            if h != identity {
                h = identity;
                continue;
            }
            // The line search cannot improve further: numerical floor.
            converged = pg < 1e-6;
            break;
        };
        let gn = grad(xn);
        let step = [xn[0] - x[0], xn[1] - x[1]];
        let y = [gn[0] - g[0], gn[1] - g[1]];
        let new_active = active_set(xn, gn);
        if new_active != active {
            h = identity;
        } else {
            let sy = step[0] * y[0] + step[1] * y[1];
            if sy > 1e-16 {
                h = bfgs_update(h, step, y, sy);
            }
        }
        let stalled = step[0].abs().max(step[1].abs()) < 1e-15;
        x = xn;
        fx = fxn;
        g = gn;
        active = new_active;
        if stalled {
            converged = projected_gradient_norm(x, g) < 1e-6;
            break;
        }
    }
    if !converged {
        converged = projected_gradient_norm(x, g) < cfg.gradient_tolerance;
    }
    LocalResult {
        x,
        value: -fx,
        converged,
    }
}

fn bfgs_update(h: [[f64; 2]; 2], s: [f64; 2], y: [f64; 2], sy: f64) -> [[f64; 2]; 2] {
    // H+ = (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
    let rho = 1.0 / sy;
    let mut left = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { 1.0 } else { 0.0 };
            left[i][j] = id - rho * s[i] * y[j];
        }
    }
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    acc += left[i][k] * h[k][l] * left[j][l];
                }
            }
            out[i][j] = acc + rho * s[i] * s[j];
        }
    }
    out
}

/// Exhaustive search over a uniform `resolution × resolution` grid. Ties
/// (relative 1e-12) go to the lexicographically smaller `(r1, r2)`.
pub fn grid_oracle(
    profile: &PowerProfile,
    params: &AttackParams,
    objective: Objective,
    resolution: usize,
) -> OptimizationResult {
    let n = resolution.max(2);
    let step = 1.0 / (n - 1) as f64;
    let rows: Vec<(usize, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r1 = i as f64 * step;
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..n {
                let v = objective_value(profile, params, objective, r1, j as f64 * step);
                if better(v, best.1) {
                    best = (j, v);
                }
            }
            best
        })
        .collect();
    let mut best = (0, 0, f64::NEG_INFINITY);
    for (i, &(j, v)) in rows.iter().enumerate() {
        if better(v, best.2) {
            best = (i, j, v);
        }
    }
    let (r1, r2) = (best.0 as f64 * step, best.1 as f64 * step);
    let kkt = kkt_residuals(profile, params, objective, r1, r2);
    OptimizationResult {
        r1_hat: r1,
        r2_hat: r2,
        reward_at_opt: best.2,
        kkt_residual: kkt.max_residual(),
        method: format!("grid_oracle_{n}"),
        oracle_gap: 0.0,
        converged: true,
    }
}

/// Strictly better beyond a relative tie band of 1e-12.
fn better(candidate: f64, incumbent: f64) -> bool {
    if incumbent.is_finite() {
        candidate > incumbent + 1e-12 * incumbent.abs()
    } else {
        candidate > incumbent
    }
}

/// Maximises the attacker objective over `(r1, r2)`; the incoming `r1`,
/// `r2` of `params` are ignored.
pub fn optimize_infiltration(
    profile: &PowerProfile,
    params: &AttackParams,
    cfg: &SolverConfig,
) -> OptimizationResult {
    let lattice = [0.25, 0.5, 0.75];
    let starts: Vec<[f64; 2]> = lattice
        .iter()
        .flat_map(|&a| lattice.iter().map(move |&b| [a, b]))
        .collect();
    let runs: Vec<LocalResult> = starts
        .par_iter()
        .map(|&s| maximise_from(profile, params, cfg, s))
        .collect();
    let mut best = &runs[0];
    for run in &runs[1..] {
        if better(run.value, best.value) {
            best = run;
        }
    }
    let mut x = best.x;
    let mut value = best.value;
    let mut converged = best.converged;
    let mut method = "projected_bfgs_multistart".to_string();

    let oracle = grid_oracle(profile, params, cfg.objective, cfg.grid_resolution);
    if oracle.reward_at_opt > value {
        let refined = maximise_from(profile, params, cfg, [oracle.r1_hat, oracle.r2_hat]);
        if refined.value >= oracle.reward_at_opt {
            x = refined.x;
            value = refined.value;
            converged = refined.converged;
            method = "projected_bfgs_from_oracle".to_string();
        } else {
            x = [oracle.r1_hat, oracle.r2_hat];
            value = oracle.reward_at_opt;
            converged = false;
        }
    }
    if !converged {
        method = "grid_oracle_fallback".to_string();
        if oracle.reward_at_opt >= value {
            x = [oracle.r1_hat, oracle.r2_hat];
            value = oracle.reward_at_opt;
        }
    }
    let kkt = kkt_residuals(profile, params, cfg.objective, x[0], x[1]);
    OptimizationResult {
        r1_hat: x[0],
        r2_hat: x[1],
        reward_at_opt: value,
        kkt_residual: kkt.max_residual(),
        method,
        oracle_gap: (value - oracle.reward_at_opt).abs(),
        converged,
    }
}

/// First-order optimality diagnostics for minimising `-R` subject to
/// `g1 = -r1`, `g2 = r1 - 1`, `g3 = -r2`, `g4 = r2 - 1`, all `<= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Finite-difference gradient of the minimised function `-R`.
    pub gradient: [f64; 2],
    pub multipliers: [f64; 4],
    pub stationarity: [f64; 2],
    pub complementarity: [f64; 4],
    pub dual_infeasibility: [f64; 4],
}

impl KktReport {
    /// All residual components in one vector.
    pub fn residuals(&self) -> Vec<f64> {
        let mut v = self.stationarity.to_vec();
        v.extend_from_slice(&self.complementarity);
        v.extend_from_slice(&self.dual_infeasibility);
        v
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals()
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max)
    }
}

const ACTIVE_BAND: f64 = 1e-9;

pub fn kkt_residuals(
    profile: &PowerProfile,
    params: &AttackParams,
    objective: Objective,
    r1: f64,
    r2: f64,
) -> KktReport {
    let g = numeric_gradient(profile, params, objective, r1, r2);
    let grad = [-g[0], -g[1]];
    let x = [r1, r2];
    let constraint = [-r1, r1 - 1.0, -r2, r2 - 1.0];
    // ∇g_k is ∓ the unit vector of its coordinate.
    let mut mu = [0.0; 4];
    let mut stationarity = grad;
    for i in 0..2 {
        let (lower, upper) = (2 * i, 2 * i + 1);
        if x[i] <= ACTIVE_BAND {
            mu[lower] = grad[i];
            stationarity[i] = 0.0;
        } else if x[i] >= 1.0 - ACTIVE_BAND {
            mu[upper] = -grad[i];
            stationarity[i] = 0.0;
        }
    }
    let mut complementarity = [0.0; 4];
    let mut dual = [0.0; 4];
    for k in 0..4 {
        complementarity[k] = mu[k] * constraint[k];
        dual[k] = (-mu[k]).max(0.0);
    }
    KktReport {
        gradient: grad,
        multipliers: mu,
        stationarity,
        complementarity,
        dual_infeasibility: dual,
    }
}

/// Definiteness of a symmetric 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    PositiveDefinite,
    NegativeDefinite,
    Indefinite,
    Semidefinite,
}

pub fn numeric_hessian(
    profile: &PowerProfile,
    params: &AttackParams,
    objective: Objective,
    r1: f64,
    r2: f64,
) -> [[f64; 2]; 2] {
    let h = 1e-4;
    let f = |x: f64, y: f64| objective_value(profile, params, objective, x, y);
    let x = r1.clamp(h, 1.0 - h);
    let y = r2.clamp(h, 1.0 - h);
    let fxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
    let fyy = (f(x, y + h) - 2.0 * f(x, y) + f(x, y - h)) / (h * h);
    let fxy =
        (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
    [[fxx, fxy], [fxy, fyy]]
}

pub fn classify(m: [[f64; 2]; 2]) -> Definiteness {
    let tol = 1e-7;
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let trace = m[0][0] + m[1][1];
    if det > tol && trace > 0.0 {
        Definiteness::PositiveDefinite
    } else if det > tol && trace < 0.0 {
        Definiteness::NegativeDefinite
    } else if det < -tol {
        Definiteness::Indefinite
    } else {
        Definiteness::Semidefinite
    }
}

/// Counts of Hessian classes of `-R` over a sample of points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HessianAudit {
    pub positive_definite: usize,
    pub negative_definite: usize,
    pub indefinite: usize,
    pub semidefinite: usize,
}

impl HessianAudit {
    pub fn total(&self) -> usize {
        self.positive_definite + self.negative_definite + self.indefinite + self.semidefinite
    }

    /// Whether every sampled Hessian of `-R` was positive definite.
    pub fn convex_everywhere(&self) -> bool {
        self.positive_definite == self.total()
    }
}

/// Classifies the Hessian of `-R` at each of `points`.
pub fn hessian_audit(
    profile: &PowerProfile,
    params: &AttackParams,
    objective: Objective,
    points: &[(f64, f64)],
) -> HessianAudit {
    let mut audit = HessianAudit::default();
    for &(r1, r2) in points {
        let h = numeric_hessian(profile, params, objective, r1, r2);
        let neg = [[-h[0][0], -h[0][1]], [-h[1][0], -h[1][1]]];
        match classify(neg) {
            Definiteness::PositiveDefinite => audit.positive_definite += 1,
            Definiteness::NegativeDefinite => audit.negative_definite += 1,
            Definiteness::Indefinite => audit.indefinite += 1,
            Definiteness::Semidefinite => audit.semidefinite += 1,
        }
    }
    audit
}

/// How the bribe fractions are fixed during a nuisance search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsRule {
    /// `ε1 = ε2 = value`.
    Fixed(f64),
    /// Lowest bribe the target accepts, at the user-supplied `(r1, r2)`.
    Minimum,
    /// Highest bribe the attacker can afford, at the user-supplied `(r1, r2)`.
    Maximum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceGrid {
    pub etas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub eps_rules: Vec<EpsRule>,
    pub policies: Vec<RbarPolicy>,
    pub objectives: Vec<Objective>,
    /// `(r1, r2)` used to evaluate the minimum/maximum ε rules.
    pub pricing_point: (f64, f64),
}

impl Default for NuisanceGrid {
    fn default() -> Self {
        let steps = |n: usize, hi: f64| (0..=n).map(|k| hi * k as f64 / n as f64).collect();
        let mut eps_rules: Vec<EpsRule> =
            (0..=10).map(|k| EpsRule::Fixed(0.05 * k as f64)).collect();
        eps_rules.push(EpsRule::Minimum);
        eps_rules.push(EpsRule::Maximum);
        Self {
            etas: steps(12, 0.6),
            gammas: steps(20, 1.0),
            eps_rules,
            policies: vec![RbarPolicy::Mean, RbarPolicy::R1Only, RbarPolicy::R2Only],
            objectives: vec![Objective::Net, Objective::Gross],
            pricing_point: (0.5, 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceMatch {
    pub eta: f64,
    pub gamma: f64,
    pub eps_rule: EpsRule,
    pub eps: (f64, f64),
    pub policy: RbarPolicy,
    pub objective: Objective,
    pub r1_hat: f64,
    pub r2_hat: f64,
    /// Max-norm distance from the target point.
    pub residual: f64,
}

/// Searches unstated parameters for the optimum closest to `target`.
/// Returns every evaluated combination, best first.
pub fn nuisance_search(
    alpha: f64,
    beta: f64,
    target: (f64, f64),
    grid: &NuisanceGrid,
    cfg: &SolverConfig,
) -> Vec<NuisanceMatch> {
    let mut combos = Vec::new();
    for &eta in &grid.etas {
        let Ok(profile) = PowerProfile::new(alpha, beta, eta) else {
            continue;
        };
        for &gamma in &grid.gammas {
            for &eps_rule in &grid.eps_rules {
                for &policy in &grid.policies {
                    for &objective in &grid.objectives {
                        combos.push((profile, gamma, eps_rule, policy, objective));
                    }
                }
            }
        }
    }
    let mut found: Vec<NuisanceMatch> = combos
        .par_iter()
        .filter_map(|&(profile, gamma, eps_rule, policy, objective)| {
            let base = AttackParams {
                r1: grid.pricing_point.0,
                r2: grid.pricing_point.1,
                gamma,
                eps1: 0.0,
                eps2: 0.0,
                rbar_policy: policy,
            };
            let eps = match eps_rule {
                EpsRule::Fixed(e) => (e, e),
                EpsRule::Minimum => minimum_eps(&profile, &base).ok()?,
                EpsRule::Maximum => maximum_eps(&profile, &base).ok()?,
            };
            let params = base.with_bribes(eps.0, eps.1);
            let cfg = SolverConfig { objective, ..*cfg };
            let opt = optimize_infiltration(&profile, &params, &cfg);
            let residual = (opt.r1_hat - target.0)
                .abs()
                .max((opt.r2_hat - target.1).abs());
            Some(NuisanceMatch {
                eta: profile.eta(),
                gamma,
                eps_rule,
                eps,
                policy,
                objective,
                r1_hat: opt.r1_hat,
                r2_hat: opt.r2_hat,
                residual,
            })
        })
        .collect();
    found.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    found
}
