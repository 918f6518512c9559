//! Monte Carlo against the closed forms, per sweep point.
//!
//! The analytic side uses the r̄ measured in the same run (falling back to
//! the scenario's policy when no power-adjusting round occurred) and the
//! round-conserving target reward, which is what a one-block-per-round
//! simulation can reproduce.

use std::fmt::Write as _;
use std::path::Path;

use bmpaw_core::rewards::target_fork_resolution_term;
use bmpaw_core::sim::{
    empirical_rbar, empirical_rewards, simulate_paired, SimConfig, SimTally, ATTACKER, TARGET,
};
use bmpaw_core::stats::Estimate;
use bmpaw_core::{
    attacker_rewards, target_reward_bmpaw, target_reward_paw, AttackParams, PowerProfile,
    RbarPolicy, Strategy,
};

use crate::commands::Outcome;
use crate::error::CliError;
use crate::output::{sig10, write_records, Record};
use crate::scenario::{LoadedScenario, SimulationSpec};

/// Largest |z| that passes.
pub const Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationLine {
    pub metric: String,
    pub analytic: f64,
    pub empirical: Estimate,
    pub z: f64,
    pub pass: bool,
}

impl ValidationLine {
    pub fn assess(metric: impl Into<String>, analytic: f64, empirical: Estimate) -> Self {
        let diff = empirical.mean - analytic;
        let (z, pass) = if empirical.std_error > 0.0 {
            let z = diff / empirical.std_error;
            (z, z.abs() <= Z_LIMIT)
        } else {
            // Zero variance: the estimate must be exact.
            let exact = diff.abs() <= 1e-12;
            (
                if exact {
                    0.0
                } else {
                    f64::INFINITY.copysign(diff)
                },
                exact,
            )
        };
        Self {
            metric: metric.into(),
            analytic,
            empirical,
            z,
            pass,
        }
    }
}

fn measured_params(
    tally: &SimTally,
    profile: &PowerProfile,
    params: &AttackParams,
) -> AttackParams {
    match empirical_rbar(tally, profile) {
        Ok(rbar) => params.with_policy(RbarPolicy::Empirical(rbar)),
        Err(_) => *params,
    }
}

/// The four reward checks at one parameter point.
pub fn validation_lines(
    profile: &PowerProfile,
    params: &AttackParams,
    sim: &SimulationSpec,
) -> Result<Vec<ValidationLine>, CliError> {
    let cfg = SimConfig {
        shares_per_block: sim.shares_per_block,
        ..SimConfig::new(*profile, *params, Strategy::BmPaw, sim.n_rounds, sim.seed)
    };
    let paired = simulate_paired(&cfg, Strategy::BmPaw, Strategy::Paw)?;
    let mut lines = Vec::new();
    for (label, tally) in [("bmpaw", &paired.first), ("paw", &paired.second)] {
        let at = measured_params(tally, profile, params);
        let rewards = attacker_rewards(profile, &at);
        let k = target_fork_resolution_term(profile, &at);
        let (attacker, target) = if label == "bmpaw" {
            (rewards.total_bmpaw, target_reward_bmpaw(profile, &at) - k)
        } else {
            (rewards.total_paw, target_reward_paw(profile, &at) - k)
        };
        let e = empirical_rewards(tally)?;
        lines.push(ValidationLine::assess(
            format!("attacker_reward_{label}"),
            attacker,
            e.role(ATTACKER),
        ));
        lines.push(ValidationLine::assess(
            format!("target_reward_{label}"),
            target,
            e.role(TARGET),
        ));
    }
    Ok(lines)
}

pub fn run(l: &LoadedScenario, sim: &SimulationSpec, out_dir: &Path) -> Result<Outcome, CliError> {
    let id = l.scenario.id.as_str();
    let mut records = Vec::new();
    let mut report = String::new();
    let mut failures = 0;
    let _ = writeln!(
        report,
        "{:<6} {:<24} {:>14} {:>14} {:>14} {:>14} {:>8}  result",
        "point", "metric", "analytic", "empirical", "ci_low", "ci_high", "z"
    );
    for (n, p) in l.points.iter().enumerate() {
        for line in validation_lines(&p.profile, &p.params, sim)? {
            let status = if line.pass { "pass" } else { "fail" };
            failures += usize::from(!line.pass);
            let _ = writeln!(
                report,
                "{:<6} {:<24} {:>14} {:>14} {:>14} {:>14} {:>8}  {status}",
                n,
                line.metric,
                sig10(line.analytic),
                sig10(line.empirical.mean),
                sig10(line.empirical.ci_low),
                sig10(line.empirical.ci_high),
                format!("{:.3}", line.z),
            );
            records.push(
                Record::at(id, p, &line.metric, 0.0)
                    .with_estimate(&line.empirical)
                    .with_status(status),
            );
            records.push(
                Record::at(id, p, format!("{}.analytic", line.metric), line.analytic)
                    .with_status(status),
            );
            records
                .push(Record::at(id, p, format!("{}.z", line.metric), line.z).with_status(status));
        }
    }
    let files = write_records(out_dir, &format!("{id}-validate"), &records)?;
    let _ = writeln!(report, "{} check(s) failed at |z| > {}", failures, Z_LIMIT);
    Ok(Outcome {
        files,
        validation_failures: failures,
        report,
        ..Outcome::default()
    })
}
