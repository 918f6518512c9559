use std::path::{Path, PathBuf};

use bmpaw_core::optimizer::optimize_infiltration;
use bmpaw_core::pricing::{feasible_bribe_region, maximum_eps, minimum_eps};
use bmpaw_core::sim::{empirical_rewards, simulate_paired, SimConfig, ATTACKER, TARGET};
use bmpaw_core::{
    attacker_extra_reward, attacker_rewards, rer, target_extra_reward, target_reward_bmpaw,
    target_reward_paw, Strategy,
};
use clap::{Args, Subcommand};
use rayon::prelude::*;

use crate::error::CliError;
use crate::output::{write_records, Record};
use crate::scenario::{self, LoadedScenario, OutputKind, Point, SimulationSpec};
use crate::{tables, validate};

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Closed-form attacker and target rewards at every sweep point.
    Analytic(CommonArgs),
    /// Optimal infiltration fractions at every sweep point.
    Optimize(CommonArgs),
    /// Feasible bribe region at every sweep point.
    Price(CommonArgs),
    /// Paired BM-PAW/PAW Monte Carlo at every sweep point.
    Simulate(CommonArgs),
    /// Two-pool game equilibrium table.
    Game(CommonArgs),
    /// Every metric group listed under `outputs`.
    Sweep(CommonArgs),
    /// Monte Carlo against closed forms at 3 standard errors.
    Validate(CommonArgs),
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Analytic(a)
            | Command::Optimize(a)
            | Command::Price(a)
            | Command::Simulate(a)
            | Command::Game(a)
            | Command::Sweep(a)
            | Command::Validate(a) => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Analytic(_) => "analytic",
            Command::Optimize(_) => "optimize",
            Command::Price(_) => "price",
            Command::Simulate(_) => "simulate",
            Command::Game(_) => "game",
            Command::Sweep(_) => "sweep",
            Command::Validate(_) => "validate",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for result files.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Overrides the simulation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of simulated rounds.
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub solver_failures: usize,
    pub validation_failures: usize,
    /// Human-readable report for the terminal.
    pub report: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.solver_failures > 0 {
            3
        } else if self.validation_failures > 0 {
            1
        } else {
            0
        }
    }

    fn absorb(&mut self, other: Outcome) {
        self.files.extend(other.files);
        self.solver_failures += other.solver_failures;
        self.validation_failures += other.validation_failures;
        self.report.push_str(&other.report);
    }
}

/// Loads the scenario and runs the command on a pool of `--threads` workers.
pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    let args = command.args();
    let loaded = scenario::load(&args.config)?;
    let sim = simulation_spec(&loaded, args)?;
    let run = || run(command, &loaded, sim, &args.out_dir);
    match args.threads {
        Some(0) => Err(CliError::Config {
            path: args.config.clone(),
            line: 0,
            column: 0,
            message: "--threads must be at least 1".into(),
        }),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::ThreadPool(e.to_string()))?
            .install(run),
        None => run(),
    }
}

fn simulation_spec(
    l: &LoadedScenario,
    args: &CommonArgs,
) -> Result<Option<SimulationSpec>, CliError> {
    let Some(mut sim) = l.scenario.simulation else {
        if args.seed.is_some() || args.rounds.is_some() {
            return Err(l.error_at("id", "--seed/--rounds need a `simulation` block"));
        }
        return Ok(None);
    };
    if let Some(seed) = args.seed {
        sim.seed = seed;
    }
    if let Some(rounds) = args.rounds {
        if rounds < bmpaw_core::sim::MIN_ROUNDS_FOR_CI {
            return Err(l.error_at(
                "n_rounds",
                format!(
                    "--rounds must be at least {}",
                    bmpaw_core::sim::MIN_ROUNDS_FOR_CI
                ),
            ));
        }
        sim.n_rounds = rounds;
    }
    Ok(Some(sim))
}

fn run(
    command: &Command,
    l: &LoadedScenario,
    sim: Option<SimulationSpec>,
    out_dir: &Path,
) -> Result<Outcome, CliError> {
    let kinds: Vec<OutputKind> = match command {
        Command::Analytic(_) => vec![OutputKind::Analytic],
        Command::Optimize(_) => vec![OutputKind::OptimalR],
        Command::Price(_) => vec![OutputKind::BribeRegion],
        Command::Simulate(_) => vec![OutputKind::Simulation],
        Command::Game(_) => vec![OutputKind::GameTable],
        Command::Sweep(_) => {
            if l.scenario.outputs.is_empty() {
                return Err(l.error_at("id", "`sweep` needs a non-empty `outputs` list"));
            }
            l.scenario.outputs.clone()
        }
        Command::Validate(_) => {
            let sim =
                sim.ok_or_else(|| l.error_at("id", "`validate` needs a `simulation` block"))?;
            return validate::run(l, &sim, out_dir);
        }
    };
    let id = &l.scenario.id;
    let mut records = Vec::new();
    let mut outcome = Outcome::default();
    for kind in kinds {
        match kind {
            OutputKind::Analytic => records.extend(per_point(l, analytic_records)),
            OutputKind::OptimalR => {
                let (recs, failures) = optimal_records(l);
                records.extend(recs);
                outcome.solver_failures += failures;
            }
            OutputKind::BribeRegion => records.extend(per_point(l, bribe_records)),
            OutputKind::Simulation => {
                let sim = sim.ok_or_else(|| {
                    l.error_at("outputs", "simulation output needs a `simulation` block")
                })?;
                let per: Vec<Result<Vec<Record>, CliError>> = l
                    .points
                    .iter()
                    .map(|p| simulation_records(id, p, &sim))
                    .collect();
                for r in per {
                    records.extend(r?);
                }
            }
            OutputKind::GameTable => {
                let spec = l
                    .scenario
                    .game
                    .as_ref()
                    .ok_or_else(|| l.error_at("id", "game output needs a `game` block"))?;
                let (recs, table) = tables::table2(id, spec, out_dir)?;
                records.extend(recs);
                outcome.absorb(table);
            }
            OutputKind::Table1 => {
                let spec = l
                    .scenario
                    .table1
                    .as_ref()
                    .ok_or_else(|| l.error_at("id", "table1 output needs a `table1` block"))?;
                let (recs, table) = tables::table1(l, spec, out_dir)?;
                records.extend(recs);
                outcome.absorb(table);
            }
        }
    }
    let stem = format!("{id}-{}", command.name());
    let mut files = write_records(out_dir, &stem, &records)?;
    files.append(&mut outcome.files);
    outcome.files = files;
    outcome.report.push_str(&format!(
        "{} records for {} sweep point(s)\n",
        records.len(),
        l.points.len()
    ));
    Ok(outcome)
}

/// Evaluates `f` at every sweep point in parallel, keeping sweep order.
fn per_point(l: &LoadedScenario, f: fn(&str, &Point) -> Vec<Record>) -> Vec<Record> {
    let id = l.scenario.id.as_str();
    let per: Vec<Vec<Record>> = l.points.par_iter().map(|p| f(id, p)).collect();
    per.into_iter().flatten().collect()
}

fn rer_record(id: &str, p: &Point, metric: &str, s1: f64, s2: f64) -> Record {
    match rer(s1, s2) {
        Ok(v) => Record::at(id, p, metric, v),
        Err(_) => Record::at(id, p, metric, f64::NAN).with_status("undefined"),
    }
}

pub fn analytic_records(id: &str, p: &Point) -> Vec<Record> {
    let a = attacker_rewards(&p.profile, &p.params);
    let tb = target_reward_bmpaw(&p.profile, &p.params);
    let tp = target_reward_paw(&p.profile, &p.params);
    let alpha = p.profile.alpha();
    vec![
        Record::at(id, p, "attacker_reward_bmpaw", a.total_bmpaw),
        Record::at(id, p, "attacker_reward_paw", a.total_paw),
        Record::at(id, p, "attacker_reward_honest", alpha),
        rer_record(id, p, "attacker_rer", a.total_bmpaw, a.total_paw),
        rer_record(id, p, "attacker_rer_vs_honest", a.total_bmpaw, alpha),
        Record::at(
            id,
            p,
            "attacker_extra_reward",
            attacker_extra_reward(&p.profile, &p.params),
        ),
        Record::at(id, p, "target_reward_bmpaw", tb),
        Record::at(id, p, "target_reward_paw", tp),
        rer_record(id, p, "target_rer", tb, tp),
        Record::at(
            id,
            p,
            "target_extra_reward",
            target_extra_reward(&p.profile, &p.params),
        ),
    ]
}

fn optimal_records(l: &LoadedScenario) -> (Vec<Record>, usize) {
    let id = l.scenario.id.as_str();
    let solver = l.scenario.optimizer.solver();
    let per: Vec<(Vec<Record>, bool)> = l
        .points
        .par_iter()
        .map(|p| {
            let r = optimize_infiltration(&p.profile, &p.params, &solver);
            let status = if r.converged { "ok" } else { "not_converged" };
            let recs = [
                ("r1_hat", r.r1_hat),
                ("r2_hat", r.r2_hat),
                ("reward_at_opt", r.reward_at_opt),
                ("kkt_residual", r.kkt_residual),
                ("oracle_gap", r.oracle_gap),
            ]
            .into_iter()
            .map(|(m, v)| Record::at(id, p, m, v).with_status(status))
            .collect();
            (recs, r.converged)
        })
        .collect();
    let failures = per.iter().filter(|(_, ok)| !ok).count();
    (per.into_iter().flat_map(|(r, _)| r).collect(), failures)
}

pub fn bribe_records(id: &str, p: &Point) -> Vec<Record> {
    let region = feasible_bribe_region(&p.profile, &p.params, 0);
    let status = if region.feasible {
        "feasible"
    } else {
        "infeasible"
    };
    let mut out: Vec<Record> = [
        ("a1", region.a1),
        ("a2", region.a2),
        ("ceiling", region.ceiling),
        ("floor", region.floor),
    ]
    .into_iter()
    .map(|(m, v)| Record::at(id, p, m, v).with_status(status))
    .collect();
    if let (Ok(lo), Ok(hi)) = (
        minimum_eps(&p.profile, &p.params),
        maximum_eps(&p.profile, &p.params),
    ) {
        for (m, v) in [
            ("min_eps1", lo.0),
            ("min_eps2", lo.1),
            ("max_eps1", hi.0),
            ("max_eps2", hi.1),
        ] {
            out.push(Record::at(id, p, m, v).with_status(status));
        }
    }
    out
}

fn simulation_records(id: &str, p: &Point, sim: &SimulationSpec) -> Result<Vec<Record>, CliError> {
    let cfg = SimConfig {
        shares_per_block: sim.shares_per_block,
        ..SimConfig::new(p.profile, p.params, Strategy::BmPaw, sim.n_rounds, sim.seed)
    };
    let paired = simulate_paired(&cfg, Strategy::BmPaw, Strategy::Paw)?;
    let bm = empirical_rewards(&paired.first)?;
    let paw = empirical_rewards(&paired.second)?;
    let flag = |degenerate: bool| if degenerate { "degenerate" } else { "ok" };
    let mut out = Vec::new();
    for (label, e) in [("bmpaw", &bm), ("paw", &paw)] {
        for (role, name) in ["attacker", "victim", "target", "others"]
            .iter()
            .enumerate()
        {
            out.push(
                Record::at(id, p, format!("{name}_reward_{label}"), 0.0)
                    .with_estimate(&e.role(role))
                    .with_status(flag(e.degenerate[role])),
            );
        }
    }
    for (role, name) in [(ATTACKER, "attacker_rer"), (TARGET, "target_rer")] {
        out.push(Record::at(id, p, name, 0.0).with_estimate(&paired.rer(role)));
    }
    Ok(out)
}
