//! Scenario files: JSON documents describing one experiment.
//!
//! ```json
//! {
//!   "id": "bribe_grid",
//!   "profile": { "alpha": 0.2, "beta": 0.2, "eta": 0.2 },
//!   "params": { "r1": 0.5, "r2": 0.5, "gamma": 0.5, "eps1": 0.0, "eps2": 0.0,
//!               "rbar_policy": "mean" },
//!   "sweep": [ { "parameter": "eps1", "values": [0.0, 0.1, 0.2] } ],
//!   "outputs": ["analytic"],
//!   "simulation": { "n_rounds": 1000000, "seed": 7, "shares_per_block": 1000 },
//!   "optimizer": { "objective": "net", "grid_resolution": 101 },
//!   "game": { "alpha1": 0.2, "alpha2": [0.1, 0.2], "c": [0.2, 1.0] },
//!   "table1": { "alphas": [0.2], "betas": [0.2] }
//! }
//! ```
//!
//! Sweep axes form a cross product, first axis outermost. Every sweep point
//! is validated against the model before anything runs.

use std::path::Path;

use bmpaw_core::game::{GameAccounting, GameConfig};
use bmpaw_core::optimizer::{NuisanceGrid, Objective, SolverConfig};
use bmpaw_core::{AttackParams, PowerProfile, RbarPolicy};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub profile: ProfileSpec,
    pub params: ParamsSpec,
    #[serde(default)]
    pub sweep: Option<Vec<SweepAxis>>,
    #[serde(default)]
    pub outputs: Vec<OutputKind>,
    #[serde(default)]
    pub simulation: Option<SimulationSpec>,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub game: Option<GameSpec>,
    #[serde(default)]
    pub table1: Option<Table1Spec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub r1: f64,
    pub r2: f64,
    pub gamma: f64,
    pub eps1: f64,
    pub eps2: f64,
    #[serde(default)]
    pub rbar_policy: RbarPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Alpha,
    Beta,
    Eta,
    Gamma,
    Eps1,
    Eps2,
    R1,
    R2,
}

impl Parameter {
    pub fn name(&self) -> &'static str {
        match self {
            Parameter::Alpha => "alpha",
            Parameter::Beta => "beta",
            Parameter::Eta => "eta",
            Parameter::Gamma => "gamma",
            Parameter::Eps1 => "eps1",
            Parameter::Eps2 => "eps2",
            Parameter::R1 => "r1",
            Parameter::R2 => "r2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: Parameter,
    pub values: Vec<f64>,
}

/// Metric groups a `sweep` run can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Analytic,
    OptimalR,
    BribeRegion,
    Simulation,
    GameTable,
    Table1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub n_rounds: u64,
    pub seed: u64,
    #[serde(default = "default_shares_per_block")]
    pub shares_per_block: f64,
}

fn default_shares_per_block() -> f64 {
    1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    #[serde(default)]
    pub objective: Objective,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            objective: Objective::default(),
            grid_resolution: default_resolution(),
        }
    }
}

impl OptimizerSpec {
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            objective: self.objective,
            grid_resolution: self.grid_resolution,
            ..SolverConfig::default()
        }
    }
}

fn default_resolution() -> usize {
    101
}

fn default_tolerance() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub alpha1: f64,
    pub alpha2: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub eps1: f64,
    #[serde(default)]
    pub eps2: f64,
    #[serde(default)]
    pub accounting: GameAccounting,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Reference RERs to compare against, `[alpha2][c]`.
    #[serde(default)]
    pub reference: Option<Table2Reference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table2Reference {
    pub rer1: Vec<Vec<f64>>,
    pub rer2: Vec<Vec<f64>>,
}

impl GameSpec {
    pub fn config(&self, alpha2: f64, c: f64) -> GameConfig {
        GameConfig {
            alpha1: self.alpha1,
            alpha2,
            c,
            c3: 0.5 * c,
            eps1: self.eps1,
            eps2: self.eps2,
            accounting: self.accounting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Spec {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Reference optima `[beta][alpha] = (r1, r2)`.
    #[serde(default)]
    pub reference: Option<Vec<Vec<(f64, f64)>>>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub grid: Option<NuisanceGrid>,
}

/// One fully specified evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub profile: PowerProfile,
    pub params: AttackParams,
}

/// A scenario together with its source text, for error locations.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub points: Vec<Point>,
    source: String,
    path: std::path::PathBuf,
}

impl LoadedScenario {
    /// Configuration error pointing at the first occurrence of `key`.
    pub fn error_at(&self, key: &str, message: impl Into<String>) -> CliError {
        config_error(&self.path, &self.source, key, message.into())
    }
}

fn locate(source: &str, key: &str) -> (usize, usize) {
    let quoted = format!("\"{key}\"");
    for (n, line) in source.lines().enumerate() {
        if let Some(col) = line.find(&quoted) {
            return (n + 1, col + 1);
        }
    }
    (1, 1)
}

fn config_error(path: &Path, source: &str, key: &str, message: String) -> CliError {
    let (line, column) = locate(source, key);
    CliError::Config {
        path: path.to_path_buf(),
        line,
        column,
        message,
    }
}

pub fn load(path: &Path) -> Result<LoadedScenario, CliError> {
    let source = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse(path, source)
}

/// Parses and validates scenario text; `path` is only used in messages.
pub fn parse(path: &Path, source: String) -> Result<LoadedScenario, CliError> {
    let scenario: Scenario = serde_json::from_str(&source).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut loaded = LoadedScenario {
        scenario,
        points: Vec::new(),
        source,
        path: path.to_path_buf(),
    };
    loaded.points = expand(&loaded)?;
    check_blocks(&loaded)?;
    Ok(loaded)
}

fn base_point(s: &Scenario) -> [f64; 8] {
    [
        s.profile.alpha,
        s.profile.beta,
        s.profile.eta,
        s.params.gamma,
        s.params.eps1,
        s.params.eps2,
        s.params.r1,
        s.params.r2,
    ]
}

fn slot(p: Parameter) -> usize {
    match p {
        Parameter::Alpha => 0,
        Parameter::Beta => 1,
        Parameter::Eta => 2,
        Parameter::Gamma => 3,
        Parameter::Eps1 => 4,
        Parameter::Eps2 => 5,
        Parameter::R1 => 6,
        Parameter::R2 => 7,
    }
}

fn expand(l: &LoadedScenario) -> Result<Vec<Point>, CliError> {
    let s = &l.scenario;
    if s.id.is_empty() || s.id.contains(['/', '\\']) {
        return Err(l.error_at("id", "id must be a non-empty name without path separators"));
    }
    let axes: &[SweepAxis] = match &s.sweep {
        None => &[],
        Some(axes) if axes.is_empty() => {
            return Err(l.error_at("sweep", "sweep is empty; omit it for a single point"))
        }
        Some(axes) => axes,
    };
    for (k, axis) in axes.iter().enumerate() {
        if axis.values.is_empty() {
            return Err(l.error_at(
                "sweep",
                format!("sweep axis `{}` has no values", axis.parameter.name()),
            ));
        }
        if axes[..k].iter().any(|a| a.parameter == axis.parameter) {
            return Err(l.error_at(
                "sweep",
                format!("sweep axis `{}` appears twice", axis.parameter.name()),
            ));
        }
    }
    let mut vectors = vec![base_point(s)];
    for axis in axes {
        vectors = vectors
            .iter()
            .flat_map(|v| {
                axis.values.iter().map(move |&x| {
                    let mut w = *v;
                    w[slot(axis.parameter)] = x;
                    w
                })
            })
            .collect();
    }
    vectors
        .into_iter()
        .map(|v| {
            let key_of = |e: &bmpaw_core::Error| match e {
                bmpaw_core::Error::FractionOutOfRange { name, .. } => *name,
                bmpaw_core::Error::NegativePower { name, .. } => *name,
                _ => "alpha",
            };
            let at = |e: bmpaw_core::Error| {
                let key = key_of(&e);
                let swept = axes.iter().any(|a| a.parameter.name() == key);
                l.error_at(if swept { "sweep" } else { key }, e.to_string())
            };
            let profile = PowerProfile::new(v[0], v[1], v[2]).map_err(at)?;
            let params = AttackParams::new(v[6], v[7], v[3], v[4], v[5])
                .map_err(at)?
                .with_policy(s.params.rbar_policy);
            Ok(Point { profile, params })
        })
        .collect()
}

fn check_blocks(l: &LoadedScenario) -> Result<(), CliError> {
    let s = &l.scenario;
    if let Some(sim) = &s.simulation {
        if sim.n_rounds == 0 {
            return Err(l.error_at("n_rounds", "n_rounds must be at least 1"));
        }
        if !(sim.shares_per_block >= 1.0 && sim.shares_per_block.is_finite()) {
            return Err(l.error_at("shares_per_block", "shares_per_block must be at least 1"));
        }
    }
    if s.optimizer.grid_resolution < 2 {
        return Err(l.error_at("grid_resolution", "grid_resolution must be at least 2"));
    }
    if let Some(g) = &s.game {
        if g.alpha2.is_empty() || g.c.is_empty() {
            return Err(l.error_at("game", "game grids must not be empty"));
        }
        if g.resolution < 2 {
            return Err(l.error_at("resolution", "resolution must be at least 2"));
        }
        for &a2 in &g.alpha2 {
            for &c in &g.c {
                g.config(a2, c)
                    .validate()
                    .map_err(|e| l.error_at("game", e.to_string()))?;
            }
        }
        if let Some(r) = &g.reference {
            let shaped = |t: &Vec<Vec<f64>>| {
                t.len() == g.alpha2.len() && t.iter().all(|row| row.len() == g.c.len())
            };
            if !shaped(&r.rer1) || !shaped(&r.rer2) {
                return Err(l.error_at("reference", "reference must be alpha2 rows by c columns"));
            }
        }
    }
    if let Some(t) = &s.table1 {
        if t.alphas.is_empty() || t.betas.is_empty() {
            return Err(l.error_at("table1", "table1 grids must not be empty"));
        }
        if let Some(r) = &t.reference {
            if r.len() != t.betas.len() || r.iter().any(|row| row.len() != t.alphas.len()) {
                return Err(l.error_at("reference", "reference must be beta rows by alpha columns"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
  "id": "t",
  "profile": { "alpha": 0.2, "beta": 0.2, "eta": 0.2 },
  "params": { "r1": 0.5, "r2": 0.5, "gamma": 0.5, "eps1": 0.0, "eps2": 0.0 }
}"#;

    fn parse_str(s: &str) -> Result<LoadedScenario, CliError> {
        parse(Path::new("s.json"), s.to_string())
    }

    fn line_of(e: CliError) -> usize {
        match e {
            CliError::Config { line, .. } => line,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_point_without_sweep() {
        let l = parse_str(BASE).unwrap();
        assert_eq!(l.points.len(), 1);
        assert_eq!(l.points[0].params.rbar_policy, RbarPolicy::Mean);
    }

    #[test]
    fn sweep_is_a_cross_product_in_axis_order() {
        let s = BASE.replace(
            "\n}",
            r#",
  "sweep": [ { "parameter": "eps1", "values": [0.0, 0.1] },
             { "parameter": "gamma", "values": [0.2, 0.4, 0.6] } ]
}"#,
        );
        let l = parse_str(&s).unwrap();
        assert_eq!(l.points.len(), 6);
        assert_eq!(l.points[1].params.eps1, 0.0);
        assert_eq!(l.points[1].params.gamma, 0.4);
        assert_eq!(l.points[3].params.eps1, 0.1);
    }

    #[test]
    fn syntax_errors_carry_their_line() {
        let s = BASE.replace("\"beta\": 0.2", "\"beta\": ");
        assert_eq!(line_of(parse_str(&s).unwrap_err()), 3);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let s = BASE.replace("\"eps2\": 0.0", "\"eps2\": 0.0, \"eps3\": 1");
        assert_eq!(line_of(parse_str(&s).unwrap_err()), 4);
    }

    #[test]
    fn model_violations_point_at_the_key() {
        let s = BASE.replace("\"gamma\": 0.5", "\"gamma\": 1.5");
        assert_eq!(line_of(parse_str(&s).unwrap_err()), 4);
        let s = BASE.replace("\"alpha\": 0.2", "\"alpha\": 0.7");
        assert_eq!(line_of(parse_str(&s).unwrap_err()), 3);
    }

    #[test]
    fn empty_sweeps_are_errors() {
        let s = BASE.replace("\n}", ",\n  \"sweep\": []\n}");
        assert_eq!(line_of(parse_str(&s).unwrap_err()), 5);
        let s = BASE.replace(
            "\n}",
            ",\n  \"sweep\": [ { \"parameter\": \"eps1\", \"values\": [] } ]\n}",
        );
        assert!(matches!(parse_str(&s), Err(CliError::Config { .. })));
    }

    #[test]
    fn swept_values_are_validated() {
        let s = BASE.replace(
            "\n}",
            ",\n  \"sweep\": [ { \"parameter\": \"r1\", \"values\": [0.5, 2.0] } ]\n}",
        );
        assert_eq!(line_of(parse_str(&s).unwrap_err()), 5);
    }
}
