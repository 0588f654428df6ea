//! Scenario files: TOML with a `schema_version`, unknown fields rejected.
//!
//! ```toml
//! schema_version = 1
//! goods = 2
//! seed = 0
//! cap_slack = 1.05
//!
//! [grid]
//! horizon = 1.0
//! cells = 4
//!
//! [[agents]]
//! endowment = { kind = "sinusoid", mean = [1.0, 0.5], amplitude = [0.2, 0.1] }
//! utility = { family = "quadratic", bliss = { kind = "constant", value = [3.0, 3.0] } }
//!
//! [solver]
//! outer_tol = 1e-7
//! ```
//!
//! Curves are evaluated at cell midpoints. Every omitted field takes the
//! default shown by `exqvi echo-scenario`.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use exchange_qvi::{Agent, Economy, GridFunction, QviParams, TimeGrid, UtilitySpec, ViParams};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub goods: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cap_slack")]
    pub cap_slack: f64,
    pub grid: GridSpec,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub horizon: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub endowment: Curve,
    pub utility: UtilityConfig,
}

/// A per-good curve over `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Curve {
    Constant {
        value: Vec<f64>,
    },
    /// Straight line from `start` at `t = 0` to `end` at `t = T`.
    Linear {
        start: Vec<f64>,
        end: Vec<f64>,
    },
    /// `mean + amplitude·sin(2π·periods·t/T + phase)`.
    Sinusoid {
        mean: Vec<f64>,
        amplitude: Vec<f64>,
        #[serde(default = "one")]
        periods: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phase: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityConfig {
    /// `Σ_j b_j(t)·w_j − ½·q_j·w_j²`; `weights` are the `q_j` (all 1 by default).
    Quadratic {
        bliss: Curve,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// `Σ_j a_j(t)·log(shift + w_j)`.
    LogShift { weights: Curve, shift: f64 },
    /// `coeff·Σ_j w_j^exponent`; for probe experiments only.
    Power { coeff: f64, exponent: f64 },
    /// `Σ_j a_j(t)·log(w_j)` on `w ≥ floor`; for probe experiments only.
    Log { weights: Curve, floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TwoLevel,
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub method: Method,
    /// Fixed extragradient step; estimated per solve when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_step: Option<f64>,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub outer_step: f64,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Truncation radii tried in order; an empty list solves on the capped
    /// sets directly.
    pub truncation_radii: Vec<f64>,
    pub cert_tol: f64,
    pub cert_samples: usize,
    pub probe_samples: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let q = QviParams::default();
        SolverSpec {
            method: Method::TwoLevel,
            inner_step: None,
            inner_tol: q.inner.tol,
            inner_max_iter: q.inner.max_iter,
            outer_step: q.outer_step,
            outer_tol: q.outer_tol,
            outer_max_iter: q.outer_max_iter,
            truncation_radii: Vec::new(),
            cert_tol: 1e-6,
            cert_samples: 200,
            probe_samples: 300,
        }
    }
}

fn default_cap_slack() -> f64 {
    1.05
}

fn one() -> f64 {
    1.0
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("in scenario {}", path.display()))
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scn: Scenario = toml::from_str(text)?;
    scn.validate()?;
    Ok(scn)
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.schema_version == SCHEMA_VERSION,
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            self.schema_version
        );
        ensure!(self.goods > 0, "goods must be positive");
        ensure!(!self.agents.is_empty(), "at least one agent is required");
        // Caps must sit strictly above aggregate supply.
        ensure!(
            self.cap_slack.is_finite() && self.cap_slack > 1.0,
            "cap_slack must be greater than 1, got {}",
            self.cap_slack
        );
        let s = &self.solver;
        ensure!(s.inner_tol > 0.0 && s.outer_tol > 0.0 && s.cert_tol > 0.0, "tolerances must be positive");
        ensure!(s.outer_step > 0.0, "outer_step must be positive");
        if let Some(h) = s.inner_step {
            ensure!(h > 0.0, "inner_step must be positive");
        }
        ensure!(
            s.truncation_radii.iter().all(|r| r.is_finite() && *r > 0.0),
            "truncation radii must be positive"
        );
        self.economy()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.horizon, self.grid.cells).context("grid")
    }

    pub fn agent_label(&self, i: usize) -> String {
        self.agents[i].name.clone().unwrap_or_else(|| format!("agent{i}"))
    }

    pub fn economy(&self) -> Result<Economy> {
        let grid = self.grid()?;
        let agents = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let endowment = a.endowment.sample(grid, self.goods).with_context(|| format!("agents[{i}].endowment"))?;
                let utility = a.utility.build(grid, self.goods).with_context(|| format!("agents[{i}].utility"))?;
                Agent::new(endowment, utility).with_context(|| format!("agents[{i}]"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Economy::new(grid, self.goods, agents)?)
    }

    pub fn params(&self, parallel: bool) -> QviParams {
        let s = &self.solver;
        QviParams {
            inner: ViParams {
                step: s.inner_step,
                tol: s.inner_tol,
                max_iter: s.inner_max_iter,
                seed: self.seed,
                ..ViParams::default()
            },
            outer_step: s.outer_step,
            outer_tol: s.outer_tol,
            outer_max_iter: s.outer_max_iter,
            parallel,
            ..QviParams::default()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

impl Curve {
    pub fn sample(&self, grid: TimeGrid, goods: usize) -> Result<GridFunction> {
        let check = |name: &str, v: &[f64]| -> Result<()> {
            ensure!(v.len() == goods, "{name} has {} entries for {goods} goods", v.len());
            ensure!(v.iter().all(|x| x.is_finite()), "{name} has non-finite entries");
            Ok(())
        };
        let horizon = grid.horizon();
        let gf = match self {
            Curve::Constant { value } => {
                check("value", value)?;
                GridFunction::constant(grid, value)?
            }
            Curve::Linear { start, end } => {
                check("start", start)?;
                check("end", end)?;
                GridFunction::from_fn(grid, goods, |t, j| start[j] + (end[j] - start[j]) * t / horizon)?
            }
            Curve::Sinusoid { mean, amplitude, periods, phase } => {
                check("mean", mean)?;
                check("amplitude", amplitude)?;
                ensure!(periods.is_finite(), "periods must be finite");
                let zero = vec![0.0; goods];
                let phase = phase.as_deref().unwrap_or(&zero);
                check("phase", phase)?;
                GridFunction::from_fn(grid, goods, |t, j| {
                    mean[j] + amplitude[j] * (2.0 * PI * periods * t / horizon + phase[j]).sin()
                })?
            }
        };
        Ok(gf)
    }
}

impl UtilityConfig {
    pub fn build(&self, grid: TimeGrid, goods: usize) -> Result<UtilitySpec> {
        let spec = match self {
            UtilityConfig::Quadratic { bliss, weights } => {
                let q = weights.clone().unwrap_or_else(|| vec![1.0; goods]);
                if q.len() != goods {
                    bail!("weights has {} entries for {goods} goods", q.len());
                }
                UtilitySpec::quadratic(bliss.sample(grid, goods).context("bliss")?, q)?
            }
            UtilityConfig::LogShift { weights, shift } => {
                UtilitySpec::log_shift(weights.sample(grid, goods).context("weights")?, *shift)?
            }
            UtilityConfig::Power { coeff, exponent } => UtilitySpec::power(*coeff, *exponent)?,
            UtilityConfig::Log { weights, floor } => {
                UtilitySpec::log(weights.sample(grid, goods).context("weights")?, *floor)?
            }
        };
        Ok(spec)
    }
}
