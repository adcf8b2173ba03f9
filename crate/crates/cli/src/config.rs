//! Versioned JSON run configuration and its up-front validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trihedge::lattice::{DEFAULT_MAX_ENUMERATION_N, DEFAULT_MAX_LATTICE_N};
use trihedge::limits::AlphaPolicy;
use trihedge::pde::{cfl_bound, LogGrid, PdeOptions};
use trihedge::{ModelParams, Payoff, PayoffSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem detected before any computation starts.
#[derive(Debug, Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub params: ModelParams,
    pub payoff: PayoffSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeConfig>,
    #[serde(default)]
    pub hedge: HedgeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_bound: Option<DualBoundConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub max_n: usize,
    pub max_enumeration_n: usize,
    /// Write the per-node optimal holdings when `n` is at most this.
    pub export_gamma_max_n: usize,
    /// Optional sweep of `p` reported as a CE column.
    pub sweep_p: Vec<f64>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            max_n: DEFAULT_MAX_LATTICE_N,
            max_enumeration_n: DEFAULT_MAX_ENUMERATION_N,
            export_gamma_max_n: 100,
            sweep_p: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeConfig {
    pub dy: f64,
    /// Half-width of the log domain; defaults to `6σ̄` or the lattice reach.
    pub half_width: Option<f64>,
    /// Explicit number of time steps; defaults to the largest stable step.
    pub t_steps: Option<usize>,
    pub mollify: bool,
    pub export_stride_t: usize,
    pub export_stride_y: usize,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            dy: 0.01,
            half_width: None,
            t_steps: None,
            mollify: false,
            export_stride_t: 50,
            export_stride_y: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub n_list: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HedgeConfig {
    /// Monte Carlo paths; zero disables the P&L simulation.
    pub mc_paths: usize,
    pub export_stride: usize,
}

impl Default for HedgeConfig {
    fn default() -> Self {
        Self {
            mc_paths: 0,
            export_stride: 10,
        }
    }
}

/// Martingale-measure policy for the dual bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FractionPolicySpec {
    Constant { phi: f64 },
    /// The maximiser of the dual recursion.
    Optimal,
}

/// Volatility control for the Monte Carlo lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaPolicySpec {
    Constant { alpha: f64 },
    Piecewise { times: Vec<f64>, values: Vec<f64> },
}

impl AlphaPolicySpec {
    pub fn build(&self) -> trihedge::Result<AlphaPolicy> {
        match self {
            Self::Constant { alpha } => Ok(AlphaPolicy::constant(*alpha)),
            Self::Piecewise { times, values } => AlphaPolicy::piecewise(times.clone(), values.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualBoundConfig {
    #[serde(default)]
    pub policies: Vec<FractionPolicySpec>,
    #[serde(default)]
    pub controls: Vec<AlphaPolicySpec>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_time_steps")]
    pub time_steps: usize,
}

fn default_paths() -> usize {
    20_000
}

fn default_time_steps() -> usize {
    50
}

/// Study selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Price,
    Pde,
    Converge,
    Hedge,
    DualBound,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(bad(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn payoff(&self) -> Result<Payoff, ConfigError> {
        self.payoff.build().map_err(|e| bad(format!("payoff: {e}")))
    }

    /// Largest `n` whose lattice the PDE grid must cover.
    fn coverage_n(&self, command: Command) -> usize {
        match command {
            Command::Converge => self
                .converge
                .as_ref()
                .and_then(|c| c.n_list.iter().copied().max())
                .unwrap_or(self.params.n),
            Command::Hedge => self.params.n,
            _ => 0,
        }
    }

    /// The PDE grid for `command`.
    pub fn grid(&self, command: Command) -> Result<LogGrid, ConfigError> {
        let pde = &self.pde;
        if !(pde.dy > 0.0 && pde.dy.is_finite()) {
            return Err(bad(format!("pde.dy must be positive, got {}", pde.dy)));
        }
        let params = &self.params;
        let cover = self.coverage_n(command);
        let mut grid = match (pde.half_width, cover) {
            (Some(h), _) => {
                if !(h > pde.dy) {
                    return Err(bad(format!("pde.half_width {h} must exceed dy")));
                }
                LogGrid::centered(params, h, pde.dy)
            }
            (None, 0) => LogGrid::default_for(params, pde.dy),
            (None, n) => LogGrid::covering_lattice(params, n, pde.dy),
        }
        .map_err(|e| bad(format!("pde grid: {e}")))?;
        if let Some(steps) = pde.t_steps {
            if steps == 0 {
                return Err(bad("pde.t_steps must be positive"));
            }
            grid.t_steps = steps;
            let bound = cfl_bound(grid.dy(), params.lambda());
            if grid.dt() > bound {
                return Err(bad(format!(
                    "pde.t_steps = {steps} gives dt = {} above the stability bound {bound}",
                    grid.dt()
                )));
            }
        }
        if cover > 0 {
            let u = params.sigma_bar / (cover as f64).sqrt();
            let reach = (cover as f64 - 1.0) * (-(1.0 - u).ln()).max((1.0 + u).ln());
            let centre = params.s0.ln();
            if centre - reach < grid.y_min || centre + reach > grid.y_max {
                return Err(bad(format!(
                    "pde grid [{}, {}] does not cover the {cover}-step lattice (reach {reach})",
                    grid.y_min, grid.y_max
                )));
            }
        }
        Ok(grid)
    }

    pub fn pde_options(&self) -> PdeOptions {
        PdeOptions {
            mollify: self.pde.mollify,
        }
    }

    /// Checks every precondition `command` relies on.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        self.params
            .validate()
            .map_err(|e| bad(format!("params: {e}")))?;
        let payoff = self.payoff()?;
        let lattice = &self.lattice;
        let n = self.params.n;
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(bad("threads must be positive"));
            }
        }
        let needs_markovian = matches!(command, Command::Price | Command::Pde | Command::Converge | Command::Hedge);
        if needs_markovian && !payoff.is_markovian() {
            return Err(bad(format!(
                "command {command:?} needs a Markovian payoff, got {}",
                payoff.name()
            )));
        }
        if matches!(command, Command::Price | Command::Hedge) && n > lattice.max_n {
            return Err(bad(format!("params.n = {n} exceeds lattice.max_n = {}", lattice.max_n)));
        }
        for &p in &lattice.sweep_p {
            self.params
                .with_p(p)
                .map_err(|e| bad(format!("lattice.sweep_p: {e}")))?;
        }
        match command {
            Command::Price => {}
            Command::Pde => {
                self.grid(command)?;
            }
            Command::Converge => {
                let conv = self
                    .converge
                    .as_ref()
                    .ok_or_else(|| bad("converge block missing"))?;
                if conv.n_list.is_empty() {
                    return Err(bad("converge.n_list is empty"));
                }
                for &m in &conv.n_list {
                    if m > lattice.max_n {
                        return Err(bad(format!("converge.n_list entry {m} exceeds lattice.max_n")));
                    }
                    self.params
                        .with_n(m)
                        .map_err(|e| bad(format!("converge.n_list: {e}")))?;
                }
                self.grid(command)?;
            }
            Command::Hedge => {
                self.grid(command)?;
                if self.hedge.export_stride == 0 {
                    return Err(bad("hedge.export_stride must be positive"));
                }
            }
            Command::DualBound => {
                let dual = self
                    .dual_bound
                    .as_ref()
                    .ok_or_else(|| bad("dual_bound block missing"))?;
                if !payoff.is_markovian() && n > lattice.max_enumeration_n {
                    return Err(bad(format!(
                        "path-dependent payoff needs n <= lattice.max_enumeration_n = {}",
                        lattice.max_enumeration_n
                    )));
                }
                if payoff.is_markovian() && n > lattice.max_n {
                    return Err(bad(format!("params.n = {n} exceeds lattice.max_n")));
                }
                for policy in &dual.policies {
                    match policy {
                        FractionPolicySpec::Constant { phi } if !(0.0..=1.0).contains(phi) => {
                            return Err(bad(format!("dual_bound policy phi = {phi} outside [0, 1]")));
                        }
                        FractionPolicySpec::Optimal if !payoff.is_markovian() => {
                            return Err(bad("the optimal dual policy needs a Markovian payoff"));
                        }
                        _ => {}
                    }
                }
                if !dual.controls.is_empty() {
                    if dual.paths == 0 || dual.time_steps == 0 {
                        return Err(bad("dual_bound.paths and time_steps must be positive"));
                    }
                    for control in &dual.controls {
                        validate_control(control, self.params.sigma_bar, dual.time_steps)?;
                    }
                    if payoff.is_markovian() {
                        self.grid(command)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn validate_control(spec: &AlphaPolicySpec, sigma_bar: f64, steps: usize) -> Result<(), ConfigError> {
    let policy = spec.build().map_err(|e| bad(format!("dual_bound control: {e}")))?;
    let AlphaPolicy::Piecewise { times, values } = &policy else {
        return Ok(());
    };
    for &a in values {
        if !(0.0..=sigma_bar).contains(&a) {
            return Err(bad(format!("dual_bound control alpha = {a} outside [0, {sigma_bar}]")));
        }
    }
    for &t in times {
        let scaled = t * steps as f64;
        if (scaled - scaled.round()).abs() > 1e-9 {
            return Err(bad(format!(
                "dual_bound control time {t} is not on the {steps}-step grid"
            )));
        }
    }
    Ok(())
}
