//! The five studies. Each reads a validated config and fills a recorder.

use std::sync::Arc;

use anyhow::Context;
use rayon::prelude::*;
use thiserror::Error;
use trihedge::hedge::{build_delta_strategy, evaluate_hedge, simulate_pnl};
use trihedge::lattice::{
    dual_ce, dual_policy_bound, enumerate_ce, primal_ce, primal_ce_value, VolFractionPolicy,
};
use trihedge::limits::{convergence_study, mc_control_value, non_increasing_with_slack};
use trihedge::pde::{
    check_solution_properties, closed_form_log_payoff, default_tolerance, solve_hjb_with,
};
use trihedge::{Payoff, PayoffSpec};

use crate::config::{Command, ConfigError, FractionPolicySpec, RunConfig};
use crate::record::Recorder;

/// Why a run stopped before producing a record.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] trihedge::Error),
    #[error(transparent)]
    Io(#[from] anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        use trihedge::Error as E;
        match self {
            Self::Config(_) => crate::EXIT_CONFIG,
            Self::Model(E::InvalidInput(_) | E::Unsupported(_) | E::SizeLimit { .. }) => crate::EXIT_CONFIG,
            Self::Model(_) => crate::EXIT_NUMERICAL,
            Self::Io(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// Duality residual allowed between the primal and dual recursions.
const DUALITY_TOL: f64 = 1e-12;
/// Slack on weak-duality and attainment checks.
const DUAL_BOUND_TOL: f64 = 1e-10;
/// Relative slack on the error and gap trends of a convergence study.
const TREND_SLACK: f64 = 0.1;
/// Calendar times at which the PDE delta is exported.
const DELTA_TIMES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

pub fn dispatch(command: Command, config: &RunConfig, rec: &mut Recorder) -> Result<()> {
    let payoff = config.payoff()?;
    match command {
        Command::Price => price(config, &payoff, rec),
        Command::Pde => pde(config, &payoff, rec),
        Command::Converge => converge(config, &payoff, rec),
        Command::Hedge => hedge(config, &payoff, rec),
        Command::DualBound => dual_bound(config, &payoff, rec),
    }
}

fn price(config: &RunConfig, payoff: &Payoff, rec: &mut Recorder) -> Result<()> {
    let params = config.params;
    let export = params.n <= config.lattice.export_gamma_max_n;
    let (primal, gamma) = rec.stage("primal", || -> Result<_> {
        if export {
            let sol = primal_ce(&params, payoff)?;
            Ok((sol.ce, Some(sol.gamma)))
        } else {
            Ok((primal_ce_value(&params, payoff)?, None))
        }
    })?;
    let dual = rec.stage("dual", || dual_ce(&params, payoff))?.ce;
    let residual = (primal - dual).abs() / primal.abs().max(1.0);
    rec.output("ce", primal);
    rec.output("ce_dual", dual);
    rec.output("duality_residual", residual);
    rec.check_le("duality_residual", residual, DUALITY_TOL);
    if let Some(table) = gamma {
        rec.table("gamma", &table.to_csv())?;
    }

    let sweep = &config.lattice.sweep_p;
    if !sweep.is_empty() {
        let values = rec.stage("sweep_p", || {
            sweep
                .par_iter()
                .map(|&p| primal_ce_value(&params.with_p(p)?, payoff))
                .collect::<trihedge::Result<Vec<f64>>>()
        })?;
        let mut csv = String::from("p,ce\n");
        for (p, v) in sweep.iter().zip(&values) {
            csv.push_str(&format!("{p},{v}\n"));
        }
        rec.table("sweep_p", &csv)?;
        rec.output("sweep_p_ce", &values);
        if payoff.is_convex() {
            let mut pairs: Vec<(f64, f64)> = sweep.iter().copied().zip(values).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let drop = pairs
                .windows(2)
                .map(|w| w[0].1 - w[1].1)
                .fold(0.0, f64::max);
            rec.check_le("ce_non_decreasing_in_p", drop, DUALITY_TOL);
        }
    }
    Ok(())
}

/// Exact PDE value for catalogue payoffs that have one.
fn closed_form(spec: &PayoffSpec, config: &RunConfig) -> trihedge::Result<Option<f64>> {
    if !config.payoff.build()?.is_markovian() {
        return Ok(None);
    }
    let get = |k: &str, d: f64| spec.params.get(k).copied().unwrap_or(d);
    let s0 = config.params.s0;
    Ok(match spec.name.as_str() {
        "log_affine" => Some(closed_form_log_payoff(get("alpha", 0.0), get("beta", 1.0), 0.0, s0, &config.params)?),
        "affine" => Some(get("a", 0.0) + get("b", 1.0) * s0),
        _ => None,
    })
}

fn pde(config: &RunConfig, payoff: &Payoff, rec: &mut Recorder) -> Result<()> {
    let grid = config.grid(Command::Pde)?;
    rec.output("grid", grid);
    let sol = rec.stage("solve", || solve_hjb_with(&config.params, payoff, &grid, &config.pde_options()))?;
    rec.warnings(sol.warnings());
    let value = sol.value_at_origin()?;
    rec.output("value", value);

    let tol = default_tolerance(&grid);
    let report = rec.stage("properties", || check_solution_properties(&sol, tol));
    rec.check_le("band_violation", report.band_violation, tol);
    rec.check_le("slope_violation", report.slope_violation, tol);
    rec.output("properties", &report);
    if let Some(exact) = closed_form(&config.payoff, config)? {
        rec.output("closed_form", exact);
        rec.check_le("closed_form_error", (value - exact).abs(), tol);
    }

    let pde = &config.pde;
    let values = rec.stage("export", || sol.to_csv(pde.export_stride_t, pde.export_stride_y));
    rec.table("pde_value", &values)?;
    let deltas = sol.delta_csv(&DELTA_TIMES, pde.export_stride_y)?;
    rec.table("pde_delta", &deltas)?;
    Ok(())
}

fn converge(config: &RunConfig, payoff: &Payoff, rec: &mut Recorder) -> Result<()> {
    let grid = config.grid(Command::Converge)?;
    let n_list = &config.converge.as_ref().context("converge block missing")?.n_list;
    let table = rec.stage("study", || convergence_study(&config.params, payoff, n_list, &grid))?;
    rec.warnings(&table.warnings);
    rec.output("grid", table.grid);
    rec.output("rows", &table.rows);

    let gaps = table.gaps();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    rec.check_le("negative_gap", -min_gap, DUAL_BOUND_TOL);
    rec.check_true("error_non_increasing", table.error_trend_ok(TREND_SLACK));
    rec.check_true("gap_non_increasing", non_increasing_with_slack(&gaps, TREND_SLACK));
    let (first, last) = (&table.rows[0], &table.rows[table.rows.len() - 1]);
    if last.n >= 16 * first.n {
        rec.check_le("error_ratio", last.abs_error / first.abs_error, 0.5);
        rec.check_le("gap_ratio", last.gap / first.gap, 0.5);
    }

    rec.table("convergence", &table.to_csv())?;
    rec.file("convergence.svg", table.to_svg().as_bytes())?;
    Ok(())
}

fn hedge(config: &RunConfig, payoff: &Payoff, rec: &mut Recorder) -> Result<()> {
    let params = config.params;
    let grid = config.grid(Command::Hedge)?;
    rec.output("grid", grid);
    let sol = rec.stage("solve", || solve_hjb_with(&params, payoff, &grid, &config.pde_options()))?;
    rec.warnings(sol.warnings());
    rec.output("pde_value", sol.value_at_origin()?);
    let strategy = build_delta_strategy(Arc::new(sol), params.n)?;
    let eval = rec.stage("evaluate", || evaluate_hedge(&params, payoff, &strategy))?;
    rec.output("evaluation", eval);
    rec.check_le("negative_gap", -eval.gap, DUAL_BOUND_TOL * (1.0 + eval.ce.abs()));
    let csv = rec.stage("export", || strategy.to_csv(&params, config.hedge.export_stride))?;
    rec.table("hedge_strategy", &csv)?;

    if config.hedge.mc_paths > 0 {
        let report = rec.stage("simulate", || {
            simulate_pnl(&params, payoff, &strategy, config.hedge.mc_paths, config.seed)
        })?;
        rec.warnings(&report.warnings);
        let (lo, hi) = report.exp_ce_ci;
        let inside = lo <= eval.ce_tilde && eval.ce_tilde <= hi;
        if !inside {
            rec.warn(format!(
                "exact hedged value {} outside the bootstrap interval [{lo}, {hi}]",
                eval.ce_tilde
            ));
        }
        rec.output("mc_ci_contains_exact", inside);
        rec.output("mc_exp_ce", report.exp_ce);
        rec.file("pnl_report.json", (report.to_json() + "\n").as_bytes())?;
        rec.table("pnl_histogram", &report.histogram_csv())?;
    }
    Ok(())
}

fn dual_bound(config: &RunConfig, payoff: &Payoff, rec: &mut Recorder) -> Result<()> {
    let params = config.params;
    let dual = config.dual_bound.as_ref().context("dual_bound block missing")?;
    let max_enum = config.lattice.max_enumeration_n;
    let ce = rec.stage("ce", || {
        if payoff.is_markovian() {
            primal_ce_value(&params, payoff)
        } else {
            enumerate_ce(&params, payoff, max_enum)
        }
    })?;
    rec.output("ce", ce);

    if !dual.policies.is_empty() {
        let mut csv = String::from("policy,bound,ce,excess\n");
        let mut bounds = Vec::new();
        for spec in &dual.policies {
            let (label, policy) = match spec {
                FractionPolicySpec::Constant { phi } => (format!("constant_{phi}"), VolFractionPolicy::Constant(*phi)),
                FractionPolicySpec::Optimal => {
                    let qstar = rec.stage("optimal_policy", || dual_ce(&params, payoff))?.qstar;
                    ("optimal".to_string(), VolFractionPolicy::from_table(qstar))
                }
            };
            let bound = rec.stage("policy_bound", || dual_policy_bound(&params, payoff, &policy, max_enum))?;
            rec.check_le(&format!("weak_duality_{label}"), bound - ce, DUAL_BOUND_TOL);
            if matches!(spec, FractionPolicySpec::Optimal) {
                rec.check_le("optimal_policy_attains", (ce - bound).abs(), DUAL_BOUND_TOL);
            }
            csv.push_str(&format!("{label},{bound},{ce},{}\n", bound - ce));
            bounds.push(bound);
        }
        rec.output("policy_bounds", &bounds);
        rec.table("policy_bounds", &csv)?;
    }

    if !dual.controls.is_empty() {
        let reference = if payoff.is_markovian() {
            let grid = config.grid(Command::DualBound)?;
            let sol = rec.stage("solve", || solve_hjb_with(&params, payoff, &grid, &config.pde_options()))?;
            Some(sol.value_at_origin()?)
        } else {
            rec.warn("path-dependent payoff: no computable limit value, gap to the supremum unknown");
            None
        };
        rec.output("limit_value", reference);
        let mut csv = String::from("control,estimate,std_error,reference\n");
        let mut estimates = Vec::new();
        for (i, spec) in dual.controls.iter().enumerate() {
            let policy = spec.build()?;
            let est = rec.stage("control_mc", || {
                mc_control_value(&params, payoff, &policy, dual.paths, dual.time_steps, config.seed)
            })?;
            if let Some(v) = reference {
                rec.check_le(&format!("control_{i}_below_value"), est.estimate - 3.0 * est.std_error, v);
            }
            let r = reference.map_or_else(|| "nan".to_string(), |v| v.to_string());
            csv.push_str(&format!("{i},{},{},{r}\n", est.estimate, est.std_error));
            estimates.push(est);
        }
        rec.output("control_estimates", &estimates);
        rec.table("control_bounds", &csv)?;
    }
    Ok(())
}
