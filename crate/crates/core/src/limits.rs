//! Limiting values: Black-Scholes references, Monte Carlo lower bounds for
//! the entropy-penalised volatility-control problem, and the convergence
//! harness comparing lattice, hedge and PDE.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::hedge::{build_delta_strategy, evaluate_hedge, BLOCK_SIZE};
use crate::lattice::DEFAULT_MAX_LATTICE_N;
use crate::model::payoff::Payoff;
use crate::model::{bs_price, entropy_penalty, ModelParams};
use crate::pde::{solve_hjb, LogGrid};
use crate::svg::{loglog_plot, Series};

type Feedback = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Volatility control `α ∈ [0, σ̄]`.
#[derive(Clone)]
pub enum AlphaPolicy {
    /// `α = values[j]` on `[times[j], times[j+1])`, with `times` running
    /// strictly from 0 to 1.
    Piecewise { times: Vec<f64>, values: Vec<f64> },
    /// `α(t, S_t)`.
    Feedback(Feedback),
}

impl fmt::Debug for AlphaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Piecewise { times, values } => f
                .debug_struct("Piecewise")
                .field("times", times)
                .field("values", values)
                .finish(),
            Self::Feedback(_) => write!(f, "Feedback"),
        }
    }
}

impl AlphaPolicy {
    pub fn constant(alpha: f64) -> Self {
        Self::Piecewise {
            times: vec![0.0, 1.0],
            values: vec![alpha],
        }
    }

    pub fn piecewise(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() + 1 || values.is_empty() {
            return Err(invalid(format!(
                "{} partition times for {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(invalid("partition must run from 0 to 1"));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("partition times must be strictly increasing"));
        }
        Ok(Self::Piecewise { times, values })
    }

    pub fn feedback(rule: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Feedback(Arc::new(rule))
    }

    fn check(alpha: f64, sigma_bar: f64) -> Result<f64> {
        if (0.0..=sigma_bar).contains(&alpha) {
            Ok(alpha)
        } else {
            Err(invalid(format!("control {alpha} outside [0, {sigma_bar}]")))
        }
    }
}

/// Per-step controls resolved ahead of simulation for piecewise policies.
enum StepControls {
    Fixed(Vec<f64>),
    Feedback(Feedback),
}

fn resolve(policy: &AlphaPolicy, steps: usize, sigma_bar: f64) -> Result<StepControls> {
    match policy {
        AlphaPolicy::Piecewise { times, values } => {
            for &t in times {
                let scaled = t * steps as f64;
                if (scaled - scaled.round()).abs() > 1e-9 {
                    return Err(invalid(format!(
                        "partition point {t} is not on the {steps}-step grid"
                    )));
                }
            }
            for &v in values {
                AlphaPolicy::check(v, sigma_bar)?;
            }
            let mut per_step = Vec::with_capacity(steps);
            let mut piece = 0;
            for k in 0..steps {
                let mid = (k as f64 + 0.5) / steps as f64;
                while times[piece + 1] <= mid {
                    piece += 1;
                }
                per_step.push(values[piece]);
            }
            Ok(StepControls::Fixed(per_step))
        }
        AlphaPolicy::Feedback(f) => Ok(StepControls::Feedback(f.clone())),
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1.0;
        let d = v - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, other: &Self) -> Self {
        if other.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return *other;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + d * other.count / count,
            m2: self.m2 + other.m2 + d * d * self.count * other.count / count,
        }
    }

    fn variance(&self) -> f64 {
        if self.count > 1.0 {
            self.m2 / (self.count - 1.0)
        } else {
            0.0
        }
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Estimates `E[F(S^α) - (1/ℓ) ∫₀¹ G_p(α_t²/σ̄²) dt]` for a fixed policy,
/// a lower bound on the value of the control problem.
///
/// Each step uses the exact lognormal increment at the step's control.
/// Piecewise controls are constant on steps so the penalty is exact;
/// feedback controls are read at `(t_k + h/2, S_{t_k})` and the penalty
/// uses the midpoint rule. Blocks and seeding follow
/// [`crate::hedge::simulate_pnl`].
pub fn mc_control_value(
    params: &ModelParams,
    payoff: &Payoff,
    policy: &AlphaPolicy,
    paths: usize,
    time_steps: usize,
    seed: u64,
) -> Result<ControlEstimate> {
    params.validate()?;
    if paths == 0 || time_steps == 0 {
        return Err(invalid("paths and time_steps must be at least 1"));
    }
    let controls = resolve(policy, time_steps, params.sigma_bar)?;
    let h = 1.0 / time_steps as f64;
    let sqrt_h = h.sqrt();
    let penalty = |alpha: f64| -> Result<f64> {
        let x = (alpha / params.sigma_bar).powi(2).min(1.0);
        Ok(entropy_penalty(x, params.p)? * h / params.ell)
    };
    let fixed_penalty = match &controls {
        StepControls::Fixed(alphas) => {
            let mut total = 0.0;
            for &a in alphas {
                total += penalty(a)?;
            }
            Some(total)
        }
        StepControls::Feedback(_) => None,
    };

    let blocks = paths.div_ceil(BLOCK_SIZE);
    let moments: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|block| -> Result<Moments> {
            let count = BLOCK_SIZE.min(paths - block * BLOCK_SIZE);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let mut spots = vec![0.0; time_steps + 1];
            let mut acc = Moments::default();
            for _ in 0..count {
                spots[0] = params.s0;
                let mut cost = fixed_penalty.unwrap_or(0.0);
                for k in 0..time_steps {
                    let alpha = match &controls {
                        StepControls::Fixed(a) => a[k],
                        StepControls::Feedback(f) => {
                            let a = AlphaPolicy::check(
                                f((k as f64 + 0.5) * h, spots[k]),
                                params.sigma_bar,
                            )?;
                            cost += penalty(a)?;
                            a
                        }
                    };
                    let z: f64 = StandardNormal.sample(&mut rng);
                    spots[k + 1] = spots[k] * (alpha * sqrt_h * z - 0.5 * alpha * alpha * h).exp();
                }
                let v = payoff.value_on_path(&spots) - cost;
                if !v.is_finite() {
                    return Err(invalid("control objective not finite on a path"));
                }
                acc.push(v);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = moments
        .into_iter()
        .fold(Moments::default(), |acc, m| acc.merge(&m));
    let var = total.variance();
    Ok(ControlEstimate {
        estimate: total.mean,
        std_error: (var / paths as f64).sqrt(),
    })
}

/// Black-Scholes bounds on the limit value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitReferences {
    /// Price at volatility `√p σ̄`, the `ℓ → 0` limit.
    pub small_ell: f64,
    /// Price at volatility `σ̄`, the `ℓ → ∞` limit for convex payoffs.
    pub large_ell_convex: Option<f64>,
}

pub fn limit_references(params: &ModelParams, payoff: &Payoff) -> Result<LimitReferences> {
    params.validate()?;
    let f = payoff.as_markovian()?;
    let small_ell = bs_price(f, params.p.sqrt() * params.sigma_bar, params.s0)?;
    let large_ell_convex = if f.is_convex() {
        Some(bs_price(f, params.sigma_bar, params.s0)?)
    } else {
        None
    };
    Ok(LimitReferences {
        small_ell,
        large_ell_convex,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub ce: f64,
    pub ce_tilde: f64,
    pub gap: f64,
    pub pde_value: f64,
    pub abs_error: f64,
}

/// Lattice, hedged and PDE values across `n`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub params: ModelParams,
    pub payoff: String,
    pub grid: LogGrid,
    pub rows: Vec<ConvergenceRow>,
    pub warnings: Vec<String>,
}

/// `true` if each entry is at most `(1 + slack)` times its predecessor.
pub fn non_increasing_with_slack(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= (1.0 + slack) * w[0])
}

impl ConvergenceTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.abs_error).collect()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gap).collect()
    }

    /// `|C_n - v(0, s0)|` non-increasing up to `slack` (relative).
    pub fn error_trend_ok(&self, slack: f64) -> bool {
        non_increasing_with_slack(&self.errors(), slack)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,ce,ce_tilde,gap,pde_value,abs_error\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n, r.ce, r.ce_tilde, r.gap, r.pde_value, r.abs_error
            );
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let pts = |f: fn(&ConvergenceRow) -> f64| {
            self.rows.iter().map(|r| (r.n as f64, f(r))).collect::<Vec<_>>()
        };
        loglog_plot(
            &format!("convergence, payoff {}", self.payoff),
            "n",
            "error",
            &[
                Series::new("|C_n - v(0,s0)|", pts(|r| r.abs_error)),
                Series::new("C~_n - C_n", pts(|r| r.gap)),
            ],
        )
    }
}

/// Solves the PDE once on `grid`, then for each `n` computes `C_n`, the
/// delta-hedged `C̃_n` and the distance to `v(0, s0)`.
pub fn convergence_study(
    params_base: &ModelParams,
    payoff: &Payoff,
    n_list: &[usize],
    grid: &LogGrid,
) -> Result<ConvergenceTable> {
    params_base.validate()?;
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let Some(&n_max) = ns.last() else {
        return Err(invalid("n_list is empty"));
    };
    if n_max > DEFAULT_MAX_LATTICE_N {
        return Err(Error::SizeLimit {
            n: n_max,
            max_n: DEFAULT_MAX_LATTICE_N,
        });
    }
    if ns[0] == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let sol = Arc::new(solve_hjb(params_base, payoff, grid)?);
    let pde_value = sol.value_at_origin()?;
    let mut warnings = sol.warnings().to_vec();
    if !payoff.as_markovian()?.is_smooth() {
        warnings.push("payoff outside the smooth class: gap study is exploratory".into());
    }
    build_delta_strategy(sol.clone(), n_max)?;

    let rows: Vec<ConvergenceRow> = ns
        .par_iter()
        .map(|&n| -> Result<ConvergenceRow> {
            let params = params_base.with_n(n)?;
            let strategy = build_delta_strategy(sol.clone(), n)?;
            let eval = evaluate_hedge(&params, payoff, &strategy)?;
            Ok(ConvergenceRow {
                n,
                ce: eval.ce,
                ce_tilde: eval.ce_tilde,
                gap: eval.gap,
                pde_value,
                abs_error: (eval.ce - pde_value).abs(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConvergenceTable {
        params: *params_base,
        payoff: payoff.name(),
        grid: *sol.grid(),
        rows,
        warnings,
    })
}
