//! Explicit monotone finite differences for the limiting HJB equation.
//!
//! In log-price `y = ln x` and forward time `τ = 1 - t` the value function
//! `ū(τ, y) = v(1 - τ, e^y)` solves
//!
//! ```text
//! ū_τ = K(ū_yy - ū_y),   ū(0, y) = f(y) = F(e^y).
//! ```
//!
//! The scheme is `ū ← ū + dt·K(W)` with the three-point difference
//! `W = A (ū_{i+1} - ū_i) + B (ū_{i-1} - ū_i)`. The weights are the central
//! ones `1/dy² ∓ 1/(2dy)` up to `O(1)`, fitted so that `W` is exact on `1`,
//! `y` and `e^y`: cash, log and linear payoffs are reproduced to rounding.
//! Since `0 < K' < Λ/2` the scheme is monotone whenever
//! `dt <= dy² / (Λ (1 + dy/2))`.
//! Dirichlet data `f + τ·K(w₀)` is imposed at both ends, where
//! `w₀ = f'' - f' = x² F''(x)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::payoff::{MarkovianPayoff, Payoff};
use crate::model::{ModelParams, Nonlinearity};

/// Uniform grid in log-price and forward time on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub y_min: f64,
    pub y_max: f64,
    pub m: usize,
    pub t_steps: usize,
}

/// Default domain half-width in units of `σ̄`.
pub const DEFAULT_HALF_WIDTH_SIGMAS: f64 = 6.0;

/// Monotonicity bound on the explicit time step.
pub fn cfl_bound(dy: f64, lambda: f64) -> f64 {
    dy * dy / (lambda * (1.0 + 0.5 * dy))
}

impl LogGrid {
    pub fn new(y_min: f64, y_max: f64, m: usize, t_steps: usize) -> Result<Self> {
        if !(y_min < y_max) || !y_min.is_finite() || !y_max.is_finite() {
            return Err(invalid(format!("invalid log range [{y_min}, {y_max}]")));
        }
        if m < 3 {
            return Err(invalid(format!("need at least 3 spatial nodes, got {m}")));
        }
        if t_steps == 0 {
            return Err(invalid("need at least one time step"));
        }
        Ok(Self {
            y_min,
            y_max,
            m,
            t_steps,
        })
    }

    /// Grid with spacing exactly `dy`, centred on `ln s0` (which is a node),
    /// reaching at least `half_width` either side, and the largest stable
    /// time step from [`cfl_dt`].
    pub fn centered(params: &ModelParams, half_width: f64, dy: f64) -> Result<Self> {
        if !(dy > 0.0) || !(half_width > 0.0) {
            return Err(invalid(format!(
                "dy and half_width must be positive, got {dy}, {half_width}"
            )));
        }
        let centre = params.s0.ln();
        let half_nodes = (half_width / dy - 1e-9).ceil().max(1.0) as usize;
        let m = 2 * half_nodes + 1;
        let span = half_nodes as f64 * dy;
        let mut grid = Self::new(centre - span, centre + span, m, 1)?;
        grid.t_steps = steps_for(cfl_dt(&grid, params));
        Ok(grid)
    }

    /// Default domain: `6σ̄` either side of `ln s0`.
    pub fn default_for(params: &ModelParams, dy: f64) -> Result<Self> {
        Self::centered(params, DEFAULT_HALF_WIDTH_SIGMAS * params.sigma_bar, dy)
    }

    /// Centred grid wide enough to contain every lattice spot of the
    /// `n_max`-step tree, with two spare cells.
    pub fn covering_lattice(params: &ModelParams, n_max: usize, dy: f64) -> Result<Self> {
        let u = params.sigma_bar / (n_max as f64).sqrt();
        if u >= 1.0 {
            return Err(invalid("lattice down factor not positive at n_max"));
        }
        let reach = n_max as f64 * (-(1.0 - u).ln()).max((1.0 + u).ln());
        let half = (reach + 2.0 * dy).max(DEFAULT_HALF_WIDTH_SIGMAS * params.sigma_bar);
        Self::centered(params, half, dy)
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.m - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.t_steps as f64
    }

    pub fn y(&self, i: usize) -> f64 {
        if i == self.m - 1 {
            self.y_max
        } else {
            self.y_min + i as f64 * self.dy()
        }
    }
}

fn steps_for(dt: f64) -> usize {
    (1.0 / dt).round() as usize
}

/// Largest `dt = 1/t_steps` with `dt <= 0.9 · dy² / (Λ (1 + dy/2))`.
pub fn cfl_dt(grid: &LogGrid, params: &ModelParams) -> f64 {
    let bound = 0.9 * cfl_bound(grid.dy(), params.lambda());
    let steps = (1.0 / bound).ceil().max(1.0);
    1.0 / steps
}

/// Fitted three-point weights on a uniform grid of spacing `dy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    /// `W = up·(u₊ - u₀) + down·(u₋ - u₀)`, exact on `1, y, e^y`.
    pub up: f64,
    pub down: f64,
    /// `u_y ≈ d_up·(u₊ - u₀) + d_down·(u₀ - u₋)`, exact on `1, y, e^y`.
    pub d_up: f64,
    pub d_down: f64,
}

impl Stencil {
    pub fn new(dy: f64) -> Self {
        let cosh_gap = 4.0 * (0.5 * dy).sinh().powi(2); // 2cosh(dy) - 2
        let decay = -(-dy).exp_m1(); // 1 - e^{-dy}
        let up = decay / (dy * cosh_gap);
        let d_up = (1.0 - decay / dy) / cosh_gap;
        Self {
            up,
            down: up + 1.0 / dy,
            d_up,
            d_down: 1.0 / dy - d_up,
        }
    }

    #[inline]
    pub fn w(&self, um: f64, u0: f64, up: f64) -> f64 {
        self.up * (up - u0) + self.down * (um - u0)
    }

    #[inline]
    pub fn slope(&self, um: f64, u0: f64, up: f64) -> f64 {
        self.d_up * (up - u0) + self.d_down * (u0 - um)
    }
}

/// Options for [`solve_hjb_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PdeOptions {
    /// Gaussian-mollify non-smooth initial data with bandwidth `2·dy`.
    #[serde(default)]
    pub mollify: bool,
}

/// Grid solution `ū(τ_j, y_i)` at every time level.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    grid: LogGrid,
    params: ModelParams,
    k: Nonlinearity,
    /// Row-major `(t_steps + 1) × m`.
    values: Vec<f64>,
    initial: Vec<f64>,
    w0: Vec<f64>,
    m0: f64,
    big_m0: f64,
    warnings: Vec<String>,
}

/// Solves the forward HJB on `grid` with default options.
pub fn solve_hjb(params: &ModelParams, payoff: &Payoff, grid: &LogGrid) -> Result<PdeSolution> {
    solve_hjb_with(params, payoff, grid, &PdeOptions::default())
}

pub fn solve_hjb_with(
    params: &ModelParams,
    payoff: &Payoff,
    grid: &LogGrid,
    options: &PdeOptions,
) -> Result<PdeSolution> {
    params.validate()?;
    let payoff = payoff.as_markovian()?;
    let grid = LogGrid::new(grid.y_min, grid.y_max, grid.m, grid.t_steps)?;
    let centre = params.s0.ln();
    if !(grid.y_min < centre && centre < grid.y_max) {
        return Err(invalid(format!(
            "log s0 = {centre} must lie strictly inside [{}, {}]",
            grid.y_min, grid.y_max
        )));
    }
    let dy = grid.dy();
    let dt = grid.dt();
    let bound = cfl_bound(dy, params.lambda());
    if dt > bound {
        return Err(Error::Cfl { dt, bound, dy });
    }

    let mut warnings = Vec::new();
    let smooth = payoff.is_smooth();
    if !smooth {
        let msg = format!(
            "payoff {} has kinks at {:?}; it lacks the smoothness assumed for the delta-hedging result",
            payoff.name(),
            payoff.kinks()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mollify = options.mollify && !smooth;
    let data = InitialData::new(payoff, mollify, 2.0 * dy);
    let m = grid.m;
    let initial: Vec<f64> = (0..m).map(|i| data.f(grid.y(i))).collect();
    if let Some(i) = initial.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            t: 0.0,
            y: grid.y(i),
            what: "initial data not finite".into(),
        });
    }
    let w0: Vec<f64> = (0..m).map(|i| data.w0(grid.y(i), dy)).collect();
    let m0 = w0.iter().copied().fold(f64::INFINITY, f64::min);
    let big_m0 = w0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m0.is_finite() || !big_m0.is_finite() {
        return Err(Error::Numerical {
            t: 0.0,
            y: f64::NAN,
            what: "w0 = f'' - f' not finite on the grid".into(),
        });
    }

    let k = Nonlinearity::new(params);
    let left_rate = k.value(w0[0]);
    let right_rate = k.value(w0[m - 1]);
    let stencil = Stencil::new(dy);

    let mut values = Vec::with_capacity((grid.t_steps + 1) * m);
    values.extend_from_slice(&initial);
    for j in 0..grid.t_steps {
        let tau_next = (j + 1) as f64 * dt;
        let base = j * m;
        values.push(initial[0] + tau_next * left_rate);
        for i in 1..m - 1 {
            let (um, u0, up) = (values[base + i - 1], values[base + i], values[base + i + 1]);
            let w = stencil.w(um, u0, up);
            let next = u0 + dt * k.value(w);
            if !next.is_finite() {
                return Err(Error::Numerical {
                    t: tau_next,
                    y: grid.y(i),
                    what: format!("non-finite update (w = {w})"),
                });
            }
            values.push(next);
        }
        values.push(initial[m - 1] + tau_next * right_rate);
    }

    Ok(PdeSolution {
        grid,
        params: *params,
        k,
        values,
        initial,
        w0,
        m0,
        big_m0,
        warnings,
    })
}

struct InitialData<'a> {
    payoff: &'a MarkovianPayoff,
    kernel: Option<(Vec<f64>, f64)>,
}

impl<'a> InitialData<'a> {
    fn new(payoff: &'a MarkovianPayoff, mollify: bool, bandwidth: f64) -> Self {
        let kernel = mollify.then(|| {
            // Discrete Gaussian on a sub-grid of bandwidth/4, truncated at 4 bandwidths.
            let h = 0.25 * bandwidth;
            let half = 16i32;
            let raw: Vec<f64> = (-half..=half)
                .map(|j| {
                    let s = j as f64 * h / bandwidth;
                    (-0.5 * s * s).exp()
                })
                .collect();
            let total: f64 = raw.iter().sum();
            (raw.into_iter().map(|w| w / total).collect(), h)
        });
        Self { payoff, kernel }
    }

    fn f(&self, y: f64) -> f64 {
        match &self.kernel {
            None => self.payoff.value(y.exp()),
            Some((weights, h)) => {
                let half = (weights.len() / 2) as f64;
                weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * self.payoff.value((y + (j as f64 - half) * h).exp()))
                    .sum()
            }
        }
    }

    fn w0(&self, y: f64, dy: f64) -> f64 {
        match self.kernel {
            None if self.payoff.is_smooth() => self.payoff.log_curvature(y.exp()),
            _ => {
                let (fp, f0, fm) = (self.f(y + dy), self.f(y), self.f(y - dy));
                (fp - 2.0 * f0 + fm) / (dy * dy) - (fp - fm) / (2.0 * dy)
            }
        }
    }
}

impl PdeSolution {
    pub fn grid(&self) -> &LogGrid {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `f` on the grid (after mollification, if any).
    pub fn initial_data(&self) -> &[f64] {
        &self.initial
    }

    pub fn w0(&self) -> &[f64] {
        &self.w0
    }

    /// `inf w₀` over the grid.
    pub fn m0(&self) -> f64 {
        self.m0
    }

    /// `sup w₀` over the grid.
    pub fn big_m0(&self) -> f64 {
        self.big_m0
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.k
    }

    /// `ū(τ_j, ·)`.
    pub fn layer(&self, j: usize) -> &[f64] {
        let m = self.grid.m;
        &self.values[j * m..(j + 1) * m]
    }

    pub fn u_bar(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.grid.m + i]
    }

    fn locate_y(&self, y: f64, spot: f64) -> Result<(usize, f64)> {
        let g = &self.grid;
        let slack = 1e-12 * (1.0 + y.abs());
        if !(y >= g.y_min - slack && y <= g.y_max + slack) {
            return Err(Error::Coverage {
                spot,
                log_spot: y,
                y_min: g.y_min,
                y_max: g.y_max,
            });
        }
        let s = ((y - g.y_min) / g.dy()).clamp(0.0, (g.m - 1) as f64);
        let i = (s.floor() as usize).min(g.m - 2);
        Ok((i, s - i as f64))
    }

    fn locate_tau(&self, tau: f64) -> Result<(usize, f64)> {
        if !(-1e-12..=1.0 + 1e-12).contains(&tau) {
            return Err(invalid(format!("time {} outside [0, 1]", 1.0 - tau)));
        }
        let s = (tau.clamp(0.0, 1.0) * self.grid.t_steps as f64).min(self.grid.t_steps as f64);
        let j = (s.floor() as usize).min(self.grid.t_steps - 1);
        Ok((j, s - j as f64))
    }

    /// `ū_y` at node `(j, i)`: fitted three-point in the interior,
    /// second-order one-sided at the ends.
    pub fn u_bar_y(&self, j: usize, i: usize) -> f64 {
        let row = self.layer(j);
        let m = self.grid.m;
        let dy = self.grid.dy();
        if i == 0 {
            (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dy)
        } else if i == m - 1 {
            (3.0 * row[m - 1] - 4.0 * row[m - 2] + row[m - 3]) / (2.0 * dy)
        } else {
            Stencil::new(dy).slope(row[i - 1], row[i], row[i + 1])
        }
    }

    fn bilinear(&self, tau: f64, y: f64, spot: f64, node: impl Fn(usize, usize) -> f64) -> Result<f64> {
        let (j, wt) = self.locate_tau(tau)?;
        let (i, wy) = self.locate_y(y, spot)?;
        let at = |jj: usize| (1.0 - wy) * node(jj, i) + wy * node(jj, i + 1);
        Ok((1.0 - wt) * at(j) + wt * at(j + 1))
    }

    /// `v(t, x) = ū(1 - t, ln x)`, piecewise-linear in `τ` and `y`.
    pub fn value(&self, t: f64, x: f64) -> Result<f64> {
        self.bilinear(1.0 - t, x.ln(), x, |j, i| self.u_bar(j, i))
    }

    /// `v_x(t, x) = ū_y(1 - t, ln x) / x`.
    ///
    /// Between nodes `ū_y` is interpolated in the span of `{1, e^y}`, so
    /// the deltas of log and linear payoffs are reproduced exactly.
    pub fn delta(&self, t: f64, x: f64) -> Result<f64> {
        let (j, wt) = self.locate_tau(1.0 - t)?;
        let (i, wy) = self.locate_y(x.ln(), x)?;
        let dy = self.grid.dy();
        let wy = (wy * dy).exp_m1() / dy.exp_m1();
        let at = |jj: usize| (1.0 - wy) * self.u_bar_y(jj, i) + wy * self.u_bar_y(jj, i + 1);
        Ok(((1.0 - wt) * at(j) + wt * at(j + 1)) / x)
    }

    /// `v(0, s0)`.
    pub fn value_at_origin(&self) -> Result<f64> {
        self.value(0.0, self.params.s0)
    }

    /// CSV `t,y,u_bar` (forward time) on every `stride_t`-th level and
    /// `stride_y`-th node.
    pub fn to_csv(&self, stride_t: usize, stride_y: usize) -> String {
        let (st, sy) = (stride_t.max(1), stride_y.max(1));
        let mut out = String::from("t,y,u_bar\n");
        let dt = self.grid.dt();
        for j in (0..=self.grid.t_steps).step_by(st) {
            for i in (0..self.grid.m).step_by(sy) {
                let _ = writeln!(out, "{},{},{}", j as f64 * dt, self.grid.y(i), self.u_bar(j, i));
            }
        }
        out
    }

    /// CSV `t,x,v_x` at calendar times `times` on every `stride_y`-th node.
    pub fn delta_csv(&self, times: &[f64], stride_y: usize) -> Result<String> {
        let mut out = String::from("t,x,v_x\n");
        for &t in times {
            for i in (0..self.grid.m).step_by(stride_y.max(1)) {
                let x = self.grid.y(i).exp();
                let _ = writeln!(out, "{},{},{}", t, x, self.delta(t, x)?);
            }
        }
        Ok(out)
    }
}

/// Explicit solution for `F(x) = α + β ln x`:
/// `v(t, x) = α + β ln x + ((1-t)/ℓ) ln((1-p) + p exp(-ℓσ̄²β/2))`.
pub fn closed_form_log_payoff(
    alpha: f64,
    beta: f64,
    t: f64,
    x: f64,
    params: &ModelParams,
) -> Result<f64> {
    params.validate()?;
    if !(x > 0.0) {
        return Err(invalid(format!("x must be positive, got {x}")));
    }
    let k = Nonlinearity::new(params);
    Ok(alpha + beta * x.ln() + (1.0 - t) * k.value(-beta))
}

/// Its delta `β/x`, independent of time.
pub fn closed_form_log_delta(beta: f64, x: f64) -> f64 {
    beta / x
}

/// Outcome of [`check_solution_properties`].
#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub tolerance: f64,
    pub k_m0: f64,
    pub k_big_m0: f64,
    /// Largest excursion outside `[f + τK(m₀), f + τK(M₀)]`.
    pub band_violation: f64,
    pub band_location: (f64, f64),
    pub slope_min: f64,
    pub slope_max: f64,
    /// Largest excursion of `(ū^{j+1} - ū^j)/dt` outside `[K(m₀), K(M₀)]`.
    pub slope_violation: f64,
    pub slope_location: (f64, f64),
    /// Discrete Lipschitz constants of `ū_τ` in `y` and in `τ`.
    pub lipschitz_ut: (f64, f64),
    /// Discrete Lipschitz constants of the fitted `ū_yy - ū_y` in `y` and in `τ`.
    pub lipschitz_w: (f64, f64),
}

impl SolutionReport {
    pub fn passed(&self) -> bool {
        self.band_violation <= self.tolerance && self.slope_violation <= self.tolerance
    }

    /// Turns a failed check into an error naming the worst point.
    pub fn ensure(&self) -> Result<()> {
        if self.band_violation > self.tolerance {
            let (t, y) = self.band_location;
            return Err(Error::Numerical {
                t,
                y,
                what: format!("band violated by {}", self.band_violation),
            });
        }
        if self.slope_violation > self.tolerance {
            let (t, y) = self.slope_location;
            return Err(Error::Numerical {
                t,
                y,
                what: format!("time slope outside [K(m0), K(M0)] by {}", self.slope_violation),
            });
        }
        Ok(())
    }
}

/// Default tolerance `5·dy² + 5·dt`.
pub fn default_tolerance(grid: &LogGrid) -> f64 {
    5.0 * grid.dy() * grid.dy() + 5.0 * grid.dt()
}

/// Checks the sub/super-solution band and the time-slope bound, and
/// measures discrete Lipschitz constants (diagnostic only).
pub fn check_solution_properties(sol: &PdeSolution, tolerance: f64) -> SolutionReport {
    let g = &sol.grid;
    let (m, steps) = (g.m, g.t_steps);
    let (dt, dy) = (g.dt(), g.dy());
    let k_lo = sol.k.value(sol.m0);
    let k_hi = sol.k.value(sol.big_m0);
    let mut report = SolutionReport {
        tolerance,
        k_m0: k_lo,
        k_big_m0: k_hi,
        band_violation: 0.0,
        band_location: (0.0, g.y_min),
        slope_min: f64::INFINITY,
        slope_max: f64::NEG_INFINITY,
        slope_violation: 0.0,
        slope_location: (0.0, g.y_min),
        lipschitz_ut: (0.0, 0.0),
        lipschitz_w: (0.0, 0.0),
    };
    let stencil = Stencil::new(dy);
    let w_at = |j: usize, i: usize| {
        let r = sol.layer(j);
        stencil.w(r[i - 1], r[i], r[i + 1])
    };
    for j in 0..=steps {
        let tau = j as f64 * dt;
        for i in 0..m {
            let u = sol.u_bar(j, i);
            let f = sol.initial[i];
            let below = (f + tau * k_lo) - u;
            let above = u - (f + tau * k_hi);
            let excess = below.max(above);
            if excess > report.band_violation {
                report.band_violation = excess;
                report.band_location = (tau, g.y(i));
            }
        }
        if j < steps {
            for i in 0..m {
                let slope = (sol.u_bar(j + 1, i) - sol.u_bar(j, i)) / dt;
                report.slope_min = report.slope_min.min(slope);
                report.slope_max = report.slope_max.max(slope);
                let excess = (k_lo - slope).max(slope - k_hi);
                if excess > report.slope_violation {
                    report.slope_violation = excess;
                    report.slope_location = (tau, g.y(i));
                }
                if i + 1 < m {
                    let next = (sol.u_bar(j + 1, i + 1) - sol.u_bar(j, i + 1)) / dt;
                    report.lipschitz_ut.0 = report.lipschitz_ut.0.max((next - slope).abs() / dy);
                }
                if j + 1 < steps {
                    let later = (sol.u_bar(j + 2, i) - sol.u_bar(j + 1, i)) / dt;
                    report.lipschitz_ut.1 = report.lipschitz_ut.1.max((later - slope).abs() / dt);
                }
            }
        }
        for i in 1..m - 1 {
            let w = w_at(j, i);
            if i + 2 < m {
                report.lipschitz_w.0 = report.lipschitz_w.0.max((w_at(j, i + 1) - w).abs() / dy);
            }
            if j < steps {
                report.lipschitz_w.1 = report.lipschitz_w.1.max((w_at(j + 1, i) - w).abs() / dt);
            }
        }
    }
    report
}
