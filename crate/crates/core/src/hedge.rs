//! Hedging strategies on the trinomial tree and their performance.
//!
//! A [`HedgeStrategy`] maps `(step, node, spot)` to a share position. The
//! delta strategy reads `v_x((i+1)/n, S_i)` from a PDE solution; the
//! lattice-optimal one replays the recursion minimiser.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{hedged_ce, primal_ce_value, Geometry, LatticeIndex, NodeTable};
use crate::model::payoff::Payoff;
use crate::model::ModelParams;
use crate::pde::PdeSolution;

/// Where a strategy's positions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    PdeDelta,
    LatticeOptimal,
    Constant,
    User,
}

type UserRule = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Rule {
    PdeDelta(Arc<PdeSolution>),
    Lattice(Arc<NodeTable>),
    Constant(f64),
    User(UserRule),
}

/// Share positions held over `[i/n, (i+1)/n)` for `i = 0..n-1`.
#[derive(Clone)]
pub struct HedgeStrategy {
    n: usize,
    rule: Rule,
}

impl fmt::Debug for HedgeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HedgeStrategy")
            .field("n", &self.n)
            .field("provenance", &self.provenance())
            .finish()
    }
}

impl HedgeStrategy {
    pub fn constant(n: usize, shares: f64) -> Self {
        Self {
            n,
            rule: Rule::Constant(shares),
        }
    }

    /// Replays a per-node table such as [`crate::lattice::PrimalSolution::gamma`].
    pub fn lattice_optimal(table: NodeTable) -> Self {
        Self {
            n: table.steps(),
            rule: Rule::Lattice(Arc::new(table)),
        }
    }

    /// Arbitrary rule of `(step, spot)`.
    pub fn user(n: usize, rule: impl Fn(usize, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            n,
            rule: Rule::User(Arc::new(rule)),
        }
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn provenance(&self) -> Provenance {
        match self.rule {
            Rule::PdeDelta(_) => Provenance::PdeDelta,
            Rule::Lattice(_) => Provenance::LatticeOptimal,
            Rule::Constant(_) => Provenance::Constant,
            Rule::User(_) => Provenance::User,
        }
    }

    /// Position at `node` with spot `spot`; errors when not finite or, for
    /// the delta strategy, when the spot lies outside the PDE grid.
    pub fn position(&self, node: LatticeIndex, spot: f64) -> Result<f64> {
        if node.k >= self.n {
            return Err(invalid(format!(
                "strategy has {} steps, asked for step {}",
                self.n, node.k
            )));
        }
        let gamma = match &self.rule {
            Rule::PdeDelta(sol) => sol.delta((node.k + 1) as f64 / self.n as f64, spot)?,
            Rule::Lattice(table) => table.get(node.k, node.a, node.b),
            Rule::Constant(c) => *c,
            Rule::User(f) => f(node.k, spot),
        };
        if !gamma.is_finite() {
            return Err(invalid(format!(
                "position not finite at step {}, spot {spot}",
                node.k
            )));
        }
        Ok(gamma)
    }

    /// CSV `i,spot,gamma` over the lattice nodes of every `stride`-th step.
    pub fn to_csv(&self, params: &ModelParams, stride: usize) -> Result<String> {
        let params = params.with_n(self.n)?;
        let geometry = Geometry::new(&params);
        let mut out = String::from("i,spot,gamma\n");
        for k in (0..self.n).step_by(stride.max(1)) {
            for a in 0..=k {
                for b in 0..=k - a {
                    let spot = geometry.spot(a, b);
                    let gamma = self.position(LatticeIndex { k, a, b }, spot)?;
                    let _ = writeln!(out, "{k},{spot},{gamma}");
                }
            }
        }
        Ok(out)
    }
}

/// The delta-hedging strategy `γ̃_i = v_x((i+1)/n, S_i)`.
///
/// Fails with a coverage error if the PDE grid does not contain every spot
/// the `n`-step lattice can reach before maturity.
pub fn build_delta_strategy(sol: impl Into<Arc<PdeSolution>>, n: usize) -> Result<HedgeStrategy> {
    let sol = sol.into();
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let params = sol.params().with_n(n)?;
    let geometry = Geometry::new(&params);
    let k = n - 1;
    for spot in [geometry.spot(k, 0), geometry.spot(0, k)] {
        let y = spot.ln();
        let g = sol.grid();
        if y < g.y_min || y > g.y_max {
            return Err(Error::Coverage {
                spot,
                log_spot: y,
                y_min: g.y_min,
                y_max: g.y_max,
            });
        }
    }
    Ok(HedgeStrategy {
        n,
        rule: Rule::PdeDelta(sol),
    })
}

/// `C̃_n` of a strategy and its excess over `C_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HedgeEvaluation {
    pub ce_tilde: f64,
    pub ce: f64,
    pub gap: f64,
}

/// Exact `C̃_n` and `gap = C̃_n - C_n` on the lattice.
pub fn evaluate_hedge(
    params: &ModelParams,
    payoff: &Payoff,
    strategy: &HedgeStrategy,
) -> Result<HedgeEvaluation> {
    let ce_tilde = hedged_ce(params, payoff, strategy)?;
    let ce = primal_ce_value(params, payoff)?;
    let gap = ce_tilde - ce;
    if gap < -1e-10 * (1.0 + ce.abs()) {
        return Err(Error::Internal(format!(
            "hedged value {ce_tilde} below the infimum {ce}"
        )));
    }
    Ok(HedgeEvaluation { ce_tilde, ce, gap })
}

/// Largest `|γ_a - γ_b|` over the lattice nodes of step `k`.
pub fn max_position_gap(
    params: &ModelParams,
    a: &HedgeStrategy,
    b: &HedgeStrategy,
    k: usize,
) -> Result<f64> {
    let geometry = Geometry::new(params);
    let mut worst = 0.0f64;
    for i in 0..=k {
        for j in 0..=k - i {
            let node = LatticeIndex { k, a: i, b: j };
            let spot = geometry.spot(i, j);
            worst = worst.max((a.position(node, spot)? - b.position(node, spot)?).abs());
        }
    }
    Ok(worst)
}

/// Paths per generator substream.
pub const BLOCK_SIZE: usize = 4096;
const HISTOGRAM_BINS: usize = 50;
const BOOTSTRAP_RESAMPLES: usize = 200;
const TAIL_FRACTION: f64 = 1e-3;

/// Histogram of P&L outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Monte Carlo summary of `F - V^γ` under the reference measure.
#[derive(Debug, Clone, Serialize)]
pub struct PnlReport {
    pub paths: usize,
    pub seed: u64,
    pub provenance: Provenance,
    pub mean: f64,
    pub std_dev: f64,
    /// `(1/(nℓ)) log mean exp(nℓ (F - V^γ))`.
    pub exp_ce: f64,
    /// 95% percentile-bootstrap interval for `exp_ce`.
    pub exp_ce_ci: (f64, f64),
    /// Share of the exponential mean carried by the top 0.1% of paths.
    pub tail_share: f64,
    pub heavy_tail: bool,
    pub histogram: Histogram,
    pub warnings: Vec<String>,
}

impl PnlReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// CSV `lower,upper,count`.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("lower,upper,count\n");
        let h = &self.histogram;
        for (i, c) in h.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", h.edges[i], h.edges[i + 1], c);
        }
        out
    }
}

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `paths` trinomial paths and the hedged P&L `F - Σ γ_i ΔS_i`.
///
/// Paths are split into blocks of [`BLOCK_SIZE`]; block `j` draws from
/// stream `j` of a ChaCha8 generator seeded with `seed`, so the result does
/// not depend on the thread count.
pub fn simulate_pnl(
    params: &ModelParams,
    payoff: &Payoff,
    strategy: &HedgeStrategy,
    paths: usize,
    seed: u64,
) -> Result<PnlReport> {
    params.validate()?;
    if paths == 0 {
        return Err(invalid("paths must be at least 1"));
    }
    if strategy.steps() != params.n {
        return Err(invalid(format!(
            "strategy built for n = {}, market has n = {}",
            strategy.steps(),
            params.n
        )));
    }
    let geometry = Geometry::new(params);
    let blocks = paths.div_ceil(BLOCK_SIZE);
    let outcomes: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let count = BLOCK_SIZE.min(paths - block * BLOCK_SIZE);
            let mut rng = block_rng(seed, block as u64);
            let mut spots = vec![0.0; params.n + 1];
            (0..count)
                .map(|_| simulate_path(params, payoff, strategy, &geometry, &mut rng, &mut spots))
                .collect()
        })
        .collect::<Result<_>>()?;
    let pnl: Vec<f64> = outcomes.into_iter().flatten().collect();
    summarise(params, strategy.provenance(), &pnl, seed)
}

fn simulate_path(
    params: &ModelParams,
    payoff: &Payoff,
    strategy: &HedgeStrategy,
    geometry: &Geometry,
    rng: &mut ChaCha8Rng,
    spots: &mut [f64],
) -> Result<f64> {
    let half_p = 0.5 * params.p;
    let (mut a, mut b) = (0usize, 0usize);
    let mut gains = 0.0;
    spots[0] = geometry.spot(0, 0);
    for k in 0..params.n {
        let spot = spots[k];
        let gamma = strategy.position(LatticeIndex { k, a, b }, spot)?;
        let draw: f64 = rng.random();
        let xi = if draw < half_p {
            a += 1;
            1.0
        } else if draw < params.p {
            b += 1;
            -1.0
        } else {
            0.0
        };
        gains += gamma * xi * geometry.u * spot;
        spots[k + 1] = geometry.spot(a, b);
    }
    let f = payoff.value_on_path(spots);
    let pnl = f - gains;
    if !pnl.is_finite() {
        return Err(invalid(format!("P&L not finite (payoff {f})")));
    }
    Ok(pnl)
}

fn log_mean_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + (v - max).exp(), c + 1));
    max + (sum / count as f64).ln()
}

fn summarise(params: &ModelParams, provenance: Provenance, pnl: &[f64], seed: u64) -> Result<PnlReport> {
    let n = pnl.len();
    let scale = params.risk_aversion();
    // Shifting by the first outcome keeps degenerate samples exact.
    let shift = pnl[0];
    let mean = shift + pnl.iter().map(|x| x - shift).sum::<f64>() / n as f64;
    let var = if n > 1 {
        pnl.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let scaled: Vec<f64> = pnl.iter().map(|x| scale * x).collect();
    let exp_ce = log_mean_exp(scaled.iter().copied()) / scale;

    let mut rng = block_rng(seed, u64::MAX);
    let mut resampled: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let draws = (0..n).map(|_| scaled[rng.random_range(0..n)]);
            let drawn: Vec<f64> = draws.collect();
            log_mean_exp(drawn.iter().copied()) / scale
        })
        .collect();
    resampled.sort_by(f64::total_cmp);
    let pick = |q: f64| resampled[((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round()) as usize];
    let ci = (pick(0.025).min(exp_ce), pick(0.975).max(exp_ce));

    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    weights.sort_by(|x, y| y.total_cmp(x));
    let total: f64 = weights.iter().sum();
    let top = ((TAIL_FRACTION * n as f64).ceil() as usize).max(1);
    let tail_share = weights[..top].iter().sum::<f64>() / total;
    let heavy_tail = tail_share > 0.5;
    let mut warnings = Vec::new();
    if heavy_tail {
        let msg = format!(
            "exponential CE unreliable: top {top} of {n} paths carry {:.1}% of the exponential mean",
            100.0 * tail_share
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    Ok(PnlReport {
        paths: n,
        seed,
        provenance,
        mean,
        std_dev: var.sqrt(),
        exp_ce,
        exp_ce_ci: ci,
        tail_share,
        heavy_tail,
        histogram: histogram(pnl),
        warnings,
    })
}

fn histogram(values: &[f64]) -> Histogram {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Histogram {
            edges: vec![lo, hi],
            counts: vec![values.len() as u64],
        };
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges = (0..=HISTOGRAM_BINS)
        .map(|i| if i == HISTOGRAM_BINS { hi } else { lo + i as f64 * width })
        .collect();
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for v in values {
        let bin = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    Histogram { edges, counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::primal_ce;
    use crate::model::payoff::{MarkovianPayoff, PathFunctional};
    use crate::pde::{solve_hjb, LogGrid};

    fn params(n: usize) -> ModelParams {
        ModelParams::new(0.5, 0.2, 1.0, 1.0, n).unwrap()
    }

    fn delta_for(payoff: &Payoff, n: usize) -> HedgeStrategy {
        let prm = params(n);
        let grid = LogGrid::covering_lattice(&prm, n, 0.02).unwrap();
        let sol = solve_hjb(&prm, payoff, &grid).unwrap();
        build_delta_strategy(sol, n).unwrap()
    }

    #[test]
    fn delta_of_simple_payoffs() {
        let log = delta_for(&MarkovianPayoff::log_affine(0.0, 1.0).into(), 20);
        let cash = delta_for(&MarkovianPayoff::constant(2.0).into(), 20);
        let lin = delta_for(&MarkovianPayoff::affine(0.0, 1.0).into(), 20);
        assert_eq!(log.provenance(), Provenance::PdeDelta);
        for k in [0, 7, 19] {
            for x in [0.8, 1.0, 1.25] {
                let node = LatticeIndex { k, a: 0, b: 0 };
                assert!((log.position(node, x).unwrap() - 1.0 / x).abs() < 1e-8);
                assert_eq!(cash.position(node, x).unwrap(), 0.0);
                assert!((lin.position(node, x).unwrap() - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn narrow_grid_is_coverage_error() {
        let prm = params(400);
        let grid = LogGrid::centered(&prm, 0.5, 0.02).unwrap();
        let sol = solve_hjb(&prm, &MarkovianPayoff::log_affine(0.0, 1.0).into(), &grid).unwrap();
        assert!(matches!(build_delta_strategy(sol, 400), Err(Error::Coverage { .. })));
    }

    #[test]
    fn lattice_optimal_has_no_gap() {
        let prm = params(30);
        let payoff: Payoff = MarkovianPayoff::power(2.0).into();
        let sol = primal_ce(&prm, &payoff).unwrap();
        let eval = evaluate_hedge(&prm, &payoff, &HedgeStrategy::lattice_optimal(sol.gamma)).unwrap();
        assert!(eval.gap.abs() <= 1e-10);
    }

    #[test]
    fn zero_hedge_on_convex_payoff_has_positive_gap() {
        let prm = params(30);
        let payoff: Payoff = MarkovianPayoff::power(2.0).into();
        let eval = evaluate_hedge(&prm, &payoff, &HedgeStrategy::constant(30, 0.0)).unwrap();
        assert!(eval.gap > 1e-4, "{eval:?}");
    }

    #[test]
    fn linear_payoff_replicated_on_every_path() {
        let prm = ModelParams::new(0.5, 0.3, 1.7, 1.0, 40).unwrap();
        let r = simulate_pnl(
            &prm,
            &MarkovianPayoff::affine(0.0, 1.0).into(),
            &HedgeStrategy::constant(40, 1.0),
            5000,
            7,
        )
        .unwrap();
        assert!((r.mean - 1.7).abs() < 1e-12);
        assert!(r.std_dev < 1e-12);
        assert_eq!(r.histogram.counts.iter().sum::<u64>(), 5000);
    }

    #[test]
    fn constant_payoff_unhedged() {
        let prm = params(10);
        let r = simulate_pnl(
            &prm,
            &MarkovianPayoff::constant(0.3).into(),
            &HedgeStrategy::constant(10, 0.0),
            100,
            1,
        )
        .unwrap();
        assert_eq!(r.mean, 0.3);
        assert_eq!(r.std_dev, 0.0);
        assert!(r.exp_ce_ci.0 <= r.exp_ce && r.exp_ce <= r.exp_ce_ci.1);
        assert_eq!(r.histogram.counts, vec![100]);
    }

    #[test]
    fn simulation_is_reproducible_and_supports_paths() {
        let prm = params(12);
        let payoff: Payoff = PathFunctional::running_max().into();
        let s = HedgeStrategy::user(12, |_, x| 0.5 / x);
        let a = simulate_pnl(&prm, &payoff, &s, 9000, 3).unwrap();
        let b = simulate_pnl(&prm, &payoff, &s, 9000, 3).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.histogram_csv(), b.histogram_csv());
        let c = simulate_pnl(&prm, &payoff, &s, 9000, 4).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn strategy_csv() {
        let prm = params(3);
        let csv = HedgeStrategy::constant(3, 0.5).to_csv(&prm, 1).unwrap();
        assert!(csv.starts_with("i,spot,gamma\n"));
        assert_eq!(csv.lines().count(), 1 + 1 + 3 + 6);
    }

    #[test]
    fn histogram_bins_cover_all_values() {
        let h = histogram(&[0.0, 1.0, 1.0, 0.5, 0.999]);
        assert_eq!(h.counts.iter().sum::<u64>(), 5);
        assert_eq!(h.edges.len(), HISTOGRAM_BINS + 1);
        assert_eq!(*h.counts.last().unwrap(), 3);
    }
}
