//! Primal recursion: `U_{k-1} = inf_a log E[exp(U_k - a·ΔS)]`.
//!
//! With `c = a σ̄ z` the one-step objective is
//! `log(p/2 (e^{U_up - c} + e^{U_down + c}) + (1-p) e^{U_mid})`. Its
//! minimiser is `c* = (U_up - U_down)/2`, which gives the closed form
//! `log(p e^{(U_up+U_down)/2} + (1-p) e^{U_mid})`.

use super::{build_layer, terminal_layer, try_build_layer, Geometry, LatticeLayer, NodeTable};
use crate::error::{Error, Result};
use crate::model::payoff::Payoff;
use crate::model::{log_add_exp, ModelParams};

/// Certainty equivalent together with the per-node optimal share holdings.
#[derive(Debug, Clone)]
pub struct PrimalSolution {
    pub ce: f64,
    /// `γ*(k, a, b)`: shares held over `[k/n, (k+1)/n)` at node `(a, b)`.
    pub gamma: NodeTable,
}

#[inline]
pub(crate) fn node_value(log_p: f64, log_q: f64, up: f64, mid: f64, down: f64) -> f64 {
    log_add_exp(log_p + 0.5 * (up + down), log_q + mid)
}

/// Exact `C_n` and the recursion minimiser converted to shares.
pub fn primal_ce(params: &ModelParams, payoff: &Payoff) -> Result<PrimalSolution> {
    let (ce, gamma) = backward(params, payoff, true)?;
    Ok(PrimalSolution {
        ce,
        gamma: gamma.expect("tables requested"),
    })
}

/// Exact `C_n` without storing per-node tables.
pub fn primal_ce_value(params: &ModelParams, payoff: &Payoff) -> Result<f64> {
    backward(params, payoff, false).map(|(ce, _)| ce)
}

fn backward(
    params: &ModelParams,
    payoff: &Payoff,
    keep_gamma: bool,
) -> Result<(f64, Option<NodeTable>)> {
    params.validate()?;
    let payoff = payoff.as_markovian()?;
    let geometry = Geometry::new(params);
    let n = params.n;
    let scale = params.risk_aversion();
    let log_p = params.p.ln();
    let log_q = (1.0 - params.p).ln();
    let two_u = 2.0 * geometry.u;

    let mut next = terminal_layer(params, &geometry, payoff)?;
    let mut gamma_layers = Vec::new();
    for k in (0..n).rev() {
        let child = LatticeLayer { k: k + 1, values: next };
        let current = build_layer(k, |a, b| {
            node_value(
                log_p,
                log_q,
                child.get(a + 1, b),
                child.get(a, b),
                child.get(a, b + 1),
            )
        });
        if keep_gamma {
            let gamma = build_layer(k, |a, b| {
                let spread = (child.get(a + 1, b) - child.get(a, b + 1)) / scale;
                spread / (geometry.spot(a, b) * two_u)
            });
            gamma_layers.push(LatticeLayer { k, values: gamma });
        }
        next = current;
    }
    let ce = next[0] / scale;
    let table = keep_gamma.then(|| {
        gamma_layers.reverse();
        NodeTable {
            geometry,
            layers: gamma_layers,
        }
    });
    Ok((ce, table))
}

/// The one-step primal objective as a function of `c = a σ̄ z`.
#[inline]
pub fn inner_objective(p: f64, up: f64, mid: f64, down: f64, c: f64) -> f64 {
    let jumps = log_add_exp(up - c, down + c) + (0.5 * p).ln();
    log_add_exp(jumps, (1.0 - p).ln() + mid)
}

/// Result of a one-dimensional line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerMinimum {
    pub argmin: f64,
    pub value: f64,
    pub iterations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const MAX_GOLDEN_ITERATIONS: usize = 500;

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`,
/// stopping when the bracket is narrower than `x_tol`.
pub fn golden_section_min(
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
) -> Result<InnerMinimum> {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for it in 0..MAX_GOLDEN_ITERATIONS {
        if hi - lo <= x_tol {
            let (argmin, value) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
            return Ok(InnerMinimum {
                argmin,
                value,
                iterations: it,
            });
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    Err(Error::Internal(format!(
        "golden-section search did not converge on [{lo}, {hi}]"
    )))
}

/// Minimises the one-step objective numerically, bracketing ten widths
/// either side of the closed-form minimiser.
pub fn numeric_node(p: f64, up: f64, mid: f64, down: f64, tol: f64) -> Result<InnerMinimum> {
    let centre = 0.5 * (up - down);
    let width = 1.0 + centre.abs();
    // The objective has curvature at most one in c, so a bracket of
    // sqrt(tol) pins the value to within tol.
    let x_tol = (tol.sqrt() * 1e-2).max(1e-12 * width);
    golden_section_min(
        |c| inner_objective(p, up, mid, down, c),
        centre - 10.0 * width,
        centre + 10.0 * width,
        x_tol,
    )
}

/// `C_n` with every node's infimum over the hedge solved by line search.
pub fn primal_ce_numeric(params: &ModelParams, payoff: &Payoff, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(crate::error::invalid(format!("tol must be positive, got {tol}")));
    }
    params.validate()?;
    let markovian = payoff.as_markovian()?;
    let geometry = Geometry::new(params);
    let p = params.p;
    let mut next = terminal_layer(params, &geometry, markovian)?;
    for k in (0..params.n).rev() {
        let child = LatticeLayer { k: k + 1, values: next };
        // Tolerances are stated in certainty-equivalent units, the
        // recursion runs on nℓ-scaled values.
        let node_tol = tol * params.risk_aversion();
        next = try_build_layer(k, |a, b| {
            numeric_node(
                p,
                child.get(a + 1, b),
                child.get(a, b),
                child.get(a, b + 1),
                node_tol,
            )
            .map(|m| m.value)
        })?;
    }
    Ok(next[0] / params.risk_aversion())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::payoff::MarkovianPayoff;

    fn one_step() -> ModelParams {
        ModelParams::new(0.5, 0.5, 1.0, 1.0, 1).unwrap()
    }

    #[test]
    fn constant_payoff_is_cash() {
        for n in [1, 3, 17, 60] {
            let params = ModelParams::new(0.4, 0.3, 1.0, 2.0, n).unwrap();
            let sol = primal_ce(&params, &MarkovianPayoff::constant(1.7).into()).unwrap();
            assert!((sol.ce - 1.7).abs() < 1e-12, "n = {n}: {}", sol.ce);
        }
    }

    #[test]
    fn linear_payoff_is_replicated() {
        let params = ModelParams::new(0.3, 0.4, 1.3, 1.5, 20).unwrap();
        let sol = primal_ce(&params, &MarkovianPayoff::affine(0.0, 1.0).into()).unwrap();
        assert!((sol.ce - 1.3).abs() < 1e-12);
        for layer in &sol.gamma.layers {
            for v in &layer.values {
                assert!((v - 1.0).abs() < 1e-9, "gamma {v}");
            }
        }
    }

    #[test]
    fn one_step_square_payoff() {
        // Brute-force grid search over a in [-20, 20] at resolution 1e-6
        // on the one-step objective with U = (2.25, 1, 0.25).
        let oracle = {
            let (up, mid, down) = (2.25f64, 1.0f64, 0.25f64);
            let z_sigma = 0.5; // σ̄ z with z = s0 = 1
            let obj = |a: f64| {
                (0.25 * ((up - a * z_sigma).exp() + (down + a * z_sigma).exp())
                    + 0.5 * mid.exp())
                .ln()
            };
            let mut best = f64::INFINITY;
            let mut i = -20_000_000i64;
            while i <= 20_000_000 {
                best = best.min(obj(i as f64 * 1e-6));
                i += 1;
            }
            best
        };
        let expected = (0.5 * 1.25f64.exp() + 0.5 * 1f64.exp()).ln();
        assert!((oracle - expected).abs() < 1e-10);
        assert!((expected - 1.132_792_239_318_898_3).abs() < 1e-15);
        let sol = primal_ce(&one_step(), &MarkovianPayoff::power(2.0).into()).unwrap();
        assert!((sol.ce - oracle).abs() < 1e-10);
        // a* = (U_up - U_down)/(2 σ̄ z) = 2, i.e. γ* = a √n/(nℓ) = 2
        assert!((sol.gamma.get(0, 0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_matches_closed_form_one_step() {
        let params = one_step();
        let payoff = MarkovianPayoff::power(2.0).into();
        let exact = primal_ce_value(&params, &payoff).unwrap();
        let numeric = primal_ce_numeric(&params, &payoff, 1e-10).unwrap();
        assert!((exact - numeric).abs() < 1e-9);
    }

    #[test]
    fn numeric_replicates_linear() {
        let params = ModelParams::new(0.5, 0.2, 1.0, 1.0, 3).unwrap();
        let v = primal_ce_numeric(&params, &MarkovianPayoff::affine(0.0, 1.0).into(), 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn numeric_rejects_bad_tol() {
        let payoff = MarkovianPayoff::power(2.0).into();
        assert!(primal_ce_numeric(&one_step(), &payoff, 0.0).is_err());
    }

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        let m = golden_section_min(|x| (x - 1.3) * (x - 1.3), -10.0, 10.0, 1e-10).unwrap();
        assert!((m.argmin - 1.3).abs() < 1e-9);
    }

    #[test]
    fn value_only_matches_full() {
        let params = ModelParams::new(0.35, 0.6, 1.1, 0.7, 30).unwrap();
        let payoff = MarkovianPayoff::smoothed_call(1.0, 0.05).into();
        let a = primal_ce(&params, &payoff).unwrap().ce;
        let b = primal_ce_value(&params, &payoff).unwrap();
        assert_eq!(a, b);
    }
}
