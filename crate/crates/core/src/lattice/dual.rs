//! Dual side: martingale measures indexed by the conditional probability
//! `φ` of a non-zero move (split evenly between up and down).
//!
//! At a node the supremum over `q` of
//! `q (U_up + U_down)/2 + (1-q) U_mid - G_p(q)` is attained at
//! `q* = p e^{m-d} / ((1-p) + p e^{m-d})` with `m = (U_up + U_down)/2`,
//! `d = U_mid`.

use std::fmt;
use std::sync::Arc;

use super::{
    build_layer, enumerate::path_tree, terminal_layer, try_build_layer, Geometry, LatticeIndex,
    LatticeLayer, NodeTable,
};
use crate::error::{invalid, Error, Result};
use crate::model::entropy_penalty;
use crate::model::payoff::Payoff;
use crate::model::ModelParams;

/// Certainty equivalent from the dual recursion plus the optimal measure.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub ce: f64,
    /// `q*(k, a, b)`: optimal probability of a non-zero move out of the node.
    pub qstar: NodeTable,
}

/// Maximiser of the one-step dual problem; strictly inside `(0, 1)` for
/// finite inputs.
#[inline]
pub fn optimal_fraction(p: f64, mean_jump: f64, stay: f64) -> f64 {
    // logistic(δ + log(p/(1-p)))
    let t = (mean_jump - stay) + (p / (1.0 - p)).ln();
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Exact `C_n` from the dual recursion, evaluating the penalised expectation
/// at the optimal `q*` at every node.
pub fn dual_ce(params: &ModelParams, payoff: &Payoff) -> Result<DualSolution> {
    params.validate()?;
    let markovian = payoff.as_markovian()?;
    let geometry = Geometry::new(params);
    let p = params.p;
    let mut next = terminal_layer(params, &geometry, markovian)?;
    let mut q_layers = Vec::with_capacity(params.n);
    for k in (0..params.n).rev() {
        let child = LatticeLayer { k: k + 1, values: next };
        let nodes = try_build_layer(k, |a, b| {
            let m = 0.5 * (child.get(a + 1, b) + child.get(a, b + 1));
            let d = child.get(a, b);
            let q = optimal_fraction(p, m, d);
            let value = q * m + (1.0 - q) * d - entropy_penalty(q, p)?;
            Ok((value, q))
        })?;
        let (values, qs): (Vec<f64>, Vec<f64>) = nodes.into_iter().unzip();
        q_layers.push(LatticeLayer { k, values: qs });
        next = values;
    }
    q_layers.reverse();
    Ok(DualSolution {
        ce: next[0] / params.risk_aversion(),
        qstar: NodeTable {
            geometry,
            layers: q_layers,
        },
    })
}

type FractionRule = Arc<dyn Fn(LatticeIndex, f64) -> f64 + Send + Sync>;

/// Martingale measure on the tree given by the probability `φ ∈ [0, 1]` of a
/// non-zero move out of each node (mass `φ/2` up, `φ/2` down).
///
/// The fraction may depend on the node `(k, a, b)` and its spot only; the
/// transition out of step `k` uses the value at layer `k`.
#[derive(Clone)]
pub enum VolFractionPolicy {
    Constant(f64),
    Table(Arc<NodeTable>),
    Rule(FractionRule),
}

impl fmt::Debug for VolFractionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Table(t) => write!(f, "Table({} layers)", t.steps()),
            Self::Rule(_) => write!(f, "Rule"),
        }
    }
}

impl VolFractionPolicy {
    pub fn rule(f: impl Fn(LatticeIndex, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Rule(Arc::new(f))
    }

    pub fn from_table(table: NodeTable) -> Self {
        Self::Table(Arc::new(table))
    }

    /// The fraction at `node`; errors outside `[0, 1]`.
    pub fn fraction(&self, node: LatticeIndex, spot: f64) -> Result<f64> {
        let phi = match self {
            Self::Constant(c) => *c,
            Self::Table(t) => {
                if node.k >= t.steps() {
                    return Err(invalid(format!(
                        "policy table covers {} steps, node at step {}",
                        t.steps(),
                        node.k
                    )));
                }
                t.get(node.k, node.a, node.b)
            }
            Self::Rule(f) => f(node, spot),
        };
        if !(0.0..=1.0).contains(&phi) {
            return Err(invalid(format!(
                "vol fraction {phi} outside [0, 1] at step {}, node ({}, {})",
                node.k, node.a, node.b
            )));
        }
        Ok(phi)
    }
}

/// Value of the dual objective `E_Q[F_n] - (1/(nℓ)) Σ_k E_Q[G_p(φ_k)]` for
/// the martingale measure induced by `policy`. Never exceeds `C_n`.
///
/// Markovian payoffs run on the recombining lattice for any `n`; path
/// functionals enumerate all `3^n` paths and require `n <= max_n`.
pub fn dual_policy_bound(
    params: &ModelParams,
    payoff: &Payoff,
    policy: &VolFractionPolicy,
    max_n: usize,
) -> Result<f64> {
    params.validate()?;
    let p = params.p;
    let penalty_scale = 1.0 / params.risk_aversion();
    let geometry = Geometry::new(params);
    match payoff {
        Payoff::Markovian(m) => {
            let n = params.n;
            let mut next = build_layer(n, |a, b| m.value(geometry.spot(a, b)));
            for k in (0..n).rev() {
                let child = LatticeLayer { k: k + 1, values: next };
                next = try_build_layer(k, |a, b| {
                    let phi = policy.fraction(LatticeIndex { k, a, b }, geometry.spot(a, b))?;
                    let jump = 0.5 * (child.get(a + 1, b) + child.get(a, b + 1));
                    Ok(phi * jump + (1.0 - phi) * child.get(a, b)
                        - penalty_scale * entropy_penalty(phi, p)?)
                })?;
            }
            finite(next[0])
        }
        Payoff::PathDependent(_) => {
            if params.n > max_n {
                return Err(Error::SizeLimit {
                    n: params.n,
                    max_n,
                });
            }
            let tree = path_tree(params, payoff)?;
            let value = tree.reduce(|node, up, mid, down| {
                let phi = policy.fraction(node, geometry.spot(node.a, node.b))?;
                Ok(phi * 0.5 * (up + down) + (1.0 - phi) * mid
                    - penalty_scale * entropy_penalty(phi, p)?)
            })?;
            finite(value)
        }
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical {
            t: 0.0,
            y: f64::NAN,
            what: "non-finite dual value".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::primal_ce_value;
    use crate::model::payoff::MarkovianPayoff;

    #[test]
    fn symmetric_node_gives_reference_probability() {
        for p in [0.1, 0.5, 0.8] {
            assert!((optimal_fraction(p, 1.3, 1.3) - p).abs() < 1e-15);
        }
    }

    #[test]
    fn q_star_interior_for_large_spreads() {
        let q = optimal_fraction(0.5, 30.0, 0.0);
        assert!(q > 0.0 && q < 1.0);
        let q = optimal_fraction(0.5, -30.0, 0.0);
        assert!(q > 0.0 && q < 1.0);
    }

    #[test]
    fn q_star_maximises_one_step_dual() {
        let (p, m, d) = (0.3, 0.8, 0.1);
        let q = optimal_fraction(p, m, d);
        let obj = |q: f64| q * m + (1.0 - q) * d - entropy_penalty(q, p).unwrap();
        for i in 1..1000 {
            let x = i as f64 / 1000.0;
            assert!(obj(x) <= obj(q) + 1e-15);
        }
        let closed = (p * m.exp() + (1.0 - p) * d.exp()).ln();
        assert!((obj(q) - closed).abs() < 1e-14);
    }

    #[test]
    fn linear_payoff_dual() {
        for n in [1, 5, 40] {
            let params = ModelParams::new(0.6, 0.5, 2.0, 1.0, n).unwrap();
            let sol = dual_ce(&params, &MarkovianPayoff::affine(0.0, 1.0).into()).unwrap();
            assert!((sol.ce - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_square_dual_equals_primal() {
        let params = ModelParams::new(0.5, 0.5, 1.0, 1.0, 1).unwrap();
        let payoff = MarkovianPayoff::power(2.0).into();
        let dual = dual_ce(&params, &payoff).unwrap().ce;
        let primal = primal_ce_value(&params, &payoff).unwrap();
        assert!((dual - primal).abs() <= 1e-12 * primal.abs());
        assert!((dual - 1.132_792_239_318_898_3).abs() < 1e-12);
    }

    #[test]
    fn reference_policy_on_linear_payoff() {
        let params = ModelParams::new(0.25, 0.4, 1.5, 1.0, 12).unwrap();
        let payoff = MarkovianPayoff::affine(0.0, 1.0).into();
        let v = dual_policy_bound(&params, &payoff, &VolFractionPolicy::Constant(0.25), 9).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn optimal_policy_attains_primal() {
        let params = ModelParams::new(0.4, 0.7, 1.0, 0.8, 25).unwrap();
        let payoff: Payoff = MarkovianPayoff::power(2.0).into();
        let dual = dual_ce(&params, &payoff).unwrap();
        let policy = VolFractionPolicy::from_table(dual.qstar);
        let bound = dual_policy_bound(&params, &payoff, &policy, 9).unwrap();
        let primal = primal_ce_value(&params, &payoff).unwrap();
        assert!((bound - primal).abs() < 1e-10, "{bound} vs {primal}");
    }

    #[test]
    fn policy_outside_unit_interval_rejected() {
        let params = ModelParams::new(0.4, 0.7, 1.0, 0.8, 4).unwrap();
        let payoff: Payoff = MarkovianPayoff::power(2.0).into();
        for bad in [-0.1, 1.2, f64::NAN] {
            let r = dual_policy_bound(&params, &payoff, &VolFractionPolicy::Constant(bad), 9);
            assert!(matches!(r, Err(Error::InvalidInput(_))));
        }
    }

    #[test]
    fn path_policy_size_limit() {
        let params = ModelParams::new(0.4, 0.7, 1.0, 0.8, 10).unwrap();
        let payoff: Payoff = crate::model::payoff::PathFunctional::running_max().into();
        let r = dual_policy_bound(&params, &payoff, &VolFractionPolicy::Constant(0.4), 9);
        assert!(matches!(r, Err(Error::SizeLimit { .. })));
    }
}
