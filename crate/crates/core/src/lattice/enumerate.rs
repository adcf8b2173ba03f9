//! Brute-force certainty equivalent on the full (non-recombining) tree.

use super::primal::node_value;
use super::LatticeIndex;
use crate::error::{invalid, Error, Result};
use crate::model::payoff::Payoff;
use crate::model::ModelParams;

/// Default cap on `n` for `3^n` path enumeration.
pub const DEFAULT_MAX_ENUMERATION_N: usize = 9;
const HARD_CAP: usize = 14;

/// Payoff values on all `3^n` paths.
///
/// Leaf `L` encodes the moves in base 3, first move most significant,
/// digit 0 = up, 1 = flat, 2 = down. The node reached after `k` moves is
/// `L / 3^(n-k)` and its children are `3i`, `3i + 1`, `3i + 2`.
pub(crate) struct PathTree {
    n: usize,
    leaves: Vec<f64>,
}

pub(crate) fn path_tree(params: &ModelParams, payoff: &Payoff) -> Result<PathTree> {
    let n = params.n;
    if n > HARD_CAP {
        return Err(Error::SizeLimit { n, max_n: HARD_CAP });
    }
    let u = params.jump();
    let factors = [1.0 + u, 1.0, 1.0 - u];
    let count = 3usize.pow(n as u32);
    let mut leaves = Vec::with_capacity(count);
    let mut path = vec![params.s0; n + 1];
    let mut digits = vec![0usize; n];
    for leaf in 0..count {
        let mut rest = leaf;
        for j in (0..n).rev() {
            digits[j] = rest % 3;
            rest /= 3;
        }
        for j in 0..n {
            path[j + 1] = path[j] * factors[digits[j]];
        }
        let v = payoff.value_on_path(&path);
        if !v.is_finite() {
            return Err(invalid(format!(
                "payoff {} is not finite on path {:?}",
                payoff.name(),
                path
            )));
        }
        leaves.push(v);
    }
    Ok(PathTree { n, leaves })
}

impl PathTree {
    /// Backward reduction from the leaves (optionally rescaled) to the root.
    pub(crate) fn reduce_scaled(
        &self,
        scale: f64,
        node: impl Fn(LatticeIndex, f64, f64, f64) -> Result<f64>,
    ) -> Result<f64> {
        let mut level: Vec<f64> = self.leaves.iter().map(|v| v * scale).collect();
        for k in (0..self.n).rev() {
            let width = 3usize.pow(k as u32);
            let mut parent = Vec::with_capacity(width);
            for i in 0..width {
                let (a, b) = move_counts(i, k);
                let idx = LatticeIndex { k, a, b };
                parent.push(node(idx, level[3 * i], level[3 * i + 1], level[3 * i + 2])?);
            }
            level = parent;
        }
        Ok(level[0])
    }

    pub(crate) fn reduce(
        &self,
        node: impl Fn(LatticeIndex, f64, f64, f64) -> Result<f64>,
    ) -> Result<f64> {
        self.reduce_scaled(1.0, node)
    }
}

/// Up and down counts of the prefix `i` of length `k`.
fn move_counts(mut i: usize, k: usize) -> (usize, usize) {
    let (mut a, mut b) = (0, 0);
    for _ in 0..k {
        match i % 3 {
            0 => a += 1,
            2 => b += 1,
            _ => {}
        }
        i /= 3;
    }
    (a, b)
}

/// Exact `C_n` by backward recursion over every path, for Markovian and
/// path-dependent payoffs alike. Requires `n <= max_n`.
pub fn enumerate_ce(params: &ModelParams, payoff: &Payoff, max_n: usize) -> Result<f64> {
    params.validate()?;
    if params.n > max_n {
        return Err(Error::SizeLimit {
            n: params.n,
            max_n,
        });
    }
    let tree = path_tree(params, payoff)?;
    let scale = params.risk_aversion();
    let log_p = params.p.ln();
    let log_q = (1.0 - params.p).ln();
    let root = tree.reduce_scaled(scale, |_, up, mid, down| {
        Ok(node_value(log_p, log_q, up, mid, down))
    })?;
    Ok(root / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::payoff::{MarkovianPayoff, PathFunctional};

    #[test]
    fn constant_payoff() {
        let params = ModelParams::new(0.3, 0.4, 1.0, 1.0, 6).unwrap();
        let v = enumerate_ce(&params, &MarkovianPayoff::constant(-0.4).into(), 9).unwrap();
        assert!((v + 0.4).abs() < 1e-12);
    }

    #[test]
    fn size_limit() {
        let params = ModelParams::new(0.3, 0.4, 1.0, 1.0, 10).unwrap();
        let r = enumerate_ce(&params, &MarkovianPayoff::constant(1.0).into(), 9);
        assert!(matches!(r, Err(Error::SizeLimit { n: 10, max_n: 9 })));
    }

    #[test]
    fn move_counts_decode_prefix() {
        // prefix digits (most significant first) 0,2,1 -> up, down, flat
        let i = 2 * 3 + 1;
        assert_eq!(move_counts(i, 3), (1, 1));
        assert_eq!(move_counts(0, 4), (4, 0));
    }

    #[test]
    fn path_average_with_flat_paths() {
        // p close to zero makes the flat path dominant; average of a constant path.
        let params = ModelParams::new(1e-9, 0.3, 1.2, 1.0, 4).unwrap();
        let v = enumerate_ce(&params, &PathFunctional::average().into(), 9).unwrap();
        assert!((v - 1.2).abs() < 1e-6);
    }
}
