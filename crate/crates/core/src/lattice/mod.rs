//! Exact dynamic programming on the n-step trinomial tree.
//!
//! The tree recombines in the pair `(a, b)` of up- and down-move counts, so
//! layer `k` holds `(k+1)(k+2)/2` nodes with spot `s0 (1+u)^a (1-u)^b`.
//! Values are stored row-major in `a`, then `b`.
//!
//! All recursions run in the log domain on `U = nℓ · value`, the
//! unit-risk-aversion form of the problem, and report `U / (nℓ)`.

mod dual;
mod enumerate;
mod hedged;
mod primal;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

pub use dual::{dual_ce, dual_policy_bound, optimal_fraction, DualSolution, VolFractionPolicy};
pub use enumerate::{enumerate_ce, DEFAULT_MAX_ENUMERATION_N};
pub use hedged::hedged_ce;
pub use primal::{
    golden_section_min, inner_objective, numeric_node, primal_ce, primal_ce_numeric, primal_ce_value,
    InnerMinimum, PrimalSolution,
};

/// Position of a node in the recombining tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeIndex {
    pub k: usize,
    pub a: usize,
    pub b: usize,
}

/// Number of nodes in layer `k`.
#[inline]
pub fn layer_len(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

#[inline]
fn row_offset(k: usize, a: usize) -> usize {
    a * (k + 1) - a * a.saturating_sub(1) / 2
}

/// Flat index of `(a, b)` inside layer `k`.
#[inline]
pub fn node_offset(k: usize, a: usize, b: usize) -> usize {
    debug_assert!(a + b <= k);
    row_offset(k, a) + b
}

/// Spot prices of the lattice.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub s0: f64,
    pub u: f64,
    up_pow: Vec<f64>,
    down_pow: Vec<f64>,
}

impl Geometry {
    pub fn new(params: &ModelParams) -> Self {
        let u = params.jump();
        let n = params.n;
        let mut up_pow = Vec::with_capacity(n + 1);
        let mut down_pow = Vec::with_capacity(n + 1);
        for i in 0..=n {
            up_pow.push((1.0 + u).powi(i as i32));
            down_pow.push((1.0 - u).powi(i as i32));
        }
        Self {
            s0: params.s0,
            u,
            up_pow,
            down_pow,
        }
    }

    #[inline]
    pub fn spot(&self, a: usize, b: usize) -> f64 {
        self.s0 * self.up_pow[a] * self.down_pow[b]
    }
}

/// Values of one layer of the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeLayer {
    pub k: usize,
    pub values: Vec<f64>,
}

impl LatticeLayer {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[node_offset(self.k, a, b)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticeIndex, f64)> + '_ {
        let k = self.k;
        (0..=k)
            .flat_map(move |a| (0..=k - a).map(move |b| LatticeIndex { k, a, b }))
            .zip(self.values.iter().copied())
    }
}

/// Per-node table over layers `0..n-1`, e.g. optimal hedge ratios.
#[derive(Debug, Clone)]
pub struct NodeTable {
    pub geometry: Geometry,
    pub layers: Vec<LatticeLayer>,
}

impl NodeTable {
    pub fn steps(&self) -> usize {
        self.layers.len()
    }

    pub fn get(&self, k: usize, a: usize, b: usize) -> f64 {
        self.layers[k].get(a, b)
    }

    /// CSV with header `k,a,b,spot,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,a,b,spot,value\n");
        for layer in &self.layers {
            for (idx, v) in layer.iter() {
                let spot = self.geometry.spot(idx.a, idx.b);
                let _ = writeln!(out, "{},{},{},{},{}", idx.k, idx.a, idx.b, spot, v);
            }
        }
        out
    }
}

/// Default cap on the lattice depth (about 10⁸ node updates).
pub const DEFAULT_MAX_LATTICE_N: usize = 600;

const PAR_THRESHOLD: usize = 48;

/// Fills layer `k` by evaluating `f(a, b)` at every node. Rows run in
/// parallel for wide layers; the output order is fixed.
pub(crate) fn build_layer<T, F>(k: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    if k < PAR_THRESHOLD {
        let mut out = Vec::with_capacity(layer_len(k));
        for a in 0..=k {
            for b in 0..=k - a {
                out.push(f(a, b));
            }
        }
        out
    } else {
        let rows: Vec<Vec<T>> = (0..=k)
            .into_par_iter()
            .map(|a| (0..=k - a).map(|b| f(a, b)).collect())
            .collect();
        let mut out = Vec::with_capacity(layer_len(k));
        for row in rows {
            out.extend(row);
        }
        out
    }
}

/// Fallible variant of [`build_layer`]; reports the first error in node order.
pub(crate) fn try_build_layer<T, F>(k: usize, f: F) -> crate::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, usize) -> crate::Result<T> + Sync + Send,
{
    build_layer(k, f).into_iter().collect()
}

/// Terminal layer `nℓ · F(S_n)` for a Markovian payoff.
pub(crate) fn terminal_layer(
    params: &ModelParams,
    geometry: &Geometry,
    payoff: &crate::model::payoff::MarkovianPayoff,
) -> crate::Result<Vec<f64>> {
    let scale = params.risk_aversion();
    let n = params.n;
    let values = build_layer(n, |a, b| scale * payoff.value(geometry.spot(a, b)));
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        let (a, b) = decode(n, pos);
        return Err(crate::error::invalid(format!(
            "payoff {} is not finite at lattice spot {}",
            payoff.name(),
            geometry.spot(a, b)
        )));
    }
    Ok(values)
}

/// Inverse of [`node_offset`].
pub(crate) fn decode(k: usize, pos: usize) -> (usize, usize) {
    let mut a = 0;
    while a < k && row_offset(k, a + 1) <= pos {
        a += 1;
    }
    (a, pos - row_offset(k, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_dense_and_ordered() {
        for k in 0..12 {
            let mut expected = 0;
            for a in 0..=k {
                for b in 0..=k - a {
                    assert_eq!(node_offset(k, a, b), expected);
                    assert_eq!(decode(k, expected), (a, b));
                    expected += 1;
                }
            }
            assert_eq!(expected, layer_len(k));
        }
    }

    #[test]
    fn parallel_and_serial_layers_agree() {
        let k = 2 * PAR_THRESHOLD;
        let par = build_layer(k, |a, b| (a * 1000 + b) as f64);
        let mut serial = Vec::new();
        for a in 0..=k {
            for b in 0..=k - a {
                serial.push((a * 1000 + b) as f64);
            }
        }
        assert_eq!(par, serial);
    }

    #[test]
    fn spots_positive_and_recombining() {
        let params = ModelParams::new(0.5, 0.9, 2.0, 1.0, 1).unwrap();
        let g = Geometry::new(&params);
        assert!((g.spot(1, 0) - 2.0 * 1.9).abs() < 1e-15);
        assert!((g.spot(0, 1) - 2.0 * 0.1).abs() < 1e-15);
        let params = ModelParams::new(0.5, 0.3, 1.0, 1.0, 50).unwrap();
        let g = Geometry::new(&params);
        for a in 0..=50 {
            for b in 0..=50 - a {
                assert!(g.spot(a, b) > 0.0);
            }
        }
    }

    #[test]
    fn table_csv_header_and_rows() {
        let params = ModelParams::new(0.5, 0.2, 1.0, 1.0, 2).unwrap();
        let table = NodeTable {
            geometry: Geometry::new(&params),
            layers: vec![
                LatticeLayer { k: 0, values: vec![0.5] },
                LatticeLayer { k: 1, values: vec![1.0, 2.0, 3.0] },
            ],
        };
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,a,b,spot,value");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,0,0,1,0.5"));
        assert!(csv.ends_with('\n'));
    }
}
