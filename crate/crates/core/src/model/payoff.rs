//! Payoff catalogue.
//!
//! A payoff is either Markovian, `F(S_n)`, or a functional of the whole
//! discrete path `(S_0, ..., S_n)` read through its piecewise-linear
//! interpolation on `[0, 1]`. Every payoff carries the polynomial growth
//! constants `(C, r)` with `|F(y)| <= C (1 + sup_t (y_t^r + y_t^-r))`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Polynomial growth constants of a payoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Growth {
    #[serde(rename = "C")]
    pub c: f64,
    pub r: f64,
}

impl Growth {
    pub fn new(c: f64, r: f64) -> Self {
        Self { c, r }
    }

    /// Right-hand side of the growth bound for a path with extreme values
    /// `lo = min y`, `hi = max y`.
    pub fn bound(&self, lo: f64, hi: f64) -> f64 {
        let g = |y: f64| y.powf(self.r) + y.powf(-self.r);
        self.c * (1.0 + g(lo).max(g(hi)))
    }
}

/// Named terminal payoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalShape {
    /// `alpha + beta * ln x`
    LogAffine { alpha: f64, beta: f64 },
    /// `a + b * x`
    Affine { a: f64, b: f64 },
    /// `x^exponent`
    Power { exponent: f64 },
    /// `exp(rate * x)`; convex but outside the polynomial growth class.
    Exponential { rate: f64 },
    Call { strike: f64 },
    Put { strike: f64 },
    /// `width * ln(1 + exp((x - strike) / width))`
    SmoothedCall { strike: f64, width: f64 },
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PathFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Terminal {
    Named(TerminalShape),
    Custom {
        name: String,
        f: ScalarFn,
        convex: bool,
        kinks: Vec<f64>,
    },
}

/// A payoff `F(S_n)` depending on the terminal spot only.
#[derive(Clone)]
pub struct MarkovianPayoff {
    inner: Terminal,
    growth: Option<Growth>,
}

impl fmt::Debug for MarkovianPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.inner {
            Terminal::Named(shape) => write!(f, "{shape:?}"),
            Terminal::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl MarkovianPayoff {
    pub fn from_shape(shape: TerminalShape) -> Self {
        let growth = default_growth(&shape);
        Self {
            inner: Terminal::Named(shape),
            growth,
        }
    }

    pub fn log_affine(alpha: f64, beta: f64) -> Self {
        Self::from_shape(TerminalShape::LogAffine { alpha, beta })
    }

    pub fn affine(a: f64, b: f64) -> Self {
        Self::from_shape(TerminalShape::Affine { a, b })
    }

    pub fn constant(c: f64) -> Self {
        Self::affine(c, 0.0)
    }

    pub fn power(exponent: f64) -> Self {
        Self::from_shape(TerminalShape::Power { exponent })
    }

    pub fn exponential(rate: f64) -> Self {
        Self::from_shape(TerminalShape::Exponential { rate })
    }

    pub fn call(strike: f64) -> Self {
        Self::from_shape(TerminalShape::Call { strike })
    }

    pub fn put(strike: f64) -> Self {
        Self::from_shape(TerminalShape::Put { strike })
    }

    pub fn smoothed_call(strike: f64, width: f64) -> Self {
        Self::from_shape(TerminalShape::SmoothedCall { strike, width })
    }

    /// Wraps an arbitrary evaluator. Convexity defaults to `false` and no
    /// kinks are assumed; use [`Self::declare_convex`] and
    /// [`Self::declare_kinks`] to refine.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        growth: Option<Growth>,
    ) -> Self {
        Self {
            inner: Terminal::Custom {
                name: name.into(),
                f: Arc::new(f),
                convex: false,
                kinks: Vec::new(),
            },
            growth,
        }
    }

    pub fn declare_convex(mut self, convex: bool) -> Self {
        if let Terminal::Custom { convex: c, .. } = &mut self.inner {
            *c = convex;
        }
        self
    }

    pub fn declare_kinks(mut self, at: Vec<f64>) -> Self {
        if let Terminal::Custom { kinks, .. } = &mut self.inner {
            *kinks = at;
        }
        self
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn shape(&self) -> Option<TerminalShape> {
        match &self.inner {
            Terminal::Named(s) => Some(*s),
            Terminal::Custom { .. } => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.inner {
            Terminal::Named(s) => shape_name(s).to_string(),
            Terminal::Custom { name, .. } => name.clone(),
        }
    }

    pub fn growth(&self) -> Option<Growth> {
        self.growth
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match &self.inner {
            Terminal::Named(shape) => match *shape {
                TerminalShape::LogAffine { alpha, beta } => alpha + beta * x.ln(),
                TerminalShape::Affine { a, b } => a + b * x,
                TerminalShape::Power { exponent } => x.powf(exponent),
                TerminalShape::Exponential { rate } => (rate * x).exp(),
                TerminalShape::Call { strike } => (x - strike).max(0.0),
                TerminalShape::Put { strike } => (strike - x).max(0.0),
                TerminalShape::SmoothedCall { strike, width } => {
                    width * softplus((x - strike) / width)
                }
            },
            Terminal::Custom { f, .. } => f(x),
        }
    }

    /// `w₀ = f'' - f'` for `f(y) = F(e^y)`, i.e. `x² F''(x)`.
    ///
    /// Analytic for the named shapes (zero away from the strike for the
    /// vanilla call and put); a log-space central difference otherwise.
    pub fn log_curvature(&self, x: f64) -> f64 {
        match &self.inner {
            Terminal::Named(shape) => match *shape {
                TerminalShape::LogAffine { beta, .. } => -beta,
                TerminalShape::Affine { .. } => 0.0,
                TerminalShape::Power { exponent } => exponent * (exponent - 1.0) * x.powf(exponent),
                TerminalShape::Exponential { rate } => rate * rate * x * x * (rate * x).exp(),
                TerminalShape::Call { .. } | TerminalShape::Put { .. } => 0.0,
                TerminalShape::SmoothedCall { strike, width } => {
                    let s = logistic((x - strike) / width);
                    x * x * s * (1.0 - s) / width
                }
            },
            Terminal::Custom { f, .. } => {
                let h = 1e-4;
                let y = x.ln();
                let (fp, f0, fm) = (f((y + h).exp()), f(x), f((y - h).exp()));
                (fp - 2.0 * f0 + fm) / (h * h) - (fp - fm) / (2.0 * h)
            }
        }
    }

    pub fn is_convex(&self) -> bool {
        match &self.inner {
            Terminal::Named(shape) => match *shape {
                TerminalShape::LogAffine { beta, .. } => beta <= 0.0,
                TerminalShape::Power { exponent } => exponent >= 1.0 || exponent <= 0.0,
                TerminalShape::Affine { .. }
                | TerminalShape::Exponential { .. }
                | TerminalShape::Call { .. }
                | TerminalShape::Put { .. }
                | TerminalShape::SmoothedCall { .. } => true,
            },
            Terminal::Custom { convex, .. } => *convex,
        }
    }

    /// Spots where `F` fails to be twice differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.inner {
            Terminal::Named(TerminalShape::Call { strike })
            | Terminal::Named(TerminalShape::Put { strike }) => vec![*strike],
            Terminal::Named(_) => Vec::new(),
            Terminal::Custom { kinks, .. } => kinks.clone(),
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.kinks().is_empty()
    }

    /// Serializable description, available for the named catalogue only.
    pub fn spec(&self) -> Option<PayoffSpec> {
        let shape = self.shape()?;
        let pairs: Vec<(&str, f64)> = match shape {
            TerminalShape::LogAffine { alpha, beta } => vec![("alpha", alpha), ("beta", beta)],
            TerminalShape::Affine { a, b } => vec![("a", a), ("b", b)],
            TerminalShape::Power { exponent } => vec![("exponent", exponent)],
            TerminalShape::Exponential { rate } => vec![("rate", rate)],
            TerminalShape::Call { strike } | TerminalShape::Put { strike } => {
                vec![("strike", strike)]
            }
            TerminalShape::SmoothedCall { strike, width } => {
                vec![("strike", strike), ("width", width)]
            }
        };
        let params: BTreeMap<String, f64> =
            pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Some(PayoffSpec {
            kind: PayoffKind::Markovian,
            name: shape_name(&shape).to_string(),
            params,
            growth: self.growth,
        })
    }
}

fn shape_name(shape: &TerminalShape) -> &'static str {
    match shape {
        TerminalShape::LogAffine { .. } => "log_affine",
        TerminalShape::Affine { .. } => "affine",
        TerminalShape::Power { .. } => "power",
        TerminalShape::Exponential { .. } => "exponential",
        TerminalShape::Call { .. } => "call",
        TerminalShape::Put { .. } => "put",
        TerminalShape::SmoothedCall { .. } => "smoothed_call",
    }
}

fn default_growth(shape: &TerminalShape) -> Option<Growth> {
    match *shape {
        // |ln x| <= x + 1/x
        TerminalShape::LogAffine { alpha, beta } => {
            Some(Growth::new(alpha.abs().max(beta.abs()).max(1e-12), 1.0))
        }
        TerminalShape::Affine { a, b } => Some(Growth::new(a.abs().max(b.abs()).max(1e-12), 1.0)),
        TerminalShape::Power { exponent } => {
            Some(Growth::new(1.0, if exponent == 0.0 { 1.0 } else { exponent.abs() }))
        }
        TerminalShape::Exponential { rate } => {
            if rate == 0.0 {
                Some(Growth::new(1.0, 1.0))
            } else {
                None
            }
        }
        TerminalShape::Call { strike } => Some(Growth::new(strike.abs().max(1.0), 1.0)),
        TerminalShape::Put { strike } => Some(Growth::new(strike.abs().max(1e-12), 1.0)),
        // softplus(z) <= max(z, 0) + ln 2
        TerminalShape::SmoothedCall { strike, width } => {
            Some(Growth::new(strike.abs().max(1.0) + width.abs(), 1.0))
        }
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Piecewise-linear interpolation of node values `z_0..z_n` on `[0, 1]`,
/// with node `k` placed at time `k/n`.
pub fn interpolate(z: &[f64], t: f64) -> f64 {
    let n = z.len() - 1;
    if n == 0 {
        return z[0];
    }
    let nt = (n as f64) * t.clamp(0.0, 1.0);
    let k = (nt.floor() as usize).min(n - 1);
    let frac = nt - k as f64;
    (1.0 - frac) * z[k] + frac * z[k + 1]
}

#[derive(Clone)]
enum PathShape {
    /// Supremum of the interpolated path (attained at a node).
    RunningMax,
    /// Time integral of the interpolated path over `[0, 1]`.
    Average,
    Custom {
        name: String,
        f: PathFn,
        convex: bool,
    },
}

/// A functional of the interpolated price path.
#[derive(Clone)]
pub struct PathFunctional {
    shape: PathShape,
    growth: Option<Growth>,
}

impl fmt::Debug for PathFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PathFunctional({})", self.name())
    }
}

impl PathFunctional {
    pub fn running_max() -> Self {
        Self {
            shape: PathShape::RunningMax,
            growth: Some(Growth::new(1.0, 1.0)),
        }
    }

    pub fn average() -> Self {
        Self {
            shape: PathShape::Average,
            growth: Some(Growth::new(1.0, 1.0)),
        }
    }

    /// Wraps a functional of the node values `(z_0, ..., z_n)`.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        growth: Option<Growth>,
        convex: bool,
    ) -> Self {
        Self {
            shape: PathShape::Custom {
                name: name.into(),
                f: Arc::new(f),
                convex,
            },
            growth,
        }
    }

    pub fn name(&self) -> String {
        match &self.shape {
            PathShape::RunningMax => "running_max".into(),
            PathShape::Average => "average".into(),
            PathShape::Custom { name, .. } => name.clone(),
        }
    }

    pub fn growth(&self) -> Option<Growth> {
        self.growth
    }

    pub fn is_convex(&self) -> bool {
        match &self.shape {
            PathShape::RunningMax | PathShape::Average => true,
            PathShape::Custom { convex, .. } => *convex,
        }
    }

    pub fn value(&self, nodes: &[f64]) -> f64 {
        match &self.shape {
            PathShape::RunningMax => nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            PathShape::Average => {
                let n = nodes.len() - 1;
                if n == 0 {
                    return nodes[0];
                }
                let inner: f64 = nodes[1..n].iter().sum();
                (0.5 * (nodes[0] + nodes[n]) + inner) / n as f64
            }
            PathShape::Custom { f, .. } => f(nodes),
        }
    }

    pub fn spec(&self) -> Option<PayoffSpec> {
        let name = match self.shape {
            PathShape::Custom { .. } => return None,
            _ => self.name(),
        };
        Some(PayoffSpec {
            kind: PayoffKind::PathDependent,
            name,
            params: BTreeMap::new(),
            growth: self.growth,
        })
    }
}

/// Either kind of payoff.
#[derive(Debug, Clone)]
pub enum Payoff {
    Markovian(MarkovianPayoff),
    PathDependent(PathFunctional),
}

impl From<MarkovianPayoff> for Payoff {
    fn from(p: MarkovianPayoff) -> Self {
        Payoff::Markovian(p)
    }
}

impl From<PathFunctional> for Payoff {
    fn from(p: PathFunctional) -> Self {
        Payoff::PathDependent(p)
    }
}

impl Payoff {
    pub fn as_markovian(&self) -> Result<&MarkovianPayoff> {
        match self {
            Payoff::Markovian(m) => Ok(m),
            Payoff::PathDependent(p) => Err(Error::Unsupported(format!(
                "operation requires a Markovian payoff, got path functional {}",
                p.name()
            ))),
        }
    }

    pub fn is_markovian(&self) -> bool {
        matches!(self, Payoff::Markovian(_))
    }

    pub fn name(&self) -> String {
        match self {
            Payoff::Markovian(m) => m.name(),
            Payoff::PathDependent(p) => p.name(),
        }
    }

    pub fn growth(&self) -> Option<Growth> {
        match self {
            Payoff::Markovian(m) => m.growth(),
            Payoff::PathDependent(p) => p.growth(),
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            Payoff::Markovian(m) => m.is_convex(),
            Payoff::PathDependent(p) => p.is_convex(),
        }
    }

    /// Evaluates on the node values `(S_0, ..., S_n)` of a discrete path.
    pub fn value_on_path(&self, nodes: &[f64]) -> f64 {
        match self {
            Payoff::Markovian(m) => m.value(nodes[nodes.len() - 1]),
            Payoff::PathDependent(p) => p.value(nodes),
        }
    }

    pub fn spec(&self) -> Option<PayoffSpec> {
        match self {
            Payoff::Markovian(m) => m.spec(),
            Payoff::PathDependent(p) => p.spec(),
        }
    }

    /// Checks finiteness and the declared growth bound on deterministic
    /// sample paths with values spread over `[1e-3, 1e3]`.
    pub fn check_growth(&self, samples: usize) -> Result<()> {
        let growth = self
            .growth()
            .ok_or_else(|| invalid(format!("payoff {} declares no growth bound", self.name())))?;
        let samples = samples.max(2);
        for i in 0..samples {
            let y_lo = -3.0 * std::f64::consts::LN_10
                + 6.0 * std::f64::consts::LN_10 * i as f64 / (samples - 1) as f64;
            for j in [0usize, 1, 2] {
                // constant, rising and oscillating paths of 9 nodes
                let nodes: Vec<f64> = (0..9)
                    .map(|k| {
                        let shift = match j {
                            0 => 0.0,
                            1 => 0.25 * k as f64,
                            _ => 0.5 * ((k % 2) as f64),
                        };
                        (y_lo + shift).clamp(-7.0, 7.0).exp()
                    })
                    .collect();
                let v = self.value_on_path(&nodes);
                if !v.is_finite() {
                    return Err(invalid(format!(
                        "payoff {} is not finite on a positive path",
                        self.name()
                    )));
                }
                let lo = nodes.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if v.abs() > growth.bound(lo, hi) * (1.0 + 1e-12) {
                    return Err(invalid(format!(
                        "payoff {} violates growth bound (C = {}, r = {}) on a path in [{lo}, {hi}]",
                        self.name(),
                        growth.c,
                        growth.r
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    Markovian,
    PathDependent,
}

/// Structured record for a catalogue payoff:
/// `{kind, name, params, growth: {C, r}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<Growth>,
}

impl PayoffSpec {
    pub fn build(&self) -> Result<Payoff> {
        let mut reader = ParamReader::new(&self.name, &self.params);
        let payoff: Payoff = match self.kind {
            PayoffKind::Markovian => {
                let shape = match self.name.as_str() {
                    "log_affine" => TerminalShape::LogAffine {
                        alpha: reader.optional("alpha", 0.0),
                        beta: reader.optional("beta", 1.0),
                    },
                    "affine" => TerminalShape::Affine {
                        a: reader.optional("a", 0.0),
                        b: reader.optional("b", 1.0),
                    },
                    "power" => TerminalShape::Power {
                        exponent: reader.required("exponent")?,
                    },
                    "exponential" => TerminalShape::Exponential {
                        rate: reader.optional("rate", 1.0),
                    },
                    "call" => TerminalShape::Call {
                        strike: reader.positive("strike")?,
                    },
                    "put" => TerminalShape::Put {
                        strike: reader.positive("strike")?,
                    },
                    "smoothed_call" => TerminalShape::SmoothedCall {
                        strike: reader.positive("strike")?,
                        width: reader.positive("width")?,
                    },
                    other => {
                        return Err(invalid(format!("unknown Markovian payoff '{other}'")));
                    }
                };
                let mut m = MarkovianPayoff::from_shape(shape);
                if let Some(g) = self.growth {
                    m = m.with_growth(g);
                }
                Payoff::Markovian(m)
            }
            PayoffKind::PathDependent => {
                let mut f = match self.name.as_str() {
                    "running_max" => PathFunctional::running_max(),
                    "average" => PathFunctional::average(),
                    other => {
                        return Err(invalid(format!("unknown path functional '{other}'")));
                    }
                };
                if let Some(g) = self.growth {
                    f.growth = Some(g);
                }
                Payoff::PathDependent(f)
            }
        };
        reader.finish()?;
        if let Some(g) = payoff.growth() {
            if !(g.c > 0.0 && g.r > 0.0) {
                return Err(invalid(format!(
                    "growth constants must be positive, got C = {}, r = {}",
                    g.c, g.r
                )));
            }
        }
        Ok(payoff)
    }
}

struct ParamReader<'a> {
    payoff: &'a str,
    params: &'a BTreeMap<String, f64>,
    used: Vec<&'static str>,
}

impl<'a> ParamReader<'a> {
    fn new(payoff: &'a str, params: &'a BTreeMap<String, f64>) -> Self {
        Self {
            payoff,
            params,
            used: Vec::new(),
        }
    }

    fn required(&mut self, key: &'static str) -> Result<f64> {
        self.used.push(key);
        let v = *self.params.get(key).ok_or_else(|| {
            invalid(format!("payoff '{}' requires parameter '{key}'", self.payoff))
        })?;
        if !v.is_finite() {
            return Err(invalid(format!("parameter '{key}' must be finite")));
        }
        Ok(v)
    }

    fn positive(&mut self, key: &'static str) -> Result<f64> {
        let v = self.required(key)?;
        if v <= 0.0 {
            return Err(invalid(format!("parameter '{key}' must be positive, got {v}")));
        }
        Ok(v)
    }

    fn optional(&mut self, key: &'static str, default: f64) -> f64 {
        self.used.push(key);
        self.params.get(key).copied().unwrap_or(default)
    }

    fn finish(self) -> Result<()> {
        for key in self.params.keys() {
            if !self.used.contains(&key.as_str()) {
                return Err(invalid(format!(
                    "unknown parameter '{key}' for payoff '{}'",
                    self.payoff
                )));
            }
        }
        for (key, v) in self.params {
            if !v.is_finite() {
                return Err(invalid(format!("parameter '{key}' must be finite")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_convention() {
        let z = [1.0, 3.0, 2.0, 5.0];
        assert_eq!(interpolate(&z, 0.0), 1.0);
        assert_eq!(interpolate(&z, 1.0), 5.0);
        assert!((interpolate(&z, 1.0 / 3.0) - 3.0).abs() < 1e-15);
        assert!((interpolate(&z, 0.5) - 2.5).abs() < 1e-15);
        assert!((interpolate(&z, 1.0 / 6.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn average_is_integral_of_interpolation() {
        let z = [1.0, 1.2, 0.9, 1.1, 1.3];
        let avg = PathFunctional::average().value(&z);
        let m = 4000;
        let midpoint: f64 =
            (0..m).map(|i| interpolate(&z, (i as f64 + 0.5) / m as f64)).sum::<f64>() / m as f64;
        assert!((avg - midpoint).abs() < 1e-12);
    }

    #[test]
    fn running_max_of_interpolated_path() {
        let z = [1.0, 1.2, 0.9, 1.1];
        assert_eq!(PathFunctional::running_max().value(&z), 1.2);
    }

    #[test]
    fn log_curvature_matches_finite_difference() {
        let payoffs = [
            MarkovianPayoff::log_affine(0.3, 1.7),
            MarkovianPayoff::power(2.0),
            MarkovianPayoff::power(-0.5),
            MarkovianPayoff::exponential(0.8),
            MarkovianPayoff::smoothed_call(1.0, 0.1),
        ];
        for payoff in &payoffs {
            let fd = MarkovianPayoff::custom("fd", {
                let p = payoff.clone();
                move |x| p.value(x)
            }, None);
            for x in [0.5, 0.9, 1.0, 1.3, 2.0] {
                let a = payoff.log_curvature(x);
                let b = fd.log_curvature(x);
                assert!((a - b).abs() < 1e-5 * a.abs().max(1.0), "{payoff:?} at {x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn spec_round_trip() {
        let payoffs: Vec<Payoff> = vec![
            MarkovianPayoff::log_affine(0.1, 2.0).into(),
            MarkovianPayoff::smoothed_call(1.1, 0.05).into(),
            PathFunctional::running_max().into(),
        ];
        for p in payoffs {
            let spec = p.spec().unwrap();
            let json = serde_json::to_string(&spec).unwrap();
            let back: PayoffSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, spec);
            let rebuilt = back.build().unwrap();
            assert_eq!(rebuilt.value_on_path(&[1.0, 1.4]), p.value_on_path(&[1.0, 1.4]));
        }
    }

    #[test]
    fn spec_field_names() {
        let json = r#"{"kind":"markovian","name":"call","params":{"strike":1.0},"growth":{"C":2.0,"r":1.0}}"#;
        let spec: PayoffSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.growth, Some(Growth::new(2.0, 1.0)));
        assert!(spec.build().is_ok());
    }

    #[test]
    fn spec_rejects_unknowns() {
        let bad_param = r#"{"kind":"markovian","name":"call","params":{"strike":1.0,"k":2}}"#;
        let spec: PayoffSpec = serde_json::from_str(bad_param).unwrap();
        assert!(spec.build().is_err());
        let bad_name = r#"{"kind":"markovian","name":"digital","params":{}}"#;
        let spec: PayoffSpec = serde_json::from_str(bad_name).unwrap();
        assert!(spec.build().is_err());
        let missing = r#"{"kind":"markovian","name":"power","params":{}}"#;
        let spec: PayoffSpec = serde_json::from_str(missing).unwrap();
        assert!(spec.build().is_err());
        let bad_field = r#"{"kind":"markovian","name":"power","params":{},"extra":1}"#;
        assert!(serde_json::from_str::<PayoffSpec>(bad_field).is_err());
    }

    #[test]
    fn catalogue_growth_bounds_hold() {
        let payoffs: Vec<Payoff> = vec![
            MarkovianPayoff::log_affine(0.5, -2.0).into(),
            MarkovianPayoff::affine(3.0, 1.0).into(),
            MarkovianPayoff::power(2.0).into(),
            MarkovianPayoff::power(-1.5).into(),
            MarkovianPayoff::call(1.2).into(),
            MarkovianPayoff::put(0.8).into(),
            MarkovianPayoff::smoothed_call(1.0, 0.1).into(),
            PathFunctional::running_max().into(),
            PathFunctional::average().into(),
        ];
        for p in &payoffs {
            p.check_growth(200).unwrap_or_else(|e| panic!("{}: {e}", p.name()));
        }
        let e: Payoff = MarkovianPayoff::exponential(1.0).into();
        assert!(e.check_growth(10).is_err());
        let understated: Payoff = MarkovianPayoff::power(2.0).with_growth(Growth::new(1.0, 1.0)).into();
        assert!(understated.check_growth(100).is_err());
    }

    #[test]
    fn path_payoff_is_not_markovian() {
        let p: Payoff = PathFunctional::average().into();
        assert!(matches!(p.as_markovian(), Err(Error::Unsupported(_))));
    }
}
