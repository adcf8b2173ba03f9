//! Market parameters, payoffs, the entropy penalty and the HJB nonlinearity.

pub mod payoff;
pub mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use payoff::MarkovianPayoff;

/// Parameters of the scaled trinomial market.
///
/// Each period the spot is multiplied by `1 + u`, `1` or `1 - u` with
/// probabilities `p/2`, `1 - p`, `p/2`, where `u = sigma_bar / sqrt(n)`.
/// The investor has absolute risk aversion `n * ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub p: f64,
    pub sigma_bar: f64,
    pub s0: f64,
    pub ell: f64,
    pub n: usize,
}

impl ModelParams {
    pub fn new(p: f64, sigma_bar: f64, s0: f64, ell: f64, n: usize) -> Result<Self> {
        let params = Self {
            p,
            sigma_bar,
            s0,
            ell,
            n,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(invalid(format!("p must lie in (0, 1), got {}", self.p)));
        }
        if !(self.sigma_bar > 0.0 && self.sigma_bar.is_finite()) {
            return Err(invalid(format!(
                "sigma_bar must be positive, got {}",
                self.sigma_bar
            )));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(invalid(format!("s0 must be positive, got {}", self.s0)));
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(invalid(format!("ell must be positive, got {}", self.ell)));
        }
        if self.n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        // The down factor 1 - sigma_bar/sqrt(n) must stay positive.
        if (self.n as f64) <= self.sigma_bar * self.sigma_bar {
            return Err(invalid(format!(
                "n = {} must exceed sigma_bar^2 = {} so that lattice prices stay positive",
                self.n,
                self.sigma_bar * self.sigma_bar
            )));
        }
        Ok(())
    }

    /// Variance scale `Λ = σ̄²`.
    pub fn lambda(&self) -> f64 {
        self.sigma_bar * self.sigma_bar
    }

    /// Relative jump size `σ̄/√n`.
    pub fn jump(&self) -> f64 {
        self.sigma_bar / (self.n as f64).sqrt()
    }

    /// Absolute risk aversion of the n-step problem, `nℓ`.
    pub fn risk_aversion(&self) -> f64 {
        self.n as f64 * self.ell
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.p, self.sigma_bar, self.s0, self.ell, n)
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(p, self.sigma_bar, self.s0, self.ell, self.n)
    }

    pub fn with_sigma_bar(&self, sigma_bar: f64) -> Result<Self> {
        Self::new(self.p, sigma_bar, self.s0, self.ell, self.n)
    }

    pub fn with_ell(&self, ell: f64) -> Result<Self> {
        Self::new(self.p, self.sigma_bar, self.s0, ell, self.n)
    }

    pub fn with_s0(&self, s0: f64) -> Result<Self> {
        Self::new(self.p, self.sigma_bar, s0, self.ell, self.n)
    }
}

/// Relative entropy between Bernoulli(`x`) and Bernoulli(`p`), with `0·log 0 = 0`.
pub fn entropy_penalty(x: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p must lie in (0, 1), got {p}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("x must lie in [0, 1], got {x}")));
    }
    Ok(xlogy_ratio(x, p) + xlogy_ratio(1.0 - x, 1.0 - p))
}

#[inline]
fn xlogy_ratio(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / q).ln()
    }
}

/// `log(e^a + e^b)` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Logistic function, accurate in both tails.
#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// The HJB nonlinearity `K(w) = (1/ℓ) log((1-p) + p exp(ℓΛw/2))`.
///
/// `K` is smooth, strictly increasing and strictly convex with
/// `0 < K' < Λ/2` and `0 < K'' < ℓΛ²/16`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nonlinearity {
    p: f64,
    ell: f64,
    lambda: f64,
    log_p: f64,
    log_q: f64,
    log_odds: f64,
}

impl Nonlinearity {
    pub fn new(params: &ModelParams) -> Self {
        let p = params.p;
        Self {
            p,
            ell: params.ell,
            lambda: params.lambda(),
            log_p: p.ln(),
            log_q: (1.0 - p).ln(),
            log_odds: (p / (1.0 - p)).ln(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Evaluates `K(w)` as `log1p(p·expm1(z))/ℓ`, switching to the
    /// shifted-log form once `e^z` could overflow. Exact zero at `w = 0`.
    #[inline]
    pub fn value(&self, w: f64) -> f64 {
        let z = 0.5 * self.ell * self.lambda * w;
        if z < 30.0 {
            (self.p * z.exp_m1()).ln_1p() / self.ell
        } else {
            log_add_exp(self.log_q, self.log_p + z) / self.ell
        }
    }

    /// Returns `(K'(w), K''(w))`.
    #[inline]
    pub fn derivatives(&self, w: f64) -> (f64, f64) {
        let t = 0.5 * self.ell * self.lambda * w + self.log_odds;
        let s = logistic(t);
        let one_minus_s = logistic(-t);
        let first = 0.5 * self.lambda * s;
        let second = 0.25 * self.ell * self.lambda * self.lambda * s * one_minus_s;
        (first, second)
    }

    /// Direct evaluation of the defining formula; overflows for large `w`.
    pub fn naive_value(&self, w: f64) -> f64 {
        ((1.0 - self.p) + self.p * (0.5 * self.ell * self.lambda * w).exp()).ln() / self.ell
    }
}

/// `K(w)` for the given market.
pub fn nonlinearity_k(w: f64, params: &ModelParams) -> Result<f64> {
    params.validate()?;
    Ok(Nonlinearity::new(params).value(w))
}

/// `(K'(w), K''(w))` for the given market.
pub fn nonlinearity_k_derivatives(w: f64, params: &ModelParams) -> Result<(f64, f64)> {
    params.validate()?;
    Ok(Nonlinearity::new(params).derivatives(w))
}

const BS_TOL: f64 = 1e-9;
const GH_START: usize = 64;
const GH_MAX: usize = 128;
const KINK_HALF_RANGE: f64 = 12.0;

/// Driftless lognormal expectation `E[F(s0 exp(σW₁ - σ²/2))]`.
///
/// Smooth payoffs use Gauss-Hermite quadrature at 64 and 128 nodes and
/// accept when the two agree to 1e-9. Otherwise, and for payoffs with
/// declared kinks, the integral over `|z| < 12` is taken piecewise with
/// Gauss-Legendre panels split at the kinks, doubling the panel count.
pub fn bs_price(payoff: &MarkovianPayoff, sigma: f64, s0: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(invalid(format!("s0 must be positive, got {s0}")));
    }
    let drift = -0.5 * sigma * sigma;
    let integrand = |z: f64| payoff.value(s0 * (sigma * z + drift).exp());

    let kinks = payoff.kinks();
    if kinks.is_empty() {
        let coarse = quadrature::normal_expectation(GH_START, integrand);
        let fine = quadrature::normal_expectation(GH_MAX, integrand);
        if (fine - coarse).abs() <= BS_TOL * fine.abs().max(1.0) {
            return finite_or_err(fine);
        }
        log::debug!("Gauss-Hermite did not settle at {GH_MAX} nodes, using panels");
    }

    // Kinks in z-space: F is non-smooth where s0 exp(σz + drift) = kink.
    let mut breaks: Vec<f64> = kinks
        .iter()
        .filter(|&&k| k > 0.0)
        .map(|&k| ((k / s0).ln() - drift) / sigma)
        .filter(|z| z.abs() < KINK_HALF_RANGE)
        .collect();
    breaks.push(-KINK_HALF_RANGE);
    breaks.push(KINK_HALF_RANGE);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let piecewise = |panels: usize| -> f64 {
        breaks
            .windows(2)
            .map(|w| {
                quadrature::composite_legendre(w[0], w[1], panels, |z| integrand(z) * density(z))
            })
            .sum()
    };
    let mut panels = 8;
    let mut previous = piecewise(panels);
    while panels < 1024 {
        panels *= 2;
        let current = piecewise(panels);
        if (current - previous).abs() <= BS_TOL * current.abs().max(1.0) {
            return finite_or_err(current);
        }
        previous = current;
    }
    log::warn!("piecewise Gauss-Legendre did not reach {BS_TOL}");
    finite_or_err(previous)
}

fn finite_or_err(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Numerical {
            t: 1.0,
            y: f64::NAN,
            what: "non-finite lognormal expectation".into(),
        })
    }
}
