use super::{terminal_layer, try_build_layer, Geometry, LatticeIndex, LatticeLayer};
use crate::error::{invalid, Result};
use crate::hedge::HedgeStrategy;
use crate::model::payoff::Payoff;
use crate::model::{log_add_exp, ModelParams};

/// Exponential certainty equivalent of a fixed Markovian hedge,
/// `(1/(nℓ)) log E[exp(nℓ (F(S_n) - Σ γ_i ΔS_i))]`.
///
/// Because the position depends on the current node only, the expectation
/// factorises step by step and is evaluated exactly by backward induction.
/// The result is never below `C_n`.
pub fn hedged_ce(params: &ModelParams, payoff: &Payoff, strategy: &HedgeStrategy) -> Result<f64> {
    params.validate()?;
    let markovian = payoff.as_markovian()?;
    if strategy.steps() != params.n {
        return Err(invalid(format!(
            "strategy built for n = {}, market has n = {}",
            strategy.steps(),
            params.n
        )));
    }
    let geometry = Geometry::new(params);
    let scale = params.risk_aversion();
    let log_half_p = (0.5 * params.p).ln();
    let log_q = (1.0 - params.p).ln();
    let u = geometry.u;
    let mut next = terminal_layer(params, &geometry, markovian)?;
    for k in (0..params.n).rev() {
        let child = LatticeLayer { k: k + 1, values: next };
        next = try_build_layer(k, |a, b| {
            let spot = geometry.spot(a, b);
            let gamma = strategy.position(LatticeIndex { k, a, b }, spot)?;
            // ΔS = ±u·spot on a jump, zero when flat.
            let gain = scale * gamma * u * spot;
            let jumps = log_add_exp(child.get(a + 1, b) - gain, child.get(a, b + 1) + gain);
            Ok(log_add_exp(log_half_p + jumps, log_q + child.get(a, b)))
        })?;
    }
    Ok(next[0] / scale)
}
