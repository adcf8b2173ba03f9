use proptest::prelude::*;
use trihedge::lattice::{
    dual_ce, dual_policy_bound, enumerate_ce, inner_objective, primal_ce, primal_ce_value,
    VolFractionPolicy,
};
use trihedge::model::payoff::PathFunctional;
use trihedge::{MarkovianPayoff, ModelParams, Payoff};

fn payoff(choice: u8) -> Payoff {
    match choice % 3 {
        0 => MarkovianPayoff::log_affine(0.0, 1.0),
        1 => MarkovianPayoff::power(2.0),
        _ => MarkovianPayoff::smoothed_call(1.0, 0.05),
    }
    .into()
}

fn market() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.05f64..0.95, 0.1f64..1.0, 0.5f64..2.0, 0.2f64..3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn primal_equals_dual((p, sb, s0, ell) in market(), n in 1usize..=50, choice in 0u8..3) {
        let params = ModelParams::new(p, sb, s0, ell, n).unwrap();
        let f = payoff(choice);
        let primal = primal_ce_value(&params, &f).unwrap();
        let dual = dual_ce(&params, &f).unwrap().ce;
        prop_assert!((primal - dual).abs() <= 1e-12 * primal.abs().max(1.0), "{primal} vs {dual}");
    }

    #[test]
    fn primal_equals_enumeration((p, sb, s0, ell) in market(), n in 1usize..=7, choice in 0u8..3) {
        let params = ModelParams::new(p, sb, s0, ell, n).unwrap();
        let f = payoff(choice);
        let primal = primal_ce_value(&params, &f).unwrap();
        let brute = enumerate_ce(&params, &f, 8).unwrap();
        prop_assert!((primal - brute).abs() <= 1e-12 * primal.abs().max(1.0), "{primal} vs {brute}");
    }

    #[test]
    fn replication_of_affine_payoffs(
        (p, sb, s0, ell) in market(),
        n in 1usize..=60,
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let params = ModelParams::new(p, sb, s0, ell, n).unwrap();
        let ce = primal_ce_value(&params, &MarkovianPayoff::affine(a, b).into()).unwrap();
        prop_assert!((ce - (a + b * s0)).abs() <= 1e-11 * (1.0 + (a + b * s0).abs()));
    }

    #[test]
    fn weak_duality_for_random_policies(
        (p, sb, s0, ell) in market(),
        n in 1usize..=30,
        choice in 0u8..3,
        base in 0.0f64..=1.0,
        tilt in -1.0f64..1.0,
    ) {
        let params = ModelParams::new(p, sb, s0, ell, n).unwrap();
        let f = payoff(choice);
        let policy = VolFractionPolicy::rule(move |node, spot| {
            (base + tilt * (spot.ln() + 0.1 * node.k as f64).sin()).clamp(0.0, 1.0)
        });
        let bound = dual_policy_bound(&params, &f, &policy, 9).unwrap();
        let ce = primal_ce_value(&params, &f).unwrap();
        prop_assert!(bound <= ce + 1e-10, "{bound} > {ce}");
    }

    #[test]
    fn inner_minimiser_closed_form(
        up in -1.0f64..1.0,
        mid in -1.0f64..1.0,
        down in -1.0f64..1.0,
        p in 0.2f64..0.8,
        sigma_z in 0.5f64..2.0,
    ) {
        // The objective in the share scale a, with c = a σ̄ z.
        let objective = |a: f64| inner_objective(p, up, mid, down, a * sigma_z);
        let found = trihedge::lattice::golden_section_min(objective, -50.0, 50.0, 1e-10).unwrap();
        let closed = ((p * (0.5 * (up + down)).exp()) + (1.0 - p) * mid.exp()).ln();
        let a_star = (up - down) / (2.0 * sigma_z);
        prop_assert!((found.value - closed).abs() <= 1e-9);
        prop_assert!((found.argmin - a_star).abs() <= 1e-6, "{} vs {a_star}", found.argmin);
    }

    #[test]
    fn convex_in_initial_spot(p in 0.1f64..0.9, sb in 0.1f64..1.0, n in 1usize..=20, choice in 1u8..3) {
        let f = payoff(choice);
        let ce = |s0: f64| primal_ce_value(&ModelParams::new(p, sb, s0, 1.0, n).unwrap(), &f).unwrap();
        for s0 in [0.6, 0.8, 1.0, 1.2] {
            let h = 0.1;
            prop_assert!(ce(s0 - h) + ce(s0 + h) - 2.0 * ce(s0) >= -1e-12);
        }
    }
}

#[test]
fn monotone_in_p_and_sigma_for_convex_payoffs() {
    let payoffs: Vec<Payoff> = vec![
        MarkovianPayoff::power(2.0).into(),
        MarkovianPayoff::call(1.0).into(),
        MarkovianPayoff::exponential(1.0).into(),
    ];
    let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
    let vols = [0.1, 0.3, 0.5, 0.7, 0.9];
    for f in &payoffs {
        for n in [1, 4, 16] {
            for &sb in &vols {
                let along_p: Vec<f64> = grid
                    .iter()
                    .map(|&p| primal_ce_value(&ModelParams::new(p, sb, 1.0, 1.0, n).unwrap(), f).unwrap())
                    .collect();
                assert!(along_p.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{along_p:?}");
            }
            for &p in &grid {
                let along_sigma: Vec<f64> = vols
                    .iter()
                    .map(|&sb| primal_ce_value(&ModelParams::new(p, sb, 1.0, 1.0, n).unwrap(), f).unwrap())
                    .collect();
                assert!(along_sigma.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{along_sigma:?}");
            }
        }
    }
}

#[test]
fn optimal_measure_attains_the_value() {
    let params = ModelParams::new(0.35, 0.6, 1.1, 2.0, 40).unwrap();
    let f = payoff(2);
    let dual = dual_ce(&params, &f).unwrap();
    let ce = primal_ce(&params, &f).unwrap().ce;
    let bound = dual_policy_bound(&params, &f, &VolFractionPolicy::from_table(dual.qstar), 9).unwrap();
    assert!((bound - ce).abs() <= 1e-10);
}

#[test]
fn path_functionals_bounded_by_enumeration() {
    let params = ModelParams::new(0.5, 0.4, 1.0, 1.0, 6).unwrap();
    for f in [PathFunctional::running_max(), PathFunctional::average()] {
        let f: Payoff = f.into();
        let ce = enumerate_ce(&params, &f, 8).unwrap();
        for phi in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let bound = dual_policy_bound(&params, &f, &VolFractionPolicy::Constant(phi), 8).unwrap();
            assert!(bound <= ce + 1e-10, "{bound} > {ce}");
        }
        // Markovian-only routines refuse path functionals.
        assert!(primal_ce_value(&params, &f).is_err());
    }
}
