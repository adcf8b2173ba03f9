use std::sync::Arc;

use proptest::prelude::*;
use trihedge::hedge::{
    build_delta_strategy, evaluate_hedge, max_position_gap, simulate_pnl, HedgeStrategy,
};
use trihedge::lattice::{hedged_ce, primal_ce};
use trihedge::pde::{solve_hjb, LogGrid, PdeSolution};
use trihedge::{MarkovianPayoff, ModelParams, Payoff};

fn log_setup(n_max: usize) -> (ModelParams, Payoff, Arc<PdeSolution>) {
    let prm = ModelParams::new(0.5, 0.2, 1.0, 1.0, n_max).unwrap();
    let payoff: Payoff = MarkovianPayoff::log_affine(0.0, 1.0).into();
    let grid = LogGrid::covering_lattice(&prm, n_max, 0.01).unwrap();
    let sol = Arc::new(solve_hjb(&prm, &payoff, &grid).unwrap());
    (prm, payoff, sol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hedged_value_never_below_optimum(
        p in 0.1f64..0.9,
        sb in 0.1f64..0.8,
        ell in 0.2f64..3.0,
        n in 1usize..=40,
        shares in -2.0f64..3.0,
        tilt in -1.0f64..1.0,
        choice in 0u8..3,
    ) {
        let prm = ModelParams::new(p, sb, 1.0, ell, n).unwrap();
        let payoff: Payoff = match choice {
            0 => MarkovianPayoff::power(2.0),
            1 => MarkovianPayoff::smoothed_call(1.0, 0.05),
            _ => MarkovianPayoff::log_affine(0.0, 1.0),
        }
        .into();
        let strategies = [
            HedgeStrategy::constant(n, shares),
            HedgeStrategy::user(n, move |i, x| shares + tilt * (x - 1.0) + 0.01 * i as f64),
        ];
        for s in &strategies {
            let eval = evaluate_hedge(&prm, &payoff, s).unwrap();
            prop_assert!(eval.gap >= -1e-10, "{eval:?}");
        }
    }
}

#[test]
fn delta_converges_to_lattice_optimum() {
    let (_, payoff, sol) = log_setup(200);
    let mut gaps = Vec::new();
    for n in [50, 100, 200] {
        let prm = ModelParams::new(0.5, 0.2, 1.0, 1.0, n).unwrap();
        let optimal = HedgeStrategy::lattice_optimal(primal_ce(&prm, &payoff).unwrap().gamma);
        let delta = build_delta_strategy(sol.clone(), n).unwrap();
        gaps.push(max_position_gap(&prm, &delta, &optimal, n / 2).unwrap());
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn delta_gap_shrinks_with_n() {
    let (_, payoff, sol) = log_setup(200);
    let gaps: Vec<f64> = [25, 50, 100, 200]
        .iter()
        .map(|&n| {
            let prm = ModelParams::new(0.5, 0.2, 1.0, 1.0, n).unwrap();
            let s = build_delta_strategy(sol.clone(), n).unwrap();
            evaluate_hedge(&prm, &payoff, &s).unwrap().gap
        })
        .collect();
    assert!(gaps.iter().all(|&g| g > 0.0), "{gaps:?}");
    assert!(gaps.windows(2).all(|w| w[1] <= 1.1 * w[0]), "{gaps:?}");
}

#[test]
fn monte_carlo_exp_ce_brackets_exact_value() {
    let (prm, payoff, sol) = log_setup(100);
    let strategy = build_delta_strategy(sol, 100).unwrap();
    let exact = hedged_ce(&prm, &payoff, &strategy).unwrap();
    let report = simulate_pnl(&prm, &payoff, &strategy, 100_000, 2024).unwrap();
    let (lo, hi) = report.exp_ce_ci;
    assert!(lo <= exact && exact <= hi, "{exact} outside [{lo}, {hi}]");
    assert!(!report.heavy_tail);
    assert_eq!(report.histogram.counts.iter().sum::<u64>(), 100_000);
}

#[test]
fn monte_carlo_independent_of_thread_count() {
    let (prm, payoff, sol) = log_setup(50);
    let prm = prm.with_n(50).unwrap();
    let strategy = build_delta_strategy(sol, 50).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_pnl(&prm, &payoff, &strategy, 20_000, 5).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.to_json(), four.to_json());
    assert_eq!(one.histogram_csv(), four.histogram_csv());
}
