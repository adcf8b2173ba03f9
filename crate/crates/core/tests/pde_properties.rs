use proptest::prelude::*;
use trihedge::model::bs_price;
use trihedge::pde::{
    check_solution_properties, closed_form_log_payoff, default_tolerance, solve_hjb, LogGrid,
};
use trihedge::{MarkovianPayoff, ModelParams, Payoff};

fn params(p: f64, sb: f64, ell: f64) -> ModelParams {
    ModelParams::new(p, sb, 1.0, ell, 100).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn comparison_and_shift(
        p in 0.1f64..0.9,
        sb in 0.15f64..0.5,
        ell in 0.2f64..3.0,
        strike in 0.8f64..1.2,
        c in -1.0f64..1.0,
    ) {
        let prm = params(p, sb, ell);
        let grid = LogGrid::default_for(&prm, 0.02).unwrap();
        // All three go through the same finite-difference boundary data.
        let base = MarkovianPayoff::smoothed_call(strike, 0.05);
        let (b0, b1, b2) = (base.clone(), base.clone(), base);
        let f = MarkovianPayoff::custom("base", move |x| b0.value(x), None);
        let g = MarkovianPayoff::custom("above", move |x| b1.value(x) + 0.1 * (x - 1.0).powi(2), None);
        let shifted = MarkovianPayoff::custom("shifted", move |x| b2.value(x) + c, None);
        let uf = solve_hjb(&prm, &f.into(), &grid).unwrap();
        let ug = solve_hjb(&prm, &g.into(), &grid).unwrap();
        let us = solve_hjb(&prm, &shifted.into(), &grid).unwrap();
        // Boundary curvature carries rounding of order eps/h², so the shift
        // is checked on the central half of the domain.
        let centre = (grid.m / 4)..(3 * grid.m / 4);
        for j in [0, grid.t_steps / 3, grid.t_steps] {
            for i in 0..grid.m {
                prop_assert!(uf.u_bar(j, i) <= ug.u_bar(j, i) + 1e-12);
            }
            for i in centre.clone() {
                prop_assert!((us.u_bar(j, i) - uf.u_bar(j, i) - c).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn log_payoff_reproduced_on_every_grid() {
    for (p, sb, ell) in [(0.5, 0.2, 1.0), (0.2, 0.6, 3.0), (0.9, 0.3, 0.1)] {
        let prm = params(p, sb, ell);
        let target = closed_form_log_payoff(0.3, 1.5, 0.0, 1.0, &prm).unwrap();
        for dy in [0.04, 0.02, 0.01, 0.005] {
            let grid = LogGrid::default_for(&prm, dy).unwrap();
            let sol = solve_hjb(&prm, &MarkovianPayoff::log_affine(0.3, 1.5).into(), &grid).unwrap();
            let err = (sol.value_at_origin().unwrap() - target).abs();
            assert!(err <= 5.0 * dy * dy + 5.0 * grid.dt(), "dy {dy}: {err}");
            assert!(err < 1e-12, "fitted scheme is exact on log payoffs: {err}");
        }
    }
}

#[test]
fn grid_refinement_order_on_smooth_call() {
    let prm = params(0.5, 0.3, 2.0);
    let payoff: Payoff = MarkovianPayoff::smoothed_call(1.0, 0.1).into();
    let value = |dy: f64| {
        let grid = LogGrid::default_for(&prm, dy).unwrap();
        solve_hjb(&prm, &payoff, &grid).unwrap().value_at_origin().unwrap()
    };
    let reference = value(0.0025);
    let errors: Vec<f64> = [0.04, 0.02, 0.01].iter().map(|&dy| (value(dy) - reference).abs()).collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.0, "observed order {order} from {errors:?}");
    }
}

#[test]
fn solution_band_and_slope() {
    let prm = params(0.4, 0.3, 1.5);
    let grid = LogGrid::default_for(&prm, 0.01).unwrap();
    for payoff in [MarkovianPayoff::power(2.0), MarkovianPayoff::smoothed_call(1.0, 0.05)] {
        let sol = solve_hjb(&prm, &payoff.into(), &grid).unwrap();
        let report = check_solution_properties(&sol, default_tolerance(&grid));
        assert!(report.passed(), "{report:?}");
        assert!(report.slope_min >= report.k_m0 - report.tolerance);
        assert!(report.lipschitz_ut.0.is_finite() && report.lipschitz_w.1.is_finite());
    }
}

#[test]
fn small_and_large_risk_aversion_limits() {
    let small = params(0.5, 0.2, 1e-4);
    let grid = LogGrid::default_for(&small, 0.01).unwrap();
    let log = MarkovianPayoff::log_affine(0.0, 1.0);
    let v = solve_hjb(&small, &log.clone().into(), &grid).unwrap().value_at_origin().unwrap();
    let bs = bs_price(&log, 0.5f64.sqrt() * 0.2, 1.0).unwrap();
    assert!((v - bs).abs() <= 1e-3, "{v} vs {bs}");

    let large = params(0.5, 0.2, 1e3);
    let sq = MarkovianPayoff::power(2.0);
    let v = solve_hjb(&large, &sq.clone().into(), &grid).unwrap().value_at_origin().unwrap();
    let bs = bs_price(&sq, 0.2, 1.0).unwrap();
    assert!((v - bs).abs() <= 1e-2, "{v} vs {bs}");
}
