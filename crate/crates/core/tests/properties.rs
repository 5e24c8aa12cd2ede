use cbam_ge::calibrate::{build_baseline, calibrate_manifest, demean, export, BaselineShock};
use cbam_ge::linearize::{dlog_cost_shares, FactorDerivatives, ShockFlow};
use cbam_ge::metrics::{
    consumption_price_index, decompose_eei, welfare, GoodsFilter, ScenarioMetrics,
};
use cbam_ge::network::column_sums;
use cbam_ge::solver::{budget_residuals, solve_from, tau_tilde, walras_residual};
use cbam_ge::{fixtures, leontief_inverse, solve, CbamMode, PolicyScenario, ShareMatrices};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const MODES: [CbamMode; 5] = [
    CbamMode::Off,
    CbamMode::ReducedEndogenous,
    CbamMode::ReducedExogenous,
    CbamMode::FullEndogenous,
    CbamMode::FullExogenous,
];

fn scenario() -> impl Strategy<Value = PolicyScenario> {
    (
        0..MODES.len(),
        0.2f64..1.5,
        proptest::option::of((
            (1usize..=3, 1usize..=2, 1usize..=3, 1usize..=2),
            0.0f64..0.3,
        )),
    )
        .prop_map(|(m, scale, tariff)| {
            let mut s = PolicyScenario::new(MODES[m]).with_tolerance(1e-12);
            s.cbam_scale = scale;
            if let Some((flow, kappa)) = tariff {
                s = s.with_tariff([flow.0, flow.1, flow.2, flow.3], kappa);
            }
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn counterfactual_shares_stay_stochastic(seed in 0u64..1000, scn in scenario()) {
        let econ = fixtures::three_country(seed);
        prop_assert!(column_sums(&econ.iota).iter().all(|s| (s - 1.0).abs() < 1e-12));
        let sol = solve(&econ, &scn, None).unwrap();
        for s in column_sums(&sol.omega_tilde_prime).iter() {
            prop_assert!((s - 1.0).abs() < 1e-12, "column sum {s}");
        }
        for s in column_sums(&sol.alpha_prime.transpose()).iter() {
            prop_assert!((s - 1.0).abs() < 1e-12, "household shares sum {s}");
        }
    }

    #[test]
    fn closure_holds_at_every_solution(seed in 0u64..1000, scn in scenario()) {
        let econ = fixtures::three_country(seed);
        let sol = solve(&econ, &scn, None).unwrap();
        prop_assert!(walras_residual(&econ, &sol) < 1e-8);
        prop_assert!(budget_residuals(&econ, &sol).amax() < 1e-9);
        prop_assert!(sol.max_residual() < 1e-9);
    }

    #[test]
    fn leontief_inverse_is_consistent(seed in 0u64..1000) {
        let econ = fixtures::three_country(seed);
        let m = ShareMatrices::new(econ.iota.clone(), &econ.beta, &econ.rho, None).unwrap();
        let psi = leontief_inverse(&m.omega).unwrap();
        let eye = DMatrix::<f64>::identity(econ.nj(), econ.nj());
        prop_assert!((&psi * (&eye - &m.omega) - eye).amax() < 1e-10);
    }

    #[test]
    fn steady_state_check_passes(seed in 0u64..1000) {
        let report = fixtures::three_country(seed).steady_state_check();
        prop_assert!(report.passed);
        prop_assert!(report.max_residual() < 1e-10);
    }

    #[test]
    fn numeraire_pins_the_allocation(seed in 0u64..1000, c in 0.2f64..5.0, m in 0..MODES.len()) {
        let econ = fixtures::three_country(seed);
        let scn = PolicyScenario::new(MODES[m]).with_tolerance(1e-13);
        let n = econ.dims.n_countries;
        let one = DVector::from_element(n, 1.0);
        let a = solve_from(&econ, &scn, one.clone(), one.clone()).unwrap();
        let b = solve_from(&econ, &scn, one.clone() * c, one * c).unwrap();
        prop_assert!((&a.omega_tilde_prime - &b.omega_tilde_prime).amax() < 1e-9);
        prop_assert!((&a.alpha_prime - &b.alpha_prime).amax() < 1e-9);
        let ma = ScenarioMetrics::compute(&econ, &a).unwrap().headline();
        let mb = ScenarioMetrics::compute(&econ, &b).unwrap().headline();
        for ((k, x), (_, y)) in ma.iter().zip(&mb) {
            prop_assert!((x - y).abs() < 1e-9, "{k}: {x} vs {y}");
        }
        // world GNE is the numeraire, so nominal levels agree as well
        prop_assert!((&a.w_hat - &b.w_hat).amax() < 1e-9);
    }

    #[test]
    fn damping_does_not_move_the_solution(seed in 0u64..1000, m in 1..MODES.len()) {
        let econ = fixtures::three_country(seed);
        let tol = 1e-12;
        let mut scn = PolicyScenario::new(MODES[m]).with_tolerance(tol);
        let a = solve(&econ, &scn, None).unwrap();
        scn.damping /= 2.0;
        let b = solve(&econ, &scn, None).unwrap();
        // fixed-point error is at most tol / (1 - contraction); allow for it
        let bound = 2.0 * tol / scn.damping;
        prop_assert!((&a.w_hat - &b.w_hat).amax() < bound);
        prop_assert!((&a.t_hat - &b.t_hat).amax() < bound);
        prop_assert!((&a.p_hat - &b.p_hat).amax() < bound);
    }

    #[test]
    fn exogenous_wedges_use_reference_prices(seed in 0u64..1000, reduced in any::<bool>()) {
        let econ = fixtures::three_country(seed);
        let mode = if reduced { CbamMode::ReducedExogenous } else { CbamMode::FullExogenous };
        let scn = PolicyScenario::new(mode);
        let sol = solve(&econ, &scn, None).unwrap();
        let ones = DVector::from_element(econ.dims.n_countries, 1.0);
        let expected = tau_tilde(&econ, &scn.resolve(&econ).unwrap(), &ones).unwrap();
        prop_assert_eq!(&sol.tau_tilde_prime, &expected);
        prop_assert_eq!(&sol.cbam_reference_t_hat, &ones);
    }

    #[test]
    fn attenuation_on_leakage_fixture(scale in 0.05f64..1.5, m in 1..MODES.len()) {
        let econ = fixtures::leakage_four_country();
        let mut scn = PolicyScenario::new(MODES[m]);
        scn.cbam_scale = scale;
        let sol = solve(&econ, &scn, None).unwrap();
        let h = ScenarioMetrics::compute(&econ, &sol).unwrap().headline();
        let get = |k: &str| h.iter().find(|(n, _)| n == k).unwrap().1;
        let (direct, total) = (get("eei_direct_total"), get("eei_total_total"));
        prop_assert!(direct < 0.0);
        prop_assert!(total.abs() <= direct.abs());
    }

    #[test]
    fn deflation_identity(seed in 0u64..1000, scn in scenario()) {
        let econ = fixtures::three_country(seed);
        let sol = solve(&econ, &scn, None).unwrap();
        let w = welfare(&econ, &sol).unwrap();
        let pc = consumption_price_index(&econ, &sol.p_hat);
        prop_assert_eq!(&w.consumption_price_index_hat, &pc);
        for i in 0..econ.dims.n_countries {
            let real = (1.0 + w.gne_real_change[i] / 100.0).ln();
            let nominal = (1.0 + w.gne_nominal_change[i] / 100.0).ln();
            prop_assert!((real - (nominal - pc[i].ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_closes(seed in 0u64..1000, scn in scenario(), direct in any::<bool>()) {
        let econ = fixtures::three_country(seed);
        let sol = solve(&econ, &scn, None).unwrap();
        for f in GoodsFilter::ALL {
            let d = decompose_eei(&econ, None, &sol, f, direct).unwrap();
            let scale = d.total.abs().max(d.technology.abs()).max(d.reallocation.abs());
            prop_assert!(
                (d.technology + d.reallocation + d.cross_residual - d.total).abs() <= 1e-12 * scale
            );
        }
    }

    #[test]
    fn export_ingest_round_trip(seed in 0u64..1000) {
        let econ = fixtures::three_country(seed);
        let dir = tempfile::tempdir().unwrap();
        export(&econ, dir.path()).unwrap();
        let back = calibrate_manifest(&dir.path().join("manifest.json")).unwrap().economy;
        prop_assert!((&back.iota - &econ.iota).amax() <= 1e-15);
        prop_assert!((&back.chi - &econ.chi).amax() <= 1e-15);
        prop_assert!((&back.beta - &econ.beta).amax() <= 1e-15);
        prop_assert!((&back.rho - &econ.rho).amax() <= 1e-15);
    }

    #[test]
    fn null_baseline_shock_is_identity(seed in 0u64..1000) {
        let econ = fixtures::three_country(seed);
        let b = build_baseline(&econ, &BaselineShock::null(econ.dims.n_countries)).unwrap();
        prop_assert!((&b.economy.iota - &econ.iota).amax() < 1e-10);
        prop_assert!((&b.economy.chi - &econ.chi).amax() < 1e-10);
        prop_assert!((&b.economy.rho - &econ.rho).amax() < 1e-10);
        prop_assert!((&b.economy.labor - &econ.labor).amax() < 1e-10 * econ.labor.amax());
    }

    #[test]
    fn demeaned_deficits_sum_to_zero(v in proptest::collection::vec(-1e6f64..1e6, 1..60)) {
        let mut d = DVector::from_vec(v);
        demean(&mut d);
        prop_assert_eq!(d.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn unit_elasticity_freezes_shares(
        seed in 0u64..1000,
        flow in (1usize..=3, 1usize..=3, 1usize..=2, 1usize..=2),
        factors in proptest::collection::vec(-1.0f64..1.0, 6),
    ) {
        let mut econ = fixtures::three_country(seed);
        econ.theta = 1.0;
        let flow = ShockFlow::new(flow.0, flow.1, flow.2, flow.3);
        // any factor responses: the solver itself is undefined at unit elasticity
        let fd = FactorDerivatives {
            dlogw: DVector::from_column_slice(&factors[..3]),
            dlogt: DVector::from_column_slice(&factors[3..]),
        };
        prop_assert!(dlog_cost_shares(&econ, flow, &fd).unwrap().iter().all(|x| *x == 0.0));
    }
}
