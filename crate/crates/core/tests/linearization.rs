mod support;

use cbam_ge::linearize::{
    dcbam, dlog_eei, dlog_prices, dlog_welfare, eei_terms, linearize, FactorDerivatives, ShockFlow,
};
use cbam_ge::{fixtures, solve, CbamMode, PolicyScenario, WorldEconomy};
use nalgebra::DVector;
use support::order::{order_rows, TOL};

fn check_order(econ: &WorldEconomy, flow: ShockFlow) {
    for row in order_rows(econ, flow) {
        assert!(
            (1.7..=2.3).contains(&row.ratio),
            "{} on flow {flow}: gaps {:.3e} {:.3e}, ratio {:.4}",
            row.name,
            row.gaps[0],
            row.gaps[1],
            row.ratio
        );
        // the first-order term dominates
        assert!(
            row.passes(),
            "{}: gap {:.3e} vs size {:.3e}",
            row.name,
            row.gaps[0],
            row.size
        );
    }
}

#[test]
fn first_order_error_shrinks_linearly_on_import_flow() {
    check_order(&fixtures::three_country(2), ShockFlow::new(2, 1, 1, 2));
}

#[test]
fn first_order_error_shrinks_linearly_on_export_flow() {
    check_order(&fixtures::three_country(2), ShockFlow::new(1, 3, 2, 1));
}

#[test]
fn first_order_error_shrinks_linearly_on_domestic_flow() {
    check_order(&fixtures::three_country(7), ShockFlow::new(3, 3, 1, 2));
}

#[test]
fn factor_channel_is_independent_of_flow() {
    let econ = fixtures::three_country(3);
    let flow = ShockFlow::new(2, 1, 2, 2);
    let fd = FactorDerivatives::from_solver(&econ, flow, 1e-4, TOL).unwrap();
    let full = dlog_prices(&econ, flow, &fd).unwrap();
    let partial = dlog_prices(&econ, flow, &FactorDerivatives::zero(3)).unwrap();
    let only_factors = dlog_prices(&econ, ShockFlow::new(1, 2, 1, 1), &fd).unwrap()
        - dlog_prices(
            &econ,
            ShockFlow::new(1, 2, 1, 1),
            &FactorDerivatives::zero(3),
        )
        .unwrap();
    let diff = &full - &partial - only_factors;
    assert!(diff.amax() < 1e-12);
}

#[test]
fn eei_channels_sum_to_total() {
    let econ = fixtures::leakage_four_country();
    let flow = ShockFlow::new(2, 1, 2, 1);
    let fd = FactorDerivatives::from_solver(&econ, flow, 1e-4, TOL).unwrap();
    let terms = eei_terms(&econ, flow, &fd).unwrap();
    assert!((terms.total() - dlog_eei(&econ, flow, &fd).unwrap()).abs() < 1e-15);
    // a wedge on dirty imports cuts direct imports from that origin
    assert!(terms.imports < 0.0);
}

#[test]
fn border_adjustment_feedback_sign_matches_solver() {
    let econ = fixtures::three_country(2);
    let (l, s, q) = (2, 1, 1);
    let solve_mode = |mode: CbamMode| {
        let mut scn = PolicyScenario::new(mode).with_tolerance(TOL);
        scn.cbam_scale = 1e-3;
        solve(&econ, &scn, None).unwrap()
    };
    let endo = solve_mode(CbamMode::FullEndogenous);
    let exo = solve_mode(CbamMode::FullExogenous);
    let d = econ.dims;
    let (r, c) = (d.at(l - 1, q - 1), d.at(s - 1, 0));
    let gap = endo.tau_tilde_prime[(r, c)] - exo.tau_tilde_prime[(r, c)];
    let dlogt: DVector<f64> = endo.t_hat.map(f64::ln);
    let first = dcbam(econ.rho[r], dlogt[s - 1], dlogt[l - 1]);
    assert!(gap != 0.0 && first != 0.0);
    assert_eq!(gap.signum(), first.signum());
}

#[test]
fn response_bundle_is_consistent() {
    let econ = fixtures::three_country(4);
    let flow = ShockFlow::new(2, 1, 1, 1);
    let fd = FactorDerivatives::from_solver(&econ, flow, 1e-4, TOL).unwrap();
    let out = linearize(&econ, flow, &fd).unwrap();
    let k = econ.dims.at(1, 0);
    assert_eq!(out.cbam_shock, econ.rho[k] + out.dcbam);
    assert_eq!(out.dlogp, dlog_prices(&econ, flow, &fd).unwrap());
    assert_eq!(out.dlog_welfare, dlog_welfare(&econ, flow, &fd).unwrap());
    assert_eq!(out.flow, flow);
}

#[test]
fn wrong_factor_lengths_rejected() {
    let econ = fixtures::three_country(4);
    let fd = FactorDerivatives::zero(2);
    assert!(dlog_prices(&econ, ShockFlow::new(1, 1, 1, 1), &fd).is_err());
    assert!(dlog_prices(
        &econ,
        ShockFlow::new(4, 1, 1, 1),
        &FactorDerivatives::zero(3)
    )
    .is_err());
}
