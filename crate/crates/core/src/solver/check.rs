//! Equilibrium residuals recomputed from a solution, independent of the
//! iteration path.

use nalgebra::{DMatrix, DVector};

use crate::economy::{by_country, CarbonRegime, WorldEconomy};
use crate::error::{Error, Result};
use crate::solver::scenario::PolicyScenario;
use crate::solver::wedge::tau_tilde;
use crate::solver::{revenue_shares, HatSolution, IncomeClosure};

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(
        0.0,
        |m: f64, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) },
    )
}

/// Max-abs residual of every equilibrium condition at `sol`. Money residuals
/// are relative to world GNE; price residuals are in logs.
pub fn equilibrium_residuals(
    econ: &WorldEconomy,
    scenario: &PolicyScenario,
    sol: &HatSolution,
) -> Result<Vec<(String, f64)>> {
    let d = econ.dims;
    let (n, nj) = (d.n_countries, d.nj());
    if sol.w_hat.len() != n || sol.sales_prime.len() != nj {
        return Err(Error::Argument("solution does not match economy".into()));
    }
    let scn = scenario.resolve(econ)?;
    let ss = econ.steady_state()?;
    let gne = ss.world_gne;
    let gamma = econ.gamma();
    let lab = econ.labor_share();
    let one_minus_theta = 1.0 - econ.theta;
    let mut out = Vec::new();

    let tau_expected = tau_tilde(econ, &scn, &sol.cbam_reference_t_hat)?;
    out.push((
        "wedges".into(),
        (&tau_expected - &sol.tau_tilde_prime).abs().max(),
    ));
    let reference_ok = if scn.mode.is_endogenous() {
        (&sol.cbam_reference_t_hat - &sol.t_hat).abs().max()
    } else {
        0.0
    };
    out.push(("wedge_timing".into(), reference_ok));

    let cost = max_abs((0..nj).map(|k| {
        let i = d.country_of(k);
        let eps_hat = (1.0 - sol.free_alloc_prime[k]) / (1.0 - econ.free_alloc[k]);
        let log_mc = lab[k] * sol.w_hat[i].ln()
            + gamma[k] * sol.price_index_hat[k].ln()
            + econ.rho[k] * (sol.t_hat[i] * eps_hat).ln();
        log_mc - sol.mc_hat[k].ln()
    }));
    out.push(("unit_cost".into(), cost));

    let tau = &sol.tau_tilde_prime;
    let price_index = max_abs((0..nj).map(|c| {
        let agg: f64 = (0..nj)
            .map(|r| econ.iota[(r, c)] * (sol.mc_hat[r] * tau[(r, c)]).powf(one_minus_theta))
            .sum();
        agg.ln() / one_minus_theta - sol.price_index_hat[c].ln()
    }));
    out.push(("price_index".into(), price_index));

    let shares = max_abs(
        (0..nj)
            .flat_map(|c| (0..nj).map(move |r| (r, c)))
            .map(|(r, c)| {
                let expected = econ.iota[(r, c)]
                    * (sol.mc_hat[r] * tau[(r, c)] / sol.price_index_hat[c]).powf(one_minus_theta);
                expected - sol.omega_tilde_prime[(r, c)]
            }),
    );
    out.push(("cost_shares".into(), shares));

    let one_minus_sigma = 1.0 - econ.sigma;
    let cons = max_abs(
        (0..n)
            .flat_map(|i| (0..d.n_sectors).map(move |j| (i, j)))
            .map(|(i, j)| {
                let denom: f64 = (0..d.n_sectors)
                    .map(|k| econ.chi[(i, k)] * sol.p_hat[d.at(i, k)].powf(one_minus_sigma))
                    .sum();
                econ.chi[(i, j)] * sol.p_hat[d.at(i, j)].powf(one_minus_sigma) / denom
                    - sol.alpha_prime[(i, j)]
            }),
    );
    out.push(("consumption_shares".into(), cons));

    let omega = sol.omega_prime(econ);
    let s = &sol.sales_prime;
    let intermediate = &omega * s;
    let goods = max_abs((0..nj).map(|k| {
        let i = d.country_of(k);
        (s[k] - intermediate[k] - sol.alpha_prime[(i, d.sector_of(k))] * sol.income_prime[i]) / gne
    }));
    out.push(("sales".into(), goods));

    let basis = match scenario.income_closure {
        IncomeClosure::Counterfactual => omega.clone(),
        IncomeClosure::Baseline => {
            revenue_shares(&gamma, &econ.iota, &DMatrix::from_element(nj, nj, 1.0))
        }
    };
    let tariff = by_country(
        &d,
        &DVector::from_fn(nj, |c, _| {
            s[c] * (0..nj)
                .map(|r| (tau[(r, c)] - 1.0) * basis[(r, c)])
                .sum::<f64>()
        }),
    );
    let permits = by_country(&d, &econ.rho.component_mul(s));
    let income = max_abs((0..n).map(|i| {
        (sol.w_hat[i] * econ.labor[i] + permits[i] + tariff[i] + econ.deficits[i]
            - sol.income_prime[i])
            / gne
    }));
    out.push(("income".into(), income));

    let labor = by_country(&d, &lab.component_mul(s));
    out.push((
        "labor_market".into(),
        max_abs((0..n).map(|i| (labor[i] - sol.w_hat[i] * econ.labor[i]) / gne)),
    ));

    let e_prime = by_country(&d, &sol.emissions_prime(econ));
    let base_e = by_country(&d, &ss.emissions);
    let emissions = max_abs((0..n).map(|i| {
        let target = match econ.carbon_regime[i] {
            CarbonRegime::Capped { supply } => supply * scn.supply_multipliers[i],
            CarbonRegime::Priced { .. } => base_e[i] * sol.e_hat[i],
        };
        sol.t_hat[i] * (e_prime[i] - target) / gne
    }));
    out.push(("emissions_market".into(), emissions));
    out.push((
        "numeraire".into(),
        (sol.income_prime.sum() / gne - 1.0).abs(),
    ));
    out.push(("walras".into(), walras_residual(econ, sol)));
    out.push((
        "budget".into(),
        budget_residuals(econ, sol)
            .iter()
            .fold(0.0, |m: f64, x| m.max(x.abs()))
            / gne,
    ));
    Ok(out)
}

/// World final expenditure minus world income, relative to world GNE.
pub fn walras_residual(econ: &WorldEconomy, sol: &HatSolution) -> f64 {
    let omega = sol.omega_prime(econ);
    let s = &sol.sales_prime;
    let final_expenditure = s.sum() - (&omega * s).sum();
    (final_expenditure - sol.income_prime.sum()).abs() / sol.world_gne
}

/// Per-country `I' - (w'L + auctioned permit value + wedge revenue + D)`,
/// each component rebuilt from levels.
pub fn budget_residuals(econ: &WorldEconomy, sol: &HatSolution) -> DVector<f64> {
    let d = econ.dims;
    let nj = d.nj();
    let gamma = econ.gamma();
    let e = sol.emissions_prime(econ);
    let auctioned = by_country(
        &d,
        &DVector::from_fn(nj, |k, _| {
            sol.t_hat[d.country_of(k)] * (1.0 - sol.free_alloc_prime[k]) * e[k]
        }),
    );
    let mut wedge_revenue = DVector::<f64>::zeros(d.n_countries);
    for c in 0..nj {
        let i = d.country_of(c);
        let input_bill = gamma[c] * sol.sales_prime[c];
        for r in 0..nj {
            let tau = sol.tau_tilde_prime[(r, c)];
            let pre_wedge_value = sol.omega_tilde_prime[(r, c)] * input_bill / tau;
            wedge_revenue[i] += (tau - 1.0) * pre_wedge_value;
        }
    }
    DVector::from_fn(d.n_countries, |i, _| {
        sol.income_prime[i]
            - (sol.w_hat[i] * econ.labor[i] + auctioned[i] + wedge_revenue[i] + econ.deficits[i])
    })
}
