//! Expenditure, real wages and emissions leakage.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::economy::{by_country, WorldEconomy};
use crate::error::Result;
use crate::metrics::eei::{
    baseline_intensity, check_solution, counterfactual_intensity, pct_change,
};
use crate::solver::HatSolution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    /// Percent.
    pub gne_nominal_change: DVector<f64>,
    pub gne_real_change: DVector<f64>,
    pub real_wage_change: DVector<f64>,
    pub consumption_price_index_hat: DVector<f64>,
    pub eu_gne_real_change: f64,
    pub extra_eu_gne_real_change: f64,
    pub eu_real_wage_change: f64,
    pub extra_eu_real_wage_change: f64,
}

/// Consumer price index hat `(sum_j chi p_hat^(1-sigma))^(1/(1-sigma))`.
pub fn consumption_price_index(econ: &WorldEconomy, p_hat: &DVector<f64>) -> DVector<f64> {
    let d = econ.dims;
    let a = 1.0 - econ.sigma;
    DVector::from_fn(d.n_countries, |i, _| {
        let s: f64 = (0..d.n_sectors)
            .map(|j| econ.chi[(i, j)] * p_hat[d.at(i, j)].powf(a))
            .sum();
        s.powf(1.0 / a)
    })
}

pub fn welfare(econ: &WorldEconomy, sol: &HatSolution) -> Result<WelfareReport> {
    check_solution(econ, sol)?;
    let n = econ.dims.n_countries;
    let ss = econ.steady_state()?;
    let pc = consumption_price_index(econ, &sol.p_hat);
    let i_hat = sol.income_prime.component_div(&ss.income);
    let nominal = i_hat.map(|x| 100.0 * (x - 1.0));
    let real = DVector::from_fn(n, |i, _| 100.0 * (i_hat[i] / pc[i] - 1.0));
    let wage = DVector::from_fn(n, |i, _| 100.0 * (sol.w_hat[i] / pc[i] - 1.0));
    let group = |eu: bool, base: &dyn Fn(usize) -> f64, cf: &dyn Fn(usize) -> f64| {
        let members: Vec<usize> = (0..n).filter(|&i| econ.eu_mask[i] == eu).collect();
        let b: f64 = members.iter().map(|&i| base(i)).sum();
        let c: f64 = members.iter().map(|&i| cf(i)).sum();
        pct_change(b, c)
    };
    let gne_base = |i: usize| ss.income[i];
    let gne_cf = |i: usize| sol.income_prime[i] / pc[i];
    let wage_base = |i: usize| econ.labor[i];
    let wage_cf = |i: usize| sol.w_hat[i] * econ.labor[i] / pc[i];
    Ok(WelfareReport {
        gne_nominal_change: nominal,
        gne_real_change: real,
        real_wage_change: wage,
        consumption_price_index_hat: pc.clone(),
        eu_gne_real_change: group(true, &gne_base, &gne_cf),
        extra_eu_gne_real_change: group(false, &gne_base, &gne_cf),
        eu_real_wage_change: group(true, &wage_base, &wage_cf),
        extra_eu_real_wage_change: group(false, &wage_base, &wage_cf),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Percent change of emissions in countries with exogenous prices.
    pub change_pct: f64,
    /// Same tons change over baseline world emissions.
    pub world_denominator_pct: f64,
    /// Percent change per exogenous-price country, `None` for capped ones.
    pub by_country: Vec<Option<f64>>,
    /// No country prices carbon exogenously.
    pub empty: bool,
}

/// Emission change (tons) in countries without a permit market.
pub fn leakage(econ: &WorldEconomy, sol: &HatSolution) -> Result<LeakageReport> {
    check_solution(econ, sol)?;
    let d = econ.dims;
    let ss = econ.steady_state()?;
    let base = by_country(&d, &baseline_intensity(econ).component_mul(&ss.sales));
    let cf = by_country(
        &d,
        &counterfactual_intensity(econ, sol).component_mul(&sol.sales_prime),
    );
    let priced: Vec<usize> = (0..d.n_countries).filter(|&i| !econ.is_capped(i)).collect();
    let b: f64 = priced.iter().map(|&i| base[i]).sum();
    let c: f64 = priced.iter().map(|&i| cf[i]).sum();
    let world = base.sum();
    Ok(LeakageReport {
        change_pct: if priced.is_empty() {
            0.0
        } else {
            pct_change(b, c)
        },
        world_denominator_pct: if world > 0.0 {
            100.0 * (c - b) / world
        } else {
            0.0
        },
        by_country: (0..d.n_countries)
            .map(|i| (!econ.is_capped(i)).then(|| pct_change(base[i], cf[i])))
            .collect(),
        empty: priced.is_empty(),
    })
}
