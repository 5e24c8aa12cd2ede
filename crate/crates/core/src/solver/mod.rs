//! Counterfactual equilibria in relative changes.
//!
//! The outer loop iterates on wage hats and permit-price hats of capped
//! countries. Each pass evaluates wedges, solves the joint cost and price
//! index fixed point, updates cost and consumption shares, solves the linear
//! sales system, and takes a damped step towards the labor and emissions
//! market-clearing values. World nominal GNE is the numeraire.

mod check;
mod scenario;
mod wedge;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::economy::{by_country, within_country, CarbonRegime, SteadyState, WorldEconomy};
use crate::error::{Error, Result};
use crate::network::solve_refined;

pub use check::{budget_residuals, equilibrium_residuals, walras_residual};
pub use scenario::{CbamMode, IncomeClosure, PolicyScenario, ResolvedScenario, TariffOverride};
pub use wedge::{cbam_matrix, cbam_wedge, tau_tilde};

const INNER_TOL: f64 = 1e-12;
const INNER_MAX: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HatSolution {
    pub w_hat: DVector<f64>,
    /// One for countries with an exogenous price.
    pub t_hat: DVector<f64>,
    /// Equal to the supply multiplier for capped countries.
    pub e_hat: DVector<f64>,
    pub mc_hat: DVector<f64>,
    pub p_hat: DVector<f64>,
    pub price_index_hat: DVector<f64>,
    pub omega_tilde_prime: DMatrix<f64>,
    /// `N x J`.
    pub alpha_prime: DMatrix<f64>,
    pub sales_prime: DVector<f64>,
    pub income_prime: DVector<f64>,
    pub tau_tilde_prime: DMatrix<f64>,
    pub free_alloc_prime: DVector<f64>,
    /// Carbon price hats at which the border adjustment was evaluated.
    pub cbam_reference_t_hat: DVector<f64>,
    pub tariff_revenue: DVector<f64>,
    pub world_gne: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<(String, f64)>,
}

impl HatSolution {
    /// Counterfactual revenue shares `gamma omega_tilde' / tau_tilde'`.
    pub fn omega_prime(&self, econ: &WorldEconomy) -> DMatrix<f64> {
        revenue_shares(
            &econ.gamma(),
            &self.omega_tilde_prime,
            &self.tau_tilde_prime,
        )
    }

    /// Physical counterfactual emissions `rho S' / (t' (1 - eps'))`.
    pub fn emissions_prime(&self, econ: &WorldEconomy) -> DVector<f64> {
        let d = econ.dims;
        DVector::from_fn(d.nj(), |k, _| {
            econ.rho[k] * self.sales_prime[k]
                / (self.t_hat[d.country_of(k)] * (1.0 - self.free_alloc_prime[k]))
        })
    }

    /// Replaces a converged shock-free solution by the steady state itself,
    /// so that changes measured against it are exactly zero.
    fn snap_to_steady_state(&mut self, econ: &WorldEconomy, ss: &SteadyState) {
        let one = |v: &DVector<f64>| v.map(|_| 1.0);
        self.w_hat = one(&self.w_hat);
        self.t_hat = one(&self.t_hat);
        self.e_hat = one(&self.e_hat);
        self.mc_hat = one(&self.mc_hat);
        self.p_hat = one(&self.p_hat);
        self.price_index_hat = one(&self.price_index_hat);
        self.omega_tilde_prime = econ.iota.clone();
        self.alpha_prime = econ.chi.clone();
        self.sales_prime = ss.sales.clone();
        self.income_prime = ss.income.clone();
        self.tariff_revenue = self.tariff_revenue.map(|_| 0.0);
        self.cbam_reference_t_hat = one(&self.cbam_reference_t_hat);
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }
}

pub(crate) fn revenue_shares(
    gamma: &DVector<f64>,
    omega_tilde: &DMatrix<f64>,
    tau: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut m = omega_tilde.component_div(tau);
    for (c, mut col) in m.column_iter_mut().enumerate() {
        col *= gamma[c];
    }
    m
}

struct Context<'a> {
    econ: &'a WorldEconomy,
    ss: SteadyState,
    scn: ResolvedScenario,
    closure: IncomeClosure,
    gamma: DVector<f64>,
    labor_share: DVector<f64>,
    log_eps_hat: DVector<f64>,
    /// Baseline physical emissions by country.
    base_emissions: DVector<f64>,
    supply: DVector<f64>,
    capped: Vec<bool>,
}

struct Evaluation {
    mc: DVector<f64>,
    log_p_index: DVector<f64>,
    omega_tilde: DMatrix<f64>,
    alpha: DMatrix<f64>,
    sales: DVector<f64>,
    income: DVector<f64>,
    tariff_revenue: DVector<f64>,
    w_target: DVector<f64>,
    t_target: DVector<f64>,
    e_hat: DVector<f64>,
}

impl<'a> Context<'a> {
    fn new(econ: &'a WorldEconomy, scenario: &PolicyScenario) -> Result<Self> {
        econ.validate()?;
        let ss = econ.require_steady_state()?;
        let scn = scenario.resolve(econ)?;
        let d = econ.dims;
        let log_eps_hat = DVector::from_fn(d.nj(), |k, _| {
            ((1.0 - scn.free_alloc_prime[k]) / (1.0 - econ.free_alloc[k])).ln()
        });
        let base_emissions = by_country(&d, &ss.emissions);
        let supply = DVector::from_fn(d.n_countries, |i, _| match econ.carbon_regime[i] {
            CarbonRegime::Capped { supply } => supply * scn.supply_multipliers[i],
            CarbonRegime::Priced { .. } => base_emissions[i],
        });
        let capped = econ.carbon_regime.iter().map(|r| r.is_capped()).collect();
        Ok(Self {
            econ,
            gamma: econ.gamma(),
            labor_share: econ.labor_share(),
            ss,
            scn,
            closure: scenario.income_closure,
            log_eps_hat,
            base_emissions,
            supply,
            capped,
        })
    }

    fn log_mc(
        &self,
        log_w: &DVector<f64>,
        log_t: &DVector<f64>,
        log_p: &DVector<f64>,
    ) -> DVector<f64> {
        let d = self.econ.dims;
        DVector::from_fn(d.nj(), |k, _| {
            let i = d.country_of(k);
            self.labor_share[k] * log_w[i]
                + self.gamma[k] * log_p[k]
                + self.econ.rho[k] * (log_t[i] + self.log_eps_hat[k])
        })
    }

    /// Joint fixed point of unit costs and price indices.
    fn prices(
        &self,
        w_hat: &DVector<f64>,
        t_hat: &DVector<f64>,
        tau: &DMatrix<f64>,
        log_p_guess: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let econ = self.econ;
        let nj = econ.nj();
        let one_minus_theta = 1.0 - econ.theta;
        let k = econ.iota.zip_map(tau, |i, t| i * t.powf(one_minus_theta));
        let log_w = w_hat.map(f64::ln);
        let log_t = t_hat.map(f64::ln);
        let mut log_p = log_p_guess.clone();
        for it in 0..INNER_MAX {
            let log_mc = self.log_mc(&log_w, &log_t, &log_p);
            let x = log_mc.map(|l| (one_minus_theta * l).exp());
            let agg = k.tr_mul(&x);
            let next = agg.map(|a| a.ln() / one_minus_theta);
            if let Some(c) = next.iter().position(|v| !v.is_finite()) {
                return Err(Error::NegativeIterate {
                    variable: "price_index_hat",
                    index: c,
                    value: agg[c],
                });
            }
            let delta = (&next - &log_p).abs().max();
            log_p = next;
            if delta < INNER_TOL {
                debug!("price block converged in {} inner iterations", it + 1);
                let log_mc = self.log_mc(&log_w, &log_t, &log_p);
                return Ok((log_mc.map(f64::exp), log_p));
            }
        }
        let _ = nj;
        Err(Error::NonConvergence {
            iterations: INNER_MAX,
            last_norm: f64::NAN,
            history_len: INNER_MAX,
            residuals: vec![("price_index".into(), f64::NAN)],
        })
    }

    fn evaluate(
        &self,
        w_hat: &DVector<f64>,
        t_hat: &DVector<f64>,
        tau: &DMatrix<f64>,
        log_p_guess: &DVector<f64>,
    ) -> Result<Evaluation> {
        let econ = self.econ;
        let d = econ.dims;
        let nj = d.nj();
        let (mc, log_p_index) = self.prices(w_hat, t_hat, tau, log_p_guess)?;
        let one_minus_theta = 1.0 - econ.theta;
        let mut omega_tilde = DMatrix::from_fn(nj, nj, |r, c| {
            econ.iota[(r, c)] * (mc[r] * tau[(r, c)]).powf(one_minus_theta)
        });
        for mut col in omega_tilde.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        let one_minus_sigma = 1.0 - econ.sigma;
        let mut alpha = DMatrix::from_fn(d.n_countries, d.n_sectors, |i, j| {
            econ.chi[(i, j)] * mc[d.at(i, j)].powf(one_minus_sigma)
        });
        for mut row in alpha.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        let omega = revenue_shares(&self.gamma, &omega_tilde, tau);
        let revenue_basis = match self.closure {
            IncomeClosure::Counterfactual => omega.clone(),
            IncomeClosure::Baseline => {
                revenue_shares(&self.gamma, &econ.iota, &DMatrix::from_element(nj, nj, 1.0))
            }
        };
        let tariff_rate = DVector::from_fn(nj, |c, _| {
            (0..nj)
                .map(|r| (tau[(r, c)] - 1.0) * revenue_basis[(r, c)])
                .sum::<f64>()
        });
        let income_coeff = &econ.rho + &tariff_rate;
        let mut a = DMatrix::<f64>::identity(nj, nj) - &omega;
        a -= within_country(&d, &alpha, &income_coeff);
        let b = DVector::from_fn(nj, |k, _| {
            let i = d.country_of(k);
            alpha[(i, d.sector_of(k))] * (w_hat[i] * econ.labor[i] + econ.deficits[i])
        });
        let sales = solve_refined(&a, &b)?;
        if let Some(k) = sales.iter().position(|s| !(*s >= 0.0)) {
            return Err(Error::NegativeIterate {
                variable: "sales_prime",
                index: k,
                value: sales[k],
            });
        }
        let tariff_revenue = by_country(&d, &tariff_rate.component_mul(&sales));
        let income = DVector::from_fn(d.n_countries, |i, _| {
            w_hat[i] * econ.labor[i] + econ.deficits[i]
        }) + by_country(&d, &income_coeff.component_mul(&sales));
        let labor_demand = by_country(&d, &self.labor_share.component_mul(&sales));
        let w_target = labor_demand.component_div(&econ.labor);
        let emission_value = by_country(
            &d,
            &DVector::from_fn(nj, |k, _| {
                econ.rho[k] * sales[k] / (1.0 - self.scn.free_alloc_prime[k])
            }),
        );
        let mut t_target = DVector::from_element(d.n_countries, 1.0);
        let mut e_hat = DVector::from_element(d.n_countries, 1.0);
        for i in 0..d.n_countries {
            if self.capped[i] {
                e_hat[i] = self.scn.supply_multipliers[i];
                t_target[i] = if self.supply[i] > 0.0 {
                    emission_value[i] / self.supply[i]
                } else {
                    1.0
                };
            } else if self.base_emissions[i] > 0.0 {
                e_hat[i] = emission_value[i] / (t_hat[i] * self.base_emissions[i]);
            }
        }
        Ok(Evaluation {
            mc,
            log_p_index,
            omega_tilde,
            alpha,
            sales,
            income,
            tariff_revenue,
            w_target,
            t_target,
            e_hat,
        })
    }
}

/// Solves `scenario` on `econ`, optionally warm-started from `warm`.
pub fn solve(
    econ: &WorldEconomy,
    scenario: &PolicyScenario,
    warm: Option<&HatSolution>,
) -> Result<HatSolution> {
    let n = econ.dims.n_countries;
    let (w0, t0) = match warm {
        Some(s) if s.w_hat.len() == n => (s.w_hat.clone(), s.t_hat.clone()),
        _ => (DVector::from_element(n, 1.0), DVector::from_element(n, 1.0)),
    };
    solve_from(econ, scenario, w0, t0)
}

/// Solves from an explicit initial guess for wage and carbon price hats.
/// Entries of `t0` for countries with an exogenous price are ignored.
pub fn solve_from(
    econ: &WorldEconomy,
    scenario: &PolicyScenario,
    w0: DVector<f64>,
    t0: DVector<f64>,
) -> Result<HatSolution> {
    let ctx = Context::new(econ, scenario)?;
    let d = econ.dims;
    let (n, nj) = (d.n_countries, d.nj());
    if w0.len() != n || t0.len() != n {
        return Err(Error::Argument("initial guess has wrong length".into()));
    }
    if w0.iter().chain(t0.iter()).any(|x| !(*x > 0.0)) {
        return Err(Error::Argument("initial guess must be positive".into()));
    }

    // Exogenous wedges are frozen at the carbon prices without the adjustment.
    let frozen_reference = if ctx.scn.mode.is_on() && !ctx.scn.mode.is_endogenous() {
        if scenario.has_other_shocks() {
            let mut pre = scenario.clone();
            pre.cbam_mode = CbamMode::Off;
            pre.name = format!("{}-pre", scenario.name);
            Some(solve_from(econ, &pre, w0.clone(), t0.clone())?.t_hat)
        } else {
            Some(DVector::from_element(n, 1.0))
        }
    } else {
        None
    };
    let frozen_tau = match &frozen_reference {
        Some(t) => Some(tau_tilde(econ, &ctx.scn, t)?),
        None if !ctx.scn.mode.is_on() => {
            Some(tau_tilde(econ, &ctx.scn, &DVector::from_element(n, 1.0))?)
        }
        None => None,
    };

    let mut w = w0;
    let mut t = DVector::from_fn(n, |i, _| if ctx.capped[i] { t0[i] } else { 1.0 });
    let mut log_p = DVector::zeros(nj);
    let mut prev_e_hat: Option<DVector<f64>> = None;
    let gne0 = ctx.ss.world_gne;
    let delta = scenario.damping;
    let mut last_norm = f64::INFINITY;

    for iteration in 1..=scenario.max_iterations {
        let tau = match &frozen_tau {
            Some(tau) => tau.clone(),
            None => tau_tilde(econ, &ctx.scn, &t)?,
        };
        let ev = ctx.evaluate(&w, &t, &tau, &log_p)?;
        let mut norm: f64 = 0.0;
        for i in 0..n {
            norm = norm.max((ev.w_target[i] - w[i]).abs());
            if ctx.capped[i] {
                norm = norm.max((ev.t_target[i] - t[i]).abs());
            }
        }
        let e_change = prev_e_hat
            .as_ref()
            .map_or(0.0, |p| (p - &ev.e_hat).abs().max());
        let scale = gne0 / ev.income.sum();
        let numeraire_gap = (scale - 1.0).abs();
        last_norm = norm.max(e_change).max(numeraire_gap);
        if !last_norm.is_finite() {
            return Err(Error::NegativeIterate {
                variable: "update",
                index: 0,
                value: last_norm,
            });
        }
        if norm < scenario.tolerance
            && e_change < scenario.tolerance
            && numeraire_gap < scenario.tolerance
        {
            debug!(
                "{}: converged after {iteration} outer iterations",
                scenario.name
            );
            let cbam_reference_t_hat = frozen_reference.clone().unwrap_or_else(|| t.clone());
            let mut sol = HatSolution {
                w_hat: w,
                t_hat: t,
                e_hat: ev.e_hat,
                p_hat: ev.mc.clone(),
                mc_hat: ev.mc,
                price_index_hat: ev.log_p_index.map(f64::exp),
                omega_tilde_prime: ev.omega_tilde,
                alpha_prime: ev.alpha,
                sales_prime: ev.sales,
                income_prime: ev.income,
                tau_tilde_prime: tau,
                free_alloc_prime: ctx.scn.free_alloc_prime.clone(),
                cbam_reference_t_hat,
                tariff_revenue: ev.tariff_revenue,
                world_gne: gne0,
                iterations: iteration,
                converged: true,
                residuals: Vec::new(),
            };
            if !ctx.scn.mode.is_on() && !scenario.has_other_shocks() {
                sol.snap_to_steady_state(econ, &ctx.ss);
            }
            sol.residuals = equilibrium_residuals(econ, scenario, &sol)?;
            let worst = sol.max_residual();
            if worst > 100.0 * scenario.tolerance {
                warn!(
                    "{}: converged but max residual is {worst:.3e}",
                    scenario.name
                );
            }
            return Ok(sol);
        }
        for i in 0..n {
            w[i] = scale * (w[i] + delta * (ev.w_target[i] - w[i]));
            if ctx.capped[i] {
                t[i] = scale * (t[i] + delta * (ev.t_target[i] - t[i]));
            }
        }
        for (variable, v) in [("w_hat", &w), ("t_hat", &t)] {
            if let Some(i) = v.iter().position(|x| !(*x > 0.0)) {
                return Err(Error::NegativeIterate {
                    variable,
                    index: i,
                    value: v[i],
                });
            }
        }
        log_p = ev.log_p_index;
        prev_e_hat = Some(ev.e_hat);
    }
    Err(Error::NonConvergence {
        iterations: scenario.max_iterations,
        last_norm,
        history_len: scenario.max_iterations,
        residuals: vec![("update_norm".into(), last_norm)],
    })
}
