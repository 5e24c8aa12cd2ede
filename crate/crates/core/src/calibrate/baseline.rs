//! Policy-adjusted baseline: emission cuts between the calibration year and
//! the baseline year, imposed as a counterfactual and folded back into the
//! calibrated parameters.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::economy::{CarbonRegime, WorldEconomy};
use crate::error::{Error, Result};
use crate::solver::{solve, CbamMode, HatSolution, PolicyScenario};

const BASELINE_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineShock {
    /// Annual emission reduction rate per country, fraction per year.
    pub annual_reduction: Vec<f64>,
    pub base_year: i32,
    pub target_year: i32,
    /// Cut in free allowance shares applied in importing-region countries.
    #[serde(default)]
    pub free_allowance_cut: f64,
    /// 1-based countries priced exogenously even if they run a permit market.
    #[serde(default)]
    pub exogenous_price_overrides: Vec<usize>,
}

impl BaselineShock {
    /// No reductions, no allowance cut, no overrides.
    pub fn null(n_countries: usize) -> Self {
        Self {
            annual_reduction: vec![0.0; n_countries],
            base_year: 2018,
            target_year: 2024,
            free_allowance_cut: 0.0,
            exogenous_price_overrides: Vec::new(),
        }
    }

    pub fn validate(&self, n_countries: usize) -> Result<()> {
        let arg = |m: String| Err(Error::Argument(m));
        if self.annual_reduction.len() != n_countries {
            return arg(format!(
                "{} reduction rates for {n_countries} countries",
                self.annual_reduction.len()
            ));
        }
        if let Some(i) = self
            .annual_reduction
            .iter()
            .position(|r| !(*r >= 0.0 && *r < 1.0))
        {
            return arg(format!(
                "reduction rate {} of country {} outside [0,1)",
                self.annual_reduction[i],
                i + 1
            ));
        }
        if self.base_year >= self.target_year {
            return arg(format!(
                "base year {} must precede target year {}",
                self.base_year, self.target_year
            ));
        }
        if !(self.free_allowance_cut >= 0.0 && self.free_allowance_cut <= 1.0) {
            return arg(format!(
                "free allowance cut {} outside [0,1]",
                self.free_allowance_cut
            ));
        }
        if let Some(c) = self
            .exogenous_price_overrides
            .iter()
            .find(|&&c| c == 0 || c > n_countries)
        {
            return arg(format!("override country {c} outside 1..={n_countries}"));
        }
        Ok(())
    }

    fn years(&self) -> i32 {
        self.target_year - self.base_year
    }

    /// `(1 - rate)^(target - base)` for countries keeping a permit market
    /// after overrides, one elsewhere.
    pub fn supply_multipliers(&self, econ: &WorldEconomy) -> Vec<f64> {
        (0..econ.dims.n_countries)
            .map(|i| {
                let overridden = self.exogenous_price_overrides.contains(&(i + 1));
                if econ.is_capped(i) && !overridden {
                    (1.0 - self.annual_reduction[i]).powi(self.years())
                } else {
                    1.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Baseline {
    pub economy: WorldEconomy,
    /// Equilibrium of the calibration-year economy under the shock.
    pub transition: HatSolution,
}

/// Imposes `shock` on a steady-state economy and recalibrates at the
/// resulting equilibrium.
///
/// Input weights and consumption weights become the counterfactual shares,
/// emission cost shares are rescaled by the change in emission intensity
/// `1 / (t_hat eps_hat)` and free allowance shares take their cut values.
/// The result is re-closed at the original world GNE.
pub fn build_baseline(econ: &WorldEconomy, shock: &BaselineShock) -> Result<Baseline> {
    let d = econ.dims;
    let n = d.n_countries;
    shock.validate(n)?;
    let gne = econ.require_steady_state()?.world_gne;

    let multipliers = shock.supply_multipliers(econ);
    let mut start = econ.clone();
    for &c in &shock.exogenous_price_overrides {
        start.carbon_regime[c - 1] = CarbonRegime::Priced { price: 1.0 };
    }
    let mut scenario = PolicyScenario::new(CbamMode::Off).with_tolerance(BASELINE_TOLERANCE);
    scenario.name = "baseline".into();
    scenario.emission_supply_multipliers = Some(multipliers);
    scenario.free_allowance_scale = Some(
        econ.eu_mask
            .iter()
            .map(|&eu| {
                if eu {
                    1.0 - shock.free_allowance_cut
                } else {
                    1.0
                }
            })
            .collect(),
    );
    let transition = solve(&start, &scenario, None)?;

    let mut next = start;
    next.iota = transition.omega_tilde_prime.clone();
    next.chi = transition.alpha_prime.clone();
    next.rho = DVector::from_fn(d.nj(), |k, _| {
        let eps_hat = (1.0 - transition.free_alloc_prime[k]) / (1.0 - econ.free_alloc[k]);
        econ.rho[k] / (transition.t_hat[d.country_of(k)] * eps_hat)
    });
    if let Some(k) = next.rho.iter().position(|r| !(*r < 1.0)) {
        let (i, j) = d.unflatten(k)?;
        return Err(Error::Calibration(format!(
            "baseline emission cost share of ({i},{j}) reaches {}",
            next.rho[k]
        )));
    }
    next.free_alloc = transition.free_alloc_prime.clone();
    let economy = next.close_steady_state(gne)?;
    economy.validate()?;
    economy.require_steady_state()?;
    Ok(Baseline {
        economy,
        transition,
    })
}
