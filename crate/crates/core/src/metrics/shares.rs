//! Sourcing-share and sector-size changes in the importing region.

use serde::{Deserialize, Serialize};

use crate::economy::WorldEconomy;
use crate::error::{Error, Result};
use crate::metrics::eei::{check_solution, GoodsFilter};
use crate::solver::HatSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Suppliers outside the importing region.
    Foreign,
    /// Suppliers inside the importing region.
    Domestic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weighted by each buyer's baseline purchases from the filtered suppliers.
    TradeWeighted,
}

/// Mean and population standard deviation of percentage changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub observations: usize,
}

fn summarize(values: &[(f64, f64)]) -> Summary {
    let wsum: f64 = values.iter().map(|(_, w)| w).sum();
    let mean = values.iter().map(|(v, w)| v * w).sum::<f64>() / wsum;
    let var = values
        .iter()
        .map(|(v, w)| w * (v - mean).powi(2))
        .sum::<f64>()
        / wsum;
    Summary {
        mean,
        std: var.sqrt(),
        observations: values.len(),
    }
}

/// Percentage change in the share of each importing-region buyer's input
/// spending that goes to `origin` suppliers of `filter` goods, summarized
/// across buyers. Buyers with a zero baseline share are skipped.
pub fn purchase_shares(
    econ: &WorldEconomy,
    sol: &HatSolution,
    origin: Origin,
    filter: GoodsFilter,
    weighting: Weighting,
) -> Result<Summary> {
    check_solution(econ, sol)?;
    let d = econ.dims;
    let nj = d.nj();
    let ss = econ.steady_state()?;
    let gamma = econ.gamma();
    let admits = |r: usize| {
        let foreign = !econ.eu_mask[d.country_of(r)];
        let side = match origin {
            Origin::Foreign => foreign,
            Origin::Domestic => !foreign,
        };
        side && filter.admits(econ, d.sector_of(r))
    };
    let mut obs = Vec::new();
    for c in (0..nj).filter(|&c| econ.eu_mask[d.country_of(c)]) {
        let (mut base, mut cf) = (0.0, 0.0);
        for r in (0..nj).filter(|&r| admits(r)) {
            base += econ.iota[(r, c)];
            cf += sol.omega_tilde_prime[(r, c)];
        }
        if base > 0.0 {
            let weight = match weighting {
                Weighting::Unweighted => 1.0,
                Weighting::TradeWeighted => base * gamma[c] * ss.sales[c],
            };
            obs.push((100.0 * (cf / base - 1.0), weight));
        }
    }
    if obs.is_empty() {
        return Err(Error::Argument(format!(
            "no importing-region buyer sources {origin:?} {} goods",
            filter.label()
        )));
    }
    Ok(summarize(&obs))
}

/// Percentage change in Domar weights of importing-region sectors of the
/// given type. World GNE is the numeraire, so this is the change in sales.
pub fn domar_changes(
    econ: &WorldEconomy,
    sol: &HatSolution,
    filter: GoodsFilter,
) -> Result<Summary> {
    check_solution(econ, sol)?;
    let d = econ.dims;
    let ss = econ.steady_state()?;
    let scale = ss.world_gne / sol.income_prime.sum();
    let obs: Vec<(f64, f64)> = (0..d.nj())
        .filter(|&k| econ.eu_mask[d.country_of(k)] && filter.admits(econ, d.sector_of(k)))
        .filter(|&k| ss.sales[k] > 0.0)
        .map(|k| {
            (
                100.0 * (scale * sol.sales_prime[k] / ss.sales[k] - 1.0),
                1.0,
            )
        })
        .collect();
    if obs.is_empty() {
        return Err(Error::Argument(format!(
            "no importing-region sector matches {}",
            filter.label()
        )));
    }
    Ok(summarize(&obs))
}
