//! Emissions embodied in imports and their technology/reallocation split.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::economy::WorldEconomy;
use crate::error::{Error, Result};
use crate::network::leontief_inverse;
use crate::solver::HatSolution;

/// Which imported goods enter an aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoodsFilter {
    All,
    Clean,
    Dirty,
}

impl GoodsFilter {
    pub const ALL: [GoodsFilter; 3] = [GoodsFilter::All, GoodsFilter::Clean, GoodsFilter::Dirty];

    pub fn admits(self, econ: &WorldEconomy, sector: usize) -> bool {
        match self {
            GoodsFilter::All => true,
            GoodsFilter::Clean => !econ.taxonomy.is_dirty(sector),
            GoodsFilter::Dirty => econ.taxonomy.is_dirty(sector),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GoodsFilter::All => "total",
            GoodsFilter::Clean => "clean",
            GoodsFilter::Dirty => "dirty",
        }
    }
}

/// Emissions per unit of output value and the network that carries them.
#[derive(Debug, Clone)]
pub struct EmbodimentState {
    /// Tons per currency unit of output.
    pub intensity: DVector<f64>,
    /// Revenue shares.
    pub omega: DMatrix<f64>,
    pub sales: DVector<f64>,
}

impl EmbodimentState {
    pub fn baseline(econ: &WorldEconomy) -> Result<Self> {
        let ss = econ.steady_state()?;
        let gamma = econ.gamma();
        let mut omega = econ.iota.clone();
        for (c, mut col) in omega.column_iter_mut().enumerate() {
            col *= gamma[c];
        }
        Ok(Self {
            intensity: baseline_intensity(econ),
            omega,
            sales: ss.sales,
        })
    }

    pub fn counterfactual(econ: &WorldEconomy, sol: &HatSolution) -> Result<Self> {
        check_solution(econ, sol)?;
        Ok(Self {
            intensity: counterfactual_intensity(econ, sol),
            omega: sol.omega_prime(econ),
            sales: sol.sales_prime.clone(),
        })
    }

    pub fn of(econ: &WorldEconomy, sol: Option<&HatSolution>) -> Result<Self> {
        match sol {
            Some(s) => Self::counterfactual(econ, s),
            None => Self::baseline(econ),
        }
    }
}

pub(crate) fn check_solution(econ: &WorldEconomy, sol: &HatSolution) -> Result<()> {
    if sol.sales_prime.len() != econ.nj() || sol.w_hat.len() != econ.dims.n_countries {
        return Err(Error::Argument(format!(
            "solution has {} sectors and {} countries, economy has {} and {}",
            sol.sales_prime.len(),
            sol.w_hat.len(),
            econ.nj(),
            econ.dims.n_countries
        )));
    }
    Ok(())
}

/// Tons per currency unit at the steady state: `rho / observed price`,
/// zero where carbon is unpriced.
pub fn baseline_intensity(econ: &WorldEconomy) -> DVector<f64> {
    let d = econ.dims;
    DVector::from_fn(d.nj(), |k, _| {
        let ecr = econ.observed_carbon_price[d.country_of(k)];
        if ecr > 0.0 {
            econ.rho[k] / ecr
        } else {
            0.0
        }
    })
}

/// Counterfactual tons per currency unit, `base / (t_hat * eps_hat)`.
pub fn counterfactual_intensity(econ: &WorldEconomy, sol: &HatSolution) -> DVector<f64> {
    let d = econ.dims;
    let base = baseline_intensity(econ);
    DVector::from_fn(d.nj(), |k, _| {
        let eps_hat = (1.0 - sol.free_alloc_prime[k]) / (1.0 - econ.free_alloc[k]);
        base[k] / (sol.t_hat[d.country_of(k)] * eps_hat)
    })
}

/// Producer-price value of goods shipped from each origin to importing
/// countries, excluding flows among importers.
pub fn import_flows(
    econ: &WorldEconomy,
    omega: &DMatrix<f64>,
    sales: &DVector<f64>,
    filter: GoodsFilter,
) -> DVector<f64> {
    let d = econ.dims;
    let nj = d.nj();
    DVector::from_fn(nj, |o, _| {
        let n = d.country_of(o);
        if econ.eu_mask[n] || !filter.admits(econ, d.sector_of(o)) {
            return 0.0;
        }
        (0..nj)
            .filter(|&c| econ.eu_mask[d.country_of(c)])
            .map(|c| omega[(o, c)] * sales[c])
            .sum()
    })
}

/// Embodied emissions by origin for the given intensity and network.
pub fn eei_vector(
    econ: &WorldEconomy,
    intensity: &DVector<f64>,
    omega: &DMatrix<f64>,
    sales: &DVector<f64>,
    filter: GoodsFilter,
    direct_only: bool,
) -> Result<DVector<f64>> {
    let x = import_flows(econ, omega, sales, filter);
    let reach = if direct_only {
        x
    } else {
        leontief_inverse(omega)? * x
    };
    Ok(intensity.component_mul(&reach))
}

/// Embodied emissions in imports by origin, in tons.
pub fn eei(
    econ: &WorldEconomy,
    sol: Option<&HatSolution>,
    direct_only: bool,
) -> Result<DVector<f64>> {
    let st = EmbodimentState::of(econ, sol)?;
    eei_vector(
        econ,
        &st.intensity,
        &st.omega,
        &st.sales,
        GoodsFilter::All,
        direct_only,
    )
}

/// Sum over origins outside the importing region.
pub fn foreign_total(econ: &WorldEconomy, v: &DVector<f64>) -> f64 {
    let d = econ.dims;
    (0..d.nj())
        .filter(|&k| !econ.eu_mask[d.country_of(k)])
        .map(|k| v[k])
        .sum()
}

/// Aggregate embodied emissions in tons for one filter.
pub fn eei_total(
    econ: &WorldEconomy,
    st: &EmbodimentState,
    network: &EmbodimentState,
    filter: GoodsFilter,
    direct_only: bool,
) -> Result<f64> {
    let v = eei_vector(
        econ,
        &st.intensity,
        &network.omega,
        &network.sales,
        filter,
        direct_only,
    )?;
    Ok(foreign_total(econ, &v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EeiChange {
    pub baseline_tons: f64,
    pub counterfactual_tons: f64,
    pub change_pct: f64,
}

pub fn pct_change(base: f64, cf: f64) -> f64 {
    if base == 0.0 {
        if cf == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(cf)
        }
    } else {
        100.0 * (cf - base) / base
    }
}

/// Percentage change of aggregate embodied emissions for every filter.
pub fn eei_changes(
    econ: &WorldEconomy,
    sol: &HatSolution,
    direct_only: bool,
) -> Result<Vec<(GoodsFilter, EeiChange)>> {
    let base = EmbodimentState::baseline(econ)?;
    let cf = EmbodimentState::counterfactual(econ, sol)?;
    GoodsFilter::ALL
        .iter()
        .map(|&f| {
            let b = eei_total(econ, &base, &base, f, direct_only)?;
            let c = eei_total(econ, &cf, &cf, f, direct_only)?;
            Ok((
                f,
                EeiChange {
                    baseline_tons: b,
                    counterfactual_tons: c,
                    change_pct: pct_change(b, c),
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub total: f64,
    pub technology: f64,
    pub reallocation: f64,
    pub cross_residual: f64,
}

/// Splits the change in embodied emissions (tons) between two solved states
/// into a technology term (new intensities on the old network), a
/// reallocation term (old intensities on the new network) and the residual.
/// `base = None` is the steady state.
pub fn decompose_eei(
    econ: &WorldEconomy,
    base: Option<&HatSolution>,
    cf: &HatSolution,
    filter: GoodsFilter,
    direct_only: bool,
) -> Result<Decomposition> {
    let b = EmbodimentState::of(econ, base)?;
    let c = EmbodimentState::counterfactual(econ, cf)?;
    let base_value = eei_total(econ, &b, &b, filter, direct_only)?;
    let total = eei_total(econ, &c, &c, filter, direct_only)? - base_value;
    let technology = eei_total(econ, &c, &b, filter, direct_only)? - base_value;
    let reallocation = eei_total(econ, &b, &c, filter, direct_only)? - base_value;
    Ok(Decomposition {
        total,
        technology,
        reallocation,
        cross_residual: total - technology - reallocation,
    })
}
