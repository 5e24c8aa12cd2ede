//! Calibration from input-output tables, emissions and carbon prices, and
//! construction of the policy-adjusted baseline.
//!
//! Intermediate flows map to input weights `X / sum_rows X`, final flows to
//! consumption weights, `VA / GO` to the value-added parameter and
//! `ECR * E / GO` to the emission cost share. Deficits are residual: final
//! absorption minus factor and permit income, de-meaned so they sum to zero.
//! The result is closed at its steady state with world GNE equal to total
//! final absorption.

mod baseline;
mod files;

use nalgebra::{DMatrix, DVector};

use crate::economy::{CarbonRegime, SectorTaxonomy, WorldEconomy};
use crate::error::{Error, Result};
use crate::index::Dimensions;

pub use baseline::{build_baseline, Baseline, BaselineShock};
pub(crate) use files::calibrate_with;
pub use files::{
    calibrate_manifest, export, load_inputs, read_manifest, CalibrationInputs, CalibrationManifest,
    InputFiles,
};

/// Emission cost shares are clipped to this value.
pub const RHO_CEILING: f64 = 1.0 - 1e-6;

/// Value-added shares are clamped to `[BETA_MARGIN, 1 - BETA_MARGIN]`.
pub const BETA_MARGIN: f64 = 1e-6;

/// Currency flows from an inter-country input-output table.
#[derive(Debug, Clone, PartialEq)]
pub struct RawIoTable {
    /// Intermediate purchases, row = supplying pair, column = buying pair.
    pub intermediate_flows: DMatrix<f64>,
    /// Final purchases, row = supplying pair, column = buying country.
    pub final_flows: DMatrix<f64>,
    pub gross_output: DVector<f64>,
    pub value_added: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionsInputs {
    /// Priced emissions in tons, net of freely allocated allowances.
    pub scope1_emissions: DVector<f64>,
    /// Currency per ton, by country.
    pub effective_carbon_rate: DVector<f64>,
    pub free_allowance_share: DVector<f64>,
    /// Countries operating a permit market with a fixed supply.
    pub permit_market: Vec<bool>,
}

/// A calibrated economy together with what had to be repaired on the way.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub economy: WorldEconomy,
    /// Flat indices whose zero gross output was replaced by one.
    pub imputed_output: Vec<usize>,
    pub clamped_beta: usize,
    pub clipped_rho: usize,
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in values {
        let t = sum + x;
        if f64::abs(sum) >= f64::abs(x) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Subtracts the mean, then sets the last entry so that the sum taken in
/// index order is exactly zero.
pub fn demean(v: &mut DVector<f64>) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mean = compensated_sum(v.iter().copied()) / n as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
    let head: f64 = v.iter().take(n - 1).sum();
    v[n - 1] = -head;
}

fn check_entries(what: &str, values: &[f64], dims: &Dimensions, per_pair: bool) -> Result<()> {
    if let Some(k) = values.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        let at = if per_pair {
            let (i, j) = dims.unflatten(k)?;
            format!("pair ({i},{j})")
        } else {
            format!("entry {}", k + 1)
        };
        return Err(Error::Calibration(format!(
            "{what} at {at} is {}; must be finite and nonnegative",
            values[k]
        )));
    }
    Ok(())
}

/// Maps raw flows and emissions to a steady-state economy.
pub fn ingest(
    io: &RawIoTable,
    em: &EmissionsInputs,
    taxonomy: SectorTaxonomy,
    eu_mask: Vec<bool>,
    theta: f64,
    sigma: f64,
) -> Result<Ingested> {
    let n = io.final_flows.ncols();
    let nj = io.gross_output.len();
    if n == 0 || nj % n != 0 {
        return Err(Error::Calibration(format!(
            "{nj} country-sector pairs cannot be split across {n} countries"
        )));
    }
    let dims = Dimensions::new(n, nj / n)?;
    let shape_ok = io.intermediate_flows.shape() == (nj, nj)
        && io.final_flows.nrows() == nj
        && io.value_added.len() == nj
        && em.scope1_emissions.len() == nj
        && em.free_allowance_share.len() == nj
        && em.effective_carbon_rate.len() == n
        && em.permit_market.len() == n
        && eu_mask.len() == n;
    if !shape_ok {
        return Err(Error::Calibration(format!(
            "inputs are not all sized for {n} countries x {} sectors",
            dims.n_sectors
        )));
    }
    taxonomy.validate(dims.n_sectors)?;
    check_entries(
        "intermediate flow",
        io.intermediate_flows.as_slice(),
        &dims,
        false,
    )?;
    check_entries("final flow", io.final_flows.as_slice(), &dims, false)?;
    check_entries("gross output", io.gross_output.as_slice(), &dims, true)?;
    check_entries("value added", io.value_added.as_slice(), &dims, true)?;
    check_entries("emissions", em.scope1_emissions.as_slice(), &dims, true)?;
    check_entries(
        "effective carbon rate",
        em.effective_carbon_rate.as_slice(),
        &dims,
        false,
    )?;
    if let Some(k) = em
        .free_allowance_share
        .iter()
        .position(|e| !(*e >= 0.0 && *e < 1.0))
    {
        let (i, j) = dims.unflatten(k)?;
        return Err(Error::Calibration(format!(
            "free allowance share of ({i},{j}) is {}; must lie in [0,1)",
            em.free_allowance_share[k]
        )));
    }

    let mut imputed_output = Vec::new();
    let gross_output = DVector::from_fn(nj, |k, _| {
        if io.gross_output[k] == 0.0 {
            imputed_output.push(k);
            1.0
        } else {
            io.gross_output[k]
        }
    });
    if !imputed_output.is_empty() {
        log::warn!(
            "imputed unit gross output for {} pairs",
            imputed_output.len()
        );
    }

    let mut iota = io.intermediate_flows.clone();
    for (c, mut col) in iota.column_iter_mut().enumerate() {
        let total = compensated_sum(col.iter().copied());
        if !(total > 0.0) {
            let (i, j) = dims.unflatten(c)?;
            return Err(Error::Calibration(format!(
                "intermediate purchases of ({i},{j}) sum to zero"
            )));
        }
        col /= total;
    }

    let absorption = DVector::from_fn(n, |i, _| {
        compensated_sum(io.final_flows.column(i).iter().copied())
    });
    let mut chi = DMatrix::zeros(n, dims.n_sectors);
    for i in 0..n {
        if !(absorption[i] > 0.0) {
            return Err(Error::Calibration(format!(
                "final absorption of country {} is zero",
                i + 1
            )));
        }
        for j in 0..dims.n_sectors {
            let spent = compensated_sum((0..n).map(|o| io.final_flows[(dims.at(o, j), i)]));
            chi[(i, j)] = spent / absorption[i];
        }
    }

    let mut clamped_beta = 0;
    let beta = DVector::from_fn(nj, |k, _| {
        let b = io.value_added[k] / gross_output[k];
        let c = b.clamp(BETA_MARGIN, 1.0 - BETA_MARGIN);
        if c != b {
            clamped_beta += 1;
        }
        c
    });
    if clamped_beta > 0 {
        log::warn!(
            "value-added share outside the open unit interval for {clamped_beta} pairs; clamped"
        );
    }

    let mut clipped_rho = 0;
    let rho = DVector::from_fn(nj, |k, _| {
        let r =
            em.effective_carbon_rate[dims.country_of(k)] * em.scope1_emissions[k] / gross_output[k];
        if r >= RHO_CEILING {
            clipped_rho += 1;
            RHO_CEILING
        } else {
            r
        }
    });
    if clipped_rho > 0 {
        log::warn!(
            "emission cost share reached one for {clipped_rho} pairs; clipped to {RHO_CEILING}"
        );
    }

    let mut deficits = DVector::from_fn(n, |i, _| {
        let income = compensated_sum((0..dims.n_sectors).map(|j| {
            let k = dims.at(i, j);
            (beta[k] * (1.0 - rho[k]) + rho[k]) * gross_output[k]
        }));
        absorption[i] - income
    });
    demean(&mut deficits);

    let carbon_regime = em
        .permit_market
        .iter()
        .map(|&m| {
            if m {
                CarbonRegime::Capped { supply: 1.0 }
            } else {
                CarbonRegime::Priced { price: 1.0 }
            }
        })
        .collect();
    let draft = WorldEconomy {
        dims,
        country_names: Vec::new(),
        sector_names: Vec::new(),
        iota,
        beta,
        rho,
        chi,
        labor: DVector::from_element(n, 1.0),
        deficits,
        carbon_regime,
        free_alloc: em.free_allowance_share.clone(),
        observed_carbon_price: em.effective_carbon_rate.clone(),
        theta,
        sigma,
        taxonomy,
        eu_mask,
    };
    let economy = draft.close_steady_state(compensated_sum(absorption.iter().copied()))?;
    economy.validate()?;
    economy.require_steady_state()?;
    Ok(Ingested {
        economy,
        imputed_output,
        clamped_beta,
        clipped_rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric() -> (RawIoTable, EmissionsInputs) {
        let io = RawIoTable {
            intermediate_flows: DMatrix::from_element(4, 4, 5.0),
            final_flows: DMatrix::from_element(4, 2, 10.0),
            gross_output: DVector::from_element(4, 60.0),
            value_added: DVector::from_element(4, 40.0),
        };
        let em = EmissionsInputs {
            scope1_emissions: DVector::from_element(4, 0.3),
            effective_carbon_rate: DVector::from_vec(vec![10.0, 10.0]),
            free_allowance_share: DVector::zeros(4),
            permit_market: vec![true, false],
        };
        (io, em)
    }

    fn run(io: &RawIoTable, em: &EmissionsInputs) -> Result<Ingested> {
        ingest(io, em, SectorTaxonomy::all(2), vec![true, false], 4.0, 4.0)
    }

    #[test]
    fn symmetric_world_has_uniform_shares() {
        let (io, em) = symmetric();
        let out = run(&io, &em).unwrap();
        let e = &out.economy;
        assert!(e.iota.iter().all(|x| *x == 0.25));
        assert!(e.beta.iter().all(|b| *b == 40.0 / 60.0));
        assert!(e.rho.iter().all(|r| (r - 0.05).abs() < 1e-16));
        assert!(e.chi.iter().all(|x| *x == 0.5));
        assert!(e.steady_state_check().passed);
    }

    #[test]
    fn zero_output_is_imputed() {
        let (mut io, mut em) = symmetric();
        io.gross_output[3] = 0.0;
        io.value_added[3] = 0.5;
        em.scope1_emissions[3] = 0.01;
        let out = run(&io, &em).unwrap();
        assert_eq!(out.imputed_output, vec![3]);
        assert_eq!(out.economy.beta[3], 0.5);
        assert_eq!(out.economy.rho[3], 0.1);
    }

    #[test]
    fn large_cost_share_is_clipped() {
        let (mut io, mut em) = symmetric();
        em.scope1_emissions[1] = 100.0;
        io.value_added[2] = 0.0;
        let out = run(&io, &em).unwrap();
        assert_eq!(out.clipped_rho, 1);
        assert_eq!(out.clamped_beta, 1);
        assert_eq!(out.economy.beta[2], BETA_MARGIN);
        assert_eq!(out.economy.rho[1], RHO_CEILING);
    }

    #[test]
    fn zero_purchase_column_names_the_pair() {
        let (mut io, em) = symmetric();
        io.intermediate_flows.column_mut(2).fill(0.0);
        let msg = run(&io, &em).unwrap_err().to_string();
        assert!(msg.contains("(2,1)"), "{msg}");
    }

    #[test]
    fn deficits_sum_to_exact_zero() {
        let mut v = DVector::from_vec(vec![0.1, 0.7, -0.3, 1e-3, 2.2, 1.0 / 3.0]);
        demean(&mut v);
        assert_eq!(v.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        assert_eq!(compensated_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
    }
}
