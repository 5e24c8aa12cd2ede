use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::economy::WorldEconomy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbamMode {
    Off,
    ReducedEndogenous,
    ReducedExogenous,
    FullEndogenous,
    FullExogenous,
}

impl CbamMode {
    pub fn is_on(self) -> bool {
        self != CbamMode::Off
    }

    pub fn is_endogenous(self) -> bool {
        matches!(self, CbamMode::ReducedEndogenous | CbamMode::FullEndogenous)
    }

    pub fn is_reduced(self) -> bool {
        matches!(
            self,
            CbamMode::ReducedEndogenous | CbamMode::ReducedExogenous
        )
    }

    /// The same coverage with the other wedge timing.
    pub fn counterpart(self) -> CbamMode {
        match self {
            CbamMode::Off => CbamMode::Off,
            CbamMode::ReducedEndogenous => CbamMode::ReducedExogenous,
            CbamMode::ReducedExogenous => CbamMode::ReducedEndogenous,
            CbamMode::FullEndogenous => CbamMode::FullExogenous,
            CbamMode::FullExogenous => CbamMode::FullEndogenous,
        }
    }
}

/// Which revenue shares enter collected tariff revenue in the income equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncomeClosure {
    /// Counterfactual shares; closes the world budget exactly.
    #[default]
    Counterfactual,
    /// Steady-state shares, kept for sensitivity runs.
    Baseline,
}

/// Ad valorem tariff on one flow. Labels are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffOverride {
    pub origin_country: usize,
    pub origin_sector: usize,
    pub dest_country: usize,
    pub dest_sector: usize,
    pub kappa: f64,
}

fn default_damping() -> f64 {
    0.1
}
fn default_tolerance() -> f64 {
    1e-9
}
fn default_max_iterations() -> usize {
    50_000
}
fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScenario {
    #[serde(default)]
    pub name: String,
    pub cbam_mode: CbamMode,
    /// Importing countries (1-based). Defaults to the ETS area.
    #[serde(default)]
    pub importer_set: Option<Vec<usize>>,
    /// Covered sectors (1-based). Defaults to the reduced list or the ETS.
    #[serde(default)]
    pub sector_set: Option<Vec<usize>>,
    #[serde(default)]
    pub tariff_overrides: Vec<TariffOverride>,
    /// Per-country multipliers on capped emission supply.
    #[serde(default)]
    pub emission_supply_multipliers: Option<Vec<f64>>,
    /// Per-country multipliers on free-allowance shares.
    #[serde(default)]
    pub free_allowance_scale: Option<Vec<f64>>,
    /// Multiplies every border-adjustment wedge.
    #[serde(default = "default_scale")]
    pub cbam_scale: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub income_closure: IncomeClosure,
}

impl Default for PolicyScenario {
    fn default() -> Self {
        Self::new(CbamMode::Off)
    }
}

impl PolicyScenario {
    pub fn new(cbam_mode: CbamMode) -> Self {
        Self {
            name: format!("{cbam_mode:?}").to_lowercase(),
            cbam_mode,
            importer_set: None,
            sector_set: None,
            tariff_overrides: Vec::new(),
            emission_supply_multipliers: None,
            free_allowance_scale: None,
            cbam_scale: 1.0,
            damping: default_damping(),
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            income_closure: IncomeClosure::Counterfactual,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_tariff(mut self, flow: [usize; 4], kappa: f64) -> Self {
        self.tariff_overrides.push(TariffOverride {
            origin_country: flow[0],
            origin_sector: flow[1],
            dest_country: flow[2],
            dest_sector: flow[3],
            kappa,
        });
        self
    }

    /// True when the scenario moves nothing but the border adjustment.
    pub fn has_other_shocks(&self) -> bool {
        self.tariff_overrides.iter().any(|t| t.kappa != 0.0)
            || self
                .emission_supply_multipliers
                .as_ref()
                .is_some_and(|m| m.iter().any(|x| *x != 1.0))
            || self
                .free_allowance_scale
                .as_ref()
                .is_some_and(|m| m.iter().any(|x| *x != 1.0))
    }

    /// Dense form checked against `econ`.
    pub fn resolve(&self, econ: &WorldEconomy) -> Result<ResolvedScenario> {
        let d = econ.dims;
        let (n, jn, nj) = (d.n_countries, d.n_sectors, d.nj());
        let arg = |m: String| Err(Error::Argument(m));
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return arg(format!("damping {} outside (0,1]", self.damping));
        }
        if !(self.tolerance > 0.0) {
            return arg(format!("tolerance {} must be positive", self.tolerance));
        }
        if self.max_iterations == 0 {
            return arg("max_iterations must be positive".into());
        }
        if !(self.cbam_scale >= 0.0) {
            return arg(format!(
                "cbam_scale {} must be nonnegative",
                self.cbam_scale
            ));
        }
        let importers = match &self.importer_set {
            None => econ.eu_mask.clone(),
            Some(list) => {
                let mut mask = vec![false; n];
                for &c in list {
                    if c == 0 || c > n {
                        return arg(format!("importer country {c} outside 1..={n}"));
                    }
                    mask[c - 1] = true;
                }
                mask
            }
        };
        let sectors = match &self.sector_set {
            None if self.cbam_mode.is_reduced() => econ.taxonomy.cbam_reduced.clone(),
            None => econ.taxonomy.ets.clone(),
            Some(list) => {
                let mut mask = vec![false; jn];
                for &s in list {
                    if s == 0 || s > jn {
                        return arg(format!("covered sector {s} outside 1..={jn}"));
                    }
                    mask[s - 1] = true;
                }
                mask
            }
        };
        if self.cbam_mode.is_reduced() {
            if let Some(j) = (0..jn).find(|&j| sectors[j] && !econ.taxonomy.ets[j]) {
                return arg(format!(
                    "reduced coverage includes non-ETS sector {}",
                    j + 1
                ));
            }
        }
        if self.cbam_mode.is_on() && !importers.iter().any(|x| *x) {
            return arg("border adjustment needs at least one importing country".into());
        }
        let mut kappa = DMatrix::zeros(nj, nj);
        for t in &self.tariff_overrides {
            let r = d.flat_index(t.origin_country, t.origin_sector)?;
            let c = d.flat_index(t.dest_country, t.dest_sector)?;
            if !(t.kappa > -1.0) || !t.kappa.is_finite() {
                return arg(format!("tariff {} on flow must exceed -1", t.kappa));
            }
            kappa[(r, c)] = t.kappa;
        }
        let per_country = |v: &Option<Vec<f64>>, what: &str| -> Result<DVector<f64>> {
            match v {
                None => Ok(DVector::from_element(n, 1.0)),
                Some(v) if v.len() != n => Err(Error::Argument(format!(
                    "{what} has {} entries for {n} countries",
                    v.len()
                ))),
                Some(v) => Ok(DVector::from_column_slice(v)),
            }
        };
        let supply_multipliers = per_country(
            &self.emission_supply_multipliers,
            "emission_supply_multipliers",
        )?;
        if let Some(i) = supply_multipliers.iter().position(|m| !(*m > 0.0)) {
            return arg(format!(
                "emission supply multiplier of country {} must be positive",
                i + 1
            ));
        }
        let alloc_scale = per_country(&self.free_allowance_scale, "free_allowance_scale")?;
        let free_alloc_prime =
            DVector::from_fn(nj, |k, _| econ.free_alloc[k] * alloc_scale[d.country_of(k)]);
        if let Some(k) = free_alloc_prime
            .iter()
            .position(|e| !(*e >= 0.0 && *e < 1.0))
        {
            return arg(format!(
                "counterfactual free allowance share {} at index {k} outside [0,1)",
                free_alloc_prime[k]
            ));
        }
        Ok(ResolvedScenario {
            mode: self.cbam_mode,
            importers,
            sectors,
            kappa,
            supply_multipliers,
            free_alloc_prime,
            cbam_scale: self.cbam_scale,
        })
    }
}

/// A scenario expanded against a specific economy.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub mode: CbamMode,
    pub importers: Vec<bool>,
    pub sectors: Vec<bool>,
    pub kappa: DMatrix<f64>,
    pub supply_multipliers: DVector<f64>,
    pub free_alloc_prime: DVector<f64>,
    pub cbam_scale: f64,
}
