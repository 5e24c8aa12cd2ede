//! The calibrated world economy and its steady state.
//!
//! All prices, wages and carbon prices equal one at the steady state and
//! every wedge is zero. Money quantities are in a single world currency.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::Dimensions;
use crate::network::{materials_share, solve_refined};

/// Residual bound under which the steady-state check passes.
pub const STEADY_STATE_TOL: f64 = 1e-10;

/// How a country's emissions market clears.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CarbonRegime {
    /// Cap-and-trade: fixed permit supply, endogenous price.
    Capped { supply: f64 },
    /// Exogenous price in model units, endogenous emissions.
    Priced { price: f64 },
}

impl CarbonRegime {
    pub fn is_capped(&self) -> bool {
        matches!(self, CarbonRegime::Capped { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorTaxonomy {
    /// Sectors covered by the emissions trading system.
    pub ets: Vec<bool>,
    /// Sectors in the reduced border-adjustment list.
    pub cbam_reduced: Vec<bool>,
}

impl SectorTaxonomy {
    pub fn new(ets: Vec<bool>, cbam_reduced: Vec<bool>) -> Result<Self> {
        let t = Self { ets, cbam_reduced };
        t.validate(t.ets.len())?;
        Ok(t)
    }

    /// Every sector in the ETS, every sector in the reduced list.
    pub fn all(n_sectors: usize) -> Self {
        Self {
            ets: vec![true; n_sectors],
            cbam_reduced: vec![true; n_sectors],
        }
    }

    pub fn validate(&self, n_sectors: usize) -> Result<()> {
        if self.ets.len() != n_sectors || self.cbam_reduced.len() != n_sectors {
            return Err(Error::InvalidEconomy(format!(
                "taxonomy has {} / {} flags for {} sectors",
                self.ets.len(),
                self.cbam_reduced.len(),
                n_sectors
            )));
        }
        if let Some(j) = (0..n_sectors).find(|&j| self.cbam_reduced[j] && !self.ets[j]) {
            return Err(Error::InvalidEconomy(format!(
                "sector {} is in the reduced list but not in the ETS",
                j + 1
            )));
        }
        Ok(())
    }

    /// Sectors counted as dirty in reports: the reduced border-adjustment list.
    pub fn is_dirty(&self, sector: usize) -> bool {
        self.cbam_reduced[sector]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldEconomy {
    pub dims: Dimensions,
    #[serde(default)]
    pub country_names: Vec<String>,
    #[serde(default)]
    pub sector_names: Vec<String>,
    /// Input weights, row = supplier, column = buyer.
    pub iota: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub rho: DVector<f64>,
    /// Consumption weights, `N x J`.
    pub chi: DMatrix<f64>,
    pub labor: DVector<f64>,
    pub deficits: DVector<f64>,
    pub carbon_regime: Vec<CarbonRegime>,
    pub free_alloc: DVector<f64>,
    /// Effective carbon rate per ton, only used for cross-country ratios.
    pub observed_carbon_price: DVector<f64>,
    pub theta: f64,
    pub sigma: f64,
    pub taxonomy: SectorTaxonomy,
    pub eu_mask: Vec<bool>,
}

/// Levels at the steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub sales: DVector<f64>,
    pub income: DVector<f64>,
    /// Permit revenue `sum_j rho S` by country.
    pub permit_revenue: DVector<f64>,
    /// Physical emissions `rho S / (1 - eps)` in model units.
    pub emissions: DVector<f64>,
    pub world_gne: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    /// Max-abs residual per equilibrium condition.
    pub residuals: Vec<(String, f64)>,
    pub passed: bool,
}

impl SteadyStateReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.residuals
            .iter()
            .filter(|(_, r)| !(*r < STEADY_STATE_TOL))
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// `M[(i,j),(i,k)] = a[i,j] * coeff[(i,k)]`, zero across countries.
pub(crate) fn within_country(
    dims: &Dimensions,
    a: &DMatrix<f64>,
    coeff: &DVector<f64>,
) -> DMatrix<f64> {
    let nj = dims.nj();
    let mut m = DMatrix::zeros(nj, nj);
    for i in 0..dims.n_countries {
        for j in 0..dims.n_sectors {
            for k in 0..dims.n_sectors {
                m[(dims.at(i, j), dims.at(i, k))] = a[(i, j)] * coeff[dims.at(i, k)];
            }
        }
    }
    m
}

/// Sums an `NJ` vector within each country.
pub fn by_country(dims: &Dimensions, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(dims.n_countries, |i, _| {
        (0..dims.n_sectors).map(|j| v[dims.at(i, j)]).sum()
    })
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |m, x| {
        if x.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(x.abs())
        }
    })
}

impl WorldEconomy {
    pub fn nj(&self) -> usize {
        self.dims.nj()
    }

    pub fn gamma(&self) -> DVector<f64> {
        materials_share(&self.beta, &self.rho)
    }

    /// Labor's Cobb-Douglas exponent `beta (1 - rho)`.
    pub fn labor_share(&self) -> DVector<f64> {
        self.beta.zip_map(&self.rho, |b, r| b * (1.0 - r))
    }

    pub fn is_capped(&self, country: usize) -> bool {
        self.carbon_regime[country].is_capped()
    }

    pub fn country_name(&self, i: usize) -> String {
        self.country_names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("C{}", i + 1))
    }

    pub fn sector_name(&self, j: usize) -> String {
        self.sector_names
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("S{}", j + 1))
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        let (n, jn, nj) = (d.n_countries, d.n_sectors, d.nj());
        let bad = |m: String| Err(Error::InvalidEconomy(m));
        if n < 2 || jn < 1 {
            return bad(format!("dimensions {n}x{jn}"));
        }
        if self.iota.shape() != (nj, nj) {
            return bad(format!(
                "iota is {:?}, expected {nj}x{nj}",
                self.iota.shape()
            ));
        }
        for (name, len) in [
            ("beta", self.beta.len()),
            ("rho", self.rho.len()),
            ("free_alloc", self.free_alloc.len()),
        ] {
            if len != nj {
                return bad(format!("{name} has length {len}, expected {nj}"));
            }
        }
        for (name, len) in [
            ("labor", self.labor.len()),
            ("deficits", self.deficits.len()),
            ("observed_carbon_price", self.observed_carbon_price.len()),
            ("carbon_regime", self.carbon_regime.len()),
            ("eu_mask", self.eu_mask.len()),
        ] {
            if len != n {
                return bad(format!("{name} has length {len}, expected {n}"));
            }
        }
        if self.chi.shape() != (n, jn) {
            return bad(format!("chi is {:?}, expected {n}x{jn}", self.chi.shape()));
        }
        self.taxonomy.validate(jn)?;
        if let Some(p) = self
            .iota
            .iter()
            .position(|x| !(*x >= 0.0) || !x.is_finite())
        {
            return bad(format!("iota entry {p} is negative or not finite"));
        }
        for c in 0..nj {
            let s: f64 = self.iota.column(c).sum();
            if (s - 1.0).abs() > 1e-12 {
                let (i, j) = d.unflatten(c).unwrap_or((0, 0));
                return bad(format!("iota column ({i},{j}) sums to {s}"));
            }
        }
        for i in 0..n {
            let s: f64 = self.chi.row(i).sum();
            if (s - 1.0).abs() > 1e-12 || self.chi.row(i).iter().any(|x| !(*x >= 0.0)) {
                return bad(format!("chi row of country {} sums to {s}", i + 1));
            }
        }
        if let Some(p) = self.beta.iter().position(|b| !(*b > 0.0 && *b < 1.0)) {
            return bad(format!("beta[{p}] = {} outside (0,1)", self.beta[p]));
        }
        if let Some(p) = self.rho.iter().position(|r| !(*r >= 0.0 && *r < 1.0)) {
            return bad(format!("rho[{p}] = {} outside [0,1)", self.rho[p]));
        }
        if let Some(p) = self
            .free_alloc
            .iter()
            .position(|e| !(*e >= 0.0 && *e < 1.0))
        {
            return bad(format!(
                "free_alloc[{p}] = {} outside [0,1)",
                self.free_alloc[p]
            ));
        }
        if let Some(p) = self.labor.iter().position(|l| !(*l > 0.0)) {
            return bad(format!("labor of country {} is not positive", p + 1));
        }
        if let Some(p) = self.observed_carbon_price.iter().position(|t| !(*t >= 0.0)) {
            return bad(format!(
                "observed carbon price of country {} is negative",
                p + 1
            ));
        }
        let total_abs: f64 = self.deficits.iter().map(|x| x.abs()).sum();
        let sum: f64 = self.deficits.sum();
        if !(sum.abs() <= 1e-9 * total_abs.max(1e-300) || sum.abs() <= 1e-12) {
            return bad(format!("deficits sum to {sum:e}"));
        }
        for (i, r) in self.carbon_regime.iter().enumerate() {
            match *r {
                CarbonRegime::Capped { supply } if !(supply >= 0.0) => {
                    return bad(format!("country {} has negative emission supply", i + 1))
                }
                CarbonRegime::Priced { price } if !(price > 0.0) => {
                    return bad(format!("country {} has nonpositive carbon price", i + 1))
                }
                _ => {}
            }
        }
        if !(self.theta > 1.0) || !(self.sigma > 1.0) {
            return bad(format!(
                "elasticities must exceed one (theta {}, sigma {})",
                self.theta, self.sigma
            ));
        }
        Ok(())
    }

    /// Solves for steady-state sales given unit prices and zero wedges:
    /// `S = gamma iota S + chi (L + sum rho S + D)`.
    pub fn steady_state(&self) -> Result<SteadyState> {
        let d = self.dims;
        let nj = d.nj();
        let gamma = self.gamma();
        let mut a = DMatrix::<f64>::identity(nj, nj);
        for c in 0..nj {
            for r in 0..nj {
                a[(r, c)] -= self.iota[(r, c)] * gamma[c];
            }
        }
        a -= within_country(&d, &self.chi, &self.rho);
        let mut b = DVector::zeros(nj);
        for i in 0..d.n_countries {
            for j in 0..d.n_sectors {
                b[d.at(i, j)] = self.chi[(i, j)] * (self.labor[i] + self.deficits[i]);
            }
        }
        let sales = solve_refined(&a, &b)?;
        Ok(self.levels_from_sales(sales))
    }

    fn levels_from_sales(&self, sales: DVector<f64>) -> SteadyState {
        let d = self.dims;
        let permit_revenue = by_country(&d, &self.rho.component_mul(&sales));
        let emissions = DVector::from_fn(d.nj(), |k, _| {
            self.rho[k] * sales[k] / (1.0 - self.free_alloc[k])
        });
        let income = &self.labor + &permit_revenue + &self.deficits;
        let world_gne = income.sum();
        SteadyState {
            sales,
            income,
            permit_revenue,
            emissions,
            world_gne,
        }
    }

    /// Evaluates every equilibrium condition at unit prices, wages and carbon
    /// prices with zero wedges. Money residuals are relative to world GNE.
    pub fn steady_state_check(&self) -> SteadyStateReport {
        let d = self.dims;
        let (n, nj) = (d.n_countries, d.nj());
        let mut residuals: Vec<(String, f64)> = Vec::new();
        let fail = |mut residuals: Vec<(String, f64)>, name: &str| {
            residuals.push((name.to_string(), f64::INFINITY));
            SteadyStateReport {
                residuals,
                passed: false,
            }
        };
        if self.iota.shape() != (nj, nj)
            || self.chi.shape() != (n, d.n_sectors)
            || [self.beta.len(), self.rho.len(), self.free_alloc.len()] != [nj; 3]
            || [
                self.labor.len(),
                self.deficits.len(),
                self.carbon_regime.len(),
            ] != [n; 3]
        {
            return fail(residuals, "dimensions");
        }
        let ss = match self.steady_state() {
            Ok(ss) => ss,
            Err(_) => return fail(residuals, "goods_market"),
        };
        let gne = ss.world_gne;
        if !(gne > 0.0) {
            return fail(residuals, "world_gne");
        }
        let gamma = self.gamma();

        // Price index and cost at unit prices: P^(1-theta) = sum iota, mc = 1.
        let price_index = max_abs((0..nj).map(|c| self.iota.column(c).sum() - 1.0));
        residuals.push(("price_index".into(), price_index));
        let cost = max_abs((0..nj).map(|k| {
            let p = self.iota.column(k).sum().max(1e-300);
            // Cobb-Douglas limit: the index is one whenever the weights sum to one.
            let log_index = if (1.0 - self.theta).abs() < 1e-12 {
                0.0
            } else {
                p.ln() / (1.0 - self.theta)
            };
            let log_mc = (1.0 - self.rho[k]) * (1.0 - self.beta[k]) * log_index;
            log_mc.exp() - 1.0
        }));
        residuals.push(("unit_cost".into(), cost));
        residuals.push(("cost_shares".into(), 0.0));
        let consumption = max_abs((0..n).map(|i| self.chi.row(i).sum() - 1.0));
        residuals.push(("consumption_shares".into(), consumption));

        let s = &ss.sales;
        let intermediate = DVector::from_fn(nj, |r, _| {
            (0..nj)
                .map(|c| self.iota[(r, c)] * gamma[c] * s[c])
                .sum::<f64>()
        });
        let goods = max_abs((0..nj).map(|k| {
            let i = d.country_of(k);
            let final_demand = self.chi[(i, d.sector_of(k))] * ss.income[i];
            (s[k] - final_demand - intermediate[k]) / gne
        }));
        residuals.push(("goods_market".into(), goods));
        let negative_sales = s.iter().cloned().fold(0.0, f64::min).min(0.0).abs() / gne;
        residuals.push(("nonnegative_sales".into(), negative_sales));

        let labor_demand = by_country(&d, &self.labor_share().component_mul(s));
        let labor = max_abs((0..n).map(|i| (labor_demand[i] - self.labor[i]) / gne));
        residuals.push(("labor_market".into(), labor));

        let emissions_by_country = by_country(&d, &ss.emissions);
        let emissions = max_abs(
            self.carbon_regime
                .iter()
                .enumerate()
                .map(|(i, r)| match *r {
                    CarbonRegime::Capped { supply } => (emissions_by_country[i] - supply) / gne,
                    CarbonRegime::Priced { price } => price - 1.0,
                }),
        );
        residuals.push(("emissions_market".into(), emissions));

        let total_abs: f64 = self.deficits.iter().map(|x| x.abs()).sum();
        residuals.push((
            "deficits".into(),
            self.deficits.sum().abs() / gne.max(total_abs),
        ));

        let value_added: f64 = (0..nj).map(|k| (1.0 - gamma[k]) * s[k]).sum();
        residuals.push(("walras".into(), (value_added - gne).abs() / gne));

        let passed = residuals.iter().all(|(_, r)| *r < STEADY_STATE_TOL);
        SteadyStateReport { residuals, passed }
    }

    /// Errors unless [`Self::steady_state_check`] passes.
    pub fn require_steady_state(&self) -> Result<SteadyState> {
        let report = self.steady_state_check();
        if !report.passed {
            return Err(Error::NotSteadyState(format!(
                "failing conditions {:?}, max residual {:.3e}",
                report.failing(),
                report.max_residual()
            )));
        }
        self.steady_state()
    }

    /// Returns a copy whose endowments are consistent with the steady state.
    ///
    /// Sales solve `S = gamma iota S + chi ((1 - gamma) S + D)` within each
    /// country, scaled so that world GNE equals `world_gne`. Labor becomes
    /// `sum beta (1 - rho) S`, capped supplies `sum rho S / (1 - eps)` and
    /// exogenous prices one.
    pub fn close_steady_state(&self, world_gne: f64) -> Result<WorldEconomy> {
        let d = self.dims;
        let nj = d.nj();
        if !(world_gne > 0.0) {
            return Err(Error::Argument(format!(
                "world GNE must be positive, got {world_gne}"
            )));
        }
        let gamma = self.gamma();
        let value_added = gamma.map(|g| 1.0 - g);
        let mut a = DMatrix::<f64>::identity(nj, nj);
        for c in 0..nj {
            for r in 0..nj {
                a[(r, c)] -= self.iota[(r, c)] * gamma[c];
            }
        }
        a -= within_country(&d, &self.chi, &value_added);
        let mut b = DVector::zeros(nj);
        for i in 0..d.n_countries {
            for j in 0..d.n_sectors {
                b[d.at(i, j)] = self.chi[(i, j)] * self.deficits[i];
            }
        }
        // The system is singular along the nominal scale; pin it with world GNE.
        for c in 0..nj {
            a[(nj - 1, c)] = value_added[c];
        }
        b[nj - 1] = world_gne;
        let sales = solve_refined(&a, &b)?;
        if let Some(k) = sales.iter().position(|s| !(*s > 0.0)) {
            let (i, j) = d.unflatten(k)?;
            return Err(Error::Calibration(format!(
                "steady-state sales of ({i},{j}) are {:.3e}; deficits too large for this network",
                sales[k]
            )));
        }
        let mut out = self.clone();
        out.labor = by_country(&d, &self.labor_share().component_mul(&sales));
        let emissions = by_country(
            &d,
            &DVector::from_fn(nj, |k, _| {
                self.rho[k] * sales[k] / (1.0 - self.free_alloc[k])
            }),
        );
        for (i, r) in out.carbon_regime.iter_mut().enumerate() {
            *r = match r {
                CarbonRegime::Capped { .. } => CarbonRegime::Capped {
                    supply: emissions[i],
                },
                CarbonRegime::Priced { .. } => CarbonRegime::Priced { price: 1.0 },
            };
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixtures_pass_steady_state_check() {
        for econ in [
            fixtures::two_by_two(),
            fixtures::three_country(7),
            fixtures::leakage_four_country(),
        ] {
            econ.validate().unwrap();
            let report = econ.steady_state_check();
            assert!(report.passed, "{:?}", report.residuals);
        }
    }

    #[test]
    fn chi_row_off_is_rejected() {
        let mut econ = fixtures::two_by_two();
        econ.chi[(0, 0)] -= 0.1;
        assert!(matches!(econ.validate(), Err(Error::InvalidEconomy(_))));
    }

    #[test]
    fn perturbed_labor_fails_check() {
        let mut econ = fixtures::three_country(3);
        econ.labor[1] *= 1.01;
        let report = econ.steady_state_check();
        assert!(!report.passed);
        assert!(report.failing().contains(&"labor_market"));
    }

    #[test]
    fn taxonomy_subset_rule() {
        assert!(SectorTaxonomy::new(vec![true, false], vec![false, true]).is_err());
        assert!(SectorTaxonomy::new(vec![true, false], vec![true, false]).is_ok());
    }

    #[test]
    fn domar_matches_consumption_propagation() {
        // Closed form: S = (I - gamma iota)^-1 (chi I) with I the steady-state incomes.
        let econ = fixtures::three_country(11);
        let ss = econ.steady_state().unwrap();
        let d = econ.dims;
        let shares =
            crate::network::ShareMatrices::new(econ.iota.clone(), &econ.beta, &econ.rho, None)
                .unwrap();
        let psi = shares.leontief_inverse().unwrap();
        let final_exp = DVector::from_fn(d.nj(), |k, _| {
            econ.chi[(d.country_of(k), d.sector_of(k))] * ss.income[d.country_of(k)] / ss.world_gne
        });
        let lambda = crate::network::domar_weights(&ss.sales, ss.world_gne).unwrap();
        let oracle = psi * final_exp;
        assert!((lambda - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn closing_is_idempotent() {
        let econ = fixtures::three_country(5);
        let ss = econ.steady_state().unwrap();
        let again = econ.close_steady_state(ss.world_gne).unwrap();
        assert!((&again.labor - &econ.labor).abs().max() < 1e-10 * ss.world_gne);
    }
}
