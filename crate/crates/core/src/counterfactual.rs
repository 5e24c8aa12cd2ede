//! Structural counterfactuals: cleaner technologies and a different degree
//! of supply-chain integration of the importing region, plus sweeps that
//! measure the border adjustment's effect on embodied emissions across a
//! grid of such economies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economy::WorldEconomy;
use crate::error::{Error, Result};
use crate::metrics::{eei_total, EmbodimentState, GoodsFilter};
use crate::solver::{solve, CbamMode, PolicyScenario};

/// How the exponent mass freed (or claimed) by a change in emission cost
/// shares is split between labor and materials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentRule {
    /// Keep the labor/materials split `beta`, so both grow in proportion.
    #[default]
    Proportional,
    /// Keep the materials exponent; labor absorbs the difference.
    MaterialsFixed,
}

/// Multiplies every emission cost share by `factor` and re-closes the
/// steady state at the same world GNE.
///
/// ```
/// use cbam_ge::{counterfactual::{scale_carbon_intensity, ExponentRule}, fixtures};
/// let econ = fixtures::three_country(1);
/// let clean = scale_carbon_intensity(&econ, 0.5, ExponentRule::Proportional).unwrap();
/// assert!((clean.rho[0] - 0.5 * econ.rho[0]).abs() < 1e-15);
/// assert_eq!(clean.beta, econ.beta);
/// ```
pub fn scale_carbon_intensity(
    econ: &WorldEconomy,
    factor: f64,
    rule: ExponentRule,
) -> Result<WorldEconomy> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Argument(format!(
            "intensity factor {factor} must be positive"
        )));
    }
    let gne = econ.require_steady_state()?.world_gne;
    let max_rho = econ.rho.max();
    if !(factor * max_rho < 1.0) {
        return Err(Error::Argument(format!(
            "intensity factor {factor} pushes the largest emission share {max_rho} to one or above"
        )));
    }
    let mut out = econ.clone();
    out.rho = econ.rho.map(|r| factor * r);
    if rule == ExponentRule::MaterialsFixed {
        let gamma = econ.gamma();
        for k in 0..econ.nj() {
            let beta = 1.0 - gamma[k] / (1.0 - out.rho[k]);
            if !(beta > 0.0 && beta < 1.0) {
                let (i, j) = econ.dims.unflatten(k)?;
                return Err(Error::Argument(format!(
                    "intensity factor {factor} leaves no labor share in ({i},{j})"
                )));
            }
            out.beta[k] = beta;
        }
    }
    let out = out.close_steady_state(gne)?;
    out.validate()?;
    Ok(out)
}

/// Input columns of the importing region whose weight on domestic
/// suppliers was zero before rescaling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationReport {
    /// 1-based `(country, sector)` buyers.
    pub no_domestic_weight: Vec<(usize, usize)>,
}

/// Multiplies, in every input column of an importing-region buyer, the
/// weights on suppliers outside the region by `factor`, then renormalizes
/// the column.
///
/// ```
/// use cbam_ge::{counterfactual::scale_integration, fixtures};
/// let econ = fixtures::three_country(1);
/// let (same, report) = scale_integration(&econ, 1.0).unwrap();
/// assert!((&same.iota - &econ.iota).amax() < 1e-15);
/// assert!(report.no_domestic_weight.is_empty());
/// ```
pub fn scale_integration(
    econ: &WorldEconomy,
    factor: f64,
) -> Result<(WorldEconomy, IntegrationReport)> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Argument(format!(
            "integration factor {factor} must be positive"
        )));
    }
    let gne = econ.require_steady_state()?.world_gne;
    let d = econ.dims;
    let mut out = econ.clone();
    let mut report = IntegrationReport::default();
    for c in (0..d.nj()).filter(|&c| econ.eu_mask[d.country_of(c)]) {
        let mut column = out.iota.column_mut(c);
        let mut domestic = 0.0;
        for r in 0..d.nj() {
            if econ.eu_mask[d.country_of(r)] {
                domestic += column[r];
            } else {
                column[r] *= factor;
            }
        }
        if domestic == 0.0 {
            report.no_domestic_weight.push(d.unflatten(c)?);
        }
        let total = column.sum();
        if total > 0.0 {
            column /= total;
        }
    }
    if !report.no_domestic_weight.is_empty() {
        log::warn!(
            "{} importing columns have no domestic inputs",
            report.no_domestic_weight.len()
        );
    }
    let out = out.close_steady_state(gne)?;
    out.validate()?;
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    CarbonIntensityScale,
    IntegrationScale,
    Theta,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::CarbonIntensityScale => "carbon_intensity_scale",
            SweepAxis::IntegrationScale => "integration_scale",
            SweepAxis::Theta => "theta",
        }
    }

    /// Grid value that leaves the economy unchanged, if any.
    fn neutral(self, econ: &WorldEconomy) -> f64 {
        match self {
            SweepAxis::Theta => econ.theta,
            _ => 1.0,
        }
    }
}

fn default_base() -> PolicyScenario {
    PolicyScenario::new(CbamMode::FullEndogenous)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_base")]
    pub base_scenario: PolicyScenario,
    #[serde(default)]
    pub exponent_rule: ExponentRule,
}

/// Eleven evenly spaced points on `[0.5, 1.5]`.
///
/// ```
/// let g = cbam_ge::counterfactual::default_grid();
/// assert_eq!(g.len(), 11);
/// assert_eq!((g[0], g[5], g[10]), (0.5, 1.0, 1.5));
/// ```
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| 0.5 + k as f64 / 10.0).collect()
}

impl SweepSpec {
    pub fn new(axis: SweepAxis) -> Self {
        Self {
            axis,
            grid: default_grid(),
            base_scenario: default_base(),
            exponent_rule: ExponentRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Argument("sweep grid is empty".into()));
        }
        if let Some(x) = self.grid.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::Argument(format!(
                "{} grid value {x} must be positive",
                self.axis.label()
            )));
        }
        if self.axis == SweepAxis::IntegrationScale
            && self.grid.iter().any(|x| !(0.5..=1.5).contains(x))
        {
            log::warn!("integration grid leaves [0.5, 1.5]");
        }
        Ok(())
    }

    /// The economy at one grid value.
    pub fn economy_at(&self, econ: &WorldEconomy, value: f64) -> Result<WorldEconomy> {
        match self.axis {
            SweepAxis::CarbonIntensityScale => {
                scale_carbon_intensity(econ, value, self.exponent_rule)
            }
            SweepAxis::IntegrationScale => Ok(scale_integration(econ, value)?.0),
            SweepAxis::Theta => {
                let mut out = econ.clone();
                out.theta = value;
                out.validate()?;
                Ok(out)
            }
        }
    }
}

/// Embodied emissions in imports at one grid value, with and without the
/// border adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub direct_without_tons: f64,
    pub direct_with_tons: f64,
    pub total_without_tons: f64,
    pub total_with_tons: f64,
    /// Policy effect `(with - without)` over the no-adjustment value at the
    /// neutral grid point, in percent.
    pub direct_effect_pct: f64,
    pub total_effect_pct: f64,
    /// Emissions with the policy against the same reference, in percent:
    /// the policy effect plus the structural change itself.
    pub direct_change_pct: f64,
    pub total_change_pct: f64,
}

impl SweepPoint {
    pub fn direct_effect_tons(&self) -> f64 {
        self.direct_with_tons - self.direct_without_tons
    }

    pub fn total_effect_tons(&self) -> f64 {
        self.total_with_tons - self.total_without_tons
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub reference_direct_tons: f64,
    pub reference_total_tons: f64,
    pub points: Vec<SweepPoint>,
}

/// Tons of embodied emissions (direct, total) without and with the policy.
fn embodied(econ: &WorldEconomy, scenario: &PolicyScenario) -> Result<[f64; 4]> {
    let base = EmbodimentState::baseline(econ)?;
    let sol = solve(econ, scenario, None)?;
    let cf = EmbodimentState::counterfactual(econ, &sol)?;
    let tons = |st: &EmbodimentState, direct| eei_total(econ, st, st, GoodsFilter::All, direct);
    Ok([
        tons(&base, true)?,
        tons(&cf, true)?,
        tons(&base, false)?,
        tons(&cf, false)?,
    ])
}

/// Runs the base scenario at every grid value. Effects are reported against
/// the embodied emissions of the unmodified economy without the policy, so
/// points on the grid are comparable in tons.
pub fn run_sweep(econ: &WorldEconomy, spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let neutral = spec.economy_at(econ, spec.axis.neutral(econ))?;
    let reference = EmbodimentState::baseline(&neutral)?;
    let reference_direct = eei_total(&neutral, &reference, &reference, GoodsFilter::All, true)?;
    let reference_total = eei_total(&neutral, &reference, &reference, GoodsFilter::All, false)?;
    let pct = |tons: f64, r: f64| if r > 0.0 { 100.0 * tons / r } else { 0.0 };
    let points = spec
        .grid
        .par_iter()
        .map(|&value| {
            let at = spec.economy_at(econ, value)?;
            let [dw, dc, tw, tc] = embodied(&at, &spec.base_scenario)?;
            Ok(SweepPoint {
                value,
                direct_without_tons: dw,
                direct_with_tons: dc,
                total_without_tons: tw,
                total_with_tons: tc,
                direct_effect_pct: pct(dc - dw, reference_direct),
                total_effect_pct: pct(tc - tw, reference_total),
                direct_change_pct: pct(dc - reference_direct, reference_direct),
                total_change_pct: pct(tc - reference_total, reference_total),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis: spec.axis,
        reference_direct_tons: reference_direct,
        reference_total_tons: reference_total,
        points,
    })
}
