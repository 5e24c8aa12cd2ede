//! Reported outcomes of a solved counterfactual.

mod eei;
mod shares;
mod welfare;

use serde::{Deserialize, Serialize};

use crate::economy::WorldEconomy;
use crate::error::{Error, Result};
use crate::solver::{HatSolution, PolicyScenario};

pub use eei::{
    baseline_intensity, counterfactual_intensity, decompose_eei, eei, eei_changes, eei_total,
    eei_vector, foreign_total, import_flows, pct_change, Decomposition, EeiChange, EmbodimentState,
    GoodsFilter,
};
pub use shares::{domar_changes, purchase_shares, Origin, Summary, Weighting};
pub use welfare::{consumption_price_index, leakage, welfare, LeakageReport, WelfareReport};

/// Everything the result tables need for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub foreign_shares: Vec<(GoodsFilter, Summary)>,
    pub domestic_shares: Vec<(GoodsFilter, Summary)>,
    pub domar: Vec<(GoodsFilter, Summary)>,
    pub eei_direct: Vec<(GoodsFilter, EeiChange)>,
    pub eei_total: Vec<(GoodsFilter, EeiChange)>,
    pub leakage: LeakageReport,
    pub welfare: WelfareReport,
    pub decomposition: Vec<(GoodsFilter, Decomposition)>,
}

fn per_filter<T>(f: impl Fn(GoodsFilter) -> Result<T>) -> Vec<(GoodsFilter, T)> {
    GoodsFilter::ALL
        .iter()
        .filter_map(|&g| f(g).ok().map(|v| (g, v)))
        .collect()
}

impl ScenarioMetrics {
    pub fn compute(econ: &WorldEconomy, sol: &HatSolution) -> Result<Self> {
        let w = Weighting::Unweighted;
        Ok(Self {
            foreign_shares: per_filter(|g| purchase_shares(econ, sol, Origin::Foreign, g, w)),
            domestic_shares: per_filter(|g| purchase_shares(econ, sol, Origin::Domestic, g, w)),
            domar: per_filter(|g| domar_changes(econ, sol, g)),
            eei_direct: eei_changes(econ, sol, true)?,
            eei_total: eei_changes(econ, sol, false)?,
            leakage: leakage(econ, sol)?,
            welfare: welfare(econ, sol)?,
            decomposition: GoodsFilter::ALL
                .iter()
                .map(|&g| Ok((g, decompose_eei(econ, None, sol, g, false)?)))
                .collect::<Result<_>>()?,
        })
    }

    fn pick<T: Copy>(v: &[(GoodsFilter, T)], g: GoodsFilter) -> Option<T> {
        v.iter().find(|(f, _)| *f == g).map(|(_, x)| *x)
    }

    /// Headline scalars keyed by stable names.
    pub fn headline(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for g in GoodsFilter::ALL {
            if let Some(s) = Self::pick(&self.foreign_shares, g) {
                out.push((format!("foreign_share_{}", g.label()), s.mean));
            }
            if let Some(s) = Self::pick(&self.domestic_shares, g) {
                out.push((format!("domestic_share_{}", g.label()), s.mean));
            }
        }
        for g in GoodsFilter::ALL {
            if let Some(e) = Self::pick(&self.eei_direct, g) {
                out.push((format!("eei_direct_{}", g.label()), e.change_pct));
            }
            if let Some(e) = Self::pick(&self.eei_total, g) {
                out.push((format!("eei_total_{}", g.label()), e.change_pct));
            }
        }
        out.push(("leakage".into(), self.leakage.change_pct));
        out.push(("eu_gne".into(), self.welfare.eu_gne_real_change));
        out.push(("extra_eu_gne".into(), self.welfare.extra_eu_gne_real_change));
        out.push(("eu_real_wage".into(), self.welfare.eu_real_wage_change));
        out
    }
}

/// `(x_endogenous - x_exogenous) / |x_exogenous|` for every headline metric.
///
/// The two scenarios must differ only in the timing of the border-adjustment
/// wedge.
pub fn endogenous_gap(
    econ: &WorldEconomy,
    endogenous: (&PolicyScenario, &HatSolution),
    exogenous: (&PolicyScenario, &HatSolution),
) -> Result<Vec<(String, f64)>> {
    let (se, xe) = endogenous;
    let (sx, xx) = exogenous;
    if se.cbam_mode.counterpart() != sx.cbam_mode && se.cbam_mode != sx.cbam_mode {
        return Err(Error::Argument(format!(
            "modes {:?} and {:?} are not a pair",
            se.cbam_mode, sx.cbam_mode
        )));
    }
    let mut a = se.clone();
    let mut b = sx.clone();
    a.cbam_mode = b.cbam_mode;
    a.name.clear();
    b.name.clear();
    if a != b {
        return Err(Error::Argument(
            "scenarios differ beyond the wedge timing".into(),
        ));
    }
    let me = ScenarioMetrics::compute(econ, xe)?.headline();
    let mx = ScenarioMetrics::compute(econ, xx)?.headline();
    Ok(me
        .into_iter()
        .zip(mx)
        .map(|((name, e), (_, x))| {
            let gap = if e == x {
                0.0
            } else if x == 0.0 {
                f64::INFINITY.copysign(e)
            } else {
                (e - x) / x.abs()
            };
            (name, gap)
        })
        .collect())
}
