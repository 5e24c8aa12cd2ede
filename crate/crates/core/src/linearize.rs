//! First-order responses to a small wedge on one trade flow, evaluated at
//! the steady state.
//!
//! A shock `h` raises the wedge on the flow from origin pair `(l, q)` to
//! buyer pair `(s, r)` to `1 + h`. Wage and carbon-price responses are
//! inputs ([`FactorDerivatives`]); prices, cost shares, sales, real GNE and
//! embodied emissions follow analytically from the equilibrium conditions.
//! Every function returns derivatives per unit of `h`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::economy::{within_country, SteadyState, WorldEconomy};
use crate::error::{Error, Result};
use crate::metrics::baseline_intensity;
use crate::network::{leontief_inverse, solve_refined};
use crate::solver::{solve, CbamMode, PolicyScenario, TariffOverride};

/// Shocked flow in `l, s, q, r` order: origin country, destination
/// country, origin sector, destination sector. Labels are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShockFlow {
    pub origin_country: usize,
    pub dest_country: usize,
    pub origin_sector: usize,
    pub dest_sector: usize,
}

impl ShockFlow {
    pub fn new(l: usize, s: usize, q: usize, r: usize) -> Self {
        Self {
            origin_country: l,
            dest_country: s,
            origin_sector: q,
            dest_sector: r,
        }
    }

    /// Parses `"l,s,q,r"`.
    ///
    /// ```
    /// use cbam_ge::linearize::ShockFlow;
    /// let f = ShockFlow::parse("2,1,3,1").unwrap();
    /// assert_eq!((f.origin_country, f.origin_sector), (2, 3));
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<usize> = text
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Argument(format!("flow '{text}': {e}")))?;
        match parts[..] {
            [l, s, q, r] => Ok(Self::new(l, s, q, r)),
            _ => Err(Error::Argument(format!(
                "flow '{text}' needs four labels l,s,q,r"
            ))),
        }
    }

    /// 0-based `(supplier, buyer)` flat indices.
    pub fn indices(&self, econ: &WorldEconomy) -> Result<(usize, usize)> {
        let d = econ.dims;
        Ok((
            d.flat_index(self.origin_country, self.origin_sector)?,
            d.flat_index(self.dest_country, self.dest_sector)?,
        ))
    }

    pub fn tariff(&self, kappa: f64) -> TariffOverride {
        TariffOverride {
            origin_country: self.origin_country,
            origin_sector: self.origin_sector,
            dest_country: self.dest_country,
            dest_sector: self.dest_sector,
            kappa,
        }
    }
}

impl std::fmt::Display for ShockFlow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.origin_country, self.dest_country, self.origin_sector, self.dest_sector
        )
    }
}

/// Log responses of wages and carbon prices per unit shock, by country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDerivatives {
    pub dlogw: DVector<f64>,
    pub dlogt: DVector<f64>,
}

impl FactorDerivatives {
    /// Partial-equilibrium mode: factor prices do not move.
    pub fn zero(n_countries: usize) -> Self {
        Self {
            dlogw: DVector::zeros(n_countries),
            dlogt: DVector::zeros(n_countries),
        }
    }

    /// Central difference of the nonlinear solver with a tariff of
    /// `+step` and `-step` on `flow`.
    pub fn from_solver(
        econ: &WorldEconomy,
        flow: ShockFlow,
        step: f64,
        tolerance: f64,
    ) -> Result<Self> {
        if !(step > 0.0 && step < 0.5) {
            return Err(Error::Argument(format!(
                "difference step {step} outside (0, 0.5)"
            )));
        }
        let run = |kappa: f64| {
            let mut scn = PolicyScenario::new(CbamMode::Off).with_tolerance(tolerance);
            scn.tariff_overrides.push(flow.tariff(kappa));
            solve(econ, &scn, None)
        };
        let up = run(step)?;
        let down = run(-step)?;
        let diff = |a: &DVector<f64>, b: &DVector<f64>| {
            a.zip_map(b, |x, y| (x.ln() - y.ln()) / (2.0 * step))
        };
        Ok(Self {
            dlogw: diff(&up.w_hat, &down.w_hat),
            dlogt: diff(&up.t_hat, &down.t_hat),
        })
    }

    fn check(&self, econ: &WorldEconomy) -> Result<()> {
        let n = econ.dims.n_countries;
        if self.dlogw.len() != n || self.dlogt.len() != n {
            return Err(Error::Argument(format!(
                "factor derivatives have {} / {} entries for {n} countries",
                self.dlogw.len(),
                self.dlogt.len()
            )));
        }
        Ok(())
    }
}

/// Steady-state objects shared by every formula.
struct Point<'a> {
    econ: &'a WorldEconomy,
    ss: SteadyState,
    gamma: DVector<f64>,
    /// `(I - gamma Pi')^-1`, the cost-based Leontief inverse.
    psi_cost: DMatrix<f64>,
    row: usize,
    col: usize,
}

impl<'a> Point<'a> {
    fn new(econ: &'a WorldEconomy, flow: ShockFlow) -> Result<Self> {
        let ss = econ.require_steady_state()?;
        let (row, col) = flow.indices(econ)?;
        let gamma = econ.gamma();
        let gamma_pi_t =
            DMatrix::from_fn(econ.nj(), econ.nj(), |c, r| gamma[c] * econ.iota[(r, c)]);
        let psi_cost = leontief_inverse(&gamma_pi_t)?;
        Ok(Self {
            econ,
            ss,
            gamma,
            psi_cost,
            row,
            col,
        })
    }

    fn factor_term(&self, fd: &FactorDerivatives) -> DVector<f64> {
        let e = self.econ;
        let d = e.dims;
        DVector::from_fn(d.nj(), |k, _| {
            let i = d.country_of(k);
            e.beta[k] * (1.0 - e.rho[k]) * fd.dlogw[i] + e.rho[k] * fd.dlogt[i]
        })
    }

    fn dlogp(&self, fd: &FactorDerivatives) -> DVector<f64> {
        let mut rhs = self.factor_term(fd);
        rhs[self.col] += self.gamma[self.col] * self.econ.iota[(self.row, self.col)];
        &self.psi_cost * rhs
    }

    fn dlog_omega_tilde(&self, dlogp: &DVector<f64>) -> DMatrix<f64> {
        let e = self.econ;
        let nj = e.nj();
        let mut dlog_index = e.iota.tr_mul(dlogp);
        dlog_index[self.col] += e.iota[(self.row, self.col)];
        let scale = 1.0 - e.theta;
        DMatrix::from_fn(nj, nj, |r, c| {
            let own = if (r, c) == (self.row, self.col) {
                1.0
            } else {
                0.0
            };
            scale * (dlogp[r] + own - dlog_index[c])
        })
    }

    /// Change in revenue shares `gamma omega_tilde / tau`.
    fn d_omega(&self, dlog_wt: &DMatrix<f64>) -> DMatrix<f64> {
        let e = self.econ;
        DMatrix::from_fn(e.nj(), e.nj(), |r, c| {
            let own = if (r, c) == (self.row, self.col) {
                1.0
            } else {
                0.0
            };
            self.gamma[c] * e.iota[(r, c)] * (dlog_wt[(r, c)] - own)
        })
    }

    fn tariff_revenue_rate(&self) -> f64 {
        self.gamma[self.col] * self.econ.iota[(self.row, self.col)]
    }

    /// Differentiates the sales system `A S = b`.
    fn dsales(
        &self,
        fd: &FactorDerivatives,
        dlogp: &DVector<f64>,
        d_omega: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        let e = self.econ;
        let d = e.dims;
        let nj = d.nj();
        let one_minus_sigma = 1.0 - e.sigma;
        let mut d_alpha = DMatrix::zeros(d.n_countries, d.n_sectors);
        for i in 0..d.n_countries {
            let mean: f64 = (0..d.n_sectors)
                .map(|j| e.chi[(i, j)] * dlogp[d.at(i, j)])
                .sum();
            for j in 0..d.n_sectors {
                d_alpha[(i, j)] = e.chi[(i, j)] * one_minus_sigma * (dlogp[d.at(i, j)] - mean);
            }
        }
        let mut d_tariff = DVector::zeros(nj);
        d_tariff[self.col] = self.tariff_revenue_rate();

        let mut omega = e.iota.clone();
        for (c, mut column) in omega.column_iter_mut().enumerate() {
            column *= self.gamma[c];
        }
        let a = DMatrix::<f64>::identity(nj, nj) - omega - within_country(&d, &e.chi, &e.rho);
        let d_a =
            -d_omega - within_country(&d, &d_alpha, &e.rho) - within_country(&d, &e.chi, &d_tariff);
        let db = DVector::from_fn(nj, |k, _| {
            let (i, j) = (d.country_of(k), d.sector_of(k));
            d_alpha[(i, j)] * (e.labor[i] + e.deficits[i])
                + e.chi[(i, j)] * e.labor[i] * fd.dlogw[i]
        });
        solve_refined(&a, &(db - d_a * &self.ss.sales))
    }
}

/// Price response `(I - gamma Pi')^-1 [beta (1 - rho) dlogw + rho dlogt +
/// gamma * selector]`, where the selector carries the shocked flow's input
/// weight into the buyer's row.
pub fn dlog_prices(
    econ: &WorldEconomy,
    flow: ShockFlow,
    fd: &FactorDerivatives,
) -> Result<DVector<f64>> {
    fd.check(econ)?;
    Ok(Point::new(econ, flow)?.dlogp(fd))
}

/// First-order change of the border adjustment on a flow when carbon prices
/// at destination and origin respond: `rho^2 (dlogt_s - dlogt_l)`.
pub fn dcbam(rho_l_q: f64, dlogt_s: f64, dlogt_l: f64) -> f64 {
    rho_l_q * rho_l_q * (dlogt_s - dlogt_l)
}

/// Log change of every cost share, `(1 - theta) [dlogp_supplier + own flow
/// - dlogP_buyer]`. Row = supplier, column = buyer.
pub fn dlog_cost_shares(
    econ: &WorldEconomy,
    flow: ShockFlow,
    fd: &FactorDerivatives,
) -> Result<DMatrix<f64>> {
    fd.check(econ)?;
    let pt = Point::new(econ, flow)?;
    Ok(pt.dlog_omega_tilde(&pt.dlogp(fd)))
}

/// Log change of sales by country-sector pair.
pub fn dlog_sales(
    econ: &WorldEconomy,
    flow: ShockFlow,
    fd: &FactorDerivatives,
) -> Result<DVector<f64>> {
    fd.check(econ)?;
    let pt = Point::new(econ, flow)?;
    let dlogp = pt.dlogp(fd);
    let d_omega = pt.d_omega(&pt.dlog_omega_tilde(&dlogp));
    let ds = pt.dsales(fd, &dlogp, &d_omega)?;
    Ok(ds.component_div(&pt.ss.sales))
}

/// Log change of real GNE by country: labor income share times `dlogw`,
/// permit revenue share times the log change of permit revenue, the tariff
/// revenue on the shocked flow over income, minus `chi . dlogp`.
///
/// Permit revenue is `sum rho S` within the country, so its change follows
/// from the sales response under either carbon regime.
pub fn dlog_welfare(
    econ: &WorldEconomy,
    flow: ShockFlow,
    fd: &FactorDerivatives,
) -> Result<DVector<f64>> {
    fd.check(econ)?;
    let pt = Point::new(econ, flow)?;
    let d = econ.dims;
    let dlogp = pt.dlogp(fd);
    let d_omega = pt.d_omega(&pt.dlog_omega_tilde(&dlogp));
    let ds = pt.dsales(fd, &dlogp, &d_omega)?;
    let ss = &pt.ss;
    let buyer = d.country_of(pt.col);
    Ok(DVector::from_fn(d.n_countries, |i, _| {
        let d_permit: f64 = (0..d.n_sectors)
            .map(|j| econ.rho[d.at(i, j)] * ds[d.at(i, j)])
            .sum();
        let tariff = if i == buyer {
            pt.tariff_revenue_rate() * ss.sales[pt.col]
        } else {
            0.0
        };
        let price: f64 = (0..d.n_sectors)
            .map(|j| econ.chi[(i, j)] * dlogp[d.at(i, j)])
            .sum();
        (econ.labor[i] * fd.dlogw[i] + d_permit + tariff) / ss.income[i] - price
    }))
}

/// Log change of total embodied emissions in imports split by channel.
/// The three terms sum to the total; each is weighted by origin shares of
/// baseline embodied emissions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EeiTerms {
    /// Change in tons per unit of output.
    pub intensity: f64,
    /// Change in the supply-chain multipliers.
    pub network: f64,
    /// Change in direct imports of the importing region.
    pub imports: f64,
}

impl EeiTerms {
    pub fn total(&self) -> f64 {
        self.intensity + self.network + self.imports
    }
}

pub fn eei_terms(econ: &WorldEconomy, flow: ShockFlow, fd: &FactorDerivatives) -> Result<EeiTerms> {
    fd.check(econ)?;
    let pt = Point::new(econ, flow)?;
    let d = econ.dims;
    let nj = d.nj();
    let dlogp = pt.dlogp(fd);
    let d_omega = pt.d_omega(&pt.dlog_omega_tilde(&dlogp));
    let ds = pt.dsales(fd, &dlogp, &d_omega)?;
    let sales = &pt.ss.sales;

    let mut omega = econ.iota.clone();
    for (c, mut column) in omega.column_iter_mut().enumerate() {
        column *= pt.gamma[c];
    }
    let psi = leontief_inverse(&omega)?;
    let foreign = |k: usize| !econ.eu_mask[d.country_of(k)];
    let importer = |k: usize| econ.eu_mask[d.country_of(k)];
    let x = DVector::from_fn(nj, |m, _| {
        if !foreign(m) {
            return 0.0;
        }
        (0..nj)
            .filter(|&c| importer(c))
            .map(|c| omega[(m, c)] * sales[c])
            .sum()
    });
    let dx = DVector::from_fn(nj, |m, _| {
        if !foreign(m) {
            return 0.0;
        }
        (0..nj)
            .filter(|&c| importer(c))
            .map(|c| d_omega[(m, c)] * sales[c] + omega[(m, c)] * ds[c])
            .sum()
    });
    let intensity = baseline_intensity(econ);
    let reach = &psi * &x;
    let total: f64 = (0..nj)
        .filter(|&o| foreign(o))
        .map(|o| intensity[o] * reach[o])
        .sum();
    if !(total > 0.0) {
        return Ok(EeiTerms {
            intensity: 0.0,
            network: 0.0,
            imports: 0.0,
        });
    }
    let network_reach = &psi * (&d_omega * &reach);
    let import_reach = &psi * dx;
    let mut terms = EeiTerms {
        intensity: 0.0,
        network: 0.0,
        imports: 0.0,
    };
    for o in (0..nj).filter(|&o| foreign(o)) {
        let v = intensity[o] / total;
        terms.intensity -= v * reach[o] * fd.dlogt[d.country_of(o)];
        terms.network += v * network_reach[o];
        terms.imports += v * import_reach[o];
    }
    Ok(terms)
}

/// Log change of total (direct and upstream) embodied emissions in imports
/// of the importing region from all other countries.
pub fn dlog_eei(econ: &WorldEconomy, flow: ShockFlow, fd: &FactorDerivatives) -> Result<f64> {
    Ok(eei_terms(econ, flow, fd)?.total())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedResponse {
    pub flow: ShockFlow,
    pub dlogp: DVector<f64>,
    /// First-order change of the border adjustment on the flow.
    pub dcbam: f64,
    /// Wedge a border adjustment places on the flow to first order,
    /// `rho_l^q + dcbam`; multiply derivatives by it for the adjustment's
    /// effect.
    pub cbam_shock: f64,
    pub dlog_omega_tilde: DMatrix<f64>,
    pub dlog_welfare: DVector<f64>,
    pub dlog_eei: f64,
}

/// All first-order responses to a wedge on `flow`.
pub fn linearize(
    econ: &WorldEconomy,
    flow: ShockFlow,
    fd: &FactorDerivatives,
) -> Result<LinearizedResponse> {
    fd.check(econ)?;
    let pt = Point::new(econ, flow)?;
    let d = econ.dims;
    let dlogp = pt.dlogp(fd);
    let dlog_omega_tilde = pt.dlog_omega_tilde(&dlogp);
    let rho = econ.rho[pt.row];
    let dc = dcbam(
        rho,
        fd.dlogt[d.country_of(pt.col)],
        fd.dlogt[d.country_of(pt.row)],
    );
    Ok(LinearizedResponse {
        flow,
        dcbam: dc,
        cbam_shock: rho + dc,
        dlog_welfare: dlog_welfare(econ, flow, fd)?,
        dlog_eei: dlog_eei(econ, flow, fd)?,
        dlogp,
        dlog_omega_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::{CarbonRegime, SectorTaxonomy};
    use crate::fixtures;
    use crate::index::Dimensions;

    /// Two closed single-sector economies with `beta = 0.5`, `rho = 0`,
    /// so sales are twice labor.
    fn autarky() -> WorldEconomy {
        WorldEconomy {
            dims: Dimensions::new(2, 1).unwrap(),
            country_names: vec![],
            sector_names: vec![],
            iota: DMatrix::identity(2, 2),
            beta: DVector::from_element(2, 0.5),
            rho: DVector::zeros(2),
            chi: DMatrix::from_element(2, 1, 1.0),
            labor: DVector::from_vec(vec![1.0, 3.0]),
            deficits: DVector::zeros(2),
            carbon_regime: vec![CarbonRegime::Priced { price: 1.0 }; 2],
            free_alloc: DVector::zeros(2),
            observed_carbon_price: DVector::zeros(2),
            theta: 4.0,
            sigma: 4.0,
            taxonomy: SectorTaxonomy::all(1),
            eu_mask: vec![true, false],
        }
    }

    #[test]
    fn geometric_sum_in_autarky() {
        let econ = autarky();
        let p = dlog_prices(
            &econ,
            ShockFlow::new(1, 1, 1, 1),
            &FactorDerivatives::zero(2),
        )
        .unwrap();
        assert!((p[0] - 1.0).abs() < 1e-14);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn zero_weight_flow_has_no_price_effect() {
        let econ = autarky();
        let p = dlog_prices(
            &econ,
            ShockFlow::new(2, 1, 1, 1),
            &FactorDerivatives::zero(2),
        )
        .unwrap();
        assert!(p.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn cbam_derivative() {
        assert_eq!(dcbam(0.3, 0.5, 0.5), 0.0);
        assert!((dcbam(0.1, 1.0, 0.0) - 0.01).abs() < 1e-17);
    }

    #[test]
    fn unit_elasticity_freezes_cost_shares() {
        let mut econ = fixtures::three_country(2);
        econ.theta = 1.0;
        let fd = FactorDerivatives {
            dlogw: DVector::from_vec(vec![0.1, -0.2, 0.05]),
            dlogt: DVector::from_vec(vec![0.3, 0.0, 0.0]),
        };
        let m = dlog_cost_shares(&econ, ShockFlow::new(2, 1, 2, 1), &fd).unwrap();
        assert!(m.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn symmetric_competitors_move_equally() {
        let dims = Dimensions::new(3, 1).unwrap();
        let econ = WorldEconomy {
            dims,
            country_names: vec![],
            sector_names: vec![],
            iota: DMatrix::from_element(3, 3, 1.0 / 3.0),
            beta: DVector::from_element(3, 0.4),
            rho: DVector::from_element(3, 0.05),
            chi: DMatrix::from_element(3, 1, 1.0),
            labor: DVector::from_element(3, 1.0),
            deficits: DVector::zeros(3),
            carbon_regime: vec![CarbonRegime::Priced { price: 1.0 }; 3],
            free_alloc: DVector::zeros(3),
            observed_carbon_price: DVector::from_element(3, 10.0),
            theta: 4.0,
            sigma: 4.0,
            taxonomy: SectorTaxonomy::all(1),
            eu_mask: vec![true, false, false],
        }
        .close_steady_state(30.0)
        .unwrap();
        let m = dlog_cost_shares(
            &econ,
            ShockFlow::new(2, 1, 1, 1),
            &FactorDerivatives::zero(3),
        )
        .unwrap();
        // The shocked flow loses share to every other supplier of its buyer.
        assert!(m[(1, 0)] < m[(0, 0)].min(m[(2, 0)]));
        assert!(m[(0, 0)] > 0.0 && m[(2, 0)] > 0.0);
        // Suppliers 2 and 3 see identical price changes, so a third-party
        // buyer substitutes away from the costlier country 1 toward both equally.
        assert!(m[(0, 2)] < 0.0);
        assert!((m[(1, 2)] - m[(2, 2)]).abs() < 1e-13, "{m}");
        assert!((m[(1, 1)] - m[(2, 1)]).abs() < 1e-13, "{m}");
    }

    #[test]
    fn pure_price_shock_lowers_welfare_by_price_index() {
        let econ = autarky();
        let fd = FactorDerivatives::zero(2);
        let flow = ShockFlow::new(2, 2, 1, 1);
        let w = dlog_welfare(&econ, flow, &fd).unwrap();
        let p = dlog_prices(&econ, flow, &fd).unwrap();
        let ss = econ.steady_state().unwrap();
        let tariff = econ.gamma()[1] * ss.sales[1] / ss.income[1];
        assert!((w[1] - (tariff - p[1])).abs() < 1e-14);
        assert_eq!(w[0], 0.0);
    }

    #[test]
    fn no_trade_into_importers_means_no_eei_change() {
        let econ = autarky();
        let fd = FactorDerivatives {
            dlogw: DVector::from_vec(vec![0.2, 0.1]),
            dlogt: DVector::from_vec(vec![0.0, 0.4]),
        };
        assert_eq!(
            dlog_eei(&econ, ShockFlow::new(2, 2, 1, 1), &fd).unwrap(),
            0.0
        );
    }

    #[test]
    fn rejects_economy_off_steady_state() {
        let mut econ = fixtures::three_country(4);
        econ.labor[0] *= 1.05;
        let err = dlog_prices(
            &econ,
            ShockFlow::new(1, 2, 1, 1),
            &FactorDerivatives::zero(3),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotSteadyState(_)));
        assert!(dlog_welfare(
            &econ,
            ShockFlow::new(1, 2, 1, 1),
            &FactorDerivatives::zero(3)
        )
        .is_err());
        assert!(dlog_eei(
            &econ,
            ShockFlow::new(1, 2, 1, 1),
            &FactorDerivatives::zero(3)
        )
        .is_err());
    }

    #[test]
    fn parse_round_trip() {
        let f = ShockFlow::parse(" 3, 1 ,2,2").unwrap();
        assert_eq!(f.to_string(), "3,1,2,2");
        assert!(ShockFlow::parse("1,2,3").is_err());
        assert!(ShockFlow::parse("a,b,c,d").is_err());
    }
}
