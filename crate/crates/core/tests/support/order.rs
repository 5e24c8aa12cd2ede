//! Nonlinear-versus-linear order check for the first-order responses.

use cbam_ge::linearize::{
    dlog_cost_shares, dlog_eei, dlog_prices, dlog_sales, dlog_welfare, FactorDerivatives, ShockFlow,
};
use cbam_ge::metrics::{consumption_price_index, eei, foreign_total};
use cbam_ge::{solve, CbamMode, HatSolution, PolicyScenario, WorldEconomy};

pub const TOL: f64 = 1e-14;
pub const H: [f64; 2] = [1e-3, 5e-4];

pub fn shocked(econ: &WorldEconomy, flow: ShockFlow, h: f64) -> HatSolution {
    let mut scn = PolicyScenario::new(CbamMode::Off).with_tolerance(TOL);
    scn.tariff_overrides.push(flow.tariff(h));
    solve(econ, &scn, None).unwrap()
}

/// Log responses stacked into one vector per quantity.
pub struct Responses {
    pub prices: Vec<f64>,
    pub shares: Vec<f64>,
    pub sales: Vec<f64>,
    pub welfare: Vec<f64>,
    pub eei: Vec<f64>,
}

impl Responses {
    pub const NAMES: [&'static str; 5] = ["prices", "cost shares", "sales", "welfare", "eei"];

    fn get(&self, k: usize) -> &[f64] {
        [
            &self.prices,
            &self.shares,
            &self.sales,
            &self.welfare,
            &self.eei,
        ][k]
    }
}

pub fn nonlinear(econ: &WorldEconomy, sol: &HatSolution) -> Responses {
    let ss = econ.steady_state().unwrap();
    let nj = econ.nj();
    let pc = consumption_price_index(econ, &sol.p_hat);
    let base = foreign_total(econ, &eei(econ, None, false).unwrap());
    let cf = foreign_total(econ, &eei(econ, Some(sol), false).unwrap());
    let mut shares = Vec::new();
    for c in 0..nj {
        for r in 0..nj {
            shares.push((sol.omega_tilde_prime[(r, c)] / econ.iota[(r, c)]).ln());
        }
    }
    Responses {
        prices: sol.p_hat.iter().map(|p| p.ln()).collect(),
        shares,
        sales: sol
            .sales_prime
            .component_div(&ss.sales)
            .iter()
            .map(|x| x.ln())
            .collect(),
        welfare: (0..econ.dims.n_countries)
            .map(|i| (sol.income_prime[i] / ss.income[i] / pc[i]).ln())
            .collect(),
        eei: vec![(cf / base).ln()],
    }
}

pub fn linear(econ: &WorldEconomy, flow: ShockFlow, fd: &FactorDerivatives) -> Responses {
    let m = dlog_cost_shares(econ, flow, fd).unwrap();
    let col = |v: nalgebra::DVector<f64>| v.iter().copied().collect();
    Responses {
        prices: col(dlog_prices(econ, flow, fd).unwrap()),
        shares: m.iter().copied().collect(),
        sales: col(dlog_sales(econ, flow, fd).unwrap()),
        welfare: col(dlog_welfare(econ, flow, fd).unwrap()),
        eei: vec![dlog_eei(econ, flow, fd).unwrap()],
    }
}

fn gap(x: &[f64], dx: &[f64], h: f64) -> f64 {
    x.iter()
        .zip(dx)
        .map(|(a, b)| (a - h * b).abs())
        .fold(0.0, f64::max)
        / h
}

/// Per quantity: gaps at both steps, their ratio, and the size of the
/// derivative.
pub struct OrderRow {
    pub name: &'static str,
    pub gaps: [f64; 2],
    pub ratio: f64,
    pub size: f64,
}

impl OrderRow {
    pub fn passes(&self) -> bool {
        (1.7..=2.3).contains(&self.ratio) && self.gaps[0] < 0.05 * self.size.max(1e-3)
    }
}

pub fn order_rows(econ: &WorldEconomy, flow: ShockFlow) -> Vec<OrderRow> {
    let fd = FactorDerivatives::from_solver(econ, flow, 1e-4, TOL).unwrap();
    let lin = linear(econ, flow, &fd);
    let runs: Vec<Responses> = H
        .iter()
        .map(|&h| nonlinear(econ, &shocked(econ, flow, h)))
        .collect();
    Responses::NAMES
        .iter()
        .enumerate()
        .map(|(k, &name)| {
            let gaps = [0, 1].map(|s| gap(runs[s].get(k), lin.get(k), H[s]));
            OrderRow {
                name,
                gaps,
                ratio: gaps[0] / gaps[1],
                size: lin.get(k).iter().fold(0.0f64, |m, x| m.max(x.abs())),
            }
        })
        .collect()
}
