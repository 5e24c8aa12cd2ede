//! Independent equilibrium solver in levels.
//!
//! Unknowns are log wages, log permit prices of capped countries, log goods
//! prices and log output quantities. Equations are written in quantities:
//! CES input demands, CES household demands, goods market clearing, labor
//! market clearing, emissions market clearing, with world nominal GNE fixed
//! in place of the first labor equation. Newton with a central-difference
//! Jacobian.

use cbam_ge::CarbonRegime;
use cbam_ge::WorldEconomy;
use nalgebra::{DMatrix, DVector};

pub struct LevelsSolution {
    pub w: DVector<f64>,
    pub t: DVector<f64>,
    pub p: DVector<f64>,
    pub q: DVector<f64>,
    pub emissions: DVector<f64>,
    pub income: DVector<f64>,
    /// Final consumption quantities, `N x J`.
    pub consumption: DMatrix<f64>,
}

struct Model<'a> {
    e: &'a WorldEconomy,
    tau: &'a DMatrix<f64>,
    capped: Vec<usize>,
    gne: f64,
}

struct Unpacked {
    w: DVector<f64>,
    t: DVector<f64>,
    p: DVector<f64>,
    q: DVector<f64>,
}

impl<'a> Model<'a> {
    fn n(&self) -> usize {
        self.e.dims.n_countries
    }
    fn nj(&self) -> usize {
        self.e.dims.nj()
    }
    fn size(&self) -> usize {
        self.n() + self.capped.len() + 2 * self.nj()
    }

    fn unpack(&self, x: &DVector<f64>) -> Unpacked {
        let (n, nj) = (self.n(), self.nj());
        let w = DVector::from_fn(n, |i, _| x[i].exp());
        let mut t = DVector::from_element(n, 1.0);
        for (slot, &i) in self.capped.iter().enumerate() {
            t[i] = x[n + slot].exp();
        }
        let off = n + self.capped.len();
        let p = DVector::from_fn(nj, |k, _| x[off + k].exp());
        let q = DVector::from_fn(nj, |k, _| x[off + nj + k].exp());
        Unpacked { w, t, p, q }
    }

    fn price_index(&self, p: &DVector<f64>) -> DVector<f64> {
        let e = self.e;
        let a = 1.0 - e.theta;
        DVector::from_fn(self.nj(), |c, _| {
            let s: f64 = (0..self.nj())
                .map(|r| e.iota[(r, c)] * (p[r] * self.tau[(r, c)]).powf(a))
                .sum();
            s.powf(1.0 / a)
        })
    }

    /// Intermediate quantities `z[r, c]` and materials spending.
    fn inputs(&self, u: &Unpacked) -> DMatrix<f64> {
        let e = self.e;
        let nj = self.nj();
        let big_p = self.price_index(&u.p);
        DMatrix::from_fn(nj, nj, |r, c| {
            let gamma = (1.0 - e.beta[c]) * (1.0 - e.rho[c]);
            let buyer_price = u.p[r] * self.tau[(r, c)];
            let share = e.iota[(r, c)] * (buyer_price / big_p[c]).powf(1.0 - e.theta);
            share * gamma * u.p[c] * u.q[c] / buyer_price
        })
    }

    fn emissions(&self, u: &Unpacked) -> DVector<f64> {
        let d = self.e.dims;
        DVector::from_fn(self.nj(), |k, _| {
            self.e.rho[k] * u.p[k] * u.q[k] / (u.t[d.country_of(k)] * (1.0 - self.e.free_alloc[k]))
        })
    }

    fn income(&self, u: &Unpacked, z: &DMatrix<f64>) -> DVector<f64> {
        let e = self.e;
        let d = e.dims;
        let em = self.emissions(u);
        let mut inc = DVector::from_fn(self.n(), |i, _| u.w[i] * e.labor[i] + e.deficits[i]);
        for k in 0..self.nj() {
            let i = d.country_of(k);
            inc[i] += u.t[i] * (1.0 - e.free_alloc[k]) * em[k];
        }
        for c in 0..self.nj() {
            let i = d.country_of(c);
            for r in 0..self.nj() {
                inc[i] += (self.tau[(r, c)] - 1.0) * u.p[r] * z[(r, c)];
            }
        }
        inc
    }

    fn consumption(&self, u: &Unpacked, income: &DVector<f64>) -> DMatrix<f64> {
        let e = self.e;
        let d = e.dims;
        DMatrix::from_fn(self.n(), d.n_sectors, |i, j| {
            let pj = u.p[d.at(i, j)];
            let denom: f64 = (0..d.n_sectors)
                .map(|k| {
                    (e.chi[(i, k)] / e.chi[(i, j)])
                        * u.p[d.at(i, k)].powf(1.0 - e.sigma)
                        * pj.powf(e.sigma)
                })
                .sum();
            income[i] / denom
        })
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let e = self.e;
        let d = e.dims;
        let (n, nj) = (self.n(), self.nj());
        let u = self.unpack(x);
        let mut r = DVector::zeros(self.size());
        let big_p = self.price_index(&u.p);
        // unit cost pricing, in logs
        for k in 0..nj {
            let i = d.country_of(k);
            let mc = (u.w[i].powf(e.beta[k]) * big_p[k].powf(1.0 - e.beta[k])).powf(1.0 - e.rho[k])
                * u.t[i].powf(e.rho[k]);
            r[k] = mc.ln() - u.p[k].ln();
        }
        let z = self.inputs(&u);
        let income = self.income(&u, &z);
        let cons = self.consumption(&u, &income);
        for k in 0..nj {
            let used: f64 = z.row(k).sum();
            let fin = cons[(d.country_of(k), d.sector_of(k))];
            r[nj + k] = (u.q[k] - used - fin) / self.gne;
        }
        for i in 0..n {
            let demand: f64 = (0..d.n_sectors)
                .map(|j| {
                    let k = d.at(i, j);
                    e.beta[k] * (1.0 - e.rho[k]) * u.p[k] * u.q[k]
                })
                .sum();
            r[2 * nj + i] = (demand - u.w[i] * e.labor[i]) / self.gne;
        }
        r[2 * nj] = income.sum() / self.gne - 1.0;
        let em = self.emissions(&u);
        for (slot, &i) in self.capped.iter().enumerate() {
            let supply = match e.carbon_regime[i] {
                CarbonRegime::Capped { supply } => supply,
                CarbonRegime::Priced { .. } => unreachable!(),
            };
            let total: f64 = (0..d.n_sectors).map(|j| em[d.at(i, j)]).sum();
            r[2 * nj + n + slot] = (total - supply) / self.gne;
        }
        r
    }

    fn initial(&self) -> DVector<f64> {
        let sales = self.e.steady_state().unwrap().sales;
        let mut x = DVector::zeros(self.size());
        let off = self.n() + self.capped.len();
        for k in 0..self.nj() {
            x[off + self.nj() + k] = sales[k].ln();
        }
        x
    }
}

/// Solves the economy in levels with buyer-price wedges `tau`.
pub fn solve_levels(econ: &WorldEconomy, tau: &DMatrix<f64>) -> LevelsSolution {
    let capped: Vec<usize> = (0..econ.dims.n_countries)
        .filter(|&i| econ.is_capped(i))
        .collect();
    let gne = econ.steady_state().unwrap().world_gne;
    let m = Model {
        e: econ,
        tau,
        capped,
        gne,
    };
    let size = m.size();
    let mut x = m.initial();
    let mut f = m.residual(&x);
    for _ in 0..100 {
        if f.amax() < 1e-14 {
            break;
        }
        let h = 1e-6;
        let mut jac = DMatrix::zeros(size, size);
        for c in 0..size {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let col = (m.residual(&xp) - m.residual(&xm)) / (2.0 * h);
            jac.set_column(c, &col);
        }
        let step = jac.lu().solve(&(-&f)).expect("levels Jacobian is singular");
        let mut lambda = 1.0;
        loop {
            let trial = &x + &step * lambda;
            let ft = m.residual(&trial);
            if ft.amax() < f.amax() || lambda < 1e-4 {
                x = trial;
                f = ft;
                break;
            }
            lambda *= 0.5;
        }
    }
    assert!(
        f.amax() < 1e-12,
        "levels oracle did not converge: {:e}",
        f.amax()
    );
    let u = m.unpack(&x);
    let z = m.inputs(&u);
    let income = m.income(&u, &z);
    let consumption = m.consumption(&u, &income);
    let emissions = m.emissions(&u);
    LevelsSolution {
        w: u.w,
        t: u.t,
        p: u.p,
        q: u.q,
        emissions,
        income,
        consumption,
    }
}

/// CES utility of a consumption bundle for country `i`.
pub fn utility(econ: &WorldEconomy, i: usize, c: &DMatrix<f64>) -> f64 {
    let s = econ.sigma;
    let agg: f64 = (0..econ.dims.n_sectors)
        .map(|j| econ.chi[(i, j)].powf(1.0 / s) * c[(i, j)].powf((s - 1.0) / s))
        .sum();
    agg.powf(s / (s - 1.0))
}
