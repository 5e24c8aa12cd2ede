use nalgebra::{DMatrix, DVector};

use crate::economy::WorldEconomy;
use crate::error::{Error, Result};
use crate::solver::scenario::ResolvedScenario;

/// Border-adjustment wedge on good `k` from exporter `n` bought in importer `i`.
///
/// `rho` is the exporter's emissions elasticity, `t_i`/`t_n` the carbon
/// prices and `nu` the ratio of observed prices. A zero exporter price
/// charges the importer's full price; otherwise only the excess is charged,
/// and nothing when the exporter's price is at least as high.
///
/// ```
/// use cbam_ge::solver::cbam_wedge;
/// assert!((cbam_wedge(0.05, 1.2, 0.4, 1.0, true).unwrap() - 0.15).abs() < 1e-15);
/// assert_eq!(cbam_wedge(0.1, 1.0, 2.0, 1.0, true).unwrap(), 0.0);
/// ```
pub fn cbam_wedge(rho: f64, t_i: f64, t_n: f64, nu: f64, in_scope: bool) -> Result<f64> {
    if !(rho >= 0.0 && t_i >= 0.0 && t_n >= 0.0) {
        return Err(Error::Argument(format!(
            "wedge inputs must be nonnegative (rho {rho}, t_i {t_i}, t_n {t_n})"
        )));
    }
    if !(nu > 0.0) {
        return Err(Error::Argument(format!(
            "price ratio must be positive, got {nu}"
        )));
    }
    if !in_scope {
        return Ok(0.0);
    }
    let home = t_i * nu;
    Ok(if t_n == 0.0 {
        rho * home
    } else if home > t_n {
        rho * home / t_n
    } else {
        0.0
    })
}

/// Wedge matrix evaluated at carbon price hats `t_hat`.
pub fn cbam_matrix(
    econ: &WorldEconomy,
    scn: &ResolvedScenario,
    t_hat: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let d = econ.dims;
    let nj = d.nj();
    let mut m = DMatrix::zeros(nj, nj);
    if !scn.mode.is_on() || scn.cbam_scale == 0.0 {
        return Ok(m);
    }
    for i in (0..d.n_countries).filter(|&i| scn.importers[i]) {
        let obs_i = econ.observed_carbon_price[i];
        if obs_i == 0.0 {
            continue;
        }
        for n in (0..d.n_countries).filter(|&n| !scn.importers[n]) {
            let obs_n = econ.observed_carbon_price[n];
            let (t_n, nu) = if obs_n == 0.0 {
                (0.0, 1.0)
            } else {
                (t_hat[n], obs_i / obs_n)
            };
            for k in (0..d.n_sectors).filter(|&k| scn.sectors[k]) {
                let r = d.at(n, k);
                let w = scn.cbam_scale * cbam_wedge(econ.rho[r], t_hat[i], t_n, nu, true)?;
                for j in 0..d.n_sectors {
                    m[(r, d.at(i, j))] = w;
                }
            }
        }
    }
    Ok(m)
}

/// `tau_tilde' = 1 + kappa' + CBAM'`.
pub fn tau_tilde(
    econ: &WorldEconomy,
    scn: &ResolvedScenario,
    t_hat: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let mut m = cbam_matrix(econ, scn, t_hat)?;
    m += &scn.kappa;
    m.add_scalar_mut(1.0);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::solver::{CbamMode, PolicyScenario};

    #[test]
    fn branches() {
        assert!((cbam_wedge(0.1, 1.0, 0.0, 1.0, true).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(cbam_wedge(0.1, 1.0, 2.0, 1.0, true).unwrap(), 0.0);
        assert!((cbam_wedge(0.05, 1.2, 0.4, 1.0, true).unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(cbam_wedge(0.1, 1.0, 0.0, 1.0, false).unwrap(), 0.0);
        // tie is exempt
        assert_eq!(cbam_wedge(0.1, 2.0, 1.0, 0.5, true).unwrap(), 0.0);
        assert!(cbam_wedge(-0.1, 1.0, 1.0, 1.0, true).is_err());
        assert!(cbam_wedge(0.1, 1.0, 1.0, 0.0, true).is_err());
    }

    #[test]
    fn scope_of_matrix() {
        let econ = fixtures::leakage_four_country();
        let scn = PolicyScenario::new(CbamMode::ReducedEndogenous)
            .resolve(&econ)
            .unwrap();
        let m = cbam_matrix(&econ, &scn, &DVector::from_element(4, 1.0)).unwrap();
        let d = econ.dims;
        for r in 0..d.nj() {
            for c in 0..d.nj() {
                let (n, k, i) = (d.country_of(r), d.sector_of(r), d.country_of(c));
                let expect_on = i == 0 && n != 0 && k == 1 && n != 2;
                assert_eq!(m[(r, c)] > 0.0, expect_on, "({r},{c})");
            }
        }
        // dirty exporter: rho * 85 / 20
        let r = d.at(1, 1);
        assert!((m[(r, 0)] - econ.rho[r] * 4.25).abs() < 1e-12);
    }
}
