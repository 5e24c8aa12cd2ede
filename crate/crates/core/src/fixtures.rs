//! Small synthetic economies used by tests, examples and the CLI.
//!
//! Every fixture is closed at its steady state, so
//! [`WorldEconomy::steady_state_check`] passes on it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::economy::{CarbonRegime, SectorTaxonomy, WorldEconomy};
use crate::index::Dimensions;

const WORLD_GNE: f64 = 100.0;

fn capped() -> CarbonRegime {
    CarbonRegime::Capped { supply: 0.0 }
}

fn priced() -> CarbonRegime {
    CarbonRegime::Priced { price: 1.0 }
}

fn normalize_columns(m: &mut DMatrix<f64>) {
    for mut c in m.column_iter_mut() {
        let s = c.sum();
        c /= s;
    }
}

fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut r in m.row_iter_mut() {
        let s = r.sum();
        r /= s;
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Two countries, two sectors. Country 1 is the ETS area with a permit
/// market; country 2 prices carbon exogenously.
pub fn two_by_two() -> WorldEconomy {
    let dims = Dimensions::new(2, 2).expect("static dimensions");
    #[rustfmt::skip]
    let mut iota = DMatrix::from_row_slice(4, 4, &[
        0.40, 0.25, 0.10, 0.05,
        0.20, 0.35, 0.05, 0.15,
        0.25, 0.10, 0.50, 0.30,
        0.15, 0.30, 0.35, 0.50,
    ]);
    normalize_columns(&mut iota);
    let econ = WorldEconomy {
        dims,
        country_names: vec!["EU".into(), "ROW".into()],
        sector_names: vec!["clean".into(), "dirty".into()],
        iota,
        beta: DVector::from_vec(vec![0.45, 0.35, 0.50, 0.30]),
        rho: DVector::from_vec(vec![0.02, 0.12, 0.03, 0.18]),
        chi: DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.6, 0.4]),
        labor: DVector::zeros(2),
        deficits: DVector::from_vec(vec![1.5, -1.5]),
        carbon_regime: vec![capped(), priced()],
        free_alloc: DVector::from_vec(vec![0.3, 0.3, 0.0, 0.0]),
        observed_carbon_price: DVector::from_vec(vec![80.0, 10.0]),
        theta: 4.0,
        sigma: 4.0,
        taxonomy: SectorTaxonomy {
            ets: vec![false, true],
            cbam_reduced: vec![false, true],
        },
        eu_mask: vec![true, false],
    };
    econ.close_steady_state(WORLD_GNE)
        .expect("two_by_two closes")
}

/// Random three-country, two-sector economy.
///
/// Country 1 is the ETS area (capped), country 2 runs its own permit
/// market, country 3 prices carbon exogenously. Free allowances are uniform
/// within each country.
pub fn three_country(seed: u64) -> WorldEconomy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dimensions::new(3, 2).expect("static dimensions");
    let nj = dims.nj();
    let mut iota = DMatrix::from_fn(nj, nj, |r, c| {
        let home = if dims.country_of(r) == dims.country_of(c) {
            3.0
        } else {
            1.0
        };
        home * rng.random_range(0.2..1.0)
    });
    normalize_columns(&mut iota);
    let beta = DVector::from_fn(nj, |_, _| rng.random_range(0.3..0.6));
    let rho = DVector::from_fn(nj, |_, _| rng.random_range(0.01..0.15));
    let mut chi = DMatrix::from_fn(3, 2, |_, _| rng.random_range(0.2..1.0));
    normalize_rows(&mut chi);
    let mut deficits = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
    let mean = deficits.mean();
    deficits.add_scalar_mut(-mean);
    let eps_country = [rng.random_range(0.1..0.5), rng.random_range(0.0..0.3), 0.0];
    let free_alloc = DVector::from_fn(nj, |k, _| eps_country[dims.country_of(k)]);
    let econ = WorldEconomy {
        dims,
        country_names: names("C", 3),
        sector_names: names("S", 2),
        iota,
        beta,
        rho,
        chi,
        labor: DVector::zeros(3),
        deficits,
        carbon_regime: vec![capped(), capped(), priced()],
        free_alloc,
        observed_carbon_price: DVector::from_vec(vec![50.0, 20.0, 10.0]),
        theta: 4.0,
        sigma: 4.0,
        taxonomy: SectorTaxonomy {
            ets: vec![true, true],
            cbam_reduced: vec![false, true],
        },
        eu_mask: vec![true, false, false],
    };
    econ.close_steady_state(WORLD_GNE)
        .expect("three_country closes")
}

/// Four countries, three sectors, built to show leakage.
///
/// 1. `EU`: permit market with a high observed price.
/// 2. `DIRTY`: exogenous low price, carbon-intensive heavy-industry exports.
/// 3. `CLEAN`: exogenous price above the EU's, low intensities.
/// 4. `THIRD`: its own permit market at a moderate price.
///
/// Sector 1 is services (outside the ETS), sector 2 heavy industry (reduced
/// list), sector 3 other manufacturing (ETS only).
pub fn leakage_four_country() -> WorldEconomy {
    let dims = Dimensions::new(4, 3).expect("static dimensions");
    let nj = dims.nj();
    // Export propensity of each (origin country, sector) and home bias.
    let reach = [
        [1.0, 1.0, 1.0],
        [0.3, 1.6, 0.8],
        [0.4, 0.9, 1.0],
        [0.3, 0.7, 0.6],
    ];
    let sector_mix = [[1.6, 0.5, 0.8], [0.6, 1.4, 1.0], [0.8, 1.0, 1.4]];
    let mut iota = DMatrix::from_fn(nj, nj, |r, c| {
        let (n, k) = (dims.country_of(r), dims.sector_of(r));
        let (i, j) = (dims.country_of(c), dims.sector_of(c));
        let home = if n == i { 5.0 } else { reach[n][k] };
        home * sector_mix[k][j] * (1.0 + 0.05 * ((r * 7 + c * 3) % 5) as f64)
    });
    normalize_columns(&mut iota);
    let beta = DVector::from_vec(vec![
        0.55, 0.35, 0.40, //
        0.50, 0.30, 0.40, //
        0.55, 0.40, 0.45, //
        0.50, 0.35, 0.40,
    ]);
    let rho = DVector::from_vec(vec![
        0.004, 0.05, 0.02, //
        0.006, 0.08, 0.025, //
        0.002, 0.015, 0.006, //
        0.005, 0.05, 0.02,
    ]);
    let mut chi = DMatrix::from_row_slice(
        4,
        3,
        &[
            0.60, 0.15, 0.25, //
            0.50, 0.25, 0.25, //
            0.55, 0.20, 0.25, //
            0.55, 0.20, 0.25,
        ],
    );
    normalize_rows(&mut chi);
    let free_alloc = DVector::from_fn(nj, |k, _| match dims.country_of(k) {
        0 => 0.4,
        3 => 0.2,
        _ => 0.0,
    });
    let econ = WorldEconomy {
        dims,
        country_names: vec!["EU".into(), "DIRTY".into(), "CLEAN".into(), "THIRD".into()],
        sector_names: vec!["services".into(), "heavy".into(), "manufacturing".into()],
        iota,
        beta,
        rho,
        chi,
        labor: DVector::zeros(4),
        deficits: DVector::from_vec(vec![2.0, -1.5, 0.5, -1.0]),
        carbon_regime: vec![capped(), priced(), priced(), capped()],
        free_alloc,
        observed_carbon_price: DVector::from_vec(vec![85.0, 20.0, 100.0, 40.0]),
        theta: 4.0,
        sigma: 4.0,
        taxonomy: SectorTaxonomy {
            ets: vec![false, true, true],
            cbam_reduced: vec![false, true, false],
        },
        eu_mask: vec![true, false, false, false],
    };
    econ.close_steady_state(WORLD_GNE)
        .expect("leakage_four_country closes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_fixture_is_reproducible() {
        assert_eq!(three_country(42), three_country(42));
        assert_ne!(three_country(42).iota, three_country(43).iota);
    }

    #[test]
    fn fixtures_validate() {
        for seed in 0..20 {
            three_country(seed).validate().unwrap();
            assert!(three_country(seed).steady_state_check().passed);
        }
        two_by_two().validate().unwrap();
        leakage_four_country().validate().unwrap();
    }
}
