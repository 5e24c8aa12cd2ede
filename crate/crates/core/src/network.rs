//! Input-output algebra on the country-sector network: cost and revenue
//! shares, the Leontief inverse and Domar weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Margin below one that the spectral radius of a revenue-share matrix must
/// respect before it is inverted.
pub const SPECTRAL_MARGIN: f64 = 1e-9;

/// Cost shares, revenue shares and the materials share `gamma`.
///
/// Rows index the supplying pair `(n, k)`, columns the purchasing pair
/// `(i, j)`.
#[derive(Debug, Clone)]
pub struct ShareMatrices {
    pub omega_tilde: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub gamma: DVector<f64>,
}

impl ShareMatrices {
    /// Builds revenue shares `omega = gamma_col * omega_tilde / tau_tilde`.
    /// `tau_tilde = None` means all wedges are zero.
    pub fn new(
        omega_tilde: DMatrix<f64>,
        beta: &DVector<f64>,
        rho: &DVector<f64>,
        tau_tilde: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        let nj = beta.len();
        if omega_tilde.nrows() != nj || omega_tilde.ncols() != nj || rho.len() != nj {
            return Err(Error::Argument(format!(
                "share matrix dimension mismatch: omega_tilde {}x{}, beta {}, rho {}",
                omega_tilde.nrows(),
                omega_tilde.ncols(),
                nj,
                rho.len()
            )));
        }
        let gamma = materials_share(beta, rho);
        let mut omega = omega_tilde.clone();
        for c in 0..nj {
            for r in 0..nj {
                let tau = tau_tilde.map_or(1.0, |t| t[(r, c)]);
                omega[(r, c)] *= gamma[c] / tau;
            }
        }
        Ok(Self {
            omega_tilde,
            omega,
            gamma,
        })
    }

    pub fn leontief_inverse(&self) -> Result<DMatrix<f64>> {
        leontief_inverse(&self.omega)
    }
}

/// `gamma = (1 - beta)(1 - rho)`, the Cobb-Douglas exponent on materials.
pub fn materials_share(beta: &DVector<f64>, rho: &DVector<f64>) -> DVector<f64> {
    beta.zip_map(rho, |b, r| (1.0 - b) * (1.0 - r))
}

/// Column sums of a square matrix.
pub fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

/// Estimates the spectral radius of a nonnegative matrix.
///
/// The maximum column sum bounds the radius from above; when that bound is
/// already below `1 - SPECTRAL_MARGIN` it is returned directly. Otherwise 200
/// power iterations (tolerance 1e-9) refine the estimate.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    let bound = column_sums(m).iter().cloned().fold(0.0, f64::max);
    if bound < 1.0 - SPECTRAL_MARGIN {
        return bound;
    }
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = bound;
    for _ in 0..200 {
        let next = m * &v;
        let norm = next.abs().sum();
        if norm == 0.0 {
            return 0.0;
        }
        let v_next = next / norm;
        let change = (&v_next - &v).abs().max();
        v = v_next;
        let delta = (norm - estimate).abs();
        estimate = norm;
        if change < 1e-9 && delta < 1e-9 {
            break;
        }
    }
    estimate
}

/// `Psi = (I - Omega)^-1`.
///
/// Fails with [`Error::IllPosed`] when the spectral radius of `omega` is at
/// least `1 - 1e-9`.
pub fn leontief_inverse(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = omega.nrows();
    if omega.ncols() != n {
        return Err(Error::Argument(
            "Leontief inverse needs a square matrix".into(),
        ));
    }
    let radius = spectral_radius(omega);
    if radius >= 1.0 - SPECTRAL_MARGIN {
        let offending = column_sums(omega)
            .iter()
            .enumerate()
            .filter(|(_, s)| **s >= 1.0 - SPECTRAL_MARGIN)
            .map(|(i, s)| (i, *s))
            .collect();
        return Err(Error::IllPosed { radius, offending });
    }
    let a = DMatrix::<f64>::identity(n, n) - omega;
    let inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("I - Omega".into()))?;
    Ok(inv)
}

/// Solves `a x = b` by LU with one pass of iterative refinement.
pub fn solve_refined(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let mut x = lu
        .solve(b)
        .ok_or_else(|| Error::Singular("dense solve".into()))?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    Ok(x)
}

/// Domar weights `lambda = sales / world GNE`.
pub fn domar_weights(sales: &DVector<f64>, world_gne: f64) -> Result<DVector<f64>> {
    if !(world_gne > 0.0) {
        return Err(Error::InvalidState(format!(
            "world GNE must be positive, got {world_gne}"
        )));
    }
    if let Some(i) = sales.iter().position(|s| *s < 0.0) {
        return Err(Error::Argument(format!("negative sales at index {i}")));
    }
    Ok(sales / world_gne)
}
