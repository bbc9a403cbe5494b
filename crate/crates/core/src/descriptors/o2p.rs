//! Second-order average pooling and the log-Euclidean mapping of the pooled
//! matrix to a flat vector.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Ridge added to every pooled matrix so the logarithm is defined.
pub const SPD_EPSILON: f64 = 1e-6;
pub const DEFAULT_POWER: f64 = 0.75;

/// Symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Checks squareness and symmetry (to 1e-10 relative); definiteness is
    /// checked by [`log_map`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::param("spd", "matrix is not square"));
        }
        let scale = m.amax().max(1.0);
        let n = m.nrows();
        for i in 0..n {
            for j in i + 1..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::param("spd", "matrix is not symmetric"));
                }
            }
        }
        Ok(SpdMatrix(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// `(1/M)·XᵀX + εI` for the M×n descriptor matrix `x`.
pub fn o2p_pool(x: &DMatrix<f64>) -> SpdMatrix {
    let m = x.nrows().max(1) as f64;
    let mut g = x.tr_mul(x) / m;
    symmetrize(&mut g);
    for i in 0..g.nrows() {
        g[(i, i)] += SPD_EPSILON;
    }
    SpdMatrix(g)
}

fn symmetrize(g: &mut DMatrix<f64>) {
    let n = g.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
}

/// Principal matrix logarithm via the symmetric eigendecomposition.
pub fn log_map(g: &SpdMatrix) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(g.0.clone());
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l < SPD_EPSILON / 2.0) {
        return Err(Error::NotPositiveDefinite(bad));
    }
    let logs = eig.eigenvalues.map(f64::ln);
    let u = &eig.eigenvectors;
    let mut out = u * DMatrix::from_diagonal(&logs) * u.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// `log((1/M)·XᵀX + εI)` without forming the n×n eigenproblem when the
/// descriptor count M is below the dimension n. Uses the M×M Gram matrix:
/// with `A = X/√M` and `AAᵀ = V·diag(μ)·Vᵀ`,
/// `log G = ln ε·I + Σ_k f(μ_k)·(Aᵀv_k)(Aᵀv_k)ᵀ`, `f(μ) = ln(1 + μ/ε)/μ`.
pub fn pooled_log(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = x.shape();
    if m == 0 {
        return Err(Error::EmptyMask);
    }
    if m >= n {
        return log_map(&o2p_pool(x));
    }
    let a = x / (m as f64).sqrt();
    let mut gram = &a * a.transpose();
    symmetrize(&mut gram);
    let eig = SymmetricEigen::new(gram);
    let mut out = DMatrix::from_diagonal_element(n, n, SPD_EPSILON.ln());
    let proj = a.tr_mul(&eig.eigenvectors);
    for (k, &mu) in eig.eigenvalues.iter().enumerate() {
        let mu = mu.max(0.0);
        let f = if mu > 1e-300 {
            (mu / SPD_EPSILON).ln_1p() / mu
        } else {
            1.0 / SPD_EPSILON
        };
        let col = proj.column(k);
        out.ger(f, &col, &col, 1.0);
    }
    symmetrize(&mut out);
    Ok(out)
}

/// Upper triangle (row-major, diagonal included) with off-diagonal entries
/// scaled by √2, then signed power `sign(v)·|v|^p`.
pub fn flatten_and_normalize(l: &DMatrix<f64>, p: f64) -> Vec<f64> {
    let n = l.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let v = if i == j {
                l[(i, j)]
            } else {
                std::f64::consts::SQRT_2 * l[(i, j)]
            };
            out.push(if p == 1.0 {
                v
            } else {
                v.signum() * v.abs().powf(p)
            });
        }
    }
    out
}
