//! Linear regressors shared by the objectness ranker and the category models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Training loss for a linear regressor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// Squared loss with an L2 penalty on the weights (bias unpenalized),
    /// solved in closed form.
    Ridge,
    /// ε-insensitive absolute loss, L2-regularized, fitted by dual coordinate
    /// descent. The bias is learned as a weight on a constant feature.
    Svr { c: f64, epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Row-major sample matrix as an nalgebra matrix.
pub fn design_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let dim = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DescriptorDim {
            expected: dim,
            actual: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
}

/// Closed-form ridge fits of several target vectors against one design matrix.
///
/// Minimizes `Σ (wᵀx + b − t)² + reg·‖w‖²` per target. Works on centered data
/// and switches to the dual (Gram) system when there are fewer samples than
/// dimensions; both give the same minimizer.
pub struct RidgeSolver {
    mean: DVector<f64>,
    centered: DMatrix<f64>,
    reg: f64,
    factor: Factor,
}

enum Factor {
    Primal(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Dual(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    /// `pinv(XᵀX)`, used when the unregularized system is singular.
    PseudoPrimal(DMatrix<f64>),
    /// `Xᵀ·pinv(XXᵀ)`.
    PseudoDual(DMatrix<f64>),
}

impl RidgeSolver {
    pub fn new(x: &DMatrix<f64>, reg: f64) -> Result<Self> {
        if !(reg >= 0.0 && reg.is_finite()) {
            return Err(Error::param(
                "regularization",
                format!("must be >= 0, got {reg}"),
            ));
        }
        let (n, d) = x.shape();
        if n == 0 {
            return Err(Error::param("samples", "need at least one sample"));
        }
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let mut centered = x.clone();
        for j in 0..d {
            let m = mean[j];
            centered.column_mut(j).iter_mut().for_each(|v| *v -= m);
        }
        let primal = d <= n;
        let mut gram = if primal {
            centered.tr_mul(&centered)
        } else {
            &centered * centered.transpose()
        };
        for i in 0..gram.nrows() {
            gram[(i, i)] += reg;
        }
        let factor = match nalgebra::Cholesky::new(gram.clone()) {
            Some(c) if reg > 0.0 || min_pivot(&c) > 1e-12 => {
                if primal {
                    Factor::Primal(c)
                } else {
                    Factor::Dual(c)
                }
            }
            _ => {
                let pinv = gram
                    .pseudo_inverse(1e-12)
                    .map_err(|e| Error::param("design matrix", e.to_string()))?;
                if primal {
                    Factor::PseudoPrimal(pinv)
                } else {
                    Factor::PseudoDual(centered.transpose() * pinv)
                }
            }
        };
        Ok(RidgeSolver {
            mean,
            centered,
            reg,
            factor,
        })
    }

    pub fn regularization(&self) -> f64 {
        self.reg
    }

    pub fn solve(&self, targets: &[f64]) -> Result<LinearModel> {
        let n = self.centered.nrows();
        if targets.len() != n {
            return Err(Error::DescriptorDim {
                expected: n,
                actual: targets.len(),
            });
        }
        let t_mean = targets.iter().sum::<f64>() / n as f64;
        let tc = DVector::from_iterator(n, targets.iter().map(|t| t - t_mean));
        let w = match &self.factor {
            Factor::Primal(c) => c.solve(&self.centered.tr_mul(&tc)),
            Factor::Dual(c) => self.centered.tr_mul(&c.solve(&tc)),
            Factor::PseudoPrimal(p) => p * self.centered.tr_mul(&tc),
            Factor::PseudoDual(p) => p * tc,
        };
        let bias = t_mean - w.dot(&self.mean);
        Ok(LinearModel {
            weights: w.iter().copied().collect(),
            bias,
        })
    }
}

fn min_pivot(c: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = c.l_dirty();
    let scale = (0..l.nrows()).map(|i| l[(i, i)]).fold(0.0, f64::max);
    (0..l.nrows())
        .map(|i| l[(i, i)])
        .fold(f64::INFINITY, f64::min)
        / scale.max(1e-300)
}

/// Single-target ridge fit.
pub fn fit_ridge(x: &DMatrix<f64>, targets: &[f64], reg: f64) -> Result<LinearModel> {
    RidgeSolver::new(x, reg)?.solve(targets)
}

/// L2-regularized ε-insensitive SVR (dual coordinate descent, fixed sweep order).
pub fn fit_svr(x: &DMatrix<f64>, targets: &[f64], c: f64, epsilon: f64) -> Result<LinearModel> {
    let (n, d) = x.shape();
    if targets.len() != n {
        return Err(Error::DescriptorDim {
            expected: n,
            actual: targets.len(),
        });
    }
    if !(c > 0.0 && epsilon >= 0.0) {
        return Err(Error::param("svr", "need C > 0 and epsilon >= 0"));
    }
    // augmented weight vector: last entry is the bias
    let mut w = vec![0.0; d + 1];
    let mut beta = vec![0.0; n];
    let q: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let dot = |w: &[f64], i: usize| -> f64 {
        x.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[d]
    };
    for _sweep in 0..1000 {
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            let g = dot(&w, i) - targets[i];
            let gp = g + epsilon;
            let gn = g - epsilon;
            let b = beta[i];
            let proposal = if gp < q[i] * b {
                b - gp / q[i]
            } else if gn > q[i] * b {
                b - gn / q[i]
            } else {
                0.0
            };
            let nb = proposal.clamp(-c, c);
            let delta = nb - b;
            if delta != 0.0 {
                beta[i] = nb;
                for (wj, xj) in w.iter_mut().zip(x.row(i).iter()) {
                    *wj += delta * xj;
                }
                w[d] += delta;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < 1e-10 {
            break;
        }
    }
    let bias = w.pop().unwrap();
    Ok(LinearModel { weights: w, bias })
}

/// Dispatches on the configured loss.
pub fn fit(x: &DMatrix<f64>, targets: &[f64], loss: Loss, reg: f64) -> Result<LinearModel> {
    match loss {
        Loss::Ridge => fit_ridge(x, targets, reg),
        Loss::Svr { c, epsilon } => fit_svr(x, targets, c, epsilon),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line_with_vanishing_regularization() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let m = fit_ridge(&x, &[0.0, 1.0], 1e-12).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-9);
        assert!(m.bias.abs() < 1e-9);
        let m = fit_ridge(&x, &[0.0, 1.0], 0.0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_give_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(30, 5, |_, _| rng.random::<f64>());
        for reg in [0.0, 0.1, 10.0] {
            let m = fit_ridge(&x, &[0.5; 30], reg).unwrap();
            assert!(m.weights.iter().all(|w| w.abs() < 1e-12));
            assert!((m.bias - 0.5).abs() < 1e-12);
        }
    }

    /// Normal equations on the bias-augmented system with an unpenalized bias.
    fn normal_equation_oracle(x: &DMatrix<f64>, t: &[f64], reg: f64) -> Vec<f64> {
        let (n, d) = x.shape();
        let a = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[(i, j)] } else { 1.0 });
        let mut lhs = a.transpose() * &a;
        for j in 0..d {
            lhs[(j, j)] += reg;
        }
        let rhs = a.transpose() * DVector::from_column_slice(t);
        lhs.lu().solve(&rhs).unwrap().iter().copied().collect()
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(100, 20, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let t: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let m = fit_ridge(&x, &t, 1.0).unwrap();
        let oracle = normal_equation_oracle(&x, &t, 1.0);
        for j in 0..20 {
            assert!((m.weights[j] - oracle[j]).abs() < 1e-8);
        }
        assert!((m.bias - oracle[20]).abs() < 1e-8);
    }

    #[test]
    fn dual_path_matches_primal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(15, 40, |_, _| rng.random::<f64>());
        let t: Vec<f64> = (0..15).map(|_| rng.random()).collect();
        let m = fit_ridge(&x, &t, 0.5).unwrap();
        let oracle = normal_equation_oracle(&x, &t, 0.5);
        for j in 0..40 {
            assert!((m.weights[j] - oracle[j]).abs() < 1e-8);
        }
        assert!((m.bias - oracle[40]).abs() < 1e-8);
    }

    #[test]
    fn row_order_barely_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..8).map(|_| rng.random()).collect())
            .collect();
        let t: Vec<f64> = (0..60).map(|_| rng.random()).collect();
        let a = fit_ridge(&design_matrix(&rows).unwrap(), &t, 1.0).unwrap();
        let rrows: Vec<_> = rows.iter().rev().cloned().collect();
        let rt: Vec<_> = t.iter().rev().copied().collect();
        let b = fit_ridge(&design_matrix(&rrows).unwrap(), &rt, 1.0).unwrap();
        for (p, q) in a.weights.iter().zip(&b.weights) {
            assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn svr_fits_a_clean_line() {
        let x = DMatrix::from_fn(40, 1, |i, _| i as f64 / 40.0);
        let t: Vec<f64> = (0..40).map(|i| 0.2 + 0.5 * i as f64 / 40.0).collect();
        let m = fit_svr(&x, &t, 100.0, 0.001).unwrap();
        for i in 0..40 {
            let p = m.predict(&[i as f64 / 40.0]);
            assert!((p - t[i]).abs() < 0.01, "{p} vs {}", t[i]);
        }
    }
}
