use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Mean and orthonormal principal basis (columns, by decreasing variance).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    pub basis: DMatrix<f64>,
    /// Sample variance along each basis vector.
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::DescriptorDim {
                expected: self.input_dim(),
                actual: v.len(),
            });
        }
        let centered = DVector::from_fn(v.len(), |i, _| v[i] - self.mean[i]);
        Ok(self.basis.tr_mul(&centered).iter().copied().collect())
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(coords);
        (&self.basis * c + &self.mean).iter().copied().collect()
    }
}

/// Top-`d` principal directions of the samples (rows). Uses the covariance
/// eigenproblem when the dimension is at most the sample count and the Gram
/// matrix otherwise. Each basis vector's largest-magnitude entry is positive.
pub fn pca_fit(samples: &[Vec<f64>], d: usize) -> Result<PcaModel> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::param("pca", "need at least 2 samples"));
    }
    let dim = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::DescriptorDim {
            expected: dim,
            actual: bad.len(),
        });
    }
    if d == 0 || d > dim.min(n) {
        return Err(Error::TooManyDimensions {
            requested: d,
            available: dim.min(n),
        });
    }
    let mean = DVector::from_fn(dim, |j, _| {
        samples.iter().map(|s| s[j]).sum::<f64>() / n as f64
    });
    let x = DMatrix::from_fn(n, dim, |i, j| samples[i][j] - mean[j]);
    let denom = (n - 1) as f64;
    let (values, vectors) = if dim <= n {
        let eig = SymmetricEigen::new(x.tr_mul(&x) / denom);
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        let eig = SymmetricEigen::new(&x * x.transpose() / denom);
        // XᵀV/√((n-1)λ) are the unit eigenvectors of the covariance
        let mut vecs = x.tr_mul(&eig.eigenvectors);
        for mut col in vecs.column_iter_mut() {
            let norm = col.norm();
            if norm > 1e-300 {
                col /= norm;
            }
        }
        (eig.eigenvalues, vecs)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut basis = DMatrix::zeros(dim, d);
    let mut variances = Vec::with_capacity(d);
    for (k, &i) in order.iter().take(d).enumerate() {
        let mut col = vectors.column(i).clone_owned();
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col = -col;
        }
        basis.set_column(k, &col);
        variances.push(values[i].max(0.0));
    }
    if dim > n {
        reorthonormalize(&mut basis);
    }
    Ok(PcaModel {
        mean,
        basis,
        variances,
    })
}

/// Modified Gram–Schmidt; directions with null variance from the Gram route
/// can come out non-orthogonal.
fn reorthonormalize(basis: &mut DMatrix<f64>) {
    for k in 0..basis.ncols() {
        for j in 0..k {
            let proj = basis.column(j).dot(&basis.column(k));
            let prev = basis.column(j).clone_owned();
            basis.column_mut(k).axpy(-proj, &prev, 1.0);
        }
        let norm = basis.column(k).norm();
        if norm > 1e-12 {
            basis.column_mut(k).scale_mut(1.0 / norm);
        } else {
            // fill with any unit vector orthogonal to the previous ones
            for e in 0..basis.nrows() {
                let mut v = DVector::zeros(basis.nrows());
                v[e] = 1.0;
                for j in 0..k {
                    let p = basis.column(j).dot(&v);
                    v.axpy(-p, &basis.column(j).clone_owned(), 1.0);
                }
                if v.norm() > 1e-6 {
                    let n = v.norm();
                    basis.set_column(k, &(v / n));
                    break;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect()
    }

    fn assert_orthonormal(b: &DMatrix<f64>) {
        let g = b.tr_mul(b);
        assert!((g - DMatrix::identity(b.ncols(), b.ncols())).amax() < 1e-8);
    }

    #[test]
    fn line_samples_keep_pairwise_distances() {
        let dir = [1.0, -2.0, 0.5];
        let samples: Vec<Vec<f64>> = [-1.0, 0.3, 2.0, 5.0]
            .iter()
            .map(|t| {
                dir.iter()
                    .enumerate()
                    .map(|(i, d)| i as f64 + t * d)
                    .collect()
            })
            .collect();
        let m = pca_fit(&samples, 1).unwrap();
        let proj: Vec<f64> = samples.iter().map(|s| m.project(s).unwrap()[0]).collect();
        for i in 0..4 {
            for j in 0..4 {
                let d: f64 = samples[i]
                    .iter()
                    .zip(&samples[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(((proj[i] - proj[j]).abs() - d).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn full_basis_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples = random_samples(&mut rng, 20, 6);
        let m = pca_fit(&samples, 6).unwrap();
        assert_orthonormal(&m.basis);
        for s in &samples {
            let r = m.reconstruct(&m.project(s).unwrap());
            assert!(r.iter().zip(s).all(|(a, b)| (a - b).abs() < 1e-8));
        }
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = random_samples(&mut rng, 12, 40);
        let m = pca_fit(&samples, 12).unwrap();
        assert_orthonormal(&m.basis);
        // the first 11 directions carry all the variance of 12 centered samples
        let direct = {
            let (n, dim) = (samples.len(), samples[0].len());
            let mean: Vec<f64> = (0..dim)
                .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64)
                .collect();
            let x = DMatrix::from_fn(n, dim, |i, j| samples[i][j] - mean[j]);
            let mut ev: Vec<f64> = SymmetricEigen::new(x.tr_mul(&x) / (n - 1) as f64)
                .eigenvalues
                .iter()
                .copied()
                .collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            ev
        };
        for k in 0..11 {
            assert!((m.variances[k] - direct[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn too_many_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = random_samples(&mut rng, 5, 3);
        assert!(matches!(
            pca_fit(&samples, 4),
            Err(Error::TooManyDimensions { .. })
        ));
        assert!(pca_fit(&samples[..1], 1).is_err());
    }
}
