use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::extractor::FeatureExtractor;
use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Gaussian fit of an embedding distribution. The covariance is the unbiased
/// sample covariance, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationStats {
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
    pub sample_count: usize,
}

impl ActivationStats {
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>, sample_count: usize) -> Result<Self> {
        let d = mean.len();
        if covariance.len() != d * d {
            return Err(Error::dim(format!(
                "covariance of {} entries for dimension {d}",
                covariance.len()
            )));
        }
        if sample_count < 2 {
            return Err(Error::invalid("activation statistics need at least 2 samples"));
        }
        if mean.iter().chain(&covariance).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("activation statistics".into()));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (covariance[i * d + j], covariance[j * d + i]);
                if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        Ok(Self {
            mean,
            covariance,
            sample_count,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.covariance)
    }
}

/// One-pass (Welford) mean and covariance accumulation.
#[derive(Clone, Debug)]
pub struct StatsAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl StatsAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim * dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        let d = self.mean.len();
        if x.len() != d {
            return Err(Error::dim(format!("embedding of length {} for dimension {d}", x.len())));
        }
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        for i in 0..d {
            let after = x[i] - self.mean[i];
            for j in 0..d {
                self.m2[j * d + i] += delta[j] * after;
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<ActivationStats> {
        if self.count < 2 {
            return Err(Error::invalid(format!(
                "activation statistics need at least 2 samples, got {}",
                self.count
            )));
        }
        let d = self.mean.len();
        let denom = (self.count - 1) as f64;
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                // average the two triangles so the result is exactly symmetric
                cov[i * d + j] = 0.5 * (self.m2[i * d + j] + self.m2[j * d + i]) / denom;
            }
        }
        ActivationStats::new(self.mean, cov, self.count)
    }
}

/// Statistics of the extractor's pooled embedding over a stream of images.
pub fn activation_stats<'a>(
    images: impl IntoIterator<Item = &'a ImageTensor>,
    extractor: &FeatureExtractor,
) -> Result<ActivationStats> {
    let mut acc = StatsAccumulator::new(extractor.embedding_dim());
    for image in images {
        acc.push(&extractor.embed(image)?)?;
    }
    acc.finish()
}

/// Square root of a symmetric positive semidefinite matrix; negative
/// eigenvalues from rounding are clamped to zero.
fn psd_sqrt(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu_p - mu_q|^2 + tr(S_p + S_q - 2 (S_p S_q)^(1/2))`.
///
/// The trace of the product root is taken as `tr((A S_q A)^(1/2))` with
/// `A = S_p^(1/2)`, a symmetric matrix with the same eigenvalues as
/// `S_p S_q`. The result is clamped at zero.
pub fn frechet_distance(p: &ActivationStats, q: &ActivationStats) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::dim(format!("stats of dimension {} and {}", p.dim(), q.dim())));
    }
    if p.mean
        .iter()
        .chain(&p.covariance)
        .chain(&q.mean)
        .chain(&q.covariance)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numeric("frechet distance inputs".into()));
    }
    let mean_term: f64 = p.mean.iter().zip(&q.mean).map(|(a, b)| (a - b).powi(2)).sum();
    let sp = p.matrix();
    let sq = q.matrix();
    let a = psd_sqrt(sp.clone());
    let product = &a * &sq * &a;
    let product = (&product + product.transpose()) * 0.5;
    let eig = SymmetricEigen::new(product);
    let cross: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let d = mean_term + sp.trace() + sq.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_closed_form() {
        let p = ActivationStats::new(vec![0.0], vec![1.0], 10).unwrap();
        let q = ActivationStats::new(vec![1.0], vec![1.0], 10).unwrap();
        assert!((frechet_distance(&p, &q).unwrap() - 1.0).abs() < 1e-10);
        let r = ActivationStats::new(vec![0.5], vec![4.0], 10).unwrap();
        // (0.5)^2 + (1 - 2)^2
        assert!((frechet_distance(&p, &r).unwrap() - 1.25).abs() < 1e-10);
    }

    #[test]
    fn two_sample_statistics() {
        let mut acc = StatsAccumulator::new(2);
        acc.push(&[1.0, 2.0]).unwrap();
        assert!(acc.clone().finish().is_err());
        acc.push(&[3.0, -2.0]).unwrap();
        let s = acc.finish().unwrap();
        assert_eq!(s.mean, vec![2.0, 0.0]);
        // unbiased: (x1 - x2)(x1 - x2)^T / 2
        assert_eq!(s.covariance, vec![2.0, -4.0, -4.0, 8.0]);
    }

    #[test]
    fn mismatched_dimensions() {
        let p = ActivationStats::new(vec![0.0], vec![1.0], 2).unwrap();
        let q = ActivationStats::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert!(frechet_distance(&p, &q).is_err());
        assert!(ActivationStats::new(vec![0.0, 0.0], vec![1.0, 0.5, 0.0, 1.0], 2).is_err());
    }
}
