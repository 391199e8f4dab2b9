use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::EmpiricalMeasure;
use crate::error::{Error, Result};
use crate::rng::{streams, StreamKey};

const SYM_TOL: f64 = 1e-12;
const EIG_TOL: f64 = 1e-12;

/// Gaussian law `N(mean, covariance)` on R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMeasure {
    /// Checks symmetry and positive semidefiniteness (eigenvalues ≥ −1e−12).
    /// `covariance` is row-major `d × d`.
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidMeasure("Gaussian needs a non-empty mean".into()));
        }
        if covariance.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, got: covariance.len() });
        }
        let cov = DMatrix::from_row_slice(d, d, &covariance);
        let asym = (&cov - cov.transpose()).abs().max();
        if !(asym <= SYM_TOL) {
            return Err(Error::NotPositiveSemidefinite(format!("asymmetric by {asym:e}")));
        }
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if !(min_eig >= -EIG_TOL) {
            return Err(Error::NotPositiveSemidefinite(format!("smallest eigenvalue {min_eig:e}")));
        }
        Ok(Self { mean: DVector::from_vec(mean), cov })
    }

    /// One-dimensional `N(mean, variance)`.
    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![mean], vec![variance])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    /// Row-major covariance.
    pub fn covariance(&self) -> Vec<f64> {
        self.cov.transpose().as_slice().to_vec()
    }

    /// `n` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> EmpiricalMeasure {
        let d = self.dim();
        let root = psd_sqrt(&self.cov);
        let key = StreamKey::new(seed, streams::SAMPLING);
        let mut pts = Vec::with_capacity(n * d);
        let mut z = DVector::zeros(d);
        for i in 0..n {
            for k in 0..d {
                z[k] = key.normal_pair(i as u64, (k / 2) as u64)[k % 2];
            }
            let x = &self.mean + &root * &z;
            pts.extend(x.iter());
        }
        EmpiricalMeasure::new(pts, d).expect("Gaussian samples are finite")
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Closed-form W_2 between Gaussians (Bures–Wasserstein).
pub fn gaussian_w2(g1: &GaussianMeasure, g2: &GaussianMeasure) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch { expected: g1.dim(), got: g2.dim() });
    }
    let dm = (&g1.mean - &g2.mean).norm_squared();
    let r2 = psd_sqrt(&g2.cov);
    let cross = psd_sqrt(&(&r2 * &g1.cov * &r2));
    let bures = g1.cov.trace() + g2.cov.trace() - 2.0 * cross.trace();
    Ok((dm + bures.max(0.0)).sqrt())
}

/// Relative entropy `KL(g1 ‖ g2)`.
pub fn gaussian_kl(g1: &GaussianMeasure, g2: &GaussianMeasure) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch { expected: g1.dim(), got: g2.dim() });
    }
    let d = g1.dim() as f64;
    let chol2 = g2.cov.clone().cholesky().ok_or(Error::SingularCovariance)?;
    let l = chol2.l();
    let log_det2: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !log_det2.is_finite() {
        return Err(Error::SingularCovariance);
    }
    let det1 = g1.cov.determinant();
    if det1 <= 0.0 {
        // A degenerate g1 is singular w.r.t. a non-degenerate g2.
        return Ok(f64::INFINITY);
    }
    let trace_term = chol2.solve(&g1.cov).trace();
    let diff = &g2.mean - &g1.mean;
    let maha = diff.dot(&chol2.solve(&diff));
    Ok((0.5 * (trace_term + maha - d + log_det2 - det1.ln())).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w2_examples() {
        let n01 = GaussianMeasure::scalar(0.0, 1.0).unwrap();
        assert_eq!(gaussian_w2(&n01, &n01).unwrap(), 0.0);
        let n11 = GaussianMeasure::scalar(1.0, 1.0).unwrap();
        assert!((gaussian_w2(&n01, &n11).unwrap() - 1.0).abs() < 1e-12);
        let n04 = GaussianMeasure::scalar(0.0, 4.0).unwrap();
        assert!((gaussian_w2(&n01, &n04).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn w2_commuting_covariances() {
        // Diagonal covariances: W2² = |Δm|² + Σ (√a_i − √b_i)².
        let a = GaussianMeasure::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 9.0]).unwrap();
        let b = GaussianMeasure::new(vec![3.0, 4.0], vec![4.0, 0.0, 0.0, 1.0]).unwrap();
        let want = (25.0f64 + 1.0 + 4.0).sqrt();
        assert!((gaussian_w2(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let n01 = GaussianMeasure::scalar(0.0, 1.0).unwrap();
        assert!(gaussian_kl(&n01, &n01).unwrap().abs() < 1e-15);
        let n11 = GaussianMeasure::scalar(1.0, 1.0).unwrap();
        assert!((gaussian_kl(&n11, &n01).unwrap() - 0.5).abs() < 1e-15);
        let n02 = GaussianMeasure::scalar(0.0, 2.0).unwrap();
        let want = 0.5 * (2.0 - 1.0 - 2f64.ln());
        assert!((gaussian_kl(&n02, &n01).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.1534).abs() < 1e-4);
    }

    #[test]
    fn validation() {
        assert!(GaussianMeasure::new(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(GaussianMeasure::new(vec![0.0, 0.0], vec![1.0, 0.1, 0.0, 1.0]).is_err());
        let sing = GaussianMeasure::new(vec![0.0, 0.0], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let reg = GaussianMeasure::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(gaussian_kl(&reg, &sing), Err(Error::SingularCovariance)));
    }

    #[test]
    fn sample_moments() {
        let g = GaussianMeasure::new(vec![1.0, -2.0], vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let s = g.sample(40_000, 3);
        let m = s.mean();
        let c = s.covariance();
        assert!((m[0] - 1.0).abs() < 0.03 && (m[1] + 2.0).abs() < 0.03, "{m:?}");
        for (got, want) in c.iter().zip([2.0, 0.5, 0.5, 1.0]) {
            assert!((got - want).abs() < 0.05, "{c:?}");
        }
    }
}
