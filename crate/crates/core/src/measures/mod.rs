//! Probability measures on R^d and Wasserstein distances between them.
//!
//! Three W_p estimators form an accuracy ladder: [`wasserstein_1d`] (exact,
//! any weights, d = 1), [`wasserstein_assignment`] (exact, uniform equal-size
//! clouds, any d) and [`wasserstein_sinkhorn`] (entropic approximation).
//! [`wasserstein`] picks the most accurate one that applies and reports which
//! one it used.

mod assignment;
mod gaussian;
mod io;
mod sinkhorn;

pub use assignment::{optimal_assignment, wasserstein_assignment, DEFAULT_ASSIGNMENT_CAP};
pub use gaussian::{gaussian_kl, gaussian_w2, GaussianMeasure};
pub use io::{read_measure_binary, read_measure_csv, write_measure_binary, write_measure_csv};
pub use sinkhorn::{median_cost, wasserstein_sinkhorn, wasserstein_sinkhorn_with, SinkhornOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weighted point cloud in R^d.
///
/// Points are stored row-major (`n × dim`). Weights are non-negative and sum
/// to one; uniform clouds remember that they are uniform so exact assignment
/// can accept them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    uniform: bool,
}

impl EmpiricalMeasure {
    /// Uniformly weighted cloud from row-major points.
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be positive".into()));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not form a non-empty {dim}-dimensional cloud",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite coordinate at index {i}")));
        }
        let n = points.len() / dim;
        Ok(Self { dim, points, weights: vec![1.0 / n as f64; n], uniform: true })
    }

    pub fn with_weights(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(points, dim)?;
        if weights.len() != m.len() {
            return Err(Error::InvalidMeasure(format!("{} weights for {} points", weights.len(), m.len())));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMeasure("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        m.uniform = weights.iter().all(|w| *w == weights[0]);
        m.weights = weights;
        Ok(m)
    }

    pub fn from_1d(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), 1)
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.to_vec(), point.len())
    }

    /// `n` copies of the same point; a Dirac mass as a particle cloud.
    pub fn dirac_cloud(point: &[f64], n: usize) -> Result<Self> {
        let mut pts = Vec::with_capacity(n * point.len());
        for _ in 0..n {
            pts.extend_from_slice(point);
        }
        Self::new(pts, point.len())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn into_points(self) -> Vec<f64> {
        self.points
    }

    /// Weighted mean, summed in index order.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (mj, x) in m.iter_mut().zip(self.point(i)) {
                *mj += w * x;
            }
        }
        m
    }

    /// Weighted covariance matrix (row-major `dim × dim`).
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let mean = self.mean();
        let mut c = vec![0.0; d * d];
        for (i, w) in self.weights.iter().enumerate() {
            let x = self.point(i);
            for a in 0..d {
                for b in 0..d {
                    c[a * d + b] += w * (x[a] - mean[a]) * (x[b] - mean[b]);
                }
            }
        }
        c
    }

    /// The push-forward under `x ↦ -x`.
    pub fn reflected(&self) -> Self {
        Self { points: self.points.iter().map(|v| -v).collect(), ..self.clone() }
    }

    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: shift.len() });
        }
        let mut pts = self.points.clone();
        for row in pts.chunks_mut(self.dim) {
            for (x, s) in row.iter_mut().zip(shift) {
                *x += s;
            }
        }
        Ok(Self { points: pts, ..self.clone() })
    }

    /// `n` draws with replacement, proportional to the weights.
    pub fn resample(&self, n: usize, rng: &mut CounterRng) -> Self {
        let mut pts = Vec::with_capacity(n * self.dim);
        if self.uniform {
            for _ in 0..n {
                pts.extend_from_slice(self.point(rng.below(self.len())));
            }
        } else {
            let cdf: Vec<f64> = self
                .weights
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect();
            for _ in 0..n {
                let u = rng.uniform() * cdf[cdf.len() - 1];
                let i = cdf.partition_point(|c| *c <= u).min(self.len() - 1);
                pts.extend_from_slice(self.point(i));
            }
        }
        Self::new(pts, self.dim).expect("resampled points are finite")
    }

    /// Exactly `n` points cycling through this cloud in index order.
    ///
    /// Used to seed an `n`-particle system from a measure given with fewer
    /// (or more) atoms. Uniform clouds only; weighted clouds are resampled
    /// deterministically with stratified quantiles.
    pub fn cycled(&self, n: usize) -> Self {
        if self.len() == n && self.uniform {
            return self.clone();
        }
        let mut pts = Vec::with_capacity(n * self.dim);
        if self.uniform {
            if self.len() > n {
                // Even stride through the cloud.
                for k in 0..n {
                    pts.extend_from_slice(self.point(k * self.len() / n));
                }
            } else {
                for k in 0..n {
                    pts.extend_from_slice(self.point(k % self.len()));
                }
            }
        } else {
            let mut acc = 0.0;
            let mut i = 0;
            for k in 0..n {
                let u = (k as f64 + 0.5) / n as f64;
                while i + 1 < self.len() && acc + self.weights[i] < u {
                    acc += self.weights[i];
                    i += 1;
                }
                pts.extend_from_slice(self.point(i));
            }
        }
        Self::new(pts, self.dim).expect("cycled points are finite")
    }
}

/// `(μ(|·|^p))^{1/p}`, the p-th absolute-moment norm.
pub fn pth_moment(mu: &EmpiricalMeasure, p: f64) -> f64 {
    let mut s = 0.0;
    for (i, w) in mu.weights().iter().enumerate() {
        let r2: f64 = mu.point(i).iter().map(|x| x * x).sum();
        s += w * r2.powf(0.5 * p);
    }
    s.powf(1.0 / p)
}

/// Exact W_p on the real line via the quantile (monotone) coupling.
///
/// Works for arbitrary weights by merging the two cumulative distribution
/// functions. Ties are broken by a stable sort on input index.
pub fn wasserstein_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_order(p)?;
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: mu.dim() });
    }
    if nu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: nu.dim() });
    }
    let xs = sorted_atoms(mu);
    let ys = sorted_atoms(nu);
    let cost = if mu.is_uniform() && nu.is_uniform() && mu.len() == nu.len() {
        let w = 1.0 / mu.len() as f64;
        xs.iter().zip(&ys).map(|((x, _), (y, _))| w * (x - y).abs().powf(p)).sum::<f64>()
    } else {
        merged_quantile_cost(&xs, &ys, p)
    };
    Ok(cost.max(0.0).powf(1.0 / p))
}

fn sorted_atoms(mu: &EmpiricalMeasure) -> Vec<(f64, f64)> {
    let mut atoms: Vec<(f64, f64)> = mu.points().iter().copied().zip(mu.weights().iter().copied()).collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    atoms
}

fn merged_quantile_cost(xs: &[(f64, f64)], ys: &[(f64, f64)], p: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut rx, mut ry) = (xs[0].1, ys[0].1);
    let mut cost = 0.0;
    loop {
        let m = rx.min(ry);
        cost += m * (xs[i].0 - ys[j].0).abs().powf(p);
        rx -= m;
        ry -= m;
        if rx <= 0.0 {
            i += 1;
            if i == xs.len() {
                break;
            }
            rx = xs[i].1;
        }
        if ry <= 0.0 {
            j += 1;
            if j == ys.len() {
                break;
            }
            ry = ys[j].1;
        }
    }
    cost
}

pub(crate) fn check_order(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(crate::error::invalid("p", format!("Wasserstein order must be >= 1, got {p}")))
    }
}

/// Which estimator produced a reported distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Exact1d,
    Assignment,
    /// Exact assignment between evenly strided sub-clouds of at most the cap.
    AssignmentSubsampled,
    Sinkhorn,
}

/// A distance together with the estimator that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub value: f64,
    pub estimator: Estimator,
}

/// Most accurate applicable W_p estimate.
///
/// d = 1 uses the exact quantile coupling. Otherwise uniform equal-size clouds
/// up to the assignment cap are solved exactly, and larger clouds are reduced
/// to strided sub-clouds of the cap size first.
pub fn wasserstein(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<Distance> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if mu.dim() == 1 {
        return Ok(Distance { value: wasserstein_1d(mu, nu, p)?, estimator: Estimator::Exact1d });
    }
    let cap = DEFAULT_ASSIGNMENT_CAP;
    if mu.is_uniform() && nu.is_uniform() && mu.len() == nu.len() && mu.len() <= cap {
        return Ok(Distance { value: wasserstein_assignment(mu, nu, p, cap)?, estimator: Estimator::Assignment });
    }
    let n = mu.len().min(nu.len()).min(cap);
    let value = wasserstein_assignment(&mu.cycled(n), &nu.cycled(n), p, cap)?;
    Ok(Distance { value, estimator: Estimator::AssignmentSubsampled })
}

/// Noise floor of a cloud: mean W_p between two independent bootstrap
/// resamples of size `n` (the cloud's own size by default), over `reps`
/// repetitions, with the standard deviation across repetitions.
pub fn noise_floor(mu: &EmpiricalMeasure, p: f64, reps: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = CounterRng::from_seed(seed, crate::rng::streams::BOOTSTRAP);
    let n = mu.len();
    let mut vals = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let a = mu.resample(n, &mut rng);
        let b = mu.resample(n, &mut rng);
        vals.push(wasserstein(&a, &b, p)?.value);
    }
    Ok(mean_sd(&vals))
}

/// Bootstrap standard error of `W_p(mu, nu)`: resample both clouds `reps`
/// times and report the spread of the recomputed distance.
pub fn bootstrap_se(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64, reps: usize, seed: u64) -> Result<f64> {
    let mut rng = CounterRng::from_seed(seed, crate::rng::streams::BOOTSTRAP);
    let mut vals = Vec::with_capacity(reps);
    for _ in 0..reps.max(2) {
        let a = mu.resample(mu.len(), &mut rng);
        let b = nu.resample(nu.len(), &mut rng);
        vals.push(wasserstein(&a, &b, p)?.value);
    }
    Ok(mean_sd(&vals).1)
}

pub(crate) fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
