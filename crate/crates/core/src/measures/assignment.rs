use super::{check_order, EmpiricalMeasure};
use crate::error::{Error, Result};

/// Largest cloud size accepted by [`wasserstein_assignment`] unless a larger
/// cap is passed explicitly. The solver is O(N³).
pub const DEFAULT_ASSIGNMENT_CAP: usize = 512;

/// Exact W_p between two uniform clouds of equal size by optimal assignment.
pub fn wasserstein_assignment(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64, cap: usize) -> Result<f64> {
    check_order(p)?;
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if mu.len() != nu.len() {
        return Err(Error::SizeMismatch(mu.len(), nu.len()));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::NonUniformWeights);
    }
    let n = mu.len();
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    let cost = cost_matrix(mu, nu, p);
    let perm = optimal_assignment(&cost, n);
    let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((total / n as f64).max(0.0).powf(1.0 / p))
}

pub(crate) fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Vec<f64> {
    use rayon::prelude::*;
    let (n, m) = (mu.len(), nu.len());
    let mut c = vec![0.0; n * m];
    c.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let x = mu.point(i);
        for (j, out) in row.iter_mut().enumerate() {
            let r2: f64 = x.iter().zip(nu.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            *out = if p == 2.0 { r2 } else { r2.powf(0.5 * p) };
        }
    });
    c
}

/// Minimum-cost perfect matching on a square `n × n` row-major cost matrix.
///
/// Shortest augmenting paths with row/column potentials (Hungarian method,
/// O(n³)). Returns `perm` with row `i` matched to column `perm[i]`.
pub fn optimal_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    // 1-based internals; column 0 is a virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            let crow = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = crow[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_on_small_matrix() {
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let perm = optimal_assignment(&c, 3);
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| c[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn translation_gives_shift_length() {
        let pts = vec![0.0, 0.0, 1.0, 0.5, -0.3, 2.0, 0.7, 0.7];
        let mu = EmpiricalMeasure::new(pts, 2).unwrap();
        let nu = mu.translated(&[0.3, -0.4]).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let w = wasserstein_assignment(&mu, &nu, p, 512).unwrap();
            assert!((w - 0.5).abs() < 1e-12, "p={p}: {w}");
        }
        assert_eq!(wasserstein_assignment(&mu, &mu, 2.0, 512).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let a = EmpiricalMeasure::from_1d(&[0.0, 1.0]).unwrap();
        let b = EmpiricalMeasure::from_1d(&[0.0]).unwrap();
        assert!(matches!(wasserstein_assignment(&a, &b, 1.0, 512), Err(Error::SizeMismatch(2, 1))));
        assert!(matches!(wasserstein_assignment(&a, &a, 1.0, 1), Err(Error::CapExceeded { n: 2, cap: 1 })));
        let w = EmpiricalMeasure::with_weights(vec![0.0, 1.0], 1, vec![0.3, 0.7]).unwrap();
        assert!(matches!(wasserstein_assignment(&w, &w, 1.0, 512), Err(Error::NonUniformWeights)));
    }
}
