use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::assignment::cost_matrix;
use super::{check_order, EmpiricalMeasure};
use crate::error::{invalid, Error, Result};

/// Tuning for [`wasserstein_sinkhorn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    /// Iteration budget at the target regularization (Sinkhorn sweeps plus
    /// Newton steps).
    pub max_iter: usize,
    /// Stop when the L1 violation of both marginals is at most this.
    pub tol: f64,
    /// Subtract half of each self-transport cost so identical inputs give
    /// zero and the leading entropic blur cancels.
    pub debias: bool,
    /// Anneal the regularization from the cost scale down to `reg`.
    pub eps_scaling: bool,
    /// Problems with `N + M` at most this size finish with Newton steps on
    /// the dual, which converge quadratically where plain sweeps crawl.
    pub newton_max_size: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self { max_iter: 10_000, tol: 1e-9, debias: true, eps_scaling: true, newton_max_size: 1024 }
    }
}

/// Entropic approximation of W_p with regularization `reg` (in cost units,
/// i.e. units of distance^p).
///
/// Reports the transport cost `⟨P, C⟩` of the entropic plan. With debiasing
/// the result is `(⟨P(μ,ν),C⟩ − ½⟨P(μ,μ),C⟩ − ½⟨P(ν,ν),C⟩)^{1/p}`. The
/// remaining bias in W_p^p is of order `reg · log N`.
pub fn wasserstein_sinkhorn(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64, reg: f64) -> Result<f64> {
    wasserstein_sinkhorn_with(mu, nu, p, reg, &SinkhornOptions::default())
}

pub fn wasserstein_sinkhorn_with(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    p: f64,
    reg: f64,
    opts: &SinkhornOptions,
) -> Result<f64> {
    check_order(p)?;
    if !(reg.is_finite() && reg > 0.0) {
        return Err(invalid("reg", format!("must be positive, got {reg}")));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let cross = Problem::new(mu, nu, p, false).solve(reg, opts)?;
    let s = if opts.debias {
        cross
            - 0.5 * Problem::new(mu, mu, p, true).solve(reg, opts)?
            - 0.5 * Problem::new(nu, nu, p, true).solve(reg, opts)?
    } else {
        cross
    };
    Ok(s.max(0.0).powf(1.0 / p))
}

/// Median entry of the pairwise cost matrix `|x_i − y_j|^p`; the natural
/// scale for choosing `reg`.
pub fn median_cost(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> f64 {
    let mut c = cost_matrix(mu, nu, p);
    let mid = c.len() / 2;
    let (_, m, _) = c.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

struct Problem {
    n: usize,
    m: usize,
    c: Vec<f64>,
    ct: Vec<f64>,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    /// μ = ν: the potentials coincide and the averaged update
    /// `f ← ½(f + T(f))` converges in a handful of sweeps.
    symmetric: bool,
}

impl Problem {
    fn new(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64, symmetric: bool) -> Self {
        let (n, m) = (mu.len(), nu.len());
        let c = cost_matrix(mu, nu, p);
        let ct = if symmetric {
            Vec::new()
        } else {
            let mut ct = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    ct[j * n + i] = c[i * m + j];
                }
            }
            ct
        };
        Self {
            n,
            m,
            c,
            ct,
            log_a: mu.weights().iter().map(|w| w.ln()).collect(),
            log_b: nu.weights().iter().map(|w| w.ln()).collect(),
            symmetric,
        }
    }

    fn solve(&self, reg: f64, opts: &SinkhornOptions) -> Result<f64> {
        let mut f = vec![0.0; self.n];
        let mut g = vec![0.0; self.m];
        if opts.eps_scaling && !self.symmetric {
            // Intermediate stages only need a warm start for the next one.
            let mut eps = self.c.iter().fold(0.0f64, |acc, v| acc.max(*v));
            while eps > reg {
                self.sweeps(&mut f, &mut g, eps, 500, 1e-5);
                eps *= 0.5;
            }
        }
        let newton = self.n + self.m <= opts.newton_max_size;
        let sweep_tol = if newton { opts.tol.max(1e-4) } else { opts.tol };
        let (mut iters, mut residual) = self.sweeps(&mut f, &mut g, reg, opts.max_iter, sweep_tol);
        if newton && residual > opts.tol {
            let mut norm = self.violation(&f, &g, reg).1;
            while residual > opts.tol && iters < opts.max_iter {
                iters += 1;
                match self.newton_step(&mut f, &mut g, reg, norm) {
                    Some((l1, l2)) => (residual, norm) = (l1, l2),
                    None => break,
                }
            }
        }
        if residual > opts.tol {
            return Err(Error::SinkhornNonConvergence { iterations: iters, residual });
        }
        Ok(self.transport_cost(&f, &g, reg))
    }

    /// Sinkhorn sweeps until the violation drops to `tol`; returns (sweeps,
    /// violation).
    fn sweeps(&self, f: &mut [f64], g: &mut [f64], eps: f64, budget: usize, tol: f64) -> (usize, f64) {
        let mut residual = f64::INFINITY;
        let mut tmp = vec![0.0; self.n];
        for it in 1..=budget {
            if self.symmetric {
                c_transform(&self.c, self.m, &self.log_b, f, eps, &mut tmp);
                for (fi, ti) in f.iter_mut().zip(&tmp) {
                    *fi = 0.5 * (*fi + ti);
                }
                g.copy_from_slice(f);
                residual = 2.0 * row_violation(&self.c, self.m, &self.log_a, &self.log_b, f, g, eps);
            } else {
                c_transform(&self.c, self.m, &self.log_b, g, eps, f);
                c_transform(&self.ct, self.n, &self.log_a, f, eps, g);
                // Columns are exact right after the g-update.
                residual = row_violation(&self.c, self.m, &self.log_a, &self.log_b, f, g, eps);
            }
            if residual <= tol {
                return (it, residual);
            }
        }
        (budget, residual)
    }

    fn plan_entry(&self, i: usize, j: usize, f: &[f64], g: &[f64], eps: f64) -> f64 {
        (self.log_a[i] + self.log_b[j] + (f[i] + g[j] - self.c[i * self.m + j]) / eps).exp()
    }

    /// L1 and squared L2 violation of the row and column marginals.
    fn violation(&self, f: &[f64], g: &[f64], eps: f64) -> (f64, f64) {
        let mut cols = vec![0.0; self.m];
        let (mut l1, mut l2) = (0.0, 0.0);
        for i in 0..self.n {
            let mut row = 0.0;
            for (j, col) in cols.iter_mut().enumerate() {
                let v = self.plan_entry(i, j, f, g, eps);
                row += v;
                *col += v;
            }
            let e = row - self.log_a[i].exp();
            l1 += e.abs();
            l2 += e * e;
        }
        for (c, lb) in cols.iter().zip(&self.log_b) {
            let e = c - lb.exp();
            l1 += e.abs();
            l2 += e * e;
        }
        (l1, l2)
    }

    /// One Newton step on the concave entropic dual
    /// `⟨a,f⟩ + ⟨b,g⟩ − ε Σ P_ij`, with the last `g` coordinate pinned (the
    /// dual is invariant under `f + t, g − t`). Backtracks until the squared
    /// L2 marginal violation drops below `norm`, and returns the new
    /// violations, or None when no step improves it.
    fn newton_step(&self, f: &mut [f64], g: &mut [f64], eps: f64, norm: f64) -> Option<(f64, f64)> {
        let (n, m) = (self.n, self.m);
        let k = n + m - 1;
        let mut h = DMatrix::<f64>::zeros(k, k);
        let mut rows = vec![0.0; n];
        let mut cols = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                let v = self.plan_entry(i, j, f, g, eps);
                rows[i] += v;
                cols[j] += v;
                if j + 1 < m {
                    h[(i, n + j)] = v / eps;
                    h[(n + j, i)] = v / eps;
                }
            }
        }
        let mut grad = DVector::<f64>::zeros(k);
        for i in 0..n {
            h[(i, i)] = rows[i] / eps;
            grad[i] = self.log_a[i].exp() - rows[i];
        }
        for j in 0..m - 1 {
            h[(n + j, n + j)] = cols[j] / eps;
            grad[n + j] = self.log_b[j].exp() - cols[j];
        }
        // Near-permutation plans make `h` nearly singular, so an undamped
        // step can be useless in floating point; a growing ridge bends it
        // towards the gradient, along which the violation always shrinks.
        let scale = (0..k).fold(0.0f64, |acc, i| acc.max(h[(i, i)]));
        let mut ridge = 0.0;
        for _ in 0..12 {
            let mut hr = h.clone();
            for i in 0..k {
                hr[(i, i)] += ridge;
            }
            if let Some(chol) = hr.cholesky() {
                let step = chol.solve(&grad);
                let mut t = 1.0;
                for _ in 0..20 {
                    let nf: Vec<f64> = (0..n).map(|i| f[i] + t * step[i]).collect();
                    let ng: Vec<f64> = (0..m).map(|j| if j + 1 < m { g[j] + t * step[n + j] } else { g[j] }).collect();
                    let v = self.violation(&nf, &ng, eps);
                    if v.1 < norm {
                        f.copy_from_slice(&nf);
                        g.copy_from_slice(&ng);
                        return Some(v);
                    }
                    t *= 0.5;
                }
            }
            ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
        }
        None
    }

    /// `⟨P, C⟩` for the plan `P_ij = a_i b_j exp((f_i + g_j − C_ij)/ε)`.
    fn transport_cost(&self, f: &[f64], g: &[f64], eps: f64) -> f64 {
        let rows: Vec<f64> = (0..self.n)
            .into_par_iter()
            .map(|i| (0..self.m).map(|j| self.plan_entry(i, j, f, g, eps) * self.c[i * self.m + j]).sum::<f64>())
            .collect();
        rows.iter().sum()
    }
}

/// `out_i = −ε log Σ_j exp(log_w_j + (pot_j − C_ij)/ε)` for each row `i` of
/// the row-major matrix `cost` with `cols` columns.
fn c_transform(cost: &[f64], cols: usize, log_w: &[f64], pot: &[f64], eps: f64, out: &mut [f64]) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let row = &cost[i * cols..(i + 1) * cols];
        let mut mx = f64::NEG_INFINITY;
        for j in 0..cols {
            mx = mx.max(log_w[j] + (pot[j] - row[j]) / eps);
        }
        let mut s = 0.0;
        for j in 0..cols {
            s += (log_w[j] + (pot[j] - row[j]) / eps - mx).exp();
        }
        *o = -eps * (mx + s.ln());
    });
}

/// L1 distance between the row sums of the plan and `a`.
fn row_violation(cost: &[f64], cols: usize, log_a: &[f64], log_b: &[f64], f: &[f64], g: &[f64], eps: f64) -> f64 {
    let rows: Vec<f64> = (0..log_a.len())
        .into_par_iter()
        .map(|i| {
            let row = &cost[i * cols..(i + 1) * cols];
            let mut s = 0.0;
            for j in 0..cols {
                s += (log_a[i] + log_b[j] + (f[i] + g[j] - row[j]) / eps).exp();
            }
            (s - log_a[i].exp()).abs()
        })
        .collect();
    rows.iter().sum()
}
