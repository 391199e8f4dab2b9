//! The map 𝒯: μ ↦ invariant law of the equation with the measure argument
//! frozen at μ, its Picard iteration, and empirical estimates built on it.
//!
//! Picard iterates reuse one dynamics seed, so the iteration acts on a single
//! realization 𝒯̂ of the sampled map. Its gaps then shrink geometrically
//! instead of stalling at the sampling noise floor, and the fixed point of 𝒯̂
//! is within sampling error of the fixed point of 𝒯.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::measures::{noise_floor, wasserstein, EmpiricalMeasure};
use crate::models::{eval_diffusion, eval_drift, ModelSpec};
use crate::numerics::simpson_uniform;
use crate::rng::derive_seed;
use crate::simulate::{fmt17, simulate_decoupled, simulate_mv, SimConfig, Trajectory};

/// Bootstrap repetitions behind every noise-floor estimate.
const NOISE_REPS: usize = 8;

/// How [`apply_t`] turns a frozen-measure run into an estimate of 𝒯_μ.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApplyTOptions {
    /// Snapshots before this time are discarded when pooling. When unset,
    /// `10/λ̂` with λ̂ the relaxation rate read off the run itself, capped at
    /// 90% of the horizon.
    pub burn_in: Option<f64>,
    /// Pool all snapshots after the burn-in (thinned back to N points)
    /// instead of returning the terminal snapshot.
    pub pooled: bool,
    /// Initial cloud; defaults to μ itself.
    pub init: Option<EmpiricalMeasure>,
}

/// Estimate of 𝒯_μ from one run of the decoupled equation.
pub fn apply_t(
    model: &ModelSpec,
    mu: &EmpiricalMeasure,
    cfg: &SimConfig,
    opts: &ApplyTOptions,
) -> Result<EmpiricalMeasure> {
    if let Some(b) = opts.burn_in {
        if !(b >= 0.0 && b < cfg.horizon) {
            return Err(invalid("burn_in", format!("must lie in [0, horizon = {}), got {b}", cfg.horizon)));
        }
    }
    let init = opts.init.as_ref().unwrap_or(mu);
    let traj = simulate_decoupled(model, mu, init, cfg)?;
    if !opts.pooled {
        return Ok(traj.last().clone());
    }
    let burn = opts.burn_in.unwrap_or_else(|| pilot_burn_in(&traj, cfg.horizon));
    let d = model.dim();
    let mut pts = Vec::new();
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        if *t >= burn {
            pts.extend_from_slice(snap.points());
        }
    }
    Ok(EmpiricalMeasure::new(pts, d)?.cycled(cfg.n_particles))
}

/// `10/λ̂` where λ̂ is the decay rate of the distance of (mean, p-th moment)
/// to their terminal values, capped at 90% of the horizon.
fn pilot_burn_in(traj: &Trajectory, horizon: f64) -> f64 {
    let last = traj.times.len() - 1;
    let gap: Vec<(f64, f64)> = (0..=last)
        .map(|k| {
            let dm: f64 = traj.means[k].iter().zip(&traj.means[last]).map(|(a, b)| (a - b).abs()).sum();
            (traj.times[k], dm + (traj.pmoments[k] - traj.pmoments[last]).abs())
        })
        .collect();
    let tail_start = traj.times[last] * 0.8;
    let floor = gap.iter().filter(|(t, _)| *t >= tail_start).map(|(_, g)| *g).fold(0.0, f64::max);
    let cap = 0.9 * horizon;
    match fit_above_floor(&gap, 2.0 * floor) {
        Ok(fit) if fit.lambda_bar > 0.0 => (10.0 / fit.lambda_bar).min(cap),
        _ => cap,
    }
}

/// Invariant density of a one-dimensional diffusion with constant-in-x
/// diffusion coefficient, `ρ ∝ exp((2/σ²)∫ b(y, μ) dy)`, on a uniform grid.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub mean: f64,
    /// Cumulative distribution at the grid points (trapezoidal in the
    /// density).
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl StationaryDensity {
    /// Quantile function, linear-density interpolation between grid points.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.cdf.partition_point(|c| *c < u).clamp(1, self.cdf.len() - 1);
        let (x0, x1) = (self.grid[k - 1], self.grid[k]);
        let (f0, f1) = (self.density[k - 1], self.density[k]);
        let h = x1 - x0;
        let r = u - self.cdf[k - 1];
        // Solve f0·s + (f1 − f0)s²/(2h) = r for s ∈ [0, h].
        let a = (f1 - f0) / (2.0 * h);
        let s = if a.abs() < 1e-300 || (a * r).abs() < 1e-14 * f0 * f0 {
            if f0 > 0.0 {
                r / f0
            } else {
                0.0
            }
        } else {
            let disc = (f0 * f0 + 4.0 * a * r).max(0.0);
            2.0 * r / (f0 + disc.sqrt())
        };
        x0 + s.clamp(0.0, h)
    }

    /// Deterministic cloud at the mid-quantiles `(i + ½)/n`.
    pub fn quantile_cloud(&self, n: usize) -> Result<EmpiricalMeasure> {
        let v: Vec<f64> = (0..n).map(|i| self.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        EmpiricalMeasure::from_1d(&v)
    }
}

pub fn stationary_density_1d(model: &ModelSpec, mu: &EmpiricalMeasure, grid: &[f64]) -> Result<StationaryDensity> {
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: model.dim() });
    }
    let n = grid.len();
    if n < 3 || n.is_multiple_of(2) {
        return Err(invalid("grid", format!("needs an odd number (>= 3) of points, got {n}")));
    }
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    if !(h > 0.0) || grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(invalid("grid", "must be increasing and uniformly spaced"));
    }
    let sigma0 = eval_diffusion(model, &[grid[0]], mu)?[0];
    let mut max_dev: f64 = 0.0;
    for &x in grid {
        max_dev = max_dev.max((eval_diffusion(model, &[x], mu)?[0] - sigma0).abs());
    }
    if max_dev > 1e-12 {
        return Err(Error::NonConstantDiffusion { max_deviation: max_dev });
    }
    if sigma0 == 0.0 {
        return Err(Error::NonNormalizable("zero diffusion".into()));
    }
    let b = |x: f64| eval_drift(model, &[x], mu).map(|v| v[0]);
    // Potential by Simpson's rule on each cell (exact for cubic drifts).
    let scale = 2.0 / (sigma0 * sigma0);
    let mut log_rho = vec![0.0; n];
    let mut b_prev = b(grid[0])?;
    for i in 1..n {
        let (x0, x1) = (grid[i - 1], grid[i]);
        let b_mid = b(0.5 * (x0 + x1))?;
        let b_next = b(x1)?;
        log_rho[i] = log_rho[i - 1] + scale * (x1 - x0) / 6.0 * (b_prev + 4.0 * b_mid + b_next);
        b_prev = b_next;
    }
    let top = log_rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::NonNormalizable("potential is not finite on the grid".into()));
    }
    let mut rho: Vec<f64> = log_rho.iter().map(|l| (l - top).exp()).collect();
    let z = simpson_uniform(&rho, h);
    rho.iter_mut().for_each(|r| *r /= z);
    let edge = rho[0].max(rho[n - 1]) * (grid[n - 1] - grid[0]);
    if edge > 1e-10 {
        return Err(Error::NonNormalizable(format!(
            "density does not vanish at the grid ends (edge mass scale {edge:e}); widen the grid or check that the drift confines"
        )));
    }
    let xr: Vec<f64> = grid.iter().zip(&rho).map(|(x, r)| x * r).collect();
    let mean = simpson_uniform(&xr, h);
    let mut cdf = vec![0.0; n];
    for i in 1..n {
        cdf[i] = cdf[i - 1] + 0.5 * h * (rho[i - 1] + rho[i]);
    }
    let total = cdf[n - 1];
    cdf.iter_mut().for_each(|c| *c /= total);
    Ok(StationaryDensity { grid: grid.to_vec(), density: rho, mean, cdf })
}

/// Settings for [`picard_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Stop once the a-posteriori bound on the distance to the fixed point
    /// of 𝒯̂ falls below this fraction of the noise floor.
    pub noise_fraction: f64,
    pub apply: ApplyTOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-3, max_iter: 50, noise_fraction: 0.1, apply: ApplyTOptions::default() }
    }
}

/// Which bound ended a Picard iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The distance bound fell below `tol`.
    Tolerance,
    /// The distance bound fell below the noise-floor threshold, which
    /// exceeded `tol`.
    NoiseFloor,
    MaxIter,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryResult {
    /// The fixed-point estimate μ̄.
    #[serde(skip)]
    pub measure: EmpiricalMeasure,
    /// `W_p(μ_k, μ_{k+1})` for each iteration.
    pub iterates: Vec<f64>,
    /// Mean of `μ_0, μ_1, …`.
    pub iterate_means: Vec<Vec<f64>>,
    /// Median of successive gap ratios; absent with fewer than two gaps.
    pub contraction_estimate: Option<f64>,
    pub converged: bool,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    /// Mean W_p between two bootstrap resamples of the final iterate.
    pub noise_floor: f64,
    /// `r/(1−r)·gap` at the last iteration, with `r` the larger of the
    /// median and the last gap ratio (infinite while `r ≥ 1`).
    pub distance_bound: f64,
}

/// Picard iteration `μ_{k+1} = 𝒯̂(μ_k)`, each run warm-started from the
/// previous iterate.
///
/// Stops when the Banach bound `r/(1−r)·W_p(μ_k, μ_{k+1})` on the distance to
/// the fixed point is at most `max(tol, noise_fraction · noise floor)`. A map
/// that does not contract runs to `max_iter` and is reported unconverged.
pub fn picard_solve(
    model: &ModelSpec,
    mu0: &EmpiricalMeasure,
    cfg: &SimConfig,
    opts: &PicardOptions,
) -> Result<StationaryResult> {
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {}", opts.tol)));
    }
    if opts.max_iter == 0 {
        return Err(invalid("max_iter", "must be at least 1"));
    }
    let p = cfg.p;
    let mut current = mu0.clone();
    let mut gaps = Vec::new();
    let mut means = vec![mu0.mean()];
    let mut ratios = Vec::new();
    let mut reason = StopReason::MaxIter;
    let mut bound = f64::INFINITY;
    let mut floor = 0.0;
    for k in 0..opts.max_iter {
        let apply = ApplyTOptions { init: Some(current.clone()), ..opts.apply.clone() };
        let next = apply_t(model, &current, cfg, &apply)?;
        let gap = wasserstein(&current, &next, p)?.value;
        floor = noise_floor(&next, p, NOISE_REPS, derive_seed(cfg.seed, k as u64))?.0;
        if let Some(prev) = gaps.last() {
            ratios.push(if *prev > 0.0 { gap / prev } else { 0.0 });
        }
        gaps.push(gap);
        means.push(next.mean());
        current = next;
        bound = if gap == 0.0 {
            0.0
        } else {
            match (median(&ratios), ratios.last()) {
                (Some(m), Some(&last)) => {
                    let r = m.max(last);
                    if r < 1.0 {
                        r / (1.0 - r) * gap
                    } else {
                        f64::INFINITY
                    }
                }
                _ => f64::INFINITY,
            }
        };
        let noise_threshold = opts.noise_fraction * floor;
        if bound <= opts.tol.max(noise_threshold) {
            reason = if opts.tol >= noise_threshold { StopReason::Tolerance } else { StopReason::NoiseFloor };
            break;
        }
    }
    Ok(StationaryResult {
        measure: current,
        iterations_used: gaps.len(),
        iterates: gaps,
        iterate_means: means,
        contraction_estimate: median(&ratios),
        converged: reason != StopReason::MaxIter,
        stop_reason: reason,
        noise_floor: floor,
        distance_bound: bound,
    })
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Empirical Lipschitz ratio of 𝒯 between two measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionEstimate {
    /// `W_p(𝒯̂μ, 𝒯̂ν) / W_p(μ, ν)`.
    pub ratio: f64,
    pub input_distance: f64,
    pub output_distance: f64,
    /// Larger of the two input clouds' noise floors.
    pub noise_floor: f64,
}

/// Both runs share the dynamics seed (common random numbers) and start from
/// their own input cloud.
pub fn estimate_contraction(
    model: &ModelSpec,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    cfg: &SimConfig,
    opts: &ApplyTOptions,
) -> Result<ContractionEstimate> {
    let p = cfg.p;
    let input = wasserstein(mu, nu, p)?.value;
    let floor = noise_floor(mu, p, NOISE_REPS, cfg.seed)?.0.max(noise_floor(nu, p, NOISE_REPS, cfg.seed)?.0);
    if !(input >= 10.0 * floor) || input == 0.0 {
        return Err(Error::Degenerate(format!(
            "input distance {input:e} is below 10x the noise floor {floor:e}; the ratio is indeterminate"
        )));
    }
    let run = |m: &EmpiricalMeasure| apply_t(model, m, cfg, &ApplyTOptions { init: None, ..opts.clone() });
    let (tm, tn) = (run(mu)?, run(nu)?);
    let output = wasserstein(&tm, &tn, p)?.value;
    Ok(ContractionEstimate {
        ratio: output / input,
        input_distance: input,
        output_distance: output,
        noise_floor: floor,
    })
}

/// Least-squares fit of `log w = log A − λ t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialFit {
    /// `A / w(t_first)`: the prefactor relative to the initial distance.
    pub c_bar: f64,
    /// `A = exp(intercept)`.
    pub prefactor: f64,
    pub lambda_bar: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// Fits all points with `w > 0`; needs at least three.
pub fn fit_exponential_rate(series: &[(f64, f64)]) -> Result<ExponentialFit> {
    let pts: Vec<(f64, f64)> =
        series.iter().filter(|(_, w)| *w > 0.0 && w.is_finite()).map(|(t, w)| (*t, w.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 positive points, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - ym).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all points share one time".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    let prefactor = intercept.exp();
    Ok(ExponentialFit { c_bar: prefactor / pts[0].1.exp(), prefactor, lambda_bar: -slope, r2, n_points: pts.len() })
}

/// Fit over the leading run of points with `w > floor`.
pub fn fit_above_floor(series: &[(f64, f64)], floor: f64) -> Result<ExponentialFit> {
    let end = series.iter().position(|(_, w)| !(*w > floor)).unwrap_or(series.len());
    fit_exponential_rate(&series[..end])
}

/// R² below this marks an ergodicity fit unusable.
pub const FIT_QUALITY_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StartFit {
    /// `W_p(ν, 𝒯̂_μ)`.
    pub initial_distance: f64,
    /// None when fewer than three points sit above the noise floor.
    pub fit: Option<ExponentialFit>,
}

/// Empirical `Ĉ, λ̂` with `W_p((P_t^μ)*ν, 𝒯_μ) ≤ Ĉ e^{−λ̂t} W_p(ν, 𝒯_μ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityEstimate {
    /// Worst case over starts, at least 1.
    pub c_hat: f64,
    /// Rate of the best-fitting start.
    pub lambda_hat: Option<f64>,
    /// R² of that fit.
    pub fit_quality: f64,
    /// Every start was already at the noise floor.
    pub degenerate: bool,
    /// Not degenerate, λ̂ > 0 and R² at least [`FIT_QUALITY_THRESHOLD`].
    pub usable: bool,
    pub noise_floor: f64,
    pub per_start: Vec<StartFit>,
}

/// Runs the frozen dynamics from each start against an independent estimate
/// of 𝒯_μ and fits the decay above three times its noise floor.
pub fn estimate_ergodicity(
    model: &ModelSpec,
    frozen_mu: &EmpiricalMeasure,
    starts: &[EmpiricalMeasure],
    cfg: &SimConfig,
    opts: &ApplyTOptions,
) -> Result<ErgodicityEstimate> {
    if starts.is_empty() {
        return Err(invalid("starts", "need at least one start"));
    }
    let target = apply_t(model, frozen_mu, cfg, opts)?;
    let floor = noise_floor(&target, cfg.p, NOISE_REPS, cfg.seed)?.0;
    let mut per_start = Vec::with_capacity(starts.len());
    for (i, start) in starts.iter().enumerate() {
        let run_cfg = SimConfig { seed: derive_seed(cfg.seed, 1 + i as u64), ..cfg.clone() };
        let mut traj = simulate_decoupled(model, frozen_mu, start, &run_cfg)?;
        traj.attach_reference(&target)?;
        let w = traj.wp_to_ref.as_ref().expect("reference attached");
        let series: Vec<(f64, f64)> = traj.times.iter().copied().zip(w.iter().copied()).collect();
        let initial_distance = wasserstein(start, &target, cfg.p)?.value;
        let fit = fit_above_floor(&series, 3.0 * floor).ok();
        per_start.push(StartFit { initial_distance, fit });
    }
    let mut c_hat: f64 = 1.0;
    let mut best: Option<ExponentialFit> = None;
    for s in &per_start {
        if let Some(f) = s.fit {
            if s.initial_distance > 0.0 {
                c_hat = c_hat.max(f.prefactor / s.initial_distance);
            }
            let better = match best {
                None => true,
                Some(b) => f.r2 > b.r2 || (f.r2 == b.r2 && f.n_points > b.n_points),
            };
            if better {
                best = Some(f);
            }
        }
    }
    let degenerate = best.is_none();
    let fit_quality = best.map_or(0.0, |b| b.r2);
    let lambda_hat = best.map(|b| b.lambda_bar);
    let usable = !degenerate && fit_quality >= FIT_QUALITY_THRESHOLD && lambda_hat.is_some_and(|l| l > 0.0);
    Ok(ErgodicityEstimate { c_hat, lambda_hat, fit_quality, degenerate, usable, noise_floor: floor, per_start })
}

/// Interacting-particle run from `mu0` with W_p to `mu_bar` recorded at every
/// snapshot.
pub fn measure_convergence(
    model: &ModelSpec,
    mu0: &EmpiricalMeasure,
    mu_bar: &EmpiricalMeasure,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    let mut traj = simulate_mv(model, mu0, cfg)?;
    traj.attach_reference(mu_bar)?;
    Ok(traj)
}

/// Settings for [`phase_scan`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseScanOptions {
    pub picard: PicardOptions,
    /// Results closer than this are one stationary state. Defaults to five
    /// times the largest noise floor in the cell.
    pub merge_tol: Option<f64>,
}

/// Outcome of one start at one grid value.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointRecord {
    pub start_id: usize,
    pub mean: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations_used: usize,
    pub noise_floor: Option<f64>,
    /// Index of the stationary state this result was merged into.
    pub cluster: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseCell {
    pub value: f64,
    pub merge_tol: f64,
    pub fixed_points: Vec<FixedPointRecord>,
    /// Pairwise W_p between results; None where a start failed.
    pub distances: Vec<Vec<Option<f64>>>,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseScanReport {
    pub param: String,
    pub parameter_grid: Vec<f64>,
    pub multiplicity: Vec<usize>,
    pub cells: Vec<PhaseCell>,
}

impl PhaseScanReport {
    /// Flat CSV `param_value, start_id, mean_1..mean_d, multiplicity`; a
    /// failed start leaves its mean columns empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d =
            self.cells.iter().flat_map(|c| &c.fixed_points).find_map(|f| f.mean.as_ref().map(Vec::len)).unwrap_or(1);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["param_value".to_string(), "start_id".to_string()];
        header.extend((1..=d).map(|k| format!("mean_{k}")));
        header.push("multiplicity".into());
        w.write_record(&header)?;
        for cell in &self.cells {
            for fp in &cell.fixed_points {
                let mut row = vec![fmt17(cell.value), fp.start_id.to_string()];
                match &fp.mean {
                    Some(m) => row.extend(m.iter().map(|v| fmt17(*v))),
                    None => row.extend(std::iter::repeat_n(String::new(), d)),
                }
                row.push(cell.multiplicity.to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Picard solves from every start at every parameter value, clustered by
/// mutual W_p. Failures are recorded per start and the scan continues.
pub fn phase_scan<F>(
    family: F,
    param: &str,
    grid: &[f64],
    starts: &[EmpiricalMeasure],
    cfg: &SimConfig,
    opts: &PhaseScanOptions,
) -> Result<PhaseScanReport>
where
    F: Fn(f64) -> Result<ModelSpec> + Sync,
{
    if starts.len() < 2 {
        return Err(invalid("starts", "a phase scan needs at least two starts"));
    }
    if grid.is_empty() {
        return Err(invalid("grid", "is empty"));
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..starts.len()).map(move |s| (g, s))).collect();
    let results: Vec<Result<StationaryResult>> = jobs
        .par_iter()
        .map(|&(g, s)| family(grid[g]).and_then(|model| picard_solve(&model, &starts[s], cfg, &opts.picard)))
        .collect();
    let mut cells = Vec::with_capacity(grid.len());
    let mut results = results.into_iter();
    for &value in grid {
        let cell: Vec<Result<StationaryResult>> = results.by_ref().take(starts.len()).collect();
        cells.push(cluster_cell(value, cell, cfg.p, opts.merge_tol)?);
    }
    Ok(PhaseScanReport {
        param: param.to_string(),
        parameter_grid: grid.to_vec(),
        multiplicity: cells.iter().map(|c| c.multiplicity).collect(),
        cells,
    })
}

fn cluster_cell(
    value: f64,
    results: Vec<Result<StationaryResult>>,
    p: f64,
    merge_tol: Option<f64>,
) -> Result<PhaseCell> {
    let n = results.len();
    let ok: Vec<Option<&StationaryResult>> = results.iter().map(|r| r.as_ref().ok()).collect();
    let floor = ok.iter().flatten().map(|r| r.noise_floor).fold(0.0, f64::max);
    let tol = merge_tol.unwrap_or(5.0 * floor);
    let mut distances = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            if let (Some(a), Some(b)) = (ok[i], ok[j]) {
                let d = if i == j { 0.0 } else { wasserstein(&a.measure, &b.measure, p)?.value };
                distances[i][j] = Some(d);
                distances[j][i] = Some(d);
            }
        }
    }
    // Single linkage: results within the tolerance share a state.
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters = 0;
    for i in 0..n {
        if ok[i].is_none() || label[i].is_some() {
            continue;
        }
        label[i] = Some(clusters);
        let mut stack = vec![i];
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if label[b].is_none() && distances[a][b].is_some_and(|d| d <= tol) {
                    label[b] = Some(clusters);
                    stack.push(b);
                }
            }
        }
        clusters += 1;
    }
    let fixed_points = results
        .iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(r) => FixedPointRecord {
                start_id: i,
                mean: Some(r.measure.mean()),
                converged: r.converged,
                iterations_used: r.iterations_used,
                noise_floor: Some(r.noise_floor),
                cluster: label[i],
                error: None,
            },
            Err(e) => FixedPointRecord {
                start_id: i,
                mean: None,
                converged: false,
                iterations_used: 0,
                noise_floor: None,
                cluster: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(PhaseCell { value, merge_tol: tol, fixed_points, distances, multiplicity: clusters })
}
