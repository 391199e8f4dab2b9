//! Euler–Maruyama integration of the interacting particle system, of the
//! frozen-measure (decoupled) equation, and of two synchronously coupled
//! particle systems.
//!
//! The Gaussian increment of particle `i`, coordinate `k`, step `s` is normal
//! number `s·d + k` of the counter-based stream `(seed, i)`, so results do not
//! depend on how particles are scheduled across threads.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{pth_moment, wasserstein, write_measure_binary, EmpiricalMeasure, Estimator};
use crate::models::{MeasureFeatures, MeasureSummary, ModelSpec};
use crate::rng::{streams, NormalStream, StreamKey};

/// Time-stepping scheme. Only explicit Euler–Maruyama is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

/// Discretization and sampling settings shared by all integrators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_particles: usize,
    /// Step size h.
    pub step: f64,
    /// Final time T.
    pub horizon: f64,
    pub seed: u64,
    /// Record a snapshot every this many steps (the final state is always
    /// recorded).
    pub record_every: usize,
    pub scheme: Scheme,
    /// Order of the Wasserstein distance and moment used in summaries.
    pub p: f64,
    /// When set, the drift increment is rescaled so that `|b|·h` never exceeds
    /// this bound. Activations are counted in the trajectory.
    pub taming: Option<f64>,
    /// A recorded p-th moment above this aborts the run as divergent.
    pub explosion_bound: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_particles: 10_000,
            step: 1e-3,
            horizon: 10.0,
            seed: 0,
            record_every: 100,
            scheme: Scheme::EulerMaruyama,
            p: 2.0,
            taming: None,
            explosion_bound: 1e8,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_particles == 0 {
            return bad("n_particles must be positive".into());
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.step > self.horizon {
            return bad(format!("step {} exceeds horizon {}", self.step, self.horizon));
        }
        if self.record_every == 0 {
            return bad("record_every must be positive".into());
        }
        if self.record_every as f64 * self.step > self.horizon * (1.0 + 1e-12) {
            return bad(format!(
                "record_every·step = {} exceeds horizon {}",
                self.record_every as f64 * self.step,
                self.horizon
            ));
        }
        if !(self.p.is_finite() && self.p >= 1.0) {
            return bad(format!("p must be >= 1, got {}", self.p));
        }
        if let Some(c) = self.taming {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("taming bound must be positive, got {c}"));
            }
        }
        if !(self.explosion_bound > 0.0) {
            return bad("explosion_bound must be positive".into());
        }
        Ok(())
    }

    /// Number of steps: `T/h` rounded to the nearest integer.
    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.step).round() as usize).max(1)
    }

    fn record_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut v: Vec<usize> = (0..=n).step_by(self.record_every).collect();
        if *v.last().expect("non-empty") != n {
            v.push(n);
        }
        v
    }
}

/// Recorded evolution of a particle cloud.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<EmpiricalMeasure>,
    pub means: Vec<Vec<f64>>,
    /// `(μ_t(|·|^p))^{1/p}` with `p` from the config.
    pub pmoments: Vec<f64>,
    /// W_p to the reference measure, when one was supplied.
    pub wp_to_ref: Option<Vec<f64>>,
    pub wp_estimator: Option<Estimator>,
    pub p: f64,
    /// Particle-steps whose drift was capped by taming.
    pub taming_activations: u64,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.snapshots[0].dim()
    }

    pub fn last(&self) -> &EmpiricalMeasure {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }

    /// Compute and store W_p from every snapshot to `reference`.
    pub fn attach_reference(&mut self, reference: &EmpiricalMeasure) -> Result<()> {
        let mut est = None;
        let mut out = Vec::with_capacity(self.snapshots.len());
        for s in &self.snapshots {
            let d = wasserstein(s, reference, self.p)?;
            est = Some(d.estimator);
            out.push(d.value);
        }
        self.wp_to_ref = Some(out);
        self.wp_estimator = est;
        Ok(())
    }

    /// CSV with columns `t, mean_1..mean_d, pmoment, wp_to_ref`; the last
    /// column is empty when no reference was attached. Doubles are written
    /// with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("mean_{k}")));
        header.push("pmoment".into());
        header.push("wp_to_ref".into());
        w.write_record(&header)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt17(*t)];
            row.extend(self.means[k].iter().map(|v| fmt17(*v)));
            row.push(fmt17(self.pmoments[k]));
            row.push(self.wp_to_ref.as_ref().map_or(String::new(), |v| fmt17(v[k])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Write every snapshot to `dir/snap_<index>.bin`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<()> {
        for (k, s) in self.snapshots.iter().enumerate() {
            let f = std::fs::File::create(dir.join(format!("snap_{k}.bin")))?;
            write_measure_binary(s, std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}

/// Format a double with 17 significant digits (exact round trip).
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pathwise distances between two synchronously coupled systems.
#[derive(Debug, Clone, Serialize)]
pub struct CoupledPath {
    pub times: Vec<f64>,
    /// `(mean_i |X_i − Y_i|^p)^{1/p}`, an upper bound for W_p of the two laws.
    pub distances: Vec<f64>,
    pub p: f64,
}

/// How particles of two systems are paired in [`simulate_synchronous_pair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Both clouds sorted ascending (d = 1 only): the optimal 1-D coupling.
    Sorted1d,
    /// Particle `i` with particle `i`.
    Index,
}

impl Pairing {
    pub fn default_for(dim: usize) -> Self {
        if dim == 1 {
            Pairing::Sorted1d
        } else {
            Pairing::Index
        }
    }
}

/// Interacting particle approximation: each step evaluates the coefficients
/// at the current empirical measure of all `N` particles.
pub fn simulate_mv(model: &ModelSpec, init: &EmpiricalMeasure, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_model_dim(model, init)?;
    if cfg.n_particles < 2 {
        return Err(Error::InvalidConfig("an interacting system needs at least 2 particles".into()));
    }
    let key = StreamKey::new(cfg.seed, streams::DYNAMICS);
    let mut sys = System::new(model, init.cycled(cfg.n_particles).into_points(), key);
    let record = cfg.record_steps();
    let mut rec = Recorder::new(model.dim(), cfg.p);
    let mut next = 0;
    for s in 0..=cfg.n_steps() {
        if record[next] == s {
            rec.push(s as f64 * cfg.step, &sys.state, s, cfg)?;
            next += 1;
        }
        if s == cfg.n_steps() {
            break;
        }
        let mean = mean_of(&sys.state, model.dim());
        let cloud = (model.features() == MeasureFeatures::Cloud)
            .then(|| EmpiricalMeasure::new(sys.state.clone(), model.dim()))
            .transpose()
            .map_err(|_| nonfinite(&sys.state, model.dim(), s))?;
        let summary = MeasureSummary { mean: &mean, cloud: cloud.as_ref() };
        sys.step(model, &summary, s, cfg)?;
    }
    Ok(rec.finish(sys.tamed()))
}

/// Independent particles of the classical SDE obtained by freezing the
/// measure argument at `frozen_mu`.
pub fn simulate_decoupled(
    model: &ModelSpec,
    frozen_mu: &EmpiricalMeasure,
    init: &EmpiricalMeasure,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_model_dim(model, init)?;
    check_model_dim(model, frozen_mu)?;
    let d = model.dim();
    let n = cfg.n_particles;
    let key = StreamKey::new(cfg.seed, streams::DYNAMICS);
    let mean = frozen_mu.mean();
    let summary = model.summarize(frozen_mu, &mean);
    let record = cfg.record_steps();
    let start = init.cycled(n).into_points();
    let n_steps = cfg.n_steps();
    let tamed = AtomicU64::new(0);
    let failure = AtomicUsize::new(usize::MAX);

    // Particles are independent, so each small group runs to the horizon on
    // its own. Interleaving a group keeps several independent dependency
    // chains in flight while the states and noise blocks stay in cache.
    const GROUP: usize = 8;
    let groups: Vec<Vec<Vec<f64>>> = (0..n.div_ceil(GROUP))
        .into_par_iter()
        .map_init(
            || Scratch::new(d),
            |scratch, g| {
                let ids: Vec<usize> = (g * GROUP..((g + 1) * GROUP).min(n)).collect();
                let mut xs: Vec<Vec<f64>> = ids.iter().map(|&i| start[i * d..(i + 1) * d].to_vec()).collect();
                let mut noises: Vec<NormalStream> = ids.iter().map(|&i| NormalStream::new(key, i as u64)).collect();
                let mut outs: Vec<Vec<f64>> = ids.iter().map(|_| Vec::with_capacity(record.len() * d)).collect();
                let mut alive = vec![true; ids.len()];
                let mut next = 0;
                for s in 0..=n_steps {
                    if record[next] == s {
                        for (out, x) in outs.iter_mut().zip(&xs) {
                            out.extend_from_slice(x);
                        }
                        next += 1;
                    }
                    if s == n_steps {
                        break;
                    }
                    for j in 0..ids.len() {
                        if alive[j] && !euler_step(model, &summary, &mut xs[j], &mut noises[j], s, cfg, scratch, &tamed)
                        {
                            failure.fetch_min(ids[j], Ordering::Relaxed);
                            alive[j] = false;
                        }
                    }
                }
                outs
            },
        )
        .collect();
    let paths: Vec<Vec<f64>> = groups.into_iter().flatten().collect();
    let bad = failure.load(Ordering::Relaxed);
    if bad != usize::MAX {
        // Re-run the offending particle to report its step deterministically.
        let step = first_bad_step(model, &summary, &start[bad * d..(bad + 1) * d], key, bad, cfg);
        return Err(Error::NonFiniteState { step, particle: bad });
    }
    let mut rec = Recorder::new(d, cfg.p);
    let mut buf = vec![0.0; n * d];
    for (k, &s) in record.iter().enumerate() {
        for (i, path) in paths.iter().enumerate() {
            buf[i * d..(i + 1) * d].copy_from_slice(&path[k * d..(k + 1) * d]);
        }
        rec.push(s as f64 * cfg.step, &buf, s, cfg)?;
    }
    Ok(rec.finish(tamed.load(Ordering::Relaxed)))
}

fn first_bad_step(
    model: &ModelSpec,
    summary: &MeasureSummary<'_>,
    x0: &[f64],
    key: StreamKey,
    i: usize,
    cfg: &SimConfig,
) -> usize {
    let mut x = x0.to_vec();
    let mut noise = NormalStream::new(key, i as u64);
    let mut scratch = Scratch::new(x.len());
    let tamed = AtomicU64::new(0);
    for s in 0..cfg.n_steps() {
        if !euler_step(model, summary, &mut x, &mut noise, s, cfg, &mut scratch, &tamed) {
            return s;
        }
    }
    cfg.n_steps()
}

/// Two interacting systems driven by identical Gaussian increments per
/// paired particle index.
pub fn simulate_synchronous_pair(
    model: &ModelSpec,
    mu_a: &EmpiricalMeasure,
    mu_b: &EmpiricalMeasure,
    pairing: Pairing,
    cfg: &SimConfig,
) -> Result<CoupledPath> {
    cfg.validate()?;
    check_model_dim(model, mu_a)?;
    check_model_dim(model, mu_b)?;
    if mu_a.len() != mu_b.len() {
        return Err(Error::SizeMismatch(mu_a.len(), mu_b.len()));
    }
    if !mu_a.is_uniform() || !mu_b.is_uniform() {
        return Err(Error::NonUniformWeights);
    }
    let (a, b) = match pairing {
        Pairing::Sorted1d => {
            if model.dim() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: model.dim() });
            }
            (sorted_1d(mu_a), sorted_1d(mu_b))
        }
        Pairing::Index => (mu_a.clone(), mu_b.clone()),
    };
    let n = cfg.n_particles;
    if n < 2 {
        return Err(Error::InvalidConfig("an interacting system needs at least 2 particles".into()));
    }
    let d = model.dim();
    let key = StreamKey::new(cfg.seed, streams::DYNAMICS);
    let mut sa = System::new(model, a.cycled(n).into_points(), key);
    let mut sb = System::new(model, b.cycled(n).into_points(), key);
    let record = cfg.record_steps();
    let mut times = Vec::with_capacity(record.len());
    let mut distances = Vec::with_capacity(record.len());
    let mut next = 0;
    for s in 0..=cfg.n_steps() {
        if record[next] == s {
            times.push(s as f64 * cfg.step);
            distances.push(paired_distance(&sa.state, &sb.state, d, cfg.p));
            next += 1;
        }
        if s == cfg.n_steps() {
            break;
        }
        for sys in [&mut sa, &mut sb] {
            let mean = mean_of(&sys.state, d);
            let cloud = (model.features() == MeasureFeatures::Cloud)
                .then(|| EmpiricalMeasure::new(sys.state.clone(), d))
                .transpose()
                .map_err(|_| nonfinite(&sys.state, d, s))?;
            let summary = MeasureSummary { mean: &mean, cloud: cloud.as_ref() };
            sys.step(model, &summary, s, cfg)?;
        }
    }
    Ok(CoupledPath { times, distances, p: cfg.p })
}

fn sorted_1d(mu: &EmpiricalMeasure) -> EmpiricalMeasure {
    let mut v = mu.points().to_vec();
    v.sort_by(f64::total_cmp);
    EmpiricalMeasure::new(v, 1).expect("sorting keeps points finite")
}

fn paired_distance(a: &[f64], b: &[f64], d: usize, p: f64) -> f64 {
    let n = a.len() / d;
    let mut s = 0.0;
    for (x, y) in a.chunks(d).zip(b.chunks(d)) {
        let r2: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
        s += r2.powf(0.5 * p);
    }
    (s / n as f64).powf(1.0 / p)
}

fn check_model_dim(model: &ModelSpec, mu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: mu.dim() });
    }
    Ok(())
}

/// Mean of row-major points, summed in index order.
pub(crate) fn mean_of(state: &[f64], d: usize) -> Vec<f64> {
    let n = state.len() / d;
    let mut m = vec![0.0; d];
    for row in state.chunks(d) {
        for (mj, x) in m.iter_mut().zip(row) {
            *mj += x;
        }
    }
    m.iter_mut().for_each(|v| *v /= n as f64);
    m
}

fn nonfinite(state: &[f64], d: usize, step: usize) -> Error {
    let i = state.iter().position(|v| !v.is_finite()).unwrap_or(0) / d;
    Error::NonFiniteState { step, particle: i }
}

struct Scratch {
    drift: Vec<f64>,
    diff: Vec<f64>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Self { drift: vec![0.0; d], diff: vec![0.0; d * d], z: vec![0.0; d] }
    }
}

/// One Euler–Maruyama step of a single particle. Returns false when the new
/// state is not finite.
#[allow(clippy::too_many_arguments)]
#[inline]
fn euler_step(
    model: &ModelSpec,
    summary: &MeasureSummary<'_>,
    x: &mut [f64],
    noise: &mut NormalStream,
    s: usize,
    cfg: &SimConfig,
    scratch: &mut Scratch,
    tamed: &AtomicU64,
) -> bool {
    let d = x.len();
    let h = cfg.step;
    let sqrt_h = h.sqrt();
    model.drift_into(x, summary, &mut scratch.drift);
    model.diffusion_into(x, summary, &mut scratch.diff);
    let mut drift_scale = h;
    if let Some(cap) = cfg.taming {
        let norm = scratch.drift.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm * h > cap {
            drift_scale = cap / norm;
            tamed.fetch_add(1, Ordering::Relaxed);
        }
    }
    let base = (s * d) as u64;
    for (k, zk) in scratch.z.iter_mut().enumerate() {
        *zk = noise.normal(base + k as u64);
    }
    let mut ok = true;
    for (a, xa) in x.iter_mut().enumerate() {
        let row = &scratch.diff[a * d..(a + 1) * d];
        let dw: f64 = row.iter().zip(&scratch.z).map(|(s, z)| s * z).sum();
        *xa += scratch.drift[a] * drift_scale + sqrt_h * dw;
        ok &= xa.is_finite();
    }
    ok
}

/// Particle states with one persistent noise stream per particle.
struct System {
    d: usize,
    state: Vec<f64>,
    noise: Vec<NormalStream>,
    tamed: AtomicU64,
}

impl System {
    fn new(model: &ModelSpec, state: Vec<f64>, key: StreamKey) -> Self {
        let d = model.dim();
        let n = state.len() / d;
        Self { d, state, noise: (0..n as u64).map(|i| NormalStream::new(key, i)).collect(), tamed: AtomicU64::new(0) }
    }

    fn step(&mut self, model: &ModelSpec, summary: &MeasureSummary<'_>, s: usize, cfg: &SimConfig) -> Result<()> {
        let d = self.d;
        let bad = AtomicUsize::new(usize::MAX);
        let tamed = &self.tamed;
        self.state.par_chunks_mut(d).zip(self.noise.par_iter_mut()).enumerate().for_each_init(
            || Scratch::new(d),
            |scratch, (i, (x, noise))| {
                if !euler_step(model, summary, x, noise, s, cfg, scratch, tamed) {
                    bad.fetch_min(i, Ordering::Relaxed);
                }
            },
        );
        match bad.load(Ordering::Relaxed) {
            usize::MAX => Ok(()),
            i => Err(Error::NonFiniteState { step: s, particle: i }),
        }
    }

    fn tamed(&self) -> u64 {
        self.tamed.load(Ordering::Relaxed)
    }
}

struct Recorder {
    d: usize,
    p: f64,
    times: Vec<f64>,
    snapshots: Vec<EmpiricalMeasure>,
    means: Vec<Vec<f64>>,
    pmoments: Vec<f64>,
}

impl Recorder {
    fn new(d: usize, p: f64) -> Self {
        Self { d, p, times: vec![], snapshots: vec![], means: vec![], pmoments: vec![] }
    }

    fn push(&mut self, t: f64, state: &[f64], step: usize, cfg: &SimConfig) -> Result<()> {
        let snap = EmpiricalMeasure::new(state.to_vec(), self.d).map_err(|_| nonfinite(state, self.d, step))?;
        let moment = pth_moment(&snap, self.p);
        if !(moment <= cfg.explosion_bound) {
            return Err(Error::Divergence { step, moment, bound: cfg.explosion_bound });
        }
        self.times.push(t);
        self.means.push(snap.mean());
        self.pmoments.push(moment);
        self.snapshots.push(snap);
        Ok(())
    }

    fn finish(self, taming_activations: u64) -> Trajectory {
        Trajectory {
            times: self.times,
            snapshots: self.snapshots,
            means: self.means,
            pmoments: self.pmoments,
            wp_to_ref: None,
            wp_estimator: None,
            p: self.p,
            taming_activations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{mean_field_ou, AssumptionConstants};
    use std::sync::Arc;

    fn frozen_model() -> ModelSpec {
        let k = AssumptionConstants { p: 2.0, k0: 0.0, k1: None, r0: None, delta: 0.0, sigma0: 0.0, sigma_sup: None };
        ModelSpec::custom(
            "frozen",
            1,
            MeasureFeatures::Mean,
            Arc::new(|_, _, o| o[0] = 0.0),
            Arc::new(|_, _, o| o[0] = 0.0),
            k,
        )
        .unwrap()
    }

    fn cfg(n: usize, h: f64, t: f64) -> SimConfig {
        SimConfig { n_particles: n, step: h, horizon: t, record_every: 10, seed: 5, ..SimConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(10, 1e-2, 1.0).validate().is_ok());
        assert!(SimConfig { step: -0.1, ..cfg(10, 1e-2, 1.0) }.validate().is_err());
        assert!(SimConfig { record_every: 1000, ..cfg(10, 1e-2, 1.0) }.validate().is_err());
        assert!(SimConfig { step: 2.0, ..cfg(10, 1e-2, 1.0) }.validate().is_err());
        assert_eq!(cfg(10, 1e-2, 1.0).record_steps().len(), 11);
        assert_eq!(SimConfig { record_every: 3, ..cfg(10, 0.1, 1.0) }.record_steps(), vec![0, 3, 6, 9, 10]);
    }

    #[test]
    fn zero_coefficients_freeze_the_cloud() {
        let init = EmpiricalMeasure::from_1d(&[0.5, -1.0, 2.0, 3.0]).unwrap();
        let c = cfg(4, 0.01, 0.5);
        let tr = simulate_mv(&frozen_model(), &init, &c).unwrap();
        assert!(tr.snapshots.iter().all(|s| s == &init));
        let tr = simulate_decoupled(&frozen_model(), &init, &init, &c).unwrap();
        assert!(tr.snapshots.iter().all(|s| s == &init));
    }

    #[test]
    fn synchronous_pair_cancels_additive_noise() {
        let m = mean_field_ou(1.0, 0.0, 2f64.sqrt(), 1).unwrap();
        let a = EmpiricalMeasure::dirac(&[0.0]).unwrap();
        let b = EmpiricalMeasure::dirac(&[1.5]).unwrap();
        let path = simulate_synchronous_pair(&m, &a, &b, Pairing::Sorted1d, &cfg(50, 1e-3, 2.0)).unwrap();
        for (t, d) in path.times.iter().zip(&path.distances) {
            // Euler on x' = −x: (1 − h)^{t/h}.
            let exact = 1.5 * (1.0 - 1e-3f64).powf(t / 1e-3);
            assert!((d - exact).abs() < 1e-12, "t={t}: {d} vs {exact}");
        }
        let same = simulate_synchronous_pair(&m, &a, &a, Pairing::Index, &cfg(50, 1e-3, 1.0)).unwrap();
        assert!(same.distances.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn blow_up_is_reported() {
        let k = AssumptionConstants { p: 2.0, k0: 0.0, k1: None, r0: None, delta: 0.0, sigma0: 0.0, sigma_sup: None };
        let m = ModelSpec::custom(
            "cubic",
            1,
            MeasureFeatures::Mean,
            Arc::new(|x, _, o| o[0] = x[0] * x[0] * x[0]),
            Arc::new(|_, _, o| o[0] = 0.0),
            k,
        )
        .unwrap();
        let init = EmpiricalMeasure::from_1d(&[0.0, 10.0]).unwrap();
        let c = cfg(2, 0.1, 10.0);
        assert!(matches!(simulate_mv(&m, &init, &c), Err(Error::NonFiniteState { particle: 1, .. })));
        assert!(matches!(simulate_decoupled(&m, &init, &init, &c), Err(Error::NonFiniteState { particle: 1, .. })));
        let tamed = SimConfig { taming: Some(0.5), record_every: 1, horizon: 1.0, ..c };
        let r = simulate_mv(&m, &init, &tamed);
        assert!(matches!(r, Err(Error::Divergence { .. })) || r.unwrap().taming_activations > 0);
    }

    #[test]
    fn trajectory_csv_layout() {
        let init = EmpiricalMeasure::from_1d(&[1.0, 3.0]).unwrap();
        let mut tr = simulate_mv(&frozen_model(), &init, &SimConfig { record_every: 1, ..cfg(2, 0.1, 0.2) }).unwrap();
        tr.attach_reference(&init).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,mean_1,pmoment,wp_to_ref"));
        assert_eq!(
            lines.next(),
            Some("0.0000000000000000e0,2.0000000000000000e0,2.2360679774997898e0,0.0000000000000000e0")
        );
    }
}
