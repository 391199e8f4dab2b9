//! Drift/diffusion pairs `b(x, μ)`, `σ(x, μ)` with their declared
//! dissipativity constants, the built-in model zoo, and an empirical
//! falsifier for the declared constants.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{wasserstein, EmpiricalMeasure};
use crate::rng::{streams, CounterRng};

/// The parts of a measure a model's coefficients may read.
///
/// `cloud` is only populated for models declaring
/// [`MeasureFeatures::Cloud`]; mean-type models get the mean alone and cost
/// O(N) per step instead of O(N²).
#[derive(Debug, Clone, Copy)]
pub struct MeasureSummary<'a> {
    pub mean: &'a [f64],
    pub cloud: Option<&'a EmpiricalMeasure>,
}

impl<'a> MeasureSummary<'a> {
    pub fn cloud(&self) -> &'a EmpiricalMeasure {
        self.cloud.expect("model declared MeasureFeatures::Mean but read the full cloud")
    }
}

/// Which summary of μ the coefficients consume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureFeatures {
    Mean,
    Cloud,
}

/// `b(x, μ)` written into the output slice (length d).
pub type DriftFn = Arc<dyn Fn(&[f64], &MeasureSummary<'_>, &mut [f64]) + Send + Sync>;
/// `σ(x, μ)` written row-major into the output slice (length d²).
pub type DiffusionFn = Arc<dyn Fn(&[f64], &MeasureSummary<'_>, &mut [f64]) + Send + Sync>;

/// Declared constants of the one-sided Lipschitz (dissipativity) bound
///
/// ```text
/// 2⟨b(x,μ)−b(y,ν), x−y⟩ + c_p‖σ(x,μ)−σ(y,ν)‖²_HS ≤ K0|x−y|² + δ² W_p(μ,ν)²
/// ```
///
/// with `c_p = 1 + (p−2)⁺`, optionally sharpened outside a ball of radius
/// `r0` to `−K1|x−y|²` (with a diffusion factor `2‖σ‖∞²/σ0² − 1_{d=1}`),
/// plus ellipticity `σσ* ≥ σ0² I` and `‖σ‖_HS ≤ sigma_sup`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    pub p: f64,
    pub k0: f64,
    pub k1: Option<f64>,
    pub r0: Option<f64>,
    pub delta: f64,
    pub sigma0: f64,
    /// `None` means unbounded.
    pub sigma_sup: Option<f64>,
}

impl AssumptionConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(invalid("p", format!("must be >= 1, got {}", self.p)));
        }
        if !self.k0.is_finite() {
            return Err(invalid("K0", "must be finite"));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(invalid("delta", format!("must be >= 0, got {}", self.delta)));
        }
        if !(self.sigma0.is_finite() && self.sigma0 >= 0.0) {
            return Err(invalid("sigma0", format!("must be >= 0, got {}", self.sigma0)));
        }
        if let Some(s) = self.sigma_sup {
            if !(s.is_finite() && s > 0.0) {
                return Err(invalid("sigma_sup", format!("must be positive, got {s}")));
            }
            if self.sigma0 > s {
                return Err(invalid("sigma0", format!("{} exceeds sigma_sup {s}", self.sigma0)));
            }
        }
        match (self.k1, self.r0) {
            (None, None) => Ok(()),
            (Some(k1), Some(r0)) if k1 > 0.0 && r0 > 0.0 => Ok(()),
            _ => Err(invalid("K1/r0", "must both be present and positive, or both absent")),
        }
    }
}

/// A McKean–Vlasov model: coefficients plus declared constants.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    dim: usize,
    features: MeasureFeatures,
    drift: DriftFn,
    diffusion: DiffusionFn,
    constants: AssumptionConstants,
    params: BTreeMap<String, f64>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("features", &self.features)
            .field("constants", &self.constants)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// A user-defined model. The coefficients must be deterministic.
    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        features: MeasureFeatures,
        drift: DriftFn,
        diffusion: DiffusionFn,
        constants: AssumptionConstants,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        constants.validate()?;
        Ok(Self { name: name.into(), dim, features, drift, diffusion, constants, params: BTreeMap::new() })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> MeasureFeatures {
        self.features
    }

    pub fn constants(&self) -> &AssumptionConstants {
        &self.constants
    }

    /// Parameters a built-in model was constructed from.
    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Replace the declared constants (e.g. to test a deliberately wrong
    /// declaration against [`check_dissipativity`]).
    pub fn with_constants(mut self, constants: AssumptionConstants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        Ok(self)
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], mu: &MeasureSummary<'_>, out: &mut [f64]) {
        (self.drift)(x, mu, out)
    }

    #[inline]
    pub fn diffusion_into(&self, x: &[f64], mu: &MeasureSummary<'_>, out: &mut [f64]) {
        (self.diffusion)(x, mu, out)
    }

    /// Summary of `mu` matching this model's declared features.
    pub fn summarize<'a>(&self, mu: &'a EmpiricalMeasure, mean: &'a [f64]) -> MeasureSummary<'a> {
        MeasureSummary { mean, cloud: (self.features == MeasureFeatures::Cloud).then_some(mu) }
    }
}

/// `b(x, μ)`.
pub fn eval_drift(model: &ModelSpec, x: &[f64], mu: &EmpiricalMeasure) -> Result<Vec<f64>> {
    check_dims(model, x, mu)?;
    let mean = mu.mean();
    let mut out = vec![0.0; model.dim];
    model.drift_into(x, &model.summarize(mu, &mean), &mut out);
    Ok(out)
}

/// `σ(x, μ)` as a row-major d×d matrix.
pub fn eval_diffusion(model: &ModelSpec, x: &[f64], mu: &EmpiricalMeasure) -> Result<Vec<f64>> {
    check_dims(model, x, mu)?;
    let mean = mu.mean();
    let mut out = vec![0.0; model.dim * model.dim];
    model.diffusion_into(x, &model.summarize(mu, &mean), &mut out);
    Ok(out)
}

fn check_dims(model: &ModelSpec, x: &[f64], mu: &EmpiricalMeasure) -> Result<()> {
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: x.len() });
    }
    if mu.dim() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: mu.dim() });
    }
    Ok(())
}

/// Names accepted by [`builtin_model`].
pub const BUILTIN_MODELS: [&str; 4] = ["mean_field_ou", "granular_media_1d", "curie_weiss", "custom"];

/// Construct a zoo model from a name and a parameter map.
///
/// * `mean_field_ou` {a, c, s, d?=1}: `b = −a x + c·mean(μ)`, `σ = s I`.
///   Constants from Young's inequality with unit weight: `K0 = 1 − 2a`,
///   `δ = |c|`, `p = 1`.
/// * `granular_media_1d` {theta1 > 0, theta2 ≥ 0, c ≥ 0, s}: d = 1,
///   `b = −2θ₁x³ + (θ₂/2)x + c(mean(μ) − x)`, `σ ≡ s`. Constants
///   `K0 = θ₂ − 2c + ½`, `δ = √2·c` (or `K0 = θ₂`, `δ = 0` when `c = 0`),
///   `p = 1`, and outside-ball constants `K1 = 1`, `r0 = √((K0+K1)⁺/θ₁)`
///   from `2⟨b₁(x)−b₁(y), x−y⟩ ≤ −θ₁|x−y|⁴ + θ₂|x−y|²`.
/// * `curie_weiss` {k ≥ 0, s}: the granular model with `V(x) = x⁴/4 − x²/2`
///   (θ₁ = ½, θ₂ = 2) and coupling `c = k`.
/// * `custom`: rejected; custom coefficients are closures and are built with
///   [`ModelSpec::custom`].
pub fn builtin_model(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    match name {
        "mean_field_ou" => {
            let a = required(name, params, "a")?;
            let c = required(name, params, "c")?;
            let s = required(name, params, "s")?;
            let d = optional(params, "d", 1.0)?;
            mean_field_ou(a, c, s, as_dim(d)?).map(|m| m.with_params(params))
        }
        "granular_media_1d" => {
            let t1 = required(name, params, "theta1")?;
            let t2 = required(name, params, "theta2")?;
            let c = required(name, params, "c")?;
            let s = required(name, params, "s")?;
            granular_media_1d(t1, t2, c, s).map(|m| m.with_params(params))
        }
        "curie_weiss" => {
            let k = required(name, params, "k")?;
            let s = required(name, params, "s")?;
            let mut m = granular_media_1d(0.5, 2.0, k, s)?.with_params(params);
            m.name = name.to_string();
            Ok(m)
        }
        "custom" => Err(invalid(
            "model",
            "custom models carry user code and are built through the library API (ModelSpec::custom)",
        )),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

impl ModelSpec {
    fn with_params(mut self, params: &BTreeMap<String, f64>) -> Self {
        self.params = params.clone();
        self
    }
}

fn required(model: &str, params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    let v =
        *params.get(key).ok_or_else(|| Error::MissingParameter { model: model.to_string(), param: key.to_string() })?;
    if !v.is_finite() {
        return Err(invalid(key, "must be finite"));
    }
    Ok(v)
}

fn optional(params: &BTreeMap<String, f64>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        Some(v) if v.is_finite() => Ok(*v),
        Some(_) => Err(invalid(key, "must be finite")),
        None => Ok(default),
    }
}

fn as_dim(d: f64) -> Result<usize> {
    if d >= 1.0 && d.fract() == 0.0 && d <= 1e6 {
        Ok(d as usize)
    } else {
        Err(invalid("d", format!("must be a positive integer, got {d}")))
    }
}

/// Linear interacting Ornstein–Uhlenbeck model in R^d.
pub fn mean_field_ou(a: f64, c: f64, s: f64, dim: usize) -> Result<ModelSpec> {
    if s < 0.0 {
        return Err(invalid("s", format!("must be >= 0, got {s}")));
    }
    if dim == 0 {
        return Err(invalid("d", "must be positive"));
    }
    let drift: DriftFn = Arc::new(move |x, mu, out| {
        for ((o, xi), mi) in out.iter_mut().zip(x).zip(mu.mean) {
            *o = -a * xi + c * mi;
        }
    });
    let diffusion = scalar_diffusion(s, dim);
    let constants = AssumptionConstants {
        p: 1.0,
        k0: 1.0 - 2.0 * a,
        k1: None,
        r0: None,
        delta: c.abs(),
        sigma0: s,
        sigma_sup: (s > 0.0).then(|| s * (dim as f64).sqrt()),
    };
    ModelSpec::custom("mean_field_ou", dim, MeasureFeatures::Mean, drift, diffusion, constants)
}

/// One-dimensional granular-media model: double-well confinement with
/// quadratic (mean-attracting) interaction.
pub fn granular_media_1d(theta1: f64, theta2: f64, c: f64, s: f64) -> Result<ModelSpec> {
    if !(theta1 > 0.0) {
        return Err(invalid("theta1", format!("must be > 0, got {theta1}")));
    }
    if theta2 < 0.0 {
        return Err(invalid("theta2", format!("must be >= 0, got {theta2}")));
    }
    if c < 0.0 {
        return Err(invalid("c", format!("must be >= 0, got {c}")));
    }
    if s < 0.0 {
        return Err(invalid("s", format!("must be >= 0, got {s}")));
    }
    let drift: DriftFn = Arc::new(move |x, mu, out| {
        let x = x[0];
        out[0] = -2.0 * theta1 * x * x * x + 0.5 * theta2 * x + c * (mu.mean[0] - x);
    });
    let (k0, delta) = if c > 0.0 { (theta2 - 2.0 * c + 0.5, 2f64.sqrt() * c) } else { (theta2, 0.0) };
    let k1 = 1.0;
    let r0 = ((k0 + k1).max(0.0) / theta1).sqrt();
    let constants = AssumptionConstants {
        p: 1.0,
        k0,
        k1: Some(k1),
        r0: Some(if r0 > 0.0 { r0 } else { 1.0 }),
        delta,
        sigma0: s,
        sigma_sup: (s > 0.0).then_some(s),
    };
    ModelSpec::custom("granular_media_1d", 1, MeasureFeatures::Mean, drift, scalar_diffusion(s, 1), constants)
}

fn scalar_diffusion(s: f64, dim: usize) -> DiffusionFn {
    Arc::new(move |_, _, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..dim {
            out[i * dim + i] = s;
        }
    })
}

/// One input to the dissipativity falsifier.
#[derive(Debug, Clone)]
pub struct DissipativitySample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: EmpiricalMeasure,
    pub nu: EmpiricalMeasure,
}

/// Largest observed excess of one inequality.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    /// Max of `lhs − rhs` over the samples.
    pub max_excess: f64,
    /// Max of `(lhs − rhs) / (1 + |x − y|²)`.
    pub max_scaled_excess: f64,
    pub violated: bool,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mu_mean: Vec<f64>,
    pub nu_mean: Vec<f64>,
    pub wp: f64,
    pub excess: f64,
}

/// Outcome of [`check_dissipativity`].
#[derive(Debug, Clone, Serialize)]
pub struct ViolationReport {
    pub samples: usize,
    /// The global one-sided bound with constant K0.
    pub a1: ConditionReport,
    /// The outside-ball bound, when K1 and r0 are declared.
    pub a2: Option<ConditionReport>,
}

impl ViolationReport {
    pub fn violated(&self) -> bool {
        self.a1.violated || self.a2.as_ref().is_some_and(|r| r.violated)
    }
}

/// Relative tolerance for the falsifier: a sample violates the declaration
/// when `lhs − rhs > SCALED_TOL·(1 + |x−y|²)`.
pub const SCALED_TOL: f64 = 1e-9;

/// Evaluate the declared dissipativity bounds on `n` sampled tuples.
///
/// This can refute a declaration but never prove it.
pub fn check_dissipativity(
    model: &ModelSpec,
    mut sampler: impl FnMut(usize) -> DissipativitySample,
    n: usize,
) -> Result<ViolationReport> {
    let k = model.constants;
    let d = model.dim;
    let cp = 1.0 + (k.p - 2.0).max(0.0);
    let a2_factor = k.sigma_sup.map_or(f64::INFINITY, |s| {
        if k.sigma0 > 0.0 {
            2.0 * s * s / (k.sigma0 * k.sigma0) - if d == 1 { 1.0 } else { 0.0 }
        } else {
            f64::INFINITY
        }
    });
    let mut a1 = Tracker::default();
    let mut a2 = Tracker::default();
    let (mut bx, mut by, mut sx, mut sy) = (vec![0.0; d], vec![0.0; d], vec![0.0; d * d], vec![0.0; d * d]);
    for i in 0..n {
        let s = sampler(i);
        check_dims(model, &s.x, &s.mu)?;
        check_dims(model, &s.y, &s.nu)?;
        let (mm, nm) = (s.mu.mean(), s.nu.mean());
        let (ms, ns) = (model.summarize(&s.mu, &mm), model.summarize(&s.nu, &nm));
        model.drift_into(&s.x, &ms, &mut bx);
        model.drift_into(&s.y, &ns, &mut by);
        model.diffusion_into(&s.x, &ms, &mut sx);
        model.diffusion_into(&s.y, &ns, &mut sy);
        let dx2: f64 = s.x.iter().zip(&s.y).map(|(a, b)| (a - b) * (a - b)).sum();
        let inner: f64 = bx.iter().zip(&by).zip(s.x.iter().zip(&s.y)).map(|((p, q), (a, b))| (p - q) * (a - b)).sum();
        let hs: f64 = sx.iter().zip(&sy).map(|(a, b)| (a - b) * (a - b)).sum();
        let wp = wasserstein(&s.mu, &s.nu, k.p)?.value;
        let interaction = k.delta * k.delta * wp * wp;
        let ex1 = 2.0 * inner + cp * hs - k.k0 * dx2 - interaction;
        a1.update(ex1, dx2, &s, &mm, &nm, wp);
        if let (Some(k1), Some(r0)) = (k.k1, k.r0) {
            let hs_term = if hs == 0.0 { 0.0 } else { a2_factor * hs };
            let radial = if dx2.sqrt() <= r0 { k.k0 } else { -k1 };
            let ex2 = 2.0 * inner + hs_term - radial * dx2 - interaction;
            a2.update(ex2, dx2, &s, &mm, &nm, wp);
        }
    }
    Ok(ViolationReport { samples: n, a1: a1.finish(), a2: (k.k1.is_some() && k.r0.is_some()).then(|| a2.finish()) })
}

#[derive(Default)]
struct Tracker {
    max_excess: Option<f64>,
    max_scaled: Option<f64>,
    witness: Option<Witness>,
}

impl Tracker {
    fn update(&mut self, excess: f64, dx2: f64, s: &DissipativitySample, mm: &[f64], nm: &[f64], wp: f64) {
        let scaled = excess / (1.0 + dx2);
        if self.max_excess.is_none_or(|m| excess > m) {
            self.max_excess = Some(excess);
        }
        if self.max_scaled.is_none_or(|m| scaled > m) {
            self.max_scaled = Some(scaled);
            self.witness = Some(Witness {
                x: s.x.clone(),
                y: s.y.clone(),
                mu_mean: mm.to_vec(),
                nu_mean: nm.to_vec(),
                wp,
                excess,
            });
        }
    }

    fn finish(self) -> ConditionReport {
        let max_scaled_excess = self.max_scaled.unwrap_or(f64::NEG_INFINITY);
        let violated = max_scaled_excess > SCALED_TOL;
        ConditionReport {
            max_excess: self.max_excess.unwrap_or(f64::NEG_INFINITY),
            max_scaled_excess,
            violated,
            witness: if violated { self.witness } else { None },
        }
    }
}

/// Default tuple sampler for [`check_dissipativity`].
///
/// Draws `x`, `y` and two small Gaussian clouds with centres and spreads on
/// log-uniform scales between 0.01 and 10, so that both nearby and far-apart
/// pairs (in state and in measure) are probed. Every fourth tuple uses
/// `y` close to `x` to exercise the small-|x−y| regime, and every tenth uses
/// Dirac measures.
pub fn gaussian_pair_sampler(dim: usize, seed: u64) -> impl FnMut(usize) -> DissipativitySample {
    const CLOUD: usize = 8;
    move |i| {
        let mut rng =
            CounterRng::from_seed(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), streams::DISSIPATIVITY);
        let scale = |rng: &mut CounterRng| 10f64.powf(-2.0 + 3.0 * rng.uniform());
        let sx = scale(&mut rng);
        let x: Vec<f64> = (0..dim).map(|_| sx * rng.normal()).collect();
        let y: Vec<f64> = if i % 4 == 1 {
            let e = scale(&mut rng) * 1e-2;
            x.iter().map(|v| v + e * rng.normal()).collect()
        } else {
            let sy = scale(&mut rng);
            (0..dim).map(|_| sy * rng.normal()).collect()
        };
        let n = if i % 10 == 3 { 1 } else { CLOUD };
        let cloud = |rng: &mut CounterRng| {
            let c = scale(rng);
            let w = scale(rng);
            let centre: Vec<f64> = (0..dim).map(|_| c * rng.normal()).collect();
            let pts: Vec<f64> = (0..n * dim).map(|k| centre[k % dim] + w * rng.normal()).collect();
            EmpiricalMeasure::new(pts, dim).expect("finite sample")
        };
        let mu = cloud(&mut rng);
        let nu = cloud(&mut rng);
        DissipativitySample { x, y, mu, nu }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn mean_field_ou_constants() {
        let s = 2f64.sqrt();
        let m = builtin_model("mean_field_ou", &params(&[("a", 1.0), ("c", 0.5), ("s", s), ("d", 1.0)])).unwrap();
        let k = m.constants();
        assert_eq!(k.k0, -1.0);
        assert_eq!(k.delta * k.delta, 0.25);
        assert_eq!(k.sigma0, s);
        assert_eq!(k.sigma_sup, Some(s));
        assert_eq!(k.p, 1.0);
    }

    #[test]
    fn drift_examples() {
        let m = builtin_model("mean_field_ou", &params(&[("a", 1.0), ("c", 0.5), ("s", 1.0)])).unwrap();
        let dirac2 = EmpiricalMeasure::dirac(&[2.0]).unwrap();
        assert_eq!(eval_drift(&m, &[0.0], &dirac2).unwrap(), vec![1.0]);

        let pure = builtin_model("mean_field_ou", &params(&[("a", 1.0), ("c", 0.0), ("s", 1.0)])).unwrap();
        assert_eq!(eval_drift(&pure, &[1.0], &dirac2).unwrap(), vec![-1.0]);

        let g =
            builtin_model("granular_media_1d", &params(&[("theta1", 0.25), ("theta2", 1.0), ("c", 0.3), ("s", 1.0)]))
                .unwrap();
        assert!((eval_drift(&g, &[0.0], &dirac2).unwrap()[0] - 0.6).abs() < 1e-15);

        let g0 =
            builtin_model("granular_media_1d", &params(&[("theta1", 0.25), ("theta2", 1.0), ("c", 0.0), ("s", 1.0)]))
                .unwrap();
        assert_eq!(eval_drift(&g0, &[1.0], &dirac2).unwrap(), vec![0.0]);
        assert_eq!(eval_drift(&g0, &[2.0], &dirac2).unwrap(), vec![-3.0]);
    }

    #[test]
    fn diffusion_examples() {
        let s = 2f64.sqrt();
        let mu = EmpiricalMeasure::dirac(&[0.0, 0.0]).unwrap();
        let m = builtin_model("mean_field_ou", &params(&[("a", 1.0), ("c", 0.5), ("s", s), ("d", 2.0)])).unwrap();
        assert_eq!(eval_diffusion(&m, &[3.0, -1.0], &mu).unwrap(), vec![s, 0.0, 0.0, s]);
        assert!(matches!(eval_drift(&m, &[1.0], &mu), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(builtin_model("nope", &params(&[])), Err(Error::UnknownModel(_))));
        assert!(matches!(builtin_model("mean_field_ou", &params(&[("a", 1.0)])), Err(Error::MissingParameter { .. })));
        assert!(builtin_model(
            "granular_media_1d",
            &params(&[("theta1", 0.0), ("theta2", 1.0), ("c", 0.3), ("s", 1.0)])
        )
        .is_err());
        assert!(builtin_model("custom", &params(&[])).is_err());
        assert!(builtin_model("mean_field_ou", &params(&[("a", 1.0), ("c", 0.0), ("s", 1.0), ("d", 1.5)])).is_err());
    }

    #[test]
    fn constants_validation() {
        let base =
            AssumptionConstants { p: 2.0, k0: 0.0, k1: None, r0: None, delta: 0.0, sigma0: 1.0, sigma_sup: Some(2.0) };
        assert!(base.validate().is_ok());
        assert!(AssumptionConstants { p: 0.5, ..base }.validate().is_err());
        assert!(AssumptionConstants { k1: Some(1.0), ..base }.validate().is_err());
        assert!(AssumptionConstants { sigma0: 3.0, ..base }.validate().is_err());
    }

    #[test]
    fn equal_arguments_give_zero_excess() {
        let m = granular_media_1d(0.25, 1.0, 0.3, 1.0).unwrap();
        let mu = EmpiricalMeasure::from_1d(&[0.1, 0.7]).unwrap();
        let r = check_dissipativity(
            &m,
            |_| DissipativitySample { x: vec![0.4], y: vec![0.4], mu: mu.clone(), nu: mu.clone() },
            1,
        )
        .unwrap();
        assert!(r.a1.max_excess.abs() < 1e-15 && !r.violated());
    }
}
