//! Explicit interaction thresholds and convergence rates.
//!
//! Every threshold is a supremum or infimum over an open, often unbounded
//! set. They are evaluated on log-spaced compact boxes, the limits at the
//! open ends are evaluated separately, and a result attained on a box edge
//! or in a limit is flagged in the certificate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{adaptive_simpson, log_grid, maximize_log_box, maximize_log_offset, SearchResult2};

const QUAD_TOL: f64 = 1e-8;
const GRID_1D: usize = 400;
const GRID_2D: usize = 48;
const GRID_INNER: usize = 32;
/// Offsets above `t0` searched by the one-dimensional suprema, in units of `1/λ̂`.
const T_OFFSETS: (f64, f64) = (1e-8, 1e6);
/// Offsets above `m0` searched over `m`, in units of the natural `m` scale.
const M_OFFSETS: (f64, f64) = (1e-6, 1e3);
/// Time box for the inner minimizations over the Girsanov-coupling factor.
const T_INNER: (f64, f64) = (1e-3, 1e3);

/// Time-dependent Talagrand constant of the twinned inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaT {
    Constant(f64),
    /// Piecewise linear in `t`, constant beyond the table ends.
    Table {
        t: Vec<f64>,
        value: Vec<f64>,
    },
}

impl KappaT {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            KappaT::Constant(k) => *k,
            KappaT::Table { t: ts, value } => {
                let i = ts.partition_point(|&s| s <= t);
                if i == 0 {
                    value[0]
                } else if i == ts.len() {
                    value[ts.len() - 1]
                } else {
                    let w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
                    value[i - 1] + w * (value[i] - value[i - 1])
                }
            }
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, KappaT::Constant(_))
    }

    fn validate(&self) -> Result<()> {
        match self {
            KappaT::Constant(k) if k.is_finite() && *k > 0.0 => Ok(()),
            KappaT::Constant(k) => Err(invalid("kappa_t", format!("must be positive, got {k}"))),
            KappaT::Table { t, value } => {
                if t.is_empty() || t.len() != value.len() {
                    return Err(invalid("kappa_t", "table needs matching, non-empty t and value"));
                }
                if t.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid("kappa_t", "table times must be strictly increasing"));
                }
                if value.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(invalid("kappa_t", "table values must be positive"));
                }
                Ok(())
            }
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Constants consumed by the threshold formulas. Optional fields are only
/// required by the formulas that use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateInputs {
    pub p: f64,
    #[serde(alias = "K0")]
    pub k0: f64,
    #[serde(alias = "K1", default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(alias = "K3", default, skip_serializing_if = "Option::is_none")]
    pub k3: Option<f64>,
    #[serde(default)]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_sup: Option<f64>,
    #[serde(alias = "C_hat", default = "one")]
    pub c_hat: f64,
    pub lambda_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_t: Option<KappaT>,
}

impl RateInputs {
    /// Inputs with `δ = 0` and every optional constant absent.
    pub fn new(p: f64, k0: f64, c_hat: f64, lambda_hat: f64) -> Self {
        Self {
            p,
            k0,
            k1: None,
            k3: None,
            delta: 0.0,
            sigma0: None,
            sigma_sup: None,
            c_hat,
            lambda_hat,
            kappa: None,
            kappa_t: None,
        }
    }

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
        if !(self.c_hat.is_finite() && self.c_hat >= 1.0) {
            return Err(invalid("c_hat", format!("must be >= 1, got {}", self.c_hat)));
        }
        if !(self.lambda_hat.is_finite() && self.lambda_hat > 0.0) {
            return Err(invalid("lambda_hat", format!("must be positive, got {}", self.lambda_hat)));
        }
        for (name, v) in [
            ("K1", self.k1),
            ("K3", self.k3),
            ("sigma0", self.sigma0),
            ("sigma_sup", self.sigma_sup),
            ("kappa", self.kappa),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(name, format!("must be positive, got {v}")));
                }
            }
        }
        if let Some(k) = &self.kappa_t {
            k.validate()?;
        }
        Ok(())
    }

    /// `t0 = log(Ĉ)/λ̂`, the left end of every time supremum.
    pub fn t0(&self) -> f64 {
        self.c_hat.ln() / self.lambda_hat
    }

    fn q(&self) -> f64 {
        self.p.max(2.0)
    }

    fn p_excess(&self) -> f64 {
        (self.p - 2.0).max(0.0)
    }

    /// `1 − Ĉ e^{−λ̂ t}`, accurate near `t0`.
    fn decay_gap(&self, t: f64) -> f64 {
        -(self.c_hat.ln() - self.lambda_hat * t).exp_m1()
    }

    fn need(&self, name: &str, v: Option<f64>) -> Result<f64> {
        v.ok_or_else(|| Error::MissingParameter { model: "rates".into(), param: name.into() })
    }

    fn sigma0(&self) -> Result<f64> {
        self.need("sigma0", self.sigma0)
    }

    fn kappa(&self) -> Result<f64> {
        self.need("kappa", self.kappa)
    }

    fn kappa_t(&self) -> Result<KappaT> {
        match (&self.kappa_t, self.kappa) {
            (Some(k), _) => Ok(k.clone()),
            (None, Some(k)) => Ok(KappaT::Constant(k)),
            (None, None) => Err(Error::MissingParameter { model: "rates".into(), param: "kappa_t".into() }),
        }
    }

    /// Lower edge `m0` of the free parameter `m` in the coupling arguments.
    pub fn m0(&self) -> f64 {
        (self.p_excess() / (2.0 * self.q()) + self.k0 / 2.0).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdName {
    Delta0Prop21,
    Delta0Thm22,
    Delta1Thm23,
    Delta1Thm23General,
    Delta2Thm24,
    Delta0Cor25,
    Delta2Cor25,
    Delta0Cor26,
}

impl ThresholdName {
    pub const ALL: [ThresholdName; 8] = [
        ThresholdName::Delta0Prop21,
        ThresholdName::Delta0Thm22,
        ThresholdName::Delta1Thm23,
        ThresholdName::Delta1Thm23General,
        ThresholdName::Delta2Thm24,
        ThresholdName::Delta0Cor25,
        ThresholdName::Delta2Cor25,
        ThresholdName::Delta0Cor26,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ThresholdName::Delta0Prop21 => "delta0_prop21",
            ThresholdName::Delta0Thm22 => "delta0_thm22",
            ThresholdName::Delta1Thm23 => "delta1_thm23",
            ThresholdName::Delta1Thm23General => "delta1_thm23_general",
            ThresholdName::Delta2Thm24 => "delta2_thm24",
            ThresholdName::Delta0Cor25 => "delta0_cor25",
            ThresholdName::Delta2Cor25 => "delta2_cor25",
            ThresholdName::Delta0Cor26 => "delta0_cor26",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    UniqueStationary,
    ExponentialConvergence,
    Inconclusive,
}

/// Location of the optimum. `None` means the coordinate is unused or the
/// optimum is a limit at infinity (recorded in `limits`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub t: Option<f64>,
    pub m: Option<f64>,
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub name: ThresholdName,
    pub value: f64,
    pub optimizers: Optimizers,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_bar: Option<f64>,
    /// The optimum sits on a search-box edge or is an open-end limit.
    pub boundary_flag: bool,
    /// Open-end limits that attain the optimum, e.g. `"t->inf"`.
    pub limits: Vec<String>,
    /// Relative change of the optimum between the last two grid refinements.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinement_change: Option<f64>,
    /// Intermediate constants of the formula.
    pub details: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Certificates computed alongside this one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub related: Vec<RateCertificate>,
    pub inputs_echo: RateInputs,
}

impl RateCertificate {
    fn new(name: ThresholdName, value: f64, inputs: &RateInputs) -> Self {
        Self {
            name,
            value,
            optimizers: Optimizers::default(),
            verdict: Verdict::Inconclusive,
            lambda_bar: None,
            boundary_flag: false,
            limits: Vec::new(),
            refinement_change: None,
            details: BTreeMap::new(),
            note: None,
            related: Vec::new(),
            inputs_echo: inputs.clone(),
        }
    }

    fn uniqueness_verdict(mut self) -> Self {
        self.verdict =
            if self.inputs_echo.delta < self.value { Verdict::UniqueStationary } else { Verdict::Inconclusive };
        self
    }
}

fn rel_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// `K(m, p) = 2^{−1/(p∨2)}((p∨2)(2m−K0) − (p−2)⁺)^{1/(p∨2)}`.
pub fn k_constant(m: f64, p: f64, k0: f64) -> Result<f64> {
    let q = p.max(2.0);
    let rad = q * (2.0 * m - k0) - (p - 2.0).max(0.0);
    if rad < 0.0 {
        return Err(Error::NegativeRadicand(rad));
    }
    Ok((rad / 2.0).powf(1.0 / q))
}

fn k_clamped(m: f64, p: f64, k0: f64) -> f64 {
    k_constant(m, p, k0).unwrap_or(0.0)
}

/// One-dimensional supremum over `t > t0` with explicit values of the limits
/// `t → t0⁺` and `t → ∞`.
fn sup_over_t(
    name: ThresholdName,
    inputs: &RateInputs,
    f: impl Fn(f64) -> f64 + Copy,
    at_t0: f64,
    at_inf: f64,
) -> RateCertificate {
    let t0 = inputs.t0();
    let (lo, hi) = (T_OFFSETS.0 / inputs.lambda_hat, T_OFFSETS.1 / inputs.lambda_hat);
    let coarse = maximize_log_offset(f, t0, lo, hi, GRID_1D);
    let fine = maximize_log_offset(f, t0, lo, hi, 2 * GRID_1D);
    let grid_value = fine.value.max(0.0);
    let mut cert = RateCertificate::new(name, grid_value, inputs);
    cert.refinement_change = Some(rel_change(coarse.value, fine.value));
    cert.optimizers.t = Some(fine.x);
    cert.boundary_flag = fine.at_lower || fine.at_upper;
    if at_t0 >= grid_value && at_t0 > 0.0 {
        cert.value = at_t0;
        cert.optimizers.t = Some(t0);
        cert.boundary_flag = true;
        cert.limits.push("t->t0+".into());
    }
    if at_inf >= cert.value && at_inf > 0.0 {
        cert.value = at_inf;
        cert.optimizers.t = None;
        cert.boundary_flag = true;
        cert.limits.push("t->inf".into());
    }
    cert.details.insert("t0".into(), t0);
    cert
}

/// Uniqueness threshold from the synchronous-coupling contraction of `T`.
pub fn delta0_prop21(inputs: &RateInputs) -> Result<RateCertificate> {
    inputs.validate()?;
    let q = inputs.q();
    let a = q * inputs.k0 + inputs.p_excess();
    let f = move |t: f64| {
        let x = a * t / 2.0;
        // 2t(1 − e^{−At/2})/A, with its removable singularity at A = 0.
        let bracket =
            if (a * t).abs() < 1e-6 { t * t * (1.0 - x / 2.0 + x * x / 6.0) } else { -2.0 * t * (-x).exp_m1() / a };
        bracket.powf(-1.0 / q) * inputs.decay_gap(t)
    };
    // Near t0 = 0 with Ĉ = 1 the objective is ~ λ̂ t · t^{−2/q}.
    let at_t0 = if inputs.c_hat == 1.0 && q == 2.0 { inputs.lambda_hat } else { 0.0 };
    let mut cert = sup_over_t(ThresholdName::Delta0Prop21, inputs, f, at_t0, 0.0);
    cert.details.insert("A".into(), a);
    Ok(cert.uniqueness_verdict())
}

/// Uniqueness threshold under the Talagrand inequality for `T_μ`.
pub fn delta0_thm22(inputs: &RateInputs) -> Result<RateCertificate> {
    inputs.validate()?;
    let sigma0 = inputs.sigma0()?;
    let kappa = inputs.kappa()?;
    let (p, k0, q) = (inputs.p, inputs.k0, inputs.q());
    let (t0, m0) = (inputs.t0(), inputs.m0());
    let m_scale = 1.0 + k0.abs() + sigma0 * sigma0 / kappa;
    let objective = move |t: f64, m: f64| {
        let k2 = k_clamped(m, 2.0, k0);
        let x = k_clamped(m, p, k0).max(t.powf(-1.0 / q));
        let num = sigma0 * inputs.decay_gap(t) * k2 * x;
        let den = sigma0 * k2 + m * (kappa * t).sqrt() * x;
        num / den
    };
    // On the edge m = m0 = 0 the objective reduces to (1 − Ĉe^{−λ̂t})·X, which
    // is also its limit m → 0⁺ when K(0, 2) vanishes.
    let on_edge = move |t: f64| {
        if m0 == 0.0 {
            inputs.decay_gap(t) * k_clamped(0.0, p, k0).max(t.powf(-1.0 / q))
        } else {
            objective(t, m0)
        }
    };
    let edge_at_inf = if m0 == 0.0 { k_clamped(0.0, p, k0) } else { 0.0 };

    let t_box = (T_OFFSETS.0 / inputs.lambda_hat, T_OFFSETS.1 / inputs.lambda_hat);
    let m_box = (M_OFFSETS.0 * m_scale, M_OFFSETS.1 * m_scale);
    let shifted = |st: f64, sm: f64| objective(t0 + st, m0 + sm);
    let coarse = maximize_log_box(shifted, t_box, m_box, GRID_2D, &[]);
    let fine = maximize_log_box(shifted, t_box, m_box, 2 * GRID_2D, &[]);
    let edge = sup_over_t(ThresholdName::Delta0Thm22, inputs, on_edge, 0.0, edge_at_inf);

    let mut cert = RateCertificate::new(ThresholdName::Delta0Thm22, fine.value.max(0.0), inputs);
    cert.optimizers = Optimizers { t: Some(t0 + fine.x), m: Some(m0 + fine.y), theta: None };
    cert.boundary_flag = fine.on_boundary();
    let coarse_best = coarse.value.max(edge.value);
    if edge.value >= cert.value {
        cert.value = edge.value;
        cert.optimizers = Optimizers { t: edge.optimizers.t, m: Some(m0), theta: None };
        cert.boundary_flag = true;
        cert.limits = edge.limits;
        cert.limits.push("m->m0+".into());
    }
    cert.refinement_change = Some(rel_change(coarse_best, cert.value));
    cert.details.insert("t0".into(), t0);
    cert.details.insert("m0".into(), m0);
    Ok(cert.uniqueness_verdict())
}

/// `inf{v > 0 : v (vβ + β − 2)^{−1/v} ≤ x}`.
///
/// Returns the feasible end of the final bracket, so the defining inequality
/// holds at the returned point. Returns 0 when it already holds as `v → 0⁺`.
pub fn phi_thm23(x: f64, beta: f64) -> Result<f64> {
    if !(x > 0.0 && beta >= 2.0) {
        return Err(invalid("phi", format!("needs x > 0 and beta >= 2, got x={x}, beta={beta}")));
    }
    let log_g = |v: f64| v.ln() - (v * beta + beta - 2.0).ln() / v;
    let lx = x.ln();
    let grid = log_grid(1e-12, 1e6, 2000);
    let first = grid.iter().position(|&v| log_g(v) <= lx);
    match first {
        None => Err(Error::Degenerate(format!("v (v·{beta} + {beta} − 2)^(−1/v) stays above {x} on (1e-12, 1e6]"))),
        Some(0) => Ok(0.0),
        Some(i) => Ok(feasible_bisect(|v| log_g(v) <= lx, grid[i - 1], grid[i])),
    }
}

/// Shrinks `[lo, hi]` with `ok(lo) = false`, `ok(hi) = true`; returns `hi`.
fn feasible_bisect(ok: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `Φ(u) = inf{v > 0 : v^{(v−1)/(v+1)} ≤ u}`; the root of `h(v) = u` in
/// `(0, 1]`, returned from its feasible side.
pub fn phi_cor25(u: f64) -> Result<f64> {
    if !(u.is_finite() && u >= 1.0) {
        return Err(invalid("u", format!("must be >= 1, got {u}")));
    }
    if u == 1.0 {
        return Ok(1.0);
    }
    let lu = u.ln();
    let log_h = |v: f64| (v - 1.0) / (v + 1.0) * v.ln();
    Ok(feasible_bisect(|v| log_h(v) <= lu, 0.0, 1.0))
}

/// `h(v) = v^{(v−1)/(v+1)}`.
pub fn h_cor25(v: f64) -> f64 {
    v.powf((v - 1.0) / (v + 1.0))
}

/// Closed-form exponential-convergence certificate for `p = 2`.
pub fn thm23_p2_certificate(inputs: &RateInputs) -> Result<RateCertificate> {
    inputs.validate()?;
    if inputs.p != 2.0 {
        return Err(invalid("p", format!("the closed form needs p = 2, got {}", inputs.p)));
    }
    let sigma0 = inputs.sigma0()?;
    let kappa = inputs.kappa()?;
    let k0 = inputs.k0;
    let mut cert = RateCertificate::new(ThresholdName::Delta1Thm23, 0.0, inputs);
    let m_hat = sigma0 * sigma0 / (2.0 * kappa);
    if k0 >= m_hat {
        cert.note = Some(format!("K0 = {k0} is not below sigma0^2/(2 kappa) = {m_hat}; no bound available"));
        return Ok(cert);
    }
    let k = 2.0 * m_hat - k0;
    let beta = 2.0 * (1.0 + kappa * m_hat * m_hat / (sigma0 * sigma0 * k));
    let phi = phi_thm23(2.0, beta)?;
    cert.value = (k / beta * phi.min(0.5)).sqrt();
    cert.optimizers.m = Some(m_hat);
    cert.details.insert("m_hat".into(), m_hat);
    cert.details.insert("beta_hat".into(), beta);
    cert.details.insert("phi_2".into(), phi);

    let delta = inputs.delta;
    if delta > 0.0 && delta < cert.value {
        let b = delta * delta * beta;
        let u = k / b;
        let t_hat = (u * u / (beta / 2.0 + (beta / 2.0 - 1.0) * u)).ln() / (b + k);
        let lambda_bar = b / 2.0 * (u - (1.0 + u) * (2.0 * u).ln() / (2.0 * u * u / (beta + (beta - 2.0) * u)).ln());
        cert.optimizers.t = Some(t_hat);
        cert.details.insert("u".into(), u);
        cert.details.insert("t_hat".into(), t_hat);
        if t_hat > 0.0 && lambda_bar > 0.0 {
            cert.lambda_bar = Some(lambda_bar);
            cert.verdict = Verdict::ExponentialConvergence;
        }
    } else if delta == 0.0 {
        cert.note = Some("delta = 0: the rate is set by the decoupled dynamics".into());
    }
    Ok(cert)
}

struct Thm23Parts {
    p: f64,
    delta_p: f64,
    kp_p: f64,
    tail: f64,
    d: f64,
}

impl Thm23Parts {
    fn new(inputs: &RateInputs, delta: f64, m: f64) -> Result<Self> {
        let p = inputs.p;
        if p < 2.0 {
            return Err(invalid("p", format!("needs p >= 2, got {p}")));
        }
        let sigma0 = inputs.sigma0()?;
        let kappa = inputs.kappa()?;
        let m0 = inputs.m0();
        if !(m > m0) {
            return Err(invalid("m", format!("must exceed m0 = {m0}, got {m}")));
        }
        let k = 2.0 * m - inputs.k0;
        let common = kappa.powf(p / 2.0) * m.powf(p) / (sigma0.powf(p) * k.powf(p / 2.0));
        Ok(Self {
            p,
            delta_p: delta.powf(p),
            kp_p: (p * k - (p - 2.0)) / 2.0,
            tail: 2f64.powf(1.5 * p - 2.0) * common,
            d: 2f64.powf(p / 2.0 - 1.0) * common,
        })
    }

    fn a1(&self, s: f64) -> f64 {
        2f64.powf(self.p - 1.0) * (-self.kp_p * s).exp() + self.tail
    }

    fn a2(&self, t: f64) -> f64 {
        2f64.powf(self.p - 1.0) * (1.0 + self.d * t.powf(self.p / 2.0 - 1.0))
    }

    /// `∫_s^t a2(r) dr`.
    fn a2_integral(&self, s: f64, t: f64) -> f64 {
        let h = self.p / 2.0;
        2f64.powf(self.p - 1.0) * ((t - s) + self.d * (t.powf(h) - s.powf(h)) / h)
    }

    fn gamma(&self, t: f64) -> f64 {
        let mut g = self.a1(t);
        if self.delta_p > 0.0 {
            // The exponential weight peaks at s = 0; factor it out.
            let peak = self.delta_p * self.a2_integral(0.0, t);
            let inner = adaptive_simpson(
                |s| (self.delta_p * self.a2_integral(s, t) - peak).exp() * self.a1(s),
                0.0,
                t,
                QUAD_TOL,
            );
            g += self.delta_p * self.a2(t) * inner * peak.exp();
        }
        g.powf(1.0 / self.p)
    }
}

/// Contraction factor `γ(δ, m, t)` of the Girsanov coupling argument.
pub fn gamma_thm23(inputs: &RateInputs, delta: f64, m: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    Ok(Thm23Parts::new(inputs, delta, m)?.gamma(t))
}

/// The condition on `K0` under which the general-`p` argument applies.
pub fn thm23_k0_condition(inputs: &RateInputs) -> Result<bool> {
    let sigma0 = inputs.sigma0()?;
    let kappa = inputs.kappa()?;
    let p = inputs.p;
    let s = sigma0 * sigma0 / (2f64.powf(3.0 - 4.0 / p) * kappa);
    let gap = (((p - 2.0) / p).max(0.0).sqrt() - s.sqrt()).max(0.0);
    Ok(inputs.k0 < s - gap * gap)
}

/// Minimum of `γ(δ, ·, ·)` over the `(t, m)` search box; `y` is the offset
/// `m − m0`.
pub fn thm23_min_gamma(inputs: &RateInputs, delta: f64) -> Result<SearchResult2> {
    thm23_min(inputs, delta, GRID_INNER, &thm23_warm(inputs)?)
}

/// The coupling parameter `m̂` used as a warm start, paired with a few times.
fn thm23_warm(inputs: &RateInputs) -> Result<Vec<(f64, f64)>> {
    let m0 = inputs.m0();
    let m_hat = thm23_m_hat(inputs)?;
    Ok([0.1, 1.0, 10.0, 100.0].iter().filter(|_| m_hat > m0).map(|&t| (t, m_hat - m0)).collect())
}

fn thm23_m_hat(inputs: &RateInputs) -> Result<f64> {
    let (sigma0, kappa, p) = (inputs.sigma0()?, inputs.kappa()?, inputs.p);
    let s = sigma0 * sigma0 / (2f64.powf(3.0 - 4.0 / p) * kappa);
    Ok((s.max((p - 2.0) / p)).sqrt() * s.sqrt())
}

fn thm23_min(inputs: &RateInputs, delta: f64, n: usize, warm: &[(f64, f64)]) -> Result<SearchResult2> {
    let m0 = inputs.m0();
    let m_scale = m_scale(inputs)?;
    Thm23Parts::new(inputs, delta, m0 + m_scale)?;
    let f = |t: f64, dm: f64| match Thm23Parts::new(inputs, delta, m0 + dm) {
        Ok(parts) => -parts.gamma(t),
        Err(_) => f64::NEG_INFINITY,
    };
    let mut r = maximize_log_box(f, T_INNER, (M_OFFSETS.0 * m_scale, M_OFFSETS.1 * m_scale), n, warm);
    r.value = -r.value;
    Ok(r)
}

fn m_scale(inputs: &RateInputs) -> Result<f64> {
    Ok(1.0 + inputs.k0.abs() + inputs.sigma0()?.powi(2) / inputs.kappa()?)
}

/// Smallest `δ` in `(0, cap]` at which `feasible` fails, by doubling then
/// bisection to relative tolerance `1e−6`. `None` if `feasible(cap)` holds.
fn threshold_search(feasible: impl Fn(f64) -> Result<bool>, cap: f64) -> Result<Option<f64>> {
    let mut lo = 0.0;
    let mut hi = 1e-3;
    while feasible(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > cap {
            return Ok(None);
        }
    }
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// `δ1 = inf{δ > 0 : inf_{t, m} γ(δ, m, t) ≥ 1}` by direct search.
pub fn delta1_thm23_general(inputs: &RateInputs) -> Result<RateCertificate> {
    inputs.validate()?;
    let mut cert = RateCertificate::new(ThresholdName::Delta1Thm23General, 0.0, inputs);
    if !thm23_k0_condition(inputs)? {
        cert.note = Some("K0 violates the dissipativity condition of the argument".into());
        return Ok(cert);
    }
    let m0 = inputs.m0();
    let warm = thm23_warm(inputs)?;
    cert.details.insert("m_hat".into(), thm23_m_hat(inputs)?);
    cert.details.insert("m0".into(), m0);

    let feasible = |d: f64| Ok(thm23_min(inputs, d, GRID_INNER, &warm)?.value < 1.0);
    if !feasible(0.0)? {
        cert.note = Some("no (t, m) in the search box gives a contraction even at delta = 0".into());
        return Ok(cert);
    }
    let Some(delta1) = threshold_search(feasible, 1e6)? else {
        cert.note = Some("contraction persists up to delta = 1e6".into());
        cert.boundary_flag = true;
        return Ok(cert);
    };
    cert.value = delta1;
    let coarse = thm23_min(inputs, delta1, GRID_INNER, &warm)?;
    let fine = thm23_min(inputs, delta1, 2 * GRID_INNER, &warm)?;
    cert.refinement_change = Some(rel_change(coarse.value, fine.value));
    cert.boundary_flag = fine.on_boundary();
    cert.optimizers.t = Some(fine.x);
    cert.optimizers.m = Some(m0 + fine.y);

    let delta = inputs.delta;
    if delta < delta1 {
        let best = thm23_min(inputs, delta, GRID_INNER, &warm)?;
        cert.details.insert("gamma_min".into(), best.value);
        let rate = |t: f64, dm: f64| match Thm23Parts::new(inputs, delta, m0 + dm) {
            Ok(parts) => -parts.gamma(t).ln() / t,
            Err(_) => f64::NEG_INFINITY,
        };
        let r = maximize_log_box(
            rate,
            T_INNER,
            (M_OFFSETS.0 * m_scale(inputs)?, M_OFFSETS.1 * m_scale(inputs)?),
            GRID_INNER,
            &[(best.x, best.y)],
        );
        if r.value > 0.0 {
            cert.lambda_bar = Some(r.value);
            cert.optimizers.t = Some(r.x);
            cert.optimizers.m = Some(m0 + r.y);
            cert.boundary_flag |= r.on_boundary();
            cert.verdict = Verdict::ExponentialConvergence;
        }
    }
    Ok(cert)
}

/// `inf_{m > m0} m/√(2m − K0)`, with the value 0 when the floor
/// `|K0| ∨ (p−2)⁺/(p∨2)` vanishes.
fn optimal_m_ratio(inputs: &RateInputs) -> f64 {
    let f = inputs.p_excess() / inputs.q();
    let floor = inputs.k0.abs().max(f);
    if floor == 0.0 {
        0.0
    } else {
        (inputs.k0 + f.max(inputs.k0.abs())) / (2.0 * floor.sqrt())
    }
}

enum C1 {
    Constant(f64),
    Varying { ratio: f64, sigma0: f64, kappa_t: KappaT, q: f64 },
}

impl C1 {
    fn new(inputs: &RateInputs) -> Result<Self> {
        let ratio = optimal_m_ratio(inputs);
        if ratio == 0.0 {
            return Ok(C1::Constant(1.0));
        }
        let sigma0 = inputs.sigma0()?;
        let kappa_t = inputs.kappa_t()?;
        let q = inputs.q();
        if q == 2.0 && kappa_t.is_constant() {
            let k = kappa_t.at(0.0);
            return Ok(C1::Constant((1.0 + k.sqrt() * ratio / sigma0).powi(2)));
        }
        Ok(C1::Varying { ratio, sigma0, kappa_t, q })
    }

    fn at(&self, t: f64) -> f64 {
        match self {
            C1::Constant(c) => *c,
            C1::Varying { ratio, sigma0, kappa_t, q } => {
                let e = (q - 2.0) / (2.0 * q);
                (1.0 + t.powf(e) * kappa_t.at(t).sqrt() * ratio / sigma0).powf(*q)
            }
        }
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

struct Thm24 {
    c_hat: f64,
    lambda_hat: f64,
    q: f64,
    c1: C1,
}

impl Thm24 {
    fn new(inputs: &RateInputs) -> Result<Self> {
        inputs.validate()?;
        Ok(Self { c_hat: inputs.c_hat, lambda_hat: inputs.lambda_hat, q: inputs.q(), c1: C1::new(inputs)? })
    }

    fn log_gamma(&self, delta: f64, t: f64, theta: f64) -> f64 {
        let q = self.q;
        let d = delta.powf(q) * (1.0 + theta).powf(q - 1.0);
        let log_g1 = if d == 0.0 {
            0.0
        } else {
            match self.c1 {
                C1::Constant(c) => {
                    // γ1 = (1 − cD/k) + (cD/k) e^{kt}, k = cD + qλ̂.
                    let k = c * d + q * self.lambda_hat;
                    let w = c * d / k;
                    log_add_exp((-w).ln_1p(), w.ln() + k * t)
                }
                C1::Varying { .. } => {
                    let g = |r: f64| self.c1.at(r) * d + q * self.lambda_hat;
                    let big_g = |s: f64| adaptive_simpson(g, 0.0, s, QUAD_TOL);
                    let j = adaptive_simpson(|s| (-big_g(s)).exp(), 0.0, t, QUAD_TOL);
                    log_add_exp(0.0, (d * self.c1.at(t)).ln() + big_g(t) + j.ln())
                }
            }
        };
        self.c_hat.ln() + (1.0 - 1.0 / q) * ((1.0 + theta) / theta).ln() + log_g1 / q - self.lambda_hat * t
    }
}

/// Contraction factor `γ(δ, t, θ)` of the twinned-Talagrand argument, with
/// `m` at its optimal value.
pub fn gamma_thm24(inputs: &RateInputs, delta: f64, t: f64, theta: f64) -> Result<f64> {
    if !(t > 0.0 && theta > 0.0) {
        return Err(invalid("t/theta", format!("must be positive, got t={t}, theta={theta}")));
    }
    Ok(Thm24::new(inputs)?.log_gamma(delta, t, theta).exp())
}

/// Compact `(t, θ)` box for the twinned-Talagrand infimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub t: (f64, f64),
    pub theta: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        Self { t: (0.05, 50.0), theta: (0.05, 100.0) }
    }
}

impl SearchBox {
    fn validate(&self) -> Result<()> {
        let ok = |(a, b): (f64, f64)| a > 0.0 && b > a && b.is_finite();
        if ok(self.t) && ok(self.theta) {
            Ok(())
        } else {
            Err(invalid("search_box", format!("needs 0 < lo < hi < inf, got {self:?}")))
        }
    }
}

/// Minimum of `log γ(δ, ·, ·)` over the box.
pub fn thm24_min_log_gamma(inputs: &RateInputs, delta: f64, search: &SearchBox) -> Result<SearchResult2> {
    search.validate()?;
    let model = Thm24::new(inputs)?;
    Ok(thm24_min(&model, delta, search, GRID_2D))
}

fn thm24_min(model: &Thm24, delta: f64, search: &SearchBox, n: usize) -> SearchResult2 {
    let mut r = maximize_log_box(|t, th| -model.log_gamma(delta, t, th), search.t, search.theta, n, &[]);
    r.value = -r.value;
    r
}

/// `δ2 = inf{δ > 0 : inf_{t, θ} γ(δ, t, θ) ≥ 1}` over a compact box, with a
/// rate witness for the input `δ`.
pub fn delta2_thm24(inputs: &RateInputs, search: &SearchBox) -> Result<RateCertificate> {
    search.validate()?;
    let model = Thm24::new(inputs)?;
    let mut cert = RateCertificate::new(ThresholdName::Delta2Thm24, 0.0, inputs);
    let feasible = |d: f64| Ok(thm24_min(&model, d, search, GRID_2D).value < 0.0);
    if !feasible(0.0)? {
        cert.note = Some("no (t, theta) in the box gives a contraction even at delta = 0".into());
        return Ok(cert);
    }
    let Some(delta2) = threshold_search(feasible, 1e6)? else {
        cert.note = Some("contraction persists up to delta = 1e6".into());
        cert.boundary_flag = true;
        return Ok(cert);
    };
    cert.value = delta2;
    let coarse = thm24_min(&model, delta2, search, GRID_2D);
    let fine = thm24_min(&model, delta2, search, 2 * GRID_2D);
    cert.refinement_change = Some(rel_change(coarse.value.exp(), fine.value.exp()));
    cert.boundary_flag = fine.on_boundary();
    cert.optimizers.t = Some(fine.x);
    cert.optimizers.theta = Some(fine.y);

    // The convergence certificate also needs δ below a uniqueness threshold; take the best one
    // the inputs allow.
    let mut delta0 = delta0_prop21(inputs)?.value;
    if inputs.sigma0.is_some() && inputs.kappa.is_some() {
        delta0 = delta0.max(delta0_thm22(inputs)?.value);
    }
    cert.details.insert("delta0".into(), delta0);

    let delta = inputs.delta;
    let min_here = thm24_min(&model, delta, search, GRID_2D);
    cert.details.insert("gamma_min".into(), min_here.value.exp());
    if min_here.value < 0.0 {
        let r = maximize_log_box(
            |t, th| -model.log_gamma(delta, t, th) / t,
            search.t,
            search.theta,
            GRID_2D,
            &[(min_here.x, min_here.y)],
        );
        if r.value > 0.0 {
            cert.lambda_bar = Some(r.value);
            cert.optimizers.t = Some(r.x);
            cert.optimizers.theta = Some(r.y);
            cert.details.insert("gamma_at_witness".into(), model.log_gamma(delta, r.x, r.y).exp());
            if r.on_boundary() {
                cert.boundary_flag = true;
                cert.note = Some(if delta == 0.0 {
                    "delta = 0: the rate is limited by lambda_hat and the box edge".into()
                } else {
                    "best rate witness lies on the search-box edge".into()
                });
            }
            if delta < delta0 && !cert.boundary_flag {
                cert.verdict = Verdict::ExponentialConvergence;
            }
        }
    }
    Ok(cert)
}

/// Closed-form `δ2`, `t̂`, `γ(δ, t̂, 1)` and `λ̄` of the `W1` certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cor25Rate {
    pub phi: f64,
    pub delta2: f64,
    pub t_hat: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda_bar: Option<f64>,
}

pub fn cor25_rate(lambda_hat: f64, alpha: f64, c_hat: f64, delta: f64) -> Result<Cor25Rate> {
    let phi = phi_cor25(2.0 * c_hat * c_hat)?;
    let delta2 = (lambda_hat / alpha * phi).sqrt();
    let mut out = Cor25Rate { phi, delta2, t_hat: None, gamma: None, lambda_bar: None };
    let a = alpha * delta * delta;
    if a > 0.0 && a < lambda_hat {
        let r = lambda_hat / a;
        let t_hat = r.ln() / (a + lambda_hat);
        let log_gamma_sq = (2.0 * c_hat * c_hat).ln() + (a - lambda_hat) / (a + lambda_hat) * r.ln();
        out.t_hat = Some(t_hat);
        out.gamma = Some((0.5 * log_gamma_sq).exp());
        if log_gamma_sq < 0.0 {
            out.lambda_bar = Some(-0.5 * log_gamma_sq / t_hat);
        }
    }
    Ok(out)
}

/// `α = (1 + (‖σ‖∞/σ0)√(K0/(K1 ∧ K3)))²`.
pub fn alpha_cor25(inputs: &RateInputs) -> Result<f64> {
    let (sigma0, sigma_sup, k1, k3) = cor25_constants(inputs)?;
    Ok((1.0 + sigma_sup / sigma0 * (inputs.k0 / k1.min(k3)).sqrt()).powi(2))
}

fn cor25_constants(inputs: &RateInputs) -> Result<(f64, f64, f64, f64)> {
    if inputs.k0 < 0.0 {
        return Err(invalid("K0", format!("this certificate needs K0 >= 0, got {}", inputs.k0)));
    }
    Ok((
        inputs.sigma0()?,
        inputs.need("sigma_sup", inputs.sigma_sup)?,
        inputs.need("K1", inputs.k1)?,
        inputs.need("K3", inputs.k3)?,
    ))
}

/// Uniqueness threshold of the `W1` certificate.
pub fn delta0_cor25(inputs: &RateInputs) -> Result<RateCertificate> {
    inputs.validate()?;
    let (sigma0, sigma_sup, k1, _) = cor25_constants(inputs)?;
    let k0 = inputs.k0;
    let f = move |t: f64| {
        sigma0 * inputs.decay_gap(t) * k1.sqrt()
            / (2.0 * sigma0 * sigma_sup * (k1 * t).sqrt() + k0 * sigma_sup * sigma_sup * t).sqrt()
    };
    Ok(sup_over_t(ThresholdName::Delta0Cor25, inputs, f, 0.0, 0.0).uniqueness_verdict())
}

/// Full `W1` certificate: `δ2`, `λ̄`, with the `δ0` certificate attached.
pub fn cor25_certificate(inputs: &RateInputs) -> Result<RateCertificate> {
    let d0 = delta0_cor25(inputs)?;
    let alpha = alpha_cor25(inputs)?;
    let rate = cor25_rate(inputs.lambda_hat, alpha, inputs.c_hat, inputs.delta)?;
    let mut cert = RateCertificate::new(ThresholdName::Delta2Cor25, rate.delta2, inputs);
    cert.optimizers.t = rate.t_hat;
    cert.optimizers.theta = Some(1.0);
    cert.details.insert("alpha".into(), alpha);
    cert.details.insert("phi".into(), rate.phi);
    cert.details.insert("delta0".into(), d0.value);
    if let Some(g) = rate.gamma {
        cert.details.insert("gamma".into(), g);
    }
    let delta = inputs.delta;
    if delta < rate.delta2.min(d0.value) && rate.lambda_bar.is_some() {
        cert.lambda_bar = rate.lambda_bar;
        cert.verdict = Verdict::ExponentialConvergence;
    } else if delta < d0.value {
        cert.verdict = Verdict::UniqueStationary;
    }
    cert.related.push(d0);
    Ok(cert)
}

/// Uniqueness threshold of the `W2` Talagrand certificate for `x`-independent diffusion,
/// with the closed-form convergence certificate attached when it applies.
pub fn cor26_delta0(inputs: &RateInputs) -> Result<RateCertificate> {
    inputs.validate()?;
    let sigma0 = inputs.sigma0()?;
    let kappa = inputs.kappa()?;
    let k0 = inputs.k0;
    if k0 < 0.0 {
        return Err(invalid("K0", format!("this certificate needs K0 >= 0, got {k0}")));
    }
    let f = move |t: f64| sigma0 * inputs.decay_gap(t) / (kappa * (2.0 * sigma0 * t.sqrt() + k0 * kappa * t)).sqrt();
    let mut cert = sup_over_t(ThresholdName::Delta0Cor26, inputs, f, 0.0, 0.0).uniqueness_verdict();
    if k0 < sigma0 * sigma0 / (2.0 * kappa) {
        let p2 = RateInputs { p: 2.0, ..inputs.clone() };
        let rate = thm23_p2_certificate(&p2)?;
        if cert.verdict == Verdict::UniqueStationary && rate.verdict == Verdict::ExponentialConvergence {
            cert.verdict = Verdict::ExponentialConvergence;
            cert.lambda_bar = rate.lambda_bar;
        }
        cert.related.push(rate);
    }
    Ok(cert)
}

/// Computes the named certificate.
pub fn certificate(name: ThresholdName, inputs: &RateInputs, search: &SearchBox) -> Result<RateCertificate> {
    match name {
        ThresholdName::Delta0Prop21 => delta0_prop21(inputs),
        ThresholdName::Delta0Thm22 => delta0_thm22(inputs),
        ThresholdName::Delta1Thm23 => thm23_p2_certificate(inputs),
        ThresholdName::Delta1Thm23General => delta1_thm23_general(inputs),
        ThresholdName::Delta2Thm24 => delta2_thm24(inputs, search),
        ThresholdName::Delta0Cor25 => delta0_cor25(inputs),
        ThresholdName::Delta2Cor25 => cor25_certificate(inputs),
        ThresholdName::Delta0Cor26 => cor26_delta0(inputs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dissipative(a: f64) -> RateInputs {
        RateInputs::new(2.0, -a, 1.0, a)
    }

    #[test]
    fn k_constant_examples() {
        assert!((k_constant(1.0, 2.0, 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((k_constant(0.0, 2.0, -1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((k_constant(1.0, 4.0, 0.0).unwrap() - 3f64.powf(0.25)).abs() < 1e-14);
        assert!(matches!(k_constant(0.0, 2.0, 1.0), Err(Error::NegativeRadicand(_))));
    }

    #[test]
    fn prop21_dissipative_values() {
        for a in [1.0, 4.0] {
            let c = delta0_prop21(&dissipative(a)).unwrap();
            assert!((c.value - a).abs() < 1e-3 * a, "{c:?}");
            assert!(c.boundary_flag);
            assert_eq!(c.limits, vec!["t->t0+".to_string()]);
        }
    }

    #[test]
    fn prop21_zero_dissipativity_uses_series_branch() {
        let c = delta0_prop21(&RateInputs::new(2.0, 0.0, 1.0, 1.0)).unwrap();
        assert!((c.value - 1.0).abs() < 1e-3, "{c:?}");
        assert_eq!(c.details["A"], 0.0);
    }

    #[test]
    fn phi_cor25_root() {
        assert_eq!(phi_cor25(1.0).unwrap(), 1.0);
        for u in [1.5, 2.0, 5.0] {
            let v = phi_cor25(u).unwrap();
            assert!(v > 0.0 && v < 1.0);
            assert!((h_cor25(v) - u).abs() < 1e-9, "u={u}: h={}", h_cor25(v));
            assert!(h_cor25(v - 1e-6) > u);
        }
        assert!(phi_cor25(0.5).is_err());
    }

    #[test]
    fn thm23_closed_form_constants() {
        let mut inputs = RateInputs::new(2.0, 0.0, 1.0, 1.0);
        inputs.sigma0 = Some(1.0);
        inputs.kappa = Some(0.5);
        let c = thm23_p2_certificate(&inputs).unwrap();
        assert!((c.details["m_hat"] - 1.0).abs() < 1e-15);
        assert!((c.details["beta_hat"] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn thm23_gamma_without_interaction() {
        let mut inputs = RateInputs::new(2.0, 0.0, 1.0, 1.0);
        inputs.sigma0 = Some(1.0);
        inputs.kappa = Some(0.5);
        let g = gamma_thm23(&inputs, 0.0, 1.0, 50.0).unwrap();
        assert!((g * g - 0.5).abs() < 1e-12, "{g}");
        assert!(gamma_thm23(&inputs, 0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn thm24_gamma_without_interaction() {
        let inputs = dissipative(1.0);
        for (t, th) in [(0.5, 0.3), (2.0, 7.0)] {
            let g = gamma_thm24(&inputs, 0.0, t, th).unwrap();
            let want = ((1.0 + th) / th).sqrt() * (-t).exp();
            assert!((g - want).abs() < 1e-13 * want);
        }
    }

    #[test]
    fn cor25_instance() {
        let r = cor25_rate(1.0, 4.0, 1.0, 0.2).unwrap();
        assert!((r.delta2 - 0.2668).abs() < 1e-3, "{r:?}");
        assert!((r.lambda_bar.unwrap() - 0.2005).abs() < 1e-3, "{r:?}");
        assert!((r.t_hat.unwrap() - 1.5798).abs() < 1e-3);
    }

    #[test]
    fn kappa_table_interpolates() {
        let k = KappaT::Table { t: vec![0.0, 1.0], value: vec![1.0, 3.0] };
        assert_eq!(k.at(-1.0), 1.0);
        assert_eq!(k.at(0.5), 2.0);
        assert_eq!(k.at(4.0), 3.0);
    }

    #[test]
    fn names_round_trip() {
        for n in ThresholdName::ALL {
            assert_eq!(ThresholdName::parse(n.as_str()), Some(n));
            assert_eq!(serde_json::to_string(&n).unwrap(), format!("\"{}\"", n.as_str()));
        }
    }
}
