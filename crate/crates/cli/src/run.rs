//! Command dispatch and artifact writing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mvlab_core::fixedpoint::fit_above_floor;
use mvlab_core::measures::{noise_floor, write_measure_csv};
use mvlab_core::rates::certificate;
use mvlab_core::simulate::fmt17;
use mvlab_core::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, FixedPointSection, MeasureSource, RatesSection, RunConfig};

/// Sampling streams for measures built from the config.
const STREAM_INIT: u64 = 101;
const STREAM_REFERENCE: u64 = 102;
const STREAM_FROZEN: u64 = 103;
const STREAM_STARTS: u64 = 110;
/// Bootstrap repetitions behind reported noise floors.
const NOISE_REPS: usize = 8;

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Computed, but no requested certificate reached a verdict.
    Inconclusive,
}

#[derive(Debug)]
pub struct RunError {
    pub kind: &'static str,
    pub message: String,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Divergence { .. } | Error::NonFiniteState { .. } => "divergence",
            Error::Io(_) | Error::Csv(_) => "io",
            Error::MissingParameter { .. } => "missing_parameter",
            Error::UnknownModel(_) => "unknown_model",
            _ => "computation",
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        Self { kind: "io", message: e.to_string() }
    }
}

fn input_error(message: impl Into<String>) -> RunError {
    RunError { kind: "invalid_input", message: message.into() }
}

type RunResult<T> = std::result::Result<T, RunError>;

/// Executes a validated configuration, writing artifacts into `out`.
/// `base` is the directory relative measure paths resolve against.
pub fn run(cfg: &RunConfig, out: &Path, base: &Path) -> RunResult<Outcome> {
    let ctx = Ctx { cfg, out, base };
    match cfg.command.expect("parse_config sets the command") {
        Command::Simulate => ctx.simulate(),
        Command::Stationary => ctx.stationary(),
        Command::Converge => ctx.converge(),
        Command::Rates => ctx.rates(),
        Command::PhaseScan => ctx.phase_scan(),
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    base: &'a Path,
}

impl Ctx<'_> {
    fn model_with(&self, overrides: Option<(&str, f64)>) -> RunResult<ModelSpec> {
        let m = self.cfg.model.as_ref().expect("parse_config checks the model section");
        let mut params = m.params.clone();
        if let Some((k, v)) = overrides {
            params.insert(k.to_string(), v);
        }
        Ok(builtin_model(&m.name, &params)?)
    }

    fn model(&self) -> RunResult<ModelSpec> {
        self.model_with(None)
    }

    fn measure(&self, src: &MeasureSource, stream: u64, dim: usize) -> RunResult<EmpiricalMeasure> {
        let mu = src.load(self.base, self.cfg.sim.n_particles, self.cfg.sim.seed, stream).map_err(input_error)?;
        if mu.dim() != dim {
            return Err(input_error(format!("measure has dimension {}, model has {dim}", mu.dim())));
        }
        Ok(mu)
    }

    /// The `[init]` measure, defaulting to a Dirac mass at the origin.
    fn init(&self, dim: usize) -> RunResult<EmpiricalMeasure> {
        match &self.cfg.init {
            Some(src) => self.measure(src, STREAM_INIT, dim),
            None => Ok(EmpiricalMeasure::dirac(&vec![0.0; dim])?),
        }
    }

    fn fixedpoint(&self) -> &FixedPointSection {
        self.cfg.fixedpoint.as_ref().expect("parse_config fills [fixedpoint]")
    }

    fn picard_options(&self) -> PicardOptions {
        let fp = self.fixedpoint();
        PicardOptions {
            tol: fp.tol,
            max_iter: fp.max_iter,
            noise_fraction: fp.noise_fraction,
            apply: ApplyTOptions { burn_in: fp.burn_in, pooled: fp.pooled, init: None },
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> RunResult<()> {
        let mut f = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer_pretty(&mut f, value).map_err(|e| RunError { kind: "io", message: e.to_string() })?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    fn write_measure(&self, name: &str, mu: &EmpiricalMeasure) -> RunResult<()> {
        let f = BufWriter::new(File::create(self.path(name))?);
        write_measure_csv(mu, f)?;
        Ok(())
    }

    fn simulate(&self) -> RunResult<Outcome> {
        let model = self.model()?;
        let d = model.dim();
        let sim = &self.cfg.sim;
        let section = self.cfg.simulate.as_ref().expect("parse_config fills [simulate]");
        let init = self.init(d)?;
        let mut traj = match &section.frozen {
            Some(src) => simulate_decoupled(&model, &self.measure(src, STREAM_FROZEN, d)?, &init, sim)?,
            None => simulate_mv(&model, &init, sim)?,
        };
        if let Some(src) = &section.reference {
            traj.attach_reference(&self.measure(src, STREAM_REFERENCE, d)?)?;
        }
        if self.cfg.format.csv() {
            traj.write_csv(BufWriter::new(File::create(self.path("trajectory.csv"))?))?;
            self.write_measure("final.csv", traj.last())?;
        }
        if section.snapshots {
            let dir = self.path("snapshots");
            std::fs::create_dir_all(&dir)?;
            traj.write_snapshots(&dir)?;
        }
        if self.cfg.format.json() {
            self.write_json(
                "trajectory.json",
                &json!({
                    "model": model.name(),
                    "mode": if section.frozen.is_some() { "decoupled" } else { "interacting" },
                    "times": traj.times,
                    "means": traj.means,
                    "pmoments": traj.pmoments,
                    "p": traj.p,
                    "wp_to_ref": traj.wp_to_ref,
                    "wp_estimator": traj.wp_estimator,
                    "taming_activations": traj.taming_activations,
                }),
            )?;
        }
        Ok(Outcome::Done)
    }

    fn stationary(&self) -> RunResult<Outcome> {
        let model = self.model()?;
        let init = self.init(model.dim())?;
        let r = picard_solve(&model, &init, &self.cfg.sim, &self.picard_options())?;
        self.write_measure("measure.csv", &r.measure)?;
        let n = r.measure.len() as f64;
        let se: Vec<f64> = r.measure.covariance().iter().step_by(model.dim() + 1).map(|v| (v / n).sqrt()).collect();
        self.write_json(
            "stationary.json",
            &json!({
                "model": model.name(),
                "mean": r.measure.mean(),
                "mean_standard_error": se,
                "measure_file": "measure.csv",
                "result": r,
            }),
        )?;
        Ok(Outcome::Done)
    }

    fn converge(&self) -> RunResult<Outcome> {
        let model = self.model()?;
        let d = model.dim();
        let section = self.cfg.converge.as_ref().expect("parse_config fills [converge]");
        let sim = &self.cfg.sim;
        let (mu_bar, reference_kind) = match &section.reference {
            Some(src) => (self.measure(src, STREAM_REFERENCE, d)?, "given"),
            None => {
                let r = picard_solve(&model, &self.init(d)?, sim, &self.picard_options())?;
                self.write_measure("reference.csv", &r.measure)?;
                (r.measure, "picard")
            }
        };
        let mu0 = if section.start_at_reference { mu_bar.clone() } else { self.init(d)? };
        let traj = measure_convergence(&model, &mu0, &mu_bar, sim)?;
        let w = traj.wp_to_ref.as_ref().expect("reference attached");
        let (floor, floor_sd) = noise_floor(&mu_bar, sim.p, NOISE_REPS, sim.seed)?;
        let window: Vec<(f64, f64)> =
            traj.times.iter().copied().zip(w.iter().copied()).filter(|(t, _)| *t >= section.fit_start).collect();
        let fit = fit_above_floor(&window, section.floor_factor * floor).ok();
        if self.cfg.format.csv() {
            let mut out = csv::Writer::from_writer(BufWriter::new(File::create(self.path("decay.csv"))?));
            out.write_record(["t", "wp"]).map_err(Error::from)?;
            for (t, v) in traj.times.iter().zip(w) {
                out.write_record([fmt17(*t), fmt17(*v)]).map_err(Error::from)?;
            }
            out.flush()?;
        }
        let mut report = json!({
            "model": model.name(),
            "reference": reference_kind,
            "noise_floor": floor,
            "noise_floor_sd": floor_sd,
            "fit_floor": section.floor_factor * floor,
            "fit_start": section.fit_start,
            "degenerate": fit.is_none(),
            "fit": fit,
            "wp_estimator": traj.wp_estimator,
        });
        if !self.cfg.format.csv() {
            report["t"] = json!(traj.times);
            report["wp"] = json!(w);
        }
        let mut outcome = Outcome::Done;
        if let Some(rates) = &self.cfg.rates {
            let set = certify(rates)?;
            let certified = set
                .certificates
                .iter()
                .filter(|c| c.verdict == Verdict::ExponentialConvergence)
                .filter_map(|c| c.lambda_bar)
                .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.max(l))));
            report["certified_lambda_bar"] = json!(certified);
            report["fitted_at_least_certified"] = json!(match (fit, certified) {
                (Some(f), Some(c)) => Some(f.lambda_bar >= c),
                _ => None,
            });
            report["verdict"] = json!(set.verdict);
            report["certificates"] = json!(set.certificates);
            if set.verdict == Verdict::Inconclusive {
                outcome = Outcome::Inconclusive;
            }
        }
        self.write_json("fit.json", &report)?;
        Ok(outcome)
    }

    fn rates(&self) -> RunResult<Outcome> {
        let rates = self.cfg.rates.as_ref().expect("parse_config checks [rates]");
        let set = certify(rates)?;
        if self.cfg.format.json() {
            self.write_json("rates.json", &set)?;
        }
        if self.cfg.format.csv() {
            let mut out = csv::Writer::from_writer(BufWriter::new(File::create(self.path("rates.csv"))?));
            out.write_record(["name", "value", "verdict", "lambda_bar", "t", "m", "theta", "boundary_flag"])
                .map_err(Error::from)?;
            let opt = |v: Option<f64>| v.map_or(String::new(), fmt17);
            for c in &set.certificates {
                let verdict = serde_json::to_value(c.verdict).expect("verdicts serialize");
                out.write_record([
                    c.name.as_str().to_string(),
                    fmt17(c.value),
                    verdict.as_str().unwrap_or_default().to_string(),
                    opt(c.lambda_bar),
                    opt(c.optimizers.t),
                    opt(c.optimizers.m),
                    opt(c.optimizers.theta),
                    c.boundary_flag.to_string(),
                ])
                .map_err(Error::from)?;
            }
            out.flush()?;
        }
        Ok(if set.verdict == Verdict::Inconclusive { Outcome::Inconclusive } else { Outcome::Done })
    }

    fn phase_scan(&self) -> RunResult<Outcome> {
        let section = self.cfg.phase_scan.as_ref().expect("parse_config checks [phase_scan]");
        let probe = self.model_with(Some((&section.param, section.values[0])))?;
        let d = probe.dim();
        let starts = if section.starts.is_empty() {
            vec![EmpiricalMeasure::dirac(&vec![2.0; d])?, EmpiricalMeasure::dirac(&vec![-2.0; d])?]
        } else {
            section
                .starts
                .iter()
                .enumerate()
                .map(|(i, s)| self.measure(s, STREAM_STARTS + i as u64, d))
                .collect::<RunResult<Vec<_>>>()?
        };
        let opts = PhaseScanOptions { picard: self.picard_options(), merge_tol: self.fixedpoint().merge_tol };
        let m = self.cfg.model.as_ref().expect("parse_config checks the model section");
        let family = |v: f64| {
            let mut params = m.params.clone();
            params.insert(section.param.clone(), v);
            builtin_model(&m.name, &params)
        };
        let report = phase_scan(family, &section.param, &section.values, &starts, &self.cfg.sim, &opts)?;
        if self.cfg.format.csv() {
            report.write_csv(BufWriter::new(File::create(self.path("phase_scan.csv"))?))?;
        }
        if self.cfg.format.json() {
            self.write_json("phase_scan.json", &report)?;
        }
        Ok(Outcome::Done)
    }
}

#[derive(Debug, Serialize)]
pub struct Skipped {
    pub name: ThresholdName,
    pub reason: String,
}

/// Certificates for one set of inputs with the combined verdict.
#[derive(Debug, Serialize)]
pub struct CertificateSet {
    /// The strongest verdict among the certificates. Each one is a
    /// sufficient condition, so a single positive certificate settles it.
    pub verdict: Verdict,
    pub certificates: Vec<RateCertificate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<Skipped>,
}

pub fn certify(section: &RatesSection) -> RunResult<CertificateSet> {
    let search: SearchBox = section.search.into();
    let mut certificates = Vec::new();
    let mut skipped = Vec::new();
    match &section.certificates {
        Some(names) => {
            for &name in names {
                certificates.push(certificate(name, &section.inputs, &search)?);
            }
        }
        None => {
            for name in ThresholdName::ALL {
                match certificate(name, &section.inputs, &search) {
                    Ok(c) => certificates.push(c),
                    Err(e) => skipped.push(Skipped { name, reason: e.to_string() }),
                }
            }
            if certificates.is_empty() {
                return Err(input_error(format!(
                    "no certificate applies to these inputs: {}",
                    skipped.iter().map(|s| format!("{}: {}", s.name.as_str(), s.reason)).collect::<Vec<_>>().join("; ")
                )));
            }
        }
    }
    let rank = |v: Verdict| match v {
        Verdict::ExponentialConvergence => 2,
        Verdict::UniqueStationary => 1,
        Verdict::Inconclusive => 0,
    };
    let verdict = certificates.iter().map(|c| c.verdict).max_by_key(|v| rank(*v)).unwrap_or(Verdict::Inconclusive);
    Ok(CertificateSet { verdict, certificates, skipped })
}

/// Machine-readable description of a failure, written as `error.json`.
pub fn error_json(kind: &str, message: &str, command: Option<Command>) -> Value {
    json!({
        "error": {
            "kind": kind,
            "message": message,
            "command": command.map(|c| c.as_str()),
            "exit_code": 1,
        }
    })
}
