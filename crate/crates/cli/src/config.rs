//! Run configuration: a TOML document with one section per concern.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use mvlab_core::measures::{read_measure_csv, GaussianMeasure};
use mvlab_core::rng::derive_seed;
use mvlab_core::{EmpiricalMeasure, RateInputs, SearchBox, SimConfig, ThresholdName};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Stationary,
    Converge,
    Rates,
    PhaseScan,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Stationary => "stationary",
            Command::Converge => "converge",
            Command::Rates => "rates",
            Command::PhaseScan => "phase-scan",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Where a measure comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSource {
    Dirac {
        point: Vec<f64>,
    },
    /// Isotropic Gaussian sample of `n` points (default: the particle count).
    Gaussian {
        mean: Vec<f64>,
        var: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Points {
        points: Vec<Vec<f64>>,
    },
    /// CSV as written by the measure writer; relative paths resolve against
    /// the config file's directory.
    File {
        path: PathBuf,
    },
}

impl MeasureSource {
    /// `stream` separates the sampling noise of different measures in one run.
    pub fn load(&self, base: &Path, n_default: usize, seed: u64, stream: u64) -> Result<EmpiricalMeasure, String> {
        match self {
            MeasureSource::Dirac { point } => EmpiricalMeasure::dirac(point).map_err(|e| e.to_string()),
            MeasureSource::Gaussian { mean, var, n } => {
                if !(*var >= 0.0) {
                    return Err(format!("gaussian var must be >= 0, got {var}"));
                }
                let d = mean.len();
                let mut cov = vec![0.0; d * d];
                (0..d).for_each(|i| cov[i * d + i] = *var);
                let g = GaussianMeasure::new(mean.clone(), cov).map_err(|e| e.to_string())?;
                Ok(g.sample(n.unwrap_or(n_default), derive_seed(seed, stream)))
            }
            MeasureSource::Points { points } => {
                let d = points.first().map_or(0, Vec::len);
                if points.iter().any(|p| p.len() != d) {
                    return Err("points must all have the same dimension".into());
                }
                EmpiricalMeasure::new(points.concat(), d).map_err(|e| e.to_string())
            }
            MeasureSource::File { path } => {
                let full = base.join(path);
                let f = std::fs::File::open(&full).map_err(|e| format!("cannot open {}: {e}", full.display()))?;
                read_measure_csv(std::io::BufReader::new(f)).map_err(|e| format!("{}: {e}", full.display()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Pool snapshots after this time; the terminal snapshot is used when
    /// `pooled` is false.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default)]
    pub pooled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_tol: Option<f64>,
    #[serde(default = "default_noise_fraction")]
    pub noise_fraction: f64,
}

fn default_tol() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    50
}

fn default_noise_fraction() -> f64 {
    0.1
}

impl Default for FixedPointSection {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            burn_in: None,
            pooled: false,
            merge_tol: None,
            noise_fraction: default_noise_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesSection {
    /// Certificates to compute. When absent, every certificate whose inputs
    /// are present is computed and the rest are listed as skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificates: Option<Vec<ThresholdName>>,
    #[serde(default)]
    pub search: SearchBoxSection,
    #[serde(flatten)]
    pub inputs: RateInputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBoxSection {
    pub t: [f64; 2],
    pub theta: [f64; 2],
}

impl Default for SearchBoxSection {
    fn default() -> Self {
        let b = SearchBox::default();
        Self { t: [b.t.0, b.t.1], theta: [b.theta.0, b.theta.1] }
    }
}

impl From<SearchBoxSection> for SearchBox {
    fn from(s: SearchBoxSection) -> Self {
        SearchBox { t: (s.t[0], s.t[1]), theta: (s.theta[0], s.theta[1]) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Run the decoupled equation with the measure frozen at this law
    /// instead of the interacting particle system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<MeasureSource>,
    /// Record W_p from every snapshot to this measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<MeasureSource>,
    /// Also write every snapshot as a binary cloud.
    #[serde(default)]
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    /// Stationary law to converge to. When absent it is computed by a Picard
    /// solve from the initial measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<MeasureSource>,
    /// Start the run at the reference itself.
    #[serde(default)]
    pub start_at_reference: bool,
    /// Fit only points with `t >= fit_start`.
    #[serde(default)]
    pub fit_start: f64,
    /// Points above this multiple of the noise floor enter the fit.
    #[serde(default = "default_floor_factor")]
    pub floor_factor: f64,
}

fn default_floor_factor() -> f64 {
    3.0
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self { reference: None, start_at_reference: false, fit_start: 0.0, floor_factor: default_floor_factor() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseScanSection {
    /// Model parameter to scan.
    pub param: String,
    pub values: Vec<f64>,
    /// At least two; defaults to Dirac masses at ±2 in every coordinate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub starts: Vec<MeasureSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<MeasureSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixedpoint: Option<FixedPointSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_scan: Option<PhaseScanSection>,
}

/// A configuration problem, reported with exit code 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub kind: &'static str,
    pub message: String,
}

impl ConfigError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parse and validate a configuration for `command`. Sections that the
/// command needs are filled with defaults where defaults exist.
pub fn parse_config(text: &str, command: Command) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let kind = if e.message().starts_with("missing field") { "missing_key" } else { "syntax" };
        ConfigError::new(kind, e.to_string().trim_end().to_string())
    })?;
    match cfg.command {
        Some(c) if c != command => {
            return Err(ConfigError::new(
                "command_mismatch",
                format!("config declares command `{c}` but `{command}` was requested"),
            ))
        }
        _ => cfg.command = Some(command),
    }
    cfg.sim.validate().map_err(|e| ConfigError::new("out_of_range", format!("[sim] {e}")))?;
    let need = |present: bool, section: &str| {
        if present {
            Ok(())
        } else {
            Err(ConfigError::new("missing_section", format!("command `{command}` requires a [{section}] section")))
        }
    };
    match command {
        Command::Rates => need(cfg.rates.is_some(), "rates")?,
        Command::PhaseScan => {
            need(cfg.model.is_some(), "model")?;
            need(cfg.phase_scan.is_some(), "phase_scan")?;
        }
        _ => need(cfg.model.is_some(), "model")?,
    }
    if matches!(command, Command::Stationary | Command::Converge | Command::PhaseScan) {
        cfg.fixedpoint.get_or_insert_with(FixedPointSection::default);
    }
    if command == Command::Converge {
        cfg.converge.get_or_insert_with(ConvergeSection::default);
    }
    if command == Command::Simulate {
        cfg.simulate.get_or_insert(SimulateSection { frozen: None, reference: None, snapshots: false });
    }
    if let Some(fp) = &cfg.fixedpoint {
        let bad = |m: String| Err(ConfigError::new("out_of_range", format!("[fixedpoint] {m}")));
        if !(fp.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", fp.tol));
        }
        if fp.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if let Some(b) = fp.burn_in {
            if !(b >= 0.0 && b < cfg.sim.horizon) {
                return bad(format!("burn_in must lie in [0, sim.horizon = {}), got {b}", cfg.sim.horizon));
            }
        }
        if let Some(m) = fp.merge_tol {
            if !(m > 0.0) {
                return bad(format!("merge_tol must be positive, got {m}"));
            }
        }
        if !(fp.noise_fraction >= 0.0) {
            return bad(format!("noise_fraction must be >= 0, got {}", fp.noise_fraction));
        }
    }
    if let Some(r) = &cfg.rates {
        r.inputs.validate().map_err(|e| ConfigError::new("out_of_range", format!("[rates] {e}")))?;
        if r.certificates.as_ref().is_some_and(Vec::is_empty) {
            return Err(ConfigError::new("out_of_range", "[rates] certificates must not be empty"));
        }
    }
    if let Some(c) = &cfg.converge {
        if !(c.floor_factor > 0.0) {
            return Err(ConfigError::new("out_of_range", "[converge] floor_factor must be positive"));
        }
    }
    if let Some(ps) = &cfg.phase_scan {
        if ps.values.is_empty() {
            return Err(ConfigError::new("out_of_range", "[phase_scan] values must not be empty"));
        }
        if ps.starts.len() == 1 {
            return Err(ConfigError::new("out_of_range", "[phase_scan] needs at least two starts"));
        }
    }
    Ok(cfg)
}

/// The resolved configuration as TOML, with every default explicit.
pub fn resolved_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("run configs serialize to TOML")
}
