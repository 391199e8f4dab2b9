//! The `mvlab` command-line frontend.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde_json::json;

use config::{parse_config, resolved_toml, Command};
use run::{error_json, Outcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;

const DEFAULT_OUTPUT_DIR: &str = "mvlab-out";

#[derive(Debug, Parser)]
#[command(name = "mvlab", version, about = "Simulate and certify McKean–Vlasov SDEs")]
pub struct Cli {
    /// What to run.
    #[arg(value_enum)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Directory for artifacts (overrides `output_dir` in the config).
    #[arg(long = "output", short, visible_alias = "output-dir")]
    pub output_dir: Option<PathBuf>,
    /// Master seed (overrides `sim.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, env = "MVLAB_THREADS")]
    pub threads: Option<usize>,
}

/// Runs the CLI and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("mvlab: warning: could not configure {n} threads: {e}");
        }
    }
    execute(&cli)
}

fn fail(out: Option<&Path>, command: Command, kind: &str, message: &str) -> i32 {
    eprintln!("mvlab: error [{kind}]: {message}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let body = serde_json::to_string_pretty(&error_json(kind, message, Some(command))).unwrap_or_default();
            let _ = std::fs::write(dir.join("error.json"), body + "\n");
        }
    }
    EXIT_ERROR
}

fn execute(cli: &Cli) -> i32 {
    let command = cli.command;
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            let msg = format!("cannot read {}: {e}", cli.config.display());
            return fail(cli.output_dir.as_deref(), command, "io", &msg);
        }
    };
    let mut cfg = match parse_config(&text, command) {
        Ok(c) => c,
        Err(e) => return fail(cli.output_dir.as_deref(), command, e.kind, &e.message),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    let out =
        cli.output_dir.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    cfg.output_dir = Some(out.clone());
    if let Err(e) = std::fs::create_dir_all(&out) {
        return fail(None, command, "io", &format!("cannot create {}: {e}", out.display()));
    }
    let _ = std::fs::remove_file(out.join("error.json"));
    if let Err(e) = std::fs::write(out.join("config.resolved.toml"), resolved_toml(&cfg)) {
        return fail(Some(&out), command, "io", &e.to_string());
    }
    let base = cli.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let started = SystemTime::now();
    let result = run::run(&cfg, &out, &base);
    let elapsed = started.elapsed().map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let (code, status) = match &result {
        Ok(Outcome::Done) => (EXIT_OK, "ok"),
        Ok(Outcome::Inconclusive) => (EXIT_INCONCLUSIVE, "inconclusive"),
        Err(_) => (EXIT_ERROR, "error"),
    };
    let meta = json!({
        "command": command.as_str(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.sim.seed,
        "threads": rayon::current_num_threads(),
        "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "elapsed_seconds": elapsed,
        "status": status,
        "exit_code": code,
    });
    let _ = std::fs::write(out.join("run.json"), serde_json::to_string_pretty(&meta).unwrap_or_default() + "\n");
    match result {
        Ok(Outcome::Inconclusive) => {
            eprintln!("mvlab: no certificate reached a verdict");
            code
        }
        Ok(Outcome::Done) => code,
        Err(e) => fail(Some(&out), command, e.kind, &e.message),
    }
}
