//! Experiment configuration, batch execution and CSV/manifest output.
//!
//! Configuration is a list of `key=value` lines; `#` starts a comment.
//! Sweep axes (`N`, `epsilon`, `a`, `b`) take comma-separated lists.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::chalker::{verify_all, CheckReport, VerifyOptions};
use crate::error::Error;
use crate::lattice::Lattice;
use crate::model::{InteractionPotential, PinningSpec};
use crate::observables::{estimate_rho, estimate_with, tail_probability, Estimate};
use crate::oracle::{exact, QuadratureSpec};
use crate::sampler::{derive_seed, run_chain, ChainParams, Init, Kernel, SweepOrder};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "WETTING_OUT_DIR";

/// Recognised configuration keys with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("mode", "run | sweep | oracle | verify"),
    ("d", "dimension, 1 to 3"),
    ("N", "box side (comma-separated list in sweep mode)"),
    ("interaction", "sos | gaussian"),
    ("pinning", "none | square_well | delta"),
    ("epsilon", "delta-pinning weight, >= 0 (list)"),
    ("a", "square-well width, > 0 (list)"),
    ("b", "square-well depth, > 0 (list)"),
    ("kernel", "heat_bath | metropolis"),
    ("sweeps", "total sweeps per chain"),
    ("burn_in", "sweeps discarded before recording"),
    ("thinning", "record every k-th sweep"),
    ("seed", "base 64-bit seed"),
    ("step_width", "Metropolis proposal half-width"),
    ("order", "sequential | checkerboard"),
    ("init", "exponential | flat:<h>"),
    ("replicates", "independent chains per parameter point"),
    ("tail_M", "threshold M for P(nu > M)"),
    ("output", "CSV output path"),
    ("cutoff", "oracle height cutoff"),
    ("nodes_per_unit", "oracle quadrature nodes per unit height"),
    ("verify_random", "randomized configurations per verify check"),
    ("verify_adversarial", "threshold configurations per verify check"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Sweep,
    Oracle,
    Verify,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Sweep => "sweep",
            Mode::Oracle => "oracle",
            Mode::Verify => "verify",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "run" => Mode::Run,
            "sweep" => Mode::Sweep,
            "oracle" => Mode::Oracle,
            "verify" => Mode::Verify,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PinningKind {
    None,
    SquareWell,
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub interaction: &'static str,
    pub pinning: PinningKind,
    pub epsilon: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub kernel: &'static str,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub step_width: f64,
    pub order: &'static str,
    pub init: Option<f64>,
    pub replicates: usize,
    #[serde(rename = "tail_M")]
    pub tail_m: Option<i64>,
    pub output: Option<PathBuf>,
    pub cutoff: Option<f64>,
    pub nodes_per_unit: usize,
    pub verify_random: usize,
    pub verify_adversarial: usize,
}

/// One configuration problem; `line` is `None` for command-line overrides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None if self.key.is_empty() => write!(f, "{}", self.message),
            None => write!(f, "--{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

struct Entry {
    value: String,
    line: Option<usize>,
}

struct Builder {
    entries: BTreeMap<String, Entry>,
    errors: Vec<ConfigError>,
}

impl Builder {
    fn err(&mut self, key: &str, message: impl Into<String>) {
        let line = self.entries.get(key).and_then(|e| e.line);
        self.errors.push(ConfigError {
            line,
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let v = self.raw(key)?.to_string();
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.err(key, format!("expected {what}, got '{v}'"));
                None
            }
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Vec<T> {
        let Some(v) = self.raw(key).map(str::to_string) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for item in v.split(',').map(str::trim) {
            match item.parse::<T>() {
                Ok(x) => out.push(x),
                Err(_) => self.err(key, format!("expected a list of {what}, got '{item}'")),
            }
        }
        out
    }

    fn required(&mut self, key: &str, mode: Mode) {
        if self.raw(key).is_none() {
            self.err(key, format!("required in {} mode", mode.name()));
        }
    }
}

fn read_lines(text: &str, entries: &mut BTreeMap<String, Entry>, errors: &mut Vec<ConfigError>) {
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            errors.push(ConfigError {
                line: Some(line),
                key: body.to_string(),
                message: "expected key=value".into(),
            });
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(name, _)| *name == k) {
            errors.push(ConfigError {
                line: Some(line),
                key: k.to_string(),
                message: "unknown key".into(),
            });
            continue;
        }
        if let Some(prev) = entries.get(k) {
            errors.push(ConfigError {
                line: Some(line),
                key: k.to_string(),
                message: format!("duplicate key (first set on line {})", prev.line.unwrap_or(0)),
            });
            continue;
        }
        entries.insert(
            k.to_string(),
            Entry {
                value: v.to_string(),
                line: Some(line),
            },
        );
    }
}

/// Parses a configuration file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config_with(text, &[], None)
}

/// Parses a configuration file, applies `overrides` (from flags) on top, and
/// forces `mode` when given. Every violation is reported, not just the first.
pub fn parse_config_with(
    text: &str,
    overrides: &[(String, String)],
    mode: Option<Mode>,
) -> Result<ExperimentConfig, ConfigErrors> {
    let mut entries = BTreeMap::new();
    let mut errors = Vec::new();
    read_lines(text, &mut entries, &mut errors);
    for (k, v) in overrides {
        if !KEYS.iter().any(|(name, _)| name == k) {
            errors.push(ConfigError {
                line: None,
                key: k.clone(),
                message: "unknown key".into(),
            });
            continue;
        }
        entries.insert(
            k.clone(),
            Entry {
                value: v.clone(),
                line: None,
            },
        );
    }
    let mut b = Builder { entries, errors };
    let cfg = build(&mut b, mode);
    if b.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(b.errors))
    }
}

fn build(b: &mut Builder, forced: Option<Mode>) -> ExperimentConfig {
    let mode = match forced {
        Some(m) => m,
        None => match b.raw("mode").map(str::to_string) {
            Some(s) => Mode::parse(&s).unwrap_or_else(|| {
                b.err("mode", format!("expected run, sweep, oracle or verify, got '{s}'"));
                Mode::Run
            }),
            None => Mode::Run,
        },
    };
    let needs_model = mode != Mode::Verify;
    if needs_model {
        for key in ["d", "N", "interaction", "pinning"] {
            b.required(key, mode);
        }
    }

    let d = b.parsed::<usize>("d", "an integer").unwrap_or(1);
    if !(1..=3).contains(&d) {
        b.err("d", format!("dimension must be 1, 2 or 3 (got {d})"));
    }
    let n = b.list::<usize>("N", "integers");
    if n.contains(&0) {
        b.err("N", "box side must be at least 1");
    }

    let interaction = match b.raw("interaction").map(str::to_string) {
        Some(s) => match InteractionPotential::parse(&s) {
            Ok(p) => p.name(),
            Err(e) => {
                b.err("interaction", e.to_string());
                "sos"
            }
        },
        None => "sos",
    };
    let pinning = match b.raw("pinning").map(str::to_string) {
        Some(s) => match s.to_ascii_lowercase().as_str() {
            "none" => PinningKind::None,
            "square_well" | "well" => PinningKind::SquareWell,
            "delta" => PinningKind::Delta,
            other => {
                b.err("pinning", format!("expected none, square_well or delta, got '{other}'"));
                PinningKind::None
            }
        },
        None => PinningKind::None,
    };
    let epsilon = b.list::<f64>("epsilon", "numbers");
    if epsilon.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        b.err("epsilon", "epsilon must be non-negative and finite");
    }
    let a = b.list::<f64>("a", "numbers");
    if a.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        b.err("a", "square-well width a must be positive");
    }
    let bb = b.list::<f64>("b", "numbers");
    if bb.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        b.err("b", "square-well depth b must be positive");
    }
    if needs_model {
        match pinning {
            PinningKind::Delta => {
                b.required("epsilon", mode);
                for k in ["a", "b"] {
                    if b.raw(k).is_some() {
                        b.err(k, "not a delta-pinning parameter");
                    }
                }
            }
            PinningKind::SquareWell => {
                b.required("a", mode);
                b.required("b", mode);
                if b.raw("epsilon").is_some() {
                    b.err(
                        "epsilon",
                        "square-well pinning is set by a and b; epsilon = a e^b is derived",
                    );
                }
            }
            PinningKind::None => {
                for k in ["epsilon", "a", "b"] {
                    if b.raw(k).is_some() {
                        b.err(k, "pinning is none");
                    }
                }
            }
        }
    }
    if mode == Mode::Run {
        for (k, len) in [
            ("N", n.len()),
            ("epsilon", epsilon.len()),
            ("a", a.len()),
            ("b", bb.len()),
        ] {
            if len > 1 {
                b.err(k, "run mode takes a single value; use sweep for lists");
            }
        }
    }

    let kernel = match b.raw("kernel").map(str::to_string) {
        Some(s) => match Kernel::parse(&s) {
            Ok(k) => k,
            Err(e) => {
                b.err("kernel", e.to_string());
                Kernel::HeatBath
            }
        },
        None => Kernel::HeatBath,
    };
    if kernel == Kernel::Metropolis && pinning == PinningKind::Delta {
        b.err(
            "kernel",
            "metropolis cannot propose into or out of the delta-pinning atom; use heat_bath",
        );
    }
    let sweeps = b.parsed::<usize>("sweeps", "an integer").unwrap_or(10_000);
    let burn_in = b.parsed::<usize>("burn_in", "an integer").unwrap_or(1_000);
    if needs_model && mode != Mode::Oracle && sweeps <= burn_in {
        b.err("sweeps", format!("sweeps ({sweeps}) must exceed burn_in ({burn_in})"));
    }
    let thinning = b.parsed::<usize>("thinning", "an integer").unwrap_or(1);
    if thinning == 0 {
        b.err("thinning", "thinning must be at least 1");
    }
    let seed = b.parsed::<u64>("seed", "a 64-bit unsigned integer").unwrap_or(0);
    let step_width = b.parsed::<f64>("step_width", "a number").unwrap_or(1.0);
    if !(step_width > 0.0 && step_width.is_finite()) {
        b.err("step_width", "step width must be positive");
    }
    let order = match b.raw("order").map(str::to_string).as_deref() {
        None | Some("sequential") => "sequential",
        Some("checkerboard") => "checkerboard",
        Some(other) => {
            b.err("order", format!("expected sequential or checkerboard, got '{other}'"));
            "sequential"
        }
    };
    let init = match b.raw("init").map(str::to_string) {
        None => None,
        Some(s) if s == "exponential" => None,
        Some(s) => match s.strip_prefix("flat:").map(str::parse::<f64>) {
            Some(Ok(h)) if h >= 0.0 && h.is_finite() => Some(h),
            _ => {
                b.err(
                    "init",
                    format!("expected exponential or flat:<h> with h >= 0, got '{s}'"),
                );
                None
            }
        },
    };
    let replicates = b.parsed::<usize>("replicates", "an integer").unwrap_or(1);
    if replicates == 0 {
        b.err("replicates", "need at least one replicate");
    }
    let tail_m = b.parsed::<i64>("tail_M", "an integer");
    let output = b.raw("output").map(PathBuf::from);
    let cutoff = b.parsed::<f64>("cutoff", "a number");
    if cutoff.is_some_and(|t| !(t >= 10.0)) {
        b.err("cutoff", "oracle cutoff must be at least 10");
    }
    let nodes_per_unit = b.parsed::<usize>("nodes_per_unit", "an integer").unwrap_or(16);
    if nodes_per_unit < 2 {
        b.err("nodes_per_unit", "need at least 2 nodes per unit");
    }
    let defaults = VerifyOptions::default();
    let verify_random = b
        .parsed("verify_random", "an integer")
        .unwrap_or(defaults.random_configs);
    let verify_adversarial = b
        .parsed("verify_adversarial", "an integer")
        .unwrap_or(defaults.adversarial_configs);

    ExperimentConfig {
        mode,
        d,
        n,
        interaction,
        pinning,
        epsilon,
        a,
        b: bb,
        kernel: kernel.name(),
        sweeps,
        burn_in,
        thinning,
        seed,
        step_width,
        order,
        init,
        replicates,
        tail_m,
        output,
        cutoff,
        nodes_per_unit,
        verify_random,
        verify_adversarial,
    }
}

/// One parameter point of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub n: usize,
    pub pin: PinningSpec,
}

impl ExperimentConfig {
    fn interaction(&self) -> InteractionPotential {
        InteractionPotential::parse(self.interaction).expect("validated at parse time")
    }

    /// Parameter points in sorted order: by `N`, then pinning parameters.
    pub fn points(&self) -> Vec<Point> {
        let mut ns = self.n.clone();
        ns.sort_unstable();
        ns.dedup();
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_unstable_by(f64::total_cmp);
            v.dedup();
            v
        };
        let pins: Vec<PinningSpec> = match self.pinning {
            PinningKind::None => vec![PinningSpec::None],
            PinningKind::Delta => sorted(&self.epsilon)
                .into_iter()
                .map(|epsilon| PinningSpec::Delta { epsilon })
                .collect(),
            PinningKind::SquareWell => {
                let bs = sorted(&self.b);
                sorted(&self.a)
                    .into_iter()
                    .flat_map(|a| bs.iter().map(move |&b| PinningSpec::SquareWell { a, b }))
                    .collect()
            }
        };
        ns.iter()
            .flat_map(|&n| pins.iter().map(move |&pin| Point { n, pin }))
            .collect()
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            cutoff: self.cutoff,
            nodes_per_unit: self.nodes_per_unit,
            ..QuadratureSpec::default()
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            random_configs: self.verify_random,
            adversarial_configs: self.verify_adversarial,
            seed: self.seed,
        }
    }

    fn chain_params(&self, point: &Point, seed: u64) -> ChainParams {
        let mut p = ChainParams::new(self.d, point.n, self.interaction(), point.pin);
        p.kernel = Kernel::parse(self.kernel).expect("validated at parse time");
        p.sweeps = self.sweeps;
        p.burn_in = self.burn_in;
        p.thinning = self.thinning;
        p.seed = seed;
        p.step_width = self.step_width;
        p.order = if self.order == "checkerboard" {
            SweepOrder::Checkerboard
        } else {
            SweepOrder::Sequential
        };
        p.init = self.init.map_or(Init::Exponential, Init::Flat);
        p
    }
}

/// A CSV row. Column order is fixed by field order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub run_id: String,
    pub mode: &'static str,
    pub method: &'static str,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub interaction: &'static str,
    pub pinning: &'static str,
    pub epsilon: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub kernel: Option<&'static str>,
    pub sweeps: Option<usize>,
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
    pub seed: Option<u64>,
    pub rho_mean: f64,
    pub rho_se: Option<f64>,
    pub nu_mean: f64,
    pub nu_se: Option<f64>,
    pub mean_height: Option<f64>,
    pub mean_height_se: Option<f64>,
    pub center_height_mean: Option<f64>,
    pub max_height_mean: Option<f64>,
    pub accept_rate: Option<f64>,
    #[serde(rename = "tail_M")]
    pub tail_m: Option<i64>,
    pub tail_prob: Option<f64>,
    pub tail_prob_se: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 27] = [
    "run_id",
    "mode",
    "method",
    "d",
    "N",
    "interaction",
    "pinning",
    "epsilon",
    "a",
    "b",
    "kernel",
    "sweeps",
    "burn_in",
    "thinning",
    "seed",
    "rho_mean",
    "rho_se",
    "nu_mean",
    "nu_se",
    "mean_height",
    "mean_height_se",
    "center_height_mean",
    "max_height_mean",
    "accept_rate",
    "tail_M",
    "tail_prob",
    "tail_prob_se",
];

fn pin_columns(pin: &PinningSpec) -> (Option<f64>, Option<f64>, Option<f64>) {
    match *pin {
        PinningSpec::None => (None, None, None),
        PinningSpec::SquareWell { a, b } => (Some(pin.epsilon_eff()), Some(a), Some(b)),
        PinningSpec::Delta { epsilon } => (Some(epsilon), None, None),
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigErrors),
    Run(Error),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    /// Process exit code: 1 for configuration, usage and run-time errors.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowSeed {
    pub run_id: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub rows: Vec<RowSeed>,
    pub verify: Option<Vec<CheckReport>>,
    /// Seconds since the Unix epoch; the only non-deterministic field.
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub rows: Vec<CsvRow>,
    pub verify: Option<Vec<CheckReport>>,
}

impl Outcome {
    /// True unless a verify check recorded a violation.
    pub fn passed(&self) -> bool {
        self.verify
            .as_ref()
            .is_none_or(|reports| reports.iter().all(|r| r.violations == 0))
    }
}

fn se_value(e: &Estimate) -> Option<f64> {
    e.se
}

fn mcmc_row(cfg: &ExperimentConfig, index: usize, point: &Point, seed: u64) -> Result<CsvRow, Error> {
    let params = cfg.chain_params(point, seed);
    let lat = Lattice::new(cfg.d, point.n)?;
    let trace = run_chain(params)?;
    let rho = estimate_rho(&trace, &lat)?;
    let nu = estimate_with(&trace, |s| s.nu as f64)?;
    let height = estimate_with(&trace, |s| s.mean_height)?;
    let center = estimate_with(&trace, |s| s.center_height)?;
    let max = estimate_with(&trace, |s| s.max_height)?;
    let tail = cfg.tail_m.map(|m| tail_probability(&trace, m)).transpose()?;
    let (epsilon, a, b) = pin_columns(&point.pin);
    Ok(CsvRow {
        run_id: format!("{}-{index:05}", cfg.mode.name()),
        mode: cfg.mode.name(),
        method: "mcmc",
        d: cfg.d,
        n: point.n,
        interaction: cfg.interaction,
        pinning: point.pin.name(),
        epsilon,
        a,
        b,
        kernel: Some(cfg.kernel),
        sweeps: Some(cfg.sweeps),
        burn_in: Some(cfg.burn_in),
        thinning: Some(cfg.thinning),
        seed: Some(seed),
        rho_mean: rho.value,
        rho_se: se_value(&rho),
        nu_mean: nu.value,
        nu_se: se_value(&nu),
        mean_height: Some(height.value),
        mean_height_se: se_value(&height),
        center_height_mean: Some(center.value),
        max_height_mean: Some(max.value),
        accept_rate: trace.accept_rate(),
        tail_m: cfg.tail_m,
        tail_prob: tail.map(|t| t.value),
        tail_prob_se: tail.and_then(|t| t.se),
    })
}

fn oracle_row(cfg: &ExperimentConfig, index: usize, point: &Point) -> Result<CsvRow, Error> {
    let lat = Lattice::new(cfg.d, point.n)?;
    let res = exact(&lat, &cfg.interaction(), &point.pin, &cfg.quadrature())?;
    let (epsilon, a, b) = pin_columns(&point.pin);
    Ok(CsvRow {
        run_id: format!("oracle-{index:05}"),
        mode: "oracle",
        method: "exact",
        d: cfg.d,
        n: point.n,
        interaction: cfg.interaction,
        pinning: point.pin.name(),
        epsilon,
        a,
        b,
        kernel: None,
        sweeps: None,
        burn_in: None,
        thinning: None,
        seed: None,
        rho_mean: res.rho,
        rho_se: Some(0.0),
        nu_mean: res.rho * lat.n_sites() as f64,
        nu_se: Some(0.0),
        mean_height: None,
        mean_height_se: None,
        center_height_mean: None,
        max_height_mean: None,
        accept_rate: None,
        tail_m: None,
        tail_prob: None,
        tail_prob_se: None,
    })
}

/// Executes the configured mode with at most `jobs` worker threads.
///
/// Rows come back in the sorted order of [`ExperimentConfig::points`], with
/// replicates innermost, regardless of `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Outcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    pool.install(|| match cfg.mode {
        Mode::Verify => Ok(Outcome {
            rows: Vec::new(),
            verify: Some(verify_all(&cfg.verify_options())?),
        }),
        Mode::Oracle => {
            let rows = cfg
                .points()
                .par_iter()
                .enumerate()
                .map(|(i, p)| oracle_row(cfg, i, p))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Outcome { rows, verify: None })
        }
        Mode::Run | Mode::Sweep => {
            let tasks: Vec<(usize, Point)> = cfg
                .points()
                .into_iter()
                .flat_map(|p| (0..cfg.replicates).map(move |r| (r, p)))
                .collect();
            let rows = tasks
                .par_iter()
                .enumerate()
                .map(|(i, (_, p))| mcmc_row(cfg, i, p, derive_seed(cfg.seed, i as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Outcome { rows, verify: None })
        }
    })
}

pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(|e| CliError::Io(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

/// The CSV path for a config: `output`, else `<dir>/wetting_<mode>.csv` with
/// `dir` from [`OUT_DIR_ENV`] or the working directory.
pub fn output_path(cfg: &ExperimentConfig, default_dir: Option<&Path>) -> PathBuf {
    match &cfg.output {
        Some(p) => p.clone(),
        None => default_dir
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
            .join(format!("wetting_{}.csv", cfg.mode.name())),
    }
}

pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

pub fn build_manifest(cfg: &ExperimentConfig, outcome: &Outcome) -> Manifest {
    Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        rows: outcome
            .rows
            .iter()
            .map(|r| RowSeed {
                run_id: r.run_id.clone(),
                seed: r.seed,
            })
            .collect(),
        verify: outcome.verify.clone(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    }
}

/// Writes the CSV (skipped in verify mode) and the manifest next to it.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &Outcome, csv_path: &Path) -> Result<PathBuf, CliError> {
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    if cfg.mode != Mode::Verify {
        let file = fs::File::create(csv_path).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
        write_csv(&outcome.rows, std::io::BufWriter::new(file))?;
    }
    let mpath = manifest_path(csv_path);
    let json = serde_json::to_string_pretty(&build_manifest(cfg, outcome)).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(&mpath, json + "\n").map_err(|e| CliError::Io(format!("{}: {e}", mpath.display())))?;
    Ok(mpath)
}

/// Human-readable verify table.
pub fn format_verify_table(reports: &[CheckReport]) -> String {
    let mut s = format!(
        "{:<24} {:>10} {:>14} {:>10}\n",
        "check", "configs", "min_slack", "violations"
    );
    for r in reports {
        s.push_str(&format!(
            "{:<24} {:>10} {:>14.6e} {:>10}\n",
            r.kind.name(),
            r.configs,
            r.min_slack,
            r.violations
        ));
    }
    s
}
