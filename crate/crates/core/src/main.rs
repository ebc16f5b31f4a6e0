use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wetting::cli::{
    format_verify_table, output_path, parse_config_with, run_experiment, write_outputs, CliError, ConfigErrors, Mode,
    OUT_DIR_ENV,
};

#[derive(Parser)]
#[command(
    name = "wetting",
    version,
    about = "Gradient interfaces above a hard wall with pinning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one Monte Carlo chain set for a single parameter point
    Run(Common),
    /// Run Monte Carlo over the product of the N / epsilon / a / b axes
    Sweep(Common),
    /// Exact values on tiny boxes
    Oracle(Common),
    /// Randomized and threshold checks of the map inequalities
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// key=value configuration file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for parameter points and replicates
    #[arg(long, short, default_value_t = default_jobs())]
    jobs: usize,
    /// Default output directory when `output` is not set
    #[arg(long, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,

    #[arg(long)]
    d: Option<String>,
    #[arg(long = "N", short = 'N')]
    n: Option<String>,
    #[arg(long)]
    interaction: Option<String>,
    #[arg(long)]
    pinning: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    sweeps: Option<String>,
    #[arg(long)]
    burn_in: Option<String>,
    #[arg(long)]
    thinning: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    step_width: Option<String>,
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long = "tail-M", alias = "tail-m")]
    tail_m: Option<String>,
    #[arg(long, short)]
    output: Option<String>,
    #[arg(long)]
    cutoff: Option<String>,
    #[arg(long)]
    nodes_per_unit: Option<String>,
    #[arg(long)]
    verify_random: Option<String>,
    #[arg(long)]
    verify_adversarial: Option<String>,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got '{s}'"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let flags = [
            ("d", &self.d),
            ("N", &self.n),
            ("interaction", &self.interaction),
            ("pinning", &self.pinning),
            ("epsilon", &self.epsilon),
            ("a", &self.a),
            ("b", &self.b),
            ("kernel", &self.kernel),
            ("sweeps", &self.sweeps),
            ("burn_in", &self.burn_in),
            ("thinning", &self.thinning),
            ("seed", &self.seed),
            ("step_width", &self.step_width),
            ("order", &self.order),
            ("init", &self.init),
            ("replicates", &self.replicates),
            ("tail_M", &self.tail_m),
            ("output", &self.output),
            ("cutoff", &self.cutoff),
            ("nodes_per_unit", &self.nodes_per_unit),
            ("verify_random", &self.verify_random),
            ("verify_adversarial", &self.verify_adversarial),
        ];
        out.extend(
            flags
                .into_iter()
                .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))),
        );
        Ok(out)
    }
}

fn execute(mode: Mode, args: Common) -> Result<bool, CliError> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let overrides = args.overrides().map_err(|m| {
        CliError::Config(ConfigErrors(vec![wetting::cli::ConfigError {
            line: None,
            key: String::new(),
            message: m,
        }]))
    })?;
    let cfg = parse_config_with(&text, &overrides, Some(mode)).map_err(CliError::Config)?;
    let outcome = run_experiment(&cfg, args.jobs)?;
    let csv = output_path(&cfg, args.out_dir.as_deref());
    let manifest = write_outputs(&cfg, &outcome, &csv)?;
    if let Some(reports) = &outcome.verify {
        print!("{}", format_verify_table(reports));
    } else {
        eprintln!("wrote {} rows to {}", outcome.rows.len(), csv.display());
    }
    eprintln!("manifest: {}", manifest.display());
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (mode, args) = match cli.command {
        Command::Run(a) => (Mode::Run, a),
        Command::Sweep(a) => (Mode::Sweep, a),
        Command::Oracle(a) => (Mode::Oracle, a),
        Command::Verify(a) => (Mode::Verify, a),
    };
    match execute(mode, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
