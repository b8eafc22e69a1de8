//! Argument parsing and process exit codes.
//!
//! Exit codes: 0 success, 1 solver error, 2 usage or configuration error,
//! 3 the run completed but an enforced check failed.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qbsde::constants::StructuralConstants;
use qbsde::picard::SolveMode;

use crate::error::{CliError, Result};
use crate::registry::{builtin, builtins, resolve, resolve_config, Kind, Overrides, Resolved};
use crate::run::{
    constants_command, error_json, list_instances_command, solve_global_command, solve_local_command,
    to_json_bytes, verify_lemmas_command, write_error, write_outcome, Outcome,
};

#[derive(Debug, Parser)]
#[command(name = "qbsde", version, about = "Monte Carlo solver for diagonally quadratic BSDE systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the constants ledger for an instance or explicit constants.
    Constants(ConstantsArgs),
    /// Picard iteration on one interval.
    SolveLocal(RunArgs),
    /// Backward stitching over the whole horizon.
    SolveGlobal(RunArgs),
    /// Run the check batteries (all, or the one named by --instance).
    VerifyLemmas(RunArgs),
    /// List built-in problems and batteries.
    ListInstances(OutArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Certified,
    Working,
}

impl From<ModeArg> for SolveMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Certified => SolveMode::Certified,
            ModeArg::Working => SolveMode::Working,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Run-configuration TOML file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in id or instance file.
    #[arg(long)]
    pub instance: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Interval length for solve-local in working mode.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub segment_length: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub z_cap: Option<f64>,
    /// Output directory for summary.json, CSVs and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            instance: self.instance.clone(),
            mode: self.mode.map(Into::into),
            steps: self.steps,
            paths: self.paths,
            seed: self.seed,
            tol: self.tol,
            max_iter: self.max_iter,
            epsilon: self.epsilon,
            segment_length: self.segment_length,
            replicates: self.replicates,
            z_cap: self.z_cap,
            out: self.out.clone(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConstantsArgs {
    /// Take the constants from a built-in id or instance file.
    #[arg(long, conflicts_with_all = ["c", "gamma", "alpha", "n", "d", "horizon"])]
    pub instance: Option<String>,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    /// `|xi|_inf`; defaults to the instance's declared bound.
    #[arg(long)]
    pub xi_bound: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn constants_outcome(a: &ConstantsArgs) -> Result<Outcome> {
    let (mut s, source) = match &a.instance {
        Some(id) => match resolve(id)? {
            Resolved::Problem(inst) => (inst.constants(), id.clone()),
            Resolved::Battery(_) => return Err(CliError::Config(format!("'{id}' has no structural constants"))),
        },
        None => (
            StructuralConstants {
                c: a.c,
                gamma: a.gamma,
                alpha: a.alpha,
                n: a.n,
                d: a.d,
                horizon: a.horizon,
                xi_bound: 0.0,
            },
            "flags".to_string(),
        ),
    };
    if let Some(x) = a.xi_bound {
        s.xi_bound = x;
    }
    constants_command(&s, &source)
}

fn verify_outcome(a: &RunArgs) -> Result<Outcome> {
    let flags = a.overrides();
    let from_file = match &a.config {
        Some(p) => Overrides::load(p)?,
        None => Overrides::default(),
    };
    let named = flags.instance.clone().or(from_file.instance.clone());
    let ids: Vec<&'static str> = match named {
        Some(id) => match builtin(&id) {
            Some(b @ crate::registry::Builtin { kind: Kind::Battery(_), .. }) => vec![b.id],
            _ => return Err(CliError::Config(format!("'{id}' is not a check battery"))),
        },
        None => builtins()
            .iter()
            .filter(|b| matches!(b.kind, Kind::Battery(_)))
            .map(|b| b.id)
            .collect(),
    };
    let mut batteries = Vec::new();
    for id in ids {
        let mut f = flags.clone();
        f.instance = Some(id.to_string());
        let config = resolve_config(a.config.as_deref(), f, id)?;
        let Some(Kind::Battery(b)) = builtin(id).map(|b| b.kind) else {
            unreachable!("filtered above")
        };
        batteries.push((b, config));
    }
    verify_lemmas_command(&batteries)
}

/// Runs a parsed command; returns the outcome and the output directory.
pub fn execute(command: &Command) -> (Result<Outcome>, Option<PathBuf>) {
    match command {
        Command::Constants(a) => (constants_outcome(a), a.out.clone()),
        Command::ListInstances(a) => (Ok(list_instances_command()), a.out.clone()),
        Command::VerifyLemmas(a) => (verify_outcome(a), a.out.clone()),
        Command::SolveLocal(a) | Command::SolveGlobal(a) => {
            let config = match resolve_config(a.config.as_deref(), a.overrides(), "coupled-quadratic") {
                Ok(c) => c,
                Err(e) => return (Err(e), a.out.clone()),
            };
            let out = config.out.clone();
            let result = if matches!(command, Command::SolveLocal(_)) {
                solve_local_command(&config)
            } else {
                solve_global_command(&config)
            };
            (result, out)
        }
    }
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (result, out) = execute(&cli.command);
    let finish = |outcome: Outcome| -> Result<i32> {
        print!("{}", to_json_bytes(&outcome.summary)?);
        if let Some(dir) = &out {
            write_outcome(&outcome, dir)?;
        }
        Ok(if outcome.passed { 0 } else { 3 })
    };
    match result.and_then(finish) {
        Ok(code) => code,
        Err(e) => {
            eprint!("{}", to_json_bytes(&error_json(&e)).unwrap_or_else(|_| format!("{e}\n")));
            if let Some(dir) = &out {
                let _ = write_error(&e, dir);
            }
            e.exit_code()
        }
    }
}
