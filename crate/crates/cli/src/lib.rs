//! Command-line front end for `hjvar`.
//!
//! Every command reads a JSON problem specification, applies command-line
//! overrides and writes one CSV table. Exit codes: 0 success, 1 invalid input,
//! 2 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hjvar::flow::FlowError;
use hjvar::front::FrontError;
use hjvar::gfqi::GfqiError;
use hjvar::ham::HamError;
use hjvar::solve::SolveError;
use thiserror::Error;

pub mod commands;
pub mod output;
pub mod selfcheck;
pub mod spec;

pub use output::{fmt_f64, parse_f64, Cell, Table};
pub use spec::{parse_problem, parse_problem_str, Overrides, Problem, ProblemSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) | CliError::Output(_) => 2,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<HamError> for CliError {
    fn from(e: HamError) -> Self {
        match e {
            HamError::Eval { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Ham(h) => h.into(),
            FlowError::Blowup { .. } => CliError::Numerical(e.to_string()),
            FlowError::ZeroSteps | FlowError::NotSeparable(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FrontError> for CliError {
    fn from(e: FrontError) -> Self {
        match e {
            FrontError::Ham(h) => h.into(),
            FrontError::Flow(f) => f.into(),
            FrontError::Eval(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<GfqiError> for CliError {
    fn from(e: GfqiError) -> Self {
        match e {
            GfqiError::Ham(h) => h.into(),
            GfqiError::Front(f) => f.into(),
            GfqiError::Tail(_) | GfqiError::NotANumber(_) | GfqiError::Eval(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Front(f) => f.into(),
            SolveError::Gfqi(g) => g.into(),
            SolveError::Ham(h) => h.into(),
            SolveError::Eval(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "hjvar", version, about = "Variational solutions of Hamilton-Jacobi equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Problem specification (JSON)
    #[arg(long)]
    pub spec: PathBuf,
    /// Output CSV; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub nt: Option<usize>,
    /// Final time (both slots for two-time problems)
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub steps_per_unit: Option<f64>,
    /// Number of front seeds
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Keep going past the first vertical front, writing NaN beyond it
    #[arg(long)]
    pub allow_blowup: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve u_t + H(t, x, u_x) = 0 with u(0, x) = f(x)
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<spec::MethodSpec>,
    },
    /// Two-time solution u(t1, t2, x) for the Hamiltonians in slots 1 and 2
    Multitime {
        #[command(flatten)]
        common: Common,
        /// Flow order, "12" or "21"
        #[arg(long, value_parser = ["12", "21"])]
        order: Option<String>,
    },
    /// Characteristic trajectories of the slot-1 Hamiltonian
    Flow {
        #[command(flatten)]
        common: Common,
    },
    /// Lagrangian front of the initial condition at each time slice
    Front {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["12", "21"])]
        order: Option<String>,
    },
    /// Grid suprema of the brackets of the slot-1 and slot-2 Hamiltonians
    Bracket {
        #[command(flatten)]
        common: Common,
        /// Samples per box axis
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Minimax values and spectral norms
    Gamma {
        #[command(flatten)]
        common: Common,
        /// Also write the generating family as x,xi,S rows
        #[arg(long)]
        family_out: Option<PathBuf>,
    },
    /// sup |u_12 - u_21| against the bracket size for each scaling eps
    Discrepancy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
    },
    /// Run the built-in consistency checks
    Selfcheck {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match catch_unwind(AssertUnwindSafe(|| dispatch(&cli.command))) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal failure");
            2
        }
    }
}

fn configure_threads() {
    let Ok(text) = std::env::var("HJVAR_THREADS") else {
        return;
    };
    match text.trim().parse::<usize>() {
        Ok(n) => {
            // Fails only if a pool already exists, which is fine.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Err(_) => log::warn!("ignoring HJVAR_THREADS={text:?}, expected a thread count"),
    }
}

fn load(common: &Common, extra: Overrides) -> Result<Problem, CliError> {
    let mut spec = parse_problem(&common.spec)?;
    spec.apply(&Overrides {
        nx: common.nx,
        nt: common.nt,
        t_max: common.t_max,
        steps_per_unit: common.steps_per_unit,
        n_seeds: common.seeds,
        allow_blowup: common.allow_blowup,
        ..extra
    });
    spec.validate()
}

fn emit(table: &Table, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            table.write_to(&mut w)?;
            w.flush().map_err(|e| CliError::Output(e.to_string()))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            table.write_to(&mut lock)
        }
    }
}

fn out_path<'a>(common: &'a Common, problem: &'a Problem) -> Option<&'a Path> {
    common
        .out
        .as_deref()
        .or(problem.options.output.as_deref().map(Path::new))
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    let (common, result) = match command {
        Command::Selfcheck { out } => {
            let (table, ok) = selfcheck::run();
            emit(&table, out.as_deref())?;
            return if ok {
                Ok(())
            } else {
                Err(CliError::Numerical("selfcheck failed".into()))
            };
        }
        Command::Solve { common, method } => {
            let p = load(common, Overrides { method: *method, ..Default::default() })?;
            (common, commands::solve(&p).map(|r| (p, r)))
        }
        Command::Multitime { common, order } => {
            let p = load(common, Overrides { order: order.clone(), ..Default::default() })?;
            (common, commands::multitime(&p).map(|r| (p, r)))
        }
        Command::Flow { common } => {
            let p = load(common, Overrides::default())?;
            (common, commands::flow(&p).map(|r| (p, r)))
        }
        Command::Front { common, order } => {
            let p = load(common, Overrides { order: order.clone(), ..Default::default() })?;
            (common, commands::front(&p).map(|r| (p, r)))
        }
        Command::Bracket { common, samples } => {
            let mut p = load(common, Overrides::default())?;
            if samples.is_some() {
                p.options.samples = *samples;
            }
            (common, commands::bracket(&p).map(|r| (p, r)))
        }
        Command::Gamma { common, family_out } => {
            let p = load(common, Overrides::default())?;
            if let Some(path) = family_out {
                emit(&commands::family_table(&p)?, Some(path))?;
            }
            (common, commands::gamma(&p).map(|r| (p, r)))
        }
        Command::Discrepancy { common, eps } => {
            let mut p = load(common, Overrides::default())?;
            if !eps.is_empty() {
                p.options.eps_list = eps.clone();
            }
            (common, commands::discrepancy(&p).map(|r| (p, r)))
        }
    };
    let (problem, report) = result?;
    for line in &report.summary {
        eprintln!("{line}");
    }
    emit(&report.table, out_path(common, &problem))
}
