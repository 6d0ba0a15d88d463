//! `traceforms` command-line front end.
//!
//! Exit codes: 0 ok, 2 parse or validation error, 3 numerical failure,
//! 4 a reported check did not pass.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use traceforms::acceptance::{self, Suite};
use traceforms::harmonic;
use traceforms::instances::DEFAULT_SEED;
use traceforms::io::{self, IoError, ReportFormat};
use traceforms::markov;
use traceforms::mosco;
use traceforms::oracles::{analytic, demos};
use traceforms::{trace_form, trace_limit, Error, Schedule, TracePath};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "traceforms", version, about = "Traces of quadratic and Dirichlet forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Report file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Shifted trace form T_λ and its operator.
    #[command(allow_negative_numbers = true)]
    Trace {
        #[arg(long)]
        form: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// schur, kkt or adjoint; schur for restrictions and kkt otherwise by default.
        #[arg(long)]
        path: Option<TracePath>,
        #[command(flatten)]
        output: Output,
    },
    /// Limit λ↓0 of the shifted trace forms.
    Limit {
        #[arg(long)]
        form: PathBuf,
        /// `geometric:start:ratio:steps` or a comma-separated decreasing list.
        #[arg(long, default_value = "geometric:1:0.5:40")]
        schedule: Schedule,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Harmonic extension, quadharm residual and J-ellipticity.
    Harmonic {
        #[arg(long)]
        form: PathBuf,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Markov property of the form, its shifted trace and its limit trace.
    #[command(allow_negative_numbers = true)]
    DirichletCheck {
        #[arg(long)]
        form: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Trace convergence run for a sequence of forms.
    #[command(allow_negative_numbers = true)]
    Mosco {
        #[arg(long, required_unless_present = "demo", conflicts_with = "demo")]
        sequence: Option<PathBuf>,
        /// Built-in family instead of a sequence file.
        #[arg(long)]
        demo: Option<MoscoDemo>,
        #[arg(long, value_delimiter = ',', default_value = "1,4,16,64")]
        n: Vec<u32>,
        /// Number of finite-element cells of the demo.
        #[arg(long, default_value_t = 512)]
        fem: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Closed-form values.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
        #[command(flatten)]
        output: Output,
    },
    /// Discretized models compared with their closed forms.
    Demo {
        #[command(subcommand)]
        which: DemoCommand,
        #[command(flatten)]
        output: Output,
    },
    /// Runs the acceptance criteria and prints one line per criterion.
    Selftest {
        /// Group name, criterion number or part of a criterion name.
        #[arg(long, default_value = "all")]
        filter: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// JSON file with the results.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MoscoDemo {
    Counterexample,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    ChainSign,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Coefficients of the chain trace form.
    #[command(allow_negative_numbers = true)]
    Chain {
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Symbol √(ξ² + λ) of the half-space trace.
    #[command(allow_negative_numbers = true)]
    Halfspace {
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
    },
    /// Trace value of the interval family at the endpoints.
    #[command(allow_negative_numbers = true)]
    Counterexample {
        #[arg(long, default_value_t = 1)]
        n: u32,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.0)]
        b: f64,
    },
}

#[derive(Subcommand)]
enum DemoCommand {
    #[command(allow_negative_numbers = true)]
    Chain {
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 8)]
        half_width: usize,
        #[arg(long, default_value_t = 64)]
        nodes_per_unit: usize,
    },
    #[command(allow_negative_numbers = true)]
    Halfstrip {
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 20.0)]
        depth: f64,
        #[arg(long, default_value_t = 2048)]
        cells: usize,
    },
    #[command(allow_negative_numbers = true)]
    Counterexample {
        #[arg(long, value_delimiter = ',', default_value = "1,4,16,64")]
        n: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1")]
        lambda: Vec<f64>,
        #[arg(long, default_value_t = 512)]
        fem: usize,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.0)]
        b: f64,
    },
    Grid2d {
        #[arg(long, default_value_t = 33)]
        outer: usize,
        #[arg(long, default_value_t = 11)]
        offset: usize,
        #[arg(long, default_value_t = 11)]
        size: usize,
    },
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Validation { source, .. } if !source.is_input_error() => Failure::Numerical(source.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn emit<R: Serialize>(report: &R, output: &Output) -> std::result::Result<(), Failure> {
    io::emit_report(report, output.out.as_deref(), output.format)?;
    Ok(())
}

/// Emits the report and passes `pass` through.
fn emit_checked<R: Serialize>(report: &R, output: &Output, pass: bool) -> Outcome {
    emit(report, output)?;
    Ok(pass)
}

fn positive(name: &str, value: f64) -> std::result::Result<(), Failure> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Failure::Input(format!("--{name} must be positive and finite, got {value}")))
    }
}

fn load_form(path: &Path) -> std::result::Result<(traceforms::QuadraticForm, traceforms::TraceMap), Failure> {
    Ok(io::parse_form_spec(path)?)
}

#[derive(Serialize)]
struct ChainOracleReport {
    lambda: f64,
    c_off: f64,
    c_diag: f64,
}

#[derive(Serialize)]
struct ValueReport {
    value: f64,
}

fn oracle(which: &OracleCommand, output: &Output) -> Outcome {
    match *which {
        OracleCommand::Chain { lambda } => {
            let c = analytic::chain_coefficients(lambda)?;
            emit(
                &ChainOracleReport {
                    lambda: c.lambda,
                    c_off: c.c_off,
                    c_diag: c.c_diag,
                },
                output,
            )?;
        }
        OracleCommand::Halfspace { xi, lambda } => {
            if lambda < 0.0 || !xi.is_finite() {
                return Err(Failure::Input("need λ ≥ 0 and finite ξ".into()));
            }
            emit(&ValueReport { value: analytic::halfspace_symbol(xi, lambda) }, output)?;
        }
        OracleCommand::Counterexample { n, lambda, a, b } => {
            if n == 0 || lambda < 0.0 {
                return Err(Failure::Input("need n ≥ 1 and λ ≥ 0".into()));
            }
            emit(&ValueReport { value: analytic::counterexample_value(n, lambda, a, b) }, output)?;
        }
    }
    Ok(true)
}

fn demo(which: &DemoCommand, output: &Output) -> Outcome {
    match which {
        &DemoCommand::Chain {
            lambda,
            half_width,
            nodes_per_unit,
        } => {
            let r = demos::chain_report(half_width, nodes_per_unit, lambda)?;
            emit_checked(&r, output, r.pass)
        }
        &DemoCommand::Halfstrip { xi, lambda, depth, cells } => {
            let r = demos::halfstrip_report(xi, lambda, depth, cells)?;
            emit_checked(&r, output, r.pass)
        }
        DemoCommand::Counterexample { n, lambda, fem, a, b } => {
            let r = demos::counterexample_report(n, lambda, *fem, *a, *b)?;
            emit_checked(&r, output, r.pass)
        }
        &DemoCommand::Grid2d { outer, offset, size } => {
            let r = demos::grid2d_report(outer, offset, size)?;
            emit_checked(&r, output, r.pass)
        }
    }
}

fn selftest(filter: &str, seed: u64, out: Option<&Path>, fault: Option<Fault>) -> Outcome {
    let mut suite = Suite {
        seed,
        ..Suite::default()
    };
    if let Some(Fault::ChainSign) = fault {
        suite.chain_oracle = acceptance::flipped_chain_oracle;
    }
    if !acceptance::CRITERIA.iter().any(|c| acceptance::matches(c, filter)) {
        return Err(Failure::Input(format!("no criterion matches filter `{filter}`")));
    }
    let results = acceptance::run_filtered(filter, &suite);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    let total: f64 = results.iter().map(|r| r.seconds).sum();
    println!("{} of {} criteria passed in {total:.1} s", results.len() - failed, results.len());
    if let Some(path) = out {
        io::emit_report(&results, Some(path), ReportFormat::Json)?;
    }
    Ok(failed == 0)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Trace {
            form,
            lambda,
            path,
            output,
        } => {
            let (f, j) = load_form(&form)?;
            let path = path.unwrap_or_else(|| TracePath::preferred(&j));
            emit(&trace_form(&f, &j, lambda, path)?, &output)?;
            Ok(true)
        }
        Command::Limit {
            form,
            schedule,
            tol,
            output,
        } => {
            positive("tol", tol)?;
            let (f, j) = load_form(&form)?;
            emit(&trace_limit(&f, &j, &schedule, tol)?, &output)?;
            Ok(true)
        }
        Command::Harmonic {
            form,
            samples,
            seed,
            output,
        } => {
            let (f, j) = load_form(&form)?;
            emit(&harmonic::harmonic_report(&f, &j, samples, seed)?, &output)?;
            Ok(true)
        }
        Command::DirichletCheck {
            form,
            lambda,
            alphas,
            samples,
            seed,
            output,
        } => {
            for &a in &alphas {
                positive("alphas", a)?;
            }
            let (f, j) = load_form(&form)?;
            let r = markov::dirichlet_check(&f, &j, lambda, &alphas, samples, seed)?;
            emit_checked(&r, &output, r.pass)
        }
        Command::Mosco {
            sequence,
            demo,
            n,
            fem,
            lambda,
            output,
        } => match (sequence, demo) {
            (Some(path), _) => {
                let seq = io::parse_sequence_spec(&path)?;
                let r = mosco::trace_convergence_run(&seq, lambda)?;
                emit_checked(&r, &output, r.pass)
            }
            (None, Some(MoscoDemo::Counterexample)) => {
                let r = demos::counterexample_mosco(&n, fem, lambda)?;
                emit_checked(&r, &output, r.comparison.pass)
            }
            (None, None) => Err(Failure::Input("need --sequence or --demo".into())),
        },
        Command::Oracle { which, output } => oracle(&which, &output),
        Command::Demo { which, output } => demo(&which, &output),
        Command::Selftest {
            filter,
            seed,
            out,
            inject_fault,
        } => selftest(&filter, seed, out.as_deref(), inject_fault),
    }
}

fn configure_threads() -> std::result::Result<(), Failure> {
    let Ok(value) = std::env::var("TRACEFORMS_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| Failure::Input(format!("TRACEFORMS_THREADS must be a count, got `{value}`")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Input(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
