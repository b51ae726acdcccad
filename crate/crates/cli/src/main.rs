//! `fracfield` command-line front end.
//!
//! Exit codes: 0 when every requested check passes, 1 when a suite or solve
//! fails (the report is still written), 2 for usage and input errors.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fracfield::besov::besov_seminorm;
use fracfield::identities::{check_suite, run_suite};
use fracfield::pde::{solve, ProblemFile};
use fracfield::{Backend, DirectConfig, Error, GridField, Operators, SolveOptions, SpectralOperators, SuiteConfig};

#[derive(Parser)]
#[command(name = "fracfield", version, about = "Fractional vector calculus on periodic grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Op {
    Grad,
    Div,
    Lap,
    NlGrad,
    NlDiv,
    Riesz,
}

#[derive(Subcommand)]
enum Command {
    /// Apply an operator to a field file.
    Apply {
        #[arg(long, value_enum)]
        op: Op,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value = "direct")]
        backend: Backend,
        #[arg(long)]
        input: PathBuf,
        /// Second argument of the non-local operators.
        #[arg(long)]
        with: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a verification suite on generated fields.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Nodes per axis.
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "direct")]
        backend: Backend,
        /// Lebesgue exponent of the ratio suites.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        serial: bool,
        /// Where to write the JSON report (stdout if absent).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Besov seminorm of a field file.
    Besov {
        #[arg(long)]
        alpha: f64,
        /// Integrability exponent; `inf` allowed.
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        input: PathBuf,
    },
    /// Solve a fractional elliptic problem.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        /// Solve even when lambda is below the computed coercivity constant.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a suite over several grid sizes and tabulate the residuals as CSV.
    Convergence {
        #[arg(long)]
        suite: String,
        /// Comma-separated grid sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        grids: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "direct")]
        backend: Backend,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Input(anyhow::Error),
    Check(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } => Failure::Check(e.to_string()),
            other => Failure::Input(other.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("FRACFIELD_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("FRACFIELD_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err(anyhow!("FRACFIELD_THREADS must be a positive integer, got '{v}'"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(anyhow!("file not found: {}", path.display()));
    }
    Ok(())
}

fn require_parent(path: &Path) -> anyhow::Result<()> {
    let parent = parent_dir(path);
    if !parent.is_dir() {
        return Err(anyhow!("output directory does not exist: {}", parent.display()));
    }
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Temp file in the target directory, then rename over the destination.
fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path))
        .with_context(|| format!("cannot create a temporary file next to {}", path.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn emit(path: Option<&Path>, contents: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => print_stdout(contents),
    }
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(contents: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{contents}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn read_field(path: &Path) -> anyhow::Result<GridField> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    GridField::from_json(&text).with_context(|| format!("malformed field file {}", path.display()))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Apply { op, alpha, backend, input, with, output } => {
            require_file(&input)?;
            if let Some(w) = &with {
                require_file(w)?;
            }
            require_parent(&output)?;
            let f = read_field(&input)?;
            let second = with.as_deref().map(read_field).transpose()?;
            let out = apply(op, alpha, backend, &f, second.as_ref())?;
            write_atomic(&output, &out.to_json())?;
            Ok(())
        }
        Command::Verify { suite, alpha, grid, dim, seed, backend, p, trials, serial, report } => {
            check_suite(&suite)?;
            if let Some(r) = &report {
                require_parent(r)?;
            }
            let cfg = SuiteConfig { dim, n: grid, alpha, seed, backend, parallel: !serial, p, trials };
            let rep = run_suite(&suite, &cfg)?;
            emit(report.as_deref(), &rep.to_json())?;
            if rep.pass {
                Ok(())
            } else {
                let names: Vec<&str> = rep.failed_checks().iter().map(|c| c.name.as_str()).collect();
                Err(Failure::Check(format!("suite {suite}: {}", names.join(", "))))
            }
        }
        Command::Besov { alpha, p, q, input } => {
            require_file(&input)?;
            let f = read_field(&input)?;
            let r = besov_seminorm(&f, alpha, p, q)?;
            #[derive(Serialize)]
            struct Out {
                alpha: f64,
                p: f64,
                q: f64,
                value: f64,
                inner_correction: f64,
                tail_bound: f64,
                total: f64,
            }
            let out = Out { alpha, p, q, value: r.value, inner_correction: r.inner_correction, tail_bound: r.tail_bound, total: r.total() };
            print_stdout(&serde_json::to_string_pretty(&out).map_err(anyhow::Error::from)?)?;
            Ok(())
        }
        Command::Solve { problem, tol, max_iter, force, output } => {
            require_file(&problem)?;
            if let Some(o) = &output {
                require_parent(o)?;
            }
            let text = fs::read_to_string(&problem).with_context(|| format!("cannot read {}", problem.display()))?;
            let spec = ProblemFile::from_json(&text).with_context(|| format!("malformed problem file {}", problem.display()))?;
            let problem = spec.build()?;
            let opts = SolveOptions { tol, max_iter, force, ..Default::default() };
            let rep = solve(&problem, &opts)?;
            emit(output.as_deref(), &rep.to_json())?;
            Ok(())
        }
        Command::Convergence { suite, mut grids, alpha, dim, seed, backend, report } => {
            check_suite(&suite)?;
            if let Some(r) = &report {
                require_parent(r)?;
            }
            grids.sort_unstable();
            grids.dedup();
            let mut csv = String::from("N,residual_linf_rel,residual_l2_rel,pass\n");
            let mut failed = Vec::new();
            for n in grids {
                let cfg = SuiteConfig { dim, n, alpha, seed, backend, ..Default::default() };
                let rep = run_suite(&suite, &cfg)?;
                let r = rep.residuals;
                writeln!(csv, "{n},{:e},{:e},{}", r.linf_rel, r.l2_rel, rep.pass).expect("writing to a string");
                if !rep.pass {
                    failed.push(n.to_string());
                }
            }
            emit(report.as_deref(), csv.trim_end())?;
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Check(format!("suite {suite} failed at N = {}", failed.join(", "))))
            }
        }
    }
}

fn apply(op: Op, alpha: f64, backend: Backend, f: &GridField, second: Option<&GridField>) -> Result<GridField, Failure> {
    let need = || second.ok_or_else(|| Failure::Input(anyhow!("--with is required for the non-local operators")));
    if let Op::Riesz = op {
        return Ok(SpectralOperators::new(f.grid()).riesz(f)?);
    }
    let ops = Operators::new(f.grid(), alpha, backend, &DirectConfig::default())?;
    Ok(match op {
        Op::Grad => ops.gradient(f)?,
        Op::Div => ops.divergence(f)?,
        Op::Lap => ops.laplacian(f)?,
        Op::NlGrad => ops.nl_gradient(f, need()?)?,
        Op::NlDiv => ops.nl_divergence(f, need()?)?,
        Op::Riesz => unreachable!("handled above"),
    })
}
