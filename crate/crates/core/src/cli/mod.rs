//! Problem files, subcommands and reports for the `crfol` binary.

mod commands;
pub mod problem_file;
pub mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, ValueEnum};

pub use commands::{
    cmd_check, cmd_foliate, cmd_holonomy, cmd_trace, cmd_verify, sample_on_m, write_foliate_csv, Options, DEFAULT_TOLS,
    SAMPLE_RADIUS,
};
pub use problem_file::{load, parse_complex, parse_str, FileError, NamedPath, ProblemFile};
pub use report::{overall, Record, Report, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Geometry and bracket conditions at sampled points of M.
    Check,
    /// Trace one leaf along a path; writes CSV with --out.
    Trace,
    /// Endpoint gap of a leaf lifted around a closed path.
    Holonomy,
    /// Leaves through sampled targets near the seed; writes CSV with --out.
    Foliate,
    /// CR residual and normalizer checks on a traced mesh.
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "crfol", version, about = "Foliations of fibered CR manifolds by graphs of CR maps")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Problem file.
    pub file: PathBuf,
    /// Seed name (default: first seed in the file).
    #[arg(long)]
    pub seed: Option<String>,
    /// Path name (default: first path starting at the seed).
    #[arg(long)]
    pub path: Option<String>,
    /// RK4 steps per trace.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Sampled points, targets or mesh centers.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Tolerance of the command's headline check.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    /// Output file: CSV for trace and foliate, JSON report otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the report as one JSON object.
    #[arg(long)]
    pub json: bool,
}

impl Args {
    pub fn options(&self) -> Options {
        Options {
            seed: self.seed.clone(),
            path: self.path.clone(),
            steps: self.steps,
            samples: self.samples,
            tol: self.tol,
            rng_seed: self.rng_seed,
        }
    }
}

/// Run a command, print its report and return the exit code.
pub fn run(args: &Args) -> anyhow::Result<u8> {
    let file = load(&args.file)?;
    let opts = args.options();
    let out = |p: &PathBuf| File::create(p).map(BufWriter::new).with_context(|| format!("creating {}", p.display()));
    let report = match args.command {
        Command::Check => cmd_check(&file, &opts),
        Command::Holonomy => cmd_holonomy(&file, &opts),
        Command::Verify => cmd_verify(&file, &opts),
        Command::Trace => {
            let (rep, tr) = cmd_trace(&file, &opts);
            if let (Some(p), Some(tr)) = (&args.out, tr) {
                tr.write_csv(out(p)?)?;
            }
            rep
        }
        Command::Foliate => {
            let (rep, rows) = cmd_foliate(&file, &opts);
            if let Some(p) = &args.out {
                write_foliate_csv(&rows, out(p)?)?;
            }
            rep
        }
    };
    if let (Some(p), Command::Check | Command::Holonomy | Command::Verify) = (&args.out, args.command) {
        std::fs::write(p, report.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    let mut stdout = std::io::stdout().lock();
    let printed = if args.json { writeln!(stdout, "{}", report.to_json()) } else { write!(stdout, "{report}") };
    match printed.and_then(|_| stdout.flush()) {
        // a closed pipe (e.g. `| head`) is not a failure of the command
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    Ok(report.exit_code())
}
