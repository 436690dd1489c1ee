use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use semiweyl::report::{emit_report, Format};
use semiweyl::runner;
use semiweyl::spec::{load_spec, VerificationSpec};

#[derive(Parser)]
#[command(name = "semiweyl", version, about = "Verify statistical and semi-Weyl structures on coordinate charts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

impl From<ReportFormat> for Format {
    fn from(f: ReportFormat) -> Self {
        match f {
            ReportFormat::Text => Format::Text,
            ReportFormat::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks of a spec file.
    Verify {
        spec: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List every check with the formula it tests.
    ListChecks {
        /// Also list the rows of each check.
        #[arg(long)]
        rows: bool,
    },
    /// Compare symbolic derivatives of the spec's expressions with finite differences.
    Oracle {
        spec: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-5)]
        max_error: f64,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportFormat,
    },
}

fn load(path: &PathBuf) -> Result<VerificationSpec, ExitCode> {
    load_spec(path).map_err(|e| {
        eprintln!("error: {}", path.display());
        for line in e.to_string().lines() {
            eprintln!("  {line}");
        }
        ExitCode::from(2)
    })
}

fn write_out(text: &str, out: Option<&PathBuf>) -> Result<(), ExitCode> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", path.display());
            ExitCode::from(2)
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn verify(
    path: &PathBuf,
    samples: Option<usize>,
    seed: Option<u64>,
    tol: Option<f64>,
    format: Format,
    out: Option<&PathBuf>,
) -> Result<ExitCode, ExitCode> {
    let mut spec = load(path)?;
    if let Some(n) = samples {
        if n == 0 {
            eprintln!("error: --samples must be positive");
            return Err(ExitCode::from(2));
        }
        spec.run.samples = n;
        spec.run.min_valid_points = spec.run.min_valid_points.min(n);
    }
    if let Some(s) = seed {
        spec.run.seed = s;
    }
    if let Some(t) = tol {
        if !(t > 0.0 && t.is_finite()) {
            eprintln!("error: --tol must be a positive number");
            return Err(ExitCode::from(2));
        }
        spec.run.tol = t;
    }
    let report = runner::run(&spec);
    write_out(&emit_report(&report, format), out)?;
    Ok(if report.all_met() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn list_checks(rows: bool) {
    let width = runner::registry().iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in runner::registry() {
        println!("{:<width$}  {}", c.name, c.anchor);
        if rows {
            println!("{:<width$}  rows: {}", "", c.rows.join(", "));
        }
    }
}

fn oracle(path: &PathBuf, step: f64, max_error: f64, format: Format) -> Result<ExitCode, ExitCode> {
    let spec = load(path)?;
    let report = runner::oracle(&spec, step);
    print!("{}", report.emit(format));
    Ok(if report.max_relative_error <= max_error { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify { spec, samples, seed, tol, report, out } => {
            verify(&spec, samples, seed, tol, report.into(), out.as_ref())
        }
        Command::ListChecks { rows } => {
            list_checks(rows);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { spec, step, max_error, report } => oracle(&spec, step, max_error, report.into()),
    };
    result.unwrap_or_else(|code| code)
}
