use std::io::Write;
use std::path::PathBuf;
use std::process;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use phidecomp_cli::commands::{self, CheckArgs, DilateArgs, WitnessSearchArgs};
use phidecomp_cli::selftest::{self, Mode, SelftestConfig};
use phidecomp_cli::{resolve_seed, CliError, ExitCode};

/// Decomposability of linear maps between matrix algebras.
///
/// Exit codes: 0 feasible, 1 infeasible, 2 undetermined, 3 invalid instance,
/// 4 usage error, 5 I/O error.
#[derive(Parser)]
#[command(name = "phidecomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide membership of an instance's target in the cone generated by its sequence.
    Check {
        instance: PathBuf,
        /// Relative feasibility tolerance.
        #[arg(long, value_parser = positive_f64)]
        tol: Option<f64>,
        #[arg(long, value_parser = positive_usize)]
        max_iter: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON verdict report here.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Search for a block-positivity violation (exit 1 if one is verified, 2 otherwise).
    WitnessSearch {
        instance: PathBuf,
        #[arg(long, default_value_t = 2, value_parser = positive_usize)]
        n: usize,
        #[arg(long, default_value_t = 16, value_parser = positive_usize)]
        restarts: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the block Stinespring dilation of a feasible instance.
    Dilate {
        instance: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Write the feasibility problem in sparse SDPA format.
    ExportSdpa { instance: PathBuf, out: PathBuf },
    /// Run the self-test suites.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, conflicts_with = "full")]
    quick: bool,
    #[arg(long)]
    full: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative feasibility tolerance.
    #[arg(long, default_value_t = 1e-7, value_parser = positive_f64, allow_negative_numbers = true)]
    tol: f64,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be finite and positive, got {v}"))
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Check {
            instance,
            tol,
            max_iter,
            seed,
            json_out,
        } => commands::check(
            &CheckArgs {
                instance,
                tol,
                max_iter,
                seed,
                json_out,
            },
            &mut out,
        ),
        Command::WitnessSearch {
            instance,
            n,
            restarts,
            seed,
        } => commands::witness_search(
            &WitnessSearchArgs {
                instance,
                n,
                restarts,
                seed,
            },
            &mut out,
            &mut std::io::stderr(),
        ),
        Command::Dilate {
            instance,
            seed,
            json_out,
        } => commands::dilate(
            &DilateArgs {
                instance,
                seed,
                json_out,
            },
            &mut out,
        ),
        Command::ExportSdpa { instance, out: path } => commands::export_sdpa(&instance, &path, &mut out),
        Command::Selftest(args) => {
            let cfg = SelftestConfig {
                mode: if args.full { Mode::Full } else { Mode::Quick },
                seed: resolve_seed(args.seed, None)?,
                tol: args.tol,
            };
            let start = Instant::now();
            let io = |e: std::io::Error| CliError::io(e.to_string());
            writeln!(out, "{}", selftest::header(&cfg)).map_err(io)?;
            let mut write_err = None;
            let results = selftest::run_all(&cfg, |r| {
                if let Err(e) = writeln!(out, "{}", r.line()).and_then(|_| out.flush()) {
                    write_err.get_or_insert(e);
                }
            });
            if let Some(e) = write_err {
                return Err(io(e));
            }
            writeln!(out, "{}", selftest::footer(&results)).map_err(io)?;
            eprintln!("selftest wall time {:.1} s", start.elapsed().as_secs_f64());
            Ok(if results.iter().all(|r| r.passed) {
                ExitCode::Feasible
            } else {
                ExitCode::Infeasible
            })
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Usage.code() } else { 0 };
            let _ = e.print();
            process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => process::exit(code.code()),
        Err(e) => {
            eprintln!("error: {e}");
            process::exit(e.code.code());
        }
    }
}
