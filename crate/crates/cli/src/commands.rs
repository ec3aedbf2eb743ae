//! Subcommand implementations. Each writes human-readable output to `out`
//! and returns the process exit code.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use phidecomp::decomp::{feasibility, to_sdpa, FeasibilityProblem, Verdict};
use phidecomp::dilation::block_dilation;
use phidecomp::gamma::{criterion_violation_search, SearchMethod, ViolationOptions, ViolationOutcome};
use serde::Serialize;

use crate::instance::{matrix_to_json, Instance, InstanceFile, MatrixJson};
use crate::report::{VerdictLabel, VerdictReport};
use crate::{resolve_seed, CliError, ExitCode};

/// Reload fidelity required of written reports, per entry.
pub const RELOAD_TOL: f64 = 1e-12;
/// Random inputs used to measure dilation reconstruction.
pub const DILATION_SAMPLES: usize = 20;

fn io_err(e: std::io::Error) -> CliError {
    CliError::io(format!("cannot write output: {e}"))
}

fn load(path: &Path) -> Result<(InstanceFile, Instance), CliError> {
    let file = InstanceFile::load(path)?;
    let inst = file.validate()?;
    Ok((file, inst))
}

#[derive(Debug, Clone, Default)]
pub struct CheckArgs {
    pub instance: PathBuf,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub json_out: Option<PathBuf>,
}

fn problem(inst: &Instance, tol: Option<f64>, max_iter: Option<usize>) -> Result<FeasibilityProblem, CliError> {
    let mut opts = inst.feasibility_options();
    if let Some(t) = tol {
        opts.feas_rel_tol = t;
    }
    if let Some(m) = max_iter {
        opts.max_iter = m;
    }
    Ok(FeasibilityProblem::new(inst.target.clone(), inst.seq.clone(), opts)?)
}

/// Solves an instance and builds its report; shared by `check` and the
/// corpus runner.
pub fn solve(inst: &Instance, prob: &FeasibilityProblem, seed: u64) -> Result<VerdictReport, CliError> {
    let start = Instant::now();
    let run = feasibility(prob)?;
    Ok(VerdictReport::from_run(&inst.name, seed, prob, &run, start.elapsed().as_secs_f64()))
}

/// Writes `report`, reads it back and re-verifies the reloaded payload.
pub fn write_and_reload(report: &VerdictReport, prob: &FeasibilityProblem, path: &Path) -> Result<(), CliError> {
    report.write(path)?;
    let back = VerdictReport::load(path)?;
    let dist = back.payload_distance(report);
    if dist > RELOAD_TOL {
        return Err(CliError::io(format!(
            "{} reloads with payload drift {dist:.3e}",
            path.display()
        )));
    }
    if report.verdict != VerdictLabel::Undetermined && !back.reverify(prob)?.valid {
        return Err(CliError::invalid(format!("{} does not re-verify after reload", path.display())));
    }
    Ok(())
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

pub fn check(args: &CheckArgs, out: &mut impl Write) -> Result<ExitCode, CliError> {
    let (file, inst) = load(&args.instance)?;
    let seed = resolve_seed(args.seed, file.options.seed)?;
    let prob = problem(&inst, args.tol, args.max_iter)?;
    let report = solve(&inst, &prob, seed)?;
    let check = report.reverify(&prob)?;

    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(io_err);
    w(out, format!("instance: {}", inst.name))?;
    w(out, format!("verdict: {}", report.verdict.as_str()))?;
    w(
        out,
        format!(
            "kernel condition: {} (common kernel dim {}, max violation {:.3e})",
            if report.kernel.holds { "holds" } else { "fails" },
            report.kernel.kernel_dim,
            report.kernel.max_violation
        ),
    )?;
    match report.verdict {
        VerdictLabel::Feasible => {
            w(out, format!("residual: {:.3e} (tolerance {:.3e})", check.value, prob.feas_tol()))?;
            w(out, format!("min eigenvalues: {}", fmt_list(&check.margins)))?;
        }
        VerdictLabel::Infeasible => {
            let source = report.witness.as_ref().map_or("", |w| w.source.as_str());
            w(out, format!("witness pairing: {:.3e} ({source})", check.value))?;
            w(out, format!("dual margins: {}", fmt_list(&check.margins)))?;
        }
        VerdictLabel::Undetermined => {
            w(out, format!("diagnostics: {}", report.diagnostics.as_deref().unwrap_or("")))?;
        }
    }
    if report.verdict != VerdictLabel::Undetermined {
        w(out, format!("re-verified: {}", if check.valid { "yes" } else { "NO" }))?;
    }
    w(out, format!("iterations: {}", report.iterations))?;
    if report.tail_slack > 0.0 {
        w(out, format!("tail slack: {:.3e}", report.tail_slack))?;
    }
    if let Some(path) = &args.json_out {
        write_and_reload(&report, &prob, path)?;
        w(out, format!("report: {} (reloaded and re-verified)", path.display()))?;
    }
    Ok(report.verdict.exit_code())
}

#[derive(Debug, Clone)]
pub struct WitnessSearchArgs {
    pub instance: PathBuf,
    pub n: usize,
    pub restarts: usize,
    pub seed: Option<u64>,
}

/// Exit 1 when a verified violation is found, 2 when none was found.
pub fn witness_search(
    args: &WitnessSearchArgs,
    out: &mut impl Write,
    err: &mut impl Write,
) -> Result<ExitCode, CliError> {
    let (file, inst) = load(&args.instance)?;
    if args.n == 0 {
        return Err(CliError::usage("--n must be positive".to_string()));
    }
    let seed = resolve_seed(args.seed, file.options.seed)?;
    let opts = ViolationOptions {
        restarts: args.restarts,
        seed,
        ..ViolationOptions::default()
    };
    let report = criterion_violation_search(&inst.target, &inst.seq, args.n, &opts)?;
    if report.method == SearchMethod::RejectionSampling {
        writeln!(
            err,
            "warning: sequence is not made of Hilbert-Schmidt isometries; falling back to rejection sampling"
        )
        .map_err(io_err)?;
    }
    writeln!(out, "instance: {}", inst.name).map_err(io_err)?;
    writeln!(out, "n: {}, restarts: {}, seed: {seed}", args.n, args.restarts).map_err(io_err)?;
    match report.outcome {
        ViolationOutcome::Violation { a, v, value } => {
            let rechecked = phidecomp::gamma::verify_violation(&inst.target, &inst.seq, &a, &v)?;
            match rechecked {
                Some(val) => {
                    writeln!(out, "result: violation, value {val:.6e} (re-verified, reported {value:.6e})")
                        .map_err(io_err)?;
                    Ok(ExitCode::Infeasible)
                }
                None => {
                    writeln!(out, "result: none_found (candidate failed re-verification)").map_err(io_err)?;
                    Ok(ExitCode::Undetermined)
                }
            }
        }
        ViolationOutcome::NoneFound { best } => {
            writeln!(out, "result: none_found (best value {best:.6e})").map_err(io_err)?;
            Ok(ExitCode::Undetermined)
        }
    }
}

#[derive(Debug, Clone)]
pub struct DilateArgs {
    pub instance: PathBuf,
    pub seed: Option<u64>,
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct DilationBlockJson {
    kraus_rank: usize,
    kraus: Vec<MatrixJson>,
}

#[derive(Debug, Serialize)]
struct DilationJson {
    instance: String,
    k_dim: usize,
    v: MatrixJson,
    blocks: Vec<DilationBlockJson>,
    reconstruction_residual: f64,
    samples: usize,
    seed: u64,
}

pub fn dilate(args: &DilateArgs, out: &mut impl Write) -> Result<ExitCode, CliError> {
    let (file, inst) = load(&args.instance)?;
    let seed = resolve_seed(args.seed, file.options.seed)?;
    let prob = problem(&inst, None, None)?;
    let run = feasibility(&prob)?;
    let cert = match run.verdict {
        Verdict::Feasible(c) => c,
        Verdict::Infeasible(_) => {
            writeln!(out, "instance {} is infeasible; nothing to dilate", inst.name).map_err(io_err)?;
            return Ok(ExitCode::Infeasible);
        }
        Verdict::Undetermined(d) => {
            writeln!(out, "instance {} is undetermined ({}); nothing to dilate", inst.name, d.reason)
                .map_err(io_err)?;
            return Ok(ExitCode::Undetermined);
        }
    };
    let dil = block_dilation(&cert, &prob)?;
    let residual = dil.reconstruction_residual(&inst.target, DILATION_SAMPLES, seed);
    writeln!(out, "instance: {}", inst.name).map_err(io_err)?;
    writeln!(out, "dilation space dimension: {}", dil.k_dim()).map_err(io_err)?;
    for (k, part) in dil.parts().iter().enumerate() {
        writeln!(out, "block {k}: Kraus rank {}, dimension {}", part.rank(), part.k_dim()).map_err(io_err)?;
    }
    writeln!(out, "reconstruction residual: {residual:.3e} ({DILATION_SAMPLES} random inputs, seed {seed})")
        .map_err(io_err)?;
    if let Some(path) = &args.json_out {
        let dump = DilationJson {
            instance: inst.name.clone(),
            k_dim: dil.k_dim(),
            v: matrix_to_json(dil.v()),
            blocks: dil
                .parts()
                .iter()
                .map(|p| DilationBlockJson {
                    kraus_rank: p.rank(),
                    kraus: p.kraus().iter().map(matrix_to_json).collect(),
                })
                .collect(),
            reconstruction_residual: residual,
            samples: DILATION_SAMPLES,
            seed,
        };
        let text = crate::to_json_compact(&dump);
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        writeln!(out, "dilation: {}", path.display()).map_err(io_err)?;
    }
    Ok(ExitCode::Feasible)
}

pub fn export_sdpa(instance: &Path, out_path: &Path, out: &mut impl Write) -> Result<ExitCode, CliError> {
    let (_, inst) = load(instance)?;
    let prob = problem(&inst, None, None)?;
    let sdp = to_sdpa(&prob);
    let comment = format!(
        "phidecomp {} export of `{}`: find PSD Y_k (real embeddings of X_k) with F_q . Y = c_q",
        crate::VERSION,
        inst.name
    );
    std::fs::write(out_path, sdp.to_text(Some(&comment)))
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", out_path.display())))?;
    writeln!(
        out,
        "wrote {}: {} constraints, blocks {:?}, {} entries",
        out_path.display(),
        sdp.num_constraints,
        sdp.block_sizes,
        sdp.entries.len()
    )
    .map_err(io_err)?;
    Ok(ExitCode::Feasible)
}
