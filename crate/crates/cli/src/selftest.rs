//! Self-test suites. Every suite is seeded and single-threaded except the
//! corpus run, which fans out over instances and collects in order, so the
//! summary text is reproducible for a fixed seed.

use std::time::Instant;

use phidecomp::decomp::{
    certificate_residual, closedness_probe, conic_combine, feasibility, left_compose, to_sdpa, verify_certificate,
    verify_witness, DecompositionCertificate, FeasibilityOptions, FeasibilityProblem, Verdict,
};
use phidecomp::dilation::{
    block_dilation, build_Phi, eta_inverse, eta_reshuffle, phi_cp_sampling, unitized_cp_sampling, unitized_extension,
    SubalgebraMap, UnitizedAlgebraModel,
};
use phidecomp::gamma::{
    blockwise, criterion_violation_search, gamma_membership, gamma_sample, ViolationOptions, ViolationOutcome,
    MEMBERSHIP_TOL,
};
use phidecomp::linalg::{frobenius, min_eigenvalue, random, seeded_rng, BlockMatrix, ComplexMatrix, SeededRng};
use phidecomp::sdpa::SdpaProblem;
use phidecomp::seq::{kernel_condition, CanonicalClass, MapSequence};
use phidecomp::superop::{build_precomposition, compose, SuperOperator};
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::{self, pinching, CorpusEntry, Expectation};
use crate::report::{VerdictLabel, VerdictReport};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Quick,
    Full,
}

impl Mode {
    fn pick(self, quick: usize, full: usize) -> usize {
        match self {
            Mode::Quick => quick,
            Mode::Full => full,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelftestConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Relative feasibility tolerance for every solve.
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Shared state across suites: the corpus is run once and reused.
pub struct Context {
    pub cfg: SelftestConfig,
    corpus: Option<Vec<CorpusOutcome>>,
}

impl Context {
    pub fn new(cfg: SelftestConfig) -> Self {
        Context { cfg, corpus: None }
    }

    pub fn corpus(&mut self) -> Result<&[CorpusOutcome], CliError> {
        if self.corpus.is_none() {
            self.corpus = Some(run_corpus(&self.cfg)?);
        }
        Ok(self.corpus.as_deref().unwrap_or_default())
    }
}

type SuiteFn = fn(&mut Context) -> Result<(bool, String), CliError>;

pub const SUITES: &[(&str, SuiteFn)] = &[
    ("transpose-regression", transpose_regression),
    ("choi-map-witness", choi_map_witness),
    ("forward-suite", forward_suite),
    ("corpus-soundness", corpus_soundness),
    ("corpus-dilation", corpus_dilation),
    ("cone-structure", cone_structure),
    ("proof-machinery", proof_machinery),
    ("unitization-lemma", unitization_lemma),
    ("truncated-vanishing", truncated_vanishing),
    ("precomposition", precomposition),
    ("gamma-consistency", gamma_consistency),
    ("phi-complete-positivity", phi_complete_positivity),
];

pub fn run_suite(name: &'static str, f: SuiteFn, ctx: &mut Context) -> SuiteResult {
    match f(ctx) {
        Ok((passed, detail)) => SuiteResult { name, passed, detail },
        Err(e) => SuiteResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs every suite in order, reporting each as it finishes.
pub fn run_all(cfg: &SelftestConfig, mut progress: impl FnMut(&SuiteResult)) -> Vec<SuiteResult> {
    let mut ctx = Context::new(cfg.clone());
    SUITES
        .iter()
        .map(|&(name, f)| {
            let r = run_suite(name, f, &mut ctx);
            progress(&r);
            r
        })
        .collect()
}

pub fn header(cfg: &SelftestConfig) -> String {
    format!(
        "phidecomp selftest ({}, seed {}, tol {:e})",
        match cfg.mode {
            Mode::Quick => "quick",
            Mode::Full => "full",
        },
        cfg.seed,
        cfg.tol
    )
}

pub fn footer(results: &[SuiteResult]) -> String {
    let passed = results.iter().filter(|r| r.passed).count();
    format!("{passed}/{} suites passed", results.len())
}

fn options(cfg: &SelftestConfig) -> FeasibilityOptions {
    FeasibilityOptions {
        feas_rel_tol: cfg.tol,
        ..FeasibilityOptions::default()
    }
}

fn rng_for(cfg: &SelftestConfig, tag: u64) -> SeededRng {
    seeded_rng(cfg.seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ tag)
}

fn full_cp(rng: &mut impl Rng, d: usize, h: usize) -> SuperOperator {
    SuperOperator::random_cp(rng, d, h, d * h)
}

fn solve(target: SuperOperator, seq: MapSequence, cfg: &SelftestConfig) -> Result<(FeasibilityProblem, Verdict), CliError> {
    let prob = FeasibilityProblem::new(target, seq, options(cfg))?;
    let v = feasibility(&prob)?.verdict;
    Ok((prob, v))
}

/// `Σ_k ψ_k ∘ φ_k` with full-rank random CP `ψ_k`.
fn decomposable_target(rng: &mut impl Rng, seq: &MapSequence, h: usize) -> Result<SuperOperator, CliError> {
    let d = seq.dim();
    let mut t = SuperOperator::zero(d, h);
    for phi_k in seq.maps() {
        t = t.add(&compose(&full_cp(rng, d, h), phi_k)?)?;
    }
    Ok(t)
}

fn transpose_regression(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let cfg = &ctx.cfg;
    let start = Instant::now();
    let (prob, v) = solve(SuperOperator::transpose(2), MapSequence::canonical(CanonicalClass::Decomposable, 2), cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let Verdict::Feasible(cert) = v else {
        return Ok((false, format!("verdict {}", v.label())));
    };
    // Partial transpose of SWAP: Σ_ij E_ij ⊗ E_ij.
    let mut omega = ComplexMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            omega[(i * 2 + i, j * 2 + j)] = phidecomp::linalg::ONE;
        }
    }
    let check = verify_certificate(&cert, &prob);
    let x1 = frobenius(&cert.choi[0]);
    let x2_err = frobenius(&(&cert.choi[1] - &omega));
    let ok = check.valid && check.residual <= 1e-7 && x1 <= 1e-6 && check.min_eigenvalues[1] >= -1e-8 && elapsed <= 5.0;
    Ok((
        ok,
        format!(
            "residual {:.1e}, |X_1| {:.1e}, |X_2 - hand certificate| {:.1e}",
            check.residual, x1, x2_err
        ),
    ))
}

fn choi_map_witness(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let cfg = &ctx.cfg;
    let start = Instant::now();
    let (prob, v) = solve(
        SuperOperator::choi_type_map(2.0, 0.0, 1.0),
        MapSequence::canonical(CanonicalClass::Decomposable, 3),
        cfg,
    )?;
    let elapsed = start.elapsed().as_secs_f64();
    let Verdict::Infeasible(w) = v else {
        return Ok((false, format!("verdict {}", v.label())));
    };
    let check = verify_witness(&w.w, &prob);
    let sdp = to_sdpa(&prob);
    let round_trip = SdpaProblem::parse(&sdp.to_text(None))? == sdp;
    let min_margin = check.dual_margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = check.valid && check.pairing <= -1e-6 && min_margin >= -1e-9 && round_trip && elapsed <= 60.0;
    Ok((
        ok,
        format!(
            "pairing {:.3e}, min dual margin {:.1e}, sdpa round trip {}",
            check.pairing,
            min_margin,
            if round_trip { "exact" } else { "differs" }
        ),
    ))
}

/// Sequences drawn from `(id)`, `(t)`, `(id, t)` and unitary conjugations.
fn forward_sequence(rng: &mut impl Rng, i: usize, d: usize) -> Result<MapSequence, CliError> {
    Ok(match i % 4 {
        0 => MapSequence::canonical(CanonicalClass::Cp, d),
        1 => MapSequence::canonical(CanonicalClass::Ccp, d),
        2 => MapSequence::canonical(CanonicalClass::Decomposable, d),
        _ => MapSequence::finite(vec![
            SuperOperator::unitary_conjugation(&random::unitary(rng, d))?,
            SuperOperator::unitary_conjugation(&random::unitary(rng, d))?,
        ])?,
    })
}

fn forward_suite(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let cfg = &ctx.cfg;
    let instances = cfg.mode.pick(10, 50);
    let samples = cfg.mode.pick(6, 20);
    let mut rng = rng_for(cfg, 3);
    let mut certified = 0;
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for i in 0..instances {
        let d = 2 + (i / 4) % 2;
        let h = 1 + (i / 8) % 2;
        let seq = forward_sequence(&mut rng, i, d)?;
        let target = decomposable_target(&mut rng, &seq, h)?;
        let (_, v) = solve(target.clone(), seq.clone(), cfg)?;
        if !matches!(v, Verdict::Feasible(_)) {
            continue;
        }
        certified += 1;
        for s in 0..samples {
            let n = 1 + s % 3;
            let a = gamma_sample(&seq, n, 2_000, MEMBERSHIP_TOL, &mut rng)?;
            if !gamma_membership(&a, &seq, MEMBERSHIP_TOL)?.member {
                return Ok((false, format!("instance {i}: sample {s} left the cone")));
            }
            let norm = frobenius(a.flatten()).max(f64::MIN_POSITIVE);
            let a = BlockMatrix::from_flat(n, d, a.into_flat().unscale(norm))?;
            let lam = min_eigenvalue(blockwise(&target, &a)?.flatten());
            worst = worst.min(lam);
            if lam < -1e-6 {
                violations += 1;
            }
        }
    }
    Ok((
        certified == instances && violations == 0,
        format!(
            "{certified}/{instances} certified, {} samples, {violations} violations, min eigenvalue {:.1e}",
            certified * samples,
            worst
        ),
    ))
}

/// Per-instance outcome of a corpus run.
#[derive(Debug, Clone)]
pub struct CorpusOutcome {
    pub name: String,
    pub expected: Expectation,
    pub verdict: VerdictLabel,
    /// Payload re-verified after a JSON round trip (true for undetermined).
    pub reverified: bool,
    pub fidelity: f64,
    /// Both a certificate and a witness verified.
    pub both: bool,
    pub dilation_residual: Option<f64>,
}

impl CorpusOutcome {
    pub fn conflicts(&self) -> bool {
        matches!(
            (self.expected, self.verdict),
            (Expectation::Feasible, VerdictLabel::Infeasible) | (Expectation::Infeasible, VerdictLabel::Feasible)
        )
    }
}

pub fn run_corpus_entry(entry: &CorpusEntry, cfg: &SelftestConfig) -> Result<CorpusOutcome, CliError> {
    let inst = entry.instance();
    let mut opts = inst.feasibility_options();
    opts.feas_rel_tol = cfg.tol;
    let prob = FeasibilityProblem::new(inst.target.clone(), inst.seq.clone(), opts)?;
    let start = Instant::now();
    let (run, state) = prob.solve_with_state()?;
    let report = VerdictReport::from_run(&inst.name, cfg.seed, &prob, &run, start.elapsed().as_secs_f64());
    let back = VerdictReport::parse(&report.to_json())?;
    let fidelity = back.payload_distance(&report);
    let reverified = match back.verdict {
        VerdictLabel::Undetermined => true,
        _ => back.reverify(&prob)?.valid,
    };

    let cert_ok = match &run.verdict {
        Verdict::Feasible(c) => verify_certificate(c, &prob).valid,
        _ => prob
            .certificate_candidates(&state.cone_point)
            .iter()
            .any(|c| verify_certificate(c, &prob).valid),
    };
    let witness_ok = match &run.verdict {
        Verdict::Infeasible(w) => verify_witness(&w.w, &prob).valid,
        _ => [prob.kernel_witness_candidate(), prob.witness_candidate(&state.cone_point)]
            .into_iter()
            .flatten()
            .any(|w| verify_witness(&w.w, &prob).valid),
    };
    let dilation_residual = match &run.verdict {
        Verdict::Feasible(c) => Some(
            block_dilation(c, &prob)?.reconstruction_residual(&inst.target, crate::commands::DILATION_SAMPLES, cfg.seed),
        ),
        _ => None,
    };
    Ok(CorpusOutcome {
        name: inst.name,
        expected: entry.expected,
        verdict: report.verdict,
        reverified,
        fidelity,
        both: cert_ok && witness_ok,
        dilation_residual,
    })
}

/// The corpus entries a mode runs: all of them in full mode, every fourth
/// in quick mode.
pub fn corpus_entries(cfg: &SelftestConfig) -> Vec<CorpusEntry> {
    let all = corpus::generate(cfg.seed);
    match cfg.mode {
        Mode::Full => all,
        Mode::Quick => all.into_iter().step_by(4).collect(),
    }
}

pub fn run_corpus(cfg: &SelftestConfig) -> Result<Vec<CorpusOutcome>, CliError> {
    corpus_entries(cfg)
        .par_iter()
        .map(|e| run_corpus_entry(e, cfg))
        .collect()
}

fn corpus_soundness(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let min_size = ctx.cfg.mode.pick(1, 200);
    let outcomes = ctx.corpus()?;
    let count = |l: VerdictLabel| outcomes.iter().filter(|o| o.verdict == l).count();
    let both = outcomes.iter().filter(|o| o.both).count();
    let unverified: Vec<&str> = outcomes.iter().filter(|o| !o.reverified).map(|o| o.name.as_str()).collect();
    let drift = outcomes.iter().map(|o| o.fidelity).fold(0.0, f64::max);
    let conflicts: Vec<&str> = outcomes.iter().filter(|o| o.conflicts()).map(|o| o.name.as_str()).collect();
    let ok = outcomes.len() >= min_size && both == 0 && unverified.is_empty() && drift <= 1e-12 && conflicts.is_empty();
    let mut detail = format!(
        "{} instances: {} feasible, {} infeasible, {} undetermined; {both} with both, {} not re-verified, {} conflicts, max reload drift {drift:.1e}",
        outcomes.len(),
        count(VerdictLabel::Feasible),
        count(VerdictLabel::Infeasible),
        count(VerdictLabel::Undetermined),
        unverified.len(),
        conflicts.len(),
    );
    if !unverified.is_empty() || !conflicts.is_empty() {
        detail.push_str(&format!(" ({})", [unverified, conflicts].concat().join(", ")));
    }
    Ok((ok, detail))
}

fn corpus_dilation(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let outcomes = ctx.corpus()?;
    let residuals: Vec<(&str, f64)> = outcomes
        .iter()
        .filter_map(|o| o.dilation_residual.map(|r| (o.name.as_str(), r)))
        .collect();
    let worst = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    let bad: Vec<&str> = residuals.iter().filter(|r| !(r.1 <= 1e-8)).map(|r| r.0).collect();
    let mut detail = format!(
        "{} feasible instances dilated, max reconstruction residual {worst:.1e}",
        residuals.len()
    );
    if !bad.is_empty() {
        detail.push_str(&format!(" (above 1e-8: {})", bad.join(", ")));
    }
    Ok((bad.is_empty() && !residuals.is_empty(), detail))
}

fn cone_structure(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let cfg = &ctx.cfg;
    let pairs = cfg.mode.pick(10, 50);
    let sequences = cfg.mode.pick(4, 20);
    let mut rng = rng_for(cfg, 5);
    let d = 2;
    let seq = MapSequence::canonical(CanonicalClass::Decomposable, d);
    let certify = |t: &SuperOperator| -> Result<Option<(FeasibilityProblem, DecompositionCertificate)>, CliError> {
        let (p, v) = solve(t.clone(), seq.clone(), cfg)?;
        Ok(match v {
            Verdict::Feasible(c) => Some((p, c)),
            _ => None,
        })
    };

    let mut combined_ok = 0;
    for i in 0..pairs {
        let h = 1 + i % 3;
        let ta = decomposable_target(&mut rng, &seq, h)?;
        let tb = decomposable_target(&mut rng, &seq, h)?;
        let (l1, l2) = (0.05 + 3.0 * rng.random::<f64>(), 0.05 + 3.0 * rng.random::<f64>());
        if let (Some((_, ca)), Some((_, cb))) = (certify(&ta)?, certify(&tb)?) {
            let comb = conic_combine(&ca, &cb, l1, l2)?;
            let target = ta.scale(l1).add(&tb.scale(l2))?;
            let prob = FeasibilityProblem::new(target, seq.clone(), options(cfg))?;
            if verify_certificate(&comb, &prob).valid {
                combined_ok += 1;
            }
        }
    }

    let mut composed_ok = 0;
    for i in 0..pairs {
        let h = 1 + i % 3;
        let hp = 1 + (i / 3) % 3;
        let t = decomposable_target(&mut rng, &seq, h)?;
        if let Some((prob, cert)) = certify(&t)? {
            let psi = SuperOperator::random_cp(&mut rng, h, hp, 1 + i % (h * hp));
            let lc = left_compose(&cert, &prob, &psi)?;
            let composed = FeasibilityProblem::new(compose(&psi, &t)?, seq.clone(), options(cfg))?;
            if verify_certificate(&lc, &composed).valid {
                composed_ok += 1;
            }
        }
    }

    let mut closed_ok = 0;
    for i in 0..sequences {
        let limit = decomposable_target(&mut rng, &seq, 2)?;
        let approximants: Vec<SuperOperator> = if i % 2 == 0 {
            (1..=4).map(|j| limit.scale(1.0 + 1.0 / j as f64)).collect()
        } else {
            (1..=4)
                .map(|j| {
                    let bump = decomposable_target(&mut rng, &seq, 2)?;
                    Ok(limit.add(&bump.scale(0.5f64.powi(j)))?)
                })
                .collect::<Result<_, CliError>>()?
        };
        let prob = FeasibilityProblem::new(limit, seq.clone(), options(cfg))?;
        let v = closedness_probe(&prob, &approximants)?;
        if v.passes && v.approximants_feasible.iter().all(|&f| f) {
            closed_ok += 1;
        }
    }
    Ok((
        combined_ok == pairs && composed_ok == pairs && closed_ok == sequences,
        format!(
            "conic_combine {combined_ok}/{pairs}, left_compose {composed_ok}/{pairs}, closedness {closed_ok}/{sequences}"
        ),
    ))
}

fn proof_machinery(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let cfg = &ctx.cfg;
    let mut rng = rng_for(cfg, 7);
    let pairs = cfg.mode.pick(20, 100);
    let mut eta_err = 0.0f64;
    for i in 0..pairs {
        let (n, m, d) = (1 + i % 3, 1 + (i / 3) % 3, 2 + i % 2);
        let sample = |rng: &mut SeededRng| -> Result<ComplexMatrix, CliError> {
            let parts: Vec<ComplexMatrix> = (0..m).map(|_| random::ginibre(rng, n * d, n * d)).collect();
            Ok(eta_inverse(&parts, n, d)?)
        };
        let x = sample(&mut rng)?;
        let y = sample(&mut rng)?;
        let prod = eta_reshuffle(&(&x * &y), n, m, d)?;
        let ex = eta_reshuffle(&x, n, m, d)?;
        let ey = eta_reshuffle(&y, n, m, d)?;
        for k in 0..m {
            eta_err = eta_err.max(frobenius(&(&prod[k] - &ex[k] * &ey[k])));
        }
    }

    // Preimage independence on sequences with a common kernel.
    let cases = cfg.mode.pick(5, 20);
    let mut phi_err = 0.0f64;
    for i in 0..cases {
        let d = 2 + i % 2;
        let h = 1 + i % 3;
        let seq = MapSequence::finite(vec![pinching(d), compose(&SuperOperator::transpose(d), &pinching(d))?])?;
        let phi = compose(&full_cp(&mut rng, d, h), &pinching(d))?;
        let map = build_Phi(&phi, &seq, 1e-10)?;
        let a = random::ginibre(&mut rng, d, d);
        let mut kappa = random::ginibre(&mut rng, d, d);
        for j in 0..d {
            kappa[(j, j)] = phidecomp::linalg::ZERO;
        }
        let x: Vec<ComplexMatrix> = seq.maps().map(|m| m.apply(&a)).collect();
        let via_phi = map.apply(&x)?;
        let scale = 1.0 + frobenius(&phi.apply(&a));
        phi_err = phi_err
            .max(frobenius(&(&via_phi - phi.apply(&a))) / scale)
            .max(frobenius(&(&via_phi - phi.apply(&(&a + &kappa)))) / scale)
            .max(frobenius(&(phi.apply(&(map.preimage(&x)? + &kappa)) - &via_phi)) / scale);
    }

    // Targets that see the common kernel must be rejected.
    let mut rejected = 0;
    for i in 0..cases {
        let d = 2 + i % 2;
        let seq = MapSequence::finite(vec![pinching(d)])?;
        let phi = full_cp(&mut rng, d, 1 + i % 3);
        let k = kernel_condition(&seq, &phi, 1e-8)?;
        if !k.holds && build_Phi(&phi, &seq, 1e-8).is_err() {
            rejected += 1;
        }
    }
    Ok((
        eta_err <= 1e-12 && phi_err <= 1e-8 && rejected == cases,
        format!(
            "eta defect {eta_err:.1e} over {pairs} pairs, Phi preimage defect {phi_err:.1e} over {cases} kernels, {rejected}/{cases} kernel violations rejected"
        ),
    ))
}

fn unitization_lemma(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let cfg = &ctx.cfg;
    let maps = cfg.mode.pick(5, 20);
    let samples = cfg.mode.pick(60, 200);
    let mut rng = rng_for(cfg, 8);
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    let mut control_flagged = 0;
    for i in 0..maps {
        let (ambient, sizes): (usize, &[usize]) = match i % 4 {
            0 => (3, &[1]),
            1 => (3, &[2]),
            2 => (4, &[1, 1]),
            _ => (4, &[2, 1]),
        };
        let model = UnitizedAlgebraModel::random(&mut rng, ambient, sizes)?;
        let t = SubalgebraMap::random_cp(&mut rng, &model, 1 + i % 3)?;
        let ext = unitized_extension(&t, &model)?;
        let seed = cfg.seed ^ ((i as u64) << 8);
        let s = unitized_cp_sampling(&ext, 3, samples, -1e-9, seed)?;
        worst = worst.min(s.min_margin);
        violations += s.violations;
        let mut halved = ext.clone();
        halved.constant *= 0.5;
        if unitized_cp_sampling(&halved, 3, samples, -1e-9, seed)?.violations > 0 {
            control_flagged += 1;
        }
    }
    Ok((
        violations == 0 && control_flagged > 0,
        format!(
            "{maps} maps x {samples} samples: {violations} violations, min eigenvalue {worst:.1e}; halved constant flagged on {control_flagged}/{maps}"
        ),
    ))
}

fn truncated_vanishing(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let cfg = &ctx.cfg;
    let ks: &[usize] = match cfg.mode {
        Mode::Quick => &[2, 3],
        Mode::Full => &[1, 2, 3, 4, 5],
    };
    let mut rng = rng_for(cfg, 9);
    let mut agree = 0;
    let mut bounded = 0;
    let mut total = 0;
    let mut worst_ratio = 0.0f64;
    for &k in ks {
        for negate in [false, true] {
            total += 1;
            let d = 2;
            let cp = full_cp(&mut rng, d, 2);
            let target = if negate { cp.scale(-1.0) } else { cp };
            let short = MapSequence::geometric_identity(d, k, 0.5)?;
            let long = MapSequence::geometric_identity(d, k + 5, 0.5)?;
            let ps = FeasibilityProblem::new(target.clone(), short.clone(), options(cfg))?;
            let pl = FeasibilityProblem::new(target.clone(), long, options(cfg))?;
            let rs = feasibility(&ps)?;
            let rl = feasibility(&pl)?;
            if rs.verdict.label() == rl.verdict.label() && rs.verdict.label() != "undetermined" {
                agree += 1;
            }
            // Dropping the tail components of the long certificate moves the
            // residual by at most tail_slack · Σ_{j ≥ k} ‖X_j‖_F.
            match &rl.verdict {
                Verdict::Feasible(c) => {
                    let full = certificate_residual(&c.choi, pl.sequence(), &target)?;
                    let cut = certificate_residual(&c.choi[..k], &short, &target)?;
                    let mass: f64 = c.choi[k..].iter().map(frobenius).sum();
                    let bound = rs.tail_slack * mass;
                    let diff = (cut - full).abs();
                    if diff <= bound * (1.0 + 1e-9) + 1e-12 {
                        bounded += 1;
                    }
                    if bound > 0.0 {
                        worst_ratio = worst_ratio.max(diff / bound);
                    }
                }
                _ => bounded += 1,
            }
        }
    }
    Ok((
        agree == total && bounded == total,
        format!("verdicts agree {agree}/{total}, tail slack bounds residual shift {bounded}/{total} (max shift/bound {worst_ratio:.2})"),
    ))
}

fn precomposition(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let cfg = &ctx.cfg;
    let pairs = cfg.mode.pick(20, 100);
    let mut rng = rng_for(cfg, 10);
    let mut worst = 0.0f64;
    for i in 0..pairs {
        let d = 1 + i % 3;
        let h = 1 + (i / 3) % 3;
        let psi = SuperOperator::from_choi(d, h, random::ginibre(&mut rng, d * h, d * h))?;
        let phi_k = full_cp(&mut rng, d, d).add(&full_cp(&mut rng, d, d).scale(-0.5))?;
        let p = build_precomposition(&phi_k, h)?;
        let direct = SuperOperator::from_fn(d, h, |x| psi.apply(&phi_k.apply(x)))?;
        worst = worst.max(frobenius(&(p.apply(psi.choi()) - direct.choi())));
    }
    Ok((worst <= 1e-10, format!("max defect {worst:.1e} over {pairs} pairs")))
}

fn gamma_consistency(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let cfg = &ctx.cfg;
    let cases = cfg.mode.pick(2, 6);
    let mut rng = rng_for(cfg, 11);
    let seq = MapSequence::canonical(CanonicalClass::Decomposable, 2);
    let opts = ViolationOptions {
        restarts: cfg.mode.pick(3, 6),
        seed: cfg.seed,
        ..ViolationOptions::default()
    };
    let mut clean = 0;
    for i in 0..cases {
        let target = decomposable_target(&mut rng, &seq, 2)?;
        let (_, v) = solve(target.clone(), seq.clone(), cfg)?;
        let n = 2 + i % 2;
        if matches!(v, Verdict::Feasible(_))
            && matches!(
                criterion_violation_search(&target, &seq, n, &opts)?.outcome,
                ViolationOutcome::NoneFound { .. }
            )
        {
            clean += 1;
        }
    }
    let cp = MapSequence::canonical(CanonicalClass::Cp, 2);
    let found = match criterion_violation_search(&SuperOperator::transpose(2), &cp, 2, &opts)?.outcome {
        ViolationOutcome::Violation { value, .. } => value,
        ViolationOutcome::NoneFound { .. } => f64::NAN,
    };
    Ok((
        clean == cases && found <= -0.49,
        format!("{clean}/{cases} certified targets without violations, transpose against (id) violation {found:.3}"),
    ))
}

fn phi_complete_positivity(ctx: &mut Context) -> Result<(bool, String), CliError> {
    let cfg = &ctx.cfg;
    let cases = cfg.mode.pick(2, 5);
    let samples = cfg.mode.pick(30, 100);
    let mut rng = rng_for(cfg, 12);
    let seq = MapSequence::canonical(CanonicalClass::Decomposable, 2);
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for i in 0..cases {
        let target = decomposable_target(&mut rng, &seq, 1 + i % 3)?;
        let map = build_Phi(&target, &seq, 1e-10)?;
        for n in 1..=3 {
            let s = phi_cp_sampling(&map, n, samples / 3, -1e-8, cfg.seed ^ (i * 3 + n) as u64)?;
            worst = worst.min(s.min_margin);
            violations += s.violations;
        }
    }
    Ok((
        violations == 0,
        format!("{cases} targets, {violations} violations, min eigenvalue {worst:.1e}"),
    ))
}
