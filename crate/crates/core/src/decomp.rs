//! Conic feasibility `J(φ) = Σ_k P_k(X_k)`, `X_k ⪰ 0`, at the Choi level.
//!
//! The solver runs Dykstra's algorithm between the affine set of exact
//! decompositions and the product PSD cone. Outcomes are reported only after
//! independent verification: a certificate `(X_k)` or a separating witness
//! `W` with `⟨W, J(φ)⟩ < 0` and every `P_k*(W) ⪰ 0`. Anything else is
//! `Undetermined`.

use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{
    eigh, frobenius, hermitian_defect, identity, min_eigenvalue, psd_project_matrix, pseudoinverse,
    symmetrize, unvectorize, vectorize, ComplexMatrix, HermitianMatrix, C64,
};
use crate::sdpa::{SdpaEntry, SdpaProblem};
use crate::seq::{kernel_condition, KernelVerdict, MapSequence};
use crate::superop::{build_precomposition, compose, left_compose_choi, PrecompositionOperator, SuperOperator};

const GN_TRIGGER: f64 = 1e-1;
const LM_MAX_ITER: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityOptions {
    /// Eigenvalue tolerance for certificate blocks.
    pub psd_tol: f64,
    /// Residual tolerance relative to `max(1, ‖J(φ)‖_F)`.
    pub feas_rel_tol: f64,
    pub max_iter: usize,
    /// Iterations between stall checks, polishing and witness extraction.
    pub check_every: usize,
    pub stall_rel: f64,
    /// Required separation `⟨W, J(φ)⟩ ≤ −witness_gap`.
    pub witness_gap: f64,
    /// Allowed negativity of `λ_min(P_k*(W))`.
    pub dual_tol: f64,
    /// Absolute tolerance of the kernel pre-check.
    pub kernel_tol: f64,
}

impl Default for FeasibilityOptions {
    fn default() -> Self {
        FeasibilityOptions {
            psd_tol: 1e-8,
            feas_rel_tol: 1e-7,
            max_iter: 50_000,
            check_every: 500,
            stall_rel: 1e-12,
            witness_gap: 1e-6,
            dual_tol: 1e-9,
            kernel_tol: 1e-8,
        }
    }
}

impl FeasibilityOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("psd_tol", self.psd_tol),
            ("feas_rel_tol", self.feas_rel_tol),
            ("witness_gap", self.witness_gap),
            ("dual_tol", self.dual_tol),
            ("kernel_tol", self.kernel_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.stall_rel.is_finite() && self.stall_rel >= 0.0) {
            return Err(Error::InvalidArgument("stall_rel must be nonnegative".into()));
        }
        if self.check_every == 0 {
            return Err(Error::InvalidArgument("check_every must be positive".into()));
        }
        Ok(())
    }
}

/// Choi matrices `X_k` of the maps `ψ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionCertificate {
    pub choi: Vec<ComplexMatrix>,
    pub residual: f64,
}

impl DecompositionCertificate {
    /// The maps `ψ_k` themselves.
    pub fn maps(&self, d: usize, h: usize) -> Result<Vec<SuperOperator>> {
        self.choi
            .iter()
            .map(|x| SuperOperator::from_choi(d, h, x.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessSource {
    /// `W ⊥ range(Σ P_k)`: the kernel condition fails.
    Kernel,
    /// Extracted from the solver's best-approximation displacement.
    Separation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityWitness {
    /// Hermitian, normalized to `‖W‖_F = 1`.
    pub w: ComplexMatrix,
    /// `−⟨W, J(φ)⟩`.
    pub gap: f64,
    /// `λ_min(P_k*(W))` for each `k`.
    pub dual_margins: Vec<f64>,
    pub source: WitnessSource,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub reason: String,
    /// `‖x_affine − x_cone‖_F` at every check.
    pub distance_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Verdict {
    Feasible(DecompositionCertificate),
    Infeasible(InfeasibilityWitness),
    Undetermined(Diagnostics),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Feasible(_) => "feasible",
            Verdict::Infeasible(_) => "infeasible",
            Verdict::Undetermined(_) => "undetermined",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub verdict: Verdict,
    pub iterations: usize,
    pub final_distance: f64,
    pub kernel: KernelSummary,
    /// Tail bound of a truncated sequence: membership holds up to this slack.
    pub tail_slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSummary {
    pub holds: bool,
    pub kernel_dim: usize,
    pub max_violation: f64,
}

impl From<&KernelVerdict> for KernelSummary {
    fn from(k: &KernelVerdict) -> Self {
        KernelSummary {
            holds: k.holds,
            kernel_dim: k.kernel_dim,
            max_violation: k.max_violation,
        }
    }
}

/// Cone-side iterate of the solver, kept so callers can probe it.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub cone_point: Vec<ComplexMatrix>,
    pub iterations: usize,
    pub distance_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CertificateCheck {
    pub valid: bool,
    pub residual: f64,
    pub min_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct WitnessCheck {
    pub valid: bool,
    pub pairing: f64,
    pub dual_margins: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FeasibilityProblem {
    target: SuperOperator,
    seq: MapSequence,
    precomps: Vec<PrecompositionOperator>,
    options: FeasibilityOptions,
    /// Stacked operator `A = [P_1 … P_m]` on vectorized Choi matrices.
    stacked: ComplexMatrix,
    stacked_pinv: ComplexMatrix,
    rhs: DVector<C64>,
}

impl FeasibilityProblem {
    pub fn new(target: SuperOperator, seq: MapSequence, options: FeasibilityOptions) -> Result<Self> {
        options.validate()?;
        if target.input_dim() != seq.dim() {
            return Err(Error::DimensionMismatch(format!(
                "target acts on M_{}, sequence on M_{}",
                target.input_dim(),
                seq.dim()
            )));
        }
        if seq.is_empty() {
            return Err(Error::InvalidArgument("empty map sequence".into()));
        }
        if !target.is_star_map() {
            return Err(Error::NotStarMap {
                defect: target.star_defect(),
            });
        }
        let h = target.output_dim();
        let precomps: Vec<PrecompositionOperator> = seq
            .maps()
            .map(|m| build_precomposition(m, h))
            .collect::<Result<_>>()?;
        let n2 = (seq.dim() * h).pow(2);
        let mut stacked = ComplexMatrix::zeros(n2, n2 * precomps.len());
        for (k, p) in precomps.iter().enumerate() {
            stacked
                .view_mut((0, k * n2), (n2, n2))
                .copy_from(p.operator().matrix());
        }
        let stacked_pinv = pseudoinverse(&stacked, 1e-12);
        let rhs = DVector::from_vec(vectorize(target.choi()));
        Ok(FeasibilityProblem {
            target,
            seq,
            precomps,
            options,
            stacked,
            stacked_pinv,
            rhs,
        })
    }

    pub fn target(&self) -> &SuperOperator {
        &self.target
    }

    pub fn sequence(&self) -> &MapSequence {
        &self.seq
    }

    pub fn precomps(&self) -> &[PrecompositionOperator] {
        &self.precomps
    }

    pub fn options(&self) -> &FeasibilityOptions {
        &self.options
    }

    /// Side length `dh` of every Choi block.
    pub fn block_dim(&self) -> usize {
        self.seq.dim() * self.target.output_dim()
    }

    pub fn num_blocks(&self) -> usize {
        self.precomps.len()
    }

    pub fn feas_tol(&self) -> f64 {
        self.options.feas_rel_tol * frobenius(self.target.choi()).max(1.0)
    }

    fn stack(&self, blocks: &[ComplexMatrix]) -> DVector<C64> {
        let n2 = self.block_dim().pow(2);
        let mut v = DVector::zeros(n2 * blocks.len());
        for (k, b) in blocks.iter().enumerate() {
            v.rows_mut(k * n2, n2).copy_from_slice(&vectorize(b));
        }
        v
    }

    fn unstack(&self, v: &DVector<C64>) -> Vec<ComplexMatrix> {
        let n = self.block_dim();
        (0..self.num_blocks())
            .map(|k| unvectorize(&v.as_slice()[k * n * n..(k + 1) * n * n], n, n))
            .collect()
    }

    fn project_affine(&self, x: &DVector<C64>) -> DVector<C64> {
        let r = &self.stacked * x - &self.rhs;
        x - &self.stacked_pinv * r
    }

    /// `Σ_k P_k(X_k)`.
    pub fn image(&self, blocks: &[ComplexMatrix]) -> ComplexMatrix {
        let n = self.block_dim();
        let v = &self.stacked * self.stack(blocks);
        unvectorize(v.as_slice(), n, n)
    }

    /// `(P_k*(W))_k`.
    pub fn adjoint_images(&self, w: &ComplexMatrix) -> Vec<ComplexMatrix> {
        self.precomps.iter().map(|p| p.apply_adjoint(w)).collect()
    }

    /// Kernel witness `W = −Π_{range(A)⊥} J(φ)`, normalized, when `J(φ)` has a
    /// component outside the range of `Σ P_k`.
    pub fn kernel_witness_candidate(&self) -> Option<InfeasibilityWitness> {
        let proj = &self.stacked * (&self.stacked_pinv * &self.rhs);
        let perp = &self.rhs - proj;
        let norm = perp.norm();
        if norm <= self.options.witness_gap {
            return None;
        }
        let n = self.block_dim();
        let w = symmetrize(&unvectorize((-perp / C64::new(norm, 0.0)).as_slice(), n, n));
        Some(self.describe_witness(w, WitnessSource::Kernel))
    }

    fn describe_witness(&self, w: ComplexMatrix, source: WitnessSource) -> InfeasibilityWitness {
        let pairing = pairing(&w, self.target.choi());
        let dual_margins = self
            .adjoint_images(&w)
            .iter()
            .map(min_eigenvalue)
            .collect();
        InfeasibilityWitness {
            w,
            gap: -pairing,
            dual_margins,
            source,
        }
    }

    /// Separating candidate from a cone point `y`: `W ∝ −(AA*)⁺(J − Ay)`,
    /// repaired by adding a multiple of the identity when some `P_k*(W)`
    /// has a small negative eigenvalue. Unverified.
    pub fn witness_candidate(&self, cone_point: &[ComplexMatrix]) -> Option<InfeasibilityWitness> {
        let y = self.stack(cone_point);
        let r = &self.rhs - &self.stacked * y;
        // (AA*)⁺ = (A⁺)* A⁺.
        let w = -(self.stacked_pinv.adjoint() * (&self.stacked_pinv * r));
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        let n = self.block_dim();
        let mut w = symmetrize(&unvectorize(w.as_slice(), n, n).unscale(norm));

        let margins: Vec<f64> = self.adjoint_images(&w).iter().map(min_eigenvalue).collect();
        let worst = margins.iter().cloned().fold(f64::INFINITY, f64::min);
        if worst < 0.0 {
            // P_k*(I) ⪰ μ_k I with μ_k > 0 lets an identity shift absorb
            // the negative part.
            let id = identity(n);
            let mut shift: f64 = 0.0;
            for (k, img) in self.adjoint_images(&id).iter().enumerate() {
                let mu = min_eigenvalue(img);
                if margins[k] < 0.0 {
                    if mu <= 1e-12 {
                        return None;
                    }
                    shift = shift.max(-margins[k] / mu);
                }
            }
            let shift = shift * (1.0 + 1e-9) + 1e-15;
            for i in 0..n {
                w[(i, i)] += C64::new(shift, 0.0);
            }
            let norm = frobenius(&w);
            w = w.unscale(norm);
        }
        Some(self.describe_witness(w, WitnessSource::Separation))
    }

    /// Certificate candidates from a cone point: restrict every `X_k` to
    /// its dominant eigenspace at a few thresholds and solve for the
    /// least-norm correction that restores `Σ P_k(X_k) = J(φ)` exactly on
    /// that face. When the cone point is already close to the affine set,
    /// the best face is also refined by Gauss-Newton on `X_k = G_k G_k†`,
    /// which moves the face itself. Unverified.
    pub fn certificate_candidates(&self, cone_point: &[ComplexMatrix]) -> Vec<DecompositionCertificate> {
        let mut out = Vec::new();
        let eigs: Vec<_> = match cone_point.iter().map(eigh).collect::<Result<Vec<_>>>() {
            Ok(e) => e,
            Err(_) => return out,
        };
        let top = eigs
            .iter()
            .flat_map(|e| e.values.last().copied())
            .fold(0.0, f64::max);
        let n = self.block_dim();
        let scale = frobenius(self.target.choi()).max(1.0);
        let mut last_ranks: Option<Vec<usize>> = None;
        let mut best_face: Option<(f64, ())> = None;
        let mut gn_faces: Vec<Vec<ComplexMatrix>> = Vec::new();
        for rel in [1e-2, 1e-4, 1e-6, 1e-8] {
            let cut = rel * top;
            let factors: Vec<ComplexMatrix> = eigs
                .iter()
                .map(|e| {
                    let keep: Vec<usize> = (0..n).filter(|&i| e.values[i] > cut).collect();
                    ComplexMatrix::from_fn(n, keep.len(), |r, c| {
                        e.vectors[(r, keep[c])] * e.values[keep[c]].sqrt()
                    })
                })
                .collect();
            let ranks: Vec<usize> = factors.iter().map(|g| g.ncols()).collect();
            if last_ranks.as_ref() == Some(&ranks) {
                continue;
            }
            last_ranks = Some(ranks);
            let faces: Vec<ComplexMatrix> = factors
                .iter()
                .map(|g| {
                    let mut u = g.clone();
                    for mut col in u.column_iter_mut() {
                        let norm = col.norm();
                        col.unscale_mut(norm);
                    }
                    u
                })
                .collect();
            if let Some(c) = self.polish_on_face(cone_point, &faces) {
                if best_face.as_ref().is_none_or(|(r, _)| c.residual < *r) {
                    best_face = Some((c.residual, ()));
                }
                out.push(c);
            }
            gn_faces.push(factors);
        }
        let cone_residual = frobenius(&(self.image(cone_point) - self.target.choi()));
        if best_face.as_ref().is_some_and(|(res, _)| *res > 1e-13 * scale) && cone_residual <= GN_TRIGGER * scale {
            // Full-rank start with a floored spectrum so every column can move.
            let floor = 1e-4 * top;
            let full: Vec<ComplexMatrix> = eigs
                .iter()
                .map(|e| {
                    ComplexMatrix::from_fn(n, n, |r, c| e.vectors[(r, c)] * e.values[c].max(floor).sqrt())
                })
                .collect();
            gn_faces.push(full);
            for factors in gn_faces.into_iter().rev() {
                if let Some(c) = self.refine_factorized(factors) {
                    let done = c.residual <= 1e-12 * scale;
                    out.push(c);
                    if done {
                        break;
                    }
                }
            }
        }
        out
    }

    /// Levenberg-Marquardt on `Σ P_k(G_k G_k†) = J(φ)`,
    /// treating real and imaginary parts of `G_k` as real unknowns.
    fn refine_factorized(&self, mut g: Vec<ComplexMatrix>) -> Option<DecompositionCertificate> {
        let n = self.block_dim();
        let n2 = n * n;
        let params: usize = g.iter().map(|f| 2 * f.len()).sum();
        if params == 0 {
            return None;
        }
        let scale = frobenius(self.target.choi()).max(1.0);
        let residual_of = |g: &[ComplexMatrix]| -> ComplexMatrix {
            let x: Vec<ComplexMatrix> = g.iter().map(|f| f * f.adjoint()).collect();
            self.image(&x) - self.target.choi()
        };
        let mut f = residual_of(&g);
        let mut fnorm = frobenius(&f);
        let mut mu = 1e-6 * scale * scale;
        for _ in 0..LM_MAX_ITER {
            if fnorm <= 1e-14 * scale {
                break;
            }
            let mut jac = nalgebra::DMatrix::<f64>::zeros(2 * n2, params);
            let mut col = 0;
            for (k, gk) in g.iter().enumerate() {
                let pk = self.precomps[k].operator().matrix();
                for c in 0..gk.ncols() {
                    for i in 0..n {
                        for unit in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                            // δX = E G† + G E† with E = unit · e_i e_c†.
                            let mut dx = ComplexMatrix::zeros(n, n);
                            for j in 0..n {
                                dx[(i, j)] += unit * gk[(j, c)].conj();
                                dx[(j, i)] += gk[(j, c)] * unit.conj();
                            }
                            let img = pk * DVector::from_vec(vectorize(&dx));
                            for (r, z) in img.iter().enumerate() {
                                jac[(r, col)] = z.re;
                                jac[(n2 + r, col)] = z.im;
                            }
                            col += 1;
                        }
                    }
                }
            }
            let fv = vectorize(&f);
            let rhs = nalgebra::DVector::<f64>::from_fn(2 * n2, |r, _| {
                if r < n2 {
                    fv[r].re
                } else {
                    fv[r - n2].im
                }
            });
            // Levenberg-Marquardt in row space: step = Jᵀ (J Jᵀ + μ I)⁻¹ f.
            let gram = &jac * jac.transpose();
            let mut improved = false;
            for _ in 0..12 {
                let mut damped = gram.clone();
                for r in 0..damped.nrows() {
                    damped[(r, r)] += mu;
                }
                let Some(chol) = damped.cholesky() else {
                    mu *= 4.0;
                    continue;
                };
                let step = jac.transpose() * chol.solve(&rhs);
                let mut trial = g.clone();
                let mut idx = 0;
                for gk in trial.iter_mut() {
                    for c in 0..gk.ncols() {
                        for i in 0..n {
                            gk[(i, c)] -= C64::new(step[idx], step[idx + 1]);
                            idx += 2;
                        }
                    }
                }
                let tf = residual_of(&trial);
                let tn = frobenius(&tf);
                if tn < fnorm {
                    g = trial;
                    f = tf;
                    fnorm = tn;
                    mu = (mu / 3.0).max(1e-300);
                    improved = true;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        let choi: Vec<ComplexMatrix> = g.iter().map(|f| symmetrize(&(f * f.adjoint()))).collect();
        let residual = frobenius(&(self.image(&choi) - self.target.choi()));
        Some(DecompositionCertificate { choi, residual })
    }

    fn polish_on_face(&self, x: &[ComplexMatrix], faces: &[ComplexMatrix]) -> Option<DecompositionCertificate> {
        let n = self.block_dim();
        let n2 = n * n;
        let total: usize = faces.iter().map(|u| u.ncols().pow(2)).sum();
        // Compressed current point and the face operator B: (Y_k) ↦ Σ P_k(U_k Y_k U_k†).
        let mut compressed = Vec::with_capacity(faces.len());
        let mut b = ComplexMatrix::zeros(n2, total);
        let mut col = 0;
        for (k, u) in faces.iter().enumerate() {
            let r = u.ncols();
            let y0 = u.adjoint() * &x[k] * u;
            compressed.push(u * &y0 * u.adjoint());
            let pk = self.precomps[k].operator().matrix();
            for a in 0..r {
                for c in 0..r {
                    let e = u.column(a) * u.column(c).adjoint();
                    let v = pk * DVector::from_vec(vectorize(&e));
                    b.set_column(col, &v);
                    col += 1;
                }
            }
        }
        let r0 = &self.rhs - &self.stacked * self.stack(&compressed);
        let delta = pseudoinverse(&b, 1e-12) * r0;
        let mut blocks = Vec::with_capacity(faces.len());
        let mut offset = 0;
        for (k, u) in faces.iter().enumerate() {
            let r = u.ncols();
            let dy = unvectorize(&delta.as_slice()[offset..offset + r * r], r, r);
            offset += r * r;
            blocks.push(symmetrize(&(&compressed[k] + u * dy * u.adjoint())));
        }
        let mut cert = DecompositionCertificate {
            residual: frobenius(&(self.image(&blocks) - self.target.choi())),
            choi: blocks,
        };
        if cert.choi.iter().any(|x| min_eigenvalue(x) < -self.options.psd_tol) {
            // Clip and re-measure; verification decides.
            cert.choi = cert.choi.iter().map(psd_project_matrix).collect();
            cert.residual = frobenius(&(self.image(&cert.choi) - self.target.choi()));
        }
        Some(cert)
    }

    fn best_verified(&self, candidates: Vec<DecompositionCertificate>) -> Option<DecompositionCertificate> {
        candidates
            .into_iter()
            .filter_map(|c| {
                let check = verify_certificate(&c, self);
                check.valid.then(|| DecompositionCertificate {
                    residual: check.residual,
                    ..c
                })
            })
            .min_by(|a, b| a.residual.total_cmp(&b.residual))
    }

    /// The raw iterate or a face-polished version of it, whichever verifies
    /// with the smaller residual.
    fn tightest_certificate(
        &self,
        raw: DecompositionCertificate,
        cone: &[ComplexMatrix],
    ) -> Option<DecompositionCertificate> {
        let mut candidates = self.certificate_candidates(cone);
        candidates.push(raw);
        self.best_verified(candidates)
    }

    /// Runs the solver and returns the report with the final cone iterate.
    pub fn solve_with_state(&self) -> Result<(FeasibilityReport, SolverState)> {
        let kernel = kernel_condition(&self.seq, &self.target, self.options.kernel_tol)?;
        let kernel_summary = KernelSummary::from(&kernel);
        let report = |verdict, iterations, final_distance| FeasibilityReport {
            verdict,
            iterations,
            final_distance,
            kernel: kernel_summary,
            tail_slack: self.seq.tail_bound(),
        };
        let n = self.block_dim();
        let zero_state = || SolverState {
            cone_point: vec![ComplexMatrix::zeros(n, n); self.num_blocks()],
            iterations: 0,
            distance_trace: Vec::new(),
        };

        if let Some(w) = self.kernel_witness_candidate() {
            if verify_witness(&w.w, self).valid {
                return Ok((report(Verdict::Infeasible(w), 0, f64::NAN), zero_state()));
            }
        }

        let opts = &self.options;
        let feas_tol = self.feas_tol();
        let mut x = &self.stacked_pinv * &self.rhs;
        let mut incr = DVector::<C64>::zeros(x.len());
        let mut trace = Vec::new();
        let mut last_check = f64::INFINITY;
        let mut cone = self.unstack(&x);
        let mut dist = f64::INFINITY;

        for it in 1..=opts.max_iter {
            let z = &x + &incr;
            cone = self.unstack(&z).iter().map(psd_project_matrix).collect();
            let y = self.stack(&cone);
            incr = z - &y;
            x = self.project_affine(&y);
            dist = (&x - &y).norm();

            let residual = (&self.rhs - &self.stacked * &y).norm();
            if residual <= feas_tol {
                let raw = DecompositionCertificate {
                    choi: cone.clone(),
                    residual,
                };
                if let Some(cert) = self.tightest_certificate(raw, &cone) {
                    let state = SolverState {
                        cone_point: cone,
                        iterations: it,
                        distance_trace: trace,
                    };
                    return Ok((report(Verdict::Feasible(cert), it, dist), state));
                }
            }

            if it % opts.check_every == 0 || it == 1 {
                trace.push(dist);
                let candidates = self.certificate_candidates(&cone);
                if let Some(cert) = self.best_verified(candidates) {
                    let state = SolverState {
                        cone_point: cone,
                        iterations: it,
                        distance_trace: trace,
                    };
                    return Ok((report(Verdict::Feasible(cert), it, dist), state));
                }
                if let Some(w) = self.witness_candidate(&cone) {
                    if verify_witness(&w.w, self).valid {
                        let state = SolverState {
                            cone_point: cone,
                            iterations: it,
                            distance_trace: trace,
                        };
                        return Ok((report(Verdict::Infeasible(w), it, dist), state));
                    }
                }
                if it > 1 {
                    if last_check - dist < opts.stall_rel * last_check {
                        let diag = Diagnostics {
                            reason: format!("stalled at distance {dist:.3e} after {it} iterations"),
                            distance_trace: trace.clone(),
                        };
                        let state = SolverState {
                            cone_point: cone,
                            iterations: it,
                            distance_trace: trace,
                        };
                        return Ok((report(Verdict::Undetermined(diag), it, dist), state));
                    }
                    last_check = dist;
                }
            }
        }
        trace.push(dist);
        let diag = Diagnostics {
            reason: format!(
                "iteration budget of {} exhausted at distance {dist:.3e}",
                opts.max_iter
            ),
            distance_trace: trace.clone(),
        };
        let state = SolverState {
            cone_point: cone,
            iterations: opts.max_iter,
            distance_trace: trace,
        };
        Ok((report(Verdict::Undetermined(diag), opts.max_iter, dist), state))
    }
}

fn pairing(w: &ComplexMatrix, j: &ComplexMatrix) -> f64 {
    w.iter().zip(j.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

pub fn feasibility(prob: &FeasibilityProblem) -> Result<FeasibilityReport> {
    Ok(prob.solve_with_state()?.0)
}

/// `Σ_k J(ψ_k∘φ_k) − J(φ)`, with `ψ_k` rebuilt from `X_k` and composed
/// directly; no precomposition operator is involved.
pub fn certificate_residual(choi: &[ComplexMatrix], seq: &MapSequence, target: &SuperOperator) -> Result<f64> {
    if choi.len() != seq.len() {
        return Err(Error::DimensionMismatch(format!(
            "certificate has {} blocks, sequence has {} entries",
            choi.len(),
            seq.len()
        )));
    }
    let (d, h) = (target.input_dim(), target.output_dim());
    let mut total = -target.choi().clone();
    for (x, phi_k) in choi.iter().zip(seq.maps()) {
        if x.shape() != (d * h, d * h) {
            return Err(Error::DimensionMismatch(format!(
                "certificate block has shape {:?}, expected ({n}, {n})",
                x.shape(),
                n = d * h
            )));
        }
        let psi = SuperOperator::from_choi(d, h, x.clone())?;
        total += compose(&psi, phi_k)?.choi();
    }
    Ok(frobenius(&total))
}

/// Re-checks both certificate invariants from scratch with the problem's
/// tolerances.
pub fn verify_certificate(cert: &DecompositionCertificate, prob: &FeasibilityProblem) -> CertificateCheck {
    let invalid = CertificateCheck {
        valid: false,
        residual: f64::INFINITY,
        min_eigenvalues: Vec::new(),
    };
    let n = prob.block_dim();
    if cert.choi.len() != prob.num_blocks() || cert.choi.iter().any(|x| x.shape() != (n, n)) {
        return invalid;
    }
    if cert.choi.iter().any(|x| {
        hermitian_defect(x) > 1e-10 * frobenius(x).max(1.0) || x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
    }) {
        return invalid;
    }
    let Ok(residual) = certificate_residual(&cert.choi, &prob.seq, &prob.target) else {
        return invalid;
    };
    let min_eigenvalues: Vec<f64> = cert.choi.iter().map(min_eigenvalue).collect();
    let valid = residual <= prob.feas_tol()
        && min_eigenvalues.iter().all(|&l| l >= -prob.options.psd_tol);
    CertificateCheck {
        valid,
        residual,
        min_eigenvalues,
    }
}

/// Checks `⟨W, J(φ)⟩ ≤ −witness_gap` and `λ_min(P_k*(W)) ≥ −dual_tol`.
pub fn verify_witness(w: &ComplexMatrix, prob: &FeasibilityProblem) -> WitnessCheck {
    let n = prob.block_dim();
    if w.shape() != (n, n) || HermitianMatrix::new(w.clone()).is_err() {
        return WitnessCheck {
            valid: false,
            pairing: f64::NAN,
            dual_margins: Vec::new(),
        };
    }
    let w = symmetrize(w);
    let pairing = pairing(&w, prob.target.choi());
    let dual_margins: Vec<f64> = prob.adjoint_images(&w).iter().map(min_eigenvalue).collect();
    let valid = pairing <= -prob.options.witness_gap
        && dual_margins.iter().all(|&m| m >= -prob.options.dual_tol);
    WitnessCheck {
        valid,
        pairing,
        dual_margins,
    }
}

/// `X_k = λ1·X_k^A + λ2·X_k^B`, a certificate for `λ1·φ_A + λ2·φ_B`.
pub fn conic_combine(
    a: &DecompositionCertificate,
    b: &DecompositionCertificate,
    l1: f64,
    l2: f64,
) -> Result<DecompositionCertificate> {
    if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "conic weights must be positive, got {l1} and {l2}"
        )));
    }
    if a.choi.len() != b.choi.len() || a.choi.iter().zip(&b.choi).any(|(x, y)| x.shape() != y.shape()) {
        return Err(Error::DimensionMismatch("certificates have different shapes".into()));
    }
    Ok(DecompositionCertificate {
        choi: a
            .choi
            .iter()
            .zip(&b.choi)
            .map(|(x, y)| x * C64::new(l1, 0.0) + y * C64::new(l2, 0.0))
            .collect(),
        residual: l1 * a.residual + l2 * b.residual,
    })
}

/// Certificate for `ψ∘φ` from one for `φ`: `X_k' = (id_d ⊗ ψ)(X_k)`.
pub fn left_compose(
    cert: &DecompositionCertificate,
    prob: &FeasibilityProblem,
    psi: &SuperOperator,
) -> Result<DecompositionCertificate> {
    let verdict = psi.is_cp(prob.options.psd_tol)?;
    if !verdict.holds {
        return Err(Error::NotCompletelyPositive {
            margin: verdict.margin,
        });
    }
    if psi.input_dim() != prob.target.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "ψ acts on M_{}, target maps into M_{}",
            psi.input_dim(),
            prob.target.output_dim()
        )));
    }
    let d = prob.seq.dim();
    let choi: Vec<ComplexMatrix> = cert
        .choi
        .iter()
        .map(|x| left_compose_choi(psi, x, d))
        .collect::<Result<_>>()?;
    let target = compose(psi, &prob.target)?;
    let residual = certificate_residual(&choi, &prob.seq, &target)?;
    Ok(DecompositionCertificate { choi, residual })
}

#[derive(Debug, Clone)]
pub struct ClosednessVerdict {
    pub approximants_feasible: Vec<bool>,
    pub limit: &'static str,
    /// Limit feasible or undetermined, never a verified witness.
    pub passes: bool,
}

/// Norm-limit surrogate for closedness: every approximant must be feasible
/// and the limit must not be separated by a verified witness.
pub fn closedness_probe(prob: &FeasibilityProblem, approximants: &[SuperOperator]) -> Result<ClosednessVerdict> {
    let mut approximants_feasible = Vec::with_capacity(approximants.len());
    for phi in approximants {
        let p = FeasibilityProblem::new(phi.clone(), prob.seq.clone(), prob.options.clone())?;
        approximants_feasible.push(matches!(feasibility(&p)?.verdict, Verdict::Feasible(_)));
    }
    let limit = feasibility(prob)?.verdict;
    Ok(ClosednessVerdict {
        passes: !matches!(limit, Verdict::Infeasible(_)),
        limit: limit.label(),
        approximants_feasible,
    })
}

/// Orthonormal basis of the real space of Hermitian `n x n` matrices:
/// `E_aa`, `(E_ab + E_ba)/√2`, `i(E_ab − E_ba)/√2` for `a < b`.
pub fn hermitian_basis(n: usize) -> Vec<ComplexMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in a..n {
            if a == b {
                let mut e = ComplexMatrix::zeros(n, n);
                e[(a, a)] = C64::new(1.0, 0.0);
                out.push(e);
            } else {
                let mut sym = ComplexMatrix::zeros(n, n);
                sym[(a, b)] = C64::new(s, 0.0);
                sym[(b, a)] = C64::new(s, 0.0);
                out.push(sym);
                let mut anti = ComplexMatrix::zeros(n, n);
                anti[(a, b)] = C64::new(0.0, -s);
                anti[(b, a)] = C64::new(0.0, s);
                out.push(anti);
            }
        }
    }
    out
}

/// Real symmetric embedding `Z ↦ [[Re Z, −Im Z], [Im Z, Re Z]]`.
pub fn real_embedding(z: &ComplexMatrix) -> nalgebra::DMatrix<f64> {
    let (r, c) = z.shape();
    nalgebra::DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let v = z[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

/// Real SDP equivalent to the feasibility problem: one `2dh` PSD block per
/// `X_k`, and for every basis element `B_q` the constraint
/// `Σ_k F_qk • Y_k = ⟨B_q, J(φ)⟩` with `F_qk = ½·emb(P_k*(B_q))`.
pub fn to_sdpa(prob: &FeasibilityProblem) -> SdpaProblem {
    let n = prob.block_dim();
    let basis = hermitian_basis(n);
    let mut entries = Vec::new();
    let mut rhs = Vec::with_capacity(basis.len());
    for (q, b) in basis.iter().enumerate() {
        rhs.push(pairing(b, prob.target.choi()));
        for (k, p) in prob.precomps.iter().enumerate() {
            let f = real_embedding(&symmetrize(&p.apply_adjoint(b)));
            for i in 0..2 * n {
                for j in i..2 * n {
                    let v = 0.5 * f[(i, j)];
                    if v != 0.0 {
                        entries.push(SdpaEntry {
                            matrix: q + 1,
                            block: k + 1,
                            i: i + 1,
                            j: j + 1,
                            value: v,
                        });
                    }
                }
            }
        }
    }
    let mut out = SdpaProblem {
        num_constraints: basis.len(),
        block_sizes: vec![2 * n as i64; prob.num_blocks()],
        rhs,
        entries,
    };
    out.sort_entries();
    out
}

pub fn export_sdpa(prob: &FeasibilityProblem, path: &Path) -> Result<()> {
    let comment = format!(
        "decomposition feasibility: d={} h={} blocks={}\nfind Y_k >= 0 with sum_k F_qk . Y_k = c_q",
        prob.seq.dim(),
        prob.target.output_dim(),
        prob.num_blocks()
    );
    std::fs::write(path, to_sdpa(prob).to_text(Some(&comment)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, random, seeded_rng, BlockMatrix, TransposeSide};
    use crate::seq::CanonicalClass;

    fn swap(d: usize) -> ComplexMatrix {
        let mut s = ComplexMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                s[(i * d + j, j * d + i)] = c64(1.0, 0.0);
            }
        }
        s
    }

    fn id_t(d: usize) -> MapSequence {
        MapSequence::canonical(CanonicalClass::Decomposable, d)
    }

    fn problem(target: SuperOperator, seq: MapSequence) -> FeasibilityProblem {
        FeasibilityProblem::new(target, seq, FeasibilityOptions::default()).unwrap()
    }

    #[test]
    fn identity_is_its_own_certificate() {
        let prob = problem(SuperOperator::identity(2), MapSequence::canonical(CanonicalClass::Cp, 2));
        let report = feasibility(&prob).unwrap();
        let Verdict::Feasible(cert) = report.verdict else { panic!("{:?}", report.verdict) };
        assert!(frobenius(&(&cert.choi[0] - SuperOperator::identity(2).choi())) < 1e-12);
        assert!(report.kernel.holds);
    }

    #[test]
    fn transpose_decomposes_through_the_transpose() {
        let prob = problem(SuperOperator::transpose(2), id_t(2));
        let report = feasibility(&prob).unwrap();
        let Verdict::Feasible(cert) = report.verdict else { panic!("{:?}", report.verdict) };
        assert!(cert.residual <= 1e-7);
        // Oracle: X_2 = partial transpose of SWAP = 2|Ω⟩⟨Ω| (unnormalized Ω).
        let x2 = BlockMatrix::from_flat(2, 2, swap(2))
            .unwrap()
            .partial_transpose(TransposeSide::Inner)
            .into_flat();
        assert!(min_eigenvalue(&x2) >= -1e-14);
        assert!(frobenius(&cert.choi[0]) < 1e-6, "X_1 = {}", cert.choi[0]);
        assert!(frobenius(&(&cert.choi[1] - &x2)) < 1e-6);
    }

    #[test]
    fn choi_map_is_separated() {
        let prob = problem(SuperOperator::choi_type_map(2.0, 0.0, 1.0), id_t(3));
        let report = feasibility(&prob).unwrap();
        let Verdict::Infeasible(w) = report.verdict else { panic!("{:?}", report.verdict) };
        let check = verify_witness(&w.w, &prob);
        assert!(check.valid);
        assert!(check.pairing <= -1e-6);
        assert!(check.dual_margins.iter().all(|&m| m >= -1e-9));
        assert_eq!(w.source, WitnessSource::Separation);
    }

    #[test]
    fn negative_identity_is_separated() {
        let prob = problem(SuperOperator::identity(2).scale(-1.0), MapSequence::canonical(CanonicalClass::Cp, 2));
        let Verdict::Infeasible(w) = feasibility(&prob).unwrap().verdict else { panic!() };
        assert!(verify_witness(&w.w, &prob).valid);
    }

    #[test]
    fn kernel_failure_gives_kernel_witness() {
        // Pinching onto the diagonal kills off-diagonal units; the identity does not.
        let pinch = SuperOperator::from_fn(2, 2, |a| {
            let mut out = ComplexMatrix::zeros(2, 2);
            out[(0, 0)] = a[(0, 0)];
            out[(1, 1)] = a[(1, 1)];
            out
        })
        .unwrap();
        let prob = problem(SuperOperator::identity(2), MapSequence::finite(vec![pinch]).unwrap());
        let report = feasibility(&prob).unwrap();
        assert!(!report.kernel.holds);
        let Verdict::Infeasible(w) = report.verdict else { panic!() };
        assert_eq!(w.source, WitnessSource::Kernel);
        assert!(w.dual_margins.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn certificate_perturbation_fails_verification() {
        let prob = problem(SuperOperator::identity(2), MapSequence::canonical(CanonicalClass::Cp, 2));
        let Verdict::Feasible(mut cert) = feasibility(&prob).unwrap().verdict else { panic!() };
        assert!(verify_certificate(&cert, &prob).valid);
        let e = eigh(&cert.choi[0]).unwrap();
        let v = e.vectors.column(0).into_owned();
        cert.choi[0] -= (&v * v.adjoint()) * c64(1e-3 - e.values[0], 0.0);
        assert!(!verify_certificate(&cert, &prob).valid);
    }

    #[test]
    fn hand_built_decomposable_certificate_verifies() {
        let mut rng = seeded_rng(11);
        let a = SuperOperator::random_cp(&mut rng, 2, 3, 2);
        let b = SuperOperator::random_cp(&mut rng, 2, 3, 3);
        let target = a.add(&compose(&b, &SuperOperator::transpose(2)).unwrap()).unwrap();
        let prob = problem(target, id_t(2));
        let cert = DecompositionCertificate {
            choi: vec![a.choi().clone(), b.choi().clone()],
            residual: 0.0,
        };
        let check = verify_certificate(&cert, &prob);
        assert!(check.valid, "{check:?}");
        assert!(check.residual < 1e-12);
    }

    #[test]
    fn feasible_psd_target_does_not_separate_itself() {
        let prob = problem(SuperOperator::identity(2), MapSequence::canonical(CanonicalClass::Cp, 2));
        let w = prob.target().choi().clone();
        let check = verify_witness(&w, &prob);
        assert!(!check.valid);
        assert!(check.pairing > 0.0);
    }

    #[test]
    fn swap_negative_part_separates_transpose_from_cp() {
        // P*(W) = W for the identity sequence; W = −Π_− is PSD-negated,
        // so the dual margin is the bottom eigenvalue of W itself.
        let prob = problem(SuperOperator::transpose(2), MapSequence::canonical(CanonicalClass::Cp, 2));
        let e = eigh(&swap(2)).unwrap();
        let v = e.vectors.column(0).into_owned();
        assert!((e.values[0] + 1.0).abs() < 1e-12);
        let w = -(&v * v.adjoint());
        let check = verify_witness(&w, &prob);
        assert!((check.pairing - 1.0).abs() < 1e-12, "pairing {}", check.pairing);
        assert!(!check.valid);
        let flipped = verify_witness(&(-w), &prob);
        assert!((flipped.pairing + 1.0).abs() < 1e-12);
        assert!(flipped.valid);
        assert!(flipped.dual_margins[0].abs() < 1e-12);
    }

    #[test]
    fn conic_combination_and_left_composition() {
        let mut rng = seeded_rng(12);
        let seq = id_t(2);
        let make = |rng: &mut _| {
            let a = SuperOperator::random_cp(rng, 2, 2, 2);
            let b = SuperOperator::random_cp(rng, 2, 2, 2);
            let t = a.add(&compose(&b, &SuperOperator::transpose(2)).unwrap()).unwrap();
            (t, DecompositionCertificate { choi: vec![a.choi().clone(), b.choi().clone()], residual: 0.0 })
        };
        let (ta, ca) = make(&mut rng);
        let (tb, cb) = make(&mut rng);
        let comb = conic_combine(&ca, &cb, 0.3, 1.7).unwrap();
        let target = ta.scale(0.3).add(&tb.scale(1.7)).unwrap();
        assert!(verify_certificate(&comb, &problem(target, seq.clone())).valid);
        assert!(conic_combine(&ca, &cb, 0.0, 1.0).is_err());

        let prob = problem(ta.clone(), seq.clone());
        let v = random::isometry(&mut rng, 3, 2);
        let psi = SuperOperator::conjugation(&v);
        let lc = left_compose(&ca, &prob, &psi).unwrap();
        let direct = SuperOperator::from_fn(2, 3, |a| &v * ta.apply(a) * v.adjoint()).unwrap();
        assert!(verify_certificate(&lc, &problem(direct, seq.clone())).valid);
        let not_cp = SuperOperator::transpose(2);
        assert!(matches!(left_compose(&ca, &prob, &not_cp), Err(Error::NotCompletelyPositive { .. })));
    }

    #[test]
    fn closedness_under_scaling() {
        let prob = problem(SuperOperator::transpose(2), id_t(2));
        let approx: Vec<_> = (1..4).map(|j| SuperOperator::transpose(2).scale(1.0 + 1.0 / j as f64)).collect();
        let v = closedness_probe(&prob, &approx).unwrap();
        assert!(v.passes);
        assert!(v.approximants_feasible.iter().all(|&f| f));
        assert_eq!(v.limit, "feasible");
    }

    #[test]
    fn real_embedding_doubles_spectrum() {
        let mut rng = seeded_rng(13);
        let h = random::hermitian(&mut rng, 4);
        let mut ev: Vec<f64> = eigh(&h).unwrap().values.iter().flat_map(|&l| [l, l]).collect();
        let mut emb: Vec<f64> = real_embedding(&h).symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        emb.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&emb) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn sdpa_export_round_trips() {
        let prob = problem(SuperOperator::identity(2), MapSequence::canonical(CanonicalClass::Cp, 2));
        let sdp = to_sdpa(&prob);
        assert_eq!(sdp.num_constraints, 16);
        assert_eq!(sdp.block_sizes, vec![8]);
        let parsed = SdpaProblem::parse(&sdp.to_text(Some("x"))).unwrap();
        assert_eq!(parsed, sdp);

        // The real problem is satisfied by the embedded certificate.
        let y = real_embedding(prob.target().choi());
        for q in 0..sdp.num_constraints {
            let mut lhs = 0.0;
            for e in sdp.entries.iter().filter(|e| e.matrix == q + 1) {
                let w = if e.i == e.j { 1.0 } else { 2.0 };
                lhs += w * e.value * y[(e.i - 1, e.j - 1)];
            }
            assert!((lhs - sdp.rhs[q]).abs() < 1e-12, "constraint {q}: {lhs} vs {}", sdp.rhs[q]);
        }
    }

    #[test]
    fn rejects_bad_problems() {
        let seq = id_t(2);
        assert!(matches!(
            FeasibilityProblem::new(SuperOperator::identity(3), seq.clone(), FeasibilityOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
        let opts = FeasibilityOptions { psd_tol: -1.0, ..Default::default() };
        assert!(FeasibilityProblem::new(SuperOperator::identity(2), seq, opts).is_err());
    }
}
