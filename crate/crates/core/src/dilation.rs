//! Dilations built from decompositions: Stinespring data for each `ψ_k`, the
//! block dilation `φ(a) = V†ρ(a)V`, the maps `ξ`, `η`, `Φ` used to relate
//! decompositions to completely positive maps on `ξ(M_d)`, and the unitized
//! extension of a CP map on an embedded non-unital subalgebra.

use rand::Rng;

use crate::decomp::{verify_certificate, DecompositionCertificate, FeasibilityProblem};
use crate::error::{Error, Result};
use crate::gamma::{blockwise, gamma_sample, MEMBERSHIP_TOL};
use crate::linalg::{
    frobenius, identity, kron, min_eigenvalue, operator_norm, pseudoinverse, random, seeded_rng,
    symmetrize, unvectorize, vectorize, BlockMatrix, ComplexMatrix, HermitianMatrix, C64,
};
use crate::seq::{kernel_condition, MapSequence};
use crate::superop::SuperOperator;

/// Kraus operators keep eigenvalues of `J(ψ)` above this fraction of the largest.
pub const KRAUS_CUTOFF: f64 = 1e-10;

/// `ψ(a) = V† (a ⊗ I_r) V` with `V: ℂ^h → ℂ^d ⊗ ℂ^r`.
#[derive(Debug, Clone)]
pub struct StinespringData {
    d: usize,
    h: usize,
    kraus: Vec<ComplexMatrix>,
    v: ComplexMatrix,
}

impl StinespringData {
    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.h
    }

    /// Kraus rank `r`.
    pub fn rank(&self) -> usize {
        self.kraus.len()
    }

    /// `dim K = d·r`.
    pub fn k_dim(&self) -> usize {
        self.d * self.rank()
    }

    /// `h x d` operators with `ψ(a) = Σ K a K†`.
    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn v(&self) -> &ComplexMatrix {
        &self.v
    }

    /// `π(a) = a ⊗ I_r`.
    pub fn pi(&self, a: &ComplexMatrix) -> ComplexMatrix {
        kron(a, &identity(self.rank()))
    }

    pub fn reconstruct(&self, a: &ComplexMatrix) -> ComplexMatrix {
        self.v.adjoint() * self.pi(a) * &self.v
    }

    /// Largest `‖ψ(E_ij) − V†π(E_ij)V‖_F` over matrix units.
    pub fn reconstruction_error(&self, psi: &SuperOperator) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                let e = crate::linalg::matrix_unit(self.d, i, j);
                worst = worst.max(frobenius(&(psi.apply(&e) - self.reconstruct(&e))));
            }
        }
        worst
    }
}

/// Kraus decomposition of a Choi matrix; eigenvalues at or below the cutoff
/// (including small negative ones) are dropped.
fn stinespring_from_choi(d: usize, h: usize, choi: &ComplexMatrix) -> StinespringData {
    let e = HermitianMatrix::new_unchecked(symmetrize(choi)).eigh();
    let top = e.values.last().copied().unwrap_or(0.0);
    let mut kraus = Vec::new();
    for (col, &lam) in e.values.iter().enumerate() {
        if lam <= KRAUS_CUTOFF * top || lam <= 0.0 {
            continue;
        }
        let s = lam.sqrt();
        kraus.push(ComplexMatrix::from_fn(h, d, |a, i| e.vectors[(i * h + a, col)] * s));
    }
    let r = kraus.len();
    // V h = Σ_l (K_l† h) ⊗ e_l, index (i, l) ↦ i·r + l.
    let v = ComplexMatrix::from_fn(d * r, h, |row, c| {
        let (i, l) = (row / r, row % r);
        kraus[l][(c, i)].conj()
    });
    StinespringData { d, h, kraus, v }
}

pub fn stinespring(psi: &SuperOperator, tol: f64) -> Result<StinespringData> {
    let verdict = psi.is_cp(tol)?;
    if !verdict.holds {
        return Err(Error::NotCompletelyPositive {
            margin: verdict.margin,
        });
    }
    Ok(stinespring_from_choi(psi.input_dim(), psi.output_dim(), psi.choi()))
}

/// `K = ⊕_k K_k`, `V = Σ_k V_k`, `ρ(a) = ⊕_k π_k(φ_k(a))`.
#[derive(Debug, Clone)]
pub struct BlockDilation {
    parts: Vec<StinespringData>,
    seq: MapSequence,
    offsets: Vec<usize>,
    v: ComplexMatrix,
}

impl BlockDilation {
    pub fn parts(&self) -> &[StinespringData] {
        &self.parts
    }

    pub fn v(&self) -> &ComplexMatrix {
        &self.v
    }

    pub fn k_dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Orthogonal projection onto the `k`-th summand.
    pub fn projection(&self, k: usize) -> ComplexMatrix {
        let n = self.k_dim();
        let mut p = ComplexMatrix::zeros(n, n);
        for i in self.offsets[k]..self.offsets[k + 1] {
            p[(i, i)] = C64::new(1.0, 0.0);
        }
        p
    }

    pub fn rho(&self, a: &ComplexMatrix) -> ComplexMatrix {
        let n = self.k_dim();
        let mut out = ComplexMatrix::zeros(n, n);
        for (k, (part, phi_k)) in self.parts.iter().zip(self.seq.maps()).enumerate() {
            let size = self.offsets[k + 1] - self.offsets[k];
            if size > 0 {
                out.view_mut((self.offsets[k], self.offsets[k]), (size, size))
                    .copy_from(&part.pi(&phi_k.apply(a)));
            }
        }
        out
    }

    pub fn reconstruct(&self, a: &ComplexMatrix) -> ComplexMatrix {
        self.v.adjoint() * self.rho(a) * &self.v
    }

    /// Largest `‖φ(a) − V†ρ(a)V‖_F` over `samples` Ginibre inputs.
    pub fn reconstruction_residual(&self, phi: &SuperOperator, samples: usize, seed: u64) -> f64 {
        let mut rng = seeded_rng(seed);
        let d = phi.input_dim();
        (0..samples)
            .map(|_| {
                let a = random::ginibre(&mut rng, d, d);
                frobenius(&(phi.apply(&a) - self.reconstruct(&a)))
            })
            .fold(0.0, f64::max)
    }

    /// Largest `‖ρ(a†) − ρ(a)†‖_F` over `samples` Ginibre inputs.
    pub fn star_defect(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = seeded_rng(seed);
        let d = self.seq.dim();
        (0..samples)
            .map(|_| {
                let a = random::ginibre(&mut rng, d, d);
                frobenius(&(self.rho(&a.adjoint()) - self.rho(&a).adjoint()))
            })
            .fold(0.0, f64::max)
    }
}

/// Assembles the block dilation of a verified certificate.
pub fn block_dilation(cert: &DecompositionCertificate, prob: &FeasibilityProblem) -> Result<BlockDilation> {
    let check = verify_certificate(cert, prob);
    if !check.valid {
        return Err(Error::UnverifiedCertificate(format!(
            "residual {:.3e}, smallest eigenvalues {:?}",
            check.residual, check.min_eigenvalues
        )));
    }
    let (d, h) = (prob.sequence().dim(), prob.target().output_dim());
    let parts: Vec<StinespringData> = cert
        .choi
        .iter()
        .map(|x| stinespring_from_choi(d, h, x))
        .collect();
    let mut offsets = vec![0];
    for p in &parts {
        offsets.push(offsets.last().unwrap() + p.k_dim());
    }
    let mut v = ComplexMatrix::zeros(*offsets.last().unwrap(), h);
    for (k, p) in parts.iter().enumerate() {
        if p.k_dim() > 0 {
            v.view_mut((offsets[k], 0), (p.k_dim(), h)).copy_from(p.v());
        }
    }
    Ok(BlockDilation {
        parts,
        seq: prob.sequence().clone(),
        offsets,
        v,
    })
}

/// `η`: `M_n(⊕_k M_d) → ⊕_k M_n(M_d)`, `E_ij ⊗ diag{a_k} ↦ diag{E_ij ⊗ a_k}`.
///
/// The input is an `n m d` square matrix whose `(i, j)` blocks are
/// block-diagonal with `m` blocks of size `d`; off-diagonal entries of those
/// blocks must vanish.
pub fn eta_reshuffle(x: &ComplexMatrix, n: usize, m: usize, d: usize) -> Result<Vec<ComplexMatrix>> {
    let size = n * m * d;
    if x.shape() != (size, size) {
        return Err(Error::DimensionMismatch(format!(
            "expected {size}x{size} for n={n}, m={m}, d={d}, got {:?}",
            x.shape()
        )));
    }
    let scale = frobenius(x).max(1.0);
    for r in 0..size {
        for c in 0..size {
            let (kr, kc) = ((r % (m * d)) / d, (c % (m * d)) / d);
            if kr != kc && x[(r, c)].norm() > 1e-12 * scale {
                return Err(Error::Malformed(format!(
                    "entry ({r}, {c}) couples summands {kr} and {kc}"
                )));
            }
        }
    }
    Ok((0..m)
        .map(|k| {
            ComplexMatrix::from_fn(n * d, n * d, |r, c| {
                let (i, a) = (r / d, r % d);
                let (j, b) = (c / d, c % d);
                x[(i * m * d + k * d + a, j * m * d + k * d + b)]
            })
        })
        .collect())
}

/// Inverse of [`eta_reshuffle`].
pub fn eta_inverse(parts: &[ComplexMatrix], n: usize, d: usize) -> Result<ComplexMatrix> {
    let m = parts.len();
    if parts.iter().any(|p| p.shape() != (n * d, n * d)) {
        return Err(Error::DimensionMismatch("summands must be nd x nd".into()));
    }
    let size = n * m * d;
    let mut out = ComplexMatrix::zeros(size, size);
    for (k, p) in parts.iter().enumerate() {
        for r in 0..n * d {
            for c in 0..n * d {
                let (i, a) = (r / d, r % d);
                let (j, b) = (c / d, c % d);
                out[(i * m * d + k * d + a, j * m * d + k * d + b)] = p[(r, c)];
            }
        }
    }
    Ok(out)
}

/// `[ξ(a_ij)]` for `A = [a_ij] ∈ M_n(M_d)`, laid out as an element of
/// `M_n(⊕_k M_d)`.
pub fn xi_blocks(a: &BlockMatrix, seq: &MapSequence) -> Result<ComplexMatrix> {
    let parts: Vec<ComplexMatrix> = seq
        .maps()
        .map(|phi| blockwise(phi, a).map(BlockMatrix::into_flat))
        .collect::<Result<_>>()?;
    eta_inverse(&parts, a.outer(), a.block_size())
}

/// `Φ` on `span ξ(M_d)` with `φ = Φ∘ξ`, through least-squares preimages.
#[derive(Debug, Clone)]
pub struct PhiMap {
    target: SuperOperator,
    seq: MapSequence,
    stacked_pinv: ComplexMatrix,
    kernel_defect: f64,
}

impl PhiMap {
    /// Least-squares `a` with `ξ(a) ≈ x`, for `x = (x_1, …, x_m)`.
    pub fn preimage(&self, x: &[ComplexMatrix]) -> Result<ComplexMatrix> {
        let d = self.seq.dim();
        if x.len() != self.seq.len() || x.iter().any(|b| b.shape() != (d, d)) {
            return Err(Error::DimensionMismatch(format!(
                "expected {} diagonal blocks of size {d}",
                self.seq.len()
            )));
        }
        let stacked: Vec<C64> = x.iter().flat_map(vectorize).collect();
        let v = &self.stacked_pinv * ComplexMatrix::from_vec(stacked.len(), 1, stacked);
        Ok(unvectorize(v.as_slice(), d, d))
    }

    pub fn apply(&self, x: &[ComplexMatrix]) -> Result<ComplexMatrix> {
        Ok(self.target.apply(&self.preimage(x)?))
    }

    /// `‖φ(a) − φ(a')‖` bound for preimages differing by a common-kernel
    /// element, i.e. the kernel-condition violation.
    pub fn kernel_defect(&self) -> f64 {
        self.kernel_defect
    }

    /// `(id_n ⊗ Φ)` applied to `[ξ(a_ij)]` given blockwise as `A = [a_ij]`.
    pub fn apply_blockwise(&self, a: &BlockMatrix) -> Result<BlockMatrix> {
        let n = a.outer();
        let h = self.target.output_dim();
        let mut blocks = vec![vec![ComplexMatrix::zeros(h, h); n]; n];
        for (i, row) in blocks.iter_mut().enumerate() {
            for (j, out) in row.iter_mut().enumerate() {
                let aij = a.block(i, j);
                let x: Vec<ComplexMatrix> = self.seq.maps().map(|phi| phi.apply(&aij)).collect();
                *out = self.apply(&x)?;
            }
        }
        BlockMatrix::from_blocks(&blocks)
    }
}

/// Builds `Φ`; refuses when the kernel condition fails, since `Φ` is then
/// not well defined.
#[allow(non_snake_case)]
pub fn build_Phi(phi: &SuperOperator, seq: &MapSequence, tol: f64) -> Result<PhiMap> {
    let kernel = kernel_condition(seq, phi, tol)?;
    if !kernel.holds {
        return Err(Error::KernelCondition {
            violation: kernel.max_violation,
        });
    }
    Ok(PhiMap {
        target: phi.clone(),
        seq: seq.clone(),
        stacked_pinv: pseudoinverse(&seq.stacked_coeffs(), crate::seq::KERNEL_RANK_TOL),
        kernel_defect: kernel.max_violation,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CpSampling {
    pub samples: usize,
    /// Smallest eigenvalue seen, for images normalized by input norm.
    pub min_margin: f64,
    pub violations: usize,
}

/// Samples `[a_ij] ∈ Γ_n⁺` (so `[ξ(a_ij)] ⪰ 0`) and records
/// `λ_min((id_n ⊗ Φ)[ξ(a_ij)])`, with inputs normalized to trace one.
pub fn phi_cp_sampling(
    map: &PhiMap,
    n: usize,
    samples: usize,
    margin: f64,
    seed: u64,
) -> Result<CpSampling> {
    let mut rng = seeded_rng(seed);
    let mut min_margin = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..samples {
        let a = gamma_sample(&map.seq, n, 2_000, MEMBERSHIP_TOL, &mut rng)?;
        let t = a.flatten().trace().re.max(f64::MIN_POSITIVE);
        let a = BlockMatrix::from_flat(n, map.seq.dim(), a.into_flat().unscale(t))?;
        let lam = min_eigenvalue(map.apply_blockwise(&a)?.flatten());
        min_margin = min_margin.min(lam);
        if lam < margin {
            violations += 1;
        }
    }
    Ok(CpSampling {
        samples,
        min_margin,
        violations,
    })
}

/// `M = ⊕_s V_s M_{r_s} V_s† ⊂ M_D` for isometries `V_s` with orthogonal
/// ranges. Its unit `p = Σ V_s V_s†` must differ from `I_D`, so `M` does not
/// contain the ambient identity and `{a + z I_D}` is a faithful copy of the
/// unitization.
#[derive(Debug, Clone)]
pub struct UnitizedAlgebraModel {
    ambient: usize,
    embeddings: Vec<ComplexMatrix>,
    unit: ComplexMatrix,
}

impl UnitizedAlgebraModel {
    pub fn new(ambient: usize, embeddings: Vec<ComplexMatrix>) -> Result<Self> {
        let mut unit = ComplexMatrix::zeros(ambient, ambient);
        for (s, v) in embeddings.iter().enumerate() {
            if v.nrows() != ambient || v.ncols() == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "embedding {s} has shape {:?}",
                    v.shape()
                )));
            }
            if frobenius(&(v.adjoint() * v - identity(v.ncols()))) > 1e-10 {
                return Err(Error::InvalidArgument(format!("embedding {s} is not an isometry")));
            }
            for (t, w) in embeddings.iter().enumerate().skip(s + 1) {
                if frobenius(&(v.adjoint() * w)) > 1e-10 {
                    return Err(Error::InvalidArgument(format!(
                        "embeddings {s} and {t} have overlapping ranges"
                    )));
                }
            }
            unit += v * v.adjoint();
        }
        let model = UnitizedAlgebraModel {
            ambient,
            embeddings,
            unit,
        };
        if !model.is_faithful() {
            return Err(Error::InvalidArgument(
                "the subalgebra contains the ambient identity; unitization is not faithful".into(),
            ));
        }
        Ok(model)
    }

    /// Upper-left `M_r` inside `M_D`.
    pub fn corner(ambient: usize, r: usize) -> Result<Self> {
        let v = ComplexMatrix::from_fn(ambient, r, |i, j| {
            if i == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self::new(ambient, vec![v])
    }

    /// Random embedding of `⊕ M_{r_s}` into `M_D` by a random unitary.
    pub fn random(rng: &mut impl Rng, ambient: usize, sizes: &[usize]) -> Result<Self> {
        let u = random::unitary(rng, ambient);
        let mut start = 0;
        let mut embeddings = Vec::new();
        for &r in sizes {
            if start + r > ambient {
                return Err(Error::InvalidArgument("summands do not fit".into()));
            }
            embeddings.push(u.columns(start, r).into_owned());
            start += r;
        }
        Self::new(ambient, embeddings)
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.embeddings.iter().map(|v| v.ncols()).collect()
    }

    pub fn unit(&self) -> &ComplexMatrix {
        &self.unit
    }

    pub fn embeddings(&self) -> &[ComplexMatrix] {
        &self.embeddings
    }

    /// Basis `V_s E_ab V_s†` of `M`.
    pub fn basis(&self) -> Vec<ComplexMatrix> {
        let mut out = Vec::new();
        for v in &self.embeddings {
            let r = v.ncols();
            for a in 0..r {
                for b in 0..r {
                    out.push(v.column(a) * v.column(b).adjoint());
                }
            }
        }
        out
    }

    /// `p ≠ I_D` and `basis ∪ {I_D}` linearly independent.
    pub fn is_faithful(&self) -> bool {
        let d = self.ambient;
        if frobenius(&(&self.unit - identity(d))) < 1e-10 {
            return false;
        }
        let mut vectors = self.basis();
        vectors.push(identity(d));
        let cols = vectors.len();
        let m = ComplexMatrix::from_fn(d * d, cols, |r, c| vectors[c][(r / d, r % d)]);
        let sv = m.singular_values();
        let top = sv.max();
        sv.iter().filter(|&&s| s > 1e-10 * top).count() == cols
    }

    pub fn embed(&self, parts: &[ComplexMatrix]) -> Result<ComplexMatrix> {
        if parts.len() != self.embeddings.len() {
            return Err(Error::DimensionMismatch("wrong number of summands".into()));
        }
        let mut out = ComplexMatrix::zeros(self.ambient, self.ambient);
        for (v, x) in self.embeddings.iter().zip(parts) {
            if x.shape() != (v.ncols(), v.ncols()) {
                return Err(Error::DimensionMismatch("summand has wrong size".into()));
            }
            out += v * x * v.adjoint();
        }
        Ok(out)
    }

    pub fn compress(&self, a: &ComplexMatrix) -> Vec<ComplexMatrix> {
        self.embeddings.iter().map(|v| v.adjoint() * a * v).collect()
    }

    /// Splits `y = a + z·I_D` with `a ∈ M`.
    pub fn decompose(&self, y: &ComplexMatrix, tol: f64) -> Result<(Vec<ComplexMatrix>, C64)> {
        let d = self.ambient;
        if y.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!("expected {d}x{d}")));
        }
        let comp = identity(d) - &self.unit;
        let z = (&comp * y).trace() / comp.trace();
        let a = y - identity(d) * z;
        let parts = self.compress(&a);
        let defect = frobenius(&(self.embed(&parts)? - &a));
        if defect > tol * frobenius(y).max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "element is not of the form a + zI (defect {defect:.3e})"
            )));
        }
        Ok((parts, z))
    }
}

/// Linear map `T` on the embedded subalgebra, one map `T_s: M_{r_s} → M_h`
/// per summand.
#[derive(Debug, Clone)]
pub struct SubalgebraMap {
    parts: Vec<SuperOperator>,
    h: usize,
}

impl SubalgebraMap {
    pub fn new(model: &UnitizedAlgebraModel, parts: Vec<SuperOperator>) -> Result<Self> {
        let sizes = model.block_sizes();
        if parts.len() != sizes.len() {
            return Err(Error::DimensionMismatch("one map per summand required".into()));
        }
        let h = parts.first().map_or(0, |p| p.output_dim());
        for (p, &r) in parts.iter().zip(&sizes) {
            if p.input_dim() != r || p.output_dim() != h {
                return Err(Error::DimensionMismatch(format!(
                    "summand map M_{} → M_{} does not fit M_{r} → M_{h}",
                    p.input_dim(),
                    p.output_dim()
                )));
            }
        }
        Ok(SubalgebraMap { parts, h })
    }

    pub fn random_cp(rng: &mut impl Rng, model: &UnitizedAlgebraModel, h: usize) -> Result<Self> {
        let parts = model
            .block_sizes()
            .into_iter()
            .map(|r| {
                let rank = rng.random_range(1..=r * h);
                SuperOperator::random_cp(rng, r, h, rank)
            })
            .collect();
        Self::new(model, parts)
    }

    pub fn output_dim(&self) -> usize {
        self.h
    }

    pub fn parts(&self) -> &[SuperOperator] {
        &self.parts
    }

    pub fn apply_parts(&self, parts: &[ComplexMatrix]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.h, self.h);
        for (t, x) in self.parts.iter().zip(parts) {
            out += t.apply(x);
        }
        out
    }

    pub fn apply(&self, model: &UnitizedAlgebraModel, a: &ComplexMatrix) -> ComplexMatrix {
        self.apply_parts(&model.compress(a))
    }

    /// Complete positivity on `⊕ M_{r_s}`: every summand map has a PSD Choi matrix.
    pub fn is_cp(&self, tol: f64) -> Result<bool> {
        for p in &self.parts {
            if !p.is_cp(tol)?.holds {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// `‖T‖_cb = ‖T(p)‖` for a CP map on a subalgebra with unit `p`.
pub fn cb_norm_cp(t: &SubalgebraMap, model: &UnitizedAlgebraModel) -> Result<f64> {
    for p in t.parts() {
        let v = p.is_cp(1e-8)?;
        if !v.holds {
            return Err(Error::NotCompletelyPositive { margin: v.margin });
        }
    }
    Ok(operator_norm(&t.apply(model, model.unit())))
}

/// `T~(a + z·I_D) = T(a) + z·c·I_h`, with `c = ‖T‖_cb` by default.
#[derive(Debug, Clone)]
pub struct UnitizedExtension {
    pub map: SubalgebraMap,
    pub model: UnitizedAlgebraModel,
    pub constant: f64,
}

impl UnitizedExtension {
    pub fn apply(&self, y: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (parts, z) = self.model.decompose(y, 1e-9)?;
        let h = self.map.output_dim();
        Ok(self.map.apply_parts(&parts) + identity(h) * (z * self.constant))
    }

    /// `(id_n ⊗ T~)` on an element of `M_n(M~)` given flat (`nD x nD`).
    pub fn apply_blockwise(&self, y: &BlockMatrix) -> Result<BlockMatrix> {
        let n = y.outer();
        let mut blocks = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                row.push(self.apply(&y.block(i, j))?);
            }
            blocks.push(row);
        }
        BlockMatrix::from_blocks(&blocks)
    }
}

pub fn unitized_extension(t: &SubalgebraMap, model: &UnitizedAlgebraModel) -> Result<UnitizedExtension> {
    if !model.is_faithful() {
        return Err(Error::InvalidArgument("unitization model is not faithful".into()));
    }
    let constant = cb_norm_cp(t, model)?;
    Ok(UnitizedExtension {
        map: t.clone(),
        model: model.clone(),
        constant,
    })
}

fn unitized_element(rng: &mut impl Rng, model: &UnitizedAlgebraModel) -> Result<ComplexMatrix> {
    let parts: Vec<ComplexMatrix> = model
        .block_sizes()
        .iter()
        .map(|&r| random::ginibre(rng, r, r))
        .collect();
    let z = random::gaussian(rng);
    Ok(model.embed(&parts)? + identity(model.ambient()) * z)
}

/// Random PSD element of `M_n(M~)`. Even draws are `G G†` with `G` having
/// entries `a_ij + z_ij I_D`; odd draws are `(B ⊗ I)(I − Q)(B ⊗ I)†` with `Q`
/// a projection in `M_n(M)`, which exposes an undersized unit constant.
pub fn sample_unitized_psd(
    rng: &mut impl Rng,
    model: &UnitizedAlgebraModel,
    n: usize,
    adversarial: bool,
) -> Result<BlockMatrix> {
    let dd = model.ambient();
    let y = if !adversarial {
        let mut g = ComplexMatrix::zeros(n * dd, n * dd);
        for i in 0..n {
            for j in 0..n {
                g.view_mut((i * dd, j * dd), (dd, dd)).copy_from(&unitized_element(rng, model)?);
            }
        }
        &g * g.adjoint()
    } else {
        // Q = ⊕_s (I_n ⊗ V_s) q_s (I_n ⊗ V_s)† with q_s a random projection
        // in M_n(M_{r_s}), or I_n ⊗ p.
        let mut q = ComplexMatrix::zeros(n * dd, n * dd);
        let full = rng.random_range(0..3) == 0;
        for v in model.embeddings() {
            let r = v.ncols();
            let proj = if full {
                identity(n * r)
            } else {
                let rank = rng.random_range(1..=n * r);
                let w = random::isometry(rng, n * r, rank);
                &w * w.adjoint()
            };
            let lift = kron(&identity(n), v);
            q += &lift * proj * lift.adjoint();
        }
        let b = random::ginibre(rng, n, n);
        let lift_b = kron(&b, &identity(dd));
        &lift_b * (identity(n * dd) - q) * lift_b.adjoint()
    };
    let norm = operator_norm(&y).max(f64::MIN_POSITIVE);
    BlockMatrix::from_flat(n, dd, symmetrize(&y.unscale(norm)))
}

/// Samples PSD elements of `M_n(M~)` for `n = 1..=max_n`, alternating generic
/// and adversarial draws, and records `λ_min((id_n ⊗ T~)(y))`.
pub fn unitized_cp_sampling(
    ext: &UnitizedExtension,
    max_n: usize,
    samples: usize,
    margin: f64,
    seed: u64,
) -> Result<CpSampling> {
    let mut rng = seeded_rng(seed);
    let mut min_margin = f64::INFINITY;
    let mut violations = 0;
    for s in 0..samples {
        let n = 1 + s % max_n.max(1);
        let y = sample_unitized_psd(&mut rng, &ext.model, n, s % 2 == 1)?;
        let lam = min_eigenvalue(ext.apply_blockwise(&y)?.flatten());
        min_margin = min_margin.min(lam);
        if lam < margin {
            violations += 1;
        }
    }
    Ok(CpSampling {
        samples,
        min_margin,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{feasibility, FeasibilityOptions, Verdict};
    use crate::linalg::{c64, matrix_unit};
    use crate::seq::CanonicalClass;

    #[test]
    fn stinespring_of_identity() {
        let s = stinespring(&SuperOperator::identity(3), 1e-8).unwrap();
        assert_eq!(s.rank(), 1);
        assert_eq!(s.k_dim(), 3);
        let vv = s.v().adjoint() * s.v();
        assert!(frobenius(&(vv - identity(3))) < 1e-12);
        assert!(s.reconstruction_error(&SuperOperator::identity(3)) < 1e-12);
    }

    #[test]
    fn stinespring_of_conjugation_has_one_kraus() {
        let mut rng = seeded_rng(1);
        let k = random::ginibre(&mut rng, 3, 2);
        let psi = SuperOperator::conjugation(&k);
        let s = stinespring(&psi, 1e-8).unwrap();
        assert_eq!(s.rank(), 1);
        // Oracle: the Kraus operator equals K up to a phase.
        let kk = &s.kraus()[0];
        let phase = (kk.adjoint() * &k).trace();
        let phase = phase / phase.norm();
        assert!(frobenius(&(kk * phase - &k)) < 1e-10);
    }

    #[test]
    fn stinespring_of_random_cp() {
        let mut rng = seeded_rng(2);
        for _ in 0..10 {
            let psi = SuperOperator::random_cp(&mut rng, 3, 2, 4);
            let s = stinespring(&psi, 1e-8).unwrap();
            assert!(s.reconstruction_error(&psi) < 1e-9);
            for _ in 0..5 {
                let a = random::ginibre(&mut rng, 3, 3);
                let b = random::ginibre(&mut rng, 3, 3);
                assert!(frobenius(&(s.pi(&(&a * &b)) - s.pi(&a) * s.pi(&b))) < 1e-10);
                assert!(frobenius(&(s.pi(&a.adjoint()) - s.pi(&a).adjoint())) < 1e-10);
            }
        }
        assert!(stinespring(&SuperOperator::transpose(2), 1e-8).is_err());
    }

    fn feasible(target: SuperOperator, seq: MapSequence) -> (FeasibilityProblem, DecompositionCertificate) {
        let prob = FeasibilityProblem::new(target, seq, FeasibilityOptions::default()).unwrap();
        let Verdict::Feasible(cert) = feasibility(&prob).unwrap().verdict else { panic!("infeasible") };
        (prob, cert)
    }

    #[test]
    fn block_dilation_of_transpose() {
        let (prob, cert) = feasible(
            SuperOperator::transpose(2),
            MapSequence::canonical(CanonicalClass::Decomposable, 2),
        );
        let bd = block_dilation(&cert, &prob).unwrap();
        assert!(bd.reconstruction_residual(prob.target(), 20, 3) <= 1e-9);
        assert!(bd.star_defect(20, 4) < 1e-12);
        let p0 = bd.projection(0);
        let p1 = bd.projection(1);
        assert!(frobenius(&(&p0 * &p1)) == 0.0);
    }

    #[test]
    fn block_dilation_of_identity_is_exact() {
        let (prob, cert) = feasible(SuperOperator::identity(2), MapSequence::canonical(CanonicalClass::Cp, 2));
        let bd = block_dilation(&cert, &prob).unwrap();
        assert_eq!(bd.k_dim(), 2);
        assert!(bd.reconstruction_residual(prob.target(), 20, 5) < 1e-12);
    }

    #[test]
    fn block_dilation_refuses_bad_certificates() {
        let prob = FeasibilityProblem::new(
            SuperOperator::identity(2),
            MapSequence::canonical(CanonicalClass::Cp, 2),
            FeasibilityOptions::default(),
        )
        .unwrap();
        let cert = DecompositionCertificate {
            choi: vec![ComplexMatrix::zeros(4, 4)],
            residual: 0.0,
        };
        assert!(matches!(block_dilation(&cert, &prob), Err(Error::UnverifiedCertificate(_))));
    }

    #[test]
    fn eta_trivial_cases_and_multiplicativity() {
        let mut rng = seeded_rng(6);
        // n = 1 and m = 1 are identity reshuffles.
        let x = random::ginibre(&mut rng, 3, 3);
        assert_eq!(eta_reshuffle(&x, 1, 1, 3).unwrap()[0], x);
        let x = random::ginibre(&mut rng, 6, 6);
        assert_eq!(eta_reshuffle(&x, 2, 1, 3).unwrap()[0], x);

        let (n, m, d) = (2, 2, 2);
        let sample = |rng: &mut _| {
            let parts: Vec<ComplexMatrix> = (0..m).map(|_| random::ginibre(rng, n * d, n * d)).collect();
            eta_inverse(&parts, n, d).unwrap()
        };
        for _ in 0..20 {
            let h1 = sample(&mut rng);
            let h2 = sample(&mut rng);
            let lhs = eta_reshuffle(&(&h1 * &h2), n, m, d).unwrap();
            let r1 = eta_reshuffle(&h1, n, m, d).unwrap();
            let r2 = eta_reshuffle(&h2, n, m, d).unwrap();
            for k in 0..m {
                assert!(frobenius(&(&lhs[k] - &r1[k] * &r2[k])) <= 1e-12);
            }
            let adj = eta_reshuffle(&h1.adjoint(), n, m, d).unwrap();
            assert!(frobenius(&(&adj[0] - r1[0].adjoint())) <= 1e-12);
        }
        let mut bad = ComplexMatrix::zeros(8, 8);
        bad[(0, 2)] = c64(1.0, 0.0);
        assert!(matches!(eta_reshuffle(&bad, n, m, d), Err(Error::Malformed(_))));
    }

    #[test]
    fn phi_reads_first_block_for_identity_target() {
        let seq = MapSequence::canonical(CanonicalClass::Decomposable, 2);
        let phi_map = build_Phi(&SuperOperator::identity(2), &seq, 1e-8).unwrap();
        let mut rng = seeded_rng(7);
        let a = random::ginibre(&mut rng, 2, 2);
        let x = vec![a.clone(), a.transpose()];
        assert!(frobenius(&(phi_map.apply(&x).unwrap() - &a)) < 1e-12);
    }

    #[test]
    fn phi_is_independent_of_preimage() {
        // (φ_1, φ_2) = (pinching, transpose∘pinching) share the off-diagonal kernel.
        let pinch = SuperOperator::from_fn(2, 2, |a| {
            let mut out = ComplexMatrix::zeros(2, 2);
            out[(0, 0)] = a[(0, 0)];
            out[(1, 1)] = a[(1, 1)];
            out
        })
        .unwrap();
        let seq = MapSequence::finite(vec![pinch.clone(), pinch.scale(2.0)]).unwrap();
        let target = pinch.scale(3.0);
        let phi_map = build_Phi(&target, &seq, 1e-8).unwrap();
        let mut rng = seeded_rng(8);
        let a = random::ginibre(&mut rng, 2, 2);
        let k = matrix_unit(2, 0, 1) * c64(0.7, -0.2);
        let xa: Vec<_> = seq.maps().map(|m| m.apply(&a)).collect();
        let xak: Vec<_> = seq.maps().map(|m| m.apply(&(&a + &k))).collect();
        let out_a = phi_map.apply(&xa).unwrap();
        assert!(frobenius(&(&out_a - phi_map.apply(&xak).unwrap())) < 1e-12);
        assert!(frobenius(&(&out_a - target.apply(&(&a + &k)))) < 1e-12);
        assert!(matches!(
            build_Phi(&SuperOperator::identity(2), &seq, 1e-8),
            Err(Error::KernelCondition { .. })
        ));
    }

    #[test]
    fn cb_norms() {
        let model = UnitizedAlgebraModel::corner(3, 2).unwrap();
        let id = SubalgebraMap::new(&model, vec![SuperOperator::identity(2)]).unwrap();
        assert!((cb_norm_cp(&id, &model).unwrap() - 1.0).abs() < 1e-12);

        let mut rng = seeded_rng(9);
        let v = random::isometry(&mut rng, 3, 2);
        let t = SubalgebraMap::new(&model, vec![SuperOperator::conjugation(&v).scale(3.0)]).unwrap();
        assert!((cb_norm_cp(&t, &model).unwrap() - 3.0).abs() < 1e-12);

        let tr = SubalgebraMap::new(&model, vec![SuperOperator::trace_and_replace(2, 2)]).unwrap();
        assert!((cb_norm_cp(&tr, &model).unwrap() - 1.0).abs() < 1e-12);

        let bad = SubalgebraMap::new(&model, vec![SuperOperator::transpose(2)]).unwrap();
        assert!(cb_norm_cp(&bad, &model).is_err());
    }

    #[test]
    fn unitization_faithfulness() {
        assert!(UnitizedAlgebraModel::corner(3, 3).is_err());
        let m = UnitizedAlgebraModel::corner(3, 2).unwrap();
        assert!(m.is_faithful());
        let y = identity(3) * c64(2.0, 0.0) + m.embed(&[matrix_unit(2, 0, 1)]).unwrap();
        let (parts, z) = m.decompose(&y, 1e-9).unwrap();
        assert!((z - c64(2.0, 0.0)).norm() < 1e-12);
        assert!(frobenius(&(&parts[0] - matrix_unit(2, 0, 1))) < 1e-12);
        assert!(m.decompose(&matrix_unit(3, 0, 2), 1e-9).is_err());
    }

    #[test]
    fn identity_on_corner_extends_to_cp_map() {
        let model = UnitizedAlgebraModel::corner(3, 2).unwrap();
        let t = SubalgebraMap::new(&model, vec![SuperOperator::identity(2)]).unwrap();
        let ext = unitized_extension(&t, &model).unwrap();
        let a = model.embed(&[matrix_unit(2, 1, 0)]).unwrap();
        let y = &a + identity(3) * c64(0.5, 0.0);
        let expected = matrix_unit(2, 1, 0) + identity(2) * c64(0.5, 0.0);
        assert!(frobenius(&(ext.apply(&y).unwrap() - expected)) < 1e-12);
        assert!(frobenius(&(ext.apply(&a).unwrap() - t.apply(&model, &a))) == 0.0);
        let s = unitized_cp_sampling(&ext, 3, 200, -1e-9, 10).unwrap();
        assert_eq!(s.violations, 0, "min margin {}", s.min_margin);
    }

    #[test]
    fn halved_constant_is_caught() {
        let mut rng = seeded_rng(11);
        let model = UnitizedAlgebraModel::random(&mut rng, 4, &[1, 2]).unwrap();
        let t = SubalgebraMap::random_cp(&mut rng, &model, 2).unwrap();
        let mut ext = unitized_extension(&t, &model).unwrap();
        assert_eq!(unitized_cp_sampling(&ext, 3, 200, -1e-9, 12).unwrap().violations, 0);
        ext.constant *= 0.5;
        assert!(unitized_cp_sampling(&ext, 3, 200, -1e-9, 12).unwrap().violations > 0);
    }

    #[test]
    fn zero_map_extends_to_zero() {
        let model = UnitizedAlgebraModel::corner(3, 1).unwrap();
        let t = SubalgebraMap::new(&model, vec![SuperOperator::zero(1, 2)]).unwrap();
        let ext = unitized_extension(&t, &model).unwrap();
        assert_eq!(ext.constant, 0.0);
        assert_eq!(ext.apply(&identity(3)).unwrap(), ComplexMatrix::zeros(2, 2));
    }
}
