//! Linear maps `M_d → M_h` and their Choi-level encodings.
//!
//! A map is stored by its action on matrix units: column `i*d + j` of the
//! `h² x d²` coefficient matrix holds `vec(φ(E_ij))`. The Choi matrix
//! `J(φ) = Σ_ij E_ij ⊗ φ(E_ij)` is a reshuffle of the same numbers and is
//! computed once at construction.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    self, frobenius, hermitian_defect, is_finite, matrix_unit, min_eigenvalue,
    operator_norm, random, seeded_rng, symmetrize, unvectorize, vectorize, BlockMatrix,
    ComplexMatrix, HermitianMatrix, TransposeSide, C64,
};

/// Relative Choi defect under which a map counts as a *-map.
pub const STAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SuperOperator {
    d: usize,
    h: usize,
    coeffs: ComplexMatrix,
    choi: ComplexMatrix,
}

/// Outcome of a spectral (Choi eigenvalue) test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralVerdict {
    pub holds: bool,
    /// Smallest eigenvalue of the tested Choi matrix.
    pub margin: f64,
}

impl SuperOperator {
    pub fn from_coeffs(d: usize, h: usize, coeffs: ComplexMatrix) -> Result<Self> {
        if coeffs.shape() != (h * h, d * d) {
            return Err(Error::DimensionMismatch(format!(
                "coefficient matrix is {}x{}, expected {}x{}",
                coeffs.nrows(),
                coeffs.ncols(),
                h * h,
                d * d
            )));
        }
        if !is_finite(&coeffs) {
            return Err(Error::NonFinite);
        }
        let choi = coeffs_to_choi(d, h, &coeffs);
        Ok(SuperOperator { d, h, coeffs, choi })
    }

    pub fn from_choi(d: usize, h: usize, choi: ComplexMatrix) -> Result<Self> {
        if choi.shape() != (d * h, d * h) {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix is {}x{}, expected {n}x{n}",
                choi.nrows(),
                choi.ncols(),
                n = d * h
            )));
        }
        if !is_finite(&choi) {
            return Err(Error::NonFinite);
        }
        let coeffs = choi_to_coeffs(d, h, &choi);
        Ok(SuperOperator { d, h, coeffs, choi })
    }

    /// Builds a map from its action on the matrix units of `M_d`.
    pub fn from_fn<F>(d: usize, h: usize, f: F) -> Result<Self>
    where
        F: Fn(&ComplexMatrix) -> ComplexMatrix,
    {
        let mut coeffs = ComplexMatrix::zeros(h * h, d * d);
        for i in 0..d {
            for j in 0..d {
                let img = f(&matrix_unit(d, i, j));
                if img.shape() != (h, h) {
                    return Err(Error::DimensionMismatch(format!(
                        "image of E_{i}{j} is {:?}, expected ({h},{h})",
                        img.shape()
                    )));
                }
                coeffs.set_column(i * d + j, &nalgebra::DVector::from_vec(vectorize(&img)));
            }
        }
        Self::from_coeffs(d, h, coeffs)
    }

    /// `a ↦ Σ K a K†` for Kraus operators of shape `h x d`.
    pub fn from_kraus(kraus: &[ComplexMatrix]) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty Kraus set".into()))?;
        let (h, d) = first.shape();
        if kraus.iter().any(|k| k.shape() != (h, d)) {
            return Err(Error::DimensionMismatch("Kraus operators differ in shape".into()));
        }
        Self::from_fn(d, h, |a| {
            kraus
                .iter()
                .fold(ComplexMatrix::zeros(h, h), |acc, k| acc + k * a * k.adjoint())
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::from_coeffs(d, d, linalg::identity(d * d)).expect("shape is consistent")
    }

    pub fn transpose(d: usize) -> Self {
        Self::from_fn(d, d, |a| a.transpose()).expect("shape is consistent")
    }

    pub fn zero(d: usize, h: usize) -> Self {
        Self::from_coeffs(d, h, ComplexMatrix::zeros(h * h, d * d)).expect("shape is consistent")
    }

    /// `a ↦ K a K†` for any `h x d` matrix `K`.
    pub fn conjugation(k: &ComplexMatrix) -> Self {
        Self::from_kraus(std::slice::from_ref(k)).expect("single Kraus operator")
    }

    /// `a ↦ U a U†`; rejects non-unitary `U`.
    pub fn unitary_conjugation(u: &ComplexMatrix) -> Result<Self> {
        if !u.is_square() {
            return Err(Error::DimensionMismatch("unitary must be square".into()));
        }
        let n = u.nrows();
        let defect = frobenius(&(u.adjoint() * u - linalg::identity(n)));
        if defect > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "matrix is not unitary (defect {defect:.3e})"
            )));
        }
        Ok(Self::conjugation(u))
    }

    /// `a ↦ tr(a) I_h / h`.
    pub fn trace_and_replace(d: usize, h: usize) -> Self {
        let scale = 1.0 / h as f64;
        Self::from_fn(d, h, |a| linalg::identity(h) * (a.trace() * scale))
            .expect("shape is consistent")
    }

    /// Member of the Choi-type family on `M_3`:
    /// `X ↦ diag(a x11 + b x22 + c x33, c x11 + a x22 + b x33, b x11 + c x22 + a x33) − X`.
    /// `(a, b, c) = (2, 0, 1)` is Choi's original positive nondecomposable map.
    pub fn choi_type_map(a: f64, b: f64, c: f64) -> Self {
        Self::from_fn(3, 3, |x| {
            let d = [x[(0, 0)], x[(1, 1)], x[(2, 2)]];
            let mut out = -x.clone();
            out[(0, 0)] += d[0] * a + d[1] * b + d[2] * c;
            out[(1, 1)] += d[0] * c + d[1] * a + d[2] * b;
            out[(2, 2)] += d[0] * b + d[1] * c + d[2] * a;
            out
        })
        .expect("shape is consistent")
    }

    /// Random completely positive map with a Ginibre Choi matrix of the given rank.
    pub fn random_cp(rng: &mut impl Rng, d: usize, h: usize, rank: usize) -> Self {
        Self::from_choi(d, h, random::psd(rng, d * h, rank)).expect("shape is consistent")
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.h
    }

    pub fn coeffs(&self) -> &ComplexMatrix {
        &self.coeffs
    }

    pub fn choi(&self) -> &ComplexMatrix {
        &self.choi
    }

    pub fn apply(&self, a: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(a.shape(), (self.d, self.d), "input outside M_d");
        let v = &self.coeffs * ComplexMatrix::from_vec(self.d * self.d, 1, vectorize(a));
        unvectorize(v.as_slice(), self.h, self.h)
    }

    /// Hilbert-Schmidt adjoint `φ*: M_h → M_d`.
    pub fn adjoint_map(&self) -> Self {
        Self::from_coeffs(self.h, self.d, self.coeffs.adjoint()).expect("shape is consistent")
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_coeffs(self.d, self.h, self.coeffs.scale(s)).expect("shape is consistent")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if (self.d, self.h) != (other.d, other.h) {
            return Err(Error::DimensionMismatch(format!(
                "cannot add maps M_{} → M_{} and M_{} → M_{}",
                self.d, self.h, other.d, other.h
            )));
        }
        Self::from_coeffs(self.d, self.h, &self.coeffs + &other.coeffs)
    }

    /// `‖J − J†‖_F`.
    pub fn star_defect(&self) -> f64 {
        hermitian_defect(&self.choi)
    }

    pub fn is_star_map(&self) -> bool {
        self.star_defect() <= STAR_TOL * frobenius(&self.choi).max(1.0)
    }

    fn require_star(&self) -> Result<()> {
        if self.is_star_map() {
            Ok(())
        } else {
            Err(Error::NotStarMap {
                defect: self.star_defect(),
            })
        }
    }

    pub fn is_cp(&self, tol: f64) -> Result<SpectralVerdict> {
        self.require_star()?;
        let margin = min_eigenvalue(&self.choi);
        Ok(SpectralVerdict {
            holds: margin >= -tol,
            margin,
        })
    }

    /// Complete copositivity: complete positivity of `φ∘t`, whose Choi
    /// matrix is the outer partial transpose of `J(φ)`.
    pub fn is_ccp(&self, tol: f64) -> Result<SpectralVerdict> {
        self.require_star()?;
        let pt = BlockMatrix::from_flat(self.d, self.h, self.choi.clone())?
            .partial_transpose(TransposeSide::Outer);
        let margin = min_eigenvalue(pt.flatten());
        Ok(SpectralVerdict {
            holds: margin >= -tol,
            margin,
        })
    }

    /// `‖φ(I) − I‖ ≤ tol`; only meaningful for `d = h`.
    pub fn is_unital(&self, tol: f64) -> Result<bool> {
        if self.d != self.h {
            return Err(Error::DimensionMismatch(format!(
                "unitality needs equal dimensions, got {} and {}",
                self.d, self.h
            )));
        }
        let img = self.apply(&linalg::identity(self.d));
        Ok(operator_norm(&(img - linalg::identity(self.d))) <= tol)
    }

    /// Multiplicativity on all pairs of matrix units.
    pub fn is_homomorphism(&self, tol: f64) -> bool {
        let d = self.d;
        let images: Vec<ComplexMatrix> = (0..d * d)
            .map(|col| {
                let v: Vec<C64> = self.coeffs.column(col).iter().cloned().collect();
                unvectorize(&v, self.h, self.h)
            })
            .collect();
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let lhs = if j == k {
                            images[i * d + l].clone()
                        } else {
                            ComplexMatrix::zeros(self.h, self.h)
                        };
                        let rhs = &images[i * d + j] * &images[k * d + l];
                        if frobenius(&(lhs - rhs)) > tol {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Largest singular value of the coefficient matrix: the operator norm
    /// for Hilbert-Schmidt norms on both sides.
    pub fn hs_operator_norm(&self) -> f64 {
        operator_norm(&self.coeffs)
    }

    /// Frobenius norm of the coefficient matrix, an upper bound for
    /// [`hs_operator_norm`](Self::hs_operator_norm).
    pub fn hs_norm_bound(&self) -> f64 {
        frobenius(&self.coeffs)
    }

    /// Whether the map is unitary for the Hilbert-Schmidt inner product.
    pub fn is_hs_isometry(&self, tol: f64) -> bool {
        self.d == self.h
            && frobenius(&(self.coeffs.adjoint() * &self.coeffs - linalg::identity(self.d * self.d)))
                <= tol
    }
}

fn coeffs_to_choi(d: usize, h: usize, coeffs: &ComplexMatrix) -> ComplexMatrix {
    // J[(i,a),(j,b)] = φ(E_ij)[a,b] = coeffs[a*h + b, i*d + j]
    ComplexMatrix::from_fn(d * h, d * h, |r, c| {
        let (i, a) = (r / h, r % h);
        let (j, b) = (c / h, c % h);
        coeffs[(a * h + b, i * d + j)]
    })
}

fn choi_to_coeffs(d: usize, h: usize, choi: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(h * h, d * d, |r, c| {
        let (a, b) = (r / h, r % h);
        let (i, j) = (c / d, c % d);
        choi[(i * h + a, j * h + b)]
    })
}

/// `(ψ∘φ)`: first `φ`, then `ψ`.
pub fn compose(psi: &SuperOperator, phi: &SuperOperator) -> Result<SuperOperator> {
    if psi.d != phi.h {
        return Err(Error::DimensionMismatch(format!(
            "cannot compose M_{} → M_{} after M_{} → M_{}",
            psi.d, psi.h, phi.d, phi.h
        )));
    }
    SuperOperator::from_coeffs(phi.d, psi.h, &psi.coeffs * &phi.coeffs)
}

/// Linear operator on `n x n` matrices, stored as an `n² x n²` matrix acting
/// on row-major vectorizations.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiOperator {
    dim: usize,
    matrix: ComplexMatrix,
}

impl ChoiOperator {
    pub fn new(dim: usize, matrix: ComplexMatrix) -> Result<Self> {
        if matrix.shape() != (dim * dim, dim * dim) {
            return Err(Error::DimensionMismatch(format!(
                "operator on {dim}x{dim} matrices must be {n}x{n}",
                n = dim * dim
            )));
        }
        Ok(ChoiOperator { dim, matrix })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(x.shape(), (self.dim, self.dim), "operand has wrong shape");
        let v = &self.matrix * ComplexMatrix::from_vec(self.dim * self.dim, 1, vectorize(x));
        unvectorize(v.as_slice(), self.dim, self.dim)
    }

    /// Conjugate transpose, the adjoint for the Hilbert-Schmidt pairing.
    pub fn adjoint(&self) -> ChoiOperator {
        ChoiOperator {
            dim: self.dim,
            matrix: self.matrix.adjoint(),
        }
    }
}

/// `P_k` with `P_k(J(ψ)) = J(ψ∘φ_k)` for every `ψ: M_d → M_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecompositionOperator {
    source: SuperOperator,
    h: usize,
    op: ChoiOperator,
}

impl PrecompositionOperator {
    pub fn source(&self) -> &SuperOperator {
        &self.source
    }

    pub fn output_dim(&self) -> usize {
        self.h
    }

    pub fn operator(&self) -> &ChoiOperator {
        &self.op
    }

    pub fn apply(&self, choi: &ComplexMatrix) -> ComplexMatrix {
        self.op.apply(choi)
    }

    pub fn adjoint(&self) -> ChoiOperator {
        self.op.adjoint()
    }

    pub fn apply_adjoint(&self, w: &ComplexMatrix) -> ComplexMatrix {
        let m = self.op.matrix.adjoint()
            * ComplexMatrix::from_vec(self.op.dim * self.op.dim, 1, vectorize(w));
        unvectorize(m.as_slice(), self.op.dim, self.op.dim)
    }
}

/// Builds `P_k` column by column from the coefficients of `φ_k`.
///
/// Block `(i, j)` of `J(ψ∘φ_k)` equals `Σ_pq c[pq, ij] · block(p, q)` of
/// `J(ψ)`, where `c` is the coefficient matrix of `φ_k`.
pub fn build_precomposition(phi_k: &SuperOperator, h: usize) -> Result<PrecompositionOperator> {
    let d = phi_k.d;
    if phi_k.h != d {
        return Err(Error::DimensionMismatch(format!(
            "sequence entries must map M_d to itself, got M_{} → M_{}",
            phi_k.d, phi_k.h
        )));
    }
    let n = d * h;
    let mut matrix = ComplexMatrix::zeros(n * n, n * n);
    let c = &phi_k.coeffs;
    for p in 0..d {
        for q in 0..d {
            for a in 0..h {
                for b in 0..h {
                    let col = (p * h + a) * n + (q * h + b);
                    for i in 0..d {
                        for j in 0..d {
                            let coef = c[(p * d + q, i * d + j)];
                            if coef != C64::new(0.0, 0.0) {
                                matrix[((i * h + a) * n + (j * h + b), col)] = coef;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(PrecompositionOperator {
        source: phi_k.clone(),
        h,
        op: ChoiOperator { dim: n, matrix },
    })
}

/// Adjoint of a precomposition operator.
pub fn adjoint_precomposition(p: &PrecompositionOperator) -> ChoiOperator {
    p.adjoint()
}

/// Options for [`is_positive_heuristic`].
#[derive(Debug, Clone)]
pub struct PositivityOptions {
    /// Random product probes before the see-saw runs.
    pub samples: usize,
    /// Independent see-saw runs.
    pub restarts: usize,
    pub max_sweeps: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PositivityOptions {
    fn default() -> Self {
        PositivityOptions {
            samples: 200,
            restarts: 16,
            max_sweeps: 200,
            tol: 1e-8,
            seed: 0,
        }
    }
}

/// Result of the positivity heuristic. `PositiveEvidence` is never a proof.
#[derive(Debug, Clone)]
pub enum PositivityResult {
    PositiveEvidence {
        min_value: f64,
    },
    Counterexample {
        u: ComplexMatrix,
        v: ComplexMatrix,
        value: f64,
    },
}

/// Searches for unit vectors `u, v` with `⟨v, φ(uu†) v⟩ < −tol` by
/// alternating minimization: `v` is the bottom eigenvector of `φ(uu†)`,
/// then `u` the bottom eigenvector of `φ*(vv†)`.
pub fn is_positive_heuristic(phi: &SuperOperator, opts: &PositivityOptions) -> Result<PositivityResult> {
    phi.require_star()?;
    let adj = phi.adjoint_map();
    let mut rng = seeded_rng(opts.seed);

    let bottom = |m: &ComplexMatrix| -> (f64, ComplexMatrix) {
        let e = HermitianMatrix::new_unchecked(m.clone()).eigh();
        (e.values[0], ComplexMatrix::from_column_slice(e.vectors.nrows(), 1, e.vectors.column(0).as_slice()))
    };
    let rank_one = |x: &ComplexMatrix| x * x.adjoint();

    let mut best = f64::INFINITY;
    let mut best_pair: Option<(ComplexMatrix, ComplexMatrix)> = None;
    let mut starts = Vec::new();

    for _ in 0..opts.samples {
        let u = random::unit_vector(&mut rng, phi.d);
        let (val, v) = bottom(&phi.apply(&rank_one(&u)));
        if val < best {
            best = val;
            best_pair = Some((u.clone(), v));
        }
        starts.push((val, u));
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut seeds: Vec<ComplexMatrix> = starts
        .into_iter()
        .take(opts.restarts / 2)
        .map(|(_, u)| u)
        .collect();
    while seeds.len() < opts.restarts {
        seeds.push(random::unit_vector(&mut rng, phi.d));
    }

    for mut u in seeds {
        let mut prev = f64::INFINITY;
        for _ in 0..opts.max_sweeps {
            let (_, v) = bottom(&phi.apply(&rank_one(&u)));
            let (val, new_u) = bottom(&adj.apply(&rank_one(&v)));
            u = new_u;
            if val < best {
                best = val;
                best_pair = Some((u.clone(), v.clone()));
            }
            if prev - val < 1e-14 {
                break;
            }
            prev = val;
        }
    }

    match best_pair {
        Some((u, v)) if best < -opts.tol => {
            let value = (v.adjoint() * phi.apply(&rank_one(&u)) * &v)[(0, 0)].re;
            Ok(PositivityResult::Counterexample { u, v, value })
        }
        _ => Ok(PositivityResult::PositiveEvidence {
            min_value: if best.is_finite() { best } else { 0.0 },
        }),
    }
}

/// `J(ψ∘χ)` computed at the Choi level: `(id_d ⊗ ψ)(J(χ))`.
pub fn left_compose_choi(psi: &SuperOperator, choi: &ComplexMatrix, d: usize) -> Result<ComplexMatrix> {
    let h = psi.d;
    let block = BlockMatrix::from_flat(d, h, choi.clone())?;
    Ok(symmetrize_if_close(block.map_blocks(|b| psi.apply(b))?.into_flat()))
}

fn symmetrize_if_close(m: ComplexMatrix) -> ComplexMatrix {
    if hermitian_defect(&m) <= STAR_TOL * frobenius(&m).max(1.0) {
        symmetrize(&m)
    } else {
        m
    }
}
