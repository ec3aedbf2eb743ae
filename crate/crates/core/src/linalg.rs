//! Dense complex matrix substrate.
//!
//! Thin layer over `nalgebra` providing the handful of kernels the rest of
//! the crate needs: Hermitian eigendecomposition with ascending eigenvalues,
//! projection onto the PSD cone, block matrices with partial transposition,
//! numerical null spaces and the Hilbert-Schmidt pairing.
//!
//! Vectorization is row-major throughout: entry `(r, c)` of an `m x n`
//! matrix sits at index `r * n + c`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type SeededRng = ChaCha8Rng;

/// Default absolute tolerance for spectral tests.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Relative Hermiticity defect below which inputs are silently symmetrized.
pub const SYMMETRIZE_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `E_ij` in an `n x n` matrix algebra.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    m[(i, j)] = ONE;
    m
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn from_real_rows(rows: &[&[f64]]) -> ComplexMatrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    ComplexMatrix::from_fn(r, c, |i, j| c64(rows[i][j], 0.0))
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖M − M†‖_F`.
pub fn hermitian_defect(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (m[(i, j)] - m[(j, i)].conj()).norm_sqr();
        }
    }
    acc.sqrt()
}

pub fn symmetrize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Hilbert-Schmidt pairing `tr(A† B)`.
pub fn hs_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Row-major vectorization.
pub fn vectorize(m: &ComplexMatrix) -> Vec<C64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn unvectorize(v: &[C64], rows: usize, cols: usize) -> ComplexMatrix {
    assert_eq!(v.len(), rows * cols, "vector length does not match shape");
    ComplexMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Largest singular value.
pub fn operator_norm(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Dense complex matrix that is Hermitian to working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    /// Accepts `m` if its relative Hermiticity defect is at most
    /// [`SYMMETRIZE_TOL`]; the stored matrix is `(M + M†)/2`.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !is_finite(&m) {
            return Err(Error::NonFinite);
        }
        let defect = hermitian_defect(&m);
        if defect > SYMMETRIZE_TOL * frobenius(&m).max(1.0) {
            return Err(Error::NotHermitian { defect });
        }
        Ok(HermitianMatrix(symmetrize(&m)))
    }

    /// Symmetrizes without checking. Used inside iterative solvers where the
    /// input is Hermitian by construction up to rounding.
    pub fn new_unchecked(m: ComplexMatrix) -> Self {
        HermitianMatrix(symmetrize(&m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn eigh(&self) -> Eigh {
        eigh_symmetrized(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().values.first().copied().unwrap_or(0.0)
    }
}

impl AsRef<ComplexMatrix> for HermitianMatrix {
    fn as_ref(&self) -> &ComplexMatrix {
        &self.0
    }
}

/// Eigenvalues in ascending order with matching unitary eigenvector columns.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigh {
    pub fn reconstruct(&self) -> ComplexMatrix {
        reconstruct_with(&self.vectors, &self.values)
    }
}

fn reconstruct_with(u: &ComplexMatrix, values: &[f64]) -> ComplexMatrix {
    let n = u.nrows();
    let mut scaled = u.clone();
    for (j, &lam) in values.iter().enumerate() {
        for i in 0..n {
            scaled[(i, j)] *= lam;
        }
    }
    &scaled * u.adjoint()
}

/// Hermitian eigendecomposition. Rejects inputs whose defect exceeds the
/// symmetrization threshold.
pub fn eigh(m: &ComplexMatrix) -> Result<Eigh> {
    Ok(HermitianMatrix::new(m.clone())?.eigh())
}

fn eigh_symmetrized(m: &ComplexMatrix) -> Eigh {
    let n = m.nrows();
    if n == 0 {
        return Eigh {
            values: Vec::new(),
            vectors: ComplexMatrix::zeros(0, 0),
        };
    }
    let se = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| se.eigenvectors[(i, order[j])]);
    Eigh { values, vectors }
}

/// Smallest eigenvalue of a matrix that is Hermitian up to rounding.
pub fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    eigh_symmetrized(&symmetrize(m))
        .values
        .first()
        .copied()
        .unwrap_or(0.0)
}

/// Nearest PSD matrix in Frobenius norm: clip negative eigenvalues to zero.
pub fn psd_project(m: &HermitianMatrix) -> HermitianMatrix {
    HermitianMatrix(psd_project_matrix(&m.0))
}

/// PSD projection on a raw matrix; the input is symmetrized first.
pub fn psd_project_matrix(m: &ComplexMatrix) -> ComplexMatrix {
    let e = eigh_symmetrized(&symmetrize(m));
    if e.values.first().is_none_or(|&l| l >= 0.0) {
        return symmetrize(m);
    }
    let clipped: Vec<f64> = e.values.iter().map(|&l| l.max(0.0)).collect();
    symmetrize(&reconstruct_with(&e.vectors, &clipped))
}

/// Orthonormal basis (as columns) of the numerical kernel of `l`:
/// right singular vectors with singular value `≤ tol · σ_max`.
/// A zero matrix has the full standard basis as kernel.
pub fn null_space(l: &ComplexMatrix, tol: f64) -> ComplexMatrix {
    let (rows, cols) = l.shape();
    if cols == 0 {
        return ComplexMatrix::zeros(0, 0);
    }
    let smax = operator_norm(l);
    if smax == 0.0 {
        return identity(cols);
    }
    // Pad to at least `cols` rows so the SVD returns a full right basis.
    let padded = if rows < cols {
        let mut p = ComplexMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(l);
        p
    } else {
        l.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let kernel: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= tol * smax)
        .collect();
    let mut basis = ComplexMatrix::zeros(cols, kernel.len());
    for (c, &k) in kernel.iter().enumerate() {
        for i in 0..cols {
            basis[(i, c)] = v_t[(k, i)].conj();
        }
    }
    basis
}

/// Moore-Penrose pseudoinverse with relative singular value cutoff.
pub fn pseudoinverse(m: &ComplexMatrix, rel_cutoff: f64) -> ComplexMatrix {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return ComplexMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = ComplexMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= rel_cutoff * smax || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..c {
            let vik = v_t[(k, i)].conj() * inv;
            for j in 0..r {
                out[(i, j)] += vik * u[(j, k)].conj();
            }
        }
    }
    out
}

/// Which tensor factor a partial transpose acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransposeSide {
    /// Swap blocks: `block(i, j) ↦ block(j, i)`.
    Outer,
    /// Transpose every block in place.
    Inner,
}

/// Element of `M_n(M_b)`, stored flat as an `nb x nb` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    n: usize,
    b: usize,
    data: ComplexMatrix,
}

impl BlockMatrix {
    pub fn from_flat(n: usize, b: usize, data: ComplexMatrix) -> Result<Self> {
        if data.shape() != (n * b, n * b) {
            return Err(Error::DimensionMismatch(format!(
                "flat matrix {}x{} is not {n}x{n} blocks of size {b}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(BlockMatrix { n, b, data })
    }

    pub fn from_blocks(blocks: &[Vec<ComplexMatrix>]) -> Result<Self> {
        let n = blocks.len();
        let b = blocks
            .first()
            .and_then(|row| row.first())
            .map_or(0, |m| m.nrows());
        let mut data = ComplexMatrix::zeros(n * b, n * b);
        for (i, row) in blocks.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch("ragged block rows".into()));
            }
            for (j, blk) in row.iter().enumerate() {
                if blk.shape() != (b, b) {
                    return Err(Error::DimensionMismatch(format!(
                        "block ({i},{j}) has shape {:?}, expected ({b},{b})",
                        blk.shape()
                    )));
                }
                data.view_mut((i * b, j * b), (b, b)).copy_from(blk);
            }
        }
        Ok(BlockMatrix { n, b, data })
    }

    /// Block-diagonal matrix with the given diagonal blocks.
    pub fn block_diagonal(diag: &[ComplexMatrix]) -> Result<Self> {
        let n = diag.len();
        let b = diag.first().map_or(0, |m| m.nrows());
        let mut data = ComplexMatrix::zeros(n * b, n * b);
        for (k, blk) in diag.iter().enumerate() {
            if blk.shape() != (b, b) {
                return Err(Error::DimensionMismatch(format!(
                    "diagonal block {k} has shape {:?}, expected ({b},{b})",
                    blk.shape()
                )));
            }
            data.view_mut((k * b, k * b), (b, b)).copy_from(blk);
        }
        Ok(BlockMatrix { n, b, data })
    }

    pub fn outer(&self) -> usize {
        self.n
    }

    pub fn block_size(&self) -> usize {
        self.b
    }

    pub fn block(&self, i: usize, j: usize) -> ComplexMatrix {
        self.data
            .view((i * self.b, j * self.b), (self.b, self.b))
            .into_owned()
    }

    pub fn flatten(&self) -> &ComplexMatrix {
        &self.data
    }

    pub fn into_flat(self) -> ComplexMatrix {
        self.data
    }

    /// Applies `f` to every block; all outputs must share one size.
    pub fn map_blocks<F>(&self, mut f: F) -> Result<BlockMatrix>
    where
        F: FnMut(&ComplexMatrix) -> ComplexMatrix,
    {
        let blocks: Vec<Vec<ComplexMatrix>> = (0..self.n)
            .map(|i| (0..self.n).map(|j| f(&self.block(i, j))).collect())
            .collect();
        BlockMatrix::from_blocks(&blocks)
    }

    pub fn partial_transpose(&self, side: TransposeSide) -> BlockMatrix {
        let (n, b) = (self.n, self.b);
        let data = ComplexMatrix::from_fn(n * b, n * b, |r, c| {
            let (i, a) = (r / b, r % b);
            let (j, bb) = (c / b, c % b);
            match side {
                TransposeSide::Outer => self.data[(j * b + a, i * b + bb)],
                TransposeSide::Inner => self.data[(i * b + bb, j * b + a)],
            }
        });
        BlockMatrix { n, b, data }
    }
}

/// Random matrices. Every generator draws from the caller's RNG so results
/// are reproducible under a fixed seed.
pub mod random {
    use super::*;

    pub fn gaussian(rng: &mut impl Rng) -> C64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re, im) / 2f64.sqrt()
    }

    /// i.i.d. standard complex Gaussian (Ginibre) matrix.
    pub fn ginibre(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
    }

    pub fn hermitian(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        symmetrize(&ginibre(rng, n, n))
    }

    /// `G G†` with `G` an `n x rank` Ginibre matrix.
    pub fn psd(rng: &mut impl Rng, n: usize, rank: usize) -> ComplexMatrix {
        let g = ginibre(rng, n, rank);
        symmetrize(&(&g * g.adjoint()))
    }

    pub fn unit_vector(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        let v = ginibre(rng, n, 1);
        let nrm = frobenius(&v);
        v.unscale(nrm)
    }

    /// Haar-distributed unitary via QR with phase correction.
    pub fn unitary(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        let qr = ginibre(rng, n, n).qr();
        let (mut q, r) = qr.unpack();
        for j in 0..n {
            let d = r[(j, j)];
            let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
            for i in 0..n {
                q[(i, j)] *= phase;
            }
        }
        q
    }

    /// Isometry `C^cols → C^rows` (`rows ≥ cols`).
    pub fn isometry(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
        let u = unitary(rng, rows);
        u.columns(0, cols).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap(d: usize) -> ComplexMatrix {
        let mut s = ComplexMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                s[(i * d + j, j * d + i)] = ONE;
            }
        }
        s
    }

    fn omega_projector(d: usize) -> ComplexMatrix {
        let mut v = ComplexMatrix::zeros(d * d, 1);
        for i in 0..d {
            v[(i * d + i, 0)] = c64(1.0 / (d as f64).sqrt(), 0.0);
        }
        &v * v.adjoint()
    }

    fn assert_close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) {
        let diff = frobenius(&(a - b));
        assert!(diff <= tol, "matrices differ by {diff:e}");
    }

    #[test]
    fn eigh_identity_and_diagonal() {
        let e = eigh(&identity(2)).unwrap();
        assert_eq!(e.values.len(), 2);
        for v in &e.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert_close(&e.reconstruct(), &identity(2), 1e-14);

        let e = eigh(&from_real_rows(&[&[3.0, 0.0], &[0.0, -1.0]])).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_swap_spectrum() {
        // SWAP on C^2 ⊗ C^2: one antisymmetric (-1) and three symmetric (+1) states.
        let e = eigh(&swap(2)).unwrap();
        let expected = [-1.0, 1.0, 1.0, 1.0];
        for (v, x) in e.values.iter().zip(expected) {
            assert!((v - x).abs() < 1e-12, "{:?}", e.values);
        }
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let m = from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        match eigh(&m) {
            Err(Error::NotHermitian { defect }) => assert!((defect - 2f64.sqrt()).abs() < 1e-12),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn eigh_symmetrizes_tiny_defects() {
        let mut m = from_real_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        m[(0, 1)] += c64(1e-13, 0.0);
        let h = HermitianMatrix::new(m).unwrap();
        assert!(hermitian_defect(h.as_matrix()) <= 1e-12 * frobenius(h.as_matrix()));
    }

    #[test]
    fn eigh_reconstruction_random() {
        let mut rng = seeded_rng(7);
        for n in 1..=16 {
            for _ in 0..100 {
                let m = random::hermitian(&mut rng, n);
                let e = eigh(&m).unwrap();
                let scale = frobenius(&m).max(1.0);
                assert!(frobenius(&(e.reconstruct() - &m)) <= 1e-10 * scale);
                let gram = e.vectors.adjoint() * &e.vectors;
                assert!(frobenius(&(gram - identity(n))) <= 1e-10);
                assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn psd_project_examples() {
        let mut rng = seeded_rng(3);
        let p = random::psd(&mut rng, 4, 4);
        let hp = HermitianMatrix::new(p.clone()).unwrap();
        assert_close(psd_project(&hp).as_matrix(), &p, 1e-10);

        let m = HermitianMatrix::new(from_real_rows(&[&[1.0, 0.0], &[0.0, -2.0]])).unwrap();
        assert_close(
            psd_project(&m).as_matrix(),
            &from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]),
            1e-14,
        );

        // Clipping the -1 eigenvalue of SWAP leaves the symmetric projector (I + SWAP)/2.
        let s = HermitianMatrix::new(swap(2)).unwrap();
        let proj = psd_project(&s);
        assert_close(proj.as_matrix(), &(identity(4) + swap(2)).scale(0.5), 1e-12);
        let vals = proj.eigh().values;
        for (v, x) in vals.iter().zip([0.0, 1.0, 1.0, 1.0]) {
            assert!((v - x).abs() < 1e-12);
        }
    }

    #[test]
    fn psd_project_is_idempotent_and_nearest() {
        let mut rng = seeded_rng(11);
        for n in [2, 3, 5] {
            let m = HermitianMatrix::new(random::hermitian(&mut rng, n)).unwrap();
            let p1 = psd_project(&m);
            let p2 = psd_project(&p1);
            assert!(frobenius(&(p2.as_matrix() - p1.as_matrix())) <= 1e-9);
            let dist = frobenius(&(p1.as_matrix() - m.as_matrix()));
            for _ in 0..100 {
                let rank = rng.random_range(1..=n);
                let y = random::psd(&mut rng, n, rank).scale(rng.random_range(0.01..2.0));
                assert!(dist <= frobenius(&(y - m.as_matrix())) + 1e-9);
            }
        }
    }

    #[test]
    fn partial_transpose_examples() {
        let id = BlockMatrix::from_flat(2, 2, identity(4)).unwrap();
        assert_eq!(id.partial_transpose(TransposeSide::Outer), id);
        assert_eq!(id.partial_transpose(TransposeSide::Inner), id);

        // 2|Ω⟩⟨Ω| has entries 1 at ((i,i),(j,j)); swapping outer indices gives SWAP.
        let omega = BlockMatrix::from_flat(2, 2, omega_projector(2).scale(2.0)).unwrap();
        let pt = omega.partial_transpose(TransposeSide::Outer);
        assert_close(pt.flatten(), &swap(2), 1e-15);
        let pt_inner = omega.partial_transpose(TransposeSide::Inner);
        assert_close(pt_inner.flatten(), &swap(2), 1e-15);
    }

    #[test]
    fn partial_transpose_involution_and_norm() {
        let mut rng = seeded_rng(5);
        for (n, b) in [(2, 2), (3, 2), (2, 3), (4, 1)] {
            let m = BlockMatrix::from_flat(n, b, random::hermitian(&mut rng, n * b)).unwrap();
            for side in [TransposeSide::Outer, TransposeSide::Inner] {
                let once = m.partial_transpose(side);
                assert_eq!(once.partial_transpose(side), m);
                assert!((frobenius(once.flatten()) - frobenius(m.flatten())).abs() < 1e-12);
                assert!(hermitian_defect(once.flatten()) < 1e-12);
            }
        }
    }

    #[test]
    fn null_space_examples() {
        let inv = from_real_rows(&[&[2.0, 1.0], &[0.0, 1.0]]);
        assert_eq!(null_space(&inv, 1e-8).ncols(), 0);

        let z = ComplexMatrix::zeros(3, 3);
        assert_close(&null_space(&z, 1e-8), &identity(3), 0.0);

        let p = from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let k = null_space(&p, 1e-8);
        assert_eq!(k.ncols(), 1);
        assert!((k[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(k[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn null_space_wide_matrix() {
        let mut rng = seeded_rng(9);
        let l = random::ginibre(&mut rng, 2, 5);
        let k = null_space(&l, 1e-8);
        assert_eq!(k.ncols(), 3);
        assert!(frobenius(&(&l * &k)) <= 1e-8 * operator_norm(&l));
        assert!(frobenius(&(k.adjoint() * &k - identity(3))) <= 1e-10);
    }

    #[test]
    fn pseudoinverse_solves_consistent_systems() {
        let mut rng = seeded_rng(13);
        let a = random::ginibre(&mut rng, 3, 6);
        let x = random::ginibre(&mut rng, 6, 1);
        let b = &a * &x;
        let sol = pseudoinverse(&a, 1e-12) * &b;
        assert!(frobenius(&(&a * sol - b)) < 1e-10);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = seeded_rng(1);
        let u = random::unitary(&mut rng, 5);
        assert!(frobenius(&(u.adjoint() * &u - identity(5))) < 1e-12);
        let v = random::isometry(&mut rng, 5, 2);
        assert!(frobenius(&(v.adjoint() * &v - identity(2))) < 1e-12);
    }
}
