//! Defining sequences `(φ_k)` of *-maps on `M_d`.
//!
//! Finite tuples are stored as-is. Infinite vanishing sequences are stored as
//! a truncation plus `tail_bound`, an upper bound on `‖φ_k‖` for every omitted
//! index; every quantity derived from the truncation carries that bound as an
//! explicit error term.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{
    self, frobenius, null_space, operator_norm, random, seeded_rng, unvectorize, BlockMatrix,
    ComplexMatrix, C64,
};
use crate::superop::SuperOperator;

/// Relative singular-value cutoff used to detect the common kernel.
pub const KERNEL_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceKind {
    FiniteTuple,
    TruncatedVanishing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MapFlags {
    pub star: bool,
    pub unital: bool,
    pub homomorphism: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqEntry {
    map: SuperOperator,
    flags: MapFlags,
    norm: f64,
    hs_bound: f64,
}

impl SeqEntry {
    fn new(map: SuperOperator) -> Self {
        let flags = MapFlags {
            star: map.is_star_map(),
            unital: map.is_unital(1e-8).unwrap_or(false),
            homomorphism: map.is_homomorphism(1e-10),
        };
        let norm = map.hs_operator_norm();
        let hs_bound = map.hs_norm_bound();
        SeqEntry {
            map,
            flags,
            norm,
            hs_bound,
        }
    }

    pub fn map(&self) -> &SuperOperator {
        &self.map
    }

    pub fn flags(&self) -> MapFlags {
        self.flags
    }

    /// Operator norm estimate (Hilbert-Schmidt on both sides).
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Frobenius norm of the coefficients; never below [`norm`](Self::norm).
    pub fn hs_bound(&self) -> f64 {
        self.hs_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSequence {
    d: usize,
    entries: Vec<SeqEntry>,
    kind: SequenceKind,
    tail_bound: f64,
}

/// Named generating sequences for the classical cones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanonicalClass {
    /// `(id)`: completely positive maps.
    Cp,
    /// `(t)`: completely copositive maps.
    Ccp,
    /// `(id, t)`: decomposable maps.
    Decomposable,
}

impl FromStr for CanonicalClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cp" => Ok(CanonicalClass::Cp),
            "ccp" => Ok(CanonicalClass::Ccp),
            "decomposable" => Ok(CanonicalClass::Decomposable),
            other => Err(Error::InvalidArgument(format!(
                "unknown canonical class `{other}` (expected cp, ccp or decomposable)"
            ))),
        }
    }
}

impl fmt::Display for CanonicalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CanonicalClass::Cp => "cp",
            CanonicalClass::Ccp => "ccp",
            CanonicalClass::Decomposable => "decomposable",
        })
    }
}

impl MapSequence {
    /// A finite tuple of *-maps on `M_d`.
    pub fn finite(maps: Vec<SuperOperator>) -> Result<Self> {
        Self::build(maps, SequenceKind::FiniteTuple, 0.0)
    }

    /// Truncation of a vanishing sequence. Norms must be nonincreasing from
    /// `decay_from` (0-based) on, and `tail_bound` bounds every omitted norm.
    pub fn truncated(maps: Vec<SuperOperator>, decay_from: usize, tail_bound: f64) -> Result<Self> {
        if !(tail_bound.is_finite() && tail_bound >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tail bound must be finite and nonnegative, got {tail_bound}"
            )));
        }
        let seq = Self::build(maps, SequenceKind::TruncatedVanishing, tail_bound)?;
        let norms: Vec<f64> = seq.entries.iter().map(|e| e.norm).collect();
        let slack = 1e-12;
        if norms
            .iter()
            .skip(decay_from)
            .zip(norms.iter().skip(decay_from + 1))
            .any(|(a, b)| *b > a + slack)
        {
            return Err(Error::InvalidArgument(format!(
                "norms are not nonincreasing from index {decay_from}: {norms:?}"
            )));
        }
        Ok(seq)
    }

    /// `φ_k = ratio^(k−1) · id` for `k = 1..=len`, tail bound `ratio^len`.
    pub fn geometric_identity(d: usize, len: usize, ratio: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::InvalidArgument(format!(
                "ratio must lie in [0, 1), got {ratio}"
            )));
        }
        let maps = (0..len)
            .map(|k| SuperOperator::identity(d).scale(ratio.powi(k as i32)))
            .collect();
        Self::truncated(maps, 0, ratio.powi(len as i32))
    }

    pub fn canonical(class: CanonicalClass, d: usize) -> Self {
        let maps = match class {
            CanonicalClass::Cp => vec![SuperOperator::identity(d)],
            CanonicalClass::Ccp => vec![SuperOperator::transpose(d)],
            CanonicalClass::Decomposable => {
                vec![SuperOperator::identity(d), SuperOperator::transpose(d)]
            }
        };
        Self::finite(maps).expect("canonical maps are *-maps on M_d")
    }

    fn build(maps: Vec<SuperOperator>, kind: SequenceKind, tail_bound: f64) -> Result<Self> {
        let d = maps
            .first()
            .map(|m| m.input_dim())
            .ok_or_else(|| Error::InvalidArgument("sequence must have at least one entry".into()))?;
        let mut entries = Vec::with_capacity(maps.len());
        for (k, m) in maps.into_iter().enumerate() {
            if m.input_dim() != d || m.output_dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "entry {k} maps M_{} → M_{}, expected M_{d} → M_{d}",
                    m.input_dim(),
                    m.output_dim()
                )));
            }
            if !m.is_star_map() {
                return Err(Error::NotStarMap {
                    defect: m.star_defect(),
                });
            }
            entries.push(SeqEntry::new(m));
        }
        Ok(MapSequence {
            d,
            entries,
            kind,
            tail_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn entries(&self) -> &[SeqEntry] {
        &self.entries
    }

    pub fn maps(&self) -> impl Iterator<Item = &SuperOperator> {
        self.entries.iter().map(|e| &e.map)
    }

    pub fn all_unital(&self) -> bool {
        self.entries.iter().all(|e| e.flags.unital)
    }

    pub fn all_homomorphisms(&self) -> bool {
        self.entries.iter().all(|e| e.flags.homomorphism)
    }

    pub fn all_hs_isometries(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.map.is_hs_isometry(tol))
    }

    /// Coefficient matrices of all entries stacked vertically (`m d² x d²`).
    pub fn stacked_coeffs(&self) -> ComplexMatrix {
        let d2 = self.d * self.d;
        let mut out = ComplexMatrix::zeros(self.len() * d2, d2);
        for (k, e) in self.entries.iter().enumerate() {
            out.view_mut((k * d2, 0), (d2, d2)).copy_from(e.map.coeffs());
        }
        out
    }

    /// Orthonormal basis (columns, vectorized `M_d`) of `⋂ ker φ_k`.
    pub fn common_kernel(&self) -> ComplexMatrix {
        null_space(&self.stacked_coeffs(), KERNEL_RANK_TOL)
    }
}

#[derive(Debug, Clone)]
pub struct KernelVerdict {
    pub holds: bool,
    pub kernel_dim: usize,
    /// Largest `‖φ(v)‖_F` over the kernel basis.
    pub max_violation: f64,
    /// Kernel basis as matrices in `M_d`.
    pub basis: Vec<ComplexMatrix>,
}

/// Necessary condition `⋂ ker φ_k ⊆ ker φ`.
pub fn kernel_condition(seq: &MapSequence, phi: &SuperOperator, tol: f64) -> Result<KernelVerdict> {
    if phi.input_dim() != seq.dim() {
        return Err(Error::DimensionMismatch(format!(
            "target acts on M_{}, sequence on M_{}",
            phi.input_dim(),
            seq.dim()
        )));
    }
    let d = seq.dim();
    let kernel = seq.common_kernel();
    let basis: Vec<ComplexMatrix> = (0..kernel.ncols())
        .map(|c| {
            let v: Vec<C64> = kernel.column(c).iter().cloned().collect();
            unvectorize(&v, d, d)
        })
        .collect();
    let max_violation = basis
        .iter()
        .map(|v| frobenius(&phi.apply(v)))
        .fold(0.0, f64::max);
    Ok(KernelVerdict {
        holds: max_violation <= tol,
        kernel_dim: basis.len(),
        max_violation,
        basis,
    })
}

#[derive(Debug, Clone)]
pub struct XiEmbedding {
    /// `diag{φ_1(a), …, φ_m(a)}`.
    pub blocks: BlockMatrix,
    /// `tail_bound · ‖a‖`: spatial-norm distance to the untruncated embedding.
    pub truncation_error: f64,
}

/// `ξ(a) = Σ_k E_kk ⊗ φ_k(a)`.
pub fn xi_embed(a: &ComplexMatrix, seq: &MapSequence) -> Result<XiEmbedding> {
    if a.shape() != (seq.dim(), seq.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "argument is {:?}, sequence acts on M_{}",
            a.shape(),
            seq.dim()
        )));
    }
    let diag: Vec<ComplexMatrix> = seq.maps().map(|m| m.apply(a)).collect();
    Ok(XiEmbedding {
        blocks: BlockMatrix::block_diagonal(&diag)?,
        truncation_error: seq.tail_bound() * operator_norm(a),
    })
}

/// Spatial norm of a block-diagonal element: the largest block operator norm.
pub fn spatial_norm(blocks: &BlockMatrix) -> f64 {
    (0..blocks.outer())
        .map(|k| operator_norm(&blocks.block(k, k)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct ClosureEvidence {
    /// Sampling evidence only; never a proof that `ξ(M_d)` is an algebra.
    pub holds: bool,
    /// Largest relative least-squares residual of `ξ(a)ξ(b)` against span `ξ(M_d)`.
    pub max_product_residual: f64,
    /// Largest `‖ξ(a)† − ξ(a†)‖_F`.
    pub max_star_defect: f64,
}

/// Samples products `ξ(a)ξ(b)` and checks they stay in the span of `ξ(M_d)`.
pub fn algebra_closure_check(
    seq: &MapSequence,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<ClosureEvidence> {
    let d = seq.dim();
    let m = seq.len();
    let stacked = seq.stacked_coeffs();
    // Orthonormal basis of the range of ξ (as stacked vectorized diagonals).
    let svd = stacked.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > KERNEL_RANK_TOL * smax)
        .collect();
    let mut range = ComplexMatrix::zeros(stacked.nrows(), cols.len());
    for (c, &k) in cols.iter().enumerate() {
        range.set_column(c, &u.column(k));
    }

    let mut rng = seeded_rng(seed);
    let mut max_product_residual: f64 = 0.0;
    let mut max_star_defect: f64 = 0.0;
    for _ in 0..samples {
        let a = random::ginibre(&mut rng, d, d);
        let b = random::ginibre(&mut rng, d, d);
        let xa = xi_embed(&a, seq)?;
        let xb = xi_embed(&b, seq)?;
        let mut prod = Vec::with_capacity(m * d * d);
        for k in 0..m {
            let blk = xa.blocks.block(k, k) * xb.blocks.block(k, k);
            prod.extend(linalg::vectorize(&blk));
        }
        let p = ComplexMatrix::from_vec(prod.len(), 1, prod);
        let proj = &range * (range.adjoint() * &p);
        let denom = frobenius(&p).max(f64::MIN_POSITIVE);
        max_product_residual = max_product_residual.max(frobenius(&(&p - proj)) / denom);

        let xa_adj = xi_embed(&a.adjoint(), seq)?;
        max_star_defect = max_star_defect
            .max(frobenius(&(xa.blocks.flatten().adjoint() - xa_adj.blocks.flatten())));
    }
    Ok(ClosureEvidence {
        holds: max_product_residual <= tol && max_star_defect <= tol,
        max_product_residual,
        max_star_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, matrix_unit, seeded_rng};

    #[test]
    fn canonical_sequences() {
        let cp = MapSequence::canonical(CanonicalClass::Cp, 2);
        assert_eq!(cp.len(), 1);
        assert_eq!(cp.entries()[0].map(), &SuperOperator::identity(2));

        let ccp = MapSequence::canonical("ccp".parse().unwrap(), 2);
        assert_eq!(ccp.entries()[0].map(), &SuperOperator::transpose(2));

        let dec = MapSequence::canonical(CanonicalClass::Decomposable, 3);
        assert_eq!(dec.len(), 2);
        assert_eq!(dec.entries()[0].map(), &SuperOperator::identity(3));
        assert_eq!(dec.entries()[1].map(), &SuperOperator::transpose(3));
        assert!(dec.entries().iter().all(|e| e.flags().unital && e.flags().star));
        assert!(dec.entries()[0].flags().homomorphism);
        assert!(!dec.entries()[1].flags().homomorphism);

        assert!("positive".parse::<CanonicalClass>().is_err());
    }

    #[test]
    fn rejects_non_star_entries() {
        let mut rng = seeded_rng(1);
        let bad = SuperOperator::from_choi(2, 2, random::ginibre(&mut rng, 4, 4)).unwrap();
        assert!(matches!(
            MapSequence::finite(vec![bad]),
            Err(Error::NotStarMap { .. })
        ));
    }

    #[test]
    fn truncated_requires_decay() {
        let maps = vec![
            SuperOperator::identity(2).scale(0.5),
            SuperOperator::identity(2),
        ];
        assert!(MapSequence::truncated(maps.clone(), 0, 0.1).is_err());
        assert!(MapSequence::truncated(maps, 1, 0.1).is_ok());
        let g = MapSequence::geometric_identity(2, 4, 0.5).unwrap();
        assert_eq!(g.kind(), SequenceKind::TruncatedVanishing);
        assert!((g.tail_bound() - 1.0 / 16.0).abs() < 1e-15);
        assert!((g.entries()[3].norm() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn kernel_condition_trivial_kernel() {
        let seq = MapSequence::canonical(CanonicalClass::Cp, 2);
        let mut rng = seeded_rng(2);
        let phi = SuperOperator::from_choi(2, 3, random::hermitian(&mut rng, 6)).unwrap();
        let v = kernel_condition(&seq, &phi, 1e-8).unwrap();
        assert!(v.holds);
        assert_eq!(v.kernel_dim, 0);
    }

    #[test]
    fn kernel_condition_detects_violation() {
        // Both entries kill the symmetric off-diagonal E_12 + E_21.
        let kill = |x: &ComplexMatrix| {
            let s = (x[(0, 1)] + x[(1, 0)]) * 0.5;
            let mut y = x.clone();
            y[(0, 1)] -= s;
            y[(1, 0)] -= s;
            y
        };
        let p1 = SuperOperator::from_fn(2, 2, kill).unwrap();
        let p2 = SuperOperator::from_fn(2, 2, |x| kill(x).transpose()).unwrap();
        let seq = MapSequence::finite(vec![p1, p2]).unwrap();
        let v = kernel_condition(&seq, &SuperOperator::identity(2), 1e-8).unwrap();
        assert!(!v.holds);
        assert_eq!(v.kernel_dim, 1);
        let k = &v.basis[0];
        assert!((k[(0, 1)] - k[(1, 0)]).norm() < 1e-12);
        assert!(k[(0, 0)].norm() < 1e-12 && k[(1, 1)].norm() < 1e-12);

        let zero = SuperOperator::zero(2, 3);
        assert!(kernel_condition(&seq, &zero, 1e-8).unwrap().holds);
    }

    #[test]
    fn xi_embed_examples() {
        let seq = MapSequence::canonical(CanonicalClass::Decomposable, 2);
        let x = xi_embed(&matrix_unit(2, 0, 1), &seq).unwrap();
        assert_eq!(x.blocks.block(0, 0), matrix_unit(2, 0, 1));
        assert_eq!(x.blocks.block(1, 1), matrix_unit(2, 1, 0));
        assert_eq!(x.blocks.block(0, 1), ComplexMatrix::zeros(2, 2));
        assert_eq!(x.truncation_error, 0.0);

        let x = xi_embed(&linalg::identity(2), &seq).unwrap();
        assert_eq!(x.blocks.flatten(), &linalg::identity(4));
    }

    #[test]
    fn xi_truncation_error_matches_longer_truncation() {
        let mut rng = seeded_rng(3);
        let k = 6;
        let short = MapSequence::geometric_identity(2, k, 0.5).unwrap();
        let long = MapSequence::geometric_identity(2, k + 5, 0.5).unwrap();
        let a = random::ginibre(&mut rng, 2, 2);
        let xs = xi_embed(&a, &short).unwrap();
        let xl = xi_embed(&a, &long).unwrap();
        // Pad the short embedding with zero blocks and measure the spatial norm gap.
        let diag: Vec<ComplexMatrix> = (0..k + 5)
            .map(|j| {
                let l = xl.blocks.block(j, j);
                if j < k {
                    l - xs.blocks.block(j, j)
                } else {
                    l
                }
            })
            .collect();
        let gap = spatial_norm(&BlockMatrix::block_diagonal(&diag).unwrap());
        let expected = 2f64.powi(1 - (k as i32 + 1)) * operator_norm(&a);
        assert!((gap - expected).abs() < 1e-12);
        assert!((xs.truncation_error - gap).abs() < 1e-12);
    }

    #[test]
    fn xi_is_linear_and_star_preserving() {
        let mut rng = seeded_rng(4);
        let u = random::unitary(&mut rng, 3);
        let seq = MapSequence::finite(vec![
            SuperOperator::identity(3),
            SuperOperator::transpose(3),
            SuperOperator::unitary_conjugation(&u).unwrap(),
        ])
        .unwrap();
        for _ in 0..20 {
            let a = random::ginibre(&mut rng, 3, 3);
            let b = random::ginibre(&mut rng, 3, 3);
            let s = c64(0.3, -1.1);
            let lhs = xi_embed(&(&a * s + &b), &seq).unwrap();
            let rhs = xi_embed(&a, &seq).unwrap().blocks.flatten() * s
                + xi_embed(&b, &seq).unwrap().blocks.flatten();
            assert!(frobenius(&(lhs.blocks.flatten() - rhs)) < 1e-12);
            let adj = xi_embed(&a.adjoint(), &seq).unwrap();
            let orig = xi_embed(&a, &seq).unwrap();
            assert!(frobenius(&(adj.blocks.flatten() - orig.blocks.flatten().adjoint())) <= 1e-12);
        }
    }

    #[test]
    fn closure_check_for_homomorphisms() {
        let mut rng = seeded_rng(5);
        let u = random::unitary(&mut rng, 2);
        let seq = MapSequence::finite(vec![
            SuperOperator::identity(2),
            SuperOperator::unitary_conjugation(&u).unwrap(),
        ])
        .unwrap();
        assert!(seq.all_homomorphisms());
        let ev = algebra_closure_check(&seq, 50, 1e-10, 7).unwrap();
        assert!(ev.holds, "{ev:?}");

        let single = MapSequence::finite(vec![SuperOperator::unitary_conjugation(&u).unwrap()]).unwrap();
        assert!(algebra_closure_check(&single, 20, 1e-10, 8).unwrap().holds);
    }

    #[test]
    fn closure_check_identity_transpose_is_not_an_algebra() {
        // diag(a, aᵀ)·diag(b, bᵀ) = diag(ab, (ba)ᵀ) lies in the span only if ab = ba.
        let seq = MapSequence::canonical(CanonicalClass::Decomposable, 2);
        let ev = algebra_closure_check(&seq, 50, 1e-8, 9).unwrap();
        assert!(!ev.holds);
        assert!(ev.max_product_residual > 1e-2, "{ev:?}");
        assert!(ev.max_star_defect < 1e-12);
    }
}
