//! The cones `Γ_n⁺(φ)` of block matrices `[a_ij] ∈ M_n(M_d)` whose blockwise
//! images `[φ_k(a_ij)]` are PSD for every `k`, and a see-saw search for
//! elements of `Γ_n⁺` that a candidate map sends outside the PSD cone.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    frobenius, min_eigenvalue, psd_project_matrix, random, seeded_rng,
    symmetrize, BlockMatrix, ComplexMatrix, HermitianMatrix, C64,
};
use crate::seq::MapSequence;
use crate::superop::SuperOperator;

/// Membership tolerance for `Γ_n⁺`.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// A candidate counts as a violation only below this value.
pub const VIOLATION_THRESHOLD: f64 = -1e-6;
const ISOMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GammaVerdict {
    pub member: bool,
    /// `λ_min([φ_k(a_ij)])` for each `k`.
    pub margins: Vec<f64>,
}

impl GammaVerdict {
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// `(id_n ⊗ φ)(A)`: `φ` applied to every block.
pub fn blockwise(phi: &SuperOperator, a: &BlockMatrix) -> Result<BlockMatrix> {
    if a.block_size() != phi.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "blocks have size {}, map acts on M_{}",
            a.block_size(),
            phi.input_dim()
        )));
    }
    a.map_blocks(|b| phi.apply(b))
}

pub fn gamma_membership(a: &BlockMatrix, seq: &MapSequence, tol: f64) -> Result<GammaVerdict> {
    if a.block_size() != seq.dim() {
        return Err(Error::DimensionMismatch(format!(
            "blocks have size {}, sequence acts on M_{}",
            a.block_size(),
            seq.dim()
        )));
    }
    HermitianMatrix::new(a.flatten().clone())?;
    let mut margins = Vec::with_capacity(seq.len());
    for phi in seq.maps() {
        margins.push(min_eigenvalue(blockwise(phi, a)?.flatten()));
    }
    Ok(GammaVerdict {
        member: margins.iter().all(|&m| m >= -tol),
        margins,
    })
}

/// Projects onto `{A : (id_n ⊗ φ)(A) ⪰ 0}` for an HS-isometry `φ`:
/// map forward, clip, map back with the adjoint (= inverse).
fn pullback_project(phi: &SuperOperator, adj: &SuperOperator, a: &BlockMatrix) -> BlockMatrix {
    let fwd = a.map_blocks(|b| phi.apply(b)).expect("square blocks");
    let clipped = BlockMatrix::from_flat(a.outer(), a.block_size(), psd_project_matrix(fwd.flatten()))
        .expect("same shape");
    let back = clipped.map_blocks(|b| adj.apply(b)).expect("square blocks");
    BlockMatrix::from_flat(a.outer(), a.block_size(), symmetrize(back.flatten())).expect("same shape")
}

fn require_isometries(seq: &MapSequence) -> Result<()> {
    if seq.all_hs_isometries(ISOMETRY_TOL) {
        Ok(())
    } else {
        Err(Error::Unsupported(
            "projection onto Γ needs every sequence entry to be an HS-isometry".into(),
        ))
    }
}

/// Cyclic Dykstra over the pullback cones, run until the iterate is a member
/// of `Γ_n⁺(φ)` (at `tol / 10`) or stationary. Returns the iterate and the
/// number of sweeps used.
pub fn gamma_project(
    a: &BlockMatrix,
    seq: &MapSequence,
    max_iter: usize,
    tol: f64,
) -> Result<(BlockMatrix, usize)> {
    require_isometries(seq)?;
    let maps: Vec<(SuperOperator, SuperOperator)> = seq
        .maps()
        .map(|m| (m.clone(), m.adjoint_map()))
        .collect();
    let (n, d) = (a.outer(), a.block_size());
    let mut x = a.flatten().clone();
    let mut incr = vec![ComplexMatrix::zeros(n * d, n * d); maps.len()];
    for sweep in 1..=max_iter.max(1) {
        let before = x.clone();
        for (k, (phi, adj)) in maps.iter().enumerate() {
            let y = &x + &incr[k];
            let p = pullback_project(phi, adj, &BlockMatrix::from_flat(n, d, y.clone())?);
            incr[k] = y - p.flatten();
            x = p.into_flat();
        }
        let moved = frobenius(&(&x - &before));
        let out = BlockMatrix::from_flat(n, d, x)?;
        // Stop once the iterate is a member with margin to spare, or stationary.
        let verdict = gamma_membership(&out, seq, 0.1 * tol)?;
        if verdict.member || (moved <= 1e-14 * frobenius(out.flatten()).max(1.0) && gamma_membership(&out, seq, tol)?.member) {
            return Ok((out, sweep));
        }
        x = out.into_flat();
    }
    let out = BlockMatrix::from_flat(n, d, x)?;
    if gamma_membership(&out, seq, tol)?.member {
        Ok((out, max_iter))
    } else {
        Err(Error::Budget { iterations: max_iter })
    }
}

/// Random element of `Γ_n⁺(φ)`: the projection of a random Hermitian matrix.
/// Members are returned unchanged.
pub fn gamma_sample_from(
    start: &BlockMatrix,
    seq: &MapSequence,
    max_iter: usize,
    tol: f64,
) -> Result<BlockMatrix> {
    if gamma_membership(start, seq, tol)?.member {
        return Ok(start.clone());
    }
    Ok(gamma_project(start, seq, max_iter, tol)?.0)
}

pub fn gamma_sample(
    seq: &MapSequence,
    n: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut impl Rng,
) -> Result<BlockMatrix> {
    require_isometries(seq)?;
    let d = seq.dim();
    // A positive shift keeps samples away from the apex of the cone.
    let shift = rng.random_range(0.0..1.0);
    let mut h = random::hermitian(rng, n * d);
    for i in 0..n * d {
        h[(i, i)] += C64::new(shift, 0.0);
    }
    gamma_sample_from(&BlockMatrix::from_flat(n, d, h)?, seq, max_iter, tol)
}

/// Fallback for sequences with non-isometric entries: random PSD matrices of
/// random rank, kept when they pass membership.
pub fn gamma_sample_rejection(
    seq: &MapSequence,
    n: usize,
    attempts: usize,
    tol: f64,
    rng: &mut impl Rng,
) -> Result<BlockMatrix> {
    let d = seq.dim();
    for _ in 0..attempts {
        let rank = rng.random_range(1..=n * d);
        let a = BlockMatrix::from_flat(n, d, random::psd(rng, n * d, rank))?;
        if gamma_membership(&a, seq, tol)?.member {
            return Ok(a);
        }
    }
    Err(Error::Budget { iterations: attempts })
}

#[derive(Debug, Clone)]
pub struct ViolationOptions {
    pub restarts: usize,
    pub max_steps: usize,
    pub projection_iters: usize,
    pub seed: u64,
}

impl Default for ViolationOptions {
    fn default() -> Self {
        ViolationOptions {
            restarts: 16,
            max_steps: 300,
            projection_iters: 2_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    SeeSaw,
    /// Non-isometric sequence: only sampled members are evaluated.
    RejectionSampling,
}

#[derive(Debug, Clone)]
pub enum ViolationOutcome {
    Violation {
        a: BlockMatrix,
        v: ComplexMatrix,
        value: f64,
    },
    /// Not a proof of anything.
    NoneFound { best: f64 },
}

#[derive(Debug, Clone)]
pub struct ViolationReport {
    pub outcome: ViolationOutcome,
    pub method: SearchMethod,
}

/// Independent check of a reported violation: `A ∈ Γ_n⁺` at
/// [`MEMBERSHIP_TOL`], trace one, `v` a unit vector and
/// `⟨v, (id_n ⊗ φ)(A) v⟩ < VIOLATION_THRESHOLD`. Returns the recomputed value.
pub fn verify_violation(
    phi: &SuperOperator,
    seq: &MapSequence,
    a: &BlockMatrix,
    v: &ComplexMatrix,
) -> Result<Option<f64>> {
    let member = gamma_membership(a, seq, MEMBERSHIP_TOL)?.member;
    let trace: C64 = a.flatten().trace();
    if !member || (trace.re - 1.0).abs() > 1e-9 || trace.im.abs() > 1e-9 {
        return Ok(None);
    }
    if v.shape() != (a.flatten().nrows(), 1) || (frobenius(v) - 1.0).abs() > 1e-9 {
        return Ok(None);
    }
    let image = blockwise(phi, a)?;
    let value = (v.adjoint() * image.flatten() * v)[(0, 0)].re;
    Ok((value < VIOLATION_THRESHOLD).then_some(value))
}

fn bottom_pair(m: &ComplexMatrix) -> (f64, ComplexMatrix) {
    let e = HermitianMatrix::new_unchecked(symmetrize(m)).eigh();
    let n = e.vectors.nrows();
    (
        e.values[0],
        ComplexMatrix::from_column_slice(n, 1, e.vectors.column(0).as_slice()),
    )
}

fn trace_normalized(a: BlockMatrix) -> Option<BlockMatrix> {
    let t = a.flatten().trace().re;
    if t <= 1e-12 {
        return None;
    }
    let (n, d) = (a.outer(), a.block_size());
    BlockMatrix::from_flat(n, d, a.into_flat().unscale(t)).ok()
}

/// Searches `Γ_n⁺(φ_seq)` for `A` with `(id_n ⊗ φ)(A)` not PSD.
///
/// Each restart starts from a projected random Hermitian matrix and
/// alternates `v ← bottom eigenvector of (id_n ⊗ φ)(A)` with a projected
/// subgradient step `A ← Π_Γ(A − η (id_n ⊗ φ*)(vv†))` and trace
/// renormalization; the step length is halved whenever it fails to improve.
/// Every reported violation has passed [`verify_violation`].
pub fn criterion_violation_search(
    phi: &SuperOperator,
    seq: &MapSequence,
    n: usize,
    opts: &ViolationOptions,
) -> Result<ViolationReport> {
    if phi.input_dim() != seq.dim() {
        return Err(Error::DimensionMismatch(format!(
            "map acts on M_{}, sequence on M_{}",
            phi.input_dim(),
            seq.dim()
        )));
    }
    if !phi.is_star_map() {
        return Err(Error::NotStarMap {
            defect: phi.star_defect(),
        });
    }
    let d = seq.dim();
    let adj = phi.adjoint_map();
    let isometric = seq.all_hs_isometries(ISOMETRY_TOL);
    let method = if isometric {
        SearchMethod::SeeSaw
    } else {
        SearchMethod::RejectionSampling
    };

    let evaluate = |a: &BlockMatrix| -> Result<(f64, ComplexMatrix)> {
        Ok(bottom_pair(blockwise(phi, a)?.flatten()))
    };

    let mut best = f64::INFINITY;
    let mut best_hit: Option<(BlockMatrix, ComplexMatrix, f64)> = None;
    let mut consider = |a: &BlockMatrix, val: f64, v: &ComplexMatrix| -> Result<()> {
        best = best.min(val);
        if val < VIOLATION_THRESHOLD && best_hit.as_ref().is_none_or(|h| val < h.2) {
            if let Some(value) = verify_violation(phi, seq, a, v)? {
                best_hit = Some((a.clone(), v.clone(), value));
            }
        }
        Ok(())
    };

    for r in 0..opts.restarts.max(1) {
        let mut rng = seeded_rng(opts.seed.wrapping_add(r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        if !isometric {
            for _ in 0..opts.max_steps {
                let Ok(a) = gamma_sample_rejection(seq, n, 50, MEMBERSHIP_TOL, &mut rng) else {
                    continue;
                };
                let Some(a) = trace_normalized(a) else { continue };
                let (val, v) = evaluate(&a)?;
                consider(&a, val, &v)?;
            }
            continue;
        }

        let start = match gamma_sample(seq, n, opts.projection_iters, MEMBERSHIP_TOL, &mut rng) {
            Ok(a) => a,
            Err(Error::Budget { .. }) => continue,
            Err(e) => return Err(e),
        };
        let Some(mut a) = trace_normalized(start) else { continue };
        let (mut val, mut v) = evaluate(&a)?;
        consider(&a, val, &v)?;
        let mut step = 1.0;
        for _ in 0..opts.max_steps {
            let grad = blockwise(&adj, &BlockMatrix::from_flat(n, d, &v * v.adjoint())?)?;
            let moved = BlockMatrix::from_flat(n, d, a.flatten() - grad.flatten() * C64::new(step, 0.0))?;
            let candidate = match gamma_project(&moved, seq, opts.projection_iters, MEMBERSHIP_TOL) {
                Ok((p, _)) => trace_normalized(p),
                Err(Error::Budget { .. }) => None,
                Err(e) => return Err(e),
            };
            match candidate {
                Some(c) => {
                    let (cval, cv) = evaluate(&c)?;
                    if cval < val - 1e-13 {
                        a = c;
                        val = cval;
                        v = cv;
                        consider(&a, val, &v)?;
                        step = (step * 1.5).min(4.0);
                        continue;
                    }
                    step *= 0.5;
                }
                None => step *= 0.5,
            }
            if step < 1e-8 {
                break;
            }
        }
    }

    let outcome = match best_hit {
        Some((a, v, value)) => ViolationOutcome::Violation { a, v, value },
        None => ViolationOutcome::NoneFound {
            best: if best.is_finite() { best } else { 0.0 },
        },
    };
    Ok(ViolationReport { outcome, method })
}

/// `⟨v, (id_n ⊗ φ)(A) v⟩` for a given pair; used to evaluate known candidates.
pub fn violation_value(phi: &SuperOperator, a: &BlockMatrix, v: &ComplexMatrix) -> Result<f64> {
    let image = blockwise(phi, a)?;
    Ok((v.adjoint() * image.flatten() * v)[(0, 0)].re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, TransposeSide, ONE};
    use crate::seq::CanonicalClass;

    fn omega(d: usize) -> ComplexMatrix {
        let mut v = ComplexMatrix::zeros(d * d, 1);
        for i in 0..d {
            v[(i * d + i, 0)] = c64(1.0 / (d as f64).sqrt(), 0.0);
        }
        v
    }

    fn id_t(d: usize) -> MapSequence {
        MapSequence::canonical(CanonicalClass::Decomposable, d)
    }

    #[test]
    fn membership_of_maximally_mixed() {
        let (n, d) = (2, 3);
        let a = BlockMatrix::from_flat(n, d, ComplexMatrix::identity(n * d, n * d).unscale((n * d) as f64)).unwrap();
        let v = gamma_membership(&a, &id_t(d), MEMBERSHIP_TOL).unwrap();
        assert!(v.member);
        for m in v.margins {
            assert!((m - 1.0 / 6.0).abs() < 1e-14);
        }
    }

    #[test]
    fn maximally_entangled_projector_is_not_ppt() {
        let w = omega(2);
        let a = BlockMatrix::from_flat(2, 2, &w * w.adjoint()).unwrap();
        let v = gamma_membership(&a, &id_t(2), MEMBERSHIP_TOL).unwrap();
        assert!(!v.member);
        // Oracle: the blockwise transpose of the projector is SWAP / 2.
        let mut swap = ComplexMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                swap[(i * 2 + j, j * 2 + i)] = c64(0.5, 0.0);
            }
        }
        let oracle = swap.symmetric_eigen().eigenvalues.min();
        assert!((oracle + 0.5).abs() < 1e-14);
        assert!(v.margins[0].abs() < 1e-12);
        assert!((v.margins[1] - oracle).abs() < 1e-12);
    }

    #[test]
    fn classical_mixture_is_member() {
        let mut a = ComplexMatrix::zeros(4, 4);
        a[(0, 0)] = c64(0.5, 0.0);
        a[(3, 3)] = c64(0.5, 0.0);
        let a = BlockMatrix::from_flat(2, 2, a).unwrap();
        assert!(gamma_membership(&a, &id_t(2), MEMBERSHIP_TOL).unwrap().member);
    }

    #[test]
    fn membership_rejects_non_hermitian_and_mismatch() {
        let mut a = ComplexMatrix::zeros(4, 4);
        a[(0, 1)] = ONE;
        let a = BlockMatrix::from_flat(2, 2, a).unwrap();
        assert!(matches!(gamma_membership(&a, &id_t(2), 1e-8), Err(Error::NotHermitian { .. })));
        let b = BlockMatrix::from_flat(2, 3, ComplexMatrix::identity(6, 6)).unwrap();
        assert!(matches!(gamma_membership(&b, &id_t(2), 1e-8), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sample_for_identity_is_psd() {
        let seq = MapSequence::canonical(CanonicalClass::Cp, 2);
        let mut rng = seeded_rng(3);
        for _ in 0..10 {
            let a = gamma_sample(&seq, 3, 100, MEMBERSHIP_TOL, &mut rng).unwrap();
            assert!(min_eigenvalue(a.flatten()) >= -1e-12);
        }
    }

    #[test]
    fn samples_for_id_t_are_ppt() {
        let seq = id_t(2);
        let mut rng = seeded_rng(4);
        for _ in 0..20 {
            let a = gamma_sample(&seq, 2, 2_000, MEMBERSHIP_TOL, &mut rng).unwrap();
            // Independent route: partial transpose on the inner factor.
            let pt = a.partial_transpose(TransposeSide::Inner);
            assert!(min_eigenvalue(a.flatten()) >= -1e-8);
            assert!(min_eigenvalue(pt.flatten()) >= -1e-8);
        }
    }

    #[test]
    fn members_are_fixed_points() {
        let a = BlockMatrix::from_flat(2, 2, ComplexMatrix::identity(4, 4)).unwrap();
        let out = gamma_sample_from(&a, &id_t(2), 10, MEMBERSHIP_TOL).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn sampling_refuses_non_isometries() {
        let seq = MapSequence::finite(vec![SuperOperator::trace_and_replace(2, 2)]).unwrap();
        let mut rng = seeded_rng(5);
        assert!(matches!(
            gamma_sample(&seq, 2, 10, MEMBERSHIP_TOL, &mut rng),
            Err(Error::Unsupported(_))
        ));
        let a = gamma_sample_rejection(&seq, 2, 10, MEMBERSHIP_TOL, &mut rng).unwrap();
        assert!(gamma_membership(&a, &seq, MEMBERSHIP_TOL).unwrap().member);
    }

    #[test]
    fn transpose_violates_cp_cone() {
        let phi = SuperOperator::transpose(2);
        let seq = MapSequence::canonical(CanonicalClass::Cp, 2);
        let w = omega(2);
        let known = BlockMatrix::from_flat(2, 2, &w * w.adjoint()).unwrap();
        let (val, v) = bottom_pair(blockwise(&phi, &known).unwrap().flatten());
        assert!((val + 0.5).abs() < 1e-12);
        assert!(verify_violation(&phi, &seq, &known, &v).unwrap().is_some());

        let opts = ViolationOptions { restarts: 4, ..Default::default() };
        let report = criterion_violation_search(&phi, &seq, 2, &opts).unwrap();
        assert_eq!(report.method, SearchMethod::SeeSaw);
        match report.outcome {
            ViolationOutcome::Violation { a, v, value } => {
                assert!(value <= -0.49, "value {value}");
                assert_eq!(verify_violation(&phi, &seq, &a, &v).unwrap(), Some(value));
            }
            ViolationOutcome::NoneFound { best } => panic!("no violation, best {best}"),
        }
    }

    #[test]
    fn cp_maps_have_no_violations() {
        let mut rng = seeded_rng(6);
        let phi = SuperOperator::random_cp(&mut rng, 2, 2, 2);
        let opts = ViolationOptions { restarts: 3, max_steps: 60, ..Default::default() };
        let report = criterion_violation_search(&phi, &id_t(2), 2, &opts).unwrap();
        match report.outcome {
            ViolationOutcome::NoneFound { best } => assert!(best >= -1e-8, "best {best}"),
            ViolationOutcome::Violation { value, .. } => panic!("spurious violation {value}"),
        }
    }

    #[test]
    fn choi_map_search_reports_only_verified_violations() {
        let phi = SuperOperator::choi_type_map(2.0, 0.0, 1.0);
        let seq = id_t(3);
        let opts = ViolationOptions { restarts: 2, max_steps: 60, ..Default::default() };
        let report = criterion_violation_search(&phi, &seq, 3, &opts).unwrap();
        if let ViolationOutcome::Violation { a, v, value } = report.outcome {
            assert!(value < VIOLATION_THRESHOLD);
            assert!(gamma_membership(&a, &seq, MEMBERSHIP_TOL).unwrap().member);
            assert!((violation_value(&phi, &a, &v).unwrap() - value).abs() < 1e-12);
        }
    }
}
