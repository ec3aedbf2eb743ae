//! Deterministic test corpus: fixed regression instances plus seeded random
//! families over `(id)`, `(t)`, `(id, t)`, unitary conjugations, truncated
//! vanishing sequences and sequences with a common kernel.

use phidecomp::linalg::{c64, identity, random, seeded_rng, ComplexMatrix};
use phidecomp::superop::{compose, SuperOperator};
use rand::Rng;

use crate::instance::{matrix_to_json, Instance, InstanceFile, InstanceOptions, SequenceEntry};

/// What a verified verdict must not contradict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    Feasible,
    Infeasible,
    Unknown,
}

impl Expectation {
    pub fn as_str(self) -> &'static str {
        match self {
            Expectation::Feasible => "feasible",
            Expectation::Infeasible => "infeasible",
            Expectation::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub file: InstanceFile,
    pub expected: Expectation,
}

impl CorpusEntry {
    pub fn name(&self) -> &str {
        self.file.name.as_deref().unwrap_or("unnamed")
    }

    pub fn instance(&self) -> Instance {
        self.file.validate().expect("corpus instances are valid")
    }
}

/// Budget for corpus runs; the generated instances are small.
pub const CORPUS_MAX_ITER: usize = 20_000;

fn entry(name: String, target: &SuperOperator, seq: Vec<SequenceEntry>, expected: Expectation) -> CorpusEntry {
    let mut file = InstanceFile::from_parts(&name, target, seq);
    file.options = InstanceOptions {
        max_iter: Some(CORPUS_MAX_ITER),
        ..InstanceOptions::default()
    };
    CorpusEntry { file, expected }
}

fn id_t() -> Vec<SequenceEntry> {
    vec![SequenceEntry::Identity, SequenceEntry::Transpose]
}

/// `X ↦ diag(X)` on `M_d`, as raw coefficients.
pub fn pinching(d: usize) -> SuperOperator {
    SuperOperator::from_fn(d, d, |x| ComplexMatrix::from_fn(d, d, |i, j| if i == j { x[(i, j)] } else { c64(0.0, 0.0) }))
        .expect("shape is consistent")
}

pub fn pinching_entry(d: usize) -> SequenceEntry {
    SequenceEntry::Custom {
        coeffs: matrix_to_json(pinching(d).coeffs()),
    }
}

/// `X ↦ tr(X)·I − X`.
pub fn reduction_map(d: usize) -> SuperOperator {
    SuperOperator::from_fn(d, d, |x| identity(d) * x.trace() - x).expect("shape is consistent")
}

fn fixed() -> Vec<CorpusEntry> {
    use Expectation::*;
    let mut out = vec![
        entry("identity_d2".into(), &SuperOperator::identity(2), vec![SequenceEntry::Identity], Feasible),
        entry("identity_d3_id_t".into(), &SuperOperator::identity(3), id_t(), Feasible),
        entry("transpose_d2".into(), &SuperOperator::transpose(2), id_t(), Feasible),
        entry("transpose_d3".into(), &SuperOperator::transpose(3), id_t(), Feasible),
        entry("transpose_d2_t".into(), &SuperOperator::transpose(2), vec![SequenceEntry::Transpose], Feasible),
        entry("transpose_d2_id".into(), &SuperOperator::transpose(2), vec![SequenceEntry::Identity], Infeasible),
        entry("choi_map".into(), &SuperOperator::choi_type_map(2.0, 0.0, 1.0), id_t(), Infeasible),
        entry("choi_map_id".into(), &SuperOperator::choi_type_map(2.0, 0.0, 1.0), vec![SequenceEntry::Identity], Infeasible),
        entry("reduction_d2".into(), &reduction_map(2), id_t(), Feasible),
        entry("reduction_d3".into(), &reduction_map(3), id_t(), Unknown),
        entry("trace_replace_d3_h2".into(), &SuperOperator::trace_and_replace(3, 2), vec![SequenceEntry::Identity], Feasible),
        entry("negated_identity_d2".into(), &SuperOperator::identity(2).scale(-1.0), id_t(), Infeasible),
        entry("pinching_kernel_d2".into(), &SuperOperator::identity(2), vec![pinching_entry(2)], Infeasible),
        entry("zero_d2_h3".into(), &SuperOperator::zero(2, 3), id_t(), Feasible),
    ];
    let mut geo = entry(
        "geometric_identity_k3".into(),
        &SuperOperator::identity(2).scale(0.5),
        vec![SequenceEntry::Identity; 3],
        Feasible,
    );
    geo.file.weights = Some(vec![1.0, 0.5, 0.25]);
    geo.file.tail_bound = Some(0.125);
    out.push(geo);
    out
}

fn dims(i: usize) -> (usize, usize) {
    (2 + i % 2, 1 + (i / 2) % 3)
}

fn full_cp(rng: &mut impl Rng, d: usize, h: usize) -> SuperOperator {
    SuperOperator::random_cp(rng, d, h, d * h)
}

fn unitary_entry(u: &ComplexMatrix) -> SequenceEntry {
    SequenceEntry::UnitaryConjugation { matrix: matrix_to_json(u) }
}

/// The full corpus (225 instances) for a base seed.
pub fn generate(seed: u64) -> Vec<CorpusEntry> {
    use Expectation::*;
    let mut out = fixed();
    let family = |tag: u64, count: usize, out: &mut Vec<CorpusEntry>, f: &mut dyn FnMut(usize, &mut phidecomp::linalg::SeededRng) -> CorpusEntry| {
        for i in 0..count {
            let mut rng = seeded_rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (tag << 32) ^ i as u64);
            out.push(f(i, &mut rng));
        }
    };

    family(1, 30, &mut out, &mut |i, rng| {
        let (d, h) = dims(i);
        entry(format!("cp_{i:02}"), &full_cp(rng, d, h), vec![SequenceEntry::Identity], Feasible)
    });
    family(2, 20, &mut out, &mut |i, rng| {
        let (d, h) = dims(i);
        let t = compose(&full_cp(rng, d, h), &SuperOperator::transpose(d)).unwrap();
        entry(format!("ccp_{i:02}"), &t, vec![SequenceEntry::Transpose], Feasible)
    });
    family(3, 40, &mut out, &mut |i, rng| {
        let (d, h) = dims(i);
        let a = full_cp(rng, d, h);
        let b = compose(&full_cp(rng, d, h), &SuperOperator::transpose(d)).unwrap();
        entry(format!("decomposable_{i:02}"), &a.add(&b).unwrap(), id_t(), Feasible)
    });
    family(4, 20, &mut out, &mut |i, rng| {
        let (d, h) = dims(i);
        let us = [random::unitary(rng, d), random::unitary(rng, d)];
        let mut target = SuperOperator::zero(d, h);
        for u in &us {
            let phi_k = SuperOperator::unitary_conjugation(u).unwrap();
            target = target.add(&compose(&full_cp(rng, d, h), &phi_k).unwrap()).unwrap();
        }
        entry(format!("unitary_{i:02}"), &target, us.iter().map(unitary_entry).collect(), Feasible)
    });
    family(5, 20, &mut out, &mut |i, rng| {
        let (d, h) = dims(i);
        entry(format!("negated_cp_{i:02}"), &full_cp(rng, d, h).scale(-1.0), id_t(), Infeasible)
    });
    family(6, 10, &mut out, &mut |i, rng| {
        // Positive and nondecomposable by the literature's classification of
        // this family: 1 ≤ a ≤ 2, a + b + c ≥ 3, (2 − a)² ≤ bc < (3 − a)²/4.
        let a = 1.0 + rng.random::<f64>();
        let lo = (2.0 - a).powi(2);
        let hi = (3.0 - a).powi(2) / 4.0;
        let p = lo + (0.1 + 0.8 * rng.random::<f64>()) * (hi - lo);
        let b = 3.0 - a;
        let c = p / b;
        let (b, c) = if i % 2 == 0 { (b, c) } else { (c, b) };
        entry(format!("choi_type_{i:02}"), &SuperOperator::choi_type_map(a, b, c), id_t(), Unknown)
    });
    family(7, 30, &mut out, &mut |i, rng| {
        let (d, h) = dims(i);
        let n = d * h;
        let j = random::hermitian(rng, n);
        let lam = phidecomp::linalg::min_eigenvalue(&j);
        let shift = -lam * (0.5 + rng.random::<f64>());
        let target = SuperOperator::from_choi(d, h, j + identity(n) * c64(shift, 0.0)).unwrap();
        entry(format!("hermitian_{i:02}"), &target, id_t(), Unknown)
    });
    family(8, 10, &mut out, &mut |i, rng| {
        let k = 2 + i % 4;
        let d = 2;
        let mut e = entry(
            format!("truncated_{i:02}"),
            &full_cp(rng, d, 1 + i % 3),
            vec![SequenceEntry::Identity; k],
            Feasible,
        );
        e.file.weights = Some((0..k).map(|j| 0.5f64.powi(j as i32)).collect());
        e.file.tail_bound = Some(0.5f64.powi(k as i32));
        e
    });
    family(9, 10, &mut out, &mut |i, rng| {
        let (d, h) = dims(i);
        let target = full_cp(rng, d, h);
        entry(format!("kernel_violation_{i:02}"), &target, vec![pinching_entry(d)], Infeasible)
    });
    family(10, 20, &mut out, &mut |i, rng| {
        let (d, h) = dims(i);
        let a = full_cp(rng, d, h);
        let b = compose(&full_cp(rng, d, h), &SuperOperator::transpose(d)).unwrap();
        let base = a.add(&b).unwrap();
        let n = d * h;
        let lam = phidecomp::linalg::min_eigenvalue(base.choi()).max(0.0);
        let eps = (0.5 + 1.5 * rng.random::<f64>()) * (lam + 0.1);
        let target = SuperOperator::from_choi(d, h, base.choi() - identity(n) * c64(eps, 0.0)).unwrap();
        entry(format!("perturbed_{i:02}"), &target, id_t(), Unknown)
    });
    out
}

/// Shipped regression instances, as written to `corpus/`.
pub fn shipped() -> Vec<(&'static str, InstanceFile)> {
    let mut choi = InstanceFile::from_parts("choi_map", &SuperOperator::choi_type_map(2.0, 0.0, 1.0), id_t());
    choi.description = Some("Choi's positive nondecomposable map on M_3 against (id, t)".to_string());
    let mut transpose = InstanceFile::from_parts("transpose", &SuperOperator::transpose(2), id_t());
    transpose.description = Some("transpose on M_2 against (id, t)".to_string());
    let mut ident = InstanceFile::from_parts("identity", &SuperOperator::identity(2), vec![SequenceEntry::Identity]);
    ident.description = Some("identity on M_2 against (id)".to_string());
    vec![("choi_map.json", choi), ("transpose.json", transpose), ("identity.json", ident)]
}
