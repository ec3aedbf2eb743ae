use std::path::PathBuf;

use phidecomp::superop::SuperOperator;
use phidecomp_cli::corpus;
use phidecomp_cli::instance::InstanceFile;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

#[test]
fn shipped_files_match_generator() {
    for (name, expected) in corpus::shipped() {
        let path = corpus_dir().join(name);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(InstanceFile::parse(&text).unwrap(), expected, "{name}");
        assert_eq!(text, expected.to_json() + "\n", "{name} is not in canonical form");
    }
}

#[test]
fn choi_map_file_is_the_choi_map() {
    let inst = InstanceFile::load(&corpus_dir().join("choi_map.json")).unwrap().validate().unwrap();
    // X ↦ diag(2x11 + x33, x11 + 2x22, x22 + 2x33) − X, written out by hand.
    let by_hand = SuperOperator::from_fn(3, 3, |x| {
        let mut y = -x.clone();
        y[(0, 0)] += x[(0, 0)] * 2.0 + x[(2, 2)];
        y[(1, 1)] += x[(0, 0)] + x[(1, 1)] * 2.0;
        y[(2, 2)] += x[(1, 1)] + x[(2, 2)] * 2.0;
        y
    })
    .unwrap();
    let diff = inst.target.choi() - by_hand.choi();
    assert!(phidecomp::linalg::frobenius(&diff) < 1e-15);
    assert_eq!(inst.seq.len(), 2);
}

#[test]
fn malformed_file_is_rejected_as_non_hermitian() {
    let file = InstanceFile::load(&corpus_dir().join("malformed.json")).unwrap();
    let err = file.validate().unwrap_err();
    assert_eq!(err.code, phidecomp_cli::ExitCode::Invalid);
    assert!(err.message.contains("not Hermitian"), "{}", err.message);
}
