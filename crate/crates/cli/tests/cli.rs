use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phidecomp::superop::SuperOperator;
use phidecomp_cli::instance::{InstanceFile, SequenceEntry};
use phidecomp_cli::report::{VerdictLabel, VerdictReport};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn phidecomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phidecomp"))
        .args(args)
        .env_remove(phidecomp_cli::SEED_ENV)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn transpose_is_feasible_and_report_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = phidecomp(&["check", p(&corpus("transpose.json")), "--json-out", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict: feasible"));
    assert!(stdout(&o).contains("re-verified: yes"));
    let r = VerdictReport::load(&report).unwrap();
    assert_eq!(r.verdict, VerdictLabel::Feasible);
    assert_eq!(r.certificate.unwrap().choi.len(), 2);
}

#[test]
fn identity_is_feasible() {
    let o = phidecomp(&["check", p(&corpus("identity.json"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn choi_map_is_infeasible_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = phidecomp(&["check", p(&corpus("choi_map.json")), "--json-out", p(&report)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict: infeasible"));
    let r = VerdictReport::load(&report).unwrap();
    assert!(r.witness.unwrap().pairing <= -1e-6);
}

#[test]
fn malformed_instance_exits_3() {
    let o = phidecomp(&["check", p(&corpus("malformed.json"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("defect"), "{}", stderr(&o));
}

#[test]
fn parse_errors_name_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"d\": 2,\n  \"h\": \"two\"\n}\n").unwrap();
    let o = phidecomp(&["check", p(&path)]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("`h`"), "{err}");
}

#[test]
fn usage_and_io_errors() {
    let o = phidecomp(&["selftest", "--tol", "-1"]);
    assert_eq!(o.status.code(), Some(4));
    let o = phidecomp(&["check"]);
    assert_eq!(o.status.code(), Some(4));
    let o = phidecomp(&["selftest", "--quick", "--full"]);
    assert_eq!(o.status.code(), Some(4));
    let o = phidecomp(&["check", "/nonexistent/instance.json"]);
    assert_eq!(o.status.code(), Some(5));
    let o = phidecomp(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn quick_selftest_is_deterministic() {
    let a = phidecomp(&["selftest", "--quick", "--seed", "42"]);
    let b = phidecomp(&["selftest", "--quick", "--seed", "42"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn witness_search_finds_transpose_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t_id.json");
    let file = InstanceFile::from_parts("t_id", &SuperOperator::transpose(2), vec![SequenceEntry::Identity]);
    std::fs::write(&path, file.to_json()).unwrap();
    let o = phidecomp(&["witness-search", p(&path), "--n", "2"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("result: violation")).unwrap();
    let value: f64 = line.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(value <= -0.49, "{line}");

    let o = phidecomp(&["witness-search", p(&corpus("transpose.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dilate_reports_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dil.json");
    let o = phidecomp(&["dilate", p(&corpus("transpose.json")), "--json-out", p(&dump)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dump).unwrap()).unwrap();
    assert!(v["reconstruction_residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(v["blocks"].as_array().unwrap().len(), 2);

    let o = phidecomp(&["dilate", p(&corpus("identity.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let o = phidecomp(&["dilate", p(&corpus("choi_map.json"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn export_sdpa_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("choi.dat-s");
    let o = phidecomp(&["export-sdpa", p(&corpus("choi_map.json")), p(&path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&path).unwrap();
    let parsed = phidecomp::sdpa::SdpaProblem::parse(&text).unwrap();
    assert_eq!(parsed.num_constraints, 81);
    assert_eq!(parsed.block_sizes, vec![18, 18]);
    assert_eq!(parsed.to_text(None), text.lines().filter(|l| !l.starts_with('"')).map(|l| format!("{l}\n")).collect::<String>());
}

#[test]
fn seed_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let o = Command::new(env!("CARGO_BIN_EXE_phidecomp"))
        .args(["check", p(&corpus("transpose.json")), "--json-out", p(&report)])
        .env(phidecomp_cli::SEED_ENV, "1234")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(VerdictReport::load(&report).unwrap().seed, 1234);

    let o = phidecomp(&["check", p(&corpus("transpose.json")), "--seed", "9", "--json-out", p(&report)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(VerdictReport::load(&report).unwrap().seed, 9);
}
