use std::path::{Path, PathBuf};
use std::process::Command;

fn hyrec(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_hyrec"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hyrec-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn constrain_prints_the_table() {
    let dir = scratch("constrain");
    let (code, out) = hyrec(&["constrain", "robots4"], &dir);
    assert_eq!(code, 0);
    assert!(out.contains("(s5,o1) | {s3, s6} | {(s3,o3), (s6,o2)}"), "{out}");
}

#[test]
fn scripted_simulation_writes_trace_and_plot() {
    let dir = scratch("simulate");
    let (code, out) = hyrec(&["simulate", "--scenario", "robots4", "--policy", "scripted:s6", "--jmax", "6"], &dir);
    assert_eq!(code, 0);
    assert!(out.contains("observations  o2 o3 o1 o2 o3 o1 o2"), "{out}");
    let csv = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    let segments = hyrec::hybrid_sim::parse_trace(csv.as_bytes()).unwrap();
    assert_eq!(segments.len(), 7);
    let svg = std::fs::read_to_string(dir.join("trajectory.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn non_hurwitz_gain_fails_validation() {
    let dir = scratch("validate");
    let text = hyrec::scenario::bundled::TOY1_TOML.replace("K = [[1]]", "K = [[-1]]");
    assert_ne!(text, hyrec::scenario::bundled::TOY1_TOML, "toy scenario gain line changed");
    std::fs::write(dir.join("toy1.ba"), hyrec::scenario::bundled::TOY1_BA).unwrap();
    let path = dir.join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let (code, _) = hyrec(&["validate", path.to_str().unwrap()], &dir);
    assert_eq!(code, 7, "stability failures have their own exit code");
    let report = std::fs::read_to_string(dir.join("validate.json")).unwrap();
    assert!(report.contains("NotHurwitz"), "{report}");
}

#[test]
fn valid_scenario_and_passing_certificate_exit_zero() {
    let dir = scratch("certify");
    assert_eq!(hyrec(&["validate", "toy1"], &dir).0, 0);
    let (code, out) = hyrec(&["certify", "toy1"], &dir);
    assert_eq!(code, 0, "{out}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn unknown_scenario_is_a_parse_failure() {
    let dir = scratch("missing");
    assert_eq!(hyrec(&["distances", "--scenario", "/nonexistent/x.toml"], &dir).0, 4);
}
