use std::path::Path;
use std::process::{Command, Output};

fn balcon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_balcon")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_are_listed() {
    let o = balcon(&["presets", "--list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["square", "collinear", "explicit", "square_center"] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[test]
fn analyze_prints_the_square_candidate() {
    let o = balcon(&["analyze", "square"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("1.47759"), "{}", stdout(&o));
}

#[test]
fn trace_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = balcon(&["trace", "square", "--out-dir", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    assert_eq!(csv.len(), 1);

    for (kind, suffix) in [("trajectories", "trajectories"), ("s-profile", "s_profile")] {
        let o = balcon(&["plot", csv[0].to_str().unwrap(), "--kind", kind]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let svg = Path::new(stdout(&o).trim()).to_path_buf();
        assert!(svg.file_name().unwrap().to_str().unwrap().ends_with(&format!("_{suffix}.svg")));
        assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
    }
}

#[test]
fn scenario_without_candidates_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = balcon(&["trace", "triangle", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("no bifurcation candidates"));
}

#[test]
fn failure_on_every_candidate_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = balcon(&["trace", "square", "--out-dir", out, "--override", "epsilon_switch=0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bcfg");
    std::fs::write(&bad, "bcfg-scenario v1\n[scenario]\nmasses = 1, -1, 1\n").unwrap();
    assert_eq!(balcon(&["analyze", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(balcon(&["analyze", "no_such_scenario"]).status.code(), Some(1));
    assert_eq!(balcon(&["analyze", "square", "--override", "delta"]).status.code(), Some(1));
    assert_eq!(balcon(&["analyze", "square", "--override", "s_min=0.5"]).status.code(), Some(1));
    let missing = dir.path().join("missing.csv");
    assert_eq!(balcon(&["plot", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn overrides_reach_the_scenario() {
    let o = balcon(&["analyze", "square_center", "--override", "s_max=2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("1.23356"), "{text}");
}
