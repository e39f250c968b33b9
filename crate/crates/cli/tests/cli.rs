use std::path::Path;
use std::process::{Command, Output};

use nnspin_cli::manifest::RunManifest;
use nnspin_cli::pipeline::{EigensystemArtifact, PulseMeta, EIGENSYSTEM_JSON};

fn nnspin(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnspin"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn eigensystem(dir: &Path) -> EigensystemArtifact {
    serde_json::from_slice(&std::fs::read(dir.join(EIGENSYSTEM_JSON)).unwrap()).unwrap()
}

fn sorted(v: [f64; 4]) -> [f64; 4] {
    let mut v = v;
    v.sort_by(f64::total_cmp);
    v
}

// quick pulses for the plumbing tests
const FAST: [&str; 4] = [
    "--set",
    "pulse.infidelity_target=1e-3",
    "--set",
    "simulation.n_steps=64",
];

#[test]
fn hamiltonian_writes_the_calibrated_eigensystem() {
    let dir = tempfile::tempdir().unwrap();
    let o = nnspin(dir.path(), &["hamiltonian"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("stage hamiltonian: ran"));
    let e = eigensystem(dir.path());
    let want = [-2.3289, -2.3289, 1.0662, 3.5916];
    for (g, w) in sorted(e.eigenvalues).iter().zip(want) {
        assert!((g - w).abs() < 1e-4, "{:?}", e.eigenvalues);
    }
    assert_eq!(e.gaps.len(), 3);
}

#[test]
fn pure_contact_term_gives_the_singlet_triplet_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let o = nnspin(
        dir.path(),
        &["hamiltonian", "--set", "nuclear.a=1", "--set", "nuclear.b=0"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let e = eigensystem(dir.path());
    for (g, w) in sorted(e.eigenvalues).iter().zip([-3.0, 1.0, 1.0, 1.0]) {
        assert!((g - w).abs() < 1e-12, "{:?}", e.eigenvalues);
    }
}

#[test]
fn eft_mode_requires_the_contact_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let o = nnspin(dir.path(), &["hamiltonian", "--set", "nuclear.mode=eft"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nuclear.eft.c1"), "{}", stderr(&o));
    let o = nnspin(
        dir.path(),
        &[
            "hamiltonian",
            "--set",
            "nuclear.mode=eft",
            "--set",
            "nuclear.eft.c1=-0.5",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = nnspin(dir.path(), &["hamiltonian", "--set", "device.levels=6"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("device.levels"));
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let o = nnspin(dir.path(), &["hamiltonian", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = nnspin(dir.path(), &["frobnicate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_is_layered_under_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"nuclear": {"a": 1.0, "b": 0.0}}"#).unwrap();
    let o = nnspin(
        dir.path(),
        &["hamiltonian", "--config", cfg.to_str().unwrap(), "--set", "nuclear.a=2"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let min = sorted(eigensystem(dir.path()).eigenvalues)[0];
    assert!((min + 6.0).abs() < 1e-12);
}

#[test]
fn rerun_is_cached_and_force_reruns() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&nnspin(dir.path(), &["hamiltonian"])), 0);
    let o = nnspin(dir.path(), &["hamiltonian"]);
    assert!(stdout(&o).contains("stage hamiltonian: cached"), "{}", stdout(&o));
    let o = nnspin(dir.path(), &["hamiltonian", "--force"]);
    assert!(stdout(&o).contains("stage hamiltonian: ran"));
    let o = nnspin(dir.path(), &["hamiltonian", "--set", "nuclear.a=0.5"]);
    assert!(
        stdout(&o).contains("stage hamiltonian: ran"),
        "changed input must rerun"
    );
}

#[test]
fn corrupted_artifact_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&nnspin(dir.path(), &["hamiltonian"])), 0);
    std::fs::write(dir.path().join(EIGENSYSTEM_JSON), "{}").unwrap();
    let o = nnspin(dir.path(), &["hamiltonian"]);
    assert_eq!(code(&o), 6);
    assert!(
        stderr(&o).contains("hash mismatch") && stderr(&o).contains("eigensystem.json"),
        "{}",
        stderr(&o)
    );
    assert_eq!(code(&nnspin(dir.path(), &["hamiltonian", "--force"])), 0);
}

#[test]
fn missing_upstream_exits_with_dependency_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = nnspin(dir.path(), &["simulate"]);
    assert_eq!(code(&o), 6);
    assert!(stderr(&o).contains("vsd.json"), "{}", stderr(&o));
    assert_eq!(code(&nnspin(dir.path(), &["hamiltonian"])), 0);
    let o = nnspin(dir.path(), &["simulate"]);
    assert_eq!(code(&o), 6);
    assert!(stderr(&o).contains("pulse.csv"), "{}", stderr(&o));
}

#[test]
fn identity_target_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["pulse", "--set", "nuclear.a=0", "--set", "nuclear.b=0"];
    args.extend(FAST);
    assert_eq!(
        code(&nnspin(
            dir.path(),
            &["hamiltonian", "--set", "nuclear.a=0", "--set", "nuclear.b=0"]
        )),
        0
    );
    let o = nnspin(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta: PulseMeta =
        serde_json::from_slice(&std::fs::read(dir.path().join("power1/pulse_meta.json")).unwrap()).unwrap();
    assert!(meta.infidelity < 1e-3);
    assert_eq!(meta.samples, 3200);
}

#[test]
fn staged_branch_then_reconstruction_needs_the_cubed_branch() {
    let dir = tempfile::tempdir().unwrap();
    let stages = ["hamiltonian", "pulse", "simulate"];
    for s in stages {
        let mut args = vec![s, "--seed", "7"];
        args.extend(FAST);
        let o = nnspin(dir.path(), &args);
        assert_eq!(code(&o), 0, "{s}: {}", stderr(&o));
    }
    let mut args = vec!["analyze", "--seed", "7"];
    args.extend(FAST);
    let o = nnspin(dir.path(), &args);
    assert_eq!(code(&o), 6, "{}", stderr(&o));
    assert!(stderr(&o).contains("power3"), "{}", stderr(&o));
    assert!(dir.path().join("power1/spectral_result.json").is_file());

    args.extend(["--set", "analysis.reconstruct=false"]);
    let o = nnspin(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: RunManifest = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.seeds.simulation, 7);
    assert_eq!(m.seeds.pulse, 7);
    assert_eq!(m.seeds.fit, 7);
    assert_eq!(m.artifact_count(), 9);
}
