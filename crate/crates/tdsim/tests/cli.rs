mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tdsim_core::result::ModelKind;
use tdsim_core::spectrum::local_maxima;

fn tdsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdsim"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = tdsim(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = tdsim(&["fit", "--project", "p.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--data"), "{err}");
    assert_eq!(tdsim(&["simulate", "--project", "p.json", "--model", "nope"], dir.path()).status.code(), Some(1));
    assert_eq!(tdsim(&["frobnicate"], dir.path()).status.code(), Some(1));
}

#[test]
fn bad_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = tdsim(&["simulate", "--project", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(tdsim(&["simulate", "--project", "broken.json"], dir.path()).status.code(), Some(2));

    let mut p = common::drexler_project();
    p.protocol.heating_rate = -1.0;
    fs::write(dir.path().join("neg.json"), p.to_json().unwrap()).unwrap();
    assert_eq!(tdsim(&["simulate", "--project", "neg.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn simulate_writes_two_peak_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.json"), common::drexler_project().to_json().unwrap()).unwrap();
    let out = tdsim(&["simulate", "--project", "p.json", "--out", "s.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "T [K],deltaC_total [mol/(m3*s)],deltaC_CL [mol/(m3*s)],deltaC_CT1 [mol/(m3*s)],deltaC_CT2 [mol/(m3*s)],flux [mol/(m2*s)]"
    );
    let cols = common::read_columns(&text);
    assert_eq!(cols.len(), 6);
    assert_eq!(cols[0].len(), 200);
    let peak = cols[1].iter().cloned().fold(0.0, f64::max);
    assert_eq!(local_maxima(&cols[1], 1e-3 * peak).len(), 2);
}

#[test]
fn simulate_several_models_tags_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = common::coarse_project();
    p.models = vec![ModelKind::Lattice, ModelKind::Oriani];
    fs::write(dir.path().join("p.json"), p.to_json().unwrap()).unwrap();
    let out = tdsim(&["simulate", "--project", "p.json", "--out", "s.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("s.lattice.csv").exists());
    assert!(dir.path().join("s.oriani.csv").exists());
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn seeded_fit_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = common::coarse_project();
    fs::write(dir.path().join("p.json"), p.to_json().unwrap()).unwrap();
    fs::write(dir.path().join("data.csv"), common::synthetic_data(&p)).unwrap();
    let run = |tag: &str| {
        let out_json = format!("{tag}.json");
        let trace = format!("{tag}.csv");
        let out = tdsim(
            &[
                "fit", "--project", "p.json", "--data", "data.csv", "--seed", "7", "--iters", "3", "--pop", "6",
                "--out", &out_json, "--trace", &trace,
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (
            fs::read_to_string(dir.path().join(out_json)).unwrap(),
            fs::read_to_string(dir.path().join(trace)).unwrap(),
        )
    };
    let (a_json, a_trace) = run("a");
    let (b_json, b_trace) = run("b");
    assert_eq!(a_trace, b_trace);
    assert_eq!(a_json.replace("b.json", "a.json"), b_json.replace("b.json", "a.json"));
    assert!(a_trace.starts_with("iteration,evaluations,best_f,mean_f,stall,failed\n"));
    assert_eq!(a_trace.lines().count(), 1 + 4);

    let fitted = tdsim_core::project::Project::from_json(&a_json).unwrap();
    let fit = fitted.fit.expect("fit result embedded");
    assert_eq!(fitted.traps, fit.traps);
    assert!(fitted.experiment.is_some());
}

#[test]
fn convert_rewrites_units() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("in.csv"), "T,rate\n20,1\n120,2\n").unwrap();
    let out = tdsim(&["convert", "--in", "in.csv", "--from", "C,mol/(m3*s)", "--to", "K,mol/(m3*s)"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cols = common::read_columns(&String::from_utf8_lossy(&out.stdout));
    assert!((cols[0][0] - 293.15).abs() < 1e-9);
    assert!((cols[0][1] - 393.15).abs() < 1e-9);
    assert_eq!(cols[1], vec![1.0, 2.0]);

    let out = tdsim(&["convert", "--in", "in.csv", "--from", "C,mol/(m3*s)", "--to", "K,mol/(m2*s)"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bundled_sample_project_simulates() {
    let sample = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples/drexler.json");
    let dir = tempfile::tempdir().unwrap();
    let out = tdsim(&["simulate", "--project", sample.to_str().unwrap(), "--out", "s.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("s.oriani.csv").exists());
    assert!(dir.path().join("s.mf.csv").exists());
}
