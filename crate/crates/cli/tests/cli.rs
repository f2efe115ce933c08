use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn frontlab(out: &Path, args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_frontlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .args(["--threads", "1"])
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn metadata(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("metadata.json")).expect("metadata written");
    serde_json::from_str(&text).expect("metadata is JSON")
}

fn listed_outputs(meta: &Value) -> BTreeSet<String> {
    meta["outputs"].as_array().unwrap().iter().map(|o| o["file"].as_str().unwrap().to_string()).collect()
}

fn files_on_disk(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect()
}

#[test]
fn theory_writes_gamma0() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("theory");
    assert_eq!(frontlab(&out, &["theory"]), 0);
    let text = std::fs::read_to_string(out.join("constants.json")).unwrap();
    let constants: Value = serde_json::from_str(&text).unwrap();
    let g0 = constants["gamma0"].as_f64().unwrap();
    assert!((g0 - 0.792_804_743_3).abs() < 1e-10, "{g0}");
    assert_eq!(metadata(&out)["status"], "ok");
}

#[test]
fn every_output_is_indexed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("solve");
    let code = frontlab(
        &out,
        &[
            "solve",
            "--override",
            "grid.nx=41",
            "--override",
            "grid.ntheta=21",
            "--override",
            "time.t_final=1",
            "--override",
            "time.snapshots=[0.5, 1.0]",
        ],
    );
    assert_eq!(code, 0);
    let meta = metadata(&out);
    assert_eq!(listed_outputs(&meta), files_on_disk(&out));
    assert!(files_on_disk(&out).contains("field_t0.5.csv"));
    let field = std::fs::read_to_string(out.join("field_t1.csv")).unwrap();
    assert_eq!(field.lines().next(), Some("x,theta,v"));
    assert_eq!(field.lines().count(), 1 + 41 * 21);
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    assert_eq!(frontlab(&out, &["solve", "--override", "model.A=-1"]), 1);
    let meta = metadata(&out);
    assert_eq!(meta["exit_code"], 1);
    assert!(meta["reason"].as_str().unwrap().contains("model.A"));

    let out = tmp.path().join("unknown");
    assert_eq!(frontlab(&out, &["theory", "--override", "grid.bogus=3"]), 1);
    assert!(metadata(&out)["reason"].as_str().unwrap().contains("grid.bogus"));
}

#[test]
fn config_file_is_read_and_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[model]\nkind = \"local\"\n\n[bbm]\nreplicates = 20\nt = 1.0\n").unwrap();
    let out = tmp.path().join("bbm");
    assert_eq!(frontlab(&out, &["bbm", "--config", cfg.to_str().unwrap(), "--seed", "4"]), 0);
    let meta = metadata(&out);
    let echo = meta["config"].as_str().unwrap();
    assert!(echo.contains("kind = \"local\""));
    assert!(echo.contains("replicates = 20"));
    assert_eq!(meta["manifest"]["seed"], 4);
    let rows = std::fs::read_to_string(out.join("replicates.csv")).unwrap();
    assert_eq!(rows.lines().count(), 21);
}

#[test]
fn forced_unstable_step_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("unstable");
    let code = frontlab(
        &out,
        &[
            "solve",
            "--override",
            "model.kind=local",
            "--override",
            "grid.x_min=-10",
            "--override",
            "grid.x_max=10",
            "--override",
            "grid.theta_max=6",
            "--override",
            "grid.nx=81",
            "--override",
            "grid.ntheta=21",
            "--override",
            "time.t_final=20",
            "--override",
            "time.dt=0.05",
        ],
    );
    assert_eq!(code, 2);
    assert_eq!(metadata(&out)["status"], "numerical-failure");
}

#[test]
fn refuses_non_empty_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("keep.txt"), "x").unwrap();
    assert_eq!(frontlab(tmp.path(), &["theory"]), 1);
    assert_eq!(files_on_disk(tmp.path()), BTreeSet::from(["keep.txt".to_string()]));
}

#[test]
fn mckean_verification_passes_at_t1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mckean");
    assert_eq!(frontlab(&out, &["verify", "mckean", "--seed", "3"]), 0);
    let csv = std::fs::read_to_string(out.join("mckean_toads.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("probe,t,x,theta,u_pde,u_mc,se,z,pass"));
    assert_eq!(metadata(&out)["summary"]["pass"], true);
}
