use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evmono"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().arg("--out-dir").arg(dir).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exit_codes_follow_the_convention() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("--version").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["certify", "no_such_model"]).status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["--rtol", "1", "certify", "three_state"]).status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["reduce", data("example1.txt").to_str().unwrap(), "--fast", "4"]).status.code(), Some(1));

    // λ₁ is not strictly dominant: the Koopman stage fails.
    let out = run_in(dir.path(), &["certify", "complex_counterexample"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: koopman:"));

    // Falsified is a result, not an error.
    let out = run_in(
        dir.path(),
        &["certify", "fitzhugh_nagumo", "--window=-1.47:1.52,-1.47:1.52", "--samples", "100", "--scan-grid", "11"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir.path().join("certify.json"))["verdict"], "falsified");
}

#[test]
fn list_models_prints_dimension_and_parameter_count() {
    let out = bin().arg("list-models").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "three_state 3 1"));
    assert!(text.lines().any(|l| l == "gut_kinetics 4 8"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn reduce_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["reduce", data("example1.txt").to_str().unwrap(), "--fast", "3"]);
    assert!(out.status.success());
    let r = json(&dir.path().join("reduce.json"));
    assert_eq!(r["reduced"], serde_json::json!([["-3", "7"], ["2", "-7"]]));
    let txt = fs::read_to_string(dir.path().join("reduce.txt")).unwrap();
    assert!(txt.ends_with("-3 7\n2 -7\n"));
}

#[test]
fn reports_are_deterministic_and_tagged_with_the_config_hash() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["certify", "reduced_two_state", "--samples", "200", "--scan-grid", "15"];
    assert!(run_in(a.path(), &args).status.success());
    assert!(run_in(b.path(), &args).status.success());
    for f in ["certify.json", "certify_isostables.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let ra = json(&a.path().join("run_config.json"));
    let rb = json(&b.path().join("run_config.json"));
    assert_eq!(ra["config"], rb["config"]);
    assert_ne!(ra["out_dir"], rb["out_dir"]);
    let hash = ra["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash, rb["config_hash"].as_str().unwrap());
    assert!(ra["timestamp_unix"].is_u64());

    for entry in fs::read_dir(a.path()).unwrap() {
        let p = entry.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        if p.extension().unwrap() == "json" {
            assert_eq!(json(&p)["config_hash"], hash.as_str(), "{}", p.display());
        } else {
            assert!(text.starts_with(&format!("# config_hash {hash}\n")), "{}", p.display());
        }
    }

    // A different setting changes the hash.
    let c = tempfile::tempdir().unwrap();
    assert!(run_in(c.path(), &["certify", "reduced_two_state", "--samples", "201", "--scan-grid", "15"]).status.success());
    assert_ne!(json(&c.path().join("run_config.json"))["config_hash"], hash.as_str());
}

#[test]
fn worker_count_does_not_change_results() {
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    let args = ["eigenfunction", "three_state", "--grid", "6", "--gradients"];
    let o1 = bin().arg("--jobs").arg("1").arg("--out-dir").arg(one.path()).args(args).output().unwrap();
    let o4 = bin().arg("--jobs").arg("4").arg("--out-dir").arg(four.path()).args(args).output().unwrap();
    assert!(o1.status.success() && o4.status.success());
    assert_eq!(o1.stdout, o4.stdout);
    for f in ["eigenfunction.txt", "eigenfunction.json"] {
        assert_eq!(fs::read(one.path().join(f)).unwrap(), fs::read(four.path().join(f)).unwrap(), "{f}");
    }
    let dump = fs::read_to_string(one.path().join("eigenfunction.txt")).unwrap();
    assert_eq!(dump.lines().filter(|l| !l.starts_with('#')).count(), 216);
    assert!(dump.lines().nth(1).unwrap().ends_with("ds1_dx3 divergent"));
}

#[test]
fn model_files_and_cone_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    fs::write(
        &model,
        r#"{"states": ["u", "v"], "params": {"k": 2.0}, "equations": ["-u + 0.5*v", "-k*v + 0.1*u^2"]}"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["equilibrium", model.to_str().unwrap(), "--guess", "0.1,-0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eq = json(&dir.path().join("equilibrium.json"));
    assert!(eq["residual"].as_f64().unwrap() < 1e-12);
    assert!((eq["eigenvalues"][0][0].as_f64().unwrap() + 1.0).abs() < 1e-12);

    // No registered window or equilibrium: both must be given.
    assert_eq!(run_in(dir.path(), &["equilibrium", model.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(
        run_in(dir.path(), &["certify", model.to_str().unwrap(), "--guess", "0,0"]).status.code(),
        Some(1)
    );

    let cone = dir.path().join("cone.json");
    fs::write(&cone, r#"{"kind": "polyhedral_generated", "generators": [[1.0, 0.0], [1.0, 0.3]]}"#).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "order-probe",
            model.to_str().unwrap(),
            "--guess",
            "0,0",
            "--window=-1:1,-1:1",
            "--cone-file",
            cone.to_str().unwrap(),
            "--pairs",
            "10",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let probe = json(&dir.path().join("order-probe.json"));
    assert_eq!(probe["pairs"], 10);
    assert_eq!(probe["cone"]["kind"], "polyhedral_generated");
}

#[test]
fn epsilon_override_applies_to_trajectory_stages_only() {
    let dir = tempfile::tempdir().unwrap();
    let base = run_in(dir.path(), &["equilibrium", "three_state"]);
    let over = run_in(dir.path(), &["--epsilon-override", "0.5", "equilibrium", "three_state"]);
    assert_eq!(base.stdout, over.stdout);

    let out = run_in(dir.path(), &["--epsilon-override", "0.5", "eigenfunction", "three_state", "--grid", "3"]);
    assert!(out.status.success());
    let rc = json(&dir.path().join("run_config.json"));
    assert_eq!(rc["config"]["options"]["epsilon_override"], 0.5);
    let ef = json(&dir.path().join("eigenfunction.json"));
    let base_l1 = json_stdout(&base)["eigenvalues"][0][0].as_f64().unwrap();
    assert_ne!(ef["spec"]["lambda1"].as_f64().unwrap(), base_l1);

    // Models without eps reject it.
    let out = run_in(dir.path(), &["--epsilon-override", "0.5", "eigenfunction", "reduced_two_state", "--grid", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

fn json_stdout(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn isostables_on_a_cross_section() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["isostables", "three_state", "--cross-section", "x1=3.1", "--levels", "0.1,0.2", "--grid", "21"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("isostables.json"));
    assert_eq!(r["axes"], serde_json::json!([1, 2]));
    assert_eq!(r["base"][0], 3.1);
    let txt = fs::read_to_string(dir.path().join("isostables.txt")).unwrap();
    assert!(txt.lines().nth(1).unwrap().contains("level sign x2 x3"));
    assert!(txt.lines().skip(2).filter(|l| !l.is_empty()).all(|l| l.split(' ').count() == 4));

    // Two fixed coordinates in 3D leave one free state.
    let bad = run_in(dir.path(), &["isostables", "three_state", "--cross-section", "1=3,2=1"]);
    assert_eq!(bad.status.code(), Some(1));
}
