use std::path::Path;
use std::process::{Command, Output};

fn dyadic(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyadic"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "
[model]
n_shells = 4
[run]
dt = 1e-4
t_end = 0.01
n_paths = 128
record_stride = 25
[forward]
n_shells = 8
t_end = 0.05
record_stride = 50
";

#[test]
fn quantities_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dyadic(&["quantities"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let value = |key: &str| {
        text.lines()
            .find(|l| l.split_whitespace().next() == Some(key))
            .and_then(|l| l.split_whitespace().nth(1))
            .unwrap()
            .to_string()
    };
    assert!(value("r_inf").starts_with("0.444444"));
    assert!(value("R").starts_with("0.444444"));
    assert_eq!(value("S"), "divergent");
    assert!(value("alpha").starts_with("0.7497"));
    let csv = std::fs::read_to_string(dir.path().join("quantities.csv")).unwrap();
    assert!(csv.starts_with("# dyadic "));
    assert!(csv.contains("master_seed=0"));
}

#[test]
fn deterministic_rerun_is_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let cfg = write_config(dirs[0].path(), SMALL);
    for d in &dirs {
        let out = dyadic(&["simulate", "--scheme", "deterministic", "--config", &cfg], d.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dirs[0].path().join("series.csv")).unwrap();
    let b = std::fs::read(dirs[1].path().join("series.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().nth(1).unwrap().split(',').take(3).collect::<Vec<_>>(), ["t", "energy", "cross_helicity"]);
}

#[test]
fn every_artifact_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for cmd in ["simulate", "bd-sample", "forward", "girsanov-check"] {
        let out_dir = dir.path().join(cmd);
        let out = dyadic(&[cmd, "--config", &cfg, "--seed", "17", "--threads", "2"], &out_dir);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let resolved = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
        assert!(resolved.contains("master_seed = 17"), "{cmd}");
        for entry in std::fs::read_dir(&out_dir).unwrap() {
            let path = entry.unwrap().path();
            let text = std::fs::read_to_string(&path).unwrap();
            match path.extension().and_then(|e| e.to_str()) {
                Some("csv") => assert!(text.lines().next().unwrap().ends_with("master_seed=17"), "{path:?}"),
                Some("jsonl") => {
                    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
                    assert_eq!(first["kind"], "provenance");
                    assert_eq!(first["master_seed"], 17);
                }
                _ => {}
            }
        }
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[model]\nlambda = 0.5\n");
    let out = dyadic(&["quantities", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda must exceed 1"));

    let cfg = write_config(dir.path(), "[model]\nlambada = 2.0\n");
    let out = dyadic(&["quantities", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let cfg = write_config(dir.path(), "[model]\nsigma = 0.0\n");
    let out = dyadic(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = dyadic(&["simulate", "--scheme", "deterministic", "--config", &cfg], dir.path());
    assert!(out.status.success());
}

#[test]
fn blow_up_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[model]\nn_shells = 4\n[run]\nscheme = \"deterministic\"\ndt = 0.5\nt_end = 50.0\n[initial]\npreset = \"geometric_decay\"\nrho = 1.0\nenergy = 1e6\n",
    );
    let out = dyadic(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failing_verification_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // an impossible tolerance for the coordinate check
    let cfg = write_config(dir.path(), "[report]\nonly = [2]\nequivalence_tol = 1e-30\n");
    let out = dyadic(&["verify", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("FAIL [2]"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("criterion 2"));
}

#[test]
fn verify_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[report]\nonly = [2, 5]\n");
    let out = dyadic(&["verify", "--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2);
}
