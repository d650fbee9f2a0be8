use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn default_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

fn frontlab(experiment: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frontlab"))
        .arg(experiment)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(extra)
        .output()
        .unwrap()
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_GRID: &str = "[grid]\nx_min = -20.0\nx_max = 20.0\nn = 801\n";

#[test]
fn validate_default_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    let o = frontlab("validate", &default_config(), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["all_pass"], 1.0);
    assert_eq!(s["violations"], 0.0);
    assert!(s.as_object().unwrap().values().all(Value::is_number));
}

#[test]
fn validate_counterexample_is_a_check_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "c.toml",
        "[nonlinearity]\ntheta = 0.3\ntheta_tilde = 0.5\n",
    );
    let o = frontlab("validate", &cfg, &tmp.path().join("v"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("H4 violated"), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("v/violations.csv")).unwrap();
    assert!(csv.lines().skip(1).any(|l| l.starts_with("4,")));
}

#[test]
fn manifest_lists_every_file_with_its_hash() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    let o = frontlab("validate", &default_config(), &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    let m = json(&out.join("manifest.json"));
    let config_hash = hex::encode(Sha256::digest(fs::read(default_config()).unwrap()));
    assert_eq!(m["config_sha256"], config_hash.as_str());
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(m["versions"]["frontlab-core"].is_string());
    let mut listed = BTreeSet::new();
    for f in m["files"].as_array().unwrap() {
        let path = f["path"].as_str().unwrap();
        let data = fs::read(out.join(path)).unwrap();
        assert_eq!(
            f["sha256"],
            hex::encode(Sha256::digest(&data)).as_str(),
            "{path}"
        );
        assert_eq!(f["bytes"], data.len() as u64);
        listed.insert(path.to_string());
    }
    let on_disk: BTreeSet<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    assert_eq!(listed, on_disk);
}

#[test]
fn unordered_comparison_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "c.toml",
        &format!(
            "{SMALL_GRID}[comparison]\nduration = 1.0\n\
             lower = {{ kind = \"step\", at = 5.0, high = 1.0, low = 0.0 }}\n\
             upper = {{ kind = \"step\", at = 0.0, high = 1.0, low = 0.0 }}\n"
        ),
    );
    let o = frontlab("comparison", &cfg, &tmp.path().join("c"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("precondition"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    for (name, body) in [
        ("dt.toml", "[time]\ndt = 0.5\n"),
        ("unknown.toml", "[grid]\nspacing = 0.1\n"),
        (
            "asym.toml",
            "[grid]\nx_min = -10.0\nx_max = 20.0\nn = 601\n",
        ),
        ("syntax.toml", "[grid\n"),
    ] {
        let cfg = write_config(&tmp, name, body);
        let o = frontlab("validate", &cfg, &tmp.path().join("x"), &[]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
    }
    let o = frontlab("nonsense", &default_config(), &tmp.path().join("x"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = frontlab(
        "validate",
        &tmp.path().join("missing.toml"),
        &tmp.path().join("x"),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn wave_summary_reports_a_converged_positive_speed() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("w");
    let o = frontlab("wave", &default_config(), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&out.join("summary.json"));
    let (c, res, tol) = (
        s["c_star"].as_f64().unwrap(),
        s["residual"].as_f64().unwrap(),
        s["tol"].as_f64().unwrap(),
    );
    assert!(c > 0.0 && res <= tol);
    assert!(s["c_star_max"].as_f64().unwrap() > c);
    let csv = fs::read_to_string(out.join("wave.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("x,phi_min,dphi_min,phi_max,dphi_max")
    );
    assert!(out.join("wave.svg").exists());
}

#[test]
fn identical_config_and_seed_give_identical_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", "[comparison]\npairs = 3\nduration = 2.0\n");
    let runs: Vec<Vec<u8>> = [("a", "7"), ("b", "7"), ("c", "8")]
        .iter()
        .map(|(dir, seed)| {
            let out = tmp.path().join(dir);
            let o = frontlab("comparison", &cfg, &out, &["--seed", seed]);
            assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
            fs::read(out.join("comparison.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_ne!(runs[0], runs[2]);
}

#[test]
fn sweep_runs_each_instance_and_lists_nested_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "s.toml",
        &format!(
            "{SMALL_GRID}[comparison]\nduration = 1.0\n\
             lower = {{ kind = \"step\", at = -5.0, high = 1.0, low = 0.0 }}\n\
             upper = {{ kind = \"step\", at = 0.0, high = 1.0, low = 0.0 }}\n\
             [sweep]\nexperiment = \"comparison\"\nparameter = \"comparison.lower.at\"\nvalues = [-4.0, -2, 3.0]\n"
        ),
    );
    let out = tmp.path().join("s");
    let o = frontlab("sweep", &cfg, &out, &[]);
    // The last value breaks the order precondition of its instance.
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let ok = write_config(
        &tmp,
        "ok.toml",
        &fs::read_to_string(&cfg).unwrap().replace("3.0]", "-1.0]"),
    );
    let o = frontlab("sweep", &ok, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("index,value,passed,"));
    let m = json(&out.join("manifest.json"));
    let listed: Vec<&str> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    for i in 0..3 {
        for f in ["comparison.csv", "summary.json", "manifest.json"] {
            assert!(
                listed.contains(&format!("run_{i:03}/{f}").as_str()),
                "{listed:?}"
            );
        }
    }
}
