use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use scatter_lab::output::{read_table, RunDir};
use scatter_lab::{exit, load, parse, run_experiment};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(format!("{name}.toml"))
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scatter-lab"))
        .args(args)
        .output()
        .unwrap()
}

fn run_fixture(name: &str, recipe: &str, out: &Path, extra: &[&str]) -> (i32, Value) {
    let mut overrides = vec![format!("output_dir={}", out.display())];
    overrides.extend(extra.iter().map(|s| s.to_string()));
    let loaded = load(&fixture(name), &overrides).unwrap();
    let outcome = run_experiment(recipe, &loaded).unwrap();
    let text = fs::read_to_string(out.join("summary.json")).unwrap();
    (outcome.exit_code, serde_json::from_str(&text).unwrap())
}

#[test]
fn toy_remainder_has_order_four_at_k_two() {
    let dir = TempDir::new().unwrap();
    let (code, summary) = run_fixture("toy-remainder", "remainder-order", dir.path(), &[]);
    assert_eq!(code, exit::PASS);
    let slope = summary["slope"].as_f64().unwrap();
    assert!((3.7..=4.3).contains(&slope), "slope {slope}");
    let table = read_table(&dir.path().join("remainder.csv")).unwrap();
    assert_eq!(table.columns, ["K", "epsilon", "residual"]);
    assert_eq!(table.rows.len(), 3 * 7);
    assert!(table.metadata.iter().any(|(k, v)| k == "seed" && v == "1"));
}

#[test]
fn free_scattering_is_the_identity() {
    let dir = TempDir::new().unwrap();
    let (code, summary) = run_fixture("toy-free", "scatter", dir.path(), &[]);
    assert_eq!(code, exit::PASS);
    assert_eq!(summary["free_identity"], Value::Bool(true));
    assert!(summary["d_norm_u_plus_minus_u_minus"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn even_power_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = fixture("toy-scatter");
    let out_arg = format!("output_dir={}", out.display());
    let result = lab(&[
        "run",
        "scatter",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "p=4",
        "--set",
        &out_arg,
    ]);
    assert_eq!(result.status.code(), Some(exit::CONFIG));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("odd"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(fixture("toy-scatter"))
        .unwrap()
        .replace("[grid]", "[grid]\nsize = 3");
    let path = dir.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let result = lab(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(exit::CONFIG));
    assert!(String::from_utf8_lossy(&result.stderr).contains("size"));
}

#[test]
fn unknown_experiments_are_rejected() {
    let config = fixture("toy-scatter");
    let result = lab(&["run", "no-such-thing", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(exit::CONFIG));
}

#[test]
fn list_names_every_recipe() {
    let result = lab(&["list"]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    for name in [
        "scatter",
        "hierarchy",
        "remainder-order",
        "omega-invariance",
        "inverse-scattering",
        "norm-audit",
        "partition-diagnostic",
    ] {
        assert!(stdout.contains(name), "{name} missing");
    }
}

#[test]
fn overrides_change_the_config_and_its_hash() {
    let base = fs::read_to_string(fixture("toy-scatter")).unwrap();
    let plain = parse(&base, &[]).unwrap();
    let longer = parse(&base, &["horizon.T=20.0".into()]).unwrap();
    assert_eq!(longer.config.horizon.horizon, 20.0);
    assert_ne!(plain.hash, longer.hash);
    // the hash is taken over the parsed document, not the raw text
    let again = parse(&format!("# comment\n{base}"), &[]).unwrap();
    assert_eq!(plain.hash, again.hash);
    assert!(parse(&base, &["horizon.nope=1".into()]).is_err());
    assert!(parse(&base, &["missing-equals".into()]).is_err());
}

#[test]
fn divergence_exits_as_tainted() {
    let dir = TempDir::new().unwrap();
    let (code, summary) = run_fixture(
        "toy-scatter",
        "scatter",
        dir.path(),
        &["data.amplitude=100.0"],
    );
    assert_eq!(code, exit::TAINTED);
    assert_eq!(summary["status"], "tainted");
}

#[test]
fn undefined_power_fails_without_crashing() {
    let dir = TempDir::new().unwrap();
    let (code, summary) = run_fixture(
        "toy-inverse",
        "inverse-scattering",
        dir.path(),
        &["lambda=0.0"],
    );
    assert_eq!(code, exit::ASSERTION);
    assert!(summary["p_hat"].is_null());
}

#[test]
fn reruns_are_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_fixture("toy-partition", "partition-diagnostic", a.path(), &[]);
    run_fixture("toy-partition", "partition-diagnostic", b.path(), &[]);
    for file in ["summary.json", "intervals.csv"] {
        let left = fs::read_to_string(a.path().join(file)).unwrap();
        let right = fs::read_to_string(b.path().join(file)).unwrap();
        // only the output directory differs, and it is not recorded
        assert_eq!(left, right, "{file}");
    }
}

#[test]
fn tables_round_trip_exactly() {
    let dir = TempDir::new().unwrap();
    let run = RunDir::create(dir.path(), "scatter", "abc", 9).unwrap();
    let rows = vec![
        vec![0.1, 1.0 / 3.0, -2.5e-300],
        vec![f64::MAX, f64::MIN_POSITIVE, 5e-324],
        vec![-0.0, 1e22, std::f64::consts::PI],
    ];
    let path = run.write_table("t", &["a", "b", "c"], &rows).unwrap();
    let table = read_table(&path).unwrap();
    assert_eq!(table.columns, ["a", "b", "c"]);
    for (x, y) in table.rows.iter().flatten().zip(rows.iter().flatten()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    let keys: Vec<&str> = table.metadata.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(
        keys,
        ["recipe", "config_sha256", "seed", "prng", "versions"]
    );
}
