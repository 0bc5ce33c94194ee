//! CLI integration tests: subcommands, exit codes, the error JSON contract,
//! output resolution, and overrides.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedvalue"))
}

fn write_config(dir: &Path, name: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{name}.toml"));
    let body = format!(
        r#"
name = "{name}"
n_clients = 2
repeats = 2
master_seed = 5
backend = "ensemble"
regime = "even-50-50"

[data]
feature_dim = 6
label_count = 3
per_client_size = 100
train_fraction = 0.8
test_size_per_source = 80

[[sources]]
name = "alpha"
subgroup_a_share = 0.5
disparity = 0.5
label_noise = 0.5

[training]
patience = 2
max_rounds = 5
batch = 16
{extra}
"#
    );
    std::fs::write(&path, body).unwrap();
    path
}

fn stderr_error_kind(output: &Output) -> String {
    let stderr = String::from_utf8_lossy(&output.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim())
        .unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {stderr}"));
    parsed["error"]["kind"].as_str().unwrap_or_default().to_string()
}

#[test]
fn validate_config_accepts_good_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "good", "");
    let out = bin().arg("validate-config").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("ok:"), "{stdout}");
}

#[test]
fn validate_config_rejects_unknown_field_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad", "not_a_real_key = 1");
    let out = bin().arg("validate-config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert_eq!(stderr_error_kind(&out), "config");
}

#[test]
fn validate_config_rejects_semantic_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "odd", "");
    let text = std::fs::read_to_string(&cfg).unwrap();
    std::fs::write(&cfg, text.replace("n_clients = 2", "n_clients = 3")).unwrap();
    let out = bin().arg("validate-config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert_eq!(stderr_error_kind(&out), "config");
}

#[test]
fn validate_shipped_reference_configs() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["default.toml", "quick.toml"] {
        let out = bin()
            .arg("validate-config")
            .arg(configs.join(name))
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn run_emits_reports_and_report_reverifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "runnable", "");
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--jobs")
        .arg("2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in [
        "summary.json",
        "sv_table.csv",
        "bias_sv.csv",
        "rewards.csv",
        "data_manifest.csv",
        "timings.csv",
    ] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("2 repeats ok"), "{stdout}");

    // `report` re-verifies and re-emits from the run directory.
    let out = bin().arg("report").arg(&out_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("verified 2 repeats"), "{stdout}");
}

#[test]
fn run_overrides_change_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "overridable", "");
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--repeats")
        .arg("1")
        .arg("--seed")
        .arg("99")
        .arg("--backend")
        .arg("gradient-accum")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["config"]["repeats"], 1);
    assert_eq!(summary["config"]["master_seed"], 99);
    assert_eq!(summary["config"]["backend"], "gradient-accum");
}

#[test]
fn unknown_backend_override_fails_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "badbackend", "");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--backend")
        .arg("monte-carlo")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert_eq!(stderr_error_kind(&out), "config");
}

#[test]
fn out_env_var_sets_default_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "envout", "");
    let root = dir.path().join("env-root");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .env("FEDVALUE_OUT", &root)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("envout").join("summary.json").exists());
}

#[test]
fn flip_study_writes_flip_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "flippy",
        "[flip_plan]\nflipped_clients = [1]\nratios = [0.05]\nrun_ratio = 0.05\n",
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("flip-study")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("flip.json").exists());
    assert!(out_dir.join("flip.csv").exists());
    let csv = std::fs::read_to_string(out_dir.join("flip.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "header, zero baseline, one ratio");
}

#[test]
fn missing_run_dir_reports_persist_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("report")
        .arg(dir.path().join("nope"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert_eq!(stderr_error_kind(&out), "persist");
}
