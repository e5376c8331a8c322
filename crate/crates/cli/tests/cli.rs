//! Configuration-handling and end-to-end binary tests.

use breakfvm_cli::config::{emit_config, parse_config, EvalModeConfig};
use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_breakfvm");

fn minimal_config() -> &'static str {
    r#"{
        "mesh": {"type": "uniform", "R": 1.0, "I": 16},
        "kernel": {"alpha": 1.0, "zeta": 1.0, "eta": 1.0},
        "breakage": {"family": "power_conserving", "exponent": 0.0},
        "time": {"T": 1.0}
    }"#
}

#[test]
fn minimal_document_gets_defaults() {
    let config = parse_config(minimal_config(), true).unwrap();
    assert_eq!(config.time.theta, 0.9);
    assert_eq!(config.norm.r, 1.0);
    assert_eq!(config.norm.p, 0.0);
    assert_eq!(config.kernel.eval_mode, EvalModeConfig::Midpoint);
    assert!(config.assertions.enabled);
    assert_eq!(config.time.snapshot_count, 11);
    assert_eq!(config.output.directory, "out");
}

#[test]
fn unknown_keys_rejected_in_strict_mode() {
    let text = minimal_config().replace("\"T\": 1.0", "\"T\": 1.0, \"mystery\": 2");
    let err = parse_config(&text, true).unwrap_err();
    assert!(err.to_string().contains("mystery"), "{err}");
    assert!(parse_config(&text, false).is_ok());
}

#[test]
fn zeta_zero_needs_extension_flag() {
    let text =
        minimal_config().replace("\"zeta\": 1.0, \"eta\": 1.0", "\"zeta\": 0.0, \"eta\": 0.0");
    let err = parse_config(&text, true).unwrap_err();
    assert!(err.to_string().contains("zeta > 0"), "{err}");
    let with_flag = text.replace("\"eta\": 0.0", "\"eta\": 0.0, \"allow_zeta_zero\": true");
    assert!(parse_config(&with_flag, true).is_ok());
}

#[test]
fn nonconserving_family_needs_acknowledgement() {
    let text = minimal_config().replace("power_conserving", "power_paper");
    let err = parse_config(&text, true).unwrap_err();
    assert!(err.to_string().contains("volume conservation"), "{err}");
    let with_flag = text.replace(
        "\"exponent\": 0.0",
        "\"exponent\": 0.0, \"allow_nonconserving\": true",
    );
    assert!(parse_config(&with_flag, true).is_ok());
}

#[test]
fn theta_range_is_validated() {
    let text = minimal_config().replace("\"T\": 1.0", "\"T\": 1.0, \"theta\": 1.5");
    let err = parse_config(&text, true).unwrap_err();
    assert!(err.to_string().contains("theta"), "{err}");
}

#[test]
fn resolved_config_round_trips() {
    let config = parse_config(minimal_config(), true).unwrap();
    let emitted = emit_config(&config);
    let reparsed = parse_config(&emitted, true).unwrap();
    assert_eq!(config, reparsed);
}

fn run_bin(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn zero_horizon_snapshot_contains_only_initial_state() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "run.json",
        &minimal_config().replace("\"T\": 1.0", "\"T\": 0.0"),
    );
    let out = tmp.path().join("out");
    let result = run_bin(&[
        "simulate",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let snics = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    let mut lines = snics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "time,cell_index,midpoint,width,concentration"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 16);
    for row in rows {
        assert!(row.starts_with("0.0000000000000000e0,"));
    }
}

#[test]
fn identical_configs_give_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.json", minimal_config());
    let (out1, out2) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&out1, &out2] {
        let result = run_bin(&[
            "simulate",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
    }
    for name in ["snapshots.csv", "moments.csv", "manifest.json"] {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let moments = fs::read_to_string(out1.join("moments.csv")).unwrap();
    assert_eq!(
        moments.lines().next().unwrap(),
        "time,M0,M1,M2,weighted_norm,bound_P,bound_Pstar_log"
    );
}

#[test]
fn stable_dt_prints_worked_values() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.json", minimal_config());
    let out = tmp.path().join("out");
    let result = run_bin(&[
        "stable-dt",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let stdout = String::from_utf8(result.stdout).unwrap();
    assert!(stdout.contains("66.5015"), "{stdout}");
    assert!(stdout.contains("0.013534"), "{stdout}");
}

#[test]
fn exit_codes_follow_error_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    let broken = write_config(tmp.path(), "broken.json", "{\"mesh\": {}}");
    assert_eq!(
        run_bin(&["simulate", "--config", &broken, "--out", out])
            .status
            .code(),
        Some(1)
    );

    let over = write_config(
        tmp.path(),
        "override.json",
        &minimal_config().replace("\"T\": 1.0", "\"T\": 0.5, \"dt_override\": 1.8"),
    );
    assert_eq!(
        run_bin(&["simulate", "--config", &over, "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run_bin(&["simulate", "--config", &over, "--out", out, "--force-dt"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn custom_csv_initial_data() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rows = String::from("cell_index,concentration\n");
    for i in 0..16 {
        rows.push_str(&format!("{i},{}\n", 1.0 + 0.1 * i as f64));
    }
    fs::write(tmp.path().join("init.csv"), rows).unwrap();
    let config = write_config(
        tmp.path(),
        "run.json",
        &minimal_config().replace(
            "\"time\": {\"T\": 1.0}",
            "\"time\": {\"T\": 0.1}, \"initial\": {\"type\": \"custom_csv\", \"params\": {\"path\": \"init.csv\"}}",
        ),
    );
    let out = tmp.path().join("out");
    let result = run_bin(&[
        "simulate",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let snapshots = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    // First data row carries the first cell's initial value 1.0.
    let first = snapshots.lines().nth(1).unwrap();
    assert!(first.ends_with(",1.0000000000000000e0"), "{first}");
}

#[test]
fn breakage_family_defaults_to_conserving() {
    let text = minimal_config().replace(
        "\"breakage\": {\"family\": \"power_conserving\", \"exponent\": 0.0}",
        "\"breakage\": {\"exponent\": -0.5}",
    );
    let config = parse_config(&text, true).unwrap();
    assert!(config.build_breakage().unwrap().conserves_volume());
}

#[test]
fn verify_reports_pass_on_product_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "run.json",
        &minimal_config().replace("\"I\": 16", "\"I\": 256"),
    );
    let out = tmp.path().join("out");
    let result = run_bin(&[
        "verify",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    for check in [
        "PASS non_negativity",
        "PASS volume_conservation",
        "PASS particle_count_bound",
        "PASS weighted_norm_bound_log",
        "PASS count_oracle_product_kernel",
    ] {
        assert!(report.contains(check), "missing {check} in:\n{report}");
    }
    assert!(!report.contains("FAIL"), "{report}");
}

#[test]
fn thread_cap_env_var_is_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.json", minimal_config());
    let out = tmp.path().join("out");
    let result = Command::new(BIN)
        .env("BREAKFVM_THREADS", "1")
        .args([
            "study",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--i-list",
            "16,32,64",
        ])
        .output()
        .unwrap();
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let study = fs::read_to_string(out.join("study.csv")).unwrap();
    assert_eq!(
        study.lines().next().unwrap(),
        "I_coarse,I_fine,l1_distance,eoc"
    );
    assert_eq!(study.lines().count(), 3);
}

#[test]
fn geometric_and_custom_meshes_accepted() {
    let geo = minimal_config().replace(
        "{\"type\": \"uniform\", \"R\": 1.0, \"I\": 16}",
        "{\"type\": \"geometric\", \"R\": 1.0, \"I\": 16, \"ratio\": 1.2}",
    );
    assert!(parse_config(&geo, true).is_ok());
    let custom = minimal_config().replace(
        "{\"type\": \"uniform\", \"R\": 1.0, \"I\": 16}",
        "{\"type\": \"custom\", \"edges\": [0.0, 0.25, 0.5, 1.0]}",
    );
    assert!(parse_config(&custom, true).is_ok());
    let bad = minimal_config().replace(
        "{\"type\": \"uniform\", \"R\": 1.0, \"I\": 16}",
        "{\"type\": \"custom\", \"edges\": [0.1, 0.25]}",
    );
    let config = parse_config(&bad, true).unwrap();
    assert!(config.build_mesh().is_err());
}
