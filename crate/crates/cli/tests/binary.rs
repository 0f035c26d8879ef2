mod common;

use std::process::{Command, Output};

use common::{Fixture, EVAL};

fn pbforecast(fx: &Fixture, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbforecast"))
        .args(args)
        .args(fx.flags())
        .env("RUST_LOG", "warn")
        .env_remove("PBF_CONFIG")
        .env_remove("PBF_LLM_MODE")
        .output()
        .unwrap()
}

fn stderr_error(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.contains("\"error\"")).expect("structured error on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn success_exits_zero_with_json_on_stdout() {
    let fx = Fixture::new();
    let out = pbforecast(&fx, &["validate", EVAL]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["campaign"], EVAL);
}

#[test]
fn unknown_model_id_is_a_usage_error() {
    let fx = Fixture::new();
    let out = pbforecast(&fx, &["predict", "--model", "gpt", "--eval", EVAL]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_campaign_is_not_found() {
    let fx = Fixture::new();
    let out = pbforecast(&fx, &["evaluate", "atlantis-1999", "--model", "KNN"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_error(&out)["error"]["code"], "not_found");
}

#[test]
fn replay_without_fixtures_exits_with_missing_fixture() {
    let fx = Fixture::new();
    let out = pbforecast(&fx, &["predict", "--model", "ic", "--eval", EVAL, "--mode", "replay"]);
    assert_eq!(out.status.code(), Some(5));
    let err = stderr_error(&out);
    assert_eq!(err["error"]["code"], "missing_fixture");
    assert!(err["error"]["message"].as_str().unwrap().contains("missing fixture"));
}

#[test]
fn environment_sets_the_mode_and_flags_override_it() {
    let fx = Fixture::new();
    let with_env = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_pbforecast"))
            .args(args)
            .args(fx.flags())
            .env("PBF_LLM_MODE", "record")
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    };
    let recorded = with_env(&["predict", "--model", "nc", "--eval", EVAL, "--dry-run"]);
    assert_eq!(recorded.status.code(), Some(0), "{}", String::from_utf8_lossy(&recorded.stderr));
    let replayed = with_env(&["predict", "--model", "nc", "--eval", EVAL, "--dry-run", "--llm-mode", "replay"]);
    assert_eq!(replayed.status.code(), Some(0));
    assert_eq!(recorded.stdout, replayed.stdout);
}

#[test]
fn config_file_supplies_defaults() {
    let fx = Fixture::new();
    let cfg = fx.path("pbforecast.toml");
    std::fs::write(&cfg, "[pca_dims.\"synthville-2024\"]\npvm = 2\n").unwrap();
    let out = pbforecast(&fx, &["predict", "--model", "pvm", "--eval", EVAL, "--dry-run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(run["config"]["pca_dim"], 2);

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let out = pbforecast(&fx, &["validate", EVAL, "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn logs_are_json_lines() {
    let fx = Fixture::new();
    let out = Command::new(env!("CARGO_BIN_EXE_pbforecast"))
        .args(["fit", "--kind", "knn", "--train", "synthville-2022", "--dim", "2"])
        .args(fx.flags())
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert!(!lines.is_empty());
    for l in lines {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["level"].is_string() && v["message"].is_string());
    }
}
