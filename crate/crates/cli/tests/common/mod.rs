#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pbforecast::data::{write_campaign, Campaign};
use pbforecast::synthetic::{synthetic_pair, SyntheticSpec};
use pbforecast_cli::config::{FileConfig, LlmProvider, Overrides, Settings};
use pbforecast_cli::workspace::Workspace;

pub const TRAIN: &str = "synthville-2022";
pub const EVAL: &str = "synthville-2024";

/// A temporary workspace holding a synthetic train/eval pair.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub train: Campaign,
    pub eval: Campaign,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec { projects: 30, ..SyntheticSpec::default() };
        let (train, eval) = synthetic_pair(&spec, 32, 11);
        for c in [&train, &eval] {
            write_campaign(c, &dir.path().join("data").join(c.id())).unwrap();
        }
        Fixture { dir, train, eval }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn overrides(&self) -> Overrides {
        Overrides {
            config: None,
            data_dir: Some(self.path("data")),
            runs_dir: Some(self.path("runs")),
            models_dir: Some(self.path("models")),
            reports_dir: Some(self.path("reports")),
            embedding_provider: Some("hashing".into()),
            embedding_cache: None,
            llm_mode: None,
            llm_model: None,
            llm_provider: Some(LlmProvider::Scripted),
            transcripts_dir: Some(self.path("transcripts")),
        }
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::open(Settings::merge(self.overrides(), FileConfig::default())).unwrap()
    }

    /// Global flags pointing the binary at this workspace.
    pub fn flags(&self) -> Vec<String> {
        let p = |rel: &str| self.path(rel).display().to_string();
        vec![
            "--data-dir".into(),
            p("data"),
            "--runs-dir".into(),
            p("runs"),
            "--models-dir".into(),
            p("models"),
            "--reports-dir".into(),
            p("reports"),
            "--embedding-provider".into(),
            "hashing".into(),
            "--llm-provider".into(),
            "scripted".into(),
            "--transcripts-dir".into(),
            p("transcripts"),
        ]
    }
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

/// Parses `args` as a command line against this workspace and runs it in-process.
pub fn run(fx: &Fixture, args: &[&str]) -> pbforecast_cli::error::CliResult<pbforecast_cli::commands::Output> {
    use clap::Parser;
    let mut argv: Vec<String> = vec!["pbforecast".into()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(fx.flags());
    let cli = pbforecast_cli::args::Cli::try_parse_from(argv).expect("arguments parse");
    let settings = Settings::resolve(cli.global.overrides())?;
    let ws = Workspace::open(settings)?;
    pbforecast_cli::commands::run(&ws, &cli.command)
}

pub fn run_json(fx: &Fixture, args: &[&str]) -> serde_json::Value {
    match run(fx, args) {
        Ok(pbforecast_cli::commands::Output::Json(v)) => v,
        Ok(other) => panic!("expected JSON output, got {other:?}"),
        Err(e) => panic!("{args:?} failed: {e}"),
    }
}
