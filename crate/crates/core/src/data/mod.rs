//! Campaign data model, CSV / Pabulib ingestion, validation and the run store.

mod campaign;
mod csv_io;
mod money;
mod pabulib;
mod runs;

use std::path::{Path, PathBuf};

pub use campaign::{
    project_violations, slug, validate_campaign, Campaign, CampaignMeta, Project,
    ValidationReport, Violation,
};
pub use csv_io::{
    load_campaign, load_campaign_dir, read_meta, read_projects, write_campaign, write_projects,
    META_FILE, PROJECTS_FILE,
};
pub use money::{Money, ParseMoneyError};
pub use pabulib::{load_pabulib, parse_pabulib};
pub use runs::{
    ModelId, PredictionRecord, PredictionRun, RunConfig, RunStore, UnknownModel,
    MAX_GAP_FRACTION,
};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}malformed CSV: {source}", fmt_path(.path))]
    Csv { path: Option<PathBuf>, source: csv::Error },
    #[error("missing required column {column:?}")]
    MissingColumn { column: String },
    #[error("row {row}, column {column}: {message}")]
    Row { row: usize, column: String, message: String },
    #[error("duplicate project id {id:?} at rows {rows:?}")]
    DuplicateId { id: String, rows: Vec<usize> },
    #[error("project table has no rows")]
    Empty,
    #[error("{path}: invalid campaign metadata: {source}")]
    Meta { path: PathBuf, source: serde_json::Error },
    #[error("campaign failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("pabulib line {line}: {message}")]
    Pabulib { line: usize, message: String },
    #[error("{path}: corrupt run record at line {line}: {message}")]
    RunParse { path: PathBuf, line: usize, message: String },
}

fn fmt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default()
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(source: csv::Error) -> Self {
        DataError::Csv { path: None, source }
    }

    pub(crate) fn with_path(self, path: &Path) -> Self {
        match self {
            DataError::Csv { source, .. } => DataError::Csv { path: Some(path.to_path_buf()), source },
            other => other,
        }
    }
}
