//! Prediction runs and their append-only JSONL store.
//!
//! Layout: one file per campaign, `<store>/<campaign-id>.jsonl`, one run per
//! line. A run is identified by `(campaign, model, created_at)`; the store
//! assigns `created_at` on save and guarantees it strictly increases within a
//! campaign file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::campaign::Campaign;
use super::DataError;

/// Which predictor produced a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "PVM")]
    Pvm,
    #[serde(rename = "KNN")]
    Knn,
    #[serde(rename = "NC")]
    Nc,
    #[serde(rename = "RAG")]
    Rag,
    #[serde(rename = "RAG_SB")]
    RagSb,
    #[serde(rename = "IC")]
    Ic,
    #[serde(rename = "NULL")]
    Null,
}

impl ModelId {
    pub const ALL: [ModelId; 7] = [
        ModelId::Pvm,
        ModelId::Knn,
        ModelId::Nc,
        ModelId::Rag,
        ModelId::RagSb,
        ModelId::Ic,
        ModelId::Null,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Pvm => "PVM",
            ModelId::Knn => "KNN",
            ModelId::Nc => "NC",
            ModelId::Rag => "RAG",
            ModelId::RagSb => "RAG_SB",
            ModelId::Ic => "IC",
            ModelId::Null => "NULL",
        }
    }

    pub fn is_llm(self) -> bool {
        matches!(self, ModelId::Nc | ModelId::Rag | ModelId::RagSb | ModelId::Ic)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown model id {0:?} (expected one of pvm, knn, nc, rag, rag-sb, ic, null)")]
pub struct UnknownModel(pub String);

impl FromStr for ModelId {
    type Err = UnknownModel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_uppercase().replace('-', "_");
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| UnknownModel(s.to_string()))
    }
}

/// One project's prediction. `predicted_votes == None` is a gap (the model
/// produced no usable number).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub project_id: String,
    pub predicted_votes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictionRecord {
    pub fn value(project_id: impl Into<String>, votes: f64) -> Self {
        PredictionRecord {
            project_id: project_id.into(),
            predicted_votes: Some(votes),
            prompt: None,
            prompt_hash: None,
            response: None,
            error: None,
        }
    }
}

/// Settings that influenced a run, captured for provenance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_campaign: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_neighbors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRun {
    pub campaign_id: String,
    pub city: String,
    pub year: i32,
    pub language: String,
    pub model: ModelId,
    pub records: Vec<PredictionRecord>,
    pub config: RunConfig,
    /// False when more than 10% of records are gaps.
    pub complete: bool,
    /// Assigned by [`RunStore::save`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
}

/// Fraction of gaps above which a run is incomplete.
pub const MAX_GAP_FRACTION: f64 = 0.10;

impl PredictionRun {
    /// Builds a run for `campaign`, computing the completeness flag.
    pub fn new(
        campaign: &Campaign,
        model: ModelId,
        records: Vec<PredictionRecord>,
        config: RunConfig,
    ) -> Self {
        let mut run = PredictionRun {
            campaign_id: campaign.id(),
            city: campaign.meta.city.clone(),
            year: campaign.meta.year,
            language: campaign.meta.language.clone(),
            model,
            records,
            config,
            complete: true,
            created_at: None,
        };
        run.complete = run.gap_count() as f64 <= MAX_GAP_FRACTION * run.records.len() as f64;
        run
    }

    pub fn gap_count(&self) -> usize {
        self.records.iter().filter(|r| r.predicted_votes.is_none()).count()
    }

    /// `<campaign>:<model>:<timestamp>`, available once saved.
    pub fn run_id(&self) -> Option<String> {
        self.created_at.map(|t| {
            format!(
                "{}:{}:{}",
                self.campaign_id,
                self.model,
                t.to_rfc3339_opts(SecondsFormat::Nanos, true)
            )
        })
    }

    /// Checks the one-record-per-project invariant and non-negativity.
    pub fn check_against(&self, campaign: &Campaign) -> Result<(), String> {
        if self.records.len() != campaign.projects.len() {
            return Err(format!(
                "run has {} records but campaign has {} projects",
                self.records.len(),
                campaign.projects.len()
            ));
        }
        for (r, p) in self.records.iter().zip(&campaign.projects) {
            if r.project_id != p.id {
                return Err(format!("record {:?} does not match project {:?}", r.project_id, p.id));
            }
            if let Some(v) = r.predicted_votes {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(format!("project {:?}: invalid prediction {v}", p.id));
                }
            }
        }
        Ok(())
    }

    /// Predictions aligned with the campaign's project order.
    pub fn predictions(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.predicted_votes).collect()
    }
}

/// Append-only store of prediction runs. Writes are serialized through an
/// internal lock; one process should own a store directory for writing.
pub struct RunStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl RunStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, DataError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| DataError::io(&dir, e))?;
        Ok(RunStore { dir, write_lock: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file_for(&self, campaign_id: &str) -> PathBuf {
        self.dir.join(format!("{campaign_id}.jsonl"))
    }

    /// Appends `run`, stamping a fresh `created_at`. Returns the stored run.
    pub fn save(&self, run: &PredictionRun) -> Result<PredictionRun, DataError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.file_for(&run.campaign_id);
        let last = self
            .load_path(&path)?
            .iter()
            .filter_map(|r| r.created_at)
            .max();
        let now = Utc::now();
        let stamp = match last {
            Some(last) if now <= last => last + Duration::nanoseconds(1),
            _ => now,
        };
        let mut stored = run.clone();
        stored.created_at = Some(stamp);

        let mut line = serde_json::to_string(&stored).expect("run serializes");
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| DataError::io(&path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| DataError::io(&path, e))?;
        file.sync_data().map_err(|e| DataError::io(&path, e))?;
        Ok(stored)
    }

    /// All runs of a campaign in save order.
    pub fn load(&self, campaign_id: &str) -> Result<Vec<PredictionRun>, DataError> {
        self.load_path(&self.file_for(campaign_id))
    }

    fn load_path(&self, path: &Path) -> Result<Vec<PredictionRun>, DataError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(DataError::io(path, e)),
        };
        parse_runs(&text).map_err(|(line, message)| DataError::RunParse {
            path: path.to_path_buf(),
            line,
            message,
        })
    }

    /// Most recent run of `model` for a campaign.
    pub fn latest(&self, campaign_id: &str, model: ModelId) -> Result<Option<PredictionRun>, DataError> {
        Ok(self.load(campaign_id)?.into_iter().rev().find(|r| r.model == model))
    }

    /// Most recent run per model, in [`ModelId::ALL`] order.
    pub fn latest_per_model(&self, campaign_id: &str) -> Result<Vec<PredictionRun>, DataError> {
        let mut latest: BTreeMap<ModelId, PredictionRun> = BTreeMap::new();
        for run in self.load(campaign_id)? {
            latest.insert(run.model, run);
        }
        Ok(latest.into_values().collect())
    }

    /// Looks a run up by its [`PredictionRun::run_id`].
    pub fn get(&self, run_id: &str) -> Result<Option<PredictionRun>, DataError> {
        let campaign_id = run_id.split(':').next().unwrap_or_default();
        Ok(self
            .load(campaign_id)?
            .into_iter()
            .find(|r| r.run_id().as_deref() == Some(run_id)))
    }
}

/// Parses JSONL; a final line without a newline terminator is a truncated
/// write and is rejected like any other malformed line.
fn parse_runs(text: &str) -> Result<Vec<PredictionRun>, (usize, String)> {
    let mut runs = Vec::new();
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        let line_no = i + 1;
        if !line.ends_with('\n') {
            return Err((line_no, "truncated record (missing line terminator)".into()));
        }
        let body = line.trim_end();
        if body.is_empty() {
            continue;
        }
        let run: PredictionRun = serde_json::from_str(body).map_err(|e| (line_no, e.to_string()))?;
        runs.push(run);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::campaign::tests::{meta, project};

    fn campaign() -> Campaign {
        let mut m = meta();
        m.total_votes = 30;
        Campaign { meta: m, projects: vec![project("a", 10, Some(10)), project("b", 20, Some(20))] }
    }

    fn run(model: ModelId) -> PredictionRun {
        let mut rec = PredictionRecord::value("a", 12.5);
        rec.prompt = Some("Prompt with \"quotes\"\nand lines".into());
        rec.response = Some("Raisonnement…\nPREDICTION: 12".into());
        PredictionRun::new(
            &campaign(),
            model,
            vec![rec, PredictionRecord { predicted_votes: None, ..PredictionRecord::value("b", 0.0) }],
            RunConfig { seed: Some(7), ..Default::default() },
        )
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let stored = store.save(&run(ModelId::Ic)).unwrap();
        let loaded = store.load("toulouse-2024").unwrap();
        assert_eq!(loaded, vec![stored.clone()]);
        let id = stored.run_id().unwrap();
        assert_eq!(store.get(&id).unwrap(), Some(stored));
    }

    #[test]
    fn two_saves_are_distinct_entries() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let a = store.save(&run(ModelId::Pvm)).unwrap();
        let b = store.save(&run(ModelId::Pvm)).unwrap();
        assert!(b.created_at > a.created_at);
        assert_ne!(a.run_id(), b.run_id());
        assert_eq!(store.load("toulouse-2024").unwrap().len(), 2);
        assert_eq!(store.latest("toulouse-2024", ModelId::Pvm).unwrap(), Some(b));
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        store.save(&run(ModelId::Knn)).unwrap();
        let path = dir.path().join("toulouse-2024.jsonl");
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        match store.load("toulouse-2024").unwrap_err() {
            DataError::RunParse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn garbage_line_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        store.save(&run(ModelId::Knn)).unwrap();
        let path = dir.path().join("toulouse-2024.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{not json}\n").unwrap();
        assert!(matches!(store.load("toulouse-2024").unwrap_err(), DataError::RunParse { line: 2, .. }));
    }

    #[test]
    fn completeness_flag() {
        let c = campaign();
        let r = run(ModelId::Nc);
        assert_eq!(r.gap_count(), 1);
        assert!(!r.complete, "1 gap of 2 exceeds 10%");
        assert!(r.check_against(&c).is_ok());
        let full = PredictionRun::new(
            &c,
            ModelId::Knn,
            vec![PredictionRecord::value("a", 1.0), PredictionRecord::value("b", 2.0)],
            RunConfig::default(),
        );
        assert!(full.complete);
    }

    #[test]
    fn model_ids_parse() {
        assert_eq!("rag-sb".parse::<ModelId>().unwrap(), ModelId::RagSb);
        assert_eq!("PVM".parse::<ModelId>().unwrap(), ModelId::Pvm);
        assert!("gpt".parse::<ModelId>().is_err());
        assert_eq!(serde_json::to_string(&ModelId::RagSb).unwrap(), "\"RAG_SB\"");
    }
}
