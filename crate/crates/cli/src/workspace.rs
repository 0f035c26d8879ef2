//! Campaign discovery, default pairings and construction of embedders, LLM
//! clients and stores from [`Settings`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pbforecast::data::{
    load_campaign_dir, read_meta, slug, Campaign, CampaignMeta, ModelId, PredictionRun, RunStore, META_FILE,
};
use pbforecast::features::{build_embedder, Embedder, EmbeddingConfig};
use pbforecast::llm::{LlmClient, LlmMode, ScriptedBackend};
use pbforecast::models::{ClassicalModel, ModelKind};

use crate::config::{LlmProvider, Settings};
use crate::error::{CliError, CliResult};

/// A campaign directory found under the data directory.
#[derive(Debug, Clone)]
pub struct CampaignEntry {
    pub id: String,
    pub dir: PathBuf,
    pub meta: CampaignMeta,
}

pub struct Workspace {
    pub settings: Settings,
    entries: BTreeMap<String, CampaignEntry>,
}

impl Workspace {
    /// Indexes every `<data_dir>/<name>/meta.json`. A missing data directory
    /// yields an empty index.
    pub fn open(settings: Settings) -> CliResult<Self> {
        let mut entries: BTreeMap<String, CampaignEntry> = BTreeMap::new();
        if settings.data_dir.is_dir() {
            let mut dirs: Vec<PathBuf> = std::fs::read_dir(&settings.data_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join(META_FILE).is_file())
                .collect();
            dirs.sort();
            for dir in dirs {
                let meta = read_meta(&dir.join(META_FILE))?;
                let id = meta.campaign_id();
                if let Some(prev) = entries.get(&id) {
                    return Err(CliError::new(
                        crate::error::ErrorKind::Data,
                        format!("campaign id {id:?} is used by both {} and {}", prev.dir.display(), dir.display()),
                    ));
                }
                entries.insert(id.clone(), CampaignEntry { id, dir, meta });
            }
        }
        Ok(Workspace { settings, entries })
    }

    pub fn entries(&self) -> impl Iterator<Item = &CampaignEntry> {
        self.entries.values()
    }

    pub fn campaign_ids(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn entry(&self, id: &str) -> CliResult<&CampaignEntry> {
        self.entries.get(id).ok_or_else(|| {
            CliError::not_found(format!(
                "unknown campaign {id:?} in {} (known: {})",
                self.settings.data_dir.display(),
                self.campaign_ids().join(", ")
            ))
        })
    }

    pub fn load(&self, id: &str) -> CliResult<Campaign> {
        Ok(load_campaign_dir(&self.entry(id)?.dir)?)
    }

    /// Training campaign for `target`: the configured pair, else the most
    /// recent earlier campaign of the same city in the same language.
    pub fn default_train(&self, target: &str) -> CliResult<String> {
        if let Some(train) = self.settings.pairs.get(target) {
            return Ok(train.clone());
        }
        let t = &self.entry(target)?.meta;
        self.entries
            .values()
            .filter(|e| {
                slug(&e.meta.city) == slug(&t.city)
                    && e.meta.language.eq_ignore_ascii_case(&t.language)
                    && e.meta.year < t.year
            })
            .max_by_key(|e| e.meta.year)
            .map(|e| e.id.clone())
            .ok_or_else(|| {
                CliError::usage(format!("no earlier campaign of the same city and language for {target:?}; pass --train"))
            })
    }

    pub fn train_for(&self, target: &str, explicit: Option<&str>) -> CliResult<String> {
        match explicit {
            Some(t) => Ok(t.to_string()),
            None => self.default_train(target),
        }
    }

    pub fn run_store(&self) -> CliResult<RunStore> {
        Ok(RunStore::open(&self.settings.runs_dir)?)
    }

    pub fn embedder(&self) -> CliResult<Box<dyn Embedder>> {
        Ok(build_embedder(&self.settings.embedding)?)
    }

    /// Embedder matching a fitted model. The configured cache directory is
    /// kept so cached vectors are reused.
    pub fn embedder_for(&self, stored: &EmbeddingConfig) -> CliResult<Box<dyn Embedder>> {
        let mut config = stored.clone();
        if config.cache_dir.is_none() {
            config.cache_dir = self.settings.embedding.cache_dir.clone();
        }
        Ok(build_embedder(&config)?)
    }

    pub fn llm_client(&self) -> CliResult<LlmClient> {
        let config = self.settings.llm.clone();
        let client = match (self.settings.llm_provider, config.mode) {
            (LlmProvider::Scripted, LlmMode::Live | LlmMode::Record) => {
                LlmClient::new(config, Some(Box::new(ScriptedBackend)))
            }
            _ => LlmClient::from_config(config),
        };
        Ok(client?)
    }

    pub fn model_path(&self, train: &str, kind: ModelKind) -> PathBuf {
        self.settings.models_dir.join(format!("{train}.{}.json", kind.to_string().to_lowercase()))
    }

    pub fn load_model(&self, path: &Path) -> CliResult<ClassicalModel> {
        if !path.is_file() {
            return Err(CliError::not_found(format!("no fitted model at {}; run `fit` first", path.display())));
        }
        Ok(ClassicalModel::load(path)?)
    }

    pub fn reports_dir(&self, campaign: &str) -> PathBuf {
        self.settings.reports_dir.join(campaign)
    }

    /// A stored run by id, or the latest run of `model` for the campaign.
    pub fn resolve_run(&self, campaign: &str, run_id: Option<&str>, model: Option<ModelId>) -> CliResult<PredictionRun> {
        let store = self.run_store()?;
        match (run_id, model) {
            (Some(id), _) => {
                let run = store.get(id)?.ok_or_else(|| CliError::not_found(format!("no run with id {id:?}")))?;
                if run.campaign_id != campaign {
                    return Err(CliError::usage(format!("run {id:?} belongs to campaign {:?}", run.campaign_id)));
                }
                Ok(run)
            }
            (None, Some(m)) => store
                .latest(campaign, m)?
                .ok_or_else(|| CliError::not_found(format!("no {m} run stored for {campaign:?}; run `predict` first"))),
            (None, None) => Err(CliError::usage("pass --run or --model")),
        }
    }
}
