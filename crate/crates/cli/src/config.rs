//! Settings resolution. Precedence is command-line flag, then environment
//! variable (clap reads both), then the TOML config file, then defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pbforecast::features::EmbeddingConfig;
use pbforecast::llm::{LlmConfig, LlmMode, PipelineOptions, SCRIPTED_MODEL};
use pbforecast::models::ModelKind;

use crate::error::{CliError, CliResult, ErrorKind};

pub const DEFAULT_CONFIG_FILE: &str = "pbforecast.toml";
pub const DEFAULT_SERVER_ADDR: &str = "127.0.0.1:8080";

/// Chat backend used in live and record modes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmProvider {
    /// Any OpenAI-compatible chat-completions endpoint.
    #[default]
    Openai,
    /// Deterministic offline backend for demos and fixtures.
    Scripted,
}

impl std::str::FromStr for LlmProvider {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "openai" => Ok(LlmProvider::Openai),
            "scripted" => Ok(LlmProvider::Scripted),
            other => Err(format!("unknown LLM provider {other:?} (expected openai or scripted)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSection {
    pub provider: LlmProvider,
    #[serde(flatten)]
    pub config: LlmConfig,
}

/// PCA dimension per model for one evaluation campaign.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimChoice {
    pub pvm: Option<usize>,
    pub knn: Option<usize>,
}

impl DimChoice {
    pub fn get(&self, kind: ModelKind) -> Option<usize> {
        match kind {
            ModelKind::Pvm => self.pvm,
            ModelKind::Knn => self.knn,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerSection {
    pub addr: Option<String>,
}

/// Contents of the TOML config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub models_dir: Option<PathBuf>,
    pub reports_dir: Option<PathBuf>,
    pub embedding: Option<EmbeddingConfig>,
    pub llm: Option<LlmSection>,
    pub pipeline: Option<PipelineOptions>,
    /// Evaluation campaign id → training campaign id.
    pub pairs: BTreeMap<String, String>,
    /// Evaluation campaign id → PCA dimensions.
    pub pca_dims: BTreeMap<String, DimChoice>,
    pub server: ServerSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(ErrorKind::Usage, format!("config file {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::new(ErrorKind::Usage, format!("config file {}: {e}", path.display())))
    }
}

/// Values given on the command line or through `PBF_*` variables.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub models_dir: Option<PathBuf>,
    pub reports_dir: Option<PathBuf>,
    pub embedding_provider: Option<String>,
    pub embedding_cache: Option<PathBuf>,
    pub llm_mode: Option<LlmMode>,
    pub llm_model: Option<String>,
    pub llm_provider: Option<LlmProvider>,
    pub transcripts_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub runs_dir: PathBuf,
    pub models_dir: PathBuf,
    pub reports_dir: PathBuf,
    pub embedding: EmbeddingConfig,
    pub llm_provider: LlmProvider,
    pub llm: LlmConfig,
    pub pipeline: PipelineOptions,
    pub pairs: BTreeMap<String, String>,
    pub pca_dims: BTreeMap<String, DimChoice>,
    pub server_addr: String,
}

/// PCA dimensions chosen by the sweep on the two released evaluation campaigns.
pub fn default_pca_dims() -> BTreeMap<String, DimChoice> {
    BTreeMap::from([
        ("toulouse-2024".to_string(), DimChoice { pvm: Some(10), knn: Some(2) }),
        ("wroclaw-2017".to_string(), DimChoice { pvm: Some(20), knn: Some(15) }),
    ])
}

impl Settings {
    /// Resolves settings. Without an explicit config path, `pbforecast.toml`
    /// in the working directory is used when present.
    pub fn resolve(o: Overrides) -> CliResult<Self> {
        let file = match &o.config {
            Some(path) => FileConfig::load(path)?,
            None if Path::new(DEFAULT_CONFIG_FILE).is_file() => FileConfig::load(Path::new(DEFAULT_CONFIG_FILE))?,
            None => FileConfig::default(),
        };
        Ok(Self::merge(o, file))
    }

    pub fn merge(o: Overrides, file: FileConfig) -> Self {
        let mut embedding = file.embedding.unwrap_or_default();
        if let Some(p) = o.embedding_provider {
            embedding.provider = p;
        }
        if o.embedding_cache.is_some() {
            embedding.cache_dir = o.embedding_cache;
        }

        let section = file.llm.unwrap_or_default();
        let llm_provider = o.llm_provider.unwrap_or(section.provider);
        let mut llm = section.config;
        if let Some(m) = o.llm_mode {
            llm.mode = m;
        }
        if let Some(m) = o.llm_model {
            llm.model = m;
        }
        if llm_provider == LlmProvider::Scripted {
            llm.model = SCRIPTED_MODEL.to_string();
        }
        llm.transcripts_dir = o
            .transcripts_dir
            .or(llm.transcripts_dir)
            .or_else(|| Some(PathBuf::from("fixtures/transcripts")));

        let mut pca_dims = default_pca_dims();
        pca_dims.extend(file.pca_dims);

        Settings {
            data_dir: o.data_dir.or(file.data_dir).unwrap_or_else(|| "data".into()),
            runs_dir: o.runs_dir.or(file.runs_dir).unwrap_or_else(|| "runs".into()),
            models_dir: o.models_dir.or(file.models_dir).unwrap_or_else(|| "models".into()),
            reports_dir: o.reports_dir.or(file.reports_dir).unwrap_or_else(|| "reports".into()),
            embedding,
            llm_provider,
            llm,
            pipeline: file.pipeline.unwrap_or_default(),
            pairs: file.pairs,
            pca_dims,
            server_addr: file.server.addr.unwrap_or_else(|| DEFAULT_SERVER_ADDR.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
data_dir = "/srv/pb/data"
runs_dir = "/srv/pb/runs"

[embedding]
provider = "openai"
model = "text-embedding-3-large"

[llm]
provider = "openai"
model = "gpt-4o"
mode = "record"
temperature = 0.0

[pairs]
"toulouse-2024" = "toulouse-2022"

[pca_dims."wroclaw-2017"]
pvm = 7

[server]
addr = "0.0.0.0:9000"
"#;

    #[test]
    fn file_values_apply_when_no_override() {
        let file: FileConfig = toml::from_str(SAMPLE).unwrap();
        let s = Settings::merge(Overrides::default(), file);
        assert_eq!(s.data_dir, PathBuf::from("/srv/pb/data"));
        assert_eq!(s.models_dir, PathBuf::from("models"));
        assert_eq!(s.embedding.provider, "openai");
        assert_eq!(s.llm.model, "gpt-4o");
        assert_eq!(s.llm.mode, LlmMode::Record);
        assert_eq!(s.llm.max_tokens, LlmConfig::default().max_tokens);
        assert_eq!(s.pairs["toulouse-2024"], "toulouse-2022");
        assert_eq!(s.pca_dims["wroclaw-2017"].pvm, Some(7));
        assert_eq!(s.pca_dims["toulouse-2024"].knn, Some(2));
        assert_eq!(s.server_addr, "0.0.0.0:9000");
    }

    #[test]
    fn overrides_beat_the_file() {
        let file: FileConfig = toml::from_str(SAMPLE).unwrap();
        let o = Overrides {
            data_dir: Some("elsewhere".into()),
            llm_mode: Some(LlmMode::Replay),
            llm_model: Some("other".into()),
            embedding_provider: Some("hashing".into()),
            ..Overrides::default()
        };
        let s = Settings::merge(o, file);
        assert_eq!(s.data_dir, PathBuf::from("elsewhere"));
        assert_eq!(s.llm.mode, LlmMode::Replay);
        assert_eq!(s.llm.model, "other");
        assert_eq!(s.embedding.provider, "hashing");
    }

    #[test]
    fn scripted_provider_pins_the_model_name() {
        let o = Overrides { llm_provider: Some(LlmProvider::Scripted), llm_model: Some("x".into()), ..Overrides::default() };
        let s = Settings::merge(o, FileConfig::default());
        assert_eq!(s.llm.model, SCRIPTED_MODEL);
        assert_eq!(s.llm.transcripts_dir, Some(PathBuf::from("fixtures/transcripts")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("dta_dir = \"x\"").is_err());
    }
}
