use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pbforecast::data::ModelId;
use pbforecast::llm::{LlmMode, Reasoning};
use pbforecast::models::ModelKind;

use crate::config::{LlmProvider, Overrides};
use crate::forecast::parse_model;

#[derive(Debug, Parser)]
#[command(name = "pbforecast", version, about = "Forecast approval votes in participatory budgeting campaigns")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML config file (default: ./pbforecast.toml when present).
    #[arg(long, global = true, env = "PBF_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory of campaign folders (projects.csv + meta.json).
    #[arg(long, global = true, env = "PBF_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Prediction run store.
    #[arg(long, global = true, env = "PBF_RUNS_DIR")]
    pub runs_dir: Option<PathBuf>,
    /// Fitted classical models.
    #[arg(long, global = true, env = "PBF_MODELS_DIR")]
    pub models_dir: Option<PathBuf>,
    /// Evaluation reports and plot data.
    #[arg(long, global = true, env = "PBF_REPORTS_DIR")]
    pub reports_dir: Option<PathBuf>,
    /// Embedding provider: hashing or openai.
    #[arg(long, global = true, env = "PBF_EMBEDDING_PROVIDER")]
    pub embedding_provider: Option<String>,
    /// Content-addressed embedding cache directory.
    #[arg(long, global = true, env = "PBF_EMBEDDING_CACHE")]
    pub embedding_cache: Option<PathBuf>,
    /// LLM mode: live, record or replay.
    #[arg(long, visible_alias = "mode", global = true, env = "PBF_LLM_MODE")]
    pub llm_mode: Option<LlmMode>,
    /// Chat model name.
    #[arg(long, global = true, env = "PBF_LLM_MODEL")]
    pub llm_model: Option<String>,
    /// Chat backend for live and record modes: openai or scripted.
    #[arg(long, global = true, env = "PBF_LLM_PROVIDER")]
    pub llm_provider: Option<LlmProvider>,
    /// LLM transcript fixtures.
    #[arg(long, global = true, env = "PBF_TRANSCRIPTS_DIR")]
    pub transcripts_dir: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            config: self.config.clone(),
            data_dir: self.data_dir.clone(),
            runs_dir: self.runs_dir.clone(),
            models_dir: self.models_dir.clone(),
            reports_dir: self.reports_dir.clone(),
            embedding_provider: self.embedding_provider.clone(),
            embedding_cache: self.embedding_cache.clone(),
            llm_mode: self.llm_mode,
            llm_model: self.llm_model.clone(),
            llm_provider: self.llm_provider,
            transcripts_dir: self.transcripts_dir.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a campaign folder or Pabulib file against every data invariant.
    Validate(ValidateArgs),
    /// Embed project descriptions, filling the embedding cache.
    Embed(EmbedArgs),
    /// Sweep PCA dimensions and report Kendall tau on the evaluation campaign.
    SelectDim(SelectDimArgs),
    /// Fit a PVM or KNN model on a training campaign.
    Fit(FitArgs),
    /// Predict every project of a campaign and store the run.
    Predict(PredictArgs),
    /// Score a stored run against ground truth.
    Evaluate(EvaluateArgs),
    /// Run contamination probes against the LLM.
    Probe(ProbeArgs),
    /// Summary tables and plot data from stored evaluation reports.
    Report(ReportArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Campaign folder, Pabulib `.pb` file, or a campaign id under the data directory.
    pub path: String,
    /// Language of the project text (needed for `.pb` files).
    #[arg(long)]
    pub language: Option<String>,
    /// Write the validated campaign as projects.csv + meta.json here.
    #[arg(long)]
    pub write_to: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Campaign ids; all campaigns when omitted.
    pub campaigns: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Pvm,
    Knn,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Pvm => ModelKind::Pvm,
            KindArg::Knn => ModelKind::Knn,
        }
    }
}

#[derive(Debug, Args)]
pub struct SelectDimArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub eval: String,
    /// Training campaign (default: previous campaign of the same city).
    #[arg(long)]
    pub train: Option<String>,
    /// Dimensions to try, comma separated (default: 1 up to the training size).
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub train: Option<String>,
    /// Evaluation campaign, used for pairing and the configured PCA dimension.
    #[arg(long)]
    pub eval: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// KNN neighbour count.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReasoningArg {
    Cot,
    None,
}

impl From<ReasoningArg> for Reasoning {
    fn from(r: ReasoningArg) -> Self {
        match r {
            ReasoningArg::Cot => Reasoning::ChainOfThought,
            ReasoningArg::None => Reasoning::None,
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// PVM, KNN, NC, RAG, RAG_SB, IC or NULL.
    #[arg(long, value_parser = parse_model)]
    pub model: ModelId,
    /// Campaign to predict.
    #[arg(long)]
    pub eval: String,
    /// Training or context campaign.
    #[arg(long)]
    pub train: Option<String>,
    /// PCA dimension; refits when it differs from the stored model.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed for the null predictor.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "cot")]
    pub reasoning: ReasoningArg,
    /// Prompt language (default: the campaign's).
    #[arg(long)]
    pub language: Option<String>,
    /// Print the run instead of storing it.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub campaign: String,
    /// Stored run id.
    #[arg(long, conflicts_with = "model")]
    pub run: Option<String>,
    /// Evaluate the latest run of this model. NULL averages seeded shuffles.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelId>,
    /// Evaluate a run with more than 10% gaps.
    #[arg(long)]
    pub force: bool,
    /// Greedy allocation stops at the first project that does not fit.
    #[arg(long)]
    pub stop_at_first_overflow: bool,
    #[arg(long, default_value_t = pbforecast::metrics::DEFAULT_SHUFFLES)]
    pub shuffles: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeArg {
    TitleOnly,
    Prefix,
    Attributes,
    All,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    pub campaign: String,
    #[arg(long, value_enum, default_value = "all")]
    pub kind: ProbeArg,
    /// Probe only the first N projects.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Campaign ids; all campaigns with reports when omitted.
    pub campaigns: Vec<String>,
    /// Summarize a single stored run instead.
    #[arg(long)]
    pub run: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
}
