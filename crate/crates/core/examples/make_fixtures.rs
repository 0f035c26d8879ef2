//! Regenerates the committed offline fixtures under `fixtures/`:
//! a synthetic train/eval campaign pair and scripted-backend transcripts for
//! every prompt variant on the evaluation campaign.
//!
//! ```text
//! cargo run -p pbforecast --example make_fixtures [-- <fixtures-dir>]
//! ```

use std::path::PathBuf;

use pbforecast::data::write_campaign;
use pbforecast::features::{embed_descriptions, HashingEmbedder};
use pbforecast::llm::{
    run_campaign_prediction, LlmClient, LlmConfig, LlmMode, PipelineOptions, PredictionInputs, PromptKind,
    PromptVariant, ScriptedBackend, SCRIPTED_MODEL,
};
use pbforecast::synthetic::{synthetic_pair, SyntheticSpec};

/// Seed of the committed pair.
pub const FIXTURE_SEED: u64 = 2017;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    let (train, eval) = synthetic_pair(&SyntheticSpec::default(), 52, FIXTURE_SEED);
    for c in [&train, &eval] {
        write_campaign(c, &root.join("synthetic").join(c.id()))?;
    }

    let embedder = HashingEmbedder::default();
    let target_embeddings = embed_descriptions(&eval, &embedder, 1)?;
    let past_embeddings = embed_descriptions(&train, &embedder, 1)?;
    let config = LlmConfig {
        model: SCRIPTED_MODEL.into(),
        mode: LlmMode::Record,
        transcripts_dir: Some(root.join("transcripts")),
        ..LlmConfig::default()
    };
    let client = LlmClient::new(config, Some(Box::new(ScriptedBackend)))?;
    let inputs = PredictionInputs {
        target: &eval,
        past: Some(&train),
        target_embeddings: Some(&target_embeddings),
        past_embeddings: Some(&past_embeddings),
    };
    for kind in PromptKind::ALL {
        let run = run_campaign_prediction(&client, &PromptVariant::for_campaign(kind, &eval), inputs, &PipelineOptions::default())?;
        println!("{kind}: {} records, {} gaps", run.records.len(), run.gap_count());
    }
    Ok(())
}
