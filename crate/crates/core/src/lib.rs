//! Forecasting public support for participatory-budgeting proposals.
//!
//! The crate covers campaign data, project features, classical baselines,
//! LLM prompting with record/replay, evaluation metrics and what-if queries.

pub mod data;
pub mod features;
pub mod llm;
pub mod metrics;
pub mod models;
pub mod synthetic;
pub mod text;
pub mod whatif;
