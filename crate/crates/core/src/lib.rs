//! Narrative point-of-view classification and protagonist portrayal scoring
//! for paired human / machine story corpora.
//!
//! The pipeline runs in stages, each backed by one module:
//!
//! - [`corpus`]: prompt/story JSONL loading, tokenization, descriptive statistics
//! - [`pov`]: entity clusters, protagonist selection, point-of-view labels
//! - [`attributes`]: protagonist attribute tokens from dependency parses and
//!   commonsense-inference phrases
//! - [`lexicons`]: valence/arousal/dominance scores and category term lists
//! - [`embeddings`]: word vector storage and cosine similarity
//! - [`scoring`]: the `lex_avg`, `emb_sim` and `axis_emb` scorers, z-scoring
//! - [`evaluation`]: Spearman evaluation of scorers against held-out lexicon terms
//! - [`analysis`]: group aggregates, significance tests, prompt-level differences
//!
//! Numeric code is generic over [`Scalar`] so that `f32` vector stores and
//! `f64` statistics share one implementation. The `*F32` / `*F64` aliases
//! below name the common instantiations.

pub mod analysis;
pub mod attributes;
pub mod corpus;
pub mod embeddings;
mod error;
pub mod evaluation;
pub mod lexicons;
pub mod pov;
mod scalar;
pub mod scoring;
pub mod seed;

pub use error::{Diagnostic, Error, Result};
pub use scalar::Scalar;

pub type EmbeddingStoreF32 = embeddings::EmbeddingStore<f32>;
pub type EmbeddingStoreF64 = embeddings::EmbeddingStore<f64>;
pub type VadLexiconF32 = lexicons::VadLexicon<f32>;
pub type VadLexiconF64 = lexicons::VadLexicon<f64>;
pub type ScoredLexiconF32 = lexicons::ScoredLexicon<f32>;
pub type ScoredLexiconF64 = lexicons::ScoredLexicon<f64>;
pub type DimensionScorerF32 = scoring::DimensionScorer<f32>;
pub type DimensionScorerF64 = scoring::DimensionScorer<f64>;
pub type ScoreRowF32 = scoring::ScoreRow<f32>;
pub type ScoreRowF64 = scoring::ScoreRow<f64>;
pub type GroupStatsF64 = analysis::GroupStats<f64>;
pub type PromptDiffF64 = analysis::PromptDiff<f64>;
