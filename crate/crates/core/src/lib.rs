//! Unsupervised grounding of query words in images.
//!
//! The pipeline links vocabulary words to visual concepts purely from
//! co-occurrence: for each (word, concept) pair it tests whether the concept
//! is active more often than chance in images whose query mentions the word,
//! and stores the one-sided tail probability E(s, c). At inference time the
//! query's words vote for the active concept with the lowest E value, and
//! that concept's detection box (found by exact branch-and-bound subwindow
//! search over its score map) is returned; when no pair is significant the
//! whole image is the answer.
//!
//! Modules:
//! - [`scoremap`]: per-concept score grids with integral images.
//! - [`ess`]: exact branch-and-bound maximum-sum subwindow search.
//! - [`vocab`]: top-K vocabulary and binary token activations.
//! - [`linker`]: co-occurrence counts and the relevance matrix.
//! - [`inference`]: concept selection and end-to-end grounding.
//! - [`eval`]: IoU accuracy, per-category breakdowns, baselines.
//! - [`synth`]: seeded synthetic corpora with known planted links.
//! - [`corpus`]: manifests, models, and record files on disk.

pub mod bbox;
pub mod corpus;
pub mod error;
pub mod ess;
pub mod eval;
pub mod inference;
pub mod linker;
pub mod scoremap;
pub mod special;
pub mod synth;
pub mod vocab;

pub use bbox::BoundingBox;
pub use error::{Error, Result};
pub use ess::{brute_force_search, detect_activation, ess_search, ConceptActivation};
pub use inference::{ground, GroundingInput, GroundingParams, GroundingResult};
pub use linker::{CooccurrenceStats, RelevanceMatrix};
pub use scoremap::ScoreMap;
pub use vocab::{Vocabulary, UNKNOWN_TOKEN};
