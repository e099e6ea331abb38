//! Two-stream video anomaly detection through image translation.
//!
//! A per-scene normality model is learned by translating frames to
//! (a) semantic segmentation maps and (b) masked optical-flow magnitude
//! maps; test frames are scored by translation error with morphological
//! and temporal post-processing.
//!
//! Pipeline stages (see the `cli` crate for the command surface):
//! corpus ingestion ([`data_model`]) -> target generation ([`targets`])
//! -> translator training ([`translator`]) -> anomaly scoring
//! ([`scoring`]) -> frame-level ROC/AUC ([`eval`]). [`synth`] generates
//! deterministic synthetic corpora with analytic oracles for end-to-end
//! verification at desk scale.

pub mod data_model;
pub mod error;
pub mod eval;
pub mod targets;
pub mod scoring;

pub use data_model::{Clip, Corpus, Frame, Palette, TargetPair};
pub use error::{Error, Result};
pub use scoring::{AnomalyMap, Branch, ScoreSeries, Stage};
