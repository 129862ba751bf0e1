//! Rule-based evaluation, perturbation, and coarse-to-fine refinement of
//! content-aware graphic layouts.
//!
//! The crate scores layouts against six rule-based metrics, checks four
//! design principles and emits deterministic evaluation reports, curates
//! refinement training data by mixing model outputs with perturbed ground
//! truth, and repairs layouts through a pluggable refiner: a built-in
//! deterministic local search or an external chat-completion endpoint.

pub mod assets;
pub mod bench;
pub mod error;
pub mod estimate;
pub mod geometry;
pub mod ingest;
pub mod layout;
pub mod llm;
pub mod markup;
pub mod metrics;
pub mod perturb;
pub mod principles;
pub mod refine;
pub mod render;

pub use assets::BackgroundAssets;
pub use error::{Error, Result};
pub use layout::{Element, ElementCategory, Layout, Taxonomy};
pub use metrics::{CompositeWeights, MetricSummary, MetricVector};
