//! Diagnostics for logo hallucination in vision-language models.
//!
//! The crate covers the whole evaluation loop: corpus curation with
//! deterministic color/shape buckets ([`corpus`]), the nine seeded image
//! perturbations ([`perturb`]), querying models and judging their replies
//! ([`querent`]), the dual metrics plus calibration ([`metrics`]), the
//! embedding-level probe and ablation toolkit ([`probe`]), a planted-subspace
//! simulator that makes the probe verifiable without a real model
//! ([`synth`]), and the stage runner behind the CLI ([`harness`]).

pub mod corpus;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod perturb;
pub mod probe;
pub mod querent;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use image::ImageBuffer;
