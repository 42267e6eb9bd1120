//! Speaker-invariant, tone-aware representation learning on a synthetic
//! tonal-word corpus: staged contrastive training, CTC fine-tuning with
//! knowledge distillation, and the full evaluation battery.

pub mod config;
pub mod corpus;
pub mod ctc;
pub mod distill;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod losses;
pub mod math;
pub mod pipeline;
pub mod seeding;
pub mod trainer;

pub use error::{Result, SitaError};
