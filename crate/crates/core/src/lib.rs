//! Text simplicity scoring and the statistics used to compare lay summaries,
//! AI-generated summaries and scientific abstracts.

pub mod corpus;
pub mod error;
pub mod genai;
pub mod lexicon;
pub mod lmm;
pub mod mem;
pub mod pipeline;
pub mod stats;
pub mod textmetrics;

pub use error::{Error, Result};
