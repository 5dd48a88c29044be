//! Relation classification for entity pairs in scientific abstracts with a
//! piecewise convolutional encoder.
//!
//! The pipeline is split into modules that mirror the data flow:
//!
//! * [`corpus`]: parse entity-annotated documents and relation lists.
//! * [`preprocess`]: clean, tokenize and turn relations into fixed-length
//!   instances with entity head positions and clipped relative distances.
//! * [`embeddings`]: vocabulary, pretrained word vectors, position and
//!   direction tables.
//! * [`diffcore`]: the small dense tensor engine with hand-written backward
//!   passes and the Adam update.
//! * [`pcnn`]: the model (forward, loss, backward, prediction).
//! * [`trainer`]: training loop, corpus mixing and grid search.
//! * [`eval`]: macro-F1 scoring and prediction files.

pub mod corpus;
pub mod diffcore;
pub mod embeddings;
mod error;
pub mod eval;
pub mod pcnn;
pub mod preprocess;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, ErrorCategory, Result};
