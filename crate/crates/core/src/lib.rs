//! Embeddings for hierarchical tool graphs.
//!
//! A tool is described by a layered DAG of capability nodes. Each node gets an
//! initial feature vector hashed from its description text; a recurrent
//! message-passing encoder then rolls child features up the hierarchy so that
//! every internal node's latent summarizes the subtree below it. Training fits
//! the encoder so the rolled-up latent of each parent reproduces that parent's
//! own description embedding, across a whole corpus of tools.
//!
//! Modules follow the pipeline order: [`toolgraph`] (parse/validate),
//! [`embedder`] (features), [`hgnn`] (encoder forward), [`train`] (gradients,
//! SGD, persistence), [`store`] (retrieval), [`synth`] (corpus generation).

pub mod embedder;
pub mod error;
pub mod hgnn;
pub mod math;
pub mod rng;
pub mod store;
pub mod synth;
pub mod toolgraph;
pub mod train;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
