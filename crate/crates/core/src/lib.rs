//! Domain-unified prompt representations for source-free domain
//! generalization.
//!
//! A domain bank is expanded into one prompt per (domain, class) pair; the
//! resulting text embeddings form an M x C grid ([`PromptTensor`]). That grid
//! is collapsed into one vector per class either by mean pooling or through a
//! cosine autoencoder ([`cae`]), and images are classified by cosine
//! similarity against the result ([`classify`]). Everything operates on
//! precomputed embeddings stored in the DUPR container ([`io`]).

pub mod aggregate;
pub mod bank;
pub mod cae;
pub mod classify;
pub mod error;
pub mod io;
pub mod synth;

pub use aggregate::{cae_unify, mean_pool};
pub use bank::{DomainBank, Prompt};
pub use cae::{train, CaeConfig, CaeModel, Losses, ReconLoss, TrainReport};
pub use classify::{evaluate, predict, EvalResult};
pub use error::{Error, Result};
pub use io::{ImageSet, Layout, PromptTensor, UnifiedReps};
pub use synth::{generate, intra_class_tightness, SynthSpec, Synthetic};
