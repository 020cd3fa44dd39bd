//! Compact latent space clustering (CLSC) for classification under noisy
//! candidate-label supervision.
//!
//! Samples arrive with a *candidate set* of admissible types instead of a
//! single trusted label; a sample is clean when its candidate set pins down
//! exactly one terminal type. The training loop embeds each mini-batch,
//! builds a pairwise similarity graph over the embeddings, distributes label
//! mass over each sample's candidates by graph propagation, and then pulls
//! same-label samples together with a compact-clustering loss over
//! within-class Markov chains. Supervised cross-entropy is applied to the
//! clean subset only, so noisy samples contribute solely through the
//! clustering term.
//!
//! The crate is organised as a pipeline:
//!
//! * [`hierarchy`] / [`batch`]: type inventories, samples, and batches
//! * [`encoder`]: attention-pooled mention/context encoder with a manual
//!   reverse-mode backward pass
//! * [`graph`]: similarity graph and candidate-masked label propagation
//! * [`clsc`]: target/agreement matrices, masked Markov powers, and the
//!   clustering loss with its gradient
//! * [`classifier`], [`train`], [`adam`]: linear softmax head, training
//!   loop, optimiser
//! * [`metrics`], [`dataset`], [`synth`], [`experiment`]: evaluation,
//!   file formats, synthetic data, and experiment harnesses

pub mod adam;
pub mod batch;
pub mod classifier;
pub mod clsc;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod hierarchy;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod train;

mod seeds;

pub use batch::{build_batch, Batch, MentionSample};
pub use error::{Error, Result};
pub use hierarchy::TypeHierarchy;
