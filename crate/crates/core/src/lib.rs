//! Playroom: a synthetic testbed for studying how multimodal contrastive
//! learners benefit from the visual statistics of object play.
//!
//! The pipeline has three stages, each usable on its own:
//!
//! 1. [`playsim`] + [`render`]: procedurally generate ego-centric play
//!    sessions (an actor turning a held object in front of a cluttered
//!    floor) and rasterize them into small RGB frames.
//! 2. [`lang`]: attach caregiver naming utterances to frames under
//!    controllable sparsity / correctness statistics.
//! 3. [`learn`] + [`eval`]: train a joint temporal/multimodal contrastive
//!    model on the frames and probe what the frozen encoder has learned.
//!
//! [`exp`] ties the stages into reproducible experiment runs; the
//! `playroom` binary is a thin wrapper over it.
//!
//! Everything is deterministic given the experiment seed: all randomness
//! flows through counter-derived ChaCha streams (see [`rng`]).

pub mod eval;
pub mod exp;
pub mod lang;
pub mod learn;
pub mod playsim;
pub mod render;
pub mod rng;

use thiserror::Error;

/// Identifies an object category (a "kind of toy"). Categories own a shape
/// and color template that their instances perturb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CategoryId(pub u32);

/// Identifies a concrete object instance. Instance ids are dense:
/// `0 .. categories * instances_per_category`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstanceId(pub u32);

impl std::fmt::Display for CategoryId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for InstanceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl InstanceId {
    /// Category of this instance under the dense id layout.
    pub fn category(self, instances_per_category: usize) -> CategoryId {
        CategoryId(self.0 / instances_per_category as u32)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("template file line {line}: {msg}")]
    Template { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("instance {0} not identifiable as its category after {1} attempts")]
    Identifiability(u32, u32),

    #[error("zero-norm embedding at row {0}; cosine similarity undefined")]
    ZeroNorm(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("probe train split is missing class {0}")]
    MissingClass(u32),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
