//! Self-supervised ranking critic: pair construction, a small embedding-pair
//! scorer, and training with a squared-hinge margin loss.

pub mod embed;
pub mod model;
pub mod pairs;
pub mod synthetic;
pub mod train;

use thiserror::Error;

use crate::trajectory::{render_critic_text, RenderOptions, Trajectory, TrajectoryError};

pub use embed::{Embedder, EmbedderKind, EmbedderSpec, MockHashEmbedder, RemoteEmbedder};
pub use model::{
    embed_pairs, pair_features, pair_loss, pair_loss_grad, CriticModel, CriticTrainConfig,
    EmbeddedPair, Gradients,
};
pub use pairs::{
    build_pairs, load_external_pairs, read_pairs, subtree_trajectories, write_pairs, PairConfig,
    PairExample, PairKind,
};
pub use train::{train, TrainReport};

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("remote embedder unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("no trajectory with a different goal to draw distractors from")]
    NoDistractorSource,
    #[error("no training pairs")]
    EmptyBatch,
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("invalid model file: {0}")]
    BadModel(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scalar cost of a (goal text, trajectory text) pair; lower is better.
pub trait CostModel: Send + Sync {
    fn cost(&self, goal_text: &str, traj_text: &str) -> Result<f64, CriticError>;

    /// Cost of the first `k` steps of `t`.
    fn prefix_cost(
        &self,
        t: &Trajectory,
        k: usize,
        opts: RenderOptions,
    ) -> Result<f64, CriticError> {
        let (goal, traj) = render_critic_text(t, k, opts)?;
        self.cost(&goal, &traj)
    }
}

/// A trained model bound to its embedder.
pub struct Critic {
    pub model: CriticModel,
    pub embedder: Box<dyn Embedder>,
}

impl Critic {
    pub fn new(model: CriticModel, embedder: Box<dyn Embedder>) -> Result<Self, CriticError> {
        if embedder.dim() != model.dim {
            return Err(CriticError::DimMismatch {
                expected: model.dim,
                got: embedder.dim(),
            });
        }
        Ok(Self { model, embedder })
    }

    /// Builds the embedder recorded in the model file.
    pub fn from_model(model: CriticModel) -> Result<Self, CriticError> {
        let embedder = model.embedder.build()?;
        Self::new(model, embedder)
    }
}

impl CostModel for Critic {
    fn cost(&self, goal_text: &str, traj_text: &str) -> Result<f64, CriticError> {
        self.model
            .score(self.embedder.as_ref(), goal_text, traj_text)
    }
}

/// Wraps a closure as a [`CostModel`].
pub struct FnCost<F>(pub F);

impl<F> CostModel for FnCost<F>
where
    F: Fn(&str, &str) -> f64 + Send + Sync,
{
    fn cost(&self, goal_text: &str, traj_text: &str) -> Result<f64, CriticError> {
        Ok((self.0)(goal_text, traj_text))
    }
}
