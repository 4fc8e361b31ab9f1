//! Planning with language world models: caption-tree segmentation, plan
//! extraction, a ranking critic, cost-driven plan search, evaluation
//! protocols and a preference arena.

// `!(a < b)` is used where NaN must fail the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arena;
pub mod critic;
pub mod eval;
pub mod planner;
pub mod refine;
pub mod segtree;
pub mod trajectory;

pub use arena::{elo_update, fleiss_kappa, raw_agreement, ArenaConfig, ArenaError, ArenaState};
pub use critic::{
    build_pairs, pair_loss, train, CostModel, Critic, CriticError, CriticModel, CriticTrainConfig,
    Embedder, EmbedderSpec, MockHashEmbedder, PairExample, PairKind,
};
pub use eval::{chance_accuracy, eval_gad, eval_wp, vpa_metrics, EvalError, GadCase, GadReport};
pub use planner::{
    beam_search, system1_rollout, system2_plan, Objective, PlanError, PlanScorer, RankedPlans,
    SearchConfig, SearchMode, ToyWorld, WorldModel,
};
pub use refine::{self_refine, PlanExtraction, RefineError, RefineRequest};
pub use segtree::{build_tree, dfs_render, CaptionTree, FeatureStream, SegError};
pub use trajectory::{
    append_steps, parse_trajectory, render_critic_text, render_trajectory, shuffle_steps,
    RenderOptions, Step, Trajectory, TrajectoryError,
};
