use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "worldplan",
    version,
    about = "Caption trees, plan extraction, critic training, planning and evaluation"
)]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Build a caption tree from a feature stream.
    Segment(SegmentArgs),
    /// Render a caption tree as a markdown outline.
    TreeRender(TreeRenderArgs),
    /// List the extraction windows sampled from a tree.
    TreeWindows(TreeWindowsArgs),
    /// Extract plans from tree windows with iterative self-refinement.
    Refine(RefineArgs),
    /// Build critic training pairs from trajectories.
    PairsBuild(PairsBuildArgs),
    /// Train a critic on preference pairs.
    CriticTrain(CriticTrainArgs),
    /// Score a trajectory (or each of its prefixes) with a critic.
    CriticScore(CriticScoreArgs),
    #[command(hide = true)]
    #[serde(skip)]
    Critic {
        #[command(subcommand)]
        action: CriticAction,
    },
    /// Greedy single-rollout plan.
    PlanSys1(PlanSys1Args),
    /// Search several candidate plans and keep the cheapest.
    PlanSys2(PlanSys2Args),
    /// Goal-achievement detection accuracy.
    EvalGad(EvalGadArgs),
    /// SR / mAcc / mIoU of procedural plan predictions.
    EvalVpa(EvalVpaArgs),
    /// Four-way candidate selection accuracy.
    EvalWp(EvalWpArgs),
    /// Normalized cost curves of a goal-detection report as CSV.
    CurvesExport(CurvesExportArgs),
    /// Serve the pairwise preference arena over HTTP.
    ArenaServe(ArenaServeArgs),
    /// Leaderboard and inter-annotator agreement from a battle log.
    ArenaReport(ArenaReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum CriticAction {
    Train(CriticTrainArgs),
    Score(CriticScoreArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SegmentArgs {
    /// Feature stream (JSON Lines).
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Frames pooled into each leaf.
    #[arg(long, default_value_t = 1)]
    pub leaf_frames: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TreeRenderArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Subtree root (defaults to the tree root).
    #[arg(long)]
    pub node: Option<usize>,
    /// Hide segments shorter than this many seconds.
    #[arg(long, default_value_t = 5.0)]
    pub min_duration: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TreeWindowsArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = worldplan_core::segtree::DEFAULT_WINDOWS)]
    pub count: usize,
    #[arg(long, default_value_t = 5.0)]
    pub min_duration: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct RefineArgs {
    /// Captioned tree JSON.
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = worldplan_core::segtree::DEFAULT_WINDOWS)]
    pub windows: usize,
    #[arg(long, default_value_t = 5.0)]
    pub min_duration: f64,
    #[arg(long, default_value_t = worldplan_core::refine::DEFAULT_ITERATIONS)]
    pub iterations: usize,
    /// Speech transcript or other text appended to every prompt.
    #[arg(long)]
    pub extra_info: Option<PathBuf>,
    /// JSON object of prompt hash -> response used instead of a live model.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    /// Maximum concurrent model requests.
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["trajectories", "synthetic"])))]
pub struct PairsBuildArgs {
    /// Trajectory markup files or directories of `.md` files.
    #[arg(long, num_args = 1..)]
    pub trajectories: Vec<PathBuf>,
    /// Generate this many synthetic trajectories instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Extra pairs (JSON Lines with goal/pos/neg) appended verbatim.
    #[arg(long)]
    pub external: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderChoice {
    Mock,
    Remote,
}

#[derive(Debug, Args, Serialize)]
pub struct CriticTrainArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = worldplan_core::critic::model::DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    #[arg(long, value_enum, default_value_t = EmbedderChoice::Mock)]
    pub embedder: EmbedderChoice,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderFlags {
    /// Leave the interpretation out of the goal text.
    #[arg(long)]
    pub no_interpretation: bool,
    /// Leave world states out of the trajectory text.
    #[arg(long)]
    pub no_states: bool,
}

impl RenderFlags {
    pub fn options(&self) -> worldplan_core::RenderOptions {
        worldplan_core::RenderOptions {
            include_interpretation: !self.no_interpretation,
            include_states: !self.no_states,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CriticScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Trajectory markup file.
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Score every prefix instead of only the full trajectory.
    #[arg(long)]
    pub prefixes: bool,
    #[command(flatten)]
    pub render: RenderFlags,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("world_source").required(true).args(["world", "llm"])))]
pub struct WorldArgs {
    /// Toy world JSON (fluents, initial, goal, actions).
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Use the chat model configured by WM_LLM_* as the world model.
    #[arg(long)]
    pub llm: bool,
    /// Goal text (required with --llm).
    #[arg(long)]
    pub goal: Option<String>,
    /// Context description file.
    #[arg(long)]
    pub context: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PlanSys1Args {
    #[command(flatten)]
    pub world: WorldArgs,
    /// Output trajectory markup file.
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum plan length.
    #[arg(long, default_value_t = 8)]
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeChoice {
    Full,
    Beam,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("scorer").required(true).args(["critic", "oracle"])))]
pub struct PlanSys2Args {
    #[command(flatten)]
    pub world: WorldArgs,
    /// Output directory for ranked candidates.
    #[arg(long)]
    pub out: PathBuf,
    /// Critic model JSON used to score plans.
    #[arg(long)]
    pub critic: Option<PathBuf>,
    /// Score with the toy world's exact cost instead of a critic.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, value_enum, default_value_t = ModeChoice::Full)]
    pub mode: ModeChoice,
    #[arg(long, default_value_t = 20)]
    pub candidates: usize,
    #[arg(long, default_value_t = 4)]
    pub beam: usize,
    /// Actions requested per expansion.
    #[arg(long, default_value_t = 4)]
    pub proposals: usize,
    #[arg(long, default_value_t = 8)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pick the most expensive plan (ablation baseline).
    #[arg(long)]
    pub maximize: bool,
    /// Penalize plans whose actions mention this word (repeatable).
    #[arg(long = "forbid")]
    pub forbidden: Vec<String>,
    #[arg(long, default_value_t = 10.0)]
    pub penalty_weight: f64,
    /// Penalize plans that repeat an action.
    #[arg(long)]
    pub no_repeats: bool,
    #[command(flatten)]
    pub render: RenderFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalGadArgs {
    /// Cases (JSON Lines: goal, interpretation, gold, distractors).
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Report JSON (per-case cost curves included).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub render: RenderFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalVpaArgs {
    /// Predictions (JSON Lines: pred, gold).
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Expected plan horizon; rows of other lengths are rejected.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalWpArgs {
    /// Items (JSON Lines: goal, candidates, correct).
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CurvesExportArgs {
    /// Report written by eval-gad.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ArenaArgs {
    /// Plan inventory directory: <dataset>/<goal_id>/<model>.md
    #[arg(long, env = worldplan_core::arena::ENV_ARENA_DATA)]
    pub inventory: PathBuf,
    /// Append-only battle log.
    #[arg(long, env = worldplan_core::arena::ENV_ARENA_LOG)]
    pub log: PathBuf,
    #[arg(long, env = worldplan_core::arena::ENV_ARENA_SEED, default_value_t = 0)]
    pub seed: u64,
    /// Cap on judgments per (setup, goal) item.
    #[arg(long)]
    pub annotations_per_item: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ArenaServeArgs {
    #[command(flatten)]
    pub arena: ArenaArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

#[derive(Debug, Args, Serialize)]
pub struct ArenaReportArgs {
    #[command(flatten)]
    pub arena: ArenaArgs,
    /// Leaderboard and agreement JSON.
    #[arg(long)]
    pub out: PathBuf,
}
