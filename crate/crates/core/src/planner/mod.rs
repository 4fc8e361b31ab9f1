//! System-1 greedy rollouts and system-2 cost-driven search over a pluggable
//! world model.

pub mod llm;
pub mod toy;

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::{CostModel, CriticError};
use crate::trajectory::{render_trajectory, RenderOptions, Step, Trajectory};

pub use llm::LlmWorldModel;
pub use toy::{ToyAction, ToyWorld};

/// Random branching attempts before falling back to enumeration.
const RANDOM_ATTEMPTS: usize = 32;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("world model failed: {0}")]
    WorldModelFailure(String),
    #[error("no candidate plans")]
    NoCandidates,
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("action `{action}` needs `{fluent}`")]
    PreconditionUnmet { action: String, fluent: String },
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("invalid world: {0}")]
    BadWorld(String),
    #[error("scoring failed: {0}")]
    Scoring(#[from] CriticError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub state: String,
    pub achieved: bool,
}

pub trait WorldModel: Send + Sync {
    /// Up to `k` candidate next actions, best first.
    fn propose(
        &self,
        goal: &str,
        context: &str,
        history: &[Step],
        k: usize,
    ) -> Result<Vec<String>, PlanError>;

    /// State after taking `action` following `history`.
    fn predict(
        &self,
        goal: &str,
        context: &str,
        history: &[Step],
        action: &str,
    ) -> Result<Prediction, PlanError>;
}

/// Cost of a (possibly partial) plan, before penalties.
pub trait PlanScorer: Send + Sync {
    fn score(&self, plan: &Trajectory) -> Result<f64, PlanError>;
}

/// Scores the rendered plan with a text critic.
pub struct CriticScorer<'a> {
    pub critic: &'a dyn CostModel,
    pub render: RenderOptions,
}

impl PlanScorer for CriticScorer<'_> {
    fn score(&self, plan: &Trajectory) -> Result<f64, PlanError> {
        Ok(self
            .critic
            .prefix_cost(plan, plan.steps.len(), self.render)?)
    }
}

pub struct FnScorer<F>(pub F);

impl<F> PlanScorer for FnScorer<F>
where
    F: Fn(&Trajectory) -> f64 + Send + Sync,
{
    fn score(&self, plan: &Trajectory) -> Result<f64, PlanError> {
        Ok((self.0)(plan))
    }
}

/// Exact cost for a [`ToyWorld`]: unmet goal fluents plus 0.01 per step.
pub struct ToyOracle<'a>(pub &'a ToyWorld);

impl PlanScorer for ToyOracle<'_> {
    fn score(&self, plan: &Trajectory) -> Result<f64, PlanError> {
        self.0.oracle_cost(plan)
    }
}

/// Adds `weight` to a plan's cost whenever `predicate` holds.
#[derive(Clone)]
pub struct Penalty {
    pub name: String,
    pub weight: f64,
    pub predicate: Arc<dyn Fn(&Trajectory) -> bool + Send + Sync>,
}

impl std::fmt::Debug for Penalty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Penalty")
            .field("name", &self.name)
            .field("weight", &self.weight)
            .finish_non_exhaustive()
    }
}

impl Penalty {
    pub fn new<F>(name: impl Into<String>, weight: f64, predicate: F) -> Self
    where
        F: Fn(&Trajectory) -> bool + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            weight,
            predicate: Arc::new(predicate),
        }
    }

    /// Fires when any action text contains `word` (case-insensitive).
    pub fn forbidden_word(word: impl Into<String>, weight: f64) -> Self {
        let word = word.into().to_lowercase();
        Self::new(format!("forbidden:{word}"), weight, move |t| {
            t.steps
                .iter()
                .any(|s| s.action.to_lowercase().contains(&word))
        })
    }

    /// Fires when the same action appears twice.
    pub fn repeated_action(weight: f64) -> Self {
        Self::new("repeated-action", weight, |t| {
            let mut seen = HashSet::new();
            t.steps.iter().any(|s| !seen.insert(s.action.as_str()))
        })
    }

    /// Fires when the plan has more than `max_steps` steps.
    pub fn longer_than(max_steps: usize, weight: f64) -> Self {
        Self::new(format!("longer-than:{max_steps}"), weight, move |t| {
            t.steps.len() > max_steps
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    FullRollouts,
    BeamPartial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Minimize,
    /// Picks the most expensive plan; only useful as an ablation baseline.
    Maximize,
}

impl Objective {
    fn cmp(self, a: f64, b: f64) -> Ordering {
        match self {
            Objective::Minimize => a.total_cmp(&b),
            Objective::Maximize => b.total_cmp(&a),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub num_candidates: usize,
    /// Actions requested from the world model per expansion.
    pub proposals: usize,
    pub beam_width: usize,
    pub max_depth: usize,
    pub mode: SearchMode,
    pub objective: Objective,
    pub penalties: Vec<Penalty>,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            num_candidates: 20,
            proposals: 4,
            beam_width: 4,
            max_depth: 8,
            mode: SearchMode::FullRollouts,
            objective: Objective::Minimize,
            penalties: Vec::new(),
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let positive = [
            ("num_candidates", self.num_candidates),
            ("proposals", self.proposals),
            ("beam_width", self.beam_width),
            ("max_depth", self.max_depth),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(PlanError::InvalidConfig(format!(
                "{name} must be at least 1"
            )));
        }
        if let Some(p) = self.penalties.iter().find(|p| !p.weight.is_finite()) {
            return Err(PlanError::InvalidConfig(format!(
                "penalty `{}` has non-finite weight",
                p.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCandidate {
    pub trajectory: Trajectory,
    pub critic_cost: f64,
    pub penalty: f64,
    /// `critic_cost + penalty`.
    pub cost: f64,
    /// Generation order.
    pub index: usize,
}

/// Candidates sorted best-first by the objective (ties keep generation
/// order); `chosen` indexes into `candidates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPlans {
    pub candidates: Vec<PlanCandidate>,
    pub chosen: usize,
}

impl RankedPlans {
    fn rank(mut candidates: Vec<PlanCandidate>, objective: Objective) -> Result<Self, PlanError> {
        if candidates.is_empty() {
            return Err(PlanError::NoCandidates);
        }
        candidates.sort_by(|a, b| objective.cmp(a.cost, b.cost).then(a.index.cmp(&b.index)));
        Ok(Self {
            candidates,
            chosen: 0,
        })
    }

    pub fn best(&self) -> &PlanCandidate {
        &self.candidates[self.chosen]
    }

    /// Writes `plan_NN.md` per candidate plus `ranking.json`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), PlanError> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.candidates.len());
        for (rank, c) in self.candidates.iter().enumerate() {
            let name = format!("plan_{rank:02}.md");
            std::fs::write(dir.join(&name), render_trajectory(&c.trajectory))?;
            entries.push(serde_json::json!({
                "cost": c.cost,
                "critic_cost": c.critic_cost,
                "penalty": c.penalty,
                "plan_ref": name,
            }));
        }
        let sidecar = serde_json::json!({ "candidates": entries, "chosen": self.chosen });
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        std::fs::write(dir.join("ranking.json"), text + "\n")?;
        Ok(())
    }
}

/// Memoizes world-model calls by action path.
struct Explorer<'a> {
    world: &'a dyn WorldModel,
    goal: &'a str,
    context: &'a str,
    k: usize,
    proposals: HashMap<Vec<String>, Vec<String>>,
    predictions: HashMap<Vec<String>, Prediction>,
}

#[derive(Debug, Clone, Default)]
struct Branch {
    actions: Vec<String>,
    steps: Vec<Step>,
    achieved: bool,
}

impl<'a> Explorer<'a> {
    fn new(world: &'a dyn WorldModel, goal: &'a str, context: &'a str, k: usize) -> Self {
        Self {
            world,
            goal,
            context,
            k,
            proposals: HashMap::new(),
            predictions: HashMap::new(),
        }
    }

    fn propose(&mut self, path: &Branch) -> Result<Vec<String>, PlanError> {
        if let Some(p) = self.proposals.get(&path.actions) {
            return Ok(p.clone());
        }
        let mut p = self
            .world
            .propose(self.goal, self.context, &path.steps, self.k)?;
        p.truncate(self.k);
        let mut seen = HashSet::new();
        p.retain(|a| seen.insert(a.clone()));
        self.proposals.insert(path.actions.clone(), p.clone());
        Ok(p)
    }

    fn step(&mut self, path: &Branch, action: &str) -> Result<Branch, PlanError> {
        let mut actions = path.actions.clone();
        actions.push(action.to_string());
        let pred = match self.predictions.get(&actions) {
            Some(p) => p.clone(),
            None => {
                let p = self
                    .world
                    .predict(self.goal, self.context, &path.steps, action)?;
                self.predictions.insert(actions.clone(), p.clone());
                p
            }
        };
        let mut steps = path.steps.clone();
        steps.push(Step::new(action, pred.state));
        Ok(Branch {
            actions,
            steps,
            achieved: pred.achieved,
        })
    }

    /// Extends `path` until achieved, `max_depth`, or no proposals, choosing
    /// each action with `choose` over the proposal list.
    fn rollout<F>(
        &mut self,
        mut path: Branch,
        max_depth: usize,
        mut choose: F,
    ) -> Result<Branch, PlanError>
    where
        F: FnMut(&[String]) -> usize,
    {
        while !path.achieved && path.steps.len() < max_depth {
            let options = self.propose(&path)?;
            if options.is_empty() {
                break;
            }
            let i = choose(&options);
            path = self.step(&path, &options[i])?;
        }
        Ok(path)
    }

    /// First terminal path in depth-first order not present in `seen`.
    fn first_unseen(
        &mut self,
        max_depth: usize,
        seen: &HashSet<Vec<String>>,
    ) -> Result<Option<Branch>, PlanError> {
        let mut stack = vec![Branch::default()];
        while let Some(path) = stack.pop() {
            let options = if path.achieved || path.steps.len() >= max_depth {
                Vec::new()
            } else {
                self.propose(&path)?
            };
            if options.is_empty() {
                if !path.steps.is_empty() && !seen.contains(&path.actions) {
                    return Ok(Some(path));
                }
                continue;
            }
            for a in options.iter().rev() {
                stack.push(self.step(&path, a)?);
            }
        }
        Ok(None)
    }
}

fn to_trajectory(goal: &str, path: &Branch) -> Trajectory {
    Trajectory::new(goal)
        .with_steps(path.steps.iter().cloned())
        .with_achieved(path.achieved)
}

fn evaluate(
    scorer: &dyn PlanScorer,
    penalties: &[Penalty],
    trajectory: Trajectory,
    index: usize,
) -> Result<PlanCandidate, PlanError> {
    let critic_cost = scorer.score(&trajectory)?;
    let penalty: f64 = penalties
        .iter()
        .filter(|p| (p.predicate)(&trajectory))
        .map(|p| p.weight)
        .sum();
    Ok(PlanCandidate {
        trajectory,
        critic_cost,
        penalty,
        cost: critic_cost + penalty,
        index,
    })
}

/// Greedy rollout taking the world model's top action at every step.
pub fn system1_rollout(
    world: &dyn WorldModel,
    goal: &str,
    context: &str,
    max_steps: usize,
) -> Result<Trajectory, PlanError> {
    if max_steps == 0 {
        return Err(PlanError::InvalidConfig(
            "max_steps must be at least 1".into(),
        ));
    }
    let mut ex = Explorer::new(world, goal, context, 1);
    let path = ex.rollout(Branch::default(), max_steps, |_| 0)?;
    Ok(to_trajectory(goal, &path))
}

/// Dispatches on `cfg.mode`.
pub fn system2_plan(
    world: &dyn WorldModel,
    scorer: &dyn PlanScorer,
    goal: &str,
    context: &str,
    cfg: &SearchConfig,
) -> Result<RankedPlans, PlanError> {
    match cfg.mode {
        SearchMode::FullRollouts => full_rollouts(world, scorer, goal, context, cfg),
        SearchMode::BeamPartial => beam_search(world, scorer, goal, context, cfg),
    }
}

/// Generates up to `num_candidates` distinct complete rollouts and ranks them.
///
/// Candidate `i` opens with the `i`-th proposed action and continues
/// greedily. Further candidates branch uniformly at random (seeded); when
/// random draws keep repeating known plans, the first unseen plan in
/// depth-first order is taken, so a wide enough budget covers the whole
/// rollout tree.
pub fn full_rollouts(
    world: &dyn WorldModel,
    scorer: &dyn PlanScorer,
    goal: &str,
    context: &str,
    cfg: &SearchConfig,
) -> Result<RankedPlans, PlanError> {
    cfg.validate()?;
    let mut ex = Explorer::new(world, goal, context, cfg.proposals);
    let root = Branch::default();
    let first = ex.propose(&root)?;
    if first.is_empty() {
        return Err(PlanError::NoCandidates);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut paths = Vec::new();

    for action in first.iter().take(cfg.num_candidates) {
        let start = ex.step(&root, action)?;
        let path = ex.rollout(start, cfg.max_depth, |_| 0)?;
        if seen.insert(path.actions.clone()) {
            paths.push(path);
        }
    }
    'fill: while paths.len() < cfg.num_candidates {
        for _ in 0..RANDOM_ATTEMPTS {
            let path = ex.rollout(root.clone(), cfg.max_depth, |opts| {
                let idx: Vec<usize> = (0..opts.len()).collect();
                *idx.choose(&mut rng).expect("nonempty options")
            })?;
            if seen.insert(path.actions.clone()) {
                paths.push(path);
                continue 'fill;
            }
        }
        match ex.first_unseen(cfg.max_depth, &seen)? {
            Some(path) => {
                seen.insert(path.actions.clone());
                paths.push(path);
            }
            None => break,
        }
    }

    let candidates = paths
        .iter()
        .enumerate()
        .map(|(i, p)| evaluate(scorer, &cfg.penalties, to_trajectory(goal, p), i))
        .collect::<Result<Vec<_>, _>>()?;
    RankedPlans::rank(candidates, cfg.objective)
}

/// Depth-synchronous beam over partial plans, each scored as a prefix.
///
/// Plans that reach the goal or run out of proposals are set aside as
/// complete; the beam surviving at `max_depth` joins them for the final
/// ranking.
pub fn beam_search(
    world: &dyn WorldModel,
    scorer: &dyn PlanScorer,
    goal: &str,
    context: &str,
    cfg: &SearchConfig,
) -> Result<RankedPlans, PlanError> {
    cfg.validate()?;
    let mut ex = Explorer::new(world, goal, context, cfg.proposals);
    let mut next_index = 0usize;
    let mut complete: Vec<PlanCandidate> = Vec::new();
    let mut beam: Vec<(Branch, Option<PlanCandidate>)> = vec![(Branch::default(), None)];

    for _depth in 0..cfg.max_depth {
        let mut pool: Vec<(Branch, PlanCandidate)> = Vec::new();
        for (path, scored) in beam.drain(..) {
            let options = ex.propose(&path)?;
            if options.is_empty() {
                complete.extend(scored);
                continue;
            }
            for a in &options {
                let child = ex.step(&path, a)?;
                let cand = evaluate(
                    scorer,
                    &cfg.penalties,
                    to_trajectory(goal, &child),
                    next_index,
                )?;
                next_index += 1;
                if child.achieved {
                    complete.push(cand);
                } else {
                    pool.push((child, cand));
                }
            }
        }
        pool.sort_by(|a, b| {
            cfg.objective
                .cmp(a.1.cost, b.1.cost)
                .then(a.1.index.cmp(&b.1.index))
        });
        pool.truncate(cfg.beam_width);
        beam = pool.into_iter().map(|(p, c)| (p, Some(c))).collect();
        if beam.is_empty() {
            break;
        }
    }
    complete.extend(beam.into_iter().filter_map(|(_, c)| c));
    RankedPlans::rank(complete, cfg.objective)
}

/// Every terminal plan of the rollout tree (achieved, dead end, or
/// `max_depth` steps), in depth-first order.
pub fn enumerate_plans(
    world: &dyn WorldModel,
    goal: &str,
    context: &str,
    proposals: usize,
    max_depth: usize,
) -> Result<Vec<Trajectory>, PlanError> {
    let mut ex = Explorer::new(world, goal, context, proposals);
    let mut out = Vec::new();
    let mut stack = vec![Branch::default()];
    while let Some(path) = stack.pop() {
        let options = if path.achieved || path.steps.len() >= max_depth {
            Vec::new()
        } else {
            ex.propose(&path)?
        };
        if options.is_empty() {
            if !path.steps.is_empty() {
                out.push(to_trajectory(goal, &path));
            }
            continue;
        }
        for a in options.iter().rev() {
            stack.push(ex.step(&path, a)?);
        }
    }
    Ok(out)
}
