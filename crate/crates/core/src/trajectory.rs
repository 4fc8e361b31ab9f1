//! Goal/plan data model and the line-oriented trajectory markup.
//!
//! A document looks like this (every tag on its own line):
//!
//! ```text
//! <GOAL>
//! Cooking Tomato and Eggs
//! </GOAL>
//!
//! ---
//!
//! <INTERPRETATION>
//! Now, the kitchen is set up ...
//! </INTERPRETATION>
//!
//! ---
//!
//! <ACTION>
//! Preheat the skillet on the stove
//! </ACTION>
//!
//! <STATE>
//! The skillet changes from cold to hot ...
//! </STATE>
//!
//! ---
//!
//! <GOAL_ACHIEVED>
//! ```
//!
//! `---` separators are optional when parsing and always emitted when
//! rendering. HTML comment lines (`<!-- ... -->`) outside blocks are skipped.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TAG_GOAL: &str = "GOAL";
pub const TAG_INTERPRETATION: &str = "INTERPRETATION";
pub const TAG_ACTION: &str = "ACTION";
pub const TAG_STATE: &str = "STATE";
pub const GOAL_ACHIEVED_LINE: &str = "<GOAL_ACHIEVED>";
pub const SEPARATOR_LINE: &str = "---";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("unbalanced <{tag}> tag at line {line}")]
    UnbalancedTag { tag: String, line: usize },
    #[error("goal is missing or empty")]
    EmptyGoal,
    #[error("<STATE> block at line {line} is not preceded by an <ACTION> block")]
    StateWithoutAction { line: usize },
    #[error("empty <ACTION> block at line {line}")]
    EmptyAction { line: usize },
    #[error("<GOAL_ACHIEVED> present but the trajectory has no steps")]
    AchievedWithoutSteps,
    #[error("interpretation has blank edge lines or structural lines")]
    InvalidInterpretation,
    #[error("invalid step {index}: {reason}")]
    InvalidStep { index: usize, reason: String },
    #[error("prefix length {k} out of range for {len} steps")]
    PrefixOutOfRange { k: usize, len: usize },
    #[error("need at least 2 steps to shuffle, got {0}")]
    TooFewSteps(usize),
    #[error("all steps are identical; no distinct permutation exists")]
    NoDistinctPermutation,
}

/// One action and the world-state change it causes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub action: String,
    #[serde(default)]
    pub state: String,
}

impl Step {
    pub fn new(action: impl Into<String>, state: impl Into<String>) -> Self {
        Self {
            action: action.into(),
            state: state.into(),
        }
    }

    fn check(&self, index: usize) -> Result<(), TrajectoryError> {
        let invalid = |reason: &str| TrajectoryError::InvalidStep {
            index,
            reason: reason.to_string(),
        };
        if self.action.is_empty() {
            return Err(invalid("action is empty"));
        }
        if self.action.trim() != self.action {
            return Err(invalid("action has surrounding whitespace"));
        }
        if contains_markup(&self.action) {
            return Err(invalid("action contains markup tags"));
        }
        if !is_block_body(&self.state) {
            return Err(invalid("state has blank edge lines or structural lines"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub goal: String,
    #[serde(default)]
    pub interpretation: String,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub achieved: bool,
}

/// Toggles for the critic-facing rendering (the "w/o Interp." and
/// "w/o states" ablations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub include_interpretation: bool,
    pub include_states: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            include_interpretation: true,
            include_states: true,
        }
    }
}

impl Trajectory {
    pub fn new(goal: impl Into<String>) -> Self {
        Self {
            goal: goal.into(),
            ..Self::default()
        }
    }

    pub fn with_interpretation(mut self, interpretation: impl Into<String>) -> Self {
        self.interpretation = interpretation.into();
        self
    }

    pub fn with_steps(mut self, steps: impl IntoIterator<Item = Step>) -> Self {
        self.steps = steps.into_iter().collect();
        self
    }

    pub fn with_achieved(mut self, achieved: bool) -> Self {
        self.achieved = achieved;
        self
    }

    /// Checks the structural invariants required for a lossless render.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.goal.trim().is_empty()
            || self.goal.trim() != self.goal
            || !is_block_body(&self.goal)
        {
            return Err(TrajectoryError::EmptyGoal);
        }
        if !is_block_body(&self.interpretation) {
            return Err(TrajectoryError::InvalidInterpretation);
        }
        if self.achieved && self.steps.is_empty() {
            return Err(TrajectoryError::AchievedWithoutSteps);
        }
        for (i, step) in self.steps.iter().enumerate() {
            step.check(i)?;
        }
        Ok(())
    }

    /// Copy of the trajectory truncated to its first `k` steps.
    pub fn prefix(&self, k: usize) -> Result<Trajectory, TrajectoryError> {
        if k > self.steps.len() {
            return Err(TrajectoryError::PrefixOutOfRange {
                k,
                len: self.steps.len(),
            });
        }
        Ok(Trajectory {
            goal: self.goal.clone(),
            interpretation: self.interpretation.clone(),
            steps: self.steps[..k].to_vec(),
            achieved: self.achieved && k == self.steps.len(),
        })
    }
}

fn contains_markup(text: &str) -> bool {
    [
        TAG_GOAL,
        TAG_INTERPRETATION,
        TAG_ACTION,
        TAG_STATE,
        "GOAL_ACHIEVED",
    ]
    .iter()
    .any(|tag| text.contains(&format!("<{tag}>")) || text.contains(&format!("</{tag}>")))
}

/// Text that survives a render/parse cycle unchanged as a block body.
fn is_block_body(text: &str) -> bool {
    let lines: Vec<&str> = text.split('\n').collect();
    !text.contains('\r')
        && !lines.iter().any(|l| is_structural_line(l))
        && trim_blank_lines(&lines) == text
}

/// A line the parser would treat as structure rather than body text.
fn is_structural_line(line: &str) -> bool {
    let t = line.trim();
    t == SEPARATOR_LINE || classify(t).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Goal,
    Interpretation,
    Action,
    State,
}

impl Tag {
    fn name(self) -> &'static str {
        match self {
            Tag::Goal => TAG_GOAL,
            Tag::Interpretation => TAG_INTERPRETATION,
            Tag::Action => TAG_ACTION,
            Tag::State => TAG_STATE,
        }
    }

    fn from_name(name: &str) -> Option<Tag> {
        match name {
            TAG_GOAL => Some(Tag::Goal),
            TAG_INTERPRETATION => Some(Tag::Interpretation),
            TAG_ACTION => Some(Tag::Action),
            TAG_STATE => Some(Tag::State),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LineKind<'a> {
    Open(Tag),
    Close(Tag),
    /// `<TAG>body</TAG>` on a single line.
    Inline(Tag, &'a str),
    Achieved,
}

fn classify(trimmed: &str) -> Option<LineKind<'_>> {
    if trimmed == GOAL_ACHIEVED_LINE {
        return Some(LineKind::Achieved);
    }
    let inner = trimmed.strip_prefix('<')?.strip_suffix('>')?;
    if let Some((open, rest)) = inner.split_once('>') {
        let tag = Tag::from_name(open)?;
        let body = rest.strip_suffix(&format!("</{}", tag.name()))?;
        return Some(LineKind::Inline(tag, body));
    }
    match inner.strip_prefix('/') {
        Some(name) => Tag::from_name(name).map(LineKind::Close),
        None => Tag::from_name(inner).map(LineKind::Open),
    }
}

fn trim_blank_lines(lines: &[&str]) -> String {
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

/// Parses trajectory markup.
pub fn parse_trajectory(text: &str) -> Result<Trajectory, TrajectoryError> {
    let mut goal: Option<String> = None;
    let mut interpretation = String::new();
    let mut steps: Vec<Step> = Vec::new();
    // Whether the most recent block was an ACTION still waiting for its STATE.
    let mut action_open_for_state = false;
    let mut achieved = false;

    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line_no = i + 1;
        let trimmed = lines[i].trim();
        let parsed_block = match classify(trimmed) {
            Some(LineKind::Open(tag)) => {
                let close = lines[i + 1..]
                    .iter()
                    .position(|l| classify(l.trim()).is_some())
                    .map(|off| i + 1 + off);
                let close = match close {
                    Some(c) if classify(lines[c].trim()) == Some(LineKind::Close(tag)) => c,
                    _ => {
                        return Err(TrajectoryError::UnbalancedTag {
                            tag: tag.name().to_string(),
                            line: line_no,
                        })
                    }
                };
                Some((tag, trim_blank_lines(&lines[i + 1..close]), close + 1))
            }
            Some(LineKind::Inline(tag, body)) => Some((tag, body.trim().to_string(), i + 1)),
            Some(LineKind::Close(tag)) => {
                return Err(TrajectoryError::UnbalancedTag {
                    tag: tag.name().to_string(),
                    line: line_no,
                })
            }
            Some(LineKind::Achieved) => {
                achieved = true;
                action_open_for_state = false;
                None
            }
            // separators, blank lines, comments and stray prose
            None => None,
        };
        match parsed_block {
            Some((tag, body, next)) => {
                match tag {
                    Tag::Goal => goal = Some(body.trim().to_string()),
                    Tag::Interpretation => interpretation = body,
                    Tag::Action => {
                        let action = body.trim().to_string();
                        if action.is_empty() {
                            return Err(TrajectoryError::EmptyAction { line: line_no });
                        }
                        steps.push(Step::new(action, String::new()));
                        action_open_for_state = true;
                        achieved = false;
                    }
                    Tag::State => {
                        if !action_open_for_state {
                            return Err(TrajectoryError::StateWithoutAction { line: line_no });
                        }
                        if let Some(last) = steps.last_mut() {
                            last.state = body;
                        }
                        action_open_for_state = false;
                    }
                }
                if tag != Tag::Action {
                    action_open_for_state = false;
                }
                i = next;
            }
            None => i += 1,
        }
    }

    let goal = goal
        .filter(|g| !g.is_empty())
        .ok_or(TrajectoryError::EmptyGoal)?;
    if achieved && steps.is_empty() {
        return Err(TrajectoryError::AchievedWithoutSteps);
    }
    Ok(Trajectory {
        goal,
        interpretation,
        steps,
        achieved,
    })
}

fn block(tag: &str, body: &str) -> String {
    if body.is_empty() {
        format!("<{tag}>\n</{tag}>")
    } else {
        format!("<{tag}>\n{body}\n</{tag}>")
    }
}

/// Renders trajectory markup. Steps with an empty state emit no STATE block.
pub fn render_trajectory(t: &Trajectory) -> String {
    let mut groups: Vec<String> = vec![block(TAG_GOAL, &t.goal)];
    if !t.interpretation.is_empty() {
        groups.push(block(TAG_INTERPRETATION, &t.interpretation));
    }
    for step in &t.steps {
        let mut g = block(TAG_ACTION, &step.action);
        if !step.state.is_empty() {
            g.push_str("\n\n");
            g.push_str(&block(TAG_STATE, &step.state));
        }
        groups.push(g);
    }
    if t.achieved {
        groups.push(GOAL_ACHIEVED_LINE.to_string());
    }
    let mut out = groups.join(&format!("\n\n{SEPARATOR_LINE}\n\n"));
    out.push('\n');
    out
}

/// Plain-text goal and trajectory views fed to the critic.
///
/// The trajectory text numbers the first `k` steps as `"{i}. Action: ..."`,
/// each followed by a `"State: ..."` line when states are included and
/// non-empty.
pub fn render_critic_text(
    t: &Trajectory,
    k: usize,
    opts: RenderOptions,
) -> Result<(String, String), TrajectoryError> {
    if k > t.steps.len() {
        return Err(TrajectoryError::PrefixOutOfRange {
            k,
            len: t.steps.len(),
        });
    }
    let mut goal_text = t.goal.clone();
    if opts.include_interpretation && !t.interpretation.is_empty() {
        goal_text.push('\n');
        goal_text.push_str(&t.interpretation);
    }
    let mut lines = Vec::with_capacity(k * 2);
    for (i, step) in t.steps[..k].iter().enumerate() {
        lines.push(format!("{}. Action: {}", i + 1, step.action));
        if opts.include_states && !step.state.is_empty() {
            lines.push(format!("State: {}", step.state));
        }
    }
    Ok((goal_text, lines.join("\n")))
}

/// Returns `t` with its steps permuted so the order differs from the
/// original. Deterministic in `seed`.
pub fn shuffle_steps(t: &Trajectory, seed: u64) -> Result<Trajectory, TrajectoryError> {
    let n = t.steps.len();
    if n < 2 {
        return Err(TrajectoryError::TooFewSteps(n));
    }
    if t.steps.iter().all(|s| *s == t.steps[0]) {
        return Err(TrajectoryError::NoDistinctPermutation);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        order.shuffle(&mut rng);
        let changed = order
            .iter()
            .enumerate()
            .any(|(i, &j)| t.steps[i] != t.steps[j]);
        if changed {
            break;
        }
    }
    Ok(Trajectory {
        goal: t.goal.clone(),
        interpretation: t.interpretation.clone(),
        steps: order.iter().map(|&j| t.steps[j].clone()).collect(),
        achieved: t.achieved,
    })
}

/// Appends `extra` steps; the result is never marked achieved.
pub fn append_steps(base: &Trajectory, extra: &[Step]) -> Trajectory {
    let mut steps = base.steps.clone();
    steps.extend_from_slice(extra);
    Trajectory {
        goal: base.goal.clone(),
        interpretation: base.interpretation.clone(),
        steps,
        achieved: false,
    }
}
