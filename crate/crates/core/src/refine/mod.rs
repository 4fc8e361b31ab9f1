//! Structured plan extraction from a caption outline with iterative
//! Self-Refine: one draft request, then `iterations` critique-and-revise
//! requests, each embedding the previous draft into the same meta-prompt.

pub mod client;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segtree::{dfs_render_with, sample_windows, CaptionTree, DfsOptions, WindowConfig};
use crate::trajectory::{Step, Trajectory, TrajectoryError};

pub use client::{
    prompt_hash, ChatMessage, ChatRequest, GenError, HttpConfig, HttpTextGen, MockTextGen,
    RequestGate, ScriptedTextGen, TextGen,
};

/// Meta-prompt with `{TREE OF CAPTIONS}`, `{ADDITIONAL VIDEO INFO}`,
/// `{PREVIOUS DRAFT}` and `{REQUIREMENTS}` placeholders.
pub const META_PROMPT: &str = include_str!("../../assets/self_refine_prompt.md");
/// Extraction requirements; `<min_start>` / `<max_end>` mark the window bounds.
pub const REQUIREMENTS: &str = include_str!("../../assets/plan_requirements.md");
pub const PROMPT_VERSION: &str = "self-refine/v1";

pub const DEFAULT_ITERATIONS: usize = 2;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error(transparent)]
    GenerationFailed(#[from] GenError),
    #[error("unparseable response: {0}")]
    UnparseableResponse(String),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("extraction failed validation: {}", summarize(.0))]
    InvalidExtraction(Vec<Violation>),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

fn summarize(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub action: String,
    pub state: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExtraction {
    pub discussion: String,
    pub plan: Vec<PlanStep>,
    pub goal: String,
    pub interpretation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    OutOfBounds,
    Overlap,
    EmptyAction,
    MissingKey,
    BadTimestampFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub step: Option<usize>,
    pub message: String,
}

/// Time span of one extracted step, kept beside the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSpan {
    pub start: f64,
    pub end: f64,
}

pub fn format_timestamp(t: f64) -> String {
    format!("{t:.2}")
}

/// Single-pass `{KEY}` substitution; unknown braces are left alone and
/// substituted values are never re-scanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = values.iter().find(|(k, _)| {
            tail.len() > k.len() + 1
                && tail[1..].starts_with(k)
                && tail.as_bytes()[k.len() + 1] == b'}'
        });
        match hit {
            Some((k, v)) => {
                out.push_str(v);
                rest = &tail[k.len() + 2..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Requirements text with window bounds filled in when known.
pub fn requirements_for(bounds: Option<(f64, f64)>) -> String {
    match bounds {
        Some((lo, hi)) => REQUIREMENTS
            .replace("<min_start>", &format_timestamp(lo))
            .replace("<max_end>", &format_timestamp(hi)),
        None => REQUIREMENTS.to_string(),
    }
}

/// Assembles the meta-prompt. `draft` is empty for the first round.
pub fn build_prompt(
    tree_text: &str,
    extra_info: &str,
    draft: &str,
    bounds: Option<(f64, f64)>,
) -> String {
    let mut template = META_PROMPT.to_string();
    if let Some((lo, hi)) = bounds {
        template = template
            .replace("<min_start>", &format_timestamp(lo))
            .replace("<max_end>", &format_timestamp(hi));
    }
    let requirements = requirements_for(bounds);
    fill(
        &template,
        &[
            ("TREE OF CAPTIONS", tree_text.trim_end()),
            ("ADDITIONAL VIDEO INFO", extra_info.trim()),
            ("PREVIOUS DRAFT", draft.trim()),
            ("REQUIREMENTS", requirements.trim_end()),
        ],
    )
}

/// The body of the first fenced ```yaml block.
pub fn extract_yaml_block(response: &str) -> Option<&str> {
    let fence = ["```yaml", "```yml", "```YAML"]
        .iter()
        .filter_map(|f| response.find(f).map(|i| (i, f.len())))
        .min_by_key(|&(i, _)| i)?;
    let after = &response[fence.0 + fence.1..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body
        .find("\n```")
        .map(|i| i + 1)
        .or_else(|| body.starts_with("```").then_some(0))?;
    Some(&body[..end])
}

fn yaml_text(map: &serde_yaml::Mapping, key: &str) -> Result<Option<String>, RefineError> {
    match map.get(key) {
        None | Some(serde_yaml::Value::Null) => Ok(None),
        Some(serde_yaml::Value::String(s)) => Ok(Some(s.trim_end().to_string())),
        Some(serde_yaml::Value::Number(n)) => Ok(Some(n.to_string())),
        Some(serde_yaml::Value::Bool(b)) => Ok(Some(b.to_string())),
        Some(_) => Err(RefineError::UnparseableResponse(format!(
            "`{key}` is not a scalar"
        ))),
    }
}

fn yaml_time(map: &serde_yaml::Mapping, key: &str, step: usize) -> Result<f64, RefineError> {
    let bad = |what: String| {
        RefineError::UnparseableResponse(format!("plan[{step}].{key}: bad timestamp {what}"))
    };
    let value = match map.get(key) {
        None | Some(serde_yaml::Value::Null) => {
            return Err(RefineError::MissingKey(format!("plan[{step}].{key}")))
        }
        Some(v) => v,
    };
    let t = match value {
        serde_yaml::Value::Number(n) => n.as_f64().ok_or_else(|| bad(n.to_string()))?,
        serde_yaml::Value::String(s) => {
            let s = s.trim();
            s.strip_suffix('s')
                .unwrap_or(s)
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("{s:?}")))?
        }
        other => return Err(bad(format!("{other:?}"))),
    };
    if t.is_finite() {
        Ok(t)
    } else {
        Err(bad(t.to_string()))
    }
}

/// Parses the fenced YAML block of a model response.
pub fn parse_extraction(response: &str) -> Result<PlanExtraction, RefineError> {
    let block = extract_yaml_block(response)
        .ok_or_else(|| RefineError::UnparseableResponse("no fenced yaml block".into()))?;
    let doc: serde_yaml::Value =
        serde_yaml::from_str(block).map_err(|e| RefineError::UnparseableResponse(e.to_string()))?;
    let map = doc
        .as_mapping()
        .ok_or_else(|| RefineError::UnparseableResponse("yaml block is not a mapping".into()))?;

    let goal = yaml_text(map, "goal")?.ok_or_else(|| RefineError::MissingKey("goal".into()))?;
    let interpretation = yaml_text(map, "interpretation")?
        .ok_or_else(|| RefineError::MissingKey("interpretation".into()))?;
    let discussion = yaml_text(map, "discussion")?.unwrap_or_default();
    let raw_plan = match map.get("plan") {
        None | Some(serde_yaml::Value::Null) => return Err(RefineError::MissingKey("plan".into())),
        Some(serde_yaml::Value::Sequence(seq)) => seq,
        Some(_) => {
            return Err(RefineError::UnparseableResponse(
                "`plan` is not a list".into(),
            ))
        }
    };

    let mut plan = Vec::with_capacity(raw_plan.len());
    for (i, item) in raw_plan.iter().enumerate() {
        let step = item.as_mapping().ok_or_else(|| {
            RefineError::UnparseableResponse(format!("plan[{i}] is not a mapping"))
        })?;
        let action = yaml_text(step, "action")?
            .ok_or_else(|| RefineError::MissingKey(format!("plan[{i}].action")))?;
        let state = yaml_text(step, "state")?
            .ok_or_else(|| RefineError::MissingKey(format!("plan[{i}].state")))?;
        plan.push(PlanStep {
            action,
            state,
            start: yaml_time(step, "start", i)?,
            end: yaml_time(step, "end", i)?,
        });
    }
    Ok(PlanExtraction {
        discussion,
        plan,
        goal,
        interpretation,
    })
}

/// Renders an extraction back into the output YAML schema (fenced).
pub fn render_extraction_yaml(p: &PlanExtraction) -> String {
    let indent = |text: &str, pad: &str| -> String {
        text.lines()
            .map(|l| format!("{pad}{l}"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let mut out = String::from("```yaml\n");
    out.push_str("discussion: |-\n");
    out.push_str(&indent(&p.discussion, "    "));
    out.push_str("\nplan:\n");
    for s in &p.plan {
        out.push_str(&format!(
            "- action: {}\n  state: |-\n{}\n  start: {}\n  end: {}\n",
            serde_json::to_string(&s.action).expect("string serializes"),
            indent(&s.state, "      "),
            format_timestamp(s.start),
            format_timestamp(s.end)
        ));
    }
    out.push_str(&format!(
        "goal: {}\ninterpretation: |-\n{}\n```",
        serde_json::to_string(&p.goal).expect("string serializes"),
        indent(&p.interpretation, "    ")
    ));
    out
}

/// All structural problems of an extraction for the window
/// `[min_start, max_end]`. Touching step boundaries are not overlaps.
pub fn validate_extraction(p: &PlanExtraction, min_start: f64, max_end: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.goal.trim().is_empty() {
        out.push(Violation {
            kind: ViolationKind::MissingKey,
            step: None,
            message: "goal is empty".into(),
        });
    }
    if p.plan.is_empty() {
        out.push(Violation {
            kind: ViolationKind::MissingKey,
            step: None,
            message: "plan has no steps".into(),
        });
    }
    for (i, s) in p.plan.iter().enumerate() {
        if s.action.trim().is_empty() {
            out.push(Violation {
                kind: ViolationKind::EmptyAction,
                step: Some(i),
                message: format!("step {i} has an empty action"),
            });
        }
        if !(s.start.is_finite() && s.end.is_finite()) || s.start >= s.end {
            out.push(Violation {
                kind: ViolationKind::BadTimestampFormat,
                step: Some(i),
                message: format!(
                    "step {i} span {}..{} is not increasing",
                    format_timestamp(s.start),
                    format_timestamp(s.end)
                ),
            });
        }
        if s.start < min_start || s.end > max_end {
            out.push(Violation {
                kind: ViolationKind::OutOfBounds,
                step: Some(i),
                message: format!(
                    "step {i} span {}..{} leaves window {}..{}",
                    format_timestamp(s.start),
                    format_timestamp(s.end),
                    format_timestamp(min_start),
                    format_timestamp(max_end)
                ),
            });
        }
    }
    for j in 0..p.plan.len() {
        for i in 0..j {
            let (a, b) = (&p.plan[i], &p.plan[j]);
            if a.start < b.end && b.start < a.end {
                out.push(Violation {
                    kind: ViolationKind::Overlap,
                    step: Some(j),
                    message: format!("steps {i} and {j} overlap"),
                });
            }
        }
    }
    out
}

/// Converts a valid extraction to a trajectory plus per-step spans.
pub fn to_trajectory(
    p: &PlanExtraction,
    min_start: f64,
    max_end: f64,
) -> Result<(Trajectory, Vec<StepSpan>), RefineError> {
    let violations = validate_extraction(p, min_start, max_end);
    if !violations.is_empty() {
        return Err(RefineError::InvalidExtraction(violations));
    }
    let t = Trajectory {
        goal: p.goal.clone(),
        interpretation: p.interpretation.clone(),
        steps: p
            .plan
            .iter()
            .map(|s| Step::new(s.action.clone(), s.state.clone()))
            .collect(),
        achieved: true,
    };
    t.validate()?;
    let spans = p
        .plan
        .iter()
        .map(|s| StepSpan {
            start: s.start,
            end: s.end,
        })
        .collect();
    Ok((t, spans))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRequest {
    pub tree_text: String,
    pub extra_info: String,
    pub iterations: usize,
    /// Window `[min_start, max_end]` substituted into the prompt.
    pub bounds: Option<(f64, f64)>,
    pub temperature: f64,
}

impl RefineRequest {
    pub fn new(tree_text: impl Into<String>) -> Self {
        Self {
            tree_text: tree_text.into(),
            extra_info: String::new(),
            iterations: DEFAULT_ITERATIONS,
            bounds: None,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 0 is the draft round.
    pub round: usize,
    pub prompt_hash: String,
    pub prompt: String,
    pub response: String,
    pub parsed: Option<PlanExtraction>,
    pub error: Option<String>,
    /// The round's output was unusable and the previous draft was kept.
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub extraction: PlanExtraction,
    pub audit: Vec<RoundRecord>,
    pub prompt_version: String,
}

/// Runs the draft round plus `iterations` refine rounds.
///
/// A round whose response cannot be parsed keeps the last parseable draft;
/// the call fails only if no round produced one. Generation errors abort.
pub fn self_refine(
    client: &dyn TextGen,
    req: &RefineRequest,
) -> Result<RefineOutcome, RefineError> {
    let mut audit = Vec::with_capacity(req.iterations + 1);
    let mut best: Option<(PlanExtraction, String)> = None;
    let mut last_error = String::new();

    for round in 0..=req.iterations {
        let draft = best.as_ref().map(|(_, yaml)| yaml.as_str()).unwrap_or("");
        let prompt = build_prompt(&req.tree_text, &req.extra_info, draft, req.bounds);
        let messages = [ChatMessage::user(prompt.clone())];
        let hash = prompt_hash(&messages);
        let response = client.complete(&messages, req.temperature)?;
        let record = match parse_extraction(&response) {
            Ok(p) => {
                let yaml = extract_yaml_block(&response)
                    .map(|b| format!("```yaml\n{b}```"))
                    .unwrap_or_else(|| render_extraction_yaml(&p));
                best = Some((p.clone(), yaml));
                RoundRecord {
                    round,
                    prompt_hash: hash,
                    prompt,
                    response,
                    parsed: Some(p),
                    error: None,
                    fell_back: false,
                }
            }
            Err(e) => {
                last_error = e.to_string();
                tracing::warn!(round, error = %e, "refine round unparseable");
                RoundRecord {
                    round,
                    prompt_hash: hash,
                    prompt,
                    response,
                    parsed: None,
                    error: Some(e.to_string()),
                    fell_back: best.is_some(),
                }
            }
        };
        audit.push(record);
    }

    match best {
        Some((extraction, _)) => Ok(RefineOutcome {
            extraction,
            audit,
            prompt_version: PROMPT_VERSION.to_string(),
        }),
        None => Err(RefineError::UnparseableResponse(last_error)),
    }
}

#[derive(Debug)]
pub struct WindowExtraction {
    pub node: usize,
    pub start: f64,
    pub end: f64,
    pub result: Result<RefineOutcome, RefineError>,
}

/// Samples windows from a captioned tree and runs one Self-Refine per
/// window on its DFS-rendered subtree. Duplicates across overlapping
/// windows are kept.
pub fn extract_windows(
    client: &dyn TextGen,
    tree: &CaptionTree,
    windows: WindowConfig,
    extra_info: &str,
    iterations: usize,
    labels: Option<&HashMap<usize, String>>,
) -> Vec<WindowExtraction> {
    sample_windows(tree, windows)
        .into_iter()
        .map(|node| {
            let n = tree.node(node);
            let text = dfs_render_with(
                tree,
                &DfsOptions {
                    root: Some(node),
                    min_duration: windows.min_duration,
                    labels,
                },
            );
            let req = RefineRequest {
                tree_text: text,
                extra_info: extra_info.to_string(),
                iterations,
                bounds: Some((n.start, n.end)),
                temperature: 0.0,
            };
            WindowExtraction {
                node,
                start: n.start,
                end: n.end,
                result: self_refine(client, &req),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_STEPS: &str = "```yaml\ndiscussion: |-\n    The draft is fine.\nplan:\n- action: Remove the wheel\n  state: |-\n      The wheel is off the frame.\n  start: 0.00\n  end: 23.27\n- action: Peel off the tube\n  state: |-\n      The tube is free.\n  start: 23.27\n  end: 53.13\ngoal: Replace the inner tube\ninterpretation: |-\n    Now, the tire is flat. To achieve the goal, the tube must be replaced.\n```";

    #[test]
    fn fill_is_single_pass() {
        assert_eq!(fill("{A}-{B}", &[("A", "{B}"), ("B", "x")]), "{B}-x");
        assert_eq!(fill("{ nope }", &[("A", "x")]), "{ nope }");
    }

    #[test]
    fn prompt_assembly() {
        let p = build_prompt("# 0.00s -> 9.00s", "speech: hi", "", Some((0.0, 9.0)));
        assert!(p.starts_with("# 0.00s -> 9.00s speech: hi\n\n# Draft"));
        assert!(p.contains("They must fall within 0.00 and 9.00 and do not overlap"));
        assert!(!p.contains("{REQUIREMENTS}"));
        assert!(!p.contains("{PREVIOUS DRAFT}"));
        assert!(p.trim_end().ends_with("end with \"\\n```\""));
        let unbounded = build_prompt("t", "", "", None);
        assert!(unbounded.contains("<min_start>"));
    }

    #[test]
    fn parse_two_steps() {
        let p = parse_extraction(TWO_STEPS).unwrap();
        assert_eq!(p.plan.len(), 2);
        assert_eq!(p.plan[0].end, 23.27);
        assert_eq!(p.goal, "Replace the inner tube");
        assert!(p.interpretation.starts_with("Now,"));
        assert_eq!(p.discussion, "The draft is fine.");
    }

    #[test]
    fn parse_missing_goal() {
        let r = TWO_STEPS.replace("goal: Replace the inner tube\n", "");
        assert!(matches!(parse_extraction(&r), Err(RefineError::MissingKey(k)) if k == "goal"));
        let r = TWO_STEPS.replace("  start: 0.00\n", "");
        assert!(
            matches!(parse_extraction(&r), Err(RefineError::MissingKey(k)) if k == "plan[0].start")
        );
    }

    #[test]
    fn parse_string_timestamps_and_garbage() {
        let r = TWO_STEPS.replace("start: 23.27", "start: \"23.27s\"");
        assert_eq!(parse_extraction(&r).unwrap().plan[1].start, 23.27);
        let r = TWO_STEPS.replace("start: 23.27", "start: soon");
        assert!(matches!(
            parse_extraction(&r),
            Err(RefineError::UnparseableResponse(_))
        ));
        assert!(matches!(
            parse_extraction("no yaml here"),
            Err(RefineError::UnparseableResponse(_))
        ));
        assert!(matches!(
            parse_extraction("```yaml\n: : [\n```"),
            Err(RefineError::UnparseableResponse(_))
        ));
    }

    #[test]
    fn rendered_yaml_parses_back() {
        let p = parse_extraction(TWO_STEPS).unwrap();
        assert_eq!(parse_extraction(&render_extraction_yaml(&p)).unwrap(), p);
    }

    fn plan(spans: &[(f64, f64)]) -> PlanExtraction {
        PlanExtraction {
            discussion: String::new(),
            plan: spans
                .iter()
                .map(|&(start, end)| PlanStep {
                    action: "Do it".into(),
                    state: "Done".into(),
                    start,
                    end,
                })
                .collect(),
            goal: "g".into(),
            interpretation: String::new(),
        }
    }

    #[test]
    fn validation_cases() {
        assert!(validate_extraction(&plan(&[(0.0, 5.0), (5.0, 9.0)]), 0.0, 10.0).is_empty());
        let v = validate_extraction(&plan(&[(0.0, 5.0), (4.0, 9.0)]), 0.0, 10.0);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Overlap);
        let v = validate_extraction(&plan(&[(0.0, 12.0)]), 0.0, 10.0);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::OutOfBounds);
        let mut p = plan(&[(3.0, 2.0)]);
        p.plan[0].action = " ".into();
        let kinds: Vec<_> = validate_extraction(&p, 0.0, 10.0)
            .iter()
            .map(|v| v.kind)
            .collect();
        assert_eq!(
            kinds,
            vec![
                ViolationKind::EmptyAction,
                ViolationKind::BadTimestampFormat
            ]
        );
        assert!(validate_extraction(&plan(&[]), 0.0, 1.0)
            .iter()
            .any(|v| v.kind == ViolationKind::MissingKey));
    }

    #[test]
    fn trajectory_conversion() {
        let p = plan(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]);
        let (t, spans) = to_trajectory(&p, 0.0, 3.0).unwrap();
        assert_eq!(t.steps.len(), 3);
        assert!(t.achieved);
        assert_eq!(t.steps[0].action, "Do it");
        assert_eq!(
            spans[2],
            StepSpan {
                start: 2.0,
                end: 3.0
            }
        );
        assert!(matches!(
            to_trajectory(&p, 0.0, 2.5),
            Err(RefineError::InvalidExtraction(_))
        ));
        let mut bad = p.clone();
        bad.plan[0].action = "<ACTION> nested".into();
        assert!(matches!(
            to_trajectory(&bad, 0.0, 3.0),
            Err(RefineError::Trajectory(_))
        ));
    }

    #[test]
    fn draft_only() {
        let client = ScriptedTextGen::new([TWO_STEPS]);
        let mut req = RefineRequest::new("# tree");
        req.iterations = 0;
        let out = self_refine(&client, &req).unwrap();
        assert_eq!(client.call_count(), 1);
        assert_eq!(out.extraction, parse_extraction(TWO_STEPS).unwrap());
        assert_eq!(out.audit.len(), 1);
    }

    #[test]
    fn refine_rounds_embed_previous_draft() {
        let revised = TWO_STEPS.replace(
            "- action: Peel off the tube",
            "- action: Pry the tire with a lever",
        );
        let feedback = format!(
            "\"Remove the wheel\" could be broken down into more specific actions.\n\n{revised}"
        );
        let client = ScriptedTextGen::new([TWO_STEPS.to_string(), TWO_STEPS.into(), feedback]);
        let out = self_refine(&client, &RefineRequest::new("# tree")).unwrap();
        assert_eq!(client.call_count(), 3);
        assert_eq!(out.extraction.plan[1].action, "Pry the tire with a lever");
        let prompts = client.prompts();
        assert!(!prompts[0].contains("Peel off the tube"));
        assert!(prompts[1].contains("Peel off the tube"));
        assert_eq!(
            out.audit.iter().map(|r| r.round).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn unparseable_round_falls_back() {
        let client = ScriptedTextGen::new([TWO_STEPS, "sorry, I cannot", "still nothing"]);
        let out = self_refine(&client, &RefineRequest::new("# tree")).unwrap();
        assert_eq!(out.extraction, parse_extraction(TWO_STEPS).unwrap());
        assert!(out.audit[1].fell_back && out.audit[2].fell_back);
        // the refine rounds still see the last good draft
        assert!(client.prompts()[2].contains("Peel off the tube"));

        let client = ScriptedTextGen::new(["nope", "nope", "nope"]);
        assert!(matches!(
            self_refine(&client, &RefineRequest::new("# tree")),
            Err(RefineError::UnparseableResponse(_))
        ));
    }

    #[test]
    fn generation_failure_aborts() {
        let client = ScriptedTextGen::new([TWO_STEPS]);
        client.push_failure("boom");
        assert!(matches!(
            self_refine(&client, &RefineRequest::new("# tree")),
            Err(RefineError::GenerationFailed(_))
        ));
    }

    #[test]
    fn mock_client_is_reproducible_from_audit() {
        let req = RefineRequest {
            iterations: 1,
            ..RefineRequest::new("# tree")
        };
        let first = self_refine(&MockTextGen::default().with_fallback(TWO_STEPS), &req).unwrap();
        let table: HashMap<String, String> = first
            .audit
            .iter()
            .map(|r| (r.prompt_hash.clone(), r.response.clone()))
            .collect();
        let replay = self_refine(&MockTextGen::new(table), &req).unwrap();
        assert_eq!(replay, first);
    }
}
