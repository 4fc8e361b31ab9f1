//! Training pairs: self-supervised ones cut from trajectories, plus external
//! preference rows.

use std::io::{BufRead, Write};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CriticError;
use crate::segtree::CaptionTree;
use crate::trajectory::{
    append_steps, render_critic_text, shuffle_steps, RenderOptions, Step, Trajectory,
    TrajectoryError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    GoodVsBase,
    BaseVsBad,
    BaseVsShuffled,
    External,
}

/// `pos_text` should receive the lower cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExample {
    #[serde(rename = "goal")]
    pub goal_text: String,
    #[serde(rename = "pos")]
    pub pos_text: String,
    #[serde(rename = "neg")]
    pub neg_text: String,
    pub kind: PairKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub seed: u64,
    /// Smallest base prefix length.
    pub min_base: usize,
    /// Steps added to the base to form the good continuation.
    pub good_steps: usize,
    /// Foreign steps appended to the base to form the bad continuation.
    pub distractor_steps: usize,
    pub render: RenderOptions,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            min_base: 1,
            good_steps: 1,
            distractor_steps: 1,
            render: RenderOptions::default(),
        }
    }
}

fn texts(t: &Trajectory, opts: RenderOptions) -> Result<(String, String), TrajectoryError> {
    render_critic_text(t, t.steps.len(), opts)
}

fn push_pair(out: &mut Vec<PairExample>, goal: &str, pos: String, neg: String, kind: PairKind) {
    if pos != neg {
        out.push(PairExample {
            goal_text: goal.to_string(),
            pos_text: pos,
            neg_text: neg,
            kind,
        });
    }
}

/// Cuts every trajectory at each `k` in `[min_base, N-1]` and emits
/// `<good, base>`, `<base, bad>` and (for `k >= 2`) `<base, shuffled>`.
///
/// Distractor steps come from a uniformly chosen trajectory whose goal string
/// differs. Pairs whose two texts render identically are dropped.
pub fn build_pairs(
    trajs: &[Trajectory],
    cfg: &PairConfig,
) -> Result<Vec<PairExample>, CriticError> {
    for t in trajs {
        if t.steps.len() < 2 {
            return Err(TrajectoryError::TooFewSteps(t.steps.len()).into());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    let min_base = cfg.min_base.max(1);
    let distractor_count = cfg.distractor_steps.max(1);
    for t in trajs {
        let foreign: Vec<&Trajectory> = trajs.iter().filter(|o| o.goal != t.goal).collect();
        if foreign.is_empty() {
            return Err(CriticError::NoDistractorSource);
        }
        let n = t.steps.len();
        for k in min_base..n {
            let base = t.prefix(k)?;
            let (goal, base_text) = texts(&base, cfg.render)?;

            if k + cfg.good_steps <= n && cfg.good_steps > 0 {
                let (_, good_text) = texts(&t.prefix(k + cfg.good_steps)?, cfg.render)?;
                push_pair(
                    &mut out,
                    &goal,
                    good_text,
                    base_text.clone(),
                    PairKind::GoodVsBase,
                );
            }

            let source = foreign.choose(&mut rng).expect("nonempty");
            let extra: Vec<Step> = (0..distractor_count)
                .map(|_| source.steps[rng.random_range(0..source.steps.len())].clone())
                .collect();
            let (_, bad_text) = texts(&append_steps(&base, &extra), cfg.render)?;
            push_pair(
                &mut out,
                &goal,
                base_text.clone(),
                bad_text,
                PairKind::BaseVsBad,
            );

            if k >= 2 {
                match shuffle_steps(&base, rng.next_u64()) {
                    Ok(shuffled) => {
                        let (_, shuffled_text) = texts(&shuffled, cfg.render)?;
                        push_pair(
                            &mut out,
                            &goal,
                            base_text,
                            shuffled_text,
                            PairKind::BaseVsShuffled,
                        );
                    }
                    Err(TrajectoryError::NoDistinctPermutation) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct ExternalRow {
    goal: Option<String>,
    pos: Option<String>,
    neg: Option<String>,
}

/// Reads JSONL preference rows `{goal, pos, neg}` (query, chosen, rejected).
pub fn load_external_pairs<R: BufRead>(source: R) -> Result<Vec<PairExample>, CriticError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CriticError::BadRow {
            line: lineno,
            reason,
        };
        let row: ExternalRow = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let field = |v: Option<String>, name: &str| match v {
            Some(s) if !s.trim().is_empty() => Ok(s),
            Some(_) => Err(bad(format!("`{name}` is empty"))),
            None => Err(bad(format!("missing `{name}`"))),
        };
        let goal = field(row.goal, "goal")?;
        let pos = field(row.pos, "pos")?;
        let neg = field(row.neg, "neg")?;
        if pos == neg {
            return Err(bad("`pos` equals `neg`".into()));
        }
        out.push(PairExample {
            goal_text: goal,
            pos_text: pos,
            neg_text: neg,
            kind: PairKind::External,
        });
    }
    Ok(out)
}

/// Pairs file: one JSON object `{goal, pos, neg, kind}` per line.
pub fn write_pairs<W: Write>(mut sink: W, pairs: &[PairExample]) -> Result<(), CriticError> {
    for p in pairs {
        let line = serde_json::to_string(p).expect("pair serializes");
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

pub fn read_pairs<R: BufRead>(source: R) -> Result<Vec<PairExample>, CriticError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CriticError::BadRow {
            line: i + 1,
            reason,
        };
        let p: PairExample = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if p.pos_text == p.neg_text {
            return Err(bad("`pos` equals `neg`".into()));
        }
        out.push(p);
    }
    Ok(out)
}

/// Pseudo-trajectories from a captioned tree: an internal node's caption is
/// the goal and the captions of the leaves under it are the steps.
///
/// Draws up to `count` distinct internal nodes uniformly (seeded). Nodes
/// with fewer than two captioned leaves, or no caption, are not eligible.
pub fn subtree_trajectories(tree: &CaptionTree, count: usize, seed: u64) -> Vec<Trajectory> {
    let eligible: Vec<Trajectory> = tree
        .nodes()
        .iter()
        .filter(|n| !n.is_leaf())
        .filter_map(|n| {
            let goal = n.caption.as_deref()?.trim();
            if goal.is_empty() {
                return None;
            }
            let steps: Vec<Step> = tree
                .leaves_under(n.id)
                .into_iter()
                .filter_map(|l| tree.node(l).caption.as_deref())
                .filter(|c| !c.trim().is_empty())
                .map(|c| Step::new(c.trim(), ""))
                .collect();
            (steps.len() >= 2).then(|| Trajectory::new(goal).with_steps(steps))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..eligible.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(count);
    idx.sort_unstable();
    idx.into_iter().map(|i| eligible[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(goal: &str, actions: &[&str]) -> Trajectory {
        Trajectory::new(goal)
            .with_steps(actions.iter().map(|a| Step::new(*a, format!("after {a}"))))
    }

    #[test]
    fn pair_counts_for_two_three_step_trajectories() {
        let corpus = [
            traj("cook", &["a", "b", "c"]),
            traj("clean", &["x", "y", "z"]),
        ];
        let pairs = build_pairs(&corpus, &PairConfig::default()).unwrap();
        let count = |kind| pairs.iter().filter(|p| p.kind == kind).count();
        assert_eq!(count(PairKind::GoodVsBase), 4);
        assert_eq!(count(PairKind::BaseVsBad), 4);
        assert_eq!(count(PairKind::BaseVsShuffled), 2);
        assert!(pairs.iter().all(|p| p.pos_text != p.neg_text));
    }

    #[test]
    fn distractors_come_from_other_goals() {
        let corpus = [
            traj("cook", &["a", "b", "c"]),
            traj("clean", &["x", "y", "z"]),
        ];
        let pairs = build_pairs(&corpus, &PairConfig::default()).unwrap();
        for p in pairs.iter().filter(|p| p.kind == PairKind::BaseVsBad) {
            let foreign = if p.goal_text.starts_with("cook") {
                "xyz"
            } else {
                "abc"
            };
            let last = p.neg_text.lines().rev().nth(1).unwrap();
            let action = last.rsplit(' ').next().unwrap();
            assert!(foreign.contains(action), "{last}");
        }
    }

    #[test]
    fn single_goal_corpus_has_no_distractors() {
        let corpus = [traj("cook", &["a", "b"]), traj("cook", &["c", "d"])];
        assert!(matches!(
            build_pairs(&corpus, &PairConfig::default()),
            Err(CriticError::NoDistractorSource)
        ));
    }

    #[test]
    fn seeded_and_deterministic() {
        let corpus = [
            traj("cook", &["a", "b", "c", "d"]),
            traj("clean", &["x", "y", "z"]),
            traj("fix", &["p", "q"]),
        ];
        let cfg = PairConfig {
            seed: 9,
            ..PairConfig::default()
        };
        assert_eq!(
            build_pairs(&corpus, &cfg).unwrap(),
            build_pairs(&corpus, &cfg).unwrap()
        );
    }

    #[test]
    fn external_rows() {
        let ok = load_external_pairs(r#"{"goal":"q","pos":"a","neg":"b"}"#.as_bytes()).unwrap();
        assert_eq!(ok.len(), 1);
        assert_eq!(ok[0].kind, PairKind::External);
        let same = load_external_pairs(r#"{"goal":"q","pos":"a","neg":"a"}"#.as_bytes());
        assert!(matches!(same, Err(CriticError::BadRow { line: 1, .. })));
        let missing = load_external_pairs("\n{\"goal\":\"q\",\"pos\":\"a\"}".as_bytes());
        assert!(matches!(missing, Err(CriticError::BadRow { line: 2, .. })));
    }

    #[test]
    fn pairs_file_round_trip() {
        let corpus = [
            traj("cook", &["a", "b", "c"]),
            traj("clean", &["x", "y", "z"]),
        ];
        let pairs = build_pairs(&corpus, &PairConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_pairs(&mut buf, &pairs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .lines()
            .next()
            .unwrap()
            .contains("\"kind\":\"good_vs_base\""));
        assert_eq!(read_pairs(buf.as_slice()).unwrap(), pairs);
    }
}
