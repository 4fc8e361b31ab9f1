//! Separable synthetic corpora: every goal owns a private vocabulary and its
//! goal text mentions all of it, so progress is visible to a bag-of-words
//! embedder while foreign steps are not.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CriticError;
use crate::trajectory::{append_steps, render_critic_text, RenderOptions, Step, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub trajectories: usize,
    pub min_steps: usize,
    pub max_steps: usize,
    pub tokens_per_step: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            trajectories: 600,
            min_steps: 3,
            max_steps: 6,
            tokens_per_step: 3,
            seed: 0,
        }
    }
}

fn word(rng: &mut ChaCha8Rng) -> String {
    (0..8)
        .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
        .collect()
}

pub fn synthetic_corpus(cfg: &SyntheticConfig) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.trajectories)
        .map(|_| {
            let n =
                rng.random_range(cfg.min_steps.max(2)..=cfg.max_steps.max(cfg.min_steps.max(2)));
            let steps: Vec<Step> = (0..n)
                .map(|_| {
                    let words: Vec<String> = (0..cfg.tokens_per_step.max(1))
                        .map(|_| word(&mut rng))
                        .collect();
                    Step::new(words.join(" "), "")
                })
                .collect();
            let goal = steps
                .iter()
                .map(|s| s.action.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            Trajectory::new(goal).with_steps(steps)
        })
        .collect()
}

/// One base prefix with its one-step-longer and distracted variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triplet {
    pub goal: String,
    pub good: String,
    pub base: String,
    pub bad: String,
}

/// A triplet for every cut point of every trajectory; distractor steps are
/// drawn from `pool` entries with a different goal.
pub fn triplets(
    trajs: &[Trajectory],
    pool: &[Trajectory],
    opts: RenderOptions,
    seed: u64,
) -> Result<Vec<Triplet>, CriticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for t in trajs {
        let foreign: Vec<&Trajectory> = pool
            .iter()
            .filter(|o| o.goal != t.goal && !o.steps.is_empty())
            .collect();
        if foreign.is_empty() {
            return Err(CriticError::NoDistractorSource);
        }
        for k in 1..t.steps.len() {
            let (goal, base) = render_critic_text(t, k, opts)?;
            let (_, good) = render_critic_text(t, k + 1, opts)?;
            let src = foreign.choose(&mut rng).expect("nonempty");
            let extra = src.steps[rng.random_range(0..src.steps.len())].clone();
            let bad_t = append_steps(&t.prefix(k)?, &[extra]);
            let (_, bad) = render_critic_text(&bad_t, k + 1, opts)?;
            out.push(Triplet {
                goal,
                good,
                base,
                bad,
            });
        }
    }
    Ok(out)
}
