#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use worldplan_core::arena::{Inventory, InventoryItem};
use worldplan_core::segtree::Frame;
use worldplan_core::{FeatureStream, Step, Trajectory};

const WORDS: &[&str] = &[
    "pour",
    "the",
    "eggs",
    "into",
    "pan",
    "<b>",
    "a-b",
    "--",
    "état",
    "🍅",
    "x:y",
    "</STATE>",
    "<ACTION>",
    "#",
    "1.",
    "*",
    "---",
    "<GOAL_ACHIEVED>",
    "stir",
    "  ",
];

fn line<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..=5);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    words.join(" ").trim().to_string()
}

fn body<R: Rng>(rng: &mut R, allow_empty: bool) -> String {
    if allow_empty && rng.random_bool(0.3) {
        return String::new();
    }
    let n = rng.random_range(1..=3);
    let mut lines = vec![line(rng)];
    for _ in 1..n {
        let indent = if rng.random_bool(0.2) { "  " } else { "" };
        lines.push(format!("{indent}{}", line(rng)));
    }
    lines.join("\n")
}

/// A random trajectory that passes `validate`.
pub fn random_trajectory<R: Rng>(rng: &mut R) -> Trajectory {
    loop {
        let steps: Vec<Step> = (0..rng.random_range(0..=6))
            .map(|_| Step::new(body(rng, false), body(rng, true)))
            .collect();
        let achieved = !steps.is_empty() && rng.random_bool(0.5);
        let t = Trajectory::new(line(rng))
            .with_interpretation(body(rng, true))
            .with_steps(steps)
            .with_achieved(achieved);
        if t.validate().is_ok() {
            return t;
        }
    }
}

/// Frames `[i, i+1)` with the given vectors.
pub fn stream(dim: usize, rows: &[Vec<f64>]) -> FeatureStream {
    let frames = rows
        .iter()
        .enumerate()
        .map(|(i, v)| Frame {
            t0: i as f64,
            t1: (i + 1) as f64,
            v: v.clone(),
        })
        .collect();
    FeatureStream::new(dim, frames).unwrap()
}

/// One goal per (dataset, index); every model has a distinct one-step plan.
pub fn inventory(datasets: &[&str], models: &[&str], goals: usize) -> Inventory {
    let mut items = BTreeMap::new();
    for d in datasets {
        for g in 0..goals {
            let plans = models
                .iter()
                .enumerate()
                .map(|(mi, m)| {
                    let t = Trajectory::new(format!("goal {g}"))
                        .with_steps([Step::new(format!("plan variant {mi}"), "")]);
                    (m.to_string(), t)
                })
                .collect();
            items.insert(
                (d.to_string(), format!("g{g:03}")),
                InventoryItem {
                    goal: format!("goal {g}"),
                    context: String::new(),
                    plans,
                },
            );
        }
    }
    Inventory { items }
}
