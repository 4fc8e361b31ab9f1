//! Fixtures shared by the benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use worldplan_core::arena::{Choice, Inventory, InventoryItem};
use worldplan_core::segtree::Frame;
use worldplan_core::{ArenaConfig, ArenaState, FeatureStream, Step, Trajectory};

/// Piecewise-constant features with noise: `frames` one-second frames in
/// blocks of 12.
pub fn feature_stream(frames: usize, dim: usize, seed: u64) -> FeatureStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = vec![0.0; dim];
    let rows = (0..frames)
        .map(|i| {
            if i % 12 == 0 {
                level
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
            Frame {
                t0: i as f64,
                t1: (i + 1) as f64,
                v: level
                    .iter()
                    .map(|v| v + rng.random_range(-0.05..0.05))
                    .collect(),
            }
        })
        .collect();
    FeatureStream::new(dim, rows).expect("valid stream")
}

/// An arena over `models` with one dataset and `goals` goals, plus a log
/// of `battles` decisions made by a seeded coin.
pub fn arena_with_log(
    models: usize,
    goals: usize,
    battles: usize,
) -> (ArenaConfig, Inventory, ArenaState) {
    let names: Vec<String> = (0..models).map(|m| format!("model{m:02}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let items = (0..goals)
        .map(|g| {
            let plans = names
                .iter()
                .map(|m| {
                    let t = Trajectory::new(format!("goal {g}"))
                        .with_steps([Step::new(format!("{m} step"), "")]);
                    (m.clone(), t)
                })
                .collect();
            let item = InventoryItem {
                goal: format!("goal {g}"),
                context: String::new(),
                plans,
            };
            (("d".to_string(), format!("g{g:03}")), item)
        })
        .collect::<BTreeMap<_, _>>();
    let inventory = Inventory { items };
    let cfg = ArenaConfig::new(&refs, &["d"]);
    let mut state = ArenaState::new(cfg.clone(), inventory.clone()).expect("valid arena");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..battles {
        let view = state.next_battle().expect("unlimited inventory");
        let choice = if rng.random_bool(0.5) {
            Choice::A
        } else {
            Choice::B
        };
        state
            .record_choice(&view.battle_id, choice, "bench")
            .expect("fresh battle");
    }
    (cfg, inventory, state)
}
