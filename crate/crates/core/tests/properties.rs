mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use worldplan_core::arena::Choice;
use worldplan_core::critic::model::{pair_loss, EmbeddedPair};
use worldplan_core::critic::{CriticModel, CriticTrainConfig, EmbedderSpec, FnCost};
use worldplan_core::eval::{eval_wp, VpaPrediction, WpItem};
use worldplan_core::planner::{FnScorer, Penalty, ToyOracle};
use worldplan_core::segtree::{build_tree_traced, ward_delta, BuildOptions, SegStat};
use worldplan_core::{
    fleiss_kappa, parse_trajectory, raw_agreement, render_trajectory, shuffle_steps, system2_plan,
    vpa_metrics, ArenaConfig, ArenaState, CaptionTree, PlanScorer, SearchConfig, SearchMode, Step,
    ToyWorld, Trajectory,
};

fn rows(max_len: usize, max_dim: usize) -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
    (1..=max_dim).prop_flat_map(move |dim| {
        let row = prop::collection::vec(-10.0..10.0f64, dim);
        (Just(dim), prop::collection::vec(row, 1..=max_len))
    })
}

fn stat(v: &[f64], n: usize) -> SegStat {
    SegStat {
        n,
        sum: v.iter().map(|x| x * n as f64).collect(),
        sumsq: v.iter().map(|x| x * x).sum::<f64>() * n as f64,
        start: 0.0,
        end: 1.0,
    }
}

/// Nodes at depth `k`, plus shallower leaves, in time order.
fn frontier(tree: &CaptionTree, k: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut stack = vec![(tree.root(), 0)];
    while let Some((id, depth)) = stack.pop() {
        let node = tree.node(id);
        if depth == k || node.children.is_empty() {
            out.push((node.start, node.end));
        } else {
            stack.extend(node.children.iter().rev().map(|&c| (c, depth + 1)));
        }
    }
    out
}

fn direct_sse(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    rows.iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .map(|(x, m)| (x - m).powi(2))
                .sum::<f64>()
        })
        .sum()
}

fn pairs(dim: usize) -> impl Strategy<Value = Vec<EmbeddedPair>> {
    let v = prop::collection::vec(-1.0..1.0f64, dim);
    prop::collection::vec((v.clone(), v.clone(), v), 1..6).prop_map(|ps| {
        ps.into_iter()
            .map(|(goal, pos, neg)| EmbeddedPair { goal, pos, neg })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parse_inverts_render(seed in any::<u64>()) {
        let t = common::random_trajectory(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(parse_trajectory(&render_trajectory(&t)).unwrap(), t);
    }

    #[test]
    fn shuffle_permutes_without_identity(seed in any::<u64>(), n in 2usize..8) {
        let t = Trajectory::new("g").with_steps((0..n).map(|i| Step::new(format!("a{}", i % 3), "")));
        let s = shuffle_steps(&t, seed).unwrap();
        prop_assert_ne!(&s.steps, &t.steps);
        let mut a: Vec<_> = s.steps.iter().map(|x| x.action.clone()).collect();
        let mut b: Vec<_> = t.steps.iter().map(|x| x.action.clone()).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn merge_deltas_account_for_total_sse((dim, rows) in rows(64, 8)) {
        let (_, merges) = build_tree_traced(&common::stream(dim, &rows), BuildOptions::default()).unwrap();
        let total: f64 = merges.iter().map(|m| m.delta).sum();
        let sse = direct_sse(&rows);
        prop_assert!((total - sse).abs() <= 1e-9 * sse.abs().max(total.abs()).max(1e-300));
        prop_assert!(merges.iter().all(|m| m.delta >= 0.0));
    }

    #[test]
    fn every_level_tiles_the_stream((dim, rows) in rows(40, 3)) {
        let (tree, _) = build_tree_traced(&common::stream(dim, &rows), BuildOptions::default()).unwrap();
        let max_depth = (0..tree.len()).map(|id| tree.depth(id)).max().unwrap();
        for k in 0..=max_depth {
            let spans = frontier(&tree, k);
            prop_assert_eq!(spans[0].0, 0.0);
            prop_assert_eq!(spans.last().unwrap().1, rows.len() as f64);
            prop_assert!(spans.windows(2).all(|w| w[0].1 == w[1].0));
        }
    }

    #[test]
    fn ward_is_symmetric_and_nonnegative(
        a in prop::collection::vec(-5.0..5.0f64, 3),
        b in prop::collection::vec(-5.0..5.0f64, 3),
        na in 1usize..20,
        nb in 1usize..20,
    ) {
        let (x, y) = (stat(&a, na), stat(&b, nb));
        prop_assert_eq!(ward_delta(&x, &y), ward_delta(&y, &x));
        prop_assert!(ward_delta(&x, &y) >= 0.0);
    }

    #[test]
    fn batch_loss_ignores_pair_order(batch in pairs(3), seed in any::<u64>(), rot in 0usize..6) {
        let model = CriticModel::init(EmbedderSpec::mock(3), 4, seed);
        let cfg = CriticTrainConfig::default();
        let base = model.mean_loss_embedded(&batch, &cfg).unwrap();
        let mut moved = batch.clone();
        moved.rotate_left(rot % batch.len());
        moved.reverse();
        let doubled: Vec<EmbeddedPair> = batch.iter().chain(&batch).cloned().collect();
        prop_assert!((model.mean_loss_embedded(&moved, &cfg).unwrap() - base).abs() < 1e-12);
        prop_assert!((model.mean_loss_embedded(&doubled, &cfg).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn shifting_both_costs_only_moves_the_centering_term(
        cp in -3.0..3.0f64, cn in -3.0..3.0f64, shift in -3.0..3.0f64,
    ) {
        let cfg = CriticTrainConfig::default();
        let center = |p: f64, n: f64| cfg.lambda * (p * p + n * n);
        let hinge = |p: f64, n: f64| pair_loss(p, n, &cfg) - center(p, n);
        prop_assert!((hinge(cp, cn) - hinge(cp + shift, cn + shift)).abs() < 1e-9);
    }

    #[test]
    fn scaling_costs_keeps_the_choice(seed in 0u64..500, scale in 0.1..10.0f64) {
        let w = ToyWorld::random(seed, 4, 3);
        prop_assume!(!w.applicable(&w.initial).is_empty());
        let cfg = SearchConfig { num_candidates: 12, max_depth: 4, seed, ..Default::default() };
        let oracle = ToyOracle(&w);
        let scaled = FnScorer(|t: &Trajectory| scale * oracle.score(t).unwrap());
        for mode in [SearchMode::FullRollouts, SearchMode::BeamPartial] {
            let cfg = SearchConfig { mode, ..cfg.clone() };
            let a = system2_plan(&w, &oracle, "g", "", &cfg).unwrap();
            let b = system2_plan(&w, &scaled, "g", "", &cfg).unwrap();
            prop_assert_eq!(a.best().index, b.best().index);
        }
    }

    #[test]
    fn zero_weight_penalties_change_nothing(seed in 0u64..500) {
        let w = ToyWorld::random(seed, 4, 4);
        prop_assume!(!w.applicable(&w.initial).is_empty());
        let plain = SearchConfig { num_candidates: 10, max_depth: 4, seed, ..Default::default() };
        let penalized = SearchConfig {
            penalties: vec![
                Penalty::forbidden_word("act1", 0.0),
                Penalty::repeated_action(0.0),
                Penalty::longer_than(1, 0.0),
            ],
            ..plain.clone()
        };
        let a = system2_plan(&w, &ToyOracle(&w), "g", "", &plain).unwrap();
        let b = system2_plan(&w, &ToyOracle(&w), "g", "", &penalized).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn wp_accuracy_ignores_candidate_order(
        costs in prop::collection::vec(prop::collection::vec(0u32..1000, 4), 1..10),
        correct in prop::collection::vec(0usize..4, 10),
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        prop_assume!(costs.iter().all(|c| (0..4).all(|i| (0..i).all(|j| c[i] != c[j]))));
        let mut table = HashMap::new();
        let items: Vec<WpItem> = costs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let candidates: Vec<Vec<String>> = (0..4).map(|j| vec![format!("item {i} cand {j}")]).collect();
                for (j, cost) in c.iter().enumerate() {
                    table.insert(format!("1. Action: item {i} cand {j}"), *cost as f64);
                }
                WpItem { goal: format!("goal {i}"), candidates, correct: correct[i] }
            })
            .collect();
        let permuted: Vec<WpItem> = items
            .iter()
            .map(|it| WpItem {
                goal: it.goal.clone(),
                candidates: perm.iter().map(|&j| it.candidates[j].clone()).collect(),
                correct: perm.iter().position(|&j| j == it.correct).unwrap(),
            })
            .collect();
        let critic = FnCost(|_: &str, text: &str| table[text]);
        let a = eval_wp(&critic, &items).unwrap();
        let b = eval_wp(&critic, &permuted).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
    }

    #[test]
    fn vpa_metrics_are_bounded(
        horizon in 1usize..6,
        raw in prop::collection::vec((prop::collection::vec(0u8..4, 6), prop::collection::vec(0u8..4, 6)), 1..12),
    ) {
        let preds: Vec<VpaPrediction> = raw
            .into_iter()
            .map(|(p, g)| VpaPrediction {
                pred: p[..horizon].iter().map(|x| x.to_string()).collect(),
                gold: g[..horizon].iter().map(|x| x.to_string()).collect(),
            })
            .collect();
        let m = vpa_metrics(&preds).unwrap();
        prop_assert!(m.sr <= m.macc);
        for x in [m.sr, m.macc, m.miou] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn elo_is_zero_sum_after_every_choice(choices in prop::collection::vec(any::<bool>(), 1..200), seed in any::<u64>()) {
        let models = ["m1", "m2", "m3"];
        let mut cfg = ArenaConfig::new(&models, &["d"]);
        cfg.seed = seed;
        let mut arena = ArenaState::new(cfg, common::inventory(&["d"], &models, 2)).unwrap();
        for a_wins in choices {
            let view = arena.next_battle().unwrap();
            arena.record_choice(&view.battle_id, if a_wins { Choice::A } else { Choice::B }, "x").unwrap();
            let total: f64 = arena.ratings().values().sum();
            prop_assert!((total - 3000.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn agreement_stays_in_range(votes in prop::collection::vec(0u32..=4, 2..10)) {
        let counts: Vec<Vec<u32>> = votes.iter().map(|&a| vec![a, 4 - a]).collect();
        let raw = raw_agreement(&counts).unwrap();
        prop_assert!((0.0..=100.0).contains(&raw));
        if let Ok(k) = fleiss_kappa(&counts) {
            prop_assert!(k <= 1.0 + 1e-12);
        }
    }
}
