use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use worldplan_core::arena::{read_log, server, Inventory};
use worldplan_core::critic::pairs::{load_external_pairs, read_pairs, write_pairs, PairConfig};
use worldplan_core::critic::synthetic::{synthetic_corpus, SyntheticConfig};
use worldplan_core::critic::{
    CostModel, Critic, CriticModel, CriticTrainConfig, Embedder, MockHashEmbedder, RemoteEmbedder,
};
use worldplan_core::eval::{
    export_cost_curves, load_gad_cases, load_vpa, load_wp_items, GadReport,
};
use worldplan_core::planner::{CriticScorer, LlmWorldModel, Penalty, PlanScorer, ToyOracle};
use worldplan_core::refine::client::{HttpConfig, HttpTextGen, MockTextGen, RequestGate, TextGen};
use worldplan_core::refine::{extract_windows, to_trajectory};
use worldplan_core::segtree::{
    build_tree_traced, dfs_render_with, load_feature_stream, sample_windows, BuildOptions,
    DfsOptions, WindowConfig,
};
use worldplan_core::{
    build_pairs, chance_accuracy, eval_gad, eval_wp, fleiss_kappa, parse_trajectory, raw_agreement,
    render_trajectory, system1_rollout, system2_plan, vpa_metrics, ArenaConfig, ArenaState,
    CaptionTree, Objective, SearchConfig, SearchMode, ToyWorld, Trajectory, WorldModel,
};

use crate::args::*;
use crate::manifest;

/// Invalid flag combinations detected after parsing; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn load_tree(path: &Path) -> Result<CaptionTree> {
    Ok(CaptionTree::from_json(&read_text(path)?)?)
}

fn load_critic(path: &Path) -> Result<Critic> {
    let model = CriticModel::from_json(&read_text(path)?)
        .with_context(|| format!("loading critic {}", path.display()))?;
    Ok(Critic::from_model(model)?)
}

/// Markup files named directly, plus the `.md` files of named directories
/// (sorted by path).
fn load_trajectories(paths: &[PathBuf]) -> Result<Vec<Trajectory>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            found.retain(|f| f.extension().is_some_and(|e| e == "md"));
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| {
            parse_trajectory(&read_text(f)?).with_context(|| format!("parsing {}", f.display()))
        })
        .collect()
}

pub fn segment(a: &SegmentArgs) -> Result<()> {
    let stream = load_feature_stream(open(&a.features)?)?;
    let (tree, merges) = build_tree_traced(
        &stream,
        BuildOptions {
            leaf_frames: a.leaf_frames,
        },
    )?;
    write_text(&a.out, &tree.to_json())?;
    manifest::write(&a.out, "segment", a, &[&a.features])?;
    println!(
        "{} frames -> {} nodes ({} merges)",
        stream.len(),
        tree.len(),
        merges.len()
    );
    Ok(())
}

pub fn tree_render(a: &TreeRenderArgs) -> Result<()> {
    let tree = load_tree(&a.tree)?;
    if let Some(n) = a.node.filter(|&n| n >= tree.len()) {
        bail!("node {n} is not in the tree ({} nodes)", tree.len());
    }
    let text = dfs_render_with(
        &tree,
        &DfsOptions {
            root: a.node,
            min_duration: a.min_duration,
            labels: None,
        },
    );
    write_text(&a.out, &text)?;
    manifest::write(&a.out, "tree-render", a, &[&a.tree])
}

pub fn tree_windows(a: &TreeWindowsArgs) -> Result<()> {
    let tree = load_tree(&a.tree)?;
    let windows: Vec<_> = sample_windows(
        &tree,
        WindowConfig {
            count: a.count,
            min_duration: a.min_duration,
        },
    )
    .into_iter()
    .map(|id| {
        let n = tree.node(id);
        json!({ "node": id, "start": n.start, "end": n.end, "depth": tree.depth(id) })
    })
    .collect();
    write_json(&a.out, &windows)?;
    manifest::write(&a.out, "tree-windows", a, &[&a.tree])?;
    println!("{} windows", windows.len());
    Ok(())
}

pub fn refine(a: &RefineArgs) -> Result<()> {
    let tree = load_tree(&a.tree)?;
    let extra = match &a.extra_info {
        Some(p) => read_text(p)?.trim().to_string(),
        None => String::new(),
    };
    let client: Box<dyn TextGen> = match &a.mock {
        Some(p) => Box::new(MockTextGen::from_fixture(p)?),
        None => Box::new(HttpTextGen::new(
            HttpConfig::from_env()?,
            RequestGate::new(a.max_in_flight.max(1)),
        )?),
    };
    let windows = WindowConfig {
        count: a.windows,
        min_duration: a.min_duration,
    };
    let results = extract_windows(client.as_ref(), &tree, windows, &extra, a.iterations, None);
    let mut ok = 0;
    let records: Vec<_> = results
        .into_iter()
        .map(|w| {
            let base = json!({ "node": w.node, "start": w.start, "end": w.end });
            let outcome = match w.result {
                Ok(o) => o,
                Err(e) => return json!({ "window": base, "error": e.to_string() }),
            };
            match to_trajectory(&outcome.extraction, w.start, w.end) {
                Ok((t, spans)) => {
                    ok += 1;
                    json!({
                        "window": base,
                        "trajectory": render_trajectory(&t),
                        "spans": spans,
                        "extraction": outcome.extraction,
                        "audit": outcome.audit,
                        "prompt_version": outcome.prompt_version,
                    })
                }
                Err(e) => json!({
                    "window": base,
                    "error": e.to_string(),
                    "extraction": outcome.extraction,
                    "audit": outcome.audit,
                }),
            }
        })
        .collect();
    let total = records.len();
    write_json(&a.out, &records)?;
    let mut inputs: Vec<&Path> = vec![&a.tree];
    inputs.extend(a.extra_info.as_deref());
    inputs.extend(a.mock.as_deref());
    manifest::write(&a.out, "refine", a, &inputs)?;
    println!("{ok}/{total} windows produced a valid plan");
    if ok == 0 {
        bail!("no window produced a valid plan");
    }
    Ok(())
}

pub fn pairs_build(a: &PairsBuildArgs) -> Result<()> {
    let trajs = match a.synthetic {
        Some(n) => synthetic_corpus(&SyntheticConfig {
            trajectories: n,
            seed: a.seed,
            ..Default::default()
        }),
        None => load_trajectories(&a.trajectories)?,
    };
    let mut pairs = build_pairs(
        &trajs,
        &PairConfig {
            seed: a.seed,
            ..Default::default()
        },
    )?;
    if let Some(p) = &a.external {
        pairs.extend(load_external_pairs(open(p)?)?);
    }
    let mut w = create(&a.out)?;
    write_pairs(&mut w, &pairs)?;
    drop(w);
    let mut inputs: Vec<&Path> = a.trajectories.iter().map(PathBuf::as_path).collect();
    inputs.extend(a.external.as_deref());
    manifest::write(&a.out, "pairs-build", a, &inputs)?;
    println!("{} trajectories -> {} pairs", trajs.len(), pairs.len());
    Ok(())
}

pub fn critic_train(a: &CriticTrainArgs) -> Result<()> {
    let pairs = read_pairs(open(&a.pairs)?)?;
    let embedder: Box<dyn Embedder> = match a.embedder {
        EmbedderChoice::Mock => Box::new(MockHashEmbedder::new(a.dim)?),
        EmbedderChoice::Remote => Box::new(RemoteEmbedder::from_env(a.dim)?),
    };
    let cfg = CriticTrainConfig {
        margin: a.margin,
        lambda: a.lambda,
        batch_size: a.batch_size,
        epochs: a.epochs,
        learning_rate: a.lr,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let init = CriticModel::init(embedder.spec(), a.hidden, a.seed);
    let report = worldplan_core::train(&init, embedder.as_ref(), &pairs, &cfg)?;
    write_text(&a.out, &report.model.to_json())?;
    manifest::write(&a.out, "critic-train", a, &[&a.pairs])?;
    let last = report.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "{} pairs, {} steps, final batch loss {last:.4}",
        pairs.len(),
        report.losses.len()
    );
    Ok(())
}

pub fn critic_score(a: &CriticScoreArgs) -> Result<()> {
    let critic = load_critic(&a.model)?;
    let t = parse_trajectory(&read_text(&a.trajectory)?)?;
    let ks: Vec<usize> = if a.prefixes {
        (1..=t.steps.len()).collect()
    } else {
        vec![t.steps.len()]
    };
    let opts = a.render.options();
    let scores = ks
        .iter()
        .map(|&k| Ok(json!({ "k": k, "cost": critic.prefix_cost(&t, k, opts)? })))
        .collect::<Result<Vec<_>>>()?;
    write_json(&a.out, &json!({ "goal": t.goal, "scores": scores }))?;
    manifest::write(&a.out, "critic-score", a, &[&a.model, &a.trajectory])?;
    for s in &scores {
        println!("k={} cost={}", s["k"], s["cost"]);
    }
    Ok(())
}

struct World {
    model: Box<dyn WorldModel>,
    toy: Option<ToyWorld>,
    goal: String,
    context: String,
}

fn load_world(a: &WorldArgs) -> Result<World> {
    let context = match &a.context {
        Some(p) => read_text(p)?.trim().to_string(),
        None => String::new(),
    };
    if let Some(path) = &a.world {
        let toy = ToyWorld::from_json(&read_text(path)?)?;
        let goal = a.goal.clone().unwrap_or_else(|| {
            format!(
                "reach {}",
                worldplan_core::planner::toy::state_text(&toy.goal)
            )
        });
        return Ok(World {
            model: Box::new(toy.clone()),
            toy: Some(toy),
            goal,
            context,
        });
    }
    let goal = a.goal.clone().ok_or_else(|| usage("--llm needs --goal"))?;
    let client = HttpTextGen::new(HttpConfig::from_env()?, RequestGate::new(1))?;
    Ok(World {
        model: Box::new(LlmWorldModel::new(Arc::new(client))),
        toy: None,
        goal,
        context,
    })
}

fn world_inputs(a: &WorldArgs) -> Vec<&Path> {
    a.world
        .iter()
        .chain(&a.context)
        .map(PathBuf::as_path)
        .collect()
}

pub fn plan_sys1(a: &PlanSys1Args) -> Result<()> {
    let w = load_world(&a.world)?;
    let t = system1_rollout(w.model.as_ref(), &w.goal, &w.context, a.horizon)?;
    write_text(&a.out, &render_trajectory(&t))?;
    manifest::write(&a.out, "plan-sys1", a, &world_inputs(&a.world))?;
    println!("{} steps, achieved={}", t.steps.len(), t.achieved);
    Ok(())
}

pub fn plan_sys2(a: &PlanSys2Args) -> Result<()> {
    let w = load_world(&a.world)?;
    let critic = a.critic.as_deref().map(load_critic).transpose()?;
    let scorer: Box<dyn PlanScorer + '_> = match (&critic, &w.toy) {
        (Some(c), _) => Box::new(CriticScorer {
            critic: c,
            render: a.render.options(),
        }),
        (None, Some(toy)) => Box::new(ToyOracle(toy)),
        (None, None) => return Err(usage("--oracle needs a toy --world")),
    };
    let mut penalties: Vec<Penalty> = a
        .forbidden
        .iter()
        .map(|word| Penalty::forbidden_word(word.clone(), a.penalty_weight))
        .collect();
    if a.no_repeats {
        penalties.push(Penalty::repeated_action(a.penalty_weight));
    }
    let cfg = SearchConfig {
        num_candidates: a.candidates,
        proposals: a.proposals,
        beam_width: a.beam,
        max_depth: a.horizon,
        mode: match a.mode {
            ModeChoice::Full => SearchMode::FullRollouts,
            ModeChoice::Beam => SearchMode::BeamPartial,
        },
        objective: if a.maximize {
            Objective::Maximize
        } else {
            Objective::Minimize
        },
        penalties,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let ranked = system2_plan(w.model.as_ref(), scorer.as_ref(), &w.goal, &w.context, &cfg)?;
    ranked.write_to_dir(&a.out)?;
    let mut inputs = world_inputs(&a.world);
    inputs.extend(a.critic.as_deref());
    manifest::write(&a.out, "plan-sys2", a, &inputs)?;
    let best = ranked.best();
    println!(
        "{} candidates; best cost {:.4} ({} steps, achieved={})",
        ranked.candidates.len(),
        best.cost,
        best.trajectory.steps.len(),
        best.trajectory.achieved
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct GadOutput {
    #[serde(flatten)]
    report: GadReport,
    chance_accuracy: f64,
}

pub fn eval_gad_cmd(a: &EvalGadArgs) -> Result<()> {
    let cases = load_gad_cases(open(&a.cases)?)?;
    let critic = load_critic(&a.model)?;
    let report = eval_gad(&critic, &cases, a.render.options())?;
    let chance = chance_accuracy(&cases)?;
    println!(
        "GAD accuracy {:.1}% over {} cases (chance {:.1}%)",
        100.0 * report.accuracy,
        cases.len(),
        100.0 * chance
    );
    write_json(
        &a.out,
        &GadOutput {
            report,
            chance_accuracy: chance,
        },
    )?;
    manifest::write(&a.out, "eval-gad", a, &[&a.cases, &a.model])
}

pub fn eval_vpa_cmd(a: &EvalVpaArgs) -> Result<()> {
    let preds = load_vpa(open(&a.preds)?)?;
    if let Some(h) = a.horizon {
        if let Some(i) = preds.iter().position(|p| p.gold.len() != h) {
            bail!(
                "row {} has horizon {}, expected {h}",
                i + 1,
                preds[i].gold.len()
            );
        }
    }
    let m = vpa_metrics(&preds)?;
    write_json(
        &a.out,
        &json!({ "n": preds.len(), "sr": m.sr, "macc": m.macc, "miou": m.miou }),
    )?;
    manifest::write(&a.out, "eval-vpa", a, &[&a.preds])?;
    println!(
        "SR {:.2}  mAcc {:.2}  mIoU {:.2}",
        100.0 * m.sr,
        100.0 * m.macc,
        100.0 * m.miou
    );
    Ok(())
}

pub fn eval_wp_cmd(a: &EvalWpArgs) -> Result<()> {
    let items = load_wp_items(open(&a.items)?)?;
    let critic = load_critic(&a.model)?;
    let report = eval_wp(&critic, &items)?;
    write_json(&a.out, &report)?;
    manifest::write(&a.out, "eval-wp", a, &[&a.items, &a.model])?;
    println!(
        "accuracy {:.1}% over {} items",
        100.0 * report.accuracy,
        items.len()
    );
    Ok(())
}

pub fn curves_export(a: &CurvesExportArgs) -> Result<()> {
    let report: GadReport = serde_json::from_str(&read_text(&a.report)?)
        .with_context(|| format!("parsing {}", a.report.display()))?;
    let mut w = create(&a.out)?;
    export_cost_curves(&report, &mut w)?;
    drop(w);
    manifest::write(&a.out, "curves-export", a, &[&a.report])
}

fn arena_config(a: &ArenaArgs, inv: &Inventory) -> ArenaConfig {
    let mut cfg = ArenaConfig::from_inventory(inv);
    cfg.seed = a.seed;
    cfg.annotations_per_item = a.annotations_per_item;
    cfg
}

pub fn arena_serve(a: &ArenaServeArgs) -> Result<()> {
    let inv = Inventory::load(&a.arena.inventory)?;
    let cfg = arena_config(&a.arena, &inv);
    let state = ArenaState::open(cfg, inv, &a.arena.log)?;
    manifest::write(&a.arena.log, "arena-serve", a, &[&a.arena.inventory])?;
    println!(
        "{} setups, {} battles replayed; listening on {}",
        state.setups().len(),
        state.records().len(),
        a.addr
    );
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(Arc::new(Mutex::new(state)), a.addr))?;
    Ok(())
}

pub fn arena_report(a: &ArenaReportArgs) -> Result<()> {
    let inv = Inventory::load(&a.arena.inventory)?;
    let cfg = arena_config(&a.arena, &inv);
    let mut state = ArenaState::new(cfg, inv)?;
    state.replay(read_log(open(&a.arena.log)?)?)?;
    let board = state.leaderboard();
    let counts = state.agreement_counts();
    let kappa = fleiss_kappa(&counts).ok();
    let raw = raw_agreement(&counts).ok();
    write_json(
        &a.out,
        &json!({
            "battles": state.records().len(),
            "leaderboard": board,
            "agreement": { "items": counts.len(), "fleiss_kappa": kappa, "raw_agreement_pct": raw },
        }),
    )?;
    manifest::write(
        &a.out,
        "arena-report",
        a,
        &[&a.arena.inventory, &a.arena.log],
    )?;
    print!("{}", board.render_text());
    match (kappa, raw) {
        (Some(k), Some(r)) => println!(
            "agreement over {} items: kappa {k:.3}, raw {r:.2}%",
            counts.len()
        ),
        _ => println!("agreement: not enough items judged by two or more annotators"),
    }
    Ok(())
}
