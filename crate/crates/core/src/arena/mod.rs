//! Pairwise preference arena: uniform battle scheduling, Elo ratings,
//! per-dataset win rates, annotator agreement, and an append-only battle log.

pub mod server;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{parse_trajectory, Step, Trajectory};

pub const ENV_ARENA_DATA: &str = "WM_ARENA_DATA";
pub const ENV_ARENA_LOG: &str = "WM_ARENA_LOG";
pub const ENV_ARENA_SEED: &str = "WM_ARENA_SEED";

pub const DEFAULT_RATING: f64 = 1000.0;
pub const DEFAULT_K: f64 = 32.0;
pub const CONTEXT_FILE: &str = "context.txt";

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("invalid arena config: {0}")]
    Config(String),
    #[error("no battles left to serve")]
    Exhausted,
    #[error("unknown battle `{0}`")]
    UnknownBattle(String),
    #[error("winner must be \"A\" or \"B\", got {0:?}")]
    InvalidWinner(String),
    #[error("battle `{0}` was already decided")]
    DuplicateSubmission(String),
    #[error("battle log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("inventory {path}: {reason}")]
    Inventory { path: PathBuf, reason: String },
    #[error("agreement needs at least {0}")]
    Agreement(&'static str),
    #[error("agreement is undefined: every rating falls in one category")]
    DegenerateMarginals,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Expected score of a player rated `r` against `opponent`.
pub fn elo_expected(r: f64, opponent: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((opponent - r) / 400.0))
}

/// Ratings after `winner` beats `loser`.
pub fn elo_update(winner: f64, loser: f64, k: f64) -> (f64, f64) {
    let delta = k * (1.0 - elo_expected(winner, loser));
    (winner + delta, loser - delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaConfig {
    pub initial_rating: f64,
    pub k: f64,
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    pub seed: u64,
    pub pending_ttl_secs: i64,
    /// Times one (setup, goal) item may be served; `None` means unlimited.
    pub annotations_per_item: Option<usize>,
}

impl ArenaConfig {
    pub fn new(models: &[&str], datasets: &[&str]) -> Self {
        Self {
            initial_rating: DEFAULT_RATING,
            k: DEFAULT_K,
            models: models.iter().map(|s| s.to_string()).collect(),
            datasets: datasets.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            pending_ttl_secs: 30 * 60,
            annotations_per_item: None,
        }
    }

    /// Models and datasets found in an inventory.
    pub fn from_inventory(inv: &Inventory) -> Self {
        let mut cfg = Self::new(&[], &[]);
        cfg.models = inv.models().into_iter().collect();
        cfg.datasets = inv.datasets().into_iter().collect();
        cfg
    }

    pub fn validate(&self) -> Result<(), ArenaError> {
        let models: BTreeSet<&String> = self.models.iter().collect();
        if models.len() < 2 || models.len() != self.models.len() {
            return Err(ArenaError::Config(
                "need at least two distinct models".into(),
            ));
        }
        if !(self.k > 0.0) || !self.k.is_finite() || !self.initial_rating.is_finite() {
            return Err(ArenaError::Config(
                "K must be positive and ratings finite".into(),
            ));
        }
        if self.datasets.is_empty() {
            return Err(ArenaError::Config("need at least one dataset".into()));
        }
        Ok(())
    }
}

/// A dataset and an unordered model pair (`a < b`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Setup {
    pub dataset: String,
    pub a: String,
    pub b: String,
}

impl Setup {
    pub fn new(dataset: &str, x: &str, y: &str) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        Self {
            dataset: dataset.to_string(),
            a: a.to_string(),
            b: b.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InventoryItem {
    pub goal: String,
    pub context: String,
    pub plans: BTreeMap<String, Trajectory>,
}

/// Plans indexed by dataset, goal id and model.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Inventory {
    pub items: BTreeMap<(String, String), InventoryItem>,
}

impl Inventory {
    /// Reads `<dir>/<dataset>/<goal_id>/<model>.md`, plus an optional
    /// `context.txt` per goal.
    pub fn load(dir: &Path) -> Result<Self, ArenaError> {
        let err = |path: &Path, reason: String| ArenaError::Inventory {
            path: path.to_path_buf(),
            reason,
        };
        let mut items = BTreeMap::new();
        for dataset in sorted_dirs(dir)? {
            let dataset_name = file_name(&dataset);
            for goal_dir in sorted_dirs(&dataset)? {
                let goal_id = file_name(&goal_dir);
                let mut plans = BTreeMap::new();
                let mut entries: Vec<PathBuf> = std::fs::read_dir(&goal_dir)?
                    .map(|e| e.map(|e| e.path()))
                    .collect::<Result<_, _>>()?;
                entries.sort();
                for path in entries {
                    if path.extension().and_then(|e| e.to_str()) != Some("md") {
                        continue;
                    }
                    let model = path
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or_default()
                        .to_string();
                    let text = std::fs::read_to_string(&path)?;
                    let t = parse_trajectory(&text).map_err(|e| err(&path, e.to_string()))?;
                    plans.insert(model, t);
                }
                let Some(first) = plans.values().next() else {
                    continue;
                };
                let goal = first.goal.clone();
                let ctx_path = goal_dir.join(CONTEXT_FILE);
                let context = if ctx_path.exists() {
                    std::fs::read_to_string(&ctx_path)?.trim().to_string()
                } else {
                    String::new()
                };
                items.insert(
                    (dataset_name.clone(), goal_id),
                    InventoryItem {
                        goal,
                        context,
                        plans,
                    },
                );
            }
        }
        if items.is_empty() {
            return Err(err(dir, "no plans found".into()));
        }
        Ok(Self { items })
    }

    pub fn models(&self) -> BTreeSet<String> {
        self.items
            .values()
            .flat_map(|i| i.plans.keys().cloned())
            .collect()
    }

    pub fn datasets(&self) -> BTreeSet<String> {
        self.items.keys().map(|(d, _)| d.clone()).collect()
    }

    /// Goal ids in `setup.dataset` that have plans from both models.
    fn goals_for(&self, setup: &Setup) -> Vec<&str> {
        self.items
            .iter()
            .filter(|((d, _), item)| {
                *d == setup.dataset
                    && item.plans.contains_key(&setup.a)
                    && item.plans.contains_key(&setup.b)
            })
            .map(|((_, g), _)| g.as_str())
            .collect()
    }
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>, ArenaError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

impl std::str::FromStr for Choice {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(Choice::A),
            "B" => Ok(Choice::B),
            other => Err(ArenaError::InvalidWinner(other.to_string())),
        }
    }
}

/// What the annotator sees: no model names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BattleView {
    pub battle_id: String,
    pub goal: String,
    pub context_ref: String,
    pub plan_a: Vec<Step>,
    pub plan_b: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pending {
    setup: Setup,
    goal_id: String,
    model_a: String,
    model_b: String,
    expires: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BattleRecord {
    pub seq: u64,
    pub battle_id: String,
    pub dataset: String,
    pub goal_id: String,
    /// Model shown as plan A.
    pub model_a: String,
    pub model_b: String,
    pub winner: String,
    pub annotator: String,
    pub timestamp: String,
}

impl BattleRecord {
    pub fn setup(&self) -> Setup {
        Setup::new(&self.dataset, &self.model_a, &self.model_b)
    }

    pub fn loser(&self) -> &str {
        if self.winner == self.model_a {
            &self.model_b
        } else {
            &self.model_a
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetTally {
    pub wins: u64,
    pub battles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub model: String,
    pub elo: f64,
    pub elo_display: i64,
    pub battles: u64,
    /// Percent per dataset; `None` when the model has no battles there.
    pub win_rates: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub datasets: Vec<String>,
    pub rows: Vec<LeaderboardRow>,
}

impl Leaderboard {
    /// Fixed-width text table; undefined win rates print as an em dash.
    pub fn render_text(&self) -> String {
        let mut header = format!("{:<24} {:>6} {:>8}", "model", "elo", "battles");
        for d in &self.datasets {
            header.push_str(&format!(" {:>12}", d));
        }
        let mut lines = vec![header];
        for r in &self.rows {
            let mut line = format!("{:<24} {:>6} {:>8}", r.model, r.elo_display, r.battles);
            for d in &self.datasets {
                let cell = match r.win_rates.get(d).copied().flatten() {
                    Some(p) => format!("{p:.1}"),
                    None => "\u{2014}".to_string(),
                };
                line.push_str(&format!(" {cell:>12}"));
            }
            lines.push(line);
        }
        lines.join("\n") + "\n"
    }
}

/// Pure fold over the battle log plus scheduling state.
#[derive(Debug)]
pub struct ArenaState {
    cfg: ArenaConfig,
    inventory: Inventory,
    setups: Vec<Setup>,
    ratings: BTreeMap<String, f64>,
    served: HashMap<Setup, u64>,
    item_served: HashMap<(Setup, String), u64>,
    tallies: BTreeMap<(String, String), DatasetTally>,
    /// (setup, goal id) -> annotator -> winning model, in log order.
    annotations: BTreeMap<(Setup, String), Vec<(String, String)>>,
    pending: BTreeMap<String, Pending>,
    decided: BTreeSet<String>,
    records: Vec<BattleRecord>,
    rng: ChaCha8Rng,
    log: Option<File>,
}

impl ArenaState {
    pub fn new(cfg: ArenaConfig, inventory: Inventory) -> Result<Self, ArenaError> {
        cfg.validate()?;
        let mut models = cfg.models.clone();
        models.sort();
        let mut setups = Vec::new();
        for d in &cfg.datasets {
            for (i, a) in models.iter().enumerate() {
                for b in &models[i + 1..] {
                    setups.push(Setup::new(d, a, b));
                }
            }
        }
        Ok(Self {
            ratings: cfg
                .models
                .iter()
                .map(|m| (m.clone(), cfg.initial_rating))
                .collect(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            inventory,
            setups,
            served: HashMap::new(),
            item_served: HashMap::new(),
            tallies: BTreeMap::new(),
            annotations: BTreeMap::new(),
            pending: BTreeMap::new(),
            decided: BTreeSet::new(),
            records: Vec::new(),
            log: None,
        })
    }

    /// Replays `log_path` if it exists, then appends new decisions to it.
    pub fn open(
        cfg: ArenaConfig,
        inventory: Inventory,
        log_path: &Path,
    ) -> Result<Self, ArenaError> {
        let mut state = Self::new(cfg, inventory)?;
        if log_path.exists() {
            let records = read_log(BufReader::new(File::open(log_path)?))?;
            state.replay(records)?;
        }
        state.log = Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(log_path)?,
        );
        Ok(state)
    }

    /// Applies records in order; `seq` must continue the current log.
    pub fn replay<I: IntoIterator<Item = BattleRecord>>(
        &mut self,
        records: I,
    ) -> Result<(), ArenaError> {
        for (i, r) in records.into_iter().enumerate() {
            let expected = self.records.len() as u64 + 1;
            let bad = |reason: String| ArenaError::CorruptLog {
                line: i + 1,
                reason,
            };
            if r.seq != expected {
                return Err(bad(format!("seq {} where {expected} was expected", r.seq)));
            }
            for m in [&r.model_a, &r.model_b] {
                if !self.ratings.contains_key(m) {
                    return Err(bad(format!("unknown model `{m}`")));
                }
            }
            if r.model_a == r.model_b || (r.winner != r.model_a && r.winner != r.model_b) {
                return Err(bad("winner is not one of the two models".into()));
            }
            if self.decided.contains(&r.battle_id) {
                return Err(bad(format!("battle `{}` appears twice", r.battle_id)));
            }
            self.apply(r);
        }
        Ok(())
    }

    fn apply(&mut self, r: BattleRecord) {
        let setup = r.setup();
        let loser = r.loser().to_string();
        let (w, l) = elo_update(self.ratings[&r.winner], self.ratings[&loser], self.cfg.k);
        self.ratings.insert(r.winner.clone(), w);
        self.ratings.insert(loser.clone(), l);
        *self.served.entry(setup.clone()).or_default() += 1;
        *self
            .item_served
            .entry((setup.clone(), r.goal_id.clone()))
            .or_default() += 1;
        for m in [&r.winner, &loser] {
            let t = self
                .tallies
                .entry((m.clone(), r.dataset.clone()))
                .or_default();
            t.battles += 1;
            if *m == r.winner {
                t.wins += 1;
            }
        }
        let votes = self
            .annotations
            .entry((setup, r.goal_id.clone()))
            .or_default();
        if !votes.iter().any(|(a, _)| *a == r.annotator) {
            votes.push((r.annotator.clone(), r.winner.clone()));
        }
        self.pending.remove(&r.battle_id);
        self.decided.insert(r.battle_id.clone());
        self.records.push(r);
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.cfg
    }

    pub fn setups(&self) -> &[Setup] {
        &self.setups
    }

    pub fn ratings(&self) -> &BTreeMap<String, f64> {
        &self.ratings
    }

    pub fn records(&self) -> &[BattleRecord] {
        &self.records
    }

    pub fn served(&self, setup: &Setup) -> u64 {
        self.served.get(setup).copied().unwrap_or(0)
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    fn pending_for(&self, setup: &Setup, goal: Option<&str>) -> u64 {
        self.pending
            .values()
            .filter(|p| p.setup == *setup && goal.is_none_or(|g| p.goal_id == g))
            .count() as u64
    }

    /// Least-served goal of `setup` still under the per-item cap.
    fn pick_goal(&self, setup: &Setup) -> Option<String> {
        self.inventory
            .goals_for(setup)
            .into_iter()
            .map(|g| {
                let used = self
                    .item_served
                    .get(&(setup.clone(), g.to_string()))
                    .copied()
                    .unwrap_or(0)
                    + self.pending_for(setup, Some(g));
                (used, g)
            })
            .filter(|(used, _)| {
                self.cfg
                    .annotations_per_item
                    .is_none_or(|cap| *used < cap as u64)
            })
            .min()
            .map(|(_, g)| g.to_string())
    }

    fn fresh_id(&mut self) -> String {
        loop {
            let id = format!("{:016x}", self.rng.next_u64());
            if !self.pending.contains_key(&id) && !self.decided.contains(&id) {
                return id;
            }
        }
    }

    pub fn next_battle(&mut self) -> Result<BattleView, ArenaError> {
        self.next_battle_at(Utc::now())
    }

    /// Serves a battle from a uniformly chosen least-served setup, with
    /// sides decided by a fair coin.
    pub fn next_battle_at(&mut self, now: DateTime<Utc>) -> Result<BattleView, ArenaError> {
        self.pending.retain(|_, p| p.expires > now);
        let open: Vec<(u64, usize, String)> = self
            .setups
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let goal = self.pick_goal(s)?;
                Some((self.served(s) + self.pending_for(s, None), i, goal))
            })
            .collect();
        let min = open
            .iter()
            .map(|(c, _, _)| *c)
            .min()
            .ok_or(ArenaError::Exhausted)?;
        let tied: Vec<&(u64, usize, String)> = open.iter().filter(|(c, _, _)| *c == min).collect();
        let &&(_, idx, ref goal_id) = tied.choose(&mut self.rng).expect("nonempty");
        let setup = self.setups[idx].clone();
        let goal_id = goal_id.clone();
        let (model_a, model_b) = if self.rng.random_bool(0.5) {
            (setup.a.clone(), setup.b.clone())
        } else {
            (setup.b.clone(), setup.a.clone())
        };
        let id = self.fresh_id();
        let item = &self.inventory.items[&(setup.dataset.clone(), goal_id.clone())];
        let view = BattleView {
            battle_id: id.clone(),
            goal: item.goal.clone(),
            context_ref: item.context.clone(),
            plan_a: item.plans[&model_a].steps.clone(),
            plan_b: item.plans[&model_b].steps.clone(),
        };
        self.pending.insert(
            id,
            Pending {
                setup,
                goal_id,
                model_a,
                model_b,
                expires: now + Duration::seconds(self.cfg.pending_ttl_secs),
            },
        );
        Ok(view)
    }

    pub fn record_choice(
        &mut self,
        battle_id: &str,
        choice: Choice,
        annotator: &str,
    ) -> Result<BattleRecord, ArenaError> {
        self.record_choice_at(battle_id, choice, annotator, Utc::now())
    }

    /// Logs the decision (if a log is attached) and then applies it.
    pub fn record_choice_at(
        &mut self,
        battle_id: &str,
        choice: Choice,
        annotator: &str,
        now: DateTime<Utc>,
    ) -> Result<BattleRecord, ArenaError> {
        if self.decided.contains(battle_id) {
            return Err(ArenaError::DuplicateSubmission(battle_id.to_string()));
        }
        let p = self
            .pending
            .get(battle_id)
            .ok_or_else(|| ArenaError::UnknownBattle(battle_id.to_string()))?;
        let record = BattleRecord {
            seq: self.records.len() as u64 + 1,
            battle_id: battle_id.to_string(),
            dataset: p.setup.dataset.clone(),
            goal_id: p.goal_id.clone(),
            model_a: p.model_a.clone(),
            model_b: p.model_b.clone(),
            winner: match choice {
                Choice::A => p.model_a.clone(),
                Choice::B => p.model_b.clone(),
            },
            annotator: annotator.to_string(),
            timestamp: now.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        if let Some(log) = self.log.as_mut() {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(log, "{line}")?;
            log.flush()?;
        }
        self.apply(record.clone());
        Ok(record)
    }

    pub fn leaderboard(&self) -> Leaderboard {
        let mut rows: Vec<LeaderboardRow> = self
            .ratings
            .iter()
            .map(|(m, &elo)| {
                let mut battles = 0;
                let win_rates = self
                    .cfg
                    .datasets
                    .iter()
                    .map(|d| {
                        let t = self.tallies.get(&(m.clone(), d.clone()));
                        battles += t.map_or(0, |t| t.battles);
                        let rate = t
                            .filter(|t| t.battles > 0)
                            .map(|t| 100.0 * t.wins as f64 / t.battles as f64);
                        (d.clone(), rate)
                    })
                    .collect();
                LeaderboardRow {
                    model: m.clone(),
                    elo,
                    elo_display: elo.round() as i64,
                    battles,
                    win_rates,
                }
            })
            .collect();
        rows.sort_by(|a, b| b.elo.total_cmp(&a.elo).then_with(|| a.model.cmp(&b.model)));
        Leaderboard {
            datasets: self.cfg.datasets.clone(),
            rows,
        }
    }

    /// Category counts `[first model wins, second model wins]` per item that
    /// at least two annotators judged, using each item's first `n` votes
    /// where `n` is the smallest such vote count.
    pub fn agreement_counts(&self) -> Vec<Vec<u32>> {
        let shared: Vec<(&Setup, &Vec<(String, String)>)> = self
            .annotations
            .iter()
            .filter(|(_, v)| v.len() >= 2)
            .map(|((s, _), v)| (s, v))
            .collect();
        let Some(n) = shared.iter().map(|(_, v)| v.len()).min() else {
            return Vec::new();
        };
        shared
            .into_iter()
            .map(|(setup, votes)| {
                let first = votes[..n].iter().filter(|(_, w)| *w == setup.a).count() as u32;
                vec![first, n as u32 - first]
            })
            .collect()
    }

    pub fn export_log(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

pub fn read_log<R: BufRead>(source: R) -> Result<Vec<BattleRecord>, ArenaError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| ArenaError::CorruptLog {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

fn check_counts(counts: &[Vec<u32>]) -> Result<u32, ArenaError> {
    let first = counts.first().ok_or(ArenaError::Agreement("one item"))?;
    let n: u32 = first.iter().sum();
    if n < 2 {
        return Err(ArenaError::Agreement("two ratings per item"));
    }
    if counts
        .iter()
        .any(|row| row.len() != first.len() || row.iter().sum::<u32>() != n)
    {
        return Err(ArenaError::Agreement(
            "the same number of ratings and categories per item",
        ));
    }
    Ok(n)
}

fn item_agreement(row: &[u32], n: u32) -> f64 {
    let n = n as f64;
    let sq: f64 = row.iter().map(|&c| (c as f64) * (c as f64)).sum();
    (sq - n) / (n * (n - 1.0))
}

/// Fleiss' kappa from per-item category counts (`counts[i][j]` = raters
/// putting item `i` in category `j`).
pub fn fleiss_kappa(counts: &[Vec<u32>]) -> Result<f64, ArenaError> {
    let n = check_counts(counts)?;
    let items = counts.len() as f64;
    let p_bar = counts.iter().map(|r| item_agreement(r, n)).sum::<f64>() / items;
    let total = items * n as f64;
    let p_e: f64 = (0..counts[0].len())
        .map(|j| {
            let p = counts.iter().map(|r| r[j] as f64).sum::<f64>() / total;
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(ArenaError::DegenerateMarginals);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Mean fraction of agreeing rater pairs, in percent.
pub fn raw_agreement(counts: &[Vec<u32>]) -> Result<f64, ArenaError> {
    let n = check_counts(counts)?;
    Ok(100.0 * counts.iter().map(|r| item_agreement(r, n)).sum::<f64>() / counts.len() as f64)
}
