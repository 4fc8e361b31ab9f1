//! Evaluation procedures: goal-achievement detection, VPA plan metrics,
//! four-way plan selection, and cost-curve export.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::{CostModel, CriticError};
use crate::trajectory::{RenderOptions, Step, Trajectory};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no cases to evaluate")]
    Empty,
    #[error("sample {index}: prediction has {pred} steps, gold has {gold}")]
    LengthMismatch {
        index: usize,
        pred: usize,
        gold: usize,
    },
    #[error("sample {index}: horizon {got} differs from {expected}")]
    MixedHorizon {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v < values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GadCase {
    pub goal: String,
    #[serde(default)]
    pub interpretation: String,
    pub gold: Vec<Step>,
    pub distractors: Vec<Step>,
}

impl GadCase {
    pub fn len(&self) -> usize {
        self.gold.len() + self.distractors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gold steps followed by the distractors, verbatim.
    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(self.goal.clone())
            .with_interpretation(self.interpretation.clone())
            .with_steps(self.gold.iter().chain(&self.distractors).cloned())
    }

    fn check(&self, line: usize) -> Result<(), EvalError> {
        if self.gold.is_empty() || self.distractors.is_empty() {
            return Err(EvalError::BadRow {
                line,
                reason: "needs at least one gold step and one distractor".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadCaseResult {
    pub n_gold: usize,
    /// `costs[k-1]` is the cost of the first `k` steps.
    pub costs: Vec<f64>,
    /// 1-based.
    pub argmin: usize,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadReport {
    pub accuracy: f64,
    pub cases: Vec<GadCaseResult>,
}

impl GadReport {
    /// Recomputes argmins and accuracy from stored costs after mapping every
    /// cost through `f`.
    pub fn remap(&self, f: impl Fn(f64) -> f64) -> GadReport {
        let cases: Vec<GadCaseResult> = self
            .cases
            .iter()
            .map(|c| gad_result(c.n_gold, c.costs.iter().map(|&x| f(x)).collect()))
            .collect();
        let accuracy = accuracy(cases.iter().map(|c| c.hit));
        GadReport { accuracy, cases }
    }
}

fn accuracy(hits: impl ExactSizeIterator<Item = bool>) -> f64 {
    let n = hits.len();
    hits.filter(|&h| h).count() as f64 / n as f64
}

/// Case outcome from its prefix-cost curve.
pub fn gad_result(n_gold: usize, costs: Vec<f64>) -> GadCaseResult {
    let argmin = argmin_first(&costs).map_or(0, |i| i + 1);
    GadCaseResult {
        n_gold,
        argmin,
        hit: argmin == n_gold,
        costs,
    }
}

/// Scores every prefix of gold ++ distractors; a case is a hit when the
/// cheapest prefix is exactly the gold plan.
pub fn eval_gad(
    critic: &dyn CostModel,
    cases: &[GadCase],
    opts: RenderOptions,
) -> Result<GadReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut results = Vec::with_capacity(cases.len());
    for case in cases {
        let t = case.trajectory();
        let costs = (1..=t.steps.len())
            .map(|k| critic.prefix_cost(&t, k, opts))
            .collect::<Result<Vec<_>, _>>()?;
        results.push(gad_result(case.gold.len(), costs));
    }
    Ok(GadReport {
        accuracy: accuracy(results.iter().map(|c| c.hit)),
        cases: results,
    })
}

/// Expected accuracy of a uniformly random argmin.
pub fn chance_accuracy(cases: &[GadCase]) -> Result<f64, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(cases.iter().map(|c| 1.0 / c.len() as f64).sum::<f64>() / cases.len() as f64)
}

pub fn load_gad_cases<R: BufRead>(source: R) -> Result<Vec<GadCase>, EvalError> {
    read_jsonl(source, |case: &GadCase, line| case.check(line))
}

fn read_jsonl<T, R, F>(source: R, check: F) -> Result<Vec<T>, EvalError>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
    F: Fn(&T, usize) -> Result<(), EvalError>,
{
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| EvalError::BadRow {
            line: i + 1,
            reason: e.to_string(),
        })?;
        check(&item, i + 1)?;
        out.push(item);
    }
    Ok(out)
}

/// GAD cases of `total_len` steps: the gold part is a random-length prefix
/// of a trajectory (at least one step), the rest is filled with steps from
/// trajectories with other goals.
pub fn synthetic_gad_cases(
    trajs: &[Trajectory],
    pool: &[Trajectory],
    total_len: usize,
    seed: u64,
) -> Result<Vec<GadCase>, CriticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trajs.len());
    for t in trajs {
        let foreign: Vec<&Step> = pool
            .iter()
            .filter(|o| o.goal != t.goal)
            .flat_map(|o| &o.steps)
            .collect();
        if foreign.is_empty() {
            return Err(CriticError::NoDistractorSource);
        }
        let max_gold = t.steps.len().min(total_len.saturating_sub(1)).max(1);
        let n_gold = rng.random_range(1..=max_gold);
        let n_distractor = total_len.saturating_sub(n_gold).max(1);
        out.push(GadCase {
            goal: t.goal.clone(),
            interpretation: t.interpretation.clone(),
            gold: t.steps[..n_gold].to_vec(),
            distractors: (0..n_distractor)
                .map(|_| (*foreign.choose(&mut rng).expect("nonempty")).clone())
                .collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VpaPrediction {
    pub pred: Vec<String>,
    pub gold: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpaMetrics {
    pub sr: f64,
    pub macc: f64,
    pub miou: f64,
}

/// Success rate, positionwise accuracy, and set IoU of step ids.
pub fn vpa_metrics(preds: &[VpaPrediction]) -> Result<VpaMetrics, EvalError> {
    let first = preds.first().ok_or(EvalError::Empty)?;
    let horizon = first.gold.len();
    let mut exact = 0usize;
    let mut matched = 0usize;
    let mut iou_sum = 0.0;
    for (index, p) in preds.iter().enumerate() {
        if p.pred.len() != p.gold.len() {
            return Err(EvalError::LengthMismatch {
                index,
                pred: p.pred.len(),
                gold: p.gold.len(),
            });
        }
        if p.gold.len() != horizon {
            return Err(EvalError::MixedHorizon {
                index,
                expected: horizon,
                got: p.gold.len(),
            });
        }
        let hits = p.pred.iter().zip(&p.gold).filter(|(a, b)| a == b).count();
        matched += hits;
        if hits == horizon {
            exact += 1;
        }
        let ps: BTreeSet<&String> = p.pred.iter().collect();
        let gs: BTreeSet<&String> = p.gold.iter().collect();
        let union = ps.union(&gs).count();
        iou_sum += if union == 0 {
            1.0
        } else {
            ps.intersection(&gs).count() as f64 / union as f64
        };
    }
    let n = preds.len() as f64;
    let positions = (preds.len() * horizon) as f64;
    Ok(VpaMetrics {
        sr: exact as f64 / n,
        macc: if positions == 0.0 {
            1.0
        } else {
            matched as f64 / positions
        },
        miou: iou_sum / n,
    })
}

pub fn load_vpa<R: BufRead>(source: R) -> Result<Vec<VpaPrediction>, EvalError> {
    read_jsonl(source, |_: &VpaPrediction, _| Ok(()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WpItem {
    pub goal: String,
    /// Each candidate is a sequence of step texts.
    pub candidates: Vec<Vec<String>>,
    pub correct: usize,
}

pub const WP_CANDIDATES: usize = 4;

impl WpItem {
    fn check(&self, line: usize) -> Result<(), EvalError> {
        if self.candidates.len() != WP_CANDIDATES || self.correct >= WP_CANDIDATES {
            return Err(EvalError::BadRow {
                line,
                reason: format!(
                    "need exactly {WP_CANDIDATES} candidates and a correct index below {WP_CANDIDATES}"
                ),
            });
        }
        Ok(())
    }

    /// Candidate `i` as a trajectory of state-less steps.
    pub fn candidate(&self, i: usize) -> Trajectory {
        Trajectory::new(self.goal.clone())
            .with_steps(self.candidates[i].iter().map(|a| Step::new(a.as_str(), "")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WpReport {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub costs: Vec<Vec<f64>>,
}

/// Picks the cheapest candidate per item (first one on ties).
pub fn eval_wp(critic: &dyn CostModel, items: &[WpItem]) -> Result<WpReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::Empty);
    }
    let opts = RenderOptions {
        include_interpretation: false,
        include_states: false,
    };
    let mut predictions = Vec::with_capacity(items.len());
    let mut costs = Vec::with_capacity(items.len());
    for item in items {
        let c = (0..item.candidates.len())
            .map(|i| {
                let t = item.candidate(i);
                critic.prefix_cost(&t, t.steps.len(), opts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        predictions.push(argmin_first(&c).unwrap_or(0));
        costs.push(c);
    }
    let accuracy = accuracy(
        predictions
            .iter()
            .zip(items)
            .map(|(&p, it)| p == it.correct),
    );
    Ok(WpReport {
        accuracy,
        predictions,
        costs,
    })
}

pub fn load_wp_items<R: BufRead>(source: R) -> Result<Vec<WpItem>, EvalError> {
    read_jsonl(source, |item: &WpItem, line| item.check(line))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub case_id: usize,
    pub k: usize,
    pub progress_pct: f64,
    pub norm_cost: f64,
    pub is_argmin: bool,
}

/// Per-case min-max normalized curves against progress `100*k/N_gold`.
/// A flat curve normalizes to all zeros.
pub fn cost_curve_rows(report: &GadReport) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for (case_id, c) in report.cases.iter().enumerate() {
        let lo = c.costs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for (i, &cost) in c.costs.iter().enumerate() {
            let k = i + 1;
            rows.push(CurveRow {
                case_id,
                k,
                progress_pct: 100.0 * k as f64 / c.n_gold as f64,
                norm_cost: if range > 0.0 {
                    (cost - lo) / range
                } else {
                    0.0
                },
                is_argmin: k == c.argmin,
            });
        }
    }
    rows
}

pub fn export_cost_curves<W: Write>(report: &GadReport, sink: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(sink);
    for row in cost_curve_rows(report) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::FnCost;

    fn s(x: &str) -> Step {
        Step::new(x, "")
    }

    fn case(n_gold: usize, n_dist: usize) -> GadCase {
        GadCase {
            goal: "g".into(),
            interpretation: String::new(),
            gold: (0..n_gold).map(|i| s(&format!("gold{i}"))).collect(),
            distractors: (0..n_dist).map(|i| s(&format!("noise{i}"))).collect(),
        }
    }

    #[test]
    fn hit_when_curve_bottoms_at_gold_end() {
        let r = gad_result(3, vec![3.0, 2.0, 1.0, 2.0]);
        assert!(r.hit);
        assert_eq!(r.argmin, 3);
    }

    #[test]
    fn constant_critic_picks_first_prefix() {
        let flat = FnCost(|_: &str, _: &str| 0.5);
        let report = eval_gad(&flat, &[case(1, 2), case(2, 2)], RenderOptions::default()).unwrap();
        assert_eq!(report.cases[0].argmin, 1);
        assert!(report.cases[0].hit);
        assert!(!report.cases[1].hit);
        assert_eq!(report.accuracy, 0.5);
    }

    #[test]
    fn chance_levels() {
        assert_eq!(chance_accuracy(&[case(3, 7), case(5, 5)]).unwrap(), 0.1);
        assert_eq!(chance_accuracy(&[case(1, 3)]).unwrap(), 0.25);
        assert_eq!(chance_accuracy(&[case(2, 2), case(4, 4)]).unwrap(), 0.1875);
        assert!(matches!(chance_accuracy(&[]), Err(EvalError::Empty)));
    }

    fn vpa(pred: &[&str], gold: &[&str]) -> VpaPrediction {
        VpaPrediction {
            pred: pred.iter().map(|x| x.to_string()).collect(),
            gold: gold.iter().map(|x| x.to_string()).collect(),
        }
    }

    #[test]
    fn vpa_worked_examples() {
        let m = vpa_metrics(&[vpa(&["a", "b", "c"], &["a", "b", "c"])]).unwrap();
        assert_eq!((m.sr, m.macc, m.miou), (1.0, 1.0, 1.0));
        let m = vpa_metrics(&[vpa(&["a", "b", "c"], &["a", "c", "c"])]).unwrap();
        assert_eq!((m.sr, m.macc, m.miou), (0.0, 2.0 / 3.0, 2.0 / 3.0));
        let m = vpa_metrics(&[vpa(&["a", "b", "c"], &["b", "c", "d"])]).unwrap();
        assert_eq!(m.miou, 0.5);
        assert_eq!(m.macc, 0.0);
    }

    #[test]
    fn vpa_length_errors() {
        assert!(matches!(
            vpa_metrics(&[vpa(&["a"], &["a", "b"])]),
            Err(EvalError::LengthMismatch { index: 0, .. })
        ));
        assert!(matches!(
            vpa_metrics(&[vpa(&["a", "b"], &["a", "b"]), vpa(&["a"], &["a"])]),
            Err(EvalError::MixedHorizon { index: 1, .. })
        ));
    }

    #[test]
    fn wp_picks_cheapest() {
        let item = WpItem {
            goal: "g".into(),
            candidates: vec![
                vec!["x".into()],
                vec!["right".into()],
                vec!["y".into()],
                vec!["z".into()],
            ],
            correct: 1,
        };
        let critic = FnCost(|_: &str, t: &str| if t.contains("right") { 0.0 } else { 1.0 });
        let r = eval_wp(&critic, std::slice::from_ref(&item)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        let flat = FnCost(|_: &str, _: &str| 1.0);
        assert_eq!(eval_wp(&flat, &[item]).unwrap().predictions, [0]);
    }

    #[test]
    fn wp_rows_need_four_candidates() {
        let row = r#"{"goal":"g","candidates":[["a"],["b"]],"correct":0}"#;
        assert!(matches!(
            load_wp_items(row.as_bytes()),
            Err(EvalError::BadRow { line: 1, .. })
        ));
    }

    #[test]
    fn curve_rows() {
        let report = GadReport {
            accuracy: 1.0,
            cases: vec![
                gad_result(2, vec![2.0, 1.0, 3.0, 5.0]),
                gad_result(1, vec![4.0, 4.0]),
            ],
        };
        let rows = cost_curve_rows(&report);
        let pct: Vec<f64> = rows[..4].iter().map(|r| r.progress_pct).collect();
        assert_eq!(pct, [50.0, 100.0, 150.0, 200.0]);
        assert_eq!(rows[1].norm_cost, 0.0);
        assert_eq!(rows[3].norm_cost, 1.0);
        assert!(rows[1].is_argmin);
        assert!(rows[4..].iter().all(|r| r.norm_cost == 0.0));
        let mut buf = Vec::new();
        export_cost_curves(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("case_id,k,progress_pct,norm_cost,is_argmin\n0,1,50.0,0.25,false\n")
        );
    }

    #[test]
    fn gad_rows_round_trip() {
        let row = r#"{"goal":"g","interpretation":"i","gold":[{"action":"a","state":"s"}],"distractors":[{"action":"b","state":""}]}"#;
        let cases = load_gad_cases(row.as_bytes()).unwrap();
        assert_eq!(cases[0].len(), 2);
        let bad = r#"{"goal":"g","gold":[],"distractors":[{"action":"b","state":""}]}"#;
        assert!(load_gad_cases(bad.as_bytes()).is_err());
    }
}
