//! STRIPS-style set-of-fluents world used as a deterministic test oracle.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PlanError, Prediction, WorldModel};
use crate::trajectory::{Step, Trajectory};

pub type Fluents = BTreeSet<String>;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ToyAction {
    #[serde(default)]
    pub pre: Fluents,
    #[serde(default)]
    pub add: Fluents,
    #[serde(default)]
    pub del: Fluents,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyWorld {
    pub fluents: Fluents,
    pub initial: Fluents,
    pub goal: Fluents,
    pub actions: BTreeMap<String, ToyAction>,
}

/// `"a, b, c"` in sorted order, or `"none"`.
pub fn state_text(state: &Fluents) -> String {
    if state.is_empty() {
        "none".to_string()
    } else {
        state.iter().cloned().collect::<Vec<_>>().join(", ")
    }
}

impl ToyWorld {
    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let w: ToyWorld =
            serde_json::from_str(text).map_err(|e| PlanError::BadWorld(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    /// Every mentioned fluent must be declared.
    pub fn validate(&self) -> Result<(), PlanError> {
        let check =
            |set: &Fluents, what: &str| match set.iter().find(|f| !self.fluents.contains(*f)) {
                Some(f) => Err(PlanError::BadWorld(format!(
                    "{what} uses undeclared fluent `{f}`"
                ))),
                None => Ok(()),
            };
        check(&self.initial, "initial state")?;
        check(&self.goal, "goal")?;
        for (name, a) in &self.actions {
            if name.trim().is_empty() || name.contains('\n') {
                return Err(PlanError::BadWorld(format!("invalid action name {name:?}")));
            }
            check(&a.pre, name)?;
            check(&a.add, name)?;
            check(&a.del, name)?;
        }
        Ok(())
    }

    /// `(state \ del) ∪ add`, provided the preconditions hold.
    pub fn apply_action(&self, state: &Fluents, action: &str) -> Result<Fluents, PlanError> {
        let a = self
            .actions
            .get(action)
            .ok_or_else(|| PlanError::UnknownAction(action.to_string()))?;
        if let Some(missing) = a.pre.iter().find(|f| !state.contains(*f)) {
            return Err(PlanError::PreconditionUnmet {
                action: action.to_string(),
                fluent: missing.clone(),
            });
        }
        let mut next: Fluents = state.difference(&a.del).cloned().collect();
        next.extend(a.add.iter().cloned());
        Ok(next)
    }

    pub fn replay<'a, I>(&self, actions: I) -> Result<Fluents, PlanError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        actions
            .into_iter()
            .try_fold(self.initial.clone(), |s, a| self.apply_action(&s, a))
    }

    pub fn achieved(&self, state: &Fluents) -> bool {
        self.goal.is_subset(state)
    }

    /// Applicable actions in name order.
    pub fn applicable(&self, state: &Fluents) -> Vec<String> {
        self.actions
            .iter()
            .filter(|(_, a)| a.pre.is_subset(state))
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Goal fluents not yet true after replaying `t`, plus 0.01 per step.
    pub fn oracle_cost(&self, t: &Trajectory) -> Result<f64, PlanError> {
        let state = self.replay(t.steps.iter().map(|s| s.action.as_str()))?;
        let unmet = self.goal.difference(&state).count();
        Ok(unmet as f64 + 0.01 * t.steps.len() as f64)
    }

    /// Random instance over `n_fluents` fluents with `n_actions` actions.
    pub fn random(seed: u64, n_fluents: usize, n_actions: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = (0..n_fluents.max(1)).map(|i| format!("f{i}")).collect();
        let pick = |rng: &mut ChaCha8Rng, p: f64| -> Fluents {
            names
                .iter()
                .filter(|_| rng.random_bool(p))
                .cloned()
                .collect()
        };
        let initial = pick(&mut rng, 0.3);
        let mut goal = pick(&mut rng, 0.4);
        if goal.is_empty() || goal.is_subset(&initial) {
            let extra = names.choose(&mut rng).expect("fluents").clone();
            goal.insert(extra);
        }
        let actions = (0..n_actions)
            .map(|i| {
                let a = ToyAction {
                    pre: pick(&mut rng, 0.2),
                    add: pick(&mut rng, 0.3),
                    del: pick(&mut rng, 0.2),
                };
                (format!("act{i}"), a)
            })
            .collect();
        Self {
            fluents: names.iter().cloned().collect(),
            initial,
            goal,
            actions,
        }
    }

    /// A world where the cheapest-looking first move never reaches the goal:
    /// the goal needs `g1` dropped temporarily before it can be completed.
    pub fn trap() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Fluents>();
        let action = |pre: &[&str], add: &[&str], del: &[&str]| ToyAction {
            pre: set(pre),
            add: set(add),
            del: set(del),
        };
        Self {
            fluents: set(&["g1", "g2", "free", "junk"]),
            initial: set(&["g1"]),
            goal: set(&["g1", "g2"]),
            actions: BTreeMap::from([
                ("a_noise".to_string(), action(&[], &["junk"], &[])),
                ("b_release".to_string(), action(&["g1"], &["free"], &["g1"])),
                (
                    "c_complete".to_string(),
                    action(&["free"], &["g1", "g2"], &[]),
                ),
                ("wait".to_string(), action(&[], &[], &[])),
            ]),
        }
    }
}

fn history_state(world: &ToyWorld, history: &[Step]) -> Result<Fluents, PlanError> {
    world.replay(history.iter().map(|s| s.action.as_str()))
}

impl WorldModel for ToyWorld {
    fn propose(
        &self,
        _goal: &str,
        _context: &str,
        history: &[Step],
        k: usize,
    ) -> Result<Vec<String>, PlanError> {
        let state = history_state(self, history)?;
        let mut out = self.applicable(&state);
        out.truncate(k);
        Ok(out)
    }

    fn predict(
        &self,
        _goal: &str,
        _context: &str,
        history: &[Step],
        action: &str,
    ) -> Result<Prediction, PlanError> {
        let state = history_state(self, history)?;
        let next = self.apply_action(&state, action)?;
        Ok(Prediction {
            state: state_text(&next),
            achieved: self.achieved(&next),
        })
    }
}
