//! World model backed by a chat-completions model that continues trajectory
//! markup.

use std::sync::Arc;

use super::{PlanError, Prediction, WorldModel};
use crate::refine::client::{ChatMessage, TextGen};
use crate::trajectory::{
    render_trajectory, Step, Trajectory, GOAL_ACHIEVED_LINE, TAG_ACTION, TAG_STATE,
};

pub struct LlmWorldModel {
    client: Arc<dyn TextGen>,
    pub temperature: f64,
}

impl LlmWorldModel {
    pub fn new(client: Arc<dyn TextGen>) -> Self {
        Self {
            client,
            temperature: 0.7,
        }
    }

    fn history_text(goal: &str, context: &str, history: &[Step]) -> String {
        let t = Trajectory::new(goal)
            .with_interpretation(context.trim())
            .with_steps(history.iter().cloned());
        render_trajectory(&t)
    }

    fn ask(&self, prompt: String) -> Result<String, PlanError> {
        self.client
            .complete(&[ChatMessage::user(prompt)], self.temperature)
            .map_err(|e| PlanError::WorldModelFailure(e.to_string()))
    }
}

/// Bodies of every `<TAG>...</TAG>` block in `text`, trimmed.
fn blocks(text: &str, tag: &str) -> Vec<String> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find(&open) {
        let after = &rest[i + open.len()..];
        let Some(j) = after.find(&close) else { break };
        let body = after[..j].trim();
        if !body.is_empty() {
            out.push(body.to_string());
        }
        rest = &after[j + close.len()..];
    }
    out
}

impl WorldModel for LlmWorldModel {
    fn propose(
        &self,
        goal: &str,
        context: &str,
        history: &[Step],
        k: usize,
    ) -> Result<Vec<String>, PlanError> {
        let prompt = format!(
            "{}\n\nPropose up to {k} alternative next actions toward the goal, best first. \
             Write each one in its own <{TAG_ACTION}>...</{TAG_ACTION}> block and nothing else. \
             If the goal is already achieved, reply with an empty message.",
            Self::history_text(goal, context, history)
        );
        let mut actions = blocks(&self.ask(prompt)?, TAG_ACTION);
        actions.truncate(k);
        Ok(actions)
    }

    fn predict(
        &self,
        goal: &str,
        context: &str,
        history: &[Step],
        action: &str,
    ) -> Result<Prediction, PlanError> {
        let prompt = format!(
            "{}\n\n<{TAG_ACTION}>\n{action}\n</{TAG_ACTION}>\n\nDescribe the world state after this action \
             in a <{TAG_STATE}>...</{TAG_STATE}> block. Add a final line {GOAL_ACHIEVED_LINE} if the goal is now achieved.",
            Self::history_text(goal, context, history)
        );
        let reply = self.ask(prompt)?;
        let state = blocks(&reply, TAG_STATE)
            .into_iter()
            .next()
            .ok_or_else(|| PlanError::WorldModelFailure("reply has no state block".into()))?;
        Ok(Prediction {
            state,
            achieved: reply.lines().any(|l| l.trim() == GOAL_ACHIEVED_LINE),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refine::client::ScriptedTextGen;

    #[test]
    fn parses_actions_and_states() {
        let gen = Arc::new(ScriptedTextGen::new([
            "<ACTION>Crack eggs</ACTION>\n<ACTION>\nHeat pan\n</ACTION>\n<ACTION>x</ACTION>",
            "<STATE>\nEggs in bowl.\n</STATE>\n<GOAL_ACHIEVED>",
        ]));
        let w = LlmWorldModel::new(gen.clone());
        assert_eq!(
            w.propose("Make eggs", "", &[], 2).unwrap(),
            ["Crack eggs", "Heat pan"]
        );
        let p = w.predict("Make eggs", "", &[], "Crack eggs").unwrap();
        assert_eq!(
            p,
            Prediction {
                state: "Eggs in bowl.".into(),
                achieved: true
            }
        );
        assert!(gen.prompts()[1].contains("<GOAL>\nMake eggs\n</GOAL>"));
    }

    #[test]
    fn missing_state_is_a_failure() {
        let w = LlmWorldModel::new(Arc::new(ScriptedTextGen::new(["no tags here"])));
        assert!(matches!(
            w.predict("g", "", &[], "a"),
            Err(PlanError::WorldModelFailure(_))
        ));
    }
}
