//! One-hidden-layer tanh scorer over sentence-pair features, the margin
//! ranking loss with cost centering, and its analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::{Embedder, EmbedderSpec};
use super::{CriticError, PairExample};

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticTrainConfig {
    pub margin: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for CriticTrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            lambda: 0.01,
            batch_size: 128,
            epochs: 1,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl CriticTrainConfig {
    pub fn validate(&self) -> Result<(), CriticError> {
        if !(self.margin > 0.0) || !(self.lambda >= 0.0) || self.batch_size == 0 {
            return Err(CriticError::BadConfig(format!(
                "need margin > 0, lambda >= 0, batch_size >= 1 (got {self:?})"
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(CriticError::BadConfig(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// `max(0, margin + c_pos - c_neg)^2 + lambda * (c_pos^2 + c_neg^2)`.
///
/// Minimizing it pushes `c_pos + margin <= c_neg` while keeping costs near 0.
pub fn pair_loss(c_pos: f64, c_neg: f64, cfg: &CriticTrainConfig) -> f64 {
    let hinge = (cfg.margin + c_pos - c_neg).max(0.0);
    hinge * hinge + cfg.lambda * (c_pos * c_pos + c_neg * c_neg)
}

/// `(dL/dc_pos, dL/dc_neg)` of [`pair_loss`].
pub fn pair_loss_grad(c_pos: f64, c_neg: f64, cfg: &CriticTrainConfig) -> (f64, f64) {
    let hinge = (cfg.margin + c_pos - c_neg).max(0.0);
    (
        2.0 * hinge + 2.0 * cfg.lambda * c_pos,
        -2.0 * hinge + 2.0 * cfg.lambda * c_neg,
    )
}

/// `[g, t, g*t, |g - t|]`.
pub fn pair_features(goal: &[f64], traj: &[f64]) -> Vec<f64> {
    let d = goal.len();
    let mut z = Vec::with_capacity(4 * d);
    z.extend_from_slice(goal);
    z.extend_from_slice(traj);
    z.extend(goal.iter().zip(traj).map(|(a, b)| a * b));
    z.extend(goal.iter().zip(traj).map(|(a, b)| (a - b).abs()));
    z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticModel {
    pub dim: usize,
    pub hidden: usize,
    /// Row-major `hidden x 4*dim`.
    #[serde(rename = "W1")]
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub embedder: EmbedderSpec,
}

/// Same shapes as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    fn zeros(m: &CriticModel) -> Self {
        Self {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.hidden],
            w2: vec![0.0; m.hidden],
            b2: 0.0,
        }
    }

    /// Flattened in the order of [`CriticModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w1.len() + 2 * self.b1.len() + 1);
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.push(self.b2);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|&g| g == 0.0)
    }
}

struct Forward {
    z: Vec<f64>,
    hidden: Vec<f64>,
    cost: f64,
}

impl CriticModel {
    /// All-zero model (scores every input 0).
    pub fn zeros(embedder: EmbedderSpec, hidden: usize) -> Self {
        let dim = embedder.dim;
        Self {
            dim,
            hidden,
            w1: vec![0.0; hidden * 4 * dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            embedder,
        }
    }

    /// `W1 ~ U(-1/sqrt(4d), 1/sqrt(4d))`, everything else zero.
    pub fn init(embedder: EmbedderSpec, hidden: usize, seed: u64) -> Self {
        let mut m = Self::zeros(embedder, hidden);
        let bound = 1.0 / ((4 * m.dim) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        m.w1.iter_mut()
            .for_each(|w| *w = rng.random_range(-bound..bound));
        m
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + 2 * self.hidden + 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.push(self.b2);
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "parameter count");
        let (w1, rest) = flat.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, rest) = rest.split_at(self.hidden);
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    fn check_dims(&self, goal: &[f64], traj: &[f64]) -> Result<(), CriticError> {
        for v in [goal, traj] {
            if v.len() != self.dim {
                return Err(CriticError::DimMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    fn forward(&self, goal: &[f64], traj: &[f64]) -> Forward {
        let z = pair_features(goal, traj);
        let width = z.len();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * width..(j + 1) * width];
                let a: f64 = row.iter().zip(&z).map(|(w, x)| w * x).sum::<f64>() + self.b1[j];
                a.tanh()
            })
            .collect();
        let cost = hidden.iter().zip(&self.w2).map(|(h, w)| h * w).sum::<f64>() + self.b2;
        Forward { z, hidden, cost }
    }

    /// Cost of a trajectory embedding under a goal embedding.
    pub fn score_embeddings(&self, goal: &[f64], traj: &[f64]) -> Result<f64, CriticError> {
        self.check_dims(goal, traj)?;
        Ok(self.forward(goal, traj).cost)
    }

    pub fn score(
        &self,
        embedder: &dyn Embedder,
        goal_text: &str,
        traj_text: &str,
    ) -> Result<f64, CriticError> {
        let g = embedder.embed(goal_text)?;
        let t = embedder.embed(traj_text)?;
        self.score_embeddings(&g, &t)
    }

    fn accumulate(&self, fwd: &Forward, upstream: f64, grads: &mut Gradients) {
        grads.b2 += upstream;
        let width = fwd.z.len();
        for j in 0..self.hidden {
            let h = fwd.hidden[j];
            grads.w2[j] += upstream * h;
            let delta = upstream * self.w2[j] * (1.0 - h * h);
            if delta == 0.0 {
                continue;
            }
            grads.b1[j] += delta;
            let row = &mut grads.w1[j * width..(j + 1) * width];
            row.iter_mut()
                .zip(&fwd.z)
                .for_each(|(g, x)| *g += delta * x);
        }
    }

    /// Mean pair loss and its gradient over pre-embedded pairs.
    pub fn loss_and_grads_embedded(
        &self,
        batch: &[EmbeddedPair],
        cfg: &CriticTrainConfig,
    ) -> Result<(f64, Gradients), CriticError> {
        if batch.is_empty() {
            return Err(CriticError::EmptyBatch);
        }
        let mut grads = Gradients::zeros(self);
        let mut total = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for p in batch {
            self.check_dims(&p.goal, &p.pos)?;
            self.check_dims(&p.goal, &p.neg)?;
            let fp = self.forward(&p.goal, &p.pos);
            let fneg = self.forward(&p.goal, &p.neg);
            total += pair_loss(fp.cost, fneg.cost, cfg);
            let (gp, gn) = pair_loss_grad(fp.cost, fneg.cost, cfg);
            self.accumulate(&fp, gp * scale, &mut grads);
            self.accumulate(&fneg, gn * scale, &mut grads);
        }
        Ok((total * scale, grads))
    }

    /// Mean pair loss of a text batch and its exact gradient with respect to
    /// all parameters (embeddings held constant).
    pub fn loss_and_grads(
        &self,
        embedder: &dyn Embedder,
        batch: &[PairExample],
        cfg: &CriticTrainConfig,
    ) -> Result<(f64, Gradients), CriticError> {
        let embedded = embed_pairs(embedder, batch)?;
        self.loss_and_grads_embedded(&embedded, cfg)
    }

    /// Mean loss only (used by finite-difference checks).
    pub fn mean_loss_embedded(
        &self,
        batch: &[EmbeddedPair],
        cfg: &CriticTrainConfig,
    ) -> Result<f64, CriticError> {
        if batch.is_empty() {
            return Err(CriticError::EmptyBatch);
        }
        let mut total = 0.0;
        for p in batch {
            let cp = self.score_embeddings(&p.goal, &p.pos)?;
            let cn = self.score_embeddings(&p.goal, &p.neg)?;
            total += pair_loss(cp, cn, cfg);
        }
        Ok(total / batch.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CriticError> {
        let m: CriticModel =
            serde_json::from_str(text).map_err(|e| CriticError::BadModel(e.to_string()))?;
        if m.embedder.dim != m.dim
            || m.w1.len() != m.hidden * 4 * m.dim
            || m.b1.len() != m.hidden
            || m.w2.len() != m.hidden
        {
            return Err(CriticError::BadModel(
                "parameter shapes do not match dims".into(),
            ));
        }
        if !m.is_finite() {
            return Err(CriticError::BadModel("non-finite parameters".into()));
        }
        Ok(m)
    }
}

/// A pair with its three texts already embedded.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPair {
    pub goal: Vec<f64>,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

pub fn embed_pairs(
    embedder: &dyn Embedder,
    pairs: &[PairExample],
) -> Result<Vec<EmbeddedPair>, CriticError> {
    let mut cache: std::collections::HashMap<String, Vec<f64>> = Default::default();
    let mut get = |text: &str| -> Result<Vec<f64>, CriticError> {
        if let Some(v) = cache.get(text) {
            return Ok(v.clone());
        }
        let v = embedder.embed(text)?;
        cache.insert(text.to_string(), v.clone());
        Ok(v)
    };
    pairs
        .iter()
        .map(|p| {
            Ok(EmbeddedPair {
                goal: get(&p.goal_text)?,
                pos: get(&p.pos_text)?,
                neg: get(&p.neg_text)?,
            })
        })
        .collect()
}
