//! Seeded minibatch Adam over precomputed embeddings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::embed::Embedder;
use super::model::{embed_pairs, CriticModel, CriticTrainConfig, EmbeddedPair};
use super::{CriticError, PairExample};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: CriticModel,
    /// Mean loss of each batch, measured before its update.
    pub losses: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

/// Trains on already-embedded pairs.
pub fn train_embedded(
    model: &CriticModel,
    pairs: &[EmbeddedPair],
    cfg: &CriticTrainConfig,
) -> Result<TrainReport, CriticError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(CriticError::EmptyBatch);
    }
    let mut model = model.clone();
    let mut params = model.params();
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut losses = Vec::new();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| pairs[i].clone()));
            let (loss, grads) = model.loss_and_grads_embedded(&batch, cfg)?;
            losses.push(loss);
            adam.step(&mut params, &grads.flatten(), cfg.learning_rate);
            model.set_params(&params);
        }
    }
    Ok(TrainReport { model, losses })
}

/// Embeds every pair once, then runs [`train_embedded`].
pub fn train(
    model: &CriticModel,
    embedder: &dyn Embedder,
    pairs: &[PairExample],
    cfg: &CriticTrainConfig,
) -> Result<TrainReport, CriticError> {
    if embedder.dim() != model.dim {
        return Err(CriticError::DimMismatch {
            expected: model.dim,
            got: embedder.dim(),
        });
    }
    let embedded = embed_pairs(embedder, pairs)?;
    train_embedded(model, &embedded, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::embed::{EmbedderSpec, MockHashEmbedder};
    use crate::critic::PairKind;

    fn toy_pairs() -> Vec<PairExample> {
        (0..20)
            .map(|i| PairExample {
                goal_text: format!("alpha{i} beta{i}"),
                pos_text: format!("alpha{i} beta{i}"),
                neg_text: format!("gamma{i} delta{i}"),
                kind: PairKind::External,
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let e = MockHashEmbedder::new(16).unwrap();
        let m = CriticModel::init(EmbedderSpec::mock(16), 4, 1);
        let cfg = CriticTrainConfig {
            learning_rate: 0.0,
            batch_size: 7,
            epochs: 2,
            ..Default::default()
        };
        let r = train(&m, &e, &toy_pairs(), &cfg).unwrap();
        assert_eq!(r.model, m);
        assert_eq!(r.losses.len(), 6);
    }

    #[test]
    fn deterministic_and_loss_decreases() {
        let e = MockHashEmbedder::new(32).unwrap();
        let m = CriticModel::init(EmbedderSpec::mock(32), 8, 2);
        let cfg = CriticTrainConfig {
            learning_rate: 0.02,
            batch_size: 5,
            epochs: 30,
            seed: 4,
            ..Default::default()
        };
        let a = train(&m, &e, &toy_pairs(), &cfg).unwrap();
        let b = train(&m, &e, &toy_pairs(), &cfg).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.model, b.model);
        let head: f64 = a.losses[..4].iter().sum();
        let tail: f64 = a.losses[a.losses.len() - 4..].iter().sum();
        assert!(tail < head * 0.5, "{head} -> {tail}");
    }

    #[test]
    fn rejects_bad_config_and_empty_input() {
        let e = MockHashEmbedder::new(8).unwrap();
        let m = CriticModel::init(EmbedderSpec::mock(8), 2, 0);
        let bad = CriticTrainConfig {
            margin: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            train(&m, &e, &toy_pairs(), &bad),
            Err(CriticError::BadConfig(_))
        ));
        assert!(matches!(
            train(&m, &e, &[], &CriticTrainConfig::default()),
            Err(CriticError::EmptyBatch)
        ));
    }
}
