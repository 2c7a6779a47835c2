//! Shared supervised training loop: minibatch SGD on categorical
//! cross-entropy. Used to fit clean classifiers, shadow Trojans, and the
//! fresh models the greedy selector scores candidates with.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::nn::{
    self, cross_entropy, cross_entropy_grad, forward, Activation, Direction, Gradients, MlpModel,
    OutputHead,
};
use crate::seed;

/// Hyperparameters for one classifier training run. `init_seed` fixes the
/// weight initialization, `shuffle_seed` the minibatch order; two runs with
/// identical config and data produce bit-identical models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub rate: f64,
    pub batch_size: usize,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dims: vec![16],
            activation: Activation::Tanh,
            epochs: 60,
            rate: 0.3,
            batch_size: 32,
            init_seed: 1,
            shuffle_seed: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(Error::Config("train rate must lie in (0,1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train batch_size must be positive".into()));
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden dims must be positive".into()));
        }
        Ok(())
    }

    /// Same config with different seeds; used to derive per-shadow trainers.
    pub fn reseeded(&self, init_seed: u64, shuffle_seed: u64) -> Self {
        TrainConfig {
            init_seed,
            shuffle_seed,
            ..self.clone()
        }
    }
}

/// Mean cross-entropy loss and summed parameter gradients over a batch.
pub fn ce_batch(model: &MlpModel, samples: &[&Sample]) -> Result<(f64, Gradients)> {
    let mut total = 0.0;
    let mut grads = Gradients::zeros_like(model);
    let scale = 1.0 / samples.len() as f64;
    for s in samples {
        let probs = forward(model, &s.x)?;
        total += cross_entropy(&probs, s.y)?;
        let upstream = cross_entropy_grad(&probs, s.y)?;
        let (g, _) = nn::backward(model, &s.x, &upstream)?;
        grads.add_scaled(&g, scale);
    }
    Ok((total * scale, grads))
}

/// Mean cross-entropy of a model over a whole dataset.
pub fn mean_ce(model: &MlpModel, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for s in &data.samples {
        total += cross_entropy(&forward(model, &s.x)?, s.y)?;
    }
    Ok(total / data.len() as f64)
}

/// Train a fresh softmax classifier on `data`.
pub fn train_classifier(data: &Dataset, cfg: &TrainConfig) -> Result<MlpModel> {
    cfg.validate()?;
    let mut dims = vec![data.feature_dim];
    dims.extend_from_slice(&cfg.hidden_dims);
    dims.push(data.num_classes);
    let mut model = nn::init_model(&dims, cfg.activation, OutputHead::Softmax, cfg.init_seed)?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        let mut rng = seed::rng(seed::derive_seed(cfg.shuffle_seed, epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.samples[i]).collect();
            let (loss, grads) = ce_batch(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::divergence(epoch, "non-finite training loss"));
            }
            model = nn::sgd_step(&model, &grads, cfg.rate, Direction::Descent)
                .map_err(|e| Error::divergence(epoch, e.to_string()))?;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;

    #[test]
    fn training_is_deterministic() {
        let data = make_blobs(3, 8, 20, 0.08, 17).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let a = train_classifier(&data, &cfg).unwrap();
        let b = train_classifier(&data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_reduces_loss() {
        let data = make_blobs(3, 8, 30, 0.08, 23).unwrap();
        let cfg = TrainConfig::default();
        let init = nn::init_model(
            &[8, 16, 3],
            cfg.activation,
            OutputHead::Softmax,
            cfg.init_seed,
        )
        .unwrap();
        let before = mean_ce(&init, &data).unwrap();
        let trained = train_classifier(&data, &cfg).unwrap();
        let after = mean_ce(&trained, &data).unwrap();
        assert!(after < before * 0.5, "loss {before} -> {after}");
    }
}
