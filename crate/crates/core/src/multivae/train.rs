use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{elbo_loss, Dims, ElboBatch, ModelError, ModelParams};
use crate::rng::seeded_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Input dropout probability.
    pub dropout: f64,
    /// KL weight cap.
    pub beta_max: f64,
    /// Number of updates over which the KL weight rises linearly to `beta_max`.
    pub anneal_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 600,
            latent: 200,
            epochs: 200,
            batch_size: 500,
            learning_rate: 1e-3,
            dropout: 0.5,
            beta_max: 0.2,
            anneal_steps: 200_000,
            seed: 98765,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.beta_max) {
            return bad("beta_max must be in [0, 1]");
        }
        if self.anneal_steps == 0 {
            return bad("anneal_steps must be >= 1");
        }
        if self.batch_size == 0 || self.hidden == 0 || self.latent == 0 {
            return bad("batch_size, hidden and latent must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    /// Rescales `anneal_steps` to 80% of the total number of updates for a
    /// training set of `n_users` rows.
    pub fn with_scaled_anneal(mut self, n_users: usize) -> Self {
        let updates = self.epochs * n_users.div_ceil(self.batch_size.max(1));
        self.anneal_steps = ((updates as f64 * 0.8).ceil() as usize).max(1);
        self
    }

    pub fn beta_at(&self, step: usize) -> f64 {
        self.beta_max * (step as f64 / self.anneal_steps as f64).min(1.0)
    }
}

struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dims: Dims) -> Self {
        Adam {
            m: ModelParams::zeros(dims),
            v: ModelParams::zeros(dims),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let ps = params.tensors_mut();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for j in 0..p.len() {
                m[j] = Self::B1 * m[j] + (1.0 - Self::B1) * g[j];
                v[j] = Self::B2 * v[j] + (1.0 - Self::B2) * g[j] * g[j];
                p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains on sparse binary rows (`rows[u]` = item indices of user `u`).
/// Batch order, dropout masks and latent noise all derive from
/// `config.seed`, so a fixed seed reproduces the parameters exactly.
pub fn train(rows: &[Vec<usize>], n_items: usize, config: &TrainConfig) -> Result<ModelParams, ModelError> {
    config.validate()?;
    if rows.is_empty() || n_items == 0 || rows.iter().all(Vec::is_empty) {
        return Err(ModelError::EmptyMatrix);
    }
    let dims = Dims {
        n_items,
        hidden: config.hidden,
        latent: config.latent,
    };
    let mut params = ModelParams::init(dims, &mut seeded_rng(config.seed, &[u64::MAX]));
    let mut adam = Adam::new(dims);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut seeded_rng(config.seed, &[epoch as u64]));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_rows: Vec<&[usize]> = chunk.iter().map(|&u| rows[u].as_slice()).collect();
            let mut rng = seeded_rng(config.seed, &[epoch as u64, b as u64]);
            let batch = ElboBatch::from_rows(&batch_rows, n_items, config.dropout, &mut rng);
            let noise = Array2::from_shape_simple_fn((chunk.len(), dims.latent), || StandardNormal.sample(&mut rng));
            let beta = config.beta_at(step);
            let (loss, grads) = elbo_loss(&params, &batch, beta, &noise);
            if !loss.is_finite() {
                return Err(ModelError::NonFinite { epoch, batch: b });
            }
            adam.step(&mut params, &grads, config.learning_rate);
            step += 1;
            epoch_loss += loss;
        }
        log::debug!("epoch {epoch}: mean loss {:.4}", epoch_loss / order.len().div_ceil(config.batch_size) as f64);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            hidden: 8,
            latent: 4,
            epochs: 3,
            batch_size: 4,
            anneal_steps: 5,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    fn rows() -> Vec<Vec<usize>> {
        (0..10).map(|u| vec![u % 5, 5 + u % 3, 9]).collect()
    }

    #[test]
    fn zero_epochs_returns_init() {
        let cfg = TrainConfig { epochs: 0, ..small() };
        let p = train(&rows(), 10, &cfg).unwrap();
        let dims = Dims {
            n_items: 10,
            hidden: 8,
            latent: 4,
        };
        assert_eq!(p, ModelParams::init(dims, &mut seeded_rng(11, &[u64::MAX])));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = train(&rows(), 10, &small()).unwrap();
        let b = train(&rows(), 10, &small()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = train(&rows(), 10, &TrainConfig { seed: 12, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn anneal_schedule() {
        let cfg = TrainConfig {
            beta_max: 0.2,
            anneal_steps: 10,
            ..small()
        };
        assert_eq!(cfg.beta_at(0), 0.0);
        assert!((cfg.beta_at(5) - 0.1).abs() < 1e-15);
        assert_eq!(cfg.beta_at(10), 0.2);
        assert_eq!(cfg.beta_at(1000), 0.2);
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            TrainConfig { dropout: 1.0, ..small() },
            TrainConfig { beta_max: 1.5, ..small() },
            TrainConfig { anneal_steps: 0, ..small() },
        ] {
            assert!(matches!(train(&rows(), 10, &cfg), Err(ModelError::InvalidConfig(_))));
        }
        assert!(matches!(train(&[], 10, &small()), Err(ModelError::EmptyMatrix)));
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            learning_rate: 1e308,
            epochs: 5,
            ..small()
        };
        assert!(matches!(train(&rows(), 10, &cfg), Err(ModelError::NonFinite { .. })));
    }
}
