//! Variational autoencoder over binarized user rows with a multinomial
//! likelihood: `items -> hidden -> (mu, logvar) -> z -> hidden -> logits`.
//!
//! Gradients are computed by hand-written reverse accumulation through the
//! reparameterized sample `z = mu + exp(logvar / 2) * eps` and are checked
//! against central finite differences in the test suite.

mod checkpoint;
mod train;

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use train::{train, TrainConfig};

use crate::scorer::Scorer;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite loss at batch {batch} (epoch {epoch})")]
    NonFinite { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty training matrix")]
    EmptyMatrix,
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_items: usize,
    pub hidden: usize,
    pub latent: usize,
}

/// All weights of the model. The same layout doubles as a gradient buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: Dims,
    /// items x hidden
    pub enc_w1: Array2<f64>,
    pub enc_b1: Array1<f64>,
    /// hidden x 2*latent; the first `latent` columns produce the mean,
    /// the rest the log-variance.
    pub enc_w2: Array2<f64>,
    pub enc_b2: Array1<f64>,
    /// latent x hidden
    pub dec_w1: Array2<f64>,
    pub dec_b1: Array1<f64>,
    /// hidden x items
    pub dec_w2: Array2<f64>,
    pub dec_b2: Array1<f64>,
}

impl ModelParams {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { n_items, hidden, latent } = dims;
        ModelParams {
            dims,
            enc_w1: Array2::zeros((n_items, hidden)),
            enc_b1: Array1::zeros(hidden),
            enc_w2: Array2::zeros((hidden, 2 * latent)),
            enc_b2: Array1::zeros(2 * latent),
            dec_w1: Array2::zeros((latent, hidden)),
            dec_b1: Array1::zeros(hidden),
            dec_w2: Array2::zeros((hidden, n_items)),
            dec_b2: Array1::zeros(n_items),
        }
    }

    /// Xavier-normal weights, biases drawn with std 0.001.
    pub fn init<R: Rng>(dims: Dims, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        for w in [&mut p.enc_w1, &mut p.enc_w2, &mut p.dec_w1, &mut p.dec_w2] {
            let (fan_in, fan_out) = w.dim();
            let normal = Normal::new(0.0, (2.0 / (fan_in + fan_out) as f64).sqrt()).unwrap();
            w.mapv_inplace(|_| normal.sample(rng));
        }
        let bias = Normal::new(0.0, 0.001).unwrap();
        for b in [&mut p.enc_b1, &mut p.enc_b2, &mut p.dec_b1, &mut p.dec_b2] {
            b.mapv_inplace(|_| bias.sample(rng));
        }
        p
    }

    /// Flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            self.enc_w1.as_slice().unwrap(),
            self.enc_b1.as_slice().unwrap(),
            self.enc_w2.as_slice().unwrap(),
            self.enc_b2.as_slice().unwrap(),
            self.dec_w1.as_slice().unwrap(),
            self.dec_b1.as_slice().unwrap(),
            self.dec_w2.as_slice().unwrap(),
            self.dec_b2.as_slice().unwrap(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.enc_w1.as_slice_mut().unwrap(),
            self.enc_b1.as_slice_mut().unwrap(),
            self.enc_w2.as_slice_mut().unwrap(),
            self.enc_b2.as_slice_mut().unwrap(),
            self.dec_w1.as_slice_mut().unwrap(),
            self.dec_b1.as_slice_mut().unwrap(),
            self.dec_w2.as_slice_mut().unwrap(),
            self.dec_b2.as_slice_mut().unwrap(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Per-item rows of the decoder output layer, `items x hidden`.
    pub fn item_embeddings(&self) -> Array2<f64> {
        self.dec_w2.t().to_owned()
    }

    /// Inference forward pass: L2-normalized input, no dropout, `z = mu`.
    pub fn forward_logits(&self, profile: &[usize]) -> Array1<f64> {
        let latent = self.dims.latent;
        let mut a1 = self.enc_b1.clone();
        if !profile.is_empty() {
            let scale = 1.0 / (profile.len() as f64).sqrt();
            for &i in profile {
                a1.scaled_add(scale, &self.enc_w1.row(i));
            }
        }
        let h1 = a1.mapv(f64::tanh);
        let mu = h1.dot(&self.enc_w2.slice(s![.., ..latent])) + self.enc_b2.slice(s![..latent]);
        let h3 = (mu.dot(&self.dec_w1) + &self.dec_b1).mapv(f64::tanh);
        h3.dot(&self.dec_w2) + &self.dec_b2
    }
}

impl Scorer for ModelParams {
    fn n_items(&self) -> usize {
        self.dims.n_items
    }

    fn score(&self, profile: &[usize]) -> Vec<f64> {
        self.forward_logits(profile).to_vec()
    }

    fn item_embeddings(&self) -> Array2<f64> {
        ModelParams::item_embeddings(self)
    }
}

/// One training batch: the encoder input (masked, L2-normalized rows) and
/// the binary reconstruction target.
#[derive(Clone, Debug)]
pub struct ElboBatch {
    pub input: Array2<f64>,
    pub target: Array2<f64>,
}

impl ElboBatch {
    /// Builds a batch from sparse rows. With `dropout > 0` each present
    /// coordinate is kept with probability `1 - dropout` before the rows are
    /// L2-normalized; the target always holds the full row.
    pub fn from_rows<R: Rng>(rows: &[&[usize]], n_items: usize, dropout: f64, rng: &mut R) -> Self {
        let mut input = Array2::zeros((rows.len(), n_items));
        let mut target = Array2::zeros((rows.len(), n_items));
        for (b, row) in rows.iter().enumerate() {
            let mut kept = 0usize;
            for &i in row.iter() {
                target[[b, i]] = 1.0;
                if dropout == 0.0 || rng.random::<f64>() >= dropout {
                    input[[b, i]] = 1.0;
                    kept += 1;
                }
            }
            if kept > 0 {
                input.row_mut(b).mapv_inplace(|v| v / (kept as f64).sqrt());
            }
        }
        ElboBatch { input, target }
    }
}

/// KL(N(mu, exp(logvar)) || N(0, I)) summed over latent dims.
pub fn kl_term(mu: ArrayView1<f64>, logvar: ArrayView1<f64>) -> f64 {
    mu.iter()
        .zip(logvar.iter())
        .map(|(&m, &lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum()
}

fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Batch-mean negative ELBO with KL weight `beta`, and its gradient with
/// respect to every parameter. `noise` is the `batch x latent` standard
/// normal draw used for the reparameterized sample.
pub fn elbo_loss(params: &ModelParams, batch: &ElboBatch, beta: f64, noise: &Array2<f64>) -> (f64, ModelParams) {
    let latent = params.dims.latent;
    let n = batch.input.nrows() as f64;

    // forward
    let h1 = (batch.input.dot(&params.enc_w1) + &params.enc_b1).mapv(f64::tanh);
    let enc = h1.dot(&params.enc_w2) + &params.enc_b2;
    let mu = enc.slice(s![.., ..latent]);
    let logvar = enc.slice(s![.., latent..]);
    let std = logvar.mapv(|v| (0.5 * v).exp());
    let z = &mu + &(&std * noise);
    let h3 = (z.dot(&params.dec_w1) + &params.dec_b1).mapv(f64::tanh);
    let logits = h3.dot(&params.dec_w2) + &params.dec_b2;
    let log_probs = log_softmax_rows(&logits);

    let nll = -(&log_probs * &batch.target).sum() / n;
    let kl: f64 = mu
        .outer_iter()
        .zip(logvar.outer_iter())
        .map(|(m, lv)| kl_term(m, lv))
        .sum::<f64>()
        / n;
    let loss = nll + beta * kl;

    // backward
    let mut g = ModelParams::zeros(params.dims);
    let counts = batch.target.sum_axis(Axis(1)).insert_axis(Axis(1));
    let d_logits = (log_probs.mapv(f64::exp) * &counts - &batch.target) / n;
    g.dec_w2 = h3.t().dot(&d_logits);
    g.dec_b2 = d_logits.sum_axis(Axis(0));
    let mut d_a3 = d_logits.dot(&params.dec_w2.t());
    Zip::from(&mut d_a3).and(&h3).for_each(|d, &h| *d *= 1.0 - h * h);
    g.dec_w1 = z.t().dot(&d_a3);
    g.dec_b1 = d_a3.sum_axis(Axis(0));
    let d_z = d_a3.dot(&params.dec_w1.t());

    let mut d_enc = Array2::zeros(enc.raw_dim());
    let kl_scale = beta / n;
    Zip::from(d_enc.slice_mut(s![.., ..latent]))
        .and(&d_z)
        .and(&mu)
        .for_each(|d, &dz, &m| *d = dz + kl_scale * m);
    Zip::from(d_enc.slice_mut(s![.., latent..]))
        .and(&d_z)
        .and(noise)
        .and(&std)
        .for_each(|d, &dz, &e, &sd| *d = 0.5 * dz * e * sd + kl_scale * 0.5 * (sd * sd - 1.0));
    g.enc_w2 = h1.t().dot(&d_enc);
    g.enc_b2 = d_enc.sum_axis(Axis(0));
    let mut d_a1 = d_enc.dot(&params.enc_w2.t());
    Zip::from(&mut d_a1).and(&h1).for_each(|d, &h| *d *= 1.0 - h * h);
    g.enc_w1 = batch.input.t().dot(&d_a1);
    g.enc_b1 = d_a1.sum_axis(Axis(0));

    (loss, g)
}
