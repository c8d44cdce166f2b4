//! The three-component ensemble regressor over link sequences:
//! a recurrent component (LSTM + rectified head), a linear component
//! with a cross-layer order-2 interaction term, and a deep component
//! over vehicle/link ID embeddings. Trained with exact reverse-mode
//! gradients of the cumulative link loss.

pub mod backward;
pub mod baseline;
pub mod batch;
pub mod checkpoint;
pub mod forward;
pub mod loss;
pub mod train;

#[cfg(test)]
mod tests;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureSchema;

pub use batch::{make_batches, prepare_trip, Batch, Batching, TripTensors};
pub use forward::{
    cross_layer, forward_deep, forward_linear, forward_recurrent, predict_dataset, predict_links,
    predict_trip,
};
pub use loss::{loss_batch, loss_terms_from_errors, LossWeights};
pub use backward::grad_batch;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{train, EpochStats, FreezeMask, Optimizer, TrainConfig};

/// Activation applied to the summed component outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalActivation {
    /// Rectified linear on the normalized scale (default; guarantees
    /// nonnegative, unbounded predictions).
    Relu,
    /// Sigmoid on the normalized scale, retained as an option.
    Sigmoid,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    /// Hidden widths of the deep MLP between the 2E-wide embedding
    /// concatenation and the 2-channel output.
    pub mlp_hidden: Vec<usize>,
    pub n_vehicles: usize,
    pub n_links: usize,
    pub final_activation: FinalActivation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            embed_dim: 32,
            mlp_hidden: vec![64, 32],
            n_vehicles: 0,
            n_links: 0,
            final_activation: FinalActivation::Relu,
        }
    }
}

/// Which component a tensor belongs to, for freeze masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Recurrent,
    Linear,
    Deep,
}

#[derive(Debug, Clone)]
pub struct LstmWeights {
    /// Gate order along the 4H axis: input, forget, cell, output.
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// Row-major (out x in); y = x . w^T + b.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Every trainable tensor. Shared between parameters and gradients so
/// the optimizer and finite-difference checks can walk them in one
/// fixed order.
#[derive(Debug, Clone)]
pub struct ModelTensors {
    pub lstm: LstmWeights,
    pub w_rnn: Array2<f64>,
    pub b_rnn: Array1<f64>,
    pub w_l1: Array2<f64>,
    pub w_l2: Array2<f64>,
    pub b_l: Array1<f64>,
    pub w_psi: Array2<f64>,
    pub b_psi: Array1<f64>,
    pub emb_vehicle: Array2<f64>,
    pub emb_link: Array2<f64>,
    pub mlp: Vec<DenseLayer>,
}

impl ModelTensors {
    pub fn zeros(cfg: &ModelConfig, d: usize) -> ModelTensors {
        let h = cfg.hidden;
        let e = cfg.embed_dim;
        let mut mlp = Vec::new();
        let mut prev = 2 * e;
        for &w in &cfg.mlp_hidden {
            mlp.push(DenseLayer { w: Array2::zeros((w, prev)), b: Array1::zeros(w) });
            prev = w;
        }
        mlp.push(DenseLayer { w: Array2::zeros((2, prev)), b: Array1::zeros(2) });
        ModelTensors {
            lstm: LstmWeights {
                w_x: Array2::zeros((4 * h, d)),
                w_h: Array2::zeros((4 * h, h)),
                b: Array1::zeros(4 * h),
            },
            w_rnn: Array2::zeros((h, 2)),
            b_rnn: Array1::zeros(2),
            w_l1: Array2::zeros((d, 2)),
            w_l2: Array2::zeros((d, 2)),
            b_l: Array1::zeros(2),
            w_psi: Array2::zeros((d, d)),
            b_psi: Array1::zeros(d),
            emb_vehicle: Array2::zeros((cfg.n_vehicles + 1, e)),
            emb_link: Array2::zeros((cfg.n_links + 1, e)),
            mlp,
        }
    }

    /// Walks every tensor in a fixed order as (name, component, data).
    pub fn slices_mut(&mut self) -> Vec<(String, Component, &mut [f64])> {
        let mut out: Vec<(String, Component, &mut [f64])> = vec![
            ("lstm.w_x".into(), Component::Recurrent, self.lstm.w_x.as_slice_mut().unwrap()),
            ("lstm.w_h".into(), Component::Recurrent, self.lstm.w_h.as_slice_mut().unwrap()),
            ("lstm.b".into(), Component::Recurrent, self.lstm.b.as_slice_mut().unwrap()),
            ("w_rnn".into(), Component::Recurrent, self.w_rnn.as_slice_mut().unwrap()),
            ("b_rnn".into(), Component::Recurrent, self.b_rnn.as_slice_mut().unwrap()),
            ("w_l1".into(), Component::Linear, self.w_l1.as_slice_mut().unwrap()),
            ("w_l2".into(), Component::Linear, self.w_l2.as_slice_mut().unwrap()),
            ("b_l".into(), Component::Linear, self.b_l.as_slice_mut().unwrap()),
            ("w_psi".into(), Component::Linear, self.w_psi.as_slice_mut().unwrap()),
            ("b_psi".into(), Component::Linear, self.b_psi.as_slice_mut().unwrap()),
            ("emb_vehicle".into(), Component::Deep, self.emb_vehicle.as_slice_mut().unwrap()),
            ("emb_link".into(), Component::Deep, self.emb_link.as_slice_mut().unwrap()),
        ];
        for (i, layer) in self.mlp.iter_mut().enumerate() {
            out.push((format!("mlp[{i}].w"), Component::Deep, layer.w.as_slice_mut().unwrap()));
            out.push((format!("mlp[{i}].b"), Component::Deep, layer.b.as_slice_mut().unwrap()));
        }
        out
    }

    /// self += a * other, tensor by tensor.
    pub fn scaled_add(&mut self, a: f64, other: &ModelTensors) {
        let mut other = other.clone();
        for ((_, _, dst), (_, _, src)) in self.slices_mut().into_iter().zip(other.slices_mut()) {
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += a * *s;
            }
        }
    }

    pub fn zero_component(&mut self, component: Component) {
        for (_, c, data) in self.slices_mut() {
            if c == component {
                data.fill(0.0);
            }
        }
    }

    pub fn is_finite(&mut self) -> bool {
        self.slices_mut().iter().all(|(_, _, s)| s.iter().all(|v| v.is_finite()))
    }
}

/// All trainable weights plus the frozen feature schema and output
/// normalization constants. Immutable during inference and safe to
/// share across threads.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    pub tensors: ModelTensors,
    /// Per-channel label scale (fuel, electric): labels are divided by
    /// these for training; predictions multiplied back.
    pub out_scale: [f64; 2],
    pub schema: FeatureSchema,
}

impl ModelParams {
    pub fn d(&self) -> usize {
        self.schema.d()
    }

    /// Random initialization: uniform fan-in scaling for dense/LSTM
    /// weights, N(0, 0.01) embeddings, forget-gate bias 1.0, MLP
    /// biases 0.01.
    pub fn init(cfg: &ModelConfig, schema: FeatureSchema, seed: u64) -> ModelParams {
        let d = schema.d();
        let h = cfg.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x696e_6974);
        let mut tensors = ModelTensors::zeros(cfg, d);

        let mut fill_uniform = |arr: &mut [f64], fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for v in arr.iter_mut() {
                *v = rng.gen_range(-s..s);
            }
        };
        fill_uniform(tensors.lstm.w_x.as_slice_mut().unwrap(), d);
        fill_uniform(tensors.lstm.w_h.as_slice_mut().unwrap(), h);
        fill_uniform(tensors.w_rnn.as_slice_mut().unwrap(), h);
        fill_uniform(tensors.w_l1.as_slice_mut().unwrap(), d);
        fill_uniform(tensors.w_l2.as_slice_mut().unwrap(), d);
        fill_uniform(tensors.w_psi.as_slice_mut().unwrap(), d);
        let widths: Vec<(usize, usize)> =
            tensors.mlp.iter().map(|l| (l.w.nrows(), l.w.ncols())).collect();
        for (layer, (_, fan_in)) in tensors.mlp.iter_mut().zip(widths) {
            let s = 1.0 / (fan_in as f64).sqrt();
            for v in layer.w.as_slice_mut().unwrap() {
                *v = rng.gen_range(-s..s);
            }
            // small positive bias keeps ReLU units initially active and
            // avoids pre-activations sitting exactly on the kink when an
            // upstream layer is fully inactive
            layer.b.fill(0.01);
        }
        for v in tensors.emb_vehicle.as_slice_mut().unwrap() {
            *v = sample_gauss(&mut rng) * 0.01;
        }
        for v in tensors.emb_link.as_slice_mut().unwrap() {
            *v = sample_gauss(&mut rng) * 0.01;
        }
        // forget-gate bias 1.0
        for j in h..2 * h {
            tensors.lstm.b[j] = 1.0;
        }
        ModelParams { cfg: cfg.clone(), tensors, out_scale: [1.0, 1.0], schema }
    }

    pub fn grads_zero(&self) -> ModelTensors {
        ModelTensors::zeros(&self.cfg, self.d())
    }
}

fn sample_gauss(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
