//! Training loop: exact-length batched gradient descent with optional
//! momentum or Adam, per-component freeze masks, and best-validation
//! checkpointing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::LabeledTrip;
use crate::error::{Error, Result};
use crate::features::FeatureSchema;

use super::backward::grad_batch;
use super::batch::{make_batches, prepare_trip, Batching, TripTensors};
use super::forward::predict_dataset;
use super::loss::{loss_batch, LossWeights};
use super::{ModelConfig, ModelParams, ModelTensors};

/// Per-component freeze switches; a frozen component receives zero
/// gradients and never moves.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct FreezeMask {
    pub recurrent: bool,
    pub linear: bool,
    pub deep: bool,
}

impl FreezeMask {
    pub fn any_trainable(&self) -> bool {
        !(self.recurrent && self.linear && self.deep)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Sgd { momentum: 0.9 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied per epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip; None disables clipping. The
    /// cumulative loss produces O(T^2) gradients on long trips, so the
    /// default keeps first-order methods stable.
    pub clip_norm: Option<f64>,
    pub optimizer: Optimizer,
    pub freeze: FreezeMask,
    pub loss_weights: LossWeights,
    pub batching: Batching,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 0.05,
            lr_decay: 0.97,
            batch_size: 64,
            clip_norm: Some(5.0),
            optimizer: Optimizer::default(),
            freeze: FreezeMask::default(),
            loss_weights: LossWeights::default(),
            batching: Batching::Exact,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !self.freeze.any_trainable() {
            return Err(Error::Config("at least one component must be unfrozen".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 1)".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of training history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_maape: f64,
}

fn percentile_95(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((0.95 * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[idx - 1]
}

/// Pooled trip-level MAAPE over active channels with nonzero labels.
fn maape_over(trips: &[LabeledTrip], preds: &[crate::domain::EnergyVector]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (trip, pred) in trips.iter().zip(preds) {
        let truth = trip.trip_total();
        let p = trip.vehicle.powertrain;
        if p.consumes_fuel() && truth.fuel_g != 0.0 {
            sum += ((truth.fuel_g - pred.fuel_g) / truth.fuel_g).abs().atan();
            n += 1;
        }
        if p.consumes_electric() && truth.electric_wh != 0.0 {
            sum += ((truth.electric_wh - pred.electric_wh) / truth.electric_wh).abs().atan();
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn clip_global_norm(grads: &mut ModelTensors, max_norm: f64) {
    let slices = grads.slices_mut();
    let sq: f64 = slices.iter().map(|(_, _, s)| s.iter().map(|v| v * v).sum::<f64>()).sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for (_, _, s) in slices {
            for v in s {
                *v *= scale;
            }
        }
    }
}

struct OptimizerState {
    velocity: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: usize,
}

impl OptimizerState {
    fn new(tensors: &mut ModelTensors) -> OptimizerState {
        let sizes: Vec<usize> = tensors.slices_mut().iter().map(|(_, _, s)| s.len()).collect();
        OptimizerState {
            velocity: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn apply(
        &mut self,
        opt: &Optimizer,
        lr: f64,
        params: &mut ModelTensors,
        grads: &mut ModelTensors,
    ) {
        self.step += 1;
        let pslices = params.slices_mut();
        let gslices = grads.slices_mut();
        match *opt {
            Optimizer::Sgd { momentum } => {
                for (k, ((_, _, p), (_, _, g))) in pslices.into_iter().zip(gslices).enumerate() {
                    let v = &mut self.velocity[k];
                    for i in 0..p.len() {
                        v[i] = momentum * v[i] + g[i];
                        p[i] -= lr * v[i];
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = self.step as f64;
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                for (k, ((_, _, p), (_, _, g))) in pslices.into_iter().zip(gslices).enumerate() {
                    let m = &mut self.velocity[k];
                    let v = &mut self.second[k];
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Trains the ensemble on `dataset` with an internal random
/// train/validation split. Returns the best-validation parameters and
/// the per-epoch history. A non-finite loss aborts with a divergence
/// error.
pub fn train(
    dataset: &[LabeledTrip],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<(ModelParams, Vec<EpochStats>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("empty training dataset".into()));
    }

    // split
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7370_6c69_74);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut rng);
    let n_val = (dataset.len() as f64 * cfg.val_fraction).round() as usize;
    let (val_idx, train_idx) = indices.split_at(n_val.min(dataset.len().saturating_sub(1)));
    let train_trips: Vec<LabeledTrip> = train_idx.iter().map(|&i| dataset[i].clone()).collect();
    let val_trips: Vec<LabeledTrip> = val_idx.iter().map(|&i| dataset[i].clone()).collect();

    // fit schema + output scale on the training split only
    let mut schema = FeatureSchema::new();
    let pairs: Vec<_> = train_trips.iter().map(|t| (&t.route, &t.vehicle)).collect();
    schema.fit(&pairs);
    let mut fuel_vals = Vec::new();
    let mut elec_vals = Vec::new();
    for trip in &train_trips {
        let p = trip.vehicle.powertrain;
        for label in &trip.labels {
            if p.consumes_fuel() {
                fuel_vals.push(label.fuel_g);
            }
            if p.consumes_electric() {
                elec_vals.push(label.electric_wh);
            }
        }
    }
    let out_scale = [
        percentile_95(fuel_vals).max(1e-9),
        percentile_95(elec_vals).max(1e-9),
    ];

    let mut params = ModelParams::init(model_cfg, schema, cfg.seed);
    params.out_scale = out_scale;

    let mut history = Vec::new();
    if cfg.epochs == 0 {
        return Ok((params, history));
    }

    let train_tensors: Vec<TripTensors> =
        train_trips.iter().map(|t| prepare_trip(t, &params)).collect();
    let val_tensors: Vec<TripTensors> =
        val_trips.iter().map(|t| prepare_trip(t, &params)).collect();
    let train_lengths: Vec<usize> = train_tensors.iter().map(|t| t.t_len).collect();
    let val_lengths: Vec<usize> = val_tensors.iter().map(|t| t.t_len).collect();

    let mut opt_state = OptimizerState::new(&mut params.tensors);
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate * cfg.lr_decay.powi(epoch as i32);
        let batches = make_batches(&train_lengths, cfg.batching, cfg.batch_size, cfg.seed, epoch);
        let mut train_loss_sum = 0.0;
        let mut train_count = 0usize;
        for batch in &batches {
            let (loss, mut grads) =
                grad_batch(&params, &train_tensors, batch, &cfg.loss_weights, &cfg.freeze);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            train_loss_sum += loss * batch.indices.len() as f64;
            train_count += batch.indices.len();
            if let Some(max_norm) = cfg.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            opt_state.apply(&cfg.optimizer, lr, &mut params.tensors, &mut grads);
        }
        if !params.tensors.is_finite() {
            return Err(Error::Diverged(format!("non-finite parameters at epoch {epoch}")));
        }
        let train_loss = train_loss_sum / train_count.max(1) as f64;

        let (val_loss, val_maape) = if val_tensors.is_empty() {
            (train_loss, f64::NAN)
        } else {
            let val_batches = make_batches(&val_lengths, Batching::Exact, cfg.batch_size, 0, 0);
            let mut sum = 0.0;
            let mut count = 0usize;
            for batch in &val_batches {
                sum += loss_batch(&params, &val_tensors, batch, &cfg.loss_weights)
                    * batch.indices.len() as f64;
                count += batch.indices.len();
            }
            let vl = sum / count.max(1) as f64;
            let preds = predict_dataset(&params, &val_trips);
            (vl, maape_over(&val_trips, &preds))
        };
        history.push(EpochStats { epoch, train_loss, val_loss, val_maape });

        let better = match &best {
            None => true,
            Some((best_loss, _)) => val_loss < *best_loss,
        };
        if better {
            best = Some((val_loss, params.clone()));
        }
    }

    let best_params = best.map(|(_, p)| p).unwrap_or(params);
    Ok((best_params, history))
}
