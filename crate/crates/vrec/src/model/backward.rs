//! Exact reverse-mode gradients of the cumulative link loss with
//! respect to every parameter tensor.

use ndarray::{s, Array2, Axis};
use rayon::prelude::*;

use super::batch::{Batch, TripTensors};
use super::forward::{forward_cached, BatchInput};
use super::loss::{loss_and_error_grad, trip_errors, LossWeights};
use super::train::FreezeMask;
use super::{Component, FinalActivation, ModelParams, ModelTensors};

/// Trips per parallel work unit. Fixed so the gradient reduction order
/// (and therefore the training trajectory) does not depend on the
/// number of worker threads.
const CHUNK_TRIPS: usize = 16;

/// Gradient of the batch-mean loss for every parameter tensor. Frozen
/// components get identically zero gradients.
pub fn grad_batch(
    params: &ModelParams,
    trips: &[TripTensors],
    batch: &Batch,
    weights: &LossWeights,
    freeze: &FreezeMask,
) -> (f64, ModelTensors) {
    batch.assert_valid(trips);
    let chunks: Vec<Batch> = batch
        .indices
        .chunks(CHUNK_TRIPS)
        .map(|c| Batch { indices: c.to_vec(), allow_ragged: batch.allow_ragged })
        .collect();
    let results: Vec<(f64, ModelTensors)> = chunks
        .par_iter()
        .map(|chunk| grad_chunk(params, trips, chunk, weights))
        .collect();
    let n = batch.indices.len() as f64;
    let mut loss_sum = 0.0;
    let mut grads = ModelTensors::zeros(&params.cfg, params.d());
    for (l, g) in &results {
        loss_sum += l;
        grads.scaled_add(1.0, g);
    }
    let inv_n = 1.0 / n;
    for (_, _, slice) in grads.slices_mut() {
        for v in slice {
            *v *= inv_n;
        }
    }
    if freeze.recurrent {
        grads.zero_component(Component::Recurrent);
    }
    if freeze.linear {
        grads.zero_component(Component::Linear);
    }
    if freeze.deep {
        grads.zero_component(Component::Deep);
    }
    (loss_sum * inv_n, grads)
}

/// Sum (not mean) of per-trip losses and gradients over one sub-batch.
fn grad_chunk(
    params: &ModelParams,
    trips: &[TripTensors],
    batch: &Batch,
    weights: &LossWeights,
) -> (f64, ModelTensors) {
    let input = BatchInput::new(trips, batch);
    let cache = forward_cached(params, &input);
    let b = input.b();
    let h_size = params.cfg.hidden;
    let e_dim = params.cfg.embed_dim;
    let tns = &params.tensors;
    let mut grads = ModelTensors::zeros(&params.cfg, params.d());

    // dL/dp per step (loss summed over trips, not averaged)
    let mut loss_sum = 0.0;
    let mut dp: Vec<Array2<f64>> = (0..input.t_max)
        .map(|_| Array2::zeros((b, 2)))
        .collect();
    for r in 0..b {
        let errs = trip_errors(&cache, &input, r);
        for (ch, e) in errs.iter().enumerate() {
            if input.trip(r).mask[ch] == 0.0 {
                continue;
            }
            let (loss, egrad) = loss_and_error_grad(e, weights);
            loss_sum += loss;
            // e = mask * (y - p) and mask is 1 here, so dL/dp = -dL/de
            for (t, g) in egrad.iter().enumerate() {
                dp[t][[r, ch]] = -g;
            }
        }
    }

    // through the final activation
    let dz: Vec<Array2<f64>> = (0..input.t_max)
        .map(|t| {
            let step = &cache.steps[t];
            match params.cfg.final_activation {
                FinalActivation::Relu => {
                    let mut d = dp[t].clone();
                    d.zip_mut_with(&step.raw, |g, &r| {
                        if r <= 0.0 {
                            *g = 0.0;
                        }
                    });
                    d
                }
                FinalActivation::Sigmoid => {
                    let mut d = dp[t].clone();
                    d.zip_mut_with(&step.p, |g, &p| *g *= p * (1.0 - p));
                    d
                }
            }
        })
        .collect();

    // per-step components: linear and deep; collect recurrent head grads
    let mut dh_head: Vec<Array2<f64>> = Vec::with_capacity(input.t_max);
    for t in 0..input.t_max {
        let step = &cache.steps[t];
        let d_out = &dz[t];

        // recurrent head: yr = relu(h . w_rnn + b_rnn)
        let mut dpre_head = d_out.clone();
        dpre_head.zip_mut_with(&step.yr, |g, &y| {
            if y <= 0.0 {
                *g = 0.0;
            }
        });
        grads.w_rnn += &step.h.t().dot(&dpre_head);
        grads.b_rnn += &dpre_head.sum_axis(Axis(0));
        dh_head.push(dpre_head.dot(&tns.w_rnn.t()));

        // linear: yl = relu(x w_l1 + psi w_l2 + b_l), psi = x*(q)+x
        let mut dpre_lin = d_out.clone();
        dpre_lin.zip_mut_with(&step.yl, |g, &y| {
            if y <= 0.0 {
                *g = 0.0;
            }
        });
        grads.w_l1 += &step.x.t().dot(&dpre_lin);
        grads.w_l2 += &step.psi.t().dot(&dpre_lin);
        grads.b_l += &dpre_lin.sum_axis(Axis(0));
        let dpsi = dpre_lin.dot(&tns.w_l2.t());
        let dq = &dpsi * &step.x;
        grads.w_psi += &dq.t().dot(&step.x);
        grads.b_psi += &dq.sum_axis(Axis(0));

        // deep MLP backward
        let n_layers = tns.mlp.len();
        let mut da = d_out.clone();
        for l in (0..n_layers).rev() {
            let z = &step.zs[l];
            let mut dpre = da.clone();
            dpre.zip_mut_with(z, |g, &v| {
                if v <= 0.0 {
                    *g = 0.0;
                }
            });
            let layer_in = if l == 0 { &step.a0 } else { &step.zs[l - 1] };
            grads.mlp[l].w += &dpre.t().dot(layer_in);
            grads.mlp[l].b += &dpre.sum_axis(Axis(0));
            da = dpre.dot(&tns.mlp[l].w);
        }
        // da is now d a0: accumulate into the embedding tables
        for r in 0..b {
            let trip = input.trip(r);
            if t >= trip.t_len {
                continue;
            }
            let dv = da.slice(s![r, 0..e_dim]);
            let dl = da.slice(s![r, e_dim..2 * e_dim]);
            let mut vrow = grads.emb_vehicle.row_mut(trip.vehicle_row);
            vrow += &dv;
            let mut lrow = grads.emb_link.row_mut(trip.link_rows[t]);
            lrow += &dl;
        }
    }

    // LSTM backpropagation through time
    let zeros = Array2::zeros((b, h_size));
    let mut dh_rec: Array2<f64> = zeros.clone();
    let mut dc: Array2<f64> = zeros.clone();
    for t in (0..input.t_max).rev() {
        let step = &cache.steps[t];
        let dh = &dh_head[t] + &dh_rec;
        let dgo = &dh * &step.tanh_c;
        let one_minus_tc2 = step.tanh_c.mapv(|v| 1.0 - v * v);
        dc = dc + &dh * &step.go * &one_minus_tc2;
        let c_prev = if t > 0 { &cache.steps[t - 1].c } else { &zeros };
        let h_prev = if t > 0 { &cache.steps[t - 1].h } else { &zeros };
        let dgf = &dc * c_prev;
        let dgi = &dc * &step.gg;
        let dgg = &dc * &step.gi;
        let dc_prev = &dc * &step.gf;

        let mut dgates = Array2::zeros((b, 4 * h_size));
        dgates
            .slice_mut(s![.., 0..h_size])
            .assign(&(&dgi * &step.gi * &step.gi.mapv(|v| 1.0 - v)));
        dgates
            .slice_mut(s![.., h_size..2 * h_size])
            .assign(&(&dgf * &step.gf * &step.gf.mapv(|v| 1.0 - v)));
        dgates
            .slice_mut(s![.., 2 * h_size..3 * h_size])
            .assign(&(&dgg * &step.gg.mapv(|v| 1.0 - v * v)));
        dgates
            .slice_mut(s![.., 3 * h_size..4 * h_size])
            .assign(&(&dgo * &step.go * &step.go.mapv(|v| 1.0 - v)));

        grads.lstm.w_x += &dgates.t().dot(&step.x);
        grads.lstm.w_h += &dgates.t().dot(h_prev);
        grads.lstm.b += &dgates.sum_axis(Axis(0));
        dh_rec = dgates.dot(&tns.lstm.w_h);
        dc = dc_prev;
    }

    (loss_sum, grads)
}

/// Central finite-difference gradient of the batch loss with respect to
/// a single parameter coordinate. Test oracle; lives here so both unit
/// and acceptance suites can share it.
pub fn finite_difference(
    params: &ModelParams,
    trips: &[TripTensors],
    batch: &Batch,
    weights: &LossWeights,
    tensor_index: usize,
    coord: usize,
    step: f64,
) -> f64 {
    let mut plus = params.clone();
    plus.tensors.slices_mut()[tensor_index].2[coord] += step;
    let mut minus = params.clone();
    minus.tensors.slices_mut()[tensor_index].2[coord] -= step;
    let lp = super::loss::loss_batch(&plus, trips, batch, weights);
    let lm = super::loss::loss_batch(&minus, trips, batch, weights);
    (lp - lm) / (2.0 * step)
}
