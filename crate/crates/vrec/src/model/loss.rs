//! The cumulative link loss: per trip, the mean squared prefix error
//! (C_sum) plus the squared whole-trip error (C_trip) plus the mean
//! squared per-link error (C_link), summed over active channels and
//! averaged over the batch.

use serde::{Deserialize, Serialize};

use super::batch::{Batch, TripTensors};
use super::forward::{forward_cached, BatchInput, ForwardCache};
use super::ModelParams;

/// Relative weights of the three loss terms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    pub sum_w: f64,
    pub trip_w: f64,
    pub link_w: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { sum_w: 1.0, trip_w: 1.0, link_w: 1.0 }
    }
}

/// The three loss terms for one channel's error sequence:
/// (C_sum, C_trip, C_link). At T = 1 all three coincide at e^2.
pub fn loss_terms_from_errors(e: &[f64]) -> (f64, f64, f64) {
    let t_len = e.len();
    assert!(t_len >= 1);
    let tf = t_len as f64;
    let mut prefix = 0.0;
    let mut c_sum = 0.0;
    let mut c_link = 0.0;
    for &err in e {
        prefix += err;
        c_sum += prefix * prefix;
        c_link += err * err;
    }
    (c_sum / tf, prefix * prefix, c_link / tf)
}

/// Per-trip loss and the gradient of that loss with respect to each
/// error e_t, for one channel.
pub(crate) fn loss_and_error_grad(e: &[f64], w: &LossWeights) -> (f64, Vec<f64>) {
    let t_len = e.len();
    let tf = t_len as f64;
    let mut prefix_sums = Vec::with_capacity(t_len);
    let mut acc = 0.0;
    for &err in e {
        acc += err;
        prefix_sums.push(acc);
    }
    let s_total = acc;
    let (c_sum, c_trip, c_link) = loss_terms_from_errors(e);
    let loss = w.sum_w * c_sum + w.trip_w * c_trip + w.link_w * c_link;
    // dC_sum/de_t = (2/T) * sum_{l >= t} S_l
    let mut suffix = 0.0;
    let mut grad = vec![0.0; t_len];
    for t in (0..t_len).rev() {
        suffix += prefix_sums[t];
        grad[t] = w.sum_w * 2.0 / tf * suffix
            + w.trip_w * 2.0 * s_total
            + w.link_w * 2.0 / tf * e[t];
    }
    (loss, grad)
}

/// Extracts the masked normalized error sequence e_t = y_t - p_t for
/// one trip (row `r`) of a forward pass, per channel.
pub(crate) fn trip_errors(
    cache: &ForwardCache,
    input: &BatchInput,
    r: usize,
) -> [Vec<f64>; 2] {
    let trip = input.trip(r);
    let mut out = [Vec::with_capacity(trip.t_len), Vec::with_capacity(trip.t_len)];
    for (ch, errs) in out.iter_mut().enumerate() {
        for (t, step) in cache.steps.iter().enumerate().take(trip.t_len) {
            errs.push(trip.mask[ch] * (trip.y[[t, ch]] - step.p[[r, ch]]));
        }
    }
    out
}

/// Sum of per-trip losses over a batch (both channels), not yet
/// averaged.
pub(crate) fn batch_loss_sum(cache: &ForwardCache, input: &BatchInput, w: &LossWeights) -> f64 {
    let mut total = 0.0;
    for r in 0..input.b() {
        let errs = trip_errors(cache, input, r);
        for (ch, e) in errs.iter().enumerate() {
            if input.trip(r).mask[ch] == 0.0 {
                continue;
            }
            let (c_sum, c_trip, c_link) = loss_terms_from_errors(e);
            total += w.sum_w * c_sum + w.trip_w * c_trip + w.link_w * c_link;
        }
    }
    total
}

/// Mean loss over the trips of a batch. Exact-length batches must be
/// length-homogeneous; a mixed batch in exact mode is a fault.
pub fn loss_batch(
    params: &ModelParams,
    trips: &[TripTensors],
    batch: &Batch,
    weights: &LossWeights,
) -> f64 {
    let input = BatchInput::new(trips, batch);
    let cache = forward_cached(params, &input);
    batch_loss_sum(&cache, &input, weights) / input.b() as f64
}
