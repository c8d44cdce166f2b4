//! Forward evaluation: single-trip component operations and the cached
//! batched pass used by training.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::domain::{EnergyVector, RouteTrip, VehicleSpec};

use super::batch::{Batch, TripTensors};
use super::{relu, sigmoid, FinalActivation, ModelParams};

/// One cross-layer application: x0 ⊙ (W xprev + b) + xprev.
/// Output length equals the input length D.
pub fn cross_layer(
    x0: ArrayView1<f64>,
    xprev: ArrayView1<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
) -> Array1<f64> {
    assert_eq!(x0.len(), xprev.len());
    assert_eq!(w.nrows(), x0.len());
    assert_eq!(w.ncols(), xprev.len());
    assert_eq!(b.len(), x0.len());
    let q = w.dot(&xprev) + b;
    &x0 * &q + &xprev
}

/// Recurrent component: LSTM over the rows of X (zero initial state)
/// followed by a rectified per-link head. Output is T x 2.
pub fn forward_recurrent(params: &ModelParams, x: ArrayView2<f64>) -> Array2<f64> {
    let h_size = params.cfg.hidden;
    let t_len = x.nrows();
    let lstm = &params.tensors.lstm;
    let mut h = Array1::zeros(h_size);
    let mut c = Array1::<f64>::zeros(h_size);
    let mut out = Array2::zeros((t_len, 2));
    for t in 0..t_len {
        let pre = lstm.w_x.dot(&x.row(t)) + lstm.w_h.dot(&h) + &lstm.b;
        let gi = pre.slice(s![0..h_size]).mapv(sigmoid);
        let gf = pre.slice(s![h_size..2 * h_size]).mapv(sigmoid);
        let gg = pre.slice(s![2 * h_size..3 * h_size]).mapv(f64::tanh);
        let go = pre.slice(s![3 * h_size..4 * h_size]).mapv(sigmoid);
        c = &gf * &c + &gi * &gg;
        h = &go * &c.mapv(f64::tanh);
        let head = h.dot(&params.tensors.w_rnn) + &params.tensors.b_rnn;
        out[[t, 0]] = relu(head[0]);
        out[[t, 1]] = relu(head[1]);
    }
    out
}

/// Linear component: link-wise cross layer (x0 = xprev = x_t) plus the
/// direct affine term, rectified. Output is T x 2, computed per link
/// independently.
pub fn forward_linear(params: &ModelParams, x: ArrayView2<f64>) -> Array2<f64> {
    let tns = &params.tensors;
    let mut out = Array2::zeros((x.nrows(), 2));
    for t in 0..x.nrows() {
        let row = x.row(t);
        let psi = cross_layer(row, row, &tns.w_psi, &tns.b_psi);
        let pre = row.dot(&tns.w_l1) + psi.dot(&tns.w_l2) + &tns.b_l;
        out[[t, 0]] = relu(pre[0]);
        out[[t, 1]] = relu(pre[1]);
    }
    out
}

/// Deep component: concatenated vehicle/link embeddings through the
/// MLP, per link. `vehicle_row` / `link_rows` are embedding table rows
/// (0 is the reserved out-of-vocabulary row).
pub fn forward_deep(params: &ModelParams, vehicle_row: usize, link_rows: &[usize]) -> Array2<f64> {
    let tns = &params.tensors;
    assert!(vehicle_row < tns.emb_vehicle.nrows(), "vehicle embedding row out of bounds");
    let e = params.cfg.embed_dim;
    let mut out = Array2::zeros((link_rows.len(), 2));
    for (t, &lrow) in link_rows.iter().enumerate() {
        assert!(lrow < tns.emb_link.nrows(), "link embedding row out of bounds");
        let mut a = Array1::zeros(2 * e);
        a.slice_mut(s![0..e]).assign(&tns.emb_vehicle.row(vehicle_row));
        a.slice_mut(s![e..2 * e]).assign(&tns.emb_link.row(lrow));
        for layer in &tns.mlp {
            a = (layer.w.dot(&a) + &layer.b).mapv(relu);
        }
        out[[t, 0]] = a[0];
        out[[t, 1]] = a[1];
    }
    out
}

pub(crate) fn final_activation(params: &ModelParams, v: f64) -> f64 {
    match params.cfg.final_activation {
        FinalActivation::Relu => relu(v),
        FinalActivation::Sigmoid => sigmoid(v),
    }
}

/// Per-link predictions in physical units, with the powertrain channel
/// mask applied (fuel zeroed for BEV, electric zeroed for Conv/ISG/HEV).
pub fn predict_links(
    route: &RouteTrip,
    vehicle: &VehicleSpec,
    params: &ModelParams,
) -> Vec<EnergyVector> {
    let tt = super::batch::prepare_trip(
        &crate::domain::LabeledTrip {
            route: route.clone(),
            vehicle: vehicle.clone(),
            labels: vec![EnergyVector::ZERO; route.len()],
        },
        params,
    );
    let yr = forward_recurrent(params, tt.x.view());
    let yl = forward_linear(params, tt.x.view());
    let yd = forward_deep(params, tt.vehicle_row, &tt.link_rows);
    (0..route.len())
        .map(|t| {
            let fuel = final_activation(params, yr[[t, 0]] + yl[[t, 0]] + yd[[t, 0]])
                * tt.mask[0]
                * params.out_scale[0];
            let elec = final_activation(params, yr[[t, 1]] + yl[[t, 1]] + yd[[t, 1]])
                * tt.mask[1]
                * params.out_scale[1];
            EnergyVector::new(fuel, elec)
        })
        .collect()
}

/// Whole-trip totals: the sum of [`predict_links`] rows.
pub fn predict_trip(route: &RouteTrip, vehicle: &VehicleSpec, params: &ModelParams) -> EnergyVector {
    EnergyVector::sum(&predict_links(route, vehicle, params))
}

/// Per-step activations cached for backpropagation. All arrays are
/// B x (width) for the batch being processed.
pub(crate) struct StepCache {
    pub x: Array2<f64>,
    pub gi: Array2<f64>,
    pub gf: Array2<f64>,
    pub gg: Array2<f64>,
    pub go: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
    pub yr: Array2<f64>,
    pub psi: Array2<f64>,
    pub yl: Array2<f64>,
    pub a0: Array2<f64>,
    /// Post-activation MLP outputs, layer by layer (last is the 2-wide
    /// deep output).
    pub zs: Vec<Array2<f64>>,
    pub raw: Array2<f64>,
    /// Final activation output, before channel masking.
    pub p: Array2<f64>,
}

pub(crate) struct ForwardCache {
    pub steps: Vec<StepCache>,
}

/// Stacked view of one batch.
pub(crate) struct BatchInput<'a> {
    pub trips: &'a [TripTensors],
    pub indices: &'a [usize],
    pub t_max: usize,
}

impl<'a> BatchInput<'a> {
    pub fn new(trips: &'a [TripTensors], batch: &'a Batch) -> BatchInput<'a> {
        batch.assert_valid(trips);
        BatchInput { trips, indices: &batch.indices, t_max: batch.max_len(trips) }
    }

    pub fn b(&self) -> usize {
        self.indices.len()
    }

    pub fn trip(&self, r: usize) -> &TripTensors {
        &self.trips[self.indices[r]]
    }
}

/// Full cached forward pass over a (possibly padded) batch. Rows past a
/// trip's length carry zero features and are excluded from the loss.
pub(crate) fn forward_cached(params: &ModelParams, input: &BatchInput) -> ForwardCache {
    let b = input.b();
    let h_size = params.cfg.hidden;
    let d = params.d();
    let e = params.cfg.embed_dim;
    let tns = &params.tensors;
    let mut h_prev = Array2::zeros((b, h_size));
    let mut c_prev = Array2::<f64>::zeros((b, h_size));
    let mut steps = Vec::with_capacity(input.t_max);

    for t in 0..input.t_max {
        let mut x = Array2::zeros((b, d));
        for r in 0..b {
            let trip = input.trip(r);
            if t < trip.t_len {
                x.row_mut(r).assign(&trip.x.row(t));
            }
        }
        // recurrent
        let pre = x.dot(&tns.lstm.w_x.t()) + h_prev.dot(&tns.lstm.w_h.t()) + &tns.lstm.b;
        let gi = pre.slice(s![.., 0..h_size]).mapv(sigmoid);
        let gf = pre.slice(s![.., h_size..2 * h_size]).mapv(sigmoid);
        let gg = pre.slice(s![.., 2 * h_size..3 * h_size]).mapv(f64::tanh);
        let go = pre.slice(s![.., 3 * h_size..4 * h_size]).mapv(sigmoid);
        let c = &gf * &c_prev + &gi * &gg;
        let tanh_c = c.mapv(f64::tanh);
        let h = &go * &tanh_c;
        let yr = (h.dot(&tns.w_rnn) + &tns.b_rnn).mapv(relu);
        // linear
        let q = x.dot(&tns.w_psi.t()) + &tns.b_psi;
        let psi = &x * &q + &x;
        let yl = (x.dot(&tns.w_l1) + psi.dot(&tns.w_l2) + &tns.b_l).mapv(relu);
        // deep
        let mut a0 = Array2::zeros((b, 2 * e));
        for r in 0..b {
            let trip = input.trip(r);
            let lrow = if t < trip.t_len { trip.link_rows[t] } else { 0 };
            a0.slice_mut(s![r, 0..e]).assign(&tns.emb_vehicle.row(trip.vehicle_row));
            a0.slice_mut(s![r, e..2 * e]).assign(&tns.emb_link.row(lrow));
        }
        let mut zs = Vec::with_capacity(tns.mlp.len());
        let mut a = a0.clone();
        for layer in &tns.mlp {
            a = (a.dot(&layer.w.t()) + &layer.b).mapv(relu);
            zs.push(a.clone());
        }
        let yd = zs.last().unwrap();
        let raw = &yr + &yl + yd;
        let p = raw.mapv(|v| final_activation(params, v));
        steps.push(StepCache {
            x,
            gi,
            gf,
            gg,
            go,
            c: c.clone(),
            tanh_c,
            h: h.clone(),
            yr,
            psi,
            yl,
            a0,
            zs,
            raw,
            p,
        });
        h_prev = h;
        c_prev = c;
    }
    ForwardCache { steps }
}

/// Batched whole-dataset prediction of trip totals in physical units.
/// Groups trips by exact length internally; output order matches input.
pub fn predict_dataset(
    params: &ModelParams,
    trips: &[crate::domain::LabeledTrip],
) -> Vec<EnergyVector> {
    use super::batch::{make_batches, prepare_trip, Batching};
    let tensors: Vec<TripTensors> = trips.iter().map(|t| prepare_trip(t, params)).collect();
    let lengths: Vec<usize> = tensors.iter().map(|t| t.t_len).collect();
    let batches = make_batches(&lengths, Batching::Exact, 64, 0, 0);
    let mut out = vec![EnergyVector::ZERO; trips.len()];
    for batch in &batches {
        let input = BatchInput::new(&tensors, batch);
        let cache = forward_cached(params, &input);
        for (r, &idx) in batch.indices.iter().enumerate() {
            let tt = &tensors[idx];
            let mut total = EnergyVector::ZERO;
            for step in cache.steps.iter().take(tt.t_len) {
                total.fuel_g += step.p[[r, 0]] * tt.mask[0] * params.out_scale[0];
                total.electric_wh += step.p[[r, 1]] * tt.mask[1] * params.out_scale[1];
            }
            out[idx] = total;
        }
    }
    out
}
