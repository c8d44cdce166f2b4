//! Cross-cutting model tests: forward semantics, analytic gradients
//! against finite differences, freeze contracts, checkpointing, and
//! training smoke runs.

use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{EnergyVector, LabeledTrip};
use crate::features::FeatureSchema;
use crate::synthgen::{generate_dataset, SynthConfig};
use crate::testutil::{bev_vehicle, conv_vehicle, phev_vehicle, simple_route};

use super::backward::finite_difference;
use super::batch::{prepare_trip, Batch, TripTensors};
use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::forward::{cross_layer, forward_recurrent, predict_dataset, predict_trip};
use super::loss::LossWeights;
use super::train::{train, FreezeMask, Optimizer, TrainConfig};
use super::{grad_batch, FinalActivation, ModelConfig, ModelParams};

fn small_cfg() -> ModelConfig {
    ModelConfig {
        hidden: 6,
        embed_dim: 4,
        mlp_hidden: vec![5, 4],
        n_vehicles: 5,
        n_links: 10,
        final_activation: FinalActivation::Relu,
    }
}

fn labeled(trip_id: u64, n: usize, which: u8) -> LabeledTrip {
    let route = simple_route(trip_id, n);
    let (vehicle, labels) = match which {
        0 => (
            conv_vehicle(trip_id as u32 % 5),
            (0..n).map(|t| EnergyVector::new(60.0 + 10.0 * t as f64, 0.0)).collect(),
        ),
        1 => (
            bev_vehicle(trip_id as u32 % 5),
            (0..n).map(|t| EnergyVector::new(0.0, 140.0 + 20.0 * t as f64)).collect(),
        ),
        _ => (
            phev_vehicle(trip_id as u32 % 5),
            (0..n)
                .map(|t| EnergyVector::new(20.0 + 5.0 * t as f64, 80.0 + 10.0 * t as f64))
                .collect(),
        ),
    };
    LabeledTrip { route, vehicle, labels }
}

fn small_params(seed: u64) -> (ModelParams, Vec<LabeledTrip>) {
    let trips: Vec<LabeledTrip> = vec![
        labeled(0, 2, 0),
        labeled(1, 2, 1),
        labeled(2, 3, 2),
        labeled(3, 3, 0),
    ];
    let mut schema = FeatureSchema::new();
    let pairs: Vec<_> = trips.iter().map(|t| (&t.route, &t.vehicle)).collect();
    schema.fit(&pairs);
    let mut params = ModelParams::init(&small_cfg(), schema, seed);
    params.out_scale = [110.0, 170.0];
    (params, trips)
}

#[test]
fn cross_layer_with_zero_weights_is_identity() {
    let x = array![1.0, -2.0, 0.5];
    let w = Array2::zeros((3, 3));
    let b = Array1::zeros(3);
    let out = cross_layer(x.view(), x.view(), &w, &b);
    assert_eq!(out, x);
}

#[test]
fn cross_layer_matches_hand_computation() {
    // x0 * (W xprev + b) + xprev, elementwise
    let x0 = array![2.0, -1.0];
    let xp = array![1.0, 3.0];
    let w = array![[1.0, 0.0], [0.5, 0.5]];
    let b = array![0.1, -0.2];
    // q = [1.1, 1.8], out = x0*q + xp = [3.2, 1.2]
    let out = cross_layer(x0.view(), xp.view(), &w, &b);
    assert!((out[0] - 3.2).abs() < 1e-12);
    assert!((out[1] - 1.2).abs() < 1e-12);
}

#[test]
fn zero_tensors_predict_zero() {
    let (mut params, trips) = small_params(1);
    for (_, _, s) in params.tensors.slices_mut() {
        s.fill(0.0);
    }
    let pred = predict_trip(&trips[0].route, &trips[0].vehicle, &params);
    assert_eq!(pred, EnergyVector::ZERO);
}

#[test]
fn recurrent_output_is_causal() {
    let (params, trips) = small_params(2);
    let tt = prepare_trip(&trips[3], &params);
    let base = forward_recurrent(&params, tt.x.view());
    let mut x2 = tt.x.clone();
    for v in x2.row_mut(2).iter_mut() {
        *v += 1.5;
    }
    let changed = forward_recurrent(&params, x2.view());
    for t in 0..2 {
        for ch in 0..2 {
            assert_eq!(base[[t, ch]], changed[[t, ch]], "step {t} leaked the future");
        }
    }
    assert_ne!(base.row(2), changed.row(2));
}

#[test]
fn prediction_is_pure() {
    let (params, trips) = small_params(3);
    let a = predict_trip(&trips[2].route, &trips[2].vehicle, &params);
    let b = predict_trip(&trips[2].route, &trips[2].vehicle, &params);
    assert_eq!(a, b);
}

#[test]
fn channel_mask_zeroes_inactive_channels() {
    let (params, trips) = small_params(4);
    let conv = predict_trip(&trips[0].route, &trips[0].vehicle, &params);
    assert_eq!(conv.electric_wh, 0.0);
    let bev = predict_trip(&trips[1].route, &trips[1].vehicle, &params);
    assert_eq!(bev.fuel_g, 0.0);
    let phev = predict_trip(&trips[2].route, &trips[2].vehicle, &params);
    assert!(phev.fuel_g >= 0.0 && phev.electric_wh >= 0.0);
}

#[test]
fn batched_prediction_matches_single_trip_path() {
    let (params, trips) = small_params(5);
    let batched = predict_dataset(&params, &trips);
    for (trip, b) in trips.iter().zip(&batched) {
        let single = predict_trip(&trip.route, &trip.vehicle, &params);
        assert!((single.fuel_g - b.fuel_g).abs() < 1e-10);
        assert!((single.electric_wh - b.electric_wh).abs() < 1e-10);
    }
}

fn fd_check(params: &ModelParams, tensors_of_trips: &[TripTensors], batch: &Batch) {
    let weights = LossWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (_, mut grads) = grad_batch(params, tensors_of_trips, batch, &weights, &FreezeMask::default());
    let names: Vec<(String, usize)> = grads
        .slices_mut()
        .iter()
        .map(|(n, _, s)| (n.clone(), s.len()))
        .collect();
    for (ti, (name, len)) in names.iter().enumerate() {
        let n_coords = (*len).min(32);
        let mut checked = 0usize;
        while checked < n_coords {
            let coord = rng.gen_range(0..*len);
            let analytic = grads.slices_mut()[ti].2[coord];
            let fd = finite_difference(params, tensors_of_trips, batch, &weights, ti, coord, 1e-5);
            let denom = analytic.abs().max(fd.abs()).max(1e-6);
            let rel = (analytic - fd).abs() / denom;
            assert!(
                rel <= 1e-4,
                "tensor {name} coord {coord}: analytic {analytic} vs fd {fd} (rel {rel})"
            );
            checked += 1;
        }
    }
}

#[test]
fn gradients_match_finite_differences_exact_batch() {
    let (params, trips) = small_params(6);
    let tensors: Vec<TripTensors> = trips.iter().map(|t| prepare_trip(t, &params)).collect();
    // equal-length batch of the two 2-link trips
    let batch = Batch { indices: vec![0, 1], allow_ragged: false };
    fd_check(&params, &tensors, &batch);
}

#[test]
fn gradients_match_finite_differences_padded_batch() {
    let (params, trips) = small_params(7);
    let tensors: Vec<TripTensors> = trips.iter().map(|t| prepare_trip(t, &params)).collect();
    let batch = Batch { indices: vec![0, 2, 3], allow_ragged: true };
    fd_check(&params, &tensors, &batch);
}

#[test]
fn frozen_components_receive_zero_gradients() {
    let (params, trips) = small_params(8);
    let tensors: Vec<TripTensors> = trips.iter().map(|t| prepare_trip(t, &params)).collect();
    let batch = Batch { indices: vec![0, 1], allow_ragged: false };
    let freeze = FreezeMask { recurrent: true, linear: false, deep: true };
    let (_, mut grads) = grad_batch(&params, &tensors, &batch, &LossWeights::default(), &freeze);
    let mut saw_linear_nonzero = false;
    for (name, component, data) in grads.slices_mut() {
        match component {
            super::Component::Recurrent | super::Component::Deep => {
                assert!(data.iter().all(|v| *v == 0.0), "frozen tensor {name} moved");
            }
            super::Component::Linear => {
                saw_linear_nonzero |= data.iter().any(|v| *v != 0.0);
            }
        }
    }
    assert!(saw_linear_nonzero, "unfrozen component produced no gradient at all");
}

fn tiny_dataset() -> Vec<LabeledTrip> {
    let cfg = SynthConfig {
        seed: 5,
        n_links: 30,
        n_vehicles_per_powertrain: 1,
        trip_count: 120,
        ..SynthConfig::default()
    };
    generate_dataset(&cfg).unwrap().trips
}

fn tiny_train_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        learning_rate: 0.01,
        batch_size: 16,
        optimizer: Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 },
        seed: 1,
        ..TrainConfig::default()
    }
}

fn tiny_model_cfg() -> ModelConfig {
    ModelConfig {
        hidden: 12,
        embed_dim: 4,
        mlp_hidden: vec![8, 6],
        n_vehicles: 5,
        n_links: 30,
        final_activation: FinalActivation::Relu,
    }
}

#[test]
fn zero_epochs_returns_untouched_initialization() {
    let data = tiny_dataset();
    let mut cfg = tiny_train_cfg();
    cfg.epochs = 0;
    let (a, hist_a) = train(&data, &cfg, &tiny_model_cfg()).unwrap();
    let (b, _) = train(&data, &cfg, &tiny_model_cfg()).unwrap();
    assert!(hist_a.is_empty());
    assert_eq!(a.tensors.lstm.w_x, b.tensors.lstm.w_x);
    assert_eq!(a.out_scale, b.out_scale);
    let pa = predict_dataset(&a, &data[..10.min(data.len())].to_vec());
    let pb = predict_dataset(&b, &data[..10.min(data.len())].to_vec());
    assert_eq!(pa, pb);
}

#[test]
fn short_training_reduces_loss_deterministically() {
    let data = tiny_dataset();
    let cfg = tiny_train_cfg();
    let (_, hist) = train(&data, &cfg, &tiny_model_cfg()).unwrap();
    assert_eq!(hist.len(), 3);
    assert!(
        hist.last().unwrap().train_loss < hist[0].train_loss,
        "loss did not decrease: {hist:?}"
    );
    let (_, hist2) = train(&data, &cfg, &tiny_model_cfg()).unwrap();
    for (a, b) in hist.iter().zip(&hist2) {
        assert_eq!(a.train_loss, b.train_loss, "training is not deterministic");
    }
}

#[test]
fn freezing_components_keeps_them_bit_identical_through_training() {
    let data = tiny_dataset();
    let mut cfg = tiny_train_cfg();
    cfg.freeze = FreezeMask { recurrent: true, linear: false, deep: true };
    let (trained, _) = train(&data, &cfg, &tiny_model_cfg()).unwrap();
    cfg.epochs = 0;
    let (init, _) = train(&data, &cfg, &tiny_model_cfg()).unwrap();
    assert_eq!(trained.tensors.lstm.w_x, init.tensors.lstm.w_x);
    assert_eq!(trained.tensors.w_rnn, init.tensors.w_rnn);
    assert_eq!(trained.tensors.emb_link, init.tensors.emb_link);
    assert_eq!(trained.tensors.mlp[0].w, init.tensors.mlp[0].w);
    assert_ne!(trained.tensors.w_l1, init.tensors.w_l1);
}

#[test]
fn all_frozen_config_is_rejected() {
    let cfg = TrainConfig {
        freeze: FreezeMask { recurrent: true, linear: true, deep: true },
        ..TrainConfig::default()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let (params, trips) = small_params(11);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&params, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(params.out_scale, loaded.out_scale);
    for trip in &trips {
        let a = predict_trip(&trip.route, &trip.vehicle, &params);
        let b = predict_trip(&trip.route, &trip.vehicle, &loaded);
        assert_eq!(a.fuel_g.to_bits(), b.fuel_g.to_bits());
        assert_eq!(a.electric_wh.to_bits(), b.electric_wh.to_bits());
    }
}

#[test]
fn truncated_checkpoint_reports_truncation() {
    let (params, _) = small_params(12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&params, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = load_checkpoint(&path).unwrap_err();
    assert!(matches!(err, crate::Error::CheckpointTruncated(_)), "got {err:?}");
}

#[test]
fn wrong_version_reports_version_mismatch() {
    let (params, _) = small_params(13);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&params, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[8] = 0xFF; // version field follows the 8-byte magic
    std::fs::write(&path, &bytes).unwrap();
    let err = load_checkpoint(&path).unwrap_err();
    assert!(matches!(err, crate::Error::CheckpointVersion { .. }), "got {err:?}");
}

#[test]
fn garbage_magic_is_not_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    std::fs::write(&path, b"definitely not a checkpoint").unwrap();
    let err = load_checkpoint(&path).unwrap_err();
    assert!(matches!(err, crate::Error::Data(_)), "got {err:?}");
}
