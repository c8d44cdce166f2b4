//! Trip tensorization and exact-length / quantile-bucket batching.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::LabeledTrip;

use super::ModelParams;

/// One trip converted to model tensors: normalized design matrix,
/// normalized labels, channel mask, and embedding row indices.
#[derive(Debug, Clone)]
pub struct TripTensors {
    /// T x D normalized features.
    pub x: Array2<f64>,
    /// T x 2 normalized labels (fuel, electric).
    pub y: Array2<f64>,
    /// Channel activity: 1.0 where the powertrain uses the channel.
    pub mask: [f64; 2],
    /// Row into the vehicle embedding table (0 = out of vocabulary).
    pub vehicle_row: usize,
    /// Rows into the link embedding table, one per link.
    pub link_rows: Vec<usize>,
    pub t_len: usize,
}

/// Converts one labeled trip using the schema and output scale frozen
/// in `params`. IDs beyond the embedding vocabulary map to the
/// reserved row 0.
pub fn prepare_trip(trip: &LabeledTrip, params: &ModelParams) -> TripTensors {
    let x = params.schema.assemble_design_matrix(&trip.route, &trip.vehicle);
    let t_len = trip.route.len();
    let mut y = Array2::zeros((t_len, 2));
    for (t, label) in trip.labels.iter().enumerate() {
        y[[t, 0]] = label.fuel_g / params.out_scale[0];
        y[[t, 1]] = label.electric_wh / params.out_scale[1];
    }
    let p = trip.vehicle.powertrain;
    let mask = [
        if p.consumes_fuel() { 1.0 } else { 0.0 },
        if p.consumes_electric() { 1.0 } else { 0.0 },
    ];
    let vehicle_row = embedding_row(trip.vehicle.vehicle_id as usize, params.cfg.n_vehicles);
    let link_rows = trip
        .route
        .links
        .iter()
        .map(|l| embedding_row(l.link_id as usize, params.cfg.n_links))
        .collect();
    TripTensors { x, y, mask, vehicle_row, link_rows, t_len }
}

fn embedding_row(id: usize, vocab: usize) -> usize {
    if id < vocab {
        id + 1
    } else {
        0
    }
}

/// Batching strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Batching {
    /// Group trips by exactly equal link count; no padding anywhere.
    Exact,
    /// Group by length quantile buckets; shorter trips in a batch are
    /// zero-padded up to the batch maximum for stacking. Per-trip loss
    /// terms still use the true length.
    Bucket { n_buckets: usize },
}

/// A batch of trip indices. `allow_ragged` is set only by bucket mode.
#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub allow_ragged: bool,
}

impl Batch {
    pub fn max_len(&self, trips: &[TripTensors]) -> usize {
        self.indices.iter().map(|&i| trips[i].t_len).max().unwrap_or(0)
    }

    /// Exact-mode batches must be length-homogeneous; a mixed batch is
    /// a programming fault.
    pub fn assert_valid(&self, trips: &[TripTensors]) {
        assert!(!self.indices.is_empty(), "empty batch");
        if !self.allow_ragged {
            let t0 = trips[self.indices[0]].t_len;
            assert!(
                self.indices.iter().all(|&i| trips[i].t_len == t0),
                "mixed-length batch in exact mode"
            );
        }
    }
}

/// Partitions trips into shuffled batches for one epoch. Deterministic
/// in (seed, epoch); the multiset of indices always equals 0..n.
pub fn make_batches(
    lengths: &[usize],
    batching: Batching,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Batch> {
    assert!(batch_size >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9));
    let mut batches = Vec::new();
    match batching {
        Batching::Exact => {
            let mut by_len: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            for (i, &l) in lengths.iter().enumerate() {
                by_len.entry(l).or_default().push(i);
            }
            for group in by_len.values_mut() {
                group.shuffle(&mut rng);
                for chunk in group.chunks(batch_size) {
                    batches.push(Batch { indices: chunk.to_vec(), allow_ragged: false });
                }
            }
        }
        Batching::Bucket { n_buckets } => {
            let n_buckets = n_buckets.max(1);
            let mut sorted: Vec<usize> = lengths.to_vec();
            sorted.sort_unstable();
            let bounds: Vec<usize> = (1..=n_buckets)
                .map(|k| sorted[(k * sorted.len() / n_buckets).saturating_sub(1)])
                .collect();
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_buckets];
            for (i, &l) in lengths.iter().enumerate() {
                let b = bounds.iter().position(|&ub| l <= ub).unwrap_or(n_buckets - 1);
                groups[b].push(i);
            }
            for group in &mut groups {
                group.shuffle(&mut rng);
                for chunk in group.chunks(batch_size) {
                    batches.push(Batch { indices: chunk.to_vec(), allow_ragged: true });
                }
            }
        }
    }
    batches.shuffle(&mut rng);
    batches
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_mode_groups_by_length() {
        let lengths = [1, 1, 2];
        let batches = make_batches(&lengths, Batching::Exact, 8, 0, 0);
        assert_eq!(batches.len(), 2);
        for b in &batches {
            let l0 = lengths[b.indices[0]];
            assert!(b.indices.iter().all(|&i| lengths[i] == l0));
        }
        let mut all: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2]);
    }

    #[test]
    fn epochs_reshuffle_but_preserve_multiset() {
        let lengths: Vec<usize> = (0..64).map(|i| 1 + i % 4).collect();
        let b0 = make_batches(&lengths, Batching::Exact, 4, 7, 0);
        let b1 = make_batches(&lengths, Batching::Exact, 4, 7, 1);
        let flat = |bs: &[Batch]| bs.iter().flat_map(|b| b.indices.clone()).collect::<Vec<_>>();
        assert_ne!(flat(&b0), flat(&b1), "epochs should shuffle");
        let mut s0 = flat(&b0);
        let mut s1 = flat(&b1);
        s0.sort_unstable();
        s1.sort_unstable();
        assert_eq!(s0, s1);
        // determinism
        let b0_again = make_batches(&lengths, Batching::Exact, 4, 7, 0);
        assert_eq!(flat(&b0), flat(&b0_again));
    }

    #[test]
    fn bucket_mode_covers_all_trips() {
        let lengths: Vec<usize> = (0..100).map(|i| 1 + i % 17).collect();
        let batches = make_batches(&lengths, Batching::Bucket { n_buckets: 4 }, 16, 3, 0);
        let mut all: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(batches.iter().all(|b| b.allow_ragged));
    }
}
