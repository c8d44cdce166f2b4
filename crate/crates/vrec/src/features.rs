//! Link feature engineering and design-matrix assembly.
//!
//! Each trip becomes a T x D matrix: D2 link features per row (the 7
//! raw fields plus neighborhood/engineered features), concatenated with
//! the D1-dimensional vehicle vector replicated across all rows.
//! Z-score normalization statistics are fitted on the training split
//! only and frozen into the checkpoint.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::{RouteTrip, VehicleSpec, VEHICLE_DIM};

/// One engineered link feature. Every extractor is a pure function of
/// (route, index); boundary links use themselves as the missing
/// neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkFeature {
    LinkId,
    EnterTime,
    Length,
    StopDuration,
    TravelDuration,
    AvgSpeed,
    SpeedLimit,
    PrevLength,
    PrevAvgSpeed,
    NextLength,
    NextAvgSpeed,
    DeltaSpeedPrev,
    DeltaSpeedNext,
    CongestionRatio,
    StopFraction,
    AccelProxy,
    CumulativeDistance,
    RemainingLinks,
    SinTimeOfDay,
    CosTimeOfDay,
}

impl LinkFeature {
    /// The default schema order.
    pub const ALL: [LinkFeature; 20] = [
        LinkFeature::LinkId,
        LinkFeature::EnterTime,
        LinkFeature::Length,
        LinkFeature::StopDuration,
        LinkFeature::TravelDuration,
        LinkFeature::AvgSpeed,
        LinkFeature::SpeedLimit,
        LinkFeature::PrevLength,
        LinkFeature::PrevAvgSpeed,
        LinkFeature::NextLength,
        LinkFeature::NextAvgSpeed,
        LinkFeature::DeltaSpeedPrev,
        LinkFeature::DeltaSpeedNext,
        LinkFeature::CongestionRatio,
        LinkFeature::StopFraction,
        LinkFeature::AccelProxy,
        LinkFeature::CumulativeDistance,
        LinkFeature::RemainingLinks,
        LinkFeature::SinTimeOfDay,
        LinkFeature::CosTimeOfDay,
    ];

    /// Evaluates the feature for link `t` (0-based) of `route`.
    /// `cumulative` is the total length of links 0..t.
    pub fn value(self, route: &RouteTrip, t: usize, cumulative: f64) -> f64 {
        let links = &route.links;
        let link = &links[t];
        let prev = if t > 0 { &links[t - 1] } else { link };
        let next = if t + 1 < links.len() { &links[t + 1] } else { link };
        match self {
            LinkFeature::LinkId => link.link_id as f64,
            LinkFeature::EnterTime => link.enter_time,
            LinkFeature::Length => link.length,
            LinkFeature::StopDuration => link.stop_duration,
            LinkFeature::TravelDuration => link.travel_duration,
            LinkFeature::AvgSpeed => link.avg_speed,
            LinkFeature::SpeedLimit => link.speed_limit,
            LinkFeature::PrevLength => prev.length,
            LinkFeature::PrevAvgSpeed => prev.avg_speed,
            LinkFeature::NextLength => next.length,
            LinkFeature::NextAvgSpeed => next.avg_speed,
            LinkFeature::DeltaSpeedPrev => link.avg_speed - prev.avg_speed,
            LinkFeature::DeltaSpeedNext => next.avg_speed - link.avg_speed,
            LinkFeature::CongestionRatio => link.avg_speed / link.speed_limit,
            LinkFeature::StopFraction => {
                link.stop_duration / (link.stop_duration + link.travel_duration)
            }
            LinkFeature::AccelProxy => {
                (next.avg_speed - prev.avg_speed) / link.travel_duration
            }
            LinkFeature::CumulativeDistance => cumulative,
            LinkFeature::RemainingLinks => (links.len() - 1 - t) as f64,
            LinkFeature::SinTimeOfDay => (link.enter_time / 86_400.0 * std::f64::consts::TAU).sin(),
            LinkFeature::CosTimeOfDay => (link.enter_time / 86_400.0 * std::f64::consts::TAU).cos(),
        }
    }
}

/// Emits the engineered link feature vector for link `t` in schema
/// order (the full default set).
pub fn engineer_link_features(route: &RouteTrip, t: usize) -> Vec<f64> {
    let cumulative: f64 = route.links[..t].iter().map(|l| l.length).sum();
    LinkFeature::ALL
        .iter()
        .map(|f| f.value(route, t, cumulative))
        .collect()
}

/// Feature schema: ordered link extractors, vehicle dimensionality, and
/// per-feature normalization statistics. Immutable once fitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub link_features: Vec<LinkFeature>,
    pub d1: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub fitted: bool,
}

impl FeatureSchema {
    pub fn new() -> FeatureSchema {
        FeatureSchema::with_link_features(LinkFeature::ALL.to_vec())
    }

    pub fn with_link_features(link_features: Vec<LinkFeature>) -> FeatureSchema {
        FeatureSchema {
            link_features,
            d1: VEHICLE_DIM,
            mean: Vec::new(),
            std: Vec::new(),
            fitted: false,
        }
    }

    pub fn d2(&self) -> usize {
        self.link_features.len()
    }

    /// Total feature count D = D1 + D2.
    pub fn d(&self) -> usize {
        self.d1 + self.d2()
    }

    fn raw_row(&self, route: &RouteTrip, t: usize, cumulative: f64, vehicle: &[f64]) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.d());
        for f in &self.link_features {
            row.push(f.value(route, t, cumulative));
        }
        row.extend_from_slice(vehicle);
        row
    }

    /// Fits z-score statistics over every link row of the given trips.
    /// Near-constant features keep std 1 so they normalize to a
    /// constant 0 instead of blowing up.
    pub fn fit(&mut self, trips: &[(&RouteTrip, &VehicleSpec)]) {
        let d = self.d();
        let mut sum = vec![0.0; d];
        let mut sumsq = vec![0.0; d];
        let mut n = 0usize;
        for (route, vehicle) in trips {
            let venc = vehicle.encode();
            let mut cumulative = 0.0;
            for t in 0..route.len() {
                let row = self.raw_row(route, t, cumulative, &venc);
                for (j, x) in row.iter().enumerate() {
                    sum[j] += x;
                    sumsq[j] += x * x;
                }
                cumulative += route.links[t].length;
                n += 1;
            }
        }
        assert!(n > 0, "cannot fit schema on an empty split");
        let nf = n as f64;
        self.mean = sum.iter().map(|s| s / nf).collect();
        self.std = sumsq
            .iter()
            .zip(&self.mean)
            .map(|(sq, m)| {
                let var = (sq / nf - m * m).max(0.0);
                let sd = var.sqrt();
                // relative guard: E[x^2] - mean^2 rounds to ~1e-8 * |mean|
                // even for an exactly constant feature
                if sd <= 1e-7 * m.abs().max(1.0) {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        self.fitted = true;
    }

    /// Builds the normalized T x D design matrix for one (route,
    /// vehicle) pair. The vehicle block is identical in every row.
    pub fn assemble_design_matrix(&self, route: &RouteTrip, vehicle: &VehicleSpec) -> Array2<f64> {
        assert!(self.fitted, "feature schema must be fitted before assembling matrices");
        assert_eq!(vehicle.encode().len(), self.d1, "vehicle encoding width mismatch");
        let d = self.d();
        let t_len = route.len();
        let venc = vehicle.encode();
        let mut x = Array2::zeros((t_len, d));
        let mut cumulative = 0.0;
        for t in 0..t_len {
            let row = self.raw_row(route, t, cumulative, &venc);
            for (j, val) in row.iter().enumerate() {
                x[[t, j]] = (val - self.mean[j]) / self.std[j];
            }
            cumulative += route.links[t].length;
        }
        x
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{conv_vehicle, bev_vehicle, simple_route};

    fn feature_index(f: LinkFeature) -> usize {
        LinkFeature::ALL.iter().position(|x| *x == f).unwrap()
    }

    #[test]
    fn single_link_trip_has_zero_neighbor_deltas() {
        let route = simple_route(1, 1);
        let feats = engineer_link_features(&route, 0);
        assert_eq!(feats.len(), 20);
        assert_eq!(feats[feature_index(LinkFeature::DeltaSpeedPrev)], 0.0);
        assert_eq!(feats[feature_index(LinkFeature::DeltaSpeedNext)], 0.0);
        assert_eq!(feats[feature_index(LinkFeature::AccelProxy)], 0.0);
        assert_eq!(feats[feature_index(LinkFeature::PrevLength)], route.links[0].length);
    }

    #[test]
    fn congestion_ratio_is_one_at_speed_limit() {
        let mut route = simple_route(1, 1);
        route.links[0].avg_speed = route.links[0].speed_limit;
        let feats = engineer_link_features(&route, 0);
        assert_eq!(feats[feature_index(LinkFeature::CongestionRatio)], 1.0);
    }

    #[test]
    fn accel_proxy_matches_hand_computation() {
        let mut route = simple_route(1, 3);
        for (i, l) in route.links.iter_mut().enumerate() {
            l.avg_speed = 10.0 * (i + 1) as f64; // 10, 20, 30
        }
        route.links[1].travel_duration = 100.0;
        let feats = engineer_link_features(&route, 1);
        assert!((feats[feature_index(LinkFeature::AccelProxy)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn design_matrix_shape_and_vehicle_block() {
        let route = simple_route(1, 4);
        let veh_a = conv_vehicle(1);
        let veh_b = bev_vehicle(2);
        let mut schema = FeatureSchema::new();
        schema.fit(&[(&route, &veh_a), (&route, &veh_b)]);
        let xa = schema.assemble_design_matrix(&route, &veh_a);
        let xb = schema.assemble_design_matrix(&route, &veh_b);
        assert_eq!(xa.shape(), &[4, schema.d()]);
        // same route: first D2 columns identical, difference confined to vehicle block
        for t in 0..4 {
            for j in 0..schema.d2() {
                assert_eq!(xa[[t, j]], xb[[t, j]]);
            }
        }
        assert!((0..4).any(|t| {
            (schema.d2()..schema.d()).any(|j| xa[[t, j]] != xb[[t, j]])
        }));
        // vehicle block replicated across rows
        for t in 1..4 {
            for j in schema.d2()..schema.d() {
                assert_eq!(xa[[t, j]], xa[[0, j]]);
            }
        }
    }

    #[test]
    fn single_link_trip_gives_1_by_d_matrix() {
        let route = simple_route(1, 1);
        let veh = conv_vehicle(1);
        let mut schema = FeatureSchema::new();
        let long = simple_route(2, 5);
        schema.fit(&[(&long, &veh)]);
        let x = schema.assemble_design_matrix(&route, &veh);
        assert_eq!(x.shape(), &[1, schema.d()]);
    }

    #[test]
    fn normalization_zeroes_means_and_units_stds() {
        let routes: Vec<_> = (0..20).map(|i| simple_route(i, 3 + (i % 5) as usize)).collect();
        let veh = conv_vehicle(1);
        let pairs: Vec<_> = routes.iter().map(|r| (r, &veh)).collect();
        let mut schema = FeatureSchema::new();
        schema.fit(&pairs);
        let d = schema.d();
        let mut sum = vec![0.0; d];
        let mut sumsq = vec![0.0; d];
        let mut n = 0usize;
        for r in &routes {
            let x = schema.assemble_design_matrix(r, &veh);
            for row in x.rows() {
                for (j, v) in row.iter().enumerate() {
                    sum[j] += v;
                    sumsq[j] += v * v;
                }
                n += 1;
            }
        }
        for j in 0..d {
            let m = sum[j] / n as f64;
            let sd = (sumsq[j] / n as f64 - m * m).max(0.0).sqrt();
            assert!(m.abs() < 1e-9, "feature {j} mean {m}");
            assert!(
                (sd - 1.0).abs() < 1e-6 || sd < 1e-9,
                "feature {j} std {sd}"
            );
        }
    }

    #[test]
    fn features_are_local_to_neighbors_and_prefix() {
        // changing a link at distance >= 2 leaves features unchanged,
        // except through prefix aggregates (cumulative distance) and
        // trip length (remaining links)
        let base = simple_route(1, 6);
        let mut modified = base.clone();
        modified.links[5].avg_speed = 3.0;
        modified.links[5].stop_duration = 99.0;
        for t in 0..4 {
            assert_eq!(
                engineer_link_features(&base, t),
                engineer_link_features(&modified, t)
            );
        }
    }
}
