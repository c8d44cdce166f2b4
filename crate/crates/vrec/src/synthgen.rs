//! Deterministic synthetic data: road network, vehicle catalog, skewed
//! trip lengths, and a physics-inspired per-link energy oracle.
//!
//! The oracle has genuine link-to-link sequential dependence (the
//! inertial term sees the previous link's speed, and PHEV fuel depends
//! on cumulative battery depletion), which is exactly the latent
//! structure the sequence model is asked to learn. None of the oracle's
//! internal state (state of charge, engine-on flag, inertial term) is
//! exposed as a model feature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    EnergyVector, FuelType, LabeledTrip, Link, Powertrain, RouteTrip, VehicleSpec,
    MAX_GENERATED_TRIP_LEN,
};
use crate::error::{Error, Result};

/// Configuration for the synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_links: usize,
    pub n_vehicles_per_powertrain: usize,
    pub trip_count: usize,
    /// Log-normal parameters of the trip length (in links).
    /// median = exp(mu); defaults target median ~15.
    pub length_mu: f64,
    pub length_sigma: f64,
    /// Relative std of per-link multiplicative label noise.
    pub noise_sigma: f64,
    /// Relative std of a per-trip multiplicative factor shared by every
    /// link of a trip (driver, weather, and load effects). Unlike the
    /// per-link noise it does not average out over long trips, so
    /// relative trip-level error has a common floor across lengths.
    pub trip_noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_links: 400,
            n_vehicles_per_powertrain: 6,
            trip_count: 10_000,
            length_mu: 15.0f64.ln(),
            length_sigma: 0.9,
            noise_sigma: 0.03,
            trip_noise_sigma: 0.05,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_links < 2 {
            return Err(Error::Config("n_links must be >= 2".into()));
        }
        if self.n_vehicles_per_powertrain < 1 || self.trip_count < 1 {
            return Err(Error::Config("counts must be >= 1".into()));
        }
        if !(0.0..=0.2).contains(&self.noise_sigma) {
            return Err(Error::Config("noise_sigma must be in [0, 0.2]".into()));
        }
        if !(0.0..=0.2).contains(&self.trip_noise_sigma) {
            return Err(Error::Config("trip_noise_sigma must be in [0, 0.2]".into()));
        }
        Ok(())
    }
}

/// Static description of one network link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProto {
    pub link_id: u32,
    pub length: f64,
    pub speed_limit: f64,
    /// Depth of the rush-hour speed dip, in (0, 0.5].
    pub congestion_amp: f64,
}

/// Link catalog plus adjacency (successor lists).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub links: Vec<LinkProto>,
    pub adjacency: Vec<Vec<u32>>,
}

/// Builds the link catalog and adjacency, deterministic in the seed.
pub fn synth_network(cfg: &SynthConfig) -> Result<RoadNetwork> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6e65_7477_6f72_6b);
    let n = cfg.n_links;
    let mut links = Vec::with_capacity(n);
    for id in 0..n {
        // lengths 50 m - 5 km, log-uniform so short urban links dominate
        let length = 50.0 * (100.0f64).powf(rng.gen::<f64>());
        let speed_limit = rng.gen_range(8.0..30.0);
        let congestion_amp = rng.gen_range(0.05..0.45);
        links.push(LinkProto { link_id: id as u32, length, speed_limit, congestion_amp });
    }
    let mut adjacency = Vec::with_capacity(n);
    for id in 0..n {
        let deg = if n <= 4 { n - 1 } else { rng.gen_range(2..=4) };
        let mut succ = Vec::with_capacity(deg);
        while succ.len() < deg {
            let cand = rng.gen_range(0..n) as u32;
            if cand != id as u32 && !succ.contains(&cand) {
                succ.push(cand);
            }
        }
        adjacency.push(succ);
    }
    Ok(RoadNetwork { links, adjacency })
}

/// Catalog of vehicles covering all five powertrains and the four truck
/// classes, deterministic in the seed.
pub fn synth_vehicles(cfg: &SynthConfig) -> Vec<VehicleSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7665_6869_636c_6573);
    let classes = [3u8, 4, 6, 8];
    let mut out = Vec::new();
    let mut id = 0u32;
    for p in Powertrain::ALL {
        for k in 0..cfg.n_vehicles_per_powertrain {
            let vclass = classes[k % classes.len()];
            let (curb_base, payload_base, area) = match vclass {
                3 => (4500.0, 1500.0, 5.5),
                4 => (6500.0, 2500.0, 6.5),
                6 => (9000.0, 4500.0, 7.5),
                _ => (14000.0, 10000.0, 9.0),
            };
            let curb_mass_kg = curb_base * rng.gen_range(0.9..1.1);
            let payload_mass_kg = payload_base * rng.gen_range(0.3..1.0);
            let drag_coeff = rng.gen_range(0.55..0.75);
            let rolling_resist = rng.gen_range(0.006..0.009);
            let power_scale = curb_base / 60.0;
            let (engine_kw, motor_kw, battery_kwh) = match p {
                Powertrain::Bev => (0.0, power_scale * rng.gen_range(1.0..1.4), vclass as f64 * 25.0),
                Powertrain::Conv => (power_scale * rng.gen_range(1.0..1.4), 0.0, 0.0),
                Powertrain::Isg => (power_scale * rng.gen_range(1.0..1.4), 10.0, 1.0),
                Powertrain::Hev => (power_scale * rng.gen_range(0.8..1.1), power_scale * 0.4, 4.0),
                Powertrain::Phev => {
                    (power_scale * rng.gen_range(0.8..1.1), power_scale * 0.6, vclass as f64 * 1.8)
                }
            };
            let fuel_type = match p {
                Powertrain::Bev => FuelType::None,
                Powertrain::Conv => {
                    if vclass >= 6 {
                        FuelType::Diesel
                    } else {
                        FuelType::Gasoline
                    }
                }
                _ => FuelType::Gasoline,
            };
            out.push(VehicleSpec {
                vehicle_id: id,
                powertrain: p,
                vclass,
                curb_mass_kg,
                payload_mass_kg,
                battery_kwh,
                frontal_area_m2: area,
                drag_coeff,
                rolling_resist,
                engine_kw,
                motor_kw,
                fuel_type,
                automation_level: (k % 3) as u8,
            });
            id += 1;
        }
    }
    out
}

fn trip_rng(seed: u64, trip_id: u64) -> ChaCha8Rng {
    // splitmix-style mix so nearby trip ids get unrelated streams
    let mut z = seed ^ trip_id.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Hour-of-day congestion factor: speed dips around the 8:00 and 17:30
/// rush peaks, scaled by the link's own amplitude.
fn congestion_factor(enter_time_s: f64, amp: f64) -> f64 {
    let h = (enter_time_s / 3600.0).rem_euclid(24.0);
    let peak = |c: f64| (-((h - c) / 1.5).powi(2)).exp();
    1.0 - amp * (peak(8.0) + peak(17.5))
}

/// Draws `cfg.trip_count` trips as random walks over the adjacency,
/// with log-normally distributed lengths truncated to [1, 283] and
/// per-link speeds perturbed around the congestion profile.
pub fn synth_trips(cfg: &SynthConfig, network: &RoadNetwork) -> Vec<RouteTrip> {
    let length_dist = LogNormal::new(cfg.length_mu, cfg.length_sigma.max(1e-12)).unwrap();
    (0..cfg.trip_count as u64)
        .map(|trip_id| {
            let mut rng = trip_rng(cfg.seed ^ 0x7472_6970, trip_id);
            let t = (length_dist.sample(&mut rng).round() as usize)
                .clamp(1, MAX_GENERATED_TRIP_LEN);
            let mut cur = rng.gen_range(0..network.links.len());
            let mut clock = rng.gen_range(5.0 * 3600.0..20.0 * 3600.0);
            let jitter: Normal<f64> = Normal::new(0.0, 0.08).unwrap();
            let mut links = Vec::with_capacity(t);
            for _ in 0..t {
                let proto = &network.links[cur];
                let base = proto.speed_limit * congestion_factor(clock, proto.congestion_amp);
                let avg_speed = (base * jitter.sample(&mut rng).exp())
                    .clamp(1.0, proto.speed_limit);
                let travel_duration = proto.length / avg_speed;
                let stop_duration = if rng.gen::<f64>() < 0.35 {
                    -20.0 * rng.gen::<f64>().max(1e-12).ln()
                } else {
                    0.0
                };
                links.push(Link {
                    link_id: proto.link_id,
                    enter_time: clock,
                    length: proto.length,
                    stop_duration,
                    travel_duration,
                    avg_speed,
                    speed_limit: proto.speed_limit,
                });
                clock += travel_duration + stop_duration;
                let succ = &network.adjacency[cur];
                cur = succ[rng.gen_range(0..succ.len())] as usize;
            }
            RouteTrip { trip_id, links }
        })
        .collect()
}

/// Physical and efficiency constants of the energy oracle. Plausible
/// stand-ins, recorded in config; not asserted as ground truth anywhere.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleParams {
    pub air_density: f64,
    pub gravity: f64,
    pub regen_eff: f64,
    pub eff_conv: f64,
    pub eff_isg: f64,
    pub eff_hev: f64,
    pub eff_phev_cs: f64,
    pub eff_electric: f64,
    /// PHEV switches to charge-sustaining below this fraction of capacity.
    pub soc_reserve_frac: f64,
    /// Wheel-equivalent idle demand while stopped, W.
    pub idle_power_w: f64,
    /// Gasoline-equivalent energy density, J per gram.
    pub fuel_j_per_g: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            air_density: 1.2,
            gravity: 9.81,
            regen_eff: 0.6,
            eff_conv: 0.25,
            eff_isg: 0.27,
            eff_hev: 0.32,
            eff_phev_cs: 0.32,
            eff_electric: 0.85,
            soc_reserve_frac: 0.15,
            idle_power_w: 8000.0,
            fuel_j_per_g: 42_600.0,
        }
    }
}

/// Battery/engine state carried across the links of one trip.
#[derive(Debug, Clone, Copy)]
pub struct OracleState {
    pub soc_kwh: f64,
    pub engine_on: bool,
}

/// Ground-truth per-link energy labels. Deterministic in
/// (route, vehicle, seed); a fresh fully-charged state per trip.
pub fn oracle_energy(
    route: &RouteTrip,
    vehicle: &VehicleSpec,
    seed: u64,
    params: &OracleParams,
    noise_sigma: f64,
    trip_noise_sigma: f64,
) -> Result<Vec<EnergyVector>> {
    let mass = vehicle.total_mass_kg();
    if mass <= 0.0 {
        return Err(Error::Data(format!(
            "vehicle {} has nonpositive mass",
            vehicle.vehicle_id
        )));
    }
    let mut rng = trip_rng(seed ^ 0x6f72_6163_6c65, route.trip_id);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).unwrap();
    let trip_factor = if trip_noise_sigma > 0.0 {
        let trip_noise: Normal<f64> = Normal::new(0.0, trip_noise_sigma).unwrap();
        trip_noise.sample(&mut rng).exp()
    } else {
        1.0
    };
    let p = vehicle.powertrain;
    let regen_capable = matches!(
        p,
        Powertrain::Bev | Powertrain::Hev | Powertrain::Phev
    );
    let mut state = OracleState { soc_kwh: vehicle.battery_kwh, engine_on: !p.consumes_electric() };
    let reserve = params.soc_reserve_frac * vehicle.battery_kwh;
    let mut prev_speed: Option<f64> = None;
    let mut out = Vec::with_capacity(route.len());

    for link in &route.links {
        let v = link.avg_speed;
        let v_prev = prev_speed.unwrap_or(v);
        let rolling = mass * params.gravity * vehicle.rolling_resist * link.length;
        let aero = 0.5
            * params.air_density
            * vehicle.drag_coeff
            * vehicle.frontal_area_m2
            * v
            * v
            * link.length;
        let mut inertial = 0.5 * mass * (v * v - v_prev * v_prev);
        if inertial < 0.0 {
            inertial = if regen_capable { params.regen_eff * inertial } else { 0.0 };
        }
        let wheel_j = (rolling + aero + inertial).max(0.0);
        let factor =
            trip_factor * if noise_sigma > 0.0 { noise.sample(&mut rng).exp() } else { 1.0 };

        let electric_drive = match p {
            Powertrain::Bev => true,
            Powertrain::Phev => !state.engine_on && state.soc_kwh > reserve,
            _ => false,
        };
        let energy = if electric_drive {
            let wh = wheel_j / params.eff_electric / 3600.0 * factor;
            if p == Powertrain::Phev {
                state.soc_kwh -= wh / 1000.0;
                if state.soc_kwh <= reserve {
                    state.engine_on = true;
                }
            }
            EnergyVector::new(0.0, wh)
        } else {
            let eff = match p {
                Powertrain::Conv => params.eff_conv,
                Powertrain::Isg => params.eff_isg,
                Powertrain::Hev => params.eff_hev,
                Powertrain::Phev => params.eff_phev_cs,
                Powertrain::Bev => unreachable!(),
            };
            let idle_j = if p == Powertrain::Isg {
                0.0
            } else {
                params.idle_power_w * link.stop_duration
            };
            let fuel_g = (wheel_j + idle_j) / eff / params.fuel_j_per_g * factor;
            EnergyVector::new(fuel_g, 0.0)
        };
        out.push(energy);
        prev_speed = Some(v);
    }
    Ok(out)
}

/// Per-powertrain, per-channel multiplicative factors that bring mean
/// per-trip consumption near the reference magnitudes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleFactors {
    /// Indexed by powertrain code.
    pub fuel: [f64; 5],
    pub electric: [f64; 5],
}

impl Default for ScaleFactors {
    fn default() -> Self {
        ScaleFactors { fuel: [1.0; 5], electric: [1.0; 5] }
    }
}

/// Reference mean per-trip consumption magnitudes used as calibration
/// targets (grams gasoline-equivalent / Wh).
pub const FUEL_MEAN_TARGETS: [f64; 5] = [0.0, 7185.0, 6939.3, 6871.1, 2225.3];
pub const ELECTRIC_MEAN_TARGETS: [f64; 5] = [36_570.2, 0.0, 0.0, 0.0, 25_845.8];

/// Derives scale factors from labeled (unscaled) oracle output so the
/// per-powertrain mean trip consumption lands near the targets.
pub fn calibrate_scale(trips: &[LabeledTrip]) -> ScaleFactors {
    let mut sum_fuel = [0.0f64; 5];
    let mut sum_elec = [0.0f64; 5];
    let mut count = [0usize; 5];
    for trip in trips {
        let c = trip.vehicle.powertrain.code() as usize;
        let total = trip.trip_total();
        sum_fuel[c] += total.fuel_g;
        sum_elec[c] += total.electric_wh;
        count[c] += 1;
    }
    let mut factors = ScaleFactors::default();
    for c in 0..5 {
        if count[c] == 0 {
            continue;
        }
        let mean_fuel = sum_fuel[c] / count[c] as f64;
        let mean_elec = sum_elec[c] / count[c] as f64;
        if FUEL_MEAN_TARGETS[c] > 0.0 && mean_fuel > 0.0 {
            factors.fuel[c] = FUEL_MEAN_TARGETS[c] / mean_fuel;
        }
        if ELECTRIC_MEAN_TARGETS[c] > 0.0 && mean_elec > 0.0 {
            factors.electric[c] = ELECTRIC_MEAN_TARGETS[c] / mean_elec;
        }
    }
    factors
}

fn apply_scale(trip: &mut LabeledTrip, factors: &ScaleFactors) {
    let c = trip.vehicle.powertrain.code() as usize;
    for label in &mut trip.labels {
        label.fuel_g *= factors.fuel[c];
        label.electric_wh *= factors.electric[c];
    }
}

/// A fully generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub config: SynthConfig,
    pub network: RoadNetwork,
    pub vehicles: Vec<VehicleSpec>,
    pub trips: Vec<LabeledTrip>,
    pub scale: ScaleFactors,
}

/// End-to-end generation: network, vehicles, trips, oracle labels, and
/// calibration. Bit-identical for identical configs.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let network = synth_network(cfg)?;
    let vehicles = synth_vehicles(cfg);
    let routes = synth_trips(cfg, &network);
    let mut trips = routes
        .into_iter()
        .map(|route| {
            let mut rng = trip_rng(cfg.seed ^ 0x6173_7369_676e, route.trip_id);
            let vehicle = vehicles[rng.gen_range(0..vehicles.len())].clone();
            let labels =
                oracle_energy(
                &route,
                &vehicle,
                cfg.seed,
                &OracleParams::default(),
                cfg.noise_sigma,
                cfg.trip_noise_sigma,
            )?;
            Ok(LabeledTrip { route, vehicle, labels })
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = calibrate_scale(&trips);
    for trip in &mut trips {
        apply_scale(trip, &scale);
    }
    Ok(Dataset { config: cfg.clone(), network, vehicles, trips, scale })
}
