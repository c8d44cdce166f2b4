//! Core data types shared by every stage of the pipeline: powertrains,
//! links, trips, vehicle specifications, and per-link energy labels.
//!
//! All types here are immutable after construction and safe to share
//! across threads.

use serde::{Deserialize, Serialize};

/// Dimensionality of the encoded vehicle feature vector.
pub const VEHICLE_DIM: usize = 20;

/// Maximum trip length produced by the generator. Longer trips are
/// accepted by the validator with a warning-level violation.
pub const MAX_GENERATED_TRIP_LEN: usize = 283;

/// Drivetrain technology class, encoded 0..=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Powertrain {
    /// Battery electric vehicle.
    Bev = 0,
    /// Conventional engine.
    Conv = 1,
    /// Integrated starter-generator stop-start.
    Isg = 2,
    /// Hybrid electric vehicle.
    Hev = 3,
    /// Plug-in hybrid electric vehicle.
    Phev = 4,
}

impl Powertrain {
    pub const ALL: [Powertrain; 5] = [
        Powertrain::Bev,
        Powertrain::Conv,
        Powertrain::Isg,
        Powertrain::Hev,
        Powertrain::Phev,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Powertrain> {
        match code {
            0 => Some(Powertrain::Bev),
            1 => Some(Powertrain::Conv),
            2 => Some(Powertrain::Isg),
            3 => Some(Powertrain::Hev),
            4 => Some(Powertrain::Phev),
            _ => None,
        }
    }

    /// True for every powertrain that burns fuel (Conv, ISG, HEV, PHEV).
    pub fn consumes_fuel(self) -> bool {
        !matches!(self, Powertrain::Bev)
    }

    /// True for powertrains drawing grid electricity (BEV, PHEV).
    pub fn consumes_electric(self) -> bool {
        matches!(self, Powertrain::Bev | Powertrain::Phev)
    }

    pub fn name(self) -> &'static str {
        match self {
            Powertrain::Bev => "BEV",
            Powertrain::Conv => "Conv",
            Powertrain::Isg => "ISG",
            Powertrain::Hev => "HEV",
            Powertrain::Phev => "PHEV",
        }
    }
}

/// One road segment traversal: the 7 raw route fields available before
/// any feature engineering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub link_id: u32,
    /// Seconds since midnight when the vehicle enters the link.
    pub enter_time: f64,
    /// Meters, > 0.
    pub length: f64,
    /// Seconds spent stopped on the link, >= 0.
    pub stop_duration: f64,
    /// Seconds spent moving on the link, > 0.
    pub travel_duration: f64,
    /// Mean moving speed, m/s.
    pub avg_speed: f64,
    /// m/s, > 0.
    pub speed_limit: f64,
}

/// An ordered sequence of links traversed by one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteTrip {
    pub trip_id: u64,
    pub links: Vec<Link>,
}

impl RouteTrip {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Total trip distance in meters.
    pub fn total_length(&self) -> f64 {
        self.links.iter().map(|l| l.length).sum()
    }
}

/// Fuel used to price the fuel channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FuelType {
    Gasoline,
    Diesel,
    None,
}

/// Static vehicle attributes. Encodes to a fixed-length numeric vector
/// of [`VEHICLE_DIM`] entries for model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub vehicle_id: u32,
    pub powertrain: Powertrain,
    /// Truck class, one of {3, 4, 6, 8}.
    pub vclass: u8,
    pub curb_mass_kg: f64,
    pub payload_mass_kg: f64,
    pub battery_kwh: f64,
    pub frontal_area_m2: f64,
    pub drag_coeff: f64,
    pub rolling_resist: f64,
    pub engine_kw: f64,
    pub motor_kw: f64,
    pub fuel_type: FuelType,
    /// 0 = none, 1 = partial, 2 = full automation.
    pub automation_level: u8,
}

impl VehicleSpec {
    pub fn total_mass_kg(&self) -> f64 {
        self.curb_mass_kg + self.payload_mass_kg
    }

    /// Encodes the spec as a fixed numeric vector:
    /// powertrain one-hot (5) + class one-hot over {3,4,6,8} (4)
    /// + 9 scalars + automation one-hot over levels {1,2} (2).
    pub fn encode(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(VEHICLE_DIM);
        for p in Powertrain::ALL {
            v.push(if self.powertrain == p { 1.0 } else { 0.0 });
        }
        for c in [3u8, 4, 6, 8] {
            v.push(if self.vclass == c { 1.0 } else { 0.0 });
        }
        v.push(self.curb_mass_kg);
        v.push(self.payload_mass_kg);
        v.push(self.battery_kwh);
        v.push(self.frontal_area_m2);
        v.push(self.drag_coeff);
        v.push(self.rolling_resist);
        v.push(self.engine_kw);
        v.push(self.motor_kw);
        v.push(match self.fuel_type {
            FuelType::Gasoline => 1.0,
            FuelType::Diesel => 2.0,
            FuelType::None => 0.0,
        });
        for lvl in [1u8, 2] {
            v.push(if self.automation_level == lvl { 1.0 } else { 0.0 });
        }
        debug_assert_eq!(v.len(), VEHICLE_DIM);
        v
    }
}

/// Per-link two-channel energy quantity: grams of gasoline-equivalent
/// fuel and Wh of grid electricity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyVector {
    pub fuel_g: f64,
    pub electric_wh: f64,
}

impl EnergyVector {
    pub const ZERO: EnergyVector = EnergyVector { fuel_g: 0.0, electric_wh: 0.0 };

    pub fn new(fuel_g: f64, electric_wh: f64) -> EnergyVector {
        EnergyVector { fuel_g, electric_wh }
    }

    pub fn add(&self, other: &EnergyVector) -> EnergyVector {
        EnergyVector {
            fuel_g: self.fuel_g + other.fuel_g,
            electric_wh: self.electric_wh + other.electric_wh,
        }
    }

    pub fn sum<'a>(iter: impl IntoIterator<Item = &'a EnergyVector>) -> EnergyVector {
        iter.into_iter().fold(EnergyVector::ZERO, |a, b| a.add(b))
    }
}

/// One training/evaluation sample: a route, the vehicle that drove it,
/// and the per-link energy labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrip {
    pub route: RouteTrip,
    pub vehicle: VehicleSpec,
    pub labels: Vec<EnergyVector>,
}

impl LabeledTrip {
    pub fn trip_total(&self) -> EnergyVector {
        EnergyVector::sum(&self.labels)
    }
}

/// A single invariant violation found by [`validate_trip`]. Violations
/// are data, not faults: validation itself never fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn violation(out: &mut Vec<Violation>, field: impl Into<String>, rule: impl Into<String>) {
    out.push(Violation { field: field.into(), rule: rule.into() });
}

/// Checks every domain invariant on a labeled trip and returns the list
/// of violations (empty iff the trip is well formed). Idempotent and
/// side-effect free.
pub fn validate_trip(trip: &LabeledTrip) -> Vec<Violation> {
    let mut out = Vec::new();
    let t = trip.route.len();

    if t == 0 {
        violation(&mut out, "route.links", "trip must contain at least one link");
    }
    if t > MAX_GENERATED_TRIP_LEN {
        violation(
            &mut out,
            "route.links",
            format!("length {t} exceeds generated maximum {MAX_GENERATED_TRIP_LEN} (warning)"),
        );
    }
    for (i, link) in trip.route.links.iter().enumerate() {
        if !(link.length > 0.0) {
            violation(&mut out, format!("links[{i}].length"), "must be > 0");
        }
        if !(link.travel_duration > 0.0) {
            violation(&mut out, format!("links[{i}].travel_duration"), "must be > 0");
        }
        if link.stop_duration < 0.0 {
            violation(&mut out, format!("links[{i}].stop_duration"), "must be >= 0");
        }
        if link.avg_speed < 0.0 {
            violation(&mut out, format!("links[{i}].avg_speed"), "must be >= 0");
        }
        if !(link.speed_limit > 0.0) {
            violation(&mut out, format!("links[{i}].speed_limit"), "must be > 0");
        }
        if link.length > 0.0 && link.travel_duration > 0.0 {
            let implied = link.length / link.travel_duration;
            if implied > 0.0 {
                let rel = (link.avg_speed - implied).abs() / implied;
                if rel > 0.20 {
                    violation(
                        &mut out,
                        format!("links[{i}].avg_speed"),
                        "deviates more than 20% from length / travel_duration (warning)",
                    );
                }
            }
        }
    }

    let veh = &trip.vehicle;
    if ![3u8, 4, 6, 8].contains(&veh.vclass) {
        violation(&mut out, "vehicle.vclass", "must be one of {3,4,6,8}");
    }
    if veh.battery_kwh < 0.0 {
        violation(&mut out, "vehicle.battery_kwh", "must be >= 0");
    }
    match veh.powertrain {
        Powertrain::Bev => {
            if veh.engine_kw != 0.0 {
                violation(&mut out, "vehicle.engine_kw", "must be 0 for BEV");
            }
        }
        Powertrain::Conv => {
            if veh.battery_kwh != 0.0 {
                violation(&mut out, "vehicle.battery_kwh", "must be 0 for Conv");
            }
            if veh.motor_kw != 0.0 {
                violation(&mut out, "vehicle.motor_kw", "must be 0 for Conv");
            }
        }
        _ => {}
    }

    if trip.labels.len() != t {
        violation(&mut out, "labels", "labels length mismatch");
    }
    for (i, e) in trip.labels.iter().enumerate() {
        if e.fuel_g < 0.0 {
            violation(&mut out, format!("labels[{i}].fuel_g"), "must be >= 0");
        }
        if e.electric_wh < 0.0 {
            violation(&mut out, format!("labels[{i}].electric_wh"), "must be >= 0");
        }
        if !veh.powertrain.consumes_fuel() && e.fuel_g != 0.0 {
            violation(
                &mut out,
                format!("labels[{i}].fuel_g"),
                format!("nonzero for {}", veh.powertrain.name()),
            );
        }
        if !veh.powertrain.consumes_electric() && e.electric_wh != 0.0 {
            violation(
                &mut out,
                format!("labels[{i}].electric_wh"),
                format!("nonzero for {}", veh.powertrain.name()),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{conv_vehicle, bev_vehicle, simple_route};
    use std::collections::HashMap;

    #[test]
    fn powertrain_codes_round_trip() {
        for p in Powertrain::ALL {
            assert_eq!(Powertrain::from_code(p.code()), Some(p));
        }
        assert_eq!(Powertrain::from_code(5), None);
    }

    #[test]
    fn fuel_and_electric_flags() {
        assert!(!Powertrain::Bev.consumes_fuel());
        assert!(Powertrain::Bev.consumes_electric());
        for p in [Powertrain::Conv, Powertrain::Isg, Powertrain::Hev, Powertrain::Phev] {
            assert!(p.consumes_fuel());
        }
        assert!(Powertrain::Phev.consumes_electric());
        assert!(!Powertrain::Conv.consumes_electric());
        assert!(!Powertrain::Isg.consumes_electric());
        assert!(!Powertrain::Hev.consumes_electric());
    }

    #[test]
    fn vehicle_encoding_has_fixed_dim() {
        let v = conv_vehicle(7);
        assert_eq!(v.encode().len(), VEHICLE_DIM);
        // one-hot blocks sum to one
        let enc = v.encode();
        assert_eq!(enc[..5].iter().sum::<f64>(), 1.0);
        assert_eq!(enc[5..9].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn well_formed_conv_trip_validates_clean() {
        let route = simple_route(1, 3);
        let labels = vec![EnergyVector::new(10.0, 0.0); 3];
        let trip = LabeledTrip { route, vehicle: conv_vehicle(1), labels };
        assert!(validate_trip(&trip).is_empty());
    }

    #[test]
    fn bev_with_fuel_label_flagged() {
        let route = simple_route(1, 3);
        let mut labels = vec![EnergyVector::new(0.0, 50.0); 3];
        labels[1].fuel_g = 5.0;
        let trip = LabeledTrip { route, vehicle: bev_vehicle(2), labels };
        let violations = validate_trip(&trip);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field, "labels[1].fuel_g");
        assert!(violations[0].rule.contains("BEV"));
    }

    #[test]
    fn label_length_mismatch_flagged() {
        let route = simple_route(1, 3);
        let labels = vec![EnergyVector::new(10.0, 0.0); 2];
        let trip = LabeledTrip { route, vehicle: conv_vehicle(1), labels };
        let violations = validate_trip(&trip);
        assert!(violations.iter().any(|v| v.rule.contains("labels length mismatch")));
    }

    #[test]
    fn validation_is_idempotent() {
        let route = simple_route(1, 2);
        let trip = LabeledTrip {
            route,
            vehicle: conv_vehicle(1),
            labels: vec![EnergyVector::new(1.0, 0.0); 2],
        };
        assert_eq!(validate_trip(&trip), validate_trip(&trip));
    }

    #[test]
    fn partition_by_powertrain_and_length_recovers_dataset() {
        // Every trip falls in exactly one (powertrain, link-count) cell,
        // and re-uniting the cells recovers the original multiset.
        let mut trips = Vec::new();
        for (i, p) in Powertrain::ALL.iter().enumerate() {
            for t in 1..=4usize {
                let mut veh = conv_vehicle((i * 10 + t) as u32);
                veh.powertrain = *p;
                if !p.consumes_electric() {
                    veh.battery_kwh = if *p == Powertrain::Conv { 0.0 } else { veh.battery_kwh };
                }
                trips.push(LabeledTrip {
                    route: simple_route((i * 10 + t) as u64, t),
                    vehicle: veh,
                    labels: vec![EnergyVector::ZERO; t],
                });
            }
        }
        let mut cells: HashMap<(u8, usize), Vec<LabeledTrip>> = HashMap::new();
        for trip in &trips {
            cells
                .entry((trip.vehicle.powertrain.code(), trip.route.len()))
                .or_default()
                .push(trip.clone());
        }
        let total: usize = cells.values().map(|v| v.len()).sum();
        assert_eq!(total, trips.len());
        let mut reunited: Vec<u64> = cells
            .values()
            .flatten()
            .map(|t| t.route.trip_id)
            .collect();
        reunited.sort_unstable();
        let mut original: Vec<u64> = trips.iter().map(|t| t.route.trip_id).collect();
        original.sort_unstable();
        assert_eq!(reunited, original);
    }
}
