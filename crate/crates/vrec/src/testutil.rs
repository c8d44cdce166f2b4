//! Shared fixtures for unit tests.

use crate::domain::{FuelType, Link, Powertrain, RouteTrip, VehicleSpec};

pub fn conv_vehicle(id: u32) -> VehicleSpec {
    VehicleSpec {
        vehicle_id: id,
        powertrain: Powertrain::Conv,
        vclass: 6,
        curb_mass_kg: 9000.0,
        payload_mass_kg: 3000.0,
        battery_kwh: 0.0,
        frontal_area_m2: 7.0,
        drag_coeff: 0.63,
        rolling_resist: 0.0075,
        engine_kw: 220.0,
        motor_kw: 0.0,
        fuel_type: FuelType::Diesel,
        automation_level: 0,
    }
}

pub fn bev_vehicle(id: u32) -> VehicleSpec {
    VehicleSpec {
        vehicle_id: id,
        powertrain: Powertrain::Bev,
        vclass: 4,
        curb_mass_kg: 7500.0,
        payload_mass_kg: 2000.0,
        battery_kwh: 200.0,
        frontal_area_m2: 6.0,
        drag_coeff: 0.6,
        rolling_resist: 0.0065,
        engine_kw: 0.0,
        motor_kw: 250.0,
        fuel_type: FuelType::None,
        automation_level: 0,
    }
}

pub fn phev_vehicle(id: u32) -> VehicleSpec {
    VehicleSpec {
        vehicle_id: id,
        powertrain: Powertrain::Phev,
        vclass: 6,
        curb_mass_kg: 9500.0,
        payload_mass_kg: 3000.0,
        battery_kwh: 12.0,
        frontal_area_m2: 7.0,
        drag_coeff: 0.63,
        rolling_resist: 0.0075,
        engine_kw: 180.0,
        motor_kw: 120.0,
        fuel_type: FuelType::Gasoline,
        automation_level: 0,
    }
}

/// A route of `n` links with consistent speeds and durations.
pub fn simple_route(trip_id: u64, n: usize) -> RouteTrip {
    let links = (0..n)
        .map(|i| {
            let length = 500.0 + 100.0 * i as f64;
            let avg_speed = 12.0;
            Link {
                link_id: i as u32,
                enter_time: 28_800.0 + 60.0 * i as f64,
                length,
                stop_duration: 5.0,
                travel_duration: length / avg_speed,
                avg_speed,
                speed_limit: 15.0,
            }
        })
        .collect();
    RouteTrip { trip_id, links }
}
