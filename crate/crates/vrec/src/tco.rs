//! Total cost of ownership in $/mile: amortized purchase price plus
//! discounted lifetime energy cost, driven by an editable cost table.
//!
//! The formulation is levelized: both the yearly cash flows and the
//! yearly miles are discounted, and $/mi is their ratio. With flat
//! prices and a flat mileage schedule the discount cancels exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{EnergyVector, FuelType, VehicleSpec};
use crate::error::{Error, Result};

pub const METERS_PER_MILE: f64 = 1609.344;

/// Component cost table and ownership economics. Read from TOML; the
/// bundled `fixtures/cost_default.toml` is the version-pinned default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostConfig {
    /// Glider (body, chassis, everything but the powertrain) in $ per
    /// truck class, keyed by the class number as a string.
    pub glider_usd_by_class: BTreeMap<String, f64>,
    pub engine_usd_per_kw: f64,
    pub motor_usd_per_kw: f64,
    pub battery_usd_per_kwh: f64,
    /// Retail price equivalent markup over the component sum.
    pub rpe_factor: f64,
    /// $/gal by ownership year; a shorter schedule carries its last
    /// entry forward.
    pub gasoline_usd_per_gal: Vec<f64>,
    pub diesel_usd_per_gal: Vec<f64>,
    /// $/kWh by ownership year, same carry-forward rule.
    pub electricity_usd_per_kwh: Vec<f64>,
    /// Grams of gasoline-equivalent fuel per gallon, by fuel type.
    pub fuel_g_per_gal_gasoline: f64,
    pub fuel_g_per_gal_diesel: f64,
    pub ownership_years: usize,
    /// Miles driven per ownership year; carry-forward like prices.
    pub annual_vmt: Vec<f64>,
    /// Fraction per year applied to both cash flows and miles.
    pub discount_rate: f64,
    /// Fraction of MSRP recovered at the end of ownership.
    pub resale_fraction: f64,
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rpe_factor <= 1.0 {
            return Err(Error::Config("rpe_factor must be > 1".into()));
        }
        if self.ownership_years < 1 {
            return Err(Error::Config("ownership_years must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.resale_fraction) {
            return Err(Error::Config("resale_fraction must be in [0, 1)".into()));
        }
        if self.discount_rate < 0.0 {
            return Err(Error::Config("discount_rate must be >= 0".into()));
        }
        let price_lists = [
            ("gasoline_usd_per_gal", &self.gasoline_usd_per_gal),
            ("diesel_usd_per_gal", &self.diesel_usd_per_gal),
            ("electricity_usd_per_kwh", &self.electricity_usd_per_kwh),
        ];
        for (name, list) in price_lists {
            if list.is_empty() || list.iter().any(|p| *p <= 0.0) {
                return Err(Error::Config(format!("{name} must be nonempty and > 0")));
            }
        }
        if self.fuel_g_per_gal_gasoline <= 0.0 || self.fuel_g_per_gal_diesel <= 0.0 {
            return Err(Error::Config("fuel gram-per-gallon factors must be > 0".into()));
        }
        if self.annual_vmt.is_empty() || self.annual_vmt.iter().any(|m| *m <= 0.0) {
            return Err(Error::Config("annual_vmt must be nonempty and > 0".into()));
        }
        Ok(())
    }

    pub fn from_toml_file(path: &Path) -> Result<CostConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: CostConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The bundled default table. Values are working placeholders for
    /// reproducible tests, not market quotes.
    pub fn bundled_default() -> CostConfig {
        let cfg: CostConfig = toml::from_str(DEFAULT_COST_TOML)
            .expect("bundled cost fixture parses");
        cfg.validate().expect("bundled cost fixture is valid");
        cfg
    }

    fn schedule(list: &[f64], year: usize) -> f64 {
        list[year.min(list.len() - 1)]
    }

    fn vmt_for_year(&self, year: usize) -> f64 {
        Self::schedule(&self.annual_vmt, year)
    }

    fn fuel_price_per_gram(&self, fuel: FuelType, year: usize) -> f64 {
        match fuel {
            FuelType::Gasoline | FuelType::None => {
                Self::schedule(&self.gasoline_usd_per_gal, year) / self.fuel_g_per_gal_gasoline
            }
            FuelType::Diesel => {
                Self::schedule(&self.diesel_usd_per_gal, year) / self.fuel_g_per_gal_diesel
            }
        }
    }

    fn electricity_price_per_wh(&self, year: usize) -> f64 {
        Self::schedule(&self.electricity_usd_per_kwh, year) / 1000.0
    }

    /// End-of-year discount factor for ownership year `year` (0-based).
    fn discount(&self, year: usize) -> f64 {
        1.0 / (1.0 + self.discount_rate).powi(year as i32 + 1)
    }

    fn discounted_lifetime_miles(&self) -> f64 {
        (0..self.ownership_years)
            .map(|y| self.vmt_for_year(y) * self.discount(y))
            .sum()
    }
}

/// The version-pinned default table, also shipped at
/// `fixtures/cost_default.toml`.
pub const DEFAULT_COST_TOML: &str = include_str!("../fixtures/cost_default.toml");

/// The $/mi decomposition backing one ranking entry.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TcoBreakdown {
    pub msrp: f64,
    pub capital_per_mile: f64,
    pub energy_per_mile: f64,
    pub total_per_mile: f64,
}

/// Manufacturer price: component sum times the retail price equivalent
/// factor. Glider price is looked up by truck class.
pub fn msrp(vehicle: &VehicleSpec, cfg: &CostConfig) -> Result<f64> {
    let class_key = vehicle.vclass.to_string();
    let glider = *cfg
        .glider_usd_by_class
        .get(&class_key)
        .ok_or_else(|| Error::MissingComponentPrice(format!("glider class {class_key}")))?;
    let components = glider
        + vehicle.engine_kw * cfg.engine_usd_per_kw
        + vehicle.motor_kw * cfg.motor_usd_per_kw
        + vehicle.battery_kwh * cfg.battery_usd_per_kwh;
    Ok(components * cfg.rpe_factor)
}

/// Levelized energy cost. The trip's per-mile intensity (g/mi, Wh/mi)
/// is extrapolated over each ownership year's mileage, priced per year,
/// discounted, and divided by discounted lifetime miles.
pub fn energy_cost_per_mile(
    trip_energy: &EnergyVector,
    trip_miles: f64,
    vehicle: &VehicleSpec,
    cfg: &CostConfig,
) -> Result<f64> {
    if !(trip_miles > 0.0) {
        return Err(Error::Data("trip distance must be > 0".into()));
    }
    let fuel_g_per_mile = trip_energy.fuel_g / trip_miles;
    let wh_per_mile = trip_energy.electric_wh / trip_miles;
    let mut cost = 0.0;
    for year in 0..cfg.ownership_years {
        let cpm = fuel_g_per_mile * cfg.fuel_price_per_gram(vehicle.fuel_type, year)
            + wh_per_mile * cfg.electricity_price_per_wh(year);
        cost += cpm * cfg.vmt_for_year(year) * cfg.discount(year);
    }
    Ok(cost / cfg.discounted_lifetime_miles())
}

/// Full breakdown: amortized capital (MSRP less discounted resale, over
/// discounted lifetime miles) plus levelized energy. Maintenance and
/// insurance are out of scope by design.
pub fn tco_per_mile(
    vehicle: &VehicleSpec,
    trip_energy: &EnergyVector,
    trip_miles: f64,
    cfg: &CostConfig,
) -> Result<TcoBreakdown> {
    let price = msrp(vehicle, cfg)?;
    let resale = cfg.resale_fraction * price * cfg.discount(cfg.ownership_years - 1);
    let capital_per_mile = (price - resale) / cfg.discounted_lifetime_miles();
    let energy_per_mile = energy_cost_per_mile(trip_energy, trip_miles, vehicle, cfg)?;
    Ok(TcoBreakdown {
        msrp: price,
        capital_per_mile,
        energy_per_mile,
        total_per_mile: capital_per_mile + energy_per_mile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{bev_vehicle, conv_vehicle};

    fn flat_cfg() -> CostConfig {
        let mut cfg = CostConfig::bundled_default();
        cfg.discount_rate = 0.0;
        cfg.resale_fraction = 0.0;
        cfg.gasoline_usd_per_gal = vec![3.0];
        cfg.diesel_usd_per_gal = vec![4.0];
        cfg.electricity_usd_per_kwh = vec![0.12];
        cfg.annual_vmt = vec![20_000.0];
        cfg
    }

    #[test]
    fn bundled_default_is_valid() {
        CostConfig::bundled_default().validate().unwrap();
    }

    #[test]
    fn msrp_applies_rpe_factor() {
        let mut cfg = flat_cfg();
        cfg.glider_usd_by_class = [("6".to_string(), 100_000.0)].into();
        cfg.engine_usd_per_kw = 0.0;
        cfg.motor_usd_per_kw = 0.0;
        cfg.battery_usd_per_kwh = 0.0;
        let mut v = conv_vehicle(1);
        v.vclass = 6;
        assert!((msrp(&v, &cfg).unwrap() - 120_000.0).abs() < 1e-9);
        cfg.rpe_factor = 1.0;
        assert!((msrp(&v, &cfg).unwrap() - 100_000.0).abs() < 1e-9);
    }

    #[test]
    fn missing_glider_class_names_the_component() {
        let mut cfg = flat_cfg();
        cfg.glider_usd_by_class.clear();
        let err = msrp(&conv_vehicle(1), &cfg).unwrap_err();
        assert!(matches!(err, Error::MissingComponentPrice(ref s) if s.contains("glider")));
    }

    #[test]
    fn bev_conv_msrp_gap_is_rpe_times_component_delta() {
        let mut cfg = flat_cfg();
        cfg.battery_usd_per_kwh = 150.0;
        let mut bev = bev_vehicle(1);
        let mut conv = conv_vehicle(2);
        bev.vclass = 6;
        conv.vclass = 6;
        bev.battery_kwh = 300.0;
        bev.motor_kw = 250.0;
        bev.engine_kw = 0.0;
        conv.engine_kw = 220.0;
        conv.motor_kw = 0.0;
        conv.battery_kwh = 0.0;
        let gap = msrp(&bev, &cfg).unwrap() - msrp(&conv, &cfg).unwrap();
        let expected = cfg.rpe_factor
            * (300.0 * cfg.battery_usd_per_kwh + 250.0 * cfg.motor_usd_per_kw
                - 220.0 * cfg.engine_usd_per_kw);
        assert!((gap - expected).abs() < 1e-6);
    }

    #[test]
    fn zero_consumption_costs_nothing() {
        let cfg = flat_cfg();
        let c = energy_cost_per_mile(&EnergyVector::ZERO, 10.0, &conv_vehicle(1), &cfg).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn zero_trip_distance_is_a_fault() {
        let cfg = flat_cfg();
        assert!(energy_cost_per_mile(&EnergyVector::ZERO, 0.0, &conv_vehicle(1), &cfg).is_err());
    }

    #[test]
    fn flat_prices_no_discount_reduce_to_direct_pricing() {
        let cfg = flat_cfg();
        let v = conv_vehicle(1); // diesel
        let e = EnergyVector::new(6384.0, 0.0); // 2 gal at 3192 g/gal
        let miles = 25.0;
        let c = energy_cost_per_mile(&e, miles, &v, &cfg).unwrap();
        let expected = (e.fuel_g / cfg.fuel_g_per_gal_diesel) * 4.0 / miles;
        assert!((c - expected).abs() < 1e-12);
    }

    #[test]
    fn flat_schedules_make_discount_cancel() {
        let mut cfg = flat_cfg();
        let v = bev_vehicle(1);
        let e = EnergyVector::new(0.0, 40_000.0);
        let undiscounted = energy_cost_per_mile(&e, 30.0, &v, &cfg).unwrap();
        cfg.discount_rate = 0.05;
        cfg.ownership_years = 10;
        let discounted = energy_cost_per_mile(&e, 30.0, &v, &cfg).unwrap();
        assert!((undiscounted - discounted).abs() < 1e-12);
    }

    #[test]
    fn one_year_no_discount_capital_is_msrp_over_vmt() {
        let mut cfg = flat_cfg();
        cfg.ownership_years = 1;
        cfg.annual_vmt = vec![20_000.0];
        let v = conv_vehicle(1);
        let bd = tco_per_mile(&v, &EnergyVector::ZERO, 10.0, &cfg).unwrap();
        let expected = msrp(&v, &cfg).unwrap() / 20_000.0;
        assert!((bd.capital_per_mile - expected).abs() < 1e-9);
        assert_eq!(bd.total_per_mile, bd.capital_per_mile + bd.energy_per_mile);
    }

    #[test]
    fn more_energy_costs_strictly_more() {
        let cfg = flat_cfg();
        let v = conv_vehicle(1);
        let lo = tco_per_mile(&v, &EnergyVector::new(100.0, 0.0), 10.0, &cfg).unwrap();
        let hi = tco_per_mile(&v, &EnergyVector::new(200.0, 0.0), 10.0, &cfg).unwrap();
        assert!(hi.total_per_mile > lo.total_per_mile);
    }

    #[test]
    fn doubling_every_price_doubles_total() {
        let mut cfg = CostConfig::bundled_default();
        let v = conv_vehicle(1);
        let e = EnergyVector::new(900.0, 0.0);
        let base = tco_per_mile(&v, &e, 12.0, &cfg).unwrap();
        for g in cfg.glider_usd_by_class.values_mut() {
            *g *= 2.0;
        }
        cfg.engine_usd_per_kw *= 2.0;
        cfg.motor_usd_per_kw *= 2.0;
        cfg.battery_usd_per_kwh *= 2.0;
        for p in cfg
            .gasoline_usd_per_gal
            .iter_mut()
            .chain(cfg.diesel_usd_per_gal.iter_mut())
            .chain(cfg.electricity_usd_per_kwh.iter_mut())
        {
            *p *= 2.0;
        }
        let doubled = tco_per_mile(&v, &e, 12.0, &cfg).unwrap();
        assert!((doubled.total_per_mile - 2.0 * base.total_per_mile).abs() < 1e-9);
    }

    #[test]
    fn matches_year_by_year_oracle() {
        // Independent re-derivation with per-year price and VMT schedules
        // and a nonzero discount rate.
        let mut cfg = CostConfig::bundled_default();
        cfg.ownership_years = 5;
        cfg.discount_rate = 0.07;
        cfg.resale_fraction = 0.25;
        cfg.gasoline_usd_per_gal = vec![3.0, 3.2, 3.4, 3.5, 3.6];
        cfg.electricity_usd_per_kwh = vec![0.11, 0.12, 0.13];
        cfg.annual_vmt = vec![25_000.0, 24_000.0, 22_000.0, 20_000.0, 18_000.0];
        let mut v = conv_vehicle(1);
        v.powertrain = crate::domain::Powertrain::Phev;
        v.fuel_type = FuelType::Gasoline;
        v.battery_kwh = 12.0;
        v.motor_kw = 90.0;
        let e = EnergyVector::new(1200.0, 8000.0);
        let miles = 18.0;
        let bd = tco_per_mile(&v, &e, miles, &cfg).unwrap();

        // oracle loop
        let price = msrp(&v, &cfg).unwrap();
        let r = cfg.discount_rate;
        let mut disc_miles = 0.0;
        let mut disc_energy = 0.0;
        for y in 0..cfg.ownership_years {
            let d = (1.0f64 + r).powi(-(y as i32) - 1);
            let vmt = cfg.annual_vmt[y.min(cfg.annual_vmt.len() - 1)];
            let gas = cfg.gasoline_usd_per_gal[y.min(cfg.gasoline_usd_per_gal.len() - 1)];
            let kwh = cfg.electricity_usd_per_kwh[y.min(cfg.electricity_usd_per_kwh.len() - 1)];
            let cpm = (e.fuel_g / miles) * gas / cfg.fuel_g_per_gal_gasoline
                + (e.electric_wh / miles) * kwh / 1000.0;
            disc_miles += vmt * d;
            disc_energy += cpm * vmt * d;
        }
        let resale = cfg.resale_fraction * price * (1.0f64 + r).powi(-(cfg.ownership_years as i32));
        let capital = (price - resale) / disc_miles;
        let energy = disc_energy / disc_miles;
        assert!((bd.capital_per_mile - capital).abs() < 1e-6);
        assert!((bd.energy_per_mile - energy).abs() < 1e-6);
        assert!((bd.total_per_mile - (capital + energy)).abs() < 1e-6);
    }
}
