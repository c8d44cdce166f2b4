//! Single-trip top-k vehicle recommendation with a 1-5 star ranking.
//!
//! Every candidate is evaluated brute-force: predict the trip energy,
//! price it into $/mi, then map $/mi onto stars relative to the best
//! (or an expected-optimum prior, whichever is lower).

use serde::{Deserialize, Serialize};

use crate::domain::{EnergyVector, RouteTrip, VehicleSpec};
use crate::error::{Error, Result};
use crate::model::{predict_trip, ModelParams};
use crate::tco::{tco_per_mile, CostConfig, TcoBreakdown, METERS_PER_MILE};

/// One row of the recommendation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub vehicle_id: u32,
    pub powertrain: String,
    pub predicted: EnergyVector,
    pub tco: TcoBreakdown,
    pub stars: u8,
    /// 0-based position in the ascending-$/mi ordering.
    pub rank_position: usize,
}

/// Star ranking: r = floor(4 exp(-(y - a)/a) + 1) clamped to [1, 5],
/// with a = min(alpha_prior, min y). The argmin always gets 5 stars.
pub fn star_rank(tcos: &[f64], alpha_prior: Option<f64>) -> Result<Vec<u8>> {
    if tcos.is_empty() {
        return Err(Error::Data("star_rank needs at least one candidate".into()));
    }
    if tcos.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Data("star_rank requires strictly positive TCOs".into()));
    }
    let min_tco = tcos.iter().cloned().fold(f64::INFINITY, f64::min);
    let alpha = match alpha_prior {
        Some(a) if a > 0.0 => a.min(min_tco),
        Some(_) => return Err(Error::Data("alpha_prior must be > 0".into())),
        None => min_tco,
    };
    Ok(tcos
        .iter()
        .map(|&y| {
            let v = 4.0 * (-(y - alpha) / alpha).exp() + 1.0;
            // tiny upward nudge so closed-form points like y = a(1+ln4)
            // (exactly 2.0) survive floating-point rounding of exp
            let r = (v + 1e-9).floor();
            r.clamp(1.0, 5.0) as u8
        })
        .collect())
}

/// Evaluates every candidate on the route and returns the top k by
/// ascending $/mi, ties broken by lower vehicle_id. k larger than the
/// candidate count is clamped.
pub fn recommend_one(
    route: &RouteTrip,
    candidates: &[VehicleSpec],
    params: &ModelParams,
    cost_cfg: &CostConfig,
    k: usize,
) -> Result<Vec<RankedCandidate>> {
    if candidates.is_empty() {
        return Err(Error::Data("recommend_one needs at least one candidate".into()));
    }
    if k == 0 {
        return Err(Error::Data("k must be >= 1".into()));
    }
    let trip_miles = route.total_length() / METERS_PER_MILE;
    let mut rows: Vec<(u32, String, EnergyVector, TcoBreakdown)> = candidates
        .iter()
        .map(|veh| {
            let predicted = predict_trip(route, veh, params);
            let tco = tco_per_mile(veh, &predicted, trip_miles, cost_cfg)?;
            Ok((veh.vehicle_id, veh.powertrain.name().to_string(), predicted, tco))
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| {
        a.3.total_per_mile
            .partial_cmp(&b.3.total_per_mile)
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    let tcos: Vec<f64> = rows.iter().map(|r| r.3.total_per_mile).collect();
    let stars = star_rank(&tcos, None)?;
    Ok(rows
        .into_iter()
        .zip(stars)
        .take(k.min(candidates.len()))
        .enumerate()
        .map(|(i, ((vehicle_id, powertrain, predicted, tco), stars))| RankedCandidate {
            vehicle_id,
            powertrain,
            predicted,
            tco,
            stars,
            rank_position: i,
        })
        .collect())
}

/// Text rendering of the recommendation table.
pub fn render_table(rows: &[RankedCandidate]) -> String {
    let mut out =
        String::from("rank  vehicle  powertrain  fuel_g      electric_wh  usd_per_mile  stars\n");
    for r in rows {
        out.push_str(&format!(
            "{:<5} {:<8} {:<11} {:<11.1} {:<12.1} {:<13.4} {}\n",
            r.rank_position + 1,
            r.vehicle_id,
            r.powertrain,
            r.predicted.fuel_g,
            r.predicted.electric_wh,
            r.tco.total_per_mile,
            "*".repeat(r.stars as usize),
        ));
    }
    out
}
