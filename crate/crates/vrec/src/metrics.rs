//! Trip-level evaluation: MAE, RMSE, MAPE, MAAPE, per-link-count
//! curves, per-powertrain breakdowns, and AAPE percentile tables.
//!
//! Percentage metrics use the nonzero-label subset per channel;
//! percentiles follow the nearest-rank convention so tables reproduce
//! bit-exactly.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::domain::{EnergyVector, LabeledTrip, Powertrain};
use crate::error::{Error, Result};

/// Mean absolute error and root mean square error.
pub fn mae_rmse(truth: &[f64], pred: &[f64]) -> Result<(f64, f64)> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::Data("mae_rmse needs equal nonzero-length inputs".into()));
    }
    let n = truth.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for (y, p) in truth.iter().zip(pred) {
        let e = y - p;
        abs_sum += e.abs();
        sq_sum += e * e;
    }
    Ok((abs_sum / n, (sq_sum / n).sqrt()))
}

/// MAPE and MAAPE over the nonzero-truth subset. `None` when every
/// truth value is zero (undefined, reported as absent).
pub fn mape_maape(truth: &[f64], pred: &[f64]) -> Result<Option<(f64, f64)>> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::Data("mape_maape needs equal nonzero-length inputs".into()));
    }
    let mut mape_sum = 0.0;
    let mut maape_sum = 0.0;
    let mut n = 0usize;
    for (y, p) in truth.iter().zip(pred) {
        if *y == 0.0 {
            continue;
        }
        let ape = ((y - p) / y).abs();
        mape_sum += ape;
        maape_sum += ape.atan();
        n += 1;
    }
    if n == 0 {
        Ok(None)
    } else {
        Ok(Some((mape_sum / n as f64, maape_sum / n as f64)))
    }
}

/// Arc-tangent absolute percentage errors over the nonzero-truth
/// subset.
pub fn aape_values(truth: &[f64], pred: &[f64]) -> Vec<f64> {
    truth
        .iter()
        .zip(pred)
        .filter(|(y, _)| **y != 0.0)
        .map(|(y, p)| ((y - p) / y).abs().atan())
        .collect()
}

/// Nearest-rank percentiles: the value at index ceil(q/100 * N)
/// (1-based) of the sorted sample.
pub fn aape_percentiles(values: &[f64], quantiles: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantiles
        .iter()
        .map(|q| {
            if sorted.is_empty() {
                f64::NAN
            } else {
                let idx = ((q / 100.0 * sorted.len() as f64).ceil() as usize)
                    .clamp(1, sorted.len());
                sorted[idx - 1]
            }
        })
        .collect()
}

/// The two energy channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Fuel,
    Electric,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::Fuel, Channel::Electric];

    pub fn of(self, e: &EnergyVector) -> f64 {
        match self {
            Channel::Fuel => e.fuel_g,
            Channel::Electric => e.electric_wh,
        }
    }

    pub fn active_for(self, p: Powertrain) -> bool {
        match self {
            Channel::Fuel => p.consumes_fuel(),
            Channel::Electric => p.consumes_electric(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Fuel => "fuel",
            Channel::Electric => "electric",
        }
    }
}

/// Scalar metrics for one (powertrain, channel) group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub count: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Absent when every label in the group is zero.
    pub mape: Option<f64>,
    pub maape: Option<f64>,
}

/// One point of the per-link-count error curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkCountPoint {
    pub links: usize,
    pub count: usize,
    pub mae: f64,
    pub rmse: f64,
    pub maape: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PercentileTable {
    pub quantiles: Vec<f64>,
    pub values: Vec<f64>,
    pub count: usize,
}

/// Full evaluation report over a labeled dataset and its predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Keyed by "(powertrain, channel)".
    pub groups: Vec<(String, String, GroupMetrics)>,
    /// Per (powertrain, channel): the by-link-count series.
    pub by_link_count: Vec<(String, String, Vec<LinkCountPoint>)>,
    /// AAPE percentiles over the pooled fuel set (all fuel-burning
    /// powertrains) and the pooled electric set (BEV + PHEV).
    pub fuel_percentiles: PercentileTable,
    pub electric_percentiles: PercentileTable,
}

const REPORT_QUANTILES: [f64; 5] = [25.0, 50.0, 75.0, 90.0, 95.0];

fn group_metrics(truth: &[f64], pred: &[f64]) -> Result<GroupMetrics> {
    let (mae, rmse) = mae_rmse(truth, pred)?;
    let pm = mape_maape(truth, pred)?;
    Ok(GroupMetrics {
        count: truth.len(),
        mae,
        rmse,
        mape: pm.map(|(m, _)| m),
        maape: pm.map(|(_, m)| m),
    })
}

/// Groups trips by exact link count and computes MAE_l, RMSE_l, and
/// MAAPE_l per group. Empty groups are omitted.
pub fn by_link_count(truth: &[f64], pred: &[f64], lengths: &[usize]) -> Vec<LinkCountPoint> {
    let mut groups: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((y, p), &l) in truth.iter().zip(pred).zip(lengths) {
        let entry = groups.entry(l).or_default();
        entry.0.push(*y);
        entry.1.push(*p);
    }
    groups
        .into_iter()
        .map(|(l, (ys, ps))| {
            let (mae, rmse) = mae_rmse(&ys, &ps).expect("nonempty group");
            let maape = mape_maape(&ys, &ps).expect("nonempty group").map(|(_, m)| m);
            LinkCountPoint { links: l, count: ys.len(), mae, rmse, maape }
        })
        .collect()
}

/// Builds the full evaluation report from trips and predicted trip
/// totals (in matching order).
pub fn evaluate(trips: &[LabeledTrip], preds: &[EnergyVector]) -> Result<EvalReport> {
    if trips.len() != preds.len() || trips.is_empty() {
        return Err(Error::Data("evaluate needs equal nonzero-length inputs".into()));
    }
    let mut groups = Vec::new();
    let mut curves = Vec::new();
    let mut fuel_aape = Vec::new();
    let mut electric_aape = Vec::new();

    for p in Powertrain::ALL {
        for ch in Channel::BOTH {
            if !ch.active_for(p) {
                continue;
            }
            let mut truth = Vec::new();
            let mut pred = Vec::new();
            let mut lengths = Vec::new();
            for (trip, pr) in trips.iter().zip(preds) {
                if trip.vehicle.powertrain != p {
                    continue;
                }
                truth.push(ch.of(&trip.trip_total()));
                pred.push(ch.of(pr));
                lengths.push(trip.route.len());
            }
            if truth.is_empty() {
                continue;
            }
            let gm = group_metrics(&truth, &pred)?;
            groups.push((p.name().to_string(), ch.name().to_string(), gm));
            curves.push((
                p.name().to_string(),
                ch.name().to_string(),
                by_link_count(&truth, &pred, &lengths),
            ));
            let aapes = aape_values(&truth, &pred);
            match ch {
                Channel::Fuel => fuel_aape.extend(aapes),
                Channel::Electric => electric_aape.extend(aapes),
            }
        }
    }

    let table = |vals: &[f64]| PercentileTable {
        quantiles: REPORT_QUANTILES.to_vec(),
        values: aape_percentiles(vals, &REPORT_QUANTILES),
        count: vals.len(),
    };
    Ok(EvalReport {
        groups,
        by_link_count: curves,
        fuel_percentiles: table(&fuel_aape),
        electric_percentiles: table(&electric_aape),
    })
}

impl EvalReport {
    /// Human-readable rendering of the report.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("powertrain  channel   count      MAE          RMSE         MAPE     MAAPE\n");
        for (p, ch, g) in &self.groups {
            out.push_str(&format!(
                "{:<11} {:<9} {:<10} {:<12.3} {:<12.3} {:<8} {}\n",
                p,
                ch,
                g.count,
                g.mae,
                g.rmse,
                g.mape.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into()),
                g.maape.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into()),
            ));
        }
        out.push_str("\nAAPE percentiles (fuel / electric):\n");
        for (q, (f, e)) in self
            .fuel_percentiles
            .quantiles
            .iter()
            .zip(self.fuel_percentiles.values.iter().zip(&self.electric_percentiles.values))
        {
            out.push_str(&format!("  p{q:<4} {f:.4}  {e:.4}\n"));
        }
        out
    }

    /// Plot-ready CSV of the per-link-count curves.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("powertrain,channel,links,count,mae,rmse,maape\n");
        for (p, ch, points) in &self.by_link_count {
            for pt in points {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    p,
                    ch,
                    pt.links,
                    pt.count,
                    pt.mae,
                    pt.rmse,
                    pt.maape.map(|m| m.to_string()).unwrap_or_default()
                ));
            }
        }
        out
    }
}

/// Upper bound of every AAPE sample.
pub const MAAPE_BOUND: f64 = FRAC_PI_2;
