//! Per-link ridge-regression baseline: an independent linear map from
//! the normalized link row to each energy channel, with no sequence
//! modeling at all. Used as the reference the ensemble must beat.

use ndarray::Array2;

use crate::domain::{EnergyVector, LabeledTrip};
use crate::error::{Error, Result};
use crate::features::FeatureSchema;

/// Linear per-link model: one weight vector (plus intercept) per
/// channel, fitted by ridge normal equations.
#[derive(Debug, Clone)]
pub struct LinearBaseline {
    pub schema: FeatureSchema,
    /// Per channel: D+1 coefficients, intercept last.
    pub weights: [Vec<f64>; 2],
}

impl LinearBaseline {
    /// Fits both channels on every link of the given trips. Channels
    /// only see rows from powertrains that use them.
    pub fn fit(trips: &[LabeledTrip], schema: &FeatureSchema, ridge: f64) -> Result<LinearBaseline> {
        if trips.is_empty() {
            return Err(Error::Data("cannot fit baseline on empty dataset".into()));
        }
        let d = schema.d();
        let n = d + 1;
        let mut weights: [Vec<f64>; 2] = [vec![0.0; n], vec![0.0; n]];
        for ch in 0..2 {
            let mut ata = vec![0.0; n * n];
            let mut atb = vec![0.0; n];
            let mut rows = 0usize;
            for trip in trips {
                let active = if ch == 0 {
                    trip.vehicle.powertrain.consumes_fuel()
                } else {
                    trip.vehicle.powertrain.consumes_electric()
                };
                if !active {
                    continue;
                }
                let x = schema.assemble_design_matrix(&trip.route, &trip.vehicle);
                for (t, label) in trip.labels.iter().enumerate() {
                    let y = if ch == 0 { label.fuel_g } else { label.electric_wh };
                    let mut row = Vec::with_capacity(n);
                    row.extend(x.row(t).iter().copied());
                    row.push(1.0);
                    for i in 0..n {
                        atb[i] += row[i] * y;
                        for j in 0..n {
                            ata[i * n + j] += row[i] * row[j];
                        }
                    }
                    rows += 1;
                }
            }
            if rows == 0 {
                continue;
            }
            let lambda = ridge * rows as f64;
            for i in 0..n {
                ata[i * n + i] += lambda;
            }
            weights[ch] = solve_dense(&mut ata, &mut atb, n)?;
        }
        Ok(LinearBaseline { schema: schema.clone(), weights })
    }

    /// Predicted trip totals: nonnegative per-link predictions summed,
    /// masked by powertrain channel activity.
    pub fn predict_trip(&self, trip: &LabeledTrip) -> EnergyVector {
        let x: Array2<f64> = self.schema.assemble_design_matrix(&trip.route, &trip.vehicle);
        let p = trip.vehicle.powertrain;
        let mut total = EnergyVector::ZERO;
        for t in 0..x.nrows() {
            for ch in 0..2 {
                let active = if ch == 0 { p.consumes_fuel() } else { p.consumes_electric() };
                if !active {
                    continue;
                }
                let w = &self.weights[ch];
                let mut v = w[w.len() - 1];
                for (j, xv) in x.row(t).iter().enumerate() {
                    v += w[j] * xv;
                }
                let v = v.max(0.0);
                if ch == 0 {
                    total.fuel_g += v;
                } else {
                    total.electric_wh += v;
                }
            }
        }
        total
    }
}

/// Gaussian elimination with partial pivoting on a dense row-major
/// system. Small systems only (D+1 unknowns).
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::Data("singular normal equations in baseline fit".into()));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / diag;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= f * a[col * n + j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row * n + j] * x[j];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}
