//! Fleet deployment: assign n vehicles to m <= n trips minimizing total
//! cost. Kuhn-Munkres with a dual certificate, plus a brute-force
//! oracle and a greedy comparator for verification.

use serde::{Deserialize, Serialize};

use crate::domain::{RouteTrip, VehicleSpec};
use crate::error::{Error, Result};
use crate::model::{predict_trip, ModelParams};
use crate::tco::{tco_per_mile, CostConfig, METERS_PER_MILE};

/// Whether matrix entries are $/mi or absolute $ per trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssignMode {
    PerMile,
    PerTrip,
}

/// Row-major cost matrix: rows are vehicles (n), columns are trips (m),
/// n >= m >= 1, all entries finite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostMatrix {
    pub n_vehicles: usize,
    pub n_trips: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n_vehicles: usize, n_trips: usize, data: Vec<f64>) -> Result<CostMatrix> {
        if n_trips < 1 || n_vehicles < n_trips {
            return Err(Error::Data(format!(
                "need n_vehicles >= n_trips >= 1, got {n_vehicles} x {n_trips}"
            )));
        }
        if data.len() != n_vehicles * n_trips {
            return Err(Error::Dimension(format!(
                "cost matrix data length {} does not match {n_vehicles} x {n_trips}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("cost matrix entries must be finite".into()));
        }
        Ok(CostMatrix { n_vehicles, n_trips, data })
    }

    pub fn get(&self, vehicle: usize, trip: usize) -> f64 {
        self.data[vehicle * self.n_trips + trip]
    }
}

/// An injective trip -> vehicle map with its total cost and the dual
/// certificate from the solver (empty for the oracle and greedy paths).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assignment {
    /// `trip_to_vehicle[j]` is the vehicle row serving trip j.
    pub trip_to_vehicle: Vec<usize>,
    /// Sum of the selected real entries.
    pub total_cost: f64,
    /// Row potentials over the padded square (length n).
    pub u: Vec<f64>,
    /// Column potentials over the padded square (length n; the first m
    /// are real trips).
    pub v: Vec<f64>,
    /// Optimal total of the padded square problem, equal to sum(u) +
    /// sum(v) by LP duality.
    pub padded_total: f64,
}

/// Entry (i, j) is the TCO of vehicle i driving trip j, per mile or per
/// trip depending on `mode`.
pub fn build_cost_matrix(
    trips: &[RouteTrip],
    vehicles: &[VehicleSpec],
    params: &ModelParams,
    cost_cfg: &CostConfig,
    mode: AssignMode,
) -> Result<CostMatrix> {
    let n = vehicles.len();
    let m = trips.len();
    let mut data = Vec::with_capacity(n * m);
    for veh in vehicles {
        for trip in trips {
            let miles = trip.total_length() / METERS_PER_MILE;
            let predicted = predict_trip(trip, veh, params);
            let bd = tco_per_mile(veh, &predicted, miles, cost_cfg)?;
            data.push(match mode {
                AssignMode::PerMile => bd.total_per_mile,
                AssignMode::PerTrip => bd.total_per_mile * miles,
            });
        }
    }
    CostMatrix::new(n, m, data)
}

/// Minimum-cost injective assignment via the Kuhn-Munkres potential
/// algorithm. Rectangular inputs are squared by padding the columns
/// with a constant exceeding every real entry; padded columns are
/// dropped from the output. Exposes the final potentials as a dual
/// feasibility certificate (u_i + v_j <= w_ij on the padded square).
pub fn kuhn_munkres(costs: &CostMatrix) -> Result<Assignment> {
    let n = costs.n_vehicles;
    let m = costs.n_trips;
    let max_entry = costs.data.iter().cloned().fold(0.0f64, f64::max);
    let big_m = max_entry * m as f64 + 1.0;
    // padded square, 1-indexed access closure
    let w = |i: usize, j: usize| -> f64 {
        if j < m {
            costs.get(i, j)
        } else {
            big_m
        }
    };

    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    // p[j] = row matched to column j (0 = none), columns 1..=n
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = w(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut trip_to_vehicle = vec![0usize; m];
    for j in 1..=n {
        if j - 1 < m {
            trip_to_vehicle[j - 1] = p[j] - 1;
        }
    }
    canonicalize(costs, &mut trip_to_vehicle);
    let total_cost: f64 = trip_to_vehicle
        .iter()
        .enumerate()
        .map(|(j, &i)| costs.get(i, j))
        .sum();
    let padded_total = u[1..].iter().sum::<f64>() + v[1..].iter().sum::<f64>();
    Ok(Assignment {
        trip_to_vehicle,
        total_cost,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
        padded_total,
    })
}

/// Deterministic tie-breaking: among cost-preserving pairwise swaps,
/// prefer the lower vehicle index on the earlier trip. Leaves the total
/// exactly unchanged.
fn canonicalize(costs: &CostMatrix, assign: &mut [usize]) {
    let m = assign.len();
    loop {
        let mut changed = false;
        for a in 0..m {
            for b in a + 1..m {
                let (va, vb) = (assign[a], assign[b]);
                if vb < va
                    && costs.get(vb, a) + costs.get(va, b) == costs.get(va, a) + costs.get(vb, b)
                {
                    assign.swap(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Exhaustive oracle: enumerates every injective trip -> vehicle map.
/// Refuses m > 8.
pub fn brute_force_assign(costs: &CostMatrix) -> Result<Assignment> {
    let m = costs.n_trips;
    if m > 8 {
        return Err(Error::Data(format!("brute force refused for m = {m} > 8")));
    }
    let n = costs.n_vehicles;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut current = Vec::with_capacity(m);
    let mut used = vec![false; n];
    fn walk(
        costs: &CostMatrix,
        trip: usize,
        acc: f64,
        current: &mut Vec<usize>,
        used: &mut [bool],
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if trip == costs.n_trips {
            let better = match best {
                None => true,
                Some((cost, assign)) => acc < *cost || (acc == *cost && current[..] < assign[..]),
            };
            if better {
                *best = Some((acc, current.clone()));
            }
            return;
        }
        for i in 0..costs.n_vehicles {
            if used[i] {
                continue;
            }
            used[i] = true;
            current.push(i);
            walk(costs, trip + 1, acc + costs.get(i, trip), current, used, best);
            current.pop();
            used[i] = false;
        }
    }
    walk(costs, 0, 0.0, &mut current, &mut used, &mut best);
    let (total_cost, trip_to_vehicle) = best.expect("m >= 1 guarantees a candidate");
    Ok(Assignment {
        trip_to_vehicle,
        total_cost,
        u: Vec::new(),
        v: Vec::new(),
        padded_total: f64::NAN,
    })
}

/// Greedy comparator: each trip in order takes the cheapest vehicle not
/// already claimed. Upper-bounds the optimum.
pub fn greedy_assign(costs: &CostMatrix) -> Assignment {
    let n = costs.n_vehicles;
    let m = costs.n_trips;
    let mut used = vec![false; n];
    let mut trip_to_vehicle = Vec::with_capacity(m);
    let mut total_cost = 0.0;
    for j in 0..m {
        let (i, c) = (0..n)
            .filter(|&i| !used[i])
            .map(|i| (i, costs.get(i, j)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
            .expect("n >= m leaves a free vehicle");
        used[i] = true;
        trip_to_vehicle.push(i);
        total_cost += c;
    }
    Assignment { trip_to_vehicle, total_cost, u: Vec::new(), v: Vec::new(), padded_total: f64::NAN }
}

/// Verifies the dual certificate against the padded square: u_i + v_j
/// <= w_ij everywhere (within `tol`) and sum(u) + sum(v) equals the
/// padded optimal total.
pub fn verify_duals(costs: &CostMatrix, assign: &Assignment, tol: f64) -> bool {
    let n = costs.n_vehicles;
    let m = costs.n_trips;
    if assign.u.len() != n || assign.v.len() != n {
        return false;
    }
    let max_entry = costs.data.iter().cloned().fold(0.0f64, f64::max);
    let big_m = max_entry * m as f64 + 1.0;
    for i in 0..n {
        for j in 0..n {
            let w = if j < m { costs.get(i, j) } else { big_m };
            if assign.u[i] + assign.v[j] > w + tol {
                return false;
            }
        }
    }
    let dual_sum: f64 = assign.u.iter().sum::<f64>() + assign.v.iter().sum::<f64>();
    (dual_sum - assign.padded_total).abs() <= tol * (1.0 + assign.padded_total.abs())
}

/// Text rendering of the assignment table.
pub fn render_table(costs: &CostMatrix, assign: &Assignment) -> String {
    let mut out = String::from("trip  vehicle  cost\n");
    for (j, &i) in assign.trip_to_vehicle.iter().enumerate() {
        out.push_str(&format!("{:<5} {:<8} {:.6}\n", j, i, costs.get(i, j)));
    }
    out.push_str(&format!("total {:.6}\n", assign.total_cost));
    out
}
