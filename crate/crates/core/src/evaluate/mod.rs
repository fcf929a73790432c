//! Scoring predictions against measured snapshots with the exact 2-Wasserstein
//! distance.

mod network_simplex;

pub use network_simplex::{solve_transport, solve_transport_ordered, Flow};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::BridgeSolution;
use crate::error::{CoverageGap, Error, Result};
use crate::linalg::{dot, squared_distance, Matrix};
use crate::marginals::Snapshot;
use crate::predict::{predict_distribution, Query, WeightedParticles};

/// Largest tolerated deviation of a weight vector's total from one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// Optimal unregularized transport between two discrete measures.
#[derive(Debug, Clone)]
pub struct TransportResult {
    /// Optimal `Σ π_ij |x_i - y_j|²`.
    pub cost: f64,
    /// `√cost`.
    pub distance: f64,
    /// Optimal plan, when requested.
    pub plan: Option<Matrix>,
}

fn check_measure(p: &WeightedParticles, name: &str) -> Result<f64> {
    let total: f64 = p.weights().iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::Validation(format!("{name} weights sum to {total}")));
    }
    Ok(total)
}

fn transport(p: &WeightedParticles, q: &WeightedParticles, with_plan: bool) -> Result<TransportResult> {
    if p.dim() != q.dim() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let sp = check_measure(p, "first measure")?;
    let sq = check_measure(q, "second measure")?;
    // Zero-weight atoms carry no flow; leave them out of the network.
    let rows: Vec<usize> = (0..p.len()).filter(|&i| p.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..q.len()).filter(|&j| q.weights()[j] > 0.0).collect();
    let supply: Vec<f64> = rows.iter().map(|&i| p.weights()[i] / sp).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| q.weights()[j] / sq).collect();
    let x = Matrix::from_fn(rows.len(), p.dim(), |r, k| p.points()[(rows[r], k)]);
    let y = Matrix::from_fn(cols.len(), q.dim(), |c, k| q.points()[(cols[c], k)]);

    let (m1, m2) = (rows.len(), cols.len());
    let mut cost = Matrix::zeros(m1, m2);
    cost.as_mut_slice()
        .par_chunks_mut(m2)
        .enumerate()
        .for_each(|(i, row)| {
            let xi = x.row(i);
            for (j, c) in row.iter_mut().enumerate() {
                *c = squared_distance(xi, y.row(j));
            }
        });
    let (src_order, dst_order) = projection_orders(&x, &y);
    let flow = solve_transport_ordered(&supply, &demand, &cost, &src_order, &dst_order);
    let total = flow.cost.max(0.0);
    let plan = with_plan.then(|| {
        let mut plan = Matrix::zeros(p.len(), q.len());
        for &(i, j, f) in &flow.arcs {
            plan[(rows[i], cols[j])] = f;
        }
        plan
    });
    Ok(TransportResult {
        cost: total,
        distance: total.sqrt(),
        plan,
    })
}

/// Sorts both point sets by their projection on the leading principal axis of
/// the pooled points, ties by index.
fn projection_orders(x: &Matrix, y: &Matrix) -> (Vec<usize>, Vec<usize>) {
    let d = x.cols();
    let count = (x.rows() + y.rows()) as f64;
    let mut mean = vec![0.0; d];
    for row in x.iter_rows().chain(y.iter_rows()) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / count);
    }
    let mut cov = Matrix::zeros(d, d);
    for row in x.iter_rows().chain(y.iter_rows()) {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (row[a] - mean[a]) * (row[b] - mean[b]);
            }
        }
    }
    let mut axis = vec![1.0; d];
    for _ in 0..50 {
        let next = cov.mul_vec(&axis);
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            break;
        }
        axis = next.into_iter().map(|v| v / norm).collect();
    }
    let order = |m: &Matrix| {
        let keys: Vec<f64> = m.iter_rows().map(|r| dot(r, &axis)).collect();
        let mut idx: Vec<usize> = (0..m.rows()).collect();
        idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
        idx
    };
    (order(x), order(y))
}

/// Exact 2-Wasserstein distance under the squared Euclidean ground cost.
pub fn wasserstein(p: &WeightedParticles, q: &WeightedParticles) -> Result<TransportResult> {
    transport(p, q, false)
}

/// Like [`wasserstein`], also returning the optimal plan.
pub fn wasserstein_with_plan(p: &WeightedParticles, q: &WeightedParticles) -> Result<TransportResult> {
    transport(p, q, true)
}

/// One scored query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteRow {
    pub tau: f64,
    /// 0-based interval index used for the prediction.
    pub sigma: usize,
    pub lambda: f64,
    pub wasserstein_distance: f64,
    #[serde(skip)]
    pub plan: Option<Matrix>,
}

/// Time tolerance when pairing a query with a measured snapshot.
fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Predicts at each query time and scores the prediction against the
/// measured snapshot taken at that time. Measured snapshots are in raw units.
pub fn evaluate_prediction_suite(
    sol: &BridgeSolution,
    held_out: &[Snapshot],
    query_times: &[f64],
    emit_plan: bool,
) -> Result<Vec<SuiteRow>> {
    let mut matched = Vec::with_capacity(query_times.len());
    let mut gaps = Vec::new();
    for &tau in query_times {
        match held_out.iter().find(|s| same_time(s.time, tau)) {
            Some(s) => matched.push(s),
            None => gaps.push(CoverageGap {
                profile_id: "held-out".into(),
                tau,
                distance: held_out
                    .iter()
                    .map(|s| (s.time - tau).abs())
                    .fold(f64::INFINITY, f64::min),
            }),
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Coverage { window: 0.0, gaps });
    }
    if let Some(s) = matched.first() {
        if s.support.cols() != sol.marginals.dim() {
            return Err(Error::Argument(format!(
                "measured snapshots have dimension {} but the bridge has {}",
                s.support.cols(),
                sol.marginals.dim()
            )));
        }
    }
    query_times
        .par_iter()
        .zip(matched.par_iter())
        .map(|(&tau, measured)| {
            let pred = predict_distribution(sol, &Query::at(tau))?;
            let target = WeightedParticles::new(measured.support.clone(), measured.weights.clone())?;
            let res = transport(&pred.particles, &target, emit_plan)?;
            Ok(SuiteRow {
                tau,
                sigma: pred.sigma,
                lambda: pred.lambda,
                wasserstein_distance: res.distance,
                plan: res.plan,
            })
        })
        .collect()
}

/// Renders rows of per-query distances as a fixed-width table with one row per
/// snapshot density and columns `W_1..W_k`; missing cells print as `-`.
/// Entries are multiplied by `scale` before printing with four decimals.
pub fn format_table(rows: &[(usize, Vec<f64>)], scale: f64) -> String {
    let columns = rows.iter().map(|(_, w)| w.len()).max().unwrap_or(0);
    let mut out = String::from("s_int");
    for j in 1..=columns {
        out.push_str(&format!(" | {:>8}", format!("W_{j}")));
    }
    out.push('\n');
    for (s_int, values) in rows {
        out.push_str(&format!("{s_int:>5}"));
        for j in 0..columns {
            match values.get(j) {
                Some(w) => out.push_str(&format!(" | {:>8.4}", w * scale)),
                None => out.push_str(&format!(" | {:>8}", "-")),
            }
        }
        out.push('\n');
    }
    out
}
