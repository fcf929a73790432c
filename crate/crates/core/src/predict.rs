//! Distribution-valued predictions at arbitrary times.
//!
//! For a query time inside `[τ_σ, τ_{σ+1}]` the prediction places an atom at
//! `(1-λ) ξ_i(τ_σ) + λ ξ_j(τ_{σ+1})` for every pair `(i, j)`, weighted by the
//! bimarginal plan `M^{σ→σ+1}_{ij}` of the solved bridge.

use serde::{Deserialize, Serialize};

use crate::bridge::{project_pair, BridgeSolution};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A discrete distribution: support points with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParticles {
    points: Matrix,
    weights: Vec<f64>,
}

impl WeightedParticles {
    pub fn new(points: Matrix, weights: Vec<f64>) -> Result<Self> {
        if points.rows() != weights.len() || weights.is_empty() {
            return Err(Error::Schema(format!(
                "{} points but {} weights",
                points.rows(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Validation("particle weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("particle weights sum to {total}, not 1")));
        }
        if points.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("particle points must be finite".into()));
        }
        Ok(Self { points, weights })
    }

    /// Uniform weights over the given points.
    pub fn uniform(points: Matrix) -> Result<Self> {
        let n = points.rows();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// Merges bitwise-identical points, summing their weights, and drops
    /// zero-weight atoms. The represented measure is unchanged.
    pub fn compact(&self) -> WeightedParticles {
        let mut order: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect();
        order.sort_by(|&a, &b| {
            self.points
                .row(a)
                .iter()
                .zip(self.points.row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for i in order {
            let row = self.points.row(i);
            match rows.last() {
                Some(last) if last.as_slice() == row => *weights.last_mut().unwrap() += self.weights[i],
                _ => {
                    rows.push(row.to_vec());
                    weights.push(self.weights[i]);
                }
            }
        }
        let points = Matrix::from_rows(&rows).expect("rows share the particle dimension");
        WeightedParticles { points, weights }
    }
}

/// One prediction request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub tau: f64,
    /// Id of the context the bridge was resolved from, if any.
    #[serde(default)]
    pub context: Option<String>,
    /// Atoms lighter than this are dropped and the rest renormalized.
    #[serde(default)]
    pub prune_threshold: f64,
}

impl Query {
    pub fn at(tau: f64) -> Self {
        Self {
            tau,
            context: None,
            prune_threshold: 0.0,
        }
    }
}

/// Interval `[τ_σ, τ_{σ+1})` containing `tau` (0-based `σ`; the last interval
/// is closed) and the interpolation fraction `λ`.
pub fn locate_interval(times: &[f64], tau: f64) -> Result<(usize, f64)> {
    if times.len() < 2 {
        return Err(Error::Argument("need at least two snapshot times".into()));
    }
    let (start, end) = (times[0], times[times.len() - 1]);
    if !(tau >= start && tau <= end) {
        return Err(Error::OutOfRange { tau, start, end });
    }
    let sigma = (times.partition_point(|&t| t <= tau) - 1).min(times.len() - 2);
    let lambda = ((tau - times[sigma]) / (times[sigma + 1] - times[sigma])).clamp(0.0, 1.0);
    Ok((sigma, lambda))
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub tau: f64,
    /// 0-based index of the interval's left snapshot.
    pub sigma: usize,
    pub lambda: f64,
    /// Atoms in raw units.
    pub particles: WeightedParticles,
    /// Left-snapshot support index of every atom.
    pub source_index: Vec<usize>,
    /// Right-snapshot support index of every atom.
    pub dest_index: Vec<usize>,
}

impl Prediction {
    /// Weights summed per left-snapshot support point.
    pub fn source_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &w) in self.source_index.iter().zip(self.particles.weights()) {
            out[i] += w;
        }
        out
    }

    pub fn dest_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&j, &w) in self.dest_index.iter().zip(self.particles.weights()) {
            out[j] += w;
        }
        out
    }
}

/// The most likely distribution at `q.tau` under a solved bridge.
pub fn predict_distribution(sol: &BridgeSolution, q: &Query) -> Result<Prediction> {
    let err = sol.max_marginal_error();
    if !(err <= sol.config.tolerance * 1.001) {
        return Err(Error::State(format!(
            "bridge is not solved: marginal error {err:e} exceeds tolerance {:e}",
            sol.config.tolerance
        )));
    }
    if !(0.0..1.0).contains(&q.prune_threshold) {
        return Err(Error::Argument(format!(
            "prune threshold must lie in [0, 1), got {}",
            q.prune_threshold
        )));
    }
    let times = sol.marginals.times();
    let (sigma, lambda) = locate_interval(&times, q.tau)?;
    let plan = project_pair(sol, sigma, sigma + 1)?;
    let total = plan.sum();

    let transform = sol.marginals.transform();
    let snaps = sol.marginals.snapshots();
    let src = transform.matrix_to_raw(&snaps[sigma].support);
    let dst = transform.matrix_to_raw(&snaps[sigma + 1].support);
    let n = src.rows();
    let d = src.cols();

    let keep = |w: f64| q.prune_threshold == 0.0 || w >= q.prune_threshold;
    let mut data = Vec::with_capacity(n * n * d);
    let mut weights = Vec::with_capacity(n * n);
    let mut source_index = Vec::with_capacity(n * n);
    let mut dest_index = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let w = plan[(i, j)] / total;
            if !keep(w) {
                continue;
            }
            for (a, b) in src.row(i).iter().zip(dst.row(j)) {
                data.push((1.0 - lambda) * a + lambda * b);
            }
            weights.push(w);
            source_index.push(i);
            dest_index.push(j);
        }
    }
    if weights.is_empty() {
        return Err(Error::Argument(format!(
            "prune threshold {} removes every atom",
            q.prune_threshold
        )));
    }
    let kept: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= kept);
    let m = weights.len();
    Ok(Prediction {
        tau: q.tau,
        sigma,
        lambda,
        particles: WeightedParticles::new(Matrix::from_row_major(m, d, data), weights)?,
        source_index,
        dest_index,
    })
}

/// Weighted mean and covariance (population normalization).
pub fn summarize(p: &WeightedParticles) -> (Vec<f64>, Matrix) {
    let d = p.dim();
    let mut mean = vec![0.0; d];
    for (row, &w) in p.points().iter_rows().zip(p.weights()) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += w * x;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for (row, &w) in p.points().iter_rows().zip(p.weights()) {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += w * da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    (mean, cov)
}
