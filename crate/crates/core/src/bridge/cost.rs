use serde::{Deserialize, Serialize};

use super::{CostScale, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::marginals::SnapshotSequence;

/// Row or column maxima below this count as underflowed.
const UNDERFLOW_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMetric {
    #[default]
    SquaredEuclidean,
}

/// Consecutive-snapshot transport costs: matrix `σ` maps the support of
/// snapshot `σ` (rows) to that of snapshot `σ + 1` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CostChain {
    pub matrices: Vec<Matrix>,
    pub metric: CostMetric,
}

impl CostChain {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Mean entry pooled over every matrix.
    pub fn pooled_mean(&self) -> f64 {
        let (sum, count) = self
            .matrices
            .iter()
            .fold((0.0, 0usize), |(s, c), m| (s + m.sum(), c + m.as_slice().len()));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    pub fn max_entry(&self) -> f64 {
        self.matrices
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .fold(0.0, f64::max)
    }

    /// Divisor applied before exponentiation; 1 when scaling is off or the
    /// chosen statistic is zero.
    pub fn scale_factor(&self, scale: CostScale) -> f64 {
        let f = match scale {
            CostScale::None => 1.0,
            CostScale::Mean => self.pooled_mean(),
            CostScale::Max => self.max_entry(),
        };
        if f > 0.0 && f.is_finite() {
            f
        } else {
            1.0
        }
    }
}

/// `C[i][j] = Σ_k (x_ik - y_jk)²`, accumulated one coordinate at a time so the
/// inner loop runs over a contiguous row. Summation order matches
/// [`crate::linalg::squared_distance`].
fn pairwise_squared_distances(x: &Matrix, y: &Matrix) -> Matrix {
    let (n1, n2) = (x.rows(), y.rows());
    let columns: Vec<Vec<f64>> = (0..y.cols()).map(|k| (0..n2).map(|j| y[(j, k)]).collect()).collect();
    let mut data = Vec::with_capacity(n1 * n2);
    // One output row at a time, so the accumulation stays in L1.
    for i in 0..n1 {
        let xi = x.row(i);
        data.extend(columns[0].iter().map(|yj| (xi[0] - yj) * (xi[0] - yj)));
        let row = &mut data[i * n2..];
        for (k, col) in columns.iter().enumerate().skip(1) {
            for (cij, yj) in row.iter_mut().zip(col) {
                let t = xi[k] - yj;
                *cij += t * t;
            }
        }
    }
    Matrix::from_row_major(n1, n2, data)
}

pub fn build_cost_chain(seq: &SnapshotSequence) -> Result<CostChain> {
    if seq.len() < 2 {
        return Err(Error::Validation("cost chain needs at least 2 snapshots".into()));
    }
    let matrices = seq
        .snapshots()
        .windows(2)
        .map(|pair| pairwise_squared_distances(&pair[0].support, &pair[1].support))
        .collect();
    Ok(CostChain {
        matrices,
        metric: CostMetric::SquaredEuclidean,
    })
}

/// Gibbs kernels `exp(-C / (scale · ε))` of a cost chain.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelChain {
    pub matrices: Vec<Matrix>,
    pub epsilon: f64,
    /// The divisor applied to the costs before exponentiation.
    pub cost_scale_factor: f64,
}

impl KernelChain {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Number of snapshots the chain spans.
    pub fn num_snapshots(&self) -> usize {
        self.matrices.len() + 1
    }
}

pub fn build_kernel_chain(costs: &CostChain, cfg: &SolverConfig) -> Result<KernelChain> {
    cfg.validate()?;
    let factor = costs.scale_factor(cfg.cost_scale);
    let denom = factor * cfg.epsilon;
    let mut matrices = Vec::with_capacity(costs.len());
    for (t, c) in costs.matrices.iter().enumerate() {
        let k = c.map(|x| (-x / denom).exp());
        let mut col_max = vec![0.0f64; k.cols()];
        let mut row_ok = true;
        for row in k.iter_rows() {
            let mut row_max = 0.0f64;
            for (m, &x) in col_max.iter_mut().zip(row) {
                *m = m.max(x);
                row_max = row_max.max(x);
            }
            row_ok &= row_max >= UNDERFLOW_FLOOR;
        }
        if !row_ok || col_max.iter().any(|&m| m < UNDERFLOW_FLOOR) {
            return Err(Error::KernelUnderflow { transition: t + 1 });
        }
        matrices.push(k);
    }
    Ok(KernelChain {
        matrices,
        epsilon: cfg.epsilon,
        cost_scale_factor: factor,
    })
}
