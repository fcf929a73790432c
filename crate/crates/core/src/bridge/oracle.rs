//! Brute-force reference: the full `n^s` tensor, marginalized by explicit
//! summation. Only usable on tiny instances; it exists to check the chained
//! products of the path solver.

use super::{build_cost_chain, Diagnostics, KernelChain, ScalingVectors, SolverConfig, SweepRecord};
use crate::error::{Error, Result};
use crate::linalg::{l1_distance, Matrix};
use crate::marginals::SnapshotSequence;

/// Largest tensor the oracle will materialize.
pub const ORACLE_MAX_ENTRIES: f64 = 1e6;

/// A dense order-`s` tensor over `n` points per axis, axis 0 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    n: usize,
    s: usize,
    data: Vec<f64>,
}

fn guard(n: usize, s: usize) -> Result<usize> {
    let entries = (n as f64).powi(s as i32);
    if entries > ORACLE_MAX_ENTRIES {
        return Err(Error::OracleTooLarge {
            entries,
            limit: ORACLE_MAX_ENTRIES,
        });
    }
    Ok(n.pow(s as u32))
}

/// Calls `f(flat_index, multi_index)` for every entry in storage order.
fn for_each_index(n: usize, s: usize, mut f: impl FnMut(usize, &[usize])) {
    let total = n.pow(s as u32);
    let mut idx = vec![0usize; s];
    for flat in 0..total {
        f(flat, &idx);
        for axis in (0..s).rev() {
            idx[axis] += 1;
            if idx[axis] < n {
                break;
            }
            idx[axis] = 0;
        }
    }
}

impl DenseTensor {
    /// `K ⊙ (u_1 ⊗ ... ⊗ u_s)` with `K` the product of chain kernel entries.
    pub fn from_chain(kernel: &KernelChain, u: &ScalingVectors) -> Result<Self> {
        let s = u.len();
        let n = u.get(0).len();
        let total = guard(n, s)?;
        let mut data = vec![0.0; total];
        for_each_index(n, s, |flat, idx| {
            let mut v = u.get(0)[idx[0]];
            for t in 1..s {
                v *= kernel.matrices[t - 1][(idx[t - 1], idx[t])] * u.get(t)[idx[t]];
            }
            data[flat] = v;
        });
        Ok(Self { n, s, data })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn order(&self) -> usize {
        self.s
    }

    pub fn axis_len(&self) -> usize {
        self.n
    }

    pub fn marginal(&self, sigma: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for_each_index(self.n, self.s, |flat, idx| out[idx[sigma]] += self.data[flat]);
        out
    }

    pub fn pair_marginal(&self, a: usize, b: usize) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.n);
        for_each_index(self.n, self.s, |flat, idx| out[(idx[a], idx[b])] += self.data[flat]);
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Result of the brute-force solve.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    /// The optimal mass tensor `K ⊙ U`.
    pub plan: DenseTensor,
    /// Scaled cost tensor `Σ_σ C_σ(i_σ, i_{σ+1}) / factor`.
    pub cost: DenseTensor,
    pub scalings: ScalingVectors,
    pub epsilon: f64,
    pub diagnostics: Diagnostics,
}

impl DenseSolution {
    /// `⟨C + ε log M, M⟩` summed entry by entry.
    pub fn objective(&self) -> f64 {
        self.plan
            .data
            .iter()
            .zip(&self.cost.data)
            .map(|(&m, &c)| if m > 0.0 { (c + self.epsilon * m.ln()) * m } else { 0.0 })
            .sum()
    }
}

/// Multimarginal Sinkhorn on the materialized tensor:
/// `u_σ ← u_σ ⊙ μ_σ ⊘ proj_σ(K ⊙ U)` in ascending `σ` until the largest L1
/// marginal error after a sweep is within tolerance.
pub fn dense_oracle_solve(seq: &SnapshotSequence, cfg: &SolverConfig) -> Result<DenseSolution> {
    cfg.validate()?;
    let s = seq.len();
    let n = seq.support_size();
    guard(n, s)?;
    let costs = build_cost_chain(seq)?;
    let factor = costs.scale_factor(cfg.cost_scale);

    let mut cost = vec![0.0; n.pow(s as u32)];
    for_each_index(n, s, |flat, idx| {
        cost[flat] = (1..s)
            .map(|t| costs.matrices[t - 1][(idx[t - 1], idx[t])])
            .sum::<f64>()
            / factor;
    });
    let mut plan: Vec<f64> = cost.iter().map(|c| (-c / cfg.epsilon).exp()).collect();
    if plan.iter().all(|&k| k < 1e-300) {
        return Err(Error::KernelUnderflow { transition: 0 });
    }
    let targets: Vec<&[f64]> = seq.snapshots().iter().map(|s| s.weights.as_slice()).collect();
    let mut u = vec![vec![1.0; n]; s];
    let mut diagnostics = Diagnostics::default();

    let marginal = |plan: &[f64], sigma: usize| {
        let mut out = vec![0.0; n];
        for_each_index(n, s, |flat, idx| out[idx[sigma]] += plan[flat]);
        out
    };

    for sweep in 1..=cfg.max_iterations {
        for sigma in 0..s {
            let p = marginal(&plan, sigma);
            let ratio: Vec<f64> = targets[sigma].iter().zip(&p).map(|(m, q)| m / q).collect();
            if ratio.iter().any(|r| !r.is_finite() || !(*r > 0.0)) {
                return Err(Error::NumericalFailure { sweep, sigma: sigma + 1 });
            }
            for (x, r) in u[sigma].iter_mut().zip(&ratio) {
                *x *= r;
            }
            for_each_index(n, s, |flat, idx| plan[flat] *= ratio[idx[sigma]]);
        }
        let errors: Vec<f64> = (0..s)
            .map(|sigma| l1_distance(&marginal(&plan, sigma), targets[sigma]))
            .collect();
        let record = SweepRecord {
            hilbert_distances: Vec::new(),
            marginal_l1_errors: errors,
            wall_time: 0.0,
        };
        let done = record.max_l1() <= cfg.tolerance;
        diagnostics.sweeps.push(record);
        if done {
            return Ok(DenseSolution {
                plan: DenseTensor { n, s, data: plan },
                cost: DenseTensor { n, s, data: cost },
                scalings: ScalingVectors::new(u)?,
                epsilon: cfg.epsilon,
                diagnostics,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
        error: diagnostics.final_error(),
        diagnostics: Box::new(diagnostics),
    })
}
