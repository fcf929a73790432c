//! Path-structured multimarginal Schrödinger bridge.
//!
//! The optimal mass tensor over `s` snapshots of `n` points each factors as
//! `M = K ⊙ (u_1 ⊗ ... ⊗ u_s)`, where `K` is the Gibbs kernel of a cost that
//! decomposes into consecutive-pair terms. Because of that chain structure,
//! every marginal of `M` is a product of `s - 1` kernel matrix-vector
//! products, so a full Sinkhorn sweep costs `O((s-1) n²)` and the `n^s`
//! tensor is never formed.
//!
//! [`sinkhorn_solve`] computes the scalings, [`project_marginal`] and
//! [`project_pair`] read marginals off the implicit tensor, and
//! [`dense_oracle_solve`] is the brute-force tensor version used to check
//! all of the above on small instances.

mod cost;
mod hilbert;
mod objective;
mod oracle;
mod projection;
mod solver;

pub use cost::{build_cost_chain, build_kernel_chain, CostChain, CostMetric, KernelChain};
pub use hilbert::hilbert_distance;
pub use objective::{objective_value, Objective};
pub use oracle::{dense_oracle_solve, DenseSolution, DenseTensor, ORACLE_MAX_ENTRIES};
pub use projection::{marginal_of, pair_marginal_of, project_marginal, project_pair};
pub use solver::{sinkhorn_solve, sinkhorn_solve_with};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::SnapshotSequence;

/// How the cost chain is normalized before exponentiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostScale {
    None,
    /// Divide by the mean entry pooled over all cost matrices.
    #[default]
    Mean,
    /// Divide by the largest entry over all cost matrices.
    Max,
}

impl std::str::FromStr for CostScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CostScale::None),
            "mean" => Ok(CostScale::Mean),
            "max" => Ok(CostScale::Max),
            other => Err(Error::Config(format!("unknown cost_scale {other:?}"))),
        }
    }
}

/// How the prefix/suffix kernel products are formed during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepStrategy {
    /// Reuse the prefix product of the previous update and the suffix
    /// products from the start of the sweep: `2(s-1)` mat-vecs per sweep.
    #[default]
    Cached,
    /// Rebuild both products from scratch for every update.
    Recompute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon: f64,
    /// Bound on the largest per-snapshot L1 marginal error.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub cost_scale: CostScale,
    pub strategy: SweepStrategy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            tolerance: 1e-8,
            max_iterations: 5000,
            cost_scale: CostScale::Mean,
            strategy: SweepStrategy::Cached,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Strictly positive scaling vectors `u_1, ..., u_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingVectors {
    u: Vec<Vec<f64>>,
}

impl ScalingVectors {
    pub fn ones(s: usize, n: usize) -> Self {
        Self {
            u: vec![vec![1.0; n]; s],
        }
    }

    pub fn new(u: Vec<Vec<f64>>) -> Result<Self> {
        let n = u.first().map_or(0, Vec::len);
        if u.iter().any(|v| v.len() != n) {
            return Err(Error::Schema("scaling vectors differ in length".into()));
        }
        if u.iter().flatten().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Domain("scaling vectors must be finite and strictly positive".into()));
        }
        Ok(Self { u })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn get(&self, sigma: usize) -> &[f64] {
        &self.u[sigma]
    }

    pub fn as_slice(&self) -> &[Vec<f64>] {
        &self.u
    }

    pub(crate) fn get_mut(&mut self, sigma: usize) -> &mut Vec<f64> {
        &mut self.u[sigma]
    }
}

/// What happened in one full sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// `d_H(u_σ^(k), u_σ^(k-1))` for every snapshot.
    pub hilbert_distances: Vec<f64>,
    /// `‖proj_σ(M) - μ_σ‖₁` after the sweep, for every snapshot.
    pub marginal_l1_errors: Vec<f64>,
    /// Seconds since the solve started, at the end of the sweep.
    pub wall_time: f64,
}

impl SweepRecord {
    pub fn max_hilbert(&self) -> f64 {
        self.hilbert_distances.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_l1(&self) -> f64 {
        self.marginal_l1_errors.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sweeps: Vec<SweepRecord>,
}

impl Diagnostics {
    pub fn iterations(&self) -> usize {
        self.sweeps.len()
    }

    pub fn final_error(&self) -> f64 {
        self.sweeps.last().map_or(f64::INFINITY, SweepRecord::max_l1)
    }

    /// Mean wall time of one sweep.
    pub fn seconds_per_sweep(&self) -> f64 {
        match self.sweeps.last() {
            Some(last) => last.wall_time / self.sweeps.len() as f64,
            None => 0.0,
        }
    }
}

/// A solved bridge: the kernel chain and scalings that represent
/// `M = K ⊙ U` implicitly, plus the data it was solved against.
#[derive(Debug, Clone)]
pub struct BridgeSolution {
    pub costs: CostChain,
    pub kernel: KernelChain,
    pub scalings: ScalingVectors,
    pub marginals: SnapshotSequence,
    pub config: SolverConfig,
    pub diagnostics: Diagnostics,
}

impl BridgeSolution {
    /// Wraps externally supplied scalings (e.g. loaded from disk) around the
    /// kernel rebuilt from `marginals`.
    pub fn from_scalings(
        marginals: SnapshotSequence,
        config: SolverConfig,
        scalings: ScalingVectors,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        config.validate()?;
        let costs = build_cost_chain(&marginals)?;
        let kernel = build_kernel_chain(&costs, &config)?;
        if scalings.len() != marginals.len() || scalings.get(0).len() != marginals.support_size() {
            return Err(Error::Schema(format!(
                "expected {} scaling vectors of length {}",
                marginals.len(),
                marginals.support_size()
            )));
        }
        Ok(Self {
            costs,
            kernel,
            scalings,
            marginals,
            config,
            diagnostics,
        })
    }

    pub fn num_snapshots(&self) -> usize {
        self.scalings.len()
    }

    pub fn support_size(&self) -> usize {
        self.marginals.support_size()
    }

    /// Largest L1 gap between a projected marginal and its target.
    pub fn max_marginal_error(&self) -> f64 {
        let projections = projection::all_marginals(&self.kernel, &self.scalings);
        projections
            .iter()
            .zip(self.marginals.snapshots())
            .map(|(p, s)| crate::linalg::l1_distance(p, &s.weights))
            .fold(0.0, f64::max)
    }
}
