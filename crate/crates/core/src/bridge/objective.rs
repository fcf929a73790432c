use serde::{Deserialize, Serialize};

use super::projection::all_marginals;
use super::{project_pair, BridgeSolution};
use crate::error::Result;
use crate::linalg::dot;

/// The entropic objective `⟨C + ε log M, M⟩` split into its parts.
///
/// Costs are the scaled costs the kernel was built from (`C / cost_scale_factor`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    /// `⟨C, M⟩ = Σ_σ ⟨C_σ, M^{σ→σ+1}⟩`.
    pub transport: f64,
    /// `⟨log M, M⟩`.
    pub neg_entropy: f64,
    pub epsilon: f64,
    pub value: f64,
}

impl Objective {
    /// The objective of the same plan under another regularization weight.
    pub fn at_epsilon(&self, epsilon: f64) -> f64 {
        self.transport + epsilon * self.neg_entropy
    }
}

/// Evaluates the objective from pairwise plans and the factorization
/// `log M = -C/ε + Σ_σ log u_σ`, without forming the tensor.
pub fn objective_value(sol: &BridgeSolution) -> Result<Objective> {
    let factor = sol.kernel.cost_scale_factor;
    let eps = sol.kernel.epsilon;
    let mut transport = 0.0;
    for (sigma, c) in sol.costs.matrices.iter().enumerate() {
        let plan = project_pair(sol, sigma, sigma + 1)?;
        transport += dot(c.as_slice(), plan.as_slice()) / factor;
    }
    let marginals = all_marginals(&sol.kernel, &sol.scalings);
    let log_u_term: f64 = marginals
        .iter()
        .zip(sol.scalings.as_slice())
        .map(|(p, u)| p.iter().zip(u).map(|(m, x)| m * x.ln()).sum::<f64>())
        .sum();
    let neg_entropy = log_u_term - transport / eps;
    Ok(Objective {
        transport,
        neg_entropy,
        epsilon: eps,
        value: transport + eps * neg_entropy,
    })
}
