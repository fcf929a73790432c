use std::time::Instant;

use super::projection::right_messages;
use super::{
    build_cost_chain, build_kernel_chain, hilbert_distance, BridgeSolution, Diagnostics, KernelChain,
    ScalingVectors, SolverConfig, SweepRecord, SweepStrategy,
};
use crate::error::{Error, Result};
use crate::linalg::l1_distance;
use crate::marginals::SnapshotSequence;

/// Solves the discrete bridge over `seq` by cyclic multimarginal Sinkhorn
/// sweeps, starting from all-ones scalings.
///
/// Each update sets `u_σ = μ_σ ⊘ (Φ_σ ⊙ Ψ_σ)` with the prefix product `Φ_σ`
/// already reflecting this sweep's updates of `u_1..u_{σ-1}`. Sweeps go in
/// ascending `σ`; the stopping rule is the largest per-snapshot L1 marginal
/// error after a full sweep.
pub fn sinkhorn_solve(seq: &SnapshotSequence, cfg: &SolverConfig) -> Result<BridgeSolution> {
    sinkhorn_solve_with(seq, cfg, |_| {})
}

/// Like [`sinkhorn_solve`], calling `on_sweep` after every sweep.
pub fn sinkhorn_solve_with(
    seq: &SnapshotSequence,
    cfg: &SolverConfig,
    mut on_sweep: impl FnMut(&SweepRecord),
) -> Result<BridgeSolution> {
    cfg.validate()?;
    let costs = build_cost_chain(seq)?;
    let kernel = build_kernel_chain(&costs, cfg)?;
    let targets: Vec<&[f64]> = seq.snapshots().iter().map(|s| s.weights.as_slice()).collect();
    let (scalings, diagnostics, converged) = run_sweeps(&kernel, &targets, cfg, &mut on_sweep)?;
    if !converged {
        return Err(Error::NotConverged {
            iterations: diagnostics.iterations(),
            tolerance: cfg.tolerance,
            error: diagnostics.final_error(),
            diagnostics: Box::new(diagnostics),
        });
    }
    Ok(BridgeSolution {
        costs,
        kernel,
        scalings,
        marginals: seq.clone(),
        config: *cfg,
        diagnostics,
    })
}

fn run_sweeps(
    kernel: &KernelChain,
    targets: &[&[f64]],
    cfg: &SolverConfig,
    on_sweep: &mut impl FnMut(&SweepRecord),
) -> Result<(ScalingVectors, Diagnostics, bool)> {
    let s = targets.len();
    let n = targets[0].len();
    let start = Instant::now();
    let mut u = ScalingVectors::ones(s, n);
    let mut diagnostics = Diagnostics::default();

    let mut left = vec![vec![1.0; n]; s];
    let mut right = right_messages(kernel, &u);
    let mut scratch = vec![0.0; n];

    for sweep in 1..=cfg.max_iterations {
        let previous = u.clone();
        for sigma in 0..s {
            match cfg.strategy {
                SweepStrategy::Cached => {
                    if sigma > 0 {
                        for ((w, x), l) in scratch.iter_mut().zip(u.get(sigma - 1)).zip(&left[sigma - 1]) {
                            *w = x * l;
                        }
                        kernel.matrices[sigma - 1].tr_mul_vec_into(&scratch, &mut left[sigma]);
                    }
                }
                SweepStrategy::Recompute => {
                    // Same operation order as the cached path, just not reused.
                    left[sigma] = left_messages_upto(kernel, &u, sigma);
                    right[sigma] = right_message_from(kernel, &u, sigma);
                }
            }
            let u_sigma = u.get_mut(sigma);
            for (i, x) in u_sigma.iter_mut().enumerate() {
                *x = targets[sigma][i] / (left[sigma][i] * right[sigma][i]);
            }
            if u_sigma.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::NumericalFailure { sweep, sigma: sigma + 1 });
            }
        }

        right = right_messages(kernel, &u);
        let mut marginal_l1_errors = Vec::with_capacity(s);
        let mut hilbert_distances = Vec::with_capacity(s);
        for sigma in 0..s {
            for (i, w) in scratch.iter_mut().enumerate() {
                *w = left[sigma][i] * u.get(sigma)[i] * right[sigma][i];
            }
            let err = l1_distance(&scratch, targets[sigma]);
            if !err.is_finite() {
                return Err(Error::NumericalFailure { sweep, sigma: sigma + 1 });
            }
            marginal_l1_errors.push(err);
            hilbert_distances.push(hilbert_distance(u.get(sigma), previous.get(sigma))?);
        }
        let record = SweepRecord {
            hilbert_distances,
            marginal_l1_errors,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_sweep(&record);
        let done = record.max_l1() <= cfg.tolerance;
        diagnostics.sweeps.push(record);
        if done {
            return Ok((u, diagnostics, true));
        }
    }
    Ok((u, diagnostics, false))
}

fn left_messages_upto(kernel: &KernelChain, u: &ScalingVectors, sigma: usize) -> Vec<f64> {
    let n = u.get(0).len();
    let mut left = vec![1.0; n];
    let mut scratch = vec![0.0; n];
    for t in 0..sigma {
        for ((w, x), l) in scratch.iter_mut().zip(u.get(t)).zip(&left) {
            *w = x * l;
        }
        kernel.matrices[t].tr_mul_vec_into(&scratch, &mut left);
    }
    left
}

fn right_message_from(kernel: &KernelChain, u: &ScalingVectors, sigma: usize) -> Vec<f64> {
    // right_messages builds the full suffix list; only entry `sigma` is needed.
    let s = u.len();
    let n = u.get(0).len();
    let mut right = vec![1.0; n];
    for t in (sigma..s - 1).rev() {
        let weighted: Vec<f64> = u.get(t + 1).iter().zip(&right).map(|(x, r)| x * r).collect();
        right = kernel.matrices[t].mul_vec(&weighted);
    }
    right
}
