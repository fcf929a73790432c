//! Marginals of the implicit tensor `K ⊙ U` via chained kernel products.
//!
//! Snapshot indices are 0-based here. With `Φ_0 = 1`,
//! `Φ_σ = K_{σ-1}ᵀ (u_{σ-1} ⊙ Φ_{σ-1})` and, with `Ψ_{s-1} = 1`,
//! `Ψ_σ = K_σ (u_{σ+1} ⊙ Ψ_{σ+1})`, the single marginal is
//! `Φ_σ ⊙ u_σ ⊙ Ψ_σ` and the pair marginal is
//! `diag(Φ_a ⊙ u_a) K_a diag(u_{a+1}) ... K_{b-1} diag(u_b ⊙ Ψ_b)`.

use super::{BridgeSolution, KernelChain, ScalingVectors};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `Φ_σ` for every snapshot.
pub(crate) fn left_messages(kernel: &KernelChain, u: &ScalingVectors) -> Vec<Vec<f64>> {
    let s = u.len();
    let n = u.get(0).len();
    let mut out = Vec::with_capacity(s);
    out.push(vec![1.0; n]);
    for sigma in 1..s {
        let weighted = hadamard(u.get(sigma - 1), &out[sigma - 1]);
        out.push(kernel.matrices[sigma - 1].tr_mul_vec(&weighted));
    }
    out
}

/// `Ψ_σ` for every snapshot.
pub(crate) fn right_messages(kernel: &KernelChain, u: &ScalingVectors) -> Vec<Vec<f64>> {
    let s = u.len();
    let n = u.get(0).len();
    let mut out = vec![Vec::new(); s];
    out[s - 1] = vec![1.0; n];
    for sigma in (0..s - 1).rev() {
        let weighted = hadamard(u.get(sigma + 1), &out[sigma + 1]);
        out[sigma] = kernel.matrices[sigma].mul_vec(&weighted);
    }
    out
}

pub(crate) fn all_marginals(kernel: &KernelChain, u: &ScalingVectors) -> Vec<Vec<f64>> {
    let left = left_messages(kernel, u);
    let right = right_messages(kernel, u);
    (0..u.len())
        .map(|sigma| {
            left[sigma]
                .iter()
                .zip(u.get(sigma))
                .zip(&right[sigma])
                .map(|((l, x), r)| l * x * r)
                .collect()
        })
        .collect()
}

fn check_shapes(kernel: &KernelChain, u: &ScalingVectors) -> Result<()> {
    if u.len() != kernel.num_snapshots() {
        return Err(Error::Schema(format!(
            "{} scaling vectors for a chain over {} snapshots",
            u.len(),
            kernel.num_snapshots()
        )));
    }
    Ok(())
}

/// `proj_σ(K ⊙ U)` for a 0-based snapshot index.
pub fn marginal_of(kernel: &KernelChain, u: &ScalingVectors, sigma: usize) -> Result<Vec<f64>> {
    check_shapes(kernel, u)?;
    let s = u.len();
    if sigma >= s {
        return Err(Error::Argument(format!("snapshot index {sigma} out of range 0..{s}")));
    }
    let n = u.get(0).len();
    let mut left = vec![1.0; n];
    for t in 0..sigma {
        left = kernel.matrices[t].tr_mul_vec(&hadamard(u.get(t), &left));
    }
    let mut right = vec![1.0; n];
    for t in (sigma..s - 1).rev() {
        right = kernel.matrices[t].mul_vec(&hadamard(u.get(t + 1), &right));
    }
    Ok(left
        .iter()
        .zip(u.get(sigma))
        .zip(&right)
        .map(|((l, x), r)| l * x * r)
        .collect())
}

/// `proj_{a,b}(K ⊙ U)` for 0-based snapshot indices `a < b`.
pub fn pair_marginal_of(kernel: &KernelChain, u: &ScalingVectors, a: usize, b: usize) -> Result<Matrix> {
    check_shapes(kernel, u)?;
    let s = u.len();
    if a >= b || b >= s {
        return Err(Error::Argument(format!(
            "pair projection needs 0 <= a < b < {s}, got ({a}, {b})"
        )));
    }
    let n = u.get(0).len();
    let mut left = vec![1.0; n];
    for t in 0..a {
        left = kernel.matrices[t].tr_mul_vec(&hadamard(u.get(t), &left));
    }
    let mut right = vec![1.0; n];
    for t in (b..s - 1).rev() {
        right = kernel.matrices[t].mul_vec(&hadamard(u.get(t + 1), &right));
    }
    let row_scale = hadamard(&left, u.get(a));

    // A = diag(Φ_a ⊙ u_a) K_a, then A ← A diag(u_t) K_t for the middle steps.
    let mut acc = kernel.matrices[a].clone();
    for (i, &r) in row_scale.iter().enumerate() {
        acc.row_mut(i).iter_mut().for_each(|x| *x *= r);
    }
    for t in a + 1..b {
        acc = scaled_product(&acc, u.get(t), &kernel.matrices[t]);
    }
    let col_scale = hadamard(u.get(b), &right);
    for i in 0..acc.rows() {
        acc.row_mut(i).iter_mut().zip(&col_scale).for_each(|(x, c)| *x *= c);
    }
    Ok(acc)
}

/// `A diag(d) B`
fn scaled_product(a: &Matrix, d: &[f64], b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        let out_row = out.row_mut(i);
        for (k, &aik) in a.row(i).iter().enumerate() {
            let w = aik * d[k];
            if w == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += w * bkj;
            }
        }
    }
    out
}

/// Marginal of the solved tensor at snapshot `sigma` (0-based).
pub fn project_marginal(sol: &BridgeSolution, sigma: usize) -> Result<Vec<f64>> {
    marginal_of(&sol.kernel, &sol.scalings, sigma)
}

/// Bimarginal transport plan between snapshots `sigma1 < sigma2` (0-based).
pub fn project_pair(sol: &BridgeSolution, sigma1: usize, sigma2: usize) -> Result<Matrix> {
    pair_marginal_of(&sol.kernel, &sol.scalings, sigma1, sigma2)
}
