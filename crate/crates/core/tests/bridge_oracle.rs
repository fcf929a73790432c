mod common;

use common::{max_abs, random_sequence, rng, uniform_sequence};
use mmsb::bridge::{
    build_cost_chain, build_kernel_chain, dense_oracle_solve, marginal_of, objective_value, pair_marginal_of,
    project_marginal, project_pair, sinkhorn_solve, CostScale, DenseTensor, ScalingVectors, SolverConfig,
    SweepStrategy,
};
use mmsb::linalg::Matrix;
use mmsb::Error;
use proptest::prelude::*;
use rand::Rng;

fn cfg(eps: f64) -> SolverConfig {
    SolverConfig {
        epsilon: eps,
        tolerance: 1e-11,
        max_iterations: 20_000,
        ..SolverConfig::default()
    }
}

fn random_scalings(seed: u64, s: usize, n: usize) -> ScalingVectors {
    let mut r = rng(seed);
    ScalingVectors::new((0..s).map(|_| (0..n).map(|_| 0.1 + r.random::<f64>() * 3.0).collect()).collect()).unwrap()
}

fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    max_abs(a, b) <= tol * scale
}

#[test]
fn chain_projections_match_materialized_tensor() {
    for (k, &(n, s, d)) in [(2, 2, 1), (3, 4, 2), (4, 3, 3), (3, 5, 1), (5, 3, 2)].iter().enumerate() {
        let seq = random_sequence(100 + k as u64, n, s, d);
        let costs = build_cost_chain(&seq).unwrap();
        let kernel = build_kernel_chain(&costs, &cfg(0.5)).unwrap();
        let u = random_scalings(200 + k as u64, s, n);
        let dense = DenseTensor::from_chain(&kernel, &u).unwrap();
        for sigma in 0..s {
            let fast = marginal_of(&kernel, &u, sigma).unwrap();
            assert!(rel_close(&fast, &dense.marginal(sigma), 1e-10), "n={n} s={s} sigma={sigma}");
        }
        for a in 0..s {
            for b in a + 1..s {
                let fast = pair_marginal_of(&kernel, &u, a, b).unwrap();
                let slow = dense.pair_marginal(a, b);
                assert!(rel_close(fast.as_slice(), slow.as_slice(), 1e-10), "pair ({a},{b})");
            }
        }
    }
}

#[test]
fn solver_matches_dense_oracle() {
    for (k, &(n, s, d, eps)) in [(2, 3, 1, 0.3), (3, 3, 2, 1.0), (4, 2, 3, 0.3), (3, 4, 1, 0.3)].iter().enumerate() {
        let seq = random_sequence(10 + k as u64, n, s, d);
        for strategy in [SweepStrategy::Cached, SweepStrategy::Recompute] {
            let config = SolverConfig { strategy, ..cfg(eps) };
            let sol = sinkhorn_solve(&seq, &config).unwrap();
            let dense = dense_oracle_solve(&seq, &config).unwrap();
            for a in 0..s {
                for b in a + 1..s {
                    let fast = project_pair(&sol, a, b).unwrap();
                    let slow = dense.plan.pair_marginal(a, b);
                    assert!(fast.max_abs_diff(&slow) < 1e-9, "pair ({a},{b}) of instance {k}");
                }
            }
            let obj = objective_value(&sol).unwrap();
            assert!((obj.value - dense.objective()).abs() < 1e-8, "{} vs {}", obj.value, dense.objective());
        }
    }
}

#[test]
fn pair_plans_agree_with_marginals() {
    let seq = random_sequence(7, 5, 4, 2);
    let sol = sinkhorn_solve(&seq, &cfg(0.3)).unwrap();
    for a in 0..3 {
        let plan = project_pair(&sol, a, a + 1).unwrap();
        assert!(max_abs(&plan.row_sums(), &project_marginal(&sol, a).unwrap()) < 1e-12);
        assert!(max_abs(&plan.col_sums(), &project_marginal(&sol, a + 1).unwrap()) < 1e-12);
        assert!(max_abs(&plan.row_sums(), &seq.snapshots()[a].weights) < 1e-10);
    }
}

#[test]
fn plan_is_invariant_under_scaling_gauge() {
    let seq = random_sequence(3, 4, 3, 2);
    let sol = sinkhorn_solve(&seq, &cfg(0.3)).unwrap();
    let mut u: Vec<Vec<f64>> = sol.scalings.as_slice().to_vec();
    u[0].iter_mut().for_each(|x| *x *= 7.5);
    u[2].iter_mut().for_each(|x| *x /= 7.5);
    let shifted = ScalingVectors::new(u).unwrap();
    for a in 0..2 {
        let p = pair_marginal_of(&sol.kernel, &sol.scalings, a, a + 1).unwrap();
        let q = pair_marginal_of(&sol.kernel, &shifted, a, a + 1).unwrap();
        assert!(p.max_abs_diff(&q) < 1e-14);
    }
}

#[test]
fn oracle_refuses_large_tensors() {
    let seq = uniform_sequence(1, 5, 10, 1);
    assert!(matches!(
        dense_oracle_solve(&seq, &cfg(1.0)),
        Err(Error::OracleTooLarge { .. })
    ));
}

/// Plain two-marginal Sinkhorn on the same scaled kernel.
fn bimarginal_plan(c: &Matrix, a: &[f64], b: &[f64], eps: f64) -> Matrix {
    let k = c.map(|x| (-x / eps).exp());
    let mut u = vec![1.0; a.len()];
    let mut v = vec![1.0; b.len()];
    for _ in 0..20_000 {
        let kv = k.mul_vec(&v);
        u = a.iter().zip(&kv).map(|(x, y)| x / y).collect();
        let ku = k.tr_mul_vec(&u);
        v = b.iter().zip(&ku).map(|(x, y)| x / y).collect();
    }
    Matrix::from_fn(a.len(), b.len(), |i, j| u[i] * k[(i, j)] * v[j])
}

#[test]
fn two_snapshots_reduce_to_classic_sinkhorn() {
    let seq = random_sequence(21, 6, 2, 2);
    let config = cfg(0.4);
    let sol = sinkhorn_solve(&seq, &config).unwrap();
    let costs = build_cost_chain(&seq).unwrap();
    let scaled = costs.matrices[0].map(|x| x / costs.scale_factor(CostScale::Mean));
    let expect = bimarginal_plan(&scaled, &seq.snapshots()[0].weights, &seq.snapshots()[1].weights, 0.4);
    assert!(project_pair(&sol, 0, 1).unwrap().max_abs_diff(&expect) < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solved_marginals_hit_targets(seed in 0u64..1000, n in 2usize..6, s in 2usize..6, d in 1usize..4) {
        let seq = random_sequence(seed, n, s, d);
        let config = SolverConfig { tolerance: 1e-9, ..cfg(0.5) };
        let sol = sinkhorn_solve(&seq, &config).unwrap();
        prop_assert!(sol.max_marginal_error() <= 1e-9);
        for sigma in 0..s {
            let m = project_marginal(&sol, sigma).unwrap();
            prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(m.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn cached_and_recomputed_sweeps_agree(seed in 0u64..1000, n in 2usize..5, s in 2usize..5) {
        let seq = random_sequence(seed, n, s, 2);
        let a = sinkhorn_solve(&seq, &SolverConfig { strategy: SweepStrategy::Cached, ..cfg(0.5) }).unwrap();
        let b = sinkhorn_solve(&seq, &SolverConfig { strategy: SweepStrategy::Recompute, ..cfg(0.5) }).unwrap();
        for sigma in 0..s - 1 {
            let p = project_pair(&a, sigma, sigma + 1).unwrap();
            let q = project_pair(&b, sigma, sigma + 1).unwrap();
            prop_assert!(p.max_abs_diff(&q) < 1e-9);
        }
    }
}
