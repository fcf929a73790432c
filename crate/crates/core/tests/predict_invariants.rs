mod common;

use common::{max_abs, random_sequence};
use mmsb::bridge::{sinkhorn_solve, BridgeSolution, CostScale, SolverConfig};
use mmsb::linalg::Matrix;
use mmsb::marginals::{standardize, Snapshot, SnapshotSequence};
use mmsb::predict::{predict_distribution, summarize, Query, WeightedParticles};
use mmsb::Error;
use proptest::prelude::*;

fn solved(seed: u64, n: usize, s: usize, d: usize) -> BridgeSolution {
    let cfg = SolverConfig {
        epsilon: 0.3,
        tolerance: 1e-10,
        ..SolverConfig::default()
    };
    sinkhorn_solve(&random_sequence(seed, n, s, d), &cfg).unwrap()
}

fn query(tau: f64, prune: f64) -> Query {
    Query {
        prune_threshold: prune,
        ..Query::at(tau)
    }
}

#[test]
fn snapshot_times_reproduce_their_marginals() {
    let sol = solved(1, 6, 5, 2);
    let n = sol.support_size();
    let snaps = sol.marginals.snapshots();
    for (sigma, snap) in snaps.iter().enumerate() {
        let p = predict_distribution(&sol, &Query::at(snap.time)).unwrap();
        let (marginal, points) = if sigma + 1 == snaps.len() {
            (p.dest_marginal(n), &snap.support)
        } else {
            (p.source_marginal(n), &snap.support)
        };
        assert!(max_abs(&marginal, &snap.weights) <= 1e-10 + 1e-9);
        for (k, row) in p.particles.points().iter_rows().enumerate() {
            let idx = if sigma + 1 == snaps.len() { p.dest_index[k] } else { p.source_index[k] };
            assert!(max_abs(row, points.row(idx)) < 1e-12);
        }
    }
}

#[test]
fn atoms_move_on_straight_lines() {
    let sol = solved(2, 5, 2, 3);
    let at = |lambda: f64| predict_distribution(&sol, &Query::at(lambda)).unwrap();
    let (p0, p1) = (at(0.0), at(1.0));
    for lambda in [0.25, 0.5, 0.75] {
        let p = at(lambda);
        for k in 0..p.particles.len() {
            let a = p0.particles.points().row(k);
            let b = p1.particles.points().row(k);
            for (dim, x) in p.particles.points().row(k).iter().enumerate() {
                let line = a[dim] + lambda * (b[dim] - a[dim]);
                assert!((x - line).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn two_point_toy_bridge() {
    // Crossing costs 10^4 with eps = 1, so the kernel is the identity and the
    // plan is exactly diag(1/2, 1/2).
    let seq = SnapshotSequence::new(vec![
        Snapshot::uniform(0.0, Matrix::from_fn(2, 1, |i, _| 100.0 * i as f64)),
        Snapshot::uniform(1.0, Matrix::from_fn(2, 1, |i, _| 20.0 + 100.0 * i as f64)),
    ])
    .unwrap();
    let cfg = SolverConfig {
        epsilon: 1.0,
        cost_scale: CostScale::None,
        tolerance: 1e-12,
        ..SolverConfig::default()
    };
    let sol = sinkhorn_solve(&seq, &cfg).unwrap();
    let p = predict_distribution(&sol, &Query::at(0.5)).unwrap();
    assert_eq!(p.particles.len(), 4);
    let c = p.particles.compact();
    assert_eq!(c.len(), 2);
    assert_eq!(c.points().as_slice(), &[10.0, 110.0]);
    assert_eq!(c.weights(), &[0.5, 0.5]);
}

#[test]
fn predictions_are_reported_in_raw_units() {
    let raw = random_sequence(4, 5, 3, 2);
    let (std_seq, _) = standardize(&raw).unwrap();
    let cfg = SolverConfig {
        epsilon: 0.3,
        tolerance: 1e-10,
        ..SolverConfig::default()
    };
    let sol = sinkhorn_solve(&std_seq, &cfg).unwrap();
    let p = predict_distribution(&sol, &Query::at(1.0)).unwrap();
    for (k, row) in p.particles.points().iter_rows().enumerate() {
        assert!(max_abs(row, raw.snapshots()[1].support.row(p.source_index[k])) < 1e-12);
    }
}

#[test]
fn outside_the_horizon_is_rejected() {
    let sol = solved(5, 3, 3, 1);
    assert!(matches!(
        predict_distribution(&sol, &Query::at(2.5)),
        Err(Error::OutOfRange { .. })
    ));
    assert!(matches!(
        predict_distribution(&sol, &Query::at(-0.1)),
        Err(Error::OutOfRange { .. })
    ));
}

#[test]
fn unsolved_bridge_is_rejected() {
    let mut sol = solved(6, 4, 3, 1);
    sol.scalings = mmsb::bridge::ScalingVectors::ones(3, 4);
    assert!(matches!(predict_distribution(&sol, &Query::at(0.5)), Err(Error::State(_))));
}

#[test]
fn moments_ignore_particle_order() {
    let sol = solved(7, 4, 3, 2);
    let p = predict_distribution(&sol, &Query::at(1.3)).unwrap().particles;
    let m = p.len();
    let rev = WeightedParticles::new(
        Matrix::from_fn(m, p.dim(), |i, k| p.points()[(m - 1 - i, k)]),
        p.weights().iter().rev().copied().collect(),
    )
    .unwrap();
    let (mean_a, cov_a) = summarize(&p);
    let (mean_b, cov_b) = summarize(&rev);
    assert!(max_abs(&mean_a, &mean_b) < 1e-12);
    assert!(cov_a.max_abs_diff(&cov_b) < 1e-12);
    assert!(cov_a.max_abs_diff(&cov_a.transpose()) < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pruning_conserves_weight_and_is_monotone(seed in 0u64..500, tau in 0.0f64..3.0, a in 0.0f64..0.2, b in 0.0f64..0.2) {
        let sol = solved(seed, 5, 4, 2);
        let full = predict_distribution(&sol, &Query::at(tau)).unwrap();
        prop_assert_eq!(full.particles.len(), 25);
        let max_w = full.particles.weights().iter().cloned().fold(0.0, f64::max);
        let (lo, hi) = (a.min(b).min(0.99 * max_w), a.max(b).min(0.99 * max_w));
        let p_lo = predict_distribution(&sol, &query(tau, lo)).unwrap();
        let p_hi = predict_distribution(&sol, &query(tau, hi)).unwrap();
        prop_assert!(p_hi.particles.len() <= p_lo.particles.len());
        for p in [&p_lo, &p_hi] {
            prop_assert!((p.particles.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}
