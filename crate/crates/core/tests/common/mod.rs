#![allow(dead_code)]

use mmsb::linalg::Matrix;
use mmsb::marginals::{Snapshot, SnapshotSequence};
use mmsb::synth::{RegimeShift, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `s` snapshots of `n` Gaussian points in `d` dimensions with random
/// positive weights, drifting with the snapshot index.
pub fn random_sequence(seed: u64, n: usize, s: usize, d: usize) -> SnapshotSequence {
    let mut r = rng(seed);
    let snaps = (0..s)
        .map(|t| {
            let support = Matrix::from_fn(n, d, |_, _| r.random::<f64>() * 2.0 - 1.0 + 0.3 * t as f64);
            let mut w: Vec<f64> = (0..n).map(|_| 0.2 + r.random::<f64>()).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            let fix = 1.0 - w.iter().sum::<f64>();
            w[0] += fix;
            Snapshot {
                time: t as f64,
                support,
                weights: w,
            }
        })
        .collect();
    SnapshotSequence::new(snaps).unwrap()
}

/// Uniform-weight variant of [`random_sequence`].
pub fn uniform_sequence(seed: u64, n: usize, s: usize, d: usize) -> SnapshotSequence {
    let mut r = rng(seed);
    let snaps = (0..s)
        .map(|t| Snapshot::uniform(t as f64, Matrix::from_fn(n, d, |_, _| r.random::<f64>() + 0.5 * t as f64)))
        .collect();
    SnapshotSequence::new(snaps).unwrap()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Five cycles of about one second each, with a level change 40% of the way
/// into the third.
pub fn shifted_spec(n: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        n,
        d: 3,
        n_c: 5,
        cycle_mean_durations: vec![1.0; 5],
        cycle_jitter_std: 0.01,
        regime_means: vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![2.0, 2.0, 2.0],
            vec![3.0, 2.0, 1.0],
            vec![1.0, 0.0, 1.0],
        ],
        regime_noise_std: vec![0.2, 0.2, 0.2],
        sample_period: 0.005,
        seed,
        shifts: vec![RegimeShift {
            cycle: 3,
            at_fraction: 0.4,
            offset: vec![3.0, 0.0, 0.0],
        }],
    }
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut x = x;
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Flows of the basic solution on a spanning tree of the bipartite graph, by
/// peeling leaves. `None` unless the cells form a spanning tree.
fn basic_solution(cells: &[(usize, usize)], a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let (m1, m2) = (a.len(), b.len());
    let mut parent: Vec<usize> = (0..m1 + m2).collect();
    for &(i, j) in cells {
        let (x, y) = (find(&mut parent, i), find(&mut parent, m1 + j));
        if x == y {
            return None;
        }
        parent[x] = y;
    }
    let mut left: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut flow = vec![f64::NAN; cells.len()];
    let mut open: Vec<usize> = (0..cells.len()).collect();
    while !open.is_empty() {
        let degree = |node: usize, open: &[usize]| {
            open.iter()
                .filter(|&&k| cells[k].0 == node || m1 + cells[k].1 == node)
                .count()
        };
        let (pos, leaf) = open
            .iter()
            .enumerate()
            .find_map(|(pos, &k)| {
                let (i, j) = (cells[k].0, m1 + cells[k].1);
                if degree(i, &open) == 1 {
                    Some((pos, i))
                } else if degree(j, &open) == 1 {
                    Some((pos, j))
                } else {
                    None
                }
            })
            .expect("a forest always has a leaf");
        let k = open.swap_remove(pos);
        let other = if cells[k].0 == leaf { m1 + cells[k].1 } else { cells[k].0 };
        flow[k] = left[leaf];
        left[other] -= left[leaf];
        left[leaf] = 0.0;
    }
    Some(flow)
}

/// Minimum over all basic feasible solutions of the transportation polytope.
pub fn enumeration_optimum(a: &[f64], b: &[f64], c: &Matrix) -> f64 {
    let (m1, m2) = (a.len(), b.len());
    let all: Vec<(usize, usize)> = (0..m1).flat_map(|i| (0..m2).map(move |j| (i, j))).collect();
    let size = m1 + m2 - 1;
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..size).collect();
    loop {
        let cells: Vec<(usize, usize)> = pick.iter().map(|&k| all[k]).collect();
        if let Some(flow) = basic_solution(&cells, a, b) {
            if flow.iter().all(|&f| f >= -1e-14) {
                let cost: f64 = cells.iter().zip(&flow).map(|(&(i, j), f)| c[(i, j)] * f.max(0.0)).sum();
                best = best.min(cost);
            }
        }
        // Next combination in lexicographic order.
        let mut k = size;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if pick[k] != k + all.len() - size {
                break;
            }
        }
        pick[k] += 1;
        for t in k + 1..size {
            pick[t] = pick[t - 1] + 1;
        }
    }
}

fn dist(p: (f64, f64), q: (f64, f64)) -> f64 {
    (p.0 - q.0).hypot(p.1 - q.1)
}

/// Minimum over every monotone coupling of the largest paired distance,
/// found by walking all lattice paths.
pub fn frechet_brute_force(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    fn walk(a: &[(f64, f64)], b: &[(f64, f64)], i: usize, j: usize, worst: f64, best: &mut f64) {
        let worst = worst.max(dist(a[i], b[j]));
        if worst >= *best {
            return;
        }
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = worst;
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, worst, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, worst, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, worst, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}
