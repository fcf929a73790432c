//! Primal network simplex for the dense transportation problem.
//!
//! Nodes `0..m1` are sources, `m1..m1+m2` sinks and the last node is an
//! artificial root. Arc `i * m2 + j` carries mass from source `i` to sink `j`
//! at unit cost `cost[(i, j)]`. The spanning tree is
//! kept in parent / thread / reverse-thread form, flows are stored on the
//! tree arcs only (non-tree arcs always sit at zero since capacities are
//! unbounded), and entering arcs are chosen by block search. The starting
//! basis comes from the north-west corner rule; the root hangs off one
//! source by a zero-flow artificial arc and, being a leaf, never lies on a
//! pivot cycle.

use crate::linalg::Matrix;

const UP: i8 = 1;
const DOWN: i8 = -1;
const NONE: usize = usize::MAX;

/// Optimal flow of a transportation problem.
#[derive(Debug, Clone)]
pub struct Flow {
    /// `Σ flow · cost` over real arcs.
    pub cost: f64,
    /// Real arcs with positive flow, as `(source, sink, amount)`.
    pub arcs: Vec<(usize, usize, f64)>,
    pub pivots: usize,
}

struct Simplex<'a> {
    cost: &'a Matrix,
    m1: usize,
    m2: usize,
    real_arcs: usize,
    root: usize,

    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    pred_flow: Vec<f64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,

    block_size: usize,
    next_arc: usize,
    tolerance: f64,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl<'a> Simplex<'a> {
    /// Starts from the north-west-corner basis over the given node orders.
    /// The root hangs off the first source by a zero-flow artificial arc.
    fn new(supply: &[f64], demand: &[f64], cost: &'a Matrix, src_order: &[usize], dst_order: &[usize]) -> Self {
        let m1 = supply.len();
        let m2 = demand.len();
        let nodes = m1 + m2;
        let root = nodes;
        let real_arcs = m1 * m2;
        let max_cost = cost.as_slice().iter().fold(0.0f64, |acc, c| acc.max(c.abs()));

        let mut s = Simplex {
            cost,
            m1,
            m2,
            real_arcs,
            root,
            in_tree: vec![false; real_arcs],
            parent: vec![NONE; nodes + 1],
            pred: vec![NONE; nodes + 1],
            pred_dir: vec![UP; nodes + 1],
            pred_flow: vec![0.0; nodes + 1],
            thread: vec![0; nodes + 1],
            rev_thread: vec![0; nodes + 1],
            succ_num: vec![1; nodes + 1],
            last_succ: vec![0; nodes + 1],
            pi: vec![0.0; nodes + 1],
            dirty_revs: Vec::new(),
            block_size: ((real_arcs as f64).sqrt().ceil() as usize).max(10),
            next_arc: 0,
            tolerance: 1e-13 * (max_cost + 1.0),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };

        // North-west corner: m1 + m2 - 1 arcs forming a spanning tree.
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes];
        let (mut a, mut b) = (0, 0);
        let mut left_a = supply[src_order[0]];
        let mut left_b = demand[dst_order[0]];
        loop {
            let (i, j) = (src_order[a], dst_order[b]);
            let f = left_a.min(left_b).max(0.0);
            adjacency[i].push((m1 + j, f));
            adjacency[m1 + j].push((i, f));
            s.in_tree[i * m2 + j] = true;
            if a + 1 == m1 && b + 1 == m2 {
                break;
            }
            if b + 1 == m2 || (a + 1 < m1 && left_a < left_b) {
                left_b -= f;
                a += 1;
                left_a = supply[src_order[a]];
            } else {
                left_a -= f;
                b += 1;
                left_b = demand[dst_order[b]];
            }
        }

        // Depth-first preorder from the root gives the thread.
        let first = src_order[0];
        s.parent[first] = root;
        s.pred[first] = real_arcs + first;
        s.pred_dir[first] = UP;
        let mut order = Vec::with_capacity(nodes + 1);
        order.push(root);
        let mut stack = vec![first];
        while let Some(u) = stack.pop() {
            order.push(u);
            for &(v, f) in adjacency[u].iter().rev() {
                if v == s.parent[u] {
                    continue;
                }
                s.parent[v] = u;
                s.pred_flow[v] = f;
                if u < m1 {
                    s.pred[v] = u * m2 + (v - m1);
                    s.pred_dir[v] = DOWN;
                    s.pi[v] = s.pi[u] + cost.as_slice()[s.pred[v]];
                } else {
                    s.pred[v] = v * m2 + (u - m1);
                    s.pred_dir[v] = UP;
                    s.pi[v] = s.pi[u] - cost.as_slice()[s.pred[v]];
                }
                stack.push(v);
            }
        }
        debug_assert_eq!(order.len(), nodes + 1);
        let mut pos = vec![0; nodes + 1];
        for (k, &u) in order.iter().enumerate() {
            pos[u] = k;
            let next = order[(k + 1) % order.len()];
            s.thread[u] = next;
            s.rev_thread[next] = u;
        }
        for &u in order.iter().rev() {
            if s.parent[u] != NONE {
                let p = s.parent[u];
                s.succ_num[p] += s.succ_num[u];
            }
        }
        for &u in &order {
            s.last_succ[u] = order[pos[u] + s.succ_num[u] - 1];
        }
        s
    }

    fn source(&self, e: usize) -> usize {
        e / self.m2
    }

    fn target(&self, e: usize) -> usize {
        self.m1 + e % self.m2
    }

    fn find_entering_arc(&mut self) -> bool {
        let costs = self.cost.as_slice();
        let (m1, m2) = (self.m1, self.m2);
        let total = self.real_arcs;
        let pi_sink = &self.pi[m1..m1 + m2];
        let mut min = -self.tolerance;
        let mut best = NONE;
        let mut cnt = self.block_size;
        let mut e = self.next_arc;
        let mut scanned = 0;
        // Walk row segments so the inner loop runs over contiguous slices.
        while scanned < total {
            let (i, j0) = (e / m2, e % m2);
            let len = (m2 - j0).min(cnt).min(total - scanned);
            let pi_src = self.pi[i];
            let row = &costs[e..e + len];
            let tree = &self.in_tree[e..e + len];
            for (k, ((c, p), t)) in row.iter().zip(&pi_sink[j0..j0 + len]).zip(tree).enumerate() {
                let r = c + pi_src - p;
                if r < min && !t {
                    min = r;
                    best = e + k;
                }
            }
            e += len;
            if e == total {
                e = 0;
            }
            scanned += len;
            cnt -= len;
            if cnt == 0 {
                if best != NONE {
                    break;
                }
                cnt = self.block_size;
            }
        }
        if best == NONE {
            return false;
        }
        self.in_arc = best;
        self.next_arc = e;
        true
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Returns false when the cycle is unbounded (cannot happen with
    /// balanced supplies).
    fn find_leaving_arc(&mut self) -> bool {
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == UP {
                let d = self.pred_flow[u];
                if d < delta {
                    delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        u = second;
        while u != self.join {
            if self.pred_dir[u] == DOWN {
                let d = self.pred_flow[u];
                if d <= delta {
                    delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta.max(0.0);
        result != 0
    }

    fn change_flow(&mut self) {
        let delta = self.delta;
        if delta > 0.0 {
            let mut u = self.source(self.in_arc);
            while u != self.join {
                self.pred_flow[u] -= self.pred_dir[u] as f64 * delta;
                u = self.parent[u];
            }
            u = self.target(self.in_arc);
            while u != self.join {
                self.pred_flow[u] += self.pred_dir[u] as f64 * delta;
                u = self.parent[u];
            }
        }
        let leaving = self.pred[self.u_out];
        if leaving < self.real_arcs {
            self.in_tree[leaving] = false;
        }
        self.in_tree[self.in_arc] = true;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let in_arc = self.in_arc;
        let in_dir = if u_in == self.source(in_arc) { UP } else { DOWN };

        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = in_dir;
            self.pred_flow[u_in] = self.delta;

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // Re-hang the stem u_in .. u_out under v_in, rewriting the thread.
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            // Shift pred arcs one step down the reversed stem.
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                self.pred_flow[u] = self.pred_flow[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = in_dir;
            self.pred_flow[u_in] = self.delta;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in] - self.pi[u_in] - self.pred_dir[u_in] as f64 * self.cost.as_slice()[self.in_arc];
        let end = self.thread[self.last_succ[u_in]];
        // Only potential differences matter, so shift whichever side is smaller.
        let (mut u, stop, shift) = if 2 * self.succ_num[u_in] <= self.root + 1 {
            (u_in, end, sigma)
        } else {
            (end, u_in, -sigma)
        };
        while u != stop {
            self.pi[u] += shift;
            u = self.thread[u];
        }
    }

    fn run(mut self) -> Flow {
        let mut pivots = 0;
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() {
                break;
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            pivots += 1;
        }
        let mut arcs = Vec::new();
        let mut cost = 0.0;
        for u in 0..self.root {
            let e = self.pred[u];
            let f = self.pred_flow[u];
            if e < self.real_arcs && f > 0.0 {
                let (i, j) = (e / self.m2, e % self.m2);
                cost += f * self.cost[(i, j)];
                arcs.push((i, j, f));
            }
        }
        arcs.sort_by_key(|&(i, j, _)| (i, j));
        Flow { cost, arcs, pivots }
    }
}

/// Minimizes `Σ_ij cost_ij f_ij` subject to `Σ_j f_ij = supply_i`,
/// `Σ_i f_ij = demand_j`, `f ≥ 0`. Supplies and demands must be nonnegative
/// with equal totals; `cost` is `supply.len() × demand.len()`.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &Matrix) -> Flow {
    let src: Vec<usize> = (0..supply.len()).collect();
    let dst: Vec<usize> = (0..demand.len()).collect();
    solve_transport_ordered(supply, demand, cost, &src, &dst)
}

/// Like [`solve_transport`], building the starting basis by the north-west
/// corner rule over the given permutations of sources and sinks. Orders that
/// roughly sort both sides along a common direction give a better start; the
/// optimum does not depend on them.
pub fn solve_transport_ordered(
    supply: &[f64],
    demand: &[f64],
    cost: &Matrix,
    src_order: &[usize],
    dst_order: &[usize],
) -> Flow {
    assert_eq!(cost.rows(), supply.len());
    assert_eq!(cost.cols(), demand.len());
    assert!(!supply.is_empty() && !demand.is_empty());
    assert_eq!(src_order.len(), supply.len());
    assert_eq!(dst_order.len(), demand.len());
    Simplex::new(supply, demand, cost, src_order, dst_order).run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_feasible(flow: &Flow, a: &[f64], b: &[f64]) {
        let mut rows = vec![0.0; a.len()];
        let mut cols = vec![0.0; b.len()];
        for &(i, j, f) in &flow.arcs {
            assert!(f >= 0.0);
            rows[i] += f;
            cols[j] += f;
        }
        for (x, y) in rows.iter().zip(a) {
            assert!((x - y).abs() < 1e-12, "{rows:?} vs {a:?}");
        }
        for (x, y) in cols.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{cols:?} vs {b:?}");
        }
    }

    #[test]
    fn single_arc() {
        let c = Matrix::from_rows(&[vec![9.0]]).unwrap();
        let f = solve_transport(&[1.0], &[1.0], &c);
        assert_eq!(f.cost, 9.0);
        assert_eq!(f.arcs, vec![(0, 0, 1.0)]);
    }

    #[test]
    fn assignment_prefers_diagonal() {
        let c = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let f = solve_transport(&[0.5, 0.5], &[0.5, 0.5], &c);
        assert_eq!(f.cost, 0.0);
        check_feasible(&f, &[0.5, 0.5], &[0.5, 0.5]);
    }

    #[test]
    fn classic_three_by_three() {
        // Integer instance with known optimum 0.61 after scaling by 1/100:
        // supplies (20, 30, 50), demands (30, 30, 40).
        let c = Matrix::from_rows(&[vec![8.0, 6.0, 10.0], vec![9.0, 12.0, 13.0], vec![14.0, 9.0, 16.0]]).unwrap();
        let a = [0.2, 0.3, 0.5];
        let b = [0.3, 0.3, 0.4];
        let f = solve_transport(&a, &b, &c);
        check_feasible(&f, &a, &b);
        // Optimum by hand: x13=.2, x21=.3, x32=.3, x33=.2 -> 2.0+2.7+2.7+3.2
        assert!((f.cost - 10.6).abs() < 1e-12, "{}", f.cost);
    }

    #[test]
    fn rectangular_instance_is_feasible() {
        let m1 = 30;
        let m2 = 7;
        let c = Matrix::from_fn(m1, m2, |i, j| ((i * 7 + j * 13) % 11) as f64 + 0.5 * j as f64);
        let a = vec![1.0 / m1 as f64; m1];
        let b = vec![1.0 / m2 as f64; m2];
        let f = solve_transport(&a, &b, &c);
        check_feasible(&f, &a, &b);
        assert!(f.arcs.len() <= m1 + m2 - 1);
    }
}
