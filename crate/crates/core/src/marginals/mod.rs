//! Execution profiles and the empirical snapshot marginals built from them.
//!
//! A [`ProfileSet`] holds the raw timestamped resource samples of `n` runs of
//! the same program. From the per-cycle end-time statistics a
//! [`SnapshotPlan`] places `s = 1 + n_c (s_int + 1)` snapshot times: the
//! common start, `s_int` equispaced interior times per cycle and every cycle's
//! mean end time. [`extract_snapshots`] then takes, for every profile and
//! snapshot time, the nearest sample, giving one uniformly weighted support
//! point per profile at every snapshot.

mod ingest;

pub use ingest::{ingest_profiles, read_profile_csv, write_cycles_csv, write_profile_csv};

use serde::{Deserialize, Serialize};

use crate::error::{CoverageGap, Error, Result};
use crate::linalg::Matrix;

/// Default half-width of the nearest-sample window, in seconds.
pub const DEFAULT_WINDOW: f64 = 0.005;

/// Slack for float round-off when comparing a sample distance to the window.
const WINDOW_SLACK: f64 = 1e-12;

/// One execution run: timestamped `d`-dimensional samples plus control-cycle
/// end times.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub id: String,
    times: Vec<f64>,
    states: Matrix,
    cycle_end_times: Vec<f64>,
}

impl Profile {
    pub fn new(
        id: impl Into<String>,
        times: Vec<f64>,
        states: Matrix,
        cycle_end_times: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if times.is_empty() {
            return Err(Error::Validation(format!("profile {id} has no samples")));
        }
        if states.rows() != times.len() {
            return Err(Error::Schema(format!(
                "profile {id}: {} timestamps but {} state rows",
                times.len(),
                states.rows()
            )));
        }
        if states.cols() == 0 {
            return Err(Error::Schema(format!("profile {id} has zero-dimensional states")));
        }
        if let Some(k) = first_non_increasing(&times) {
            return Err(Error::Validation(format!(
                "profile {id}: timestamps not strictly increasing at sample {} (t={} after t={})",
                k + 1,
                times[k + 1],
                times[k]
            )));
        }
        if states.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("profile {id} contains non-finite samples")));
        }
        if cycle_end_times.is_empty() {
            return Err(Error::Validation(format!("profile {id} has no control cycles")));
        }
        if let Some(k) = first_non_increasing(&cycle_end_times) {
            return Err(Error::Validation(format!(
                "profile {id}: cycle end times not strictly increasing at cycle {}",
                k + 2
            )));
        }
        let (t0, t1) = (times[0], times[times.len() - 1]);
        if cycle_end_times.iter().any(|&c| c < t0 || c > t1) {
            return Err(Error::Validation(format!(
                "profile {id}: cycle end times outside the sampled range [{t0}, {t1}]"
            )));
        }
        Ok(Self {
            id,
            times,
            states,
            cycle_end_times,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &Matrix {
        &self.states
    }

    pub fn cycle_end_times(&self) -> &[f64] {
        &self.cycle_end_times
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    /// Index of the sample nearest `tau`; equidistant samples resolve to the
    /// earlier one.
    pub fn nearest_sample(&self, tau: f64) -> (usize, f64) {
        let k = self.times.partition_point(|&t| t < tau);
        let after = (k < self.times.len()).then(|| (k, (self.times[k] - tau).abs()));
        let before = (k > 0).then(|| (k - 1, (tau - self.times[k - 1]).abs()));
        match (before, after) {
            (Some(b), Some(a)) => {
                if b.1 <= a.1 {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("profiles are never empty"),
        }
    }
}

fn first_non_increasing(xs: &[f64]) -> Option<usize> {
    xs.windows(2).position(|w| !(w[1] > w[0]))
}

/// A validated collection of profiles sharing dimension and cycle count.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    profiles: Vec<Profile>,
    dim: usize,
    n_cycles: usize,
}

impl ProfileSet {
    pub fn new(profiles: Vec<Profile>) -> Result<Self> {
        let first = profiles
            .first()
            .ok_or_else(|| Error::InsufficientData("profile set is empty".into()))?;
        let dim = first.dim();
        let n_cycles = first.cycle_end_times.len();
        for p in &profiles {
            if p.dim() != dim {
                return Err(Error::Schema(format!(
                    "profile {} has dimension {} but {} has {dim}",
                    p.id,
                    p.dim(),
                    first.id
                )));
            }
            if p.cycle_end_times.len() != n_cycles {
                return Err(Error::Validation(format!(
                    "profile {} has {} control cycles but {} has {n_cycles}",
                    p.id,
                    p.cycle_end_times.len(),
                    first.id
                )));
            }
        }
        let mut ids: Vec<&str> = profiles.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("duplicate profile id {}", w[0])));
        }
        Ok(Self {
            profiles,
            dim,
            n_cycles,
        })
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cycles(&self) -> usize {
        self.n_cycles
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub mean: f64,
    pub std_dev: f64,
}

/// Per-cycle sample mean and (n-1)-denominator standard deviation of the
/// cycle end times across profiles.
pub fn cycle_time_statistics(ps: &ProfileSet) -> Result<Vec<CycleStats>> {
    let n = ps.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 profiles for end-time standard deviations, got {n}"
        )));
    }
    let stats = (0..ps.n_cycles())
        .map(|c| {
            let ends = ps.profiles().iter().map(|p| p.cycle_end_times[c]);
            // Shifted by the first value so identical ends give an exact mean.
            let pivot = ps.profiles()[0].cycle_end_times[c];
            let mean = pivot + ends.clone().map(|e| e - pivot).sum::<f64>() / n as f64;
            let ss: f64 = ends.map(|e| (e - mean) * (e - mean)).sum();
            CycleStats {
                mean,
                std_dev: (ss / (n - 1) as f64).sqrt(),
            }
        })
        .collect();
    Ok(stats)
}

/// Snapshot placement: `s_int` equispaced interior times inside every
/// control cycle, bracketed by the cycle mean end times and the start at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPlan {
    pub n_cycles: usize,
    pub s_int: usize,
    pub cycle_mean_end_times: Vec<f64>,
}

impl SnapshotPlan {
    pub fn num_snapshots(&self) -> usize {
        1 + self.n_cycles * (self.s_int + 1)
    }

    /// Snapshot times `τ_1 = 0 < ... < τ_s`.
    pub fn times(&self) -> Vec<f64> {
        let mut times = Vec::with_capacity(self.num_snapshots());
        times.push(0.0);
        let mut start = 0.0;
        let steps = (self.s_int + 1) as f64;
        for &end in &self.cycle_mean_end_times {
            for k in 1..=self.s_int {
                times.push(start + (end - start) * k as f64 / steps);
            }
            times.push(end);
            start = end;
        }
        times
    }

    /// 0-based index of the snapshot at the end of `cycle` (1-based).
    pub fn cycle_end_index(&self, cycle: usize) -> usize {
        cycle * (self.s_int + 1)
    }

    /// The `s_int + 1` query times spread evenly through `cycle` (1-based):
    /// `start + (end - start) j / (s_int + 2)` for `j = 1..=s_int+1`.
    pub fn cycle_query_times(&self, cycle: usize) -> Result<Vec<f64>> {
        if cycle == 0 || cycle > self.n_cycles {
            return Err(Error::Argument(format!(
                "cycle {cycle} outside 1..={}",
                self.n_cycles
            )));
        }
        let times = self.times();
        let start = times[self.cycle_end_index(cycle - 1)];
        let end = times[self.cycle_end_index(cycle)];
        let denom = (self.s_int + 2) as f64;
        Ok((1..=self.s_int + 1)
            .map(|j| start + (end - start) * j as f64 / denom)
            .collect())
    }
}

pub fn build_snapshot_plan(stats: &[CycleStats], s_int: usize) -> Result<SnapshotPlan> {
    if stats.is_empty() {
        return Err(Error::Validation("no control cycles to plan snapshots from".into()));
    }
    let means: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    if means[0] <= 0.0 || first_non_increasing(&means).is_some() || means.iter().any(|m| !m.is_finite()) {
        return Err(Error::Validation(format!(
            "cycle mean end times must be positive and strictly increasing, got {means:?}"
        )));
    }
    Ok(SnapshotPlan {
        n_cycles: means.len(),
        s_int,
        cycle_mean_end_times: means,
    })
}

/// Per-dimension affine map between raw units and the standardized
/// coordinates the solver works in: `raw = mean + scale * z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.scale.iter().all(|&s| s == 1.0)
    }

    pub fn to_raw(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(z, (m, s))| m + s * z)
            .collect()
    }

    pub fn to_standard(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn matrix_to_raw(&self, z: &Matrix) -> Matrix {
        let mut out = z.clone();
        for i in 0..out.rows() {
            let raw = self.to_raw(z.row(i));
            out.row_mut(i).copy_from_slice(&raw);
        }
        out
    }

    /// The map `z ↦ self(inner(z))`.
    pub fn compose(&self, inner: &Standardization) -> Standardization {
        Standardization {
            mean: (0..self.dim())
                .map(|k| self.mean[k] + self.scale[k] * inner.mean[k])
                .collect(),
            scale: (0..self.dim())
                .map(|k| self.scale[k] * inner.scale[k])
                .collect(),
        }
    }
}

/// The empirical measure at one snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    /// `n × d`, one row per profile.
    pub support: Matrix,
    pub weights: Vec<f64>,
}

impl Snapshot {
    pub fn uniform(time: f64, support: Matrix) -> Self {
        let n = support.rows();
        Self {
            time,
            support,
            weights: vec![1.0 / n as f64; n],
        }
    }

    fn validate(&self, label: &str) -> Result<()> {
        let n = self.support.rows();
        if n == 0 || self.weights.len() != n {
            return Err(Error::Schema(format!(
                "{label}: {} support rows but {} weights",
                n,
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Validation(format!("{label}: weights must be strictly positive")));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("{label}: weights sum to {total}, not 1")));
        }
        if self.support.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("{label}: non-finite support point")));
        }
        Ok(())
    }
}

/// Ordered snapshots `μ_1, ..., μ_s` on a common support size, together with
/// the transform taking its coordinates back to raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSequence {
    snapshots: Vec<Snapshot>,
    transform: Standardization,
}

impl SnapshotSequence {
    pub fn new(snapshots: Vec<Snapshot>) -> Result<Self> {
        let dim = snapshots.first().map_or(0, |s| s.support.cols());
        Self::with_transform(snapshots, Standardization::identity(dim))
    }

    pub fn with_transform(snapshots: Vec<Snapshot>, transform: Standardization) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(Error::Validation(format!(
                "a snapshot sequence needs at least 2 snapshots, got {}",
                snapshots.len()
            )));
        }
        validate_snapshots(&snapshots)?;
        if transform.dim() != snapshots[0].support.cols() {
            return Err(Error::Schema("standardization dimension mismatch".into()));
        }
        Ok(Self {
            snapshots,
            transform,
        })
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn support_size(&self) -> usize {
        self.snapshots[0].support.rows()
    }

    pub fn dim(&self) -> usize {
        self.snapshots[0].support.cols()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn transform(&self) -> &Standardization {
        &self.transform
    }

    pub fn into_parts(self) -> (Vec<Snapshot>, Standardization) {
        (self.snapshots, self.transform)
    }

    /// Supports mapped back to raw units.
    pub fn raw_snapshots(&self) -> Vec<Snapshot> {
        self.snapshots
            .iter()
            .map(|s| Snapshot {
                time: s.time,
                support: self.transform.matrix_to_raw(&s.support),
                weights: s.weights.clone(),
            })
            .collect()
    }
}

/// Shared checks for snapshot lists (also used for held-out sets, which may
/// hold a single snapshot).
pub fn validate_snapshots(snapshots: &[Snapshot]) -> Result<()> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::Validation("no snapshots".into()))?;
    let (n, d) = (first.support.rows(), first.support.cols());
    for (k, s) in snapshots.iter().enumerate() {
        if s.support.rows() != n || s.support.cols() != d {
            return Err(Error::Schema(format!(
                "snapshot {} has shape {}x{}, expected {n}x{d}",
                k + 1,
                s.support.rows(),
                s.support.cols()
            )));
        }
        s.validate(&format!("snapshot {}", k + 1))?;
    }
    if snapshots.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::Validation("snapshot times must be strictly increasing".into()));
    }
    Ok(())
}

/// Nearest-sample snapshots of every profile at arbitrary times.
pub fn extract_at_times(ps: &ProfileSet, times: &[f64], window: f64) -> Result<Vec<Snapshot>> {
    if !(window > 0.0) {
        return Err(Error::Argument(format!("window must be positive, got {window}")));
    }
    let n = ps.len();
    let d = ps.dim();
    let mut gaps = Vec::new();
    let mut snapshots = Vec::with_capacity(times.len());
    for &tau in times {
        let mut support = Matrix::zeros(n, d);
        for (i, p) in ps.profiles().iter().enumerate() {
            let (k, dist) = p.nearest_sample(tau);
            if dist - window > WINDOW_SLACK {
                gaps.push(CoverageGap {
                    profile_id: p.id.clone(),
                    tau,
                    distance: dist,
                });
            }
            support.row_mut(i).copy_from_slice(p.states().row(k));
        }
        snapshots.push(Snapshot::uniform(tau, support));
    }
    if !gaps.is_empty() {
        return Err(Error::Coverage { window, gaps });
    }
    Ok(snapshots)
}

/// Builds the snapshot sequence for a plan, one support row per profile.
pub fn extract_snapshots(ps: &ProfileSet, plan: &SnapshotPlan, window: f64) -> Result<SnapshotSequence> {
    SnapshotSequence::new(extract_at_times(ps, &plan.times(), window)?)
}

/// Z-scores every dimension with the mean and (population) standard
/// deviation pooled over all supports of the sequence.
pub fn standardize(seq: &SnapshotSequence) -> Result<(SnapshotSequence, Standardization)> {
    let d = seq.dim();
    let mut mean = vec![0.0; d];
    let mut count = 0usize;
    for s in seq.snapshots() {
        for row in s.support.iter_rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
            count += 1;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; d];
    for s in seq.snapshots() {
        for row in s.support.iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
    }
    let mut scale = Vec::with_capacity(d);
    for (k, v) in var.iter().enumerate() {
        let sd = (v / count as f64).sqrt();
        // Relative check so a dimension that is constant up to round-off
        // still counts as degenerate.
        if !(sd > 1e-12 * mean[k].abs().max(f64::MIN_POSITIVE)) || !sd.is_finite() {
            return Err(Error::DegenerateDimension { dim: k + 1 });
        }
        scale.push(sd);
    }
    let step = Standardization { mean, scale };
    let snapshots = seq
        .snapshots()
        .iter()
        .map(|s| {
            let mut support = s.support.clone();
            for i in 0..support.rows() {
                let z = step.to_standard(s.support.row(i));
                support.row_mut(i).copy_from_slice(&z);
            }
            Snapshot {
                time: s.time,
                support,
                weights: s.weights.clone(),
            }
        })
        .collect();
    let total = seq.transform().compose(&step);
    let out = SnapshotSequence::with_transform(snapshots, total)?;
    Ok((out, step))
}
