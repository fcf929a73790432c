//! Seeded synthetic execution profiles and reference curves.
//!
//! The resource process is piecewise constant per control cycle plus Gaussian
//! noise, optionally with a level shift partway through chosen cycles. Cycle
//! end times are jittered around the cumulative mean durations.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::Polyline;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::marginals::{write_cycles_csv, write_profile_csv, Profile, ProfileSet};

const MAX_REDRAWS: usize = 100;

/// A level change inside one cycle: from `at_fraction` of the cycle's
/// duration until its end, `offset` is added to the cycle's mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeShift {
    /// 1-based cycle index.
    pub cycle: usize,
    pub at_fraction: f64,
    pub offset: Vec<f64>,
}

fn default_sample_period() -> f64 {
    0.010
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Number of profiles.
    pub n: usize,
    /// State dimension.
    pub d: usize,
    /// Number of control cycles.
    pub n_c: usize,
    pub cycle_mean_durations: Vec<f64>,
    pub cycle_jitter_std: f64,
    /// `n_c` rows of `d` means.
    pub regime_means: Vec<Vec<f64>>,
    pub regime_noise_std: Vec<f64>,
    #[serde(default = "default_sample_period")]
    pub sample_period: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shifts: Vec<RegimeShift>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.n == 0 || self.d == 0 || self.n_c == 0 {
            return bad("n, d and n_c must be positive".into());
        }
        if self.cycle_mean_durations.len() != self.n_c {
            return bad(format!(
                "{} cycle durations for {} cycles",
                self.cycle_mean_durations.len(),
                self.n_c
            ));
        }
        if self.cycle_mean_durations.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return bad("cycle durations must be positive".into());
        }
        if !(self.cycle_jitter_std >= 0.0) || !self.cycle_jitter_std.is_finite() {
            return bad("cycle jitter must be finite and nonnegative".into());
        }
        if self.regime_means.len() != self.n_c || self.regime_means.iter().any(|r| r.len() != self.d) {
            return bad(format!("regime means must be {} x {}", self.n_c, self.d));
        }
        if self.regime_means.iter().flatten().any(|x| !x.is_finite()) {
            return bad("regime means must be finite".into());
        }
        if self.regime_noise_std.len() != self.d
            || self.regime_noise_std.iter().any(|&x| !(x >= 0.0) || !x.is_finite())
        {
            return bad(format!("regime noise needs {} nonnegative entries", self.d));
        }
        if !(self.sample_period > 0.0) || !self.sample_period.is_finite() {
            return bad("sample period must be positive".into());
        }
        for s in &self.shifts {
            if s.cycle == 0 || s.cycle > self.n_c {
                return bad(format!("shift cycle {} outside 1..={}", s.cycle, self.n_c));
            }
            if !(0.0..1.0).contains(&s.at_fraction) {
                return bad("shift fraction must lie in [0, 1)".into());
            }
            if s.offset.len() != self.d || s.offset.iter().any(|x| !x.is_finite()) {
                return bad(format!("shift offset needs {} finite entries", self.d));
            }
        }
        Ok(())
    }

    fn cumulative_means(&self) -> Vec<f64> {
        self.cycle_mean_durations
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect()
    }
}

/// Profile id for index `k`; zero padded so that lexical and numeric order agree.
pub fn profile_id(k: usize) -> String {
    format!("p{k:05}")
}

fn draw_end_times(spec: &SynthSpec, means: &[f64], rng: &mut ChaCha8Rng, id: &str) -> Result<Vec<f64>> {
    let jitter = Normal::new(0.0, spec.cycle_jitter_std).map_err(|e| Error::Generation(e.to_string()))?;
    for _ in 0..MAX_REDRAWS {
        let ends: Vec<f64> = means.iter().map(|m| m + jitter.sample(rng)).collect();
        let increasing = ends[0] > 0.0 && ends.windows(2).all(|w| w[1] > w[0]);
        if increasing {
            return Ok(ends);
        }
    }
    Err(Error::Generation(format!(
        "profile {id}: cycle end times not increasing after {MAX_REDRAWS} redraws"
    )))
}

fn generate_one(spec: &SynthSpec, k: usize, means: &[f64], horizon: f64) -> Result<Profile> {
    let id = profile_id(k);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ k as u64);
    let ends = draw_end_times(spec, means, &mut rng, &id)?;

    let last = ends[spec.n_c - 1];
    let stop = horizon.max(last + spec.sample_period);
    let count = (stop / spec.sample_period).ceil() as usize + 1;
    let times: Vec<f64> = (0..count).map(|i| i as f64 * spec.sample_period).collect();

    let d = spec.d;
    let mut data = Vec::with_capacity(count * d);
    for &t in &times {
        let cycle = ends.partition_point(|&e| e <= t).min(spec.n_c - 1);
        let start = if cycle == 0 { 0.0 } else { ends[cycle - 1] };
        let progress = (t - start) / (ends[cycle] - start);
        let mut mean = spec.regime_means[cycle].clone();
        for s in spec.shifts.iter().filter(|s| s.cycle == cycle + 1) {
            if progress >= s.at_fraction {
                mean.iter_mut().zip(&s.offset).for_each(|(m, o)| *m += o);
            }
        }
        for (m, &sd) in mean.iter().zip(&spec.regime_noise_std) {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(m + sd * z);
        }
    }
    Profile::new(id, times, Matrix::from_row_major(count, d, data), ends)
}

/// Draws `spec.n` profiles. Profile `k` uses its own stream seeded with
/// `seed ^ k`, so the output does not depend on thread scheduling.
pub fn generate_profiles(spec: &SynthSpec) -> Result<ProfileSet> {
    spec.validate()?;
    let means = spec.cumulative_means();
    // Sample well past the latest plausible cycle end so every profile covers
    // the mean end of the last cycle.
    let horizon = means[spec.n_c - 1] + 6.0 * spec.cycle_jitter_std + 2.0 * spec.sample_period;
    let profiles = (0..spec.n)
        .into_par_iter()
        .map(|k| generate_one(spec, k, &means, horizon))
        .collect::<Result<Vec<_>>>()?;
    ProfileSet::new(profiles)
}

/// Writes `profiles/<id>.csv`, `cycles.csv` and `synth_spec.json` under `dir`.
/// Returns the profile file paths.
pub fn write_synth_output(dir: &Path, spec: &SynthSpec, ps: &ProfileSet) -> Result<Vec<PathBuf>> {
    let profile_dir = dir.join("profiles");
    std::fs::create_dir_all(&profile_dir)
        .map_err(|e| Error::io(format!("creating {}", profile_dir.display()), e))?;
    let paths: Vec<PathBuf> = ps
        .profiles()
        .iter()
        .map(|p| profile_dir.join(format!("{}.csv", p.id)))
        .collect();
    ps.profiles()
        .par_iter()
        .zip(paths.par_iter())
        .try_for_each(|(p, path)| write_profile_csv(path, p))?;
    write_cycles_csv(&dir.join("cycles.csv"), ps)?;
    let json = serde_json::to_string_pretty(spec).map_err(|e| Error::json("synth spec", e))?;
    let spec_path = dir.join("synth_spec.json");
    std::fs::write(&spec_path, json + "\n").map_err(|e| Error::io(format!("writing {}", spec_path.display()), e))?;
    Ok(paths)
}

/// A zero-mean Gaussian-process path with squared-exponential covariance
/// `variance · exp(-(x - x')² / (2 ℓ²))` on an equispaced grid.
///
/// The unit correlation matrix gets a diagonal jitter that is raised tenfold
/// until the Cholesky factorization succeeds.
pub fn sample_gp_path(
    x_min: f64,
    x_max: f64,
    num_points: usize,
    variance: f64,
    length_scale: f64,
    seed: u64,
) -> Result<Polyline> {
    if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
        return Err(Error::Argument(format!("empty grid [{x_min}, {x_max}]")));
    }
    if num_points < 2 {
        return Err(Error::Argument("a path needs at least two points".into()));
    }
    if !(variance > 0.0 && length_scale > 0.0) || !variance.is_finite() || !length_scale.is_finite() {
        return Err(Error::Argument("variance and length scale must be positive".into()));
    }
    let step = (x_max - x_min) / (num_points - 1) as f64;
    let xs: Vec<f64> = (0..num_points)
        .map(|i| if i + 1 == num_points { x_max } else { x_min + step * i as f64 })
        .collect();
    let corr = DMatrix::from_fn(num_points, num_points, |i, j| {
        let r = (xs[i] - xs[j]) / length_scale;
        (-0.5 * r * r).exp()
    });
    let mut jitter = 1e-10;
    let factor = loop {
        let mut m = corr.clone();
        for i in 0..num_points {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            break c.l();
        }
        jitter *= 10.0;
        if jitter > 1e-2 {
            return Err(Error::Numerical(
                "covariance factorization failed even with jitter".into(),
            ));
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = nalgebra::DVector::from_fn(num_points, |_, _| StandardNormal.sample(&mut rng));
    let y = factor * z * variance.sqrt();
    Ok(xs.into_iter().zip(y.iter().copied()).collect())
}
