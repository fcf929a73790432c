//! Directory formats passed between pipeline steps.
//!
//! Data files are CSV written with shortest round-trip float formatting so that
//! identical inputs give identical bytes. Run metadata (configuration, input
//! hashes, timings) goes into JSON sidecars.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::{BridgeSolution, Diagnostics, Objective, ScalingVectors, SolverConfig};
use crate::error::{Error, Result};
use crate::evaluate::SuiteRow;
use crate::linalg::Matrix;
use crate::marginals::{validate_snapshots, CycleStats, Snapshot, SnapshotPlan, SnapshotSequence, Standardization};
use crate::predict::Prediction;

/// Content hash of one input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

pub fn hash_file(path: &Path) -> Result<InputHash> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(InputHash {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Hashes of every regular file directly inside `dir`, by file name.
pub fn hash_dir(dir: &Path) -> Result<Vec<InputHash>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    files.iter().map(|p| hash_file(p)).collect()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(format!("writing {}", path.display()), e)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Writes rows of numbers under a header.
pub fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(w, "{}", header.join(",")).map_err(io_err(path))?;
    let mut line = String::new();
    for row in rows {
        line.clear();
        for (k, x) in row.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a numeric CSV whose header must equal `header`.
pub fn read_table(path: &Path, header: &[String]) -> Result<Matrix> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(0, e.to_string()))?;
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(parse_err(1, format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        for field in record.iter() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|e| parse_err(line, format!("{field:?}: {e}")))?;
            data.push(x);
        }
        rows += 1;
    }
    Ok(Matrix::from_row_major(rows, header.len(), data))
}

fn state_header(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("xi_{k}")).collect()
}

fn weighted_header(d: usize) -> Vec<String> {
    let mut h = state_header(d);
    h.push("weight".into());
    h
}

fn snapshot_file(dir: &Path, sigma: usize) -> PathBuf {
    dir.join(format!("snapshot_{:03}.csv", sigma + 1))
}

fn scaling_file(dir: &Path, sigma: usize) -> PathBuf {
    dir.join(format!("u_{:03}.csv", sigma + 1))
}

/// `meta.json` of a snapshot archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub kind: String,
    pub s: usize,
    pub n: usize,
    pub d: usize,
    pub times: Vec<f64>,
    /// Maps stored coordinates back to raw units.
    pub standardization: Standardization,
    #[serde(default)]
    pub plan: Option<SnapshotPlan>,
    #[serde(default)]
    pub cycle_stats: Option<Vec<CycleStats>>,
    pub window: f64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
}

pub const SNAPSHOT_KIND: &str = "snapshots";
pub const SOLUTION_KIND: &str = "solution";

/// Writes snapshots (in stored coordinates) plus metadata.
pub fn write_snapshot_archive(dir: &Path, snapshots: &[Snapshot], meta: &SnapshotMeta) -> Result<()> {
    create_dir(dir)?;
    let d = meta.d;
    for (sigma, snap) in snapshots.iter().enumerate() {
        let rows = snap.support.iter_rows().zip(&snap.weights).map(|(r, &w)| {
            let mut v = r.to_vec();
            v.push(w);
            v
        });
        write_table(&snapshot_file(dir, sigma), &weighted_header(d), rows)?;
    }
    write_json(&dir.join("meta.json"), meta)
}

/// Snapshots exactly as stored, with the archive metadata.
pub fn read_snapshot_archive(dir: &Path) -> Result<(Vec<Snapshot>, SnapshotMeta)> {
    let meta: SnapshotMeta = read_json(&dir.join("meta.json"))?;
    if meta.kind != SNAPSHOT_KIND {
        return Err(Error::Schema(format!("{} is not a snapshot archive", dir.display())));
    }
    if meta.times.len() != meta.s {
        return Err(Error::Schema(format!("{}: {} times for {} snapshots", dir.display(), meta.times.len(), meta.s)));
    }
    let mut snapshots = Vec::with_capacity(meta.s);
    for (sigma, &time) in meta.times.iter().enumerate() {
        let table = read_table(&snapshot_file(dir, sigma), &weighted_header(meta.d))?;
        if table.rows() != meta.n {
            return Err(Error::Schema(format!(
                "snapshot {} holds {} rows, expected {}",
                sigma + 1,
                table.rows(),
                meta.n
            )));
        }
        let support = Matrix::from_fn(meta.n, meta.d, |i, k| table[(i, k)]);
        let weights = (0..meta.n).map(|i| table[(i, meta.d)]).collect();
        snapshots.push(Snapshot { time, support, weights });
    }
    validate_snapshots(&snapshots)?;
    Ok((snapshots, meta))
}

/// The archive as a solvable sequence (needs at least two snapshots).
pub fn load_sequence(dir: &Path) -> Result<(SnapshotSequence, SnapshotMeta)> {
    let (snapshots, meta) = read_snapshot_archive(dir)?;
    let seq = SnapshotSequence::with_transform(snapshots, meta.standardization.clone())?;
    Ok((seq, meta))
}

/// The archive's snapshots mapped to raw units.
pub fn load_raw_snapshots(dir: &Path) -> Result<Vec<Snapshot>> {
    let (snapshots, meta) = read_snapshot_archive(dir)?;
    Ok(snapshots
        .into_iter()
        .map(|s| Snapshot {
            time: s.time,
            support: meta.standardization.matrix_to_raw(&s.support),
            weights: s.weights,
        })
        .collect())
}

/// `solution.json` of a solution archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub kind: String,
    pub converged: bool,
    pub snapshot_archive: PathBuf,
    pub solver: SolverConfig,
    pub cost_scale_factor: f64,
    pub iterations: usize,
    pub final_error: f64,
    pub seconds_per_sweep: f64,
    pub wall_time: f64,
    #[serde(default)]
    pub objective: Option<Objective>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
}

pub fn write_diagnostics_csv(path: &Path, diagnostics: &Diagnostics) -> Result<()> {
    let header: Vec<String> = ["sweep", "sigma", "hilbert_distance", "l1_error"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = diagnostics.sweeps.iter().enumerate().flat_map(|(k, rec)| {
        rec.hilbert_distances
            .iter()
            .zip(&rec.marginal_l1_errors)
            .enumerate()
            .map(move |(sigma, (&h, &e))| vec![(k + 1) as f64, (sigma + 1) as f64, h, e])
    });
    write_table(path, &header, rows)
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Diagnostics> {
    let header: Vec<String> = ["sweep", "sigma", "hilbert_distance", "l1_error"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let table = read_table(path, &header)?;
    let mut diagnostics = Diagnostics::default();
    for row in table.iter_rows() {
        let sweep = row[0] as usize;
        if diagnostics.sweeps.len() < sweep {
            diagnostics.sweeps.push(crate::bridge::SweepRecord {
                hilbert_distances: Vec::new(),
                marginal_l1_errors: Vec::new(),
                wall_time: 0.0,
            });
        }
        let rec = diagnostics.sweeps.last_mut().expect("pushed above");
        rec.hilbert_distances.push(row[2]);
        rec.marginal_l1_errors.push(row[3]);
    }
    Ok(diagnostics)
}

/// Writes scalings, diagnostics and metadata of a solved bridge.
pub fn write_solution_archive(dir: &Path, sol: &BridgeSolution, meta: &SolutionMeta) -> Result<()> {
    create_dir(dir)?;
    let header = vec!["u".to_string()];
    for (sigma, u) in sol.scalings.as_slice().iter().enumerate() {
        write_table(&scaling_file(dir, sigma), &header, u.iter().map(|&x| vec![x]))?;
    }
    write_diagnostics_csv(&dir.join("diagnostics.csv"), &sol.diagnostics)?;
    write_json(&dir.join("solution.json"), meta)
}

/// Rebuilds a solved bridge from its archive and the snapshot archive it
/// references (resolved relative to the solution directory when relative).
pub fn read_solution_archive(dir: &Path) -> Result<(BridgeSolution, SolutionMeta)> {
    let meta: SolutionMeta = read_json(&dir.join("solution.json"))?;
    if meta.kind != SOLUTION_KIND {
        return Err(Error::Schema(format!("{} is not a solution archive", dir.display())));
    }
    if !meta.converged {
        return Err(Error::State(format!("{} holds an unconverged solve", dir.display())));
    }
    let archive = if meta.snapshot_archive.is_absolute() {
        meta.snapshot_archive.clone()
    } else {
        dir.join(&meta.snapshot_archive)
    };
    let (seq, _) = load_sequence(&archive)?;
    let header = vec!["u".to_string()];
    let u = (0..seq.len())
        .map(|sigma| read_table(&scaling_file(dir, sigma), &header).map(|m| m.as_slice().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let diagnostics = read_diagnostics_csv(&dir.join("diagnostics.csv"))?;
    let sol = BridgeSolution::from_scalings(seq, meta.solver, ScalingVectors::new(u)?, diagnostics)?;
    Ok((sol, meta))
}

/// `prediction_meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMeta {
    pub tau: f64,
    /// 1-based interval index.
    pub sigma: usize,
    pub lambda: f64,
    pub prune_threshold: f64,
    pub particles: usize,
    pub solution: PathBuf,
    #[serde(default)]
    pub context: Option<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
}

pub fn write_prediction(dir: &Path, pred: &Prediction, meta: &PredictionMeta) -> Result<()> {
    create_dir(dir)?;
    let p = &pred.particles;
    let rows = p.points().iter_rows().zip(p.weights()).map(|(r, &w)| {
        let mut v = r.to_vec();
        v.push(w);
        v
    });
    write_table(&dir.join("prediction.csv"), &weighted_header(p.dim()), rows)?;
    write_json(&dir.join("prediction_meta.json"), meta)
}

pub fn write_report_csv(path: &Path, rows: &[SuiteRow]) -> Result<()> {
    let header: Vec<String> = ["tau", "sigma", "lambda", "wasserstein_distance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_table(
        path,
        &header,
        rows.iter()
            .map(|r| vec![r.tau, (r.sigma + 1) as f64, r.lambda, r.wasserstein_distance]),
    )
}

pub fn read_report_csv(path: &Path) -> Result<Vec<SuiteRow>> {
    let header: Vec<String> = ["tau", "sigma", "lambda", "wasserstein_distance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let table = read_table(path, &header)?;
    Ok(table
        .iter_rows()
        .map(|r| SuiteRow {
            tau: r[0],
            sigma: r[1] as usize - 1,
            lambda: r[2],
            wasserstein_distance: r[3],
            plan: None,
        })
        .collect())
}

/// Writes a dense plan as `i,j,mass` triplets for the nonzero entries.
pub fn write_plan_csv(path: &Path, plan: &Matrix) -> Result<()> {
    let header: Vec<String> = ["i", "j", "mass"].iter().map(|s| s.to_string()).collect();
    let cols = plan.cols();
    let rows = plan
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(move |(k, &m)| vec![(k / cols + 1) as f64, (k % cols + 1) as f64, m]);
    write_table(path, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::sinkhorn_solve;

    fn sample_seq() -> SnapshotSequence {
        let snaps = (0..3)
            .map(|k| {
                Snapshot::uniform(
                    0.1 * k as f64,
                    Matrix::from_fn(4, 2, |i, j| (i as f64 + 0.3 * k as f64) * (j as f64 + 1.0) / 3.0),
                )
            })
            .collect();
        SnapshotSequence::new(snaps).unwrap()
    }

    fn meta_for(seq: &SnapshotSequence) -> SnapshotMeta {
        SnapshotMeta {
            kind: SNAPSHOT_KIND.into(),
            s: seq.len(),
            n: seq.support_size(),
            d: seq.dim(),
            times: seq.times(),
            standardization: seq.transform().clone(),
            plan: None,
            cycle_stats: None,
            window: 0.005,
            config: serde_json::Value::Null,
            inputs: vec![],
        }
    }

    #[test]
    fn snapshot_archive_round_trip() {
        let seq = sample_seq();
        let dir = tempfile::tempdir().unwrap();
        write_snapshot_archive(dir.path(), seq.snapshots(), &meta_for(&seq)).unwrap();
        let (back, meta) = load_sequence(dir.path()).unwrap();
        assert_eq!(back, seq);
        assert_eq!(meta.s, 3);
    }

    #[test]
    fn solution_archive_round_trip() {
        let seq = sample_seq();
        let dir = tempfile::tempdir().unwrap();
        let snap_dir = dir.path().join("snaps");
        write_snapshot_archive(&snap_dir, seq.snapshots(), &meta_for(&seq)).unwrap();
        let sol = sinkhorn_solve(&seq, &SolverConfig::default()).unwrap();
        let meta = SolutionMeta {
            kind: SOLUTION_KIND.into(),
            converged: true,
            snapshot_archive: snap_dir.clone(),
            solver: sol.config,
            cost_scale_factor: sol.kernel.cost_scale_factor,
            iterations: sol.diagnostics.iterations(),
            final_error: sol.diagnostics.final_error(),
            seconds_per_sweep: 0.0,
            wall_time: 0.0,
            objective: None,
            config: serde_json::Value::Null,
            inputs: vec![],
        };
        let sol_dir = dir.path().join("sol");
        write_solution_archive(&sol_dir, &sol, &meta).unwrap();
        let (back, _) = read_solution_archive(&sol_dir).unwrap();
        assert_eq!(back.scalings, sol.scalings);
        assert_eq!(back.diagnostics.iterations(), sol.diagnostics.iterations());
        assert_eq!(back.max_marginal_error(), sol.max_marginal_error());
    }

    #[test]
    fn wrong_header_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_table(&p, &["x".into(), "y".into()]), Err(Error::Parse { .. })));
    }
}
