//! Cyber-physical contexts and nearest-context lookup.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A planar curve given by its vertices in order.
pub type Polyline = Vec<(f64, f64)>;

/// Resource allocation plus the reference path the controller tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub id: String,
    /// Cache partitions and memory-bandwidth blocks.
    pub cyber: [u32; 2],
    pub phys: Polyline,
}

impl Context {
    pub fn new(id: impl Into<String>, cyber: [u32; 2], phys: Polyline) -> Result<Self> {
        let id = id.into();
        if cyber.iter().any(|&c| c < 1) {
            return Err(Error::Validation(format!("context {id}: cyber entries must be >= 1")));
        }
        if phys.is_empty() {
            return Err(Error::Validation(format!("context {id}: empty reference curve")));
        }
        if phys.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Validation(format!("context {id}: non-finite curve vertex")));
        }
        if phys.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Validation(format!(
                "context {id}: curve x-coordinates must be strictly increasing"
            )));
        }
        Ok(Self { id, cyber, phys })
    }

    fn cyber_distance(&self, other: &Context) -> f64 {
        let dx = self.cyber[0] as f64 - other.cyber[0] as f64;
        let dy = self.cyber[1] as f64 - other.cyber[1] as f64;
        dx.hypot(dy)
    }
}

/// A profiled context and where its artifacts live.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    pub context: Context,
    pub archive_dir: PathBuf,
    pub solution_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextLibrary {
    entries: Vec<LibraryEntry>,
}

impl ContextLibrary {
    pub fn new(entries: Vec<LibraryEntry>) -> Result<Self> {
        let mut ids: Vec<&str> = entries.iter().map(|e| e.context.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("duplicate context id {}", w[0])));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&LibraryEntry> {
        self.entries.iter().find(|e| e.context.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Discrete Fréchet distance between two polylines (Euclidean vertex metric).
pub fn frechet_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("Fréchet distance of an empty polyline".into()));
    }
    let dist = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).hypot(p.1 - q.1);
    // One row of the coupling table at a time.
    let mut prev = vec![0.0f64; b.len()];
    let mut cur = vec![0.0f64; b.len()];
    for (i, &p) in a.iter().enumerate() {
        for (j, &q) in b.iter().enumerate() {
            let d = dist(p, q);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[b.len() - 1])
}

/// Relative importance of the cyber and physical mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchWeights {
    pub cyber: f64,
    pub phys: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self { cyber: 1.0, phys: 1.0 }
    }
}

/// Library contexts ranked by closeness to `query`, best first.
///
/// Each component distance is divided by its maximum over the library (a zero
/// maximum makes the component vanish) before weighting. Ties are broken by id.
pub fn match_context(lib: &ContextLibrary, query: &Context, weights: MatchWeights) -> Result<Vec<(String, f64)>> {
    if lib.is_empty() {
        return Err(Error::State("context library is empty".into()));
    }
    if !(weights.cyber >= 0.0 && weights.phys >= 0.0) || !weights.cyber.is_finite() || !weights.phys.is_finite() {
        return Err(Error::Argument("match weights must be finite and nonnegative".into()));
    }
    let cyber: Vec<f64> = lib.entries.iter().map(|e| e.context.cyber_distance(query)).collect();
    let phys: Vec<f64> = lib
        .entries
        .iter()
        .map(|e| frechet_distance(&e.context.phys, &query.phys))
        .collect::<Result<_>>()?;
    let normalize = |v: &[f64]| -> Vec<f64> {
        let max = v.iter().cloned().fold(0.0, f64::max);
        v.iter().map(|&x| if max > 0.0 { x / max } else { 0.0 }).collect()
    };
    let cyber = normalize(&cyber);
    let phys = normalize(&phys);
    let mut ranked: Vec<(String, f64)> = lib
        .entries
        .iter()
        .enumerate()
        .map(|(k, e)| (e.context.id.clone(), weights.cyber * cyber[k] + weights.phys * phys[k]))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Reads a two-column `x,y` curve file.
pub fn read_polyline_csv(path: &Path) -> Result<Polyline> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header x,y".into(),
        });
    }
    let mut out = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("{s:?}: {e}"),
            })
        };
        out.push((parse(&record[0])?, parse(&record[1])?));
    }
    Ok(out)
}

pub fn write_polyline_csv(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut text = String::from("x,y\n");
    for (x, y) in curve {
        text.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// One manifest entry. Relative paths resolve against the manifest's folder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub cyber: [u32; 2],
    pub phys_file: PathBuf,
    pub archive_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution_dir: Option<PathBuf>,
}

/// Loads a JSON manifest (an array of entries) into a library.
pub fn load_library(manifest: &Path) -> Result<ContextLibrary> {
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| Error::io(format!("reading {}", manifest.display()), e))?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| Error::json(manifest.display().to_string(), e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let archive_dir = base.join(&e.archive_dir);
        if !archive_dir.is_dir() {
            return Err(Error::Validation(format!(
                "context {}: archive {} does not exist",
                e.id,
                archive_dir.display()
            )));
        }
        let phys = read_polyline_csv(&base.join(&e.phys_file))?;
        out.push(LibraryEntry {
            context: Context::new(e.id, e.cyber, phys)?,
            archive_dir,
            solution_dir: e.solution_dir.map(|p| base.join(p)),
        });
    }
    ContextLibrary::new(out)
}
