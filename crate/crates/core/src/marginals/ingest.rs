//! CSV ingestion and emission of execution profiles.
//!
//! Profile files carry the header `t,xi_1,...,xi_d`; the profile id is the
//! file stem. The cycles file carries `profile_id,cycle_index,end_time` with
//! 1-based cycle indices.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{Profile, ProfileSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Timestamps and state rows of one profile file.
pub struct ProfileSamples {
    pub times: Vec<f64>,
    pub states: Matrix,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_field(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {what} {field:?} as a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{what} is not finite")));
    }
    Ok(v)
}

pub fn read_profile_csv(path: &Path) -> Result<ProfileSamples> {
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let d = headers.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=d).map(|k| format!("xi_{k}")))
        .collect();
    if d == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Schema(format!(
            "{}: header must be t,xi_1,...,xi_d, got {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 1 {
            return Err(parse_err(path, line, format!("expected {} fields, got {}", d + 1, rec.len())));
        }
        times.push(parse_field(path, line, &rec[0], "t")?);
        for k in 1..=d {
            data.push(parse_field(path, line, &rec[k], &format!("xi_{k}"))?);
        }
    }
    let n = times.len();
    Ok(ProfileSamples {
        times,
        states: Matrix::from_row_major(n, d, data),
    })
}

fn read_cycles_csv(path: &Path) -> Result<BTreeMap<String, BTreeMap<usize, f64>>> {
    let mut rdr = open_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.iter().ne(["profile_id", "cycle_index", "end_time"]) {
        return Err(Error::Schema(format!(
            "{}: header must be profile_id,cycle_index,end_time",
            path.display()
        )));
    }
    let mut cycles: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 fields, got {}", rec.len())));
        }
        let index: usize = rec[1]
            .parse()
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| parse_err(path, line, format!("cycle_index {:?} is not a positive integer", &rec[1])))?;
        let end = parse_field(path, line, &rec[2], "end_time")?;
        if cycles.entry(rec[0].to_string()).or_default().insert(index, end).is_some() {
            return Err(parse_err(path, line, format!("duplicate cycle {index} for profile {}", &rec[0])));
        }
    }
    Ok(cycles)
}

fn profile_id(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Argument(format!("cannot derive a profile id from {}", path.display())))
}

/// Reads and validates a profile set. Files are processed in path order so
/// the support row of every profile is deterministic.
pub fn ingest_profiles(profile_files: &[PathBuf], cycles_file: &Path) -> Result<ProfileSet> {
    if profile_files.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 profile files, got {}",
            profile_files.len()
        )));
    }
    let mut files = profile_files.to_vec();
    files.sort();
    let samples: Vec<(String, ProfileSamples)> = files
        .par_iter()
        .map(|p| Ok((profile_id(p)?, read_profile_csv(p)?)))
        .collect::<Result<_>>()?;
    let mut cycles = read_cycles_csv(cycles_file)?;

    let dim = samples[0].1.states.cols();
    let mut profiles = Vec::with_capacity(samples.len());
    for (id, s) in samples {
        if s.states.cols() != dim {
            return Err(Error::Schema(format!(
                "profile {id} has dimension {} but the first profile has {dim}",
                s.states.cols()
            )));
        }
        let ends = cycles
            .remove(&id)
            .ok_or_else(|| Error::Validation(format!("profile {id} has no rows in the cycles file")))?;
        let n_c = ends.len();
        if ends.keys().copied().ne(1..=n_c) {
            return Err(Error::Validation(format!(
                "profile {id} has missing cycle rows (indices {:?})",
                ends.keys().collect::<Vec<_>>()
            )));
        }
        profiles.push(Profile::new(id, s.times, s.states, ends.into_values().collect())?);
    }
    if let Some(extra) = cycles.keys().next() {
        return Err(Error::Validation(format!(
            "cycles file references unknown profile {extra}"
        )));
    }
    ProfileSet::new(profiles)
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    Ok(std::io::BufWriter::new(f))
}

pub fn write_profile_csv(path: &Path, profile: &Profile) -> Result<()> {
    let mut w = create(path)?;
    let d = profile.dim();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=d).map(|k| format!("xi_{k}")))
        .collect();
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for (t, row) in profile.times().iter().zip(profile.states().iter_rows()) {
        let mut line = t.to_string();
        for x in row {
            line.push(',');
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_cycles_csv(path: &Path, ps: &ProfileSet) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    writeln!(w, "profile_id,cycle_index,end_time").map_err(io)?;
    for p in ps.profiles() {
        for (c, end) in p.cycle_end_times().iter().enumerate() {
            writeln!(w, "{},{},{}", p.id, c + 1, end).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn smallest_valid_input() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "t,xi_1,xi_2\n0,1,2\n0.01,3,4\n0.02,5,6\n");
        let b = write(dir.path(), "b.csv", "t,xi_1,xi_2\n0,1,2\n0.01,3,4\n0.02,5,6\n");
        let c = write(
            dir.path(),
            "cycles.csv",
            "profile_id,cycle_index,end_time\na,1,0.01\nb,1,0.02\n",
        );
        let ps = ingest_profiles(&[b, a], &c).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps.dim(), 2);
        assert_eq!(ps.profiles()[0].id, "a");
        assert_eq!(ps.profiles()[1].cycle_end_times(), &[0.02]);
    }

    #[test]
    fn decreasing_timestamps_name_the_profile() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "t,xi_1\n0,1\n0.01,3\n");
        let b = write(dir.path(), "late.csv", "t,xi_1\n0.02,1\n0.01,3\n");
        let c = write(
            dir.path(),
            "cycles.csv",
            "profile_id,cycle_index,end_time\na,1,0.01\nlate,1,0.02\n",
        );
        let err = ingest_profiles(&[a, b], &c).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("late")), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "t,xi_1\n0,1\n0.01,oops\n");
        match read_profile_csv(&a) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {:?}", other.err()),
        }
    }

    #[test]
    fn inconsistent_dimension_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "t,xi_1\n0,1\n0.01,3\n");
        let b = write(dir.path(), "b.csv", "t,xi_1,xi_2\n0,1,1\n0.01,3,3\n");
        let c = write(
            dir.path(),
            "cycles.csv",
            "profile_id,cycle_index,end_time\na,1,0.01\nb,1,0.01\n",
        );
        assert!(matches!(ingest_profiles(&[a, b], &c), Err(Error::Schema(_))));
    }

    #[test]
    fn missing_cycle_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "t,xi_1\n0,1\n0.01,3\n0.02,3\n");
        let b = write(dir.path(), "b.csv", "t,xi_1\n0,1\n0.01,3\n0.02,3\n");
        let c = write(
            dir.path(),
            "cycles.csv",
            "profile_id,cycle_index,end_time\na,1,0.01\na,2,0.02\nb,2,0.02\n",
        );
        assert!(matches!(ingest_profiles(&[a, b], &c), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_profile_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "t,xi_1\n0,1\n0.01,3\n");
        let b = write(dir.path(), "b.csv", "t,xi_1\n");
        let c = write(
            dir.path(),
            "cycles.csv",
            "profile_id,cycle_index,end_time\na,1,0.01\nb,1,0.01\n",
        );
        assert!(ingest_profiles(&[a, b], &c).is_err());
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "time,x\n0,1\n");
        assert!(matches!(read_profile_csv(&a), Err(Error::Schema(_))));
    }
}
