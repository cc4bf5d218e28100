//! Design/output storage and file plumbing.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Experimental design with one scalar response per row. No replication
/// structure: a repeated input point is just another independent row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub xs: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl SampleSet {
    pub fn new(xs: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if xs.len() != y.len() {
            return Err(Error::Data(format!("{} design rows but {} outputs", xs.len(), y.len())));
        }
        if xs.is_empty() {
            return Err(Error::Data("empty sample set".into()));
        }
        let dim = xs[0].len();
        for (i, row) in xs.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Data(format!("row {i} has {} coordinates, expected {dim}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i} contains a non-finite coordinate")));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("output {i} is non-finite")));
        }
        Ok(SampleSet { xs, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.xs[0].len()
    }

    /// Reads `x1,..,xM,y` rows; lines starting with '#' are metadata.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let header_len = rdr
            .headers()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .len();
        if header_len < 2 {
            return Err(Error::Data(format!(
                "{}: need at least one input column and one output column",
                path.display()
            )));
        }
        let mut xs = Vec::new();
        let mut y = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("{} row {}: {e}", path.display(), i + 1)))?;
            if rec.len() != header_len {
                return Err(Error::Data(format!(
                    "{} row {}: {} fields, expected {header_len}",
                    path.display(),
                    i + 1,
                    rec.len()
                )));
            }
            let mut row = Vec::with_capacity(header_len - 1);
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!(
                        "{} row {}: field {} ({field:?}) is not a number",
                        path.display(),
                        i + 1,
                        j + 1
                    ))
                })?;
                if j + 1 == header_len {
                    y.push(v);
                } else {
                    row.push(v);
                }
            }
            xs.push(row);
        }
        SampleSet::new(xs, y)
    }

    /// Writes the set with `# key: value` metadata lines above the header.
    pub fn write_csv(&self, path: &Path, metadata: &[(String, String)]) -> Result<()> {
        let mut buf = Vec::new();
        for (k, v) in metadata {
            writeln!(buf, "# {k}: {v}").map_err(|e| Error::io(path, e))?;
        }
        let header: Vec<String> = (1..=self.dim())
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        writeln!(buf, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        for (row, yi) in self.xs.iter().zip(&self.y) {
            let mut line: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
            line.push(format_f64(*yi));
            writeln!(buf, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
        }
        write_atomic(path, &buf)
    }
}

/// f64 Display is shortest-round-trip in Rust, so text output parses back
/// to the identical bits.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes through a temporary file in the same directory and renames, so a
/// crash never leaves a half-written artifact.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline, written atomically.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.csv");
        let s = SampleSet::new(
            vec![vec![0.1, 0.2], vec![0.3, 1.0 / 3.0]],
            vec![1.5, -2.25e-8],
        )
        .unwrap();
        s.write_csv(&path, &[("seed".into(), "42".into())]).unwrap();
        let back = SampleSet::read_csv(&path).unwrap();
        assert_eq!(s, back);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# seed: 42\n"));
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,y\n0.5,1.0\noops,2.0\n").unwrap();
        let err = SampleSet::read_csv(&path).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "x1,x2,y\n0.5,0.5,1.0\n0.5,1.0\n").unwrap();
        assert!(SampleSet::read_csv(&path).is_err());
    }

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert!(!path.with_extension("json.tmp").exists());
    }
}
