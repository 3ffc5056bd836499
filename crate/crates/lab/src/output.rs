//! CSV artifacts stamped with the scenario name and hash.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::LabError;

/// Shortest decimal that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Compact time label for file names, e.g. `0.025`.
pub fn time_label(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

/// Writes every artifact of one run into a directory.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    stamp: String,
    files: Vec<PathBuf>,
}

impl Artifacts {
    pub fn create(dir: &Path, scenario: &str, hash: &str) -> Result<Self, LabError> {
        std::fs::create_dir_all(dir).map_err(|e| LabError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            stamp: format!("# scenario={scenario} hash={hash}"),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.files
    }

    /// Writes a table with the stamp line, a header and string rows.
    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, LabError> {
        let path = self.dir.join(name);
        let io = |e| LabError::Io {
            path: path.clone(),
            source: e,
        };
        let mut file = BufWriter::new(File::create(&path).map_err(io)?);
        writeln!(file, "{}", self.stamp).map_err(io)?;
        let csv_err = |e| LabError::Csv {
            path: path.clone(),
            source: e,
        };
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        self.files.push(path.clone());
        Ok(path)
    }

    /// Writes numeric columns of equal length.
    pub fn columns(&mut self, name: &str, header: &[&str], cols: &[&[f64]]) -> Result<PathBuf, LabError> {
        let n = cols.first().map_or(0, |c| c.len());
        debug_assert!(cols.iter().all(|c| c.len() == n));
        let rows: Vec<Vec<String>> = (0..n).map(|i| cols.iter().map(|c| num(c[i])).collect()).collect();
        self.table(name, header, &rows)
    }

    /// Writes a plain text file with the stamp as a leading comment.
    pub fn text(&mut self, name: &str, body: &str) -> Result<PathBuf, LabError> {
        let path = self.dir.join(name);
        std::fs::write(&path, format!("{}\n{body}", self.stamp)).map_err(|e| LabError::Io {
            path: path.clone(),
            source: e,
        })?;
        self.files.push(path.clone());
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn time_labels() {
        assert_eq!(time_label(0.025), "0.025");
        assert_eq!(time_label(0.07500000000000001), "0.075");
        assert_eq!(time_label(0.0), "0");
        assert_eq!(time_label(2.0), "2");
    }
}
