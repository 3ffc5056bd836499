//! Numerical comparison of two artifact directories.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::LabError;

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDiff {
    pub file: String,
    pub column: String,
    pub max_abs: f64,
    /// Root-mean-square difference, the L² norm on the unit domain.
    pub l2: f64,
    /// Whether the second table was interpolated onto the first's `x`.
    pub interpolated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompareReport {
    pub columns: Vec<ColumnDiff>,
}

impl CompareReport {
    pub fn max_abs(&self) -> f64 {
        self.columns.iter().fold(0.0, |m, c| m.max(c.max_abs))
    }

    pub fn within(&self, tol: f64) -> bool {
        self.columns.iter().all(|c| c.max_abs <= tol)
    }
}

/// A parsed artifact table without its stamp line.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[k].parse().ok()).collect()
    }
}

pub fn read_table(path: &Path) -> Result<Table, LabError> {
    let csv_err = |e| LabError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(csv_err)?;
    Ok(Table { header, rows })
}

fn csv_names(dir: &Path) -> Result<BTreeSet<String>, LabError> {
    let io = |e| LabError::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    let mut out = BTreeSet::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let name = entry.map_err(io)?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".csv") {
            out.insert(name);
        }
    }
    Ok(out)
}

fn numeric(t: &Table, k: usize) -> Option<Vec<f64>> {
    t.rows.iter().map(|r| r[k].parse::<f64>().ok()).collect()
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x`, constant outside.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let j = xs.partition_point(|&v| v < x);
    if j == 0 {
        return ys[0];
    }
    if j == xs.len() {
        return ys[xs.len() - 1];
    }
    let w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    ys[j - 1] + w * (ys[j] - ys[j - 1])
}

fn diff(file: &str, column: &str, a: &[f64], b: &[f64], interpolated: bool) -> ColumnDiff {
    let mut max_abs: f64 = 0.0;
    let mut sq = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = if x == y || (x.is_nan() && y.is_nan()) {
            0.0
        } else {
            (x - y).abs()
        };
        max_abs = max_abs.max(if d.is_nan() { f64::INFINITY } else { d });
        sq += d * d;
    }
    ColumnDiff {
        file: file.to_string(),
        column: column.to_string(),
        max_abs,
        l2: (sq / a.len().max(1) as f64).sqrt(),
        interpolated,
    }
}

fn compare_tables(name: &str, path: PathBuf, a: &Table, b: &Table) -> Result<Vec<ColumnDiff>, LabError> {
    let schema = |reason: String| LabError::Schema {
        path: path.clone(),
        reason,
    };
    if a.header != b.header {
        return Err(schema(format!("headers differ: {:?} vs {:?}", a.header, b.header)));
    }
    let on_grid = a.header.first().is_some_and(|h| h == "x");
    let interpolated = a.rows.len() != b.rows.len();
    if interpolated && !on_grid {
        return Err(schema(format!(
            "row counts differ: {} vs {}",
            a.rows.len(),
            b.rows.len()
        )));
    }
    let (xa, xb) = if interpolated {
        let xa = numeric(a, 0).ok_or_else(|| schema("non-numeric x".into()))?;
        let xb = numeric(b, 0).ok_or_else(|| schema("non-numeric x".into()))?;
        if xb.windows(2).any(|w| w[1] <= w[0]) || xb.is_empty() {
            return Err(schema("x must be increasing to interpolate".into()));
        }
        (xa, xb)
    } else {
        (Vec::new(), Vec::new())
    };
    let mut out = Vec::new();
    for (k, col) in a.header.iter().enumerate() {
        if interpolated && k == 0 {
            continue;
        }
        if interpolated {
            let (Some(ca), Some(cb)) = (numeric(a, k), numeric(b, k)) else {
                return Err(schema(format!("column `{col}` is not numeric in both tables")));
            };
            let cb: Vec<f64> = xa.iter().map(|&x| interpolate(&xb, &cb, x)).collect();
            out.push(diff(name, col, &ca, &cb, true));
            continue;
        }
        // Numeric cells are compared by value, text cells must match exactly.
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            match (ra[k].parse::<f64>(), rb[k].parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    ca.push(x);
                    cb.push(y);
                }
                (Err(_), Err(_)) if ra[k] == rb[k] => {}
                _ => return Err(schema(format!("column `{col}` differs: `{}` vs `{}`", ra[k], rb[k]))),
            }
        }
        if !ca.is_empty() {
            out.push(diff(name, col, &ca, &cb, false));
        }
    }
    Ok(out)
}

/// Compares every CSV table of `a` with its namesake in `b`.
pub fn compare_outputs(a: &Path, b: &Path) -> Result<CompareReport, LabError> {
    let (na, nb) = (csv_names(a)?, csv_names(b)?);
    if let Some(missing) = na.symmetric_difference(&nb).next() {
        return Err(LabError::Schema {
            path: if na.contains(missing) {
                b.join(missing)
            } else {
                a.join(missing)
            },
            reason: "file present in only one directory".into(),
        });
    }
    let mut report = CompareReport::default();
    for name in &na {
        let ta = read_table(&a.join(name))?;
        let tb = read_table(&b.join(name))?;
        report.columns.extend(compare_tables(name, b.join(name), &ta, &tb)?);
    }
    Ok(report)
}
