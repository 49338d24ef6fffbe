//! Tabular datasets with the target in column 0.

use std::path::Path;

use crate::error::{arg_err, Error, Result};
use crate::loss::Task;
use crate::tensor::Matrix;

/// Directed edge between two dataset columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// `N × (d+1)` data with `Y` in column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub xt: Matrix,
    pub names: Vec<String>,
    pub task: Task,
    /// One flag per column; true for standalone noise columns.
    pub noise: Vec<bool>,
    /// Synthetic seed or source path.
    pub provenance: String,
    /// Ground-truth edges between columns, when known.
    pub truth: Option<Vec<ColumnEdge>>,
}

impl Dataset {
    pub fn new(
        xt: Matrix,
        names: Vec<String>,
        task: Task,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let noise = vec![false; xt.cols()];
        let ds = Self {
            xt,
            names,
            task,
            noise,
            provenance: provenance.into(),
            truth: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.xt.cols();
        if c < 2 {
            return Err(Error::Data(
                "a dataset needs a target and at least one feature".into(),
            ));
        }
        if self.names.len() != c || self.noise.len() != c {
            return Err(Error::Data(format!(
                "{c} columns but {} names and {} noise flags",
                self.names.len(),
                self.noise.len()
            )));
        }
        if !self.xt.all_finite() {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        if self.task == Task::Binary {
            if let Some(bad) = self
                .xt
                .column(0)
                .into_iter()
                .find(|&v| v != 0.0 && v != 1.0)
            {
                return Err(Error::Data(format!(
                    "binary target value {bad} is not 0 or 1"
                )));
            }
        }
        if let Some(t) = &self.truth {
            if t.iter().any(|e| e.from >= c || e.to >= c) {
                return Err(Error::Data("truth edge refers to a missing column".into()));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.xt.rows()
    }

    /// Number of features `d`.
    pub fn d(&self) -> usize {
        self.xt.cols() - 1
    }

    pub fn y(&self) -> Vec<f64> {
        self.xt.column(0)
    }

    /// Rows `idx` as a new dataset sharing all metadata.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            xt: self.xt.select_rows(idx),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            xt: Matrix::zeros(0, 0),
            names: self.names.clone(),
            task: self.task,
            noise: self.noise.clone(),
            provenance: self.provenance.clone(),
            truth: self.truth.clone(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Writes a header row and all values with full round-trip precision.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.names)?;
        for r in 0..self.n() {
            w.write_record(self.xt.row(r).iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the truth edges as `u -> v weight` lines using column names.
    pub fn write_edges(&self, path: &Path) -> Result<()> {
        let Some(edges) = &self.truth else {
            return arg_err("dataset has no ground-truth edges");
        };
        let mut out = String::new();
        for e in edges {
            out.push_str(&format!(
                "{} -> {} {:?}\n",
                self.names[e.from], self.names[e.to], e.weight
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads `u -> v weight` lines against this dataset's column names and
    /// stores them as the ground truth.
    pub fn read_edges(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.truth = Some(parse_edges(&text, &self.names)?);
        Ok(())
    }
}

/// Parses `u -> v [weight]` lines; blank lines and `#` comments are skipped.
pub fn parse_edges(text: &str, names: &[String]) -> Result<Vec<ColumnEdge>> {
    let lookup = |s: &str, line: usize| {
        names
            .iter()
            .position(|n| n == s)
            .ok_or_else(|| Error::Data(format!("edge file line {line}: unknown column '{s}'")))
    };
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (lhs, rhs) = line.split_once("->").ok_or_else(|| {
            Error::Data(format!(
                "edge file line {}: expected 'u -> v weight'",
                i + 1
            ))
        })?;
        let mut parts = rhs.split_whitespace();
        let to = parts
            .next()
            .ok_or_else(|| Error::Data(format!("edge file line {}: missing head", i + 1)))?;
        let weight = match parts.next() {
            Some(w) => w
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("edge file line {}: bad weight '{w}'", i + 1)))?,
            None => 1.0,
        };
        edges.push(ColumnEdge {
            from: lookup(lhs.trim(), i + 1)?,
            to: lookup(to, i + 1)?,
            weight,
        });
    }
    Ok(edges)
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "?"
    )
}

/// Result of [`load_csv`].
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    /// Rows dropped because they had a missing value.
    pub dropped: usize,
}

/// Reads a headed CSV, drops rows with missing cells and moves
/// `target_column` to column 0. Columns whose name starts with `noise` are
/// flagged as noise.
pub fn load_csv(path: &Path, target_column: &str, task: Task) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let Some(t) = header.iter().position(|h| h == target_column) else {
        return arg_err(format!(
            "target column '{target_column}' not found in {}",
            path.display()
        ));
    };
    let mut order = vec![t];
    order.extend((0..header.len()).filter(|&c| c != t));

    let mut data = Vec::new();
    let mut rows = 0;
    let mut dropped = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "line {line}: {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        if rec.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        for &c in &order {
            let cell = &rec[c];
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "line {line}, column '{}': cannot parse '{cell}'",
                    header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "line {line}, column '{}': non-finite value",
                    header[c]
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Data(format!(
            "{} has no complete rows",
            path.display()
        )));
    }
    let names: Vec<String> = order.iter().map(|&c| header[c].clone()).collect();
    let xt = Matrix::from_vec(rows, names.len(), data)?;
    let mut dataset = Dataset::new(xt, names, task, path.display().to_string())?;
    for (flag, name) in dataset.noise.iter_mut().zip(&dataset.names).skip(1) {
        *flag = name.starts_with("noise");
    }
    if dropped > 0 {
        log::warn!(
            "{}: dropped {dropped} rows with missing values",
            path.display()
        );
    }
    Ok(Loaded { dataset, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_and_moves_target() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,target,b\n1,2,3\n4,5,6\n7,8,9\n");
        let l = load_csv(&p, "target", Task::Regression).unwrap();
        assert_eq!(l.dataset.n(), 3);
        assert_eq!(l.dropped, 0);
        assert_eq!(l.dataset.names, vec!["target", "a", "b"]);
        assert_eq!(l.dataset.xt.row(1), &[5.0, 4.0, 6.0]);
    }

    #[test]
    fn drops_missing_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "y,x\n1,2\n3,\n5,6\n");
        let l = load_csv(&p, "y", Task::Regression).unwrap();
        assert_eq!(l.dataset.n(), 2);
        assert_eq!(l.dropped, 1);
    }

    #[test]
    fn reports_bad_cells_and_missing_target() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "y,x\n1,2\n3,abc\n");
        let e = load_csv(&p, "y", Task::Regression).unwrap_err();
        assert!(
            matches!(&e, Error::Data(m) if m.contains("line 3") && m.contains("'x'")),
            "{e}"
        );
        assert!(matches!(
            load_csv(&p, "z", Task::Regression),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn binary_targets_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "y,x\n0,2\n2,1\n");
        assert!(matches!(
            load_csv(&p, "y", Task::Binary),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn edge_parsing() {
        let names: Vec<String> = ["y", "x1", "x2"].iter().map(|s| s.to_string()).collect();
        let e = parse_edges("x1 -> y 1.5\n# comment\n\ny -> x2\n", &names).unwrap();
        assert_eq!(
            e,
            vec![
                ColumnEdge {
                    from: 1,
                    to: 0,
                    weight: 1.5
                },
                ColumnEdge {
                    from: 0,
                    to: 2,
                    weight: 1.0
                }
            ]
        );
        assert!(parse_edges("x9 -> y", &names).is_err());
        assert!(parse_edges("x1 y", &names).is_err());
    }
}
