//! CSV tables and JSON documents for run artifacts.

use crate::error::{invalid, Error, Result};
use crate::field::WaveField;
use crate::propagate::Trajectory;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

/// One CSV cell. Floats are written with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        match v {
            Some(x) => Cell::Float(x),
            None => Cell::Text(String::new()),
        }
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Rectangular table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return invalid(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            ));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Samples of one field: `x, re, im`.
pub fn field_table(f: &WaveField) -> Table {
    let mut t = Table::new(&["x", "re", "im"]);
    for (x, v) in f.grid.points().into_iter().zip(&f.values) {
        t.rows.push(vec![x.into(), v.re.into(), v.im.into()]);
    }
    t
}

/// Long-format trajectory `t, x, re, im`, every `stride`-th time node plus the last.
pub fn trajectory_table(traj: &Trajectory, stride: usize) -> Table {
    let stride = stride.max(1);
    let mut t = Table::new(&["t", "x", "re", "im"]);
    let steps = traj.steps();
    let pts = traj.first().grid.points();
    for n in (0..=steps).filter(|n| n % stride == 0 || *n == steps) {
        let time = traj.time(n);
        for (x, v) in pts.iter().zip(&traj.fields[n].values) {
            t.rows.push(vec![time.into(), (*x).into(), v.re.into(), v.im.into()]);
        }
    }
    t
}

/// Files written into one output directory; removable as a unit when a run
/// fails before completing.
#[derive(Debug)]
pub struct ArtifactSet {
    dir: PathBuf,
    written: Vec<PathBuf>,
    created_dir: bool,
}

impl ArtifactSet {
    pub fn create(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            created_dir,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()))
            .collect()
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        if !self.written.contains(&path) {
            self.written.push(path.clone());
        }
        Ok(path)
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        let s = table.to_csv_string()?;
        self.write_bytes(name, s.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }

    /// Delete everything written so far (and the directory if this set made it).
    pub fn discard(self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::GridSpec;

    #[test]
    fn floats_keep_seventeen_digits() {
        let x = 0.1 + 0.2;
        let s = format_float(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(s, "3.0000000000000004e-1");
    }

    #[test]
    fn csv_has_header_and_unix_newlines() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1usize.into(), 2.5.into()]).unwrap();
        assert!(t.push(vec![1usize.into()]).is_err());
        let s = t.to_csv_string().unwrap();
        assert_eq!(s, "a,b\n1,2.5000000000000000e0\n");
    }

    #[test]
    fn field_table_round_trips() {
        let g = GridSpec::new(2.0, 31).unwrap();
        let f = WaveField::gaussian(&g, 1.0, 0.2, 0.5, 1.0);
        let t = field_table(&f);
        assert_eq!(t.len(), 31);
        for (row, v) in t.rows.iter().zip(&f.values) {
            if let (Cell::Float(re), Cell::Float(im)) = (&row[1], &row[2]) {
                assert_eq!(format_float(*re).parse::<f64>().unwrap(), v.re);
                assert_eq!(format_float(*im).parse::<f64>().unwrap(), v.im);
            }
        }
    }
}
