//! CSV output: header row, LF endings, 17 significant digits.
//!
//! Rows are written as they are produced. A run that fails part-way ends
//! with an [`INCOMPLETE_MARKER`] line so truncated tables are never mistaken
//! for finished ones.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::Result;

/// Prefix of the last line of a table whose run failed.
pub const INCOMPLETE_MARKER: &str = "# incomplete run";

/// A single CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

/// Scientific notation with 17 significant digits; non-finite values as
/// `NaN`, `inf`, `-inf`.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn format_cell(c: &Cell) -> String {
    match c {
        Cell::Int(v) => v.to_string(),
        Cell::Real(v) => format_real(*v),
        Cell::Text(s) => s.clone(),
    }
}

/// Renders rows into a complete CSV document.
pub fn render(header: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.iter().map(format_cell).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Streaming CSV file.
pub struct CsvSink {
    path: PathBuf,
    out: BufWriter<File>,
    columns: usize,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        out.flush()?;
        Ok(CsvSink {
            path: path.to_owned(),
            out,
            columns: header.len(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn row(&mut self, cells: &[Cell]) -> Result<()> {
        debug_assert_eq!(cells.len(), self.columns, "row width differs from header");
        let line = cells.iter().map(format_cell).collect::<Vec<_>>().join(",");
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(())
    }

    /// Appends the failure marker; the message is kept on one line.
    pub fn mark_incomplete(&mut self, reason: &str) -> Result<()> {
        let reason = reason.replace(['\n', '\r'], " ");
        writeln!(self.out, "{INCOMPLETE_MARKER}: {reason}")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Numeric view of a CSV file produced by this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    /// Row-major; non-numeric cells are `NaN`.
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// Parses a CSV document, skipping `#` comment lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| crate::Error::InvalidArgument("CSV has no header".into()))?
            .split(',')
            .map(|s| s.trim().to_owned())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line.split(',').map(|s| s.trim().parse().unwrap_or(f64::NAN)).collect();
            if row.len() != header.len() {
                return Err(crate::Error::InvalidArgument(format!(
                    "CSV row {} has {} cells, header has {}",
                    i + 1,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = format_real(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            let mantissa = s.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
        assert_eq!(format_real(f64::NAN), "NaN");
    }

    #[test]
    fn render_and_parse() {
        let text = render(&["m", "err", "method"], &[vec![3usize.into(), 0.25.into(), "fom".into()]]);
        assert_eq!(text, "m,err,method\n3,2.5000000000000000e-1,fom\n");
        let t = Table::parse(&text).unwrap();
        assert_eq!(t.rows[0][..2], [3.0, 0.25]);
        assert!(t.rows[0][2].is_nan());
    }

    #[test]
    fn sink_marks_failures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut sink = CsvSink::create(&path, &["a"]).unwrap();
        sink.row(&[1.5.into()]).unwrap();
        sink.mark_incomplete("boom\nagain").unwrap();
        drop(sink);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a\n1.5000000000000000e0\n# incomplete run: boom again\n");
        assert_eq!(Table::parse(&text).unwrap().rows.len(), 1);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Table::parse("a,b\n1\n").is_err());
        assert!(Table::parse("").is_err());
    }
}
