//! Numeric CSV ingestion with optional `log1p` transforms and quadratic
//! interaction expansion.
//!
//! Format: UTF-8, comma separated, `.` as the decimal point, one observation
//! per row. A first row containing any non-numeric cell is taken as a header.
//! Column indices in [`IngestOptions`] are 1-based positions in the file.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOptions {
    /// Response column.
    pub y_col: usize,
    /// Columns replaced by `log1p(value)`; may include the response.
    pub log_cols: Vec<usize>,
    /// Predictor columns whose squares and pairwise products are appended.
    pub interact_cols: Vec<usize>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            y_col: 1,
            log_cols: Vec::new(),
            interact_cols: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Predictor names: header names (or `c<j>`), then `a*b` for interactions.
    pub names: Vec<String>,
    pub had_header: bool,
}

pub fn ingest_csv(path: &Path, opts: &IngestOptions) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, opts)
}

/// Raw numeric table with its optional header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
    /// 1-based file line of each data row.
    pub lines: Vec<usize>,
}

impl Table {
    pub fn ncols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

pub fn read_table(text: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut lines = Vec::new();
    let mut width = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            col: None,
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if header.is_none() && rows.is_empty() && rec.iter().any(|c| c.parse::<f64>().is_err()) {
            header = Some(rec.iter().map(str::to_string).collect());
            width = Some(rec.len());
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(Error::Parse {
                line,
                col: None,
                reason: format!("expected {expected} fields, found {}", rec.len()),
            });
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    line,
                    col: Some(j + 1),
                    reason: format!("not a finite number: {cell:?}"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        lines.push(line);
    }
    if rows.is_empty() {
        return Err(Error::Data("CSV contains no data rows".into()));
    }
    Ok(Table { header, rows, lines })
}

fn check_columns(what: &str, cols: &[usize], width: usize) -> Result<()> {
    for (i, &c) in cols.iter().enumerate() {
        if c == 0 || c > width {
            return Err(Error::arg(format!("{what} column {c} outside 1..={width}")));
        }
        if cols[..i].contains(&c) {
            return Err(Error::arg(format!("{what} column {c} listed twice")));
        }
    }
    Ok(())
}

pub fn parse_csv(text: &str, opts: &IngestOptions) -> Result<Dataset> {
    let mut table = read_table(text)?;
    let width = table.ncols();
    check_columns("response", &[opts.y_col], width)?;
    check_columns("log", &opts.log_cols, width)?;
    check_columns("interaction", &opts.interact_cols, width)?;
    if opts.interact_cols.contains(&opts.y_col) {
        return Err(Error::arg("the response column cannot be expanded into interactions"));
    }

    for &c in &opts.log_cols {
        for (row, &line) in table.rows.iter_mut().zip(&table.lines) {
            let v = row[c - 1];
            if v <= -1.0 {
                return Err(Error::Parse {
                    line,
                    col: Some(c),
                    reason: format!("log1p undefined for {v}"),
                });
            }
            row[c - 1] = v.ln_1p();
        }
    }

    let name = |c: usize| -> String {
        table
            .header
            .as_ref()
            .map_or_else(|| format!("c{c}"), |h| h[c - 1].clone())
    };
    let predictors: Vec<usize> = (1..=width).filter(|&c| c != opts.y_col).collect();
    let mut names: Vec<String> = predictors.iter().map(|&c| name(c)).collect();
    let mut pairs = Vec::new();
    for (i, &a) in opts.interact_cols.iter().enumerate() {
        for &b in &opts.interact_cols[i..] {
            pairs.push((a, b));
            names.push(format!("{}*{}", name(a), name(b)));
        }
    }

    let n = table.rows.len();
    let p = predictors.len() + pairs.len();
    if p == 0 {
        return Err(Error::Data("no predictor columns remain".into()));
    }
    let x = DMatrix::from_fn(n, p, |i, j| {
        let row = &table.rows[i];
        if j < predictors.len() {
            row[predictors[j] - 1]
        } else {
            let (a, b) = pairs[j - predictors.len()];
            row[a - 1] * row[b - 1]
        }
    });
    let y = DVector::from_iterator(n, table.rows.iter().map(|r| r[opts.y_col - 1]));
    Ok(Dataset {
        x,
        y,
        names,
        had_header: table.header.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_parse() {
        let ds = parse_csv("1,2\n3,4\n5,6", &IngestOptions::default()).unwrap();
        assert_eq!(ds.y.as_slice(), &[1.0, 3.0, 5.0]);
        assert_eq!(ds.x.shape(), (3, 1));
        assert_eq!(ds.x.as_slice(), &[2.0, 4.0, 6.0]);
        assert!(!ds.had_header);
    }

    #[test]
    fn header_is_detected() {
        let ds = parse_csv("a,b,c\n1,2,3\n4,5,6\n", &IngestOptions { y_col: 3, ..Default::default() }).unwrap();
        assert!(ds.had_header);
        assert_eq!(ds.names, vec!["a", "b"]);
        assert_eq!(ds.y.as_slice(), &[3.0, 6.0]);
    }

    #[test]
    fn interactions_add_squares_and_products() {
        let opts = IngestOptions {
            y_col: 1,
            log_cols: vec![],
            interact_cols: vec![2, 3],
        };
        let ds = parse_csv("0,2,3\n0,1,5", &opts).unwrap();
        assert_eq!(ds.x.ncols(), 2 + 3);
        assert_eq!(ds.x.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0, 6.0, 9.0]);
        assert_eq!(ds.names[2..], ["c2*c2", "c2*c3", "c3*c3"]);
    }

    #[test]
    fn expanded_width_counts() {
        let p = 6;
        let mut text = String::new();
        for i in 0..100 {
            let row: Vec<String> = (0..=p).map(|j| format!("{}", (i * 7 + j * 3) % 11)).collect();
            text += &(row.join(",") + "\n");
        }
        let opts = IngestOptions {
            y_col: 1,
            log_cols: (2..=p + 1).collect(),
            interact_cols: (2..=p + 1).collect(),
        };
        let ds = parse_csv(&text, &opts).unwrap();
        assert_eq!(ds.x.ncols(), p + p * (p + 1) / 2);
        assert_eq!(ds.x.nrows(), 100);
    }

    #[test]
    fn log_transform_applies_to_listed_columns() {
        let opts = IngestOptions {
            y_col: 1,
            log_cols: vec![1, 3],
            interact_cols: vec![],
        };
        let ds = parse_csv("0,5,1\n", &opts).unwrap();
        assert_eq!(ds.y[0], 0.0);
        assert_eq!(ds.x[(0, 0)], 5.0);
        assert_eq!(ds.x[(0, 1)], 2f64.ln());
        let bad = parse_csv("0,5\n0,-2\n", &IngestOptions { log_cols: vec![2], ..Default::default() }).unwrap_err();
        assert!(matches!(bad, Error::Parse { line: 2, col: Some(2), .. }));
    }

    #[test]
    fn errors_carry_positions() {
        let ragged = parse_csv("1,2\n3,4,5\n", &IngestOptions::default()).unwrap_err();
        assert!(matches!(ragged, Error::Parse { line: 2, col: None, .. }), "{ragged:?}");
        let cell = parse_csv("x,y\n1,2\n3,abc\n", &IngestOptions::default()).unwrap_err();
        assert!(matches!(cell, Error::Parse { line: 3, col: Some(2), .. }), "{cell:?}");
        assert!(matches!(parse_csv("", &IngestOptions::default()), Err(Error::Data(_))));
        assert!(matches!(parse_csv("a,b\n", &IngestOptions::default()), Err(Error::Data(_))));
        assert!(parse_csv("1,2\n", &IngestOptions { y_col: 3, ..Default::default() }).is_err());
        assert!(parse_csv("1,2\n", &IngestOptions { interact_cols: vec![1], ..Default::default() }).is_err());
    }

    #[test]
    fn reads_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "y,a\n1.5,2\n").unwrap();
        let ds = ingest_csv(&path, &IngestOptions::default()).unwrap();
        assert_eq!(ds.y[0], 1.5);
        assert!(ingest_csv(&dir.path().join("missing.csv"), &IngestOptions::default()).is_err());
    }
}
