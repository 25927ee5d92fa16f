//! CSV ingestion and the real-data preprocessing pipeline.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;
use crate::synthgen::Dataset;

pub const DEFAULT_MISSING: [&str; 2] = ["?", ""];

/// Rectangular string table with unique column names.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    names: Vec<String>,
    cells: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(names: Vec<String>, cells: Vec<Vec<String>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {n:?}")));
            }
        }
        for (i, row) in cells.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::Parse {
                    row: i + 1,
                    msg: format!("{} fields, expected {}", row.len(), names.len()),
                });
            }
        }
        Ok(Self { names, cells })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &str {
        &self.cells[row][col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = &str> {
        self.cells.iter().map(move |r| r[col].as_str())
    }
}

pub fn is_missing(cell: &str, sentinels: &[String]) -> bool {
    sentinels.iter().any(|s| s == cell.trim())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Column names for header-less files; the first line is data when set.
    pub names: Option<Vec<String>>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            names: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    load_csv_with(path, &LoadOptions::default())
}

pub fn load_csv_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<RawTable> {
    read_csv(File::open(path)?, opts)
}

/// Parses CSV text; data rows are numbered from 1 in parse errors.
pub fn read_csv<R: Read>(reader: R, opts: &LoadOptions) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.names.is_none())
        .flexible(true)
        .from_reader(reader);
    let names: Vec<String> = match &opts.names {
        Some(n) => n.clone(),
        None => rdr.headers()?.iter().map(|s| s.trim().to_string()).collect(),
    };
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: i + 1,
            msg: e.to_string(),
        })?;
        if rec.len() != names.len() {
            return Err(Error::Parse {
                row: i + 1,
                msg: format!("{} fields, expected {}", rec.len(), names.len()),
            });
        }
        cells.push(rec.iter().map(|s| s.to_string()).collect());
    }
    RawTable::new(names, cells)
}

/// Reads one column name per line, skipping blanks.
pub fn read_names(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub target_column: String,
    pub drop_missing_columns: bool,
    pub dummy_encode: bool,
    pub standardize: bool,
    pub drop_columns: Vec<String>,
    /// Columns forced to be treated as categorical.
    pub categorical: Vec<String>,
    pub missing_sentinels: Vec<String>,
}

impl PreprocessOptions {
    pub fn new(target: &str) -> Self {
        Self {
            target_column: target.to_string(),
            drop_missing_columns: true,
            dummy_encode: true,
            standardize: true,
            drop_columns: Vec::new(),
            categorical: Vec::new(),
            missing_sentinels: DEFAULT_MISSING.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub target: String,
    /// Source name of each output predictor; dummy columns read `name=level`.
    pub columns: Vec<String>,
    pub dropped: Vec<DroppedColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub dataset: Dataset,
    pub columns: ColumnMap,
    pub warnings: Vec<String>,
}

fn parse_numeric(col: &[&str]) -> Option<Vec<f64>> {
    col.iter().map(|c| c.trim().parse::<f64>().ok()).collect()
}

/// `(mean, sample std)` with denominator `n − 1`.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn preprocess(table: &RawTable, opts: &PreprocessOptions) -> Result<Preprocessed> {
    let target_idx = table.column_index(&opts.target_column).ok_or_else(|| {
        Error::Schema(format!("target column {:?} not found", opts.target_column))
    })?;
    for name in opts.drop_columns.iter().chain(&opts.categorical) {
        if table.column_index(name).is_none() {
            return Err(Error::Schema(format!("unknown column {name:?}")));
        }
    }
    let n = table.n_rows();
    if n < 2 {
        return Err(Error::Data(format!("{n} rows; at least 2 are needed")));
    }
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();

    let target_cells: Vec<&str> = table.column(target_idx).collect();
    if target_cells.iter().any(|c| is_missing(c, &opts.missing_sentinels)) {
        return Err(Error::Data(format!(
            "target column {:?} has missing values",
            opts.target_column
        )));
    }
    let mut y = parse_numeric(&target_cells).ok_or_else(|| {
        Error::Data(format!("target column {:?} is not numeric", opts.target_column))
    })?;

    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (j, name) in table.names().iter().enumerate() {
        if j == target_idx {
            continue;
        }
        if opts.drop_columns.contains(name) {
            dropped.push(DroppedColumn {
                name: name.clone(),
                reason: "listed".into(),
            });
            continue;
        }
        let cells: Vec<&str> = table.column(j).collect();
        if cells.iter().any(|c| is_missing(c, &opts.missing_sentinels)) {
            if opts.drop_missing_columns {
                dropped.push(DroppedColumn {
                    name: name.clone(),
                    reason: "missing values".into(),
                });
                continue;
            }
            return Err(Error::Data(format!("column {name:?} has missing values")));
        }
        let numeric = if opts.categorical.contains(name) {
            None
        } else {
            parse_numeric(&cells)
        };
        match numeric {
            Some(v) => {
                names.push(name.clone());
                columns.push(v);
            }
            None if opts.dummy_encode => {
                let levels: BTreeSet<&str> = cells.iter().map(|c| c.trim()).collect();
                // the first level in sorted order is the reference
                for level in levels.iter().skip(1) {
                    names.push(format!("{name}={level}"));
                    columns.push(
                        cells
                            .iter()
                            .map(|c| if c.trim() == *level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                }
            }
            None => {
                return Err(Error::Data(format!(
                    "column {name:?} is categorical and dummy encoding is off"
                )))
            }
        }
    }

    if opts.standardize {
        let (my, sy) = mean_std(&y);
        if sy == 0.0 {
            return Err(Error::Data("target column is constant".into()));
        }
        for v in &mut y {
            *v = (*v - my) / sy;
        }
        let mut kept_names = Vec::new();
        let mut kept = Vec::new();
        for (name, mut col) in names.into_iter().zip(columns) {
            let (m, s) = mean_std(&col);
            if s == 0.0 {
                warnings.push(format!("dropped constant column {name:?}"));
                dropped.push(DroppedColumn {
                    name,
                    reason: "constant".into(),
                });
                continue;
            }
            for v in &mut col {
                *v = (*v - m) / s;
            }
            kept_names.push(name);
            kept.push(col);
        }
        names = kept_names;
        columns = kept;
    }

    let d = columns.len();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        data.extend(columns.iter().map(|c| c[i]));
    }
    Ok(Preprocessed {
        dataset: Dataset::new(Matrix::new(n, d, data)?, y)?,
        columns: ColumnMap {
            target: opts.target_column.clone(),
            columns: names,
            dropped,
        },
        warnings,
    })
}

/// Writes `y` first, then the predictors, with a header row.
pub fn write_dataset_csv<W: Write>(out: W, data: &Dataset, names: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["y".to_string()];
    match names {
        Some(n) if n.len() == data.d() => header.extend(n.iter().cloned()),
        Some(n) => {
            return Err(Error::Dimension(format!(
                "{} names for {} predictors",
                n.len(),
                data.d()
            )))
        }
        None => header.extend((0..data.d()).map(|j| format!("x{j}"))),
    }
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![data.y[i].to_string()];
        rec.extend(data.x.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset_csv(path: impl AsRef<Path>, data: &Dataset, names: Option<&[String]>) -> Result<()> {
    write_dataset_csv(File::create(path)?, data, names)
}

/// Reads a dataset written by [`write_dataset_csv`]; returns the predictor names.
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<(Dataset, Vec<String>)> {
    let table = read_csv(reader, &LoadOptions::default())?;
    if table.n_cols() < 1 {
        return Err(Error::Schema("dataset file has no columns".into()));
    }
    let n = table.n_rows();
    let d = table.n_cols() - 1;
    let mut y = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        for j in 0..=d {
            let v: f64 = table.cell(i, j).trim().parse().map_err(|_| Error::Parse {
                row: i + 1,
                msg: format!("non-numeric value {:?} in column {}", table.cell(i, j), j + 1),
            })?;
            if j == 0 {
                y.push(v);
            } else {
                data.push(v);
            }
        }
    }
    let names = table.names()[1..].to_vec();
    Ok((Dataset::new(Matrix::new(n, d, data)?, y)?, names))
}

pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<(Dataset, Vec<String>)> {
    read_dataset_csv(File::open(path)?)
}

pub fn save_column_map(path: impl AsRef<Path>, map: &ColumnMap) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(map)?)?;
    Ok(())
}
