//! Tabular data: loading, semantic column types, and sample rows for prompts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("table `{0}` has no rows or no columns")]
    EmptyTable(String),
    #[error("column has no non-null values")]
    AllNull,
    #[error("table `{table}` has no column `{column}`")]
    UnknownColumn { table: String, column: String },
}

/// Semantic data type of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Categorical,
    Quantitative,
    Temporal,
}

impl DataType {
    pub fn letter(self) -> char {
        match self {
            DataType::Categorical => 'C',
            DataType::Quantitative => 'Q',
            DataType::Temporal => 'T',
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataType::Categorical => "categorical",
            DataType::Quantitative => "quantitative",
            DataType::Temporal => "temporal",
        };
        f.write_str(s)
    }
}

/// A cell is raw text; `None` is a null.
pub type Cell = Option<String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub dtype: DataType,
    /// Materialized (sorted, deduplicated) only for categorical columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distinct_values: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    JsonLines,
}

impl TableFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(TableFormat::Csv),
            "jsonl" | "ndjson" => Some(TableFormat::JsonLines),
            _ => None,
        }
    }
}

/// Thresholds for [`infer_column_type`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeInference {
    pub temporal_threshold: f64,
    pub numeric_threshold: f64,
    /// Treat bare four-digit integers between 1800 and 2100 as years.
    pub years_are_temporal: bool,
}

impl Default for TypeInference {
    fn default() -> Self {
        Self {
            temporal_threshold: 0.95,
            numeric_threshold: 0.95,
            years_are_temporal: true,
        }
    }
}

fn is_null(v: &str) -> bool {
    let t = v.trim();
    t.is_empty() || t.eq_ignore_ascii_case("null") || t.eq_ignore_ascii_case("na")
}

fn parses_as_date(v: &str, years: bool) -> bool {
    use chrono::{NaiveDate, NaiveDateTime};
    let t = v.trim();
    if years && t.len() == 4 && t.bytes().all(|b| b.is_ascii_digit()) {
        return t.parse::<u16>().is_ok_and(|y| (1800..=2100).contains(&y));
    }
    NaiveDate::parse_from_str(t, "%Y-%m-%d").is_ok()
        || NaiveDateTime::parse_from_str(t, "%Y-%m-%dT%H:%M:%S").is_ok()
        || NaiveDateTime::parse_from_str(t, "%Y-%m-%d %H:%M:%S").is_ok()
        || NaiveDate::parse_from_str(&format!("{t}-01"), "%Y-%m-%d").is_ok() && t.len() == 7
}

fn parses_as_number(v: &str) -> bool {
    let t = v.trim().replace(',', "");
    !t.is_empty() && t.parse::<f64>().map(|x| x.is_finite()).unwrap_or(false)
}

/// Infer a column's semantic type from its cell values. Nulls are ignored.
pub fn infer_column_type<S: AsRef<str>>(
    values: &[S],
    cfg: &TypeInference,
) -> Result<DataType, TableError> {
    let present: Vec<&str> = values
        .iter()
        .map(AsRef::as_ref)
        .filter(|v| !is_null(v))
        .collect();
    if present.is_empty() {
        return Err(TableError::AllNull);
    }
    let n = present.len() as f64;
    let dates = present
        .iter()
        .filter(|v| parses_as_date(v, cfg.years_are_temporal))
        .count() as f64;
    if dates / n >= cfg.temporal_threshold {
        return Ok(DataType::Temporal);
    }
    let nums = present.iter().filter(|v| parses_as_number(v)).count() as f64;
    if nums / n >= cfg.numeric_threshold {
        return Ok(DataType::Quantitative);
    }
    Ok(DataType::Categorical)
}

impl Table {
    /// Build a table from raw cells, inferring column types.
    pub fn from_rows(
        name: impl Into<String>,
        header: Vec<String>,
        rows: Vec<Vec<Cell>>,
        cfg: &TypeInference,
    ) -> Result<Table, TableError> {
        let name = name.into();
        if header.is_empty() || rows.is_empty() {
            return Err(TableError::EmptyTable(name));
        }
        let mut seen = BTreeSet::new();
        for h in &header {
            if !seen.insert(h.as_str()) {
                return Err(TableError::Parse(format!("duplicate column name `{h}`")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != header.len() {
                return Err(TableError::Parse(format!(
                    "row {} has {} cells, expected {}",
                    i + 1,
                    row.len(),
                    header.len()
                )));
            }
        }
        let mut columns = Vec::with_capacity(header.len());
        for (j, col) in header.into_iter().enumerate() {
            let values: Vec<&str> = rows.iter().filter_map(|r| r[j].as_deref()).collect();
            // an all-null column carries no type evidence; call it categorical
            let dtype = match infer_column_type(&values, cfg) {
                Ok(t) => t,
                Err(TableError::AllNull) => DataType::Categorical,
                Err(e) => return Err(e),
            };
            let distinct_values = (dtype == DataType::Categorical).then(|| {
                values
                    .iter()
                    .filter(|v| !is_null(v))
                    .map(|v| v.to_string())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect()
            });
            columns.push(Column {
                name: col,
                dtype,
                distinct_values,
            });
        }
        Ok(Table {
            name,
            columns,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Case-insensitive lookup, used when matching externally produced charts.
    pub fn column_ci(&self, name: &str) -> Option<&Column> {
        self.column(name)
            .or_else(|| self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name)))
    }

    pub fn dtype_of(&self, name: &str) -> Result<DataType, TableError> {
        self.column(name)
            .map(|c| c.dtype)
            .ok_or_else(|| TableError::UnknownColumn {
                table: self.name.clone(),
                column: name.to_string(),
            })
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// The first `min(n, rows)` rows.
    pub fn sample_rows(&self, n: usize) -> &[Vec<Cell>] {
        &self.rows[..n.min(self.rows.len())]
    }
}

pub fn sample_rows(table: &Table, n: usize) -> Vec<Vec<Cell>> {
    table.sample_rows(n).to_vec()
}

fn table_name_from_path(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("table")
        .to_string()
}

/// Load a table from CSV (header row required) or JSON-lines (one object per row).
pub fn load_table(path: &Path, format: TableFormat) -> Result<Table, TableError> {
    load_table_with(path, format, &TypeInference::default())
}

pub fn load_table_with(
    path: &Path,
    format: TableFormat,
    cfg: &TypeInference,
) -> Result<Table, TableError> {
    let io_err = |source| TableError::Io {
        path: path.display().to_string(),
        source,
    };
    let name = table_name_from_path(path);
    let (header, rows) = match format {
        TableFormat::Csv => {
            let text = fs::read_to_string(path).map_err(io_err)?;
            read_csv(&text)?
        }
        TableFormat::JsonLines => {
            let file = fs::File::open(path).map_err(io_err)?;
            read_jsonl(BufReader::new(file))?
        }
    };
    Table::from_rows(name, header, rows, cfg)
}

/// Parse a table held in memory.
pub fn parse_table(
    name: impl Into<String>,
    text: &str,
    format: TableFormat,
    cfg: &TypeInference,
) -> Result<Table, TableError> {
    let (header, rows) = match format {
        TableFormat::Csv => read_csv(text)?,
        TableFormat::JsonLines => read_jsonl(text.as_bytes())?,
    };
    Table::from_rows(name, header, rows, cfg)
}

fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<Cell>>), TableError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| TableError::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| TableError::Parse(e.to_string()))?;
        rows.push(
            rec.iter()
                .map(|v| if v.is_empty() { None } else { Some(v.to_string()) })
                .collect(),
        );
    }
    Ok((header, rows))
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<(Vec<String>, Vec<Vec<Cell>>), TableError> {
    let mut header: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TableError::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&line)
            .map_err(|e| TableError::Parse(format!("line {}: {e}", lineno + 1)))?;
        if header.is_empty() {
            header = obj.keys().cloned().collect();
        }
        if obj.len() != header.len() || header.iter().any(|h| !obj.contains_key(h)) {
            return Err(TableError::Parse(format!(
                "line {}: keys do not match the first row",
                lineno + 1
            )));
        }
        let row = header
            .iter()
            .map(|h| match &obj[h] {
                serde_json::Value::Null => None,
                serde_json::Value::String(s) => Some(s.clone()),
                other => Some(other.to_string()),
            })
            .collect();
        rows.push(row);
    }
    Ok((header, rows))
}

/// Write a table in the given format; [`load_table`] reads it back unchanged.
pub fn write_table(table: &Table, path: &Path, format: TableFormat) -> Result<(), TableError> {
    let io_err = |source| TableError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(table.column_names())
                .map_err(|e| TableError::Parse(e.to_string()))?;
            for row in &table.rows {
                w.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))
                    .map_err(|e| TableError::Parse(e.to_string()))?;
            }
            w.flush().map_err(io_err)?;
        }
        TableFormat::JsonLines => {
            for row in &table.rows {
                let obj: serde_json::Map<String, serde_json::Value> = table
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| {
                        let val = match v {
                            Some(s) => serde_json::Value::String(s.clone()),
                            None => serde_json::Value::Null,
                        };
                        (c.name.clone(), val)
                    })
                    .collect();
                writeln!(out, "{}", serde_json::Value::Object(obj)).map_err(io_err)?;
            }
        }
    }
    fs::write(path, out).map_err(io_err)
}

/// Tables in a directory, one file per table, keyed by file stem.
#[derive(Debug, Default, Clone)]
pub struct TableStore {
    tables: BTreeMap<String, Table>,
}

impl TableStore {
    pub fn load_dir(dir: &Path) -> Result<Self, TableError> {
        let mut tables = BTreeMap::new();
        let entries = fs::read_dir(dir).map_err(|source| TableError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            if let Some(fmt) = TableFormat::from_path(&path) {
                let t = load_table(&path, fmt)?;
                tables.insert(t.name.clone(), t);
            }
        }
        Ok(Self { tables })
    }

    pub fn insert(&mut self, table: Table) {
        self.tables.insert(table.name.clone(), table);
    }

    pub fn get(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}
