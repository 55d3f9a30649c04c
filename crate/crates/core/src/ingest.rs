//! Loading raw monitoring exports into a validated [`TimeSeriesTable`].
//!
//! The input is delimiter-separated text with a header row. The first
//! column holds ISO-8601 timestamps, every other column one variable.
//! Empty cells and the configured sentinel strings are treated as missing.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{source_name}: malformed input near line {line}: {message}")]
    Csv {
        source_name: String,
        line: u64,
        message: String,
    },
    #[error("{source_name}: line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        column: usize,
        message: String,
    },
    #[error("{source_name}: schema error: {message}")]
    Schema { source_name: String, message: String },
    #[error("{source_name}: line {line}: timestamp {timestamp} is not after the previous row ({previous})")]
    Order {
        source_name: String,
        line: u64,
        timestamp: Timestamp,
        previous: Timestamp,
    },
    #[error("table invariant violated: {0}")]
    Invalid(String),
}

/// Facility unit a variable belongs to, used to color rankings in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum UnitTag {
    #[serde(rename = "Preprocessing-Thickening")]
    PreprocessingThickening,
    Biological,
    Drained,
    Digestion,
    PumpingArrival,
    #[default]
    Other,
}

impl UnitTag {
    pub const ALL: [UnitTag; 6] = [
        UnitTag::PreprocessingThickening,
        UnitTag::Biological,
        UnitTag::Drained,
        UnitTag::Digestion,
        UnitTag::PumpingArrival,
        UnitTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UnitTag::PreprocessingThickening => "Preprocessing-Thickening",
            UnitTag::Biological => "Biological",
            UnitTag::Drained => "Drained",
            UnitTag::Digestion => "Digestion",
            UnitTag::PumpingArrival => "PumpingArrival",
            UnitTag::Other => "Other",
        }
    }
}

impl fmt::Display for UnitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnitTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        UnitTag::ALL
            .into_iter()
            .find(|t| t.as_str().replace('-', "").to_ascii_lowercase() == key)
            .ok_or_else(|| format!("unknown unit tag {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableMeta {
    pub name: String,
    #[serde(default)]
    pub unit_tag: UnitTag,
}

impl VariableMeta {
    pub fn new(name: impl Into<String>, unit_tag: UnitTag) -> Self {
        VariableMeta {
            name: name.into(),
            unit_tag,
        }
    }
}

/// Variable name to facility unit mapping.
///
/// Entries ending in `*` are prefix rules; exact names win over prefixes
/// and longer prefixes win over shorter ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitMap {
    exact: BTreeMap<String, UnitTag>,
    prefixes: Vec<(String, UnitTag)>,
}

impl UnitMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tag: UnitTag) {
        self.exact.insert(name.into(), tag);
    }

    pub fn insert_prefix(&mut self, prefix: impl Into<String>, tag: UnitTag) {
        self.prefixes.push((prefix.into(), tag));
        self.prefixes
            .sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
    }

    pub fn lookup(&self, name: &str) -> UnitTag {
        if let Some(t) = self.exact.get(name) {
            return *t;
        }
        self.prefixes
            .iter()
            .find(|(p, _)| name.starts_with(p.as_str()))
            .map_or(UnitTag::Other, |(_, t)| *t)
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty() && self.prefixes.is_empty()
    }

    pub fn load(path: &Path) -> Result<UnitMap, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read(file, &path.display().to_string())
    }

    /// Reads `name,unit` lines. A leading header row `variable,unit` is skipped.
    pub fn read<R: Read>(reader: R, source_name: &str) -> Result<UnitMap, IngestError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut map = UnitMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(source_name, &e))?;
            let line = rec.position().map_or(i as u64 + 1, |p| p.line());
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            if rec.len() != 2 {
                return Err(IngestError::Parse {
                    source_name: source_name.to_string(),
                    line,
                    column: rec.len(),
                    message: "expected two columns: variable, unit".into(),
                });
            }
            if i == 0 && rec[1].eq_ignore_ascii_case("unit") {
                continue;
            }
            let tag: UnitTag = rec[1].parse().map_err(|message| IngestError::Parse {
                source_name: source_name.to_string(),
                line,
                column: 2,
                message,
            })?;
            match rec[0].strip_suffix('*') {
                Some(prefix) => map.insert_prefix(prefix, tag),
                None => map.insert(&rec[0], tag),
            }
        }
        Ok(map)
    }

    /// Writes the map in the format [`UnitMap::read`] accepts.
    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "variable,unit")?;
        for (name, tag) in &self.exact {
            writeln!(w, "{name},{tag}")?;
        }
        for (prefix, tag) in &self.prefixes {
            writeln!(w, "{prefix}*,{tag}")?;
        }
        Ok(())
    }
}

/// One variable's samples. Missing cells hold `NaN` in `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl Column {
    pub fn observed(values: Vec<f64>) -> Self {
        let missing = vec![false; values.len()];
        Column { values, missing }
    }

    /// Builds a column from optional cells, `None` meaning missing.
    pub fn from_options(cells: &[Option<f64>]) -> Self {
        Column {
            values: cells.iter().map(|c| c.unwrap_or(f64::NAN)).collect(),
            missing: cells.iter().map(Option::is_none).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        (!self.missing[i]).then_some(self.values[i])
    }

    /// True when every observed value is equal (or nothing is observed).
    pub fn is_constant(&self) -> bool {
        let mut seen = None;
        for (v, &m) in self.values.iter().zip(&self.missing) {
            if m {
                continue;
            }
            match seen {
                None => seen = Some(*v),
                Some(s) if s != *v => return false,
                Some(_) => {}
            }
        }
        true
    }
}

/// Timestamped samples of named variables, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    timestamps: Vec<Timestamp>,
    variables: Vec<VariableMeta>,
    columns: Vec<Column>,
}

impl TimeSeriesTable {
    pub fn new(
        timestamps: Vec<Timestamp>,
        variables: Vec<VariableMeta>,
        columns: Vec<Column>,
    ) -> Result<Self, IngestError> {
        if variables.len() != columns.len() {
            return Err(IngestError::Invalid(format!(
                "{} variables but {} columns",
                variables.len(),
                columns.len()
            )));
        }
        let mut names = HashSet::new();
        for v in &variables {
            if !names.insert(v.name.as_str()) {
                return Err(IngestError::Invalid(format!("duplicate variable {:?}", v.name)));
            }
        }
        for (v, c) in variables.iter().zip(&columns) {
            if c.values.len() != timestamps.len() || c.missing.len() != timestamps.len() {
                return Err(IngestError::Invalid(format!(
                    "column {:?} has {} values / {} mask entries for {} timestamps",
                    v.name,
                    c.values.len(),
                    c.missing.len(),
                    timestamps.len()
                )));
            }
        }
        if let Some(w) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(IngestError::Invalid(format!(
                "timestamps not strictly increasing at row {}",
                w + 1
            )));
        }
        Ok(TimeSeriesTable {
            timestamps,
            variables,
            columns,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn variables(&self) -> &[VariableMeta] {
        &self.variables
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.columns[col].get(row)
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.columns[col].missing[row]
    }

    pub fn total_missing(&self) -> usize {
        self.columns.iter().map(Column::missing_count).sum()
    }

    pub fn into_parts(self) -> (Vec<Timestamp>, Vec<VariableMeta>, Vec<Column>) {
        (self.timestamps, self.variables, self.columns)
    }

    /// Re-tags every variable from a unit map.
    pub fn apply_unit_map(&mut self, map: &UnitMap) {
        for v in &mut self.variables {
            v.unit_tag = map.lookup(&v.name);
        }
    }

    /// Keeps the named variables in the given order; unknown names are returned as an error list.
    pub fn select(&self, names: &[String]) -> Result<TimeSeriesTable, Vec<String>> {
        let mut idx = Vec::with_capacity(names.len());
        let mut unknown = Vec::new();
        for n in names {
            match self.variable_index(n) {
                Some(i) => idx.push(i),
                None => unknown.push(n.clone()),
            }
        }
        if !unknown.is_empty() {
            return Err(unknown);
        }
        Ok(TimeSeriesTable {
            timestamps: self.timestamps.clone(),
            variables: idx.iter().map(|&i| self.variables[i].clone()).collect(),
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
        })
    }

    /// Keeps the rows whose timestamps fall in `[start, end)`.
    pub fn slice_time(&self, start: Timestamp, end: Timestamp) -> TimeSeriesTable {
        let lo = self.timestamps.partition_point(|t| *t < start);
        let hi = self.timestamps.partition_point(|t| *t < end);
        TimeSeriesTable {
            timestamps: self.timestamps[lo..hi].to_vec(),
            variables: self.variables.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    values: c.values[lo..hi].to_vec(),
                    missing: c.missing[lo..hi].to_vec(),
                })
                .collect(),
        }
    }

    /// Appends the rows of `other`, which must have the same variables and start strictly later.
    pub fn concat(&self, other: &TimeSeriesTable) -> Result<TimeSeriesTable, IngestError> {
        let other = other.select(&self.names()).map_err(|missing| {
            IngestError::Invalid(format!("appended table lacks variables {missing:?}"))
        })?;
        let mut timestamps = self.timestamps.clone();
        timestamps.extend_from_slice(&other.timestamps);
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| Column {
                values: [a.values.as_slice(), b.values.as_slice()].concat(),
                missing: [a.missing.as_slice(), b.missing.as_slice()].concat(),
            })
            .collect();
        TimeSeriesTable::new(timestamps, self.variables.clone(), columns)
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub sentinels: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            sentinels: vec![String::new(), "NaN".into(), "NA".into()],
        }
    }
}

fn csv_error(source_name: &str, e: &csv::Error) -> IngestError {
    IngestError::Csv {
        source_name: source_name.to_string(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

/// Loads a table from `path`, tagging variables from an optional unit-map file.
pub fn load_table(path: &Path, unit_map_path: Option<&Path>) -> Result<TimeSeriesTable, IngestError> {
    let map = match unit_map_path {
        Some(p) => UnitMap::load(p)?,
        None => UnitMap::new(),
    };
    load_table_with(path, &LoadOptions::default(), &map)
}

pub fn load_table_with(
    path: &Path,
    opts: &LoadOptions,
    units: &UnitMap,
) -> Result<TimeSeriesTable, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_table(io::BufReader::new(file), opts, units, &path.display().to_string())
}

pub fn read_table<R: Read>(
    reader: R,
    opts: &LoadOptions,
    units: &UnitMap,
    source_name: &str,
) -> Result<TimeSeriesTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let schema = |message: String| IngestError::Schema {
        source_name: source_name.to_string(),
        message,
    };
    let headers = rdr.headers().map_err(|e| csv_error(source_name, &e))?.clone();
    if headers.len() < 2 {
        return Err(schema("expected a timestamp column and at least one variable".into()));
    }
    let mut seen = HashSet::new();
    let mut variables = Vec::with_capacity(headers.len() - 1);
    for (j, h) in headers.iter().enumerate().skip(1) {
        if h.is_empty() {
            return Err(schema(format!("column {} has an empty name", j + 1)));
        }
        if !seen.insert(h.to_string()) {
            return Err(schema(format!("duplicate variable name {h:?}")));
        }
        variables.push(VariableMeta::new(h, units.lookup(h)));
    }

    let m = variables.len();
    let mut timestamps: Vec<Timestamp> = Vec::new();
    let mut columns: Vec<Column> = (0..m)
        .map(|_| Column {
            values: Vec::new(),
            missing: Vec::new(),
        })
        .collect();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(source_name, &e)),
        }
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != m + 1 {
            return Err(IngestError::Parse {
                source_name: source_name.to_string(),
                line,
                column: rec.len(),
                message: format!("expected {} fields, found {}", m + 1, rec.len()),
            });
        }
        let ts = Timestamp::parse(&rec[0]).map_err(|e| IngestError::Parse {
            source_name: source_name.to_string(),
            line,
            column: 1,
            message: e.to_string(),
        })?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(IngestError::Order {
                    source_name: source_name.to_string(),
                    line,
                    timestamp: ts,
                    previous: prev,
                });
            }
        }
        timestamps.push(ts);
        for (j, col) in columns.iter_mut().enumerate() {
            let cell = &rec[j + 1];
            if opts.sentinels.iter().any(|s| s == cell) {
                col.values.push(f64::NAN);
                col.missing.push(true);
                continue;
            }
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                IngestError::Parse {
                    source_name: source_name.to_string(),
                    line,
                    column: j + 2,
                    message: format!("not a finite number: {cell:?}"),
                }
            })?;
            col.values.push(v);
            col.missing.push(false);
        }
    }
    TimeSeriesTable::new(timestamps, variables, columns)
}

/// Writes a table in the format [`read_table`] accepts; missing cells become empty fields.
pub fn write_table<W: Write>(table: &TimeSeriesTable, w: W) -> io::Result<()> {
    let mut w = io::BufWriter::new(w);
    write!(w, "timestamp")?;
    for v in table.variables() {
        write!(w, ",{}", v.name)?;
    }
    writeln!(w)?;
    for (i, t) in table.timestamps().iter().enumerate() {
        write!(w, "{t}")?;
        for c in table.columns() {
            match c.get(i) {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn save_table(table: &TimeSeriesTable, path: &Path) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_table(table, file).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingProfile {
    /// Missing fraction per variable, in table order.
    pub rates: Vec<(String, f64)>,
    pub mean_rate: f64,
    pub constant_count: usize,
}

pub fn missing_profile(table: &TimeSeriesTable) -> MissingProfile {
    let n = table.n_samples();
    let rates: Vec<(String, f64)> = table
        .variables()
        .iter()
        .zip(table.columns())
        .map(|(v, c)| {
            let rate = if n == 0 { 0.0 } else { c.missing_count() as f64 / n as f64 };
            (v.name.clone(), rate)
        })
        .collect();
    let mean_rate = if rates.is_empty() {
        0.0
    } else {
        rates.iter().map(|r| r.1).sum::<f64>() / rates.len() as f64
    };
    let constant_count = table
        .columns()
        .iter()
        .filter(|c| c.missing_count() < c.len() && c.is_constant())
        .count();
    MissingProfile {
        rates,
        mean_rate,
        constant_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<TimeSeriesTable, IngestError> {
        read_table(text.as_bytes(), &LoadOptions::default(), &UnitMap::new(), "mem")
    }

    const GOOD: &str = "timestamp,a,b\n\
        2022-08-01T00:00:00Z,1,2\n\
        2022-08-01T00:01:00Z,3,4\n\
        2022-08-01T00:02:00Z,5,6\n";

    #[test]
    fn loads_well_formed_file() {
        let t = read(GOOD).unwrap();
        assert_eq!((t.n_samples(), t.n_variables()), (3, 2));
        assert_eq!(t.total_missing(), 0);
        assert_eq!(t.value(2, 1), Some(6.0));
    }

    #[test]
    fn empty_and_sentinel_cells_are_missing() {
        let t = read("timestamp,a,b\n2022-08-01T00:00:00Z,,2\n2022-08-01T00:01:00Z,NA,NaN\n").unwrap();
        assert!(t.is_missing(0, 0));
        assert!(!t.is_missing(0, 1));
        assert!(t.is_missing(1, 0) && t.is_missing(1, 1));
        assert_eq!(t.value(0, 0), None);
    }

    #[test]
    fn shuffled_rows_name_first_offending_line() {
        let shuffled = "timestamp,a,b\n\
            2022-08-01T00:01:00Z,3,4\n\
            2022-08-01T00:00:00Z,1,2\n\
            2022-08-01T00:02:00Z,5,6\n";
        match read(shuffled) {
            Err(IngestError::Order { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected order error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_timestamp_is_order_error() {
        let dup = "timestamp,a\n2022-08-01T00:00:00Z,1\n2022-08-01T00:00:00Z,2\n";
        assert!(matches!(read(dup), Err(IngestError::Order { .. })));
    }

    #[test]
    fn malformed_timestamp_reports_line() {
        let bad = "timestamp,a\n2022-08-01T00:00:00Z,1\nnot-a-time,2\n";
        match read(bad) {
            Err(IngestError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 1)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(matches!(
            read("timestamp,a,a\n2022-08-01T00:00:00Z,1,2\n"),
            Err(IngestError::Schema { .. })
        ));
    }

    #[test]
    fn bad_number_reports_coordinates() {
        match read("timestamp,a,b\n2022-08-01T00:00:00Z,1,x\n") {
            Err(IngestError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unit_map_exact_and_prefix() {
        let text = "variable,unit\nBIO_*,Biological\nBIO_special,Digestion\nDIG*,digestion\n";
        let map = UnitMap::read(text.as_bytes(), "units").unwrap();
        assert_eq!(map.lookup("BIO_1"), UnitTag::Biological);
        assert_eq!(map.lookup("BIO_special"), UnitTag::Digestion);
        assert_eq!(map.lookup("DIG_3"), UnitTag::Digestion);
        assert_eq!(map.lookup("X"), UnitTag::Other);
        let mut out = Vec::new();
        map.write(&mut out).unwrap();
        assert_eq!(UnitMap::read(out.as_slice(), "again").unwrap(), map);
    }

    #[test]
    fn missing_rates() {
        let mut cells = vec![Some(1.0); 100];
        let a = Column::from_options(&cells);
        cells[5] = None;
        let b = Column::from_options(&cells);
        let ts = (0..100).map(|i| Timestamp(i * 60)).collect();
        let t = TimeSeriesTable::new(
            ts,
            vec![VariableMeta::new("a", UnitTag::Other), VariableMeta::new("b", UnitTag::Other)],
            vec![a, b],
        )
        .unwrap();
        let p = missing_profile(&t);
        assert_eq!(p.rates[0].1, 0.0);
        assert_eq!(p.rates[1].1, 0.01);
        assert_eq!(p.constant_count, 2);
        assert!((p.mean_rate - 0.005).abs() < 1e-15);
    }
}
