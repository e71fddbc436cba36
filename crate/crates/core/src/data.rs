//! Columnar tabular data: CSV ingestion, missing-row exclusion, seeded
//! half splits and column quantiles.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

/// Code marking a missing categorical cell. Continuous cells use `NaN`.
pub const MISSING_CODE: u32 = u32::MAX;

const MISSING_TOKENS: &[&str] = &["", "NA", "N/A", "NaN", "nan", "?", "null"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    /// `NaN` marks a missing cell; every other value is finite.
    Continuous(Vec<f64>),
    /// Level list in first-appearance order; `MISSING_CODE` marks a missing cell.
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

/// Borrowed view of one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell<'a> {
    Number(f64),
    Level(&'a str),
    Missing,
}

/// Owned cell value, used for ad-hoc rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Level(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    name: String,
    data: ColumnData,
}

impl Column {
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        // Non-finite numbers collapse to the missing marker.
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v } else { f64::NAN })
            .collect();
        Ok(Self {
            name,
            data: ColumnData::Continuous(values),
        })
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>, codes: Vec<u32>) -> Result<Self> {
        let name = name.into();
        let mut seen = std::collections::HashSet::new();
        for l in &levels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidData(format!("column '{name}': duplicate level '{l}'")));
            }
        }
        if let Some(bad) = codes.iter().find(|&&c| c != MISSING_CODE && c as usize >= levels.len()) {
            return Err(Error::InvalidData(format!("column '{name}': code {bad} outside level list")));
        }
        Ok(Self {
            name,
            data: ColumnData::Categorical { levels, codes },
        })
    }

    /// Build a categorical column from labels; `None` is missing. Levels are
    /// recorded in first-appearance order.
    pub fn from_labels<S: AsRef<str>>(name: impl Into<String>, labels: &[Option<S>]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut lookup: HashMap<String, u32> = HashMap::new();
        let codes = labels
            .iter()
            .map(|l| match l {
                None => MISSING_CODE,
                Some(s) => {
                    let s = s.as_ref();
                    *lookup.entry(s.to_string()).or_insert_with(|| {
                        levels.push(s.to_string());
                        (levels.len() - 1) as u32
                    })
                }
            })
            .collect();
        Self {
            name: name.into(),
            data: ColumnData::Categorical { levels, codes },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Continuous(_) => ColumnKind::Continuous,
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Continuous(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Continuous(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_categorical(&self) -> Option<(&[String], &[u32])> {
        match &self.data {
            ColumnData::Categorical { levels, codes } => Some((levels, codes)),
            _ => None,
        }
    }

    pub fn levels(&self) -> &[String] {
        match &self.data {
            ColumnData::Categorical { levels, .. } => levels,
            ColumnData::Continuous(_) => &[],
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.data {
            ColumnData::Continuous(v) => v[row].is_nan(),
            ColumnData::Categorical { codes, .. } => codes[row] == MISSING_CODE,
        }
    }

    pub fn cell(&self, row: usize) -> Cell<'_> {
        match &self.data {
            ColumnData::Continuous(v) if v[row].is_nan() => Cell::Missing,
            ColumnData::Continuous(v) => Cell::Number(v[row]),
            ColumnData::Categorical { codes, .. } if codes[row] == MISSING_CODE => Cell::Missing,
            ColumnData::Categorical { levels, codes } => Cell::Level(&levels[codes[row] as usize]),
        }
    }

    pub fn select(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Continuous(v) => ColumnData::Continuous(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical { levels, codes } => ColumnData::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
        };
        Column {
            name: self.name.clone(),
            data,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Column-kind declarations used when reading CSV files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// Kind assigned to every column without an explicit entry.
    #[serde(default = "default_kind")]
    pub default_kind: ColumnKind,
    #[serde(default)]
    pub kinds: BTreeMap<String, ColumnKind>,
}

fn default_kind() -> ColumnKind {
    ColumnKind::Continuous
}

impl Default for ColumnKind {
    fn default() -> Self {
        ColumnKind::Continuous
    }
}

impl Schema {
    pub fn all_continuous() -> Self {
        Self::default()
    }

    pub fn with(mut self, column: impl Into<String>, kind: ColumnKind) -> Self {
        self.kinds.insert(column.into(), kind);
        self
    }

    pub fn kind_of(&self, column: &str) -> ColumnKind {
        self.kinds.get(column).copied().unwrap_or(self.default_kind)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    outcome: Option<usize>,
    task: Task,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Assemble a dataset. `outcome = None` yields a feature-only table.
    pub fn new(columns: Vec<Column>, outcome: Option<&str>, task: Task) -> Result<Self> {
        let n = columns.first().map(Column::len).unwrap_or(0);
        let mut index = HashMap::with_capacity(columns.len());
        for (i, c) in columns.iter().enumerate() {
            if c.len() != n {
                return Err(Error::InvalidData(format!(
                    "column '{}' has {} rows, expected {n}",
                    c.name,
                    c.len()
                )));
            }
            if index.insert(c.name.clone(), i).is_some() {
                return Err(Error::InvalidData(format!("duplicate column '{}'", c.name)));
            }
        }
        let outcome = match outcome {
            None => None,
            Some(name) => Some(*index.get(name).ok_or_else(|| Error::MissingOutcome(name.to_string()))?),
        };
        if let Some(o) = outcome {
            let col = &columns[o];
            match task {
                Task::BinaryClassification => {
                    if col.kind() != ColumnKind::Categorical || col.levels().len() != 2 {
                        return Err(Error::InvalidData(format!(
                            "binary outcome '{}' must be categorical with exactly 2 levels (has {})",
                            col.name,
                            col.levels().len()
                        )));
                    }
                }
                Task::Regression => {
                    if col.kind() != ColumnKind::Continuous {
                        return Err(Error::InvalidData(format!(
                            "regression outcome '{}' must be continuous",
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(Self {
            columns,
            outcome,
            task,
            index,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(Column::len).unwrap_or(0)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.index.get(name).map(|&i| &self.columns[i])
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn outcome_name(&self) -> Option<&str> {
        self.outcome.map(|i| self.columns[i].name.as_str())
    }

    pub fn outcome_column(&self) -> Option<&Column> {
        self.outcome.map(|i| &self.columns[i])
    }

    /// Feature columns: every column except the outcome, in file order.
    pub fn features(&self) -> impl Iterator<Item = &Column> + '_ {
        self.columns
            .iter()
            .enumerate()
            .filter(move |(i, _)| Some(*i) != self.outcome)
            .map(|(_, c)| c)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features().map(|c| c.name.clone()).collect()
    }

    /// Outcome as numbers: regression values, or 0/1 where the second level
    /// of the fixed level order is the positive class.
    pub fn outcome_values(&self) -> Result<Vec<f64>> {
        let col = self
            .outcome_column()
            .ok_or_else(|| Error::MissingOutcome("<none>".into()))?;
        match col.data() {
            ColumnData::Continuous(v) => Ok(v.clone()),
            ColumnData::Categorical { codes, .. } => Ok(codes
                .iter()
                .map(|&c| match c {
                    MISSING_CODE => f64::NAN,
                    1 => 1.0,
                    _ => 0.0,
                })
                .collect()),
        }
    }

    /// Level names of a binary outcome as (negative, positive).
    pub fn class_labels(&self) -> Option<(&str, &str)> {
        let col = self.outcome_column()?;
        match col.levels() {
            [neg, pos] => Some((neg.as_str(), pos.as_str())),
            _ => None,
        }
    }

    pub fn row(&self, row: usize) -> DatasetRow<'_> {
        DatasetRow { data: self, row }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            outcome: self.outcome,
            task: self.task,
            index: self.index.clone(),
        }
    }

    /// Remove the named columns. Removing the outcome leaves a feature-only table.
    pub fn drop_columns(&self, names: &[String]) -> Result<Dataset> {
        for n in names {
            if !self.index.contains_key(n) {
                return Err(Error::MissingColumn(n.clone()));
            }
        }
        let outcome = self.outcome_name().filter(|o| !names.iter().any(|n| n == o)).map(str::to_string);
        let columns = self
            .columns
            .iter()
            .filter(|c| !names.contains(&c.name))
            .cloned()
            .collect();
        Dataset::new(columns, outcome.as_deref(), self.task)
    }

    /// Replace (or add) the outcome column and switch task accordingly.
    pub fn with_outcome(&self, outcome: Column, task: Task) -> Result<Dataset> {
        let mut columns: Vec<Column> = self.features().cloned().collect();
        let name = outcome.name.clone();
        if columns.iter().any(|c| c.name == name) {
            return Err(Error::InvalidData(format!("outcome '{name}' collides with a feature")));
        }
        columns.push(outcome);
        Dataset::new(columns, Some(&name), task)
    }

    /// Feature-only copy of this dataset.
    pub fn features_only(&self) -> Dataset {
        let columns: Vec<Column> = self.features().cloned().collect();
        Dataset::new(columns, None, self.task).expect("subset of a valid dataset")
    }

    /// Remove every row with at least one missing cell.
    pub fn drop_missing(&self) -> Result<Dataset> {
        let keep: Vec<usize> = (0..self.n_rows())
            .filter(|&r| !self.columns.iter().any(|c| c.is_missing(r)))
            .collect();
        if keep.is_empty() {
            return Err(Error::Empty);
        }
        if keep.len() == self.n_rows() {
            return Ok(self.clone());
        }
        Ok(self.select_rows(&keep))
    }

    pub fn has_missing(&self) -> bool {
        (0..self.n_rows()).any(|r| self.columns.iter().any(|c| c.is_missing(r)))
    }

    /// Seeded split into halves of sizes ⌈n/2⌉ (train) and ⌊n/2⌋ (test).
    pub fn split_half(&self, seed: u64) -> Result<SplitPair> {
        let n = self.n_rows();
        if n < 4 {
            return Err(Error::TooFewRows { needed: 4, have: n });
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut seed::rng(seed));
        let n_train = n.div_ceil(2);
        let mut train_rows = perm[..n_train].to_vec();
        let mut test_rows = perm[n_train..].to_vec();
        train_rows.sort_unstable();
        test_rows.sort_unstable();
        Ok(SplitPair {
            train: self.select_rows(&train_rows),
            test: self.select_rows(&test_rows),
            train_rows,
            test_rows,
            seed,
        })
    }

    /// Read a CSV file with a header row.
    pub fn load_csv(path: impl AsRef<Path>, schema: &Schema, outcome: &str, task: Task) -> Result<Dataset> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, schema, Some(outcome), task)
    }

    /// Parse CSV from any reader. Unparseable cells become missing markers.
    /// A binary-classification outcome is always read as categorical.
    pub fn read_csv<R: Read>(reader: R, schema: &Schema, outcome: Option<&str>, task: Task) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        for declared in schema.kinds.keys() {
            if !header.contains(declared) {
                return Err(Error::MissingColumn(declared.clone()));
            }
        }
        if let Some(o) = outcome {
            if !header.iter().any(|h| h == o) {
                return Err(Error::MissingOutcome(o.to_string()));
            }
        }
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
        for record in rdr.records() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::InvalidData(format!(
                    "row {} has {} fields, header has {}",
                    raw[0].len() + 2,
                    record.len(),
                    header.len()
                )));
            }
            for (col, field) in raw.iter_mut().zip(record.iter()) {
                col.push(field.to_string());
            }
        }
        if raw.first().map_or(true, Vec::is_empty) {
            return Err(Error::Empty);
        }
        let columns = header
            .iter()
            .zip(raw)
            .map(|(name, cells)| {
                let kind = if Some(name.as_str()) == outcome {
                    match task {
                        Task::BinaryClassification => ColumnKind::Categorical,
                        Task::Regression => ColumnKind::Continuous,
                    }
                } else {
                    schema.kind_of(name)
                };
                parse_column(name, kind, &cells)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(columns, outcome, task)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_csv_writer(file)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        let mut buf = Vec::with_capacity(self.columns.len());
        for r in 0..self.n_rows() {
            buf.clear();
            for c in &self.columns {
                buf.push(match c.cell(r) {
                    Cell::Number(v) => format!("{v}"),
                    Cell::Level(l) => l.to_string(),
                    Cell::Missing => "NA".to_string(),
                });
            }
            w.write_record(&buf)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn parse_column(name: &str, kind: ColumnKind, cells: &[String]) -> Result<Column> {
    let is_missing = |s: &str| MISSING_TOKENS.contains(&s);
    match kind {
        ColumnKind::Continuous => Column::continuous(
            name,
            cells
                .iter()
                .map(|s| {
                    if is_missing(s) {
                        f64::NAN
                    } else {
                        s.parse::<f64>().unwrap_or(f64::NAN)
                    }
                })
                .collect(),
        ),
        ColumnKind::Categorical => {
            let labels: Vec<Option<&str>> = cells
                .iter()
                .map(|s| if is_missing(s) { None } else { Some(s.as_str()) })
                .collect();
            Ok(Column::from_labels(name, &labels))
        }
    }
}

#[derive(Clone, Debug)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub seed: u64,
}

/// Named-cell access for a single row.
pub trait RowValues {
    fn cell(&self, feature: &str) -> Option<Cell<'_>>;
}

#[derive(Clone, Copy, Debug)]
pub struct DatasetRow<'a> {
    data: &'a Dataset,
    row: usize,
}

impl RowValues for DatasetRow<'_> {
    fn cell(&self, feature: &str) -> Option<Cell<'_>> {
        self.data.column(feature).map(|c| c.cell(self.row))
    }
}

impl RowValues for HashMap<String, Value> {
    fn cell(&self, feature: &str) -> Option<Cell<'_>> {
        self.get(feature).map(value_cell)
    }
}

impl RowValues for BTreeMap<String, Value> {
    fn cell(&self, feature: &str) -> Option<Cell<'_>> {
        self.get(feature).map(value_cell)
    }
}

fn value_cell(v: &Value) -> Cell<'_> {
    match v {
        Value::Number(x) if x.is_finite() => Cell::Number(*x),
        Value::Number(_) => Cell::Missing,
        Value::Level(l) => Cell::Level(l),
    }
}

/// Linear-interpolation quantile between order statistics (the "type 7"
/// convention) over the non-missing values of a continuous column.
pub fn column_quantile(column: &Column, q: f64) -> Result<f64> {
    let values = column.as_continuous().ok_or_else(|| {
        Error::InvalidArgument(format!("quantile of categorical column '{}'", column.name()))
    })?;
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if sorted.is_empty() {
        return Err(Error::InvalidArgument(format!("column '{}' has no values", column.name())));
    }
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile {q} outside [0, 1]")));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}
