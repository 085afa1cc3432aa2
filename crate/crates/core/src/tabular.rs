//! Mixed-type tabular data: schema, CSV ingestion, min-max + one-hot encoding,
//! and the squared Euclidean distance every attack and metric is computed with.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Ordered category labels. Only meaningful for categorical features.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Continuous,
            categories: Vec::new(),
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Schema("feature with empty name".into()));
        }
        match self.kind {
            FeatureKind::Categorical => {
                if self.categories.is_empty() {
                    return Err(Error::Schema(format!(
                        "categorical feature {:?} declares no categories",
                        self.name
                    )));
                }
                let unique: HashSet<&str> = self.categories.iter().map(String::as_str).collect();
                if unique.len() != self.categories.len() {
                    return Err(Error::Schema(format!(
                        "categorical feature {:?} has duplicate categories",
                        self.name
                    )));
                }
            }
            FeatureKind::Continuous => {
                if !self.categories.is_empty() {
                    return Err(Error::Schema(format!(
                        "continuous feature {:?} must not declare categories",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Predictive features plus the target attribute.
///
/// Schema files are TOML:
///
/// ```toml
/// [[feature]]
/// name = "age"
/// kind = "continuous"
///
/// [[feature]]
/// name = "workclass"
/// kind = "categorical"
/// categories = ["private", "public", "self"]
///
/// [target]
/// name = "income"
/// kind = "categorical"
/// categories = ["low", "high"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(rename = "feature")]
    pub features: Vec<FeatureSpec>,
    pub target: FeatureSpec,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, target: FeatureSpec) -> Result<Self> {
        let schema = Schema { features, target };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema =
            toml::from_str(text).map_err(|e| Error::Schema(format!("malformed schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes to toml")
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema declares no features".into()));
        }
        let mut seen = HashSet::new();
        for spec in &self.features {
            spec.validate()?;
            if !seen.insert(spec.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {:?}", spec.name)));
            }
        }
        self.target.validate()?;
        if seen.contains(self.target.name.as_str()) {
            return Err(Error::Schema(format!(
                "target {:?} is also listed as a feature",
                self.target.name
            )));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Features followed by the target, in row order.
    pub fn columns(&self) -> impl Iterator<Item = &FeatureSpec> {
        self.features.iter().chain(std::iter::once(&self.target))
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns().map(|c| c.name.clone()).collect()
    }

    pub fn column(&self, idx: usize) -> &FeatureSpec {
        if idx == self.features.len() {
            &self.target
        } else {
            &self.features[idx]
        }
    }
}

/// A single raw value. Categorical cells hold the position of their label in
/// the feature's category list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    Cat(usize),
}

impl Cell {
    pub fn as_num(&self) -> Option<f64> {
        match *self {
            Cell::Num(v) => Some(v),
            Cell::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<usize> {
        match *self {
            Cell::Cat(c) => Some(c),
            Cell::Num(_) => None,
        }
    }
}

pub type Row = Vec<Cell>;

/// Validated rows under a schema. Each row holds the feature values followed
/// by the target value.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Arc<Schema>,
    rows: Vec<Row>,
}

impl Table {
    pub fn new(schema: Arc<Schema>, rows: Vec<Row>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            check_row(&schema, i, row)?;
        }
        Ok(Table { schema, rows })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Cell] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn features(&self, i: usize) -> &[Cell] {
        &self.rows[i][..self.schema.n_features()]
    }

    pub fn target(&self, i: usize) -> Cell {
        self.rows[i][self.schema.n_features()]
    }

    /// Raw values of column `col` (feature index, or `n_features` for the target).
    pub fn column(&self, col: usize) -> impl Iterator<Item = Cell> + '_ {
        self.rows.iter().map(move |r| r[col])
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.schema.column_names().join(",");
        out.push('\n');
        for row in &self.rows {
            for (j, cell) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format_cell(self.schema.column(j), *cell));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Renders a raw cell; continuous values use the shortest representation that
/// parses back to the same `f64`.
pub fn format_cell(spec: &FeatureSpec, cell: Cell) -> String {
    match cell {
        Cell::Num(v) => {
            let mut s = String::new();
            write!(s, "{v}").unwrap();
            s
        }
        Cell::Cat(c) => spec.categories[c].clone(),
    }
}

fn check_row(schema: &Schema, i: usize, row: &[Cell]) -> Result<()> {
    let expected = schema.n_features() + 1;
    if row.len() != expected {
        return Err(Error::Value {
            row: i,
            message: format!("expected {expected} values, found {}", row.len()),
        });
    }
    for (spec, cell) in schema.columns().zip(row) {
        match (spec.kind, cell) {
            (FeatureKind::Continuous, Cell::Num(v)) if v.is_finite() => {}
            (FeatureKind::Categorical, Cell::Cat(c)) if *c < spec.categories.len() => {}
            _ => {
                return Err(Error::Value {
                    row: i,
                    message: format!("invalid value {cell:?} for column {:?}", spec.name),
                })
            }
        }
    }
    Ok(())
}

fn parse_cell(spec: &FeatureSpec, raw: &str, row: usize) -> Result<Cell> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(Error::Value {
            row,
            message: format!("missing value in column {:?}", spec.name),
        });
    }
    match spec.kind {
        FeatureKind::Continuous => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Cell::Num(v)),
            _ => Err(Error::Parse {
                row,
                column: spec.name.clone(),
                value: raw.to_string(),
            }),
        },
        FeatureKind::Categorical => {
            spec.category_index(raw)
                .map(Cell::Cat)
                .ok_or_else(|| Error::Value {
                    row,
                    message: format!("unknown category {raw:?} in column {:?}", spec.name),
                })
        }
    }
}

/// Parses CSV text (header row required, any column order) into a table.
/// Row indices in errors are zero-based data rows.
pub fn parse_table(text: &str, schema: Arc<Schema>, origin: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| Error::Csv {
        path: origin.to_path_buf(),
        message: e.to_string(),
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    let positions: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();

    let mut order = Vec::with_capacity(schema.n_features() + 1);
    for spec in schema.columns() {
        match positions.get(spec.name.as_str()) {
            Some(&p) => order.push(p),
            None => {
                return Err(Error::Schema(format!(
                    "{}: missing column {:?}",
                    origin.display(),
                    spec.name
                )))
            }
        }
    }
    if header.len() > order.len() {
        log::warn!(
            "{}: ignoring {} column(s) not in the schema",
            origin.display(),
            header.len() - order.len()
        );
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let mut row = Vec::with_capacity(order.len());
        for (spec, &p) in schema.columns().zip(&order) {
            let raw = record.get(p).ok_or_else(|| Error::Value {
                row: i,
                message: format!("missing column {:?}", spec.name),
            })?;
            row.push(parse_cell(spec, raw, i)?);
        }
        rows.push(row);
    }
    Ok(Table { schema, rows })
}

pub fn load_table(path: impl AsRef<Path>, schema: Arc<Schema>) -> Result<Table> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, schema, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "kebab-case")]
pub enum FeatureTransform {
    MinMax { lo: f64, hi: f64 },
    OneHot { arity: usize },
}

impl FeatureTransform {
    pub fn width(&self) -> usize {
        match *self {
            FeatureTransform::MinMax { .. } => 1,
            FeatureTransform::OneHot { arity } => arity,
        }
    }

    pub fn scale(&self, v: f64) -> f64 {
        match *self {
            FeatureTransform::MinMax { lo, hi } => {
                if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            }
            FeatureTransform::OneHot { .. } => panic!("scale() on a one-hot transform"),
        }
    }

    pub fn unscale(&self, u: f64) -> f64 {
        match *self {
            FeatureTransform::MinMax { lo, hi } => {
                if hi > lo {
                    lo + u.clamp(0.0, 1.0) * (hi - lo)
                } else {
                    lo
                }
            }
            FeatureTransform::OneHot { .. } => panic!("unscale() on a one-hot transform"),
        }
    }
}

/// Fitted min-max / one-hot transforms for the predictive features.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    schema: Arc<Schema>,
    transforms: Vec<FeatureTransform>,
    offsets: Vec<usize>,
    width: usize,
}

impl Encoder {
    pub fn fit(table: &Table) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Empty("cannot fit an encoder on an empty table".into()));
        }
        let schema = table.schema().clone();
        let transforms = schema
            .features
            .iter()
            .enumerate()
            .map(|(j, spec)| match spec.kind {
                FeatureKind::Continuous => {
                    let (lo, hi) = table
                        .column(j)
                        .filter_map(|c| c.as_num())
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                            (lo.min(v), hi.max(v))
                        });
                    FeatureTransform::MinMax { lo, hi }
                }
                FeatureKind::Categorical => FeatureTransform::OneHot {
                    arity: spec.categories.len(),
                },
            })
            .collect();
        Ok(Self::from_transforms(schema, transforms))
    }

    pub fn from_transforms(schema: Arc<Schema>, transforms: Vec<FeatureTransform>) -> Self {
        assert_eq!(schema.n_features(), transforms.len());
        let mut offsets = Vec::with_capacity(transforms.len());
        let mut width = 0;
        for t in &transforms {
            offsets.push(width);
            width += t.width();
        }
        Encoder {
            schema,
            transforms,
            offsets,
            width,
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn transforms(&self) -> &[FeatureTransform] {
        &self.transforms
    }

    /// Start column of each feature in the encoded vector.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn check_schema(&self, schema: &Arc<Schema>) -> Result<()> {
        if Arc::ptr_eq(schema, &self.schema) || **schema == *self.schema {
            Ok(())
        } else {
            Err(Error::Schema("table schema does not match the encoder".into()))
        }
    }

    /// Encodes the feature part of a raw row into `out`.
    pub fn encode_into(&self, features: &[Cell], out: &mut [f64]) -> Result<()> {
        if features.len() < self.transforms.len() {
            return Err(Error::Width {
                expected: self.transforms.len(),
                actual: features.len(),
            });
        }
        if out.len() != self.width {
            return Err(Error::Width {
                expected: self.width,
                actual: out.len(),
            });
        }
        for ((t, &off), cell) in self.transforms.iter().zip(&self.offsets).zip(features) {
            match (t, cell) {
                (FeatureTransform::MinMax { .. }, Cell::Num(v)) => out[off] = t.scale(*v),
                (FeatureTransform::OneHot { arity }, Cell::Cat(c)) if c < arity => {
                    out[off..off + arity].fill(0.0);
                    out[off + c] = 1.0;
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "value {cell:?} does not fit transform {t:?}"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn encode_row(&self, features: &[Cell]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width];
        self.encode_into(features, &mut out)?;
        Ok(out)
    }

    pub fn encode(&self, table: &Table) -> Result<EncodedMatrix> {
        self.check_schema(table.schema())?;
        let mut data = vec![0.0; table.len() * self.width];
        if self.width > 0 {
            for (i, chunk) in data.chunks_mut(self.width).enumerate() {
                self.encode_into(table.features(i), chunk)?;
            }
        }
        let targets = (0..table.len()).map(|i| table.target(i)).collect();
        Ok(EncodedMatrix {
            width: self.width,
            data,
            targets,
        })
    }

    /// Inverse transform: continuous entries are un-scaled, each one-hot group
    /// decodes to its argmax (first position on ties).
    pub fn decode(&self, vector: &[f64]) -> Result<Row> {
        if vector.len() != self.width {
            return Err(Error::Width {
                expected: self.width,
                actual: vector.len(),
            });
        }
        Ok(self
            .transforms
            .iter()
            .zip(&self.offsets)
            .map(|(t, &off)| match *t {
                FeatureTransform::MinMax { .. } => Cell::Num(t.unscale(vector[off])),
                FeatureTransform::OneHot { arity } => {
                    let group = &vector[off..off + arity];
                    let best = group
                        .iter()
                        .enumerate()
                        .fold(0, |best, (i, v)| if *v > group[best] { i } else { best });
                    Cell::Cat(best)
                }
            })
            .collect())
    }
}

/// Dense row-major encoded features; the raw target column rides along.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    width: usize,
    data: Vec<f64>,
    targets: Vec<Cell>,
}

impl EncodedMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, targets: Vec<Cell>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if targets.len() != rows.len() {
            return Err(Error::Width {
                expected: rows.len(),
                actual: targets.len(),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * width);
        for r in &rows {
            if r.len() != width {
                return Err(Error::Width {
                    expected: width,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(EncodedMatrix {
            width,
            data,
            targets,
        })
    }

    /// Rows without a meaningful target, e.g. for pure geometry.
    pub fn from_points(rows: Vec<Vec<f64>>) -> Result<Self> {
        let targets = vec![Cell::Num(0.0); rows.len()];
        Self::from_rows(rows, targets)
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn targets(&self) -> &[Cell] {
        &self.targets
    }
}

/// Squared Euclidean distance between two encoded rows.
pub fn sq_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Width {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(sq_distance_unchecked(a, b))
}

#[inline]
pub(crate) fn sq_distance_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
