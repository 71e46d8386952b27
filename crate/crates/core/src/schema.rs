//! Feature schemas, states and tabular dataset ingestion.
//!
//! Numeric values are stored as `f64`. Ordinal and categorical values are
//! stored as the index of the level in the declared list, so ordinal deltas
//! are index distances.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Interval { lo: f64, hi: f64 },
    Levels(Vec<String>),
}

/// A single feature value.
///
/// Equality, hashing and ordering are total: `Num` compares by IEEE total
/// order (negative zero is normalized away at construction) and every `Num`
/// sorts before every `Level`.
#[derive(Debug, Clone, Copy)]
pub enum Value {
    Num(f64),
    Level(u32),
}

impl Value {
    pub fn num(x: f64) -> Self {
        Value::Num(if x == 0.0 { 0.0 } else { x })
    }

    /// Position on the feature's numeric axis (level index for ordinals).
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Num(x) => x,
            Value::Level(i) => f64::from(i),
        }
    }

    pub fn level(self) -> Option<u32> {
        match self {
            Value::Level(i) => Some(i),
            Value::Num(_) => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Num(x) => {
                0u8.hash(state);
                x.to_bits().hash(state);
            }
            Value::Level(i) => {
                1u8.hash(state);
                i.hash(state);
            }
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.total_cmp(b),
            (Value::Level(a), Value::Level(b)) => a.cmp(b),
            (Value::Num(_), Value::Level(_)) => Ordering::Less,
            (Value::Level(_), Value::Num(_)) => Ordering::Greater,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub name: String,
    pub kind: FeatureKind,
    pub domain: Domain,
    pub actionable: bool,
    pub weight: f64,
    /// Declared normalization range; `None` falls back to
    /// [`FeatureSchema::norm_range`]'s default.
    pub declared_norm_range: Option<f64>,
}

impl FeatureSchema {
    pub fn numeric(name: &str, lo: f64, hi: f64) -> Self {
        FeatureSchema {
            name: name.to_string(),
            kind: FeatureKind::Numeric,
            domain: Domain::Interval { lo, hi },
            actionable: true,
            weight: 1.0,
            declared_norm_range: None,
        }
    }

    pub fn ordinal<S: AsRef<str>>(name: &str, levels: &[S]) -> Self {
        Self::with_levels(name, FeatureKind::Ordinal, levels)
    }

    pub fn categorical<S: AsRef<str>>(name: &str, levels: &[S]) -> Self {
        Self::with_levels(name, FeatureKind::Categorical, levels)
    }

    fn with_levels<S: AsRef<str>>(name: &str, kind: FeatureKind, levels: &[S]) -> Self {
        FeatureSchema {
            name: name.to_string(),
            kind,
            domain: Domain::Levels(levels.iter().map(|l| l.as_ref().to_string()).collect()),
            actionable: true,
            weight: 1.0,
            declared_norm_range: None,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_norm_range(mut self, range: f64) -> Self {
        self.declared_norm_range = Some(range);
        self
    }

    pub fn immutable(mut self) -> Self {
        self.actionable = false;
        self
    }

    /// Divisor applied to raw numeric/ordinal differences. Defaults to the
    /// domain width for numeric features and 1 (index distance) for ordinals.
    pub fn norm_range(&self) -> f64 {
        if let Some(r) = self.declared_norm_range {
            return r;
        }
        match &self.domain {
            Domain::Interval { lo, hi } => hi - lo,
            Domain::Levels(_) => 1.0,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.domain {
            Domain::Levels(l) => Some(l),
            Domain::Interval { .. } => None,
        }
    }

    pub fn is_ordered(&self) -> bool {
        self.kind != FeatureKind::Categorical
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| {
            Err(Error::InvalidSchema(format!(
                "feature `{}`: {m}",
                self.name
            )))
        };
        if self.name.is_empty() {
            return Err(Error::InvalidSchema("feature with empty name".into()));
        }
        match (&self.kind, &self.domain) {
            (FeatureKind::Numeric, Domain::Interval { lo, hi }) => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad(format!(
                        "numeric domain needs finite lo < hi, got [{lo}, {hi}]"
                    ));
                }
            }
            (FeatureKind::Numeric, Domain::Levels(_)) => {
                return bad("numeric feature needs an interval domain".into())
            }
            (_, Domain::Interval { .. }) => {
                return bad("categorical/ordinal feature needs a list of levels".into())
            }
            (_, Domain::Levels(levels)) => {
                if levels.is_empty() {
                    return bad("empty level list".into());
                }
                let unique: BTreeSet<&String> = levels.iter().collect();
                if unique.len() != levels.len() {
                    return bad("duplicate levels".into());
                }
            }
        }
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return bad(format!(
                "weight must be finite and nonnegative, got {}",
                self.weight
            ));
        }
        if let Some(r) = self.declared_norm_range {
            if !(r.is_finite() && r > 0.0) {
                return bad(format!("norm_range must be positive, got {r}"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: Value) -> bool {
        match (&self.domain, v) {
            (Domain::Interval { lo, hi }, Value::Num(x)) => x >= *lo && x <= *hi,
            (Domain::Levels(levels), Value::Level(i)) => (i as usize) < levels.len(),
            _ => false,
        }
    }

    /// Parses a textual cell. Returns `None` when the text is not a member
    /// of the domain.
    pub fn parse_value(&self, text: &str) -> Option<Value> {
        let v = match &self.domain {
            Domain::Interval { .. } => Value::num(text.trim().parse::<f64>().ok()?),
            Domain::Levels(levels) => Value::Level(levels.iter().position(|l| l == text)? as u32),
        };
        self.contains(v).then_some(v)
    }

    pub fn format_value(&self, v: Value) -> String {
        match (&self.domain, v) {
            (Domain::Levels(levels), Value::Level(i)) => levels
                .get(i as usize)
                .cloned()
                .unwrap_or_else(|| format!("#{i}")),
            (_, v) => format!("{}", v.as_f64()),
        }
    }

    pub fn value_to_json(&self, v: Value) -> serde_json::Value {
        match v {
            Value::Num(x) => serde_json::json!(x),
            Value::Level(_) => serde_json::Value::String(self.format_value(v)),
        }
    }

    pub fn value_from_json(&self, j: &serde_json::Value) -> Option<Value> {
        match (&self.domain, j) {
            (Domain::Interval { .. }, serde_json::Value::Number(n)) => {
                let v = Value::num(n.as_f64()?);
                self.contains(v).then_some(v)
            }
            (Domain::Levels(_), serde_json::Value::String(s)) => self.parse_value(s),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawFeature {
    name: String,
    kind: FeatureKind,
    domain: Vec<serde_json::Value>,
    #[serde(default = "default_true")]
    actionable: bool,
    #[serde(default = "default_weight")]
    weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm_range: Option<f64>,
}

fn default_true() -> bool {
    true
}

fn default_weight() -> f64 {
    1.0
}

impl TryFrom<RawFeature> for FeatureSchema {
    type Error = Error;

    fn try_from(raw: RawFeature) -> Result<Self> {
        let domain = match raw.kind {
            FeatureKind::Numeric => {
                let nums: Option<Vec<f64>> = raw.domain.iter().map(|v| v.as_f64()).collect();
                match nums.as_deref() {
                    Some([lo, hi]) => Domain::Interval { lo: *lo, hi: *hi },
                    _ => {
                        return Err(Error::InvalidSchema(format!(
                            "feature `{}`: numeric domain must be [lo, hi]",
                            raw.name
                        )))
                    }
                }
            }
            _ => {
                let levels: Option<Vec<String>> = raw
                    .domain
                    .iter()
                    .map(|v| v.as_str().map(str::to_string))
                    .collect();
                Domain::Levels(levels.ok_or_else(|| {
                    Error::InvalidSchema(format!("feature `{}`: levels must be strings", raw.name))
                })?)
            }
        };
        let f = FeatureSchema {
            name: raw.name,
            kind: raw.kind,
            domain,
            actionable: raw.actionable,
            weight: raw.weight,
            declared_norm_range: raw.norm_range,
        };
        f.validate()?;
        Ok(f)
    }
}

impl From<&FeatureSchema> for RawFeature {
    fn from(f: &FeatureSchema) -> Self {
        let domain = match &f.domain {
            Domain::Interval { lo, hi } => vec![serde_json::json!(lo), serde_json::json!(hi)],
            Domain::Levels(l) => l.iter().map(|s| serde_json::json!(s)).collect(),
        };
        RawFeature {
            name: f.name.clone(),
            kind: f.kind,
            domain,
            actionable: f.actionable,
            weight: f.weight,
            norm_range: f.declared_norm_range,
        }
    }
}

/// Ordered list of features. Every state is interpreted against one schema.
#[derive(Debug, Clone)]
pub struct Schema {
    features: Vec<FeatureSchema>,
    index: HashMap<String, usize>,
}

impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
    }
}

impl Schema {
    pub fn new(features: Vec<FeatureSchema>) -> Result<Self> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            f.validate()?;
            if index.insert(f.name.clone(), i).is_some() {
                return Err(Error::InvalidSchema(format!(
                    "duplicate feature `{}`",
                    f.name
                )));
            }
        }
        if features.is_empty() {
            return Err(Error::InvalidSchema("schema has no features".into()));
        }
        Ok(Schema { features, index })
    }

    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self> {
        let raw: Vec<RawFeature> = serde_json::from_reader(reader)?;
        Self::new(
            raw.into_iter()
                .map(FeatureSchema::try_from)
                .collect::<Result<_>>()?,
        )
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<RawFeature> = self.features.iter().map(RawFeature::from).collect();
        serde_json::to_string_pretty(&raw).expect("schema serializes")
    }

    pub fn features(&self) -> &[FeatureSchema] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, i: usize) -> &FeatureSchema {
        &self.features[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    /// Schema weight vector, in feature order.
    pub fn weights(&self) -> Weights {
        Weights(self.features.iter().map(|f| f.weight).collect())
    }

    pub fn state(&self, values: Vec<Value>) -> Result<State> {
        if values.len() != self.len() {
            return Err(Error::SchemaMismatch(format!(
                "state has {} values, schema has {} features",
                values.len(),
                self.len()
            )));
        }
        for (i, (f, v)) in self.features.iter().zip(&values).enumerate() {
            if !f.contains(*v) {
                return Err(Error::DomainViolation {
                    row: 0,
                    column: self.features[i].name.clone(),
                    value: format!("{v:?}"),
                });
            }
        }
        Ok(State { values })
    }

    /// Builds a state from textual cells, e.g. `["no_debt", "60000", "620"]`.
    pub fn parse_state<S: AsRef<str>>(&self, cells: &[S]) -> Result<State> {
        self.parse_row(cells, 0)
    }

    fn parse_row<S: AsRef<str>>(&self, cells: &[S], row: usize) -> Result<State> {
        if cells.len() != self.len() {
            return Err(Error::SchemaMismatch(format!(
                "row {row} has {} cells, schema has {} features",
                cells.len(),
                self.len()
            )));
        }
        let mut values = Vec::with_capacity(cells.len());
        for (f, cell) in self.features.iter().zip(cells) {
            let cell = cell.as_ref();
            if cell.trim().is_empty() {
                return Err(Error::MissingValue {
                    row,
                    column: f.name.clone(),
                });
            }
            values.push(f.parse_value(cell).ok_or_else(|| Error::DomainViolation {
                row,
                column: f.name.clone(),
                value: cell.to_string(),
            })?);
        }
        Ok(State { values })
    }

    pub fn format_state(&self, s: &State) -> Vec<String> {
        self.features
            .iter()
            .zip(s.values())
            .map(|(f, v)| f.format_value(*v))
            .collect()
    }

    /// `(v1, v2, ...)` rendering used in diagnostics.
    pub fn render(&self, s: &State) -> String {
        format!("({})", self.format_state(s).join(", "))
    }

    pub fn state_to_json(&self, s: &State) -> serde_json::Value {
        serde_json::Value::Array(
            self.features
                .iter()
                .zip(s.values())
                .map(|(f, v)| f.value_to_json(*v))
                .collect(),
        )
    }

    pub fn check(&self, s: &State) -> Result<()> {
        if s.len() != self.len() {
            return Err(Error::SchemaMismatch(format!(
                "state has {} values, schema has {} features",
                s.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Per-feature nonnegative weights in schema order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Weights(pub Vec<f64>);

impl Weights {
    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} weights for {} features",
                self.len(),
                schema.len()
            )));
        }
        for (f, w) in schema.features().iter().zip(&self.0) {
            if w.is_nan() || *w < 0.0 {
                return Err(Error::NegativeWeight {
                    feature: f.name.clone(),
                    weight: *w,
                });
            }
        }
        Ok(())
    }
}

/// One total assignment of values to the schema's features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    values: Vec<Value>,
}

impl State {
    /// Builds a state without domain checks. Callers guarantee membership.
    pub(crate) fn from_values_unchecked(values: Vec<Value>) -> Self {
        State { values }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn get(&self, i: usize) -> Value {
        self.values[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn with(&self, i: usize, v: Value) -> State {
        let mut values = self.values.clone();
        values[i] = v;
        State { values }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match v {
                Value::Num(x) => write!(f, "{x}")?,
                Value::Level(l) => write!(f, "#{l}")?,
            }
        }
        write!(f, ")")
    }
}

/// Indices of features whose values differ between `a` and `b`.
pub fn changed_indices(a: &State, b: &State) -> Vec<usize> {
    a.values
        .iter()
        .zip(&b.values)
        .enumerate()
        .filter_map(|(i, (x, y))| (x != y).then_some(i))
        .collect()
}

/// Names of the features on which `a` and `b` differ.
pub fn state_diff(schema: &Schema, a: &State, b: &State) -> Result<BTreeSet<String>> {
    schema.check(a)?;
    schema.check(b)?;
    Ok(changed_indices(a, b)
        .into_iter()
        .map(|i| schema.feature(i).name.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<State>,
    labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<State>, labels: Option<Vec<String>>) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            schema.check(row)?;
            for (f, v) in schema.features().iter().zip(row.values()) {
                if !f.contains(*v) {
                    return Err(Error::DomainViolation {
                        row: r,
                        column: f.name.clone(),
                        value: format!("{v:?}"),
                    });
                }
            }
        }
        if let Some(l) = &labels {
            if l.len() != rows.len() {
                return Err(Error::SchemaMismatch(format!(
                    "{} labels for {} rows",
                    l.len(),
                    rows.len()
                )));
            }
        }
        Ok(Dataset {
            schema,
            rows,
            labels,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[State] {
        &self.rows
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_labels(self, labels: Vec<String>) -> Result<Self> {
        Dataset::new(self.schema, self.rows, Some(labels))
    }

    /// Reads CSV rows against `schema`. When `label_column` is given that
    /// column is split off as the label vector; all other header names must
    /// equal the schema's feature names, in order.
    pub fn read_csv<R: Read>(
        reader: R,
        mut schema: Schema,
        label_column: Option<&str>,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let label_pos = match label_column {
            Some(name) => Some(header.iter().position(|h| h == name).ok_or_else(|| {
                Error::SchemaMismatch(format!("label column `{name}` not in header"))
            })?),
            None => None,
        };
        let feature_cols: Vec<&String> = header
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_pos)
            .map(|(_, h)| h)
            .collect();
        let expected: Vec<&str> = schema.names().collect();
        if feature_cols.len() != expected.len()
            || feature_cols.iter().zip(&expected).any(|(a, b)| a != b)
        {
            return Err(Error::SchemaMismatch(format!(
                "header {:?} does not match schema features {:?}",
                feature_cols, expected
            )));
        }

        let mut rows = Vec::new();
        let mut labels = label_pos.map(|_| Vec::new());
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::SchemaMismatch(format!(
                    "row {r} has {} fields, header has {}",
                    record.len(),
                    header.len()
                )));
            }
            let cells: Vec<&str> = record
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != label_pos)
                .map(|(_, c)| c)
                .collect();
            rows.push(schema.parse_row(&cells, r)?);
            if let (Some(pos), Some(l)) = (label_pos, labels.as_mut()) {
                l.push(record[pos].to_string());
            }
        }

        // Undeclared numeric normalization falls back to the observed range.
        for i in 0..schema.len() {
            let f = &schema.features[i];
            if f.kind != FeatureKind::Numeric || f.declared_norm_range.is_some() {
                continue;
            }
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for row in &rows {
                let x = row.get(i).as_f64();
                lo = lo.min(x);
                hi = hi.max(x);
            }
            if hi > lo {
                schema.features[i].declared_norm_range = Some(hi - lo);
            }
        }

        Dataset::new(schema, rows, labels)
    }

    /// Writes the dataset as CSV; labels, when present, go in a trailing
    /// `label` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.names().collect();
        if self.labels.is_some() {
            header.push("label");
        }
        w.write_record(&header)?;
        for (r, row) in self.rows.iter().enumerate() {
            let mut cells = self.schema.format_state(row);
            if let Some(l) = &self.labels {
                cells.push(l[r].clone());
            }
            w.write_record(&cells)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parses a schema document and a CSV table into a validated dataset.
pub fn load_dataset<C: Read, S: Read>(csv_source: C, schema_source: S) -> Result<Dataset> {
    let schema = Schema::from_json_reader(schema_source)?;
    Dataset::read_csv(csv_source, schema, None)
}
