//! Tabular datasets: schema, CSV ingestion, split-predicate enumeration,
//! partitioning, and targeting predicates over (features, label) pairs.
//!
//! Datasets are ordered multisets — duplicate rows are meaningful, and row
//! order is stable so enumeration and reporting stay deterministic. Numeric
//! cells are parsed as exact rationals; binary floating point never touches
//! a certification decision.

use crate::error::{Error, Result};
use crate::interval::Rat;
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use serde::Deserialize;
use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::sync::Arc;

/// A cell value: exact rational for numeric features, interned string for
/// categorical ones.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Num(Rat),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<&Rat> {
        match self {
            Value::Num(r) => Some(r),
            Value::Cat(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(r) => write!(f, "{}", render_rat(r)),
            Value::Cat(s) => write!(f, "{}", s),
        }
    }
}

/// Render a rational as a finite decimal when its denominator allows it,
/// otherwise as `numer/denom`.
pub fn render_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        return r.numer().to_string();
    }
    // finite decimal iff denom = 2^a * 5^b
    let mut d = r.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut a = 0u32;
    let mut b = 0u32;
    while (&d % &two).is_zero() {
        d /= &two;
        a += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        b += 1;
    }
    if d.is_one() {
        let digits = a.max(b);
        crate::interval::to_decimal(r, digits)
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parse a decimal string (optional sign, optional fraction part) into an
/// exact rational. Rejects anything else.
pub fn parse_decimal(s: &str) -> Option<Rat> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let joined = format!("{}{}", int_part, frac_part);
    let numer: BigInt = if joined.is_empty() {
        BigInt::zero()
    } else {
        joined.parse().ok()?
    };
    let denom = BigInt::from(10u32).pow(frac_part.len() as u32);
    Some(Rat::new(numer * BigInt::from(sign), denom))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    /// Optional declared finite domain (used by universes and validation).
    pub domain: Option<Vec<Value>>,
}

#[derive(Clone, Debug)]
pub struct FeatureSchema {
    pub features: Vec<Feature>,
    pub label_name: String,
    /// Number of classes; labels range over `0..label_arity`.
    pub label_arity: usize,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>, label_name: &str, label_arity: usize) -> Result<FeatureSchema> {
        if label_arity < 2 {
            return Err(Error::Schema(format!("label arity must be >= 2, got {}", label_arity)));
        }
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f.name.clone()) {
                return Err(Error::Schema(format!("duplicate feature name '{}'", f.name)));
            }
            if let Some(dom) = &f.domain {
                if dom.is_empty() {
                    return Err(Error::Schema(format!("feature '{}' declares an empty domain", f.name)));
                }
            }
        }
        if seen.contains(label_name) {
            return Err(Error::Schema(format!("label column '{}' collides with a feature", label_name)));
        }
        Ok(FeatureSchema {
            features,
            label_name: label_name.to_string(),
            label_arity,
        })
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn parse_cell(&self, feature: usize, raw: &str) -> Option<Value> {
        match self.features[feature].kind {
            FeatureKind::Numeric => parse_decimal(raw).map(Value::Num),
            FeatureKind::Categorical => Some(Value::Cat(raw.trim().to_string())),
        }
    }

    /// Parse the JSON schema format used by the CLI:
    /// `{"features":[{"name","kind","domain"?}], "label":{"name","arity"}}`.
    pub fn from_json(text: &str) -> Result<FeatureSchema> {
        #[derive(Deserialize)]
        struct RawFeature {
            name: String,
            kind: FeatureKind,
            #[serde(default)]
            domain: Option<Vec<serde_json::Value>>,
        }
        #[derive(Deserialize)]
        struct RawLabel {
            name: String,
            arity: usize,
        }
        #[derive(Deserialize)]
        struct RawSchema {
            features: Vec<RawFeature>,
            label: RawLabel,
        }
        let raw: RawSchema =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("bad schema JSON: {}", e)))?;
        let features = raw
            .features
            .into_iter()
            .map(|f| {
                let domain = match f.domain {
                    None => None,
                    Some(vals) => {
                        let mut out = Vec::new();
                        for v in vals {
                            let s = match &v {
                                serde_json::Value::String(s) => s.clone(),
                                other => other.to_string(),
                            };
                            let val = match f.kind {
                                FeatureKind::Numeric => Value::Num(parse_decimal(&s).ok_or_else(|| {
                                    Error::Schema(format!("non-numeric domain value '{}' for '{}'", s, f.name))
                                })?),
                                FeatureKind::Categorical => Value::Cat(s),
                            };
                            out.push(val);
                        }
                        Some(out)
                    }
                };
                Ok(Feature {
                    name: f.name,
                    kind: f.kind,
                    domain,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureSchema::new(features, &raw.label.name, raw.label.arity)
    }
}

/// One training example: feature vector plus label in `0..label_arity`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Row {
    pub x: Vec<Value>,
    pub y: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub schema: Arc<FeatureSchema>,
    pub rows: Vec<Row>,
}

impl Dataset {
    pub fn new(schema: Arc<FeatureSchema>, rows: Vec<Row>) -> Dataset {
        Dataset { schema, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.schema.label_arity];
        for r in &self.rows {
            counts[r.y] += 1;
        }
        counts
    }

    /// Canonical multiset form: rows sorted. Two datasets are the same
    /// multiset iff their canonical forms are equal.
    pub fn canonical_rows(&self) -> Vec<Row> {
        let mut rows = self.rows.clone();
        rows.sort();
        rows
    }
}

/// Load a CSV with a header row into a dataset. Column order in the file is
/// free; the schema names pick the columns out.
pub fn load_dataset<R: Read>(source: R, schema: Arc<FeatureSchema>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read CSV header: {}", e)))?
        .clone();
    let col_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{}'", name)))
    };
    let feature_cols: Vec<usize> = schema
        .features
        .iter()
        .map(|f| col_of(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let label_col = col_of(&schema.label_name)?;

    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data {
            row: idx + 1,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        let mut x = Vec::with_capacity(schema.features.len());
        for (j, &col) in feature_cols.iter().enumerate() {
            let raw = record.get(col).ok_or_else(|| Error::Data {
                row: idx + 1,
                column: schema.features[j].name.clone(),
                message: "missing cell".into(),
            })?;
            let v = schema.parse_cell(j, raw).ok_or_else(|| Error::Data {
                row: idx + 1,
                column: schema.features[j].name.clone(),
                message: format!("unparseable cell '{}'", raw),
            })?;
            x.push(v);
        }
        let raw_label = record.get(label_col).ok_or_else(|| Error::Data {
            row: idx + 1,
            column: schema.label_name.clone(),
            message: "missing cell".into(),
        })?;
        let y: usize = raw_label.parse().map_err(|_| Error::Data {
            row: idx + 1,
            column: schema.label_name.clone(),
            message: format!("unparseable label '{}'", raw_label),
        })?;
        if y >= schema.label_arity {
            return Err(Error::Data {
                row: idx + 1,
                column: schema.label_name.clone(),
                message: format!("label out of range: {} (arity {})", y, schema.label_arity),
            });
        }
        rows.push(Row { x, y });
    }
    Ok(Dataset::new(schema, rows))
}

/// A candidate split: numeric threshold test or categorical membership test.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Test {
    /// `x[feature] <= t`
    Le(Rat),
    /// `x[feature] == v` (singleton membership)
    Eq(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    pub feature: usize,
    pub test: Test,
}

impl Predicate {
    pub fn eval(&self, x: &[Value]) -> bool {
        match (&self.test, &x[self.feature]) {
            (Test::Le(t), Value::Num(v)) => v <= t,
            (Test::Eq(s), Value::Cat(v)) => v == s,
            _ => false,
        }
    }

    pub fn render(&self, schema: &FeatureSchema) -> String {
        let name = &schema.features[self.feature].name;
        match &self.test {
            Test::Le(t) => format!("{}<={}", name, render_rat(t)),
            Test::Eq(v) => format!("{}={}", name, v),
        }
    }
}

/// Enumerate the canonical split-predicate list for a dataset.
///
/// Numeric feature: one `<= v` test per observed value except the maximum
/// (any threshold inside a gap induces the same partition; the lower value
/// is the canonical pick). Categorical feature: one singleton test per
/// observed value. Predicates with an empty side are dropped, and predicates
/// inducing identical bipartitions are deduplicated keeping the first in
/// (feature index, threshold/value) order.
pub fn enumerate_predicates(t: &Dataset) -> Result<Vec<Predicate>> {
    if t.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut candidates = Vec::new();
    for (j, f) in t.schema.features.iter().enumerate() {
        match f.kind {
            FeatureKind::Numeric => {
                let mut vals: BTreeSet<Rat> = BTreeSet::new();
                for r in &t.rows {
                    if let Value::Num(v) = &r.x[j] {
                        vals.insert(v.clone());
                    }
                }
                let n = vals.len();
                for (k, v) in vals.into_iter().enumerate() {
                    if k + 1 < n {
                        candidates.push(Predicate {
                            feature: j,
                            test: Test::Le(v),
                        });
                    }
                }
            }
            FeatureKind::Categorical => {
                let mut vals: BTreeSet<String> = BTreeSet::new();
                for r in &t.rows {
                    if let Value::Cat(v) = &r.x[j] {
                        vals.insert(v.clone());
                    }
                }
                for v in vals {
                    candidates.push(Predicate {
                        feature: j,
                        test: Test::Eq(v),
                    });
                }
            }
        }
    }
    // Drop predicates with an empty side; they cannot partition this node.
    // Predicates inducing identical bipartitions are deliberately all kept:
    // they tie in cost for the concrete learner (the first in canonical
    // order wins either way), but a perturbed dataset can tell them apart,
    // so collapsing them here would hide splits from interval analysis.
    let mut out = Vec::new();
    for p in candidates {
        let yes = t.rows.iter().filter(|r| p.eval(&r.x)).count();
        if yes == 0 || yes == t.rows.len() {
            continue;
        }
        out.push(p);
    }
    Ok(out)
}

/// Split into (rows satisfying the predicate, rows falsifying it), order
/// preserved on both sides.
pub fn partition(t: &Dataset, phi: &Predicate) -> (Dataset, Dataset) {
    let mut yes = Vec::new();
    let mut no = Vec::new();
    for r in &t.rows {
        if phi.eval(&r.x) {
            yes.push(r.clone());
        } else {
            no.push(r.clone());
        }
    }
    (
        Dataset::new(t.schema.clone(), yes),
        Dataset::new(t.schema.clone(), no),
    )
}

/// One atom of a targeting predicate over (x, y).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetAtom {
    FeatureEq(usize, Value),
    FeatureNe(usize, Value),
    FeatureLe(usize, Rat),
    FeatureGt(usize, Rat),
    LabelIn(BTreeSet<usize>),
}

impl TargetAtom {
    pub fn eval(&self, x: &[Value], y: usize) -> bool {
        match self {
            TargetAtom::FeatureEq(j, v) => &x[*j] == v,
            TargetAtom::FeatureNe(j, v) => &x[*j] != v,
            TargetAtom::FeatureLe(j, t) => matches!(&x[*j], Value::Num(v) if v <= t),
            TargetAtom::FeatureGt(j, t) => matches!(&x[*j], Value::Num(v) if v > t),
            TargetAtom::LabelIn(s) => s.contains(&y),
        }
    }

    pub fn is_label_atom(&self) -> bool {
        matches!(self, TargetAtom::LabelIn(_))
    }
}

/// Conjunction of atoms; the empty conjunction is `true`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TargetPredicate {
    pub atoms: Vec<TargetAtom>,
}

impl TargetPredicate {
    pub fn always_true() -> TargetPredicate {
        TargetPredicate { atoms: Vec::new() }
    }

    pub fn is_trivially_true(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn eval(&self, x: &[Value], y: usize) -> bool {
        self.atoms.iter().all(|a| a.eval(x, y))
    }

    pub fn has_label_atom(&self) -> bool {
        self.atoms.iter().any(|a| a.is_label_atom())
    }

    /// The set of labels this conjunction can accept, or `None` for "all".
    pub fn label_set(&self) -> Option<&BTreeSet<usize>> {
        self.atoms.iter().find_map(|a| match a {
            TargetAtom::LabelIn(s) => Some(s),
            _ => None,
        })
    }

    pub fn render(&self, schema: &FeatureSchema) -> String {
        if self.atoms.is_empty() {
            return "true".to_string();
        }
        self.atoms
            .iter()
            .map(|a| match a {
                TargetAtom::FeatureEq(j, v) => format!("{}={}", schema.features[*j].name, v),
                TargetAtom::FeatureNe(j, v) => format!("{}!={}", schema.features[*j].name, v),
                TargetAtom::FeatureLe(j, t) => format!("{}<={}", schema.features[*j].name, render_rat(t)),
                TargetAtom::FeatureGt(j, t) => format!("{}>{}", schema.features[*j].name, render_rat(t)),
                TargetAtom::LabelIn(s) => {
                    if s.len() == 1 {
                        format!("label={}", s.iter().next().unwrap())
                    } else {
                        let items: Vec<String> = s.iter().map(|v| v.to_string()).collect();
                        format!("label in {{{}}}", items.join(","))
                    }
                }
            })
            .collect::<Vec<_>>()
            .join(" and ")
    }
}

/// True iff every atom holds on (x, y).
pub fn eval_target(g: &TargetPredicate, x: &[Value], y: usize) -> bool {
    g.eval(x, y)
}

/// Per-feature observed value sets, used to derive finite universes and to
/// build point queries.
pub fn observed_values(t: &Dataset) -> Vec<Vec<Value>> {
    let mut out = Vec::with_capacity(t.schema.features.len());
    for j in 0..t.schema.features.len() {
        let mut vals: BTreeSet<Value> = BTreeSet::new();
        for r in &t.rows {
            vals.insert(r.x[j].clone());
        }
        out.push(vals.into_iter().collect());
    }
    out
}

/// Map a rational to f64 for display contexts only. Never used in decisions.
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

/// The nine-row loan fixture used throughout the tests: race and score
/// features, reject/accept labels. Scores {0,1,2,3,8} are rejected, scores
/// {5,6,7,9} accepted; the two Black applicants have scores 1 and 8.
pub fn loan_fixture() -> Dataset {
    let schema = Arc::new(
        FeatureSchema::new(
            vec![
                Feature {
                    name: "race".into(),
                    kind: FeatureKind::Categorical,
                    domain: Some(vec![Value::Cat("White".into()), Value::Cat("Black".into())]),
                },
                Feature {
                    name: "score".into(),
                    kind: FeatureKind::Numeric,
                    domain: None,
                },
            ],
            "label",
            2,
        )
        .unwrap(),
    );
    let rows = [
        ("White", 0, 0),
        ("Black", 1, 0),
        ("White", 2, 0),
        ("White", 3, 0),
        ("White", 5, 1),
        ("White", 6, 1),
        ("White", 7, 1),
        ("Black", 8, 0),
        ("White", 9, 1),
    ]
    .iter()
    .map(|&(race, score, y)| Row {
        x: vec![
            Value::Cat(race.to_string()),
            Value::Num(Rat::from_integer(BigInt::from(score))),
        ],
        y,
    })
    .collect();
    Dataset::new(schema, rows)
}
