//! The programmable bias-model language.
//!
//! A bias model is a list of basic components — MISS (up to `m` rows were
//! dropped before we saw the data), FLIP (up to `l` labels may be wrong),
//! FAKE (up to `f` rows may be fabricated) — each optionally restricted to
//! rows matching a target predicate. Normalization merges same-kind
//! components (budgets summed, targets disjoined) and fixes the canonical
//! application order MISS, FLIP, FAKE, which generates the largest bias set
//! among all orderings.

use crate::dataset::{eval_target, Dataset, FeatureKind, FeatureSchema, Predicate, TargetAtom, TargetPredicate, Test, Value};
use crate::error::{Error, Result};
use crate::interval::Rat;
use num_traits::ToPrimitive;
use std::collections::BTreeSet;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BiasKind {
    Miss,
    Flip,
    Fake,
}

impl BiasKind {
    pub fn keyword(self) -> &'static str {
        match self {
            BiasKind::Miss => "miss",
            BiasKind::Flip => "flip",
            BiasKind::Fake => "fake",
        }
    }

    pub fn param(self) -> char {
        match self {
            BiasKind::Miss => 'm',
            BiasKind::Flip => 'l',
            BiasKind::Fake => 'f',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiasComponent {
    pub kind: BiasKind,
    pub budget: usize,
    pub target: TargetPredicate,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BiasModel {
    pub components: Vec<BiasComponent>,
}

impl BiasModel {
    pub fn empty() -> BiasModel {
        BiasModel { components: Vec::new() }
    }

    pub fn render(&self, schema: &FeatureSchema) -> String {
        if self.components.is_empty() {
            return "none".to_string();
        }
        self.components
            .iter()
            .map(|c| {
                if c.target.is_trivially_true() {
                    format!("{}({}={})", c.kind.keyword(), c.kind.param(), c.budget)
                } else {
                    format!(
                        "{}({}={}, where {})",
                        c.kind.keyword(),
                        c.kind.param(),
                        c.budget,
                        c.target.render(schema)
                    )
                }
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Disjunction of conjunctive target predicates. Arises only from merging
/// same-kind components; single components keep a one-term disjunction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSet {
    pub terms: Vec<TargetPredicate>,
}

impl TargetSet {
    pub fn single(g: TargetPredicate) -> TargetSet {
        TargetSet { terms: vec![g] }
    }

    pub fn always_true() -> TargetSet {
        TargetSet::single(TargetPredicate::always_true())
    }

    pub fn eval(&self, x: &[Value], y: usize) -> bool {
        self.terms.iter().any(|g| eval_target(g, x, y))
    }

    pub fn has_label_atom(&self) -> bool {
        self.terms.iter().any(|g| g.has_label_atom())
    }

    /// Union of the label sets the disjuncts can touch; `None` means all.
    pub fn label_superset(&self, arity: usize) -> Option<BTreeSet<usize>> {
        let mut out = BTreeSet::new();
        for g in &self.terms {
            match g.label_set() {
                None => return None,
                Some(s) => out.extend(s.iter().copied()),
            }
        }
        if out.len() >= arity {
            None
        } else {
            Some(out)
        }
    }

    /// Conjoin a feature atom onto every disjunct.
    pub fn conjoin(&self, atom: &TargetAtom) -> TargetSet {
        TargetSet {
            terms: self
                .terms
                .iter()
                .map(|g| {
                    let mut atoms = g.atoms.clone();
                    atoms.push(atom.clone());
                    TargetPredicate { atoms }
                })
                .collect(),
        }
    }

    pub fn render(&self, schema: &FeatureSchema) -> String {
        self.terms
            .iter()
            .map(|g| g.render(schema))
            .collect::<Vec<_>>()
            .join(" or ")
    }
}

/// A bias component after normalization: at most one per kind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergedComponent {
    pub budget: usize,
    pub target: TargetSet,
}

/// Canonical form of a bias model: same-kind components merged, application
/// order fixed to MISS, FLIP, FAKE.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NormalizedBiasModel {
    pub miss: Option<MergedComponent>,
    pub flip: Option<MergedComponent>,
    pub fake: Option<MergedComponent>,
    /// Set when two or more FLIP components were merged and at least one
    /// target conditions on the label. The merge is still sound (the bias
    /// set only grows), but exact equality with the unmerged sequence is not
    /// guaranteed in that case.
    pub label_conditioned_merge: bool,
}

impl NormalizedBiasModel {
    pub fn m(&self) -> usize {
        self.miss.as_ref().map_or(0, |c| c.budget)
    }

    pub fn l(&self) -> usize {
        self.flip.as_ref().map_or(0, |c| c.budget)
    }

    pub fn f(&self) -> usize {
        self.fake.as_ref().map_or(0, |c| c.budget)
    }

    pub fn is_zero(&self) -> bool {
        self.m() == 0 && self.l() == 0 && self.f() == 0
    }

    pub fn g1_matches(&self, x: &[Value], y: usize) -> bool {
        self.miss.as_ref().map_or(false, |c| c.target.eval(x, y))
    }

    pub fn g2_matches(&self, x: &[Value], y: usize) -> bool {
        self.flip.as_ref().map_or(false, |c| c.target.eval(x, y))
    }

    pub fn g3_matches(&self, x: &[Value], y: usize) -> bool {
        self.fake.as_ref().map_or(false, |c| c.target.eval(x, y))
    }

    /// Back to an ordered component list (used by the enumeration oracle).
    pub fn to_components(&self) -> Vec<(BiasKind, usize, TargetSet)> {
        let mut out = Vec::new();
        if let Some(c) = &self.miss {
            out.push((BiasKind::Miss, c.budget, c.target.clone()));
        }
        if let Some(c) = &self.flip {
            out.push((BiasKind::Flip, c.budget, c.target.clone()));
        }
        if let Some(c) = &self.fake {
            out.push((BiasKind::Fake, c.budget, c.target.clone()));
        }
        out
    }

    pub fn render(&self, schema: &FeatureSchema) -> String {
        let mut parts = Vec::new();
        for (kind, budget, target) in self.to_components() {
            let trivially_true = target.terms.iter().any(|g| g.is_trivially_true());
            if trivially_true {
                parts.push(format!("{}({}={})", kind.keyword(), kind.param(), budget));
            } else {
                parts.push(format!(
                    "{}({}={}, where {})",
                    kind.keyword(),
                    kind.param(),
                    budget,
                    target.render(schema)
                ));
            }
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("; ")
        }
    }
}

/// Merge same-kind components (budgets summed, targets disjoined) and fix
/// the MISS, FLIP, FAKE order. The resulting bias set is always a superset
/// of the source model's, never smaller.
pub fn normalize(model: &BiasModel) -> NormalizedBiasModel {
    let mut out = NormalizedBiasModel::default();
    let mut flip_count = 0usize;
    let mut flip_label_conditioned = false;
    for c in &model.components {
        let slot = match c.kind {
            BiasKind::Miss => &mut out.miss,
            BiasKind::Flip => {
                flip_count += 1;
                flip_label_conditioned |= c.target.has_label_atom();
                &mut out.flip
            }
            BiasKind::Fake => &mut out.fake,
        };
        match slot {
            None => {
                *slot = Some(MergedComponent {
                    budget: c.budget,
                    target: TargetSet::single(c.target.clone()),
                })
            }
            Some(existing) => {
                existing.budget += c.budget;
                if !existing.target.terms.contains(&c.target) {
                    existing.target.terms.push(c.target.clone());
                }
            }
        }
    }
    out.label_conditioned_merge = flip_count >= 2 && flip_label_conditioned;
    out
}

/// Restrict a bias model to the side of a split where the predicate holds:
/// MISS may only add rows landing on this side, so its target picks up the
/// branch condition; FLIP and FAKE keep their full budgets and targets.
pub fn filter_bias(n: &NormalizedBiasModel, phi: &Predicate) -> NormalizedBiasModel {
    filter_by_atom(n, branch_atom(phi, true))
}

/// Same, for the side where the predicate is false.
pub fn filter_bias_complement(n: &NormalizedBiasModel, phi: &Predicate) -> NormalizedBiasModel {
    filter_by_atom(n, branch_atom(phi, false))
}

fn branch_atom(phi: &Predicate, holds: bool) -> TargetAtom {
    match (&phi.test, holds) {
        (Test::Le(t), true) => TargetAtom::FeatureLe(phi.feature, t.clone()),
        (Test::Le(t), false) => TargetAtom::FeatureGt(phi.feature, t.clone()),
        (Test::Eq(v), true) => TargetAtom::FeatureEq(phi.feature, Value::Cat(v.clone())),
        (Test::Eq(v), false) => TargetAtom::FeatureNe(phi.feature, Value::Cat(v.clone())),
    }
}

fn filter_by_atom(n: &NormalizedBiasModel, atom: TargetAtom) -> NormalizedBiasModel {
    let mut out = n.clone();
    if let Some(miss) = &mut out.miss {
        miss.target = miss.target.conjoin(&atom);
    }
    out
}

/// Per-label effective budgets for the composite probability bounds.
///
/// Added rows can themselves be flipped, and added or flipped rows can be
/// removed, so the flip/removal eligibility counts are augmented by `m`
/// (and the removal counts additionally by the opposing flip budget).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EffectiveBudgets {
    pub m: usize,
    pub l: usize,
    pub f: usize,
    /// max flips away from label i
    pub la: Vec<usize>,
    /// max flips into label i
    pub lb: Vec<usize>,
    /// max removals of label-i rows (seen from label i's perspective)
    pub fa: Vec<usize>,
    /// max removals of non-i rows
    pub fb: Vec<usize>,
    /// rows of T eligible for removal, all labels
    pub removable_rows: usize,
}

pub fn effective_budgets(n: &NormalizedBiasModel, t: &Dataset) -> EffectiveBudgets {
    let arity = t.schema.label_arity;
    let (m, l, f) = (n.m(), n.l(), n.f());
    let mut g2_by_label = vec![0usize; arity];
    let mut g3_by_label = vec![0usize; arity];
    for r in &t.rows {
        if n.g2_matches(&r.x, r.y) {
            g2_by_label[r.y] += 1;
        }
        if n.g3_matches(&r.x, r.y) {
            g3_by_label[r.y] += 1;
        }
    }
    let g2_total: usize = g2_by_label.iter().sum();
    let g3_total: usize = g3_by_label.iter().sum();
    let mut la = vec![0; arity];
    let mut lb = vec![0; arity];
    let mut fa = vec![0; arity];
    let mut fb = vec![0; arity];
    for i in 0..arity {
        la[i] = (g2_by_label[i] + m).min(l);
        lb[i] = (g2_total - g2_by_label[i] + m).min(l);
        fa[i] = (g3_by_label[i] + m + lb[i]).min(f);
        fb[i] = (g3_total - g3_by_label[i] + m + la[i]).min(f);
    }
    EffectiveBudgets {
        m,
        l,
        f,
        la,
        lb,
        fa,
        fb,
        removable_rows: g3_total,
    }
}

// ---------------------------------------------------------------------------
// DSL parser
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    Number(String),
    Percent,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Eq,
    Le,
    Comma,
    Semi,
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                out.push((i, Token::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, Token::RParen));
                i += 1;
            }
            '{' => {
                out.push((i, Token::LBrace));
                i += 1;
            }
            '}' => {
                out.push((i, Token::RBrace));
                i += 1;
            }
            ',' => {
                out.push((i, Token::Comma));
                i += 1;
            }
            ';' => {
                out.push((i, Token::Semi));
                i += 1;
            }
            '%' => {
                out.push((i, Token::Percent));
                i += 1;
            }
            '=' => {
                out.push((i, Token::Eq));
                i += 1;
            }
            '<' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    out.push((i, Token::Le));
                    i += 2;
                } else {
                    return Err(Error::Dsl {
                        position: i,
                        message: "expected '<='".into(),
                    });
                }
            }
            _ if c.is_ascii_digit() || c == '-' || c == '.' => {
                let start = i;
                i += 1;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                out.push((start, Token::Number(text[start..i].to_string())));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((start, Token::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(Error::Dsl {
                    position: i,
                    message: format!("unexpected character '{}'", c),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    schema: &'a FeatureSchema,
    /// |T|, needed to resolve percentage budgets; `None` rejects them.
    dataset_size: Option<usize>,
}

impl<'a> Parser<'a> {
    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or_else(|| self.tokens.last().map(|(p, _)| p + 1).unwrap_or(0))
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Dsl {
            position: self.here(),
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.err(format!("expected {}", what))
            }
        }
    }

    fn model(&mut self) -> Result<BiasModel> {
        let mut components = vec![self.stmt()?];
        while self.peek() == Some(&Token::Semi) {
            self.next();
            components.push(self.stmt()?);
        }
        if self.pos != self.tokens.len() {
            return self.err("trailing input after bias model");
        }
        Ok(BiasModel { components })
    }

    fn stmt(&mut self) -> Result<BiasComponent> {
        let kind = match self.next() {
            Some(Token::Ident(k)) => match k.as_str() {
                "miss" => BiasKind::Miss,
                "flip" => BiasKind::Flip,
                "fake" => BiasKind::Fake,
                other => {
                    self.pos -= 1;
                    return self.err(format!("unknown component kind '{}'", other));
                }
            },
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return self.err("expected 'miss', 'flip', or 'fake'");
            }
        };
        self.expect(Token::LParen, "'('")?;
        let param = match self.next() {
            Some(Token::Ident(p)) if p.len() == 1 => p.chars().next().unwrap(),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return self.err("expected budget parameter name");
            }
        };
        if param != kind.param() {
            return self.err(format!(
                "component '{}' takes parameter '{}', got '{}'",
                kind.keyword(),
                kind.param(),
                param
            ));
        }
        self.expect(Token::Eq, "'='")?;
        let budget = self.budget()?;
        let target = if self.peek() == Some(&Token::Comma) {
            self.next();
            match self.next() {
                Some(Token::Ident(w)) if w == "where" => {}
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return self.err("expected 'where'");
                }
            }
            self.pred()?
        } else {
            TargetPredicate::always_true()
        };
        self.expect(Token::RParen, "')'")?;
        Ok(BiasComponent { kind, budget, target })
    }

    fn budget(&mut self) -> Result<usize> {
        let raw = match self.next() {
            Some(Token::Number(s)) => s,
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return self.err("expected budget value");
            }
        };
        let value = crate::dataset::parse_decimal(&raw)
            .ok_or(())
            .or_else(|_| self.err::<Rat>(format!("bad number '{}'", raw)))?;
        if value < Rat::from_integer(0.into()) {
            return self.err("negative budget");
        }
        if self.peek() == Some(&Token::Percent) {
            self.next();
            let size = match self.dataset_size {
                Some(s) => s,
                None => return self.err("percentage budget requires a dataset size"),
            };
            // floor(|T| * pct / 100)
            let scaled = value * Rat::from_integer(size.into()) / Rat::from_integer(100.into());
            return Ok(scaled.floor().to_integer().to_usize().unwrap_or(usize::MAX));
        }
        if !value.is_integer() {
            return self.err("budget must be an integer (or a percentage)");
        }
        value
            .to_integer()
            .to_usize()
            .ok_or(())
            .or_else(|_| self.err("budget out of range"))
    }

    fn pred(&mut self) -> Result<TargetPredicate> {
        let mut atoms = vec![self.atom()?];
        while matches!(self.peek(), Some(Token::Ident(w)) if w == "and") {
            self.next();
            atoms.push(self.atom()?);
        }
        if atoms.iter().filter(|a| a.is_label_atom()).count() > 1 {
            return self.err("at most one label atom per predicate");
        }
        Ok(TargetPredicate { atoms })
    }

    fn atom(&mut self) -> Result<TargetAtom> {
        let name = match self.next() {
            Some(Token::Ident(n)) => n,
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return self.err("expected feature or label name");
            }
        };
        if name == "label" || name == self.schema.label_name {
            return self.label_atom();
        }
        let feature = match self.schema.feature_index(&name) {
            Some(j) => j,
            None => {
                self.pos -= 1;
                return self.err(format!("unknown feature '{}'", name));
            }
        };
        match self.next() {
            Some(Token::Eq) => {
                let raw = match self.next() {
                    Some(Token::Ident(v)) => v,
                    Some(Token::Number(v)) => v,
                    _ => {
                        self.pos = self.pos.saturating_sub(1);
                        return self.err("expected value");
                    }
                };
                let value = match self.schema.features[feature].kind {
                    FeatureKind::Numeric => Value::Num(
                        crate::dataset::parse_decimal(&raw)
                            .ok_or(())
                            .or_else(|_| self.err::<Rat>(format!("expected number for '{}'", name)))?,
                    ),
                    FeatureKind::Categorical => Value::Cat(raw),
                };
                Ok(TargetAtom::FeatureEq(feature, value))
            }
            Some(Token::Le) => {
                if self.schema.features[feature].kind != FeatureKind::Numeric {
                    return self.err(format!("'<=' needs a numeric feature, '{}' is categorical", name));
                }
                let raw = match self.next() {
                    Some(Token::Number(v)) => v,
                    _ => {
                        self.pos = self.pos.saturating_sub(1);
                        return self.err("expected number after '<='");
                    }
                };
                let t = crate::dataset::parse_decimal(&raw)
                    .ok_or(())
                    .or_else(|_| self.err::<Rat>(format!("bad number '{}'", raw)))?;
                Ok(TargetAtom::FeatureLe(feature, t))
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.err("expected '=' or '<='")
            }
        }
    }

    fn label_atom(&mut self) -> Result<TargetAtom> {
        match self.next() {
            Some(Token::Eq) => {
                let v = self.label_value()?;
                Ok(TargetAtom::LabelIn([v].into()))
            }
            Some(Token::Ident(w)) if w == "in" => {
                self.expect(Token::LBrace, "'{'")?;
                let mut set = BTreeSet::new();
                set.insert(self.label_value()?);
                while self.peek() == Some(&Token::Comma) {
                    self.next();
                    set.insert(self.label_value()?);
                }
                self.expect(Token::RBrace, "'}'")?;
                Ok(TargetAtom::LabelIn(set))
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.err("expected '=' or 'in' after label")
            }
        }
    }

    fn label_value(&mut self) -> Result<usize> {
        let raw = match self.next() {
            Some(Token::Number(s)) => s,
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return self.err("expected label value");
            }
        };
        let v: usize = match raw.parse() {
            Ok(v) => v,
            Err(_) => {
                self.pos -= 1;
                return self.err(format!("bad label '{}'", raw));
            }
        };
        if v >= self.schema.label_arity {
            self.pos -= 1;
            return self.err(format!(
                "label {} out of range (arity {})",
                v, self.schema.label_arity
            ));
        }
        Ok(v)
    }
}

/// Parse the bias DSL. Grammar:
///
/// ```text
/// model := stmt (';' stmt)*
/// stmt  := kind '(' param '=' budget (',' 'where' pred)? ')'
/// kind  := 'miss' | 'flip' | 'fake'     param := 'm' | 'l' | 'f'
/// pred  := atom ('and' atom)*
/// atom  := IDENT '=' VALUE | IDENT '<=' NUMBER
///        | 'label' '=' INT | 'label' 'in' '{' INT (',' INT)* '}'
/// budget:= INT | DECIMAL '%'
/// ```
///
/// Percentage budgets resolve against the dataset size via
/// [`parse_bias_dsl_sized`]; this entry point rejects them.
pub fn parse_bias_dsl(text: &str, schema: &FeatureSchema) -> Result<BiasModel> {
    parse_bias_dsl_sized(text, schema, None)
}

/// Parse the bias DSL, resolving `p%` budgets as `floor(|T| * p / 100)`.
pub fn parse_bias_dsl_sized(
    text: &str,
    schema: &FeatureSchema,
    dataset_size: Option<usize>,
) -> Result<BiasModel> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "none" {
        return Ok(BiasModel::empty());
    }
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        schema,
        dataset_size,
    };
    parser.model()
}

/// Parse a bare target predicate (used for report groups and CLI filters).
pub fn parse_target(text: &str, schema: &FeatureSchema) -> Result<TargetPredicate> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "true" {
        return Ok(TargetPredicate::always_true());
    }
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        schema,
        dataset_size: None,
    };
    let pred = parser.pred()?;
    if parser.pos != parser.tokens.len() {
        return parser.err("trailing input after predicate");
    }
    Ok(pred)
}

/// Human-readable summary of a normalized model's budgets, e.g. `m1 l2 f0`.
pub fn budget_summary(n: &NormalizedBiasModel) -> String {
    let mut s = String::new();
    let _ = write!(s, "m{} l{} f{}", n.m(), n.l(), n.f());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::loan_fixture;
    use crate::interval::rat;

    #[test]
    fn parses_targeted_flip() {
        let t = loan_fixture();
        let model = parse_bias_dsl("flip(l=1, where race=Black and label=0)", &t.schema).unwrap();
        assert_eq!(model.components.len(), 1);
        let c = &model.components[0];
        assert_eq!(c.kind, BiasKind::Flip);
        assert_eq!(c.budget, 1);
        assert_eq!(
            c.target.atoms,
            vec![
                TargetAtom::FeatureEq(0, Value::Cat("Black".into())),
                TargetAtom::LabelIn([0].into()),
            ]
        );
    }

    #[test]
    fn parses_sequence_in_order() {
        let t = loan_fixture();
        let model = parse_bias_dsl("miss(m=2); fake(f=1)", &t.schema).unwrap();
        assert_eq!(model.components.len(), 2);
        assert_eq!(model.components[0].kind, BiasKind::Miss);
        assert_eq!(model.components[0].budget, 2);
        assert_eq!(model.components[1].kind, BiasKind::Fake);
        assert_eq!(model.components[1].budget, 1);
    }

    #[test]
    fn rejects_negative_budget() {
        let t = loan_fixture();
        let err = parse_bias_dsl("flip(l=-1)", &t.schema).unwrap_err();
        assert!(err.to_string().contains("negative budget"), "{}", err);
    }

    #[test]
    fn rejects_unknown_feature() {
        let t = loan_fixture();
        let err = parse_bias_dsl("flip(l=1, where age=3)", &t.schema).unwrap_err();
        assert!(err.to_string().contains("unknown feature 'age'"), "{}", err);
    }

    #[test]
    fn rejects_wrong_param() {
        let t = loan_fixture();
        let err = parse_bias_dsl("flip(m=1)", &t.schema).unwrap_err();
        assert!(err.to_string().contains("takes parameter 'l'"), "{}", err);
    }

    #[test]
    fn percentage_budget_floors() {
        let t = loan_fixture();
        let model = parse_bias_dsl_sized("flip(l=25%)", &t.schema, Some(9)).unwrap();
        assert_eq!(model.components[0].budget, 2); // floor(9 * 0.25)
        let err = parse_bias_dsl("flip(l=25%)", &t.schema).unwrap_err();
        assert!(err.to_string().contains("dataset size"), "{}", err);
    }

    #[test]
    fn label_in_set_parses() {
        let t = loan_fixture();
        let model = parse_bias_dsl("fake(f=1, where label in {0, 1})", &t.schema).unwrap();
        assert_eq!(
            model.components[0].target.atoms,
            vec![TargetAtom::LabelIn([0, 1].into())]
        );
    }

    #[test]
    fn normalize_merges_and_orders() {
        let t = loan_fixture();
        let ga = parse_target("race=Black", &t.schema).unwrap();
        let gb = parse_target("score<=3", &t.schema).unwrap();
        let model = BiasModel {
            components: vec![
                BiasComponent {
                    kind: BiasKind::Flip,
                    budget: 1,
                    target: ga.clone(),
                },
                BiasComponent {
                    kind: BiasKind::Miss,
                    budget: 2,
                    target: TargetPredicate::always_true(),
                },
                BiasComponent {
                    kind: BiasKind::Flip,
                    budget: 3,
                    target: gb.clone(),
                },
            ],
        };
        let n = normalize(&model);
        assert_eq!(n.m(), 2);
        assert_eq!(n.l(), 4);
        assert_eq!(n.f(), 0);
        assert_eq!(n.flip.as_ref().unwrap().target.terms, vec![ga, gb]);
        assert!(!n.label_conditioned_merge);
    }

    #[test]
    fn normalize_flags_label_conditioned_flip_merge() {
        let t = loan_fixture();
        let model = parse_bias_dsl("flip(l=1, where label=0); flip(l=1)", &t.schema).unwrap();
        let n = normalize(&model);
        assert!(n.label_conditioned_merge);
        assert_eq!(n.l(), 2);
    }

    #[test]
    fn normalize_single_component_is_identity() {
        let t = loan_fixture();
        let model = parse_bias_dsl("miss(m=1, where race=Black)", &t.schema).unwrap();
        let n = normalize(&model);
        assert_eq!(n.m(), 1);
        assert!(n.flip.is_none() && n.fake.is_none());
    }

    #[test]
    fn normalize_empty_model() {
        let n = normalize(&BiasModel::empty());
        assert!(n.is_zero());
        assert!(n.miss.is_none());
    }

    #[test]
    fn filter_adds_branch_condition_to_miss_only() {
        let t = loan_fixture();
        let model = parse_bias_dsl("miss(m=1); flip(l=2)", &t.schema).unwrap();
        let n = normalize(&model);
        let phi = Predicate {
            feature: 1,
            test: Test::Le(rat(3, 1)),
        };
        let left = filter_bias(&n, &phi);
        let right = filter_bias_complement(&n, &phi);
        assert_eq!(left.flip, n.flip);
        assert_eq!(right.flip, n.flip);
        let lt = &left.miss.as_ref().unwrap().target.terms[0];
        let rt = &right.miss.as_ref().unwrap().target.terms[0];
        assert_eq!(lt.atoms, vec![TargetAtom::FeatureLe(1, rat(3, 1))]);
        assert_eq!(rt.atoms, vec![TargetAtom::FeatureGt(1, rat(3, 1))]);
        // branch conditions are mutually exclusive on every row
        for r in &t.rows {
            assert!(lt.atoms[0].eval(&r.x, r.y) != rt.atoms[0].eval(&r.x, r.y));
        }
    }

    #[test]
    fn effective_budgets_match_hand_computation() {
        // miss m=1, flip l=2, exactly one targeted label-0 row:
        // flips away from 0 saturate at min(1 + 1, 2) = 2
        let t = loan_fixture();
        let model = parse_bias_dsl("miss(m=1); flip(l=2, where race=Black and score<=1)", &t.schema).unwrap();
        let n = normalize(&model);
        let eb = effective_budgets(&n, &t);
        assert_eq!(eb.la[0], 2);
        assert_eq!(eb.lb[0], 1); // no eligible non-0 rows, +m
        assert_eq!(eb.fa, vec![0, 0]); // no fake component
    }

    #[test]
    fn effective_budgets_zero_model() {
        let t = loan_fixture();
        let eb = effective_budgets(&normalize(&BiasModel::empty()), &t);
        assert_eq!((eb.m, eb.l, eb.f), (0, 0, 0));
        assert!(eb.la.iter().chain(&eb.lb).chain(&eb.fa).chain(&eb.fb).all(|&v| v == 0));
    }

    #[test]
    fn effective_budgets_untargeted_flip_saturation() {
        let t = loan_fixture();
        let model = parse_bias_dsl("flip(l=5)", &t.schema).unwrap();
        let eb = effective_budgets(&normalize(&model), &t);
        // c_1 = 4 eligible rows with label 1, no miss budget
        assert_eq!(eb.la[1], 4.min(5));
        assert_eq!(eb.lb[1], 5.min(5));
    }

    #[test]
    fn render_round_trips_through_parser() {
        let t = loan_fixture();
        let text = "miss(m=1); flip(l=2, where race=Black and label=0)";
        let model = parse_bias_dsl(text, &t.schema).unwrap();
        let rendered = model.render(&t.schema);
        let reparsed = parse_bias_dsl(&rendered, &t.schema).unwrap();
        assert_eq!(model, reparsed);
    }
}
