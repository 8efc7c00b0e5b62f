//! Exhaustive ground truth on small instances: materialize every member of
//! the bias set, retrain on each, and compare. Used to validate the interval
//! certification, not to scale.

use crate::bias::{BiasComponent, BiasKind, NormalizedBiasModel, TargetSet};
use crate::concrete::{infer, train};
use crate::dataset::{Dataset, Row, Value};
use crate::error::{Error, Result};
use itertools::Itertools;
use std::collections::BTreeSet;

pub const DEFAULT_CAP: u128 = 2_000_000;

/// The pool MISS can draw rows from, as per-feature value lists; every
/// combination of values and labels is a candidate row.
#[derive(Clone, Debug)]
pub struct Universe {
    pub values: Vec<Vec<Value>>,
}

impl Universe {
    /// Universe of values observed in the dataset, feature by feature.
    pub fn observed(t: &Dataset) -> Universe {
        let values = (0..t.schema.features.len())
            .map(|f| {
                let mut vs: Vec<Value> = t.rows.iter().map(|r| r.x[f].clone()).collect();
                vs.sort();
                vs.dedup();
                vs
            })
            .collect();
        Universe { values }
    }

    /// Every (feature vector, label) combination in the universe.
    pub fn rows(&self, schema: &crate::dataset::FeatureSchema) -> Vec<Row> {
        if self.values.iter().any(|v| v.is_empty()) {
            return Vec::new();
        }
        self.values
            .iter()
            .multi_cartesian_product()
            .flat_map(|x| {
                (0..schema.label_arity).map(move |y| Row {
                    x: x.iter().map(|v| (*v).clone()).collect(),
                    y,
                })
            })
            .collect()
    }

    fn row_count(&self, arity: usize) -> u128 {
        let mut n: u128 = arity as u128;
        for v in &self.values {
            n = n.saturating_mul(v.len() as u128);
        }
        n
    }
}

/// One enumeration stage: a kind, its budget, and its (possibly disjoined)
/// target. Normalized models expand to at most three stages in MISS, FLIP,
/// FAKE order; arbitrary orders can be built from raw components.
pub type Stage = (BiasKind, usize, TargetSet);

/// A raw component as a single enumeration stage.
pub fn stage_of(c: &BiasComponent) -> Stage {
    (c.kind, c.budget, TargetSet::single(c.target.clone()))
}

fn binom(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Upper estimate of how many members one component contributes as a factor,
/// given the current dataset size and eligible-row count.
fn component_estimate(kind: BiasKind, budget: usize, eligible: u128, arity: usize, pool: u128) -> u128 {
    let mut total: u128 = 0;
    for k in 0..=budget as u128 {
        let ways = match kind {
            // multisets of k rows from the pool
            BiasKind::Miss => binom(pool + k.saturating_sub(1), k),
            // choose k eligible rows, each to one of arity-1 other labels
            BiasKind::Flip => {
                let mut w = binom(eligible, k);
                for _ in 0..k {
                    w = w.saturating_mul((arity - 1) as u128);
                }
                w
            }
            BiasKind::Fake => binom(eligible, k),
        };
        total = total.saturating_add(ways);
    }
    total.max(1)
}

/// Product-form upper bound on the bias-set size for a component sequence.
pub fn estimate_bias_set(
    t: &Dataset,
    stages: &[Stage],
    universe: &Universe,
) -> u128 {
    let arity = t.schema.label_arity;
    let mut size = t.len() as u128;
    let mut est: u128 = 1;
    for (kind, budget, _) in stages {
        let eligible = match kind {
            BiasKind::Miss => 0,
            // conservatively treat every row as eligible for the estimate
            _ => size,
        };
        let pool = universe.row_count(arity);
        est = est.saturating_mul(component_estimate(*kind, *budget, eligible, arity, pool));
        if *kind == BiasKind::Miss {
            size = size.saturating_add(*budget as u128);
        }
    }
    est
}

fn apply_stage(
    members: Vec<Dataset>,
    (kind, budget, target): &Stage,
    universe: &Universe,
    cap: u128,
) -> Result<Vec<Dataset>> {
    let mut seen: BTreeSet<Vec<Row>> = BTreeSet::new();
    let mut out: Vec<Dataset> = Vec::new();
    let mut push = |d: Dataset| -> Result<()> {
        if seen.insert(d.canonical_rows()) {
            if seen.len() as u128 > cap {
                return Err(Error::CapExceeded {
                    estimate: seen.len() as u128,
                    cap,
                });
            }
            out.push(d);
        }
        Ok(())
    };
    for t in members {
        match kind {
            BiasKind::Miss => {
                let schema = t.schema.clone();
                let pool: Vec<Row> = universe
                    .rows(&schema)
                    .into_iter()
                    .filter(|r| target.eval(&r.x, r.y))
                    .collect();
                for k in 0..=*budget {
                    if k > 0 && pool.is_empty() {
                        break;
                    }
                    for add in pool.iter().combinations_with_replacement(k) {
                        let mut rows = t.rows.clone();
                        rows.extend(add.into_iter().cloned());
                        push(Dataset::new(schema.clone(), rows))?;
                    }
                }
            }
            BiasKind::Flip => {
                let arity = t.schema.label_arity;
                let eligible: Vec<usize> = (0..t.rows.len())
                    .filter(|&i| target.eval(&t.rows[i].x, t.rows[i].y))
                    .collect();
                for k in 0..=(*budget).min(eligible.len()) {
                    for picks in eligible.iter().combinations(k) {
                        let alt: Vec<Vec<usize>> = picks
                            .iter()
                            .map(|&&i| (0..arity).filter(|&y| y != t.rows[i].y).collect())
                            .collect();
                        if alt.iter().any(|a| a.is_empty()) {
                            continue;
                        }
                        for labels in alt.iter().multi_cartesian_product() {
                            let mut rows = t.rows.clone();
                            for (&&i, &&y) in picks.iter().zip(labels.iter()) {
                                rows[i].y = y;
                            }
                            push(Dataset::new(t.schema.clone(), rows))?;
                        }
                    }
                }
            }
            BiasKind::Fake => {
                let eligible: Vec<usize> = (0..t.rows.len())
                    .filter(|&i| target.eval(&t.rows[i].x, t.rows[i].y))
                    .collect();
                for k in 0..=(*budget).min(eligible.len()) {
                    for picks in eligible.iter().combinations(k) {
                        let drop: BTreeSet<usize> = picks.iter().map(|&&i| i).collect();
                        let rows: Vec<Row> = t
                            .rows
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| !drop.contains(i))
                            .map(|(_, r)| r.clone())
                            .collect();
                        push(Dataset::new(t.schema.clone(), rows))?;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Materialize the bias set by applying the components in the given order.
/// Fails early when the product-form estimate exceeds `cap`, and again if
/// the deduplicated set itself grows past it.
pub fn enumerate_bias_set_ordered(
    t: &Dataset,
    stages: &[Stage],
    universe: &Universe,
    cap: u128,
) -> Result<Vec<Dataset>> {
    let est = estimate_bias_set(t, stages, universe);
    if est > cap {
        return Err(Error::CapExceeded { estimate: est, cap });
    }
    let mut members = vec![t.clone()];
    for s in stages {
        members = apply_stage(members, s, universe, cap)?;
    }
    Ok(members)
}

/// Bias set of a normalized model (components in add/flip/remove order).
pub fn enumerate_bias_set(
    t: &Dataset,
    model: &NormalizedBiasModel,
    universe: &Universe,
    cap: u128,
) -> Result<Vec<Dataset>> {
    enumerate_bias_set_ordered(t, &model.to_components(), universe, cap)
}

#[derive(Clone, Debug)]
pub struct OracleOutcome {
    pub robust: bool,
    pub baseline_label: usize,
    pub members_checked: usize,
    pub witness: Option<(Dataset, usize)>,
}

/// Ground-truth robustness by retraining on every member of the bias set.
/// Members that end up empty are skipped: they admit no prediction.
pub fn oracle_robust(
    t: &Dataset,
    model: &NormalizedBiasModel,
    universe: &Universe,
    x: &[Value],
    depth: usize,
    cap: u128,
) -> Result<OracleOutcome> {
    if t.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let baseline = infer(&train(t, depth)?, x);
    let members = enumerate_bias_set(t, model, universe, cap)?;
    let mut checked = 0usize;
    for m in &members {
        if m.is_empty() {
            continue;
        }
        checked += 1;
        let label = infer(&train(m, depth)?, x);
        if label != baseline {
            return Ok(OracleOutcome {
                robust: false,
                baseline_label: baseline,
                members_checked: checked,
                witness: Some((m.clone(), label)),
            });
        }
    }
    Ok(OracleOutcome {
        robust: true,
        baseline_label: baseline,
        members_checked: checked,
        witness: None,
    })
}

/// Exact min/max of the label-`i` proportion across members. Errors if any
/// member is empty, since the proportion is undefined there.
pub fn pr_bounds_bruteforce(members: &[Dataset], label: usize) -> Result<(crate::interval::Rat, crate::interval::Rat)> {
    use crate::interval::rint;
    if members.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut lo: Option<crate::interval::Rat> = None;
    let mut hi: Option<crate::interval::Rat> = None;
    for m in members {
        if m.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = rint(m.label_counts()[label]) / rint(m.len());
        if lo.as_ref().map_or(true, |v| p < *v) {
            lo = Some(p.clone());
        }
        if hi.as_ref().map_or(true, |v| p > *v) {
            hi = Some(p);
        }
    }
    Ok((lo.unwrap(), hi.unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::{normalize, parse_bias_dsl};
    use crate::dataset::loan_fixture;
    use crate::interval::rat;

    fn set_size(dsl: &str) -> usize {
        let t = loan_fixture();
        let model = normalize(&parse_bias_dsl(dsl, &t.schema).unwrap());
        let u = Universe::observed(&t);
        enumerate_bias_set(&t, &model, &u, DEFAULT_CAP).unwrap().len()
    }

    #[test]
    fn flip_one_cardinality() {
        // original + one flip of each of the 9 rows
        assert_eq!(set_size("flip(l=1)"), 10);
    }

    #[test]
    fn targeted_flip_cardinality() {
        // only the two Black rejections are eligible
        assert_eq!(set_size("flip(l=1, where race=Black and label=0)"), 3);
    }

    #[test]
    fn fake_one_cardinality() {
        assert_eq!(set_size("fake(f=1)"), 10);
    }

    #[test]
    fn miss_one_cardinality() {
        // universe: 2 races x 9 scores x 2 labels = 36 candidate rows, plus
        // the unperturbed original
        assert_eq!(set_size("miss(m=1)"), 37);
    }

    #[test]
    fn estimate_matches_closed_form() {
        let t = loan_fixture();
        let u = Universe::observed(&t);
        let model = normalize(&parse_bias_dsl("fake(f=2)", &t.schema).unwrap());
        let est = estimate_bias_set(&t, &model.to_components(), &u);
        // 1 + C(9,1) + C(9,2) = 46; dedup can only shrink it
        assert_eq!(est, 46);
        assert_eq!(
            enumerate_bias_set(&t, &model, &u, DEFAULT_CAP).unwrap().len(),
            46
        );
    }

    #[test]
    fn cap_is_enforced() {
        let t = loan_fixture();
        let u = Universe::observed(&t);
        let model = normalize(&parse_bias_dsl("miss(m=3)", &t.schema).unwrap());
        match enumerate_bias_set(&t, &model, &u, 100) {
            Err(Error::CapExceeded { cap: 100, .. }) => {}
            other => panic!("expected cap error, got {:?}", other.map(|v| v.len())),
        }
    }

    #[test]
    fn members_stay_within_budget() {
        let t = loan_fixture();
        let model = normalize(&parse_bias_dsl("flip(l=2); fake(f=1)", &t.schema).unwrap());
        let u = Universe::observed(&t);
        let members = enumerate_bias_set(&t, &model, &u, DEFAULT_CAP).unwrap();
        for m in &members {
            assert!(m.len() >= t.len() - 1 && m.len() <= t.len());
        }
        assert!(members.len() > 1);
    }

    #[test]
    fn bruteforce_pr_on_flip_one() {
        let t = loan_fixture();
        let model = normalize(&parse_bias_dsl("flip(l=1)", &t.schema).unwrap());
        let u = Universe::observed(&t);
        let members = enumerate_bias_set(&t, &model, &u, DEFAULT_CAP).unwrap();
        let (lo, hi) = pr_bounds_bruteforce(&members, 1).unwrap();
        assert_eq!(lo, rat(3, 9));
        assert_eq!(hi, rat(5, 9));
    }

    #[test]
    fn oracle_agrees_with_certificate_on_worked_example() {
        let t = loan_fixture();
        let model =
            normalize(&parse_bias_dsl("flip(l=1, where race=Black and label=0)", &t.schema).unwrap());
        let u = Universe::observed(&t);
        let x = vec![crate::dataset::Value::Cat("Black".into()), crate::dataset::Value::Num(rat(7, 1))];
        let out = oracle_robust(&t, &model, &u, &x, 1, DEFAULT_CAP).unwrap();
        assert!(out.robust);
        assert_eq!(out.baseline_label, 1);
        assert_eq!(out.members_checked, 3);
    }

    #[test]
    fn oracle_detects_fragility_under_larger_budget() {
        let t = loan_fixture();
        let model = normalize(&parse_bias_dsl("flip(l=4)", &t.schema).unwrap());
        let u = Universe::observed(&t);
        let x = vec![crate::dataset::Value::Cat("Black".into()), crate::dataset::Value::Num(rat(7, 1))];
        let out = oracle_robust(&t, &model, &u, &x, 1, DEFAULT_CAP).unwrap();
        assert!(!out.robust);
        let (member, label) = out.witness.unwrap();
        assert_ne!(label, 1);
        assert_eq!(infer(&train(&member, 1).unwrap(), &x), label);
    }
}
