//! The certification core: abstract transformers over (dataset, bias model)
//! pairs, and the end-to-end pointwise-robustness check.
//!
//! An `AbstractDataset` represents the whole bias set `B(T)` symbolically:
//! the concrete rows observed along the current tree path plus the budgets
//! and targets still applicable there. Label proportions, impurity, and
//! split costs become rational intervals guaranteed to contain the value for
//! every member of the bias set; if every surviving split sends the query
//! point to leaves that agree on one label, that label is certified.

use crate::bias::{
    effective_budgets, filter_bias, filter_bias_complement, normalize, BiasModel, NormalizedBiasModel,
};
use crate::concrete;
use crate::dataset::{enumerate_predicates, partition, Dataset, Predicate, Value};
use crate::error::{Error, Result};
use crate::interval::{interval_argmax_set, rint, Interval, Rat};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use std::collections::BTreeSet;
use std::time::{Duration, Instant};

#[derive(Clone, Debug)]
pub struct AbstractDataset {
    pub data: Dataset,
    pub model: NormalizedBiasModel,
}

impl AbstractDataset {
    pub fn new(data: Dataset, model: NormalizedBiasModel) -> AbstractDataset {
        AbstractDataset { data, model }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Robust(usize),
    Unknown(BTreeSet<usize>),
}

#[derive(Clone, Debug)]
pub struct CertificationResult {
    pub verdict: Verdict,
    pub labels: BTreeSet<usize>,
    pub root_split_count: usize,
    pub depth: usize,
    pub elapsed: Duration,
}

impl CertificationResult {
    pub fn is_robust(&self) -> bool {
        matches!(self.verdict, Verdict::Robust(_))
    }
}

/// Range of |T'| over the bias set, as an integer interval.
///
/// The removal budget only bites on rows the FAKE target can reach: rows
/// matching the target directly, rows a flip could move into the target
/// (the target may condition on the label), and anything MISS added.
pub fn size_abstract(a: &AbstractDataset) -> (usize, usize) {
    let t = a.data.len();
    let m = a.model.m();
    let f = a.model.f();
    let lo = t.saturating_sub(effective_removals(a).min(f));
    (lo, t + m)
}

/// Number of rows of T that could be removed, plus the MISS allowance.
fn effective_removals(a: &AbstractDataset) -> usize {
    let n = &a.model;
    if n.fake.is_none() {
        return 0;
    }
    let arity = a.data.schema.label_arity;
    let mut reachable = 0usize;
    for r in &a.data.rows {
        let direct = n.g3_matches(&r.x, r.y);
        let via_flip = n.l() > 0
            && n.g2_matches(&r.x, r.y)
            && (0..arity).any(|y2| y2 != r.y && n.g3_matches(&r.x, y2));
        if direct || via_flip {
            reachable += 1;
        }
    }
    reachable + n.m()
}

/// Sound interval for the proportion of label `i` over the bias set.
///
/// Dispatch: zero budgets give a point; a lone MISS whose target restricts
/// the label uses the tighter per-case bounds; everything else uses the
/// composite bounds with per-label effective budgets. For a single basic
/// transformer the composite bounds collapse to the tight single-transformer
/// formulas, so they stay precise there.
pub fn pr_abstract(a: &AbstractDataset, i: usize) -> Result<Interval> {
    Ok(pr_abstract_vec(a)?.swap_remove(i))
}

/// All labels at once (they share the budget computation).
pub fn pr_abstract_vec(a: &AbstractDataset) -> Result<Vec<Interval>> {
    let t = a.data.len();
    let arity = a.data.schema.label_arity;
    let counts = a.data.label_counts();

    if a.model.is_zero() {
        if t == 0 {
            return Err(Error::EmptyDataset);
        }
        let size = rint(t);
        return Ok(counts
            .iter()
            .map(|&c| Interval::point(rint(c) / &size))
            .collect());
    }

    // Some member may be empty: every proportion collapses to [0, 1].
    let (size_lo, _) = size_abstract(a);
    if size_lo == 0 {
        return Ok(vec![Interval::new(Rat::zero(), Rat::one()); arity]);
    }

    // Lone MISS with a label-restricted target: labels outside the target
    // set can only be diluted, and a singleton target set cannot dilute its
    // own label.
    if a.model.flip.is_none() && a.model.fake.is_none() {
        let miss = a.model.miss.as_ref().expect("non-zero model without components");
        if let Some(s) = miss.target.label_superset(arity) {
            let m = miss.budget;
            return Ok((0..arity)
                .map(|i| {
                    let c = rint(counts[i]);
                    let cur = &c / rint(t);
                    let diluted = &c / rint(t + m);
                    let boosted = (&c + rint(m)) / rint(t + m);
                    if s.contains(&i) && s.len() == 1 {
                        Interval::new(cur, boosted)
                    } else if s.contains(&i) {
                        Interval::new(diluted, boosted)
                    } else {
                        Interval::new(diluted, cur)
                    }
                })
                .collect());
        }
    }

    let eb = effective_budgets(&a.model, &a.data);
    let out = (0..arity)
        .map(|i| {
            let c = counts[i] as i128;
            let (m, la, lb, fa, fb) = (
                eb.m as i128,
                eb.la[i] as i128,
                eb.lb[i] as i128,
                eb.fa[i] as i128,
                eb.fb[i] as i128,
            );
            let ti = t as i128;
            let lo = {
                let num = c - la - fa;
                let den = ti + m - fa;
                if den <= 0 || num <= 0 {
                    Rat::zero()
                } else {
                    big_ratio(num, den)
                }
            };
            let hi = {
                let num = c + m + lb;
                let den = ti + m - fb;
                if den <= 0 || num >= den {
                    Rat::one()
                } else {
                    big_ratio(num, den)
                }
            };
            Interval::new(lo, hi)
        })
        .collect();
    Ok(out)
}

fn big_ratio(num: i128, den: i128) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Interval Gini impurity: sum of the exact images of `p (1 - p)` per label,
/// intersected with the feasible band `[0, 1 - 1/n]`.
pub fn gini_abstract(a: &AbstractDataset) -> Result<Interval> {
    let probs = pr_abstract_vec(a)?;
    let mut acc = Interval::point(Rat::zero());
    for p in &probs {
        acc = acc.add(&p.gini_term());
    }
    let n = a.data.schema.label_arity;
    let band = Interval::new(Rat::zero(), Rat::one() - big_ratio(1, n as i128));
    Ok(acc
        .intersect(&band)
        .expect("gini interval disjoint from feasible band"))
}

/// The two branch-restricted abstract datasets a split induces.
pub fn branch_children(a: &AbstractDataset, phi: &Predicate) -> (AbstractDataset, AbstractDataset) {
    let (yes, no) = partition(&a.data, phi);
    (
        AbstractDataset::new(yes, filter_bias(&a.model, phi)),
        AbstractDataset::new(no, filter_bias_complement(&a.model, phi)),
    )
}

/// Interval split cost: `size * imp` per side, summed. A side that is empty
/// in every member contributes zero.
pub fn cost_abstract(a: &AbstractDataset, phi: &Predicate) -> Result<Interval> {
    let (left, right) = branch_children(a, phi);
    let side = |c: &AbstractDataset| -> Result<Interval> {
        let (lo, hi) = size_abstract(c);
        if hi == 0 {
            return Ok(Interval::point(Rat::zero()));
        }
        let size_iv = Interval::new(rint(lo), rint(hi));
        Ok(size_iv.mul(&gini_abstract(c)?))
    };
    Ok(side(&left)?.add(&side(&right)?))
}

/// Keep every predicate whose cost interval can still be the minimum:
/// with `lub` the least upper bound over all cost intervals, return
/// `{phi : cost(phi).lower <= lub}`.
pub fn split_abstract(a: &AbstractDataset, predicates: &[Predicate]) -> Result<Vec<Predicate>> {
    if predicates.is_empty() {
        return Err(Error::Invalid("split needs a non-empty predicate list".into()));
    }
    let costs: Vec<Interval> = predicates
        .iter()
        .map(|p| cost_abstract(a, p))
        .collect::<Result<Vec<_>>>()?;
    let lub = costs.iter().map(|c| c.hi()).min().unwrap().clone();
    let out: Vec<Predicate> = predicates
        .iter()
        .zip(&costs)
        .filter(|(_, c)| *c.lo() <= lub)
        .map(|(p, _)| p.clone())
        .collect();
    debug_assert!(!out.is_empty());
    Ok(out)
}

fn all_labels(arity: usize) -> BTreeSet<usize> {
    (0..arity).collect()
}

/// Labels reachable at a node with `depth` split levels remaining.
fn node_labels(a: &AbstractDataset, x: &[Value], depth: usize) -> Result<BTreeSet<usize>> {
    let arity = a.data.schema.label_arity;
    if a.model.is_zero() {
        // exact: fall back to the concrete learner
        if a.data.is_empty() {
            return Ok(all_labels(arity));
        }
        let tree = concrete::train(&a.data, depth)?;
        return Ok([concrete::infer(&tree, x)].into());
    }
    if a.data.is_empty() && a.model.m() == 0 {
        // no member has any rows here: nothing constrains the leaf
        return Ok(all_labels(arity));
    }
    if depth == 0 {
        return Ok(interval_argmax_set(&pr_abstract_vec(a)?).into_iter().collect());
    }
    let predicates = if a.data.is_empty() {
        Vec::new()
    } else {
        enumerate_predicates(&a.data)?
    };
    if predicates.is_empty() {
        return Ok(interval_argmax_set(&pr_abstract_vec(a)?).into_iter().collect());
    }
    let phia = split_abstract(a, &predicates)?;
    infer_abstract(a, &phia, x, depth)
}

/// Union, over every surviving split, of the labels reachable on the branch
/// the query point takes. Children carry the full remaining budgets: each
/// node assumes worst-case bias independently, which is sound (and is what
/// makes the recursion a plain interval analysis rather than a disjunction
/// over budget splits).
pub fn infer_abstract(
    a: &AbstractDataset,
    phia: &[Predicate],
    x: &[Value],
    depth: usize,
) -> Result<BTreeSet<usize>> {
    if depth == 0 {
        return Err(Error::Invalid("inference needs depth >= 1".into()));
    }
    if a.model.is_zero() {
        if a.data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let tree = concrete::train(&a.data, depth)?;
        return Ok([concrete::infer(&tree, x)].into());
    }
    let mut labels = BTreeSet::new();
    for phi in phia {
        let (left, right) = branch_children(a, phi);
        let child = if phi.eval(x) { left } else { right };
        labels.extend(node_labels(&child, x, depth - 1)?);
    }
    Ok(labels)
}

/// End-to-end check: normalize the model, compute the surviving root splits,
/// and collect every label the query point can reach. A singleton set is a
/// robustness certificate; anything else is reported as unknown together
/// with the reachable labels.
pub fn certify(t: &Dataset, model: &BiasModel, x: &[Value], depth: usize) -> Result<CertificationResult> {
    if t.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if depth == 0 {
        return Err(Error::Invalid("certification needs depth >= 1".into()));
    }
    let start = Instant::now();
    let n = normalize(model);
    let a = AbstractDataset::new(t.clone(), n);
    let predicates = enumerate_predicates(t)?;
    let (labels, root_split_count) = if a.model.is_zero() {
        let tree = concrete::train(t, depth)?;
        let labels: BTreeSet<usize> = [concrete::infer(&tree, x)].into();
        (labels, if predicates.is_empty() { 0 } else { 1 })
    } else if predicates.is_empty() {
        (node_labels(&a, x, 0)?, 0)
    } else {
        let phia = split_abstract(&a, &predicates)?;
        let count = phia.len();
        (infer_abstract(&a, &phia, x, depth)?, count)
    };
    let verdict = if labels.len() == 1 {
        Verdict::Robust(*labels.iter().next().unwrap())
    } else {
        Verdict::Unknown(labels.clone())
    };
    Ok(CertificationResult {
        verdict,
        labels,
        root_split_count,
        depth,
        elapsed: start.elapsed(),
    })
}
