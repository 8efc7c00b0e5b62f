//! The deterministic CART-style learner being certified.
//!
//! Gini impurity, split cost, best split with a fixed tie-break, training to
//! an exact depth, and inference. Determinism matters: the bias-set
//! semantics treat the learner as a function, so ties are broken by
//! canonical predicate order and by lowest label index, never arbitrarily.
//!
//! There is no purity early-stopping: a node only becomes a leaf before the
//! depth limit when no valid predicate exists on its rows. This keeps the
//! concrete learner aligned with the abstract one, which cannot observe
//! purity reliably.

use crate::dataset::{enumerate_predicates, partition, Dataset, Predicate, Value};
use crate::error::{Error, Result};
use crate::interval::{rint, Rat};
use num_traits::{One, Zero};
use serde_json::json;

/// Label proportions `c_i / |T|`.
pub fn pr(t: &Dataset) -> Result<Vec<Rat>> {
    if t.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let size = rint(t.len());
    Ok(t.label_counts()
        .into_iter()
        .map(|c| rint(c) / &size)
        .collect())
}

/// Gini impurity `sum_i p_i (1 - p_i)`, in `[0, 1 - 1/n]`.
pub fn gini(t: &Dataset) -> Result<Rat> {
    let probs = pr(t)?;
    Ok(probs
        .iter()
        .map(|p| p * &(Rat::one() - p))
        .fold(Rat::zero(), |a, b| a + b))
}

/// Split cost `|T_phi| * imp(T_phi) + |T_notphi| * imp(T_notphi)`; an empty
/// side contributes zero.
pub fn cost(t: &Dataset, phi: &Predicate) -> Result<Rat> {
    if t.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (yes, no) = partition(t, phi);
    let side = |s: &Dataset| -> Result<Rat> {
        if s.is_empty() {
            Ok(Rat::zero())
        } else {
            Ok(rint(s.len()) * gini(s)?)
        }
    };
    Ok(side(&yes)? + side(&no)?)
}

/// Side cost as an exact integer fraction (num, den) with den = |side|:
/// `|S| * imp(S) = |S| - (sum_i c_i^2) / |S|` = `(|S|^2 - sum c_i^2) / |S|`.
/// Used to pick the best split without allocating big rationals.
fn side_cost_frac(counts: &[usize], size: usize) -> (u128, u128) {
    if size == 0 {
        return (0, 1);
    }
    let sq_sum: u128 = counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
    let s = size as u128;
    (s * s - sq_sum, s)
}

/// Argmin of cost over the canonical predicate list; ties go to the earliest
/// predicate in canonical order.
pub fn best_split(t: &Dataset, predicates: &[Predicate]) -> Result<Predicate> {
    if predicates.is_empty() {
        return Err(Error::Invalid("best_split needs a non-empty predicate list".into()));
    }
    let arity = t.schema.label_arity;
    let total = t.label_counts();
    let mut best: Option<(u128, u128, usize)> = None; // (num, den, index)
    for (idx, phi) in predicates.iter().enumerate() {
        let mut yes_counts = vec![0usize; arity];
        let mut yes_size = 0usize;
        for r in &t.rows {
            if phi.eval(&r.x) {
                yes_counts[r.y] += 1;
                yes_size += 1;
            }
        }
        let no_counts: Vec<usize> = total.iter().zip(&yes_counts).map(|(a, b)| a - b).collect();
        let (n1, d1) = side_cost_frac(&yes_counts, yes_size);
        let (n2, d2) = side_cost_frac(&no_counts, t.len() - yes_size);
        // total = n1/d1 + n2/d2 = (n1 d2 + n2 d1) / (d1 d2)
        let num = n1 * d2 + n2 * d1;
        let den = d1 * d2;
        let better = match &best {
            None => true,
            Some((bn, bd, _)) => num * bd < bn * den, // strict: keeps earliest on ties
        };
        if better {
            best = Some((num, den, idx));
        }
    }
    Ok(predicates[best.unwrap().2].clone())
}

/// A trained tree. Leaves store their node's label counts; the prediction is
/// the argmax with ties broken toward the lowest label index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeNode {
    Leaf {
        counts: Vec<usize>,
        predicted: usize,
    },
    Internal {
        predicate: Predicate,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

fn leaf(t: &Dataset) -> TreeNode {
    let counts = t.label_counts();
    let predicted = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))) // max count, then lowest index
        .map(|(i, _)| i)
        .unwrap_or(0);
    TreeNode::Leaf { counts, predicted }
}

/// Train to exactly `depth` levels of splits. A node stops early only when
/// its own rows admit no predicate.
pub fn train(t: &Dataset, depth: usize) -> Result<TreeNode> {
    if t.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if depth == 0 {
        return Ok(leaf(t));
    }
    let predicates = enumerate_predicates(t)?;
    if predicates.is_empty() {
        return Ok(leaf(t));
    }
    let phi = best_split(t, &predicates)?;
    let (yes, no) = partition(t, &phi);
    Ok(TreeNode::Internal {
        predicate: phi,
        left: Box::new(train(&yes, depth - 1)?),
        right: Box::new(train(&no, depth - 1)?),
    })
}

/// Route a point down the tree; left branch is the predicate-true side.
pub fn infer(tree: &TreeNode, x: &[Value]) -> usize {
    match tree {
        TreeNode::Leaf { predicted, .. } => *predicted,
        TreeNode::Internal { predicate, left, right } => {
            if predicate.eval(x) {
                infer(left, x)
            } else {
                infer(right, x)
            }
        }
    }
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// JSON form: internal nodes `{predicate, left, right}` with the
    /// predicate rendered as `feature<=value` / `feature=value`; leaves
    /// `{counts, predicted}`.
    pub fn to_json(&self, schema: &crate::dataset::FeatureSchema) -> serde_json::Value {
        match self {
            TreeNode::Leaf { counts, predicted } => json!({
                "counts": counts,
                "predicted": predicted,
            }),
            TreeNode::Internal { predicate, left, right } => json!({
                "predicate": predicate.render(schema),
                "left": left.to_json(schema),
                "right": right.to_json(schema),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{loan_fixture, Predicate, Row, Test};
    use crate::interval::rat;

    fn score_le(v: i64) -> Predicate {
        Predicate {
            feature: 1,
            test: Test::Le(rat(v, 1)),
        }
    }

    #[test]
    fn pr_on_right_branch_of_fixture() {
        let t = loan_fixture();
        let (_, right) = partition(&t, &score_le(3));
        assert_eq!(pr(&right).unwrap(), vec![rat(1, 5), rat(4, 5)]);
    }

    #[test]
    fn pr_sums_to_one() {
        let t = loan_fixture();
        let total: Rat = pr(&t).unwrap().into_iter().fold(Rat::zero(), |a, b| a + b);
        assert_eq!(total, Rat::one());
    }

    #[test]
    fn gini_matches_worked_values() {
        let t = loan_fixture();
        let (left, right) = partition(&t, &score_le(3));
        assert_eq!(gini(&left).unwrap(), Rat::zero()); // pure
        assert_eq!(gini(&right).unwrap(), rat(8, 25)); // 0.32
    }

    #[test]
    fn gini_balanced_is_half() {
        let t = loan_fixture();
        let rows = vec![t.rows[0].clone(), t.rows[4].clone()];
        let t2 = Dataset::new(t.schema.clone(), rows);
        assert_eq!(gini(&t2).unwrap(), rat(1, 2));
    }

    #[test]
    fn cost_matches_worked_value() {
        let t = loan_fixture();
        assert_eq!(cost(&t, &score_le(3)).unwrap(), rat(8, 5)); // 4*0 + 5*0.32
    }

    #[test]
    fn cost_is_symmetric_in_branch_roles() {
        // same bipartition via complementary categorical tests
        let t = loan_fixture();
        let black = Predicate {
            feature: 0,
            test: Test::Eq("Black".into()),
        };
        let white = Predicate {
            feature: 0,
            test: Test::Eq("White".into()),
        };
        assert_eq!(cost(&t, &black).unwrap(), cost(&t, &white).unwrap());
    }

    #[test]
    fn best_split_is_score_le_3() {
        let t = loan_fixture();
        let preds = enumerate_predicates(&t).unwrap();
        assert_eq!(best_split(&t, &preds).unwrap(), score_le(3));
    }

    #[test]
    fn best_split_tie_takes_canonical_first() {
        // pure dataset: every split costs 0, so the first predicate wins
        let t = loan_fixture();
        let rows: Vec<Row> = t.rows.iter().filter(|r| r.y == 0).cloned().collect();
        let t2 = Dataset::new(t.schema.clone(), rows);
        let preds = enumerate_predicates(&t2).unwrap();
        assert_eq!(best_split(&t2, &preds).unwrap(), preds[0]);
    }

    #[test]
    fn best_split_matches_rational_costs_exhaustively() {
        // dual route: the integer-fraction fast path must agree with the
        // rational cost definition on every predicate
        let t = loan_fixture();
        let preds = enumerate_predicates(&t).unwrap();
        let chosen = best_split(&t, &preds).unwrap();
        let costs: Vec<Rat> = preds.iter().map(|p| cost(&t, p).unwrap()).collect();
        let min = costs.iter().min().unwrap();
        let first_min = preds
            .iter()
            .zip(&costs)
            .find(|(_, c)| *c == min)
            .map(|(p, _)| p.clone())
            .unwrap();
        assert_eq!(chosen, first_min);
    }

    #[test]
    fn stump_on_fixture() {
        let t = loan_fixture();
        let tree = train(&t, 1).unwrap();
        match &tree {
            TreeNode::Internal { predicate, left, right } => {
                assert_eq!(*predicate, score_le(3));
                assert_eq!(
                    **left,
                    TreeNode::Leaf {
                        counts: vec![4, 0],
                        predicted: 0
                    }
                );
                assert_eq!(
                    **right,
                    TreeNode::Leaf {
                        counts: vec![1, 4],
                        predicted: 1
                    }
                );
            }
            _ => panic!("expected a stump"),
        }
    }

    #[test]
    fn infer_routes_fixture_points() {
        let t = loan_fixture();
        let tree = train(&t, 1).unwrap();
        let black7 = vec![Value::Cat("Black".into()), Value::Num(rat(7, 1))];
        let white0 = vec![Value::Cat("White".into()), Value::Num(rat(0, 1))];
        assert_eq!(infer(&tree, &black7), 1);
        assert_eq!(infer(&tree, &white0), 0);
    }

    #[test]
    fn single_leaf_tree_predicts_everywhere() {
        let t = loan_fixture();
        let one = Dataset::new(t.schema.clone(), vec![t.rows[4].clone()]);
        let tree = train(&one, 3).unwrap();
        assert_eq!(tree.depth(), 0);
        let black7 = vec![Value::Cat("Black".into()), Value::Num(rat(7, 1))];
        assert_eq!(infer(&tree, &black7), 1);
    }

    #[test]
    fn depth_never_exceeds_request() {
        let t = loan_fixture();
        for d in 0..4 {
            assert!(train(&t, d).unwrap().depth() <= d);
        }
    }

    #[test]
    fn depth_two_resplits_sides() {
        let t = loan_fixture();
        let tree = train(&t, 2).unwrap();
        assert_eq!(tree.depth(), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let t = loan_fixture();
        let a = train(&t, 2).unwrap().to_json(&t.schema).to_string();
        let b = train(&t, 2).unwrap().to_json(&t.schema).to_string();
        assert_eq!(a, b);
    }

    #[test]
    fn leaf_tiebreak_prefers_lowest_label() {
        let t = loan_fixture();
        let rows = vec![t.rows[0].clone(), t.rows[4].clone()]; // one of each label
        let t2 = Dataset::new(t.schema.clone(), rows);
        match train(&t2, 0).unwrap() {
            TreeNode::Leaf { predicted, .. } => assert_eq!(predicted, 0),
            _ => panic!(),
        }
    }

    #[test]
    fn tree_json_shape() {
        let t = loan_fixture();
        let v = train(&t, 1).unwrap().to_json(&t.schema);
        assert_eq!(v["predicate"], "score<=3");
        assert_eq!(v["left"]["counts"][0], 4);
        assert_eq!(v["right"]["predicted"], 1);
    }
}
