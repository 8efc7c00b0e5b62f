//! Stratified certification rates over a batch of query points.
//!
//! Each group is a feature-only predicate; points may fall into several
//! groups, and an implicit `all` group always comes first. Percentages are
//! rendered to one decimal with round-half-to-even.

use crate::dataset::{TargetPredicate, Value};
use crate::error::{Error, Result};
use crate::interval::{rat, rint, to_decimal};

#[derive(Clone, Debug)]
pub struct Group {
    pub name: String,
    pub target: TargetPredicate,
}

impl Group {
    pub fn new(name: &str, target: TargetPredicate) -> Result<Group> {
        if target.has_label_atom() {
            return Err(Error::Invalid(format!(
                "group '{}' must test features only",
                name
            )));
        }
        Ok(Group {
            name: name.to_string(),
            target,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupRate {
    pub name: String,
    pub n: usize,
    pub certified: usize,
}

impl GroupRate {
    /// Percentage certified, one decimal, round-half-to-even; `n/a` when the
    /// group is empty.
    pub fn rate_pct(&self) -> String {
        if self.n == 0 {
            return "n/a".to_string();
        }
        let pct = rint(self.certified) * rat(100, 1) / rint(self.n);
        to_decimal(&pct, 1)
    }
}

/// Tally certified points overall and per group. `points` pairs each query
/// point with whether certification succeeded, in input order.
pub fn stratified_rates(points: &[(Vec<Value>, bool)], groups: &[Group]) -> Vec<GroupRate> {
    let mut out = Vec::with_capacity(groups.len() + 1);
    out.push(GroupRate {
        name: "all".to_string(),
        n: points.len(),
        certified: points.iter().filter(|(_, ok)| *ok).count(),
    });
    for g in groups {
        let hits: Vec<&(Vec<Value>, bool)> = points
            .iter()
            .filter(|(x, _)| g.target.eval(x, 0))
            .collect();
        out.push(GroupRate {
            name: g.name.clone(),
            n: hits.len(),
            certified: hits.iter().filter(|(_, ok)| *ok).count(),
        });
    }
    out
}

/// CSV rendering: header `group,n,certified,rate_pct`, one row per group.
pub fn rates_to_csv(rates: &[GroupRate]) -> String {
    let mut s = String::from("group,n,certified,rate_pct\n");
    for r in rates {
        s.push_str(&format!("{},{},{},{}\n", r.name, r.n, r.certified, r.rate_pct()));
    }
    s
}

/// JSON rendering with the same fields; `rate_pct` stays a string so the
/// fixed one-decimal formatting survives.
pub fn rates_to_json(rates: &[GroupRate]) -> serde_json::Value {
    serde_json::Value::Array(
        rates
            .iter()
            .map(|r| {
                serde_json::json!({
                    "group": r.name,
                    "n": r.n,
                    "certified": r.certified,
                    "rate_pct": r.rate_pct(),
                })
            })
            .collect(),
    )
}
