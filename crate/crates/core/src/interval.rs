//! Closed intervals with exact rational endpoints.
//!
//! Every quantity the certifier reasons about (label proportions, Gini
//! impurity, split costs) is carried in these intervals. All arithmetic is
//! exact; no rounding ever happens on the computation path. Decimal output
//! exists only for display.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed};
use std::fmt;

/// Exact rational number (arbitrary precision, always in lowest terms).
pub type Rat = num_rational::BigRational;

/// Build a rational from an integer pair. Panics on zero denominator.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Rational from an integer.
pub fn rint(n: usize) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Closed interval `[lo, hi]` over the rationals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    lo: Rat,
    hi: Rat,
}

impl Interval {
    /// Panics if `lo > hi`; intervals are always well-formed.
    pub fn new(lo: Rat, hi: Rat) -> Interval {
        assert!(lo <= hi, "interval endpoints out of order: [{}, {}]", lo, hi);
        Interval { lo, hi }
    }

    pub fn point(v: Rat) -> Interval {
        Interval { lo: v.clone(), hi: v }
    }

    pub fn lo(&self) -> &Rat {
        &self.lo
    }

    pub fn hi(&self) -> &Rat {
        &self.hi
    }

    pub fn contains(&self, v: &Rat) -> bool {
        &self.lo <= v && v <= &self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    /// `[a,b] + [c,d] = [a+c, b+d]`
    pub fn add(&self, other: &Interval) -> Interval {
        Interval {
            lo: &self.lo + &other.lo,
            hi: &self.hi + &other.hi,
        }
    }

    /// `[a,b] * [c,d]` = hull of the four endpoint products.
    pub fn mul(&self, other: &Interval) -> Interval {
        let mut products = [
            &self.lo * &other.lo,
            &self.lo * &other.hi,
            &self.hi * &other.lo,
            &self.hi * &other.hi,
        ];
        products.sort();
        let [lo, _, _, hi] = products;
        Interval { lo, hi }
    }

    pub fn scale(&self, k: &Rat) -> Interval {
        if k.is_negative() {
            Interval {
                lo: &self.hi * k,
                hi: &self.lo * k,
            }
        } else {
            Interval {
                lo: &self.lo * k,
                hi: &self.hi * k,
            }
        }
    }

    /// Intersection; `None` when disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = if self.lo >= other.lo { self.lo.clone() } else { other.lo.clone() };
        let hi = if self.hi <= other.hi { self.hi.clone() } else { other.hi.clone() };
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    /// Exact image of `x * (1 - x)` over the interval.
    ///
    /// The Gini impurity sums this term per label. Evaluating it as the
    /// image of the unary map (rather than multiplying `[a,b]` by `[1-b,1-a]`
    /// as independent intervals) avoids the classic dependency blow-up and is
    /// what keeps the split set small enough to certify anything.
    pub fn gini_term(&self) -> Interval {
        let q = |x: &Rat| x * &(Rat::one() - x);
        let at_lo = q(&self.lo);
        let at_hi = q(&self.hi);
        let lo = if at_lo <= at_hi { at_lo.clone() } else { at_hi.clone() };
        let half = rat(1, 2);
        let hi = if self.lo <= half && half <= self.hi {
            rat(1, 4)
        } else if at_lo >= at_hi {
            at_lo
        } else {
            at_hi
        };
        Interval { lo, hi }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Greatest-lower-bound argmax: indices whose interval can still hold the
/// maximum. With `glb = max_i lo_i`, returns `{ i : hi_i >= glb }`. Ties are
/// included — inclusion is the sound direction.
pub fn interval_argmax_set(v: &[Interval]) -> Vec<usize> {
    assert!(!v.is_empty(), "argmax of empty interval vector");
    let glb = v.iter().map(|iv| &iv.lo).max().unwrap().clone();
    let out: Vec<usize> = (0..v.len()).filter(|&i| v[i].hi >= glb).collect();
    debug_assert!(!out.is_empty());
    out
}

/// Render a non-negative rational as a decimal string with `digits` places,
/// rounding half-to-even. Display-only; certification never rounds.
pub fn to_decimal(r: &Rat, digits: u32) -> String {
    let sign = if r.is_negative() { "-" } else { "" };
    let r = r.abs();
    let scale = BigInt::from(10u32).pow(digits);
    let num = r.numer() * &scale;
    let (mut q, rem) = num.div_rem(r.denom());
    let twice = &rem * BigInt::from(2);
    let den = r.denom().clone();
    if twice > den || (twice == den && q.is_odd()) {
        q += 1;
    }
    let s = q.to_string();
    if digits == 0 {
        return format!("{}{}", sign, s);
    }
    let d = digits as usize;
    let padded = if s.len() <= d {
        format!("{}{}", "0".repeat(d + 1 - s.len()), s)
    } else {
        s
    };
    let split = padded.len() - d;
    format!("{}{}.{}", sign, &padded[..split], &padded[split..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn add_follows_endpoint_rule() {
        let a = Interval::new(rat(1, 1), rat(2, 1));
        let b = Interval::new(rat(3, 1), rat(4, 1));
        assert_eq!(a.add(&b), Interval::new(rat(4, 1), rat(6, 1)));
    }

    #[test]
    fn add_zero_is_identity() {
        let a = Interval::new(rat(-3, 7), rat(11, 5));
        assert_eq!(a.add(&Interval::point(rat(0, 1))), a);
    }

    #[test]
    fn mul_positive_case() {
        let a = Interval::new(rat(1, 1), rat(2, 1));
        let b = Interval::new(rat(3, 1), rat(4, 1));
        assert_eq!(a.mul(&b), Interval::new(rat(3, 1), rat(8, 1)));
    }

    #[test]
    fn mul_mixed_sign_case() {
        let a = Interval::new(rat(-1, 1), rat(1, 1));
        assert_eq!(a.mul(&a), Interval::new(rat(-1, 1), rat(1, 1)));
    }

    #[test]
    fn argmax_keeps_overlapping_candidates() {
        // {[1,2],[4,8],[6,7],[4,5]} -> the two intervals reaching past glb=6
        let v = vec![
            Interval::new(rat(1, 1), rat(2, 1)),
            Interval::new(rat(4, 1), rat(8, 1)),
            Interval::new(rat(6, 1), rat(7, 1)),
            Interval::new(rat(4, 1), rat(5, 1)),
        ];
        assert_eq!(interval_argmax_set(&v), vec![1, 2]);
    }

    #[test]
    fn argmax_separated() {
        let v = vec![
            Interval::new(rat(0, 1), rat(1, 5)),
            Interval::new(rat(4, 5), rat(1, 1)),
        ];
        assert_eq!(interval_argmax_set(&v), vec![1]);
    }

    #[test]
    fn argmax_tie_at_glb_includes_both() {
        let v = vec![
            Interval::new(rat(2, 5), rat(3, 5)),
            Interval::new(rat(1, 2), rat(7, 10)),
        ];
        assert_eq!(interval_argmax_set(&v), vec![0, 1]);
    }

    #[test]
    fn gini_term_spans_quarter_when_half_inside() {
        let iv = Interval::new(rat(0, 1), rat(1, 1));
        assert_eq!(iv.gini_term(), Interval::new(rat(0, 1), rat(1, 4)));
    }

    #[test]
    fn gini_term_monotone_piece() {
        // [3/4, 1]: x(1-x) decreasing there -> [0, 3/16]
        let iv = Interval::new(rat(3, 4), rat(1, 1));
        assert_eq!(iv.gini_term(), Interval::new(rat(0, 1), rat(3, 16)));
    }

    #[test]
    fn decimal_rounding_is_half_even() {
        assert_eq!(to_decimal(&rat(1, 8), 2), "0.12"); // 0.125 -> even neighbor
        assert_eq!(to_decimal(&rat(3, 8), 2), "0.38"); // 0.375 -> even neighbor
        assert_eq!(to_decimal(&rat(715, 10), 1), "71.5");
        assert_eq!(to_decimal(&rat(3, 4), 0), "1");
    }

    fn arb_rat() -> impl Strategy<Value = Rat> {
        (-50i64..50, 1i64..20).prop_map(|(n, d)| rat(n, d))
    }

    fn arb_interval() -> impl Strategy<Value = Interval> {
        (arb_rat(), arb_rat()).prop_map(|(a, b)| {
            if a <= b {
                Interval::new(a, b)
            } else {
                Interval::new(b, a)
            }
        })
    }

    proptest! {
        #[test]
        fn add_contains_member_sums(a in arb_interval(), b in arb_interval(),
                                    ta in 0u8..=4, tb in 0u8..=4) {
            // pick points inside a and b by convex combination
            let pick = |iv: &Interval, t: u8| {
                let t = rat(t as i64, 4);
                iv.lo() * &(Rat::one() - &t) + iv.hi() * &t
            };
            let x = pick(&a, ta);
            let y = pick(&b, tb);
            prop_assert!(a.add(&b).contains(&(x + y)));
        }

        #[test]
        fn mul_contains_member_products(a in arb_interval(), b in arb_interval(),
                                        ta in 0u8..=4, tb in 0u8..=4) {
            let pick = |iv: &Interval, t: u8| {
                let t = rat(t as i64, 4);
                iv.lo() * &(Rat::one() - &t) + iv.hi() * &t
            };
            let x = pick(&a, ta);
            let y = pick(&b, tb);
            prop_assert!(a.mul(&b).contains(&(x * y)));
        }

        #[test]
        fn gini_term_contains_pointwise(a in arb_interval(), t in 0u8..=8) {
            let t = rat(t as i64, 8);
            let x = a.lo() * &(Rat::one() - &t) + a.hi() * &t;
            let v = &x * &(Rat::one() - &x);
            prop_assert!(a.gini_term().contains(&v));
        }

        #[test]
        fn argmax_covers_bruteforce_endpoint_selections(
            v in proptest::collection::vec(arb_interval(), 1..=4)
        ) {
            // every index that can be a strict maximum under some endpoint
            // selection must appear in the argmax set
            let res = interval_argmax_set(&v);
            let n = v.len();
            for selection in 0..(1u32 << n) {
                let xs: Vec<Rat> = (0..n)
                    .map(|i| if selection >> i & 1 == 1 { v[i].hi().clone() } else { v[i].lo().clone() })
                    .collect();
                for i in 0..n {
                    let strict_max = (0..n).all(|j| j == i || xs[j] < xs[i]);
                    if strict_max {
                        prop_assert!(res.contains(&i));
                    }
                }
            }
        }
    }
}
