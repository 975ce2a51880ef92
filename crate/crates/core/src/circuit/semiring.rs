use std::fmt;

/// A commutative semiring over leaf probabilities.
pub trait Semiring {
    type Value: Copy + PartialEq + fmt::Debug + Send + Sync;

    fn zero() -> Self::Value;
    fn one() -> Self::Value;
    fn plus(a: Self::Value, b: Self::Value) -> Self::Value;
    fn times(a: Self::Value, b: Self::Value) -> Self::Value;
    /// Embeds a leaf probability.
    fn leaf(p: f64) -> Self::Value;

    fn sum(values: impl Iterator<Item = Self::Value>) -> Self::Value {
        values.fold(Self::zero(), Self::plus)
    }

    fn product(values: impl Iterator<Item = Self::Value>) -> Self::Value {
        values.fold(Self::one(), Self::times)
    }
}

/// `(+, ×)` over linear probabilities.
#[derive(Debug, Clone, Copy)]
pub struct Prob;

impl Semiring for Prob {
    type Value = f64;

    fn zero() -> f64 {
        0.0
    }

    fn one() -> f64 {
        1.0
    }

    fn plus(a: f64, b: f64) -> f64 {
        a + b
    }

    fn times(a: f64, b: f64) -> f64 {
        a * b
    }

    fn leaf(p: f64) -> f64 {
        p
    }
}

/// `(+, ×)` carried in natural-log space.
#[derive(Debug, Clone, Copy)]
pub struct LogProb;

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl Semiring for LogProb {
    type Value = f64;

    fn zero() -> f64 {
        f64::NEG_INFINITY
    }

    fn one() -> f64 {
        0.0
    }

    fn plus(a: f64, b: f64) -> f64 {
        log_add_exp(a, b)
    }

    fn times(a: f64, b: f64) -> f64 {
        a + b
    }

    fn leaf(p: f64) -> f64 {
        p.ln()
    }

    fn sum(values: impl Iterator<Item = f64>) -> f64 {
        let values: Vec<f64> = values.collect();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max.is_infinite() {
            return max;
        }
        max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
    }
}

/// `(max, ×)`: value of the most probable derivation.
#[derive(Debug, Clone, Copy)]
pub struct Viterbi;

impl Semiring for Viterbi {
    type Value = f64;

    fn zero() -> f64 {
        0.0
    }

    fn one() -> f64 {
        1.0
    }

    fn plus(a: f64, b: f64) -> f64 {
        if b > a {
            b
        } else {
            a
        }
    }

    fn times(a: f64, b: f64) -> f64 {
        a * b
    }

    fn leaf(p: f64) -> f64 {
        p
    }
}

/// `(+, ×)` over naturals with every leaf at 1: counts derivations.
#[derive(Debug, Clone, Copy)]
pub struct Counting;

impl Semiring for Counting {
    type Value = u128;

    fn zero() -> u128 {
        0
    }

    fn one() -> u128 {
        1
    }

    fn plus(a: u128, b: u128) -> u128 {
        a.saturating_add(b)
    }

    fn times(a: u128, b: u128) -> u128 {
        a.saturating_mul(b)
    }

    fn leaf(_: f64) -> u128 {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        if a == b {
            return true;
        }
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
    }

    proptest! {
        #[test]
        fn prob_laws(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            prop_assert!(close(Prob::times(a, Prob::plus(b, c)), Prob::plus(Prob::times(a, b), Prob::times(a, c))));
            prop_assert!(close(Prob::plus(Prob::plus(a, b), c), Prob::plus(a, Prob::plus(b, c))));
            prop_assert_eq!(Prob::plus(a, Prob::zero()), a);
            prop_assert_eq!(Prob::times(a, Prob::one()), a);
            prop_assert_eq!(Prob::times(a, Prob::zero()), 0.0);
        }

        #[test]
        fn log_laws(a in 1e-6f64..1.0, b in 1e-6f64..1.0, c in 1e-6f64..1.0) {
            let (la, lb, lc) = (LogProb::leaf(a), LogProb::leaf(b), LogProb::leaf(c));
            prop_assert!(close(LogProb::times(la, LogProb::plus(lb, lc)), LogProb::plus(LogProb::times(la, lb), LogProb::times(la, lc))));
            prop_assert!(close(LogProb::plus(LogProb::plus(la, lb), lc), LogProb::plus(la, LogProb::plus(lb, lc))));
            prop_assert!(close(LogProb::plus(la, lb).exp(), a + b));
            prop_assert!(close(LogProb::sum([la, lb, lc].into_iter()), LogProb::plus(LogProb::plus(la, lb), lc)));
            prop_assert_eq!(LogProb::plus(la, LogProb::zero()), la);
            prop_assert_eq!(LogProb::times(la, LogProb::one()), la);
        }

        #[test]
        fn viterbi_laws(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            prop_assert!(close(Viterbi::times(a, Viterbi::plus(b, c)), Viterbi::plus(Viterbi::times(a, b), Viterbi::times(a, c))));
            prop_assert_eq!(Viterbi::plus(Viterbi::plus(a, b), c), Viterbi::plus(a, Viterbi::plus(b, c)));
            prop_assert_eq!(Viterbi::plus(a, b), Viterbi::plus(b, a));
            prop_assert_eq!(Viterbi::plus(a, Viterbi::zero()), a);
            prop_assert!(Viterbi::plus(a, b) <= Prob::plus(a, b));
        }

        #[test]
        fn counting_laws(a in 0u128..1000, b in 0u128..1000, c in 0u128..1000) {
            prop_assert_eq!(Counting::times(a, Counting::plus(b, c)), Counting::plus(Counting::times(a, b), Counting::times(a, c)));
            prop_assert_eq!(Counting::times(Counting::times(a, b), c), Counting::times(a, Counting::times(b, c)));
        }
    }

    #[test]
    fn log_sum_of_nothing_is_zero() {
        assert_eq!(LogProb::sum(std::iter::empty()), f64::NEG_INFINITY);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
    }
}
