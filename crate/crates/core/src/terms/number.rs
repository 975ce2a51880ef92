use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// An exact number: arbitrary-precision integer or rational.
///
/// Values are kept normalized: integers that fit in `i64` are `Int`, rationals
/// with denominator 1 are integers. Structural equality is numeric equality.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Number {
    Int(i64),
    Big(Arc<BigInt>),
    Rat(Arc<BigRational>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArithError {
    #[error("division by zero")]
    ZeroDivision,
    #[error("{0} expects integer arguments")]
    NotInteger(&'static str),
    #[error("exponent too large")]
    ExponentTooLarge,
}

impl Number {
    pub fn from_bigint(value: BigInt) -> Number {
        match value.to_i64() {
            Some(small) => Number::Int(small),
            None => Number::Big(Arc::new(value)),
        }
    }

    pub fn from_ratio(value: BigRational) -> Number {
        if value.denom().is_one() {
            Number::from_bigint(value.numer().clone())
        } else {
            Number::Rat(Arc::new(value))
        }
    }

    /// `numer / denom` reduced; `denom` must be nonzero.
    pub fn ratio(numer: i64, denom: i64) -> Result<Number, ArithError> {
        if denom == 0 {
            return Err(ArithError::ZeroDivision);
        }
        Ok(Number::from_ratio(BigRational::new(numer.into(), denom.into())))
    }

    pub fn is_integer(&self) -> bool {
        !matches!(self, Number::Rat(_))
    }

    pub fn to_bigint(&self) -> Option<BigInt> {
        match self {
            Number::Int(v) => Some(BigInt::from(*v)),
            Number::Big(v) => Some((**v).clone()),
            Number::Rat(_) => None,
        }
    }

    pub fn to_ratio(&self) -> BigRational {
        match self {
            Number::Int(v) => BigRational::from_integer(BigInt::from(*v)),
            Number::Big(v) => BigRational::from_integer((**v).clone()),
            Number::Rat(v) => (**v).clone(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Number::Int(v) => *v as f64,
            Number::Big(v) => v.to_f64().unwrap_or(f64::NAN),
            Number::Rat(v) => v.to_f64().unwrap_or(f64::NAN),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Number::Int(0))
    }

    pub fn signum(&self) -> i32 {
        match self {
            Number::Int(v) => v.signum() as i32,
            Number::Big(v) => {
                if v.is_negative() {
                    -1
                } else {
                    1
                }
            }
            Number::Rat(v) => {
                if v.is_negative() {
                    -1
                } else {
                    1
                }
            }
        }
    }

    pub fn add(&self, other: &Number) -> Number {
        if let (Number::Int(a), Number::Int(b)) = (self, other) {
            if let Some(sum) = a.checked_add(*b) {
                return Number::Int(sum);
            }
        }
        Number::from_ratio(self.to_ratio() + other.to_ratio())
    }

    pub fn sub(&self, other: &Number) -> Number {
        if let (Number::Int(a), Number::Int(b)) = (self, other) {
            if let Some(diff) = a.checked_sub(*b) {
                return Number::Int(diff);
            }
        }
        Number::from_ratio(self.to_ratio() - other.to_ratio())
    }

    pub fn mul(&self, other: &Number) -> Number {
        if let (Number::Int(a), Number::Int(b)) = (self, other) {
            if let Some(product) = a.checked_mul(*b) {
                return Number::Int(product);
            }
        }
        Number::from_ratio(self.to_ratio() * other.to_ratio())
    }

    /// Exact division; integer operands that do not divide evenly give a rational.
    pub fn div(&self, other: &Number) -> Result<Number, ArithError> {
        if other.is_zero() {
            return Err(ArithError::ZeroDivision);
        }
        if let (Number::Int(a), Number::Int(b)) = (self, other) {
            if *b != -1 && a % b == 0 {
                return Ok(Number::Int(a / b));
            }
        }
        Ok(Number::from_ratio(self.to_ratio() / other.to_ratio()))
    }

    /// Integer division truncating toward zero.
    pub fn int_div(&self, other: &Number) -> Result<Number, ArithError> {
        let (a, b) = self.integer_pair(other, "//")?;
        if b.is_zero() {
            return Err(ArithError::ZeroDivision);
        }
        Ok(Number::from_bigint(a / b))
    }

    /// Modulo with the sign of the divisor.
    pub fn modulo(&self, other: &Number) -> Result<Number, ArithError> {
        let (a, b) = self.integer_pair(other, "mod")?;
        if b.is_zero() {
            return Err(ArithError::ZeroDivision);
        }
        Ok(Number::from_bigint(a.mod_floor(&b)))
    }

    /// Remainder with the sign of the dividend.
    pub fn rem(&self, other: &Number) -> Result<Number, ArithError> {
        let (a, b) = self.integer_pair(other, "rem")?;
        if b.is_zero() {
            return Err(ArithError::ZeroDivision);
        }
        Ok(Number::from_bigint(a % b))
    }

    pub fn pow(&self, exponent: &Number) -> Result<Number, ArithError> {
        let exp = match exponent {
            Number::Int(e) => *e,
            Number::Big(_) => return Err(ArithError::ExponentTooLarge),
            Number::Rat(_) => return Err(ArithError::NotInteger("**")),
        };
        if exp.unsigned_abs() > 1 << 16 {
            return Err(ArithError::ExponentTooLarge);
        }
        let base = self.to_ratio();
        if exp < 0 && base.is_zero() {
            return Err(ArithError::ZeroDivision);
        }
        let mut result = BigRational::one();
        for _ in 0..exp.unsigned_abs() {
            result *= &base;
        }
        if exp < 0 {
            result = result.recip();
        }
        Ok(Number::from_ratio(result))
    }

    pub fn neg(&self) -> Number {
        match self {
            Number::Int(v) => match v.checked_neg() {
                Some(n) => Number::Int(n),
                None => Number::from_bigint(-BigInt::from(*v)),
            },
            Number::Big(v) => Number::from_bigint(-(**v).clone()),
            Number::Rat(v) => Number::from_ratio(-(**v).clone()),
        }
    }

    pub fn abs(&self) -> Number {
        if self.signum() < 0 {
            self.neg()
        } else {
            self.clone()
        }
    }

    fn integer_pair(&self, other: &Number, op: &'static str) -> Result<(BigInt, BigInt), ArithError> {
        match (self.to_bigint(), other.to_bigint()) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(ArithError::NotInteger(op)),
        }
    }

    /// Terminating decimal expansion, when the denominator has only factors 2 and 5.
    fn decimal_string(ratio: &BigRational) -> Option<String> {
        let mut denom = ratio.denom().clone();
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let (mut twos, mut fives) = (0u32, 0u32);
        while (&denom % &two).is_zero() {
            denom /= &two;
            twos += 1;
        }
        while (&denom % &five).is_zero() {
            denom /= &five;
            fives += 1;
        }
        if !denom.is_one() {
            return None;
        }
        let digits = twos.max(fives);
        if digits > 40 {
            return None;
        }
        let scaled = ratio * BigRational::from_integer(num_traits::pow(BigInt::from(10), digits as usize));
        let scaled = scaled.to_integer();
        let negative = scaled.is_negative();
        let text = scaled.abs().to_string();
        let text = format!("{:0>width$}", text, width = digits as usize + 1);
        let (int_part, frac_part) = text.split_at(text.len() - digits as usize);
        Some(format!("{}{}.{}", if negative { "-" } else { "" }, int_part, frac_part))
    }
}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Number::Int(a), Number::Int(b)) => a.cmp(b),
            _ => self.to_ratio().cmp(&other.to_ratio()),
        }
    }
}

impl From<i64> for Number {
    fn from(v: i64) -> Self {
        Number::Int(v)
    }
}

/// Integers print plainly; rationals print as exact decimals when the
/// expansion terminates (`0.33`) and as `NrD` otherwise (`1r3`).
impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Int(v) => write!(f, "{v}"),
            Number::Big(v) => write!(f, "{v}"),
            Number::Rat(v) => match Number::decimal_string(v) {
                Some(text) => f.write_str(&text),
                None => write!(f, "{}r{}", v.numer(), v.denom()),
            },
        }
    }
}

impl fmt::Debug for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
