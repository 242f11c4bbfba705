//! Exact rational helpers shared by the solver and the certificate checker.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};

/// Exact value stored in certificates. Every quantity the solver produces has
/// numerator and denominator bounded well inside `i128` (counts are capped at
/// 2^20), so reductions never overflow.
pub type Rational = Ratio<i128>;

pub fn to_big(r: &Rational) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

pub fn to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `(num, den)` pair for JSON export.
pub fn to_pair(r: &Rational) -> [i128; 2] {
    [*r.numer(), *r.denom()]
}

pub fn big_to_string(r: &BigRational) -> String {
    if r.denom() == &BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
