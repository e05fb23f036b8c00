//! Arithmetic used by the simplex tableau.
//!
//! `f64` runs with absolute tolerances; [`Rational`] is exact and every
//! tolerance collapses to zero.

use std::cmp::Ordering;
use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub trait Scalar: Clone + Debug {
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn to_f64(&self) -> f64;
    fn cmp(&self, o: &Self) -> Ordering;

    /// Treat as zero when pivoting or testing reduced costs.
    fn is_zero(&self) -> bool;
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    /// Drop tiny round-off so the tableau keeps its sparsity.
    fn clean(self) -> Self {
        self
    }
    /// Nearest integer and whether the value already is one.
    fn nearest_int(&self) -> (i64, bool);
    fn floor_i64(&self) -> i64;
}

const F64_TOL: f64 = 1e-9;
const F64_DROP: f64 = 1e-12;
const F64_INT_TOL: f64 = 1e-6;

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn cmp(&self, o: &Self) -> Ordering {
        self.total_cmp(o)
    }
    fn is_zero(&self) -> bool {
        self.abs() <= F64_TOL
    }
    fn is_pos(&self) -> bool {
        *self > F64_TOL
    }
    fn is_neg(&self) -> bool {
        *self < -F64_TOL
    }
    fn clean(self) -> Self {
        if self.abs() < F64_DROP {
            0.0
        } else {
            self
        }
    }
    fn nearest_int(&self) -> (i64, bool) {
        let r = self.round();
        (r as i64, (self - r).abs() <= F64_INT_TOL)
    }
    fn floor_i64(&self) -> i64 {
        // values within tolerance of an integer floor to that integer
        let (r, is_int) = self.nearest_int();
        if is_int {
            r
        } else {
            self.floor() as i64
        }
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn cmp(&self, o: &Self) -> Ordering {
        Ord::cmp(self, o)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn nearest_int(&self) -> (i64, bool) {
        let r = self.round();
        let is_int = self.is_integer();
        (r.to_integer().to_i64().expect("integer overflow"), is_int)
    }
    fn floor_i64(&self) -> i64 {
        self.floor().to_integer().to_i64().expect("integer overflow")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_is_exact() {
        let third = Rational::from_i64(1).div(&Rational::from_i64(3));
        let sum = third.add(&third).add(&third);
        assert!(Scalar::is_zero(&sum.sub(&<Rational as Scalar>::one())));
        assert_eq!(third.floor_i64(), 0);
        assert_eq!(third.nearest_int(), (0, false));
    }

    #[test]
    fn float_tolerances() {
        assert!(Scalar::is_zero(&1e-10_f64));
        assert_eq!((2.0 - 1e-8_f64).nearest_int(), (2, true));
        assert_eq!((2.0 - 1e-8_f64).floor_i64(), 2);
        assert_eq!(2.5_f64.floor_i64(), 2);
        assert_eq!(1e-13_f64.clean(), 0.0);
    }
}
