//! Scalar types for probabilities.
//!
//! Every algorithm in the crate is generic over [`Scalar`]. Floating point
//! (`f64`, `f32`) is the default; [`Rational`] gives exact arithmetic, under
//! which forward solving followed by inversion reproduces a kernel bit for bit.
//!
//! The inversion divides a small difference of large path sums by a product
//! of many transition probabilities, so float inputs are lifted to
//! [`Scalar::Wide`] (double-double for `f64`) before it runs.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive, Zero};

/// Arbitrary precision rational number.
pub type Rational = BigRational;

/// Unevaluated sum of two `f64`s, about 106 significant bits.
pub type DoubleDouble = twofloat::TwoFloat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithmeticMode {
    Float64,
    ExactRational,
}

impl ArithmeticMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ArithmeticMode::Float64 => "float",
            ArithmeticMode::ExactRational => "rational",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "float" => Some(ArithmeticMode::Float64),
            "rational" => Some(ArithmeticMode::ExactRational),
            _ => None,
        }
    }
}

/// A probability-valued number type.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    const MODE: ArithmeticMode;

    /// Type the inversion runs in: double-double for `f64`, `f64` for `f32`,
    /// the type itself otherwise.
    type Wide: Scalar;

    fn widen(&self) -> Self::Wide;

    fn narrow(wide: &Self::Wide) -> Self;

    /// `num / den`, rounded in float modes.
    fn from_ratio(num: u64, den: u64) -> Self;

    /// Exact conversion of a finite binary float (rounded for `f32`).
    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    /// Text form used by every file format: 17 significant digits for floats,
    /// `num/den` for rationals.
    fn to_text(&self) -> String;

    /// Accepts decimals (with optional exponent) and `num/den` fractions.
    fn parse_text(s: &str) -> Option<Self>;

    /// Sum of `items`. The `f64` version compensates for rounding.
    fn sum_of(items: impl IntoIterator<Item = Self>) -> Self {
        items.into_iter().fold(Self::zero(), |acc, x| acc + x)
    }

    fn is_exact() -> bool {
        Self::MODE == ArithmeticMode::ExactRational
    }

    /// Equality at `tol` in float modes, exact equality otherwise.
    fn close_to(&self, other: &Self, tol: f64) -> bool {
        if Self::is_exact() {
            self == other
        } else {
            (self.to_f64() - other.to_f64()).abs() <= tol
        }
    }
}

impl Scalar for f64 {
    const MODE: ArithmeticMode = ArithmeticMode::Float64;
    type Wide = DoubleDouble;

    fn widen(&self) -> DoubleDouble {
        DoubleDouble::from(*self)
    }

    fn narrow(wide: &DoubleDouble) -> Self {
        wide.hi() + wide.lo()
    }

    fn sum_of(items: impl IntoIterator<Item = Self>) -> Self {
        // Neumaier summation
        let (mut total, mut carry) = (0.0f64, 0.0f64);
        for x in items {
            let t = total + x;
            carry += if total.abs() >= x.abs() { (total - t) + x } else { (x - t) + total };
            total = t;
        }
        total + carry
    }

    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn to_text(&self) -> String {
        format!("{:.16e}", self)
    }

    fn parse_text(s: &str) -> Option<Self> {
        match s.split_once('/') {
            Some(_) => parse_rational(s).and_then(|q| num_traits::ToPrimitive::to_f64(&q)),
            None => s.parse().ok(),
        }
    }
}

impl Scalar for f32 {
    const MODE: ArithmeticMode = ArithmeticMode::Float64;
    type Wide = f64;

    fn widen(&self) -> f64 {
        *self as f64
    }

    fn narrow(wide: &f64) -> Self {
        *wide as f32
    }

    fn from_ratio(num: u64, den: u64) -> Self {
        (num as f64 / den as f64) as f32
    }

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64(&self) -> f64 {
        *self as f64
    }

    fn to_text(&self) -> String {
        format!("{:.16e}", *self as f64)
    }

    fn parse_text(s: &str) -> Option<Self> {
        f64::parse_text(s).map(|x| x as f32)
    }
}

impl Scalar for DoubleDouble {
    const MODE: ArithmeticMode = ArithmeticMode::Float64;
    type Wide = DoubleDouble;

    fn widen(&self) -> DoubleDouble {
        *self
    }

    fn narrow(wide: &DoubleDouble) -> Self {
        *wide
    }

    fn from_ratio(num: u64, den: u64) -> Self {
        DoubleDouble::from(num) / DoubleDouble::from(den)
    }

    fn from_f64(x: f64) -> Self {
        DoubleDouble::from(x)
    }

    fn to_f64(&self) -> f64 {
        self.hi() + self.lo()
    }

    fn to_text(&self) -> String {
        Scalar::to_f64(self).to_text()
    }

    fn parse_text(s: &str) -> Option<Self> {
        f64::parse_text(s).map(DoubleDouble::from)
    }
}

impl Scalar for Rational {
    const MODE: ArithmeticMode = ArithmeticMode::ExactRational;
    type Wide = Rational;

    fn widen(&self) -> Rational {
        self.clone()
    }

    fn narrow(wide: &Rational) -> Self {
        wide.clone()
    }

    fn from_ratio(num: u64, den: u64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_f64(x: f64) -> Self {
        Rational::from_float(x).expect("finite float")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn to_text(&self) -> String {
        if self.is_integer() {
            format!("{}/1", self.numer())
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }

    fn parse_text(s: &str) -> Option<Self> {
        parse_rational(s)
    }
}

/// Parses `num/den` or a decimal literal such as `-1.25e-3` into an exact
/// rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(digits.parse::<BigInt>().ok()?);
    let scale = exp - frac_part.len() as i32;
    let ten = Rational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Some(if negative { -value } else { value })
}

/// Sum of a sequence of scalars.
pub fn sum<S: Scalar>(items: impl IntoIterator<Item = S>) -> S {
    S::sum_of(items)
}

/// Product of a sequence of scalars.
pub fn product<S: Scalar>(items: impl IntoIterator<Item = S>) -> S {
    items.into_iter().fold(S::one(), |acc, x| acc * x)
}

pub(crate) fn is_positive<S: Scalar>(x: &S) -> bool {
    *x > S::zero()
}
