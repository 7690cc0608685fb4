//! Exact rational arithmetic for privacy-budget bookkeeping.
//!
//! Budgets entered as decimals ("0.1") and hyperparameter splits are tracked
//! as exact fractions so that repeated charges never drift: ten charges of
//! 1/10 consume exactly 1, with no floating-point residue deciding whether
//! the tenth query is admitted.

use std::cmp::Ordering;
use std::fmt;

use super::DpError;

/// A reduced rational with positive denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Ratio {
    pub const ZERO: Ratio = Ratio { num: 0, den: 1 };
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    pub fn new(num: i128, den: i128) -> Ratio {
        assert!(den != 0, "rational denominator must be non-zero");
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den).max(1);
        Ratio {
            num: sign * (num / g),
            den: (den / g).abs(),
        }
    }

    pub fn from_int(n: i64) -> Ratio {
        Ratio {
            num: n as i128,
            den: 1,
        }
    }

    /// Parses a decimal literal, optionally in scientific notation
    /// (`"0.1"`, `"-2"`, `"1e-3"`, `"2.5E2"`), into the exact fraction it denotes.
    pub fn parse_decimal(text: &str) -> Result<Ratio, DpError> {
        let bad = || DpError::MalformedBudget(text.to_string());
        let s = text.trim();
        if s.is_empty() {
            return Err(bad());
        }
        let (mantissa, exp10) = match s.find(['e', 'E']) {
            Some(i) => {
                let e: i32 = s[i + 1..].parse().map_err(|_| bad())?;
                (&s[..i], e)
            }
            None => (s, 0),
        };
        let (sign, digits) = match mantissa.strip_prefix('-') {
            Some(rest) => (-1i128, rest),
            None => (1i128, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int_part, frac_part) = match digits.find('.') {
            Some(i) => (&digits[..i], &digits[i + 1..]),
            None => (digits, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let mut num: i128 = 0;
        for c in int_part.chars().chain(frac_part.chars()) {
            num = num
                .checked_mul(10)
                .and_then(|n| n.checked_add((c as u8 - b'0') as i128))
                .ok_or_else(bad)?;
        }
        let scale = exp10 - frac_part.len() as i32;
        let mut r = Ratio::new(sign * num, 1);
        let pow = 10i128
            .checked_pow(scale.unsigned_abs())
            .ok_or_else(bad)?;
        if scale >= 0 {
            r = Ratio::new(r.num.checked_mul(pow).ok_or_else(bad)?, r.den);
        } else {
            r = Ratio::new(r.num, pow);
        }
        Ok(r)
    }

    /// Exact conversion of a finite f64 (mantissa × 2^exp), with the exponent
    /// clamped to keep the fraction inside i128 range. Values whose magnitude
    /// is below 2^-110 collapse to zero precision loss territory we never hit
    /// with realistic privacy budgets.
    pub fn from_f64(v: f64) -> Result<Ratio, DpError> {
        if !v.is_finite() {
            return Err(DpError::MalformedBudget(format!("{v}")));
        }
        if v == 0.0 {
            return Ok(Ratio::ZERO);
        }
        let bits = v.to_bits();
        let sign = if bits >> 63 == 1 { -1i128 } else { 1 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mut mant, mut exp) = if raw_exp == 0 {
            (frac as i128, -1074i64)
        } else {
            ((frac | (1 << 52)) as i128, raw_exp - 1075)
        };
        while exp < -110 {
            mant >>= 1;
            exp += 1;
            if mant == 0 {
                return Ok(Ratio::ZERO);
            }
        }
        if exp > 70 {
            return Err(DpError::MalformedBudget(format!("{v} too large for budget")));
        }
        Ok(if exp >= 0 {
            Ratio::new(sign * (mant << exp), 1)
        } else {
            Ratio::new(sign * mant, 1i128 << (-exp))
        })
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_negative(&self) -> bool {
        self.num < 0
    }

    fn combine(&self, other: &Ratio, sub: bool) -> Ratio {
        let g = gcd(self.den, other.den).max(1);
        let lcm = (self.den / g)
            .checked_mul(other.den)
            .expect("privacy budget arithmetic overflow");
        let a = self
            .num
            .checked_mul(lcm / self.den)
            .expect("privacy budget arithmetic overflow");
        let b = other
            .num
            .checked_mul(lcm / other.den)
            .expect("privacy budget arithmetic overflow");
        let num = if sub { a - b } else { a + b };
        Ratio::new(num, lcm)
    }

    pub fn add(&self, other: &Ratio) -> Ratio {
        self.combine(other, false)
    }

    pub fn sub(&self, other: &Ratio) -> Ratio {
        self.combine(other, true)
    }

    pub fn mul(&self, other: &Ratio) -> Ratio {
        // Cross-reduce first to keep intermediates small.
        let g1 = gcd(self.num, other.den).max(1);
        let g2 = gcd(other.num, self.den).max(1);
        let num = (self.num / g1)
            .checked_mul(other.num / g2)
            .expect("privacy budget arithmetic overflow");
        let den = (self.den / g2)
            .checked_mul(other.den / g1)
            .expect("privacy budget arithmetic overflow");
        Ratio::new(num, den)
    }

    /// Exact division by a positive integer; `n` copies of the result sum
    /// back to the original exactly.
    pub fn div_int(&self, n: u64) -> Ratio {
        assert!(n > 0, "division by zero");
        let g = gcd(self.num, n as i128).max(1);
        Ratio::new(
            self.num / g,
            self.den
                .checked_mul(n as i128 / g)
                .expect("privacy budget arithmetic overflow"),
        )
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sub(other).num.cmp(&0)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parse_is_exact() {
        let tenth = Ratio::parse_decimal("0.1").unwrap();
        assert_eq!(tenth, Ratio::new(1, 10));
        let mut acc = Ratio::ZERO;
        for _ in 0..10 {
            acc = acc.add(&tenth);
        }
        assert_eq!(acc, Ratio::ONE);
    }

    #[test]
    fn scientific_notation() {
        assert_eq!(Ratio::parse_decimal("1e-3").unwrap(), Ratio::new(1, 1000));
        assert_eq!(Ratio::parse_decimal("2.5E2").unwrap(), Ratio::from_int(250));
        assert_eq!(
            Ratio::parse_decimal("-1.5e-2").unwrap(),
            Ratio::new(-3, 200)
        );
        assert!(Ratio::parse_decimal("abc").is_err());
        assert!(Ratio::parse_decimal("").is_err());
        assert!(Ratio::parse_decimal("1..2").is_err());
    }

    #[test]
    fn f64_conversion_is_exact_binary() {
        // 0.1f64 is strictly above 1/10; the exact conversion must preserve that.
        let r = Ratio::from_f64(0.1).unwrap();
        assert!(r > Ratio::new(1, 10));
        assert_eq!(Ratio::from_f64(0.5).unwrap(), Ratio::new(1, 2));
        assert_eq!(Ratio::from_f64(3.0).unwrap(), Ratio::from_int(3));
        assert_eq!(Ratio::from_f64(0.0).unwrap(), Ratio::ZERO);
        assert!(Ratio::from_f64(f64::NAN).is_err());
        // Round-trips through f64 are exact for representable values.
        let v = 3.2248e-10;
        assert_eq!(Ratio::from_f64(v).unwrap().to_f64(), v);
    }

    #[test]
    fn ordering_and_arithmetic() {
        let a = Ratio::new(1, 3);
        let b = Ratio::new(1, 4);
        assert!(a > b);
        assert_eq!(a.mul(&b), Ratio::new(1, 12));
        assert_eq!(a.sub(&b), Ratio::new(1, 12));
        assert_eq!(Ratio::new(2, 4), Ratio::new(1, 2));
        assert_eq!(Ratio::new(1, -2), Ratio::new(-1, 2));
    }

    #[test]
    fn integer_division_telescopes() {
        let xi = Ratio::ONE;
        let share = xi.div_int(3101);
        let mut acc = Ratio::ZERO;
        for _ in 0..3101 {
            acc = acc.add(&share);
        }
        assert_eq!(acc, xi);
    }
}
