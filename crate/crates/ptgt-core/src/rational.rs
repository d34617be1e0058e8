//! Exact rational arithmetic helpers.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

/// Exact rational number used for probabilities, delays, and constraint
/// constants throughout the crate.
pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Parses `"2"`, `"4/5"`, `"0.8"`, or `"-1.25"` into an exact rational.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rat::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let int: BigInt = if int == "-" || int.is_empty() {
            BigInt::zero()
        } else {
            int.parse().ok()?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let num: BigInt = frac.parse().ok()?;
        let den = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_part = Rat::new(num, den);
        let int_part = Rat::from_integer(int);
        return Some(if neg {
            int_part - frac_part
        } else {
            int_part + frac_part
        });
    }
    let n: BigInt = s.parse().ok()?;
    Some(Rat::from_integer(n))
}

/// Renders a rational as a decimal with up to `sig` significant digits,
/// trimming trailing zeros. Exact values shorter than `sig` digits render
/// exactly (`16/25` becomes `0.64`); inexact values are rounded half-up and
/// prefixed with `~`.
pub fn decimal_string(r: &Rat, sig: usize) -> String {
    if r.is_zero() {
        return "0".to_string();
    }
    let neg = r.is_negative();
    let a = r.abs();
    // Find the decimal exponent e with 10^e <= a < 10^(e+1).
    let mut e: i64 = 0;
    let ten = Rat::from_integer(BigInt::from(10));
    let mut scaled = a.clone();
    while scaled >= ten {
        scaled /= ten.clone();
        e += 1;
    }
    while scaled < Rat::one() {
        scaled *= ten.clone();
        e -= 1;
    }
    // Round a * 10^(sig-1-e) to the nearest integer (half up).
    let shift = sig as i64 - 1 - e;
    let factor = if shift >= 0 {
        Rat::from_integer(BigInt::from(10u32).pow(shift as u32))
    } else {
        Rat::new(BigInt::one(), BigInt::from(10u32).pow((-shift) as u32))
    };
    let scaled_exact = &a * &factor;
    let half = Rat::new(BigInt::one(), BigInt::from(2));
    let rounded = (&scaled_exact + half).floor().to_integer();
    let exact = Rat::from_integer(rounded.clone()) == scaled_exact;
    let mut digits = rounded.to_string();
    // Rounding may carry over to one extra digit (e.g. 999.6 -> 1000).
    let mut e = e;
    if digits.len() > sig {
        digits.truncate(sig);
        e += 1;
    }
    let mut out = String::new();
    if !exact {
        out.push('~');
    }
    if neg {
        out.push('-');
    }
    if e >= 0 {
        let int_len = (e as usize) + 1;
        if int_len >= digits.len() {
            out.push_str(&digits);
            for _ in 0..(int_len - digits.len()) {
                out.push('0');
            }
        } else {
            out.push_str(&digits[..int_len]);
            let frac = digits[int_len..].trim_end_matches('0');
            if !frac.is_empty() {
                out.push('.');
                out.push_str(frac);
            }
        }
    } else {
        out.push_str("0.");
        for _ in 0..((-e as usize) - 1) {
            out.push('0');
        }
        out.push_str(digits.trim_end_matches('0'));
    }
    out
}

/// Least common multiple of the denominators of the given rationals; the
/// scaling factor that makes every listed constant an integer.
pub fn denominator_lcm<'a>(values: impl Iterator<Item = &'a Rat>) -> BigInt {
    let mut l = BigInt::one();
    for v in values {
        l = num::integer::lcm(l, v.denom().clone());
    }
    l
}

/// Converts a rational to i64, if exact.
pub fn to_i64(r: &Rat) -> Option<i64> {
    if r.denom().is_one() {
        r.numer().to_i64()
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rat("2").unwrap(), rat_int(2));
        assert_eq!(parse_rat("4/5").unwrap(), rat(4, 5));
        assert_eq!(parse_rat("0.8").unwrap(), rat(4, 5));
        assert_eq!(parse_rat("-1.25").unwrap(), rat(-5, 4));
        assert_eq!(parse_rat("1/0"), None);
        assert_eq!(parse_rat("abc"), None);
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(decimal_string(&rat(4096, 15625), 6), "0.262144");
        assert_eq!(decimal_string(&rat(16, 25), 6), "0.64");
        assert_eq!(decimal_string(&rat_int(0), 6), "0");
        assert_eq!(decimal_string(&rat_int(1), 6), "1");
        assert_eq!(decimal_string(&rat(1, 3), 6), "~0.333333");
        assert_eq!(decimal_string(&rat(2, 3), 6), "~0.666667");
        assert_eq!(decimal_string(&rat(-1, 2), 6), "-0.5");
        assert_eq!(decimal_string(&rat_int(12345678), 6), "~12345700");
    }

    #[test]
    fn lcm_of_denominators() {
        let vals = [rat(1, 2), rat(2, 3), rat_int(5)];
        assert_eq!(denominator_lcm(vals.iter()), BigInt::from(6));
    }
}
