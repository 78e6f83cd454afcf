//! Small exact-arithmetic helpers shared by the other modules: p-adic
//! valuations of integers and rationals, quadratic residue symbols,
//! factorisation wrappers and exact decimal rendering of rationals.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// `ord_p(x)`; `None` stands for `+∞` (x = 0).
pub fn valuation(x: &BigInt, p: u64) -> Option<u32> {
    if x.is_zero() {
        return None;
    }
    let p = BigInt::from(p);
    let mut v = 0;
    let mut y = x.clone();
    loop {
        let (q, r) = y.div_rem(&p);
        if !r.is_zero() {
            return Some(v);
        }
        y = q;
        v += 1;
    }
}

pub fn valuation_u64(mut x: u64, p: u64) -> Option<u32> {
    if x == 0 {
        return None;
    }
    let mut v = 0;
    while x.is_multiple_of(p) {
        x /= p;
        v += 1;
    }
    Some(v)
}

/// `ord_p` of a rational; `None` for zero.
pub fn valuation_rat(x: &BigRational, p: u64) -> Option<i64> {
    let num = valuation(x.numer(), p)?;
    let den = valuation(x.denom(), p).unwrap_or(0);
    Some(num as i64 - den as i64)
}

/// Residue mod p of the unit part `p^{-ord_p x} x` of a nonzero rational.
pub fn unit_residue(x: &BigRational, p: u64) -> u64 {
    debug_assert!(!x.is_zero());
    let strip = |v: &BigInt| {
        let pp = BigInt::from(p);
        let mut y = v.clone();
        while (&y % &pp).is_zero() {
            y /= &pp;
        }
        y.mod_floor(&pp).to_u64().unwrap()
    };
    let num = strip(x.numer());
    let den = strip(x.denom());
    (num as u128 * mod_inverse(den, p) as u128 % p as u128) as u64
}

pub fn mod_pow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc: u128 = 1 % m as u128;
    let mut b = base as u128 % m as u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m as u128;
        }
        b = b * b % m as u128;
        exp >>= 1;
    }
    base = acc as u64;
    base
}

/// Inverse of a unit modulo a prime.
pub fn mod_inverse(a: u64, p: u64) -> u64 {
    mod_pow(a % p, p - 2, p)
}

/// Legendre symbol `(a/p)` for an odd prime p.
pub fn legendre(a: &BigInt, p: u64) -> i8 {
    let r = a.mod_floor(&BigInt::from(p)).to_u64().unwrap();
    if r == 0 {
        return 0;
    }
    if mod_pow(r, (p - 1) / 2, p) == 1 {
        1
    } else {
        -1
    }
}

/// Kronecker symbol `(d/n)` for `n ≥ 1`.
pub fn kronecker(d: i64, n: u64) -> i8 {
    assert!(n >= 1);
    let mut n = n;
    let mut result: i8 = 1;
    while n.is_multiple_of(2) {
        n /= 2;
        if d % 2 == 0 {
            return 0;
        }
        if matches!(d.rem_euclid(8), 3 | 5) {
            result = -result;
        }
    }
    // Jacobi symbol (d mod n / n), n odd.
    let mut a = d.rem_euclid(n as i64) as u64;
    let mut m = n;
    while a != 0 {
        while a.is_multiple_of(2) {
            a /= 2;
            if matches!(m % 8, 3 | 5) {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut m);
        if a % 4 == 3 && m % 4 == 3 {
            result = -result;
        }
        a %= m;
    }
    if m == 1 {
        result
    } else {
        0
    }
}

pub fn is_prime(n: u64) -> bool {
    num_prime::nt_funcs::is_prime64(n)
}

/// Prime factorisation of `n ≥ 1`, ascending.
pub fn factorize(n: u64) -> Vec<(u64, u32)> {
    if n <= 1 {
        return Vec::new();
    }
    num_prime::nt_funcs::factorize64(n)
        .into_iter()
        .map(|(p, e)| (p, e as u32))
        .collect()
}

/// Distinct prime divisors of a nonzero big integer (must fit in 128 bits).
pub fn prime_divisors(x: &BigInt) -> crate::Result<Vec<u64>> {
    let a = x.abs();
    if a.is_zero() {
        return crate::error::invalid("prime divisors of 0");
    }
    if let Some(v) = a.to_u64() {
        return Ok(factorize(v).into_iter().map(|(p, _)| p).collect());
    }
    match a.to_u128() {
        Some(v) => Ok(num_prime::nt_funcs::factorize128(v)
            .into_keys()
            .map(|p| p as u64)
            .collect()),
        None => crate::error::invalid(format!("{x} exceeds the 128-bit factorisation range")),
    }
}

pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    num_prime::nt_funcs::primes(limit)
        .into_iter()
        .filter(|&p| p <= limit)
        .collect()
}

pub fn is_squarefree(n: u64) -> bool {
    factorize(n).iter().all(|&(_, e)| e == 1)
}

pub fn moebius(n: u64) -> i8 {
    let f = factorize(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

pub fn big_pow(base: u64, exp: u32) -> BigInt {
    num_traits::pow(BigInt::from(base), exp as usize)
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: impl Into<BigInt>) -> BigRational {
    BigRational::from_integer(n.into())
}

/// `p^e` as a rational, for any sign of `e`.
pub fn rat_pow(p: u64, e: i64) -> BigRational {
    let b = big_pow(p, e.unsigned_abs() as u32);
    if e >= 0 {
        BigRational::from_integer(b)
    } else {
        BigRational::new(BigInt::one(), b)
    }
}

/// Exact rendering as `num/den` (or just `num` for integers).
pub fn rat_to_string(x: &BigRational) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn parse_rational(s: &str) -> crate::Result<BigRational> {
    let s = s.trim();
    let parse_int = |t: &str| {
        t.trim()
            .parse::<BigInt>()
            .map_err(|_| crate::Error::InvalidInput(format!("not a rational: {s:?}")))
    };
    match s.split_once('/') {
        Some((a, b)) => {
            let den = parse_int(b)?;
            if den.is_zero() {
                return crate::error::invalid(format!("zero denominator in {s:?}"));
            }
            Ok(BigRational::new(parse_int(a)?, den))
        }
        None => Ok(BigRational::from_integer(parse_int(s)?)),
    }
}

/// Decimal expansion truncated toward zero after `frac_digits` digits.
pub fn rat_to_decimal(x: &BigRational, frac_digits: usize) -> String {
    let neg = x.is_negative();
    let a = x.abs();
    let scale = num_traits::pow(BigInt::from(10u32), frac_digits);
    let scaled = (a.numer() * &scale) / a.denom();
    let (int_part, frac_part) = scaled.div_rem(&scale);
    let mut s = String::new();
    if neg && !(int_part.is_zero() && frac_part.is_zero()) {
        s.push('-');
    }
    s.push_str(&int_part.to_string());
    if frac_digits > 0 {
        let f = frac_part.to_string();
        s.push('.');
        s.extend(std::iter::repeat_n('0', frac_digits - f.len()));
        s.push_str(&f);
    }
    s
}

/// Nearest `f64`, for reporting and coarse comparisons only.
pub fn rat_to_f64(x: &BigRational) -> f64 {
    match (x.numer().to_f64(), x.denom().to_f64()) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() && b != 0.0 => a / b,
        _ => {
            // Shift both sides down to keep the ratio representable.
            let shift = x.denom().bits().max(x.numer().bits()).saturating_sub(1000);
            let a = (x.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let b = (x.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            a / b
        }
    }
}

pub fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

pub fn isqrt_u128(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valuations() {
        assert_eq!(valuation(&BigInt::from(48), 2), Some(4));
        assert_eq!(valuation(&BigInt::from(-45), 3), Some(2));
        assert_eq!(valuation(&BigInt::zero(), 5), None);
        assert_eq!(valuation_rat(&rat(9, 50), 5), Some(-2));
        assert_eq!(valuation_rat(&rat(9, 50), 3), Some(2));
    }

    #[test]
    fn unit_residues() {
        // 50/3 = 5^2 * 2/3, 2/3 = 2*2 = 4 mod 5
        assert_eq!(unit_residue(&rat(50, 3), 5), 4);
        assert_eq!(unit_residue(&rat(-1, 1), 7), 6);
    }

    #[test]
    fn residue_symbols() {
        assert_eq!(legendre(&BigInt::from(2), 7), 1);
        assert_eq!(legendre(&BigInt::from(3), 7), -1);
        assert_eq!(legendre(&BigInt::from(14), 7), 0);
        assert_eq!(kronecker(-4, 3), -1);
        assert_eq!(kronecker(-4, 5), 1);
        assert_eq!(kronecker(-4, 2), 0);
        assert_eq!(kronecker(12, 5), -1);
        assert_eq!(kronecker(5, 2), -1);
        assert_eq!(kronecker(1, 9), 1);
        // agrees with Legendre on odd primes
        for p in [3u64, 5, 7, 11, 13, 17, 19, 23] {
            for a in -30i64..30 {
                assert_eq!(
                    kronecker(a, p),
                    legendre(&BigInt::from(a), p),
                    "a={a} p={p}"
                );
            }
        }
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(rat_to_decimal(&rat(1, 3), 5), "0.33333");
        assert_eq!(rat_to_decimal(&rat(-7, 2), 2), "-3.50");
        assert_eq!(rat_to_decimal(&rat(1, 100), 1), "0.0");
        assert_eq!(rat_to_string(&rat(24, 25)), "24/25");
        assert_eq!(parse_rational(" 6/4 ").unwrap(), rat(3, 2));
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn factor_helpers() {
        assert_eq!(factorize(360), vec![(2, 3), (3, 2), (5, 1)]);
        assert_eq!(moebius(30), -1);
        assert_eq!(moebius(12), 0);
        assert!(is_squarefree(105));
        assert_eq!(primes_up_to(20), vec![2, 3, 5, 7, 11, 13, 17, 19]);
        assert_eq!(
            prime_divisors(&(BigInt::from(u64::MAX) * 3)).unwrap(),
            vec![3, 5, 17, 257, 641, 65537, 6700417]
        );
    }
}
