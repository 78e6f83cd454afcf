//! High-precision reals backed by astro-float, for the transcendental parts.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use num_bigint::BigInt;
use num_rational::BigRational;

/// Working precision in bits (about 115 decimal digits).
pub const PREC: usize = 384;
const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CC: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constant cache"));
}

fn with_cc<T>(f: impl FnOnce(&mut Consts) -> T) -> T {
    CC.with(|c| f(&mut c.borrow_mut()))
}

#[derive(Clone, Debug)]
pub struct Real(BigFloat);

impl Real {
    pub fn from_int(x: &BigInt) -> Self {
        let s = x.to_string();
        Real(with_cc(|cc| BigFloat::parse(&s, Radix::Dec, PREC, RM, cc)))
    }

    pub fn from_i64(x: i64) -> Self {
        Real(BigFloat::from_i64(x, PREC))
    }

    pub fn from_rat(x: &BigRational) -> Self {
        Self::from_int(x.numer()).div(&Self::from_int(x.denom()))
    }

    /// Exact decimal literal such as `"1.083"` or `"-2.5e-3"`.
    pub fn parse(s: &str) -> Self {
        Real(with_cc(|cc| BigFloat::parse(s, Radix::Dec, PREC, RM, cc)))
    }

    pub fn from_f64(x: f64) -> Self {
        Real(BigFloat::from_f64(x, PREC))
    }

    pub fn pi() -> Self {
        Real(with_cc(|cc| cc.pi(PREC, RM)))
    }

    pub fn add(&self, o: &Self) -> Self {
        Real(self.0.add(&o.0, PREC, RM))
    }

    pub fn sub(&self, o: &Self) -> Self {
        Real(self.0.sub(&o.0, PREC, RM))
    }

    pub fn mul(&self, o: &Self) -> Self {
        Real(self.0.mul(&o.0, PREC, RM))
    }

    pub fn div(&self, o: &Self) -> Self {
        Real(self.0.div(&o.0, PREC, RM))
    }

    pub fn neg(&self) -> Self {
        Real(self.0.neg())
    }

    pub fn sqrt(&self) -> Self {
        Real(self.0.sqrt(PREC, RM))
    }

    pub fn ln(&self) -> Self {
        Real(with_cc(|cc| self.0.ln(PREC, RM, cc)))
    }

    pub fn exp(&self) -> Self {
        Real(with_cc(|cc| self.0.exp(PREC, RM, cc)))
    }

    /// `self^e` for `self > 0`.
    pub fn powf(&self, e: &Self) -> Self {
        Real(with_cc(|cc| self.0.pow(&e.0, PREC, RM, cc)))
    }

    pub fn powi(&self, n: usize) -> Self {
        Real(self.0.powi(n, PREC, RM))
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive() && !self.0.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        !self.0.is_nan() && !self.0.is_inf()
    }

    pub fn abs(&self) -> Self {
        Real(self.0.abs())
    }

    /// Scientific notation with `digits` significant digits (truncated).
    pub fn to_sci(&self, digits: usize) -> String {
        let s = with_cc(|cc| self.0.format(Radix::Dec, RoundingMode::ToZero, cc))
            .unwrap_or_else(|_| "NaN".into());
        let (mant, exp) = match s.split_once('e') {
            Some((m, e)) => (m.to_string(), e.parse::<i64>().unwrap_or(0)),
            None => (s.clone(), 0),
        };
        let neg = mant.starts_with('-');
        let body: String = mant
            .trim_start_matches('-')
            .chars()
            .filter(|c| c.is_ascii_digit())
            .collect();
        let int_len = mant
            .trim_start_matches('-')
            .split('.')
            .next()
            .unwrap_or("")
            .len() as i64;
        // normalise to d.ddd × 10^e
        let lead = body.find(|c| c != '0');
        let Some(lead) = lead else { return "0".into() };
        let exp10 = exp + int_len - 1 - lead as i64;
        let digs: String = body[lead..]
            .chars()
            .chain(std::iter::repeat('0'))
            .take(digits.max(1))
            .collect();
        let mut out = String::new();
        if neg {
            out.push('-');
        }
        out.push_str(&digs[..1]);
        if digs.len() > 1 {
            out.push('.');
            out.push_str(&digs[1..]);
        }
        out.push_str(&format!("e{exp10}"));
        out
    }

    pub fn to_f64(&self) -> f64 {
        self.to_sci(20).parse().unwrap_or(f64::NAN)
    }
}

impl PartialEq for Real {
    fn eq(&self, o: &Self) -> bool {
        self.partial_cmp(o) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Real {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        self.0.cmp(&o.0).map(|c| c.cmp(&0))
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sci(f.precision().unwrap_or(50)))
    }
}

/// Bernoulli numbers `B_0..=B_n` (with `B_1 = −1/2`).
pub fn bernoulli(n: usize) -> Vec<BigRational> {
    use num_traits::{One, Zero};
    let mut b = vec![BigRational::zero(); n + 1];
    b[0] = BigRational::one();
    for m in 1..=n {
        // Σ_{k=0}^{m} C(m+1,k) B_k = 0
        let mut acc = BigRational::zero();
        let mut binom = BigInt::one();
        for (k, bk) in b.iter().enumerate().take(m) {
            acc += BigRational::from_integer(binom.clone()) * bk;
            binom = binom * BigInt::from(m + 1 - k) / BigInt::from(k + 1);
        }
        b[m] = -acc / BigRational::from_integer(BigInt::from(m + 1));
    }
    b
}

/// Hurwitz zeta `ζ(s, x)` for real `s > 1`, `x > 0`, by Euler–Maclaurin.
pub fn hurwitz_zeta(s: &Real, x: &Real) -> Real {
    const N: i64 = 40;
    const J: usize = 30;
    let one = Real::from_i64(1);
    let mut sum = Real::from_i64(0);
    for k in 0..N {
        let t = x.add(&Real::from_i64(k));
        sum = sum.add(&one.div(&t.powf(s)));
    }
    let xn = x.add(&Real::from_i64(N));
    let s1 = s.sub(&one);
    sum = sum.add(&xn.powf(&s1.neg()).div(&s1));
    let xns = xn.powf(&s.neg());
    sum = sum.add(&xns.div(&Real::from_i64(2)));
    let bern = bernoulli(2 * J);
    // term_j = B_{2j}/(2j)! · s(s+1)…(s+2j−2) · (x+N)^{−s−2j+1}
    let mut rising = s.clone();
    let mut fact = Real::from_i64(2);
    let mut pw = xns.div(&xn);
    let xn2 = xn.mul(&xn);
    for j in 1..=J {
        if j > 1 {
            let a = s.add(&Real::from_i64(2 * j as i64 - 3));
            let b = s.add(&Real::from_i64(2 * j as i64 - 2));
            rising = rising.mul(&a).mul(&b);
            fact = fact.mul(&Real::from_i64((2 * j - 1) as i64 * (2 * j) as i64));
            pw = pw.div(&xn2);
        }
        let term = Real::from_rat(&bern[2 * j])
            .div(&fact)
            .mul(&rising)
            .mul(&pw);
        sum = sum.add(&term);
    }
    sum
}

pub fn zeta(s: &Real) -> Real {
    hurwitz_zeta(s, &Real::from_i64(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;

    #[test]
    fn pi_digits() {
        assert!(Real::pi()
            .to_sci(30)
            .starts_with("3.14159265358979323846264338327"));
    }

    #[test]
    fn rational_round_trip() {
        assert_eq!(Real::from_rat(&rat(1, 8)).to_sci(5), "1.2500e-1");
        assert_eq!(Real::from_i64(-1234).to_sci(4), "-1.234e3");
        assert!((Real::from_rat(&rat(22, 7)).to_f64() - 22.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_values() {
        let b = bernoulli(12);
        assert_eq!(b[1], rat(-1, 2));
        assert_eq!(b[2], rat(1, 6));
        assert_eq!(b[4], rat(-1, 30));
        assert_eq!(b[12], rat(-691, 2730));
        assert_eq!(b[7], rat(0, 1));
    }

    #[test]
    fn zeta_values() {
        // ζ(2) = π²/6, ζ(4) = π⁴/90
        let pi = Real::pi();
        let z2 = zeta(&Real::from_i64(2));
        let diff = z2.sub(&pi.mul(&pi).div(&Real::from_i64(6))).abs();
        assert!(diff < Real::parse("1e-60"));
        let z4 = zeta(&Real::from_i64(4));
        let diff = z4.sub(&pi.powi(4).div(&Real::from_i64(90))).abs();
        assert!(diff < Real::parse("1e-60"));
    }
}
