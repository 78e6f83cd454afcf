//! Exhaustive enumeration of solutions of
//! `Σ α_j (2(m−2)d_j x_j + 4 − m)² = h` and of the sieve-constrained subsets.

use std::collections::BTreeMap;

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{factorize, isqrt_u128};
use crate::error::{invalid, Error, Result};
use crate::poly::ProblemInstance;

/// Upper limit on the number of boxes visited by one enumeration.
pub const DEFAULT_ENUM_BUDGET: f64 = 2e10;

#[derive(Debug, Clone, Serialize)]
pub struct RepresentationSet {
    pub instance: ProblemInstance,
    pub d: [u64; 4],
    pub solutions: Vec<[i64; 4]>,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SieveMode {
    Plain,
    SieveF,
    SieveFc,
}

/// Constraint metadata attached to a constrained count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintSpec {
    pub primes: Vec<u64>,
    pub caps: BTreeMap<u64, u32>,
    pub mode: SieveMode,
}

impl ConstraintSpec {
    pub fn plain() -> Self {
        Self {
            primes: Vec::new(),
            caps: BTreeMap::new(),
            mode: SieveMode::Plain,
        }
    }

    pub fn sieve_f(instance: &ProblemInstance, primes: Vec<u64>) -> Result<Self> {
        let spec = Self {
            primes,
            caps: BTreeMap::new(),
            mode: SieveMode::SieveF,
        };
        spec.validate(instance)?;
        Ok(spec)
    }

    pub fn sieve_fc(
        instance: &ProblemInstance,
        primes: Vec<u64>,
        caps: BTreeMap<u64, u32>,
    ) -> Result<Self> {
        let spec = Self {
            primes,
            caps,
            mode: SieveMode::SieveFc,
        };
        spec.validate(instance)?;
        Ok(spec)
    }

    pub fn validate(&self, instance: &ProblemInstance) -> Result<()> {
        if self.mode == SieveMode::Plain {
            return Ok(());
        }
        let bad = bad_primes(instance);
        if let Some(p) = self.primes.iter().find(|p| bad.contains(p)) {
            return invalid(format!("sieve prime {p} divides 2∏α_j"));
        }
        if self.mode == SieveMode::SieveFc {
            if let Some(p) = bad.iter().find(|p| !self.caps.contains_key(p)) {
                return invalid(format!("missing exponent cap for p = {p}"));
            }
        }
        Ok(())
    }
}

/// Primes dividing `2∏α_j`, ascending.
pub fn bad_primes(instance: &ProblemInstance) -> Vec<u64> {
    let mut ps = vec![2];
    ps.extend(
        factorize(instance.alpha.product())
            .into_iter()
            .map(|(p, _)| p),
    );
    ps
}

#[derive(Clone, Copy)]
struct Kernel {
    h: i128,
    alpha: [i128; 4],
    step: [i128; 4],
    shift: i128,
}

impl Kernel {
    fn new(instance: &ProblemInstance, d: &[u64; 4]) -> Result<Self> {
        if d.contains(&0) {
            return invalid("scaling entries d_j must be positive");
        }
        let h = instance
            .h
            .to_i128()
            .filter(|&h| h < 1i128 << 100)
            .ok_or_else(|| {
                Error::BudgetExceeded(format!("h = {} too large to enumerate", instance.h))
            })?;
        let m2 = instance.family.m2() as i128;
        Ok(Self {
            h,
            alpha: instance.alpha().map(|a| a as i128),
            step: std::array::from_fn(|j| 2 * m2 * d[j] as i128),
            shift: -(instance.family.m4() as i128),
        })
    }

    /// All x with `|step·x + shift| ≤ √(rem/α_j)`, ascending.
    fn range(&self, j: usize, rem: i128) -> std::ops::RangeInclusive<i128> {
        let lim = isqrt_u128((rem / self.alpha[j]) as u128) as i128;
        let lo = (-lim - self.shift).div_euclid(self.step[j])
            + i128::from((-lim - self.shift).rem_euclid(self.step[j]) != 0);
        let hi = (lim - self.shift).div_euclid(self.step[j]);
        lo..=hi
    }

    fn coord(&self, j: usize, x: i128) -> i128 {
        self.step[j] * x + self.shift
    }

    fn boxes(&self) -> f64 {
        (0..3)
            .map(|j| {
                let r = self.range(j, self.h);
                (*r.end() - *r.start() + 1).max(1) as f64
            })
            .product()
    }

    /// Solutions of the last coordinate for residual `rem`.
    fn last(&self, rem: i128, mut emit: impl FnMut(i128)) {
        if rem < 0 || rem % self.alpha[3] != 0 {
            return;
        }
        let sq = rem / self.alpha[3];
        let r = isqrt_u128(sq as u128) as i128;
        if r * r != sq {
            return;
        }
        let mut cands = [-r, r];
        cands.sort();
        for (i, &xx) in cands.iter().enumerate() {
            if i == 1 && r == 0 {
                break;
            }
            let t = xx - self.shift;
            if t.rem_euclid(self.step[3]) == 0 {
                emit(t.div_euclid(self.step[3]));
            }
        }
    }

    fn solutions_with(&self, x1: i128) -> Vec<[i64; 4]> {
        let mut out = Vec::new();
        let r1 = self.h - self.alpha[0] * self.coord(0, x1).pow(2);
        if r1 < 0 {
            return out;
        }
        for x2 in self.range(1, r1) {
            let r2 = r1 - self.alpha[1] * self.coord(1, x2).pow(2);
            for x3 in self.range(2, r2) {
                let r3 = r2 - self.alpha[2] * self.coord(2, x3).pow(2);
                self.last(r3, |x4| {
                    out.push([x1 as i64, x2 as i64, x3 as i64, x4 as i64])
                });
            }
        }
        out
    }

    fn check_budget(&self, budget: f64) -> Result<()> {
        let b = self.boxes();
        if b > budget {
            return Err(Error::BudgetExceeded(format!(
                "enumeration needs ~{b:.3e} boxes, budget {budget:.3e}"
            )));
        }
        Ok(())
    }
}

/// All integer solutions in lexicographic order.
pub fn count_representations(instance: &ProblemInstance, d: [u64; 4]) -> Result<RepresentationSet> {
    count_representations_with_budget(instance, d, DEFAULT_ENUM_BUDGET)
}

pub fn count_representations_with_budget(
    instance: &ProblemInstance,
    d: [u64; 4],
    budget: f64,
) -> Result<RepresentationSet> {
    let k = Kernel::new(instance, &d)?;
    k.check_budget(budget)?;
    let xs: Vec<i128> = k.range(0, k.h).collect();
    let solutions: Vec<[i64; 4]> = xs
        .par_iter()
        .map(|&x1| k.solutions_with(x1))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(RepresentationSet {
        instance: instance.clone(),
        d,
        count: solutions.len() as u64,
        solutions,
    })
}

/// Enumeration over a deliberately enlarged box, used to test completeness.
pub fn count_in_box(instance: &ProblemInstance, d: [u64; 4], margin: i128) -> Result<u64> {
    let k = Kernel::new(instance, &d)?;
    let ranges: Vec<_> = (0..4)
        .map(|j| {
            let r = k.range(j, k.h);
            (*r.start() - margin)..=(*r.end() + margin)
        })
        .collect();
    let mut count = 0;
    for x1 in ranges[0].clone() {
        for x2 in ranges[1].clone() {
            for x3 in ranges[2].clone() {
                for x4 in ranges[3].clone() {
                    let q: i128 = [x1, x2, x3, x4]
                        .iter()
                        .enumerate()
                        .map(|(j, &x)| k.alpha[j] * k.coord(j, x).pow(2))
                        .sum();
                    count += u64::from(q == k.h);
                }
            }
        }
    }
    Ok(count)
}

fn divisible_by_any(x: i64, primes: &[u64]) -> bool {
    primes.iter().any(|&p| x % p as i64 == 0)
}

/// `|F_h(A_ℓ, P)|`: solutions in the ℓ-coset with no coordinate divisible by a prime of P.
pub fn direct_sieve_count(
    instance: &ProblemInstance,
    ell: [u64; 4],
    primes: &[u64],
) -> Result<u64> {
    let set = count_representations(instance, ell)?;
    Ok(filter_f(&set.solutions, primes).count() as u64)
}

fn filter_f<'a>(
    sols: &'a [[i64; 4]],
    primes: &'a [u64],
) -> impl Iterator<Item = &'a [i64; 4]> + 'a {
    sols.iter()
        .filter(move |x| x.iter().all(|&xj| !divisible_by_any(xj, primes)))
}

fn cap_ok(x: i64, caps: &BTreeMap<u64, u32>) -> bool {
    caps.iter().all(|(&p, &c)| {
        if x == 0 {
            return false;
        }
        crate::arith::valuation_u64(x.unsigned_abs(), p).unwrap() < c
    })
}

/// Route used to evaluate `|F_{c,h}(A_ℓ, P)|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcRoute {
    /// Filter the solution list directly.
    Direct,
    /// Inclusion–exclusion over `b(p) ∈ {0,1}⁴` on rescaled cosets.
    Signed,
}

pub fn direct_sieve_count_c(
    instance: &ProblemInstance,
    ell: [u64; 4],
    primes: &[u64],
    caps: &BTreeMap<u64, u32>,
    route: FcRoute,
) -> Result<i64> {
    for p in bad_primes(instance) {
        if !caps.contains_key(&p) {
            return invalid(format!("missing exponent cap for p = {p}"));
        }
    }
    match route {
        FcRoute::Direct => {
            let set = count_representations(instance, ell)?;
            Ok(filter_f(&set.solutions, primes)
                .filter(|x| x.iter().all(|&xj| cap_ok(xj, caps)))
                .count() as i64)
        }
        FcRoute::Signed => {
            let capped: Vec<(u64, u32)> = caps.iter().map(|(&p, &c)| (p, c)).collect();
            let nbits = 4 * capped.len();
            let mut total = 0i64;
            for mask in 0u64..(1u64 << nbits) {
                let mut scale = ell;
                for (k, &(p, c)) in capped.iter().enumerate() {
                    for j in 0..4 {
                        if mask >> (4 * k + j) & 1 == 1 {
                            scale[j] = scale[j]
                                .checked_mul(p.checked_pow(c).ok_or_else(overflow)?)
                                .ok_or_else(overflow)?;
                        }
                    }
                }
                let sign = if mask.count_ones() % 2 == 0 { 1 } else { -1 };
                total += sign * direct_sieve_count(instance, scale, primes)? as i64;
            }
            Ok(total)
        }
    }
}

fn overflow() -> Error {
    Error::BudgetExceeded("scaled coset exceeds 64-bit scaling".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorMode {
    WithMultiplicity,
    Distinct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum FactorCount {
    Finite(u32),
    /// Sentinel for `x = 0`.
    Infinite,
}

pub fn prime_factor_count(x: i64, mode: FactorMode) -> FactorCount {
    if x == 0 {
        return FactorCount::Infinite;
    }
    let f = factorize(x.unsigned_abs());
    FactorCount::Finite(match mode {
        FactorMode::WithMultiplicity => f.iter().map(|&(_, e)| e).sum(),
        FactorMode::Distinct => f.len() as u32,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessOptions {
    pub factor_bound: u32,
    pub exclude: Vec<u64>,
    pub mode: FactorMode,
    /// Exempt zero coordinates from the factor bound and the prime exclusion.
    pub allow_zero: bool,
}

impl WitnessOptions {
    pub fn new(factor_bound: u32) -> Self {
        Self {
            factor_bound,
            exclude: Vec::new(),
            mode: FactorMode::WithMultiplicity,
            allow_zero: true,
        }
    }

    pub fn accepts(&self, x: &[i64; 4]) -> bool {
        x.iter().all(|&xj| {
            if xj == 0 {
                return self.allow_zero;
            }
            !divisible_by_any(xj, &self.exclude)
                && prime_factor_count(xj, self.mode) <= FactorCount::Finite(self.factor_bound)
        })
    }
}

/// All solutions of the plain problem (d = 1⁴) satisfying the witness options.
pub fn witness_search(
    instance: &ProblemInstance,
    opts: &WitnessOptions,
) -> Result<RepresentationSet> {
    let mut set = count_representations(instance, [1; 4])?;
    set.solutions.retain(|x| opts.accepts(x));
    set.count = set.solutions.len() as u64;
    Ok(set)
}

/// Representation numbers `r(h)` of the d-coset for each requested h, via
/// pair convolution. All h must lie in one instance family (same m, α).
pub fn theta_coefficients(m: u64, alpha: [u64; 4], d: [u64; 4], hs: &[u128]) -> Result<Vec<u64>> {
    let probe = ProblemInstance::new(m, alpha, 0)?;
    let Some(&hmax) = hs.iter().max() else {
        return Ok(Vec::new());
    };
    if hmax > 200_000_000 {
        return Err(Error::BudgetExceeded(format!(
            "theta table up to {hmax} is too large"
        )));
    }
    let k = Kernel {
        h: hmax as i128,
        ..Kernel::new(&probe, &d)?
    };
    let size = hmax as usize + 1;
    let single = |j: usize| -> Vec<(usize, u32)> {
        let mut v: BTreeMap<usize, u32> = BTreeMap::new();
        for x in k.range(j, k.h) {
            let q = (k.alpha[j] * k.coord(j, x).pow(2)) as usize;
            *v.entry(q).or_default() += 1;
        }
        v.into_iter().collect()
    };
    let pair = |a: &[(usize, u32)], b: &[(usize, u32)]| -> Vec<(usize, u64)> {
        let mut out = vec![0u64; size];
        for &(s, ca) in a {
            for &(t, cb) in b {
                if s + t < size {
                    out[s + t] += ca as u64 * cb as u64;
                }
            }
        }
        out.into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .collect()
    };
    let (v0, v1, v2, v3) = (single(0), single(1), single(2), single(3));
    let a = pair(&v0, &v1);
    let mut b = vec![0u64; size];
    for (s, c) in pair(&v2, &v3) {
        b[s] = c;
    }
    Ok(hs
        .par_iter()
        .map(|&h| {
            let h = h as usize;
            a.iter()
                .take_while(|&&(s, _)| s <= h)
                .map(|&(s, c)| c * b[h - s])
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn big(x: i64) -> BigInt {
        BigInt::from(x)
    }

    fn inst(m: u64, a: [u64; 4], n: i64) -> ProblemInstance {
        ProblemInstance::new(m, a, n).unwrap()
    }

    #[test]
    fn small_counts() {
        let s = count_representations(&inst(5, [1; 4], 1), [1; 4]).unwrap();
        assert_eq!(s.count, 4);
        assert!(s
            .solutions
            .iter()
            .all(|x| x.iter().all(|&v| v == 0 || v == 1)));
        assert_eq!(
            count_representations(&inst(5, [1; 4], 0), [1; 4])
                .unwrap()
                .count,
            1
        );
    }

    #[test]
    fn solutions_solve_both_forms() {
        let d = [1, 2, 1, 3];
        let probe = inst(11, [1, 3, 5, 7], 0);
        let seed = [1i64, -1, 2, 0].map(big);
        let y: [BigInt; 4] = std::array::from_fn(|j| &seed[j] * BigInt::from(d[j]));
        let i = probe.with_n(probe.lhs(&y)).unwrap();
        let s = count_representations(&i, d).unwrap();
        assert!(s.count > 0);
        for x in &s.solutions {
            let xb = x.map(big);
            assert_eq!(i.completed_square(&d, &xb), i.h);
        }
        let mut sorted = s.solutions.clone();
        sorted.sort();
        assert_eq!(sorted, s.solutions);
    }

    #[test]
    fn box_completeness() {
        for (m, n) in [(5, 13), (7, 20), (3, 9), (8, 6)] {
            let i = inst(m, [1, 1, 1, 3], n);
            let c = count_representations(&i, [1; 4]).unwrap().count;
            assert_eq!(count_in_box(&i, [1; 4], 10).unwrap(), c, "m={m} n={n}");
        }
    }

    #[test]
    fn theta_matches_enumeration() {
        let i0 = inst(5, [1; 4], 0);
        let hs: Vec<u128> = (0..60)
            .map(|n| i0.with_n(n).unwrap().h_u128().unwrap())
            .collect();
        let th = theta_coefficients(5, [1; 4], [1; 4], &hs).unwrap();
        for (n, &r) in th.iter().enumerate() {
            let c = count_representations(&i0.with_n(n as i64).unwrap(), [1; 4])
                .unwrap()
                .count;
            assert_eq!(r, c, "n={n}");
        }
    }

    #[test]
    fn sieve_f_counts() {
        let i = inst(5, [1; 4], 1);
        assert_eq!(direct_sieve_count(&i, [1; 4], &[]).unwrap(), 4);
        // each solution has three zero coordinates, divisible by everything
        assert_eq!(direct_sieve_count(&i, [1; 4], &[3, 5]).unwrap(), 0);
        let i = inst(5, [1; 4], 25);
        let primes: Vec<u64> = crate::arith::primes_up_to(97)
            .into_iter()
            .filter(|&p| p != 2)
            .collect();
        let all = count_representations(&i, [1; 4]).unwrap();
        let expect = all
            .solutions
            .iter()
            .filter(|x| {
                x.iter().all(|&v| {
                    v != 0
                        && factorize(v.unsigned_abs())
                            .iter()
                            .all(|&(p, _)| p == 2 || p > 97)
                })
            })
            .count() as u64;
        assert_eq!(direct_sieve_count(&i, [1; 4], &primes).unwrap(), expect);
    }

    #[test]
    fn fc_routes_agree() {
        let i = inst(5, [1, 1, 1, 3], 40);
        let caps: BTreeMap<u64, u32> = [(2, 1), (3, 1)].into();
        let a = direct_sieve_count_c(&i, [1; 4], &[5], &caps, FcRoute::Direct).unwrap();
        let b = direct_sieve_count_c(&i, [1; 4], &[5], &caps, FcRoute::Signed).unwrap();
        assert_eq!(a, b);
        // all c_p = 1 and P empty: all coordinates odd
        let i = inst(5, [1; 4], 30);
        let caps: BTreeMap<u64, u32> = [(2, 1)].into();
        let set = count_representations(&i, [1; 4]).unwrap();
        let odd = set
            .solutions
            .iter()
            .filter(|x| x.iter().all(|v| v % 2 != 0))
            .count() as i64;
        assert_eq!(
            direct_sieve_count_c(&i, [1; 4], &[], &caps, FcRoute::Direct).unwrap(),
            odd
        );
        assert_eq!(
            direct_sieve_count_c(&i, [1; 4], &[], &caps, FcRoute::Signed).unwrap(),
            odd
        );
        // a cap that never binds reduces to the F count
        let caps: BTreeMap<u64, u32> = [(2, 40)].into();
        let nz = set
            .solutions
            .iter()
            .filter(|x| x.iter().all(|&v| v != 0))
            .count() as i64;
        assert_eq!(
            direct_sieve_count_c(&i, [1; 4], &[], &caps, FcRoute::Direct).unwrap(),
            nz
        );
    }

    #[test]
    fn factor_counts() {
        use FactorCount::*;
        assert_eq!(
            prime_factor_count(12, FactorMode::WithMultiplicity),
            Finite(3)
        );
        assert_eq!(prime_factor_count(12, FactorMode::Distinct), Finite(2));
        assert_eq!(
            prime_factor_count(1, FactorMode::WithMultiplicity),
            Finite(0)
        );
        assert_eq!(
            prime_factor_count(-30, FactorMode::WithMultiplicity),
            Finite(3)
        );
        assert_eq!(prime_factor_count(-30, FactorMode::Distinct), Finite(3));
        assert_eq!(prime_factor_count(0, FactorMode::Distinct), Infinite);
    }

    #[test]
    fn witnesses() {
        let w = witness_search(&inst(5, [1; 4], 1), &WitnessOptions::new(1)).unwrap();
        assert!(w.count > 0);
        let w0 = witness_search(&inst(5, [1; 4], 7), &WitnessOptions::new(0)).unwrap();
        assert!(w0.solutions.iter().all(|x| x.iter().all(|v| v.abs() <= 1)));
        let strict = WitnessOptions {
            allow_zero: false,
            ..WitnessOptions::new(1)
        };
        assert_eq!(
            witness_search(&inst(5, [1; 4], 1), &strict).unwrap().count,
            0
        );
        assert!(
            witness_search(&inst(5, [1; 4], 10_000), &WitnessOptions::new(3))
                .unwrap()
                .count
                > 0
        );
    }

    #[test]
    fn residue_partition_recovers_count() {
        let i = inst(7, [1, 1, 3, 5], 90);
        let all = count_representations(&i, [1; 4]).unwrap();
        // x_1 = 3y + r, summed over r
        let mut total = 0;
        for r in 0..3 {
            total += all
                .solutions
                .iter()
                .filter(|x| x[0].rem_euclid(3) == r)
                .count();
        }
        assert_eq!(total as u64, all.count);
        // the class x_1 ≡ 0 mod 3 is the (3,1,1,1)-coset
        let c3 = all.solutions.iter().filter(|x| x[0] % 3 == 0).count() as u64;
        assert_eq!(c3, count_representations(&i, [3, 1, 1, 1]).unwrap().count);
    }
}
