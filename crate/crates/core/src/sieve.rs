//! Rosser weights, the vector lower-bound sieve built from `Λ⁻ = 4λ⁻ − 3λ⁺`,
//! weighted sieve sums over polygonal solutions and the threshold checks of
//! the two-stage sieve.
//!
//! Level `D`, exponent `β`, thresholds and θ are exact rationals so every
//! weight and gate is decided without rounding.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{factorize, is_squarefree, moebius, primes_up_to, rat, rat_int};
use crate::eisenstein::{beta_ratio, eisenstein_exact};
use crate::enumerate::{bad_primes, count_representations, witness_search, WitnessOptions};
use crate::error::{invalid, Error, Result};
use crate::poly::ProblemInstance;
use crate::real::{zeta, Real};

/// Largest prime pool accepted by the exhaustive divisor sums.
pub const MAX_POOL: usize = 12;
/// Upper limit on weighted quadruples visited by a main-term sum.
pub const DEFAULT_QUAD_BUDGET: u64 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSign {
    Plus,
    Minus,
}

fn pow_rat(x: &BigRational, e: u32) -> BigRational {
    num_traits::pow(x.clone(), e as usize)
}

/// Checks `p_m < (D/(p_1⋯p_m))^{1/β}` exactly, with `β = a/b`:
/// `p_m^a (p_1⋯p_m)^b < D^b`.
fn chain_ok(pm: u64, prefix: &BigInt, level: &BigRational, beta: &BigRational) -> Result<bool> {
    let a = beta
        .numer()
        .to_u32()
        .ok_or_else(|| Error::InvalidInput("β numerator too large".into()))?;
    let b = beta
        .denom()
        .to_u32()
        .ok_or_else(|| Error::InvalidInput("β denominator too large".into()))?;
    let lhs = rat_int(
        num_traits::pow(BigInt::from(pm), a as usize) * num_traits::pow(prefix.clone(), b as usize),
    );
    Ok(lhs < pow_rat(level, b))
}

fn check_params(level: &BigRational, beta: &BigRational) -> Result<()> {
    if level <= &BigRational::one() {
        return invalid("sieve level D must exceed 1");
    }
    if beta < &BigRational::one() {
        return invalid("Rosser exponent β must be at least 1");
    }
    Ok(())
}

/// `λ_d^±(D, β)` for squarefree odd d. Conditions at index 0 are vacuous.
pub fn rosser_lambda(
    d: u64,
    level: &BigRational,
    beta: &BigRational,
    sign: WeightSign,
) -> Result<i8> {
    check_params(level, beta)?;
    if d == 0 || !is_squarefree(d) || d.is_multiple_of(2) {
        return invalid(format!("Rosser weights need odd squarefree d, got {d}"));
    }
    let mut ps: Vec<u64> = factorize(d).into_iter().map(|(p, _)| p).collect();
    ps.sort_unstable_by(|a, b| b.cmp(a));
    let mut prefix = BigInt::one();
    for (i, &p) in ps.iter().enumerate() {
        prefix *= p;
        let idx = i + 1;
        let checked = match sign {
            WeightSign::Plus => idx % 2 == 1,
            WeightSign::Minus => idx % 2 == 0,
        };
        if checked && !chain_ok(p, &prefix, level, beta)? {
            return Ok(0);
        }
    }
    Ok(if ps.len().is_multiple_of(2) { 1 } else { -1 })
}

/// `Λ_d⁻ = 4λ_d⁻ − 3λ_d⁺`.
pub fn capital_lambda_minus(d: u64, level: &BigRational, beta: &BigRational) -> Result<i8> {
    Ok(4 * rosser_lambda(d, level, beta, WeightSign::Minus)?
        - 3 * rosser_lambda(d, level, beta, WeightSign::Plus)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    Plus,
    Minus,
    CapitalMinus,
    Mobius,
}

/// Weights of one kind on every divisor of the product of a prime pool.
/// Divisors are addressed by bit masks over the pool.
#[derive(Debug, Clone, Serialize)]
pub struct SieveWeightTable {
    pub pool: Vec<u64>,
    #[serde(serialize_with = "crate::ser_rat")]
    pub level: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub beta: BigRational,
    pub kind: WeightKind,
    weights: Vec<i8>,
}

impl SieveWeightTable {
    pub fn build(
        pool: &[u64],
        level: &BigRational,
        beta: &BigRational,
        kind: WeightKind,
    ) -> Result<Self> {
        check_params(level, beta)?;
        check_pool(pool)?;
        let k = pool.len();
        let weights = (0..1usize << k)
            .into_par_iter()
            .map(|mask| {
                let d = mask_value(pool, mask);
                match kind {
                    WeightKind::Plus => rosser_lambda(d, level, beta, WeightSign::Plus),
                    WeightKind::Minus => rosser_lambda(d, level, beta, WeightSign::Minus),
                    WeightKind::CapitalMinus => capital_lambda_minus(d, level, beta),
                    WeightKind::Mobius => Ok(moebius(d)),
                }
            })
            .collect::<Result<Vec<i8>>>()?;
        Ok(Self {
            pool: pool.to_vec(),
            level: level.clone(),
            beta: beta.clone(),
            kind,
            weights,
        })
    }

    pub fn weight_of_mask(&self, mask: usize) -> i8 {
        self.weights[mask]
    }

    pub fn weight(&self, d: u64) -> Option<i8> {
        self.mask_of(d).map(|m| self.weights[m])
    }

    /// Mask of `d` if it divides the pool product.
    pub fn mask_of(&self, d: u64) -> Option<usize> {
        let mut rest = d;
        let mut mask = 0;
        for (i, &p) in self.pool.iter().enumerate() {
            if rest.is_multiple_of(p) {
                rest /= p;
                mask |= 1 << i;
            }
        }
        (rest == 1).then_some(mask)
    }

    /// Nonzero entries as `(d, weight)`, ascending in d.
    pub fn support(&self) -> Vec<(u64, i8)> {
        let mut s: Vec<(u64, i8)> = (0..self.weights.len())
            .filter(|&m| self.weights[m] != 0)
            .map(|m| (mask_value(&self.pool, m), self.weights[m]))
            .collect();
        s.sort();
        s
    }

    fn support_masks(&self) -> Vec<(usize, i8)> {
        (0..self.weights.len())
            .filter(|&m| self.weights[m] != 0)
            .map(|m| (m, self.weights[m]))
            .collect()
    }

    /// `Σ_{d | g} w(d)` for every mask g (subset-sum transform).
    pub fn divisor_sums(&self) -> Vec<i64> {
        let mut s: Vec<i64> = self.weights.iter().map(|&w| w as i64).collect();
        for i in 0..self.pool.len() {
            for m in 0..s.len() {
                if m >> i & 1 == 1 {
                    s[m] += s[m ^ (1 << i)];
                }
            }
        }
        s
    }
}

fn check_pool(pool: &[u64]) -> Result<()> {
    if pool.len() > MAX_POOL {
        return Err(Error::BudgetExceeded(format!(
            "prime pool of size {} exceeds the cap {MAX_POOL}",
            pool.len()
        )));
    }
    for (i, &p) in pool.iter().enumerate() {
        if p == 2 || !crate::arith::is_prime(p) || pool[..i].contains(&p) {
            return invalid(format!("pool entries must be distinct odd primes, got {p}"));
        }
    }
    Ok(())
}

fn mask_value(pool: &[u64], mask: usize) -> u64 {
    pool.iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, &p)| p)
        .product()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SandwichReport {
    pub c: u64,
    pub lower: i64,
    pub mobius: i64,
    pub upper: i64,
    pub pass: bool,
}

fn divisor_sum(c: u64, level: &BigRational, beta: &BigRational, kind: WeightKind) -> Result<i64> {
    let pool: Vec<u64> = factorize(c).into_iter().map(|(p, _)| p).collect();
    let t = SieveWeightTable::build(&pool, level, beta, kind)?;
    Ok(t.divisor_sums()[(1 << pool.len()) - 1])
}

/// `Σ_{d|c} λ⁻ ≤ Σ_{d|c} μ ≤ Σ_{d|c} λ⁺`.
pub fn weight_sandwich_check(
    c: u64,
    level: &BigRational,
    beta: &BigRational,
) -> Result<SandwichReport> {
    if c == 0 || c.is_multiple_of(2) || !is_squarefree(c) {
        return invalid(format!("c must be odd and squarefree, got {c}"));
    }
    let lower = divisor_sum(c, level, beta, WeightKind::Minus)?;
    let upper = divisor_sum(c, level, beta, WeightKind::Plus)?;
    let mobius = i64::from(c == 1);
    Ok(SandwichReport {
        c,
        lower,
        mobius,
        upper,
        pass: lower <= mobius && mobius <= upper,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuadrupleReport {
    pub c: [u64; 4],
    pub mobius_product: i64,
    /// `Σ_k A⁻_k ∏_{j≠k} A⁺_j − 3∏A⁺_j`.
    pub symmetric: i64,
    /// `(4A⁻_1 − 3A⁺_1) A⁺_2 A⁺_3 A⁺_4`, the single-Λ⁻ arrangement.
    pub single_lambda: i64,
    pub symmetric_pass: bool,
    pub single_lambda_pass: bool,
}

fn vector_forms(lo: [i64; 4], up: [i64; 4]) -> (i64, i64) {
    let prod_up: i64 = up.iter().product();
    let mut sym = -3 * prod_up;
    for k in 0..4 {
        sym += lo[k] * (0..4).filter(|&j| j != k).map(|j| up[j]).product::<i64>();
    }
    let single = (4 * lo[0] - 3 * up[0]) * up[1] * up[2] * up[3];
    (sym, single)
}

/// The four-fold product inequality on `(c_1, …, c_4)`.
pub fn quadruple_check(
    c: [u64; 4],
    level: &BigRational,
    beta: &BigRational,
) -> Result<QuadrupleReport> {
    let mut lo = [0; 4];
    let mut up = [0; 4];
    let mut mu = 1;
    for j in 0..4 {
        let r = weight_sandwich_check(c[j], level, beta)?;
        lo[j] = r.lower;
        up[j] = r.upper;
        mu *= r.mobius;
    }
    let (symmetric, single_lambda) = vector_forms(lo, up);
    Ok(QuadrupleReport {
        c,
        mobius_product: mu,
        symmetric,
        single_lambda,
        symmetric_pass: symmetric <= mu,
        single_lambda_pass: single_lambda <= mu,
    })
}

/// `H(n) = ∏_{p|n} (1 + p^{−1/2})`.
pub fn harmonic_h(n: u64) -> Result<Real> {
    if n == 0 {
        return invalid("H(n) needs n ≥ 1");
    }
    let one = Real::from_i64(1);
    Ok(factorize(n).into_iter().fold(one.clone(), |acc, (p, _)| {
        acc.mul(&one.add(&one.div(&Real::from_i64(p as i64).sqrt())))
    }))
}

/// `P_{z,Δ_α}`: primes `p ≤ z` not dividing `2∏α_j`.
pub fn sieve_pool(instance: &ProblemInstance, z: &BigRational) -> Vec<u64> {
    let bad = bad_primes(instance);
    let zf = z.floor().to_integer().to_u64().unwrap_or(0);
    primes_up_to(zf)
        .into_iter()
        .filter(|p| !bad.contains(p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SieveBound {
    Upper,
    /// Pointwise-valid lower form `Σ_k A⁻_k ∏_{j≠k} A⁺_j − 3∏A⁺_j`.
    LowerSymmetric,
    /// `Σ Λ⁻_{d_1}λ⁺_{d_2}λ⁺_{d_3}λ⁺_{d_4}`; reported only, it is not a
    /// pointwise lower bound.
    LowerSingleLambda,
    /// Möbius weights: reproduces the sifted count exactly.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountsSource {
    DirectEnum,
    MainTerm,
}

#[derive(Debug, Clone)]
pub struct WeightedSumSpec {
    pub level: BigRational,
    pub beta: BigRational,
    pub bound: SieveBound,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightedSum {
    pub bound: SieveBound,
    pub source: CountsSource,
    pub pool: Vec<u64>,
    #[serde(serialize_with = "crate::ser_rat")]
    pub value: BigRational,
}

fn cap_ok(x: i64, caps: &BTreeMap<u64, u32>) -> bool {
    x != 0
        && caps
            .iter()
            .all(|(&p, &c)| crate::arith::valuation_u64(x.unsigned_abs(), p).unwrap() < c)
}

fn check_caps(instance: &ProblemInstance, caps: &BTreeMap<u64, u32>) -> Result<()> {
    for p in bad_primes(instance) {
        match caps.get(&p) {
            Some(&c) if c >= 1 => {}
            _ => return invalid(format!("need an exponent cap c_p ≥ 1 for p = {p}")),
        }
    }
    Ok(())
}

/// Weighted version of `S_{c,h}(A_ℓ, P_1 ∪ pool)`.
///
/// `DirectEnum` sums the weights pointwise over `F_{c,h}(A_ℓ, P_1)`.
/// `MainTerm` replaces every `S_{c,h}(A_{dℓ}, ∅)` by its Eisenstein main term
/// and needs `P_1 = ∅`.
pub fn weighted_sieve_sum(
    instance: &ProblemInstance,
    ell: [u64; 4],
    p1: &[u64],
    pool: &[u64],
    caps: &BTreeMap<u64, u32>,
    spec: &WeightedSumSpec,
    source: CountsSource,
) -> Result<WeightedSum> {
    check_pool(pool)?;
    check_caps(instance, caps)?;
    let bad = bad_primes(instance);
    for &p in pool.iter().chain(p1) {
        if bad.contains(&p) {
            return invalid(format!("sieve prime {p} divides 2∏α_j"));
        }
        if ell.iter().any(|&l| l % p == 0) {
            return invalid(format!("sieve prime {p} divides ℓ"));
        }
    }
    if let Some(p) = p1.iter().find(|p| pool.contains(p)) {
        return invalid(format!("P_1 and the pool share {p}"));
    }
    let value = match source {
        CountsSource::DirectEnum => direct_weighted(instance, ell, p1, pool, caps, spec)?,
        CountsSource::MainTerm => {
            if !p1.is_empty() {
                return invalid("main-term counts need P_1 = ∅");
            }
            let base = main_term_count(instance, ell, caps)?;
            base * beta_weighted(instance, pool, spec, DEFAULT_QUAD_BUDGET)?
        }
    };
    Ok(WeightedSum {
        bound: spec.bound,
        source,
        pool: pool.to_vec(),
        value,
    })
}

fn direct_weighted(
    instance: &ProblemInstance,
    ell: [u64; 4],
    p1: &[u64],
    pool: &[u64],
    caps: &BTreeMap<u64, u32>,
    spec: &WeightedSumSpec,
) -> Result<BigRational> {
    let sums = |kind| {
        SieveWeightTable::build(pool, &spec.level, &spec.beta, kind).map(|t| t.divisor_sums())
    };
    let up = sums(WeightKind::Plus)?;
    let lo = sums(WeightKind::Minus)?;
    let mu = sums(WeightKind::Mobius)?;
    let full = (1usize << pool.len()) - 1;
    let set = count_representations(instance, ell)?;
    let total: i64 = set
        .solutions
        .par_iter()
        .filter(|x| {
            x.iter()
                .all(|&xj| cap_ok(xj, caps) && p1.iter().all(|&p| xj % p as i64 != 0))
        })
        .map(|x| {
            let g: [usize; 4] = std::array::from_fn(|j| {
                if x[j] == 0 {
                    return full;
                }
                pool.iter()
                    .enumerate()
                    .filter(|(_, &p)| x[j] % p as i64 == 0)
                    .fold(0, |m, (i, _)| m | 1 << i)
            });
            let a_up = g.map(|m| up[m]);
            let a_lo = g.map(|m| lo[m]);
            match spec.bound {
                SieveBound::Upper => a_up.iter().product(),
                SieveBound::Exact => g.iter().map(|&m| mu[m]).product(),
                SieveBound::LowerSymmetric => vector_forms(a_lo, a_up).0,
                SieveBound::LowerSingleLambda => vector_forms(a_lo, a_up).1,
            }
        })
        .sum();
    Ok(rat_int(total))
}

/// `Σ_{b} ∏μ(p^{b_i}) a_E(X^{t(b)·ℓ})(h)`: the main term of `S_{c,h}(A_ℓ, ∅)`.
pub fn main_term_count(
    instance: &ProblemInstance,
    ell: [u64; 4],
    caps: &BTreeMap<u64, u32>,
) -> Result<BigRational> {
    check_caps(instance, caps)?;
    let bad = bad_primes(instance);
    let nbits = 4 * bad.len();
    (0u64..1 << nbits)
        .into_par_iter()
        .map(|mask| {
            let mut d = ell;
            for (k, &p) in bad.iter().enumerate() {
                let pc = p
                    .checked_pow(caps[&p])
                    .ok_or_else(|| Error::BudgetExceeded("p^c_p overflows".into()))?;
                for (j, dj) in d.iter_mut().enumerate() {
                    if mask >> (4 * k + j) & 1 == 1 {
                        *dj = dj.checked_mul(pc).ok_or_else(|| {
                            Error::BudgetExceeded("scaled coset overflows".into())
                        })?;
                    }
                }
            }
            let a = eisenstein_exact(instance, d)?;
            Ok(if mask.count_ones() % 2 == 0 { a } else { -a })
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().fold(BigRational::zero(), |acc, x| acc + x))
}

/// Per pool prime, `β_{X^{p^c},p}(h)` for every `c ∈ {0,1}⁴`, over a shared
/// denominator so quadruple sums stay in integers.
struct BetaTable {
    nums: Vec<[BigInt; 16]>,
    den: BigInt,
}

impl BetaTable {
    fn new(instance: &ProblemInstance, pool: &[u64]) -> Result<Self> {
        let mut nums = Vec::with_capacity(pool.len());
        let mut den = BigInt::one();
        for &p in pool {
            let vals: Vec<BigRational> = (0..16usize)
                .map(|c| {
                    beta_ratio(p, std::array::from_fn(|j| (c >> j & 1) as u32), instance)
                        .map(|b| b.value)
                })
                .collect::<Result<_>>()?;
            let l = vals.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
            nums.push(std::array::from_fn(|c| {
                (&vals[c] * rat_int(l.clone())).to_integer()
            }));
            den *= l;
        }
        Ok(Self { nums, den })
    }

    fn product(&self, masks: [usize; 4]) -> BigInt {
        let mut acc = BigInt::one();
        for (i, row) in self.nums.iter().enumerate() {
            let c = (0..4).fold(0, |c, j| c | (masks[j] >> i & 1) << j);
            acc *= &row[c];
        }
        acc
    }
}

/// `Σ_{d_1..d_4 | P} w_1(d_1)⋯w_4(d_4) ∏_{p|d} β_{X^d,p}(h)`.
pub fn weighted_beta_sum(
    instance: &ProblemInstance,
    pool: &[u64],
    level: &BigRational,
    beta: &BigRational,
    kinds: [WeightKind; 4],
    budget: u64,
) -> Result<BigRational> {
    check_pool(pool)?;
    let table = BetaTable::new(instance, pool)?;
    let supports: Vec<Vec<(usize, i8)>> = kinds
        .iter()
        .map(|&k| SieveWeightTable::build(pool, level, beta, k).map(|t| t.support_masks()))
        .collect::<Result<_>>()?;
    let visits: f64 = supports.iter().map(|s| s.len() as f64).product();
    if visits > budget as f64 {
        return Err(Error::BudgetExceeded(format!(
            "{visits:.3e} weighted quadruples exceed the budget {budget}"
        )));
    }
    let partials: Vec<BigInt> = supports[0]
        .par_iter()
        .map(|&(m1, w1)| {
            let mut acc = BigInt::zero();
            for &(m2, w2) in &supports[1] {
                for &(m3, w3) in &supports[2] {
                    for &(m4, w4) in &supports[3] {
                        let w = w1 as i64 * w2 as i64 * w3 as i64 * w4 as i64;
                        acc += table.product([m1, m2, m3, m4]) * w;
                    }
                }
            }
            acc
        })
        .collect();
    let total: BigInt = partials.into_iter().sum();
    Ok(BigRational::new(total, table.den.clone()))
}

fn beta_weighted(
    instance: &ProblemInstance,
    pool: &[u64],
    spec: &WeightedSumSpec,
    budget: u64,
) -> Result<BigRational> {
    use WeightKind::*;
    let run = |k| weighted_beta_sum(instance, pool, &spec.level, &spec.beta, k, budget);
    match spec.bound {
        SieveBound::Upper => run([Plus; 4]),
        SieveBound::Exact => run([Mobius; 4]),
        SieveBound::LowerSingleLambda => run([CapitalMinus, Plus, Plus, Plus]),
        SieveBound::LowerSymmetric => {
            let mut acc = run([Plus; 4])? * rat_int(-3);
            for k in 0..4 {
                let mut kinds = [Plus; 4];
                kinds[k] = Minus;
                acc += run(kinds)?;
            }
            Ok(acc)
        }
    }
}

/// `M_h^ε(z_0)` over the pool `P_{z_0,Δ_α}`: ε = −1 puts `Λ⁻` on `d_1`.
pub fn m_pm_sums(
    instance: &ProblemInstance,
    z0: &BigRational,
    level: &BigRational,
    beta: &BigRational,
    eps: i8,
) -> Result<BigRational> {
    let pool = sieve_pool(instance, z0);
    let kinds = match eps {
        1 => [WeightKind::Plus; 4],
        -1 => [
            WeightKind::CapitalMinus,
            WeightKind::Plus,
            WeightKind::Plus,
            WeightKind::Plus,
        ],
        _ => return invalid("ε must be ±1"),
    };
    weighted_beta_sum(instance, &pool, level, beta, kinds, DEFAULT_QUAD_BUDGET)
}

#[derive(Debug, Clone, Serialize)]
pub struct MainTermW {
    pub local: Vec<(u64, String)>,
    pub pool: Vec<u64>,
    #[serde(serialize_with = "crate::ser_rat")]
    pub pool_factor: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub value: BigRational,
    pub obstruction: Option<u64>,
}

/// `C_p = Σ_{b∈{0,1}⁴} ∏μ(p^{b_i}) · p^{−c_p|b|} b_p(λ_{p^{c_p b}})/b_p(λ_1)`.
pub fn local_c_p(instance: &ProblemInstance, p: u64, cap: u32) -> Result<BigRational> {
    let base = crate::density::local_density(instance, [1; 4], p)?.value;
    if base.is_zero() {
        return Err(Error::Obstruction { p });
    }
    let pc = p
        .checked_pow(cap)
        .ok_or_else(|| Error::BudgetExceeded("p^c_p overflows".into()))?;
    let mut acc = BigRational::zero();
    for b in 0..16usize {
        let k = (b as u32).count_ones();
        let d: [u64; 4] = std::array::from_fn(|j| if b >> j & 1 == 1 { pc } else { 1 });
        let v = crate::density::local_density(instance, d, p)?.value
            / &base
            / rat_int(num_traits::pow(BigInt::from(p), (cap * k) as usize));
        acc += if k.is_multiple_of(2) { v } else { -v };
    }
    Ok(acc)
}

/// `W_{c,h}(z_0) = ∏_{p|2∏α} C_p ∏_{p∈P_{z_0,Δ_α}} (1 − β_{X^{(p,1,1,1)},p}(h))`.
pub fn main_term_w(
    instance: &ProblemInstance,
    z0: &BigRational,
    caps: &BTreeMap<u64, u32>,
) -> Result<MainTermW> {
    if z0 < &rat_int(3) {
        return invalid("z_0 must be at least 3");
    }
    check_caps(instance, caps)?;
    let pool = sieve_pool(instance, z0);
    let mut local = Vec::new();
    let mut value = BigRational::one();
    let mut obstruction = None;
    for p in bad_primes(instance) {
        match local_c_p(instance, p, caps[&p]) {
            Ok(c) => {
                value *= &c;
                local.push((p, crate::arith::rat_to_string(&c)));
            }
            Err(Error::Obstruction { p }) => {
                obstruction.get_or_insert(p);
                local.push((p, "0".into()));
                value = BigRational::zero();
            }
            Err(e) => return Err(e),
        }
    }
    let mut pool_factor = BigRational::one();
    for &p in &pool {
        match beta_ratio(p, [1, 0, 0, 0], instance) {
            Ok(b) => pool_factor *= BigRational::one() - b.value,
            Err(Error::Obstruction { p }) => {
                obstruction.get_or_insert(p);
                pool_factor = BigRational::zero();
            }
            Err(e) => return Err(e),
        }
    }
    value *= &pool_factor;
    Ok(MainTermW {
        local,
        pool,
        pool_factor,
        value,
        obstruction,
    })
}

/// Parameters of the two-stage sieve.
#[derive(Debug, Clone, Serialize)]
pub struct SieveConfig {
    #[serde(serialize_with = "crate::ser_rat")]
    pub z0: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub z: BigRational,
    pub caps: BTreeMap<u64, u32>,
    #[serde(serialize_with = "crate::ser_rat")]
    pub delta: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub b: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub c: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub theta: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub d0: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub d: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub beta: BigRational,
    pub factor_bound: u32,
}

impl Default for SieveConfig {
    fn default() -> Self {
        Self {
            z0: rat_int(5),
            z: rat_int(50),
            caps: BTreeMap::from([(2, 3)]),
            delta: rat_int(1),
            b: rat_int(1),
            c: rat_int(1),
            theta: rat(1, 1978),
            d0: rat_int(100),
            d: rat_int(1000),
            beta: rat_int(2),
            factor_bound: 3,
        }
    }
}

fn ln(x: &BigRational) -> Real {
    Real::from_rat(x).ln()
}

impl SieveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.z0 < rat_int(3) || self.z0 >= self.z {
            return Err(Error::Config("need 3 ≤ z₀ < z".into()));
        }
        if !self.theta.is_positive() {
            return Err(Error::Config("θ must be positive".into()));
        }
        if self.d0 <= BigRational::one() || self.d <= BigRational::one() {
            return Err(Error::Config("sieve levels D₀, D must exceed 1".into()));
        }
        if self.beta < BigRational::one() {
            return Err(Error::Config("Rosser β must be at least 1".into()));
        }
        if !self.delta.is_positive() || !self.b.is_positive() || !self.c.is_positive() {
            return Err(Error::Config("Δ, B, C must be positive".into()));
        }
        Ok(())
    }

    /// `s₀ = log D₀ / log z₀`.
    pub fn s0(&self) -> Real {
        ln(&self.d0).div(&ln(&self.z0))
    }

    /// `s = log D / log z`.
    pub fn s(&self) -> Real {
        ln(&self.d).div(&ln(&self.z))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ThetaGate {
    pub theta: String,
    /// `988θ + 1/2`.
    pub lhs: String,
    pub pass: bool,
    pub below_1977: bool,
}

/// `988θ + 1/2 < 1`, decided exactly, alongside `θ < 1/1977`.
pub fn theta_gate(theta: &BigRational) -> ThetaGate {
    let lhs = theta * rat_int(988) + rat(1, 2);
    ThetaGate {
        theta: crate::arith::rat_to_string(theta),
        lhs: crate::arith::rat_to_string(&lhs),
        pass: lhs < BigRational::one(),
        below_1977: theta < &rat(1, 1977),
    }
}

/// `1 − e^{37−s}·1.083¹⁰`.
pub fn s_gate(s: &Real) -> Real {
    let one = Real::from_i64(1);
    one.sub(
        &Real::from_i64(37)
            .sub(s)
            .exp()
            .mul(&Real::parse("1.083").powi(10)),
    )
}

/// `K = ζ(4)(1 + 1/(2 log² z))⁴(1 + 1/log² z₀)⁴`.
pub fn k_constant(z0: &BigRational, z: &BigRational) -> Real {
    let one = Real::from_i64(1);
    let lz = ln(z);
    let lz0 = ln(z0);
    let a = one.add(&one.div(&lz.mul(&lz).mul(&Real::from_i64(2))));
    let b = one.add(&one.div(&lz0.mul(&lz0)));
    zeta(&Real::from_i64(4)).mul(&a.powi(4)).mul(&b.powi(4))
}

/// `z₀ = log(z)^33`.
pub fn z0_policy(z: &BigRational) -> Real {
    ln(z).powi(33)
}

/// `1.083⁻⁴ (1 − e^{37−s}·1.083¹⁰)(log z₀/log z)^16`.
pub fn final_lower_bound(s: &Real, z0: &BigRational, z: &BigRational) -> Real {
    let q = Real::parse("1.083");
    s_gate(s).div(&q.powi(4)).mul(&ln(z0).div(&ln(z)).powi(16))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WitnessRow {
    pub n: u64,
    pub representations: u64,
    pub witnesses: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriverReport {
    pub m: u64,
    pub alpha: [u64; 4],
    pub theta_gate: ThetaGate,
    pub s: String,
    pub s_gate: String,
    pub s_gate_pass: bool,
    pub s_gate_at_38: String,
    pub k: String,
    pub z0_policy: String,
    pub final_bound: String,
    pub final_positive: bool,
    pub excluded_primes: Vec<(u64, Vec<u64>)>,
    pub rows: Vec<WitnessRow>,
    pub coverage: f64,
}

/// Runs the arithmetic gates of the two-stage sieve and a witness sweep over
/// `n ∈ [lo, hi]` with `P = {p ≤ n^θ}`.
pub fn theorem_driver(
    m: u64,
    alpha: [u64; 4],
    lo: u64,
    hi: u64,
    config: &SieveConfig,
) -> Result<DriverReport> {
    config.validate()?;
    let probe = ProblemInstance::new(m, alpha, lo)?;
    probe.family.require_theorem_mode()?;
    if lo > hi || lo == 0 {
        return invalid("n-range must be nonempty and start at 1 or later");
    }
    let s = config.s();
    let sg = s_gate(&s);
    let fin = final_lower_bound(&s, &config.z0, &config.z);
    let theta = Real::from_rat(&config.theta);
    let rows: Vec<(WitnessRow, Vec<u64>)> = (lo..=hi)
        .into_par_iter()
        .map(|n| {
            let inst = probe.with_n(n)?;
            let bound = Real::from_i64(n as i64).powf(&theta);
            let limit = bound.to_f64().floor() as u64;
            let exclude: Vec<u64> = primes_up_to(limit)
                .into_iter()
                .filter(|&p| Real::from_i64(p as i64) <= bound)
                .collect();
            let opts = WitnessOptions {
                exclude: exclude.clone(),
                ..WitnessOptions::new(config.factor_bound)
            };
            let all = count_representations(&inst, [1; 4])?.count;
            let w = witness_search(&inst, &opts)?.count;
            Ok((
                WitnessRow {
                    n,
                    representations: all,
                    witnesses: w,
                },
                exclude,
            ))
        })
        .collect::<Result<_>>()?;
    let covered = rows.iter().filter(|(r, _)| r.witnesses > 0).count();
    let excluded_primes = rows
        .iter()
        .filter(|(_, e)| !e.is_empty())
        .map(|(r, e)| (r.n, e.clone()))
        .collect();
    Ok(DriverReport {
        m,
        alpha,
        theta_gate: theta_gate(&config.theta),
        s: s.to_sci(20),
        s_gate: sg.to_sci(50),
        s_gate_pass: sg.is_positive(),
        s_gate_at_38: s_gate(&Real::from_i64(38)).to_sci(50),
        k: k_constant(&config.z0, &config.z).to_sci(30),
        z0_policy: z0_policy(&config.z).to_sci(30),
        final_bound: fin.to_sci(30),
        final_positive: fin.is_positive(),
        excluded_primes,
        coverage: covered as f64 / rows.len() as f64,
        rows: rows.into_iter().map(|(r, _)| r).collect(),
    })
}

/// Exact check of `h ≥ C·(2(m−2))^{21+ε}(∏α_j)^{6+ε}` for rational `ε = p/q`:
/// `h^q ≥ C^q · M^{21q+p} · A^{6q+p}`.
pub fn threshold_holds(
    h: &BigInt,
    m: u64,
    alpha: [u64; 4],
    eps: &BigRational,
    constant: &BigRational,
) -> Result<bool> {
    if eps.is_negative() || !constant.is_positive() {
        return invalid("need ε ≥ 0 and a positive constant");
    }
    let p = eps
        .numer()
        .to_usize()
        .ok_or_else(|| Error::InvalidInput("ε numerator too large".into()))?;
    let q = eps
        .denom()
        .to_usize()
        .ok_or_else(|| Error::InvalidInput("ε denominator too large".into()))?;
    if q > 10_000 || p > 10_000 {
        return invalid("ε must have numerator and denominator at most 10⁴");
    }
    let big_m = BigInt::from(2 * (m - 2));
    let a = BigInt::from(alpha.iter().product::<u64>());
    let lhs = num_traits::pow(h.clone(), q) * num_traits::pow(constant.denom().clone(), q);
    let rhs = num_traits::pow(constant.numer().clone(), q)
        * num_traits::pow(big_m, 21 * q + p)
        * num_traits::pow(a, 6 * q + p);
    Ok(lhs >= rhs)
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub m: u64,
    pub alpha: [u64; 4],
    pub eps: String,
    pub constant: String,
    /// Decimal value of the threshold.
    pub threshold: String,
    /// Least n whose h clears the threshold.
    pub min_n: String,
    pub min_h: String,
}

/// Least n with `threshold_holds`, by exponential then binary search.
pub fn threshold_report(
    m: u64,
    alpha: [u64; 4],
    eps: &BigRational,
    constant: &BigRational,
) -> Result<ThresholdRow> {
    let probe = ProblemInstance::new(m, alpha, 0)?;
    let holds = |n: &BigInt| -> Result<bool> {
        let inst = probe.with_n(n.clone())?;
        threshold_holds(&inst.h, m, alpha, eps, constant)
    };
    let mut hi = BigInt::one();
    while !holds(&hi)? {
        hi *= 2;
    }
    let mut lo = BigInt::zero();
    if !holds(&lo)? {
        // invariant: holds(hi), !holds(lo)
        while &hi - &lo > BigInt::one() {
            let mid: BigInt = (&lo + &hi) / 2;
            if holds(&mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    } else {
        hi = lo;
    }
    let e = Real::from_rat(eps);
    let t = Real::from_rat(constant)
        .mul(&Real::from_i64(2 * (m as i64 - 2)).powf(&Real::from_i64(21).add(&e)))
        .mul(
            &Real::from_i64(alpha.iter().product::<u64>() as i64).powf(&Real::from_i64(6).add(&e)),
        );
    let min_h = probe.with_n(hi.clone())?.h;
    Ok(ThresholdRow {
        m,
        alpha,
        eps: crate::arith::rat_to_string(eps),
        constant: crate::arith::rat_to_string(constant),
        threshold: t.to_sci(30),
        min_n: hi.to_string(),
        min_h: min_h.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> BigRational {
        rat_int(n)
    }

    #[test]
    fn rosser_examples() {
        for s in [WeightSign::Plus, WeightSign::Minus] {
            assert_eq!(rosser_lambda(1, &r(100), &r(1), s).unwrap(), 1);
        }
        assert_eq!(
            rosser_lambda(3, &r(100), &r(1), WeightSign::Plus).unwrap(),
            -1
        );
        assert_eq!(
            rosser_lambda(15, &r(16), &r(1), WeightSign::Plus).unwrap(),
            0
        );
        assert!(rosser_lambda(9, &r(16), &r(1), WeightSign::Plus).is_err());
        // tie p^β·p = D is excluded
        assert_eq!(
            rosser_lambda(5, &r(25), &r(1), WeightSign::Plus).unwrap(),
            0
        );
        // λ⁻ has no condition on a single prime
        assert_eq!(
            rosser_lambda(101, &r(16), &r(1), WeightSign::Minus).unwrap(),
            -1
        );
        assert_eq!(capital_lambda_minus(1, &r(10), &r(2)).unwrap(), 1);
    }

    #[test]
    fn both_minus_one() {
        // a prime with p^{1+β} < D carries λ⁻ = λ⁺ = −1, so Λ⁻ = −1
        assert_eq!(
            rosser_lambda(3, &r(100), &r(2), WeightSign::Minus).unwrap(),
            -1
        );
        assert_eq!(capital_lambda_minus(3, &r(100), &r(2)).unwrap(), -1);
        // a prime above the λ⁺ range: Λ⁻ = −4
        assert_eq!(capital_lambda_minus(11, &r(100), &r(2)).unwrap(), -4);
    }

    #[test]
    fn sandwich_small() {
        let s = weight_sandwich_check(1, &r(10), &r(2)).unwrap();
        assert_eq!((s.lower, s.mobius, s.upper), (1, 1, 1));
        for d in [r(3), r(16), r(100), rat(1001, 2)] {
            let s = weight_sandwich_check(15, &d, &r(1)).unwrap();
            assert!(s.pass && s.mobius == 0);
        }
    }

    #[test]
    fn single_lambda_counterexample() {
        // c_1 = 1, c_2 a prime beyond every λ⁺ condition
        let q = quadruple_check([1, 97, 1, 1], &r(10), &r(2)).unwrap();
        assert!(q.symmetric_pass);
        assert!(!q.single_lambda_pass);
    }

    #[test]
    fn harmonic() {
        assert_eq!(harmonic_h(1).unwrap(), Real::from_i64(1));
        let one = Real::from_i64(1);
        let e = one
            .add(&one.div(&Real::from_i64(2).sqrt()))
            .mul(&one.add(&one.div(&Real::from_i64(3).sqrt())));
        assert!(harmonic_h(12).unwrap().sub(&e).abs() < Real::parse("1e-100"));
        assert!(harmonic_h(0).is_err());
    }

    #[test]
    fn mobius_weights_reproduce_sifted_count() {
        let inst = ProblemInstance::new(5, [1; 4], 120).unwrap();
        let caps = BTreeMap::from([(2, 2)]);
        let pool = [3, 5, 7];
        let spec = WeightedSumSpec {
            level: r(50),
            beta: r(2),
            bound: SieveBound::Exact,
        };
        let w = weighted_sieve_sum(
            &inst,
            [1; 4],
            &[],
            &pool,
            &caps,
            &spec,
            CountsSource::DirectEnum,
        )
        .unwrap();
        let truth = crate::enumerate::direct_sieve_count_c(
            &inst,
            [1; 4],
            &pool,
            &caps,
            crate::enumerate::FcRoute::Direct,
        )
        .unwrap();
        assert_eq!(w.value, rat_int(truth));
    }

    #[test]
    fn empty_pool_is_plain_count() {
        let inst = ProblemInstance::new(5, [1; 4], 77).unwrap();
        let caps = BTreeMap::from([(2, 3)]);
        let truth = crate::enumerate::direct_sieve_count_c(
            &inst,
            [1; 4],
            &[],
            &caps,
            crate::enumerate::FcRoute::Direct,
        )
        .unwrap();
        for bound in [
            SieveBound::Upper,
            SieveBound::LowerSymmetric,
            SieveBound::LowerSingleLambda,
        ] {
            let spec = WeightedSumSpec {
                level: r(10),
                beta: r(2),
                bound,
            };
            let w = weighted_sieve_sum(
                &inst,
                [1; 4],
                &[],
                &[],
                &caps,
                &spec,
                CountsSource::DirectEnum,
            )
            .unwrap();
            assert_eq!(w.value, rat_int(truth));
        }
        assert_eq!(
            m_pm_sums(&inst, &r(2), &r(10), &r(2), 1).unwrap(),
            BigRational::one()
        );
    }

    #[test]
    fn m_sums_pool_of_three_by_hand() {
        let inst = ProblemInstance::new(11, [1; 4], 40).unwrap();
        let (lv, be) = (r(30), r(2));
        let lp = |d| rosser_lambda(d, &lv, &be, WeightSign::Plus).unwrap() as i64;
        let cap = |d| capital_lambda_minus(d, &lv, &be).unwrap() as i64;
        let mut plus = BigRational::zero();
        let mut minus = BigRational::zero();
        for c in 0..16usize {
            let bits: [u32; 4] = std::array::from_fn(|j| (c >> j & 1) as u32);
            let d = bits.map(|b| if b == 1 { 3 } else { 1 });
            let beta = beta_ratio(3, bits, &inst).unwrap().value;
            let wp = lp(d[0]) * lp(d[1]) * lp(d[2]) * lp(d[3]);
            let wm = cap(d[0]) * lp(d[1]) * lp(d[2]) * lp(d[3]);
            plus += &beta * rat_int(wp);
            minus += &beta * rat_int(wm);
        }
        assert_eq!(m_pm_sums(&inst, &r(3), &lv, &be, 1).unwrap(), plus);
        assert_eq!(m_pm_sums(&inst, &r(3), &lv, &be, -1).unwrap(), minus);
    }

    #[test]
    fn w_positive_small_sweep() {
        let caps = BTreeMap::from([(2, 3)]);
        for n in 1..=100 {
            let inst = ProblemInstance::new(5, [1; 4], n).unwrap();
            let w = main_term_w(&inst, &r(10), &caps).unwrap();
            assert!(w.value.is_positive(), "n={n}");
        }
        let inst = ProblemInstance::new(5, [1; 4], 3).unwrap();
        let w = main_term_w(&inst, &r(3), &caps).unwrap();
        assert_eq!(w.pool, vec![3]);
    }

    #[test]
    fn gates() {
        assert!(theta_gate(&(rat(1, 1977) - rat(1, 1_000_000))).pass);
        assert!(!theta_gate(&rat(1, 988)).pass);
        let g = theta_gate(&rat(1, 1977));
        assert!(g.pass && !g.below_1977);
        assert!(!theta_gate(&rat(1, 1976)).pass);
        let s = s_gate(&Real::from_i64(38));
        assert!(s.is_positive());
        assert!(s.to_sci(6).starts_with("1.8"));
        assert!(!s_gate(&Real::from_i64(37)).is_positive());
    }

    #[test]
    fn threshold_exact() {
        let c = BigRational::one();
        let eps = rat(1, 10);
        let row = threshold_report(5, [1; 4], &eps, &c).unwrap();
        let n: BigInt = row.min_n.parse().unwrap();
        let inst = ProblemInstance::new(5, [1; 4], n.clone()).unwrap();
        assert!(threshold_holds(&inst.h, 5, [1; 4], &eps, &c).unwrap());
        let below = ProblemInstance::new(5, [1; 4], n - 1).unwrap();
        assert!(!threshold_holds(&below.h, 5, [1; 4], &eps, &c).unwrap());
    }
}
