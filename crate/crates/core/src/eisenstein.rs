//! Eisenstein coefficients `a_E(h)` assembled from local densities, the
//! β-ratio system with its bound lemmas, and cusp-part bounds/residuals.
//!
//! For a diagonal quaternary lattice with coefficients α the relevant
//! character is the Kronecker character `χ_D` of `Q(√∏α_j)`, not `(−1/·)`;
//! `χ_D` is even, so `L(2, χ_D) = π² B_{2,χ}/D^{3/2}` and `a_E(h)` is an
//! exact rational.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{
    factorize, is_prime, kronecker, prime_divisors, rat, rat_int, rat_pow, valuation,
};
use crate::density::{case_bound_holds, density_oracle_stable, instance_kane_data, local_density};
use crate::enumerate::theta_coefficients;
use crate::error::{invalid, Error, Result};
use crate::poly::{build_coset, level_of_form, ProblemInstance};
use crate::real::{hurwitz_zeta, zeta, Real};

/// The nontrivial character mod 4, `ψ(n) = (−1/n)` on odd n.
pub fn psi_mod4(n: i64) -> i8 {
    match n.rem_euclid(4) {
        1 => 1,
        3 => -1,
        _ => 0,
    }
}

/// `L(2, ψ)` (Catalan's constant) by Cohen–Villegas–Zagier acceleration.
pub fn l_value_psi() -> Real {
    let n = 90i64;
    let s8 = Real::from_i64(8).sqrt();
    let mut d = Real::from_i64(3).add(&s8).powi(n as usize);
    d = d.add(&Real::from_i64(1).div(&d)).div(&Real::from_i64(2));
    let mut b = Real::from_i64(-1);
    let mut c = d.neg();
    let mut s = Real::from_i64(0);
    for k in 0..n {
        c = b.sub(&c);
        let a = Real::from_i64(1).div(&Real::from_i64((2 * k + 1) * (2 * k + 1)));
        s = s.add(&c.mul(&a));
        // b ← b(k+n)(k−n)/((k+1/2)(k+1))
        b = b
            .mul(&Real::from_i64(2 * (k + n) * (k - n)))
            .div(&Real::from_i64((2 * k + 1) * (k + 1)));
    }
    s.div(&d)
}

/// Partial sum `Σ_{k<K} (−1)^k/(2k+1)²`.
pub fn psi_partial_sum(k_max: u64) -> BigRational {
    (0..k_max as i64).fold(BigRational::zero(), |acc, k| {
        let t = rat(1, (2 * k + 1) * (2 * k + 1));
        if k % 2 == 0 {
            acc + t
        } else {
            acc - t
        }
    })
}

/// Kronecker character of `Q(√a)` for odd squarefree `a = ∏α_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatticeCharacter {
    /// Fundamental discriminant D (`a` or `4a`).
    pub disc: i64,
    pub radicand: i64,
}

impl LatticeCharacter {
    pub fn for_alpha(alpha: [u64; 4]) -> Self {
        let a = alpha.iter().product::<u64>() as i64;
        let disc = if a % 4 == 1 { a } else { 4 * a };
        Self { disc, radicand: a }
    }

    pub fn value(&self, n: u64) -> i8 {
        kronecker(self.disc, n)
    }
}

/// `B_{2,χ} = D Σ_{a=1}^{D} χ(a) B_2(a/D)`.
pub fn bernoulli_b2_chi(ch: &LatticeCharacter) -> BigRational {
    let d = ch.disc;
    let sixth = rat(1, 6);
    let sum = (1..=d).fold(BigRational::zero(), |acc, a| {
        let x = rat(a, d);
        acc + rat_int(kronecker(d, a as u64)) * (&x * &x - &x + &sixth)
    });
    sum * rat_int(d)
}

/// `L(2, χ_D) = π² B_{2,χ} / D^{3/2}`.
pub fn l_value_chi(ch: &LatticeCharacter) -> Real {
    let pi = Real::pi();
    let d = Real::from_i64(ch.disc);
    pi.mul(&pi)
        .mul(&Real::from_rat(&bernoulli_b2_chi(ch)))
        .div(&d.mul(&d.sqrt()))
}

/// `L(2, χ_D)` from Hurwitz zeta values, independent of π.
pub fn l_value_chi_series(ch: &LatticeCharacter) -> Real {
    static CACHE: OnceLock<Mutex<HashMap<i64, Real>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&ch.disc) {
        return v.clone();
    }
    let d = ch.disc;
    let two = Real::from_i64(2);
    let mut sum = Real::from_i64(0);
    for a in 1..=d {
        let c = kronecker(d, a as u64);
        if c != 0 {
            let z = hurwitz_zeta(&two, &Real::from_rat(&rat(a, d)));
            sum = if c > 0 { sum.add(&z) } else { sum.sub(&z) };
        }
    }
    let v = sum.div(&Real::from_i64(d * d));
    cache.lock().unwrap().insert(d, v.clone());
    v
}

/// Which local-density routine feeds an assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensitySource {
    /// Closed forms at 2 and p | m − 2, Kane elsewhere.
    Formula,
    /// Counting oracle, with the given modulus budget.
    Oracle { budget: u64 },
}

pub fn density_with(
    instance: &ProblemInstance,
    d: [u64; 4],
    p: u64,
    source: DensitySource,
) -> Result<BigRational> {
    match source {
        DensitySource::Formula => Ok(local_density(instance, d, p)?.value),
        DensitySource::Oracle { budget } => {
            Ok(density_oracle_stable(instance, d, p, budget)?.value)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalFactor {
    pub p: u64,
    #[serde(serialize_with = "crate::ser_rat")]
    pub density: BigRational,
    pub chi: i8,
    /// `b_p / (1 − χ(p)p⁻²)`.
    #[serde(serialize_with = "crate::ser_rat")]
    pub factor: BigRational,
}

#[derive(Debug, Clone, Serialize)]
pub struct EisensteinCoefficient {
    #[serde(serialize_with = "ser_big")]
    pub h: BigInt,
    pub d: [u64; 4],
    pub character: LatticeCharacter,
    pub support: Vec<u64>,
    pub factors: Vec<LocalFactor>,
    /// `h·D^{3/2}/(16(m−2)⁴ ∏d_j √a · B_{2,χ})`, which equals
    /// `(2π)²h/(√(16 d_L)·L(2,χ))`.
    #[serde(serialize_with = "crate::ser_rat")]
    pub prefactor: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub local_product: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub exact: BigRational,
    /// `(2π)²h/(√(16 d_L) L(2,χ)) · ∏ factors` evaluated through the series
    /// value of `L(2, χ)`.
    #[serde(serialize_with = "ser_real")]
    pub value: Real,
    pub obstruction: Option<u64>,
}

fn ser_big<S: serde::Serializer>(x: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

fn ser_real<S: serde::Serializer>(x: &Real, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_sci(60))
}

/// Primes dividing `2(m−2)∏α_j d_j h`.
pub fn default_support(instance: &ProblemInstance, d: [u64; 4]) -> Result<Vec<u64>> {
    if instance.h.is_zero() {
        return invalid("Eisenstein coefficient needs h > 0");
    }
    let mut ps: Vec<u64> = vec![2];
    ps.extend(factorize(instance.family.m2()).into_iter().map(|(p, _)| p));
    ps.extend(
        factorize(instance.alpha.product())
            .into_iter()
            .map(|(p, _)| p),
    );
    for dj in d {
        ps.extend(factorize(dj).into_iter().map(|(p, _)| p));
    }
    ps.extend(prime_divisors(&instance.h)?);
    ps.sort();
    ps.dedup();
    Ok(ps)
}

/// `h D^{3/2} / (16 (m−2)⁴ ∏d_j √a B_{2,χ})`, rational because
/// `D^{3/2}/√a` is `a` or `8a`.
pub fn eisenstein_prefactor(
    instance: &ProblemInstance,
    d: [u64; 4],
    ch: &LatticeCharacter,
) -> BigRational {
    let k = if ch.disc == ch.radicand {
        ch.radicand
    } else {
        8 * ch.radicand
    };
    let m2 = BigInt::from(instance.family.m2());
    let den = BigInt::from(16u32)
        * num_traits::pow(m2, 4)
        * d.iter().map(|&x| BigInt::from(x)).product::<BigInt>();
    BigRational::new(&instance.h * BigInt::from(k), den) / bernoulli_b2_chi(ch)
}

pub fn assemble_eisenstein(
    instance: &ProblemInstance,
    d: [u64; 4],
    source: DensitySource,
) -> Result<EisensteinCoefficient> {
    assemble_eisenstein_with_support(instance, d, source, &[])
}

/// As [`assemble_eisenstein`] with additional primes in the support.
pub fn assemble_eisenstein_with_support(
    instance: &ProblemInstance,
    d: [u64; 4],
    source: DensitySource,
    extra: &[u64],
) -> Result<EisensteinCoefficient> {
    build_coset(&instance.family, &instance.alpha, d)?;
    let ch = LatticeCharacter::for_alpha(instance.alpha());
    let mut support = default_support(instance, d)?;
    for &p in extra {
        if !is_prime(p) {
            return invalid(format!("support entry {p} is not prime"));
        }
        support.push(p);
    }
    support.sort();
    support.dedup();
    let mut factors = Vec::with_capacity(support.len());
    let mut obstruction = None;
    for &p in &support {
        let b = density_with(instance, d, p, source)?;
        let chi = ch.value(p);
        let factor = &b / (BigRational::one() - rat_int(chi) * rat_pow(p, -2));
        if b.is_zero() && obstruction.is_none() {
            obstruction = Some(p);
        }
        factors.push(LocalFactor {
            p,
            density: b,
            chi,
            factor,
        });
    }
    let local_product: BigRational = factors.iter().map(|f| f.factor.clone()).product();
    let prefactor = eisenstein_prefactor(instance, d, &ch);
    let exact = &prefactor * &local_product;
    // Independent real evaluation of the same coefficient.
    let coset = build_coset(&instance.family, &instance.alpha, d)?;
    let pi = Real::pi();
    let two_pi_sq = pi.mul(&pi).mul(&Real::from_i64(4));
    let sqrt_disc = Real::from_int(&(coset.discriminant() * 16)).sqrt();
    let value = two_pi_sq
        .mul(&Real::from_int(&instance.h))
        .div(&sqrt_disc.mul(&l_value_chi_series(&ch)))
        .mul(&Real::from_rat(&local_product));
    Ok(EisensteinCoefficient {
        h: instance.h.clone(),
        d,
        character: ch,
        support,
        factors,
        prefactor,
        local_product,
        exact,
        value,
        obstruction,
    })
}

/// Exact `a_E(h)` only, with formula densities.
pub fn eisenstein_exact(instance: &ProblemInstance, d: [u64; 4]) -> Result<BigRational> {
    let ch = LatticeCharacter::for_alpha(instance.alpha());
    let mut prod = eisenstein_prefactor(instance, d, &ch);
    for p in default_support(instance, d)? {
        let b = local_density(instance, d, p)?.value;
        if b.is_zero() {
            return Ok(BigRational::zero());
        }
        prod *= b / (BigRational::one() - rat_int(ch.value(p)) * rat_pow(p, -2));
    }
    Ok(prod)
}

/// The first `count` primes outside `support`, for enlargement tests.
pub fn primes_outside(support: &[u64], count: usize) -> Vec<u64> {
    (3..)
        .filter(|&p| is_prime(p) && !support.contains(&p))
        .take(count)
        .collect()
}

/// The literal three-case `γ_p(2)` formula for `χ(p) ≠ 0`, `v = ord_p h`.
pub fn gamma_p_case(p: u64, v: u32, chi_p: i8, c_p_unit: bool) -> Result<BigRational> {
    if p == 2 {
        return Err(Error::Dispatch("γ_p is defined for odd p".into()));
    }
    if chi_p == 0 {
        return Err(Error::Dispatch(
            "the χ(p) = 0 branch is only available through the density quotient".into(),
        ));
    }
    let one = BigRational::one();
    let q = -rat_pow(p, -1); // −p^{1−s}
    let pw = |e: u32| num_traits::pow(q.clone(), e as usize);
    Ok(if c_p_unit {
        (&one - pw(v + 1)) / (&one + rat_pow(p, -1))
    } else {
        let num = &one - pw(v + 2) + (&one - pw(v));
        num / ((&one + rat_pow(p, -2)) * (&one + rat_pow(p, -1)))
    })
}

/// `γ_p(2) = b_p(h, λ_1)/(1 − χ(p)p⁻²)` at odd `p ∤ 2(m−2)∏α_j`.
pub fn gamma_p_quotient(instance: &ProblemInstance, p: u64) -> Result<BigRational> {
    let e1 = 2 * instance.family.m2() * instance.alpha.product();
    if p == 2 || e1.is_multiple_of(p) {
        return Err(Error::Dispatch(format!("p = {p} divides e₁ = {e1}")));
    }
    let ch = LatticeCharacter::for_alpha(instance.alpha());
    let b = local_density(instance, [1; 4], p)?.value;
    Ok(b / (BigRational::one() - rat_int(ch.value(p)) * rat_pow(p, -2)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaRatio {
    pub p: u64,
    pub c: [u32; 4],
    #[serde(serialize_with = "crate::ser_rat")]
    pub value: BigRational,
}

/// `β_{X^{p^c},p}(h) = p^{−|c|} b_p(λ_{p^c})/b_p(λ_1)` for odd p.
pub fn beta_ratio(p: u64, c: [u32; 4], instance: &ProblemInstance) -> Result<BetaRatio> {
    beta_ratio_with(p, c, instance, DensitySource::Formula)
}

pub fn beta_ratio_with(
    p: u64,
    c: [u32; 4],
    instance: &ProblemInstance,
    source: DensitySource,
) -> Result<BetaRatio> {
    if p == 2 || !is_prime(p) {
        return invalid(format!("β ratios are defined at odd primes, got {p}"));
    }
    if c.iter().all(|&x| x == 0) {
        return Ok(BetaRatio {
            p,
            c,
            value: BigRational::one(),
        });
    }
    let base = density_with(instance, [1; 4], p, source)?;
    if base.is_zero() {
        return Err(Error::Obstruction { p });
    }
    let d = c.map(|e| p.pow(e));
    let top = density_with(instance, d, p, source)?;
    let total: u32 = c.iter().sum();
    Ok(BetaRatio {
        p,
        c,
        value: rat_pow(p, -(total as i64)) * top / base,
    })
}

/// `∏_p β_{X^{p^{ord_p d}},p}` over odd primes dividing `∏d_j`.
pub fn beta_product(instance: &ProblemInstance, d: [u64; 4]) -> Result<BigRational> {
    let mut primes: Vec<u64> = d
        .iter()
        .flat_map(|&x| factorize(x).into_iter().map(|(p, _)| p))
        .collect();
    primes.sort();
    primes.dedup();
    let mut acc = BigRational::one();
    for p in primes {
        if p == 2 {
            return invalid("β product is over odd primes; d must be odd");
        }
        let c = d.map(|x| valuation(&BigInt::from(x), p).unwrap());
        acc *= beta_ratio(p, c, instance)?.value;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub value: String,
    pub bound: String,
    pub pass: bool,
    /// Informational entries are reported but do not fail a sweep.
    pub gate: bool,
}

impl BoundCheck {
    fn rational(
        name: impl Into<String>,
        value: &BigRational,
        bound: &BigRational,
        gate: bool,
    ) -> Self {
        Self {
            name: name.into(),
            value: crate::arith::rat_to_string(value),
            bound: crate::arith::rat_to_string(bound),
            pass: value <= bound,
            gate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BetaLemma {
    /// `p ∤ (m−2)(m−4)∏α_j`.
    Unramified,
    /// `p ≥ 5`, `p ∤ (m−2)(m−4)`, `p | ∏α_j`.
    CoefficientPrime,
}

pub fn beta_lemma_class(p: u64, instance: &ProblemInstance) -> Option<BetaLemma> {
    let m2 = instance.family.m2();
    let m4 = instance.family.m4();
    if p == 2 || m2.is_multiple_of(p) || m4.rem_euclid(p as i64) == 0 {
        return None;
    }
    if !instance.alpha.product().is_multiple_of(p) {
        Some(BetaLemma::Unramified)
    } else if p >= 5 {
        Some(BetaLemma::CoefficientPrime)
    } else {
        None
    }
}

fn nonzero_patterns() -> impl Iterator<Item = [u32; 4]> {
    (1u32..16).map(|mask| std::array::from_fn(|j| (mask >> j) & 1))
}

/// Evaluates every inequality of the β bound lemma matching `p`, plus the
/// `|N_p|` case bounds on each density involved and `γ_p ≥ 1 − 1/p`.
pub fn check_beta_bounds(p: u64, instance: &ProblemInstance) -> Result<Vec<BoundCheck>> {
    let class = beta_lemma_class(p, instance)
        .ok_or_else(|| Error::InvalidInput(format!("p = {p} is outside both β lemma classes")))?;
    let n_div = instance.n.is_zero() || (&instance.n % BigInt::from(p)).is_zero();
    let pr = rat_int(p);
    let pm1 = rat_int(p - 1);
    let pp1 = rat_int(p + 1);
    let mut out = Vec::new();
    for c in nonzero_patterns() {
        let k: u32 = c.iter().sum();
        let beta = beta_ratio(p, c, instance)?.value;
        let label = format!("beta{c:?}");
        let pk = rat_pow(p, k as i64);
        match class {
            BetaLemma::Unramified => {
                let bound = match k {
                    4 if n_div => BigRational::one() / (&pr * &pr * &pm1),
                    _ => rat_int(1u64 << k) / &pk,
                };
                out.push(BoundCheck::rational(label, &beta, &bound, true));
            }
            BetaLemma::CoefficientPrime => {
                let q = &pm1 * &pm1 * &pp1;
                let bound = match k {
                    4 if n_div => BigRational::one() / &q,
                    _ => rat_int(1u64 << (2 * k)) / &pk,
                };
                out.push(BoundCheck::rational(label.clone(), &beta, &bound, true));
                let inter = match k {
                    2 => Some(rat_int(2 * p) / &q),
                    3 => Some(rat_int(2) / &q),
                    _ => None,
                };
                if let Some(b) = inter {
                    out.push(BoundCheck::rational(
                        format!("{label} intermediate"),
                        &beta,
                        &b,
                        false,
                    ));
                }
            }
        }
        let d = c.map(|e| p.pow(e));
        let data = instance_kane_data(instance, d, p)?;
        let dens = data.density();
        if crate::density::case_lemma_applies(instance, d, p) {
            if let Some(ok) = case_bound_holds(&data, &dens) {
                out.push(BoundCheck {
                    name: format!("density case |N_p|={} at {c:?}", data.n_set.len()),
                    value: crate::arith::rat_to_string(&dens),
                    bound: "case lemma".into(),
                    pass: ok,
                    gate: true,
                });
            }
        }
    }
    if class == BetaLemma::Unramified {
        let g = gamma_p_quotient(instance, p)?;
        let bound = BigRational::one() - rat_pow(p, -1);
        out.push(BoundCheck {
            name: "gamma_p >= 1 - 1/p".into(),
            value: crate::arith::rat_to_string(&g),
            bound: crate::arith::rat_to_string(&bound),
            pass: g >= bound,
            gate: true,
        });
    }
    Ok(out)
}

/// The envelope `∏_{p|d} β_{X^d,p} ≤ ∏_j w̃(d_j)/d_j` for squarefree d
/// supported on unramified primes.
pub fn check_w_envelope(instance: &ProblemInstance, d: [u64; 4]) -> Result<BoundCheck> {
    let lhs = beta_product(instance, d)?;
    let mut rhs = Real::from_i64(1);
    for &dj in &d {
        for (p, e) in factorize(dj) {
            if e > 1 || beta_lemma_class(p, instance) != Some(BetaLemma::Unramified) {
                return invalid(format!(
                    "d_j = {dj} must be squarefree over unramified primes"
                ));
            }
            let two_over = Real::from_rat(&rat(2, p as i64));
            let p_div_n = instance.n.is_zero() || (&instance.n % BigInt::from(p)).is_zero();
            let w = if p_div_n {
                let q = Real::from_rat(&BigRational::new(
                    BigInt::one(),
                    BigInt::from(p * p * (p - 1)),
                ));
                let root = q.sqrt().sqrt();
                if root > two_over {
                    root
                } else {
                    two_over
                }
            } else {
                two_over
            };
            rhs = rhs.mul(&w);
        }
    }
    let lv = Real::from_rat(&lhs);
    Ok(BoundCheck {
        name: format!("w-envelope d={d:?}"),
        value: crate::arith::rat_to_string(&lhs),
        bound: rhs.to_sci(30),
        pass: lv <= rhs,
        gate: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GCorrelation {
    #[serde(serialize_with = "crate::ser_rat")]
    pub value: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub bound: BigRational,
    pub pass: bool,
}

/// `g(d) = ∏_{p|d} β_{X^d,p}/∏_j β_{X^{d_j e_j},p}`, checked against
/// `4⁴ ∏_{i<j} gcd(d_i, d_j)²`.
pub fn g_correlation(d: [u64; 4], instance: &ProblemInstance) -> Result<GCorrelation> {
    let mut primes: Vec<u64> = d
        .iter()
        .flat_map(|&x| factorize(x).into_iter().map(|(p, _)| p))
        .collect();
    primes.sort();
    primes.dedup();
    let mut value = BigRational::one();
    for p in primes {
        if p == 2 || instance.family.m2().is_multiple_of(p) {
            return invalid(format!("g(d) needs odd primes prime to m − 2, got {p}"));
        }
        let c = d.map(|x| valuation(&BigInt::from(x), p).unwrap());
        let num = beta_ratio(p, c, instance)?.value;
        let mut den = BigRational::one();
        for j in 0..4 {
            if c[j] > 0 {
                let mut single = [0; 4];
                single[j] = c[j];
                den *= beta_ratio(p, single, instance)?.value;
            }
        }
        if den.is_zero() {
            return Err(Error::Obstruction { p });
        }
        value *= num / den;
    }
    let mut bound = rat_int(256);
    for i in 0..4 {
        for j in i + 1..4 {
            let u = d[i].gcd(&d[j]);
            bound *= rat_int(u * u);
        }
    }
    let pass = value <= bound;
    Ok(GCorrelation { value, bound, pass })
}

/// Constants left abstract by the cusp lemmas; all are configuration.
#[derive(Debug, Clone, Default)]
pub struct CuspConstants {
    pub eps: Option<Real>,
    pub scale: Option<Real>,
    pub delta: Option<Real>,
    pub c_delta: Option<Real>,
    pub c_eps: Option<Real>,
    /// The quantity written `δ_{M²N_α}`.
    pub delta_level: Option<Real>,
    /// The quantity written `Δ_α`.
    pub delta_alpha: Option<Real>,
}

impl CuspConstants {
    pub fn all_ones() -> Self {
        let one = Some(Real::from_i64(1));
        Self {
            eps: one.clone(),
            scale: one.clone(),
            delta: one.clone(),
            c_delta: one.clone(),
            c_eps: one.clone(),
            delta_level: one.clone(),
            delta_alpha: one,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CuspProfile {
    Simplified,
    Explicit,
}

fn need<'a>(x: &'a Option<Real>, name: &str) -> Result<&'a Real> {
    x.as_ref()
        .ok_or_else(|| Error::Config(format!("cusp bound needs constant `{name}`")))
}

fn euler_phi(n: u64) -> u64 {
    factorize(n)
        .iter()
        .fold(n, |acc, &(p, _)| acc / p * (p - 1))
}

fn divisors(n: u64) -> Vec<u64> {
    let mut ds = vec![1u64];
    for (p, e) in factorize(n) {
        let cur = ds.clone();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            ds.extend(cur.iter().map(|d| d * pk));
        }
    }
    ds.sort();
    ds
}

/// Bound on the cusp coefficient at `n`.
///
/// `Simplified`: `C·M^{11/2+ε}N^{5/2+ε}n^{1/2+ε}` with `M = 2(m−2)`, N the level.
/// `Explicit`: the full product of the explicit lemma with its constants.
pub fn cusp_bound(
    instance: &ProblemInstance,
    d: [u64; 4],
    profile: CuspProfile,
    k: &CuspConstants,
) -> Result<Real> {
    let eps = need(&k.eps, "eps")?;
    let big_m = 2 * instance.family.m2();
    let level = level_of_form(&instance.family, &instance.alpha, d)?;
    let mr = Real::from_i64(big_m as i64);
    let nr = Real::from_int(&level);
    let n = Real::from_int(&instance.n);
    let half = Real::from_rat(&rat(1, 2));
    match profile {
        CuspProfile::Simplified => {
            let c = need(&k.scale, "scale")?;
            let e1 = Real::from_rat(&rat(11, 2)).add(eps);
            let e2 = Real::from_rat(&rat(5, 2)).add(eps);
            let e3 = half.add(eps);
            Ok(c.mul(&mr.powf(&e1)).mul(&nr.powf(&e2)).mul(&n.powf(&e3)))
        }
        CuspProfile::Explicit => {
            let delta = need(&k.delta, "delta")?;
            let c_delta = need(&k.c_delta, "c_delta")?;
            let c_eps = need(&k.c_eps, "c_eps")?;
            let dl = need(&k.delta_level, "delta_level")?;
            let da = need(&k.delta_alpha, "delta_alpha")?;
            let level_u = level
                .to_u64()
                .ok_or_else(|| Error::BudgetExceeded("level exceeds 64 bits".into()))?;
            let m2n = big_m
                .checked_mul(big_m)
                .and_then(|x| x.checked_mul(level_u))
                .ok_or_else(|| Error::BudgetExceeded("M²N exceeds 64 bits".into()))?;
            Ok(explicit_cusp_product(
                big_m, level_u, m2n, &n, eps, delta, c_delta, c_eps, dl, da,
            ))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn explicit_cusp_product(
    big_m: u64,
    level: u64,
    m2n: u64,
    n: &Real,
    eps: &Real,
    delta: &Real,
    c_delta: &Real,
    c_eps: &Real,
    dl: &Real,
    da: &Real,
) -> Real {
    let one = Real::from_i64(1);
    let half = Real::from_rat(&rat(1, 2));
    let pi = Real::pi();
    let mr = Real::from_i64(big_m as i64);
    let nr = Real::from_i64(level as i64);
    let m2nr = Real::from_i64(m2n as i64);
    let lead = Real::from_i64(54).div(&pi.mul(&pi).mul(&dl.powf(&Real::from_rat(&rat(3, 2)))));
    let two_pi = pi.mul(&Real::from_i64(2));
    let mut num = mr
        .mul(&mr)
        .mul(&nr.powf(&Real::from_i64(2).add(&delta.mul(&Real::from_i64(2)))))
        .mul(&two_pi.div(&Real::from_i64(3)).sqrt())
        .mul(&two_pi.exp())
        .mul(&zeta(&one.add(&delta.mul(&Real::from_i64(4)))).sqrt())
        .mul(&c_delta.powf(&Real::from_rat(&rat(5, 2))))
        .mul(&Real::from_i64(euler_phi(big_m) as i64));
    let mut den = Real::from_i64(1);
    for (p, _) in factorize(big_m) {
        if !level.is_multiple_of(p) {
            den = den.mul(&one.sub(&Real::from_rat(&rat(1, (p * p) as i64))).sqrt());
        }
    }
    for (p, _) in factorize(level) {
        den = den.mul(&one.sub(&Real::from_rat(&rat(1, p as i64))).sqrt());
    }
    num = num.div(&den).mul(c_eps).mul(&n.powf(&half.add(eps)));
    let mut s = BigRational::zero();
    let m2 = big_m * big_m;
    for dd in divisors(m2n) {
        let g = BigRational::new(BigInt::from(m2.gcd(&dd)), BigInt::from(m2));
        let term = rat_int(euler_phi(m2n / dd))
            * rat_int(euler_phi(dd))
            * rat_int(m2n / dd)
            * num_traits::pow(g, 4);
        s += term;
    }
    let tail = Real::from_i64(27)
        .div(da)
        .mul(&m2nr.div(&pi.mul(dl)))
        .add(&Real::from_i64(16))
        .sqrt();
    lead.mul(&num).mul(&Real::from_rat(&s).sqrt()).mul(&tail)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub n: u64,
    pub h: u128,
    pub r: u64,
    #[serde(serialize_with = "crate::ser_rat")]
    pub a_e: BigRational,
    #[serde(serialize_with = "crate::ser_rat")]
    pub residual: BigRational,
}

/// Table of `(n, h, r(h), a_E(h), r − a_E)` for `n ∈ [lo, hi]`.
pub fn decomposition_residual(
    m: u64,
    alpha: [u64; 4],
    d: [u64; 4],
    lo: u64,
    hi: u64,
) -> Result<Vec<ResidualRow>> {
    if lo > hi {
        return invalid("empty n-range");
    }
    let insts: Vec<ProblemInstance> = (lo..=hi)
        .map(|n| ProblemInstance::new(m, alpha, n))
        .collect::<Result<_>>()?;
    let hs: Vec<u128> = insts.iter().map(|i| i.h_u128()).collect::<Result<_>>()?;
    let rs = theta_coefficients(m, alpha, d, &hs)?;
    insts
        .par_iter()
        .zip(rs.par_iter())
        .zip(hs.par_iter())
        .map(|((inst, &r), &h)| {
            let a_e = eisenstein_exact(inst, d)?;
            let residual = rat_int(r) - &a_e;
            Ok(ResidualRow {
                n: inst.n.to_u64().unwrap(),
                h,
                r,
                a_e,
                residual,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub all_r_positive: bool,
    pub all_ae_positive: bool,
    pub fitted_c: f64,
    pub top_half_max: f64,
    pub slack: f64,
    pub residual_pass: bool,
    /// `min a_E(h)/h^{0.9}` over rows with `h ≥ 1000`.
    pub min_main_ratio: f64,
}

/// Fits `C = max |r − a_E|/h^{exp}` on the lower half of the rows and checks
/// the upper half stays within `slack·C` (so slack 1.2 allows 20% growth).
pub fn growth_check(rows: &[ResidualRow], exponent: f64, slack: f64) -> GrowthReport {
    let ratio =
        |r: &ResidualRow| crate::arith::rat_to_f64(&r.residual.abs()) / (r.h as f64).powf(exponent);
    let half = rows.len() / 2;
    let fitted_c = rows[..half].iter().map(ratio).fold(0.0, f64::max);
    let top_half_max = rows[half..].iter().map(ratio).fold(0.0, f64::max);
    let min_main_ratio = rows
        .iter()
        .filter(|r| r.h >= 1000)
        .map(|r| crate::arith::rat_to_f64(&r.a_e) / (r.h as f64).powf(0.9))
        .fold(f64::INFINITY, f64::min);
    GrowthReport {
        all_r_positive: rows.iter().all(|r| r.r > 0),
        all_ae_positive: rows.iter().all(|r| r.a_e.is_positive()),
        fitted_c,
        top_half_max,
        slack,
        residual_pass: top_half_max <= slack * fitted_c,
        min_main_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DEFAULT_ORACLE_BUDGET;

    fn inst(m: u64, a: [u64; 4], n: i64) -> ProblemInstance {
        ProblemInstance::new(m, a, n).unwrap()
    }

    #[test]
    fn catalan() {
        let g = l_value_psi();
        assert!(g
            .to_sci(50)
            .starts_with("9.159655941772190150546035149323841107741493742816"));
        // alternating partial sums bracket the limit
        let lo = Real::from_rat(&psi_partial_sum(200));
        let hi = Real::from_rat(&psi_partial_sum(201));
        assert!(lo < g && g < hi);
        assert_eq!((psi_mod4(1), psi_mod4(3), psi_mod4(2)), (1, -1, 0));
    }

    #[test]
    fn l_values_agree() {
        for alpha in [
            [1, 1, 1, 1],
            [1, 1, 1, 3],
            [1, 1, 1, 5],
            [1, 3, 5, 7],
            [1, 1, 3, 5],
        ] {
            let ch = LatticeCharacter::for_alpha(alpha);
            let a = l_value_chi(&ch);
            let b = l_value_chi_series(&ch);
            let rel = a.sub(&b).abs().div(&a);
            assert!(rel < Real::parse("1e-55"), "α={alpha:?}");
        }
    }

    #[test]
    fn unramified_law() {
        let i = inst(5, [1, 1, 1, 3], 17);
        let ch = LatticeCharacter::for_alpha(i.alpha());
        for p in [5u64, 7, 11, 13, 17, 19, 23] {
            if (&i.h % BigInt::from(p)).is_zero() {
                continue;
            }
            let b = local_density(&i, [1; 4], p).unwrap().value;
            assert_eq!(
                b,
                BigRational::one() - rat_int(ch.value(p)) * rat_pow(p, -2),
                "p={p}"
            );
        }
    }

    #[test]
    fn smoke_value_and_dual_sources() {
        let i = inst(5, [1; 4], 1);
        let e = assemble_eisenstein(&i, [1; 4], DensitySource::Formula).unwrap();
        let o = assemble_eisenstein(
            &i,
            [1; 4],
            DensitySource::Oracle {
                budget: DEFAULT_ORACLE_BUDGET,
            },
        )
        .unwrap();
        assert_eq!(e.exact, o.exact);
        let v = crate::arith::rat_to_f64(&e.exact);
        assert!(v > 0.0 && (v - 4.0).abs() < 4.0);
        let rel = e.value.sub(&Real::from_rat(&e.exact)).abs().div(&e.value);
        assert!(rel < Real::parse("1e-50"));
    }

    #[test]
    fn support_enlargement() {
        let i = inst(11, [1, 3, 5, 7], 23);
        let base = assemble_eisenstein(&i, [1; 4], DensitySource::Formula).unwrap();
        let extra = primes_outside(&base.support, 5);
        let big =
            assemble_eisenstein_with_support(&i, [1; 4], DensitySource::Formula, &extra).unwrap();
        assert_eq!(base.exact, big.exact);
        assert_eq!(big.support.len(), base.support.len() + 5);
    }

    #[test]
    fn obstruction_reports_zero() {
        // n not divisible by 3 while every α_j d_j is: density 0 at 3 | m − 2
        let i = inst(5, [1; 4], 1);
        let e = assemble_eisenstein(&i, [3; 4], DensitySource::Formula).unwrap();
        assert_eq!(e.obstruction, Some(3));
        assert!(e.exact.is_zero());
    }

    #[test]
    fn gamma_literal_and_quotient() {
        assert_eq!(gamma_p_case(7, 0, 1, true).unwrap(), BigRational::one());
        assert_eq!(gamma_p_case(5, 1, -1, true).unwrap(), rat(4, 5));
        assert!(gamma_p_case(5, 1, 0, true).is_err());
        // χ(5) = −1 for α = (1,1,1,3): the literal unit case is the quotient
        for n in 0..40 {
            let i = inst(5, [1, 1, 1, 3], n);
            for p in [5u64, 7, 11, 13] {
                let ch = LatticeCharacter::for_alpha(i.alpha());
                let v = valuation(&i.h, p).unwrap();
                let q = gamma_p_quotient(&i, p).unwrap();
                assert!(q >= BigRational::one() - rat_pow(p, -1));
                if ch.value(p) == -1 {
                    assert_eq!(q, gamma_p_case(p, v, -1, true).unwrap(), "n={n} p={p}");
                }
            }
        }
    }

    #[test]
    fn beta_basics() {
        let i = inst(5, [1; 4], 4);
        assert_eq!(beta_ratio(7, [0; 4], &i).unwrap().value, BigRational::one());
        let b = beta_ratio(7, [1, 0, 0, 0], &i).unwrap().value;
        assert!(b <= rat(2, 7));
        for check in check_beta_bounds(7, &i).unwrap() {
            assert!(check.pass || !check.gate, "{check:?}");
        }
    }

    #[test]
    fn ratio_factorization() {
        let i = inst(11, [1, 1, 1, 5], 41);
        for (d, l) in [
            ([7, 1, 1, 1], [1, 11, 1, 1]),
            ([7, 7, 13, 1], [1, 1, 1, 11]),
            ([5, 1, 1, 3], [1, 7, 1, 1]),
        ] {
            let dl: [u64; 4] = std::array::from_fn(|j| d[j] * l[j]);
            let ratio = eisenstein_exact(&i, dl).unwrap() / eisenstein_exact(&i, l).unwrap();
            assert_eq!(ratio, beta_product(&i, d).unwrap(), "d={d:?}");
        }
    }

    #[test]
    fn correlation() {
        let i = inst(5, [1; 4], 9);
        let g = g_correlation([7, 11, 13, 1], &i).unwrap();
        assert_eq!(g.value, BigRational::one());
        let g = g_correlation([7, 7, 1, 1], &i).unwrap();
        assert!(g.pass);
        assert_eq!(g.bound, rat(256 * 49, 1));
    }

    #[test]
    fn cusp_profiles() {
        let k = CuspConstants {
            eps: Some(Real::parse("0.05")),
            scale: Some(Real::from_i64(1)),
            ..Default::default()
        };
        let a = cusp_bound(&inst(5, [1; 4], 100), [1; 4], CuspProfile::Simplified, &k).unwrap();
        let b = cusp_bound(&inst(5, [1; 4], 200), [1; 4], CuspProfile::Simplified, &k).unwrap();
        let expect = Real::from_i64(2).powf(&Real::parse("0.55"));
        assert!(b.div(&a).sub(&expect).abs() < Real::parse("1e-60"));
        assert!(matches!(
            cusp_bound(&inst(5, [1; 4], 1), [1; 4], CuspProfile::Explicit, &k),
            Err(Error::Config(_))
        ));
        let all = cusp_bound(
            &inst(5, [1; 4], 1),
            [1; 4],
            CuspProfile::Explicit,
            &CuspConstants::all_ones(),
        )
        .unwrap();
        assert!(all.is_positive() && all.is_finite());
    }

    #[test]
    fn residual_table_small() {
        let rows = decomposition_residual(5, [1; 4], [1; 4], 0, 100).unwrap();
        for r in &rows[1..] {
            assert!(r.r > 0 && r.a_e.is_positive());
            let q = r.r as f64 / crate::arith::rat_to_f64(&r.a_e);
            assert!((0.2..=5.0).contains(&q), "n={} ratio {q}", r.n);
        }
    }
}
