//! Generalized polygonal numbers, the completed-square transform and the
//! shifted lattice cosets `L^d + v` that carry the representation problem.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use serde::Serialize;

use crate::arith::{is_squarefree, valuation_u64};
use crate::error::{invalid, Error, Result};

/// The family `p_m(x) = ((m−2)x² − (m−4)x)/2`, `x ∈ ℤ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PolygonalFamily {
    m: u64,
}

impl PolygonalFamily {
    pub fn new(m: u64) -> Result<Self> {
        if m < 3 {
            return invalid(format!("polygon order m = {m} must be at least 3"));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    /// `m − 2`, always positive.
    pub fn m2(&self) -> u64 {
        self.m - 2
    }

    /// `m − 4` as a signed value (negative for triangular numbers).
    pub fn m4(&self) -> i64 {
        self.m as i64 - 4
    }

    /// m odd and m − 4 prime to 15.
    pub fn is_theorem_mode(&self) -> bool {
        let r = self.m4();
        self.m % 2 == 1 && r.rem_euclid(3) != 0 && r.rem_euclid(5) != 0
    }

    pub fn theorem_mode_violation(&self) -> Option<String> {
        let r = self.m4();
        if self.m.is_multiple_of(2) {
            Some("m is even".into())
        } else if r.rem_euclid(3) == 0 {
            Some(
                "m − 4 ≡ 0 (mod 3): the represented n are restricted by a congruence obstruction"
                    .into(),
            )
        } else if r.rem_euclid(5) == 0 {
            Some(
                "m − 4 ≡ 0 (mod 5): the represented n are restricted by a congruence obstruction"
                    .into(),
            )
        } else {
            None
        }
    }

    pub fn require_theorem_mode(&self) -> Result<()> {
        match self.theorem_mode_violation() {
            None => Ok(()),
            Some(reason) => Err(Error::NotTheoremMode { m: self.m, reason }),
        }
    }

    pub fn eval(&self, x: &BigInt) -> BigInt {
        let twice = BigInt::from(self.m2()) * x * x - BigInt::from(self.m4()) * x;
        debug_assert!(twice.is_even());
        twice / 2
    }

    /// `2(m−2)d·x + 4 − m`.
    pub fn shifted_coordinate(&self, d: u64, x: &BigInt) -> BigInt {
        BigInt::from(2 * self.m2()) * BigInt::from(d) * x - BigInt::from(self.m4())
    }
}

pub fn eval_polygonal(family: &PolygonalFamily, x: &BigInt) -> BigInt {
    family.eval(x)
}

pub fn shifted_square_coordinate(family: &PolygonalFamily, d: u64, x: &BigInt) -> BigInt {
    family.shifted_coordinate(d, x)
}

/// Positive odd coefficients with squarefree product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CoefficientVector([u64; 4]);

impl CoefficientVector {
    pub fn new(alpha: [u64; 4]) -> Result<Self> {
        if alpha.contains(&0) {
            return invalid("coefficients α_j must be positive");
        }
        if alpha.iter().any(|&a| a % 2 == 0) {
            return invalid(format!("coefficients {alpha:?} must all be odd"));
        }
        let prod = alpha
            .iter()
            .try_fold(1u64, |acc, &a| acc.checked_mul(a))
            .ok_or_else(|| Error::InvalidInput("∏α_j overflows 64 bits".into()))?;
        if !is_squarefree(prod) {
            return invalid(format!("∏α_j = {prod} is not squarefree"));
        }
        Ok(Self(alpha))
    }

    pub fn get(&self) -> [u64; 4] {
        self.0
    }

    pub fn product(&self) -> u64 {
        self.0.iter().product()
    }
}

/// One instance `Σ α_j p_m(x_j) = n` together with its transformed target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProblemInstance {
    pub family: PolygonalFamily,
    pub alpha: CoefficientVector,
    #[serde(serialize_with = "ser_big")]
    pub n: BigInt,
    #[serde(serialize_with = "ser_big")]
    pub h: BigInt,
}

fn ser_big<S: serde::Serializer>(x: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

impl ProblemInstance {
    pub fn new(m: u64, alpha: [u64; 4], n: impl Into<BigInt>) -> Result<Self> {
        let family = PolygonalFamily::new(m)?;
        let alpha = CoefficientVector::new(alpha)?;
        let n = n.into();
        if n.is_negative() {
            return invalid("target n must be nonnegative");
        }
        let h = target_h(&family, &alpha, &n);
        Ok(Self {
            family,
            alpha,
            n,
            h,
        })
    }

    pub fn m(&self) -> u64 {
        self.family.m()
    }

    pub fn alpha(&self) -> [u64; 4] {
        self.alpha.get()
    }

    pub fn with_n(&self, n: impl Into<BigInt>) -> Result<Self> {
        Self::new(self.m(), self.alpha(), n)
    }

    pub fn h_u128(&self) -> Result<u128> {
        self.h
            .to_u128()
            .ok_or_else(|| Error::BudgetExceeded(format!("h = {} exceeds 128 bits", self.h)))
    }

    /// `Σ α_j p_m(x_j)`.
    pub fn lhs(&self, x: &[BigInt; 4]) -> BigInt {
        self.alpha()
            .iter()
            .zip(x)
            .map(|(&a, xj)| BigInt::from(a) * self.family.eval(xj))
            .sum()
    }

    /// `Σ α_j (2(m−2)d_j x_j + 4 − m)²`.
    pub fn completed_square(&self, d: &[u64; 4], x: &[BigInt; 4]) -> BigInt {
        (0..4)
            .map(|j| {
                let xj = self.family.shifted_coordinate(d[j], &x[j]);
                BigInt::from(self.alpha()[j]) * &xj * &xj
            })
            .sum()
    }
}

/// `h = 8(m−2)n + Σ α_j (m−4)²`.
pub fn target_h(family: &PolygonalFamily, alpha: &CoefficientVector, n: &BigInt) -> BigInt {
    let m4 = BigInt::from(family.m4());
    BigInt::from(8 * family.m2()) * n + BigInt::from(alpha.get().iter().sum::<u64>()) * &m4 * &m4
}

/// The coset `L^d + v` with diagonal Gram matrix on the basis `d_j e_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeCoset {
    pub family: PolygonalFamily,
    pub alpha: CoefficientVector,
    pub d: [u64; 4],
    pub gram_diag: [BigInt; 4],
    pub shift_num: BigInt,
    pub shift_den: BigInt,
}

pub fn build_coset(
    family: &PolygonalFamily,
    alpha: &CoefficientVector,
    d: [u64; 4],
) -> Result<LatticeCoset> {
    if d.contains(&0) {
        return invalid("scaling entries d_j must be positive");
    }
    let m2 = BigInt::from(family.m2());
    let a = alpha.get();
    let gram_diag = std::array::from_fn(|j| {
        BigInt::from(4u32)
            * &m2
            * &m2
            * BigInt::from(a[j])
            * BigInt::from(d[j])
            * BigInt::from(d[j])
    });
    Ok(LatticeCoset {
        family: *family,
        alpha: *alpha,
        d,
        gram_diag,
        shift_num: BigInt::from(-family.m4()),
        shift_den: BigInt::from(2 * family.m2()),
    })
}

impl LatticeCoset {
    pub fn discriminant(&self) -> BigInt {
        self.gram_diag.iter().product()
    }

    /// Smallest `a ≥ 1` with `a·v ∈ L^d`.
    pub fn conductor(&self) -> BigInt {
        let v = BigRational::new(self.shift_num.clone(), self.shift_den.clone());
        self.d.iter().fold(BigInt::one(), |acc, &dj| {
            // a·v/d_j must be integral
            let q = &v / BigRational::from_integer(BigInt::from(dj));
            acc.lcm(q.denom())
        })
    }

    /// `Q(v + Σ x_j d_j e_j)` evaluated from the Gram data.
    pub fn evaluate(&self, x: &[BigInt; 4]) -> BigInt {
        let v = BigRational::new(self.shift_num.clone(), self.shift_den.clone());
        let q: BigRational = (0..4)
            .map(|j| {
                let dj = BigRational::from_integer(BigInt::from(self.d[j]));
                let y = BigRational::from_integer(x[j].clone()) + &v / &dj;
                BigRational::from_integer(self.gram_diag[j].clone()) * &y * &y
            })
            .sum();
        debug_assert!(q.is_integer());
        q.to_integer()
    }
}

/// Level of the diagonal form `Σ α_j (2(m−2)d_j x_j)²`: smallest N with
/// `N·A⁻¹` integral with even diagonal, `A = 2·Gram`.
pub fn level_of_form(
    family: &PolygonalFamily,
    alpha: &CoefficientVector,
    d: [u64; 4],
) -> Result<BigInt> {
    let coset = build_coset(family, alpha, d)?;
    Ok(level_of_diagonal(&coset.gram_diag))
}

pub fn level_of_diagonal(gram: &[BigInt]) -> BigInt {
    // A⁻¹ = diag(1/(2g_j)); N/(2g_j) has to be an even integer.
    gram.iter()
        .fold(BigInt::one(), |acc, g| acc.lcm(&(BigInt::from(4u32) * g)))
}

/// Exponent of the prime p in ∏α_j d_j, used by several closed forms.
pub(crate) fn min_ord_alpha_d(p: u64, alpha: [u64; 4], d: [u64; 4]) -> u32 {
    (0..4)
        .map(|j| valuation_u64(alpha[j], p).unwrap() + valuation_u64(d[j], p).unwrap())
        .min()
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn b(x: i64) -> BigInt {
        BigInt::from(x)
    }

    #[test]
    fn polygonal_values() {
        let f5 = PolygonalFamily::new(5).unwrap();
        let f7 = PolygonalFamily::new(7).unwrap();
        assert_eq!(eval_polygonal(&f5, &b(3)), b(12));
        assert_eq!(eval_polygonal(&f7, &b(0)), b(0));
        assert_eq!(eval_polygonal(&f7, &b(1)), b(1));
        assert_eq!(eval_polygonal(&f5, &b(-1)), b(2));
        assert!(PolygonalFamily::new(2).is_err());
    }

    #[test]
    fn shifted_coordinates() {
        let f5 = PolygonalFamily::new(5).unwrap();
        let f9 = PolygonalFamily::new(9).unwrap();
        assert_eq!(shifted_square_coordinate(&f5, 1, &b(2)), b(11));
        assert_eq!(shifted_square_coordinate(&f5, 1, &b(0)), b(-1));
        assert_eq!(shifted_square_coordinate(&f9, 3, &b(1)), b(37));
    }

    #[test]
    fn targets() {
        assert_eq!(ProblemInstance::new(5, [1; 4], 1).unwrap().h, b(28));
        assert_eq!(ProblemInstance::new(5, [1, 1, 1, 3], 2).unwrap().h, b(54));
        assert_eq!(ProblemInstance::new(7, [1; 4], 0).unwrap().h, b(36));
    }

    #[test]
    fn theorem_mode() {
        let modes: Vec<u64> = (3..40)
            .filter(|&m| PolygonalFamily::new(m).unwrap().is_theorem_mode())
            .collect();
        assert_eq!(modes, vec![3, 5, 11, 15, 17, 21, 23, 27, 33, 35]);
        assert!(matches!(
            PolygonalFamily::new(7).unwrap().require_theorem_mode(),
            Err(Error::NotTheoremMode { m: 7, .. })
        ));
    }

    #[test]
    fn coefficient_invariants() {
        assert!(CoefficientVector::new([1, 3, 5, 7]).is_ok());
        assert!(CoefficientVector::new([1, 1, 1, 2]).is_err());
        assert!(CoefficientVector::new([3, 3, 1, 1]).is_err());
        assert!(CoefficientVector::new([0, 1, 1, 1]).is_err());
    }

    #[test]
    fn coset_construction() {
        let f5 = PolygonalFamily::new(5).unwrap();
        let ones = CoefficientVector::new([1; 4]).unwrap();
        let c = build_coset(&f5, &ones, [1; 4]).unwrap();
        assert_eq!(c.gram_diag, [b(36), b(36), b(36), b(36)]);
        assert_eq!(
            BigRational::new(c.shift_num.clone(), c.shift_den.clone()),
            BigRational::new(b(-1), b(6))
        );
        assert_eq!(c.discriminant(), b(1_679_616));
        assert_eq!(c.conductor(), b(6));

        let a = CoefficientVector::new([1, 3, 5, 7]).unwrap();
        let c = build_coset(&f5, &a, [2, 1, 1, 1]).unwrap();
        assert_eq!(c.gram_diag, [b(144), b(108), b(180), b(252)]);
        assert!(build_coset(&f5, &a, [0, 1, 1, 1]).is_err());
    }

    #[test]
    fn discriminant_closed_form() {
        for m in 3..20u64 {
            let f = PolygonalFamily::new(m).unwrap();
            let a = CoefficientVector::new([1, 3, 5, 7]).unwrap();
            let c = build_coset(&f, &a, [1; 4]).unwrap();
            let m2 = b(m as i64 - 2);
            assert_eq!(c.discriminant(), b(256) * num_traits::pow(m2, 8) * b(105));
        }
    }

    #[test]
    fn levels() {
        assert_eq!(level_of_diagonal(&[b(1), b(1), b(1), b(1)]), b(4));
        let f5 = PolygonalFamily::new(5).unwrap();
        let ones = CoefficientVector::new([1; 4]).unwrap();
        let n1 = level_of_form(&f5, &ones, [1; 4]).unwrap();
        assert!((b(144) % &n1).is_zero());
        for c in 1..6u64 {
            let nc = level_of_form(&f5, &ones, [c; 4]).unwrap();
            assert!((&n1 * b((c * c) as i64) % &nc).is_zero());
        }
    }

    #[test]
    fn coset_evaluation_matches_completed_square() {
        let inst = ProblemInstance::new(11, [1, 3, 5, 7], 4).unwrap();
        let c = build_coset(&inst.family, &inst.alpha, [2, 1, 3, 1]).unwrap();
        for x in [[0, 0, 0, 0], [1, -2, 3, 0], [-5, 7, 2, 9]] {
            let x = x.map(b);
            assert_eq!(c.evaluate(&x), inst.completed_square(&[2, 1, 3, 1], &x));
        }
    }
}
