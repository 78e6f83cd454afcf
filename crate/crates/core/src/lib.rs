//! Representations of integers by sums of four generalized m-gonal numbers:
//! exact enumeration, p-adic local densities, Eisenstein coefficients and
//! the Rosser-weight sieve used to restrict solutions to almost-primes.

pub mod arith;
pub mod density;
pub mod eisenstein;
pub mod enumerate;
pub mod error;
pub mod poly;
pub mod real;
pub mod sieve;
pub mod suites;

pub use error::{Error, Result};

use num_rational::BigRational;

pub(crate) fn ser_rat<S: serde::Serializer>(
    x: &BigRational,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&arith::rat_to_string(x))
}
