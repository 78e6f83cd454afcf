use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Serialize, Serializer};

use polysum::arith::{parse_rational, rat_to_string};
use polysum::density::DEFAULT_ORACLE_BUDGET;
use polysum::poly::ProblemInstance;
use polysum::suites::SuiteName;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "polysum",
    version,
    about = "Sums of four generalized polygonal numbers"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub output: Option<PathBuf>,

    /// Flat `key = value` file supplying flags (and `command`) not given on
    /// the command line.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true, env = "POLYSUM_THREADS")]
    #[serde(skip)]
    pub threads: Option<usize>,

    /// Largest modulus p^k for the counting oracle.
    #[arg(long, global = true, default_value_t = DEFAULT_ORACLE_BUDGET)]
    pub budget: u64,

    /// Significant digits for high-precision reals.
    #[arg(long, global = true, default_value_t = 30)]
    pub digits: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Polygonal numbers and targets.
    #[command(subcommand)]
    Poly(PolyOp),
    /// Representation counts.
    #[command(subcommand)]
    Repr(ReprOp),
    /// Local density at one prime.
    Density(DensityArgs),
    /// Eisenstein coefficient a_E(h).
    Eisenstein(EisensteinArgs),
    /// Local β ratios and their bounds.
    Betas(BetaArgs),
    /// Rosser weights and weighted sieve sums.
    #[command(subcommand)]
    Sieve(SieveOp),
    /// Almost-prime witness sweep.
    Witness(WitnessArgs),
    /// r(h) − a_E(h) table with a growth check.
    Residuals(ResidualArgs),
    /// Exact threshold comparison for the almost-prime theorem.
    Threshold(ThresholdArgs),
    /// Seeded property sweep.
    Suite(SuiteArgs),
    /// Re-run a JSON-lines output and compare it with the stored one.
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolyOp {
    /// p_m(x).
    Eval {
        #[arg(long)]
        m: u64,
        #[arg(long, value_parser = parse_big, allow_hyphen_values = true)]
        #[serde(serialize_with = "ser_display")]
        x: BigInt,
    },
    /// h = 8(m−2)n + Σα_j(m−4)².
    Target(ProblemArgs),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReprOp {
    /// Number of solutions of Σ α_j p_m(d_j x_j) = n.
    Count {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_parser = parse_quad, default_value = "1,1,1,1")]
        d: Quad,
        /// Also list the solutions.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct ProblemArgs {
    #[arg(long)]
    pub m: u64,
    #[arg(long, value_parser = parse_quad, default_value = "1,1,1,1")]
    pub alpha: Quad,
    #[arg(long, value_parser = parse_big, conflicts_with = "n_range")]
    #[serde(serialize_with = "ser_opt_display")]
    pub n: Option<BigInt>,
    /// Inclusive range `a:b`.
    #[arg(long, value_parser = parse_range)]
    pub n_range: Option<NRange>,
}

impl ProblemArgs {
    pub fn instances(&self) -> polysum::Result<Vec<ProblemInstance>> {
        match (&self.n, &self.n_range) {
            (Some(n), None) => Ok(vec![ProblemInstance::new(self.m, self.alpha.0, n.clone())?]),
            (None, Some(r)) => (r.lo..=r.hi)
                .map(|n| ProblemInstance::new(self.m, self.alpha.0, n))
                .collect(),
            _ => Err(polysum::Error::InvalidInput(
                "give exactly one of --n or --n-range".into(),
            )),
        }
    }

    pub fn single(&self) -> polysum::Result<ProblemInstance> {
        let mut v = self.instances()?;
        if v.len() != 1 {
            return Err(polysum::Error::InvalidInput(
                "this command takes --n".into(),
            ));
        }
        Ok(v.remove(0))
    }

    pub fn range(&self) -> polysum::Result<NRange> {
        self.n_range
            .ok_or_else(|| polysum::Error::InvalidInput("this command takes --n-range".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Dispatch to the formula for p (closed form at 2 and p | m−2, Kane otherwise).
    Auto,
    /// Closed forms only.
    Closed,
    Kane,
    Oracle,
}

#[derive(Debug, Args, Serialize)]
pub struct DensityArgs {
    #[arg(long)]
    pub p: u64,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_parser = parse_quad, default_value = "1,1,1,1")]
    pub d: Quad,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
    /// Fixed oracle depth k (default: smallest stable depth).
    #[arg(long)]
    pub depth: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Formula,
    Oracle,
}

#[derive(Debug, Args, Serialize)]
pub struct EisensteinArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_parser = parse_quad, default_value = "1,1,1,1")]
    pub d: Quad,
    #[arg(long, value_enum, default_value_t = Source::Formula)]
    pub source: Source,
    /// Extra primes added to the local support.
    #[arg(long, value_delimiter = ',')]
    pub extra_primes: Vec<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct BetaArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub p: u64,
    /// Exponent pattern c (repeatable); default: every c in {0,1}⁴.
    #[arg(long, value_parser = parse_quad)]
    pub c: Vec<Quad>,
    /// Also evaluate the bound lemmas at p.
    #[arg(long)]
    pub bounds: bool,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SieveOp {
    /// Nonzero weights on divisors of the pool product.
    Weights(WeightArgs),
    /// Weighted sieve sums for one n.
    Sums(SumArgs),
    /// Two-stage sieve gates plus a witness sweep.
    Driver(DriverArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Plus,
    Minus,
    CapitalMinus,
    Mobius,
}

#[derive(Debug, Args, Serialize)]
pub struct WeightArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub pool: Vec<u64>,
    /// Sieve level D.
    #[arg(long, value_parser = parse_rat)]
    pub level: Rat,
    #[arg(long, value_parser = parse_rat, default_value = "2")]
    pub beta: Rat,
    #[arg(long, value_enum, default_value_t = Kind::Plus)]
    pub kind: Kind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    Upper,
    LowerSymmetric,
    LowerSingleLambda,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Counts {
    Direct,
    MainTerm,
}

#[derive(Debug, Args, Serialize)]
pub struct SumArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Sieve primes; default: good primes below --z.
    #[arg(long, value_delimiter = ',')]
    pub pool: Vec<u64>,
    #[arg(long, value_parser = parse_rat, default_value = "12")]
    pub z: Rat,
    #[arg(long, value_parser = parse_rat)]
    pub level: Rat,
    #[arg(long, value_parser = parse_rat, default_value = "2")]
    pub beta: Rat,
    /// Exponent caps `p:c,...`; default: 3 at every prime dividing 2∏α_j.
    #[arg(long, value_parser = parse_caps)]
    pub caps: Option<Caps>,
    #[arg(long, value_parser = parse_quad, default_value = "1,1,1,1")]
    pub ell: Quad,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "upper,lower-symmetric,lower-single-lambda,exact"
    )]
    pub bound: Vec<Bound>,
    #[arg(long, value_enum, default_value_t = Counts::Direct)]
    pub counts: Counts,
}

#[derive(Debug, Args, Serialize)]
pub struct DriverArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_parser = parse_rat, default_value = "5")]
    pub z0: Rat,
    #[arg(long, value_parser = parse_rat, default_value = "50")]
    pub z: Rat,
    #[arg(long, value_parser = parse_caps, default_value = "2:3")]
    pub caps: Caps,
    #[arg(long, value_parser = parse_rat, default_value = "1")]
    pub delta: Rat,
    #[arg(long, value_parser = parse_rat, default_value = "1")]
    pub b: Rat,
    #[arg(long, value_parser = parse_rat, default_value = "1")]
    pub c: Rat,
    #[arg(long, value_parser = parse_rat, default_value = "1/1978")]
    pub theta: Rat,
    #[arg(long, value_parser = parse_rat, default_value = "100")]
    pub d0: Rat,
    #[arg(long, value_parser = parse_rat, default_value = "1000")]
    pub d: Rat,
    #[arg(long, value_parser = parse_rat, default_value = "2")]
    pub beta: Rat,
    #[arg(long, default_value_t = 3)]
    pub factor_bound: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct WitnessArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Largest allowed Ω(x_j).
    #[arg(long, default_value_t = 3)]
    pub omega_bound: u32,
    /// Primes no coordinate may be divisible by.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<u64>,
    /// Count distinct prime factors instead of Ω.
    #[arg(long)]
    pub distinct: bool,
    /// Require every coordinate to be nonzero.
    #[arg(long)]
    pub nonzero: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ResidualArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_parser = parse_quad, default_value = "1,1,1,1")]
    pub d: Quad,
    #[arg(long, default_value_t = 0.75)]
    pub exponent: f64,
    /// Allowed growth of the fitted constant on the top half.
    #[arg(long, default_value_t = 0.2)]
    pub slack: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ThresholdArgs {
    #[arg(long, required_unless_present = "grid")]
    pub m: Option<u64>,
    #[arg(long, value_parser = parse_quad, default_value = "1,1,1,1")]
    pub alpha: Quad,
    #[arg(long, value_parser = parse_rat, default_value = "1/10")]
    pub eps: Rat,
    /// Implied constant.
    #[arg(long, value_parser = parse_rat, default_value = "1")]
    pub constant: Rat,
    /// m ∈ {5, 11, 17} × α ∈ {1⁴, (1,1,1,3), (1,1,3,5)}.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SuiteArgs {
    #[arg(value_parser = parse_suite)]
    pub name: SuiteName,
    #[arg(long, default_value_t = 100)]
    pub cases: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, value_parser = parse_rat, default_value = "1/1978")]
    pub theta: Rat,
    #[arg(long, default_value_t = 2000)]
    pub n_max: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub file: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Quad(pub [u64; 4]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NRange {
    pub lo: u64,
    pub hi: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rat(pub BigRational);

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&rat_to_string(&self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Caps(pub BTreeMap<u64, u32>);

fn parse_quad(s: &str) -> Result<Quad, String> {
    let v: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    <[u64; 4]>::try_from(v)
        .map(Quad)
        .map_err(|v| format!("expected 4 comma-separated entries, got {}", v.len()))
}

fn parse_big(s: &str) -> Result<BigInt, String> {
    BigInt::from_str(s.trim()).map_err(|e| format!("`{s}`: {e}"))
}

fn parse_range(s: &str) -> Result<NRange, String> {
    let (a, b) = s.split_once(':').ok_or("expected `a:b`")?;
    let lo = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok(NRange { lo, hi })
}

fn parse_rat(s: &str) -> Result<Rat, String> {
    parse_rational(s).map(Rat).map_err(|e| e.to_string())
}

fn parse_caps(s: &str) -> Result<Caps, String> {
    let mut caps = BTreeMap::new();
    for item in s.split(',').filter(|t| !t.trim().is_empty()) {
        let (p, c) = item.split_once(':').ok_or("expected `p:c` pairs")?;
        let p = p.trim().parse().map_err(|e| format!("`{p}`: {e}"))?;
        let c = c.trim().parse().map_err(|e| format!("`{c}`: {e}"))?;
        caps.insert(p, c);
    }
    Ok(Caps(caps))
}

fn parse_suite(s: &str) -> Result<SuiteName, String> {
    s.parse().map_err(|e: polysum::Error| e.to_string())
}

fn ser_display<S: Serializer, T: std::fmt::Display>(x: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(x)
}

fn ser_opt_display<S: Serializer, T: std::fmt::Display>(
    x: &Option<T>,
    s: S,
) -> Result<S::Ok, S::Error> {
    match x {
        Some(x) => s.collect_str(x),
        None => s.serialize_none(),
    }
}
