use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use polysum::arith::rat_to_string;
use polysum::density::{
    density_at_2, density_at_divisor_prime, density_kane_instance, density_oracle,
    density_oracle_stable, local_density,
};
use polysum::eisenstein::{
    assemble_eisenstein_with_support, beta_ratio, check_beta_bounds, decomposition_residual,
    growth_check, DensitySource,
};
use polysum::enumerate::{
    bad_primes, count_representations_with_budget, witness_search, FactorMode, WitnessOptions,
};
use polysum::poly::PolygonalFamily;
use polysum::sieve::{
    sieve_pool, theorem_driver, threshold_report, weighted_sieve_sum, CountsSource, SieveBound,
    SieveConfig, SieveWeightTable, WeightKind, WeightedSumSpec,
};
use polysum::suites::{run_suite, SuiteOptions};
use polysum::{Error, Result};

use crate::args::*;
use crate::output::Report;

/// Enumeration budget (box volume) for `repr count`.
const ENUM_BUDGET: f64 = 5e8;

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

/// Integers as JSON numbers when they fit in i64, as strings otherwise.
fn int(x: &BigInt) -> Value {
    match x.to_i64() {
        Some(v) => json!(v),
        None => json!(x.to_string()),
    }
}

fn rat(x: &BigRational) -> Value {
    json!(rat_to_string(x))
}

pub fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Poly(op) => poly(op),
        Command::Repr(ReprOp::Count { problem, d, list }) => repr_count(problem, d.0, *list),
        Command::Density(a) => density(a, cli.budget),
        Command::Eisenstein(a) => eisenstein(a, cli.budget, cli.digits),
        Command::Betas(a) => betas(a),
        Command::Sieve(SieveOp::Weights(a)) => sieve_weights(a),
        Command::Sieve(SieveOp::Sums(a)) => sieve_sums(a),
        Command::Sieve(SieveOp::Driver(a)) => sieve_driver(a),
        Command::Witness(a) => witness(a),
        Command::Residuals(a) => residuals(a),
        Command::Threshold(a) => threshold(a),
        Command::Suite(a) => suite(a, cli.budget),
        Command::Replay(_) => unreachable!("replay is handled by the caller"),
    }
}

fn poly(op: &PolyOp) -> Result<Report> {
    match op {
        PolyOp::Eval { m, x } => {
            let fam = PolygonalFamily::new(*m)?;
            let rec = json!({ "m": m, "x": int(x), "value": int(&fam.eval(x)) });
            Ok(Report::new(vec![rec], json!({ "records": 1 })))
        }
        PolyOp::Target(p) => {
            let recs: Vec<Value> = p
                .instances()?
                .iter()
                .map(|i| json!({ "m": i.m(), "alpha": i.alpha(), "n": int(&i.n), "h": int(&i.h) }))
                .collect();
            let n = recs.len();
            Ok(Report::new(recs, json!({ "records": n })))
        }
    }
}

fn repr_count(problem: &ProblemArgs, d: [u64; 4], list: bool) -> Result<Report> {
    let insts = problem.instances()?;
    let recs = insts
        .par_iter()
        .map(|inst| {
            let set = count_representations_with_budget(inst, d, ENUM_BUDGET)?;
            let mut rec = json!({
                "n": int(&inst.n),
                "h": int(&inst.h),
                "d": d,
                "count": set.count,
            });
            if list {
                rec["solutions"] = to_value(&set.solutions);
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let zero = recs.iter().filter(|r| r["count"] == 0).count();
    Ok(Report::new(
        recs,
        json!({ "m": problem.m, "alpha": problem.alpha.0, "unrepresented": zero }),
    ))
}

fn density(a: &DensityArgs, budget: u64) -> Result<Report> {
    let inst = a.problem.single()?;
    let d = a.d.0;
    let m2 = inst.family.m2();
    let (value, method, depth) = match a.method {
        Method::Auto => {
            let r = local_density(&inst, d, a.p)?;
            (r.value, to_value(&r.method), None)
        }
        Method::Closed => {
            let r = if a.p == 2 {
                density_at_2(&inst, d)?
            } else if m2 % a.p == 0 {
                density_at_divisor_prime(&inst, d, a.p)?
            } else {
                return Err(Error::Dispatch(format!(
                    "no closed form at p = {} (use kane or oracle)",
                    a.p
                )));
            };
            (r.value, to_value(&r.method), None)
        }
        Method::Kane => {
            let r = density_kane_instance(&inst, d, a.p)?;
            (r.value, to_value(&r.method), None)
        }
        Method::Oracle => {
            let r = match a.depth {
                Some(k) => density_oracle(a.p, &inst, d, k, budget)?,
                None => density_oracle_stable(&inst, d, a.p, budget)?,
            };
            (r.value, json!("oracle"), Some((r.depth, r.stable)))
        }
    };
    let mut rec = json!({
        "p": a.p,
        "m": inst.m(),
        "alpha": inst.alpha(),
        "n": int(&inst.n),
        "h": int(&inst.h),
        "d": d,
        "method": method,
        "value": rat(&value),
    });
    if let Some((k, stable)) = depth {
        rec["depth"] = json!(k);
        rec["stable"] = json!(stable);
    }
    let mut rep = Report::new(vec![rec], json!({ "obstruction": value.is_zero() }));
    if value.is_zero() {
        rep.exit = 2;
    }
    Ok(rep)
}

fn source(s: Source, budget: u64) -> DensitySource {
    match s {
        Source::Formula => DensitySource::Formula,
        Source::Oracle => DensitySource::Oracle { budget },
    }
}

fn eisenstein(a: &EisensteinArgs, budget: u64, digits: usize) -> Result<Report> {
    let insts = a.problem.instances()?;
    let src = source(a.source, budget);
    let coeffs = insts
        .par_iter()
        .map(|inst| assemble_eisenstein_with_support(inst, a.d.0, src, &a.extra_primes))
        .collect::<Result<Vec<_>>>()?;
    let mut obstructed = Vec::new();
    let recs = insts
        .iter()
        .zip(&coeffs)
        .map(|(inst, e)| {
            if e.obstruction.is_some() {
                obstructed.push(int(&inst.n));
            }
            json!({
                "n": int(&inst.n),
                "h": int(&e.h),
                "d": e.d,
                "character": e.character,
                "support": e.support,
                "prefactor": rat(&e.prefactor),
                "local_product": rat(&e.local_product),
                "exact": rat(&e.exact),
                "value": e.value.to_sci(digits),
                "obstruction": e.obstruction,
                "factors": to_value(&e.factors),
            })
        })
        .collect();
    let mut rep = Report::new(recs, json!({ "digits": digits, "obstructed": obstructed }));
    if !obstructed.is_empty() {
        rep.exit = 2;
    }
    Ok(rep)
}

fn betas(a: &BetaArgs) -> Result<Report> {
    let inst = a.problem.single()?;
    let patterns: Vec<[u32; 4]> = if a.c.is_empty() {
        (0..16u32)
            .map(|mask| std::array::from_fn(|j| (mask >> j) & 1))
            .collect()
    } else {
        a.c.iter()
            .map(|q| q.0.map(|x| u32::try_from(x).unwrap_or(u32::MAX)))
            .collect()
    };
    let mut recs = Vec::new();
    for c in patterns {
        let b = beta_ratio(a.p, c, &inst)?;
        recs.push(json!({ "kind": "beta", "p": a.p, "c": c, "value": rat(&b.value) }));
    }
    let mut failed = 0;
    if a.bounds {
        for b in check_beta_bounds(a.p, &inst)? {
            failed += usize::from(b.gate && !b.pass);
            let mut rec = to_value(&b);
            rec["kind"] = json!("bound");
            recs.push(rec);
        }
    }
    let mut rep = Report::new(
        recs,
        json!({ "p": a.p, "n": int(&inst.n), "bound_failures": failed }),
    );
    if failed > 0 {
        rep.exit = 1;
    }
    Ok(rep)
}

fn kind(k: Kind) -> WeightKind {
    match k {
        Kind::Plus => WeightKind::Plus,
        Kind::Minus => WeightKind::Minus,
        Kind::CapitalMinus => WeightKind::CapitalMinus,
        Kind::Mobius => WeightKind::Mobius,
    }
}

fn sieve_weights(a: &WeightArgs) -> Result<Report> {
    let t = SieveWeightTable::build(&a.pool, &a.level.0, &a.beta.0, kind(a.kind))?;
    let recs: Vec<Value> = t
        .support()
        .into_iter()
        .map(|(d, w)| json!({ "d": d, "weight": w }))
        .collect();
    let full = t.divisor_sums()[(1 << a.pool.len()) - 1];
    let n = recs.len();
    Ok(Report::new(
        recs,
        json!({ "pool": a.pool, "kind": a.kind, "support": n, "divisor_sum_of_product": full }),
    ))
}

fn sieve_sums(a: &SumArgs) -> Result<Report> {
    let inst = a.problem.single()?;
    let pool = if a.pool.is_empty() {
        sieve_pool(&inst, &a.z.0)
    } else {
        a.pool.clone()
    };
    let caps = match &a.caps {
        Some(c) => c.0.clone(),
        None => bad_primes(&inst).into_iter().map(|p| (p, 3)).collect(),
    };
    let counts = match a.counts {
        Counts::Direct => CountsSource::DirectEnum,
        Counts::MainTerm => CountsSource::MainTerm,
    };
    let mut recs = Vec::new();
    for &b in &a.bound {
        let bound = match b {
            Bound::Upper => SieveBound::Upper,
            Bound::LowerSymmetric => SieveBound::LowerSymmetric,
            Bound::LowerSingleLambda => SieveBound::LowerSingleLambda,
            Bound::Exact => SieveBound::Exact,
        };
        let spec = WeightedSumSpec {
            level: a.level.0.clone(),
            beta: a.beta.0.clone(),
            bound,
        };
        let s = weighted_sieve_sum(&inst, a.ell.0, &[], &pool, &caps, &spec, counts)?;
        recs.push(json!({ "bound": s.bound, "counts": s.source, "value": rat(&s.value) }));
    }
    Ok(Report::new(
        recs,
        json!({ "n": int(&inst.n), "pool": pool, "caps": caps }),
    ))
}

fn sieve_driver(a: &DriverArgs) -> Result<Report> {
    let r = a.problem.range()?;
    let config = SieveConfig {
        z0: a.z0.0.clone(),
        z: a.z.0.clone(),
        caps: a.caps.0.clone(),
        delta: a.delta.0.clone(),
        b: a.b.0.clone(),
        c: a.c.0.clone(),
        theta: a.theta.0.clone(),
        d0: a.d0.0.clone(),
        d: a.d.0.clone(),
        beta: a.beta.0.clone(),
        factor_bound: a.factor_bound,
    };
    let rep = theorem_driver(a.problem.m, a.problem.alpha.0, r.lo, r.hi, &config)?;
    let recs = rep.rows.iter().map(to_value).collect();
    let mut summary = to_value(&rep);
    summary.as_object_mut().unwrap().remove("rows");
    Ok(Report::new(recs, summary))
}

fn witness(a: &WitnessArgs) -> Result<Report> {
    let insts = a.problem.instances()?;
    let opts = WitnessOptions {
        exclude: a.exclude.clone(),
        mode: if a.distinct {
            FactorMode::Distinct
        } else {
            FactorMode::WithMultiplicity
        },
        allow_zero: !a.nonzero,
        ..WitnessOptions::new(a.omega_bound)
    };
    let recs = insts
        .par_iter()
        .map(|inst| {
            let w = witness_search(inst, &opts)?;
            Ok(json!({
                "n": int(&inst.n),
                "witnesses": w.count,
                "example": w.solutions.first(),
            }))
        })
        .collect::<Result<Vec<Value>>>()?;
    let covered = recs.iter().filter(|r| r["witnesses"] != 0).count();
    let total = recs.len();
    Ok(Report::new(
        recs,
        json!({
            "omega_bound": a.omega_bound,
            "exclude": a.exclude,
            "covered": covered,
            "total": total,
            "coverage": covered as f64 / total as f64,
        }),
    ))
}

fn residuals(a: &ResidualArgs) -> Result<Report> {
    let r = a.problem.range()?;
    let rows = decomposition_residual(a.problem.m, a.problem.alpha.0, a.d.0, r.lo, r.hi)?;
    let g = growth_check(&rows, a.exponent, 1.0 + a.slack);
    let recs = rows.iter().map(to_value).collect();
    let summary = json!({ "exponent": a.exponent, "growth": to_value(&g) });
    Ok(Report::new(recs, summary))
}

fn threshold(a: &ThresholdArgs) -> Result<Report> {
    let grid: Vec<(u64, [u64; 4])> = if a.grid {
        [5u64, 11, 17]
            .into_iter()
            .flat_map(|m| [[1, 1, 1, 1], [1, 1, 1, 3], [1, 1, 3, 5]].map(|al| (m, al)))
            .collect()
    } else {
        vec![(a.m.expect("clap requires --m"), a.alpha.0)]
    };
    let recs = grid
        .into_iter()
        .map(|(m, al)| threshold_report(m, al, &a.eps.0, &a.constant.0).map(|r| to_value(&r)))
        .collect::<Result<Vec<_>>>()?;
    let n = recs.len();
    Ok(Report::new(recs, json!({ "rows": n })))
}

fn suite(a: &SuiteArgs, budget: u64) -> Result<Report> {
    let opts = SuiteOptions {
        cases: a.cases,
        seed: a.seed,
        budget,
        theta: a.theta.0.clone(),
        n_max: a.n_max,
    };
    let rep = run_suite(a.name, &opts)?;
    let recs = rep.records.iter().map(to_value).collect();
    let summary = json!({
        "suite": rep.suite,
        "seed": rep.seed,
        "pass": rep.pass,
        "sections": rep.sections,
        "notes": rep.notes,
    });
    let mut out = Report::new(recs, summary);
    if !rep.pass {
        out.exit = 1;
    }
    Ok(out)
}
