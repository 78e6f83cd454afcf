//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::Instant;

use num_bigint::BigInt;
use polysum::arith::{rat, rat_to_string};
use polysum::density::{
    density_kane, kane_oracle, oracle_at_depth, QuadraticSystem, DEFAULT_ORACLE_BUDGET,
};
use polysum::enumerate::{witness_search, WitnessOptions};
use polysum::poly::ProblemInstance;
use polysum::real::Real;
use polysum::sieve::{s_gate, theta_gate, threshold_holds, threshold_report};
use polysum::suites::{
    beta_bounds_suite, decomposition_suite, density_oracle_suite, sandwich_suite, SuiteOptions,
    SuiteReport,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn sections_pass(rep: &SuiteReport, names: &[&str], min_cases: usize) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for &name in names {
        match rep.section(name) {
            Some(s) => {
                ok &= s.cases >= min_cases && s.passed == s.cases;
                parts.push(format!("{name} {}/{}", s.passed, s.cases));
            }
            None => {
                ok = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    (ok, parts.join(", "))
}

fn density_oracle() -> Outcome {
    let rep = density_oracle_suite(&SuiteOptions {
        cases: 100,
        seed: 7,
        ..Default::default()
    })
    .unwrap();
    let (pass, detail) = sections_pass(&rep, &["Closed2", "ClosedDiv", "Kane"], 100);
    Outcome { pass, detail }
}

fn four_squares() -> Outcome {
    let one = [rat(1, 1), rat(1, 1), rat(1, 1), rat(1, 1)];
    let zero = [rat(0, 1), rat(0, 1), rat(0, 1), rat(0, 1)];
    let kane = density_kane(5, &one, &zero, &rat(1, 1)).unwrap();
    let b = [1, 1, 1, 1].map(BigInt::from);
    let c = [0, 0, 0, 0].map(BigInt::from);
    let oracle = kane_oracle(5, &b, &c, &BigInt::from(1), DEFAULT_ORACLE_BUDGET).unwrap();
    let sys = QuadraticSystem::from_kane(&b, &c, &BigInt::from(1));
    let count = oracle_at_depth(5, 1, &sys, DEFAULT_ORACLE_BUDGET).unwrap() * rat(125, 1);
    let want = rat(24, 25);
    Outcome {
        pass: kane == want && oracle.value == want && count == rat(120, 1),
        detail: format!(
            "kane={} oracle={} (depth {}) count mod 5={}",
            rat_to_string(&kane),
            rat_to_string(&oracle.value),
            oracle.depth,
            rat_to_string(&count)
        ),
    }
}

fn growth(rep: &SuiteReport) -> Outcome {
    let (pass, _) = sections_pass(rep, &["growth"], 1);
    let rec = rep.records.iter().find(|r| r.section == "growth").unwrap();
    Outcome {
        pass,
        detail: rec.value.clone(),
    }
}

fn stability(rep: &SuiteReport) -> Outcome {
    let (pass, detail) = sections_pass(rep, &["support-enlargement", "ratio-factorization"], 20);
    Outcome { pass, detail }
}

fn bound_lemmas() -> Outcome {
    let rep = beta_bounds_suite(&SuiteOptions {
        cases: 200,
        seed: 7,
        ..Default::default()
    })
    .unwrap();
    let (pass, mut detail) = sections_pass(
        &rep,
        &[
            "density-cases",
            "unramified",
            "correlation",
            "coefficient-prime",
            "gamma",
        ],
        200,
    );
    if let Some(s) = rep.section("coefficient-prime-intermediate") {
        detail.push_str(&format!(
            " (intermediate bounds, informational: {}/{})",
            s.passed, s.cases
        ));
    }
    Outcome { pass, detail }
}

fn sandwich() -> Outcome {
    let rep = sandwich_suite(&SuiteOptions {
        cases: 500,
        seed: 7,
        ..Default::default()
    })
    .unwrap();
    let (pass, mut detail) = sections_pass(&rep, &["single", "quadruple"], 500);
    let (bpass, bdetail) = sections_pass(&rep, &["bracket"], 30);
    detail.push_str(&format!(", {bdetail}"));
    if let Some(v) = rep.notes.values().next() {
        detail.push_str(&format!(
            " (single-Λ⁻ arrangement violations, informational: {v})"
        ));
    }
    Outcome {
        pass: pass && bpass,
        detail,
    }
}

fn theorem_gate() -> Outcome {
    let stated = theta_gate(&(rat(1, 1977) - rat(1, 1_000_000_000)));
    let at_1977 = theta_gate(&rat(1, 1977));
    let edge = theta_gate(&rat(1, 1976));
    let s = s_gate(&Real::from_i64(38));
    let pass = stated.pass
        && stated.below_1977
        && at_1977.pass
        && !at_1977.below_1977
        && !edge.pass
        && s.is_positive();
    Outcome {
        pass,
        detail: format!(
            "θ<1/1977: 988θ+1/2={} < 1; θ=1/1976: 988θ+1/2={} (not < 1); s=38: {}",
            stated.lhs,
            edge.lhs,
            s.to_sci(50)
        ),
    }
}

fn witnesses() -> Outcome {
    let exclude_all = vec![2, 3, 5, 7, 11, 13];
    let exclude_odd = vec![3, 5, 7, 11, 13];
    let (mut plain, mut all, mut odd) = (0, 0, 0);
    for n in 500..=1000u64 {
        let inst = ProblemInstance::new(5, [1; 4], n).unwrap();
        let covered = |exclude: &Vec<u64>| {
            let opts = WitnessOptions {
                exclude: exclude.clone(),
                ..WitnessOptions::new(3)
            };
            witness_search(&inst, &opts).unwrap().count > 0
        };
        plain += usize::from(covered(&Vec::new()));
        all += usize::from(covered(&exclude_all));
        odd += usize::from(covered(&exclude_odd));
    }
    let total = 501.0;
    let best = all.max(odd) as f64 / total;
    Outcome {
        pass: plain == 501 && best >= 0.95,
        detail: format!(
            "Ω≤3 coverage {plain}/501; with primes ≤13 excluded {all}/501 ({:.1}%), with odd primes ≤13 excluded {odd}/501 ({:.1}%); need ≥95%",
            100.0 * all as f64 / total,
            100.0 * odd as f64 / total
        ),
    }
}

fn threshold_grid() -> Outcome {
    let eps = rat(1, 10);
    let c = rat(1, 1);
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [5u64, 11, 17] {
        for alpha in [[1, 1, 1, 1], [1, 1, 1, 3], [1, 1, 3, 5]] {
            let row = threshold_report(m, alpha, &eps, &c).unwrap();
            let n: BigInt = row.min_n.parse().unwrap();
            let at = ProblemInstance::new(m, alpha, n.clone()).unwrap();
            ok &= threshold_holds(&at.h, m, alpha, &eps, &c).unwrap();
            if n > BigInt::from(0) {
                let below = ProblemInstance::new(m, alpha, n - 1).unwrap();
                ok &= !threshold_holds(&below.h, m, alpha, &eps, &c).unwrap();
            }
            let h = Real::from_int(&at.h);
            ok &= h >= Real::parse(&row.threshold);
            parts.push(format!("m={m} α={alpha:?} n*={}", row.min_n));
        }
    }
    Outcome {
        pass: ok,
        detail: format!("ε=1/10, C=1: {}", parts.join("; ")),
    }
}

fn main() {
    let mut all_pass = true;
    let mut report = |id: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        all_pass &= o.pass;
        println!(
            "[{}] {id}. {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    };
    report(1, "density oracle equivalence", &density_oracle);
    report(2, "four-squares density at 5", &four_squares);
    let decomposition = decomposition_suite(&SuiteOptions {
        cases: 20,
        seed: 7,
        n_max: 2000,
        ..Default::default()
    })
    .unwrap();
    report(3, "decomposition growth", &|| growth(&decomposition));
    report(4, "S-stability and ratio factorization", &|| {
        stability(&decomposition)
    });
    report(5, "bound lemma sweeps", &bound_lemmas);
    report(6, "sandwich inequalities", &sandwich);
    report(7, "theorem-gate arithmetic", &theorem_gate);
    report(8, "almost-prime witnesses", &witnesses);
    report(9, "threshold evaluator grid", &threshold_grid);
    if !all_pass {
        std::process::exit(1);
    }
}
