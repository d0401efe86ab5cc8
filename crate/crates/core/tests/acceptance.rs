//! End-to-end acceptance run. Prints one pass/fail line per criterion and
//! exits nonzero when any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use indexbundle::axioms::run_axiom_suite;
use indexbundle::bundle::direct_sum;
use indexbundle::bvp::{bvp_check, BvpSpec};
use indexbundle::families::{bott, constant_line, moebius, random_family, BundleRecipe, FamilySpec};
use indexbundle::index::{classical_index_class, index_class, index_class_detailed, well_definedness_check};
use indexbundle::invariants::{field_record, rank_of_field};
use indexbundle::mesh::{circle_mesh, sphere_mesh_with_coords};
use indexbundle::parametrix::{build_parametrix, ParametrixStatus};
use indexbundle::report::Outcome;
use indexbundle::{BaseMesh, Error, Result, Scalar, ToleranceConfig};

const SEED: u64 = 42;

/// Name, check and time budget.
type Criterion = (&'static str, fn() -> Verdict, Option<Duration>);

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(failures: Vec<String>, summary: String) -> Verdict {
    Verdict {
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            summary
        } else {
            format!("{summary}; {}", failures.join("; "))
        },
    }
}

fn cfg() -> ToleranceConfig {
    ToleranceConfig::with_seed(SEED)
}

fn scalar_for(i: usize) -> Scalar {
    if i.is_multiple_of(3) {
        Scalar::Complex
    } else {
        Scalar::Real
    }
}

fn circle(m: usize) -> Arc<BaseMesh> {
    Arc::new(circle_mesh(m).unwrap())
}

fn random_specs(n: usize, max_ambient: usize, stream: u64) -> Vec<(u64, FamilySpec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ stream);
    (0..n)
        .map(|i| (rng.random(), FamilySpec::random(&mut rng, max_ambient, scalar_for(i))))
        .collect()
}

fn rank_identity() -> Verdict {
    let base = circle(64);
    let cfg = cfg();
    let failures: Vec<String> = random_specs(100, 8, 1)
        .into_par_iter()
        .enumerate()
        .filter_map(|(i, (seed, spec))| {
            let check = || -> Result<Option<String>> {
                let l = random_family(base.clone(), &spec, seed, &cfg)?;
                let comp = index_class_detailed(&l, &cfg)?;
                let rank = rank_of_field(&comp.class.plus)?;
                let ind = l.index().ok_or_else(|| Error::Internal("index varies".into()))?;
                let dim_v = comp.transversal.dim as i64;
                Ok((rank != ind + dim_v).then(|| format!("family {i}: rank {rank} != {ind} + {dim_v}")))
            };
            check().unwrap_or_else(|e| Some(format!("family {i}: {e}")))
        })
        .collect();
    verdict(failures, "100 families on circle_mesh(64)".into())
}

fn well_definedness() -> Verdict {
    let base = circle(64);
    let cfg = cfg();
    let failures: Vec<String> = random_specs(50, 6, 2)
        .into_par_iter()
        .enumerate()
        .filter_map(|(i, (seed, spec))| {
            let l = match random_family(base.clone(), &spec, seed, &cfg) {
                Ok(l) => l,
                Err(e) => return Some(format!("family {i}: {e}")),
            };
            well_definedness_check(&l, (seed, seed.rotate_left(17)), &cfg)
                .err()
                .map(|e| format!("family {i}: {e}"))
        })
        .collect();
    verdict(failures, "50 families, two sweeps".into())
}

fn axiom_suite() -> Verdict {
    match run_axiom_suite(SEED, 20, false, &cfg()) {
        Ok(r) => {
            let failures = r
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{} failed", c.name))
                .collect();
            let ok = r.outcome() == Outcome::Pass;
            let mut v = verdict(failures, format!("{} checks over 20 trials", r.checks.len()));
            v.passed &= ok;
            v
        }
        Err(e) => verdict(vec![e.to_string()], "suite".into()),
    }
}

fn classical_vs_general() -> Verdict {
    let base = circle(64);
    let cfg = cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 4);
    let cases: Vec<(u64, FamilySpec)> = (0..25)
        .map(|i| {
            let m = rng.random_range(1..=5);
            let n = rng.random_range(1..=5);
            let mut spec = FamilySpec::new(BundleRecipe::trivial(m, m), BundleRecipe::trivial(n, n), scalar_for(i));
            if i % 4 == 0 {
                spec.inner_rank = Some(rng.random_range(0..=m.min(n)));
            }
            (rng.random(), spec)
        })
        .collect();
    let failures: Vec<String> = cases
        .into_par_iter()
        .enumerate()
        .filter_map(|(i, (seed, spec))| {
            let check = || -> Result<Option<String>> {
                let l = random_family(base.clone(), &spec, seed, &cfg)?;
                let general = index_class(&l, &cfg)?.reduced;
                let classical = classical_index_class(&l, &cfg)?.reduced;
                Ok((general != classical).then(|| format!("family {i}: {general:?} vs {classical:?}")))
            };
            check().unwrap_or_else(|e| Some(format!("family {i}: {e}")))
        })
        .collect();
    verdict(failures, "25 families on trivial bundles".into())
}

fn boundary_problems() -> Verdict {
    let cfg = cfg();
    let mut failures = Vec::new();
    let mut run = |name: &str, spec: BvpSpec, check: &dyn Fn(&indexbundle::bvp::BvpReport) -> bool| match bvp_check(
        &spec, &cfg,
    ) {
        Ok(r) => {
            if !check(&r) {
                failures.push(format!(
                    "{name}: unexpected {:?} {:?} {:?}",
                    r.computed, r.status, r.min_sv
                ));
            }
            match spec.with_grid(2 * spec.grid).and_then(|fine| bvp_check(&fine, &cfg)) {
                Ok(fine) if fine.computed == r.computed => {}
                Ok(fine) => failures.push(format!("{name}: doubled grid gives {:?}", fine.computed)),
                Err(e) => failures.push(format!("{name} doubled: {e}")),
            }
        }
        Err(e) => failures.push(format!("{name}: {e}")),
    };
    let trivial = BvpSpec::new(constant_line(circle(64), &[1.0, 0.0], Scalar::Real), 1, 32).unwrap();
    run("trivial", trivial, &|r| {
        r.computed.is_zero() && r.status == ParametrixStatus::Built && r.min_sv.is_some_and(|s| s >= 1e-6)
    });
    let mob = BvpSpec::new(moebius(circle(64)), 1, 32).unwrap();
    run("moebius", mob, &|r| {
        r.computed.rank == 0 && r.computed.w1 == [1] && r.status == ParametrixStatus::Obstructed
    });
    let (sphere, coords) = sphere_mesh_with_coords(1).unwrap();
    let b = BvpSpec::new(bott(Arc::new(sphere), &coords).unwrap(), 1, 16).unwrap();
    run("bott", b, &|r| {
        r.computed.c1.len() == 1 && r.computed.c1[0].abs() == 1 && r.status == ParametrixStatus::Obstructed
    });
    verdict(
        failures,
        "trivial, Moebius and Bott boundary data, doubled grids".into(),
    )
}

fn parametrices() -> Verdict {
    let base = circle(64);
    let cfg = cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 6);
    let cases: Vec<(u64, FamilySpec)> = (0..25)
        .map(|i| {
            let scalar = scalar_for(i);
            let twisted = scalar == Scalar::Real && rng.random_bool(0.5);
            // A twisted line has no trivial line inside it, so a degenerate
            // map into one admits no transversal within the target.
            let rank = rng.random_range(if twisted { 2 } else { 1 }..=3);
            let room = if twisted { rank + 1 } else { rank };
            let domain = BundleRecipe {
                ambient: rng.random_range(room..=room + 2),
                rank,
                twisted,
            };
            let target = BundleRecipe {
                ambient: rng.random_range(room..=room + 2),
                rank,
                twisted,
            };
            (rng.random(), FamilySpec::new(domain, target, scalar))
        })
        .collect();
    let failures: Vec<String> = cases
        .into_par_iter()
        .enumerate()
        .filter_map(|(i, (seed, spec))| {
            let check = || -> Result<Option<String>> {
                let l = random_family(base.clone(), &spec, seed, &cfg)?;
                let r = build_parametrix(&l, &cfg)?;
                if r.status != ParametrixStatus::Built {
                    return Ok(Some(format!("family {i}: obstructed by {:?}", r.obstruction)));
                }
                let min_sv = r.min_sv.unwrap_or(0.0);
                if min_sv < 1e-6 {
                    return Ok(Some(format!("family {i}: min_sv {min_sv:e}")));
                }
                let sum = l.add(r.k.as_ref().expect("built parametrix carries K"))?;
                let class = index_class(&sum, &cfg)?.reduced;
                Ok((!class.is_zero()).then(|| format!("family {i}: class(L+K) = {class:?}")))
            };
            check().unwrap_or_else(|e| Some(format!("family {i}: {e}")))
        })
        .collect();
    verdict(failures, "25 stably trivial families".into())
}

fn invariants() -> Verdict {
    let cfg = cfg();
    let mut failures = Vec::new();
    for m in [16, 64, 256] {
        match field_record(&moebius(circle(m)), &cfg) {
            Ok(r) if r.w1 == [1] => {}
            other => failures.push(format!("w1 Moebius m={m}: {other:?}")),
        }
    }
    let mut c1 = Vec::new();
    for level in [1, 2] {
        let (sphere, coords) = sphere_mesh_with_coords(level).unwrap();
        let b = bott(Arc::new(sphere), &coords).unwrap();
        match field_record(&b, &cfg) {
            Ok(r) if r.c1.len() == 1 && r.c1[0].abs() == 1 => c1.push(r.c1[0]),
            other => failures.push(format!("c1 Bott level {level}: {other:?}")),
        }
        if level == 1 {
            let sum = direct_sum(&b, &b).and_then(|s| field_record(&s, &cfg));
            let single = field_record(&b, &cfg);
            match (sum, single) {
                (Ok(s), Ok(one)) if s.c1.len() == 1 && s.c1[0] == 2 * one.c1[0] => {}
                (s, one) => failures.push(format!("c1 additivity: {s:?} vs {one:?}")),
            }
        }
    }
    if c1.len() == 2 && c1[0] != c1[1] {
        failures.push(format!("c1 differs between levels: {c1:?}"));
    }
    verdict(failures, format!("w1 at m=16/64/256, c1 = {c1:?}"))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("rank identity", rank_identity, Some(Duration::from_secs(10))),
        ("well-definedness", well_definedness, None),
        ("axiom suite", axiom_suite, Some(Duration::from_secs(30))),
        ("classical equals general", classical_vs_general, None),
        (
            "boundary value problems",
            boundary_problems,
            Some(Duration::from_secs(20)),
        ),
        ("parametrices", parametrices, None),
        ("characteristic invariants", invariants, None),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut v = run();
        let took = start.elapsed();
        if let Some(b) = budget {
            if took > *b {
                v.passed = false;
                v.detail = format!("{}; took longer than {:?}", v.detail, b);
            }
        }
        if !v.passed {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({:.2}s) {}",
            i + 1,
            if v.passed { "pass" } else { "FAIL" },
            took.as_secs_f64(),
            v.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
