//! Randomized checks of the index axioms: normalisation, invariance under
//! compact perturbations, direct sums, composition, naturality, homotopy
//! invariance, independence of the transversal and agreement with the
//! classical construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::bundle::ProjectionField;
use crate::config::ToleranceConfig;
use crate::error::Result;
use crate::families::{chart, random_bundle, random_family, random_morphism, BundleRecipe, FamilySpec, SmoothGauge};
use crate::index::{classical_index_class, index_class, well_definedness_check};
use crate::invariants::InvariantRecord;
use crate::io::{morphism_to_json, record_to_json};
use crate::linalg::{self, Scalar};
use crate::mesh::{circle_mesh, circle_power_map, interval_mesh, product_with_interval, BaseMesh};
use crate::morphism::{
    compose, direct_sum_morphism, make_morphism, pullback_morphism, random_compact_perturbation, MorphismField,
};
use crate::parametrix::verify_invertible;
use crate::report::RunReport;

/// Properties checked once per trial, in order.
pub const PROPERTIES: [&str; 8] = [
    "normalisation",
    "compact-perturbation",
    "direct-sum",
    "logarithmic",
    "naturality",
    "homotopy",
    "well-definedness",
    "classical-vs-general",
];

/// Degrees used for the naturality check.
pub const DEGREES: [i64; 4] = [0, 1, 2, 3];

const MESH_SIZE: usize = 64;
const MAX_AMBIENT: usize = 6;

/// Outcome of one property on one trial: `None` passes, `Some` carries the
/// counterexample.
type Verdict = Result<Option<Value>>;

struct Trial {
    seed: u64,
    rng: ChaCha8Rng,
    cfg: ToleranceConfig,
    circle: Arc<BaseMesh>,
    interval: Arc<BaseMesh>,
    product: Arc<BaseMesh>,
    inject_break: bool,
}

fn mismatch(expected: &InvariantRecord, found: &InvariantRecord, families: &[&MorphismField]) -> Option<Value> {
    (expected != found).then(|| {
        json!({
            "expected": record_to_json(expected),
            "found": record_to_json(found),
            "families": families.iter().map(|l| morphism_to_json(l)).collect::<Vec<_>>(),
        })
    })
}

impl Trial {
    fn scalar(&mut self) -> Scalar {
        if self.rng.random_bool(0.5) {
            Scalar::Real
        } else {
            Scalar::Complex
        }
    }

    fn family_on(&mut self, base: Arc<BaseMesh>) -> Result<MorphismField> {
        let scalar = self.scalar();
        let spec = FamilySpec::random(&mut self.rng, MAX_AMBIENT, scalar);
        let seed = self.rng.random();
        random_family(base, &spec, seed, &self.cfg)
    }

    /// Circle or interval family, alternating by a coin flip.
    fn family(&mut self) -> Result<MorphismField> {
        let base = if self.rng.random_bool(0.75) {
            self.circle.clone()
        } else {
            self.interval.clone()
        };
        self.family_on(base)
    }

    fn expect(&self, mut expected: InvariantRecord) -> InvariantRecord {
        if self.inject_break {
            expected.rank += 1;
        }
        expected
    }

    /// `L = U|_E : E -> U E U^*` for a random smooth gauge `U`.
    fn normalisation(&mut self) -> Verdict {
        let scalar = self.scalar();
        let n = self.rng.random_range(1..=MAX_AMBIENT);
        let recipe = BundleRecipe {
            ambient: n,
            rank: self.rng.random_range(1..=n),
            twisted: false,
        };
        let recipe = if scalar == Scalar::Real && n >= 2 && self.rng.random_bool(0.5) {
            BundleRecipe {
                twisted: true,
                rank: recipe.rank.min(n - 1),
                ..recipe
            }
        } else {
            recipe
        };
        let points = chart(&self.circle)?;
        let e = random_bundle(self.circle.clone(), &points, recipe, scalar, 0.03, &mut self.rng)?;
        let gauge = SmoothGauge::random(&mut self.rng, n, scalar, 0.03);
        let us: Vec<_> = points.iter().map(|&p| gauge.eval(p)).collect();
        let proj = e
            .proj
            .iter()
            .zip(&us)
            .map(|(p, u)| linalg::clean_projector(&(u * p * u.adjoint()), scalar))
            .collect();
        let f = ProjectionField::new(self.circle.clone(), n, scalar, proj)?.validated(&self.cfg)?;
        let l = make_morphism(&e, &f, us, &self.cfg)?;
        let inv = verify_invertible(&l, self.cfg.sigma_floor);
        if !inv.passed() {
            return Ok(Some(json!({"reason": "gauge is not invertible", "min_sv": inv.min_sv})));
        }
        let found = index_class(&l, &self.cfg)?.reduced;
        let zero = InvariantRecord {
            rank: 0,
            w1: vec![0; found.w1.len()],
            c1: vec![0; found.c1.len()],
        };
        Ok(mismatch(&self.expect(zero), &found, &[&l]))
    }

    fn compact_perturbation(&mut self) -> Verdict {
        let l = self.family()?;
        let max_rank = l.domain.ambient_dim.min(l.target.ambient_dim).min(2);
        let rank = self.rng.random_range(0..=max_rank);
        let magnitude = 0.05 * l.max_norm();
        let k = random_compact_perturbation(&l, rank, magnitude, self.rng.random())?;
        let sum = l.add(&k)?;
        let before = index_class(&l, &self.cfg)?.reduced;
        let after = index_class(&sum, &self.cfg)?.reduced;
        Ok(mismatch(&self.expect(before), &after, &[&l, &sum]))
    }

    fn direct_sum(&mut self) -> Verdict {
        let base = if self.rng.random_bool(0.75) {
            self.circle.clone()
        } else {
            self.interval.clone()
        };
        let l = self.family_on(base.clone())?;
        let scalar = l.domain.scalar;
        let spec = FamilySpec::random(&mut self.rng, MAX_AMBIENT, scalar);
        let m = random_family(base, &spec, self.rng.random(), &self.cfg)?;
        let sum = direct_sum_morphism(&l, &m)?;
        let expected = index_class(&l, &self.cfg)?
            .reduced
            .sum(&index_class(&m, &self.cfg)?.reduced);
        let found = index_class(&sum, &self.cfg)?.reduced;
        Ok(mismatch(&self.expect(expected), &found, &[&l, &m]))
    }

    /// `ind(M L) = ind(L) + ind(M)` for `L: E -> F`, `M: F -> G`.
    fn logarithmic(&mut self) -> Verdict {
        let scalar = self.scalar();
        let base = self.circle.clone();
        let points = chart(&base)?;
        let spec = FamilySpec::random(&mut self.rng, MAX_AMBIENT, scalar);
        let g_recipe = FamilySpec::random(&mut self.rng, MAX_AMBIENT, scalar).target;
        let bundle = |r: BundleRecipe, rng: &mut ChaCha8Rng| -> Result<ProjectionField> {
            random_bundle(base.clone(), &points, r, scalar, spec.gauge_amp, rng)?.validated(&self.cfg)
        };
        let e = bundle(spec.domain, &mut self.rng)?;
        let f = bundle(spec.target, &mut self.rng)?;
        let g = bundle(g_recipe, &mut self.rng)?;
        let l = random_morphism(&e, &f, &points, spec.matrix_amp, None, &mut self.rng, &self.cfg)?;
        let m = random_morphism(&f, &g, &points, spec.matrix_amp, None, &mut self.rng, &self.cfg)?;
        let ml = compose(&m, &l)?;
        let expected = index_class(&l, &self.cfg)?
            .reduced
            .sum(&index_class(&m, &self.cfg)?.reduced);
        let found = index_class(&ml, &self.cfg)?.reduced;
        Ok(mismatch(&self.expect(expected), &found, &[&l, &m]))
    }

    /// Pullback along the degree-`d` map multiplies `w1` by `d`.
    fn naturality(&mut self) -> Verdict {
        let l = self.family_on(self.circle.clone())?;
        let class = index_class(&l, &self.cfg)?.reduced;
        for d in DEGREES {
            let f = circle_power_map(MESH_SIZE, d)?;
            let pulled = pullback_morphism(&f, &l)?;
            let expected = InvariantRecord {
                rank: class.rank,
                w1: class.w1.iter().map(|&b| ((d as u8) * b) % 2).collect(),
                c1: class.c1.clone(),
            };
            let found = index_class(&pulled, &self.cfg)?.reduced;
            if let Some(mut detail) = mismatch(&self.expect(expected), &found, &[&l]) {
                detail["degree"] = json!(d);
                return Ok(Some(detail));
            }
        }
        Ok(None)
    }

    /// Classes at both ends of a family over `X x I` agree.
    fn homotopy(&mut self) -> Verdict {
        let l = self.family_on(self.product.clone())?;
        let last = self.product.slices.as_ref().expect("product mesh has slices").count - 1;
        let start = pullback_morphism(&self.product.slice(0)?, &l)?;
        let end = pullback_morphism(&self.product.slice(last)?, &l)?;
        let a = index_class(&start, &self.cfg)?.reduced;
        let b = index_class(&end, &self.cfg)?.reduced;
        Ok(mismatch(&self.expect(a), &b, &[&l]))
    }

    fn well_definedness(&mut self) -> Verdict {
        let l = self.family()?;
        let seeds = (self.rng.random(), self.rng.random());
        let r = well_definedness_check(&l, seeds, &self.cfg)?;
        let mut detail = mismatch(&self.expect(r.first.class.reduced), &r.second.class.reduced, &[&l]);
        if let Some(d) = detail.as_mut() {
            d["seeds"] = json!([seeds.0, seeds.1]);
        }
        Ok(detail)
    }

    fn classical(&mut self) -> Verdict {
        let scalar = self.scalar();
        let m = self.rng.random_range(1..=MAX_AMBIENT);
        let n = self.rng.random_range(1..=MAX_AMBIENT);
        let mut spec = FamilySpec::new(BundleRecipe::trivial(m, m), BundleRecipe::trivial(n, n), scalar);
        if self.rng.random_bool(0.3) {
            spec.inner_rank = Some(self.rng.random_range(0..=m.min(n)));
        }
        let l = random_family(self.circle.clone(), &spec, self.rng.random(), &self.cfg)?;
        let general = index_class(&l, &self.cfg)?.reduced;
        let classical = classical_index_class(&l, &self.cfg)?.reduced;
        Ok(mismatch(&self.expect(general), &classical, &[&l]))
    }

    fn run(&mut self, property: &str) -> Verdict {
        match property {
            "normalisation" => self.normalisation(),
            "compact-perturbation" => self.compact_perturbation(),
            "direct-sum" => self.direct_sum(),
            "logarithmic" => self.logarithmic(),
            "naturality" => self.naturality(),
            "homotopy" => self.homotopy(),
            "well-definedness" => self.well_definedness(),
            "classical-vs-general" => self.classical(),
            other => unreachable!("unknown property {other}"),
        }
    }
}

/// Runs every property on `trials` random families derived from `seed`.
///
/// With `inject_break` the expected class of every check is shifted by one
/// in rank, so the suite must fail; this tests the harness itself.
pub fn run_axiom_suite(seed: u64, trials: usize, inject_break: bool, cfg: &ToleranceConfig) -> Result<RunReport> {
    let mut report = RunReport::new("axioms verify", cfg);
    if trials == 0 {
        return Err(crate::error::Error::Shape("trials must be at least 1".into()));
    }
    let circle = Arc::new(circle_mesh(MESH_SIZE)?);
    let interval = Arc::new(interval_mesh(MESH_SIZE)?);
    let product = Arc::new(product_with_interval(&circle_mesh(32)?, 8)?);
    let mut counts: BTreeMap<&str, (usize, usize)> = PROPERTIES.iter().map(|&p| (p, (0, 0))).collect();
    for t in 0..trials {
        let trial_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64);
        for (i, property) in PROPERTIES.into_iter().enumerate() {
            let mut trial = Trial {
                seed: trial_seed,
                rng: ChaCha8Rng::seed_from_u64(trial_seed ^ ((i as u64) << 56)),
                cfg: cfg.clone(),
                circle: circle.clone(),
                interval: interval.clone(),
                product: product.clone(),
                inject_break,
            };
            let verdict = trial.run(property);
            let name = format!("{property}[{t}]");
            let entry = counts.get_mut(property).expect("known property");
            match verdict {
                Ok(None) => {
                    entry.0 += 1;
                    report.check(name, true, None);
                }
                Ok(Some(mut detail)) => {
                    entry.1 += 1;
                    detail["trial_seed"] = json!(trial.seed);
                    report.fail_with(name, detail);
                }
                Err(e) => {
                    entry.1 += 1;
                    report.fail_with(name, json!({"error": e.to_string(), "trial_seed": trial.seed}));
                }
            }
        }
    }
    let summary: serde_json::Map<String, Value> = counts
        .into_iter()
        .map(|(k, (pass, fail))| (k.to_string(), json!({"passed": pass, "failed": fail})))
        .collect();
    report.set("seed", json!(seed));
    report.set("trials", json!(trials));
    report.set("inject_break", json!(inject_break));
    report.set("summary", Value::Object(summary));
    report.finish();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Outcome;

    #[test]
    fn single_trial_runs_every_property_once() {
        let cfg = ToleranceConfig::default();
        let r = run_axiom_suite(42, 1, false, &cfg).unwrap();
        assert_eq!(r.checks.len(), PROPERTIES.len());
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert_eq!(r.outcome(), Outcome::Pass);
    }

    #[test]
    fn injected_break_fails_with_payload() {
        let cfg = ToleranceConfig::default();
        let r = run_axiom_suite(42, 1, true, &cfg).unwrap();
        assert_eq!(r.outcome().exit_code(), 1);
        let c = r.checks.iter().find(|c| !c.passed).unwrap();
        assert!(c.detail.as_ref().unwrap().get("expected").is_some());
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(run_axiom_suite(1, 0, false, &ToleranceConfig::default()).is_err());
    }
}
