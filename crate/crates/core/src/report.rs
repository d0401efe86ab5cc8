//! Run reports: what was run, with which tolerances, and what came out.
//!
//! Identical inputs give identical reports apart from `wall_time_s`.

use std::time::Instant;

use serde_json::{json, Map, Value};

use crate::config::ToleranceConfig;
use crate::error::Error;
use crate::invariants::InvariantRecord;
use crate::io::{config_to_json, record_to_json};

/// Exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    /// A mathematical check failed.
    Fail,
    /// Input or schema error.
    InputError,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::InputError => "input-error",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
            Outcome::InputError => 2,
        }
    }
}

/// Whether an error comes from the input rather than the mathematics.
pub fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Parse { .. }
            | Error::Io(_)
            | Error::Shape(_)
            | Error::InvalidMesh(_)
            | Error::BaseMismatch(_)
            | Error::ScalarMismatch { .. }
            | Error::InvalidSpec(_)
            | Error::MiddleMismatch(_)
    )
}

pub fn outcome_of(e: &Error) -> Outcome {
    if is_input_error(e) {
        Outcome::InputError
    } else {
        Outcome::Fail
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: Option<f64>,
    /// Counterexample or other payload, attached on failure.
    pub detail: Option<Value>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: String,
    pub config: ToleranceConfig,
    pub records: Vec<(String, InvariantRecord)>,
    pub checks: Vec<Check>,
    /// Command specific results.
    pub data: Map<String, Value>,
    pub error: Option<Error>,
    pub wall_time_s: f64,
    started: Instant,
}

impl RunReport {
    pub fn new(command: impl Into<String>, config: &ToleranceConfig) -> Self {
        Self {
            command: command.into(),
            config: config.clone(),
            records: Vec::new(),
            checks: Vec::new(),
            data: Map::new(),
            error: None,
            wall_time_s: 0.0,
            started: Instant::now(),
        }
    }

    pub fn record(&mut self, name: impl Into<String>, r: InvariantRecord) {
        self.records.push((name.into(), r));
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, residual: Option<f64>) -> bool {
        self.checks.push(Check {
            name: name.into(),
            passed,
            residual,
            detail: None,
        });
        passed
    }

    /// A failed check with its counterexample.
    pub fn fail_with(&mut self, name: impl Into<String>, detail: Value) {
        self.checks.push(Check {
            name: name.into(),
            passed: false,
            residual: None,
            detail: Some(detail),
        });
    }

    pub fn set(&mut self, key: &str, v: Value) {
        self.data.insert(key.into(), v);
    }

    pub fn set_error(&mut self, e: Error) {
        self.error = Some(e);
    }

    pub fn outcome(&self) -> Outcome {
        match &self.error {
            Some(e) => outcome_of(e),
            None if self.checks.iter().all(|c| c.passed) => Outcome::Pass,
            None => Outcome::Fail,
        }
    }

    pub fn finish(&mut self) {
        self.wall_time_s = self.started.elapsed().as_secs_f64();
    }

    pub fn to_json(&self) -> Value {
        let checks: Vec<Value> = self
            .checks
            .iter()
            .map(|c| {
                let mut v = json!({"name": c.name, "passed": c.passed});
                if let Some(r) = c.residual {
                    v["residual"] = json!(r);
                }
                if let Some(d) = &c.detail {
                    v["detail"] = d.clone();
                }
                v
            })
            .collect();
        let records: Map<String, Value> = self
            .records
            .iter()
            .map(|(k, r)| (k.clone(), record_to_json(r)))
            .collect();
        let mut v = json!({
            "command": self.command,
            "config": config_to_json(&self.config),
            "outcome": self.outcome().as_str(),
            "records": records,
            "checks": checks,
            "data": Value::Object(self.data.clone()),
            "wall_time_s": self.wall_time_s,
        });
        if let Some(e) = &self.error {
            v["error"] = json!(e.to_string());
        }
        v
    }

    /// The report without its timing field, for determinism comparisons.
    pub fn content(&self) -> Value {
        let mut v = self.to_json();
        v.as_object_mut().expect("report is an object").remove("wall_time_s");
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_follows_checks_and_errors() {
        let cfg = ToleranceConfig::default();
        let mut r = RunReport::new("test", &cfg);
        assert_eq!(r.outcome(), Outcome::Pass);
        r.check("a", true, Some(0.0));
        assert_eq!(r.outcome().exit_code(), 0);
        r.fail_with("b", json!({"seed": 3}));
        assert_eq!(r.outcome().exit_code(), 1);
        r.set_error(Error::Parse {
            path: "/x".into(),
            message: "bad".into(),
        });
        assert_eq!(r.outcome().exit_code(), 2);
    }

    #[test]
    fn content_ignores_wall_time() {
        let cfg = ToleranceConfig::with_seed(5);
        let mut a = RunReport::new("x", &cfg);
        a.record(
            "class",
            InvariantRecord {
                rank: 0,
                w1: vec![0],
                c1: vec![],
            },
        );
        let mut b = a.clone();
        a.finish();
        std::thread::sleep(std::time::Duration::from_millis(2));
        b.finish();
        assert_ne!(a.to_json(), b.to_json());
        assert_eq!(a.content(), b.content());
    }
}
