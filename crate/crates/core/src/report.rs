//! Experiment reports: per-check status plus measured hypotheses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    HypothesisNotMet,
    Fail,
}

/// A measured hypothesis compared against its cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub measured: f64,
    pub cap: f64,
    pub met: bool,
}

impl Hypothesis {
    /// Met when `measured` is finite and at most `cap`.
    pub fn below(name: &str, measured: f64, cap: f64) -> Self {
        Hypothesis { name: name.into(), measured, cap, met: measured.is_finite() && measured <= cap }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub values: BTreeMap<String, f64>,
}

impl Check {
    pub fn new(name: &str, status: Status, detail: impl Into<String>) -> Self {
        Check { name: name.into(), status, detail: detail.into(), values: BTreeMap::new() }
    }

    /// `Pass`/`Fail` from a boolean.
    pub fn assert(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Check::new(name, if ok { Status::Pass } else { Status::Fail }, detail)
    }

    /// A finiteness report that only counts when the hypotheses hold.
    pub fn gated(name: &str, hyps: &[&Hypothesis], ok: bool, detail: impl Into<String>) -> Self {
        if hyps.iter().all(|h| h.met) {
            Check::assert(name, ok, detail)
        } else {
            let missing: Vec<&str> = hyps.iter().filter(|h| !h.met).map(|h| h.name.as_str()).collect();
            Check::new(name, Status::HypothesisNotMet, format!("{} (unmet: {})", detail.into(), missing.join(", ")))
        }
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.into(), v);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub hypotheses: Vec<Hypothesis>,
    pub checks: Vec<Check>,
    pub measurements: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(experiment: &str, config_hash: &str, seed: u64) -> Self {
        Report {
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            seed,
            hypotheses: Vec::new(),
            checks: Vec::new(),
            measurements: BTreeMap::new(),
        }
    }

    /// Worst status over the checks (`Pass` when there are none).
    pub fn status(&self) -> Status {
        self.checks.iter().map(|c| c.status).max().unwrap_or(Status::Pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail).collect()
    }

    pub fn measure(&mut self, key: &str, v: f64) {
        self.measurements.insert(key.into(), v);
    }
}

/// Hex SHA-256 of a value's JSON encoding.
pub fn json_hash<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("serialisable value");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_is_worst() {
        let mut r = Report::new("x", "h", 1);
        assert_eq!(r.status(), Status::Pass);
        r.checks.push(Check::assert("a", true, ""));
        let h = Hypothesis::below("sigma doubling", 100.0, 10.0);
        r.checks.push(Check::gated("b", &[&h], true, ""));
        assert_eq!(r.status(), Status::HypothesisNotMet);
        r.checks.push(Check::assert("c", false, ""));
        assert_eq!(r.status(), Status::Fail);
        assert_eq!(r.failures().len(), 1);
    }

    #[test]
    fn hypothesis_rejects_infinite() {
        assert!(!Hypothesis::below("d", f64::INFINITY, 1e300).met);
        assert!(Hypothesis::below("d", 3.0, 3.0).met);
    }
}
