use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::search::{MiningConfig, MiningResult, TestRecord};
use crate::error::{Error, Result};
use crate::mapping::FractionVectors;
use crate::pstl::{Query, Trace};

/// One `AXLOG` line.
#[derive(Serialize, Deserialize)]
struct LogLine {
    iteration: usize,
    v1: Vec<f64>,
    v2: Vec<f64>,
    energy_gain: f64,
    rhs_robustness: f64,
    satisfied: bool,
    accepted: bool,
    avg_acc_drop: f64,
    acc_diff: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    acc_exact: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    acc_approx: Option<Vec<f64>>,
}

impl From<&TestRecord> for LogLine {
    fn from(r: &TestRecord) -> Self {
        let acc = r.trace.accuracies();
        LogLine {
            iteration: r.iteration,
            v1: r.fv.v1.clone(),
            v2: r.fv.v2.clone(),
            energy_gain: r.energy_gain,
            rhs_robustness: r.rhs_robustness,
            satisfied: r.satisfied,
            accepted: r.accepted,
            avg_acc_drop: r.trace.avg_acc_drop(),
            acc_diff: r.trace.acc_diff().to_vec(),
            acc_exact: acc.map(|(e, _)| e.to_vec()),
            acc_approx: acc.map(|(_, a)| a.to_vec()),
        }
    }
}

impl LogLine {
    fn into_record(self, line: usize) -> Result<TestRecord> {
        let bad = |m: String| Error::Format(format!("AXLOG line {line}: {m}"));
        let trace = match (self.acc_exact, self.acc_approx) {
            (Some(e), Some(a)) => Trace::from_accuracies(e, a, self.energy_gain)?,
            (None, None) => Trace::from_diffs(self.acc_diff.clone(), self.energy_gain)?,
            _ => return Err(bad("only one accuracy column present".into())),
        };
        if trace.acc_diff() != self.acc_diff.as_slice() || trace.avg_acc_drop() != self.avg_acc_drop {
            return Err(bad("acc_diff or avg_acc_drop inconsistent with accuracies".into()));
        }
        if self.satisfied != (self.rhs_robustness >= 0.0) {
            return Err(bad("satisfied flag disagrees with rhs_robustness".into()));
        }
        Ok(TestRecord {
            iteration: self.iteration,
            fv: FractionVectors::new(self.v1, self.v2)?,
            trace,
            rhs_robustness: self.rhs_robustness,
            energy_gain: self.energy_gain,
            satisfied: self.satisfied,
            accepted: self.accepted,
        })
    }
}

/// `AXLOG` (JSON Lines), one record per line.
pub fn records_to_axlog(records: &[TestRecord]) -> String {
    let mut s = String::new();
    for r in records {
        writeln!(
            s,
            "{}",
            serde_json::to_string(&LogLine::from(r)).expect("finite record")
        )
        .unwrap();
    }
    s
}

pub fn records_from_axlog(text: &str) -> Result<Vec<TestRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line: LogLine =
                serde_json::from_str(l).map_err(|e| Error::Format(format!("AXLOG line {}: {e}", i + 1)))?;
            line.into_record(i + 1)
        })
        .collect()
}

pub fn load_axlog(path: impl AsRef<Path>) -> Result<Vec<TestRecord>> {
    records_from_axlog(&fs::read_to_string(path)?)
}

pub fn save_axlog(records: &[TestRecord], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, records_to_axlog(records))?;
    Ok(())
}

/// SHA-256 of the query's canonical text.
pub fn query_hash(query: &Query<f64>) -> String {
    hex::encode(Sha256::digest(query.to_string().as_bytes()))
}

/// Scores of one mapping on a given evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub energy_gain: f64,
    pub rhs_robustness: f64,
    pub satisfied: bool,
    pub avg_acc_drop: f64,
    pub batches: usize,
}

impl From<&TestRecord> for Evaluation {
    fn from(r: &TestRecord) -> Self {
        Self {
            energy_gain: r.energy_gain,
            rhs_robustness: r.rhs_robustness,
            satisfied: r.satisfied,
            avg_acc_drop: r.trace.avg_acc_drop(),
            batches: r.trace.len(),
        }
    }
}

/// Mining run summary written next to the log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub theta_star: Option<f64>,
    pub iterations: usize,
    pub seed: u64,
    pub query_hash: String,
    pub query: String,
    pub best_iteration: Option<usize>,
    pub pareto_iterations: Vec<usize>,
    /// Best mapping on the optimization subset.
    pub subset: Option<Evaluation>,
    /// Best mapping on the full evaluation set.
    pub full: Option<Evaluation>,
    pub diagnostic: Option<String>,
}

impl Summary {
    pub fn new(query: &Query<f64>, cfg: &MiningConfig, result: &MiningResult, full: Option<&TestRecord>) -> Self {
        let subset = result
            .best_iteration
            .and_then(|i| result.records.iter().find(|r| r.iteration == i))
            .map(Evaluation::from);
        Self {
            theta_star: result.theta_star,
            iterations: result.records.len(),
            seed: cfg.seed,
            query_hash: query_hash(query),
            query: query.to_string(),
            best_iteration: result.best_iteration,
            pareto_iterations: result.pareto.iter().map(|r| r.iteration).collect(),
            subset,
            full: full.map(Evaluation::from),
            diagnostic: result.diagnostic.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("finite summary");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
