//! Query battery, per-batch breakdowns and plot-ready tables for mining results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::AxmapFile;
use crate::mining::{load_axlog, query_hash, MiningResult, Summary, TestRecord};
use crate::pstl::parse_query;
use crate::{Query, Trace};

/// Per-batch drop tolerated at any time in every battery query.
pub const TOTAL_THRESHOLD: f64 = 15.0;
/// Average-drop thresholds the battery is swept over.
pub const AVG_THRESHOLDS: [f64; 3] = [0.5, 1.0, 2.0];
/// `(X%, per-batch threshold)` of Q1..Q6; Q7 has no per-batch constraint.
const FINE_GRAIN: [(f64, f64); 6] = [
    (40.0, 3.0),
    (60.0, 3.0),
    (80.0, 3.0),
    (40.0, 5.0),
    (60.0, 5.0),
    (80.0, 5.0),
];

/// DSL text of battery query `Q{index}` (1..=7).
pub fn table_query_text(index: usize, avg_threshold: f64) -> Result<String> {
    let avg = format!("always (avg_acc_drop <= {avg_threshold:?})");
    let rhs = match index {
        1..=6 => {
            let (x, thr) = FINE_GRAIN[index - 1];
            format!("(always[{x}%] (acc_diff <= {thr:?}) and always (acc_diff <= {TOTAL_THRESHOLD:?}) and {avg})")
        }
        7 => avg,
        _ => {
            return Err(Error::Argument(format!(
                "battery query Q{index} does not exist (1..=7)"
            )))
        }
    };
    Ok(format!(
        "param theta;\nassert always (energy_gain <= theta) -> {rhs};\n"
    ))
}

pub fn table_query(index: usize, avg_threshold: f64) -> Result<Query> {
    parse_query(&table_query_text(index, avg_threshold)?)
}

/// Which battery queries a trace satisfies, per average-drop threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryMatrix {
    pub avg_thresholds: Vec<f64>,
    /// `rows[q][t]`: whether `Q{q+1}` holds at `avg_thresholds[t]`.
    pub rows: Vec<Vec<bool>>,
}

pub fn satisfied_matrix(trace: &Trace, avg_thresholds: &[f64]) -> Result<QueryMatrix> {
    let rows = (1..=7)
        .map(|q| {
            avg_thresholds
                .iter()
                .map(|&t| Ok(table_query(q, t)?.rhs_robustness(trace) >= 0.0))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QueryMatrix {
        avg_thresholds: avg_thresholds.to_vec(),
        rows,
    })
}

impl QueryMatrix {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("query");
        for t in &self.avg_thresholds {
            write!(s, ",avg_le_{t}").unwrap();
        }
        s.push('\n');
        for (q, row) in self.rows.iter().enumerate() {
            write!(s, "Q{}", q + 1).unwrap();
            for &ok in row {
                write!(s, ",{}", ok as u8).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// One batch checked against every per-batch bound of a query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub batch: usize,
    pub acc_diff: f64,
    /// `bound - acc_diff` per bound.
    pub margins: Vec<f64>,
    pub holds: Vec<bool>,
}

pub fn batch_breakdown(query: &Query, trace: &Trace) -> Vec<BatchRow> {
    let bounds = query.acc_diff_bounds();
    trace
        .acc_diff()
        .iter()
        .enumerate()
        .map(|(batch, &d)| BatchRow {
            batch,
            acc_diff: d,
            margins: bounds.iter().map(|b| b - d).collect(),
            holds: bounds.iter().map(|&b| d <= b).collect(),
        })
        .collect()
}

/// Trace table with the per-batch breakdown appended as columns.
pub fn trace_csv(query: &Query, trace: &Trace) -> String {
    let bounds = query.acc_diff_bounds();
    let mut s = String::from("batch,acc_exact,acc_approx,acc_diff");
    for b in &bounds {
        write!(s, ",margin_le_{b},holds_le_{b}").unwrap();
    }
    s.push('\n');
    let acc = trace.accuracies();
    for row in batch_breakdown(query, trace) {
        match acc {
            Some((e, a)) => write!(s, "{},{},{},{}", row.batch, e[row.batch], a[row.batch], row.acc_diff),
            None => write!(s, "{},,,{}", row.batch, row.acc_diff),
        }
        .unwrap();
        for (m, h) in row.margins.iter().zip(&row.holds) {
            write!(s, ",{m},{}", *h as u8).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn pareto_csv(pareto: &[TestRecord]) -> String {
    let mut s = String::from("iteration,energy_gain,rhs_robustness,satisfied\n");
    for r in pareto {
        writeln!(
            s,
            "{},{},{},{}",
            r.iteration, r.energy_gain, r.rhs_robustness, r.satisfied as u8
        )
        .unwrap();
    }
    s
}

/// Search progress with the anytime best satisfied gain.
pub fn search_csv(result: &MiningResult) -> String {
    let mut s = String::from("iteration,energy_gain,rhs_robustness,satisfied,accepted,best_satisfied_gain\n");
    for (r, best) in result.records.iter().zip(result.best_so_far()) {
        let best = best.map(|b| b.to_string()).unwrap_or_default();
        writeln!(
            s,
            "{},{},{},{},{},{best}",
            r.iteration, r.energy_gain, r.rhs_robustness, r.satisfied as u8, r.accepted as u8
        )
        .unwrap();
    }
    s
}

/// Mode utilization per layer plus a `total` row; percentages per row sum to 100.
pub fn utilization_csv(mapping: &AxmapFile) -> String {
    let mut s = String::from("layer,v1,v2,achieved_v1,achieved_v2,ops_m0,ops_m1,ops_m2,pct_m0,pct_m1,pct_m2\n");
    for l in &mapping.layers {
        let total: u64 = l.ops.iter().sum();
        let pct = l.ops.map(|o| 100.0 * o as f64 / total as f64);
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            l.index, l.v1, l.v2, l.achieved_v1, l.achieved_v2, l.ops[0], l.ops[1], l.ops[2], pct[0], pct[1], pct[2]
        )
        .unwrap();
    }
    let u = &mapping.utilization;
    let pct = u.percentages();
    writeln!(
        s,
        "total,,,,,{},{},{},{},{},{}",
        u.ops[0], u.ops[1], u.ops[2], pct[0], pct[1], pct[2]
    )
    .unwrap();
    s
}

/// Files making up a mining result bundle.
pub const AXLOG_FILE: &str = "axlog.jsonl";
pub const AXMAP_FILE: &str = "mapping.axmap.json";
pub const AXTR_FILE: &str = "trace.axtr.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BUNDLE_FILES: [&str; 4] = [AXLOG_FILE, AXMAP_FILE, AXTR_FILE, SUMMARY_FILE];

/// A loaded and cross-checked mining bundle.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub summary: Summary,
    pub query: Query,
    pub mining: MiningResult,
    pub mapping: AxmapFile,
    /// Trace of the best mapping on the full evaluation set.
    pub trace: Trace,
}

impl Bundle {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = |f: &str| -> PathBuf { dir.join(f) };
        let missing: Vec<&str> = BUNDLE_FILES.iter().copied().filter(|f| !path(f).is_file()).collect();
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "incomplete bundle {}: missing {}",
                dir.display(),
                missing.join(", ")
            )));
        }
        let summary = Summary::from_json(&std::fs::read_to_string(path(SUMMARY_FILE))?)?;
        let query = parse_query(&summary.query)?;
        if query_hash(&query) != summary.query_hash {
            return Err(Error::Validation("summary query_hash does not match its query".into()));
        }
        let mining = MiningResult::from_records(load_axlog(path(AXLOG_FILE))?);
        let mapping = AxmapFile::load(path(AXMAP_FILE))?;
        let trace = Trace::load(path(AXTR_FILE))?;
        let bundle = Self {
            summary,
            query,
            mining,
            mapping,
            trace,
        };
        bundle.check()?;
        Ok(bundle)
    }

    /// Summary numbers must equal their recomputation from the raw log.
    fn check(&self) -> Result<()> {
        let s = &self.summary;
        let m = &self.mining;
        let pareto: Vec<usize> = m.pareto.iter().map(|r| r.iteration).collect();
        if s.theta_star != m.theta_star
            || s.best_iteration != m.best_iteration
            || s.iterations != m.records.len()
            || s.pareto_iterations != pareto
        {
            return Err(Error::Invariant(
                "summary disagrees with recomputation from the AXLOG".into(),
            ));
        }
        let best = m
            .best_mapping
            .as_ref()
            .ok_or_else(|| Error::Validation("bundle has no satisfying mapping to report on".into()))?;
        if &self.mapping.fractions()? != best {
            return Err(Error::Invariant(
                "AXMAP fractions differ from the log's best mapping".into(),
            ));
        }
        if self.mapping.energy_gain != self.trace.energy_gain() {
            return Err(Error::Invariant("AXTR energy gain differs from the AXMAP".into()));
        }
        Ok(())
    }
}

/// Fraction of batches whose drop exceeds each threshold, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropStats {
    pub avg_acc_drop: f64,
    pub max_acc_drop: f64,
    pub percent_over: Vec<(f64, f64)>,
}

/// Per-batch drop thresholds reported alongside every trace.
pub const DROP_THRESHOLDS: [f64; 3] = [3.0, 5.0, TOTAL_THRESHOLD];

pub fn drop_stats(trace: &Trace) -> DropStats {
    DropStats {
        avg_acc_drop: trace.avg_acc_drop(),
        max_acc_drop: trace.max_drop(),
        percent_over: DROP_THRESHOLDS.iter().map(|&t| (t, trace.percent_over(t))).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjunctReport {
    pub conjunct: String,
    pub robustness: f64,
    pub satisfied: bool,
}

/// Machine-readable report over a bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub query: String,
    pub theta_star: Option<f64>,
    pub energy_gain: f64,
    pub utilization_percent: [f64; 3],
    pub drops: DropStats,
    pub conjuncts: Vec<ConjunctReport>,
    pub satisfied_matrix: QueryMatrix,
    /// `(energy_gain, rhs_robustness)` of every Pareto member.
    pub pareto: Vec<(f64, f64)>,
}

impl Report {
    pub fn new(bundle: &Bundle) -> Result<Self> {
        Ok(Self {
            query: bundle.query.to_string(),
            theta_star: bundle.mining.theta_star,
            energy_gain: bundle.mapping.energy_gain,
            utilization_percent: bundle.mapping.utilization.percentages(),
            drops: drop_stats(&bundle.trace),
            conjuncts: bundle
                .query
                .conjunct_status(&bundle.trace)
                .into_iter()
                .map(|c| ConjunctReport {
                    conjunct: c.text,
                    robustness: c.robustness,
                    satisfied: c.satisfied,
                })
                .collect(),
            satisfied_matrix: satisfied_matrix(&bundle.trace, &AVG_THRESHOLDS)?,
            pareto: bundle
                .mining
                .pareto
                .iter()
                .map(|r| (r.energy_gain, r.rhs_robustness))
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("finite report");
        s.push('\n');
        s
    }
}

/// Writes the report tables into `out`; returns the file names written.
pub fn write_report(bundle: &Bundle, out: impl AsRef<Path>) -> Result<Vec<&'static str>> {
    let out = out.as_ref();
    let report = Report::new(bundle)?;
    let files: [(&'static str, String); 6] = [
        ("report_trace.csv", trace_csv(&bundle.query, &bundle.trace)),
        ("report_pareto.csv", pareto_csv(&bundle.mining.pareto)),
        ("report_search.csv", search_csv(&bundle.mining)),
        ("report_utilization.csv", utilization_csv(&bundle.mapping)),
        ("report_queries.csv", report.satisfied_matrix.to_csv()),
        ("report.json", report.to_json()),
    ];
    std::fs::create_dir_all(out)?;
    for (name, body) in &files {
        std::fs::write(out.join(name), body)?;
    }
    Ok(files.map(|(n, _)| n).to_vec())
}
