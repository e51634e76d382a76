use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Finite per-batch accuracy-drop signal plus the run's scalar summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace<T> {
    acc_diff: Vec<T>,
    /// Per-batch exact and approximate accuracies in percent, when known.
    accuracies: Option<(Vec<T>, Vec<T>)>,
    energy_gain: T,
    avg_acc_drop: T,
}

fn mean<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(v.len() as u64)
}

impl<T: Real> Trace<T> {
    /// Trace from per-batch differences in percentage points; the average is their mean.
    pub fn from_diffs(acc_diff: Vec<T>, energy_gain: T) -> Result<Self> {
        if acc_diff.is_empty() {
            return Err(Error::Argument("trace needs at least one batch".into()));
        }
        let avg = mean(&acc_diff);
        Self::build(acc_diff, None, energy_gain, avg)
    }

    /// Trace from per-batch accuracies in percent.
    pub fn from_accuracies(acc_exact: Vec<T>, acc_approx: Vec<T>, energy_gain: T) -> Result<Self> {
        if acc_exact.len() != acc_approx.len() || acc_exact.is_empty() {
            return Err(Error::Argument(format!(
                "need matching non-empty accuracy vectors, got {} and {}",
                acc_exact.len(),
                acc_approx.len()
            )));
        }
        let diff: Vec<T> = acc_exact.iter().zip(&acc_approx).map(|(&e, &a)| e - a).collect();
        let avg = mean(&diff);
        Self::build(diff, Some((acc_exact, acc_approx)), energy_gain, avg)
    }

    fn build(acc_diff: Vec<T>, accuracies: Option<(Vec<T>, Vec<T>)>, energy_gain: T, avg_acc_drop: T) -> Result<Self> {
        let hundred = T::lit(100.0);
        if let Some(bad) = acc_diff.iter().find(|d| !(d.abs() <= hundred)) {
            return Err(Error::Validation(format!(
                "accuracy difference {bad} outside [-100, 100]"
            )));
        }
        if !(energy_gain >= T::zero() && energy_gain < T::one()) {
            return Err(Error::Validation(format!("energy gain {energy_gain} outside [0, 1)")));
        }
        Ok(Self {
            acc_diff,
            accuracies,
            energy_gain,
            avg_acc_drop,
        })
    }

    pub fn acc_diff(&self) -> &[T] {
        &self.acc_diff
    }

    pub fn accuracies(&self) -> Option<(&[T], &[T])> {
        self.accuracies.as_ref().map(|(e, a)| (e.as_slice(), a.as_slice()))
    }

    pub fn energy_gain(&self) -> T {
        self.energy_gain
    }

    pub fn avg_acc_drop(&self) -> T {
        self.avg_acc_drop
    }

    pub fn len(&self) -> usize {
        self.acc_diff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acc_diff.is_empty()
    }

    pub fn max_drop(&self) -> T {
        self.acc_diff.iter().fold(T::neg_infinity(), |a, &b| a.max(b))
    }

    /// Percentage of batches whose drop exceeds `threshold`.
    pub fn percent_over(&self, threshold: T) -> T {
        let n = self.acc_diff.iter().filter(|&&d| d > threshold).count();
        T::lit(100.0) * T::from_count(n as u64) / T::from_count(self.len() as u64)
    }
}

#[derive(Serialize, Deserialize)]
struct Footer {
    energy_gain: f64,
    avg_acc_drop: f64,
}

const HEADER: &str = "batch,acc_exact,acc_approx,acc_diff";
const AVG_TOL: f64 = 1e-9;

impl Trace<f64> {
    /// `AXTR` text: CSV rows plus a `# {json}` footer carrying the scalars.
    pub fn to_axtr(&self) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for (i, d) in self.acc_diff.iter().enumerate() {
            match &self.accuracies {
                Some((e, a)) => writeln!(s, "{i},{},{},{d}", e[i], a[i]),
                None => writeln!(s, "{i},,,{d}"),
            }
            .unwrap();
        }
        let footer = Footer {
            energy_gain: self.energy_gain,
            avg_acc_drop: self.avg_acc_drop,
        };
        writeln!(s, "# {}", serde_json::to_string(&footer).unwrap()).unwrap();
        s
    }

    pub fn from_axtr(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HEADER => {}
            _ => return Err(Error::Format(format!("AXTR must start with `{HEADER}`"))),
        }
        let mut exact = Vec::new();
        let mut approx = Vec::new();
        let mut diff = Vec::new();
        let mut footer: Option<Footer> = None;
        for (ln, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if footer.is_some() {
                return Err(Error::Format(format!("AXTR line {}: data after footer", ln + 1)));
            }
            if let Some(json) = line.strip_prefix('#') {
                footer =
                    Some(serde_json::from_str(json.trim()).map_err(|e| Error::Format(format!("AXTR footer: {e}")))?);
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 4 {
                return Err(Error::Format(format!("AXTR line {}: expected 4 columns", ln + 1)));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("AXTR line {}: bad number `{s}`", ln + 1)))
            };
            let batch = cells[0].trim().parse::<usize>().ok();
            if batch != Some(diff.len()) {
                return Err(Error::Format(format!("AXTR line {}: batch index out of order", ln + 1)));
            }
            if !cells[1].trim().is_empty() || !cells[2].trim().is_empty() {
                exact.push(num(cells[1])?);
                approx.push(num(cells[2])?);
            }
            diff.push(num(cells[3])?);
        }
        let footer = footer.ok_or_else(|| Error::Format("AXTR footer missing".into()))?;
        if diff.is_empty() {
            return Err(Error::Format("AXTR has no rows".into()));
        }
        let accuracies = match exact.len() {
            0 => None,
            n if n == diff.len() => Some((exact, approx)),
            _ => return Err(Error::Format("AXTR accuracy columns partially filled".into())),
        };
        let mean = mean(&diff);
        if (mean - footer.avg_acc_drop).abs() > AVG_TOL * mean.abs().max(1.0) {
            return Err(Error::Validation(format!(
                "AXTR avg_acc_drop {} disagrees with mean of diffs {mean}",
                footer.avg_acc_drop
            )));
        }
        Trace::build(diff, accuracies, footer.energy_gain, footer.avg_acc_drop)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_axtr(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_axtr())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracies_give_diffs_and_mean() {
        let t = Trace::from_accuracies(vec![98.0, 97.0], vec![97.0, 94.0], 0.1).unwrap();
        assert_eq!(t.acc_diff(), &[1.0, 3.0]);
        assert_eq!(t.avg_acc_drop(), 2.0);
        assert_eq!(t.max_drop(), 3.0);
        assert_eq!(t.percent_over(2.0), 50.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(Trace::from_diffs(vec![101.0], 0.0).is_err());
        assert!(Trace::from_diffs(vec![1.0], 1.0).is_err());
        assert!(Trace::<f64>::from_diffs(vec![], 0.0).is_err());
    }

    #[test]
    fn axtr_round_trip_both_forms() {
        let a = Trace::from_accuracies(vec![98.0, 97.0, 99.0], vec![97.0, 94.5, 99.0], 0.125).unwrap();
        assert_eq!(Trace::from_axtr(&a.to_axtr()).unwrap(), a);
        let b = Trace::from_diffs(vec![0.1, -0.2, 0.3], 0.3).unwrap();
        assert_eq!(Trace::from_axtr(&b.to_axtr()).unwrap(), b);
    }

    #[test]
    fn axtr_malformed() {
        assert!(Trace::from_axtr("batch,x\n").is_err());
        let bad = "batch,acc_exact,acc_approx,acc_diff\n0,1,2\n# {\"energy_gain\":0,\"avg_acc_drop\":0}\n";
        assert!(Trace::from_axtr(bad).is_err());
        let no_footer = "batch,acc_exact,acc_approx,acc_diff\n0,1,1,0\n";
        assert!(Trace::from_axtr(no_footer).is_err());
        let wrong_avg = "batch,acc_exact,acc_approx,acc_diff\n0,1,1,0\n# {\"energy_gain\":0,\"avg_acc_drop\":3}\n";
        assert!(matches!(Trace::from_axtr(wrong_avg), Err(Error::Validation(_))));
    }
}
