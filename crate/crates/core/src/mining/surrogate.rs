use super::sut::SystemUnderTest;
use crate::error::{Error, Result};
use crate::mapping::FractionVectors;
use crate::pstl::Trace;

/// Analytic stand-in for a network: per-batch accuracy drops are a known
/// monotone function of the fraction vectors.
///
/// Layer `i` contributes a load `a_i · v1_i + b_i · v2_i`; batch `t` drops
/// `round(scale_t · Σ load_i)` percentage points, so drops come in whole
/// points as with 100-image batches.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticSystem {
    /// Share of all multiplications per layer; sums to 1.
    pub shares: Vec<f64>,
    /// `(a_i, b_i)`: drop per unit of M1 and M2 fraction.
    pub sensitivity: Vec<(f64, f64)>,
    pub batch_scale: Vec<f64>,
    pub energies: [f64; 3],
}

impl AnalyticSystem {
    /// Two layers, ten batches, default energies.
    pub fn two_layer() -> Self {
        Self {
            shares: vec![0.4, 0.6],
            sensitivity: vec![(1.0, 3.0), (2.0, 9.0)],
            batch_scale: vec![0.6, 1.4, 0.8, 1.2, 1.0, 0.9, 1.1, 0.7, 1.3, 1.0],
            energies: [1.0, 0.8, 0.6],
        }
    }

    pub fn energy_gain(&self, fv: &FractionVectors<f64>) -> f64 {
        let [e0, e1, e2] = self.energies;
        self.shares
            .iter()
            .enumerate()
            .map(|(i, s)| s * (fv.v1[i] * (1.0 - e1 / e0) + fv.v2[i] * (1.0 - e2 / e0)))
            .sum()
    }
}

impl SystemUnderTest for AnalyticSystem {
    fn layer_count(&self) -> usize {
        self.shares.len()
    }

    fn run(&self, fv: &FractionVectors<f64>) -> Result<Trace<f64>> {
        if fv.len() != self.layer_count() {
            return Err(Error::Argument(format!(
                "fraction vectors cover {} layers, system has {}",
                fv.len(),
                self.layer_count()
            )));
        }
        let load: f64 = self
            .sensitivity
            .iter()
            .enumerate()
            .map(|(i, (a, b))| a * fv.v1[i] + b * fv.v2[i])
            .sum();
        let diffs = self.batch_scale.iter().map(|s| (s * load).round()).collect();
        Trace::from_diffs(diffs, self.energy_gain(fv))
    }
}
