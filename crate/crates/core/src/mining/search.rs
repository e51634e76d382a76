use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sut::SystemUnderTest;
use crate::error::{Error, Result};
use crate::mapping::FractionVectors;
use crate::pstl::{Query, Trace};

/// Weight of constraint violation in the annealing cost.
pub const PENALTY: f64 = 1e3;
const BETA_STEP: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Evaluated mappings, including the random starting point.
    pub iterations: usize,
    pub proposal_sigma: f64,
    pub initial_beta: f64,
    pub target_accept_rate: f64,
    pub seed: u64,
    pub optimization_subset_fraction: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            proposal_sigma: 0.05,
            initial_beta: 10.0,
            target_accept_rate: 0.3,
            seed: 0,
            optimization_subset_fraction: 0.25,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Argument(format!("mining config: {what}")));
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if !(self.proposal_sigma > 0.0 && self.proposal_sigma.is_finite()) {
            return bad("proposal_sigma must be positive");
        }
        if !(self.initial_beta > 0.0 && self.initial_beta.is_finite()) {
            return bad("initial_beta must be positive");
        }
        if !(self.target_accept_rate > 0.0 && self.target_accept_rate < 1.0) {
            return bad("target_accept_rate must lie in (0, 1)");
        }
        if !(self.optimization_subset_fraction > 0.0 && self.optimization_subset_fraction <= 1.0) {
            return bad("optimization_subset_fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

/// One evaluated mapping.
#[derive(Clone, Debug, PartialEq)]
pub struct TestRecord {
    pub iteration: usize,
    pub fv: FractionVectors<f64>,
    pub trace: Trace<f64>,
    pub rhs_robustness: f64,
    pub energy_gain: f64,
    pub satisfied: bool,
    /// Whether the chain moved to this mapping.
    pub accepted: bool,
}

impl TestRecord {
    /// `-gain + P · max(0, -rhs_robustness)`.
    pub fn cost(&self) -> f64 {
        -self.energy_gain + PENALTY * (-self.rhs_robustness).max(0.0)
    }

    /// `(gain, rhs)` of `self` is at least as good on both axes and better on one.
    pub fn dominates(&self, other: &TestRecord) -> bool {
        self.energy_gain >= other.energy_gain
            && self.rhs_robustness >= other.rhs_robustness
            && (self.energy_gain > other.energy_gain || self.rhs_robustness > other.rhs_robustness)
    }
}

/// Runs the system on `fv` and scores it against the query's constraints.
pub fn evaluate_mapping<S: SystemUnderTest + ?Sized>(
    fv: &FractionVectors<f64>,
    sut: &S,
    query: &Query<f64>,
    iteration: usize,
) -> Result<TestRecord> {
    let trace = sut.run(fv)?;
    let rhs = query.rhs_robustness(&trace);
    Ok(TestRecord {
        iteration,
        fv: fv.clone(),
        energy_gain: trace.energy_gain(),
        rhs_robustness: rhs,
        satisfied: rhs >= 0.0,
        accepted: false,
        trace,
    })
}

/// Projects a pair onto `{v1, v2 >= 0, v1 + v2 <= 1}`.
fn project(v1: f64, v2: f64) -> (f64, f64) {
    let (v1, v2) = (v1.max(0.0), v2.max(0.0));
    let s = v1 + v2;
    if s > 1.0 {
        let (a, b) = (v1 / s, v2 / s);
        (a, b.min(1.0 - a))
    } else {
        (v1, v2)
    }
}

/// Gaussian perturbation of every coordinate followed by projection.
pub fn propose<R: Rng + ?Sized>(fv: &FractionVectors<f64>, sigma: f64, rng: &mut R) -> FractionVectors<f64> {
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let (v1, v2) = fv
        .v1
        .iter()
        .zip(&fv.v2)
        .map(|(&a, &b)| project(a + noise.sample(rng), b + noise.sample(rng)))
        .unzip();
    FractionVectors { v1, v2 }
}

/// Uniform sample of `(v1, v2, 1 - v1 - v2)` on the simplex for every layer.
pub fn random_fractions<R: Rng + ?Sized>(layers: usize, rng: &mut R) -> FractionVectors<f64> {
    let (v1, v2) = (0..layers)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            (lo, hi - lo)
        })
        .unzip();
    FractionVectors { v1, v2 }
}

/// Indices of records not dominated by any other record.
pub fn pareto_indices(records: &[TestRecord]) -> Vec<usize> {
    (0..records.len())
        .filter(|&i| !records.iter().any(|r| r.dominates(&records[i])))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiningResult {
    /// Every evaluated mapping in order.
    pub records: Vec<TestRecord>,
    pub pareto: Vec<TestRecord>,
    /// Largest energy gain among satisfied records.
    pub theta_star: Option<f64>,
    pub best_mapping: Option<FractionVectors<f64>>,
    /// Iteration of the record achieving `theta_star`.
    pub best_iteration: Option<usize>,
    /// Set when nothing satisfied the query.
    pub diagnostic: Option<String>,
}

impl MiningResult {
    pub fn from_records(records: Vec<TestRecord>) -> Self {
        let pareto = pareto_indices(&records)
            .into_iter()
            .map(|i| records[i].clone())
            .collect();
        let mut best: Option<&TestRecord> = None;
        for r in records.iter().filter(|r| r.satisfied) {
            if best.is_none_or(|b| r.energy_gain > b.energy_gain) {
                best = Some(r);
            }
        }
        let diagnostic = if best.is_none() {
            let max_rhs = records
                .iter()
                .map(|r| r.rhs_robustness)
                .fold(f64::NEG_INFINITY, f64::max);
            Some(format!(
                "no evaluated mapping satisfied the query; max rhs robustness reached {max_rhs}"
            ))
        } else {
            None
        };
        Self {
            theta_star: best.map(|b| b.energy_gain),
            best_mapping: best.map(|b| b.fv.clone()),
            best_iteration: best.map(|b| b.iteration),
            diagnostic,
            pareto,
            records,
        }
    }

    /// Best satisfied energy gain after each iteration (`None` until the first).
    pub fn best_so_far(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.records
            .iter()
            .map(|r| {
                if r.satisfied {
                    best = Some(best.map_or(r.energy_gain, |b| b.max(r.energy_gain)));
                }
                best
            })
            .collect()
    }

    /// Pairs (unsatisfied, satisfied) where the penalty failed to make the
    /// unsatisfied record strictly costlier.
    pub fn penalty_dominance_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in self.records.iter().filter(|r| !r.satisfied) {
            for s in self.records.iter().filter(|r| r.satisfied && r.energy_gain >= 0.0) {
                if u.cost() <= s.cost() {
                    out.push((u.iteration, s.iteration));
                }
            }
        }
        out
    }
}

/// Simulated annealing over fraction vectors with acceptance-rate adaptive β.
pub fn run_mining<S: SystemUnderTest + ?Sized>(
    sut: &S,
    query: &Query<f64>,
    cfg: &MiningConfig,
) -> Result<MiningResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = random_fractions(sut.layer_count(), &mut rng);
    let mut first = evaluate_mapping(&start, sut, query, 0)?;
    first.accepted = true;
    let mut current = (first.fv.clone(), first.cost());
    let mut records = vec![first];
    let mut beta = cfg.initial_beta;
    let (mut accepted, mut proposed) = (0usize, 0usize);
    for iteration in 1..cfg.iterations {
        let candidate = propose(&current.0, cfg.proposal_sigma, &mut rng);
        let mut rec = evaluate_mapping(&candidate, sut, query, iteration)?;
        let cost = rec.cost();
        let delta = cost - current.1;
        let u: f64 = rng.random();
        proposed += 1;
        if delta <= 0.0 || u < (-beta * delta).exp() {
            rec.accepted = true;
            accepted += 1;
            current = (candidate, cost);
        }
        let rate = accepted as f64 / proposed as f64;
        if rate > cfg.target_accept_rate {
            beta *= BETA_STEP;
        } else if rate < cfg.target_accept_rate {
            beta /= BETA_STEP;
        }
        log::debug!(
            "iteration {iteration}: gain {:.4} rhs {:.4} cost {cost:.4} accepted {} beta {beta:.3}",
            rec.energy_gain,
            rec.rhs_robustness,
            rec.accepted
        );
        records.push(rec);
    }
    Ok(MiningResult::from_records(records))
}

/// Evaluates the mined mapping on another (typically the full) evaluation set.
pub fn reevaluate<S: SystemUnderTest + ?Sized>(
    result: &MiningResult,
    sut: &S,
    query: &Query<f64>,
) -> Result<TestRecord> {
    let fv = result
        .best_mapping
        .as_ref()
        .ok_or_else(|| Error::Argument("no satisfying mapping to re-evaluate".into()))?;
    evaluate_mapping(fv, sut, query, result.best_iteration.unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_rescales() {
        let fv = FractionVectors {
            v1: vec![0.9],
            v2: vec![0.9],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = propose(&fv, 0.0, &mut rng);
        assert_eq!((p.v1[0], p.v2[0]), (0.5, 0.5));
        let q = propose(
            &FractionVectors {
                v1: vec![0.2],
                v2: vec![0.3],
            },
            0.0,
            &mut rng,
        );
        assert_eq!((q.v1[0], q.v2[0]), (0.2, 0.3));
        assert_eq!(project(-0.2, 0.4), (0.0, 0.4));
    }

    #[test]
    fn proposals_stay_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut fv = random_fractions(4, &mut rng);
        for _ in 0..2000 {
            fv = propose(&fv, 0.3, &mut rng);
            assert!(FractionVectors::new(fv.v1.clone(), fv.v2.clone()).is_ok(), "{fv:?}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(MiningConfig::default().validate().is_ok());
        let bad = MiningConfig {
            target_accept_rate: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MiningConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
