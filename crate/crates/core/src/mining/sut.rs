use rayon::prelude::*;

use crate::axmult::AxMultiplier;
use crate::error::{Error, Result};
use crate::mapping::{
    approximate_flags, model_histograms, plan_with_histograms, FractionVectors, MappedMultiplier, MappingPlan,
    WeightHistogram,
};
use crate::pstl::Trace;
use crate::qnn::{correct_count, Batch, Dataset, ExactMultiplier, QuantModel};

/// Anything that turns fraction vectors into an accuracy-drop trace.
pub trait SystemUnderTest: Sync {
    /// Number of (v1, v2) control points.
    fn layer_count(&self) -> usize;

    fn run(&self, fv: &FractionVectors<f64>) -> Result<Trace<f64>>;
}

/// First `ceil(fraction · n)` batches.
pub fn subset_batches(batches: &[Batch], fraction: f64) -> Result<&[Batch]> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("subset fraction {fraction} outside (0, 1]")));
    }
    let n = ((fraction * batches.len() as f64).ceil() as usize).clamp(1, batches.len().max(1));
    Ok(&batches[..n.min(batches.len())])
}

/// A quantized model on an accelerator built from a reconfigurable multiplier.
///
/// Exact per-batch accuracies are computed once at construction.
pub struct DnnSystem<'a> {
    model: &'a QuantModel,
    mult: &'a AxMultiplier,
    batches: Vec<Batch>,
    exact_correct: Vec<usize>,
    histograms: Vec<WeightHistogram>,
    approximate: Vec<bool>,
}

fn percent(correct: usize, len: usize) -> f64 {
    100.0 * correct as f64 / len as f64
}

impl<'a> DnnSystem<'a> {
    pub fn new(model: &'a QuantModel, mult: &'a AxMultiplier, batches: Vec<Batch>) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::Argument("no batches to evaluate".into()));
        }
        let exact_correct = batches
            .par_iter()
            .map(|b| correct_count(model, b, &ExactMultiplier))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            mult,
            batches,
            exact_correct,
            histograms: model_histograms(model)?,
            approximate: approximate_flags(model),
        })
    }

    pub fn from_dataset(
        model: &'a QuantModel,
        mult: &'a AxMultiplier,
        dataset: &Dataset,
        batch_size: usize,
        fraction: f64,
    ) -> Result<Self> {
        let all = dataset.batches(model, batch_size)?;
        let subset = subset_batches(&all, fraction)?.to_vec();
        Self::new(model, mult, subset)
    }

    pub fn model(&self) -> &QuantModel {
        self.model
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn exact_accuracies(&self) -> Vec<f64> {
        self.exact_correct
            .iter()
            .zip(&self.batches)
            .map(|(&c, b)| percent(c, b.len()))
            .collect()
    }

    pub fn plan(&self, fv: &FractionVectors<f64>) -> Result<MappingPlan<f64>> {
        plan_with_histograms(&self.histograms, &self.approximate, fv)
    }
}

impl SystemUnderTest for DnnSystem<'_> {
    fn layer_count(&self) -> usize {
        self.histograms.len()
    }

    fn run(&self, fv: &FractionVectors<f64>) -> Result<Trace<f64>> {
        let plan = self.plan(fv)?;
        let gain = plan.utilization().energy_gain(self.mult.energies())?;
        let mul = MappedMultiplier::from_plan(&plan, self.mult);
        let approx = self
            .batches
            .par_iter()
            .map(|b| correct_count(self.model, b, &mul).map(|c| percent(c, b.len())))
            .collect::<Result<Vec<_>>>()?;
        Trace::from_accuracies(self.exact_accuracies(), approx, gain)
    }
}
