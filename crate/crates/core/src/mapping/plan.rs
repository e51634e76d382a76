use serde::{Deserialize, Serialize};

use super::ranges::{
    check_pair, layer_histogram, mode_for_weight, ranges_from_fractions, LayerRanges, WeightHistogram,
};
use crate::axmult::{AxMode, AxMultiplier};
use crate::error::{Error, Result};
use crate::qnn::{Multiplier, QuantModel};
use crate::scalar::Real;

/// Per-layer fractions of multiplications targeted at M1 (`v1`) and M2 (`v2`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionVectors<T> {
    pub v1: Vec<T>,
    pub v2: Vec<T>,
}

impl<T: Real> FractionVectors<T> {
    pub fn new(v1: Vec<T>, v2: Vec<T>) -> Result<Self> {
        if v1.len() != v2.len() {
            return Err(Error::Argument(format!(
                "v1 has {} entries, v2 has {}",
                v1.len(),
                v2.len()
            )));
        }
        for (&a, &b) in v1.iter().zip(&v2) {
            check_pair(a, b)?;
        }
        Ok(Self { v1, v2 })
    }

    pub fn zeros(layers: usize) -> Self {
        Self {
            v1: vec![T::zero(); layers],
            v2: vec![T::zero(); layers],
        }
    }

    /// Every layer fully on M2.
    pub fn all_m2(layers: usize) -> Self {
        Self {
            v1: vec![T::zero(); layers],
            v2: vec![T::one(); layers],
        }
    }

    pub fn len(&self) -> usize {
        self.v1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v1.is_empty()
    }

    pub fn pair(&self, i: usize) -> (T, T) {
        (self.v1[i], self.v2[i])
    }
}

/// Multiplications per image routed to each mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utilization {
    pub ops: [u64; 3],
}

impl Utilization {
    pub fn total(&self) -> u64 {
        self.ops.iter().sum()
    }

    /// Share of each mode in percent.
    pub fn percentages(&self) -> [f64; 3] {
        let total = self.total().max(1) as f64;
        self.ops.map(|o| 100.0 * o as f64 / total)
    }

    /// `1 - Σ ops_i e_i / (total · e_0)`.
    pub fn energy_gain<T: Real>(&self, energies: [T; 3]) -> Result<T> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Argument("energy gain of zero multiplications".into()));
        }
        let spent = (0..3).fold(T::zero(), |acc, i| acc + T::from_count(self.ops[i]) * energies[i]);
        Ok(T::one() - spent / (T::from_count(total) * energies[0]))
    }
}

impl std::ops::Add for Utilization {
    type Output = Utilization;
    fn add(self, rhs: Self) -> Self {
        Utilization {
            ops: [0, 1, 2].map(|i| self.ops[i] + rhs.ops[i]),
        }
    }
}

/// Energy gain of a utilization under the multiplier's per-mode energies.
pub fn energy_gain(u: &Utilization, mult: &AxMultiplier) -> Result<f64> {
    u.energy_gain(mult.energies())
}

/// Per-layer result of applying a fraction pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerPlan<T> {
    pub v1: T,
    pub v2: T,
    pub ranges: LayerRanges<T>,
    pub utilization: Utilization,
    /// Mode index for every weight value.
    pub modes: [u8; 256],
}

/// Realized mapping of a whole model.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingPlan<T> {
    pub layers: Vec<LayerPlan<T>>,
}

impl<T: Real> MappingPlan<T> {
    pub fn utilization(&self) -> Utilization {
        self.layers
            .iter()
            .fold(Utilization::default(), |acc, l| acc + l.utilization)
    }

    pub fn fractions(&self) -> FractionVectors<T> {
        FractionVectors {
            v1: self.layers.iter().map(|l| l.v1).collect(),
            v2: self.layers.iter().map(|l| l.v2).collect(),
        }
    }
}

/// Weight histograms of every multiplier-bearing layer, in layer-index order.
pub fn model_histograms(model: &QuantModel) -> Result<Vec<WeightHistogram>> {
    (0..model.mac_layer_count())
        .map(|i| {
            let layer = model.mac_layer(i).expect("index in range");
            layer_histogram(layer, model.uses_per_weight(i) as u64)
        })
        .collect()
}

/// Applies fraction vectors to precomputed histograms.
///
/// `approximate[i] == false` pins layer `i` to M0 regardless of its fractions.
pub fn plan_with_histograms<T: Real>(
    histograms: &[WeightHistogram],
    approximate: &[bool],
    fv: &FractionVectors<T>,
) -> Result<MappingPlan<T>> {
    if fv.len() != histograms.len() {
        return Err(Error::Argument(format!(
            "fraction vectors cover {} layers, model has {}",
            fv.len(),
            histograms.len()
        )));
    }
    let layers = histograms
        .iter()
        .zip(approximate)
        .enumerate()
        .map(|(i, (hist, &approx))| {
            let (v1, v2) = fv.pair(i);
            let ranges = if approx {
                ranges_from_fractions(hist, v1, v2)?
            } else {
                check_pair(v1, v2)?;
                LayerRanges::empty()
            };
            let mut modes = [0u8; 256];
            let mut ops = [0u64; 3];
            for (w, &count) in hist.counts().iter().enumerate() {
                let m = mode_for_weight(w as u8, &ranges);
                modes[w] = m as u8;
                ops[m] += count;
            }
            Ok(LayerPlan {
                v1,
                v2,
                ranges,
                utilization: Utilization { ops },
                modes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MappingPlan { layers })
}

pub fn approximate_flags(model: &QuantModel) -> Vec<bool> {
    model.mac_layers().map(|(mac, _, _)| mac.approximate).collect()
}

pub fn plan<T: Real>(model: &QuantModel, fv: &FractionVectors<T>) -> Result<MappingPlan<T>> {
    plan_with_histograms(&model_histograms(model)?, &approximate_flags(model), fv)
}

/// Per-mode multiplication counts of a model under `fv`.
pub fn utilization<T: Real>(model: &QuantModel, fv: &FractionVectors<T>) -> Result<Utilization> {
    Ok(plan(model, fv)?.utilization())
}

/// Dispatches each product to the mode selected for its weight value in its layer.
#[derive(Clone, Debug)]
pub struct MappedMultiplier<'a> {
    modes: [&'a AxMode; 3],
    selection: Vec<[u8; 256]>,
}

impl<'a> MappedMultiplier<'a> {
    pub fn from_plan<T: Real>(plan: &MappingPlan<T>, mult: &'a AxMultiplier) -> Self {
        Self {
            modes: [mult.mode(0), mult.mode(1), mult.mode(2)],
            selection: plan.layers.iter().map(|l| l.modes).collect(),
        }
    }

    /// Mode chosen for `weight` in `layer`.
    pub fn mode_index(&self, layer: usize, weight: u8) -> usize {
        self.selection[layer][weight as usize] as usize
    }
}

impl Multiplier for MappedMultiplier<'_> {
    #[inline]
    fn product(&self, layer: usize, weight: u8, activation: u8) -> u16 {
        let mode = self.selection[layer][weight as usize];
        self.modes[mode as usize].get(weight, activation)
    }
}

pub fn mapped_multiplier<'a, T: Real>(
    model: &QuantModel,
    fv: &FractionVectors<T>,
    mult: &'a AxMultiplier,
) -> Result<MappedMultiplier<'a>> {
    Ok(MappedMultiplier::from_plan(&plan(model, fv)?, mult))
}
