use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plan::{plan, FractionVectors, MappingPlan, Utilization};
use super::ranges::BinRange;
use crate::axmult::AxMultiplier;
use crate::error::{Error, Result};
use crate::qnn::QuantModel;

pub const AXMAP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxmapLayer {
    pub index: usize,
    pub v1: f64,
    pub v2: f64,
    pub m1: Option<BinRange>,
    pub m2: Option<BinRange>,
    pub achieved_v1: f64,
    pub achieved_v2: f64,
    /// Multiplications per image on M0, M1, M2.
    pub ops: [u64; 3],
}

/// The `AXMAP` JSON document describing one realized mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxmapFile {
    pub version: u32,
    pub model_hash: String,
    pub energies: [f64; 3],
    pub layers: Vec<AxmapLayer>,
    pub utilization: Utilization,
    pub energy_gain: f64,
}

impl AxmapFile {
    pub fn from_plan(plan: &MappingPlan<f64>, model: &QuantModel, mult: &AxMultiplier) -> Result<Self> {
        let utilization = plan.utilization();
        Ok(Self {
            version: AXMAP_VERSION,
            model_hash: model.fingerprint(),
            energies: mult.energies(),
            layers: plan
                .layers
                .iter()
                .enumerate()
                .map(|(index, l)| AxmapLayer {
                    index,
                    v1: l.v1,
                    v2: l.v2,
                    m1: l.ranges.m1,
                    m2: l.ranges.m2,
                    achieved_v1: l.ranges.achieved_v1,
                    achieved_v2: l.ranges.achieved_v2,
                    ops: l.utilization.ops,
                })
                .collect(),
            utilization,
            energy_gain: utilization.energy_gain(mult.energies())?,
        })
    }

    pub fn fractions(&self) -> Result<FractionVectors<f64>> {
        FractionVectors::new(
            self.layers.iter().map(|l| l.v1).collect(),
            self.layers.iter().map(|l| l.v2).collect(),
        )
    }

    /// Recomputes the mapping on `model` and checks it reproduces this file.
    pub fn replay(&self, model: &QuantModel) -> Result<MappingPlan<f64>> {
        if self.version != AXMAP_VERSION {
            return Err(Error::Format(format!("unsupported AXMAP version {}", self.version)));
        }
        if self.model_hash != model.fingerprint() {
            return Err(Error::Validation("AXMAP was produced for a different model".into()));
        }
        let p = plan(model, &self.fractions()?)?;
        for (stored, layer) in self.layers.iter().zip(&p.layers) {
            if stored.m1 != layer.ranges.m1 || stored.m2 != layer.ranges.m2 || stored.ops != layer.utilization.ops {
                return Err(Error::Validation(format!(
                    "AXMAP layer {} ranges do not match recomputation",
                    stored.index
                )));
            }
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("AXMAP serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("AXMAP: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}
