use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qnn::Multiplier;

pub const TABLE_LEN: usize = 256 * 256;

/// Exhaustive error statistics of a product table against the exact product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    /// Mean of `approx - exact` over all 65536 operand pairs.
    pub mean_error: f64,
    pub mean_absolute_error: f64,
    pub max_absolute_error: u32,
}

impl ErrorProfile {
    pub fn exact() -> Self {
        Self {
            mean_error: 0.0,
            mean_absolute_error: 0.0,
            max_absolute_error: 0,
        }
    }

    /// Agreement within `tol` on the real-valued fields and exactly on the maximum.
    pub fn matches(&self, other: &ErrorProfile, tol: f64) -> bool {
        (self.mean_error - other.mean_error).abs() <= tol
            && (self.mean_absolute_error - other.mean_absolute_error).abs() <= tol
            && self.max_absolute_error == other.max_absolute_error
    }
}

/// One operating mode: a full 8x8 product table indexed `[weight * 256 + activation]`.
#[derive(Clone, PartialEq)]
pub struct AxMode {
    name: String,
    table: Box<[u16]>,
    energy_per_op: f64,
}

impl std::fmt::Debug for AxMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AxMode")
            .field("name", &self.name)
            .field("energy_per_op", &self.energy_per_op)
            .finish_non_exhaustive()
    }
}

impl AxMode {
    pub fn new(name: impl Into<String>, table: Vec<u16>, energy_per_op: f64) -> Result<Self> {
        if table.len() != TABLE_LEN {
            return Err(Error::Format(format!(
                "product table has {} entries, expected {TABLE_LEN}",
                table.len()
            )));
        }
        check_energy(energy_per_op)?;
        Ok(Self {
            name: name.into(),
            table: table.into_boxed_slice(),
            energy_per_op,
        })
    }

    /// The exact product table.
    pub fn exact() -> Self {
        Self::truncation(0).expect("k = 0 is valid")
    }

    /// Both operands with their `k` low bits cleared before multiplying.
    pub fn truncation(k: u32) -> Result<Self> {
        if k > 8 {
            return Err(Error::Argument(format!("truncation width {k} outside [0, 8]")));
        }
        let mask = (0xFFu32 << k) as u8;
        let table = (0..TABLE_LEN)
            .map(|i| {
                let (w, a) = ((i >> 8) as u8, i as u8);
                (w & mask) as u16 * (a & mask) as u16
            })
            .collect();
        let name = if k == 0 {
            "exact".to_string()
        } else {
            format!("trunc{k}")
        };
        Self::new(name, table, 1.0)
    }

    pub fn with_energy(mut self, energy_per_op: f64) -> Result<Self> {
        check_energy(energy_per_op)?;
        self.energy_per_op = energy_per_op;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn energy_per_op(&self) -> f64 {
        self.energy_per_op
    }

    pub fn table(&self) -> &[u16] {
        &self.table
    }

    /// The 256 products for a fixed weight.
    pub fn row(&self, weight: u8) -> &[u16] {
        let start = weight as usize * 256;
        &self.table[start..start + 256]
    }

    #[inline]
    pub fn get(&self, weight: u8, activation: u8) -> u16 {
        self.table[weight as usize * 256 + activation as usize]
    }

    pub fn is_exact(&self) -> bool {
        self.table
            .iter()
            .enumerate()
            .all(|(i, &p)| p as usize == (i >> 8) * (i & 0xFF))
    }

    pub fn error_profile(&self) -> ErrorProfile {
        let mut sum = 0i64;
        let mut sum_abs = 0u64;
        let mut max = 0u32;
        for (i, &p) in self.table.iter().enumerate() {
            let exact = ((i >> 8) * (i & 0xFF)) as i64;
            let err = p as i64 - exact;
            sum += err;
            sum_abs += err.unsigned_abs();
            max = max.max(err.unsigned_abs() as u32);
        }
        ErrorProfile {
            mean_error: sum as f64 / TABLE_LEN as f64,
            mean_absolute_error: sum_abs as f64 / TABLE_LEN as f64,
            max_absolute_error: max,
        }
    }
}

fn check_energy(e: f64) -> Result<()> {
    if e.is_finite() && e > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "energy per operation must be positive, got {e}"
        )))
    }
}

impl Multiplier for AxMode {
    #[inline]
    fn product(&self, _layer: usize, weight: u8, activation: u8) -> u16 {
        self.get(weight, activation)
    }
}

/// A reconfigurable multiplier: modes M0 (exact), M1, M2.
#[derive(Clone, Debug, PartialEq)]
pub struct AxMultiplier {
    modes: [AxMode; 3],
}

pub const DEFAULT_ENERGIES: [f64; 3] = [1.0, 0.8, 0.6];

impl AxMultiplier {
    /// Validates exactness of M0, strictly decreasing energy and non-decreasing MAE.
    pub fn new(modes: [AxMode; 3]) -> Result<Self> {
        if !modes[0].is_exact() {
            return Err(Error::Validation(format!(
                "M0 ({}) is not the exact product",
                modes[0].name
            )));
        }
        let e: Vec<f64> = modes.iter().map(|m| m.energy_per_op).collect();
        if !(e[0] > e[1] && e[1] > e[2]) {
            return Err(Error::Validation(format!(
                "mode energies must strictly decrease M0 > M1 > M2, got {e:?}"
            )));
        }
        let mae: Vec<f64> = modes.iter().map(|m| m.error_profile().mean_absolute_error).collect();
        if !(mae[1] <= mae[2]) {
            return Err(Error::Validation(format!(
                "mode MAE must not decrease from M1 to M2, got {mae:?}"
            )));
        }
        Ok(Self { modes })
    }

    /// Exact, truncation k=2 and truncation k=4 with energies (1.0, 0.8, 0.6).
    pub fn default_triple() -> Self {
        let modes = [
            AxMode::exact(),
            AxMode::truncation(2).unwrap().with_energy(DEFAULT_ENERGIES[1]).unwrap(),
            AxMode::truncation(4).unwrap().with_energy(DEFAULT_ENERGIES[2]).unwrap(),
        ];
        Self::new(modes).expect("default triple is valid")
    }

    pub fn with_energies(self, energies: [f64; 3]) -> Result<Self> {
        let [m0, m1, m2] = self.modes;
        Self::new([
            m0.with_energy(energies[0])?,
            m1.with_energy(energies[1])?,
            m2.with_energy(energies[2])?,
        ])
    }

    pub fn mode(&self, index: usize) -> &AxMode {
        &self.modes[index]
    }

    pub fn modes(&self) -> &[AxMode; 3] {
        &self.modes
    }

    pub fn energies(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.modes[i].energy_per_op)
    }
}
