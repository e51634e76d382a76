use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qnn::Layer;
use crate::scalar::Real;

/// Multiplication-weighted weight-value histogram of one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightHistogram {
    counts: Vec<u64>,
    median_bin: u8,
}

impl WeightHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.len() != 256 {
            return Err(Error::Argument(format!(
                "histogram needs 256 bins, got {}",
                counts.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Argument("histogram has no mass".into()));
        }
        let mut cum = 0u64;
        let mut median_bin = 255u8;
        for (bin, &c) in counts.iter().enumerate() {
            cum += c;
            if 2 * cum >= total {
                median_bin = bin as u8;
                break;
            }
        }
        Ok(Self { counts, median_bin })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn median_bin(&self) -> u8 {
        self.median_bin
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Mass inside an inclusive bin interval.
    pub fn mass(&self, range: Option<BinRange>) -> u64 {
        range.map_or(0, |r| self.counts[r.lo as usize..=r.hi as usize].iter().sum())
    }
}

/// Histogram of a weighted layer where every weight occurrence counts `uses` times.
pub fn layer_histogram(layer: &Layer, uses: u64) -> Result<WeightHistogram> {
    let mac = layer
        .mac()
        .ok_or_else(|| Error::Argument(format!("{} layer carries no weights", layer.kind())))?;
    let mut counts = vec![0u64; 256];
    for &w in mac.weights.values() {
        counts[w as usize] += uses;
    }
    WeightHistogram::from_counts(counts)
}

/// Inclusive interval of weight values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinRange {
    pub lo: u8,
    pub hi: u8,
}

impl BinRange {
    pub fn contains(&self, w: u8) -> bool {
        self.lo <= w && w <= self.hi
    }

    pub fn contains_range(&self, other: &BinRange) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

/// Nested comparator ranges of one layer: `m2 ⊆ m1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerRanges<T> {
    pub m1: Option<BinRange>,
    pub m2: Option<BinRange>,
    /// Achieved fraction of the layer's multiplications routed to M1.
    pub achieved_v1: T,
    /// Achieved fraction routed to M2.
    pub achieved_v2: T,
}

impl<T: Real> LayerRanges<T> {
    pub fn empty() -> Self {
        Self {
            m1: None,
            m2: None,
            achieved_v1: T::zero(),
            achieved_v2: T::zero(),
        }
    }
}

/// `mass / total >= request`, evaluated as `mass >= request * total`.
pub fn meets<T: Real>(mass: u64, total: u64, request: T) -> bool {
    T::from_count(mass) >= request * T::from_count(total)
}

pub(crate) fn check_pair<T: Real>(v1: T, v2: T) -> Result<()> {
    let slack = T::epsilon() * T::lit(4.0);
    let ok = v1 >= T::zero() && v2 >= T::zero() && v1 <= T::one() && v2 <= T::one() && v1 + v2 <= T::one() + slack;
    if ok {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "fractions (v1={v1}, v2={v2}) must be non-negative with v1 + v2 <= 1"
        )))
    }
}

fn next_occupied_below(counts: &[u64], lo: u8) -> Option<u8> {
    (0..lo).rev().find(|&b| counts[b as usize] > 0)
}

fn next_occupied_above(counts: &[u64], hi: u8) -> Option<u8> {
    (hi as usize + 1..256).find(|&b| counts[b] > 0).map(|b| b as u8)
}

/// Grows `anchor` one occupied bin at a time, always toward the heavier
/// neighbour (ties go low), until the request is met; then trims endpoints
/// outside the anchor whose removal keeps the request satisfied.
fn grow<T: Real>(hist: &WeightHistogram, anchor: BinRange, request: T) -> BinRange {
    let counts = hist.counts();
    let total = hist.total();
    let mut r = anchor;
    let mut mass = hist.mass(Some(r));
    while !meets(mass, total, request) {
        let below = next_occupied_below(counts, r.lo);
        let above = next_occupied_above(counts, r.hi);
        let go_low = match (below, above) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(l), Some(h)) => counts[l as usize] >= counts[h as usize],
        };
        if go_low {
            let l = below.unwrap();
            mass += counts[l as usize..r.lo as usize].iter().sum::<u64>();
            r.lo = l;
        } else {
            let h = above.unwrap();
            mass += counts[r.hi as usize + 1..=h as usize].iter().sum::<u64>();
            r.hi = h;
        }
    }
    loop {
        let mut changed = false;
        if r.lo < anchor.lo && meets(mass - counts[r.lo as usize], total, request) {
            mass -= counts[r.lo as usize];
            r.lo += 1;
            changed = true;
        }
        if r.hi > anchor.hi && meets(mass - counts[r.hi as usize], total, request) {
            mass -= counts[r.hi as usize];
            r.hi -= 1;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    r
}

/// Nested M2 ⊆ M1 ranges centred on the histogram median.
///
/// The M2 range is the interval around `median_bin` whose mass fraction first
/// reaches `v2`; the M1 range extends the M2 range until the combined fraction
/// reaches `v1 + v2`. Both are minimal at bin granularity: dropping an endpoint
/// not belonging to the anchor falls below the request.
pub fn ranges_from_fractions<T: Real>(hist: &WeightHistogram, v1: T, v2: T) -> Result<LayerRanges<T>> {
    check_pair(v1, v2)?;
    let total = hist.total();
    let median = BinRange {
        lo: hist.median_bin(),
        hi: hist.median_bin(),
    };
    let m2 = (v2 > T::zero()).then(|| grow(hist, median, v2));
    let combined = v1 + v2;
    let m1 = if combined > T::zero() {
        Some(grow(hist, m2.unwrap_or(median), combined))
    } else {
        None
    };
    let frac = |m: u64| T::from_count(m) / T::from_count(total);
    let m2_mass = hist.mass(m2);
    let m1_mass = hist.mass(m1);
    Ok(LayerRanges {
        m1,
        m2,
        achieved_v1: frac(m1_mass - m2_mass),
        achieved_v2: frac(m2_mass),
    })
}

/// Mode selected by the comparator pair for weight `w`: 2, 1 or 0.
pub fn mode_for_weight<T>(w: u8, ranges: &LayerRanges<T>) -> usize {
    if ranges.m2.is_some_and(|r| r.contains(w)) {
        2
    } else if ranges.m1.is_some_and(|r| r.contains(w)) {
        1
    } else {
        0
    }
}
