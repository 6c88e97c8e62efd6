//! Dose-volume histogram features for a single organ.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// The VX percent levels carried for every organ: 5, 10, ..., 95.
pub const VX_LEVELS: [u8; 19] = [
    5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80, 85, 90, 95,
];

/// A per-organ dose feature: a VX level, the mean dose, or the maximum dose.
///
/// The derived ordering is the canonical column order: V5 < V10 < ... < V95 < mean < max.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKey {
    V(u8),
    Mean,
    Max,
}

impl FeatureKey {
    /// All 21 keys in canonical order.
    pub fn all() -> impl Iterator<Item = FeatureKey> {
        VX_LEVELS
            .iter()
            .map(|&x| FeatureKey::V(x))
            .chain([FeatureKey::Mean, FeatureKey::Max])
    }

    pub fn vx(level: u8) -> Result<FeatureKey> {
        check_vx_level(level)?;
        Ok(FeatureKey::V(level))
    }
}

pub(crate) fn check_vx_level(level: u8) -> Result<()> {
    if level % 5 == 0 && (5..=95).contains(&level) {
        Ok(())
    } else {
        Err(Error::invalid(
            "x",
            format!("VX level must be one of 5, 10, ..., 95 (got {level})"),
        ))
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKey::V(x) => write!(f, "V{x}"),
            FeatureKey::Mean => f.write_str("mean"),
            FeatureKey::Max => f.write_str("max"),
        }
    }
}

impl FromStr for FeatureKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(FeatureKey::Mean),
            "max" => Ok(FeatureKey::Max),
            _ => {
                let level = s
                    .strip_prefix('V')
                    .and_then(|rest| rest.parse::<u8>().ok())
                    .ok_or_else(|| Error::unknown("feature", s))?;
                FeatureKey::vx(level).map_err(|_| Error::unknown("feature", s))
            }
        }
    }
}

impl Serialize for FeatureKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The dose `d` (Gy) such that at least `x` percent of the samples receive `>= d`,
/// taking the largest such `d`.
///
/// Sorting descending and taking the `ceil(x/100 * n)`-th sample gives exactly that
/// value without interpolation.
pub fn vx_from_dose_samples(samples: &[f64], x: u8) -> Result<f64> {
    check_vx_level(x)?;
    let sorted = sorted_descending(samples)?;
    Ok(vx_from_sorted(&sorted, x))
}

fn sorted_descending(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::invalid("samples", "dose sample list is empty"));
    }
    if let Some(bad) = samples.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid(
            "samples",
            format!("dose samples must be finite and non-negative (got {bad})"),
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted)
}

fn vx_from_sorted(sorted_desc: &[f64], x: u8) -> f64 {
    let n = sorted_desc.len();
    let rank = (x as usize * n).div_ceil(100).max(1);
    sorted_desc[rank - 1]
}

/// The 21 DVH features of one organ for one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganDvh {
    vx: [f64; 19],
    mean: f64,
    max: f64,
}

impl OrganDvh {
    /// Builds a record from explicit values, checking non-negativity and VX monotonicity.
    /// `vx` is indexed like [`VX_LEVELS`].
    pub fn new(vx: [f64; 19], mean: f64, max: f64) -> Result<Self> {
        let dvh = OrganDvh { vx, mean, max };
        dvh.validate("", "")?;
        Ok(dvh)
    }

    /// Reduces voxel dose samples to DVH features.
    pub fn from_dose_samples(samples: &[f64]) -> Result<Self> {
        let sorted = sorted_descending(samples)?;
        let mut vx = [0.0; 19];
        for (slot, &level) in vx.iter_mut().zip(VX_LEVELS.iter()) {
            *slot = vx_from_sorted(&sorted, level);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Ok(OrganDvh {
            vx,
            mean,
            max: sorted[0],
        })
    }

    pub fn get(&self, key: FeatureKey) -> f64 {
        match key {
            FeatureKey::V(x) => self.vx[(x / 5 - 1) as usize],
            FeatureKey::Mean => self.mean,
            FeatureKey::Max => self.max,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn vx_values(&self) -> &[f64; 19] {
        &self.vx
    }

    /// `(key, value)` pairs in canonical order.
    pub fn entries(&self) -> impl Iterator<Item = (FeatureKey, f64)> + '_ {
        FeatureKey::all().map(move |k| (k, self.get(k)))
    }

    pub(crate) fn validate(&self, patient: &str, organ: &str) -> Result<()> {
        for (key, value) in self.entries() {
            if !value.is_finite() {
                return Err(Error::Schema {
                    location: format!("{organ}__{key}"),
                    message: format!("dose is not a finite number for patient {patient:?}"),
                });
            }
            if value < 0.0 {
                return Err(Error::NegativeDose {
                    patient: patient.to_string(),
                    field: format!("{organ}__{key}"),
                    value,
                });
            }
        }
        for (i, pair) in self.vx.windows(2).enumerate() {
            if pair[1] > pair[0] {
                return Err(Error::Monotonicity {
                    patient: patient.to_string(),
                    organ: organ.to_string(),
                    detail: format!(
                        "V{} = {} exceeds V{} = {}",
                        VX_LEVELS[i + 1],
                        pair[1],
                        VX_LEVELS[i],
                        pair[0]
                    ),
                });
            }
        }
        Ok(())
    }

    /// Unchecked constructor used by the readers, which validate with row context afterwards.
    pub(crate) fn from_parts(vx: [f64; 19], mean: f64, max: f64) -> Self {
        OrganDvh { vx, mean, max }
    }
}
