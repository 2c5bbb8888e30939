//! Fixed-point percentages.
//!
//! Scores are stored in ten-thousandths of a percent, so a score printed
//! with four decimals reads back as the identical value and threshold
//! comparisons never see floating-point drift.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::ConfigError;

const SCALE: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Score(u32);

impl Score {
    pub const ZERO: Score = Score(0);
    pub const HUNDRED: Score = Score(100 * SCALE);

    /// Rounds half away from zero to four decimals and clamps to `[0, 100]`.
    /// NaN maps to zero.
    pub fn from_percent(p: f64) -> Score {
        if p.is_nan() || p <= 0.0 {
            return Score::ZERO;
        }
        if p >= 100.0 {
            return Score::HUNDRED;
        }
        Score((p * SCALE as f64).round() as u32)
    }

    pub fn from_ten_thousandths(v: u32) -> Score {
        Score(v.min(100 * SCALE))
    }

    pub fn ten_thousandths(self) -> u32 {
        self.0
    }

    pub fn as_percent(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:04}", self.0 / SCALE, self.0 % SCALE)
    }
}

impl std::str::FromStr for Score {
    type Err = std::num::ParseFloatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().trim_end_matches('%').parse::<f64>().map(Score::from_percent)
    }
}

// Serialized as a JSON number with exactly four fractional digits.
impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(self.to_string()).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        if !(0.0..=100.0).contains(&v) {
            return Err(D::Error::custom(format!("score {v} outside [0, 100]")));
        }
        Ok(Score::from_percent(v))
    }
}

/// Normalized-score cutoff below which an image counts as novel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct NoveltyThreshold(Score);

impl NoveltyThreshold {
    pub const DEFAULT_PERCENT: f64 = 40.0;

    pub fn new(percent: f64) -> Result<Self, ConfigError> {
        if !(percent > 0.0 && percent < 100.0) {
            return Err(ConfigError::Threshold(percent));
        }
        let s = Score::from_percent(percent);
        if s == Score::ZERO || s == Score::HUNDRED {
            return Err(ConfigError::Threshold(percent));
        }
        Ok(NoveltyThreshold(s))
    }

    pub fn score(self) -> Score {
        self.0
    }

    pub fn percent(self) -> f64 {
        self.0.as_percent()
    }
}

impl Default for NoveltyThreshold {
    fn default() -> Self {
        NoveltyThreshold(Score::from_percent(Self::DEFAULT_PERCENT))
    }
}

impl fmt::Display for NoveltyThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl<'de> Deserialize<'de> for NoveltyThreshold {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        NoveltyThreshold::new(v).map_err(D::Error::custom)
    }
}
