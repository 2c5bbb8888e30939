//! Compression similarity between two images and its normalized score.
//!
//! The raw similarity of `a` and `b` is `S(a) + S(b) - S(a ⊕ b)`, where
//! `S` is the DEFLATE size of the serialized pixels and `⊕` is the
//! configured juxtaposition. Shared texture lets LZ77 back-references reach
//! across the seam of the joint image, so a large value means similar.
//!
//! The score of a query against a stored image is
//!
//! ```text
//! score = 100 * ln(max(raw, 1)) / ln(baseline)        clamped to [0, 100]
//! ```
//!
//! where `baseline` is the raw similarity of the query with itself. A query
//! compared to an exact copy of itself therefore scores exactly 100.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::compressor::{CompressionProfile, Deflate, SizeOracle};
use crate::error::SimilarityError;
use crate::imagecore::{join, serialize, ImageBuffer, Juxtaposition};
use crate::score::{NoveltyThreshold, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimilarityResult {
    /// Raw similarity in bytes; can be zero or negative for unrelated or tiny images.
    pub raw: i64,
    pub score: Score,
    /// Self-similarity of the query image.
    pub baseline: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    Novel,
    Similar,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Novel => "novel",
            VerdictKind::Similar => "similar",
        }
    }
}

impl std::fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome for one incoming image: its kind, the best prior match (if the
/// library held anything) and that match's score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub best_match: Option<u64>,
    pub score: Score,
}

impl Verdict {
    pub fn new(score: Score, best_match: Option<u64>, threshold: NoveltyThreshold) -> Self {
        Verdict {
            kind: classify(score, threshold),
            best_match,
            score,
        }
    }

    /// Verdict for the first image of an empty library.
    pub fn first() -> Self {
        Verdict {
            kind: VerdictKind::Novel,
            best_match: None,
            score: Score::ZERO,
        }
    }
}

/// Smallest image with a usable self-baseline.
pub const MIN_PIXELS: u64 = 16;

/// Similar iff `score >= threshold`.
pub fn classify(score: Score, threshold: NoveltyThreshold) -> VerdictKind {
    if score >= threshold.score() {
        VerdictKind::Similar
    } else {
        VerdictKind::Novel
    }
}

/// Log-ratio normalization. Total for every integer `raw`; a baseline of 1
/// or less cannot anchor the scale and yields 0.
pub fn normalize(raw: i64, baseline: u64) -> f64 {
    if baseline <= 1 {
        return 0.0;
    }
    if raw >= 0 && raw as u64 >= baseline {
        return 100.0;
    }
    let clamped = raw.max(1) as f64;
    let score = 100.0 * clamped.ln() / (baseline as f64).ln();
    score.clamp(0.0, 100.0)
}

/// Measures images through a size oracle in a fixed joining direction.
#[derive(Clone)]
pub struct Comparator {
    oracle: Arc<dyn SizeOracle>,
    direction: Juxtaposition,
}

impl std::fmt::Debug for Comparator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Comparator")
            .field("direction", &self.direction)
            .finish_non_exhaustive()
    }
}

impl Comparator {
    pub fn new(profile: CompressionProfile, direction: Juxtaposition) -> Self {
        Self::with_oracle(Arc::new(Deflate::new(profile)), direction)
    }

    pub fn with_oracle(oracle: Arc<dyn SizeOracle>, direction: Juxtaposition) -> Self {
        Comparator { oracle, direction }
    }

    pub fn direction(&self) -> Juxtaposition {
        self.direction
    }

    /// `S(img)`.
    pub fn size(&self, img: &ImageBuffer) -> u64 {
        self.oracle.compressed_len(serialize(img)) as u64
    }

    /// `S(a ⊕ b)`.
    pub fn joint_size(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<u64, SimilarityError> {
        let joint = join(a, b, self.direction)?;
        Ok(self.oracle.compressed_len(serialize(&joint.image)) as u64)
    }

    pub fn d_sim_raw(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<i64, SimilarityError> {
        self.d_sim_cached(a, self.size(a), b, self.size(b))
    }

    /// Raw similarity with both single-image sizes already known; only the
    /// joint image is compressed.
    pub fn d_sim_cached(
        &self,
        a: &ImageBuffer,
        size_a: u64,
        b: &ImageBuffer,
        size_b: u64,
    ) -> Result<i64, SimilarityError> {
        let joint = self.joint_size(a, b)?;
        Ok(size_a as i64 + size_b as i64 - joint as i64)
    }

    pub fn self_baseline(&self, img: &ImageBuffer) -> Result<u64, SimilarityError> {
        self.self_baseline_cached(img, self.size(img))
    }

    /// Rejects images whose baseline is at most one byte, and images under
    /// [`MIN_PIXELS`] pixels, where the codec's block framing dominates.
    pub fn self_baseline_cached(&self, img: &ImageBuffer, size: u64) -> Result<u64, SimilarityError> {
        let raw = self.d_sim_cached(img, size, img, size)?;
        let pixels = img.width() as u64 * img.height() as u64;
        if raw <= 1 || pixels < MIN_PIXELS {
            return Err(SimilarityError::DegenerateImage { baseline: raw });
        }
        Ok(raw as u64)
    }

    /// Scores `query` against `reference` using the query's self-baseline.
    pub fn compare(&self, query: &ImageBuffer, reference: &ImageBuffer) -> Result<SimilarityResult, SimilarityError> {
        let size_q = self.size(query);
        let baseline = self.self_baseline_cached(query, size_q)?;
        let raw = self.d_sim_cached(query, size_q, reference, self.size(reference))?;
        Ok(SimilarityResult {
            raw,
            baseline,
            score: Score::from_percent(normalize(raw, baseline)),
        })
    }
}

/// `S(a) + S(b) - S(a ⊕ b)` with left-right joining.
pub fn d_sim_raw(a: &ImageBuffer, b: &ImageBuffer, profile: &CompressionProfile) -> Result<i64, SimilarityError> {
    Comparator::new(*profile, Juxtaposition::LeftRight).d_sim_raw(a, b)
}

pub fn self_baseline(img: &ImageBuffer, profile: &CompressionProfile) -> Result<u64, SimilarityError> {
    Comparator::new(*profile, Juxtaposition::LeftRight).self_baseline(img)
}
