//! Incremental image library.
//!
//! A session starts empty. Every incoming image is scored against each
//! stored image, receives a verdict from its best match, and is then
//! appended whatever the verdict. Single-image sizes are cached at insert,
//! so each comparison compresses only the joint image.
//!
//! On disk a session is a directory holding `manifest.json` and
//! `images/NNNN.png` (lossless copies of the canonical rasters).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compressor::{CompressionProfile, Deflate, SizeOracle};
use crate::error::LibraryError;
use crate::imagecore::{decode, join, resize_nearest, serialize, FormatHint, ImageBuffer, JointImage, Juxtaposition};
use crate::score::{NoveltyThreshold, Score};
use crate::similarity::{normalize, Comparator, Verdict, VerdictKind};

pub const MANIFEST_VERSION: u64 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SessionConfig {
    pub profile: CompressionProfile,
    pub threshold: NoveltyThreshold,
    pub juxtaposition: Juxtaposition,
    /// Fixed canonical size; when unset the first image decides.
    pub canonical_dims: Option<(u32, u32)>,
    /// Score the comparison loop on the rayon pool.
    pub parallel: bool,
}

#[derive(Debug, Clone)]
pub struct LibraryEntry {
    pub id: u64,
    pub source_name: String,
    /// Hex SHA-256 of the serialized pixels.
    pub sha256: String,
    pub dims: (u32, u32),
    /// `S(image)` under the session profile.
    pub cached_size: u64,
    pub verdict: Verdict,
    pub label: Option<String>,
    pub image: Arc<ImageBuffer>,
}

/// Result of ingesting one image.
#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub id: u64,
    pub verdict: Verdict,
    /// Best prior match and its score, absent for the first image.
    pub best: Option<(u64, Score)>,
    /// Incoming image joined with its best match (incoming first).
    pub joint: Option<JointImage>,
}

pub struct Session {
    id: String,
    config: SessionConfig,
    canonical_dims: Option<(u32, u32)>,
    entries: Vec<LibraryEntry>,
    comparator: Comparator,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("config", &self.config)
            .field("canonical_dims", &self.canonical_dims)
            .field("entries", &self.entries.len())
            .finish()
    }
}

pub fn sha256_hex(img: &ImageBuffer) -> String {
    hex::encode(Sha256::digest(serialize(img)))
}

impl Session {
    pub fn new(config: SessionConfig) -> Self {
        let oracle = Arc::new(Deflate::new(config.profile));
        Self::with_oracle(config, oracle)
    }

    /// Session measuring sizes through a caller-supplied oracle.
    pub fn with_oracle(config: SessionConfig, oracle: Arc<dyn SizeOracle>) -> Self {
        Session {
            id: uuid::Uuid::new_v4().simple().to_string(),
            canonical_dims: config.canonical_dims,
            comparator: Comparator::with_oracle(oracle, config.juxtaposition),
            config,
            entries: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn profile(&self) -> CompressionProfile {
        self.config.profile
    }

    pub fn threshold(&self) -> NoveltyThreshold {
        self.config.threshold
    }

    pub fn set_parallel(&mut self, parallel: bool) {
        self.config.parallel = parallel;
    }

    pub fn canonical_dims(&self) -> Option<(u32, u32)> {
        self.canonical_dims
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.entries
    }

    pub fn entry(&self, id: u64) -> Option<&LibraryEntry> {
        // ids are 1-based and dense
        id.checked_sub(1).and_then(|i| self.entries.get(i as usize))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Resizes `img` to the canonical size when one is known.
    pub fn conform(&self, img: ImageBuffer) -> Result<ImageBuffer, LibraryError> {
        match self.canonical_dims {
            Some((w, h)) if img.dims() != (w, h) => Ok(resize_nearest(&img, w, h)?),
            _ => Ok(img),
        }
    }

    fn check_dims(&self, img: &ImageBuffer) -> Result<(), LibraryError> {
        match self.canonical_dims {
            Some(expected) if expected != img.dims() => Err(LibraryError::DimensionMismatch {
                expected,
                got: img.dims(),
            }),
            _ => Ok(()),
        }
    }

    /// Scores `img` against every entry, in id order.
    fn score_all(&self, img: &ImageBuffer, size: u64, baseline: u64) -> Result<Vec<(u64, Score)>, LibraryError> {
        let score_one = |e: &LibraryEntry| -> Result<(u64, Score), LibraryError> {
            let raw = self.comparator.d_sim_cached(img, size, &e.image, e.cached_size)?;
            Ok((e.id, Score::from_percent(normalize(raw, baseline))))
        };
        if self.config.parallel {
            self.entries.par_iter().map(score_one).collect()
        } else {
            self.entries.iter().map(score_one).collect()
        }
    }

    /// Descending ranking of every entry against `img`; equal scores keep
    /// ascending id order.
    pub fn best_match(&self, img: &ImageBuffer) -> Result<Vec<(u64, Score)>, LibraryError> {
        if self.entries.is_empty() {
            return Err(LibraryError::EmptySession);
        }
        self.check_dims(img)?;
        let size = self.comparator.size(img);
        let baseline = self.comparator.self_baseline_cached(img, size)?;
        let mut ranking = self.score_all(img, size, baseline)?;
        ranking.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranking)
    }

    /// Scores `img` against the library, records its verdict and appends it.
    /// `img` must already have the canonical size (see [`Session::conform`]).
    pub fn ingest(&mut self, img: ImageBuffer, name: impl Into<String>) -> Result<IngestOutcome, LibraryError> {
        self.check_dims(&img)?;
        let size = self.comparator.size(&img);
        let baseline = self.comparator.self_baseline_cached(&img, size)?;
        let scores = self.score_all(&img, size, baseline)?;

        let mut best: Option<(u64, Score)> = None;
        for &(id, score) in &scores {
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((id, score));
            }
        }

        let id = self.entries.len() as u64 + 1;
        let (verdict, joint) = match best {
            None => (Verdict::first(), None),
            Some((best_id, score)) => {
                let other = &self.entry(best_id).expect("ranked ids exist").image;
                let joint = join(&img, other, self.config.juxtaposition)?.with_sources(id, best_id);
                (Verdict::new(score, Some(best_id), self.config.threshold), Some(joint))
            }
        };

        if self.canonical_dims.is_none() {
            self.canonical_dims = Some(img.dims());
        }
        self.entries.push(LibraryEntry {
            id,
            source_name: name.into(),
            sha256: sha256_hex(&img),
            dims: img.dims(),
            cached_size: size,
            verdict,
            label: None,
            image: Arc::new(img),
        });
        Ok(IngestOutcome {
            id,
            verdict,
            best,
            joint,
        })
    }

    /// Post-hoc annotation; has no effect on scoring.
    pub fn set_label(&mut self, id: u64, label: Option<String>) -> Result<(), LibraryError> {
        let idx = id
            .checked_sub(1)
            .filter(|i| (*i as usize) < self.entries.len())
            .ok_or(LibraryError::UnknownEntry(id))?;
        self.entries[idx as usize].label = label;
        Ok(())
    }

    /// Joined image of `id` and its recorded best match, rebuilt from the
    /// stored rasters.
    pub fn pair(&self, id: u64) -> Option<JointImage> {
        let e = self.entry(id)?;
        let m = self.entry(e.verdict.best_match?)?;
        join(&e.image, &m.image, self.config.juxtaposition)
            .ok()
            .map(|j| j.with_sources(e.id, m.id))
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            version: MANIFEST_VERSION,
            profile: self.config.profile,
            threshold: self.config.threshold,
            juxtaposition: self.config.juxtaposition,
            canonical_dims: self.canonical_dims.map(|(w, h)| [w, h]),
            entries: self
                .entries
                .iter()
                .map(|e| EntryRecord {
                    id: e.id,
                    name: e.source_name.clone(),
                    sha256: e.sha256.clone(),
                    width: e.dims.0,
                    height: e.dims.1,
                    size: e.cached_size,
                    verdict: e.verdict.kind,
                    score: e.verdict.score,
                    best_match_id: e.verdict.best_match,
                    label: e.label.clone(),
                })
                .collect(),
        }
    }

    /// Writes the manifest and any image files not already present.
    pub fn save(&self, dir: &Path) -> Result<(), LibraryError> {
        let images = dir.join("images");
        fs::create_dir_all(&images).map_err(|e| LibraryError::io(&images, e))?;
        for e in &self.entries {
            let path = image_path(dir, e.id);
            if !path.exists() {
                fs::write(&path, e.image.to_png()).map_err(|err| LibraryError::io(&path, err))?;
            }
        }
        let json = self.manifest().to_json();
        let tmp = dir.join("manifest.json.tmp");
        fs::write(&tmp, json).map_err(|e| LibraryError::io(&tmp, e))?;
        let dst = dir.join(MANIFEST_FILE);
        fs::rename(&tmp, &dst).map_err(|e| LibraryError::io(&dst, e))
    }

    /// Restores a saved session. The session id becomes the directory name.
    pub fn load(dir: &Path) -> Result<Session, LibraryError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| LibraryError::io(&path, e))?;
        let manifest = Manifest::from_json(&text).map_err(|e| match e {
            ManifestParseError::Version(found) => LibraryError::ManifestVersionMismatch {
                found,
                expected: MANIFEST_VERSION,
            },
            ManifestParseError::Json(message) => LibraryError::Manifest {
                path: path.clone(),
                message,
            },
        })?;

        let config = SessionConfig {
            profile: manifest.profile,
            threshold: manifest.threshold,
            juxtaposition: manifest.juxtaposition,
            canonical_dims: None,
            parallel: false,
        };
        let mut session = Session::new(config);
        session.canonical_dims = manifest.canonical_dims.map(|[w, h]| (w, h));
        if let Some(name) = dir.file_name().and_then(|n| n.to_str()) {
            session.id = name.to_string();
        }

        for (i, r) in manifest.entries.into_iter().enumerate() {
            let bad = |message: String| LibraryError::Manifest {
                path: path.clone(),
                message,
            };
            if r.id != i as u64 + 1 {
                return Err(bad(format!("entry {} has id {}, expected {}", i, r.id, i + 1)));
            }
            let img_path = image_path(dir, r.id);
            let bytes = fs::read(&img_path).map_err(|e| LibraryError::io(&img_path, e))?;
            let image = decode(&bytes, FormatHint::Png)?;
            if image.dims() != (r.width, r.height) {
                return Err(bad(format!(
                    "{} is {:?}, manifest says {}x{}",
                    img_path.display(),
                    image.dims(),
                    r.width,
                    r.height
                )));
            }
            let digest = sha256_hex(&image);
            if digest != r.sha256 {
                return Err(bad(format!(
                    "{} does not match its recorded sha256",
                    img_path.display()
                )));
            }
            if r.best_match_id.is_some_and(|m| m == 0 || m >= r.id) {
                return Err(bad(format!("entry {} names an invalid best match", r.id)));
            }
            session.entries.push(LibraryEntry {
                id: r.id,
                source_name: r.name,
                sha256: r.sha256,
                dims: (r.width, r.height),
                cached_size: r.size,
                verdict: Verdict {
                    kind: r.verdict,
                    best_match: r.best_match_id,
                    score: r.score,
                },
                label: r.label,
                image: Arc::new(image),
            });
        }
        Ok(session)
    }
}

pub fn image_path(dir: &Path, id: u64) -> PathBuf {
    dir.join("images").join(format!("{id:04}.png"))
}

pub fn pair_path(dir: &Path, id: u64) -> PathBuf {
    dir.join("pairs").join(format!("{id:04}.png"))
}

/// Persisted form of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u64,
    pub profile: CompressionProfile,
    pub threshold: NoveltyThreshold,
    pub juxtaposition: Juxtaposition,
    pub canonical_dims: Option<[u32; 2]>,
    pub entries: Vec<EntryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub id: u64,
    pub name: String,
    pub sha256: String,
    pub width: u32,
    pub height: u32,
    pub size: u64,
    pub verdict: VerdictKind,
    pub score: Score,
    pub best_match_id: Option<u64>,
    pub label: Option<String>,
}

#[derive(Debug)]
pub enum ManifestParseError {
    Version(u64),
    Json(String),
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Manifest, ManifestParseError> {
        #[derive(Deserialize)]
        struct Probe {
            version: u64,
        }
        let probe: Probe = serde_json::from_str(text).map_err(|e| ManifestParseError::Json(e.to_string()))?;
        if probe.version != MANIFEST_VERSION {
            return Err(ManifestParseError::Version(probe.version));
        }
        serde_json::from_str(text).map_err(|e| ManifestParseError::Json(e.to_string()))
    }
}
