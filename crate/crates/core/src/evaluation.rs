//! Corpus evaluation: per-image match records and the novelty/similarity
//! confusion matrix.
//!
//! The first image of a corpus seeds an empty library and has nothing to be
//! compared with, so it appears in the records but not in the counts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, LibraryError};
use crate::imagecore::{decode, FormatHint, ImageBuffer};
use crate::library::{Manifest, Session, SessionConfig};
use crate::score::{NoveltyThreshold, Score};

/// Human judgement of an incoming image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthLabel {
    Novel,
    Similar,
    /// Neither novel nor similar to its best match.
    Different,
}

impl TruthLabel {
    fn column(self) -> usize {
        match self {
            TruthLabel::Novel => 0,
            TruthLabel::Similar => 1,
            TruthLabel::Different => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TruthLabel::Novel => "novel",
            TruthLabel::Similar => "similar",
            TruthLabel::Different => "different",
        }
    }
}

impl std::str::FromStr for TruthLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "novel" => Ok(TruthLabel::Novel),
            "similar" => Ok(TruthLabel::Similar),
            "different" => Ok(TruthLabel::Different),
            other => Err(format!("unknown truth label {other:?}")),
        }
    }
}

/// Binary prediction by threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prediction {
    #[serde(rename = "novel-or-different")]
    NovelOrDifferent,
    #[serde(rename = "similar")]
    Similar,
}

impl Prediction {
    pub fn from_score(score: Score, threshold: NoveltyThreshold) -> Self {
        if score >= threshold.score() {
            Prediction::Similar
        } else {
            Prediction::NovelOrDifferent
        }
    }

    fn row(self) -> usize {
        match self {
            Prediction::NovelOrDifferent => 0,
            Prediction::Similar => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Prediction::NovelOrDifferent => "novel-or-different",
            Prediction::Similar => "similar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub incoming_id: u64,
    pub name: String,
    pub matched_id: Option<u64>,
    pub score: Score,
    pub predicted: Prediction,
    pub truth: Option<TruthLabel>,
    pub note: String,
}

/// Rows: predicted below / at-or-above threshold. Columns: truth novel,
/// similar, different.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionCounts(pub [[u64; 3]; 2]);

impl ConfusionCounts {
    pub fn column_sum(&self, col: usize) -> u64 {
        self.0[0][col] + self.0[1][col]
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        self.0[row].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.row_sum(0) + self.row_sum(1)
    }

    pub fn add(&mut self, predicted: Prediction, truth: TruthLabel) {
        self.0[predicted.row()][truth.column()] += 1;
    }
}

/// `correct / total`, undefined when `total` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn ratio(self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    /// Whole percent, rounded half away from zero in exact integer arithmetic.
    pub fn percent(self) -> Option<u64> {
        (self.total > 0).then(|| (200 * self.correct + self.total) / (2 * self.total))
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.percent() {
            Some(p) => write!(f, "{}/{} = {}%", self.correct, self.total, p),
            None => write!(f, "{}/{} = undefined", self.correct, self.total),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub counts: ConfusionCounts,
    pub novelty: Accuracy,
    pub similarity: Accuracy,
    pub difference: Accuracy,
    pub overall: Accuracy,
}

pub fn summarize(counts: ConfusionCounts) -> ConfusionSummary {
    let c = counts.0;
    let novelty = Accuracy {
        correct: c[0][0],
        total: counts.column_sum(0),
    };
    let similarity = Accuracy {
        correct: c[1][1],
        total: counts.column_sum(1),
    };
    let difference = Accuracy {
        correct: c[0][2],
        total: counts.column_sum(2),
    };
    let overall = Accuracy {
        correct: novelty.correct + similarity.correct + difference.correct,
        total: counts.total(),
    };
    ConfusionSummary {
        counts,
        novelty,
        similarity,
        difference,
        overall,
    }
}

impl ConfusionSummary {
    /// The four accuracy lines.
    pub fn lines(&self) -> [String; 4] {
        [
            format!("Accuracy of Novelty detection: {}", self.novelty),
            format!("Accuracy of Similarity detection: {}", self.similarity),
            format!("Accuracy of Difference detection: {}", self.difference),
            format!("Overall accuracy: {}", self.overall),
        ]
    }
}

/// Counts every labeled record except the seed image.
pub fn tally(records: &[EvalRecord]) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for r in records.iter().skip(1) {
        if let Some(t) = r.truth {
            counts.add(r.predicted, t);
        }
    }
    counts
}

/// Re-derives predictions under another threshold. Scores are untouched.
pub fn rethreshold(records: &[EvalRecord], threshold: NoveltyThreshold) -> Vec<EvalRecord> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| EvalRecord {
            predicted: if i == 0 {
                Prediction::NovelOrDifferent
            } else {
                Prediction::from_score(r.score, threshold)
            },
            ..r.clone()
        })
        .collect()
}

/// Confusion summary at each threshold, from stored scores only.
pub fn sweep(
    records: &[EvalRecord],
    thresholds: impl IntoIterator<Item = NoveltyThreshold>,
) -> Vec<(NoveltyThreshold, ConfusionSummary)> {
    thresholds
        .into_iter()
        .map(|t| (t, summarize(tally(&rethreshold(records, t)))))
        .collect()
}

/// Whole-percent thresholds 1 to 99.
pub fn percent_grid() -> impl Iterator<Item = NoveltyThreshold> {
    (1..100).map(|p| NoveltyThreshold::new(p as f64).expect("1..=99 is a valid threshold"))
}

/// Records of a stored session. Labels that name a truth class
/// (`novel`, `similar`, `different`) are used as truth.
pub fn records_from_manifest(manifest: &Manifest) -> Vec<EvalRecord> {
    manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let predicted = if i == 0 {
                Prediction::NovelOrDifferent
            } else {
                Prediction::from_score(e.score, manifest.threshold)
            };
            EvalRecord {
                incoming_id: e.id,
                name: e.name.clone(),
                matched_id: e.best_match_id,
                score: e.score,
                predicted,
                truth: e.label.as_deref().and_then(|l| l.parse().ok()),
                note: String::new(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: NoveltyThreshold,
    pub records: Vec<EvalRecord>,
    /// Absent when the corpus carries no truth labels.
    pub summary: Option<ConfusionSummary>,
}

impl EvalReport {
    pub fn from_records(records: Vec<EvalRecord>, threshold: NoveltyThreshold) -> Self {
        let labeled = records.iter().skip(1).any(|r| r.truth.is_some());
        let summary = labeled.then(|| summarize(tally(&records)));
        EvalReport {
            threshold,
            records,
            summary,
        }
    }

    pub fn at_threshold(&self, threshold: NoveltyThreshold) -> EvalReport {
        EvalReport::from_records(rethreshold(&self.records, threshold), threshold)
    }
}

/// One image to feed through a session.
#[derive(Debug, Clone)]
pub struct NamedImage {
    pub name: String,
    pub image: ImageBuffer,
    pub label: Option<String>,
    pub note: Option<String>,
}

impl NamedImage {
    pub fn new(name: impl Into<String>, image: ImageBuffer) -> Self {
        NamedImage {
            name: name.into(),
            image,
            label: None,
            note: None,
        }
    }
}

/// Ingests `images` in order into a fresh session and records each verdict.
///
/// `truths` may cover every image or every image but the first.
pub fn run_corpus(
    images: &[NamedImage],
    truths: Option<&[TruthLabel]>,
    config: SessionConfig,
) -> Result<(EvalReport, Session), EvalError> {
    let aligned: Vec<Option<TruthLabel>> = match truths {
        None => vec![None; images.len()],
        Some(t) if t.len() == images.len() => t.iter().copied().map(Some).collect(),
        Some(t) if !images.is_empty() && t.len() + 1 == images.len() => {
            std::iter::once(None).chain(t.iter().copied().map(Some)).collect()
        }
        Some(t) => {
            return Err(EvalError::LengthMismatch {
                images: images.len(),
                truths: t.len(),
            })
        }
    };

    let mut session = Session::new(config);
    let threshold = config.threshold;
    let mut records = Vec::with_capacity(images.len());
    for (item, truth) in images.iter().zip(aligned) {
        let img = session.conform(item.image.clone())?;
        let out = session.ingest(img, item.name.clone())?;
        if item.label.is_some() {
            session.set_label(out.id, item.label.clone())?;
        }
        let first = out.best.is_none();
        let predicted = if first {
            Prediction::NovelOrDifferent
        } else {
            Prediction::from_score(out.verdict.score, threshold)
        };
        let note = match &item.note {
            Some(n) => n.clone(),
            None if first => "seed image, empty library".to_string(),
            None => auto_note(predicted, truth),
        };
        records.push(EvalRecord {
            incoming_id: out.id,
            name: item.name.clone(),
            matched_id: out.verdict.best_match,
            score: out.verdict.score,
            predicted,
            truth,
            note,
        });
    }
    Ok((EvalReport::from_records(records, threshold), session))
}

fn auto_note(predicted: Prediction, truth: Option<TruthLabel>) -> String {
    match (predicted, truth) {
        (Prediction::Similar, Some(TruthLabel::Novel)) => "novel image scored above threshold".into(),
        (Prediction::Similar, Some(TruthLabel::Different)) => "different image scored above threshold".into(),
        (Prediction::NovelOrDifferent, Some(TruthLabel::Similar)) => "similar image scored below threshold".into(),
        _ => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
    Tsv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "tsv" => Ok(ReportFormat::Tsv),
            other => Err(format!("unknown format {other:?} (expected text, json, csv or tsv)")),
        }
    }
}

const COLUMNS: [&str; 6] = ["incoming_id", "matched_id", "score", "predicted", "truth", "note"];

fn row_fields(r: &EvalRecord) -> [String; 6] {
    [
        r.incoming_id.to_string(),
        r.matched_id.map_or_else(|| "-".to_string(), |m| m.to_string()),
        r.score.to_string(),
        r.predicted.as_str().to_string(),
        r.truth.map_or("-", TruthLabel::as_str).to_string(),
        r.note.clone(),
    ]
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv | ReportFormat::Tsv => {
            let delim = if format == ReportFormat::Csv { b',' } else { b'\t' };
            let mut w = csv::WriterBuilder::new().delimiter(delim).from_writer(Vec::new());
            w.write_record(COLUMNS).expect("in-memory write");
            for r in &report.records {
                w.write_record(row_fields(r)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
        }
        ReportFormat::Text => {
            let mut out = format!("threshold: {}%\n", report.threshold);
            out.push_str(&format!(
                "{:>8}  {:>8}  {:>9}  {:<18}  {:<9}  {}\n",
                "incoming", "matched", "score", "predicted", "truth", "note"
            ));
            for r in &report.records {
                let f = row_fields(r);
                let line = format!(
                    "{:>8}  {:>8}  {:>9}  {:<18}  {:<9}  {}",
                    f[0], f[1], f[2], f[3], f[4], f[5]
                );
                out.push_str(line.trim_end());
                out.push('\n');
            }
            if let Some(summary) = &report.summary {
                out.push('\n');
                out.push_str(&render_summary(summary));
            }
            out
        }
    }
}

/// The four accuracy lines, newline-terminated.
pub fn render_summary(summary: &ConfusionSummary) -> String {
    summary.lines().iter().map(|l| format!("{l}\n")).collect()
}

pub fn load_report_json(text: &str) -> Result<EvalReport, EvalError> {
    serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))
}

pub const CORPUS_VERSION: u64 = 1;

/// Ordered list of images to evaluate, stored as JSON next to the images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u64,
    pub images: Vec<CorpusEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A decoded corpus, ready for [`run_corpus`].
#[derive(Debug, Clone)]
pub struct Corpus {
    pub images: Vec<NamedImage>,
    pub truths: Option<Vec<TruthLabel>>,
}

impl Corpus {
    pub fn load(manifest_path: &Path) -> Result<Corpus, LibraryError> {
        let bad = |message: String| LibraryError::Manifest {
            path: manifest_path.to_path_buf(),
            message,
        };
        let text = fs::read_to_string(manifest_path).map_err(|e| LibraryError::io(manifest_path, e))?;
        let manifest: CorpusManifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if manifest.version != CORPUS_VERSION {
            return Err(LibraryError::ManifestVersionMismatch {
                found: manifest.version,
                expected: CORPUS_VERSION,
            });
        }
        let root = manifest_path.parent().unwrap_or(Path::new("."));

        let mut images = Vec::with_capacity(manifest.images.len());
        for e in &manifest.images {
            let path = root.join(&e.path);
            let bytes = fs::read(&path).map_err(|err| LibraryError::io(&path, err))?;
            let ext = path.extension().and_then(|x| x.to_str()).unwrap_or("");
            let image = decode(&bytes, FormatHint::from_extension(ext))?;
            let name = e.name.clone().unwrap_or_else(|| {
                path.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            images.push(NamedImage {
                name,
                image,
                label: e.label.clone(),
                note: e.note.clone(),
            });
        }

        let present: Vec<bool> = manifest.images.iter().map(|e| e.truth.is_some()).collect();
        let truths = if present.iter().all(|p| !p) {
            None
        } else if present.iter().skip(1).all(|p| *p) {
            // the seed image's truth is optional
            Some(manifest.images.iter().filter_map(|e| e.truth).collect())
        } else {
            return Err(bad("truth labels must cover every image after the first".into()));
        };
        Ok(Corpus { images, truths })
    }
}
