use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image stream: {0}")]
    CorruptStream(String),
    #[error("image heights differ: left {left}, right {right}")]
    HeightMismatch { left: u32, right: u32 },
    #[error("image widths differ: top {top}, bottom {bottom}")]
    WidthMismatch { top: u32, bottom: u32 },
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    PixelLength { expected: usize, actual: usize },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("novelty threshold must lie strictly between 0 and 100, got {0}")]
    Threshold(f64),
    #[error("compression level must be 0..=9, got {0}")]
    Level(u32),
    #[error("DEFLATE window is fixed at 32768 bytes, got {0}")]
    Window(u32),
}

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("image is degenerate: too small to anchor a score (self-similarity {baseline} bytes)")]
    DegenerateImage { baseline: i64 },
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("image is degenerate: too small to anchor a score (self-similarity {baseline} bytes)")]
    DegenerateImage { baseline: i64 },
    #[error("image is {got:?} but the session canonical size is {expected:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("session library is empty")]
    EmptySession,
    #[error("no entry with id {0}")]
    UnknownEntry(u64),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("manifest version {found} is not supported (expected {expected})")]
    ManifestVersionMismatch { found: u64, expected: u64 },
}

impl From<SimilarityError> for LibraryError {
    fn from(e: SimilarityError) -> Self {
        match e {
            SimilarityError::Image(e) => LibraryError::Image(e),
            SimilarityError::DegenerateImage { baseline } => LibraryError::DegenerateImage { baseline },
        }
    }
}

impl LibraryError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LibraryError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{images} images but {truths} truth labels (expected equal, or one fewer)")]
    LengthMismatch { images: usize, truths: usize },
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error("malformed report: {0}")]
    Report(String),
}
