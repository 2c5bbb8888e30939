//! Compression-based image similarity and novelty detection.
//!
//! Two images are similar when DEFLATE compresses them jointly much better
//! than separately. An incoming image is scored against every image seen so
//! far; when no prior image reaches the novelty threshold the image is
//! novel.
//!
//! ```no_run
//! use outcrop_core::library::{Session, SessionConfig};
//! use outcrop_core::texgen::default_corpus;
//!
//! let mut session = Session::new(SessionConfig::default());
//! for item in default_corpus() {
//!     let out = session.ingest(item.image, item.name).unwrap();
//!     println!("{} {} {}", out.id, out.verdict.kind, out.verdict.score);
//! }
//! ```

pub mod compressor;
pub mod error;
pub mod evaluation;
pub mod imagecore;
pub mod library;
pub mod score;
pub mod similarity;
pub mod texgen;

pub use compressor::{CompressionProfile, Container, Deflate, SizeOracle};
pub use error::{ConfigError, EvalError, ImageError, LibraryError, SimilarityError};
pub use imagecore::{ImageBuffer, JointImage, Juxtaposition};
pub use library::{Session, SessionConfig};
pub use score::{NoveltyThreshold, Score};
pub use similarity::{Comparator, SimilarityResult, Verdict, VerdictKind};
