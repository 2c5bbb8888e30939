//! The size oracle: DEFLATE-compress a byte stream and report how many bytes
//! came out.
//!
//! Backed by `flate2` (pure-Rust `miniz_oxide` backend). Output is written
//! into a counting sink, so no compressed buffer is ever materialized.

use std::io::{self, Write};

use flate2::write::{DeflateEncoder, GzEncoder};
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// LZ77 back-reference window of DEFLATE. Not configurable.
pub const WINDOW_BYTES: u32 = 32 * 1024;

pub const DEFAULT_LEVEL: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Container {
    /// Raw RFC 1951 payload only.
    #[default]
    None,
    /// Payload plus the fixed 10-byte gzip header and 8-byte trailer.
    Gzip,
}

/// Parameters of the size oracle. Only DEFLATE with a 32 KiB window exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct CompressionProfile {
    level: u32,
    container: Container,
}

impl Default for CompressionProfile {
    fn default() -> Self {
        Self {
            level: DEFAULT_LEVEL,
            container: Container::None,
        }
    }
}

impl CompressionProfile {
    pub fn new(level: u32, container: Container) -> Result<Self, ConfigError> {
        if level > 9 {
            return Err(ConfigError::Level(level));
        }
        Ok(Self { level, container })
    }

    pub fn with_level(level: u32) -> Result<Self, ConfigError> {
        Self::new(level, Container::None)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn container(&self) -> Container {
        self.container
    }

    pub fn window(&self) -> u32 {
        WINDOW_BYTES
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr {
    algorithm: String,
    window: u32,
    level: u32,
    container: Container,
}

impl From<CompressionProfile> for ProfileRepr {
    fn from(p: CompressionProfile) -> Self {
        ProfileRepr {
            algorithm: "deflate".into(),
            window: WINDOW_BYTES,
            level: p.level,
            container: p.container,
        }
    }
}

impl TryFrom<ProfileRepr> for CompressionProfile {
    type Error = String;

    fn try_from(r: ProfileRepr) -> Result<Self, Self::Error> {
        if r.algorithm != "deflate" {
            return Err(format!("unsupported algorithm {:?}", r.algorithm));
        }
        if r.window != WINDOW_BYTES {
            return Err(ConfigError::Window(r.window).to_string());
        }
        CompressionProfile::new(r.level, r.container).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeReport {
    pub input_len: usize,
    pub compressed_len: usize,
}

/// Anything that can measure compressed size. The library talks to the
/// compressor through this trait so tests can count calls.
pub trait SizeOracle: Send + Sync {
    fn compressed_len(&self, stream: &[u8]) -> usize;
}

/// The DEFLATE oracle for a fixed profile.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deflate {
    profile: CompressionProfile,
}

impl Deflate {
    pub fn new(profile: CompressionProfile) -> Self {
        Self { profile }
    }

    pub fn profile(&self) -> CompressionProfile {
        self.profile
    }
}

impl SizeOracle for Deflate {
    fn compressed_len(&self, stream: &[u8]) -> usize {
        compressed_size(stream, &self.profile).compressed_len
    }
}

#[derive(Default)]
struct CountingSink(usize);

impl Write for CountingSink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0 += buf.len();
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Compressed size of `stream` under `profile`. Deterministic.
pub fn compressed_size(stream: &[u8], profile: &CompressionProfile) -> SizeReport {
    let level = Compression::new(profile.level);
    // Writes into CountingSink cannot fail.
    let compressed_len = match profile.container {
        Container::None => {
            let mut enc = DeflateEncoder::new(CountingSink::default(), level);
            enc.write_all(stream).expect("counting sink is infallible");
            enc.finish().expect("counting sink is infallible").0
        }
        Container::Gzip => {
            let mut enc = GzEncoder::new(CountingSink::default(), level);
            enc.write_all(stream).expect("counting sink is infallible");
            enc.finish().expect("counting sink is infallible").0
        }
    };
    SizeReport {
        input_len: stream.len(),
        compressed_len,
    }
}
