//! Raw RGB rasters, the byte stream the compressor sees, and joint images.
//!
//! Every image is held as row-major interleaved RGB8 with no header or
//! padding. That layout is also the serialized form, so a left-right joint
//! image places scan line `r` of both sources next to each other: at
//! 1280 px a joint row is 7680 bytes, well inside the 32 KiB DEFLATE window.

use std::io::Cursor;

use image::{ImageFormat, ImageReader, RgbImage};

use crate::error::ImageError;

/// Decoded RGB8 raster.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("bytes", &self.pixels.len())
            .finish()
    }
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(ImageError::PixelLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    /// Image filled with a single color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let n = width as usize * height as usize;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, pixels)
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn row(&self, y: u32) -> &[u8] {
        let stride = self.width as usize * 3;
        let start = y as usize * stride;
        &self.pixels[start..start + stride]
    }

    /// Encodes the raster as a lossless PNG.
    pub fn to_png(&self) -> Vec<u8> {
        let img = RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("pixel length checked at construction");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        out.into_inner()
    }
}

/// Container format of an encoded image file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatHint {
    Png,
    Jpeg,
    /// Sniff the format from the magic bytes.
    Detect,
}

impl FormatHint {
    /// Guess from a file extension; unknown extensions fall back to sniffing.
    pub fn from_extension(ext: &str) -> Self {
        match ext.to_ascii_lowercase().as_str() {
            "png" => FormatHint::Png,
            "jpg" | "jpeg" => FormatHint::Jpeg,
            _ => FormatHint::Detect,
        }
    }
}

/// Decodes a PNG or JPEG stream into canonical RGB8. Alpha is dropped and
/// grayscale is expanded to three channels.
pub fn decode(bytes: &[u8], hint: FormatHint) -> Result<ImageBuffer, ImageError> {
    let format = match hint {
        FormatHint::Png => ImageFormat::Png,
        FormatHint::Jpeg => ImageFormat::Jpeg,
        FormatHint::Detect => match image::guess_format(bytes) {
            Ok(f @ (ImageFormat::Png | ImageFormat::Jpeg)) => f,
            Ok(other) => return Err(ImageError::UnsupportedFormat(format!("{other:?}"))),
            Err(_) if looks_truncated(bytes) => {
                return Err(ImageError::CorruptStream("stream too short to identify".into()))
            }
            Err(_) => return Err(ImageError::UnsupportedFormat("unrecognized signature".into())),
        },
    };
    let reader = ImageReader::with_format(Cursor::new(bytes), format);
    let decoded = reader.decode().map_err(|e| ImageError::CorruptStream(e.to_string()))?;
    let rgb = decoded.into_rgb8();
    let (w, h) = rgb.dimensions();
    ImageBuffer::new(w, h, rgb.into_raw())
}

// A prefix of a PNG or JPEG signature is a damaged file, not a foreign format.
fn looks_truncated(bytes: &[u8]) -> bool {
    const PNG_SIG: &[u8] = b"\x89PNG\r\n\x1a\n";
    const JPEG_SIG: &[u8] = &[0xFF, 0xD8, 0xFF];
    let n = bytes.len();
    (n < PNG_SIG.len() && PNG_SIG.starts_with(bytes)) || (n < JPEG_SIG.len() && JPEG_SIG.starts_with(bytes))
}

/// The compressor input: row-major interleaved RGB8, `w * h * 3` bytes.
pub fn serialize(img: &ImageBuffer) -> &[u8] {
    &img.pixels
}

/// Direction in which two images are joined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub enum Juxtaposition {
    #[default]
    #[serde(rename = "lr")]
    LeftRight,
    #[serde(rename = "tb")]
    TopBottom,
}

impl std::str::FromStr for Juxtaposition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lr" | "left-right" => Ok(Juxtaposition::LeftRight),
            "tb" | "top-bottom" => Ok(Juxtaposition::TopBottom),
            other => Err(format!("unknown juxtaposition {other:?} (expected lr or tb)")),
        }
    }
}

/// A joined pair of images plus the ids of its two sources when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointImage {
    pub image: ImageBuffer,
    pub sources: Option<(u64, u64)>,
}

impl JointImage {
    pub fn with_sources(mut self, first: u64, second: u64) -> Self {
        self.sources = Some((first, second));
        self
    }
}

/// Joins `left` and `right` side by side. Output row `r` is left's row `r`
/// immediately followed by right's row `r`.
pub fn juxtapose(left: &ImageBuffer, right: &ImageBuffer) -> Result<JointImage, ImageError> {
    if left.height != right.height {
        return Err(ImageError::HeightMismatch {
            left: left.height,
            right: right.height,
        });
    }
    let mut pixels = Vec::with_capacity(left.pixels.len() + right.pixels.len());
    for y in 0..left.height {
        pixels.extend_from_slice(left.row(y));
        pixels.extend_from_slice(right.row(y));
    }
    Ok(JointImage {
        image: ImageBuffer::new(left.width + right.width, left.height, pixels)?,
        sources: None,
    })
}

/// Stacks `top` above `bottom`. Widths must agree.
pub fn juxtapose_vertical(top: &ImageBuffer, bottom: &ImageBuffer) -> Result<JointImage, ImageError> {
    if top.width != bottom.width {
        return Err(ImageError::WidthMismatch {
            top: top.width,
            bottom: bottom.width,
        });
    }
    let mut pixels = Vec::with_capacity(top.pixels.len() + bottom.pixels.len());
    pixels.extend_from_slice(&top.pixels);
    pixels.extend_from_slice(&bottom.pixels);
    Ok(JointImage {
        image: ImageBuffer::new(top.width, top.height + bottom.height, pixels)?,
        sources: None,
    })
}

/// Dispatches on the configured direction.
pub fn join(a: &ImageBuffer, b: &ImageBuffer, dir: Juxtaposition) -> Result<JointImage, ImageError> {
    match dir {
        Juxtaposition::LeftRight => juxtapose(a, b),
        Juxtaposition::TopBottom => juxtapose_vertical(a, b),
    }
}

/// Nearest-neighbour resample. Destination pixel `i` samples source index
/// `floor((i + 0.5) * src / dst)`, so resizing to the same size is the identity.
pub fn resize_nearest(img: &ImageBuffer, width: u32, height: u32) -> Result<ImageBuffer, ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyDimensions { width, height });
    }
    if img.dims() == (width, height) {
        return Ok(img.clone());
    }
    let map = |i: u32, src: u32, dst: u32| -> u32 {
        // (2i + 1) * src / (2 dst) in integers
        let v = ((2 * i as u64 + 1) * src as u64) / (2 * dst as u64);
        v.min(src as u64 - 1) as u32
    };
    let xs: Vec<u32> = (0..width).map(|x| map(x, img.width, width)).collect();
    let ys: Vec<u32> = (0..height).map(|y| map(y, img.height, height)).collect();
    ImageBuffer::from_fn(width, height, |x, y| img.pixel(xs[x as usize], ys[y as usize]))
}
