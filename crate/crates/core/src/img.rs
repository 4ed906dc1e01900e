//! Grayscale images: IDX/PGM/CSV containers and the sup-norm distance.
//!
//! Row 0 is the top image row and pixel `(r, c)` lives at index `r * width + c`.

use std::io::Read;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image must be nonempty, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "{}x{} image needs {} values, got {}",
                width,
                height,
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value(format!("pixel {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Builds an image from rows listed top to bottom.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != width) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let values = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(width, height, values)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn same_shape(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn remap(&self, width: usize, height: usize, src: impl Fn(usize, usize) -> usize) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                values.push(self.values[src(r, c)]);
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    /// Quarter turn counter-clockwise.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        self.remap(h, w, |r, c| c * w + (w - 1 - r))
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        self.remap(w, self.height, |r, c| r * w + (w - 1 - c))
    }

    /// Mirror top-bottom.
    pub fn flip_vertical(&self) -> Self {
        let (w, h) = (self.width, self.height);
        self.remap(w, h, |r, c| (h - 1 - r) * w + c)
    }

    /// Reflection across the main diagonal.
    pub fn transpose(&self) -> Self {
        let w = self.width;
        self.remap(self.height, w, |r, c| c * w + r)
    }

    /// Little-endian bytes of the shape and values, used for content hashing.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        out.extend_from_slice(&(self.width as u64).to_le_bytes());
        out.extend_from_slice(&(self.height as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// `max |φ1 − φ2|` over pixels.
pub fn sup_distance(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Returns the payload, gunzipped when it starts with the gzip magic.
fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes).read_to_end(&mut out)?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated {
            expected: offset + 4,
            found: bytes.len(),
        })
}

/// Parses an IDX image file (magic 2051), gzip-compressed or raw.
pub fn load_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>> {
    let bytes = maybe_gunzip(bytes)?;
    let magic = read_be_u32(&bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "expected IDX image magic {IDX_IMAGES_MAGIC}, found {magic}"
        )));
    }
    let count = read_be_u32(&bytes, 4)? as usize;
    let rows = read_be_u32(&bytes, 8)? as usize;
    let cols = read_be_u32(&bytes, 12)? as usize;
    let size = rows * cols;
    let expected = 16 + count * size;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    bytes[16..expected]
        .chunks_exact(size.max(1))
        .take(count)
        .map(|chunk| GrayImage::new(cols, rows, chunk.iter().map(|&b| b as f64).collect()))
        .collect()
}

/// Parses an IDX label file (magic 2049); every label must be a digit.
pub fn load_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let bytes = maybe_gunzip(bytes)?;
    let magic = read_be_u32(&bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "expected IDX label magic {IDX_LABELS_MAGIC}, found {magic}"
        )));
    }
    let count = read_be_u32(&bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let labels = bytes[8..expected].to_vec();
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(Error::Value(format!("label {i} is {l}, not a digit")));
    }
    Ok(labels)
}

/// Reads a binary (P5) PGM with maxval at most 255.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!(
            "unsupported PGM magic {:?}, only binary P5 is read",
            fields[0]
        )));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM {what}: {s:?}")))
    };
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("PGM maxval {maxval} not in 1..=255")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let expected = pos + width * height;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    GrayImage::new(
        width,
        height,
        bytes[pos..expected].iter().map(|&b| b as f64).collect(),
    )
}

/// Writes a P5 PGM mapping `[lo, hi]` linearly onto `0..=255`.
///
/// Values outside `[lo, hi]` are clamped to the nearest end.
pub fn write_pgm(image: &GrayImage, lo: f64, hi: f64) -> Result<Vec<u8>> {
    if !(lo < hi) {
        return Err(Error::Invalid(format!(
            "PGM range needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    let scale = 255.0 / (hi - lo);
    out.extend(
        image
            .values
            .iter()
            .map(|&v| ((v.clamp(lo, hi) - lo) * scale).round() as u8),
    );
    Ok(out)
}

/// Comma-separated rows, top row first.
pub fn write_csv(image: &GrayImage) -> String {
    let mut out = String::new();
    for row in image.values.chunks(image.width) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn read_csv(text: &str) -> Result<GrayImage> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("not a number: {s:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    GrayImage::from_rows(&rows)
}

/// Loads a PGM or CSV image, picking the format from the file contents.
pub fn read_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"P") {
        read_pgm(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::Format("image is neither PGM nor UTF-8 CSV".into()))?;
        read_csv(text)
    }
}
