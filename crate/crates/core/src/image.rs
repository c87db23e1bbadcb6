//! Single-channel images and their file formats: 16-bit binary PGM and a
//! raw little-endian f64 format with the header line `MCSRIMG H W`.

use std::fs;
use std::io::Write;
use std::path::Path;

use mcsr_autodiff::Tensor;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}×{})", self.height, self.width)
    }
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::SizeMismatch(format!(
                "{height}×{width} image needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Image { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Image { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = v;
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// The `h×w` block whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, h: usize, w: usize) -> Result<Image> {
        if row + h > self.height || col + w > self.width {
            return Err(Error::SizeMismatch(format!(
                "crop {h}×{w} at ({row}, {col}) exceeds {}×{}",
                self.height, self.width
            )));
        }
        Ok(Image::from_fn(h, w, |i, j| self.get(row + i, col + j)))
    }

    /// `1×H×W` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, self.height, self.width], self.data.clone()).expect("sizes agree")
    }

    /// Accepts `H×W`, `1×H×W` or `1×1×H×W`.
    pub fn from_tensor(t: &Tensor) -> Result<Image> {
        let s = t.shape();
        if s.len() < 2 || s.len() > 4 || s[..s.len() - 2].iter().any(|&d| d != 1) {
            return Err(Error::SizeMismatch(format!(
                "tensor of shape {s:?} is not a single image"
            )));
        }
        Image::new(s[s.len() - 2], s[s.len() - 1], t.data().to_vec())
    }
}

const RAW_MAGIC: &str = "MCSRIMG";

/// Writes a 16-bit binary PGM (`P5`, maxval 65535). Values are clamped to
/// `[0, 1]` and rounded to the nearest level.
pub fn write_pgm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    buf.reserve(img.len() * 2);
    for &v in &img.data {
        let level = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&level.to_be_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a binary PGM with any maxval up to 65535, scaled to `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|reason| Error::format(path, reason))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "P5" {
        return Err(format!("unsupported PGM magic {:?}", fields[0]));
    }
    let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} {s:?}"));
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bpp;
    let raster = bytes.get(pos..pos + need).ok_or("truncated PGM raster")?;
    let scale = maxval as f64;
    let data = if bpp == 1 {
        raster.iter().map(|&b| b as f64 / scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    Image::new(height, width, data).map_err(|e| e.to_string())
}

pub fn write_raw(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(32 + img.len() * 8);
    writeln!(buf, "{RAW_MAGIC} {} {}", img.height, img.width).expect("write to Vec");
    for v in &img.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format(path, "header is not text"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let [magic, h, w] = parts[..] else {
        return Err(Error::format(path, format!("bad header {header:?}")));
    };
    if magic != RAW_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}")));
    }
    let h: usize = h
        .parse()
        .map_err(|_| Error::format(path, format!("bad height {h:?}")))?;
    let w: usize = w.parse().map_err(|_| Error::format(path, format!("bad width {w:?}")))?;
    let body = &bytes[nl + 1..];
    if body.len() != h * w * 8 {
        return Err(Error::format(
            path,
            format!("expected {} data bytes, found {}", h * w * 8, body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Image::new(h, w, data)
}

/// Reads either format, chosen by the file's leading bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        parse_pgm(&bytes).map_err(|reason| Error::format(path, reason))
    } else if bytes.starts_with(RAW_MAGIC.as_bytes()) {
        read_raw(path)
    } else {
        Err(Error::format(
            path,
            "unsupported image format (expected binary PGM or MCSRIMG)",
        ))
    }
}

/// Writes PGM for a `.pgm` extension and the raw format otherwise.
pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pgm") => write_pgm(path, img),
        _ => write_raw(path, img),
    }
}
