//! Centered unitary 2-D Fourier transforms, k-space down-sampling with
//! zero-filling, normalization and patching.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

/// A 2-D complex spectrum, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    pub height: usize,
    pub width: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Whether the DC bin sits at `(height/2, width/2)` rather than `(0, 0)`.
    pub dc_centered: bool,
}

impl ComplexGrid {
    pub fn energy(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).sum()
    }
}

fn fft_2d(buf: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for j in 0..w {
        for i in 0..h {
            col[i] = buf[i * w + j];
        }
        col_fft.process(&mut col);
        for i in 0..h {
            buf[i * w + j] = col[i];
        }
    }
    let s = 1.0 / ((h * w) as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= s;
    }
}

/// Position of frequency index `k` (0 = DC) after centering.
fn shifted(k: usize, n: usize) -> usize {
    (k + n / 2) % n
}

fn check_nonempty(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument("zero-sized grid".into()));
    }
    Ok(())
}

/// Unitary forward transform with the DC bin moved to the grid center.
pub fn fft2_centered(img: &Image) -> Result<ComplexGrid> {
    let (h, w) = (img.height(), img.width());
    check_nonempty(h, w)?;
    let mut buf: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_2d(&mut buf, h, w, false);
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    for ki in 0..h {
        for kj in 0..w {
            let dst = shifted(ki, h) * w + shifted(kj, w);
            re[dst] = buf[ki * w + kj].re;
            im[dst] = buf[ki * w + kj].im;
        }
    }
    Ok(ComplexGrid {
        height: h,
        width: w,
        re,
        im,
        dc_centered: true,
    })
}

/// Unitary inverse of [`fft2_centered`], returning the real and imaginary
/// parts of the image.
pub fn ifft2_centered_complex(grid: &ComplexGrid) -> Result<(Image, Image)> {
    let (h, w) = (grid.height, grid.width);
    check_nonempty(h, w)?;
    if grid.re.len() != h * w || grid.im.len() != h * w {
        return Err(Error::SizeMismatch(format!(
            "spectrum buffers do not hold {h}×{w} values"
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); h * w];
    for ki in 0..h {
        for kj in 0..w {
            let src = if grid.dc_centered {
                shifted(ki, h) * w + shifted(kj, w)
            } else {
                ki * w + kj
            };
            buf[ki * w + kj] = Complex64::new(grid.re[src], grid.im[src]);
        }
    }
    fft_2d(&mut buf, h, w, true);
    let re = Image::new(h, w, buf.iter().map(|c| c.re).collect())?;
    let im = Image::new(h, w, buf.iter().map(|c| c.im).collect())?;
    Ok((re, im))
}

/// Real part of the unitary inverse transform.
pub fn ifft2_centered(grid: &ComplexGrid) -> Result<Image> {
    Ok(ifft2_centered_complex(grid)?.0)
}

/// Additive image-domain Gaussian noise applied before renormalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeSpec {
    pub factor: u32,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

impl DegradeSpec {
    pub fn new(factor: u32) -> Result<Self> {
        if !(2..=4).contains(&factor) {
            return Err(Error::InvalidArgument(format!(
                "down-sampling factor must be 2, 3 or 4, got {factor}"
            )));
        }
        Ok(DegradeSpec { factor, noise: None })
    }

    /// Side of the retained central square along an axis of length `n`:
    /// `round(n / factor)`.
    pub fn kept_side(&self, n: usize) -> usize {
        (n as f64 / self.factor as f64).round() as usize
    }
}

/// First centered index of a `kept`-wide window on an axis of length `n`.
///
/// The window spans frequencies `−b ..= kept−1−b` around DC, with
/// `b = kept/2`, or `b = (kept−1)/2` when `kept` and `n` differ in parity.
pub fn window_start(n: usize, kept: usize) -> usize {
    let c = n / 2;
    let below = if (kept % 2) != (n % 2) {
        (kept.saturating_sub(1)) / 2
    } else {
        kept / 2
    };
    c - below.min(c)
}

/// Keeps the centered `kept_h×kept_w` block of the spectrum, zeroes the rest
/// and returns the real part of the inverse transform. No renormalization.
pub fn lowpass(img: &Image, kept_h: usize, kept_w: usize) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    if kept_h > h || kept_w > w {
        return Err(Error::InvalidArgument(format!(
            "window {kept_h}×{kept_w} exceeds image {h}×{w}"
        )));
    }
    let mut spec = fft2_centered(img)?;
    apply_window(&mut spec, kept_h, kept_w);
    ifft2_centered(&spec)
}

/// Zeroes every bin of a centered spectrum outside the `kept_h×kept_w`
/// window. Windows larger than the grid keep everything.
pub fn apply_window(spec: &mut ComplexGrid, kept_h: usize, kept_w: usize) {
    debug_assert!(spec.dc_centered, "window placement assumes a centered spectrum");
    let (h, w) = (spec.height, spec.width);
    let (kept_h, kept_w) = (kept_h.min(h), kept_w.min(w));
    let (r0, c0) = (window_start(h, kept_h), window_start(w, kept_w));
    for i in 0..h {
        for j in 0..w {
            let inside = (r0..r0 + kept_h).contains(&i) && (c0..c0 + kept_w).contains(&j);
            if !inside {
                spec.re[i * w + j] = 0.0;
                spec.im[i * w + j] = 0.0;
            }
        }
    }
}

/// Range below which an image counts as constant when renormalizing a
/// degraded image.
pub const FLAT_RANGE: f64 = 1e-9;

/// Down-sampling by zero-filling: [`lowpass`] with `round(n/s)` per axis,
/// optional noise, then min-max renormalization to `[0, 1]`.
///
/// A constant input is returned unchanged. Any other result flatter than
/// [`FLAT_RANGE`] carries no structure to stretch and becomes the constant
/// `clamp(mean, 0, 1)`.
pub fn degrade(img: &Image, spec: &DegradeSpec) -> Result<Image> {
    DegradeSpec::new(spec.factor)?;
    let (lo, hi) = img.min_max();
    if lo == hi && spec.noise.is_none() && !img.is_empty() {
        // Only DC is populated and DC is in every window; skip the round
        // trip so the result is bit-exact.
        return Ok(img.clone());
    }
    let mut out = lowpass(img, spec.kept_side(img.height()), spec.kept_side(img.width()))?;
    if let Some(noise) = spec.noise {
        let normal = Normal::new(0.0, noise.sigma)
            .map_err(|e| Error::InvalidArgument(format!("noise sigma {}: {e}", noise.sigma)))?;
        let mut r = rng::stream(noise.seed, "degrade/noise", 0);
        for v in out.data_mut() {
            *v += normal.sample(&mut r);
        }
    }
    let (lo, hi) = out.min_max();
    if hi - lo <= FLAT_RANGE {
        let m = out.mean().clamp(0.0, 1.0);
        return Ok(out.map(|_| m));
    }
    Ok(out.map(|v| (v - lo) / (hi - lo)))
}

/// `(x − min)/(max − min)`; a constant image maps to zeros.
pub fn normalize01(img: &Image) -> Image {
    let (lo, hi) = img.min_max();
    if hi > lo {
        img.map(|v| (v - lo) / (hi - lo))
    } else {
        img.map(|_| 0.0)
    }
}

/// Non-overlapping `patch×patch` tiles in row-major order.
pub fn patchify(img: &Image, patch: usize) -> Result<Vec<Image>> {
    let (h, w) = (img.height(), img.width());
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::InvalidArgument(format!(
            "{h}×{w} image is not divisible into {patch}×{patch} patches"
        )));
    }
    let mut out = Vec::with_capacity((h / patch) * (w / patch));
    for r in 0..h / patch {
        for c in 0..w / patch {
            out.push(img.crop(r * patch, c * patch, patch, patch)?);
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`] for a `rows×cols` grid of tiles.
pub fn reassemble(patches: &[Image], rows: usize, cols: usize) -> Result<Image> {
    if patches.len() != rows * cols || patches.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} patches cannot fill a {rows}×{cols} grid",
            patches.len()
        )));
    }
    let (ph, pw) = (patches[0].height(), patches[0].width());
    if patches.iter().any(|p| p.height() != ph || p.width() != pw) {
        return Err(Error::SizeMismatch("patches differ in size".into()));
    }
    Ok(Image::from_fn(rows * ph, cols * pw, |i, j| {
        patches[(i / ph) * cols + j / pw].get(i % ph, j % pw)
    }))
}

/// Adds zero-mean Gaussian noise of standard deviation `sigma`.
pub fn add_noise(img: &Image, sigma: f64, r: &mut impl Rng) -> Image {
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let mut out = img.clone();
    for v in out.data_mut() {
        *v += normal.sample(r);
    }
    out
}
