//! Paired two-contrast synthetic head phantoms and registered-pair ingestion.
//!
//! A phantom is a label map (background, skull ring, parenchyma and 6–14
//! random ellipses) rendered twice with different per-label intensities,
//! smooth within-label modulation and a mild multiplicative bias field. Some
//! ellipses are nearly invisible in the primary contrast but stand out in the
//! reference.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{read_image, Image};
use crate::kspace::normalize01;
use crate::rng;

pub const PHANTOM_SIDE: usize = 256;

pub const BACKGROUND: u16 = 0;
pub const SKULL: u16 = 1;
pub const PARENCHYMA: u16 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastPair {
    /// Target contrast.
    pub primary_hr: Image,
    /// High-resolution guide contrast.
    pub reference_hr: Image,
    /// Shared tissue labels, row-major; `None` for ingested pairs.
    pub labels: Option<Vec<u16>>,
    pub anatomy_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    theta: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64, scale: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (s, c) = self.theta.sin_cos();
        let u = c * dy + s * dx;
        let v = -s * dy + c * dx;
        let (ry, rx) = (self.ry * scale, self.rx * scale);
        (u * u) / (ry * ry) + (v * v) / (rx * rx) <= 1.0
    }
}

/// Smooth separable modulation `amp·sin(fy·y + py)·cos(fx·x + px)`.
#[derive(Clone, Copy, Debug)]
struct Wave {
    amp: f64,
    fy: f64,
    fx: f64,
    py: f64,
    px: f64,
}

impl Wave {
    fn random(r: &mut ChaCha8Rng, amp: f64) -> Self {
        Wave {
            amp,
            fy: r.random_range(PI..3.0 * PI),
            fx: r.random_range(PI..3.0 * PI),
            py: r.random_range(0.0..2.0 * PI),
            px: r.random_range(0.0..2.0 * PI),
        }
    }

    fn at(&self, y: f64, x: f64) -> f64 {
        self.amp * (self.fy * y + self.py).sin() * (self.fx * x + self.px).cos()
    }
}

/// Multiplicative field `1 + a·y + b·x + c·x·y` with `|a|+|b|+|c| ≤ 0.1`.
#[derive(Clone, Copy, Debug)]
struct Bias {
    a: f64,
    b: f64,
    c: f64,
}

impl Bias {
    fn random(r: &mut ChaCha8Rng) -> Self {
        Bias {
            a: r.random_range(-0.04..0.04),
            b: r.random_range(-0.04..0.04),
            c: r.random_range(-0.02..0.02),
        }
    }

    fn at(&self, y: f64, x: f64) -> f64 {
        1.0 + self.a * y + self.b * x + self.c * x * y
    }
}

struct Contrast {
    base: Vec<f64>,
    waves: Vec<Wave>,
    bias: Bias,
}

impl Contrast {
    fn render(&self, labels: &[u16], side: usize) -> Image {
        Image::from_fn(side, side, |i, j| {
            let l = labels[i * side + j] as usize;
            if l == BACKGROUND as usize {
                return 0.0;
            }
            let (y, x) = coord(i, j, side);
            let v = (self.base[l] + self.waves[l].at(y, x)) * self.bias.at(y, x);
            v.clamp(0.0, 1.0)
        })
    }
}

/// Pixel center in `[-1, 1]²`.
fn coord(i: usize, j: usize, side: usize) -> (f64, f64) {
    let s = side as f64;
    ((2.0 * i as f64 + 1.0) / s - 1.0, (2.0 * j as f64 + 1.0) / s - 1.0)
}

/// A 256×256 phantom pair.
pub fn make_phantom_pair(seed: u64) -> ContrastPair {
    make_phantom_pair_sized(seed, PHANTOM_SIDE)
}

/// Phantom pair on a `side×side` canvas. Geometry is defined in normalized
/// coordinates, so different sides rasterize the same anatomy.
pub fn make_phantom_pair_sized(seed: u64, side: usize) -> ContrastPair {
    let mut geo = rng::stream(seed, "phantom/geometry", 0);
    let head = Ellipse {
        cy: geo.random_range(-0.03..0.03),
        cx: geo.random_range(-0.03..0.03),
        ry: geo.random_range(0.74..0.82),
        rx: geo.random_range(0.60..0.68),
        theta: geo.random_range(-0.1..0.1),
    };
    let skull_inner = geo.random_range(0.86..0.92);
    let n_struct = geo.random_range(6..=14usize);
    let structures: Vec<Ellipse> = (0..n_struct)
        .map(|_| {
            let r = 0.5 * geo.random::<f64>().sqrt();
            let a = geo.random_range(0.0..2.0 * PI);
            Ellipse {
                cy: head.cy + r * head.ry * a.sin(),
                cx: head.cx + r * head.rx * a.cos(),
                ry: geo.random_range(0.04..0.22),
                rx: geo.random_range(0.04..0.22),
                theta: geo.random_range(0.0..PI),
            }
        })
        .collect();

    let mut labels = vec![BACKGROUND; side * side];
    for i in 0..side {
        for j in 0..side {
            let (y, x) = coord(i, j, side);
            if !head.contains(y, x, 1.0) {
                continue;
            }
            if !head.contains(y, x, skull_inner) {
                labels[i * side + j] = SKULL;
                continue;
            }
            let mut l = PARENCHYMA;
            for (k, e) in structures.iter().enumerate() {
                if e.contains(y, x, 1.0) {
                    l = 3 + k as u16;
                }
            }
            labels[i * side + j] = l;
        }
    }

    let n_labels = 3 + n_struct;
    let mut ints = rng::stream(seed, "phantom/intensity", 0);
    let mut primary = vec![0.0; n_labels];
    let mut reference = vec![0.0; n_labels];
    primary[SKULL as usize] = ints.random_range(0.75..0.95);
    reference[SKULL as usize] = ints.random_range(0.25..0.5);
    primary[PARENCHYMA as usize] = ints.random_range(0.35..0.6);
    reference[PARENCHYMA as usize] = ints.random_range(0.35..0.6);
    // At least one structure is hidden in the primary contrast.
    let forced_hidden = ints.random_range(0..n_struct);
    for k in 0..n_struct {
        let l = 3 + k;
        let hidden = k == forced_hidden || ints.random::<f64>() < 0.25;
        if hidden {
            primary[l] = primary[PARENCHYMA as usize] + ints.random_range(-0.03..0.03);
            let jump: f64 = ints.random_range(0.3..0.45);
            let base = reference[PARENCHYMA as usize];
            reference[l] = if base + jump <= 1.0 && ints.random::<bool>() {
                base + jump
            } else {
                (base - jump).max(0.0)
            };
        } else {
            primary[l] = ints.random_range(0.1..0.95);
            reference[l] = ints.random_range(0.1..0.95);
        }
    }

    let mut tex = rng::stream(seed, "phantom/texture", 0);
    let mut contrast = |base: Vec<f64>| Contrast {
        waves: (0..n_labels).map(|_| Wave::random(&mut tex, 0.03)).collect(),
        bias: Bias::random(&mut tex),
        base,
    };
    let p = contrast(primary);
    let r = contrast(reference);
    ContrastPair {
        primary_hr: p.render(&labels, side),
        reference_hr: r.render(&labels, side),
        labels: Some(labels),
        anatomy_seed: Some(seed),
    }
}

/// Loads a registered pair of images and normalizes each to `[0, 1]`.
pub fn load_pair(primary: impl AsRef<Path>, reference: impl AsRef<Path>) -> Result<ContrastPair> {
    let p = read_image(primary.as_ref())?;
    let r = read_image(reference.as_ref())?;
    if !p.same_size(&r) {
        return Err(Error::SizeMismatch(format!(
            "{} is {}×{} but {} is {}×{}",
            primary.as_ref().display(),
            p.height(),
            p.width(),
            reference.as_ref().display(),
            r.height(),
            r.width()
        )));
    }
    Ok(ContrastPair {
        primary_hr: normalize01(&p),
        reference_hr: normalize01(&r),
        labels: None,
        anatomy_seed: None,
    })
}
