//! Slow, obviously-correct reference implementations shared by the
//! integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use mcsr::image::Image;
use mcsr_autodiff::ops::{dense, flatten, reshape};
use mcsr_autodiff::Var;
use rand_distr::{Distribution, StandardNormal};

/// Direct DFT along one axis of length `n`: `X[k] = Σ x[t]·e^{∓2πikt/n}`.
fn dft_1d(re: &[f64], im: &[f64], inverse: bool) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for t in 0..n {
            // Reduce k·t mod n first so the angle stays small and exact.
            let ang = sign * 2.0 * PI * ((k * t) % n) as f64 / n as f64;
            let (s, c) = ang.sin_cos();
            sr += re[t] * c - im[t] * s;
            si += re[t] * s + im[t] * c;
        }
        out_re[k] = sr;
        out_im[k] = si;
    }
    (out_re, out_im)
}

/// Unitary, uncentered 2-D DFT of a complex `h×w` grid, row-major.
pub fn dft_2d(h: usize, w: usize, re: &[f64], im: &[f64], inverse: bool) -> (Vec<f64>, Vec<f64>) {
    let mut r = re.to_vec();
    let mut m = im.to_vec();
    for i in 0..h {
        let (a, b) = dft_1d(&r[i * w..(i + 1) * w], &m[i * w..(i + 1) * w], inverse);
        r[i * w..(i + 1) * w].copy_from_slice(&a);
        m[i * w..(i + 1) * w].copy_from_slice(&b);
    }
    for j in 0..w {
        let col_r: Vec<f64> = (0..h).map(|i| r[i * w + j]).collect();
        let col_m: Vec<f64> = (0..h).map(|i| m[i * w + j]).collect();
        let (a, b) = dft_1d(&col_r, &col_m, inverse);
        for i in 0..h {
            r[i * w + j] = a[i];
            m[i * w + j] = b[i];
        }
    }
    let s = 1.0 / ((h * w) as f64).sqrt();
    (r.iter().map(|v| v * s).collect(), m.iter().map(|v| v * s).collect())
}

/// Signed frequency of uncentered bin `k` on an axis of length `n`,
/// in `-n/2 ..= n-1-n/2`.
pub fn signed_freq(k: usize, n: usize) -> i64 {
    let k = k as i64;
    let n = n as i64;
    if k < n - n / 2 {
        k
    } else {
        k - n
    }
}

/// Whether signed frequency `f` lies in a `kept`-wide window on an axis of
/// length `n`.
pub fn in_window(f: i64, n: usize, kept: usize) -> bool {
    let b = if kept % 2 != n % 2 {
        (kept as i64 - 1) / 2
    } else {
        kept as i64 / 2
    };
    -b <= f && f <= kept as i64 - 1 - b
}

/// Zero-filled reconstruction computed with the direct DFT, before
/// renormalization.
pub fn lowpass_oracle(img: &Image, kept: usize) -> Image {
    let (h, w) = (img.height(), img.width());
    let zeros = vec![0.0; h * w];
    let (mut re, mut im) = dft_2d(h, w, img.data(), &zeros, false);
    for ki in 0..h {
        for kj in 0..w {
            if !(in_window(signed_freq(ki, h), h, kept) && in_window(signed_freq(kj, w), w, kept)) {
                re[ki * w + kj] = 0.0;
                im[ki * w + kj] = 0.0;
            }
        }
    }
    let (out, _) = dft_2d(h, w, &re, &im, true);
    Image::new(h, w, out).unwrap()
}

/// `degrade` via the direct DFT.
pub fn degrade_oracle(img: &Image, factor: u32) -> Image {
    let kept = (img.height() as f64 / factor as f64).round() as usize;
    let low = lowpass_oracle(img, kept);
    let (lo, hi) = low.min_max();
    if hi - lo <= 1e-9 {
        let m = low.mean().clamp(0.0, 1.0);
        return low.map(|_| m);
    }
    low.map(|v| (v - lo) / (hi - lo))
}

/// Smooth-ish random test image in `[0, 1]`.
pub fn random_image(h: usize, w: usize, seed: u64) -> Image {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(h, w, |_, _| r.random::<f64>())
}

pub fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    assert!(a.same_size(b));
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Converts a core result for use inside a gradient-check closure.
pub fn ad<T>(r: mcsr::Result<T>) -> mcsr_autodiff::Result<T> {
    r.map_err(|e| mcsr_autodiff::AutodiffError::InvalidArgument {
        op: "test",
        msg: e.to_string(),
    })
}

/// Random tensor with entries uniform in `[-1, 1)`.
pub fn random_tensor(shape: &[usize], seed: u64) -> mcsr_autodiff::Tensor {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    mcsr_autodiff::Tensor::from_fn(shape.to_vec(), |_| r.random_range(-1.0..1.0))
}

/// Random direction with one unit-variance entry per parameter.
pub fn random_direction(params: &mcsr_autodiff::ParamSet, seed: u64) -> Vec<mcsr_autodiff::Tensor> {
    params
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| random_tensor(t.shape(), seed.wrapping_mul(1000).wrapping_add(i as u64)))
        .collect()
}

/// `params + h·dir`.
pub fn shifted(params: &mcsr_autodiff::ParamSet, dir: &[mcsr_autodiff::Tensor], h: f64) -> mcsr_autodiff::ParamSet {
    let mut out = params.clone();
    for (t, d) in out.tensors_mut().iter_mut().zip(dir) {
        for (v, dv) in t.data_mut().iter_mut().zip(d.data()) {
            *v += h * dv;
        }
    }
    out
}

/// Relative mismatch between the analytic directional derivative
/// `⟨grads, dir⟩` and the central difference of `f` along `dir`.
pub fn directional_error(
    f: impl Fn(&mcsr_autodiff::ParamSet) -> f64,
    params: &mcsr_autodiff::ParamSet,
    grads: &[mcsr_autodiff::Tensor],
    dir: &[mcsr_autodiff::Tensor],
    h: f64,
) -> (f64, f64, f64) {
    let analytic: f64 = grads.iter().zip(dir).map(|(g, d)| g.dot(d)).sum();
    let numeric = (f(&shifted(params, dir, h)) - f(&shifted(params, dir, -h))) / (2.0 * h);
    let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
    (err, analytic, numeric)
}

/// Like [`directional_error`], for functions that are only piecewise smooth
/// (ReLU and max-pool switches). A step is accepted once the forward and
/// backward one-sided differences agree, which fails when the segment
/// `params ± h·dir` crosses a switch. Returns the error and the step used, or
/// `None` if no tried step lies inside one smooth piece.
pub fn piecewise_directional_error(
    f: impl Fn(&mcsr_autodiff::ParamSet) -> f64,
    params: &mcsr_autodiff::ParamSet,
    grads: &[mcsr_autodiff::Tensor],
    dir: &[mcsr_autodiff::Tensor],
) -> Option<(f64, f64)> {
    let analytic: f64 = grads.iter().zip(dir).map(|(g, d)| g.dot(d)).sum();
    let f0 = f(params);
    for h in [1e-6, 1e-7, 1e-8] {
        let up = f(&shifted(params, dir, h));
        let down = f(&shifted(params, dir, -h));
        let (fwd, bwd) = ((up - f0) / h, (f0 - down) / h);
        let central = (up - down) / (2.0 * h);
        let scale = analytic.abs().max(central.abs()).max(1e-12);
        if (fwd - bwd).abs() <= 1e-3 * scale {
            return Some(((analytic - central).abs() / scale, h));
        }
    }
    None
}

/// SSIM by explicit per-window loops with `n`-denominator moments.
pub fn ssim_oracle(x: &Image, y: &Image) -> f64 {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (h, w) = (x.height(), x.width());
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..=h - 7 {
        for j in 0..=w - 7 {
            let (mut mx, mut my) = (0.0, 0.0);
            for a in 0..7 {
                for b in 0..7 {
                    mx += x.get(i + a, j + b);
                    my += y.get(i + a, j + b);
                }
            }
            mx /= 49.0;
            my /= 49.0;
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for a in 0..7 {
                for b in 0..7 {
                    let dx = x.get(i + a, j + b) - mx;
                    let dy = y.get(i + a, j + b) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            }
            vx /= 49.0;
            vy /= 49.0;
            cxy /= 49.0;
            total += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1.0;
        }
    }
    total / count
}

pub fn psnr_oracle(x: &Image, y: &Image) -> f64 {
    let mut se = 0.0;
    for i in 0..x.height() {
        for j in 0..x.width() {
            se += (x.get(i, j) - y.get(i, j)).powi(2);
        }
    }
    10.0 * (1.0 / (se / x.len() as f64)).log10()
}

pub fn gaussian_field(h: usize, w: usize, seed: u64) -> Image {
    let mut r = mcsr::rng::stream(seed, "test/noise", 0);
    Image::from_fn(h, w, |_, _| StandardNormal.sample(&mut r))
}

pub fn plus_scaled(a: &Image, z: &Image, s: f64) -> Image {
    Image::new(
        a.height(),
        a.width(),
        a.data().iter().zip(z.data()).map(|(x, n)| x + s * n).collect(),
    )
    .unwrap()
}

/// Critic `D(x) = ⟨c, x⟩` per sample.
pub fn linear_critic<'g>(c: Var<'g>) -> impl Fn(Var<'g>) -> mcsr::Result<Var<'g>> {
    move |x: Var<'g>| {
        let n = x.shape()[0];
        let len = c.shape()[0];
        let w = reshape(c, &[1, len])?;
        Ok(reshape(dense(flatten(x)?, w, None)?, &[n])?)
    }
}
