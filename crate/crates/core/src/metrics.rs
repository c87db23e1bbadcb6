//! Full-reference image quality: SSIM, PSNR and an information fidelity
//! score, plus per-image reports with mean ± std aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{PatchStore, PatchTuple, Split};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::kspace::reassemble;

/// SSIM stabilizers for a unit dynamic range and the window side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConstants {
    pub c1: f64,
    pub c2: f64,
    pub window: usize,
}

impl Default for SsimConstants {
    fn default() -> Self {
        SsimConstants {
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
            window: 7,
        }
    }
}

fn check_same(what: &str, x: &Image, y: &Image) -> Result<()> {
    if !x.same_size(y) {
        return Err(Error::SizeMismatch(format!(
            "{what}: {}×{} vs {}×{}",
            x.height(),
            x.width(),
            y.height(),
            y.width()
        )));
    }
    Ok(())
}

/// Mean SSIM over every valid 7×7 window at stride 1.
pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    ssim_with(x, y, &SsimConstants::default())
}

pub fn ssim_with(x: &Image, y: &Image, k: &SsimConstants) -> Result<f64> {
    check_same("ssim", x, y)?;
    let n = k.window;
    if n == 0 || n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("ssim window {n} must be odd")));
    }
    if x.height() < n || x.width() < n {
        return Err(Error::InvalidArgument(format!(
            "ssim needs at least {n}×{n}, got {}×{}",
            x.height(),
            x.width()
        )));
    }
    let area = (n * n) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=x.height() - n {
        for j in 0..=x.width() - n {
            let (mut mx, mut my) = (0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    mx += x.get(i + a, j + b);
                    my += y.get(i + a, j + b);
                }
            }
            mx /= area;
            my /= area;
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    let dx = x.get(i + a, j + b) - mx;
                    let dy = y.get(i + a, j + b) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            }
            vx /= area;
            vy /= area;
            cxy /= area;
            total += (2.0 * mx * my + k.c1) * (2.0 * cxy + k.c2) / ((mx * mx + my * my + k.c1) * (vx + vy + k.c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// PSNR in dB for a unit peak; `f64::INFINITY` when the images are equal.
pub fn psnr(x: &Image, y: &Image) -> Result<f64> {
    check_same("psnr", x, y)?;
    if x.is_empty() {
        return Err(Error::InvalidArgument("psnr of empty images".into()));
    }
    let se: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    if se == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / (se / x.len() as f64)).log10())
}

/// CSV spelling of a PSNR value.
pub fn format_psnr(v: f64) -> String {
    format!("{v}")
}

pub const IFC_LEVELS: usize = 3;
pub const IFC_MIN_SIDE: usize = 32;
const IFC_SIGMA_U2: f64 = 1.0;
const IFC_SIGMA_N2: f64 = 1e-8;
const IFC_TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Mirror index without repeating the edge sample.
fn reflect(k: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = k.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

fn blur(img: &Image) -> Image {
    let (h, w) = (img.height(), img.width());
    let rows = Image::from_fn(h, w, |i, j| {
        (0..5)
            .map(|t| IFC_TAPS[t] * img.get(i, reflect(j as isize + t as isize - 2, w)))
            .sum()
    });
    Image::from_fn(h, w, |i, j| {
        (0..5)
            .map(|t| IFC_TAPS[t] * rows.get(reflect(i as isize + t as isize - 2, h), j))
            .sum()
    })
}

fn reduce(img: &Image) -> Image {
    let b = blur(img);
    Image::from_fn(img.height().div_ceil(2), img.width().div_ceil(2), |i, j| {
        b.get(2 * i, 2 * j)
    })
}

fn expand(img: &Image, h: usize, w: usize) -> Image {
    let up = Image::from_fn(h, w, |i, j| {
        if i % 2 == 0 && j % 2 == 0 {
            4.0 * img.get(i / 2, j / 2)
        } else {
            0.0
        }
    });
    blur(&up)
}

/// Band-pass levels of a Laplacian pyramid, finest first.
fn laplacian_bands(img: &Image, levels: usize) -> Vec<Image> {
    let mut bands = Vec::with_capacity(levels);
    let mut cur = img.clone();
    for _ in 0..levels {
        let next = reduce(&cur);
        let up = expand(&next, cur.height(), cur.width());
        let band = Image::new(
            cur.height(),
            cur.width(),
            cur.data().iter().zip(up.data()).map(|(a, b)| a - b).collect(),
        )
        .expect("same size");
        bands.push(band);
        cur = next;
    }
    bands
}

/// Information fidelity of `distorted` relative to `reference`, in bits.
///
/// Each band of a 3-level Laplacian pyramid is fit locally (3×3 windows) with
/// `d = g·c + v`; the reference variance stands in for the mixture scale.
/// A constant reference scores 0.
pub fn ifc(reference: &Image, distorted: &Image) -> Result<f64> {
    check_same("ifc", reference, distorted)?;
    if reference.height() < IFC_MIN_SIDE || reference.width() < IFC_MIN_SIDE {
        return Err(Error::InvalidArgument(format!(
            "ifc needs at least {IFC_MIN_SIDE}×{IFC_MIN_SIDE}, got {}×{}",
            reference.height(),
            reference.width()
        )));
    }
    let (lo, hi) = reference.min_max();
    if lo == hi {
        return Ok(0.0);
    }
    let rb = laplacian_bands(reference, IFC_LEVELS);
    let db = laplacian_bands(distorted, IFC_LEVELS);
    Ok(rb.iter().zip(&db).map(|(c, d)| band_information(c, d)).sum())
}

fn band_information(c: &Image, d: &Image) -> f64 {
    let (h, w) = (c.height(), c.width());
    if h < 3 || w < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..h - 2 {
        for j in 0..w - 2 {
            let (mut mc, mut md) = (0.0, 0.0);
            for a in 0..3 {
                for b in 0..3 {
                    mc += c.get(i + a, j + b);
                    md += d.get(i + a, j + b);
                }
            }
            mc /= 9.0;
            md /= 9.0;
            let (mut vc, mut vd, mut cov) = (0.0, 0.0, 0.0);
            for a in 0..3 {
                for b in 0..3 {
                    let x = c.get(i + a, j + b) - mc;
                    let y = d.get(i + a, j + b) - md;
                    vc += x * x;
                    vd += y * y;
                    cov += x * y;
                }
            }
            vc /= 9.0;
            vd /= 9.0;
            cov /= 9.0;
            if vc <= 1e-20 {
                continue;
            }
            let g = cov / vc;
            let sv2 = (vd - g * cov).max(0.0);
            total += 0.5 * (1.0 + g * g * vc * IFC_SIGMA_U2 / (sv2 + IFC_SIGMA_N2)).log2();
        }
    }
    total
}

/// Mean and `n−1` standard deviation.
///
/// Infinite entries make the mean infinite; the std is then 0 when every
/// entry is the same infinity and NaN otherwise. One entry gives NaN std.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                n,
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            f64::NAN
        } else if !mean.is_finite() {
            if values.iter().all(|&v| v == values[0]) {
                0.0
            } else {
                f64::NAN
            }
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Summary { n, mean, std }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(4);
        write!(f, "{:.p$}±{:.p$}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub image_id: String,
    pub variant: String,
    pub factor: u32,
    pub ssim: f64,
    pub psnr_db: f64,
    pub ifc: f64,
}

impl MetricRow {
    /// Scores `output` against the ground truth `hr`.
    pub fn compute(image_id: &str, variant: &str, factor: u32, hr: &Image, output: &Image) -> Result<MetricRow> {
        Ok(MetricRow {
            image_id: image_id.to_string(),
            variant: variant.to_string(),
            factor,
            ssim: ssim(hr, output)?,
            psnr_db: psnr(hr, output)?,
            ifc: ifc(hr, output)?,
        })
    }
}

/// Aggregates of one (variant, factor) group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub variant: String,
    pub factor: u32,
    pub ssim: Summary,
    pub psnr: Summary,
    pub ifc: Summary,
}

pub const CSV_HEADER: [&str; 6] = ["image_id", "variant", "factor", "ssim", "psnr_db", "ifc"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    /// Per-group aggregates in order of first appearance.
    pub fn summaries(&self) -> Vec<GroupSummary> {
        let mut order: Vec<(String, u32)> = Vec::new();
        let mut groups: BTreeMap<(String, u32), Vec<&MetricRow>> = BTreeMap::new();
        for r in &self.rows {
            let key = (r.variant.clone(), r.factor);
            groups
                .entry(key.clone())
                .or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                })
                .push(r);
        }
        order
            .into_iter()
            .map(|key| {
                let rows = &groups[&key];
                let col = |f: fn(&MetricRow) -> f64| Summary::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
                GroupSummary {
                    ssim: col(|r| r.ssim),
                    psnr: col(|r| r.psnr_db),
                    ifc: col(|r| r.ifc),
                    variant: key.0,
                    factor: key.1,
                }
            })
            .collect()
    }

    /// Plain-text mean±std table, one line per group.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<28} {:>6} {:>4} {:>17} {:>17} {:>21}\n",
            "variant", "factor", "n", "ssim", "psnr_db", "ifc"
        );
        for g in self.summaries() {
            writeln!(
                out,
                "{:<28} {:>6} {:>4} {:>17} {:>17} {:>21}",
                g.variant,
                g.factor,
                g.ssim.n,
                format!("{:.4}", g.ssim),
                format!("{:.3}", g.psnr),
                format!("{:.2}", g.ifc)
            )
            .expect("write to String");
        }
        out
    }

    /// Group aggregates as CSV in shortest round-trip form: variant,
    /// factor, n, then mean and std of each metric.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variant,factor,n,ssim_mean,ssim_std,psnr_mean,psnr_std,ifc_mean,ifc_std\n");
        for g in self.summaries() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                g.variant, g.factor, g.ssim.n, g.ssim.mean, g.ssim.std, g.psnr.mean, g.psnr.std, g.ifc.mean, g.ifc.std
            )
            .expect("write to String");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.image_id.clone(),
                r.variant.clone(),
                r.factor.to_string(),
                format!("{}", r.ssim),
                format_psnr(r.psnr_db),
                format!("{}", r.ifc),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<MetricReport> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::format(
                path,
                format!("expected columns {CSV_HEADER:?}, found {header:?}"),
            ));
        }
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |col: &str| {
                Error::format(
                    path,
                    format!(
                        "row {}: bad {col} {:?}",
                        k + 1,
                        rec.get(CSV_HEADER.iter().position(|c| *c == col).unwrap())
                    ),
                )
            };
            let num = |i: usize, col: &str| rec[i].trim().parse::<f64>().map_err(|_| bad(col));
            rows.push(MetricRow {
                image_id: rec[0].to_string(),
                variant: rec[1].to_string(),
                factor: rec[2].trim().parse().map_err(|_| bad("factor"))?,
                ssim: num(3, "ssim")?,
                psnr_db: num(4, "psnr_db")?,
                ifc: num(5, "ifc")?,
            });
        }
        Ok(MetricReport { rows })
    }
}

/// Scores full images. `predict(variant, factor, hr)` returns the output to
/// compare against `hr`. Rows are ordered by factor, image, then variant.
pub fn evaluate_images<F>(
    hrs: &[(String, Image)],
    variants: &[String],
    factors: &[u32],
    predict: F,
) -> Result<MetricReport>
where
    F: Fn(&str, u32, &Image) -> Result<Image> + Sync,
{
    if hrs.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let mut rows = Vec::new();
    for &factor in factors {
        let per_image: Vec<Result<Vec<MetricRow>>> = hrs
            .par_iter()
            .map(|(id, hr)| {
                variants
                    .iter()
                    .map(|v| MetricRow::compute(id, v, factor, hr, &predict(v, factor, hr)?))
                    .collect()
            })
            .collect();
        for r in per_image {
            rows.extend(r?);
        }
    }
    Ok(MetricReport { rows })
}

/// Scores a patch store split on reassembled full images.
/// `predict(variant, tuple)` maps one patch tuple to an output patch.
pub fn evaluate_corpus<F>(
    store: &PatchStore,
    split: Split,
    variants: &[String],
    factors: &[u32],
    predict: F,
) -> Result<MetricReport>
where
    F: Fn(&str, &PatchTuple) -> Result<Image> + Sync,
{
    let ids = store.pair_ids(split);
    if ids.is_empty() {
        return Err(Error::InvalidArgument(format!("no {split} images to evaluate")));
    }
    let mut rows = Vec::new();
    for &factor in factors {
        let per_image: Vec<Result<Vec<MetricRow>>> = ids
            .par_iter()
            .map(|id| {
                let (gr, gc) = store.grid(id, factor);
                let mut tuples: Vec<PatchTuple> = store
                    .select(split, factor)
                    .into_iter()
                    .filter(|r| &r.pair_id == id)
                    .map(|r| store.load_tuple(r))
                    .collect::<Result<_>>()?;
                if tuples.len() != gr * gc {
                    return Err(Error::Dataset(format!(
                        "{id} at factor {factor} has {} patches for a {gr}×{gc} grid",
                        tuples.len()
                    )));
                }
                tuples.sort_by_key(|t| (t.row, t.col));
                let hr = reassemble(&tuples.iter().map(|t| t.hr.clone()).collect::<Vec<_>>(), gr, gc)?;
                variants
                    .iter()
                    .map(|v| {
                        let out: Vec<Image> = tuples.iter().map(|t| predict(v, t)).collect::<Result<_>>()?;
                        MetricRow::compute(id, v, factor, &hr, &reassemble(&out, gr, gc)?)
                    })
                    .collect()
            })
            .collect();
        for r in per_image {
            rows.extend(r?);
        }
    }
    Ok(MetricReport { rows })
}
