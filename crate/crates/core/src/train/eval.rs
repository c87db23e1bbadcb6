//! Whole-image inference and scoring of trained generators.

use std::path::Path;

use mcsr_autodiff::{ParamSet, Tensor};
use rayon::prelude::*;

use super::model::GenModel;
use crate::dataset::{PatchStore, PatchTuple, Split};
use crate::error::{Error, Result};
use crate::image::{write_image, Image};
use crate::kspace::reassemble;
use crate::metrics::{psnr, ssim, MetricReport, MetricRow};

/// Patches per inference graph.
const INFERENCE_CHUNK: usize = 4;

/// Label of the unprocessed LR input in reports.
pub const LR_VARIANT: &str = "lr";

/// Reassembled inputs, targets and outputs of one test image. Outputs are
/// clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub hr: Image,
    pub lr: Image,
    pub reference: Image,
    pub lr2: Option<Image>,
    pub sr: Image,
    pub level1: Option<Image>,
}

/// Stacks `N` single-channel images into `N×1×H×W`.
pub fn stack(images: &[&Image]) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return Err(Error::InvalidArgument("empty batch".into()));
    };
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if !img.same_size(first) {
            return Err(Error::SizeMismatch("batch images differ in size".into()));
        }
        data.extend_from_slice(img.data());
    }
    Ok(Tensor::new([images.len(), 1, h, w], data)?)
}

/// Splits `N×1×H×W` into images.
pub fn unstack(t: &Tensor) -> Result<Vec<Image>> {
    let &[n, 1, h, w] = t.shape() else {
        return Err(Error::SizeMismatch(format!("expected N×1×H×W, got {:?}", t.shape())));
    };
    (0..n)
        .map(|s| Image::new(h, w, t.data()[s * h * w..(s + 1) * h * w].to_vec()))
        .collect()
}

fn image_tuples(store: &PatchStore, id: &str, factor: u32) -> Result<(Vec<PatchTuple>, usize, usize)> {
    let mut tuples: Vec<PatchTuple> = store
        .rows()
        .iter()
        .filter(|r| r.pair_id == id && r.factor == factor)
        .map(|r| store.load_tuple(r))
        .collect::<Result<_>>()?;
    let (gr, gc) = store.grid(id, factor);
    if tuples.is_empty() || tuples.len() != gr * gc {
        return Err(Error::Dataset(format!(
            "{id} at factor {factor}: {} patches for a {gr}×{gc} grid",
            tuples.len()
        )));
    }
    tuples.sort_by_key(|t| (t.row, t.col));
    Ok((tuples, gr, gc))
}

/// Runs the generator over every patch of one image and stitches results.
pub fn predict_image(
    model: &GenModel,
    params: &ParamSet,
    store: &PatchStore,
    id: &str,
    factor: u32,
) -> Result<Prediction> {
    let (tuples, gr, gc) = image_tuples(store, id, factor)?;
    let mut sr = Vec::with_capacity(tuples.len());
    let mut l1 = Vec::new();
    for chunk in tuples.chunks(INFERENCE_CHUNK) {
        let lr = stack(&chunk.iter().map(|t| &t.lr).collect::<Vec<_>>())?;
        let rf = stack(&chunk.iter().map(|t| &t.reference).collect::<Vec<_>>())?;
        let (out, level1) = model.predict(params, &lr, &rf)?;
        sr.extend(unstack(&out)?);
        if let Some(t) = level1 {
            l1.extend(unstack(&t)?);
        }
    }
    let join =
        |f: fn(&PatchTuple) -> &Image| reassemble(&tuples.iter().map(|t| f(t).clone()).collect::<Vec<_>>(), gr, gc);
    let lr2 = if tuples.iter().all(|t| t.lr2.is_some()) {
        Some(reassemble(
            &tuples
                .iter()
                .map(|t| t.lr2.clone().expect("checked"))
                .collect::<Vec<_>>(),
            gr,
            gc,
        )?)
    } else {
        None
    };
    Ok(Prediction {
        id: id.to_string(),
        hr: join(|t| &t.hr)?,
        lr: join(|t| &t.lr)?,
        reference: join(|t| &t.reference)?,
        lr2,
        sr: reassemble(&sr, gr, gc)?.clamp01(),
        level1: if l1.is_empty() {
            None
        } else {
            Some(reassemble(&l1, gr, gc)?.clamp01())
        },
    })
}

/// Mean SSIM and PSNR of the outputs on `ids`.
pub fn quick_scores(
    model: &GenModel,
    params: &ParamSet,
    store: &PatchStore,
    ids: &[String],
    factor: u32,
) -> Result<(f64, f64)> {
    if ids.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut s = 0.0;
    let mut p = 0.0;
    for id in ids {
        let pred = predict_image(model, params, store, id, factor)?;
        s += ssim(&pred.hr, &pred.sr)?;
        p += psnr(&pred.hr, &pred.sr)?;
    }
    Ok((s / ids.len() as f64, p / ids.len() as f64))
}

/// Scores every test image. Rows per image: `variant` against HR, the LR
/// input against HR when `include_lr`, and for progressive models
/// `<variant>/level1` against the 2-fold target.
pub fn evaluate_model(
    model: &GenModel,
    params: &ParamSet,
    store: &PatchStore,
    factor: u32,
    variant: &str,
    include_lr: bool,
) -> Result<(MetricReport, Vec<Prediction>)> {
    let ids = store.pair_ids(Split::Test);
    if ids.is_empty() {
        return Err(Error::InvalidArgument("no test images to evaluate".into()));
    }
    let results: Vec<Result<(Vec<MetricRow>, Prediction)>> = ids
        .par_iter()
        .map(|id| {
            let pred = predict_image(model, params, store, id, factor)?;
            let mut rows = vec![MetricRow::compute(id, variant, factor, &pred.hr, &pred.sr)?];
            if include_lr {
                rows.push(MetricRow::compute(id, LR_VARIANT, factor, &pred.hr, &pred.lr)?);
            }
            if let (Some(l1), Some(lr2)) = (&pred.level1, &pred.lr2) {
                rows.push(MetricRow::compute(id, &format!("{variant}/level1"), factor, lr2, l1)?);
            }
            Ok((rows, pred))
        })
        .collect();
    let mut report = MetricReport::default();
    let mut preds = Vec::with_capacity(ids.len());
    for r in results {
        let (rows, pred) = r?;
        report.rows.extend(rows);
        preds.push(pred);
    }
    Ok((report, preds))
}

/// Writes `<id>_sr.pgm` (and `<id>_level1.pgm`) for each prediction.
pub fn write_predictions(dir: &Path, preds: &[Prediction]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for p in preds {
        write_image(dir.join(format!("{}_sr.pgm", p.id)), &p.sr)?;
        if let Some(l1) = &p.level1 {
            write_image(dir.join(format!("{}_level1.pgm", p.id)), l1)?;
        }
    }
    Ok(())
}
