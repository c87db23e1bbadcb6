//! Generator and critic objectives and the Wasserstein monitor.
//!
//! The generator total is `adv + λ_mse·mse + λ_per·per + λ_txt·txt`. The
//! critic total is `mean D(fake) − mean D(real) + λ_gp·mean((‖∇D(x̃)‖ − 1)²)`
//! with `x̃ = ε·real + (1 − ε)·fake` drawn per sample.

use mcsr_autodiff::ops::{add, add_scalar, gram_matrix, mean, scale, sqrt, square, sub, sum, sum_per_sample};
use mcsr_autodiff::{Graph, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{Bound, FeatureNet};
use crate::rng;

/// Loss weights. Field names are the config keys.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    /// λ1, pixel MSE.
    #[serde(default = "d_mse")]
    pub mse: f64,
    /// λ2, perceptual.
    #[serde(default = "d_per")]
    pub per: f64,
    /// λ3, texture.
    #[serde(default = "d_txt")]
    pub txt: f64,
    /// λ4, gradient penalty.
    #[serde(default = "d_gp")]
    pub gp: f64,
}

fn d_mse() -> f64 {
    0.1
}
fn d_per() -> f64 {
    1.0
}
fn d_txt() -> f64 {
    0.1
}
fn d_gp() -> f64 {
    10.0
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mse: d_mse(),
            per: d_per(),
            txt: d_txt(),
            gp: d_gp(),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("mse", self.mse), ("per", self.per), ("txt", self.txt), ("gp", self.gp)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "loss weight {k} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Scalar losses of one step (or the mean over an epoch).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub adv: f64,
    pub mse: f64,
    pub per: f64,
    pub txt: f64,
    #[serde(rename = "total_G")]
    pub total_g: f64,
    #[serde(rename = "total_D")]
    pub total_d: f64,
    pub w_dis: f64,
}

fn check_batch(v: &Var<'_>, what: &str) -> Result<usize> {
    match v.shape().first() {
        Some(&n) if n > 0 => Ok(n),
        _ => Err(Error::InvalidArgument(format!("{what}: empty batch"))),
    }
}

/// `−mean(scores)`.
pub fn adversarial_loss_g(scores: Var<'_>) -> Result<Var<'_>> {
    check_batch(&scores, "adversarial loss")?;
    Ok(scale(mean(scores)?, -1.0)?)
}

/// Mean squared difference over every element. With equal-sized samples
/// this is the batch mean of per-sample MSEs.
pub fn mse_loss<'g>(pred: Var<'g>, target: Var<'g>) -> Result<Var<'g>> {
    if pred.shape() != target.shape() {
        return Err(Error::SizeMismatch(format!(
            "mse: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    check_batch(&pred, "mse")?;
    Ok(mean(square(sub(pred, target)?)?)?)
}

/// Gram matrices of an `N×C×H×W` tap, divided by `C·H·W`.
pub fn normalized_gram(features: Var<'_>) -> Result<Var<'_>> {
    let shape = features.shape();
    let per: usize = shape[shape.len().saturating_sub(3)..].iter().product();
    Ok(scale(gram_matrix(features)?, 1.0 / per as f64)?)
}

/// Perceptual and texture losses from one pass of the feature network over
/// each input, each averaged over the taps.
pub fn feature_losses<'g>(
    net: &FeatureNet,
    params: &Bound<'g>,
    pred: Var<'g>,
    target: Var<'g>,
) -> Result<(Var<'g>, Var<'g>)> {
    let fp = net.forward(params, pred)?;
    let ft = net.forward(params, target)?;
    let k = fp.len() as f64;
    let mut per = None;
    let mut txt = None;
    for (a, b) in fp.into_iter().zip(ft) {
        let p = mse_loss(a, b)?;
        let t = mse_loss(normalized_gram(a)?, normalized_gram(b)?)?;
        per = Some(match per {
            None => p,
            Some(acc) => add(acc, p)?,
        });
        txt = Some(match txt {
            None => t,
            Some(acc) => add(acc, t)?,
        });
    }
    let (Some(per), Some(txt)) = (per, txt) else {
        return Err(Error::InvalidArgument("feature network has no taps".into()));
    };
    Ok((scale(per, 1.0 / k)?, scale(txt, 1.0 / k)?))
}

pub fn perceptual_loss<'g>(net: &FeatureNet, params: &Bound<'g>, pred: Var<'g>, target: Var<'g>) -> Result<Var<'g>> {
    Ok(feature_losses(net, params, pred, target)?.0)
}

pub fn texture_loss<'g>(net: &FeatureNet, params: &Bound<'g>, pred: Var<'g>, target: Var<'g>) -> Result<Var<'g>> {
    Ok(feature_losses(net, params, pred, target)?.1)
}

/// Content terms of one output against one target.
#[derive(Clone, Copy, Debug)]
pub struct ContentTerms<'g> {
    pub mse: Var<'g>,
    pub per: Var<'g>,
    pub txt: Var<'g>,
}

impl<'g> ContentTerms<'g> {
    pub fn compute(net: &FeatureNet, params: &Bound<'g>, pred: Var<'g>, target: Var<'g>) -> Result<Self> {
        let mse = mse_loss(pred, target)?;
        let (per, txt) = feature_losses(net, params, pred, target)?;
        Ok(ContentTerms { mse, per, txt })
    }
}

/// The generator objective as a graph value plus its report.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorObjective<'g> {
    pub total: Var<'g>,
    pub report: LossReport,
}

/// Combines the adversarial term with the content terms of one or more
/// levels. Each content loss is summed over the levels before weighting.
/// When `adversarial` is false the adversarial value is still reported but
/// left out of the total.
pub fn generator_objective<'g>(
    adv: Var<'g>,
    levels: &[ContentTerms<'g>],
    w: &LossWeights,
    adversarial: bool,
) -> Result<GeneratorObjective<'g>> {
    let Some(first) = levels.first() else {
        return Err(Error::InvalidArgument(
            "generator objective needs at least one level".into(),
        ));
    };
    let (mut mse, mut per, mut txt) = (first.mse, first.per, first.txt);
    for l in &levels[1..] {
        mse = add(mse, l.mse)?;
        per = add(per, l.per)?;
        txt = add(txt, l.txt)?;
    }
    let content = add(add(scale(mse, w.mse)?, scale(per, w.per)?)?, scale(txt, w.txt)?)?;
    let total = if adversarial { add(adv, content)? } else { content };
    let item = |v: Var<'_>| v.value().item();
    Ok(GeneratorObjective {
        total,
        report: LossReport {
            adv: item(adv)?,
            mse: item(mse)?,
            per: item(per)?,
            txt: item(txt)?,
            total_g: item(total)?,
            ..LossReport::default()
        },
    })
}

/// Per-sample interpolation weights for one critic step, uniform on
/// `[0, 1)`, from the stream `critic/eps` at index `step`.
pub fn draw_eps(seed: u64, step: u64, n: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, "critic/eps", step);
    (0..n).map(|_| r.random::<f64>()).collect()
}

/// `ε·real + (1 − ε)·fake`, per sample.
pub fn interpolate(real: &Tensor, fake: &Tensor, eps: &[f64]) -> Result<Tensor> {
    if real.shape() != fake.shape() || real.shape().first() != Some(&eps.len()) {
        return Err(Error::SizeMismatch(format!(
            "interpolation: real {:?}, fake {:?}, {} weights",
            real.shape(),
            fake.shape(),
            eps.len()
        )));
    }
    let per = real.numel() / eps.len().max(1);
    Ok(Tensor::from_fn(real.shape().to_vec(), |i| {
        let e = eps[i / per];
        e * real.data()[i] + (1.0 - e) * fake.data()[i]
    }))
}

/// The critic objective as graph values.
#[derive(Clone, Copy, Debug)]
pub struct CriticObjective<'g> {
    pub total: Var<'g>,
    pub penalty: Var<'g>,
    pub real_mean: f64,
    pub fake_mean: f64,
}

impl CriticObjective<'_> {
    pub fn wasserstein(&self) -> f64 {
        (self.fake_mean - self.real_mean).abs()
    }
}

/// `mean D(fake) − mean D(real) + λ·mean((‖∇ₓD(x̃)‖₂ − 1)²)`.
///
/// `critic` maps an `N×…` batch to `N` scores. `real` and `fake` are
/// constants of the critic's graph; the gradient norm is taken over all
/// elements of each sample and recorded on the tape, so the total is
/// differentiable with respect to the critic's parameters.
pub fn discriminator_objective<'g>(
    graph: &'g Graph,
    critic: impl Fn(Var<'g>) -> Result<Var<'g>>,
    real: &Tensor,
    fake: &Tensor,
    eps: &[f64],
    lambda_gp: f64,
) -> Result<CriticObjective<'g>> {
    let x_hat = graph.leaf(interpolate(real, fake, eps)?);
    let d_real = critic(graph.constant(real.clone()))?;
    let d_fake = critic(graph.constant(fake.clone()))?;
    let d_hat = critic(x_hat)?;
    let grads = graph.grad(sum(d_hat)?, &[x_hat], true)?;
    let norms = sqrt(sum_per_sample(square(grads[0])?)?)?;
    let penalty = mean(square(add_scalar(norms, -1.0)?)?)?;
    let (real_mean, fake_mean) = (mean(d_real)?, mean(d_fake)?);
    let total = add(sub(fake_mean, real_mean)?, scale(penalty, lambda_gp)?)?;
    Ok(CriticObjective {
        total,
        penalty,
        real_mean: real_mean.value().item()?,
        fake_mean: fake_mean.value().item()?,
    })
}

/// `|mean(fake) − mean(real)|`.
pub fn wasserstein_monitor(real: &[f64], fake: &[f64]) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::InvalidArgument("wasserstein monitor: empty scores".into()));
    }
    let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((m(fake) - m(real)).abs())
}
