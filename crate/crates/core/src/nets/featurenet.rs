use std::path::Path;

use mcsr_autodiff::ops::{conv2d, maxpool2, relu};
use mcsr_autodiff::{ParamSet, Tensor, Var};

use super::{channels_and_side, check_layout, he_normal, Bound};
use crate::error::{Error, Result};

pub const FEATURE_CHANNELS: [usize; 10] = [16, 16, 32, 32, 64, 64, 64, 128, 128, 128];
/// 1-based layers whose post-ReLU outputs are returned.
pub const FEATURE_TAPS: [usize; 4] = [2, 4, 7, 10];

/// Fixed feature extractor for the perceptual and texture losses: padded
/// 3×3 conv + ReLU layers with 2×2 max pooling after each tap. Taps are
/// taken before pooling. The pool after the last tap feeds nothing and is
/// omitted.
///
/// Parameters: `feat.<k>.{w,b}` (1-based). Always bound frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureNet {
    channels: Vec<usize>,
    taps: Vec<usize>,
}

impl Default for FeatureNet {
    fn default() -> Self {
        FeatureNet {
            channels: FEATURE_CHANNELS.to_vec(),
            taps: FEATURE_TAPS.to_vec(),
        }
    }
}

impl FeatureNet {
    pub fn custom(channels: Vec<usize>, taps: Vec<usize>) -> Result<Self> {
        let ok = !taps.is_empty()
            && taps.windows(2).all(|w| w[0] < w[1])
            && taps[0] >= 1
            && *taps.last().unwrap() == channels.len();
        if !ok || channels.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "taps {taps:?} must be increasing and end at the last of {} layers",
                channels.len()
            )));
        }
        Ok(FeatureNet { channels, taps })
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    /// Channel count at each tap.
    pub fn tap_channels(&self) -> Vec<usize> {
        self.taps.iter().map(|&t| self.channels[t - 1]).collect()
    }

    fn build(&self, seed: Option<u64>) -> ParamSet {
        let mut p = ParamSet::new();
        let mut cin = 1;
        for (k, &c) in self.channels.iter().enumerate() {
            let w = format!("feat.{}.w", k + 1);
            let shape = [c, cin, 3, 3];
            let t = match seed {
                Some(s) => he_normal(s, &w, &shape, cin * 9),
                None => Tensor::zeros(shape),
            };
            p.push(w, t);
            p.push(format!("feat.{}.b", k + 1), Tensor::zeros([c]));
            cin = c;
        }
        p
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        self.build(Some(seed))
    }

    pub fn layout(&self) -> ParamSet {
        self.build(None)
    }

    /// Imports externally exported weights from an MCSR1 file.
    pub fn load_params(&self, path: impl AsRef<Path>) -> Result<ParamSet> {
        let p = ParamSet::load(path)?;
        check_layout("feature network", &self.layout(), &p)?;
        // Reorder to the canonical layout order.
        Ok(self
            .layout()
            .names()
            .iter()
            .map(|n| (n.clone(), p.get(n).expect("checked").clone()))
            .collect())
    }

    /// Post-ReLU outputs at each tap for an `N×1×S×S` or `1×S×S` input.
    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Vec<Var<'g>>> {
        let pools = self.taps.len() - 1;
        match channels_and_side(&x.shape()) {
            Some((1, s)) if s % (1 << pools) == 0 && s > 0 => {}
            _ => {
                return Err(Error::SizeMismatch(format!(
                    "feature network expects one square channel divisible by {}, got {:?}",
                    1 << pools,
                    x.shape()
                )))
            }
        }
        let mut out = Vec::with_capacity(self.taps.len());
        let mut h = x;
        for k in 1..=self.channels.len() {
            h = relu(conv2d(
                h,
                p.get(&format!("feat.{k}.w"))?,
                Some(p.get(&format!("feat.{k}.b"))?),
                1,
            )?)?;
            if self.taps.contains(&k) {
                out.push(h);
                if k < self.channels.len() {
                    h = maxpool2(h)?;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcsr_autodiff::Graph;

    #[test]
    fn tap_channels_and_zero_input() {
        let f = FeatureNet::default();
        assert_eq!(f.tap_channels(), [16, 32, 64, 128]);
        let g = Graph::new();
        let p = Bound::frozen(&f.init_params(3), &g);
        let taps = f.forward(&p, g.constant(Tensor::zeros([1, 1, 16, 16]))).unwrap();
        let sides: Vec<usize> = taps.iter().map(|t| t.shape()[2]).collect();
        assert_eq!(sides, [16, 8, 4, 2]);
        assert!(taps.iter().all(|t| t.value().data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn import_checks_layout() {
        let dir = tempfile::tempdir().unwrap();
        let f = FeatureNet::custom(vec![2, 3], vec![1, 2]).unwrap();
        let p = f.init_params(1);
        let path = dir.path().join("f.mcsr");
        p.save(&path).unwrap();
        assert_eq!(f.load_params(&path).unwrap(), p);
        FeatureNet::default().layout().save(&path).unwrap();
        assert!(f.load_params(&path).is_err());
    }
}
