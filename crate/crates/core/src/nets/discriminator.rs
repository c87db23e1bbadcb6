use mcsr_autodiff::ops::{conv2d, dense, flatten, maxpool2, relu, reshape};
use mcsr_autodiff::{ParamSet, Tensor, Var};

use super::{channels_and_side, check_layout, he_normal, Bound};
use crate::error::{Error, Result};

pub const DISC_CHANNELS: [usize; 6] = [64, 64, 128, 128, 256, 256];
pub const DISC_HIDDEN: usize = 128;

/// WGAN critic: pairs of padded 3×3 conv + ReLU, each pair followed by 2×2
/// max pooling, then a ReLU hidden layer and a linear score.
///
/// Parameters: `disc.conv.<k>.{w,b}` (1-based), `disc.fc1.{w,b}`,
/// `disc.fc2.{w,b}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    channels: Vec<usize>,
    hidden: usize,
    side: usize,
}

impl Discriminator {
    /// The standard critic for `side×side` patches.
    pub fn new(side: usize) -> Result<Self> {
        Self::custom(DISC_CHANNELS.to_vec(), DISC_HIDDEN, side)
    }

    pub fn custom(channels: Vec<usize>, hidden: usize, side: usize) -> Result<Self> {
        if channels.is_empty() || !channels.len().is_multiple_of(2) || channels.contains(&0) || hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "critic needs an even, nonzero list of conv widths, got {channels:?}"
            )));
        }
        let blocks = channels.len() / 2;
        if side == 0 || !side.is_multiple_of(1 << blocks) {
            return Err(Error::SizeMismatch(format!(
                "side {side} is not divisible by 2^{blocks}"
            )));
        }
        Ok(Discriminator { channels, hidden, side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Sides after each pooling stage.
    pub fn block_sides(&self) -> Vec<usize> {
        (1..=self.channels.len() / 2).map(|b| self.side >> b).collect()
    }

    /// Length of the flattened feature vector entering the hidden layer.
    pub fn flatten_len(&self) -> usize {
        let s = self.side >> (self.channels.len() / 2);
        self.channels[self.channels.len() - 1] * s * s
    }

    fn layers(&self) -> Vec<(String, Vec<usize>, usize)> {
        let mut out = Vec::new();
        let mut cin = 1;
        for (k, &c) in self.channels.iter().enumerate() {
            out.push((format!("disc.conv.{}", k + 1), vec![c, cin, 3, 3], cin * 9));
            cin = c;
        }
        let flat = self.flatten_len();
        out.push(("disc.fc1".into(), vec![self.hidden, flat], flat));
        out.push(("disc.fc2".into(), vec![1, self.hidden], self.hidden));
        out
    }

    fn build(&self, seed: Option<u64>) -> ParamSet {
        let mut p = ParamSet::new();
        for (name, shape, fan_in) in self.layers() {
            let w = format!("{name}.w");
            let t = match seed {
                Some(s) => he_normal(s, &w, &shape, fan_in),
                None => Tensor::zeros(shape.clone()),
            };
            let cout = shape[0];
            p.push(w, t);
            p.push(format!("{name}.b"), Tensor::zeros([cout]));
        }
        p
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        self.build(Some(seed))
    }

    pub fn layout(&self) -> ParamSet {
        self.build(None)
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        check_layout("discriminator", &self.layout(), params)
    }

    /// Scores an `N×1×S×S` batch, returning a length-`N` vector.
    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let shape = x.shape();
        if shape.len() != 4 || channels_and_side(&shape) != Some((1, self.side)) {
            return Err(Error::SizeMismatch(format!(
                "critic expects N×1×{s}×{s}, got {shape:?}",
                s = self.side
            )));
        }
        let n = shape[0];
        let mut h = x;
        for k in 1..=self.channels.len() {
            let name = format!("disc.conv.{k}");
            h = relu(conv2d(
                h,
                p.get(&format!("{name}.w"))?,
                Some(p.get(&format!("{name}.b"))?),
                1,
            )?)?;
            if k % 2 == 0 {
                h = maxpool2(h)?;
            }
        }
        let h = flatten(h)?;
        debug_assert_eq!(h.shape(), [n, self.flatten_len()]);
        let h = relu(dense(h, p.get("disc.fc1.w")?, Some(p.get("disc.fc1.b")?))?)?;
        let s = dense(h, p.get("disc.fc2.w")?, Some(p.get("disc.fc2.b")?))?;
        Ok(reshape(s, &[n])?)
    }

    pub fn manifest(&self, seed: u64) -> String {
        let mut s = format!("discriminator\nside = {}\nseed = {seed}\n", self.side);
        s += &format!(
            "block_sides = {:?}\nflatten = {}\n",
            self.block_sides(),
            self.flatten_len()
        );
        for (name, shape, _) in self.layers() {
            s += &format!("{name}.w {shape:?}\n");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcsr_autodiff::Graph;

    #[test]
    fn standard_shapes() {
        let d = Discriminator::new(64).unwrap();
        assert_eq!(d.block_sides(), [32, 16, 8]);
        assert_eq!(d.flatten_len(), 16384);
        assert_eq!(d.layout().get("disc.fc1.w").unwrap().shape(), [128, 16384]);
        assert!(Discriminator::new(60).is_err());
    }

    #[test]
    fn zero_weights_score_is_final_bias() {
        let d = Discriminator::custom(vec![2, 2], 3, 8).unwrap();
        let mut p = d.layout();
        p.get_mut("disc.fc2.b").unwrap().data_mut()[0] = 0.7;
        let g = Graph::new();
        let b = Bound::frozen(&p, &g);
        let x = g.constant(Tensor::from_fn([2, 1, 8, 8], |i| i as f64));
        let s = d.forward(&b, x).unwrap().value();
        assert_eq!(s.data(), &[0.7, 0.7]);
    }
}
