use std::fmt;
use std::str::FromStr;

use mcsr_autodiff::ops::{add, concat_channels, conv2d, conv_transpose2d, relu};
use mcsr_autodiff::{ParamSet, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::{channels_and_side, check_layout, he_normal, Bound};
use crate::error::{Error, Result};

/// How the reference contrast enters the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// LR patch only.
    Sisr,
    /// Reference patch only; the target contrast is synthesized from it.
    Synthesis,
    /// LR and reference stacked as a 2-channel input.
    LowLevel,
    /// LR through the main encoder, reference through its own encoder,
    /// concatenated at the bottleneck.
    HighLevel,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [
        FusionMode::Sisr,
        FusionMode::Synthesis,
        FusionMode::LowLevel,
        FusionMode::HighLevel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Sisr => "sisr",
            FusionMode::Synthesis => "synthesis",
            FusionMode::LowLevel => "low_level",
            FusionMode::HighLevel => "high_level",
        }
    }

    pub fn input_channels(self) -> usize {
        if self == FusionMode::LowLevel {
            2
        } else {
            1
        }
    }

    pub fn uses_reference_net(self) -> bool {
        self == FusionMode::HighLevel
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fusion mode {s:?}")))
    }
}

/// Which patches a generator input was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputSource {
    LowResolution,
    Reference,
    LowResolutionAndReference,
}

/// Generator input wired for a fusion mode.
#[derive(Clone, Debug, PartialEq)]
pub struct GenInput {
    /// Main-encoder input, `N×C×H×W` with `C = mode.input_channels()`.
    pub x: Tensor,
    /// Reference-encoder input (high-level fusion only).
    pub reference: Option<Tensor>,
    pub source: InputSource,
}

impl GenInput {
    /// `lr` and `reference` are `N×1×H×W` batches.
    pub fn new(mode: FusionMode, lr: &Tensor, reference: &Tensor) -> Result<Self> {
        if lr.shape() != reference.shape() {
            return Err(Error::SizeMismatch(format!(
                "LR batch {:?} and reference batch {:?} differ",
                lr.shape(),
                reference.shape()
            )));
        }
        Ok(match mode {
            FusionMode::Sisr => GenInput {
                x: lr.clone(),
                reference: None,
                source: InputSource::LowResolution,
            },
            FusionMode::Synthesis => GenInput {
                x: reference.clone(),
                reference: None,
                source: InputSource::Reference,
            },
            FusionMode::LowLevel => GenInput {
                x: stack_channels(lr, reference)?,
                reference: None,
                source: InputSource::LowResolutionAndReference,
            },
            FusionMode::HighLevel => GenInput {
                x: lr.clone(),
                reference: Some(reference.clone()),
                source: InputSource::LowResolutionAndReference,
            },
        })
    }
}

/// `N×1×H×W, N×1×H×W → N×2×H×W`.
fn stack_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let &[n, 1, h, w] = a.shape() else {
        return Err(Error::SizeMismatch(format!(
            "expected an N×1×H×W batch, got {:?}",
            a.shape()
        )));
    };
    let plane = h * w;
    let mut data = Vec::with_capacity(2 * a.numel());
    for s in 0..n {
        data.extend_from_slice(&a.data()[s * plane..(s + 1) * plane]);
        data.extend_from_slice(&b.data()[s * plane..(s + 1) * plane]);
    }
    Ok(Tensor::new([n, 2, h, w], data)?)
}

/// Layer widths of the encoder and decoder.
///
/// Every layer is a 3×3 unpadded (transposed) convolution, so each encoder
/// layer shrinks the side by 2 and each decoder layer grows it by 2. Decoder
/// layer `j` (1-based, even, `j < n`) receives the output of encoder layer
/// `n − j` by addition, after its ReLU.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorArch {
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
}

impl GeneratorArch {
    pub fn standard() -> Self {
        GeneratorArch {
            encoder: vec![32, 32, 64, 64, 128, 128, 256, 256],
            decoder: vec![256, 128, 128, 64, 64, 32, 32, 1],
        }
    }

    /// A 4+4 layer variant with the same wiring, for fast tests.
    pub fn reduced() -> Self {
        GeneratorArch {
            encoder: vec![4, 4, 8, 8],
            decoder: vec![8, 4, 4, 1],
        }
    }

    /// A 3+3 layer variant with one skip that fits an 8×8 input.
    pub fn tiny() -> Self {
        GeneratorArch {
            encoder: vec![3, 4, 4],
            decoder: vec![4, 3, 1],
        }
    }

    pub fn depth(&self) -> usize {
        self.encoder.len()
    }

    /// `(decoder layer, encoder layer)` pairs joined by skip additions.
    pub fn skips(&self) -> Vec<(usize, usize)> {
        let n = self.depth();
        (2..n).step_by(2).map(|j| (j, n - j)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.depth();
        if n < 2 || self.decoder.len() != n {
            return Err(Error::InvalidArgument(format!(
                "encoder and decoder need the same depth of at least 2, got {} and {}",
                n,
                self.decoder.len()
            )));
        }
        if self.decoder[n - 1] != 1 {
            return Err(Error::InvalidArgument(
                "the last decoder layer must have one channel".into(),
            ));
        }
        if self.encoder.iter().chain(&self.decoder).any(|&c| c == 0) {
            return Err(Error::InvalidArgument("zero-width layer".into()));
        }
        for (j, e) in self.skips() {
            if self.decoder[j - 1] != self.encoder[e - 1] {
                return Err(Error::InvalidArgument(format!(
                    "skip from encoder layer {e} ({} channels) cannot join decoder layer {j} ({} channels)",
                    self.encoder[e - 1],
                    self.decoder[j - 1]
                )));
            }
        }
        Ok(())
    }

    /// Output side of every encoder layer then every decoder layer for a
    /// `side×side` input.
    pub fn size_ladder(&self, side: usize) -> Result<Vec<usize>> {
        let n = self.depth();
        if side <= 2 * n {
            return Err(Error::SizeMismatch(format!(
                "{side}×{side} input is too small for {n} unpadded layers"
            )));
        }
        let enc = (1..=n).map(|k| side - 2 * k);
        let dec = (1..=n).map(|k| side - 2 * n + 2 * k);
        Ok(enc.chain(dec).collect())
    }
}

/// Encoder-decoder generator for one fusion mode.
///
/// Parameter names are `<prefix>enc.<k>.{w,b}`, `<prefix>dec.<k>.{w,b}` and,
/// for high-level fusion, `<ref_prefix><k>.{w,b}`, with 1-based `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    arch: GeneratorArch,
    mode: FusionMode,
    prefix: String,
    ref_prefix: String,
}

impl Generator {
    pub fn new(arch: GeneratorArch, mode: FusionMode) -> Result<Self> {
        Self::with_prefixes(arch, mode, "", "ref.")
    }

    pub fn with_prefixes(arch: GeneratorArch, mode: FusionMode, prefix: &str, ref_prefix: &str) -> Result<Self> {
        arch.validate()?;
        Ok(Generator {
            arch,
            mode,
            prefix: prefix.to_string(),
            ref_prefix: ref_prefix.to_string(),
        })
    }

    pub fn arch(&self) -> &GeneratorArch {
        &self.arch
    }

    pub fn mode(&self) -> FusionMode {
        self.mode
    }

    /// Input channels of the first decoder layer.
    pub fn bottleneck_channels(&self) -> usize {
        let c = self.arch.encoder[self.depth() - 1];
        if self.mode.uses_reference_net() {
            2 * c
        } else {
            c
        }
    }

    fn depth(&self) -> usize {
        self.arch.depth()
    }

    fn enc_name(&self, k: usize) -> String {
        format!("{}enc.{k}", self.prefix)
    }

    fn dec_name(&self, k: usize) -> String {
        format!("{}dec.{k}", self.prefix)
    }

    fn ref_name(&self, k: usize) -> String {
        format!("{}{k}", self.ref_prefix)
    }

    /// `(name, shape, fan_in)` of every encoder and decoder weight; each has a
    /// bias named like it with `.b`.
    fn own_layers(&self) -> Vec<(String, Vec<usize>, usize)> {
        let mut out = Vec::new();
        let mut cin = self.mode.input_channels();
        for (k, &cout) in self.arch.encoder.iter().enumerate() {
            out.push((self.enc_name(k + 1), vec![cout, cin, 3, 3], cin * 9));
            cin = cout;
        }
        cin = self.bottleneck_channels();
        for (k, &cout) in self.arch.decoder.iter().enumerate() {
            // Transposed kernels are C_in×C_out×3×3.
            out.push((self.dec_name(k + 1), vec![cin, cout, 3, 3], cin * 9));
            cin = cout;
        }
        out
    }

    fn reference_layers(&self) -> Vec<(String, Vec<usize>, usize)> {
        let mut out = Vec::new();
        let mut cin = 1;
        for (k, &cout) in self.arch.encoder.iter().enumerate() {
            out.push((self.ref_name(k + 1), vec![cout, cin, 3, 3], cin * 9));
            cin = cout;
        }
        out
    }

    fn build(layers: Vec<(String, Vec<usize>, usize)>, seed: Option<u64>) -> ParamSet {
        let mut p = ParamSet::new();
        for (name, shape, fan_in) in layers {
            let w = format!("{name}.w");
            let t = match seed {
                Some(s) => he_normal(s, &w, &shape, fan_in),
                None => Tensor::zeros(shape.clone()),
            };
            let cout = if name.contains("dec.") { shape[1] } else { shape[0] };
            p.push(w, t);
            p.push(format!("{name}.b"), Tensor::zeros([cout]));
        }
        p
    }

    /// Encoder and decoder parameters, He-initialized.
    pub fn init_own(&self, seed: u64) -> ParamSet {
        Self::build(self.own_layers(), Some(seed))
    }

    /// Reference-encoder parameters (empty unless high-level fusion).
    pub fn init_reference(&self, seed: u64) -> ParamSet {
        if self.mode.uses_reference_net() {
            Self::build(self.reference_layers(), Some(seed))
        } else {
            ParamSet::new()
        }
    }

    /// All parameters: encoder, decoder, then reference encoder.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        self.init_own(seed)
            .into_iter()
            .chain(self.init_reference(seed))
            .collect()
    }

    /// Zero tensors with the expected names and shapes.
    pub fn layout(&self) -> ParamSet {
        let mut layers = self.own_layers();
        if self.mode.uses_reference_net() {
            layers.extend(self.reference_layers());
        }
        Self::build(layers, None)
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        check_layout("generator", &self.layout(), params)
    }

    fn check_input(&self, x: &[usize], want_c: usize, what: &str) -> Result<usize> {
        match channels_and_side(x) {
            Some((c, side)) if c == want_c => {
                self.arch.size_ladder(side)?;
                Ok(side)
            }
            _ => Err(Error::SizeMismatch(format!(
                "{what} must be square with {want_c} channel(s), got {x:?}"
            ))),
        }
    }

    /// Bottleneck features of the reference encoder.
    pub fn encode_reference<'g>(&self, p: &Bound<'g>, reference: Var<'g>) -> Result<Var<'g>> {
        if !self.mode.uses_reference_net() {
            return Err(Error::InvalidArgument(format!(
                "{} fusion has no reference encoder",
                self.mode
            )));
        }
        let side = self.check_input(&reference.shape(), 1, "reference input")?;
        let mut h = reference;
        for k in 1..=self.depth() {
            let name = self.ref_name(k);
            h = relu(conv2d(
                h,
                p.get(&format!("{name}.w"))?,
                Some(p.get(&format!("{name}.b"))?),
                0,
            )?)?;
            expect_side(&h, side - 2 * k, &name)?;
        }
        Ok(h)
    }

    /// Full forward pass. `reference` must be given exactly for high-level
    /// fusion.
    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>, reference: Option<Var<'g>>) -> Result<Var<'g>> {
        let features = match (self.mode.uses_reference_net(), reference) {
            (true, Some(r)) => Some(self.encode_reference(p, r)?),
            (false, None) => None,
            (true, None) => {
                return Err(Error::InvalidArgument(
                    "high_level fusion needs a reference patch".into(),
                ))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidArgument(format!(
                    "{} fusion takes no separate reference patch",
                    self.mode
                )))
            }
        };
        self.forward_with_features(p, x, features)
    }

    /// Forward pass given precomputed reference-encoder features, so several
    /// generators can share one reference encoding.
    pub fn forward_with_features<'g>(
        &self,
        p: &Bound<'g>,
        x: Var<'g>,
        ref_features: Option<Var<'g>>,
    ) -> Result<Var<'g>> {
        let n = self.depth();
        let side = self.check_input(&x.shape(), self.mode.input_channels(), "generator input")?;
        let ladder = self.arch.size_ladder(side)?;
        let mut enc_out = Vec::with_capacity(n);
        let mut h = x;
        for k in 1..=n {
            let name = self.enc_name(k);
            h = relu(conv2d(
                h,
                p.get(&format!("{name}.w"))?,
                Some(p.get(&format!("{name}.b"))?),
                0,
            )?)?;
            expect_side(&h, ladder[k - 1], &name)?;
            enc_out.push(h);
        }
        match (self.mode.uses_reference_net(), ref_features) {
            (true, Some(f)) => {
                if f.shape() != h.shape() {
                    return Err(Error::SizeMismatch(format!(
                        "reference features {:?} do not match bottleneck {:?}",
                        f.shape(),
                        h.shape()
                    )));
                }
                h = concat_channels(h, f)?;
            }
            (false, None) => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "reference features do not fit {} fusion",
                    self.mode
                )))
            }
        }
        let skips = self.arch.skips();
        for j in 1..=n {
            let name = self.dec_name(j);
            h = conv_transpose2d(h, p.get(&format!("{name}.w"))?, Some(p.get(&format!("{name}.b"))?), 0)?;
            if j < n {
                h = relu(h)?;
            }
            if let Some(&(_, e)) = skips.iter().find(|(d, _)| *d == j) {
                h = add(h, enc_out[e - 1])?;
            }
            expect_side(&h, ladder[n + j - 1], &name)?;
        }
        Ok(h)
    }

    /// Plain-text description of the layers, for run directories.
    pub fn manifest(&self, seed: u64) -> String {
        let mut s = format!("generator\nmode = {}\nseed = {seed}\n", self.mode);
        s += &format!("skips = {:?}\n", self.arch.skips());
        for (name, t) in self.layout().iter() {
            if name.ends_with(".w") {
                s += &format!("{name} {:?}\n", t.shape());
            }
        }
        s
    }
}

fn expect_side(v: &Var<'_>, side: usize, layer: &str) -> Result<()> {
    let shape = v.shape();
    match channels_and_side(&shape) {
        Some((_, s)) if s == side => Ok(()),
        _ => Err(Error::SizeMismatch(format!(
            "{layer} produced {shape:?}, expected side {side}"
        ))),
    }
}
