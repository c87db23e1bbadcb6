//! Network construction from a config and the generator forward used by
//! training and inference.

use mcsr_autodiff::{Graph, ParamSet, Tensor, Var};

use super::config::{ArchSize, ExperimentConfig, ModelKind};
use crate::error::Result;
use crate::nets::{
    Bound, Discriminator, FeatureNet, FusionMode, GenInput, Generator, GeneratorArch, InputSource, Progressive,
};

pub fn generator_arch(size: ArchSize) -> GeneratorArch {
    match size {
        ArchSize::Standard => GeneratorArch::standard(),
        ArchSize::Reduced => GeneratorArch::reduced(),
        ArchSize::Tiny => GeneratorArch::tiny(),
    }
}

pub fn critic(size: ArchSize, side: usize) -> Result<Discriminator> {
    match size {
        ArchSize::Standard => Discriminator::new(side),
        ArchSize::Reduced => Discriminator::custom(vec![8, 8, 16, 16, 32, 32], 32, side),
        ArchSize::Tiny => Discriminator::custom(vec![4, 4], 8, side),
    }
}

pub fn feature_net(size: ArchSize) -> Result<FeatureNet> {
    match size {
        ArchSize::Standard => Ok(FeatureNet::default()),
        ArchSize::Reduced => FeatureNet::custom(vec![4, 4, 8, 8, 16, 16, 16, 32, 32, 32], vec![2, 4, 7, 10]),
        ArchSize::Tiny => FeatureNet::custom(vec![4, 4, 8, 8], vec![2, 4]),
    }
}

/// One patch batch, each tensor `N×1×S×S`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub lr: Tensor,
    pub hr: Tensor,
    pub reference: Tensor,
    pub lr2: Option<Tensor>,
}

/// Generator outputs: the final estimate and, for progressive models, the
/// level-1 estimate.
#[derive(Clone, Copy, Debug)]
pub struct GenOutput<'g> {
    pub sr: Var<'g>,
    pub level1: Option<Var<'g>>,
    pub source: InputSource,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GenModel {
    OneLevel(Generator),
    Progressive(Progressive),
}

impl GenModel {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let arch = generator_arch(cfg.generator_arch);
        Ok(match cfg.model {
            ModelKind::OneLevel => GenModel::OneLevel(Generator::new(arch, cfg.mode)?),
            _ => GenModel::Progressive(Progressive::new(arch)?),
        })
    }

    pub fn mode(&self) -> FusionMode {
        match self {
            GenModel::OneLevel(g) => g.mode(),
            GenModel::Progressive(_) => FusionMode::HighLevel,
        }
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        match self {
            GenModel::OneLevel(g) => g.init_params(seed),
            GenModel::Progressive(p) => p.init_params(seed),
        }
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        match self {
            GenModel::OneLevel(g) => g.check_params(params),
            GenModel::Progressive(p) => p.check_params(params),
        }
    }

    pub fn manifest(&self, seed: u64) -> String {
        match self {
            GenModel::OneLevel(g) => g.manifest(seed),
            GenModel::Progressive(p) => p.manifest(seed),
        }
    }

    /// Runs the generator on `lr`/`reference` batches wired for its mode.
    pub fn forward<'g>(
        &self,
        p: &Bound<'g>,
        graph: &'g Graph,
        lr: &Tensor,
        reference: &Tensor,
    ) -> Result<GenOutput<'g>> {
        match self {
            GenModel::OneLevel(g) => {
                let input = GenInput::new(g.mode(), lr, reference)?;
                let r = input.reference.map(|t| graph.constant(t));
                let sr = g.forward(p, graph.constant(input.x), r)?;
                Ok(GenOutput {
                    sr,
                    level1: None,
                    source: input.source,
                })
            }
            GenModel::Progressive(m) => {
                let (l1, sr) = m.forward(p, graph.constant(lr.clone()), graph.constant(reference.clone()))?;
                Ok(GenOutput {
                    sr,
                    level1: Some(l1),
                    source: InputSource::LowResolutionAndReference,
                })
            }
        }
    }

    /// Inference with frozen parameters: `(final, level-1)` values.
    pub fn predict(&self, params: &ParamSet, lr: &Tensor, reference: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let g = Graph::new();
        let b = Bound::frozen(params, &g);
        let out = self.forward(&b, &g, lr, reference)?;
        Ok(((*out.sr.value()).clone(), out.level1.map(|v| (*v.value()).clone())))
    }
}
