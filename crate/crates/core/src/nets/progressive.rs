use mcsr_autodiff::{ParamSet, Var};

use super::{check_layout, Bound, FusionMode, Generator, GeneratorArch};
use crate::error::Result;

/// Two chained high-level generators with one shared reference encoder.
/// Level 1 maps the 4-fold LR patch to a 2-fold estimate, level 2 maps that
/// estimate to the HR estimate.
///
/// Parameters: `l1.enc.*`, `l1.dec.*`, `l2.enc.*`, `l2.dec.*`, `ref.*`.
#[derive(Clone, Debug, PartialEq)]
pub struct Progressive {
    pub level1: Generator,
    pub level2: Generator,
}

impl Progressive {
    pub fn new(arch: GeneratorArch) -> Result<Self> {
        Ok(Progressive {
            level1: Generator::with_prefixes(arch.clone(), FusionMode::HighLevel, "l1.", "ref.")?,
            level2: Generator::with_prefixes(arch, FusionMode::HighLevel, "l2.", "ref.")?,
        })
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut p = self.level1.init_own(seed);
        p.extend(self.level2.init_own(seed));
        p.extend(self.level1.init_reference(seed));
        p
    }

    pub fn layout(&self) -> ParamSet {
        let mut p = ParamSet::new();
        let l1 = self.level1.layout();
        let l2 = self.level2.layout();
        p.extend(
            l1.iter()
                .filter(|(n, _)| n.starts_with("l1."))
                .map(|(n, t)| (n.to_string(), t.clone())),
        );
        p.extend(
            l2.iter()
                .filter(|(n, _)| n.starts_with("l2."))
                .map(|(n, t)| (n.to_string(), t.clone())),
        );
        p.extend(
            l1.iter()
                .filter(|(n, _)| n.starts_with("ref."))
                .map(|(n, t)| (n.to_string(), t.clone())),
        );
        p
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        check_layout("progressive generator", &self.layout(), params)
    }

    /// Returns `(level-1 output, level-2 output)`.
    pub fn forward<'g>(&self, p: &Bound<'g>, lr4: Var<'g>, reference: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
        let features = self.level1.encode_reference(p, reference)?;
        let sr1 = self.level1.forward_with_features(p, lr4, Some(features))?;
        let sr2 = self.level2.forward_with_features(p, sr1, Some(features))?;
        Ok((sr1, sr2))
    }

    pub fn manifest(&self, seed: u64) -> String {
        format!(
            "progressive\n[level1]\n{}[level2]\n{}",
            self.level1.manifest(seed),
            self.level2.manifest(seed)
        )
    }
}
