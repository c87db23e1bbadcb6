//! Experiment configuration: TOML with dotted `key=value` overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::PATCH_SIDE;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nets::FusionMode;
use crate::phantom::PHANTOM_SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    OneLevel,
    ProgressiveConstrained,
    ProgressiveUnconstrained,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::OneLevel => "one_level",
            ModelKind::ProgressiveConstrained => "progressive_constrained",
            ModelKind::ProgressiveUnconstrained => "progressive_unconstrained",
        }
    }

    pub fn is_progressive(self) -> bool {
        self != ModelKind::OneLevel
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Network size presets. `standard` is the full architecture; the smaller
/// ones exist for tests and quick runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchSize {
    Standard,
    Reduced,
    Tiny,
}

/// Synthetic phantom corpus, used when `dataset` is unset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSet {
    pub train: usize,
    pub test: usize,
    pub first_seed: u64,
    pub side: usize,
    pub patch: usize,
}

impl Default for PhantomSet {
    fn default() -> Self {
        PhantomSet {
            train: 20,
            test: 5,
            first_seed: 1000,
            side: PHANTOM_SIDE,
            patch: PATCH_SIDE,
        }
    }
}

/// Optional k-fold split of the manifest; `folds = 0` disables it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldSpec {
    pub folds: usize,
    pub fold: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Dataset manifest file or built patch-store directory. Unset means a
    /// synthetic phantom corpus described by `phantoms`.
    pub dataset: Option<PathBuf>,
    pub mode: FusionMode,
    pub model: ModelKind,
    pub factor: u32,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub critic_steps_per_gen: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Test images scored after every epoch.
    pub eval_images: usize,
    /// Whether the adversarial term enters the generator objective.
    pub adversarial: bool,
    pub generator_arch: ArchSize,
    pub critic_arch: ArchSize,
    pub feature_arch: ArchSize,
    /// Externally exported feature-extractor weights (MCSR1).
    pub feature_weights: Option<PathBuf>,
    pub loss: LossWeights,
    pub phantoms: PhantomSet,
    pub kfold: FoldSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            mode: FusionMode::HighLevel,
            model: ModelKind::OneLevel,
            factor: 2,
            batch_size: 32,
            epochs: 50,
            lr: 2e-5,
            critic_steps_per_gen: 4,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            eval_images: 2,
            adversarial: true,
            generator_arch: ArchSize::Standard,
            critic_arch: ArchSize::Standard,
            feature_arch: ArchSize::Standard,
            feature_weights: None,
            loss: LossWeights::default(),
            phantoms: PhantomSet::default(),
            kfold: FoldSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// 20 training phantoms, 15 epochs, batch 8.
    pub fn desk_scale() -> Self {
        ExperimentConfig {
            batch_size: 8,
            epochs: 15,
            ..ExperimentConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides, then validates.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with(&text, overrides)
    }

    /// Applies overrides to an already resolved config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        Self::from_toml_with(&self.to_toml(), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.loss.validate()?;
        if ![2, 3, 4].contains(&self.factor) {
            return bad(format!("factor must be 2, 3 or 4, got {}", self.factor));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.critic_steps_per_gen == 0 {
            return bad("batch_size, epochs and critic_steps_per_gen must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive and finite, got {}", self.lr));
        }
        if self.model.is_progressive() {
            if self.factor != 4 {
                return bad(format!("{} needs factor 4, got {}", self.model, self.factor));
            }
            if self.mode != FusionMode::HighLevel {
                return bad(format!("{} uses high_level fusion, got mode {}", self.model, self.mode));
            }
        }
        let p = &self.phantoms;
        if self.dataset.is_none() && (p.train == 0 || p.test == 0) {
            return bad("phantoms.train and phantoms.test must be positive".into());
        }
        if p.patch == 0 || !p.side.is_multiple_of(p.patch) {
            return bad(format!(
                "phantoms.side {} is not a multiple of phantoms.patch {}",
                p.side, p.patch
            ));
        }
        if self.kfold.folds == 1 || (self.kfold.folds > 1 && self.kfold.fold >= self.kfold.folds) {
            return bad(format!("invalid kfold {}/{}", self.kfold.fold, self.kfold.folds));
        }
        Ok(())
    }

    /// The variant label used in metric reports.
    pub fn variant_name(&self) -> String {
        match self.model {
            ModelKind::OneLevel => self.mode.as_str().to_string(),
            m => m.as_str().to_string(),
        }
    }
}

/// Sets a dotted key. The value is parsed as a TOML value and falls back to
/// a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {assignment:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_level" => Ok(ModelKind::OneLevel),
            "progressive_constrained" => Ok(ModelKind::ProgressiveConstrained),
            "progressive_unconstrained" => Ok(ModelKind::ProgressiveUnconstrained),
            _ => Err(Error::Config(format!("unknown model kind {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!((c.batch_size, c.lr, c.critic_steps_per_gen), (32, 2e-5, 4));
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn overrides_parse_values_and_nest() {
        let c = ExperimentConfig::from_toml_with(
            "epochs = 3\n[loss]\nmse = 0.5\n",
            &[
                "loss.txt=0".into(),
                "mode=sisr".into(),
                "phantoms.side = 128".into(),
                "out_dir=/tmp/x y".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!((c.loss.mse, c.loss.txt), (0.5, 0.0));
        assert_eq!(c.mode, FusionMode::Sisr);
        assert_eq!(c.phantoms.side, 128);
        assert_eq!(c.out_dir, PathBuf::from("/tmp/x y"));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[loss]\nfoo = 1").is_err());
        assert!(ExperimentConfig::from_toml("factor = 5").is_err());
        assert!(ExperimentConfig::from_toml("model = \"progressive_constrained\"").is_err());
        assert!(ExperimentConfig::from_toml("model = \"progressive_constrained\"\nfactor = 4").is_ok());
        assert!(ExperimentConfig::from_toml_with("", &["noequals".into()]).is_err());
    }
}
