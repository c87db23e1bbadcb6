//! Per-step and per-epoch training records and their CSV files.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

/// One critic cycle: `critic_steps` critic updates followed by one
/// generator update. A partial final cycle has no generator columns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub epoch: usize,
    /// Global generator step after this cycle.
    pub step: usize,
    pub adv: Option<f64>,
    pub mse: Option<f64>,
    pub per: Option<f64>,
    pub txt: Option<f64>,
    #[serde(rename = "total_G")]
    pub total_g: Option<f64>,
    /// Mean over the cycle's critic steps.
    #[serde(rename = "total_D")]
    pub total_d: f64,
    pub w_dis: f64,
    pub critic_steps: usize,
    pub l1_mse: Option<f64>,
    pub l1_per: Option<f64>,
    pub l1_txt: Option<f64>,
}

/// Epoch means of the step quantities plus held-out evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub critic_steps: usize,
    pub gen_steps: usize,
    /// Critic steps in a trailing cycle without a generator step.
    pub partial_critic_steps: usize,
    pub adv: f64,
    pub mse: f64,
    pub per: f64,
    pub txt: f64,
    #[serde(rename = "total_G")]
    pub total_g: f64,
    #[serde(rename = "total_D")]
    pub total_d: f64,
    pub w_dis: f64,
    pub l1_mse: Option<f64>,
    pub l1_per: Option<f64>,
    pub l1_txt: Option<f64>,
    pub eval_ssim: f64,
    pub eval_psnr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRow>,
}

pub const EPOCH_CSV: &str = "epochs.csv";
pub const STEP_CSV: &str = "steps.csv";

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

impl TrainingLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_rows(path.as_ref(), &self.epochs)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::InvalidArgument(format!(
                "training log {} does not exist",
                path.display()
            )));
        }
        Ok(TrainingLog {
            epochs: read_rows(path)?,
        })
    }

    pub fn last(&self) -> Option<&EpochRow> {
        self.epochs.last()
    }

    /// Named per-epoch series. Level-1 series appear only when logged.
    pub fn series(&self) -> Vec<(&'static str, Vec<(usize, f64)>)> {
        let col = |f: fn(&EpochRow) -> f64| self.epochs.iter().map(|r| (r.epoch, f(r))).collect::<Vec<_>>();
        let mut out = vec![
            ("l_per", col(|r| r.per)),
            ("l_mse", col(|r| r.mse)),
            ("l_txt", col(|r| r.txt)),
            ("l_adv", col(|r| r.adv)),
            ("w_dis", col(|r| r.w_dis)),
            ("total_g", col(|r| r.total_g)),
            ("total_d", col(|r| r.total_d)),
            ("eval_ssim", col(|r| r.eval_ssim)),
            ("eval_psnr", col(|r| r.eval_psnr)),
        ];
        let opt = |f: fn(&EpochRow) -> Option<f64>| -> Option<Vec<(usize, f64)>> {
            self.epochs.iter().map(|r| f(r).map(|v| (r.epoch, v))).collect()
        };
        for (name, f) in [
            ("l1_mse", (|r: &EpochRow| r.l1_mse) as fn(&EpochRow) -> Option<f64>),
            ("l1_per", |r| r.l1_per),
            ("l1_txt", |r| r.l1_txt),
        ] {
            if let Some(s) = opt(f).filter(|s| !s.is_empty()) {
                out.push((name, s));
            }
        }
        out
    }
}

/// Writes `<dir>/<quantity>.csv` with columns `epoch,value` for every
/// series of the log. Values are written in shortest round-trip form.
pub fn emit_curves(log: &TrainingLog, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    if log.epochs.is_empty() {
        return Err(Error::InvalidArgument("training log has no epochs".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for (name, series) in log.series() {
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["epoch", "value"])?;
        for (e, v) in series {
            w.write_record([e.to_string(), format!("{v}")])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
