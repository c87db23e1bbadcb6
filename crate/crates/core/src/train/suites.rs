//! Multi-run studies sharing one dataset and seed: the fusion ablation, the
//! progressive objective comparison and the loss-combination sweep.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, ModelKind};
use super::eval::{evaluate_model, write_predictions, LR_VARIANT};
use super::log::{write_rows, TrainingLog};
use super::trainer::{prepare_store, Trainer};
use crate::error::Result;
use crate::metrics::{MetricReport, Summary};
use crate::nets::FusionMode;

/// One trained member of a suite.
#[derive(Clone, Debug)]
pub struct SuiteRun {
    pub name: String,
    pub dir: PathBuf,
    pub log: TrainingLog,
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub runs: Vec<SuiteRun>,
    /// Per-image metrics of every run.
    pub report: MetricReport,
    /// The unprocessed LR input scored against HR.
    pub baseline: MetricReport,
}

/// Builds the suite's dataset once and points every run at it.
fn shared(base: &ExperimentConfig) -> Result<ExperimentConfig> {
    let store = prepare_store(base)?;
    Ok(ExperimentConfig {
        dataset: Some(store.dir().to_path_buf()),
        ..base.clone()
    })
}

fn run_member(cfg: ExperimentConfig, name: &str, out: &mut SuiteOutcome) -> Result<()> {
    let dir = cfg.out_dir.clone();
    let variant = name.to_string();
    let mut t = Trainer::resume(cfg)?;
    let log = t.run()?;
    let factor = t.config().factor;
    let (report, preds) = evaluate_model(t.model(), t.generator_params(), t.store(), factor, &variant, true)?;
    write_predictions(&dir.join("images"), &preds)?;
    for r in report.rows {
        if r.variant == LR_VARIANT {
            if out.runs.is_empty() {
                out.baseline.rows.push(r);
            }
        } else {
            out.report.rows.push(r);
        }
    }
    out.runs.push(SuiteRun {
        name: variant,
        dir,
        log,
    });
    Ok(())
}

fn finish(out_dir: &Path, name: &str, outcome: &SuiteOutcome) -> Result<()> {
    outcome.report.write_csv(out_dir.join(format!("{name}.csv")))?;
    outcome.baseline.write_csv(out_dir.join("baseline.csv"))
}

fn empty() -> SuiteOutcome {
    SuiteOutcome {
        runs: Vec::new(),
        report: MetricReport::default(),
        baseline: MetricReport::default(),
    }
}

/// Trains `sisr`, `synthesis`, `low_level` and `high_level` generators
/// under identical budgets; writes `ablation.csv`.
pub fn ablation_suite(base: &ExperimentConfig) -> Result<SuiteOutcome> {
    let base = shared(&ExperimentConfig {
        model: ModelKind::OneLevel,
        ..base.clone()
    })?;
    let mut out = empty();
    for mode in FusionMode::ALL {
        let cfg = ExperimentConfig {
            mode,
            out_dir: base.out_dir.join(mode.as_str()),
            ..base.clone()
        };
        run_member(cfg, mode.as_str(), &mut out)?;
    }
    finish(&base.out_dir, "ablation", &out)?;
    Ok(out)
}

/// Trains constrained and unconstrained progressive models at factor 4;
/// writes `progressive.csv` with level-2 rows against HR and level-1 rows
/// against the 2-fold target.
pub fn progressive_suite(base: &ExperimentConfig) -> Result<SuiteOutcome> {
    let base = shared(&ExperimentConfig {
        factor: 4,
        mode: FusionMode::HighLevel,
        model: ModelKind::ProgressiveConstrained,
        ..base.clone()
    })?;
    let mut out = empty();
    for model in [ModelKind::ProgressiveConstrained, ModelKind::ProgressiveUnconstrained] {
        let cfg = ExperimentConfig {
            model,
            out_dir: base.out_dir.join(model.as_str()),
            ..base.clone()
        };
        run_member(cfg, model.as_str(), &mut out)?;
    }
    finish(&base.out_dir, "progressive", &out)?;
    Ok(out)
}

/// One row of `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: String,
    pub mse: f64,
    pub per: f64,
    pub txt: f64,
    pub n: usize,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub psnr_mean: f64,
    pub psnr_std: f64,
}

/// The three loss combinations, named by their active terms. Active
/// weights come from `base.loss`.
pub fn sweep_configs(base: &ExperimentConfig) -> Vec<(&'static str, ExperimentConfig)> {
    let w = base.loss;
    let with = |mse: f64, txt: f64| {
        let mut c = base.clone();
        c.loss.mse = mse;
        c.loss.txt = txt;
        c
    };
    vec![
        ("adv_per", with(0.0, 0.0)),
        ("adv_per_mse", with(w.mse, 0.0)),
        ("adv_per_mse_txt", with(w.mse, w.txt)),
    ]
}

/// Trains each loss combination; writes `sweep.csv` (one row per
/// combination) and `sweep_metrics.csv` (per image).
pub fn loss_sweep(base: &ExperimentConfig) -> Result<(Vec<SweepRow>, SuiteOutcome)> {
    let base = shared(base)?;
    let mut out = empty();
    let mut rows = Vec::new();
    for (name, cfg) in sweep_configs(&base) {
        let cfg = ExperimentConfig {
            out_dir: base.out_dir.join(name),
            ..cfg
        };
        let w = cfg.loss;
        run_member(cfg, name, &mut out)?;
        let pick = |f: fn(&crate::metrics::MetricRow) -> f64| {
            Summary::of(
                &out.report
                    .rows
                    .iter()
                    .filter(|r| r.variant == name)
                    .map(f)
                    .collect::<Vec<_>>(),
            )
        };
        let (s, p) = (pick(|r| r.ssim), pick(|r| r.psnr_db));
        rows.push(SweepRow {
            config: name.to_string(),
            mse: w.mse,
            per: w.per,
            txt: w.txt,
            n: s.n,
            ssim_mean: s.mean,
            ssim_std: s.std,
            psnr_mean: p.mean,
            psnr_std: p.std,
        });
    }
    write_rows(&base.out_dir.join("sweep.csv"), &rows)?;
    finish(&base.out_dir, "sweep_metrics", &out)?;
    Ok((rows, out))
}
