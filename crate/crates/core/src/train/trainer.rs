//! The WGAN-GP training loop.

use std::fs;
use std::path::{Path, PathBuf};

use mcsr_autodiff::{Adam, AdamConfig, AutodiffError, Graph, ParamSet, Tensor};
use rand::seq::SliceRandom;

use super::config::ExperimentConfig;
use super::eval::{predict_image, quick_scores, stack, write_predictions, Prediction};
use super::log::{read_rows, write_rows, EpochRow, StepRow, TrainingLog, EPOCH_CSV, STEP_CSV};
use super::model::{critic, feature_net, Batch, GenModel};
use crate::dataset::{build_dataset, DatasetManifest, PatchStore, PatchTuple, Split};
use crate::error::{Error, Result};
use crate::losses::{adversarial_loss_g, discriminator_objective, draw_eps, generator_objective, ContentTerms};
use crate::nets::{Bound, Discriminator, FeatureNet};
use crate::rng;

pub const CHECKPOINT: &str = "checkpoint.mcsr1";
pub const RESOLVED_CONFIG: &str = "config.toml";
pub const ARCHITECTURE: &str = "architecture.txt";

/// Opens or builds the patch store a config refers to.
///
/// A directory containing `index.csv` is opened as is. A manifest file, or
/// the synthetic phantom corpus when `dataset` is unset, is built into
/// `<out_dir>/data` unless an identical build is already there.
pub fn prepare_store(cfg: &ExperimentConfig) -> Result<PatchStore> {
    let (mut manifest, base) = match &cfg.dataset {
        Some(p) if p.join("index.csv").exists() => return PatchStore::open(p),
        Some(p) => (
            DatasetManifest::load(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => {
            let ph = &cfg.phantoms;
            let mut m = DatasetManifest::synthetic(ph.train, ph.test, ph.first_seed, &[cfg.factor]);
            m.phantom_side = ph.side;
            m.patch_size = ph.patch;
            (m, PathBuf::new())
        }
    };
    if cfg.kfold.folds > 1 {
        manifest = manifest.kfold(cfg.kfold.folds, cfg.kfold.fold)?;
    }
    let dir = cfg.out_dir.join("data");
    if dir.join("index.csv").exists() {
        if let Ok(store) = PatchStore::open(&dir) {
            if store.manifest() == &manifest {
                return Ok(store);
            }
        }
    }
    build_dataset(&manifest, &base, &dir)
}

/// Training state: networks, optimizers, data and logs.
pub struct Trainer {
    cfg: ExperimentConfig,
    store: PatchStore,
    model: GenModel,
    critic: Discriminator,
    features: FeatureNet,
    g: ParamSet,
    d: ParamSet,
    f: ParamSet,
    adam_g: Adam,
    adam_d: Adam,
    train: Vec<PatchTuple>,
    eval_ids: Vec<String>,
    epoch: usize,
    critic_steps: u64,
    gen_steps: u64,
    log: TrainingLog,
    steps: Vec<StepRow>,
}

struct CriticStats {
    total: f64,
    w_dis: f64,
}

#[derive(Default)]
struct GenStats {
    adv: f64,
    mse: f64,
    per: f64,
    txt: f64,
    total: f64,
    level1: Option<(f64, f64, f64)>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl Trainer {
    /// Fresh state. Writes the resolved config and architecture manifest.
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
        let store = prepare_store(&cfg)?;
        let train = store.load(Split::Train, cfg.factor)?;
        if train.is_empty() {
            return Err(Error::Dataset(format!("no training patches at factor {}", cfg.factor)));
        }
        let batches = train.len().div_ceil(cfg.batch_size);
        if batches < cfg.critic_steps_per_gen {
            return Err(Error::Config(format!(
                "{} training patches in batches of {} give {batches} critic steps per epoch, fewer than one cycle of {}",
                train.len(),
                cfg.batch_size,
                cfg.critic_steps_per_gen
            )));
        }
        if cfg.model.is_progressive() && train.iter().any(|t| t.lr2.is_none()) {
            return Err(Error::Dataset("progressive training needs 2-fold targets".into()));
        }
        let side = train[0].hr.height();
        let model = GenModel::from_config(&cfg)?;
        let critic = critic(cfg.critic_arch, side)?;
        let features = feature_net(cfg.feature_arch)?;
        let g = model.init_params(cfg.seed);
        let d = critic.init_params(cfg.seed);
        let f = match &cfg.feature_weights {
            Some(p) => features.load_params(p)?,
            None => features.init_params(cfg.seed),
        };
        let adam_g = Adam::new(AdamConfig::with_lr(cfg.lr), &g);
        let adam_d = Adam::new(AdamConfig::with_lr(cfg.lr), &d);
        let eval_ids: Vec<String> = store.pair_ids(Split::Test).into_iter().take(cfg.eval_images).collect();

        let write = |name: &str, text: String| {
            let p = cfg.out_dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write(RESOLVED_CONFIG, cfg.to_toml())?;
        write(
            ARCHITECTURE,
            format!(
                "{}\n[critic]\n{}\n[features]\n{:?}\n",
                model.manifest(cfg.seed),
                critic.manifest(cfg.seed),
                features
            ),
        )?;
        Ok(Trainer {
            cfg,
            store,
            model,
            critic,
            features,
            g,
            d,
            f,
            adam_g,
            adam_d,
            train,
            eval_ids,
            epoch: 0,
            critic_steps: 0,
            gen_steps: 0,
            log: TrainingLog::default(),
            steps: Vec::new(),
        })
    }

    /// Continues from `<out_dir>/checkpoint.mcsr1` when present, truncating
    /// the CSV logs to the checkpointed epoch.
    pub fn resume(cfg: ExperimentConfig) -> Result<Self> {
        let mut t = Trainer::new(cfg)?;
        let path = t.cfg.out_dir.join(CHECKPOINT);
        if !path.exists() {
            return Ok(t);
        }
        t.load_checkpoint(&path)?;
        let epochs: Vec<EpochRow> = read_rows(&t.cfg.out_dir.join(EPOCH_CSV))?;
        let steps: Vec<StepRow> = read_rows(&t.cfg.out_dir.join(STEP_CSV))?;
        t.log.epochs = epochs.into_iter().filter(|r| r.epoch <= t.epoch).collect();
        t.steps = steps.into_iter().filter(|r| r.epoch <= t.epoch).collect();
        if t.log.epochs.len() != t.epoch {
            return Err(Error::format(
                t.cfg.out_dir.join(EPOCH_CSV),
                format!("has {} rows for checkpoint epoch {}", t.log.epochs.len(), t.epoch),
            ));
        }
        Ok(t)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn store(&self) -> &PatchStore {
        &self.store
    }

    pub fn model(&self) -> &GenModel {
        &self.model
    }

    pub fn generator_params(&self) -> &ParamSet {
        &self.g
    }

    pub fn critic_params(&self) -> &ParamSet {
        &self.d
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// (critic steps, generator steps) so far.
    pub fn step_counts(&self) -> (u64, u64) {
        (self.critic_steps, self.gen_steps)
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn step_rows(&self) -> &[StepRow] {
        &self.steps
    }

    /// Runs the remaining epochs, then writes the held-out outputs.
    pub fn run(&mut self) -> Result<TrainingLog> {
        while self.epoch < self.cfg.epochs {
            self.run_epoch()?;
        }
        let preds = self.predict_eval_slice()?;
        write_predictions(&self.cfg.out_dir.join("images"), &preds)?;
        Ok(self.log.clone())
    }

    pub fn predict_eval_slice(&self) -> Result<Vec<Prediction>> {
        self.eval_ids
            .iter()
            .map(|id| predict_image(&self.model, &self.g, &self.store, id, self.cfg.factor))
            .collect()
    }

    fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let pick = |f: fn(&PatchTuple) -> &crate::image::Image| {
            stack(&idx.iter().map(|&i| f(&self.train[i])).collect::<Vec<_>>())
        };
        let lr2 = if self.cfg.model.is_progressive() {
            Some(stack(
                &idx.iter()
                    .map(|&i| self.train[i].lr2.as_ref().expect("checked at load"))
                    .collect::<Vec<_>>(),
            )?)
        } else {
            None
        };
        Ok(Batch {
            lr: pick(|t| &t.lr)?,
            hr: pick(|t| &t.hr)?,
            reference: pick(|t| &t.reference)?,
            lr2,
        })
    }

    /// One pass over the shuffled training set: consecutive batches feed
    /// critic steps, and every `critic_steps_per_gen`-th batch is reused
    /// for a generator step.
    pub fn run_epoch(&mut self) -> Result<&EpochRow> {
        let epoch = self.epoch + 1;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng::stream(self.cfg.seed, "shuffle", epoch as u64));
        let batches: Vec<Vec<usize>> = order.chunks(self.cfg.batch_size).map(<[usize]>::to_vec).collect();
        let k = self.cfg.critic_steps_per_gen;

        let mut d_totals = Vec::new();
        let mut w_dis = Vec::new();
        let mut gen: Vec<GenStats> = Vec::new();
        let mut partial = 0;
        for cycle in batches.chunks(k) {
            let mut cycle_d = Vec::with_capacity(k);
            let mut cycle_w = Vec::with_capacity(k);
            let mut last = None;
            for idx in cycle {
                let b = self.batch(idx)?;
                let s = self.critic_step(&b, epoch)?;
                cycle_d.push(s.total);
                cycle_w.push(s.w_dis);
                last = Some(b);
            }
            let g = if cycle.len() == k {
                Some(self.generator_step(&last.expect("non-empty cycle"), epoch)?)
            } else {
                partial = cycle.len();
                None
            };
            self.steps.push(StepRow {
                epoch,
                step: self.gen_steps as usize,
                adv: g.as_ref().map(|g| g.adv),
                mse: g.as_ref().map(|g| g.mse),
                per: g.as_ref().map(|g| g.per),
                txt: g.as_ref().map(|g| g.txt),
                total_g: g.as_ref().map(|g| g.total),
                total_d: mean(&cycle_d),
                w_dis: mean(&cycle_w),
                critic_steps: cycle.len(),
                l1_mse: g.as_ref().and_then(|g| g.level1.map(|l| l.0)),
                l1_per: g.as_ref().and_then(|g| g.level1.map(|l| l.1)),
                l1_txt: g.as_ref().and_then(|g| g.level1.map(|l| l.2)),
            });
            d_totals.extend(cycle_d);
            w_dis.extend(cycle_w);
            gen.extend(g);
        }

        let (eval_ssim, eval_psnr) = quick_scores(&self.model, &self.g, &self.store, &self.eval_ids, self.cfg.factor)?;
        let gm = |f: fn(&GenStats) -> f64| mean(&gen.iter().map(f).collect::<Vec<_>>());
        let l1 = |f: fn(&(f64, f64, f64)) -> f64| -> Option<f64> {
            let v: Option<Vec<f64>> = gen.iter().map(|g| g.level1.as_ref().map(f)).collect();
            v.map(|v| mean(&v))
        };
        self.log.epochs.push(EpochRow {
            epoch,
            critic_steps: d_totals.len(),
            gen_steps: gen.len(),
            partial_critic_steps: partial,
            adv: gm(|g| g.adv),
            mse: gm(|g| g.mse),
            per: gm(|g| g.per),
            txt: gm(|g| g.txt),
            total_g: gm(|g| g.total),
            total_d: mean(&d_totals),
            w_dis: mean(&w_dis),
            l1_mse: l1(|l| l.0),
            l1_per: l1(|l| l.1),
            l1_txt: l1(|l| l.2),
            eval_ssim,
            eval_psnr,
        });
        self.epoch = epoch;
        write_rows(&self.cfg.out_dir.join(EPOCH_CSV), &self.log.epochs)?;
        write_rows(&self.cfg.out_dir.join(STEP_CSV), &self.steps)?;
        self.save_checkpoint()?;
        Ok(self.log.epochs.last().expect("just pushed"))
    }

    fn diverged(&self, quantity: &str, epoch: usize, b: &Batch, fake: Option<&Tensor>) -> Error {
        let step = self.critic_steps as usize;
        let dump = self.cfg.out_dir.join(format!("diverged_e{epoch}_c{step}.mcsr1"));
        let mut set = ParamSet::new();
        set.push("lr", b.lr.clone());
        set.push("hr", b.hr.clone());
        set.push("ref", b.reference.clone());
        if let Some(t) = &b.lr2 {
            set.push("lr2", t.clone());
        }
        if let Some(t) = fake {
            set.push("fake", t.clone());
        }
        if let Err(e) = set.save(&dump) {
            return Error::Diverged {
                quantity: format!("{quantity} (batch dump failed: {e})"),
                epoch,
                step,
                dump,
            };
        }
        Error::Diverged {
            quantity: quantity.to_string(),
            epoch,
            step,
            dump,
        }
    }

    fn critic_step(&mut self, b: &Batch, epoch: usize) -> Result<CriticStats> {
        let (fake, _) = self.model.predict(&self.g, &b.lr, &b.reference)?;
        let n = b.hr.shape()[0];
        let eps = draw_eps(self.cfg.seed, self.critic_steps, n);
        let g = Graph::new();
        let dp = Bound::leaves(&self.d, &g);
        let obj = discriminator_objective(
            &g,
            |x| self.critic.forward(&dp, x),
            &b.hr,
            &fake,
            &eps,
            self.cfg.loss.gp,
        )?;
        let total = obj.total.value().item()?;
        if !total.is_finite() {
            return Err(self.diverged("critic loss", epoch, b, Some(&fake)));
        }
        let mut grads = g.backward(obj.total)?;
        let grads: Vec<Tensor> = dp.vars().into_iter().map(|v| grads.take_or_zeros(v)).collect();
        match self.adam_d.step(&mut self.d, &grads) {
            Err(AutodiffError::NonFiniteGradient(name)) => {
                return Err(self.diverged(&format!("critic gradient {name}"), epoch, b, Some(&fake)))
            }
            r => r?,
        }
        self.critic_steps += 1;
        Ok(CriticStats {
            total,
            w_dis: obj.wasserstein(),
        })
    }

    fn generator_step(&mut self, b: &Batch, epoch: usize) -> Result<GenStats> {
        let g = Graph::new();
        let gp = Bound::leaves(&self.g, &g);
        let dp = Bound::frozen(&self.d, &g);
        let fp = Bound::frozen(&self.f, &g);
        let out = self.model.forward(&gp, &g, &b.lr, &b.reference)?;
        let adv = adversarial_loss_g(self.critic.forward(&dp, out.sr)?)?;
        let mut levels = vec![ContentTerms::compute(
            &self.features,
            &fp,
            out.sr,
            g.constant(b.hr.clone()),
        )?];
        let constrained = self.cfg.model == super::config::ModelKind::ProgressiveConstrained;
        if constrained {
            let (l1, lr2) = (
                out.level1.expect("progressive output"),
                b.lr2.clone().expect("progressive batch"),
            );
            levels.push(ContentTerms::compute(&self.features, &fp, l1, g.constant(lr2))?);
        }
        let level1 = if constrained {
            let t = &levels[1];
            Some((t.mse.value().item()?, t.per.value().item()?, t.txt.value().item()?))
        } else {
            None
        };
        let top = &levels[0];
        let (mse, per, txt) = (
            top.mse.value().item()?,
            top.per.value().item()?,
            top.txt.value().item()?,
        );
        let obj = generator_objective(adv, &levels, &self.cfg.loss, self.cfg.adversarial)?;
        let total = obj.report.total_g;
        if !total.is_finite() {
            let fake = (*out.sr.value()).clone();
            return Err(self.diverged("generator loss", epoch, b, Some(&fake)));
        }
        let mut grads = g.backward(obj.total)?;
        let grads: Vec<Tensor> = gp.vars().into_iter().map(|v| grads.take_or_zeros(v)).collect();
        match self.adam_g.step(&mut self.g, &grads) {
            Err(AutodiffError::NonFiniteGradient(name)) => {
                return Err(self.diverged(&format!("generator gradient {name}"), epoch, b, None))
            }
            r => r?,
        }
        self.gen_steps += 1;
        Ok(GenStats {
            adv: obj.report.adv,
            mse,
            per,
            txt,
            total,
            level1,
        })
    }

    fn checkpoint_set(&self) -> ParamSet {
        let mut set = ParamSet::new();
        set.push("state.epoch", Tensor::scalar(self.epoch as f64));
        set.push("state.critic_steps", Tensor::scalar(self.critic_steps as f64));
        set.push("state.gen_steps", Tensor::scalar(self.gen_steps as f64));
        let prefixed = |set: &mut ParamSet, prefix: &str, p: &ParamSet| {
            for (n, t) in p.iter() {
                set.push(format!("{prefix}{n}"), t.clone());
            }
        };
        prefixed(&mut set, "g/", &self.g);
        prefixed(&mut set, "d/", &self.d);
        prefixed(&mut set, "adam_g/", &self.adam_g.state(&self.g));
        prefixed(&mut set, "adam_d/", &self.adam_d.state(&self.d));
        set
    }

    /// Overwrites `<out_dir>/checkpoint.mcsr1` via a temporary file.
    pub fn save_checkpoint(&self) -> Result<()> {
        let path = self.cfg.out_dir.join(CHECKPOINT);
        let tmp = path.with_extension("tmp");
        self.checkpoint_set().save(&tmp)?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let set = ParamSet::load(path)?;
        let sub = |prefix: &str| -> ParamSet {
            set.iter()
                .filter_map(|(n, t)| n.strip_prefix(prefix).map(|n| (n.to_string(), t.clone())))
                .collect()
        };
        let (g, d) = (sub("g/"), sub("d/"));
        self.model.check_params(&g)?;
        self.critic.check_params(&d)?;
        self.adam_g = Adam::from_state(&sub("adam_g/"), &g)?;
        self.adam_d = Adam::from_state(&sub("adam_d/"), &d)?;
        self.g = g;
        self.d = d;
        let scalar = |n: &str| -> Result<u64> { Ok(set.require(n)?.item()? as u64) };
        self.epoch = scalar("state.epoch")? as usize;
        self.critic_steps = scalar("state.critic_steps")?;
        self.gen_steps = scalar("state.gen_steps")?;
        Ok(())
    }
}

/// Generator parameters stored in a run's checkpoint.
pub fn load_generator(run_dir: &Path) -> Result<ParamSet> {
    let set = ParamSet::load(run_dir.join(CHECKPOINT))?;
    Ok(set
        .iter()
        .filter_map(|(n, t)| n.strip_prefix("g/").map(|n| (n.to_string(), t.clone())))
        .collect())
}

/// Trains a config from scratch (or resumes it) to completion.
pub fn train(cfg: ExperimentConfig) -> Result<TrainingLog> {
    Trainer::resume(cfg)?.run()
}
