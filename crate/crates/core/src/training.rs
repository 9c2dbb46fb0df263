//! Adam, the plateau scheduler and the per-ensemble training loop.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{sample_many, SamplingOptions};
use crate::featurizer::{featurize_ensemble, MultiGraph};
use crate::model::{Checkpoint, Model, ModelConfig, OptimizerMoments, ParamStore, REFERENCE_PARAMETER_COUNT};
use crate::rna_io::Ensemble;
use crate::seeds::{derive_path, derive_seed, MODEL_INIT, TRAIN_EPOCH, VALIDATION};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Stop after this many optimizer steps, mid-epoch if need be.
    pub max_steps: Option<usize>,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub label_smoothing: f64,
    /// Å of Gaussian noise added to every bead before featurization.
    pub noise_sigma: f64,
    pub max_states: usize,
    /// Longer training ensembles are skipped.
    pub max_train_len: usize,
    pub seed: u64,
    pub val_samples: usize,
    pub val_temperature: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            max_epochs: 50,
            max_steps: None,
            plateau_factor: 0.9,
            plateau_patience: 5,
            label_smoothing: 0.05,
            noise_sigma: 0.1,
            max_states: 1,
            max_train_len: 5000,
            seed: 0,
            val_samples: 4,
            val_temperature: 0.1,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("invalid training config: {what}")));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return bad("plateau_factor must lie in (0, 1]");
        }
        if self.max_states == 0 {
            return bad("max_states must be at least 1");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 1)");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        if !(self.val_temperature > 0.0) {
            return bad("val_temperature must be positive");
        }
        self.model.validate()
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn to_moments(&self) -> OptimizerMoments {
        OptimizerMoments {
            step: self.step,
            m: self.m.concat(),
            v: self.v.concat(),
        }
    }

    pub fn from_moments(params: &ParamStore, moments: &OptimizerMoments) -> Result<Self> {
        let mut state = Self::new(params);
        if moments.m.len() != params.num_scalars() || moments.v.len() != params.num_scalars() {
            return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
        }
        let mut offset = 0;
        for (m, v) in state.m.iter_mut().zip(state.v.iter_mut()) {
            let n = m.len();
            m.copy_from_slice(&moments.m[offset..offset + n]);
            v.copy_from_slice(&moments.v[offset..offset + n]);
            offset += n;
        }
        state.step = moments.step;
        Ok(state)
    }
}

/// Bias-corrected Adam update. Any non-finite gradient aborts before a
/// single parameter is touched.
pub fn adam_step(params: &mut ParamStore, grads: &[Vec<f64>], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for ((name, t), g) in params.iter().zip(grads) {
        if g.len() != t.numel() {
            return Err(Error::InvalidArgument(format!("gradient for {name} has {} entries", g.len())));
        }
        if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
            log::error!("non-finite gradient {bad} in {name} at step {}", state.step + 1);
            return Err(Error::NonFiniteGradient {
                param: name.to_string(),
                step: state.step as usize + 1,
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
            *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Multiplies the learning rate by `factor` once a maximized metric has
/// failed to improve for more than `patience` consecutive epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub best: Option<f64>,
    pub bad_epochs: usize,
    pub reductions: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            best: None,
            bad_epochs: 0,
            reductions: 0,
        }
    }

    /// Records one epoch's metric; returns true if the rate was reduced.
    pub fn observe(&mut self, metric: f64) -> bool {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            self.lr *= self.factor;
            self.reductions += 1;
            self.bad_epochs = 0;
            return true;
        }
        false
    }
}

/// State indices to featurize. With an rng, a uniform subset of size
/// `max_states` (returned sorted); without, the first `max_states` by id.
pub fn select_states<R: Rng + ?Sized>(ensemble: &Ensemble, max_states: usize, rng: Option<&mut R>) -> Vec<usize> {
    let k = ensemble.states.len();
    let take = max_states.max(1).min(k);
    match rng {
        Some(rng) if take < k => {
            let mut s = index::sample(rng, k, take).into_vec();
            s.sort_unstable();
            s
        }
        _ => {
            let mut by_id: Vec<usize> = (0..k).collect();
            by_id.sort_by(|&a, &b| ensemble.states[a].id.cmp(&ensemble.states[b].id).then(a.cmp(&b)));
            let mut s: Vec<usize> = by_id.into_iter().take(take).collect();
            s.sort_unstable();
            s
        }
    }
}

/// Evaluation-mode graph and native bases of an ensemble.
pub fn eval_graph(ensemble: &Ensemble, max_states: usize, cfg: &ModelConfig) -> Result<(MultiGraph, Vec<usize>)> {
    let states = select_states::<ChaCha8Rng>(ensemble, max_states, None);
    let mg = featurize_ensemble::<ChaCha8Rng>(ensemble, &states, &cfg.featurizer, None)?;
    let native = ensemble.bases_at(&mg.residues())?;
    Ok((mg, native))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_recovery: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_recovery: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TrainerState {
    train_config: TrainConfig,
    scheduler: PlateauScheduler,
    history: TrainHistory,
    steps: usize,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub adam: AdamState,
    pub scheduler: PlateauScheduler,
    /// Completed epochs.
    pub epoch: usize,
    pub steps: usize,
    pub history: TrainHistory,
}

/// Mean sampled recovery over ensembles, with per-ensemble sample seeds
/// that depend only on the run seed and the ensemble's position.
pub fn validation_recovery(model: &Model, ensembles: &[Ensemble], config: &TrainConfig) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut count = 0;
    for (i, e) in ensembles.iter().enumerate() {
        let (mg, native) = eval_graph(e, config.max_states, &model.config)?;
        let opts = SamplingOptions::with_temperature(config.val_temperature);
        let seed = derive_path(config.seed, &[VALIDATION, i as u64]);
        let samples = sample_many(model, &mg, &opts, config.val_samples.max(1), seed)?;
        let rec: f64 = samples
            .iter()
            .map(|s| s.bases.iter().zip(&native).filter(|(a, b)| a == b).count() as f64 / native.len() as f64)
            .sum::<f64>()
            / samples.len() as f64;
        total += rec;
        count += 1;
    }
    Ok((count > 0).then(|| total / count as f64))
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.model.clone(), derive_seed(config.seed, MODEL_INIT))?;
        log::info!(
            "model has {} trainable parameters (published configuration: {})",
            model.num_parameters(),
            REFERENCE_PARAMETER_COUNT
        );
        let adam = AdamState::new(&model.params);
        let scheduler = PlateauScheduler::new(config.lr, config.plateau_factor, config.plateau_patience);
        Ok(Self {
            config,
            model,
            adam,
            scheduler,
            epoch: 0,
            steps: 0,
            history: TrainHistory::default(),
        })
    }

    /// Continues a run saved by [`Trainer::checkpoint`]. `max_epochs` and
    /// `max_steps` may be raised; everything else comes from the file.
    pub fn resume(ckpt: Checkpoint, max_epochs: Option<usize>) -> Result<Self> {
        let state: TrainerState = serde_json::from_value(ckpt.extra.clone())
            .map_err(|e| Error::Checkpoint(format!("checkpoint has no resumable training state: {e}")))?;
        let moments = ckpt
            .optimizer
            .clone()
            .ok_or_else(|| Error::Checkpoint("checkpoint has no optimizer state".into()))?;
        let epoch = ckpt.epoch;
        let model = ckpt.into_model()?;
        let adam = AdamState::from_moments(&model.params, &moments)?;
        let mut config = state.train_config;
        if let Some(m) = max_epochs {
            config.max_epochs = m;
        }
        Ok(Self {
            config,
            model,
            adam,
            scheduler: state.scheduler,
            epoch,
            steps: state.steps,
            history: state.history,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::from_model(&self.model, self.config.seed, self.epoch);
        ckpt.optimizer = Some(self.adam.to_moments());
        ckpt.extra = serde_json::to_value(TrainerState {
            train_config: self.config.clone(),
            scheduler: self.scheduler.clone(),
            history: self.history.clone(),
            steps: self.steps,
        })
        .expect("training state serializes");
        ckpt
    }

    /// One optimizer step on one ensemble. Returns the loss.
    pub fn step<R: Rng + ?Sized>(&mut self, ensemble: &Ensemble, rng: &mut R) -> Result<f64> {
        self.step_batch(std::slice::from_ref(ensemble), rng)
    }

    /// One Adam update on the mean loss over `batch`.
    pub fn step_batch<R: Rng + ?Sized>(&mut self, batch: &[Ensemble], rng: &mut R) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptySplit("batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for ensemble in batch {
            let states = select_states(ensemble, self.config.max_states, Some(&mut *rng));
            let noise = (self.config.noise_sigma > 0.0).then_some((self.config.noise_sigma, &mut *rng));
            let mg = featurize_ensemble(ensemble, &states, &self.config.model.featurizer, noise)?;
            let targets = ensemble.bases_at(&mg.residues())?;
            let dropout_seed: u64 = rng.random();
            let mut session = self.model.session(true, Some(dropout_seed));
            let loss = session.loss(&mg, &targets, self.config.label_smoothing)?;
            session.tape.backward(loss)?;
            total += session.tape.value(loss)[0] * scale;
            let g = session.param_grads();
            if grads.is_empty() {
                grads = g.into_iter().map(|t| t.into_iter().map(|x| x * scale).collect()).collect();
            } else {
                for (acc, t) in grads.iter_mut().zip(g) {
                    acc.iter_mut().zip(t).for_each(|(a, x)| *a += x * scale);
                }
            }
        }
        adam_step(&mut self.model.params, &grads, &mut self.adam, self.scheduler.lr)?;
        self.steps += 1;
        Ok(total)
    }

    fn steps_left(&self) -> bool {
        self.config.max_steps.is_none_or(|m| self.steps < m)
    }

    /// Whether training should continue.
    pub fn running(&self) -> bool {
        self.epoch < self.config.max_epochs && self.steps_left()
    }

    /// Shuffles, trains on every ensemble, then validates and steps the
    /// scheduler. The epoch's generator depends only on (seed, epoch).
    pub fn run_epoch(&mut self, train: &[Ensemble], val: &[Ensemble]) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_path(self.config.seed, &[TRAIN_EPOCH, self.epoch as u64]));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let lr = self.scheduler.lr;
        let mut losses = Vec::new();
        for i in order {
            if !self.steps_left() {
                break;
            }
            losses.push(self.step(&train[i], &mut rng)?);
        }
        self.epoch += 1;
        let val_recovery = validation_recovery(&self.model, val, &self.config)?;
        let record = EpochRecord {
            epoch: self.epoch,
            steps: self.steps,
            train_loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            val_recovery,
            lr,
        };
        if let Some(r) = val_recovery {
            if self.history.best_val_recovery.is_none_or(|b| r > b) {
                self.history.best_val_recovery = Some(r);
                self.history.best_epoch = Some(self.epoch);
            }
            if self.scheduler.observe(r) {
                log::info!("validation plateau: learning rate now {:e}", self.scheduler.lr);
            }
        } else {
            self.history.best_epoch = Some(self.epoch);
        }
        self.history.epochs.push(record.clone());
        Ok(record)
    }

    /// Trains until `max_epochs` or `max_steps`. With `out_dir`, writes
    /// `last.ckpt` and `history.json` every epoch and `best.ckpt` whenever
    /// validation recovery improves.
    pub fn fit(&mut self, train: &[Ensemble], val: &[Ensemble], out_dir: Option<&Path>) -> Result<TrainHistory> {
        let train = usable(train, self.config.max_train_len, "train");
        let val = usable(val, usize::MAX, "validation");
        if train.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        while self.running() {
            let record = self.run_epoch(&train, &val)?;
            log::info!(
                "epoch {} steps {} loss {:.4} val recovery {} lr {:e}",
                record.epoch,
                record.steps,
                record.train_loss,
                record.val_recovery.map_or("-".to_string(), |r| format!("{r:.4}")),
                record.lr
            );
            if let Some(dir) = out_dir {
                let ckpt = self.checkpoint();
                ckpt.save(&dir.join("last.ckpt"))?;
                if self.history.best_epoch == Some(self.epoch) {
                    ckpt.save(&dir.join("best.ckpt"))?;
                }
                std::fs::write(dir.join("history.json"), serde_json::to_string_pretty(&self.history)?)?;
            }
        }
        Ok(self.history.clone())
    }
}

/// Drops ensembles that cannot be trained on, with a warning for each.
fn usable(ensembles: &[Ensemble], max_len: usize, what: &str) -> Vec<Ensemble> {
    ensembles
        .iter()
        .filter(|e| {
            let common = e.common_valid_indices();
            let ok = e.len() <= max_len && common.len() >= 2 && e.bases_at(&common).is_ok();
            if !ok {
                log::warn!("skipping {what} ensemble {}", e.id);
            }
            ok
        })
        .cloned()
        .collect()
}
