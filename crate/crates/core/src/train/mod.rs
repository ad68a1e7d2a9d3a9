//! One-step supervised training: MSE loss, step learning-rate schedule,
//! Adam or SGD, projection after every update, best-validation selection.

mod config;

pub use config::{RunConfig, RUN_CONFIG_KEYS};

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::grad::Differentiable;
use crate::math::{norm_l2, SeededRng};
use crate::network::{ForecastNet, ModelKind};
use crate::pde::{Equation, TrajectoryDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(Error::InvalidArgument(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    pub decay: f64,
    pub step_size: usize,
    pub batch_size: usize,
    pub xavier_gain: f64,
    pub delta: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl TrainConfig {
    /// Default hyper-parameters per architecture and equation.
    pub fn preset(kind: ModelKind, equation: Equation) -> Self {
        let (initial_lr, decay, epochs) = match (kind, equation) {
            (ModelKind::ImplicitRelu, Equation::Advection) => (0.01, 0.9, 1250),
            (ModelKind::ImplicitRelu, Equation::Burgers) => (0.01, 0.98, 1250),
            _ => (0.05, 0.95, 2500),
        };
        Self {
            epochs,
            initial_lr,
            decay,
            step_size: 10,
            batch_size: 32,
            xavier_gain: 1.0,
            delta: crate::block::DEFAULT_DELTA,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        // zero is accepted: a frozen run that only records losses
        if !(self.initial_lr >= 0.0 && self.initial_lr.is_finite()) {
            return bad(format!("initial_lr must be non-negative, got {}", self.initial_lr));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if self.step_size == 0 {
            return bad("step_size must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.xavier_gain > 0.0 && self.xavier_gain.is_finite()) {
            return bad(format!("xavier_gain must be positive, got {}", self.xavier_gain));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        Ok(())
    }
}

pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    let steps = (epoch / cfg.step_size.max(1)) as i32;
    cfg.initial_lr * cfg.decay.powi(steps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of the minibatch losses seen during the epoch.
    pub train_mse: f64,
    pub val_mse: f64,
    /// Diagonal entries clamped by projection during the epoch.
    pub clipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn best_val_mse(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.records[e].val_mse)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_mse,val_mse\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:e},{:e},{:e}", r.epoch, r.lr, r.train_mse, r.val_mse);
        }
        out
    }
}

fn check_compat(net: &ForecastNet, data: &TrajectoryDataset) -> Result<()> {
    if data.grid_size != net.grid_size() {
        return Err(Error::ShapeMismatch {
            expected: format!("dataset on {} points", net.grid_size()),
            got: format!("{} points", data.grid_size),
        });
    }
    Ok(())
}

/// Trains `net` in place and leaves it at the best-validation epoch.
pub fn train(net: &mut ForecastNet, train_set: &TrajectoryDataset, val_set: &TrajectoryDataset, cfg: &TrainConfig) -> Result<TrainHistory> {
    let mut history = TrainHistory::default();
    train_into(net, train_set, val_set, cfg, &mut history)?;
    Ok(history)
}

/// As [`train`], but the history survives a diverged run.
pub fn train_into(
    net: &mut ForecastNet,
    train_set: &TrajectoryDataset,
    val_set: &TrajectoryDataset,
    cfg: &TrainConfig,
    history: &mut TrainHistory,
) -> Result<()> {
    cfg.validate()?;
    check_compat(net, train_set)?;
    check_compat(net, val_set)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let implicit = net.kind().is_implicit();
    let n_params = net.param_count();
    let mut rng = SeededRng::new(cfg.seed).child(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut adam = Adam::new(n_params);
    let mut best: Option<(f64, ForecastNet)> = None;

    for epoch in 0..cfg.epochs {
        let lr = lr_at(cfg, epoch);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut clipped = 0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = batch_gradient(net, train_set, batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                restore_best(net, best);
                return Err(Error::TrainingDiverged { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            let step = match cfg.optimizer {
                Optimizer::Adam => adam.step(&grad, lr),
                Optimizer::Sgd => grad.iter().map(|g| -lr * g).collect(),
            };
            net.apply_update(&step);
            if implicit {
                clipped += net.project_weights(cfg.delta)?;
            }
        }
        let train_mse = loss_sum / train_set.len() as f64;
        let val_mse = mse_only(net, val_set);
        history.records.push(EpochRecord {
            epoch,
            lr,
            train_mse,
            val_mse,
            clipped,
        });
        if !train_mse.is_finite() || !net.params().iter().all(|p| p.is_finite()) {
            restore_best(net, best);
            return Err(Error::TrainingDiverged { epoch });
        }
        if val_mse.is_finite() && best.as_ref().is_none_or(|(b, _)| val_mse < *b) {
            best = Some((val_mse, net.clone()));
            history.best_epoch = Some(epoch);
        }
    }
    restore_best(net, best);
    Ok(())
}

fn restore_best(net: &mut ForecastNet, best: Option<(f64, ForecastNet)>) {
    if let Some((_, b)) = best {
        *net = b;
    }
}

/// Mean loss and gradient of a minibatch; per-sample work runs in parallel,
/// the reduction is a sequential sum in sample order.
fn batch_gradient(net: &ForecastNet, data: &TrajectoryDataset, batch: &[usize]) -> (f64, Vec<f64>) {
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|&i| {
            let (u0, u1) = &data.pairs[i];
            let mut g = vec![0.0; net.param_count()];
            let (loss, _) = net.accumulate_gradient(u0.values(), u1.values(), scale, &mut g);
            (loss, g)
        })
        .collect();
    let mut grad = vec![0.0; net.param_count()];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (loss * scale, grad)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, grad: &[f64], lr: f64) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let mut out = Vec::with_capacity(grad.len());
        for ((m, v), &g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(grad) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            out.push(-lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS));
        }
        out
    }
}

fn per_sample(net: &ForecastNet, data: &TrajectoryDataset) -> Vec<(f64, f64)> {
    data.pairs
        .par_iter()
        .map(|(u0, u1)| {
            let pred = net.decode(&net.advance_latent(&net.encode(u0.values())));
            let diff: Vec<f64> = pred.iter().zip(u1.values()).map(|(p, t)| p - t).collect();
            let mse = diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64;
            (mse, norm_l2(&diff) / norm_l2(u1.values()))
        })
        .collect()
}

fn mse_only(net: &ForecastNet, data: &TrajectoryDataset) -> f64 {
    per_sample(net, data).iter().map(|s| s.0).sum::<f64>() / data.len() as f64
}

/// `(mse, relative_error_pct)` of one-step predictions over a dataset.
pub fn evaluate(net: &ForecastNet, data: &TrajectoryDataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_compat(net, data)?;
    let stats = per_sample(net, data);
    let n = stats.len() as f64;
    let mse = stats.iter().map(|s| s.0).sum::<f64>() / n;
    let rel = 100.0 * stats.iter().map(|s| s.1).sum::<f64>() / n;
    Ok((mse, rel))
}

/// Same metrics for arbitrary prediction/truth pairs.
pub fn prediction_metrics(pairs: &[(&[f64], &[f64])]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = pairs.len() as f64;
    let mut mse = 0.0;
    let mut rel = 0.0;
    for (pred, truth) in pairs {
        if pred.len() != truth.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", truth.len()),
                got: format!("{} values", pred.len()),
            });
        }
        let diff: Vec<f64> = pred.iter().zip(*truth).map(|(p, t)| p - t).collect();
        mse += diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64;
        rel += norm_l2(&diff) / norm_l2(truth);
    }
    Ok((mse / n, 100.0 * rel / n))
}
