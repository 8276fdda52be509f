use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::{Inputs, Mode, Network};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of the training data held out for early stopping; 0 disables it.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 30,
            patience: 5,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Inputs and 0/1 targets for a batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Inputs,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Inputs, targets: Vec<f64>) -> Result<Self> {
        for (name, t) in &inputs {
            if t.batch() != targets.len() {
                return Err(Error::shape(
                    name,
                    format!("{} rows for {} targets", t.batch(), targets.len()),
                ));
            }
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: select(&self.inputs, rows),
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
        }
    }
}

fn select(inputs: &Inputs, rows: &[usize]) -> Inputs {
    inputs
        .iter()
        .map(|(k, t)| (k.clone(), t.select_rows(rows)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_early: bool,
}

/// Mini-batch Adam on mean binary cross-entropy with optional early stopping.
///
/// Activations of layers that cannot change during training (frozen, with no
/// dropout upstream) are computed once up front and fed back in per batch.
pub fn train(net: &mut Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    if !net.is_classifier() {
        return Err(Error::Training("network output is not a single sigmoid unit".into()));
    }
    if net.trainable_parameter_count() == 0 {
        return Err(Error::Training("network has no trainable parameters".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Training("batch size and epochs must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::Training(format!(
            "validation fraction {} outside [0, 1)",
            cfg.validation_fraction
        )));
    }
    let n = data.len();
    if n == 0 {
        return Err(Error::Training("empty training set".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, 0)));
    let n_val = (n as f64 * cfg.validation_fraction).floor() as usize;
    let n_val = if n_val >= n { 0 } else { n_val };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let frontier = net.constant_frontier();
    let frozen_acts = precompute(net, &data.inputs, n, &frontier)?;

    net.reseed(derive_seed(cfg.seed, 1));
    let mut adam = AdamState::for_network(cfg.adam, net);
    let mut report = TrainReport {
        epochs_run: 0,
        best_epoch: 0,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stopped_early: false,
    };
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let mut wait = 0;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, 2 + epoch as u64)));
        net.set_mode(Mode::Train);
        let mut total = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let inputs = select(&data.inputs, batch);
            let targets: Vec<f64> = batch.iter().map(|&r| data.targets[r]).collect();
            net.forward_with(&inputs, overrides(&frontier, &frozen_acts, batch))?;
            total += net.loss(&targets)? * batch.len() as f64;
            let grads = net.backward(&targets)?;
            net.apply_adam(&mut adam, &grads)?;
        }
        report.train_loss.push(total / train_idx.len() as f64);
        report.epochs_run = epoch + 1;

        if val_idx.is_empty() {
            report.best_epoch = epoch + 1;
            continue;
        }
        let vl = eval_loss(net, data, val_idx, &frontier, &frozen_acts)?;
        report.val_loss.push(vl);
        if best.as_ref().map_or(true, |(b, _)| vl < *b) {
            best = Some((vl, net.params().iter().map(|p| p.value.clone()).collect()));
            report.best_epoch = epoch + 1;
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, snapshot)) = best {
        for (p, v) in net.params.iter_mut().zip(snapshot) {
            p.value = v;
        }
    }
    net.set_mode(Mode::Infer);
    Ok(report)
}

fn precompute(net: &mut Network, inputs: &Inputs, n: usize, frontier: &[usize]) -> Result<Vec<Tensor>> {
    if frontier.is_empty() {
        return Ok(Vec::new());
    }
    net.set_mode(Mode::Infer);
    let mut parts: Vec<Vec<f64>> = vec![Vec::new(); frontier.len()];
    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        net.forward_with(&select(inputs, chunk), Vec::new())?;
        for (k, &node) in frontier.iter().enumerate() {
            let act = net
                .node_activation(node)
                .ok_or_else(|| Error::Training("frontier activation missing".into()))?;
            parts[k].extend_from_slice(act.data());
        }
    }
    frontier
        .iter()
        .zip(parts)
        .map(|(&node, data)| {
            let mut shape = vec![n];
            shape.extend_from_slice(&net.nodes()[node].out_shape);
            Tensor::new(shape, data)
        })
        .collect()
}

fn overrides(frontier: &[usize], acts: &[Tensor], rows: &[usize]) -> Vec<(usize, Tensor)> {
    frontier
        .iter()
        .zip(acts)
        .map(|(&node, t)| (node, t.select_rows(rows)))
        .collect()
}

fn eval_loss(
    net: &mut Network,
    data: &Dataset,
    rows: &[usize],
    frontier: &[usize],
    acts: &[Tensor],
) -> Result<f64> {
    net.set_mode(Mode::Infer);
    let mut total = 0.0;
    for chunk in rows.chunks(EVAL_CHUNK) {
        let targets: Vec<f64> = chunk.iter().map(|&r| data.targets[r]).collect();
        net.forward_with(&select(&data.inputs, chunk), overrides(frontier, acts, chunk))?;
        total += net.loss(&targets)? * chunk.len() as f64;
    }
    Ok(total / rows.len() as f64)
}

/// Class-1 scores in inference mode.
pub fn predict(net: &mut Network, inputs: &Inputs) -> Result<Vec<f64>> {
    let n = inputs
        .values()
        .next()
        .map(Tensor::batch)
        .ok_or_else(|| Error::Network("no inputs supplied".into()))?;
    net.set_mode(Mode::Infer);
    let all: Vec<usize> = (0..n).collect();
    let mut scores = Vec::with_capacity(n);
    for chunk in all.chunks(EVAL_CHUNK) {
        let out = net.forward(&select(inputs, chunk))?;
        if out.row_len() != 1 {
            return Err(Error::Network("prediction needs a single-output network".into()));
        }
        scores.extend_from_slice(out.data());
    }
    Ok(scores)
}

/// Fraction of scores on the correct side of 0.5 (ties count as class 0).
pub fn accuracy(scores: &[f64], targets: &[f64]) -> f64 {
    let correct = scores
        .iter()
        .zip(targets)
        .filter(|(&s, &t)| (s > 0.5) == (t > 0.5))
        .count();
    correct as f64 / scores.len().max(1) as f64
}
