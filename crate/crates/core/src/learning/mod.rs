//! Networks, loss, optimizer and the training loop.

mod fcnn;
mod grpa;

pub use fcnn::{FcnnBaseline, DEFAULT_HIDDEN};
pub use grpa::{GrpANetwork, Parameterization, Pooling};

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};
use crate::numerics::{parse_field, Rng};
use crate::signal_domain::DiscreteSignal;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x · σ(x)`.
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

/// Loss `logsumexp(z) − z_y` and its gradient `softmax(z) − e_y`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = m + sum.ln() - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// A classifier with a flat parameter vector.
pub trait Model: Sync {
    fn classes(&self) -> usize;
    fn param_count(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    fn forward(&self, x: &DiscreteSignal) -> Result<Vec<f64>>;
    /// Mean cross-entropy over the batch and its gradient, laid out as
    /// [`Model::params`].
    fn loss_and_grad(&self, batch: &[(&DiscreteSignal, usize)]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, config: &AdamConfig) -> Result<()> {
    check_dim(params.len(), grads.len())?;
    check_dim(params.len(), state.m.len())?;
    check_dim(params.len(), state.v.len())?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i] + config.weight_decay * params[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= config.lr * mhat / (vhat.sqrt() + config.eps);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    /// When set, overrides `iterations` with `epochs · ⌈n / batch⌉` steps.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Test accuracy is logged every this many steps and at the last step.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            epochs: None,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(invalid("batch size and eval interval must be positive"));
        }
        if !(a.lr > 0.0) || !(a.eps > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(invalid("invalid optimizer settings"));
        }
        if !(a.weight_decay >= 0.0) {
            return Err(invalid("weight decay must be nonnegative"));
        }
        Ok(())
    }

    pub fn steps_for(&self, samples: usize) -> usize {
        match self.epochs {
            Some(e) => e * samples.div_ceil(self.batch_size),
            None => self.iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub log: Vec<LogRow>,
    pub final_params: Vec<f64>,
    pub test: Option<Evaluation>,
}

pub type Sample = (DiscreteSignal, usize);

/// Accuracy (argmax, ties to the lowest class) and mean loss.
pub fn evaluate<M: Model + ?Sized>(model: &M, data: &[Sample]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(invalid("evaluation set is empty"));
    }
    let per: Vec<(bool, f64)> = data
        .par_iter()
        .map(|(x, y)| {
            let z = model.forward(x)?;
            if *y >= z.len() {
                return Err(invalid(format!("label {y} out of range")));
            }
            let mut best = 0;
            for (i, v) in z.iter().enumerate() {
                if *v > z[best] {
                    best = i;
                }
            }
            Ok((best == *y, softmax_cross_entropy(&z, *y).0))
        })
        .collect::<Result<_>>()?;
    let n = data.len() as f64;
    Ok(Evaluation {
        accuracy: per.iter().filter(|p| p.0).count() as f64 / n,
        loss: per.iter().map(|p| p.1).sum::<f64>() / n,
    })
}

/// Adam over seeded, reshuffled minibatches. Batches are always full; the
/// order is reshuffled whenever it runs out.
pub fn train<M: Model + ?Sized>(model: &mut M, train_set: &[Sample], test_set: &[Sample], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let steps = config.steps_for(train_set.len());
    let mut rng = Rng::new(config.seed).fork(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    rng.shuffle(&mut order);
    let mut cursor = 0;
    let mut params = model.params();
    let mut state = AdamState::new(params.len());
    let mut log = Vec::with_capacity(steps);
    for step in 1..=steps {
        let mut idx = Vec::with_capacity(config.batch_size);
        while idx.len() < config.batch_size {
            if cursor == order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let batch: Vec<(&DiscreteSignal, usize)> = idx.iter().map(|&i| (&train_set[i].0, train_set[i].1)).collect();
        let (loss, grad) = model.loss_and_grad(&batch)?;
        adam_step(&mut params, &grad, &mut state, &config.adam)?;
        model.set_params(&params)?;
        let test_acc = if !test_set.is_empty() && (step % config.eval_every == 0 || step == steps) {
            Some(evaluate(model, test_set)?.accuracy)
        } else {
            None
        };
        log.push(LogRow { step, loss, test_acc });
    }
    let test = if test_set.is_empty() { None } else { Some(evaluate(model, test_set)?) };
    Ok(TrainReport {
        log,
        final_params: params,
        test,
    })
}

/// CSV `step,loss,test_acc`; `test_acc` is empty on steps without an
/// evaluation.
pub fn write_log_csv<W: Write>(log: &[LogRow], mut w: W) -> Result<()> {
    writeln!(w, "step,loss,test_acc")?;
    for r in log {
        match r.test_acc {
            Some(a) => writeln!(w, "{},{:?},{:?}", r.step, r.loss, a)?,
            None => writeln!(w, "{},{:?},", r.step, r.loss)?,
        }
    }
    Ok(())
}

/// Per-parameter comparison of analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub analytic: f64,
    pub numeric: f64,
    /// `|a − n| / max(|a|, |n|, 1e-6)`
    pub rel_err: f64,
}

pub fn finite_difference_check<M: Model + Clone>(model: &M, batch: &[(&DiscreteSignal, usize)], step: f64) -> Result<Vec<GradCheck>> {
    if !(step > 0.0) {
        return Err(invalid("finite difference step must be positive"));
    }
    let (_, grad) = model.loss_and_grad(batch)?;
    let base = model.params();
    let mut probe = model.clone();
    let mut p = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        p[i] = base[i] + step;
        probe.set_params(&p)?;
        let up = probe.loss_and_grad(batch)?.0;
        p[i] = base[i] - step;
        probe.set_params(&p)?;
        let down = probe.loss_and_grad(batch)?.0;
        p[i] = base[i];
        let numeric = (up - down) / (2.0 * step);
        let analytic = grad[i];
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        out.push(GradCheck {
            analytic,
            numeric,
            rel_err: (analytic - numeric).abs() / denom,
        });
    }
    Ok(out)
}

/// `DENSE v1 rows cols` then one value per line.
pub(crate) fn write_dense(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    check_dim(rows * cols, values.len())?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "DENSE v1 {rows} {cols}")?;
    for v in values {
        writeln!(w, "{v:?}")?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_dense(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 4 || f[0] != "DENSE" || f[1] != "v1" {
        return Err(Error::Parse(format!("bad dense header {header:?}")));
    }
    let (rows, cols): (usize, usize) = (parse_field(f[2])?, parse_field(f[3])?);
    let mut values = Vec::with_capacity(rows * cols);
    for line in lines {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() {
            values.push(parse_field(t)?);
        }
    }
    check_dim(rows * cols, values.len())?;
    Ok((rows, cols, values))
}

pub(crate) fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in BufReader::new(std::fs::File::open(path)?).lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad manifest line {t:?}")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Model kind recorded in a checkpoint manifest.
pub fn checkpoint_kind(dir: &Path) -> Result<String> {
    read_manifest(&dir.join("manifest.txt"))?
        .remove("model")
        .ok_or_else(|| Error::Parse("manifest lacks model".into()))
}

#[cfg(test)]
mod tests;
