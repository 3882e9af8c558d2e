//! Losses, Adam, finite-difference network gradients, the training loop and
//! evaluation metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{config, domain, QukanError, Result};
use crate::network::{argmax, QuKanNetwork, Tables, UnitPatch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, hp: &AdamParams) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.first_moment.len() != n || state.second_moment.len() != n {
        return domain(format!(
            "adam: {} params, {} grads, state sized {}",
            n,
            grads.len(),
            state.first_moment.len()
        ));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for i in 0..n {
        let g = grads[i];
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        params[i] -= hp.lr * (*m / c1) / ((*v / c2).sqrt() + hp.eps);
    }
    Ok(())
}

/// `−log softmax(outputs)[label]`, computed with the maximum subtracted.
pub fn cross_entropy(outputs: &[f64], label: usize) -> f64 {
    let m = outputs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + outputs.iter().map(|o| (o - m).exp()).sum::<f64>().ln();
    (lse - outputs[label]).max(0.0)
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return domain(format!("mse: lengths {} and {}", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return domain("mse of empty vectors");
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

impl LossKind {
    /// Cross-entropy for labelled data, squared error otherwise.
    pub fn for_dataset(ds: &Dataset) -> Self {
        match ds.targets {
            Targets::Classes { .. } => LossKind::CrossEntropy,
            Targets::Real(_) => LossKind::Mse,
        }
    }

    fn sample_loss(self, out: &[f64], targets: &Targets, i: usize) -> f64 {
        match (self, targets) {
            (LossKind::CrossEntropy, Targets::Classes { labels, .. }) => cross_entropy(out, labels[i]),
            (LossKind::Mse, Targets::Real(y)) => (out[0] - y[i]).powi(2),
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Central-difference step for rotation angles.
    pub fd_step: f64,
    /// Central-difference step for classical weights.
    pub fd_step_weights: f64,
    pub seed: u64,
    /// Stops early once the epoch loss drops below this value.
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr: 0.05,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            fd_step: 1e-3,
            fd_step_weights: 1e-4,
            seed: 0,
            tol: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.adam_betas;
        if !(self.lr > 0.0) {
            return config("lr must be positive");
        }
        if !(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0) {
            return config("adam betas must lie in (0, 1)");
        }
        if !(self.fd_step > 0.0 && self.fd_step_weights > 0.0) {
            return config("finite-difference steps must be positive");
        }
        if self.batch_size == 0 {
            return config("batch size must be positive");
        }
        if !(self.adam_eps > 0.0) {
            return config("adam eps must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.lr,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: self.adam_eps,
        }
    }
}

/// Central differences of `f` at `x`, one step size per coordinate.
pub fn fd_gradient<F>(f: F, x: &[f64], steps: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if steps.len() != x.len() {
        return domain("one step per coordinate is required");
    }
    (0..x.len())
        .into_par_iter()
        .map(|m| {
            let mut p = x.to_vec();
            p[m] = x[m] + steps[m];
            let up = f(&p);
            p[m] = x[m] - steps[m];
            let down = f(&p);
            if !up.is_finite() || !down.is_finite() {
                return Err(QukanError::Divergence {
                    iteration: 0,
                    reason: format!("non-finite loss while differentiating parameter {m}"),
                });
            }
            Ok((up - down) / (2.0 * steps[m]))
        })
        .collect()
}

fn batch_loss(
    net: &QuKanNetwork,
    tables: &Tables,
    data: &Dataset,
    batch: &[usize],
    loss: LossKind,
    patch: Option<&UnitPatch<'_>>,
) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|&i| {
            let out = net.forward_with_tables(tables, &data.features[i], patch);
            loss.sample_loss(&out, &data.targets, i)
        })
        .sum();
    total / batch.len() as f64
}

fn check_task(net: &QuKanNetwork, data: &Dataset, loss: LossKind) -> Result<()> {
    match (loss, &data.targets) {
        (LossKind::CrossEntropy, Targets::Classes { n_classes, .. }) => {
            if net.out_width() != *n_classes {
                return config(format!(
                    "network has {} outputs for {} classes",
                    net.out_width(),
                    n_classes
                ));
            }
        }
        (LossKind::Mse, Targets::Real(_)) => {
            if net.out_width() != 1 {
                return config("regression networks need exactly one output");
            }
        }
        _ => return config("loss does not match the dataset's targets"),
    }
    if data.n_features() != net.in_width() {
        return config(format!(
            "dataset has {} features, network takes {}",
            data.n_features(),
            net.in_width()
        ));
    }
    Ok(())
}

/// Mean batch loss of `net` on `batch`.
pub fn network_loss(net: &QuKanNetwork, data: &Dataset, batch: &[usize], loss: LossKind) -> Result<f64> {
    check_task(net, data, loss)?;
    let tables = net.tables();
    Ok(batch_loss(net, &tables, data, batch, loss, None))
}

/// Central-difference gradient of the mean batch loss with respect to every
/// network parameter. Each shifted evaluation re-runs the full network on the
/// batch; only the perturbed unit's readout table is recomputed.
pub fn network_gradient_fd(
    net: &QuKanNetwork,
    data: &Dataset,
    batch: &[usize],
    loss: LossKind,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    check_task(net, data, loss)?;
    if !(cfg.fd_step > 0.0 && cfg.fd_step_weights > 0.0) {
        return config("finite-difference steps must be positive");
    }
    if batch.is_empty() {
        return domain("empty batch");
    }
    let tables = net.tables();
    let locs = net.param_locations();
    locs.par_iter()
        .enumerate()
        .map(|(m, loc)| {
            let base_unit = &net.layers[loc.layer].units[loc.out][loc.inp];
            let h = if loc.is_angle { cfg.fd_step } else { cfg.fd_step_weights };
            let mut unit = base_unit.clone();
            let mut p = base_unit.params();
            let x0 = p[loc.local];
            let mut eval = |v: f64| -> Result<f64> {
                p[loc.local] = v;
                unit.set_params(&p)?;
                let table = if loc.is_angle {
                    unit.readout_table()
                } else {
                    tables[loc.layer][loc.out][loc.inp].clone()
                };
                let patch = UnitPatch {
                    layer: loc.layer,
                    out: loc.out,
                    inp: loc.inp,
                    unit: &unit,
                    table: &table,
                };
                Ok(batch_loss(net, &tables, data, batch, loss, Some(&patch)))
            };
            let up = eval(x0 + h)?;
            let down = eval(x0 - h)?;
            if !up.is_finite() || !down.is_finite() {
                return Err(QukanError::Divergence {
                    iteration: 0,
                    reason: format!("non-finite loss while differentiating parameter {m}"),
                });
            }
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// `(avg, median, min, max)` of `|pred_i − target_i|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumAbsStats {
    pub avg: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Published statistics for the EVQKAN comparison model on `ln(x₀/x₁)`.
pub const EVQKAN_REFERENCE: SumAbsStats = SumAbsStats {
    avg: 1.229062,
    median: 1.319659,
    min: 0.753301,
    max: 1.646876,
};

pub fn sum_abs_distance_stats(preds: &[f64], targets: &[f64]) -> Result<SumAbsStats> {
    if preds.len() != targets.len() {
        return domain(format!("lengths {} and {}", preds.len(), targets.len()));
    }
    if preds.is_empty() {
        return domain("no predictions");
    }
    let mut d: Vec<f64> = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).collect();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let median = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    Ok(SumAbsStats {
        avg: d.iter().sum::<f64>() / n as f64,
        median,
        min: d[0],
        max: d[n - 1],
    })
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return domain("pearson needs two equal-length vectors of at least two values");
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    /// Classification accuracy on the evaluated set.
    pub accuracy: Option<f64>,
    /// Regression error statistics on the evaluated set.
    pub sum_abs: Option<SumAbsStats>,
    pub loss: f64,
    /// Training-set loss after initialisation and after every epoch.
    pub loss_trace: Vec<f64>,
    /// Training-set accuracy after initialisation and after every epoch.
    pub accuracy_trace: Vec<f64>,
}

/// Loss, accuracy or error statistics of `net` on `data`.
pub fn evaluate(net: &QuKanNetwork, data: &Dataset, loss: LossKind) -> Result<MetricsReport> {
    check_task(net, data, loss)?;
    if data.is_empty() {
        return domain("cannot evaluate on an empty dataset");
    }
    let outs = net.forward_batch(&data.features)?;
    let l = outs
        .iter()
        .enumerate()
        .map(|(i, o)| loss.sample_loss(o, &data.targets, i))
        .sum::<f64>()
        / outs.len() as f64;
    let mut report = MetricsReport {
        loss: l,
        ..Default::default()
    };
    match &data.targets {
        Targets::Classes { labels, .. } => {
            let hits = outs.iter().zip(labels).filter(|(o, &y)| argmax(o) == y).count();
            report.accuracy = Some(hits as f64 / outs.len() as f64);
        }
        Targets::Real(y) => {
            let preds: Vec<f64> = outs.iter().map(|o| o[0]).collect();
            report.sum_abs = Some(sum_abs_distance_stats(&preds, y)?);
        }
    }
    Ok(report)
}

/// Seeded mini-batch Adam on finite-difference gradients.
///
/// The returned report holds the final training-set metrics together with the
/// per-epoch traces (entry 0 is the initial model).
pub fn train(net: &mut QuKanNetwork, data: &Dataset, cfg: &TrainConfig, loss: LossKind) -> Result<MetricsReport> {
    cfg.validate()?;
    check_task(net, data, loss)?;
    if data.is_empty() {
        return domain("cannot train on an empty dataset");
    }
    net.check_inputs(&data.features)?;
    let hp = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(net.n_params());
    let mut order: Vec<usize> = (0..data.len()).collect();

    let first = evaluate(net, data, loss)?;
    let mut loss_trace = vec![first.loss];
    let mut accuracy_trace: Vec<f64> = first.accuracy.into_iter().collect();
    let mut last = first;
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        if last.loss < cfg.tol {
            break;
        }
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let grad = network_gradient_fd(net, data, batch, loss, cfg).map_err(|e| match e {
                QukanError::Divergence { reason, .. } => QukanError::Divergence { iteration: step, reason },
                other => other,
            })?;
            let mut p = net.params();
            adam_step(&mut p, &grad, &mut adam, &hp)?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(QukanError::Divergence {
                    iteration: step,
                    reason: "non-finite parameter after update".into(),
                });
            }
            net.set_params(&p)?;
            step += 1;
        }
        last = evaluate(net, data, loss)?;
        if !last.loss.is_finite() {
            return Err(QukanError::Divergence {
                iteration: step,
                reason: "non-finite training loss".into(),
            });
        }
        loss_trace.push(last.loss);
        accuracy_trace.extend(last.accuracy);
    }
    last.loss_trace = loss_trace;
    last.accuracy_trace = accuracy_trace;
    Ok(last)
}
