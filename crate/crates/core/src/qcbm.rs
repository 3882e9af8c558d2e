//! Quantum circuit Born machine pre-training.
//!
//! A QCBM is a stack of strongly entangling layers applied to `|0…0⟩`; its
//! Born-rule output distribution is fitted to a joint label × position target
//! under a squared MMD loss, using exact parameter-shift gradients and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, QukanError, Result};
use crate::optim::{adam_step, AdamParams, AdamState};
use crate::simcore::{EntanglingLayerStack, RegisterLayout, StateVector};

/// Normalised joint target `π(j, k) = c̃_j · M[j][k] / Z_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    pub layout: RegisterLayout,
    pub probs: Vec<f64>,
    /// `Z_j = Σ_k M[j][k]` for every populated label.
    pub row_normalizers: Vec<f64>,
    pub label_weights: Vec<f64>,
}

/// Builds the superposition target for the rows of `rows` (one per label).
/// Labels past `rows.len()` receive zero probability.
pub fn build_superposition_target(
    rows: &[Vec<f64>],
    layout: &RegisterLayout,
    label_weights: &[f64],
) -> Result<TargetDistribution> {
    if rows.is_empty() || rows.len() > layout.n_labels() {
        return config(format!(
            "{} target rows do not fit {} labels",
            rows.len(),
            layout.n_labels()
        ));
    }
    if label_weights.len() != rows.len() {
        return config("one label weight is needed per target row");
    }
    if label_weights.iter().any(|&c| !(c >= 0.0)) {
        return config("label weights must be nonnegative");
    }
    let total: f64 = label_weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return config(format!("label weights sum to {total}, expected 1"));
    }
    let mut probs = vec![0.0; layout.dim()];
    let mut row_normalizers = Vec::with_capacity(rows.len());
    for (j, row) in rows.iter().enumerate() {
        if row.len() != layout.n_positions() {
            return config(format!(
                "row {j} has {} entries for {} positions",
                row.len(),
                layout.n_positions()
            ));
        }
        if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return config(format!("row {j} has negative or non-finite entries"));
        }
        let z: f64 = row.iter().sum();
        if z <= 0.0 {
            return config(format!("row {j} has zero mass"));
        }
        for (k, &v) in row.iter().enumerate() {
            probs[layout.joint_index_unchecked(j, k)] = label_weights[j] * v / z;
        }
        row_normalizers.push(z);
    }
    Ok(TargetDistribution {
        layout: layout.clone(),
        probs,
        row_normalizers,
        label_weights: label_weights.to_vec(),
    })
}

/// Label-diagonal Gaussian mixture over position indices:
/// `K((j,k),(j',k')) = δ_{jj'} · (1/|σ|) Σ_c exp(-(k-k')² / (2σ_c))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdKernel {
    bandwidths: Vec<f64>,
}

impl Default for MmdKernel {
    fn default() -> Self {
        Self {
            bandwidths: vec![0.25, 1.0, 4.0],
        }
    }
}

impl MmdKernel {
    pub fn new(bandwidths: Vec<f64>) -> Result<Self> {
        if bandwidths.is_empty() || bandwidths.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return config("MMD bandwidths must be positive and finite");
        }
        Ok(Self { bandwidths })
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    /// Kernel between two position indices.
    pub fn position_kernel(&self, k: usize, kp: usize) -> f64 {
        let d = k as f64 - kp as f64;
        let s: f64 = self
            .bandwidths
            .iter()
            .map(|sigma| (-d * d / (2.0 * sigma)).exp())
            .sum();
        s / self.bandwidths.len() as f64
    }

    fn position_matrix(&self, n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                m[a * n + b] = self.position_kernel(a, b);
            }
        }
        m
    }

    /// `K · v` over the joint basis.
    pub fn apply(&self, layout: &RegisterLayout, v: &[f64]) -> Vec<f64> {
        let np = layout.n_positions();
        let kp = self.position_matrix(np);
        let mut out = vec![0.0; v.len()];
        let mut block = vec![0.0; np];
        for j in 0..layout.n_labels() {
            for (k, slot) in block.iter_mut().enumerate() {
                *slot = v[layout.joint_index_unchecked(j, k)];
            }
            for a in 0..np {
                let row = &kp[a * np..(a + 1) * np];
                let acc: f64 = row.iter().zip(&block).map(|(x, y)| x * y).sum();
                out[layout.joint_index_unchecked(j, a)] = acc;
            }
        }
        out
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return domain(format!("{what} sums to {s}, expected 1"));
    }
    Ok(())
}

/// Squared MMD `Σ_{a,b} K(a,b)(p_a - π_a)(p_b - π_b)`.
pub fn mmd_squared(p: &[f64], pi: &[f64], kernel: &MmdKernel, layout: &RegisterLayout) -> Result<f64> {
    if p.len() != pi.len() || p.len() != layout.dim() {
        return domain(format!(
            "distribution lengths {} and {} do not match layout dimension {}",
            p.len(),
            pi.len(),
            layout.dim()
        ));
    }
    check_distribution(p, "model distribution")?;
    check_distribution(pi, "target distribution")?;
    let d: Vec<f64> = p.iter().zip(pi).map(|(a, b)| a - b).collect();
    let kd = kernel.apply(layout, &d);
    // the quadratic form is PSD; clamp rounding noise at the origin
    Ok(d.iter().zip(&kd).map(|(a, b)| a * b).sum::<f64>().max(0.0))
}

/// `0.5 · Σ |p - π|`.
pub fn total_variation(p: &[f64], pi: &[f64]) -> Result<f64> {
    if p.len() != pi.len() {
        return domain(format!("length mismatch {} vs {}", p.len(), pi.len()));
    }
    Ok(0.5 * p.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Entangling-layer circuit over every qubit of `layout`, started from `|0…0⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcbmModel {
    pub layout: RegisterLayout,
    pub stack: EntanglingLayerStack,
}

impl QcbmModel {
    pub fn new(layout: RegisterLayout, n_layers: usize, angles: Vec<f64>) -> Result<Self> {
        let stack = EntanglingLayerStack::new((0..layout.n_qubits()).collect(), n_layers, angles)?;
        Ok(Self { layout, stack })
    }

    /// Angles drawn uniformly from `[0, 2π)`.
    pub fn random(layout: RegisterLayout, n_layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_layers * layout.n_qubits() * 3;
        let angles = (0..n)
            .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
            .collect();
        Self::new(layout, n_layers, angles).expect("random angles are finite")
    }

    pub fn n_params(&self) -> usize {
        self.stack.angles.len()
    }

    pub fn state(&self) -> StateVector {
        state_for(&self.layout, &self.stack)
    }

    pub fn distribution(&self) -> Vec<f64> {
        self.state().probabilities()
    }

    fn distribution_with(&self, angles: &[f64]) -> Vec<f64> {
        let stack = EntanglingLayerStack {
            target_qubits: self.stack.target_qubits.clone(),
            n_layers: self.stack.n_layers,
            angles: angles.to_vec(),
        };
        state_for(&self.layout, &stack).probabilities()
    }
}

fn state_for(layout: &RegisterLayout, stack: &EntanglingLayerStack) -> StateVector {
    let mut s = StateVector::zero(layout.n_qubits());
    s.apply_entangling_layers(stack)
        .expect("stack validated at construction");
    s
}

/// Parameter-shift gradient of [`mmd_squared`] with respect to every angle.
///
/// `∂L/∂θ_m = (p⁺ - p⁻)ᵀ K (p - π)`, with `p±` the output at `θ_m ± π/2`.
pub fn mmd_gradient_param_shift(model: &QcbmModel, target: &TargetDistribution, kernel: &MmdKernel) -> Vec<f64> {
    let p = model.distribution();
    shift_gradient(model, &p, target, kernel)
}

fn shift_gradient(model: &QcbmModel, p: &[f64], target: &TargetDistribution, kernel: &MmdKernel) -> Vec<f64> {
    let diff: Vec<f64> = p.iter().zip(&target.probs).map(|(a, b)| a - b).collect();
    let kd = kernel.apply(&model.layout, &diff);
    let base = &model.stack.angles;
    (0..base.len())
        .into_par_iter()
        .map(|m| {
            let mut shifted = base.clone();
            shifted[m] = base[m] + std::f64::consts::FRAC_PI_2;
            let plus = model.distribution_with(&shifted);
            shifted[m] = base[m] - std::f64::consts::FRAC_PI_2;
            let minus = model.distribution_with(&shifted);
            plus.iter()
                .zip(&minus)
                .zip(&kd)
                .map(|((a, b), k)| (a - b) * k)
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub n_layers: usize,
    pub max_iters: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            n_layers: 6,
            max_iters: 500,
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// Result of [`pretrain`]. `model` carries the best angles seen.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainOutcome {
    pub model: QcbmModel,
    pub loss_trace: Vec<f64>,
    pub tvd_trace: Vec<f64>,
    pub best_loss: f64,
    pub tvd: f64,
    pub iterations: usize,
}

/// Full-batch Adam on the exact squared MMD until `max_iters` steps or `loss < tol`.
pub fn pretrain(
    model: &QcbmModel,
    target: &TargetDistribution,
    kernel: &MmdKernel,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    if cfg.max_iters == 0 {
        return config("pretraining needs max_iters >= 1");
    }
    if target.layout != model.layout {
        return config("model and target use different register layouts");
    }
    let hp = AdamParams {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    };
    let mut current = model.clone();
    let mut adam = AdamState::new(current.n_params());
    let mut loss_trace = Vec::new();
    let mut tvd_trace = Vec::new();
    let mut best = (f64::INFINITY, current.stack.angles.clone(), 1.0);
    let mut iterations = 0;

    for it in 0..=cfg.max_iters {
        let p = current.distribution();
        let loss = mmd_squared(&p, &target.probs, kernel, &current.layout)?;
        if !loss.is_finite() {
            return Err(QukanError::Divergence {
                iteration: it,
                reason: format!("MMD loss became {loss}"),
            });
        }
        let tvd = total_variation(&p, &target.probs)?;
        loss_trace.push(loss);
        tvd_trace.push(tvd);
        if loss < best.0 {
            best = (loss, current.stack.angles.clone(), tvd);
        }
        if loss < cfg.tol || it == cfg.max_iters {
            break;
        }
        let grad = shift_gradient(&current, &p, target, kernel);
        adam_step(&mut current.stack.angles, &grad, &mut adam, &hp)?;
        iterations += 1;
    }

    current.stack.angles = best.1;
    Ok(PretrainOutcome {
        model: current,
        loss_trace,
        tvd_trace,
        best_loss: best.0,
        tvd: best.2,
        iterations,
    })
}
