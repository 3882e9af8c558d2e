//! Variational quantum classifier baselines and the pre-training ablation
//! variants of the QuKAN network.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{config, domain, Result};
use crate::network::QuKanNetwork;
use crate::optim::{adam_step, fd_gradient, AdamState, TrainConfig};
use crate::residual::{BaseCircuit, Readout};
use crate::simcore::{EntanglingLayerStack, StateVector};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VQC_LAYERS: usize = 4;
pub const VQC_ANCILLAS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    Angle,
    ZzFeatureMap,
    Amplitude,
    AmplitudeWithAncillas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqcModel {
    pub embedding: Embedding,
    pub n_qubits: usize,
    pub n_ancillas: usize,
    pub stack: EntanglingLayerStack,
    /// Qubit whose `⟨Z⟩` is read in the binary case.
    pub readout_qubit: usize,
    pub n_classes: usize,
}

impl VqcModel {
    /// Smallest register that fits `n_features` under `embedding`, with
    /// [`VQC_LAYERS`] entangling layers initialised uniformly in `[0, 2π)`.
    pub fn new(embedding: Embedding, n_features: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if n_features == 0 || n_classes < 2 {
            return config("a classifier needs features and at least two classes");
        }
        let data_qubits = match embedding {
            Embedding::Angle | Embedding::ZzFeatureMap => n_features,
            Embedding::Amplitude | Embedding::AmplitudeWithAncillas => {
                crate::residual::label_qubits_for(n_features).max(1)
            }
        };
        let n_ancillas = if embedding == Embedding::AmplitudeWithAncillas { VQC_ANCILLAS } else { 0 };
        let n_qubits = data_qubits + n_ancillas;
        if n_qubits < class_qubits(n_classes) {
            return config("register too small for the class readout");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angles = (0..VQC_LAYERS * n_qubits * 3).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let stack = EntanglingLayerStack::new((0..n_qubits).collect(), VQC_LAYERS, angles)?;
        Ok(Self {
            embedding,
            n_qubits,
            n_ancillas,
            stack,
            readout_qubit: 0,
            n_classes,
        })
    }

    /// Encodes `x` into a fresh state.
    pub fn embed(&self, x: &[f64]) -> Result<StateVector> {
        let n = self.n_qubits;
        match self.embedding {
            Embedding::Angle => {
                if x.len() > n {
                    return domain("more features than qubits");
                }
                let mut s = StateVector::zero(n);
                for (q, &v) in x.iter().enumerate() {
                    s.apply_ry(q, PI * v)?;
                }
                Ok(s)
            }
            Embedding::ZzFeatureMap => {
                if x.len() > n {
                    return domain("more features than qubits");
                }
                let mut s = StateVector::zero(n);
                for q in 0..n {
                    s.apply_h(q)?;
                }
                for (q, &v) in x.iter().enumerate() {
                    s.apply_rz(q, 2.0 * v)?;
                }
                for q in 0..x.len().saturating_sub(1) {
                    s.apply_cnot(q, q + 1)?;
                    s.apply_rz(q + 1, 2.0 * (PI - x[q]) * (PI - x[q + 1]))?;
                    s.apply_cnot(q, q + 1)?;
                }
                Ok(s)
            }
            Embedding::Amplitude | Embedding::AmplitudeWithAncillas => {
                let data = n - self.n_ancillas;
                let dim = 1usize << data;
                if x.len() > dim {
                    return domain("more features than amplitudes");
                }
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(norm > 0.0) || !norm.is_finite() {
                    return domain("cannot amplitude-encode a zero or non-finite vector");
                }
                let mut amps = vec![Complex64::new(0.0, 0.0); dim];
                for (a, &v) in amps.iter_mut().zip(x) {
                    *a = Complex64::new(v / norm, 0.0);
                }
                Ok(StateVector::from_amplitudes(amps)?.with_ancillas(self.n_ancillas))
            }
        }
    }

    pub fn state(&self, x: &[f64]) -> Result<StateVector> {
        let mut s = self.embed(x)?;
        s.apply_entangling_layers(&self.stack)?;
        Ok(s)
    }

    /// `⟨Z⟩` on the readout qubit.
    pub fn expectation(&self, x: &[f64]) -> Result<f64> {
        self.state(x)?.expectation_z(self.readout_qubit)
    }

    /// Class probabilities. Binary: `((1 + ⟨Z⟩)/2, (1 − ⟨Z⟩)/2)`. Otherwise the
    /// basis probabilities of the leading `⌈log₂ C⌉` qubits, renormalised over
    /// the first `C` outcomes.
    pub fn class_probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.state(x)?;
        if self.n_classes == 2 {
            let z = s.expectation_z(self.readout_qubit)?;
            return Ok(vec![(1.0 + z) / 2.0, (1.0 - z) / 2.0]);
        }
        let cq = class_qubits(self.n_classes);
        let shift = self.n_qubits - cq;
        let mut p = vec![0.0; 1 << cq];
        for (i, a) in s.amplitudes().iter().enumerate() {
            p[i >> shift] += a.norm_sqr();
        }
        p.truncate(self.n_classes);
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter_mut().for_each(|v| *v /= total);
        } else {
            p.iter_mut().for_each(|v| *v = 1.0 / self.n_classes as f64);
        }
        Ok(p)
    }

    /// Binary: `⟨Z⟩ ≥ 0` is class 0. Otherwise the most probable class, ties low.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if self.n_classes == 2 {
            return Ok(usize::from(self.expectation(x)? < 0.0));
        }
        Ok(crate::network::argmax(&self.class_probabilities(x)?))
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let labels = data.labels().ok_or_else(|| crate::error::QukanError::Config("VQC needs class labels".into()))?;
        let mut hits = 0;
        for (x, &y) in data.features.iter().zip(labels) {
            if self.predict(x)? == y {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    fn nll(&self, data: &Dataset, batch: &[usize]) -> f64 {
        let Targets::Classes { labels, .. } = &data.targets else {
            return f64::NAN;
        };
        batch
            .iter()
            .map(|&i| match self.class_probabilities(&data.features[i]) {
                Ok(p) => -(p[labels[i]].max(1e-12)).ln(),
                Err(_) => f64::NAN,
            })
            .sum::<f64>()
            / batch.len() as f64
    }
}

fn class_qubits(n_classes: usize) -> usize {
    crate::residual::label_qubits_for(n_classes).max(1)
}

/// Mini-batch Adam on the negative log-likelihood of the class probabilities,
/// with central-difference gradients. Returns the training accuracy after each epoch.
pub fn train_vqc(model: &mut VqcModel, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.n_classes() != Some(model.n_classes) {
        return config("dataset classes do not match the model");
    }
    let hp = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = AdamState::new(model.stack.angles.len());
    let steps = vec![cfg.fd_step; model.stack.angles.len()];
    let mut trace = vec![model.accuracy(data)?];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let probe = model.clone();
            let loss = |a: &[f64]| {
                let mut m = probe.clone();
                m.stack.angles.copy_from_slice(a);
                m.nll(data, batch)
            };
            let grad = fd_gradient(loss, &model.stack.angles, &steps)?;
            adam_step(&mut model.stack.angles, &grad, &mut adam, &hp)?;
        }
        trace.push(model.accuracy(data)?);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    /// Standard QuKAN on the pre-trained base.
    Pretrained,
    /// Base replaced by the uniform superposition; trainable stack kept.
    HadamardInit,
    /// Uniform base and a frozen zero stack: a scaled SiLU plus a constant.
    UntrainedFrozen,
}

impl AblationKind {
    pub const ALL: [AblationKind; 3] = [
        AblationKind::Pretrained,
        AblationKind::HadamardInit,
        AblationKind::UntrainedFrozen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationKind::Pretrained => "pretrained",
            AblationKind::HadamardInit => "hadamard_init",
            AblationKind::UntrainedFrozen => "untrained_frozen",
        }
    }
}

/// Hybrid network of the given widths for an ablation arm. Grids start on
/// `[0, 1]`; calibrate before training.
pub fn ablation_variant(
    kind: AblationKind,
    widths: &[usize],
    pretrained: &BaseCircuit,
    trainable_layers: usize,
    readout: Readout,
) -> Result<QuKanNetwork> {
    let base = match kind {
        AblationKind::Pretrained => pretrained.clone(),
        AblationKind::HadamardInit | AblationKind::UntrainedFrozen => BaseCircuit::uniform_like(pretrained),
    };
    let mut net = QuKanNetwork::hybrid(widths, &base, trainable_layers, readout)?;
    if kind == AblationKind::UntrainedFrozen {
        for u in net.units_mut() {
            u.angles_frozen = true;
        }
    }
    Ok(net)
}
