//! Dense statevector simulation.
//!
//! Conventions used throughout the crate:
//!
//! * Qubit 0 is the most significant bit of a basis index. On `n` qubits,
//!   qubit `q` lives at bit position `n - 1 - q`.
//! * `Rot(phi, theta, omega) = RZ(omega) · RY(theta) · RZ(phi)`.
//! * A strongly entangling layer applies one `Rot` per target qubit, then a
//!   CNOT ring `CNOT(t[i], t[(i+1) mod m])` for `i = 0..m` (skipped for `m == 1`).
//! * Joint label/position index: `j · 2^{n_x} + k` when the label qubits are
//!   the leading qubits. [`RegisterLayout`] handles arbitrary splits by
//!   scattering the bits of `j` and `k` onto their qubits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A 2×2 complex matrix, row-major.
pub type Gate1 = [[Complex64; 2]; 2];

pub fn rz_matrix(angle: f64) -> Gate1 {
    let e = Complex64::from_polar(1.0, -angle / 2.0);
    [[e, ZERO], [ZERO, e.conj()]]
}

pub fn ry_matrix(angle: f64) -> Gate1 {
    let (s, c) = (angle / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

pub fn hadamard_matrix() -> Gate1 {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

/// `RZ(omega) · RY(theta) · RZ(phi)` in closed form.
pub fn rot_matrix(phi: f64, theta: f64, omega: f64) -> Gate1 {
    let (s, c) = (theta / 2.0).sin_cos();
    let sum = (phi + omega) / 2.0;
    let diff = (phi - omega) / 2.0;
    [
        [
            Complex64::from_polar(c, -sum),
            -Complex64::from_polar(s, diff),
        ],
        [
            Complex64::from_polar(s, -diff),
            Complex64::from_polar(c, sum),
        ],
    ]
}

/// Amplitudes of an `n`-qubit pure state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1usize << n_qubits];
        amplitudes[0] = ONE;
        Self {
            n_qubits,
            amplitudes,
        }
    }

    /// Computational basis state `|index⟩`.
    pub fn basis_state(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return domain(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            ));
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Uniform superposition over all basis states (Hadamard on every qubit of `|0…0⟩`).
    pub fn uniform(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Self {
            n_qubits,
            amplitudes: vec![a; dim],
        }
    }

    /// Builds a state from raw amplitudes. The length must be a power of two
    /// and the vector must be normalised to within `1e-10`.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return domain(format!("amplitude vector length {len} is not a power of two"));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return domain(format!("amplitude vector has squared norm {norm}"));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return domain(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            ));
        }
        Ok(())
    }

    #[inline]
    fn stride(&self, qubit: usize) -> usize {
        1usize << (self.n_qubits - 1 - qubit)
    }

    /// Applies an arbitrary single-qubit matrix. The caller is responsible for unitarity.
    pub fn apply_single(&mut self, qubit: usize, m: &Gate1) -> Result<()> {
        self.check_qubit(qubit)?;
        self.apply_single_unchecked(qubit, m);
        Ok(())
    }

    fn apply_single_unchecked(&mut self, qubit: usize, m: &Gate1) {
        let stride = self.stride(qubit);
        let amps = &mut self.amplitudes;
        for block in (0..amps.len()).step_by(stride << 1) {
            for i0 in block..block + stride {
                let i1 = i0 + stride;
                let a0 = amps[i0];
                let a1 = amps[i1];
                amps[i0] = m[0][0] * a0 + m[0][1] * a1;
                amps[i1] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        check_finite(&[theta])?;
        self.apply_single(qubit, &ry_matrix(theta))
    }

    pub fn apply_rz(&mut self, qubit: usize, angle: f64) -> Result<()> {
        check_finite(&[angle])?;
        self.apply_single(qubit, &rz_matrix(angle))
    }

    pub fn apply_h(&mut self, qubit: usize) -> Result<()> {
        self.apply_single(qubit, &hadamard_matrix())
    }

    /// `Rot(phi, theta, omega) = RZ(omega) RY(theta) RZ(phi)` on `qubit`.
    pub fn apply_rot(&mut self, qubit: usize, phi: f64, theta: f64, omega: f64) -> Result<()> {
        check_finite(&[phi, theta, omega])?;
        self.apply_single(qubit, &rot_matrix(phi, theta, omega))
    }

    /// Flips `target` on every basis state whose `control` bit is set.
    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return domain(format!("CNOT control and target are both qubit {control}"));
        }
        self.apply_cnot_unchecked(control, target);
        Ok(())
    }

    fn apply_cnot_unchecked(&mut self, control: usize, target: usize) {
        let cmask = self.stride(control);
        let tmask = self.stride(target);
        for i in 0..self.amplitudes.len() {
            // visit each swapped pair once, from its target-bit-0 member
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
    }

    /// Applies every layer of `stack` in order.
    pub fn apply_entangling_layers(&mut self, stack: &EntanglingLayerStack) -> Result<()> {
        stack.validate()?;
        for &q in &stack.target_qubits {
            self.check_qubit(q)?;
        }
        check_finite(&stack.angles)?;
        let m = stack.target_qubits.len();
        for layer in 0..stack.n_layers {
            for (slot, &q) in stack.target_qubits.iter().enumerate() {
                let [phi, theta, omega] = stack.rot_angles(layer, slot);
                self.apply_single_unchecked(q, &rot_matrix(phi, theta, omega));
            }
            if m >= 2 {
                for i in 0..m {
                    self.apply_cnot_unchecked(stack.target_qubits[i], stack.target_qubits[(i + 1) % m]);
                }
            }
        }
        Ok(())
    }

    /// Born-rule probabilities of every computational basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `|⟨j,k|Ψ⟩|²` for label `j` and position `k`.
    pub fn joint_probability(&self, layout: &RegisterLayout, label: usize, position: usize) -> Result<f64> {
        layout.check_against(self)?;
        let idx = layout.joint_index(label, position)?;
        Ok(self.amplitudes[idx].norm_sqr())
    }

    /// Probability of reading position `k`, summed over every label outcome.
    pub fn position_marginal(&self, layout: &RegisterLayout, position: usize) -> Result<f64> {
        layout.check_against(self)?;
        if position >= layout.n_positions() {
            return domain(format!("position {position} out of range"));
        }
        let mut p = 0.0;
        for j in 0..layout.n_labels() {
            p += self.amplitudes[layout.joint_index_unchecked(j, position)].norm_sqr();
        }
        Ok(p)
    }

    /// Position marginals for every grid point at once.
    pub fn position_marginals(&self, layout: &RegisterLayout) -> Result<Vec<f64>> {
        layout.check_against(self)?;
        let mut out = vec![0.0; layout.n_positions()];
        for (k, slot) in out.iter_mut().enumerate() {
            for j in 0..layout.n_labels() {
                *slot += self.amplitudes[layout.joint_index_unchecked(j, k)].norm_sqr();
            }
        }
        Ok(out)
    }

    /// Joint probabilities `|⟨label,k|Ψ⟩|²` for one label and every position.
    pub fn label_slice(&self, layout: &RegisterLayout, label: usize) -> Result<Vec<f64>> {
        layout.check_against(self)?;
        if label >= layout.n_labels() {
            return domain(format!("label {label} out of range"));
        }
        Ok((0..layout.n_positions())
            .map(|k| self.amplitudes[layout.joint_index_unchecked(label, k)].norm_sqr())
            .collect())
    }

    /// `⟨Z⟩` on `qubit`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = self.stride(qubit);
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    /// Tensor product `self ⊗ |0…0⟩` on `extra` additional trailing qubits.
    pub fn with_ancillas(&self, extra: usize) -> Self {
        let factor = 1usize << extra;
        let mut amplitudes = vec![ZERO; self.dim() * factor];
        for (i, a) in self.amplitudes.iter().enumerate() {
            amplitudes[i * factor] = *a;
        }
        Self {
            n_qubits: self.n_qubits + extra,
            amplitudes,
        }
    }
}

fn check_finite(angles: &[f64]) -> Result<()> {
    if let Some(a) = angles.iter().find(|a| !a.is_finite()) {
        return domain(format!("non-finite angle {a}"));
    }
    Ok(())
}

/// Split of the qubits into a label register and a position register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    label_qubits: Vec<usize>,
    position_qubits: Vec<usize>,
}

impl RegisterLayout {
    pub fn new(label_qubits: Vec<usize>, position_qubits: Vec<usize>) -> Result<Self> {
        let n = label_qubits.len() + position_qubits.len();
        let mut seen = vec![false; n];
        for &q in label_qubits.iter().chain(&position_qubits) {
            if q >= n || seen[q] {
                return domain(format!(
                    "label {label_qubits:?} and position {position_qubits:?} qubits must partition 0..{n}"
                ));
            }
            seen[q] = true;
        }
        Ok(Self {
            label_qubits,
            position_qubits,
        })
    }

    /// Label qubits first, position qubits after: `index = j · 2^{n_x} + k`.
    pub fn contiguous(n_label: usize, n_position: usize) -> Self {
        Self {
            label_qubits: (0..n_label).collect(),
            position_qubits: (n_label..n_label + n_position).collect(),
        }
    }

    pub fn label_qubits(&self) -> &[usize] {
        &self.label_qubits
    }

    pub fn position_qubits(&self) -> &[usize] {
        &self.position_qubits
    }

    pub fn n_qubits(&self) -> usize {
        self.label_qubits.len() + self.position_qubits.len()
    }

    pub fn n_labels(&self) -> usize {
        1 << self.label_qubits.len()
    }

    pub fn n_positions(&self) -> usize {
        1 << self.position_qubits.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits()
    }

    fn check_against(&self, state: &StateVector) -> Result<()> {
        if state.n_qubits() != self.n_qubits() {
            return domain(format!(
                "layout covers {} qubits but state has {}",
                self.n_qubits(),
                state.n_qubits()
            ));
        }
        Ok(())
    }

    pub fn joint_index(&self, label: usize, position: usize) -> Result<usize> {
        if label >= self.n_labels() {
            return domain(format!("label {label} out of range (< {})", self.n_labels()));
        }
        if position >= self.n_positions() {
            return domain(format!(
                "position {position} out of range (< {})",
                self.n_positions()
            ));
        }
        Ok(self.joint_index_unchecked(label, position))
    }

    pub(crate) fn joint_index_unchecked(&self, label: usize, position: usize) -> usize {
        let n = self.n_qubits();
        let mut idx = 0;
        let nl = self.label_qubits.len();
        for (i, &q) in self.label_qubits.iter().enumerate() {
            if (label >> (nl - 1 - i)) & 1 == 1 {
                idx |= 1 << (n - 1 - q);
            }
        }
        let np = self.position_qubits.len();
        for (i, &q) in self.position_qubits.iter().enumerate() {
            if (position >> (np - 1 - i)) & 1 == 1 {
                idx |= 1 << (n - 1 - q);
            }
        }
        idx
    }

    /// Inverse of [`joint_index`](Self::joint_index): `(label, position)` of a basis index.
    pub fn split_index(&self, index: usize) -> (usize, usize) {
        let n = self.n_qubits();
        let bit = |q: usize| (index >> (n - 1 - q)) & 1;
        let label = self.label_qubits.iter().fold(0, |acc, &q| (acc << 1) | bit(q));
        let position = self.position_qubits.iter().fold(0, |acc, &q| (acc << 1) | bit(q));
        (label, position)
    }
}

/// Strongly entangling layers over a subset of qubits.
///
/// Angles are stored flat as `[layer][slot][phi, theta, omega]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglingLayerStack {
    pub target_qubits: Vec<usize>,
    pub n_layers: usize,
    pub angles: Vec<f64>,
}

impl EntanglingLayerStack {
    pub fn new(target_qubits: Vec<usize>, n_layers: usize, angles: Vec<f64>) -> Result<Self> {
        let stack = Self {
            target_qubits,
            n_layers,
            angles,
        };
        stack.validate()?;
        check_finite(&stack.angles)?;
        Ok(stack)
    }

    pub fn zeros(target_qubits: Vec<usize>, n_layers: usize) -> Self {
        let n = n_layers * target_qubits.len() * 3;
        Self {
            target_qubits,
            n_layers,
            angles: vec![0.0; n],
        }
    }

    pub fn n_angles(&self) -> usize {
        self.n_layers * self.target_qubits.len() * 3
    }

    fn validate(&self) -> Result<()> {
        if self.angles.len() != self.n_angles() {
            return domain(format!(
                "angle array has {} entries, expected {} layers x {} qubits x 3",
                self.angles.len(),
                self.n_layers,
                self.target_qubits.len()
            ));
        }
        let mut sorted = self.target_qubits.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return domain("entangling stack lists a qubit twice");
        }
        Ok(())
    }

    #[inline]
    pub fn rot_angles(&self, layer: usize, slot: usize) -> [f64; 3] {
        let base = (layer * self.target_qubits.len() + slot) * 3;
        [self.angles[base], self.angles[base + 1], self.angles[base + 2]]
    }
}
