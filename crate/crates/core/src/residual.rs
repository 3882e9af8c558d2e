//! The QuKAN edge function.
//!
//! A residual unit holds a frozen base circuit (pre-trained to emit the spline
//! superposition), a trainable entangling stack that acts only on the label
//! register, and two classical weights. For an input `x` the position register
//! is read at the grid point nearest to `x`.
//!
//! Two readouts are available:
//!
//! * [`Readout::PositionMarginal`]: `p_f(k) = Σ_j |⟨j,k|Ψ⟩|²`. Any unitary on the
//!   label register leaves this sum unchanged, so the trainable stack has no
//!   influence on the output under this readout.
//! * [`Readout::LabelProjection`]: `p_f(k) = 2^{n_label} · |⟨0,k|Ψ⟩|²`. The stack
//!   mixes the label amplitudes before the label-0 projection, which makes the
//!   spline coefficients trainable. This is the default for networks.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::qcbm::{build_superposition_target, pretrain, MmdKernel, PretrainConfig, QcbmModel};
use crate::simcore::{EntanglingLayerStack, RegisterLayout, StateVector};
use crate::spline::{DiscretizationGrid, SplineBasis};

/// `x / (1 + e^{-x})`.
pub fn silu(x: f64) -> f64 {
    if x >= 0.0 {
        x / (1.0 + (-x).exp())
    } else {
        // avoids exp overflow for very negative x
        let e = x.exp();
        x * e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    PositionMarginal,
    #[default]
    LabelProjection,
}

impl Readout {
    /// Factor applied to the raw probability.
    pub fn gain(self, layout: &RegisterLayout) -> f64 {
        match self {
            Readout::PositionMarginal => 1.0,
            Readout::LabelProjection => layout.n_labels() as f64,
        }
    }

    /// `p_f` for every grid point of `state`.
    pub fn table(self, state: &StateVector, layout: &RegisterLayout) -> Vec<f64> {
        match self {
            Readout::PositionMarginal => state
                .position_marginals(layout)
                .expect("unit layout matches its state"),
            Readout::LabelProjection => {
                let gain = self.gain(layout);
                state
                    .label_slice(layout, 0)
                    .expect("label 0 always exists")
                    .into_iter()
                    .map(|p| gain * p)
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    Hybrid,
    FullQuantum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    /// QCBM angles applied to `|0…0⟩`.
    Pretrained,
    /// Hadamard on every qubit: uniform superposition, no spline content.
    Uniform,
    /// The target state itself, `Σ √π(j,k) |j,k⟩`: a perfectly pre-trained reference.
    Exact { amplitudes: Vec<f64> },
}

/// Constants that undo the shift-and-normalise of the SiLU row in a
/// fully quantum base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiluEncoding {
    /// `s₀ = |min_k silu(x_k)|`.
    pub shift: f64,
    /// `Σ_k (silu(x_k) + s₀)`.
    pub normalizer: f64,
    /// Label weight `c̃` given to the SiLU row.
    pub label_weight: f64,
    pub grid: DiscretizationGrid,
}

/// Frozen base circuit shared by residual units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseCircuit {
    pub layout: RegisterLayout,
    pub kind: BaseKind,
    pub n_layers: usize,
    pub angles: Vec<f64>,
    pub row_normalizers: Vec<f64>,
    pub label_weights: Vec<f64>,
    /// TVD between the pre-trained output and its target (0 for exact bases).
    pub pretrain_tvd: f64,
    pub silu: Option<SiluEncoding>,
}

impl BaseCircuit {
    pub fn state(&self) -> StateVector {
        match &self.kind {
            BaseKind::Uniform => StateVector::uniform(self.layout.n_qubits()),
            BaseKind::Exact { amplitudes } => StateVector::from_amplitudes(
                amplitudes.iter().map(|&a| num_complex::Complex64::new(a, 0.0)).collect(),
            )
            .expect("exact amplitudes are normalised"),
            BaseKind::Pretrained => {
                let model = QcbmModel::new(self.layout.clone(), self.n_layers, self.angles.clone())
                    .expect("stored angles are valid");
                model.state()
            }
        }
    }

    /// Hadamard base over the same register split as `like`.
    pub fn uniform_like(like: &BaseCircuit) -> Self {
        Self {
            layout: like.layout.clone(),
            kind: BaseKind::Uniform,
            n_layers: 0,
            angles: Vec::new(),
            row_normalizers: Vec::new(),
            label_weights: Vec::new(),
            pretrain_tvd: 0.0,
            silu: like.silu.clone(),
        }
    }

    /// Exact spline superposition (no circuit, zero TVD).
    pub fn exact_splines(basis: &SplineBasis, n_position_qubits: usize) -> Result<Self> {
        let rows = spline_rows(basis, n_position_qubits)?;
        let layout = RegisterLayout::contiguous(label_qubits_for(rows.len()), n_position_qubits);
        let weights = vec![1.0 / rows.len() as f64; rows.len()];
        let target = build_superposition_target(&rows, &layout, &weights)?;
        Ok(Self::exact_from(target, None))
    }

    /// Exact fully quantum superposition for `grid`.
    pub fn exact_full_quantum(basis: &SplineBasis, grid: &DiscretizationGrid) -> Result<Self> {
        let (target, encoding) = full_quantum_target(basis, grid)?;
        Ok(Self::exact_from(target, Some(encoding)))
    }

    fn exact_from(target: crate::qcbm::TargetDistribution, silu: Option<SiluEncoding>) -> Self {
        Self {
            layout: target.layout.clone(),
            kind: BaseKind::Exact {
                amplitudes: target.probs.iter().map(|p| p.sqrt()).collect(),
            },
            n_layers: 0,
            angles: Vec::new(),
            row_normalizers: target.row_normalizers,
            label_weights: target.label_weights,
            pretrain_tvd: 0.0,
            silu,
        }
    }

    /// Pre-trains the equal superposition of every function of `basis`,
    /// sampled on `n_position_qubits` grid points over the basis domain.
    pub fn pretrain_splines(
        basis: &SplineBasis,
        n_position_qubits: usize,
        kernel: &MmdKernel,
        cfg: &PretrainConfig,
    ) -> Result<(Self, crate::qcbm::PretrainOutcome)> {
        let rows = spline_rows(basis, n_position_qubits)?;
        let n_label = label_qubits_for(rows.len());
        let layout = RegisterLayout::contiguous(n_label, n_position_qubits);
        let weights = vec![1.0 / rows.len() as f64; rows.len()];
        let target = build_superposition_target(&rows, &layout, &weights)?;
        let model = QcbmModel::random(layout.clone(), cfg.n_layers, cfg.seed);
        let outcome = pretrain(&model, &target, kernel, cfg)?;
        let base = Self {
            layout,
            kind: BaseKind::Pretrained,
            n_layers: cfg.n_layers,
            angles: outcome.model.stack.angles.clone(),
            row_normalizers: target.row_normalizers.clone(),
            label_weights: weights,
            pretrain_tvd: outcome.tvd,
            silu: None,
        };
        Ok((base, outcome))
    }

    /// Pre-trains the fully quantum superposition: label 0 holds the shifted,
    /// normalised SiLU sampled on `grid`; labels `1..=n_basis` hold the splines.
    pub fn pretrain_full_quantum(
        basis: &SplineBasis,
        grid: &DiscretizationGrid,
        kernel: &MmdKernel,
        cfg: &PretrainConfig,
    ) -> Result<(Self, crate::qcbm::PretrainOutcome)> {
        let (target, encoding) = full_quantum_target(basis, grid)?;
        let layout = target.layout.clone();
        let model = QcbmModel::random(layout.clone(), cfg.n_layers, cfg.seed);
        let outcome = pretrain(&model, &target, kernel, cfg)?;
        let base = Self {
            layout,
            kind: BaseKind::Pretrained,
            n_layers: cfg.n_layers,
            angles: outcome.model.stack.angles.clone(),
            row_normalizers: target.row_normalizers.clone(),
            label_weights: target.label_weights.clone(),
            pretrain_tvd: outcome.tvd,
            silu: Some(encoding),
        };
        Ok((base, outcome))
    }
}

/// Number of label qubits needed to index `n` functions.
pub fn label_qubits_for(n: usize) -> usize {
    let mut q = 0;
    while (1usize << q) < n {
        q += 1;
    }
    q
}

/// Spline rows on `2^{n_x}` points spanning the basis domain.
pub fn spline_rows(basis: &SplineBasis, n_position_qubits: usize) -> Result<Vec<Vec<f64>>> {
    let (lo, hi) = basis.domain();
    let grid = DiscretizationGrid::new(lo, hi, n_position_qubits)?;
    basis.basis_matrix(&grid)
}

/// Shifted, normalised SiLU row plus spline rows with equal label weights.
pub fn full_quantum_target(
    basis: &SplineBasis,
    grid: &DiscretizationGrid,
) -> Result<(crate::qcbm::TargetDistribution, SiluEncoding)> {
    let splines = spline_rows(basis, grid.n_position_qubits())?;
    let silu_row: Vec<f64> = grid.points().iter().map(|&x| silu(x)).collect();
    let shift = silu_row.iter().cloned().fold(f64::INFINITY, f64::min).abs();
    let shifted: Vec<f64> = silu_row.iter().map(|v| v + shift).collect();
    let normalizer: f64 = shifted.iter().sum();
    let mut rows = vec![shifted];
    rows.extend(splines);
    let n = rows.len();
    let layout = RegisterLayout::contiguous(label_qubits_for(n), grid.n_position_qubits());
    let weights = vec![1.0 / n as f64; n];
    let target = build_superposition_target(&rows, &layout, &weights)?;
    let encoding = SiluEncoding {
        shift,
        normalizer,
        label_weight: weights[0],
        grid: grid.clone(),
    };
    Ok((target, encoding))
}

/// One KAN edge `φ(x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualUnit {
    pub base: BaseCircuit,
    pub trainable: EntanglingLayerStack,
    pub w_quantum: f64,
    pub w_silu: f64,
    pub grid: DiscretizationGrid,
    pub mode: ResidualMode,
    pub readout: Readout,
    pub fq_shift: f64,
    pub fq_scale: f64,
    /// Excludes the trainable angles from the parameter vector.
    pub angles_frozen: bool,
    #[serde(skip)]
    cached_base: OnceLock<StateVector>,
}

impl ResidualUnit {
    /// Hybrid unit with zero trainable angles and unit weights.
    pub fn hybrid(base: BaseCircuit, grid: DiscretizationGrid, trainable_layers: usize, readout: Readout) -> Result<Self> {
        Self::check_grid(&base, &grid)?;
        let trainable = EntanglingLayerStack::zeros(base.layout.label_qubits().to_vec(), trainable_layers);
        Ok(Self {
            base,
            trainable,
            w_quantum: 1.0,
            w_silu: 1.0,
            grid,
            mode: ResidualMode::Hybrid,
            readout,
            fq_shift: 0.0,
            fq_scale: 1.0,
            angles_frozen: false,
            cached_base: OnceLock::new(),
        })
    }

    /// Fully quantum unit; the base must carry a SiLU encoding for `grid`.
    pub fn full_quantum(base: BaseCircuit, trainable_layers: usize, readout: Readout) -> Result<Self> {
        let Some(enc) = base.silu.clone() else {
            return config("a fully quantum unit needs a base with an encoded SiLU row");
        };
        Self::check_grid(&base, &enc.grid)?;
        let trainable = EntanglingLayerStack::zeros(base.layout.label_qubits().to_vec(), trainable_layers);
        let fq_scale = enc.normalizer / (enc.label_weight * readout.gain(&base.layout));
        Ok(Self {
            base,
            trainable,
            w_quantum: 1.0,
            w_silu: 0.0,
            grid: enc.grid.clone(),
            mode: ResidualMode::FullQuantum,
            readout,
            fq_shift: enc.shift,
            fq_scale,
            angles_frozen: false,
            cached_base: OnceLock::new(),
        })
    }

    fn check_grid(base: &BaseCircuit, grid: &DiscretizationGrid) -> Result<()> {
        if grid.len() != base.layout.n_positions() {
            return config(format!(
                "grid has {} points but the position register addresses {}",
                grid.len(),
                base.layout.n_positions()
            ));
        }
        Ok(())
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.base.layout
    }

    /// Moves the unit onto a new input grid of the same resolution.
    /// Only valid for hybrid units; fully quantum units must be re-encoded.
    pub fn set_grid(&mut self, grid: DiscretizationGrid) -> Result<()> {
        Self::check_grid(&self.base, &grid)?;
        if self.mode == ResidualMode::FullQuantum {
            return config("a fully quantum unit must be re-encoded to change its grid");
        }
        self.grid = grid;
        Ok(())
    }

    /// Swaps the frozen base, clearing the cached state.
    pub fn replace_base(&mut self, base: BaseCircuit) -> Result<()> {
        if base.layout != self.base.layout {
            return config("replacement base uses a different register layout");
        }
        if self.mode == ResidualMode::FullQuantum {
            if let Some(enc) = &base.silu {
                self.fq_shift = enc.shift;
                self.fq_scale = enc.normalizer / (enc.label_weight * self.readout.gain(&base.layout));
                self.grid = enc.grid.clone();
            }
        }
        self.base = base;
        self.cached_base = OnceLock::new();
        Ok(())
    }

    /// The frozen base state, computed once.
    pub fn base_state(&self) -> &StateVector {
        self.cached_base.get_or_init(|| self.base.state())
    }

    /// `(U_trainable ⊗ I_position) |base⟩`.
    pub fn prepare_state(&self) -> StateVector {
        let mut s = self.base_state().clone();
        if self.trainable.n_layers > 0 {
            s.apply_entangling_layers(&self.trainable)
                .expect("trainable stack acts on label qubits of the base");
        }
        s
    }

    /// `p_f` at every grid point.
    pub fn readout_table(&self) -> Vec<f64> {
        self.readout.table(&self.prepare_state(), self.layout())
    }

    /// `p_f` at the grid point nearest to `x`.
    pub fn quantum_branch(&self, x: f64) -> Result<f64> {
        let k = self.grid.nearest_index(x)?;
        Ok(self.readout_table()[k])
    }

    pub fn forward(&self, x: f64) -> Result<f64> {
        let k = self.grid.nearest_index(x)?;
        Ok(self.combine(self.readout_table()[k], x))
    }

    /// Evaluates the unit given a precomputed [`readout_table`](Self::readout_table).
    #[inline]
    pub fn forward_with_table(&self, table: &[f64], x: f64) -> f64 {
        let k = self.grid.nearest_index_unchecked(x);
        self.combine(table[k], x)
    }

    #[inline]
    fn combine(&self, p_f: f64, x: f64) -> f64 {
        match self.mode {
            ResidualMode::Hybrid => self.w_quantum * p_f + self.w_silu * silu(x),
            ResidualMode::FullQuantum => self.w_quantum * (self.fq_scale * p_f - self.fq_shift),
        }
    }

    /// Worst-case deviation of a fully quantum unit's output from its exact
    /// (perfectly pre-trained) counterpart on grid inputs: `C · TVD`.
    pub fn full_quantum_error_bound(&self) -> f64 {
        2.0 * self.w_quantum.abs() * self.fq_scale * self.readout.gain(self.layout()) * self.base.pretrain_tvd
    }

    pub fn n_params(&self) -> usize {
        let angles = if self.angles_frozen { 0 } else { self.trainable.n_angles() };
        let weights = match self.mode {
            ResidualMode::Hybrid => 2,
            ResidualMode::FullQuantum => 1,
        };
        angles + weights
    }

    /// Angles first (unless frozen), then `w_quantum`, then `w_silu` for hybrid units.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        if !self.angles_frozen {
            v.extend_from_slice(&self.trainable.angles);
        }
        v.push(self.w_quantum);
        if self.mode == ResidualMode::Hybrid {
            v.push(self.w_silu);
        }
        v
    }

    /// Whether parameter `i` of [`params`](Self::params) is a rotation angle.
    pub fn is_angle(&self, i: usize) -> bool {
        !self.angles_frozen && i < self.trainable.n_angles()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return config(format!("expected {} parameters, got {}", self.n_params(), p.len()));
        }
        let mut it = p.iter().copied();
        if !self.angles_frozen {
            for a in self.trainable.angles.iter_mut() {
                *a = it.next().unwrap();
            }
        }
        self.w_quantum = it.next().unwrap();
        if self.mode == ResidualMode::Hybrid {
            self.w_silu = it.next().unwrap();
        }
        Ok(())
    }
}
