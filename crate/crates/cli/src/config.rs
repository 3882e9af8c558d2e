//! Run configuration: a TOML file with one section per library module,
//! plus command-line overrides.

use std::path::{Path, PathBuf};

use qukan::optim::TrainConfig;
use qukan::qcbm::PretrainConfig;
use qukan::residual::Readout;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the root under which default output
/// directories are created.
pub const OUTPUT_ROOT_ENV: &str = "QUKAN_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    #[default]
    Moons,
    Iris,
    Linear,
    LogRatio,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Moons => "moons",
            Experiment::Iris => "iris",
            Experiment::Linear => "linear",
            Experiment::LogRatio => "log_ratio",
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, Experiment::Moons | Experiment::Iris)
    }

    pub fn default_widths(self) -> Vec<usize> {
        match self {
            Experiment::Moons => vec![2, 3, 2],
            Experiment::Iris => vec![4, 4, 3],
            Experiment::Linear | Experiment::LogRatio => vec![2, 2, 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Qukan,
    Fqukan,
    VqcAngle,
    VqcZz,
    VqcAmplitude,
    VqcAmplitudeAncillas,
    Pretrained,
    HadamardInit,
    UntrainedFrozen,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let v = toml::Value::String(s.replace('-', "_"));
        ModelKind::deserialize(v).map_err(|_| CliError::Config(format!("unknown model {s:?}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Qukan => "qukan",
            ModelKind::Fqukan => "fqukan",
            ModelKind::VqcAngle => "vqc_angle",
            ModelKind::VqcZz => "vqc_zz",
            ModelKind::VqcAmplitude => "vqc_amplitude",
            ModelKind::VqcAmplitudeAncillas => "vqc_amplitude_ancillas",
            ModelKind::Pretrained => "pretrained",
            ModelKind::HadamardInit => "hadamard_init",
            ModelKind::UntrainedFrozen => "untrained_frozen",
        }
    }

    pub fn is_vqc(self) -> bool {
        matches!(
            self,
            ModelKind::VqcAngle | ModelKind::VqcZz | ModelKind::VqcAmplitude | ModelKind::VqcAmplitudeAncillas
        )
    }

    /// Whether training needs the spline checkpoint from `pretrain`.
    pub fn needs_pretrain(self) -> bool {
        !self.is_vqc()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PretrainTarget {
    /// Equal superposition of the spline basis.
    #[default]
    Splines,
    /// The initial circuit's own distribution; converges in zero steps.
    SelfTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcbmSection {
    pub target: PretrainTarget,
    pub n_position_qubits: usize,
    pub n_basis: usize,
    pub degree: usize,
    pub n_layers: usize,
    pub max_iters: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub tol: f64,
    pub seed: u64,
    pub bandwidths: Vec<f64>,
    /// Pre-training with a final TVD above this exits as non-convergent.
    pub max_tvd: f64,
}

impl Default for QcbmSection {
    fn default() -> Self {
        let p = PretrainConfig::default();
        Self {
            target: PretrainTarget::Splines,
            n_position_qubits: 4,
            n_basis: 4,
            degree: 2,
            n_layers: p.n_layers,
            max_iters: p.max_iters,
            lr: p.lr,
            beta1: p.beta1,
            beta2: p.beta2,
            eps: p.eps,
            tol: p.tol,
            seed: p.seed,
            bandwidths: vec![0.25, 1.0, 4.0],
            max_tvd: 0.05,
        }
    }
}

impl QcbmSection {
    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            n_layers: self.n_layers,
            max_iters: self.max_iters,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            tol: self.tol,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Defaults to the experiment's architecture.
    pub widths: Option<Vec<usize>>,
    pub trainable_layers: usize,
    pub readout: Readout,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            widths: None,
            trainable_layers: 2,
            readout: Readout::LabelProjection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub epochs: usize,
    /// Defaults to 32, or 8 for the small Iris and linear training sets.
    pub batch_size: Option<usize>,
    pub lr: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub fd_step: f64,
    pub fd_step_weights: f64,
    pub tol: f64,
}

impl Default for OptimSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: None,
            lr: t.lr,
            adam_betas: t.adam_betas,
            adam_eps: t.adam_eps,
            fd_step: t.fd_step,
            fd_step_weights: t.fd_step_weights,
            tol: t.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Moons noise standard deviation.
    pub noise: f64,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    /// Iris train share for the stratified split.
    pub train_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            noise: 0.1,
            n_train: None,
            n_test: None,
            train_fraction: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub model: ModelKind,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub qcbm: QcbmSection,
    pub network: NetworkSection,
    pub optim: OptimSection,
    pub data: DataSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Moons,
            model: ModelKind::Qukan,
            seeds: vec![0, 1, 2, 3],
            output_dir: None,
            qcbm: QcbmSection::default(),
            network: NetworkSection::default(),
            optim: OptimSection::default(),
            data: DataSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    /// Fills experiment-dependent defaults and checks every section.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let (n_train, n_test, batch) = match self.experiment {
            Experiment::Moons => (1000, 1000, 32),
            Experiment::Iris => (0, 0, 8),
            Experiment::Linear => (250, 250, 8),
            Experiment::LogRatio => (10, 50, 32),
        };
        if self.experiment != Experiment::Iris {
            self.data.n_train.get_or_insert(n_train);
            self.data.n_test.get_or_insert(n_test);
        }
        self.optim.batch_size.get_or_insert(batch);
        if self.network.widths.is_none() && !self.model.is_vqc() {
            self.network.widths = Some(self.experiment.default_widths());
        }
        if self.output_dir.is_none() {
            let root = std::env::var(OUTPUT_ROOT_ENV).unwrap_or_else(|_| DEFAULT_OUTPUT_ROOT.into());
            self.output_dir = Some(PathBuf::from(root).join(self.experiment.name()));
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let q = &self.qcbm;
        if q.n_position_qubits == 0 {
            return bad("qcbm.n_position_qubits must be at least 1".into());
        }
        if q.n_position_qubits > 10 {
            return bad("qcbm.n_position_qubits above 10 is not supported".into());
        }
        if q.n_layers == 0 || q.max_iters == 0 {
            return bad("qcbm.n_layers and qcbm.max_iters must be positive".into());
        }
        if !(q.lr > 0.0) || !(q.max_tvd > 0.0) {
            return bad("qcbm.lr and qcbm.max_tvd must be positive".into());
        }
        if q.n_basis <= q.degree {
            return bad("qcbm.n_basis must exceed qcbm.degree".into());
        }
        if let Some(w) = &self.network.widths {
            if w.len() < 2 || w.contains(&0) {
                return bad(format!("network.widths {w:?} is not a valid architecture"));
            }
        }
        if !(self.data.noise >= 0.0) {
            return bad("data.noise must be nonnegative".into());
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return bad("data.train_fraction must lie in (0, 1)".into());
        }
        if self.data.n_train == Some(0) || self.data.n_test == Some(0) {
            return bad("dataset sizes must be positive".into());
        }
        self.train_config(self.seeds[0])
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let o = &self.optim;
        TrainConfig {
            epochs: o.epochs,
            batch_size: o.batch_size.unwrap_or(32),
            lr: o.lr,
            adam_betas: o.adam_betas,
            adam_eps: o.adam_eps,
            fd_step: o.fd_step,
            fd_step_weights: o.fd_step_weights,
            seed,
            tol: o.tol,
        }
    }

    /// Experiment directory; holds the pre-training checkpoint.
    pub fn output_dir(&self) -> &Path {
        self.output_dir.as_deref().expect("resolved config has an output directory")
    }

    /// Per-model subdirectory for training, evaluation and boundary files.
    pub fn model_dir(&self) -> PathBuf {
        self.output_dir().join(self.model.name())
    }

    pub fn widths(&self) -> Vec<usize> {
        self.network
            .widths
            .clone()
            .unwrap_or_else(|| self.experiment.default_widths())
    }
}
