//! Dataset preparation, model construction and single-seed training runs.

use qukan::baselines::{ablation_variant, train_vqc, AblationKind, Embedding, VqcModel};
use qukan::data::{
    iris, make_moons, minmax_scale, regression_targets, stratified_split, Dataset, MinMaxScaler, RegressionKind,
};
use qukan::network::argmax;
use qukan::optim::{evaluate, train, LossKind, MetricsReport};
use qukan::qcbm::{build_superposition_target, pretrain, MmdKernel, PretrainOutcome, QcbmModel, TargetDistribution};
use qukan::residual::{label_qubits_for, spline_rows, BaseKind};
use qukan::{BaseCircuit, QuKanNetwork, RegisterLayout, SplineBasis};
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ModelKind, PretrainTarget, RunConfig};
use crate::{CliError, CliResult};

/// Offset between the training and test generator seeds.
pub const TEST_SEED_OFFSET: u64 = 1000;

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub scaler: MinMaxScaler,
}

/// Train and test sets for `seed`, min-max scaled with the training fit.
pub fn prepare_data(cfg: &RunConfig, seed: u64) -> CliResult<Split> {
    let d = &cfg.data;
    let sizes = || (d.n_train.unwrap_or(1), d.n_test.unwrap_or(1));
    let test_seed = seed.wrapping_add(TEST_SEED_OFFSET);
    let (train, test) = match cfg.experiment {
        Experiment::Moons => {
            let (a, b) = sizes();
            (make_moons(a, d.noise, seed)?, make_moons(b, d.noise, test_seed)?)
        }
        Experiment::Iris => stratified_split(&iris(), d.train_fraction, seed)?,
        Experiment::Linear | Experiment::LogRatio => {
            let kind = regression_kind(cfg.experiment);
            let (a, b) = sizes();
            (regression_targets(kind, a, seed)?, regression_targets(kind, b, test_seed)?)
        }
    };
    let (train, scaler) = minmax_scale(&train);
    let test = scaler.transform(&test);
    Ok(Split { train, test, scaler })
}

fn regression_kind(e: Experiment) -> RegressionKind {
    match e {
        Experiment::LogRatio => RegressionKind::LogRatio,
        _ => RegressionKind::Linear,
    }
}

pub fn spline_basis(cfg: &RunConfig) -> CliResult<SplineBasis> {
    Ok(SplineBasis::clamped_uniform(cfg.qcbm.n_basis, cfg.qcbm.degree, 0.0, 1.0)?)
}

pub fn kernel(cfg: &RunConfig) -> CliResult<MmdKernel> {
    Ok(MmdKernel::new(cfg.qcbm.bandwidths.clone())?)
}

pub struct Pretrained {
    pub base: BaseCircuit,
    pub outcome: PretrainOutcome,
    pub target: TargetDistribution,
}

/// QCBM pre-training of the spline superposition (or the self-target smoke test).
pub fn pretrain_base(cfg: &RunConfig) -> CliResult<Pretrained> {
    let q = &cfg.qcbm;
    let basis = spline_basis(cfg)?;
    let rows = spline_rows(&basis, q.n_position_qubits)?;
    let layout = RegisterLayout::contiguous(label_qubits_for(rows.len()), q.n_position_qubits);
    let weights = vec![1.0 / rows.len() as f64; rows.len()];
    let pc = q.pretrain_config();
    let init = QcbmModel::random(layout.clone(), pc.n_layers, pc.seed);
    let target = match q.target {
        PretrainTarget::Splines => build_superposition_target(&rows, &layout, &weights)?,
        PretrainTarget::SelfTarget => TargetDistribution {
            layout: layout.clone(),
            probs: init.distribution(),
            row_normalizers: vec![],
            label_weights: vec![],
        },
    };
    let outcome = pretrain(&init, &target, &kernel(cfg)?, &pc)?;
    let base = BaseCircuit {
        layout,
        kind: BaseKind::Pretrained,
        n_layers: pc.n_layers,
        angles: outcome.model.stack.angles.clone(),
        row_normalizers: target.row_normalizers.clone(),
        label_weights: target.label_weights.clone(),
        pretrain_tvd: outcome.tvd,
        silu: None,
    };
    Ok(Pretrained { base, outcome, target })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Network(QuKanNetwork),
    Vqc(VqcModel),
}

impl TrainedModel {
    /// Class prediction for one scaled input.
    pub fn predict(&self, x: &[f64]) -> CliResult<usize> {
        Ok(match self {
            TrainedModel::Network(n) => argmax(&n.forward(x)?),
            TrainedModel::Vqc(m) => m.predict(x)?,
        })
    }

    pub fn in_width(&self) -> usize {
        match self {
            TrainedModel::Network(n) => n.in_width(),
            TrainedModel::Vqc(m) => match m.embedding {
                Embedding::Angle | Embedding::ZzFeatureMap => m.n_qubits,
                _ => 1 << (m.n_qubits - m.n_ancillas),
            },
        }
    }

    pub fn evaluate(&self, data: &Dataset) -> CliResult<MetricsReport> {
        match self {
            TrainedModel::Network(n) => Ok(evaluate(n, data, LossKind::for_dataset(data))?),
            TrainedModel::Vqc(m) => Ok(MetricsReport {
                accuracy: Some(m.accuracy(data)?),
                ..Default::default()
            }),
        }
    }
}

fn vqc_embedding(kind: ModelKind) -> Option<Embedding> {
    match kind {
        ModelKind::VqcAngle => Some(Embedding::Angle),
        ModelKind::VqcZz => Some(Embedding::ZzFeatureMap),
        ModelKind::VqcAmplitude => Some(Embedding::Amplitude),
        ModelKind::VqcAmplitudeAncillas => Some(Embedding::AmplitudeWithAncillas),
        _ => None,
    }
}

/// Untrained model for one seed, with grids calibrated on the training inputs.
pub fn build_model(cfg: &RunConfig, base: Option<&BaseCircuit>, split: &Split, seed: u64) -> CliResult<TrainedModel> {
    let widths = cfg.widths();
    let need_base = || {
        base.ok_or_else(|| CliError::MissingArtifact("pretrained base circuit; run `qukan pretrain` first".into()))
    };
    let check_widths = || -> CliResult<()> {
        let d = split.train.n_features();
        let out = split.train.n_classes().unwrap_or(1);
        if widths[0] != d || *widths.last().unwrap() != out {
            return Err(CliError::Config(format!(
                "widths {widths:?} do not fit {d} features and {out} outputs"
            )));
        }
        Ok(())
    };
    let net = match cfg.model {
        ModelKind::Qukan | ModelKind::Pretrained | ModelKind::HadamardInit | ModelKind::UntrainedFrozen => {
            check_widths()?;
            let kind = match cfg.model {
                ModelKind::HadamardInit => AblationKind::HadamardInit,
                ModelKind::UntrainedFrozen => AblationKind::UntrainedFrozen,
                _ => AblationKind::Pretrained,
            };
            let mut net = ablation_variant(
                kind,
                &widths,
                need_base()?,
                cfg.network.trainable_layers,
                cfg.network.readout,
            )?;
            net.calibrate_ranges(&split.train.features)?;
            net
        }
        ModelKind::Fqukan => {
            check_widths()?;
            let base = need_base()?;
            let basis = spline_basis(cfg)?;
            let kernel = kernel(cfg)?;
            let pc = cfg.qcbm.pretrain_config();
            QuKanNetwork::full_quantum(
                &widths,
                base.layout.position_qubits().len(),
                cfg.network.trainable_layers,
                cfg.network.readout,
                &split.train.features,
                |_, _, grid| Ok(BaseCircuit::pretrain_full_quantum(&basis, grid, &kernel, &pc)?.0),
            )?
        }
        kind => {
            let emb = vqc_embedding(kind).expect("remaining kinds are VQC variants");
            let n_classes = split
                .train
                .n_classes()
                .ok_or_else(|| CliError::Config("VQC baselines only support classification".into()))?;
            let m = VqcModel::new(emb, split.train.n_features(), n_classes, seed)?;
            return Ok(TrainedModel::Vqc(m));
        }
    };
    Ok(TrainedModel::Network(net))
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub model: TrainedModel,
    pub scaler: MinMaxScaler,
    /// Training-set traces (entry 0 is the initial model).
    pub train_report: MetricsReport,
    pub test: MetricsReport,
}

/// Builds, trains and evaluates one model.
pub fn run_seed(cfg: &RunConfig, base: Option<&BaseCircuit>, seed: u64) -> CliResult<SeedOutcome> {
    let split = prepare_data(cfg, seed)?;
    let mut model = build_model(cfg, base, &split, seed)?;
    let tc = cfg.train_config(seed);
    let train_report = match &mut model {
        TrainedModel::Network(net) => train(net, &split.train, &tc, LossKind::for_dataset(&split.train))?,
        TrainedModel::Vqc(m) => {
            let trace = train_vqc(m, &split.train, &tc)?;
            MetricsReport {
                accuracy: trace.last().copied(),
                accuracy_trace: trace,
                ..Default::default()
            }
        }
    };
    let test = model.evaluate(&split.test)?;
    Ok(SeedOutcome {
        seed,
        model,
        scaler: split.scaler,
        train_report,
        test,
    })
}

/// Sample mean and standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
