//! The five CLI verbs. `pretrain` writes into the experiment directory;
//! `train`, `eval` and `boundary` into its per-model subdirectory and
//! `ablate` into `ablation/`. Every directory written to receives a copy of
//! the resolved configuration (`config.toml`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qukan::baselines::AblationKind;
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, Payload};
use crate::config::{ModelKind, RunConfig};
use crate::experiment::{mean_std, prepare_data, pretrain_base, run_seed, SeedOutcome, TrainedModel};
use crate::{CliError, CliResult};

pub const PRETRAIN_CHECKPOINT: &str = "pretrain.json";
pub const BOUNDARY_RESOLUTION: usize = 200;

fn write_config(cfg: &RunConfig, dir: PathBuf) -> CliResult<PathBuf> {
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(dir)
}

fn seed_dir(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}"))
}

pub struct PretrainSummary {
    pub tvd: f64,
    pub best_loss: f64,
    pub iterations: usize,
}

/// Writes `pretrain.json`, `pretrain_trace.csv` and `pretrain_distribution.csv`.
/// A final TVD above `qcbm.max_tvd` is reported as non-convergence after the
/// files are written.
pub fn cmd_pretrain(cfg: &RunConfig) -> CliResult<PretrainSummary> {
    let dir = write_config(cfg, cfg.output_dir().to_path_buf())?;
    let p = pretrain_base(cfg)?;
    let toml = cfg.to_toml();
    Checkpoint::new(
        cfg.experiment,
        cfg.model,
        Payload::Qcbm { base: p.base.clone() },
        None,
        cfg.qcbm.seed,
        &toml,
    )
    .save(&dir.join(PRETRAIN_CHECKPOINT))?;

    let mut trace = String::from("iteration,mmd,tvd\n");
    for (i, (l, t)) in p.outcome.loss_trace.iter().zip(&p.outcome.tvd_trace).enumerate() {
        writeln!(trace, "{i},{l},{t}").unwrap();
    }
    fs::write(dir.join("pretrain_trace.csv"), trace)?;

    let learned = p.outcome.model.distribution();
    let layout = &p.base.layout;
    let mut dist = String::from("label,position,target,learned\n");
    for idx in 0..layout.dim() {
        let (j, k) = layout.split_index(idx);
        writeln!(dist, "{j},{k},{},{}", p.target.probs[idx], learned[idx]).unwrap();
    }
    fs::write(dir.join("pretrain_distribution.csv"), dist)?;

    let summary = PretrainSummary {
        tvd: p.outcome.tvd,
        best_loss: p.outcome.best_loss,
        iterations: p.outcome.iterations,
    };
    if summary.tvd > cfg.qcbm.max_tvd {
        return Err(CliError::Divergence(format!(
            "pre-training stopped at TVD {} after {} iterations (limit {}); best MMD {}",
            summary.tvd, summary.iterations, cfg.qcbm.max_tvd, summary.best_loss
        )));
    }
    Ok(summary)
}

fn load_base(cfg: &RunConfig) -> CliResult<Option<qukan::BaseCircuit>> {
    if !cfg.model.needs_pretrain() {
        return Ok(None);
    }
    let ck = Checkpoint::load(&cfg.output_dir().join(PRETRAIN_CHECKPOINT), "qukan pretrain")?;
    match ck.payload {
        Payload::Qcbm { base } => Ok(Some(base)),
        _ => Err(CliError::Config("pretrain.json does not hold a QCBM".into())),
    }
}

fn model_checkpoint(cfg: &RunConfig, o: &SeedOutcome) -> Checkpoint {
    let payload = match &o.model {
        TrainedModel::Network(n) => Payload::Network { network: n.clone() },
        TrainedModel::Vqc(m) => Payload::Vqc { model: m.clone() },
    };
    Checkpoint::new(
        cfg.experiment,
        cfg.model,
        payload,
        Some(o.scaler.clone()),
        o.seed,
        &cfg.to_toml(),
    )
}

fn trace_csv(o: &SeedOutcome) -> String {
    let r = &o.train_report;
    let mut s = String::from("epoch,loss,train_accuracy\n");
    let n = r.loss_trace.len().max(r.accuracy_trace.len());
    for e in 0..n {
        let l = r.loss_trace.get(e).map(f64::to_string).unwrap_or_default();
        let a = r.accuracy_trace.get(e).map(f64::to_string).unwrap_or_default();
        writeln!(s, "{e},{l},{a}").unwrap();
    }
    s
}

/// Per-seed rows and the mean ± std aggregate, as `(metrics.csv, aggregate.csv)`.
pub fn metrics_tables(outcomes: &[SeedOutcome]) -> (String, String) {
    let mut metrics = String::new();
    let mut agg = String::from("metric,mean,std,formatted\n");
    let classification = outcomes.iter().all(|o| o.test.accuracy.is_some());
    if classification {
        metrics.push_str("seed,test_accuracy,train_accuracy\n");
        for o in outcomes {
            let tr = o.train_report.accuracy.unwrap_or(f64::NAN);
            writeln!(metrics, "{},{},{}", o.seed, o.test.accuracy.unwrap(), tr).unwrap();
        }
        let accs: Vec<f64> = outcomes.iter().map(|o| o.test.accuracy.unwrap()).collect();
        let (m, s) = mean_std(&accs);
        writeln!(agg, "test_accuracy,{m},{s},{:.2}% ± {:.2}%", 100.0 * m, 100.0 * s).unwrap();
    } else {
        metrics.push_str("seed,avg,median,min,max,test_mse\n");
        for o in outcomes {
            let st = o.test.sum_abs.expect("regression runs report error statistics");
            writeln!(metrics, "{},{},{},{},{},{}", o.seed, st.avg, st.median, st.min, st.max, o.test.loss).unwrap();
        }
        type Get = fn(&SeedOutcome) -> f64;
        let cols: [(&str, Get); 4] = [
            ("avg", |o| o.test.sum_abs.unwrap().avg),
            ("median", |o| o.test.sum_abs.unwrap().median),
            ("min", |o| o.test.sum_abs.unwrap().min),
            ("max", |o| o.test.sum_abs.unwrap().max),
        ];
        for (name, get) in cols {
            let v: Vec<f64> = outcomes.iter().map(get).collect();
            let (m, s) = mean_std(&v);
            writeln!(agg, "{name},{m},{s},{m:.6} ± {s:.6}").unwrap();
        }
    }
    (metrics, agg)
}

/// Trains every seed in parallel and writes per-seed checkpoints and traces,
/// `metrics.csv` and `aggregate.csv`.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<Vec<SeedOutcome>> {
    let base = load_base(cfg)?;
    let dir = write_config(cfg, cfg.model_dir())?;
    let outcomes: Vec<SeedOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, base.as_ref(), s))
        .collect::<CliResult<_>>()?;
    for o in &outcomes {
        let sd = seed_dir(&dir, o.seed);
        model_checkpoint(cfg, o).save(&sd.join("model.json"))?;
        fs::write(sd.join("trace.csv"), trace_csv(o))?;
    }
    let (metrics, agg) = metrics_tables(&outcomes);
    fs::write(dir.join("metrics.csv"), metrics)?;
    fs::write(dir.join("aggregate.csv"), agg)?;
    Ok(outcomes)
}

fn load_model(cfg: &RunConfig, seed: u64) -> CliResult<(TrainedModel, Checkpoint)> {
    let path = seed_dir(&cfg.model_dir(), seed).join("model.json");
    let ck = Checkpoint::load(&path, "qukan train")?;
    if ck.experiment != cfg.experiment || ck.model != cfg.model {
        return Err(CliError::Config(format!(
            "{} holds a {}/{} model but the configuration asks for {}/{}",
            path.display(),
            ck.experiment.name(),
            ck.model.name(),
            cfg.experiment.name(),
            cfg.model.name()
        )));
    }
    let model = match &ck.payload {
        Payload::Network { network } => TrainedModel::Network(network.clone()),
        Payload::Vqc { model } => TrainedModel::Vqc(model.clone()),
        Payload::Qcbm { .. } => return Err(CliError::Config(format!("{} is not a model", path.display()))),
    };
    Ok((model, ck))
}

/// Re-evaluates the saved models on their test sets; writes `eval.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> CliResult<String> {
    let dir = write_config(cfg, cfg.model_dir())?;
    let mut out = String::new();
    for &seed in &cfg.seeds {
        let (model, _) = load_model(cfg, seed)?;
        let split = prepare_data(cfg, seed)?;
        let r = model.evaluate(&split.test)?;
        if out.is_empty() {
            out.push_str(if r.accuracy.is_some() {
                "seed,test_accuracy,test_loss\n"
            } else {
                "seed,avg,median,min,max,test_mse\n"
            });
        }
        match (r.accuracy, r.sum_abs) {
            (Some(a), _) => writeln!(out, "{seed},{a},{}", r.loss).unwrap(),
            (None, Some(s)) => writeln!(out, "{seed},{},{},{},{},{}", s.avg, s.median, s.min, s.max, r.loss).unwrap(),
            _ => unreachable!("evaluation reports a metric"),
        }
    }
    fs::write(dir.join("eval.csv"), &out)?;
    Ok(out)
}

/// Class predictions on a 200 × 200 lattice spanning the scaler's feature box.
/// Rows are `x,y,class` in original feature units; returns the output path.
pub fn cmd_boundary(cfg: &RunConfig, seed: u64) -> CliResult<PathBuf> {
    let dir = write_config(cfg, cfg.model_dir())?;
    let (model, ck) = load_model(cfg, seed)?;
    if !cfg.experiment.is_classification() || model.in_width() != 2 {
        return Err(CliError::Config(
            "decision boundaries need a two-feature classification model".into(),
        ));
    }
    let scaler = ck
        .scaler
        .ok_or_else(|| CliError::Config("checkpoint has no recorded scaler".into()))?;
    let n = BOUNDARY_RESOLUTION;
    let coord = |c: usize, i: usize| {
        let (lo, hi) = (scaler.mins[c], scaler.maxs[c]);
        let t = i as f64 / (n - 1) as f64;
        // exact at both ends of the box
        (1.0 - t) * lo + t * hi
    };
    let rows: Vec<String> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (iy, ix) = (idx / n, idx % n);
            let x = [coord(0, ix), coord(1, iy)];
            let class = model.predict(&scaler.scale_row(&x))?;
            Ok(format!("{},{},{class}\n", x[0], x[1]))
        })
        .collect::<CliResult<_>>()?;
    let mut out = String::with_capacity(rows.len() * 32);
    out.push_str("x,y,class\n");
    rows.iter().for_each(|r| out.push_str(r));
    let path = dir.join(format!("boundary_seed_{seed}.csv"));
    fs::write(&path, out)?;
    Ok(path)
}

/// Per-arm training accuracy after each epoch (mean over seeds) and final
/// test accuracies.
pub struct AblationResult {
    pub arms: Vec<(AblationKind, Vec<SeedOutcome>)>,
}

impl AblationResult {
    pub fn mean_train_accuracy(&self, arm: usize, epoch: usize) -> f64 {
        let v: Vec<f64> = self.arms[arm].1.iter().map(|o| o.train_report.accuracy_trace[epoch]).collect();
        mean_std(&v).0
    }
}

/// Trains the three ablation arms with shared seeds; writes `ablation.csv`
/// (one row per epoch) and `ablation_test.csv`.
pub fn cmd_ablate(cfg: &RunConfig) -> CliResult<AblationResult> {
    let mut arms = Vec::new();
    let mut base_cfg = cfg.clone();
    base_cfg.model = ModelKind::Pretrained;
    let base = load_base(&base_cfg)?;
    let dir = write_config(cfg, cfg.output_dir().join("ablation"))?;
    for kind in AblationKind::ALL {
        let mut c = cfg.clone();
        c.model = match kind {
            AblationKind::Pretrained => ModelKind::Pretrained,
            AblationKind::HadamardInit => ModelKind::HadamardInit,
            AblationKind::UntrainedFrozen => ModelKind::UntrainedFrozen,
        };
        let outs: Vec<SeedOutcome> = c
            .seeds
            .par_iter()
            .map(|&s| run_seed(&c, base.as_ref(), s))
            .collect::<CliResult<_>>()?;
        arms.push((kind, outs));
    }
    let res = AblationResult { arms };
    let epochs = res.arms[0].1[0].train_report.accuracy_trace.len().saturating_sub(1);
    let mut csv = String::from("epoch");
    for (k, _) in &res.arms {
        write!(csv, ",{}", k.name()).unwrap();
    }
    csv.push('\n');
    for e in 1..=epochs {
        write!(csv, "{e}").unwrap();
        for a in 0..res.arms.len() {
            write!(csv, ",{}", res.mean_train_accuracy(a, e)).unwrap();
        }
        csv.push('\n');
    }
    fs::write(dir.join("ablation.csv"), csv)?;
    let mut test = String::from("variant,seed,test_accuracy\n");
    for (k, outs) in &res.arms {
        for o in outs {
            writeln!(test, "{},{},{}", k.name(), o.seed, o.test.accuracy.unwrap_or(f64::NAN)).unwrap();
        }
    }
    fs::write(dir.join("ablation_test.csv"), test)?;
    Ok(res)
}
