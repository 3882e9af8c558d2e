use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qukan_cli::checkpoint::{Checkpoint, Payload};
use qukan_cli::config::RunConfig;
use qukan_cli::exit_code;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

/// Small moons run: short pre-training, 60/60 points, one seed.
const TINY: &str = r#"
experiment = "moons"
seeds = [0]

[qcbm]
max_iters = 40
max_tvd = 1.0

[optim]
epochs = 1

[data]
n_train = 60
n_test = 60
"#;

fn qukan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qukan"))
        .args(args)
        .current_dir(cwd)
        .env_remove("QUKAN_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn setup(config: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    (dir, cfg)
}

fn run_ok(args: &[&str], cwd: &Path) -> String {
    let o = qukan(args, cwd);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(String::from).collect()
}

#[test]
fn test_pretrain_train_eval_pipeline() {
    let (dir, cfg) = setup(TINY);
    let c = cfg.to_str().unwrap();
    let root = dir.path().join("runs/moons");
    run_ok(&["pretrain", "--config", c], dir.path());
    for f in ["pretrain.json", "pretrain_trace.csv", "pretrain_distribution.csv", "config.toml"] {
        assert!(root.join(f).exists(), "{f}");
    }
    assert_eq!(csv_rows(&root.join("pretrain_distribution.csv")).len(), 64);

    run_ok(&["train", "--config", c], dir.path());
    let model_dir = root.join("qukan");
    let metrics = csv_rows(&model_dir.join("metrics.csv"));
    assert_eq!(metrics.len(), 1);
    let agg = std::fs::read_to_string(model_dir.join("aggregate.csv")).unwrap();
    assert!(agg.contains("test_accuracy") && agg.contains('±'));
    assert_eq!(csv_rows(&model_dir.join("seed_0/trace.csv")).len(), 2);

    // config echo: the copy equals the resolved configuration
    let echoed = RunConfig::load(&model_dir.join("config.toml")).unwrap();
    let mut expected = RunConfig::load(&cfg).unwrap();
    expected.output_dir = Some(PathBuf::from("runs/moons"));
    assert_eq!(echoed, expected.resolve().unwrap());

    // eval reproduces the training-time test accuracy
    run_ok(&["eval", "--config", c], dir.path());
    let train_acc = metrics[0].split(',').nth(1).unwrap().to_string();
    let eval = csv_rows(&model_dir.join("eval.csv"));
    assert_eq!(eval[0].split(',').nth(1).unwrap(), train_acc);
}

#[test]
fn test_checkpoint_round_trip_is_bit_identical() {
    let (dir, cfg) = setup(TINY);
    let c = cfg.to_str().unwrap();
    run_ok(&["pretrain", "--config", c], dir.path());
    let cfg = RunConfig::load(&cfg).unwrap();
    let mut cfg = cfg;
    cfg.output_dir = Some(dir.path().join("runs/moons"));
    let cfg = cfg.resolve().unwrap();
    let base = match Checkpoint::load(&cfg.output_dir().join("pretrain.json"), "qukan pretrain")
        .unwrap()
        .payload
    {
        Payload::Qcbm { base } => base,
        _ => panic!("expected a QCBM payload"),
    };
    let out = qukan_cli::experiment::run_seed(&cfg, Some(&base), 0).unwrap();
    let qukan_cli::experiment::TrainedModel::Network(net) = &out.model else {
        panic!("expected a network");
    };
    let ck = Checkpoint::new(
        cfg.experiment,
        cfg.model,
        Payload::Network { network: net.clone() },
        Some(out.scaler.clone()),
        0,
        &cfg.to_toml(),
    );
    let path = dir.path().join("ck.json");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path, "qukan train").unwrap();
    assert_eq!(back.provenance, ck.provenance);
    assert_eq!(back.scaler, ck.scaler);
    let Payload::Network { network: loaded } = back.payload else {
        panic!("expected a network payload");
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x = [rng.gen_range(-0.3..1.3), rng.gen_range(-0.3..1.3)];
        let a = net.forward(&x).unwrap();
        let b = loaded.forward(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn test_checkpoint_version_is_checked() {
    let (dir, cfg) = setup(TINY);
    run_ok(&["pretrain", "--config", cfg.to_str().unwrap()], dir.path());
    let path = dir.path().join("runs/moons/pretrain.json");
    let text = std::fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 99");
    assert!(Checkpoint::from_json(&text).is_err());
}

#[test]
fn test_exit_codes() {
    let (dir, cfg) = setup(TINY);
    let c = cfg.to_str().unwrap();

    // missing pre-training
    let o = qukan(&["train", "--config", c], dir.path());
    assert_eq!(code(&o), exit_code::MISSING_ARTIFACT);
    assert!(String::from_utf8_lossy(&o.stderr).contains("qukan pretrain"));
    // missing model
    assert_eq!(code(&qukan(&["eval", "--config", c], dir.path())), exit_code::MISSING_ARTIFACT);

    // configuration errors are reported before any compute
    let (d2, bad) = setup("[qcbm]\nn_position_qubits = 0\n");
    assert_eq!(code(&qukan(&["pretrain", "--config", bad.to_str().unwrap()], d2.path())), exit_code::CONFIG);
    assert!(!d2.path().join("runs").exists());
    let (d3, typo) = setup("experimnt = \"moons\"\n");
    assert_eq!(code(&qukan(&["pretrain", "--config", typo.to_str().unwrap()], d3.path())), exit_code::CONFIG);
    assert_eq!(code(&qukan(&["train", "--model", "mlp"], dir.path())), exit_code::CONFIG);
    assert_eq!(code(&qukan(&["train", "--config", "nope.toml"], dir.path())), exit_code::CONFIG);

    // non-convergent pre-training
    let (d4, strict) = setup("seeds = [0]\n[qcbm]\nmax_iters = 3\nmax_tvd = 1e-9\n");
    let o = qukan(&["pretrain", "--config", strict.to_str().unwrap()], d4.path());
    assert_eq!(code(&o), exit_code::DIVERGENCE);
    assert!(String::from_utf8_lossy(&o.stderr).contains("TVD"));
    // diagnostics are still written
    assert!(d4.path().join("runs/moons/pretrain_trace.csv").exists());
}

#[test]
fn test_self_target_pretrain_runs_zero_iterations() {
    let (dir, cfg) = setup("[qcbm]\ntarget = \"self_target\"\n");
    let out = run_ok(&["pretrain", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(out.contains(" 0 iterations"), "{out}");
    assert_eq!(csv_rows(&dir.path().join("runs/moons/pretrain_trace.csv")).len(), 1);
}

#[test]
fn test_zero_epochs_reports_initial_model() {
    let (dir, cfg) = setup(TINY);
    let c = cfg.to_str().unwrap();
    run_ok(&["pretrain", "--config", c], dir.path());
    run_ok(&["train", "--config", c, "--epochs", "0"], dir.path());
    let m = dir.path().join("runs/moons/qukan");
    assert_eq!(csv_rows(&m.join("metrics.csv")).len(), 1);
    assert_eq!(csv_rows(&m.join("seed_0/trace.csv")).len(), 1);
}

#[test]
fn test_vqc_train_needs_no_pretraining() {
    let (dir, cfg) = setup(TINY);
    run_ok(&["train", "--config", cfg.to_str().unwrap(), "--model", "vqc_zz"], dir.path());
    assert!(dir.path().join("runs/moons/vqc_zz/metrics.csv").exists());
}

#[test]
fn test_boundary_lattice() {
    let (dir, cfg) = setup(TINY);
    let c = cfg.to_str().unwrap();
    run_ok(&["pretrain", "--config", c], dir.path());
    run_ok(&["train", "--config", c, "--model", "untrained_frozen"], dir.path());
    run_ok(&["boundary", "--config", c, "--model", "untrained_frozen"], dir.path());
    let m = dir.path().join("runs/moons/untrained_frozen");
    let rows = csv_rows(&m.join("boundary_seed_0.csv"));
    assert_eq!(rows.len(), 40000);
    let ck = Checkpoint::load(&m.join("seed_0/model.json"), "qukan train").unwrap();
    let scaler = ck.scaler.unwrap();
    let parse = |r: &str| -> Vec<f64> { r.split(',').take(2).map(|v| v.parse().unwrap()).collect() };
    let (first, last) = (parse(&rows[0]), parse(&rows[39999]));
    assert_eq!(first, vec![scaler.mins[0], scaler.mins[1]]);
    assert_eq!(last, vec![scaler.maxs[0], scaler.maxs[1]]);
    for r in &rows {
        let class = r.rsplit(',').next().unwrap();
        assert!(class == "0" || class == "1");
    }
    // no trained model for this variant yet
    let o = qukan(&["boundary", "--config", c, "--model", "hadamard_init"], dir.path());
    assert_eq!(code(&o), exit_code::MISSING_ARTIFACT);
}

#[test]
fn test_ablation_has_one_row_per_epoch() {
    let (dir, cfg) = setup(TINY);
    let c = cfg.to_str().unwrap();
    run_ok(&["pretrain", "--config", c], dir.path());
    run_ok(&["ablate", "--config", c, "--epochs", "3"], dir.path());
    let a = dir.path().join("runs/moons/ablation");
    let header = std::fs::read_to_string(a.join("ablation.csv")).unwrap();
    assert!(header.starts_with("epoch,pretrained,hadamard_init,untrained_frozen\n"));
    let rows = csv_rows(&a.join("ablation.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows[2].starts_with("3,"));
    assert_eq!(csv_rows(&a.join("ablation_test.csv")).len(), 3);
    assert!(a.join("config.toml").exists());
}

#[test]
fn test_output_root_from_environment() {
    let (dir, cfg) = setup("[qcbm]\ntarget = \"self_target\"\n");
    let o = Command::new(env!("CARGO_BIN_EXE_qukan"))
        .args(["pretrain", "--config", cfg.to_str().unwrap()])
        .current_dir(dir.path())
        .env("QUKAN_OUTPUT_ROOT", dir.path().join("elsewhere"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("elsewhere/moons/pretrain.json").exists());
}
