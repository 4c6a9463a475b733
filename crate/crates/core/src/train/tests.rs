use super::*;
use crate::data::{AngleLaw, PendulumParams};
use crate::lie::GroupId;

fn tiny_pendulum(lr: f64, epochs: usize) -> TrainConfig {
    TrainConfig {
        task: Task::Pendulum,
        group: GroupId::SO2,
        lr,
        optimizer: OptimizerKind::Adam,
        kernel_hidden: 8,
        n_hidden_layers: 1,
        hidden_channels: 4,
        batch_size: 16,
        epochs,
        n_algebra_samples: 4,
        algebra_bounds: None,
        sampling: Sampling::Uniform,
        strict_mode: false,
        pretrain_mapping: false,
        seed: 3,
        kernel_size: 3,
        kernel_bound: 1.0,
        activation: Default::default(),
        pool: Default::default(),
        resample: Default::default(),
        time_scale: 0.05,
        data: DataSource::Pendulum {
            params: PendulumParams {
                n_steps: 200,
                ..PendulumParams::default()
            },
            split: 0.9,
            validation: false,
        },
    }
}

fn tiny_classify() -> TrainConfig {
    TrainConfig {
        task: Task::Classify,
        lr: 1e-2,
        epochs: 2,
        batch_size: 8,
        data: DataSource::Synthetic {
            classes: 2,
            size: 8,
            angle_law: AngleLaw::C4,
            train_per_class: 6,
            test_per_class: 3,
            val_per_class: 0,
            seed: 1,
        },
        ..tiny_pendulum(1e-2, 2)
    }
}

fn run(cfg: &TrainConfig) -> Result<RunRecord, TrainError> {
    let data = load_dataset(&cfg.data)?;
    train(cfg, &data).map(|(r, _)| r)
}

#[test]
fn zero_lr_keeps_the_initial_metric() {
    let r = run(&tiny_pendulum(0.0, 1)).unwrap();
    assert_eq!(r.final_metric.to_bits(), r.initial_metric.to_bits());
    assert_eq!(r.per_epoch.len(), 1);
}

#[test]
fn record_has_one_entry_per_epoch_and_is_reproducible() {
    let cfg = tiny_pendulum(1e-2, 3);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.per_epoch.len(), 3);
    assert_eq!(a.final_metric.to_bits(), b.final_metric.to_bits());
    assert_eq!(a.per_epoch, b.per_epoch);
    assert!(a.final_metric < a.initial_metric);
}

#[test]
fn classification_runs_with_decaying_lr() {
    let cfg = tiny_classify();
    let r = run(&cfg).unwrap();
    assert_eq!(r.metric, MetricKind::Accuracy);
    assert!((0.0..=1.0).contains(&r.final_metric));
    assert_eq!(r.per_epoch[0].lr, 1e-2);
    assert_eq!(r.per_epoch[1].lr, 5e-3);
    assert_eq!(run(&cfg).unwrap().per_epoch, r.per_epoch);
}

#[test]
fn pendulum_lr_is_constant() {
    let cfg = tiny_pendulum(0.1, 5);
    assert!((0..5).all(|e| epoch_lr(&cfg, e) == 0.1));
}

#[test]
fn divergence_reports_the_epoch() {
    let mut cfg = tiny_pendulum(1e12, 2);
    cfg.optimizer = OptimizerKind::Sgd;
    match run(&cfg) {
        Err(TrainError::Divergence { epoch, .. }) => assert_eq!(epoch, 0),
        Err(TrainError::Model(_)) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn config_json_is_strict() {
    let cfg = tiny_pendulum(1e-3, 1);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(TrainConfig::from_json(&text).unwrap(), cfg);
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["momentum"] = serde_json::json!(0.9);
    assert!(TrainConfig::from_json(&v.to_string()).is_err());
    let mut bad = cfg.clone();
    bad.task = Task::Classify;
    assert!(matches!(bad.validate(), Err(TrainError::Config(_))));
    bad = cfg;
    bad.epochs = 0;
    assert!(bad.validate().is_err());
}

#[test]
fn validation_switch_gives_three_way_split() {
    let mut cfg = tiny_pendulum(1e-3, 1);
    if let DataSource::Pendulum { validation, .. } = &mut cfg.data {
        *validation = true;
    }
    match load_dataset(&cfg.data).unwrap() {
        Dataset::Pendulum { train, val, test } => {
            assert_eq!((train.len(), val.unwrap().len(), test.len()), (160, 20, 20));
        }
        _ => unreachable!(),
    }
    match load_dataset(&tiny_pendulum(1e-3, 1).data).unwrap() {
        Dataset::Pendulum { train, val, test } => {
            assert_eq!((train.len(), test.len()), (180, 20));
            assert!(val.is_none());
        }
        _ => unreachable!(),
    }
}

#[test]
fn preset_grids_have_the_listed_sizes() {
    let p = GridSpec::with_preset(tiny_pendulum(1e-3, 1), GridPreset::PendulumFull);
    let cfgs = p.configs().unwrap();
    assert_eq!(cfgs.len(), 4 * 2 * 4 * 2 * 4);
    assert!(cfgs.iter().all(|c| c.batch_size == 16));
    let c = GridSpec::with_preset(tiny_classify(), GridPreset::ClassifyFull);
    assert_eq!(c.configs().unwrap().len(), 4 * 3 * 2 * 4 * 3);
    let mut both = p.clone();
    both.lr = vec![0.5];
    assert!(both.configs().is_err());
}

fn entry(ci: usize, k: usize, v: Option<f64>) -> LedgerEntry {
    LedgerEntry {
        config_index: ci,
        seed_index: k,
        seed: k as u64,
        final_metric: v,
        error: v.is_none().then(|| "diverged".into()),
        record: None,
    }
}

#[test]
fn ranking_aggregates_and_orders() {
    let base = tiny_pendulum(1e-3, 1);
    let mut spec = GridSpec::singleton(base);
    spec.lr = vec![1e-3, 1e-2, 1e-1];
    let cfgs = spec.configs().unwrap();
    let entries = vec![
        entry(0, 0, Some(0.5)),
        entry(0, 1, Some(0.5)),
        entry(1, 1, Some(0.3)),
        entry(1, 0, Some(0.1)),
        entry(2, 0, Some(0.01)),
        entry(2, 1, None),
    ];
    let r = rank(&cfgs, 2, &entries).unwrap();
    assert_eq!(r.ranking[0].config_index, 1);
    assert!((r.ranking[0].mean.unwrap() - 0.2).abs() < 1e-15);
    assert!((r.ranking[0].std.unwrap() - 0.1).abs() < 1e-15);
    assert_eq!(r.ranking[1].config_index, 0);
    assert_eq!((r.ranking[1].mean, r.ranking[1].std), (Some(0.5), Some(0.0)));
    assert!(r.ranking[2].failed);
    assert_eq!(r.ranking.iter().map(|c| c.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
}

#[test]
fn accuracy_ranks_descending() {
    let mut spec = GridSpec::singleton(tiny_classify());
    spec.lr = vec![1e-3, 1e-2];
    let cfgs = spec.configs().unwrap();
    let r = rank(&cfgs, 1, &[entry(0, 0, Some(0.6)), entry(1, 0, Some(0.9))]).unwrap();
    assert_eq!(r.ranking[0].config_index, 1);
}

#[test]
fn two_by_two_grid_trains_four_runs_per_seed_and_resumes() {
    let mut spec = GridSpec::singleton(tiny_pendulum(1e-2, 1));
    spec.lr = vec![1e-3, 1e-2];
    spec.hidden_channels = vec![2, 4];
    let full = tempfile::tempdir().unwrap();
    let opts = GridOptions {
        threads: Some(2),
        max_new_runs: None,
    };
    let a = grid_search(&spec, 2, full.path(), &opts).unwrap();
    assert_eq!(read_ledger(&full.path().join(LEDGER_FILE)).unwrap().len(), 8);

    let part = tempfile::tempdir().unwrap();
    let stop = GridOptions {
        threads: Some(1),
        max_new_runs: Some(3),
    };
    grid_search(&spec, 2, part.path(), &stop).unwrap();
    assert_eq!(read_ledger(&part.path().join(LEDGER_FILE)).unwrap().len(), 3);
    let b = grid_search(&spec, 2, part.path(), &opts).unwrap();
    assert_eq!(read_ledger(&part.path().join(LEDGER_FILE)).unwrap().len(), 8);
    assert_eq!(a, b);
    let ra = std::fs::read(full.path().join(RANKING_FILE)).unwrap();
    let rb = std::fs::read(part.path().join(RANKING_FILE)).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn singleton_grid_matches_plain_training() {
    let cfg = tiny_pendulum(1e-2, 1);
    let dir = tempfile::tempdir().unwrap();
    let report = grid_search(&GridSpec::singleton(cfg.clone()), 2, dir.path(), &GridOptions::default()).unwrap();
    let plain: Vec<f64> = (0..2)
        .map(|k| {
            let mut c = cfg.clone();
            c.seed = run_seed(cfg.seed, k);
            run(&c).unwrap().final_metric
        })
        .collect();
    let mean = (plain[0] + plain[1]) / 2.0;
    assert_eq!(report.ranking.len(), 1);
    assert!((report.ranking[0].mean.unwrap() - mean).abs() < 1e-15);
}
