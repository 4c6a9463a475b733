use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{load_dataset, Task, TrainConfig};
use super::optim::OptimizerKind;
use super::run::{train, MetricKind, RunRecord};
use super::TrainError;

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const RANKING_FILE: &str = "ranking.json";
pub const THREADS_ENV: &str = "LACONV_THREADS";

/// Named axis sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPreset {
    /// lr {1e-4, 1e-3, 1e-2, 1e-1} × {adam, sgd} × kernel size {2..5} ×
    /// channels {16, 32} × depth {1..4}.
    PendulumFull,
    /// lr {1e-4, 1e-3, 1e-2, 1e-1} × adam × kernel size {3, 4, 5} ×
    /// channels {16, 32} × depth {1..4} × batch {16, 32, 64}.
    ClassifyFull,
}

/// A Cartesian grid around `base`. Empty axes keep the base value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub base: TrainConfig,
    #[serde(default)]
    pub preset: Option<GridPreset>,
    #[serde(default)]
    pub lr: Vec<f64>,
    #[serde(default)]
    pub optimizer: Vec<OptimizerKind>,
    #[serde(default)]
    pub kernel_size: Vec<usize>,
    #[serde(default)]
    pub hidden_channels: Vec<usize>,
    #[serde(default)]
    pub n_hidden_layers: Vec<usize>,
    #[serde(default)]
    pub batch_size: Vec<usize>,
}

const PRESET_LRS: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

impl GridSpec {
    pub fn singleton(base: TrainConfig) -> Self {
        Self {
            base,
            preset: None,
            lr: Vec::new(),
            optimizer: Vec::new(),
            kernel_size: Vec::new(),
            hidden_channels: Vec::new(),
            n_hidden_layers: Vec::new(),
            batch_size: Vec::new(),
        }
    }

    pub fn with_preset(base: TrainConfig, preset: GridPreset) -> Self {
        Self {
            preset: Some(preset),
            ..Self::singleton(base)
        }
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let spec: GridSpec = serde_json::from_str(text)?;
        spec.base.validate()?;
        spec.configs()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn axes(&self) -> Result<GridSpec, TrainError> {
        let mut s = self.clone();
        if let Some(preset) = self.preset {
            let explicit = !(s.lr.is_empty()
                && s.optimizer.is_empty()
                && s.kernel_size.is_empty()
                && s.hidden_channels.is_empty()
                && s.n_hidden_layers.is_empty()
                && s.batch_size.is_empty());
            if explicit {
                return Err(TrainError::Config("a preset grid cannot also list axes".into()));
            }
            s.lr = PRESET_LRS.to_vec();
            s.hidden_channels = vec![16, 32];
            s.n_hidden_layers = vec![1, 2, 3, 4];
            match preset {
                GridPreset::PendulumFull => {
                    s.optimizer = vec![OptimizerKind::Adam, OptimizerKind::Sgd];
                    s.kernel_size = vec![2, 3, 4, 5];
                }
                GridPreset::ClassifyFull => {
                    s.optimizer = vec![OptimizerKind::Adam];
                    s.kernel_size = vec![3, 4, 5];
                    s.batch_size = vec![16, 32, 64];
                }
            }
        }
        Ok(s)
    }

    /// Every configuration of the grid in a fixed order, the last axis
    /// (batch size) varying fastest.
    pub fn configs(&self) -> Result<Vec<TrainConfig>, TrainError> {
        let s = self.axes()?;
        fn or_base<T: Clone>(axis: &[T], base: T) -> Vec<T> {
            if axis.is_empty() {
                vec![base]
            } else {
                axis.to_vec()
            }
        }
        let b = &s.base;
        let mut out = Vec::new();
        for &lr in &or_base(&s.lr, b.lr) {
            for &opt in &or_base(&s.optimizer, b.optimizer) {
                for &ks in &or_base(&s.kernel_size, b.kernel_size) {
                    for &hc in &or_base(&s.hidden_channels, b.hidden_channels) {
                        for &nl in &or_base(&s.n_hidden_layers, b.n_hidden_layers) {
                            for &bs in &or_base(&s.batch_size, b.batch_size) {
                                let mut c = b.clone();
                                c.lr = lr;
                                c.optimizer = opt;
                                c.kernel_size = ks;
                                c.hidden_channels = hc;
                                c.n_hidden_layers = nl;
                                c.batch_size = bs;
                                c.validate()?;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One line of the run ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub config_index: usize,
    pub seed_index: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<RunRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedConfig {
    pub rank: usize,
    pub config_index: usize,
    pub config: TrainConfig,
    /// Absent when no seed finished.
    pub mean: Option<f64>,
    /// Population standard deviation over seeds.
    pub std: Option<f64>,
    pub n_runs: usize,
    /// Some seed diverged or errored.
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub report_version: u32,
    pub metric: MetricKind,
    pub n_configs: usize,
    pub n_seeds: usize,
    pub ranking: Vec<RankedConfig>,
}

#[derive(Clone, Debug, Default)]
pub struct GridOptions {
    /// Worker threads; `None` reads `LACONV_THREADS` (default 1).
    pub threads: Option<usize>,
    /// Stop after this many new runs, leaving the ledger resumable.
    pub max_new_runs: Option<usize>,
}

/// Worker count from `LACONV_THREADS`, defaulting to 1.
pub fn threads_from_env() -> Result<usize, TrainError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(TrainError::Config(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
        Err(_) => Ok(1),
    }
}

/// Seed of the `k`-th repetition of a configuration.
pub fn run_seed(base: u64, k: usize) -> u64 {
    base.wrapping_add(k as u64)
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>, TrainError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // A torn last line from an interrupted write is skipped and rerun.
        if let Ok(e) = serde_json::from_str::<LedgerEntry>(&line) {
            out.push(e);
        }
    }
    Ok(out)
}

/// Aggregates ledger entries into the ranking; `entries` may contain runs
/// in any order.
pub fn rank(
    configs: &[TrainConfig],
    n_seeds: usize,
    entries: &[LedgerEntry],
) -> Result<GridReport, TrainError> {
    let metric = MetricKind::for_task(configs.first().map_or(Task::Pendulum, |c| c.task));
    let mut by_cfg: BTreeMap<usize, BTreeMap<usize, &LedgerEntry>> = BTreeMap::new();
    for e in entries {
        by_cfg.entry(e.config_index).or_default().insert(e.seed_index, e);
    }
    let mut ranking = Vec::new();
    for (ci, cfg) in configs.iter().enumerate() {
        let runs = by_cfg.get(&ci);
        let values: Vec<f64> = (0..n_seeds)
            .filter_map(|k| runs.and_then(|r| r.get(&k)).and_then(|e| e.final_metric))
            .collect();
        let n_runs = runs.map_or(0, |r| r.keys().filter(|&&k| k < n_seeds).count());
        let failed = n_runs > values.len();
        let (mean, std) = if values.is_empty() {
            (None, None)
        } else {
            let m = values.iter().sum::<f64>() / values.len() as f64;
            let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / values.len() as f64;
            (Some(m), Some(v.sqrt()))
        };
        ranking.push(RankedConfig {
            rank: 0,
            config_index: ci,
            config: cfg.clone(),
            mean,
            std,
            n_runs,
            failed,
        });
    }
    let key = |r: &RankedConfig| {
        match r.mean {
            Some(m) if !r.failed && m.is_finite() => (false, if metric.higher_is_better() { -m } else { m }),
            _ => (true, 0.0),
        }
    };
    ranking.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(a.config_index.cmp(&b.config_index))
    });
    for (i, r) in ranking.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(GridReport {
        report_version: 1,
        metric,
        n_configs: configs.len(),
        n_seeds,
        ranking,
    })
}

fn run_job(cfg: &TrainConfig, ci: usize, k: usize) -> LedgerEntry {
    let mut c = cfg.clone();
    c.seed = run_seed(cfg.seed, k);
    let result = load_dataset(&c.data).and_then(|d| train(&c, &d));
    match result {
        Ok((mut record, _)) => {
            record.wall_time = None;
            LedgerEntry {
                config_index: ci,
                seed_index: k,
                seed: c.seed,
                final_metric: Some(record.final_metric),
                error: None,
                record: Some(record),
            }
        }
        Err(e) => LedgerEntry {
            config_index: ci,
            seed_index: k,
            seed: c.seed,
            final_metric: None,
            error: Some(e.to_string()),
            record: None,
        },
    }
}

/// Trains every configuration `n_seeds` times, appending each finished run
/// to `out_dir/ledger.jsonl` and writing `out_dir/ranking.json`.
///
/// Runs already present in the ledger are skipped, so an interrupted search
/// resumes where it stopped. Divergent runs are recorded and mark their
/// configuration as failed.
pub fn grid_search(
    spec: &GridSpec,
    n_seeds: usize,
    out_dir: &Path,
    opts: &GridOptions,
) -> Result<GridReport, TrainError> {
    if n_seeds == 0 {
        return Err(TrainError::Config("at least one seed is required".into()));
    }
    let configs = spec.configs()?;
    if configs.is_empty() {
        return Err(TrainError::Config("empty grid".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let ledger_path: PathBuf = out_dir.join(LEDGER_FILE);
    let done: std::collections::BTreeSet<(usize, usize)> = read_ledger(&ledger_path)?
        .iter()
        .map(|e| (e.config_index, e.seed_index))
        .collect();
    let mut pending: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|ci| (0..n_seeds).map(move |k| (ci, k)))
        .filter(|job| !done.contains(job))
        .collect();
    if let Some(limit) = opts.max_new_runs {
        pending.truncate(limit);
    }
    let threads = match opts.threads {
        Some(n) => n.max(1),
        None => threads_from_env()?,
    };
    let ledger = Mutex::new(OpenOptions::new().create(true).append(true).open(&ledger_path)?);
    let queue = Mutex::new(pending.into_iter());
    let write_error: Mutex<Option<std::io::Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let job = queue.lock().expect("queue lock").next();
                let Some((ci, k)) = job else { break };
                let entry = run_job(&configs[ci], ci, k);
                let mut line = serde_json::to_string(&entry).expect("ledger entry serializes");
                line.push('\n');
                let mut f = ledger.lock().expect("ledger lock");
                if let Err(e) = f.write_all(line.as_bytes()).and_then(|_| f.flush()) {
                    *write_error.lock().expect("error lock") = Some(e);
                    break;
                }
            });
        }
    });
    if let Some(e) = write_error.into_inner().expect("error lock") {
        return Err(e.into());
    }
    let report = rank(&configs, n_seeds, &read_ledger(&ledger_path)?)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(out_dir.join(RANKING_FILE), text)?;
    Ok(report)
}
