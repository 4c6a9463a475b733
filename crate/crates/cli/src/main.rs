//! `laconv`: simulate data, train almost-equivariant Lie algebra convolution
//! models, and run the defect and bound meters.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use laconv::data::{
    load_image_set, save_image_set, simulate_pendulum, synthetic_rotated_patterns,
    write_pendulum_csv, AngleLaw, PendulumParams,
};
use laconv::diffgraph::Tensor;
use laconv::gconv::{load_checkpoint, save_checkpoint, LiftConfig};
use laconv::lie::{act_point, GroupElement, GroupId, MatrixNorm, Resample};
use laconv::metrics::{
    ball_grid, default_grid, equivariance_error, fickett_bound, deviation_bound_report, ulam_recover,
    GroupSampler, ImageModel,
};
use laconv::train::{grid_search, load_dataset, train, GridOptions, GridSpec, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "laconv", version, about = "Almost-equivariant Lie algebra convolutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the damped linear pendulum and write `t,x,y` rows.
    SimulatePendulum(SimulateArgs),
    /// Render a rotated-glyph classification set to a LADS1 file.
    GenSynthetic(SyntheticArgs),
    /// Train one model from a JSON config.
    Train(TrainArgs),
    /// Train every configuration of a grid over several seeds.
    GridSearch(GridArgs),
    /// Measure the equivariance defect of a checkpoint on an image set.
    EvalEquivariance(EvalArgs),
    /// Recover an isometry from an almost-isometry by the doubling limit.
    UlamRecover(UlamArgs),
    /// Print 27·eps^(1/2^n).
    Fickett(FickettArgs),
    /// Compare the strict-vs-learned deviation of a layer with its bound.
    BoundReport(BoundArgs),
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    length: f64,
    /// Gravity magnitude; a negative value is taken by absolute value.
    #[arg(long, default_value_t = 9.8, allow_hyphen_values = true)]
    g: f64,
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3, allow_hyphen_values = true)]
    theta0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    omega0: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 6000)]
    steps: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LawArg {
    Uniform,
    C4,
}

#[derive(clap::Args, Debug)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 16)]
    size: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    angle_law: LawArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run record destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the wall-clock time in the run record.
    #[arg(long)]
    record_time: bool,
}

#[derive(clap::Args, Debug)]
struct GridArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, default_value_t = 4)]
    seeds: usize,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the base config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to LACONV_THREADS or 1.
    #[arg(long)]
    threads: Option<usize>,
    /// Stop after this many new runs.
    #[arg(long)]
    max_runs: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplerArg {
    Algebra,
    QuarterTurns,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ResampleArg {
    Bilinear,
    ExactC4,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// LADS1 image set.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_group)]
    group: GroupId,
    /// Number of sampled group elements.
    #[arg(long, default_value_t = 16)]
    samples: usize,
    #[arg(long, value_enum, default_value = "algebra")]
    sampler: SamplerArg,
    /// Image resampling; defaults to the checkpoint's lift setting.
    #[arg(long, value_enum)]
    resample: Option<ResampleArg>,
    /// Use only the first N images.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MapArg {
    Rotation,
    PerturbedIdentity,
    CustomTable,
}

#[derive(clap::Args, Debug)]
struct UlamArgs {
    #[arg(long, value_enum)]
    map: MapArg,
    /// `x1,x2,y1,y2` rows for `custom-table`.
    #[arg(long, required_if_eq("map", "custom-table"))]
    table: Option<PathBuf>,
    /// Perturbation amplitude for `perturbed-identity`.
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Rotation angle for `rotation`.
    #[arg(long, default_value_t = 0.7, allow_hyphen_values = true)]
    angle: f64,
    #[arg(long, default_value_t = 4.0)]
    grid_radius: f64,
    #[arg(long, default_value_t = 64)]
    grid_points: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 60)]
    max_doublings: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct FickettArgs {
    #[arg(long, allow_hyphen_values = true)]
    eps: f64,
    #[arg(long)]
    n: u32,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormArg {
    Spectral,
    Frobenius,
}

#[derive(clap::Args, Debug)]
struct BoundArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Hidden layer index.
    #[arg(long, default_value_t = 0)]
    layer: usize,
    #[arg(long, value_enum, default_value = "spectral")]
    norm: NormArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_group(s: &str) -> Result<GroupId, String> {
    s.parse::<GroupId>().map_err(|e| e.to_string())
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(out, &text)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let params = PendulumParams {
        m: a.m,
        length: a.length,
        g: a.g.abs(),
        lambda: a.lambda,
        theta0: a.theta0,
        omega0: a.omega0,
        dt: a.dt,
        n_steps: a.steps,
    };
    let traj = simulate_pendulum(&params)?;
    let mut buf = Vec::new();
    write_pendulum_csv(&traj, &mut buf)?;
    write_text(a.out.as_deref(), std::str::from_utf8(&buf)?)
}

fn gen_synthetic(a: SyntheticArgs) -> Result<()> {
    let law = match a.angle_law {
        LawArg::Uniform => AngleLaw::Uniform,
        LawArg::C4 => AngleLaw::C4,
    };
    let set = synthetic_rotated_patterns(a.per_class, a.classes, a.size, law, a.seed)?;
    save_image_set(&set, &a.out)?;
    println!("wrote {} images to {}", set.len(), a.out.display());
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let mut config = TrainConfig::load(&a.config)
        .with_context(|| format!("reading config {}", a.config.display()))?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let data = load_dataset(&config.data)?;
    let (mut record, model) = train(&config, &data)?;
    if !a.record_time {
        record.wall_time = None;
    }
    if let Some(path) = &a.checkpoint {
        save_checkpoint(&model, path)?;
    }
    match &a.out {
        Some(path) => {
            write_json(Some(path), &record)?;
            println!("final {:?}: {}", record.metric, record.final_metric);
        }
        None => write_json(None, &record)?,
    }
    Ok(())
}

fn run_grid(a: GridArgs) -> Result<()> {
    let mut spec = GridSpec::load(&a.grid).with_context(|| format!("reading grid {}", a.grid.display()))?;
    if let Some(seed) = a.seed {
        spec.base.seed = seed;
    }
    let opts = GridOptions {
        threads: a.threads,
        max_new_runs: a.max_runs,
    };
    let report = grid_search(&spec, a.seeds, &a.out, &opts)?;
    if let Some(best) = report.ranking.first() {
        match best.mean {
            Some(m) => println!(
                "best config #{}: mean {m} std {} over {} runs",
                best.config_index,
                best.std.unwrap_or(0.0),
                best.n_runs
            ),
            None => println!("no configuration finished"),
        }
    }
    Ok(())
}

fn eval_equivariance(a: EvalArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let LiftConfig::Image { resample, .. } = &model.arch.lift else {
        bail!("the checkpoint takes time inputs, which carry no group action");
    };
    let resample = match a.resample {
        Some(ResampleArg::Bilinear) => Resample::Bilinear,
        Some(ResampleArg::ExactC4) => Resample::ExactC4,
        None => *resample,
    };
    let set = load_image_set(&a.data)?;
    let n = a.limit.unwrap_or(set.len()).min(set.len());
    let sampler = match a.sampler {
        SamplerArg::Algebra => GroupSampler::Algebra(None),
        SamplerArg::QuarterTurns => GroupSampler::QuarterTurns,
    };
    let meter = ImageModel {
        model: &model,
        resample,
    };
    let report = equivariance_error(
        &meter,
        a.group.descriptor(),
        &set.images[..n],
        a.samples,
        &sampler,
        a.seed,
    )?;
    write_json(a.out.as_deref(), &report)?;
    if a.out.is_some() {
        println!("max_defect {}", report.max_defect);
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let Ok(v) = parsed else {
            if i == 0 {
                continue;
            }
            bail!("line {}: not a row of numbers", i + 1);
        };
        if v.len() < 2 || v.len() % 2 != 0 {
            bail!("line {}: expected an even number of columns", i + 1);
        }
        let d = v.len() / 2;
        rows.push((v[..d].to_vec(), v[d..].to_vec()));
    }
    if rows.is_empty() {
        bail!("{} holds no rows", path.display());
    }
    if rows.iter().any(|r| r.0.len() != rows[0].0.len()) {
        bail!("rows of {} differ in dimension", path.display());
    }
    Ok(rows)
}

fn ulam(a: UlamArgs) -> Result<()> {
    let result = match a.map {
        MapArg::Rotation => {
            let g = GroupElement::rotation(a.angle);
            let grid = ball_grid(2, a.grid_points, a.grid_radius, a.seed);
            let t = |x: &[f64]| act_point(&g, [x[0], x[1]]).to_vec();
            ulam_recover(&t, &grid, a.tol, a.max_doublings)?
        }
        MapArg::PerturbedIdentity => {
            let grid = if a.grid_points == 64 && a.grid_radius == 4.0 {
                default_grid(a.seed)
            } else {
                ball_grid(2, a.grid_points, a.grid_radius, a.seed)
            };
            let eps = a.eps;
            let t = |x: &[f64]| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut y = x.to_vec();
                y[0] += eps * r.sin();
                y
            };
            ulam_recover(&t, &grid, a.tol, a.max_doublings)?
        }
        MapArg::CustomTable => {
            let path = a.table.as_deref().ok_or_else(|| anyhow!("--table is required"))?;
            let rows = read_table(path)?;
            let grid: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.0.clone())
                .filter(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt() <= a.grid_radius)
                .collect();
            // Only tabulated points are known; anything else evaluates to NaN.
            let t = |x: &[f64]| {
                rows.iter()
                    .find(|r| {
                        r.0.iter()
                            .zip(x)
                            .all(|(p, q)| (p - q).abs() <= 1e-9 * p.abs().max(1.0))
                    })
                    .map(|r| r.1.clone())
                    .unwrap_or_else(|| vec![f64::NAN; x.len()])
            };
            ulam_recover(&t, &grid, a.tol, a.max_doublings)?
        }
    };
    write_json(a.out.as_deref(), &result)?;
    if a.out.is_some() {
        println!(
            "k = {}, max_gap {}, eps_in {}, bound_ok {}, isometric {}",
            result.n_iters, result.max_gap, result.eps_in, result.bound_ok, result.isometric
        );
    }
    Ok(())
}

fn fickett(a: FickettArgs) -> Result<()> {
    println!("{}", fickett_bound(a.eps, a.n)?);
    Ok(())
}

fn bound_report(a: BoundArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let layer = model
        .layers
        .get(a.layer)
        .ok_or_else(|| anyhow!("layer {} out of range ({} layers)", a.layer, model.layers.len()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let probe = Tensor::uniform(&[layer.in_samples.len(), layer.c_in()], 1.0, &mut rng);
    let norm = match a.norm {
        NormArg::Spectral => MatrixNorm::Spectral,
        NormArg::Frobenius => MatrixNorm::Frobenius,
    };
    let report = deviation_bound_report(layer, &model.params, &probe, a.seed, norm)?;
    write_json(a.out.as_deref(), &report)?;
    if a.out.is_some() {
        println!(
            "deviation {} bound {} holds {}",
            report.measured_deviation, report.bound, report.holds
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SimulatePendulum(a) => simulate(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Train(a) => run_train(a),
        Command::GridSearch(a) => run_grid(a),
        Command::EvalEquivariance(a) => eval_equivariance(a),
        Command::UlamRecover(a) => ulam(a),
        Command::Fickett(a) => fickett(a),
        Command::BoundReport(a) => bound_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
