//! Metric-pullback defect of plane maps and the rotation-perturbation
//! experiment on the circle.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MetricsError, REPORT_VERSION};

/// Step for central-difference Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    UnitCircle,
    Disk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryDefectReport {
    pub report_version: u32,
    pub domain: Domain,
    /// Largest sampled `|g(v,w) − g̃(dφ v, dφ w)|`.
    pub local_max: f64,
    /// Quadrature of the pointwise sup-defect.
    pub global_integral: f64,
    pub volume: f64,
    pub grid_resolution: usize,
}

/// Central-difference Jacobian `[[∂x/∂u, ∂x/∂v], [∂y/∂u, ∂y/∂v]]`.
pub fn jacobian<F: Fn([f64; 2]) -> [f64; 2]>(f: &F, p: [f64; 2]) -> Result<[[f64; 2]; 2], MetricsError> {
    let h = JACOBIAN_STEP;
    let mut j = [[0.0; 2]; 2];
    for k in 0..2 {
        let mut a = p;
        let mut b = p;
        a[k] += h;
        b[k] -= h;
        let (fa, fb) = (f(a), f(b));
        for r in 0..2 {
            j[r][k] = (fa[r] - fb[r]) / (2.0 * h);
        }
    }
    if j.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MetricsError::Numerical(format!("non-finite Jacobian at {p:?}")));
    }
    Ok(j)
}

fn apply(j: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [j[0][0] * v[0] + j[0][1] * v[1], j[1][0] * v[0] + j[1][1] * v[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Samples the pullback defect of `map` on `domain`.
///
/// On the unit circle the tangent space is one-dimensional and the defect at
/// `p` is `|1 − ‖J·t‖²|` for the unit tangent `t`; `n_points` midpoints are
/// used. On the disk a polar midpoint grid with about `n_points` cells is
/// used, and the defect at each point is the max over `n_directions`² pairs
/// of unit directions.
pub fn almost_isometry_defect<F: Fn([f64; 2]) -> [f64; 2]>(
    map: &F,
    domain: Domain,
    n_points: usize,
    n_directions: usize,
) -> Result<IsometryDefectReport, MetricsError> {
    if n_points == 0 || n_directions == 0 {
        return Err(MetricsError::InvalidArgument("grid sizes must be positive".into()));
    }
    let (mut local_max, mut integral, mut volume) = (0.0f64, 0.0, 0.0);
    let resolution;
    match domain {
        Domain::UnitCircle => {
            let w = 2.0 * PI / n_points as f64;
            for k in 0..n_points {
                let phi = (k as f64 + 0.5) * w;
                let (s, c) = phi.sin_cos();
                let j = jacobian(map, [c, s])?;
                let jt = apply(&j, [-s, c]);
                let d = (1.0 - dot(jt, jt)).abs();
                local_max = local_max.max(d);
                integral += d * w;
                volume += w;
            }
            resolution = n_points;
        }
        Domain::Disk => {
            let n_r = ((n_points as f64 / (2.0 * PI)).sqrt().round() as usize).max(1);
            let n_phi = (n_points / n_r).max(1);
            let dirs: Vec<[f64; 2]> = (0..n_directions)
                .map(|k| {
                    let a = PI * k as f64 / n_directions as f64;
                    [a.cos(), a.sin()]
                })
                .collect();
            let (dr, dphi) = (1.0 / n_r as f64, 2.0 * PI / n_phi as f64);
            for i in 0..n_r {
                let r = (i as f64 + 0.5) * dr;
                for k in 0..n_phi {
                    let phi = (k as f64 + 0.5) * dphi;
                    let j = jacobian(map, [r * phi.cos(), r * phi.sin()])?;
                    let images: Vec<[f64; 2]> = dirs.iter().map(|&v| apply(&j, v)).collect();
                    let mut sup = 0.0f64;
                    for (a, ja) in dirs.iter().zip(&images) {
                        for (b, jb) in dirs.iter().zip(&images) {
                            sup = sup.max((dot(*a, *b) - dot(*ja, *jb)).abs());
                        }
                    }
                    let w = r * dr * dphi;
                    local_max = local_max.max(sup);
                    integral += sup * w;
                    volume += w;
                }
            }
            resolution = n_r * n_phi;
        }
    }
    Ok(IsometryDefectReport {
        report_version: REPORT_VERSION,
        domain,
        local_max,
        global_integral: integral,
        volume,
        grid_resolution: resolution,
    })
}

/// Tangential angle perturbation `η(φ) = Σ aₘ sin(mφ + βₘ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub terms: Vec<(f64, u32, f64)>,
}

impl Perturbation {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn single(amplitude: f64, frequency: u32) -> Self {
        Self {
            terms: vec![(amplitude, frequency, 0.0)],
        }
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, m, b)| a * (f64::from(m) * phi + b).sin())
            .sum()
    }

    /// `Σ|aₘ|`, an upper bound on `sup|η|`.
    pub fn amplitude_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.0.abs()).sum()
    }
}

/// Outcome of one perturbed-rotation trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedRotationTrial {
    pub rotation: f64,
    pub perturbation: Perturbation,
    /// Measured `sup_x ‖f_ε(x) − f(x)‖`.
    pub perturbation_sup: f64,
    /// Measured `sup_{g,x} ‖g·f_ε(x) − f_ε(g·x)‖`.
    pub max_defect: f64,
    pub ratio: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedRotationReport {
    pub report_version: u32,
    pub eps: f64,
    pub n_trials: usize,
    pub n_group: usize,
    pub n_points: usize,
    pub passes: usize,
    pub max_ratio: f64,
    pub trials: Vec<PerturbedRotationTrial>,
}

/// Grid sizes used by [`perturbed_rotation_experiment`]: 100 rotations × 100 points.
pub const ROTATION_GRID: usize = 100;

/// Brute-force defect of `f_ε(x) = R(α + η(φ))·x` on `S¹`.
pub fn perturbed_rotation_trial(
    eps: f64,
    rotation: f64,
    perturbation: Perturbation,
    n_group: usize,
    n_points: usize,
) -> PerturbedRotationTrial {
    let f_eps = |phi: f64| {
        let a = phi + rotation + perturbation.eval(phi);
        [a.cos(), a.sin()]
    };
    let mut pert_sup = 0.0f64;
    let mut max_defect = 0.0f64;
    for i in 0..n_points {
        let phi = 2.0 * PI * i as f64 / n_points as f64;
        let fe = f_eps(phi);
        let exact = [(phi + rotation).cos(), (phi + rotation).sin()];
        pert_sup = pert_sup.max((fe[0] - exact[0]).hypot(fe[1] - exact[1]));
        for k in 0..n_group {
            let psi = 2.0 * PI * k as f64 / n_group as f64;
            let (s, c) = psi.sin_cos();
            let g_fe = [c * fe[0] - s * fe[1], s * fe[0] + c * fe[1]];
            let fe_g = f_eps(phi + psi);
            max_defect = max_defect.max((g_fe[0] - fe_g[0]).hypot(g_fe[1] - fe_g[1]));
        }
    }
    let ratio = max_defect / (2.0 * eps);
    PerturbedRotationTrial {
        rotation,
        perturbation,
        perturbation_sup: pert_sup,
        max_defect,
        ratio,
        passed: max_defect < 2.0 * eps,
    }
}

/// `n_trials` seeded trials: a random rotation `f` of the circle and a
/// random smooth tangential perturbation with `Σ|aₘ| < eps`.
pub fn perturbed_rotation_experiment(eps: f64, n_trials: usize, seed: u64) -> Result<PerturbedRotationReport, MetricsError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(MetricsError::InvalidArgument("eps must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let rotation = rng.gen_range(0.0..2.0 * PI);
        let n_terms = rng.gen_range(1..=4);
        let raw: Vec<(f64, u32, f64)> = (0..n_terms)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(1..=8u32),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        let total: f64 = raw.iter().map(|t| t.0.abs()).sum();
        let budget = eps * rng.gen_range(0.1..0.99);
        let terms = raw
            .into_iter()
            .map(|(a, m, b)| (a / total.max(f64::MIN_POSITIVE) * budget, m, b))
            .collect();
        trials.push(perturbed_rotation_trial(eps, rotation, Perturbation { terms }, ROTATION_GRID, ROTATION_GRID));
    }
    let passes = trials.iter().filter(|t| t.passed).count();
    let max_ratio = trials.iter().map(|t| t.ratio).fold(0.0, f64::max);
    Ok(PerturbedRotationReport {
        report_version: REPORT_VERSION,
        eps,
        n_trials,
        n_group: ROTATION_GRID,
        n_points: ROTATION_GRID,
        passes,
        max_ratio,
        trials,
    })
}
