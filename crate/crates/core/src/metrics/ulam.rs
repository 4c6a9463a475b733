//! Hyers–Ulam recovery of an isometry from an ε-isometry of ℝⁿ, and
//! Fickett's bound for bounded sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MetricsError, REPORT_VERSION};

/// Threshold under which the recovered map counts as an isometry.
pub const ISOMETRY_TOL: f64 = 1e-6;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `sup |‖f(x) − f(y)‖ − ‖x − y‖|` over all grid pairs, given `f` on the grid.
pub fn distance_defect(grid: &[Vec<f64>], images: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let d = (dist(&images[i], &images[j]) - dist(&grid[i], &grid[j])).abs();
            worst = worst.max(d);
        }
    }
    worst
}

/// `T(2ᵏx)/2ᵏ`
pub fn doubling_iterate<T: Fn(&[f64]) -> Vec<f64>>(t: &T, x: &[f64], k: u32) -> Vec<f64> {
    let s = 2f64.powi(k as i32);
    let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
    t(&scaled).into_iter().map(|v| v / s).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UlamResult {
    pub report_version: u32,
    /// Doubling index `k` at which successive iterates agreed within `tol`.
    pub n_iters: u32,
    pub grid: Vec<Vec<f64>>,
    /// `I(x) ≈ T(2ᵏx)/2ᵏ` on the grid.
    pub recovered: Vec<Vec<f64>>,
    /// `sup ‖T(x) − I(x)‖` on the grid.
    pub max_gap: f64,
    /// Pairwise distance defect of `T` on the grid.
    pub eps_in: f64,
    /// `max_gap < 10·eps_in`, or both vanish for an exact isometry.
    pub bound_ok: bool,
    /// Pairwise distance defect of the recovered map.
    pub recovered_defect: f64,
    /// `recovered_defect < ISOMETRY_TOL`.
    pub isometric: bool,
    /// Largest successive-iterate difference at the final step.
    pub last_step: f64,
}

impl UlamResult {
    /// Evaluates the recovered map at any point with the converged index.
    pub fn evaluate<T: Fn(&[f64]) -> Vec<f64>>(&self, t: &T, x: &[f64]) -> Vec<f64> {
        doubling_iterate(t, x, self.n_iters)
    }
}

/// Runs the doubling limit `I(x) = lim T(2ᵏx)/2ᵏ` on `grid`, stopping at the
/// first `k ≥ 1` whose iterate differs from the previous one by less than
/// `tol` at every grid point.
///
/// Surjectivity of `T` is a hypothesis of the recovery theorem and is not
/// checked.
pub fn ulam_recover<T: Fn(&[f64]) -> Vec<f64>>(
    t: &T,
    grid: &[Vec<f64>],
    tol: f64,
    max_doublings: u32,
) -> Result<UlamResult, MetricsError> {
    let dim = grid
        .first()
        .map(Vec::len)
        .ok_or_else(|| MetricsError::InvalidArgument("empty grid".into()))?;
    if dim == 0 || grid.iter().any(|p| p.len() != dim) {
        return Err(MetricsError::InvalidArgument("grid points must share a positive dimension".into()));
    }
    if !(tol > 0.0) || max_doublings == 0 {
        return Err(MetricsError::InvalidArgument("tol and max_doublings must be positive".into()));
    }
    let t0 = t(&vec![0.0; dim]);
    let n0 = t0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n0 <= 1e-12) {
        return Err(MetricsError::Precondition(format!("T(0) has norm {n0:e}, expected 0")));
    }
    let t_vals: Vec<Vec<f64>> = grid.iter().map(|x| t(x)).collect();
    let eps_in = distance_defect(grid, &t_vals);
    let mut prev = t_vals.clone();
    let mut last_step = f64::INFINITY;
    for k in 1..=max_doublings {
        let cur: Vec<Vec<f64>> = grid.iter().map(|x| doubling_iterate(t, x, k)).collect();
        if cur.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MetricsError::Numerical(format!("non-finite iterate at k = {k}")));
        }
        last_step = cur.iter().zip(&prev).map(|(a, b)| dist(a, b)).fold(0.0, f64::max);
        if last_step < tol {
            let max_gap = t_vals.iter().zip(&cur).map(|(a, b)| dist(a, b)).fold(0.0, f64::max);
            let recovered_defect = distance_defect(grid, &cur);
            return Ok(UlamResult {
                report_version: REPORT_VERSION,
                n_iters: k,
                grid: grid.to_vec(),
                recovered: cur,
                max_gap,
                eps_in,
                bound_ok: max_gap < 10.0 * eps_in || max_gap == 0.0,
                recovered_defect,
                isometric: recovered_defect < ISOMETRY_TOL,
                last_step,
            });
        }
        prev = cur;
    }
    Err(MetricsError::Convergence {
        doublings: max_doublings,
        last_gap: last_step,
    })
}

/// `count` points uniform in the ball of `radius` in ℝ^dim, preceded by the
/// origin.
pub fn ball_grid(dim: usize, count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![0.0; dim]];
    while out.len() < count + 1 {
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect();
        if p.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
            out.push(p);
        }
    }
    out
}

/// The default recovery grid: 64 points in the radius-4 disk plus 0.
pub fn default_grid(seed: u64) -> Vec<Vec<f64>> {
    ball_grid(2, 64, 4.0, seed)
}

/// `27·eps^(1/2ⁿ)`
pub fn fickett_bound(eps: f64, n: u32) -> Result<f64, MetricsError> {
    if n < 2 {
        return Err(MetricsError::InvalidArgument(format!("n = {n} must be at least 2")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(MetricsError::InvalidArgument("eps must be positive".into()));
    }
    let exponent = if n >= 1024 { 0.0 } else { 2f64.powi(-(n as i32)) };
    Ok(27.0 * eps.powf(exponent))
}
