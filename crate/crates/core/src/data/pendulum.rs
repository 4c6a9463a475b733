//! Linear damped pendulum integrated with classic RK4.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::DataError;

/// `θ'' + (λ/m)·θ' + (g/L)·θ = 0` with `g` taken as a positive magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumParams {
    pub m: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub g: f64,
    pub lambda: f64,
    pub theta0: f64,
    pub omega0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl Default for PendulumParams {
    /// `m = L = 1`, `g = 9.8`, `λ = 0.2`, `θ(0) = π/3`, `θ'(0) = 0`,
    /// `dt = 0.01`, 6000 steps.
    fn default() -> Self {
        Self {
            m: 1.0,
            length: 1.0,
            g: 9.8,
            lambda: 0.2,
            theta0: PI / 3.0,
            omega0: 0.0,
            dt: 0.01,
            n_steps: 6000,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<(), DataError> {
        let finite = [self.m, self.length, self.g, self.lambda, self.theta0, self.omega0, self.dt]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(DataError::Config("pendulum parameters must be finite".into()));
        }
        if self.m <= 0.0 || self.length <= 0.0 || self.dt <= 0.0 {
            return Err(DataError::Config("m, L and dt must be positive".into()));
        }
        if self.n_steps == 0 {
            return Err(DataError::Config("n_steps must be at least 1".into()));
        }
        Ok(())
    }

    fn rhs(&self, theta: f64, omega: f64) -> (f64, f64) {
        (
            omega,
            -(self.lambda / self.m) * omega - (self.g / self.length) * theta,
        )
    }

    /// Linear oscillator energy `½ω² + ½(g/L)θ²`.
    pub fn energy(&self, theta: f64, omega: f64) -> f64 {
        0.5 * omega * omega + 0.5 * (self.g / self.length) * theta * theta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub xy: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Integrates from `t = 0` and records the `n_steps` states at
/// `dt, 2·dt, …, n_steps·dt`. Positions use `x = L sin θ`, `y = −L cos θ`.
pub fn simulate_pendulum(p: &PendulumParams) -> Result<Trajectory, DataError> {
    p.validate()?;
    let n = p.n_steps;
    let mut traj = Trajectory {
        t: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        omega: Vec::with_capacity(n),
        xy: Vec::with_capacity(n),
    };
    let (mut th, mut om) = (p.theta0, p.omega0);
    let h = p.dt;
    for i in 1..=n {
        let (k1t, k1o) = p.rhs(th, om);
        let (k2t, k2o) = p.rhs(th + 0.5 * h * k1t, om + 0.5 * h * k1o);
        let (k3t, k3o) = p.rhs(th + 0.5 * h * k2t, om + 0.5 * h * k2o);
        let (k4t, k4o) = p.rhs(th + h * k3t, om + h * k3o);
        th += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
        om += h / 6.0 * (k1o + 2.0 * k2o + 2.0 * k3o + k4o);
        let (s, c) = th.sin_cos();
        traj.t.push(i as f64 * h);
        traj.theta.push(th);
        traj.omega.push(om);
        traj.xy.push([p.length * s, -p.length * c]);
    }
    Ok(traj)
}

/// One `(t, (x, y))` sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub t: f64,
    pub xy: [f64; 2],
}

fn points(traj: &Trajectory) -> Vec<TimePoint> {
    traj.t
        .iter()
        .zip(&traj.xy)
        .map(|(&t, &xy)| TimePoint { t, xy })
        .collect()
}

/// Chronological split: the first `⌊split·n⌋` samples train, the rest test.
pub fn pendulum_dataset(
    traj: &Trajectory,
    split: f64,
) -> Result<(Vec<TimePoint>, Vec<TimePoint>), DataError> {
    if !(split > 0.0 && split < 1.0) {
        return Err(DataError::Config(format!("split {split} must lie in (0, 1)")));
    }
    let n_train = (split * traj.len() as f64).floor() as usize;
    if n_train == 0 || n_train == traj.len() {
        return Err(DataError::Config(format!(
            "split {split} of {} samples leaves an empty side",
            traj.len()
        )));
    }
    let mut all = points(traj);
    let test = all.split_off(n_train);
    Ok((all, test))
}

/// Chronological three-way split with fractions `train`, `val` and the
/// remainder for test.
pub fn pendulum_dataset3(
    traj: &Trajectory,
    train: f64,
    val: f64,
) -> Result<(Vec<TimePoint>, Vec<TimePoint>, Vec<TimePoint>), DataError> {
    if !(train > 0.0 && val > 0.0 && train + val < 1.0) {
        return Err(DataError::Config(format!(
            "fractions {train}/{val} must be positive and sum below 1"
        )));
    }
    let n = traj.len();
    let a = (train * n as f64).floor() as usize;
    let b = ((train + val) * n as f64).floor() as usize;
    if a == 0 || b == a || b == n {
        return Err(DataError::Config("degenerate three-way split".into()));
    }
    let mut all = points(traj);
    let test = all.split_off(b);
    let val = all.split_off(a);
    Ok((all, val, test))
}

/// Writes `t,x,y` rows with 17 significant digits.
pub fn write_pendulum_csv<W: Write>(traj: &Trajectory, mut w: W) -> Result<(), DataError> {
    let mut out = String::with_capacity(traj.len() * 72 + 8);
    out.push_str("t,x,y\n");
    for (t, xy) in traj.t.iter().zip(&traj.xy) {
        out.push_str(&format!("{t:.16e},{:.16e},{:.16e}\n", xy[0], xy[1]));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_has_6000_samples() {
        let tr = simulate_pendulum(&PendulumParams::default()).unwrap();
        assert_eq!(tr.len(), 6000);
        assert!((tr.t[0] - 0.01).abs() < 1e-15);
        assert!((tr.t[5999] - 60.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = PendulumParams::default();
        p.dt = 0.0;
        assert!(simulate_pendulum(&p).is_err());
        let mut p = PendulumParams::default();
        p.n_steps = 0;
        assert!(simulate_pendulum(&p).is_err());
    }

    #[test]
    fn split_sizes_and_order() {
        let tr = simulate_pendulum(&PendulumParams::default()).unwrap();
        let (a, b) = pendulum_dataset(&tr, 0.9).unwrap();
        assert_eq!((a.len(), b.len()), (5400, 600));
        let joined: Vec<f64> = a.iter().chain(&b).map(|p| p.t).collect();
        assert_eq!(joined, tr.t);
        let (a, v, b) = pendulum_dataset3(&tr, 0.8, 0.1).unwrap();
        assert_eq!((a.len(), v.len(), b.len()), (4800, 600, 600));
        assert!(pendulum_dataset(&tr, 1.0).is_err());
        assert!(pendulum_dataset(&tr, 0.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut p = PendulumParams::default();
        p.n_steps = 3;
        let tr = simulate_pendulum(&p).unwrap();
        let mut buf = Vec::new();
        write_pendulum_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,y");
        assert_eq!(lines.len(), 4);
        let x: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(x, tr.xy[0][0]);
    }
}
