//! Group descriptors, generator bases, algebra and group elements.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::expm::exp_matrix;
use super::matrix::Matrix;
use super::LieError;

/// The matrix Lie groups supported by this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupId {
    SO2,
    SE2,
    T2,
}

impl GroupId {
    pub const ALL: [GroupId; 3] = [GroupId::SO2, GroupId::SE2, GroupId::T2];

    pub fn descriptor(self) -> GroupDescriptor {
        GroupDescriptor::new(self)
    }

    /// Stable one-byte tag used in binary containers.
    pub fn tag(self) -> u8 {
        match self {
            GroupId::SO2 => 0,
            GroupId::SE2 => 1,
            GroupId::T2 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(GroupId::SO2),
            1 => Some(GroupId::SE2),
            2 => Some(GroupId::T2),
            _ => None,
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupId::SO2 => "SO2",
            GroupId::SE2 => "SE2",
            GroupId::T2 => "T2",
        })
    }
}

impl FromStr for GroupId {
    type Err = LieError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SO2" => Ok(GroupId::SO2),
            "SE2" => Ok(GroupId::SE2),
            "T2" => Ok(GroupId::T2),
            other => Err(LieError::InvalidArgument(format!("unknown group `{other}`"))),
        }
    }
}

/// Shape facts about a group: matrix size, algebra dimension, compactness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupDescriptor {
    pub id: GroupId,
    pub matrix_dim: usize,
    pub algebra_dim: usize,
    pub compact: bool,
}

impl GroupDescriptor {
    pub fn new(id: GroupId) -> Self {
        let (matrix_dim, algebra_dim, compact) = match id {
            GroupId::SO2 => (2, 1, true),
            GroupId::SE2 => (3, 3, false),
            GroupId::T2 => (3, 2, false),
        };
        Self {
            id,
            matrix_dim,
            algebra_dim,
            compact,
        }
    }

    /// Generator basis of the Lie algebra, in the documented order:
    ///
    /// * SO2: `J = [[0,−1],[1,0]]`
    /// * SE2: rotation, x-translation, y-translation (3×3 homogeneous)
    /// * T2: x-translation, y-translation (3×3 homogeneous)
    pub fn generators(&self) -> Vec<Matrix> {
        generators(self.id)
    }

    /// Default per-coordinate sampling box: `[−π, π]` for rotation
    /// coordinates and `[−1, 1]` for translation coordinates.
    pub fn default_bounds(&self) -> Vec<Interval> {
        let rot = Interval::new(-PI, PI);
        let trans = Interval::new(-1.0, 1.0);
        match self.id {
            GroupId::SO2 => vec![rot],
            GroupId::SE2 => vec![rot, trans, trans],
            GroupId::T2 => vec![trans, trans],
        }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            group: *self,
            matrix: Matrix::identity(self.matrix_dim),
        }
    }
}

pub fn generators(id: GroupId) -> Vec<Matrix> {
    match id {
        GroupId::SO2 => vec![Matrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]])],
        GroupId::SE2 => vec![
            Matrix::from_rows(&[[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            Matrix::from_rows(&[[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            Matrix::from_rows(&[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]),
        ],
        GroupId::T2 => vec![
            Matrix::from_rows(&[[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            Matrix::from_rows(&[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]),
        ],
    }
}

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// An element `Σ cᵢ·Xᵢ` of the Lie algebra, kept both as coefficients and
/// as its realized matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement {
    pub group: GroupDescriptor,
    pub coeffs: Vec<f64>,
    pub matrix: Matrix,
}

impl AlgebraElement {
    pub fn new(group: GroupDescriptor, coeffs: Vec<f64>) -> Result<Self, LieError> {
        if coeffs.len() != group.algebra_dim {
            return Err(LieError::InvalidArgument(format!(
                "{} algebra expects {} coefficients, got {}",
                group.id,
                group.algebra_dim,
                coeffs.len()
            )));
        }
        let matrix = combine(&group.generators(), &coeffs, group.matrix_dim);
        Ok(Self {
            group,
            coeffs,
            matrix,
        })
    }

    pub fn zero(group: GroupDescriptor) -> Self {
        Self::new(group, vec![0.0; group.algebra_dim]).expect("length matches")
    }

    /// Pushes the element onto the group with the matrix exponential.
    pub fn exp(&self) -> GroupElement {
        GroupElement {
            group: self.group,
            matrix: exp_matrix(&self.matrix).expect("algebra coefficients are finite"),
        }
    }
}

fn combine(basis: &[Matrix], coeffs: &[f64], n: usize) -> Matrix {
    let mut data = vec![0.0; n * n];
    for (b, &c) in basis.iter().zip(coeffs) {
        for (d, v) in data.iter_mut().zip(b.as_slice()) {
            *d += c * v;
        }
    }
    Matrix::from_vec(n, n, data)
}

/// A member of one of the supported matrix groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub group: GroupDescriptor,
    pub matrix: Matrix,
}

impl GroupElement {
    /// Wraps a matrix, checking the structural invariants of the group.
    pub fn from_matrix(group: GroupDescriptor, matrix: Matrix) -> Result<Self, LieError> {
        let n = group.matrix_dim;
        if matrix.rows() != n || matrix.cols() != n {
            return Err(LieError::InvalidArgument(format!(
                "{} elements are {n}x{n}",
                group.id
            )));
        }
        if !matrix.is_finite() {
            return Err(LieError::InvalidArgument("non-finite group matrix".into()));
        }
        match group.id {
            GroupId::SO2 => {
                let err = matrix
                    .transpose()
                    .matmul(&matrix)
                    .max_abs_diff(&Matrix::identity(2));
                if err > 1e-9 || (matrix.det() - 1.0).abs() > 1e-9 {
                    return Err(LieError::InvalidArgument("matrix is not in SO(2)".into()));
                }
            }
            GroupId::SE2 | GroupId::T2 => {
                if matrix.get(2, 0) != 0.0 || matrix.get(2, 1) != 0.0 || matrix.get(2, 2) != 1.0
                {
                    return Err(LieError::InvalidArgument(
                        "homogeneous bottom row must be (0, 0, 1)".into(),
                    ));
                }
            }
        }
        Ok(Self { group, matrix })
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            group: GroupId::SO2.descriptor(),
            matrix: Matrix::from_rows(&[[c, -s], [s, c]]),
        }
    }

    pub fn se2(angle: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            group: GroupId::SE2.descriptor(),
            matrix: Matrix::from_rows(&[[c, -s, tx], [s, c, ty], [0.0, 0.0, 1.0]]),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            group: GroupId::T2.descriptor(),
            matrix: Matrix::from_rows(&[[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]),
        }
    }

    /// `self · rhs`.
    pub fn compose(&self, rhs: &GroupElement) -> GroupElement {
        let mut matrix = self.matrix.matmul(&rhs.matrix);
        if self.group.id != GroupId::SO2 {
            // Keep the homogeneous row exact under floating-point products.
            matrix.set(2, 0, 0.0);
            matrix.set(2, 1, 0.0);
            matrix.set(2, 2, 1.0);
        }
        GroupElement {
            group: self.group,
            matrix,
        }
    }

    /// Closed-form inverse: transpose of the rotation block, negated and
    /// rotated translation.
    pub fn inverse(&self) -> GroupElement {
        let m = &self.matrix;
        let matrix = match self.group.id {
            GroupId::SO2 => m.transpose(),
            GroupId::SE2 | GroupId::T2 => {
                let (a, b, c, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
                let (tx, ty) = (m.get(0, 2), m.get(1, 2));
                Matrix::from_rows(&[
                    [a, c, -(a * tx + c * ty)],
                    [b, d, -(b * tx + d * ty)],
                    [0.0, 0.0, 1.0],
                ])
            }
        };
        GroupElement {
            group: self.group,
            matrix,
        }
    }

    /// Angle of the rotation block, in `(−π, π]`.
    pub fn rotation_angle(&self) -> f64 {
        self.matrix.get(1, 0).atan2(self.matrix.get(0, 0))
    }

    /// Translation part of a homogeneous element; zero for SO2.
    pub fn translation_part(&self) -> (f64, f64) {
        match self.group.id {
            GroupId::SO2 => (0.0, 0.0),
            _ => (self.matrix.get(0, 2), self.matrix.get(1, 2)),
        }
    }

    /// Number of counter-clockwise quarter turns if this element is a pure
    /// rotation by a multiple of 90° (to within `tol` on the matrix entries).
    pub fn quarter_turns(&self, tol: f64) -> Option<u8> {
        let (tx, ty) = self.translation_part();
        if tx.abs() > tol || ty.abs() > tol {
            return None;
        }
        let k = (self.rotation_angle() / (PI / 2.0)).round();
        let candidate = GroupElement::rotation(k * PI / 2.0);
        let block = Matrix::from_rows(&[
            [self.matrix.get(0, 0), self.matrix.get(0, 1)],
            [self.matrix.get(1, 0), self.matrix.get(1, 1)],
        ]);
        (block.max_abs_diff(&candidate.matrix) <= tol).then(|| (k as i64).rem_euclid(4) as u8)
    }
}

/// Closed-form logarithm for SO2, SE2 and T2.
///
/// Fails with [`LieError::BranchCut`] when the rotation angle sits on the
/// `±π` cut, where the principal logarithm is not unique.
pub fn log_closed_form(g: &GroupElement) -> Result<AlgebraElement, LieError> {
    const CUT: f64 = 1e-12;
    let theta = g.rotation_angle();
    if g.group.id != GroupId::T2 && PI - theta.abs() <= CUT {
        return Err(LieError::BranchCut { angle: theta });
    }
    let coeffs = match g.group.id {
        GroupId::SO2 => vec![theta],
        GroupId::T2 => {
            let (tx, ty) = g.translation_part();
            vec![tx, ty]
        }
        GroupId::SE2 => {
            let (tx, ty) = g.translation_part();
            // V(θ) = (1/θ)[[sin θ, −(1−cos θ)], [1−cos θ, sin θ]] maps ρ to t.
            let (a, b) = if theta.abs() < 1e-8 {
                (1.0 - theta * theta / 6.0, theta / 2.0)
            } else {
                (theta.sin() / theta, (1.0 - theta.cos()) / theta)
            };
            let det = a * a + b * b;
            let rx = (a * tx + b * ty) / det;
            let ry = (-b * tx + a * ty) / det;
            vec![theta, rx, ry]
        }
    };
    AlgebraElement::new(g.group, coeffs)
}
