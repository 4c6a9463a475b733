//! Matrix exponential by scaling and squaring over a truncated Taylor series.

use super::matrix::Matrix;
use super::LieError;

/// Number of Taylor terms (`k = 0..TAYLOR_TERMS`).
const TAYLOR_TERMS: usize = 18;
/// Scaling stops once `‖A / 2^s‖₁` falls below this.
const SCALED_NORM: f64 = 0.5;

/// `exp(A)` for a square matrix.
///
/// `A` is halved until its 1-norm is below 0.5, the 18-term Taylor series is
/// summed with Horner's scheme, and the result is squared back up.
pub fn exp_matrix(a: &Matrix) -> Result<Matrix, LieError> {
    if !a.is_square() {
        return Err(LieError::InvalidArgument(format!(
            "exp of a non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(LieError::InvalidArgument(
            "exp of a matrix with non-finite entries".into(),
        ));
    }
    let n = a.rows();
    let norm = a.norm_1();
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale >= SCALED_NORM {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a.scale(scale);

    // Horner: I + X(I + X/2(I + X/3(... (I + X/17))))
    let id = Matrix::identity(n);
    let mut acc = id.clone();
    for k in (1..TAYLOR_TERMS).rev() {
        acc = id.add(&x.matmul(&acc).scale(1.0 / k as f64));
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn j() -> Matrix {
        Matrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]])
    }

    #[test]
    fn exp_zero_is_identity() {
        for n in 1..=3 {
            assert_eq!(exp_matrix(&Matrix::zeros(n, n)).unwrap(), Matrix::identity(n));
        }
    }

    #[test]
    fn exp_of_rotation_generator_matches_closed_form() {
        let theta: f64 = 0.3;
        let r = exp_matrix(&j().scale(theta)).unwrap();
        let want = Matrix::from_rows(&[[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]]);
        assert!(r.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn exp_quarter_turn() {
        let r = exp_matrix(&j().scale(PI / 2.0)).unwrap();
        assert!(r.max_abs_diff(&j()) < 1e-12);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = Matrix::from_rows(&[[f64::NAN, 0.0], [0.0, 0.0]]);
        assert!(matches!(exp_matrix(&m), Err(LieError::InvalidArgument(_))));
        let m = Matrix::from_rows(&[[f64::INFINITY, 0.0], [0.0, 0.0]]);
        assert!(exp_matrix(&m).is_err());
    }

    #[test]
    fn exp_of_diagonal_is_elementwise() {
        let m = Matrix::from_rows(&[[1.5, 0.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, 9.0]]);
        let e = exp_matrix(&m).unwrap();
        for (i, v) in [1.5f64, -2.0, 9.0].iter().enumerate() {
            assert!((e.get(i, i) - v.exp()).abs() <= 1e-12 * v.exp());
        }
    }
}
