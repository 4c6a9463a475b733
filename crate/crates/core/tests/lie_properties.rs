use std::f64::consts::PI;

use laconv::lie::{
    act_point, exp_matrix, generators, log_closed_form, AlgebraElement, GroupElement, GroupId,
    Matrix,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rotation(theta: f64) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_rows(&[[c, -s], [s, c]])
}

fn element(id: GroupId, coeffs: Vec<f64>) -> AlgebraElement {
    AlgebraElement::new(id.descriptor(), coeffs).unwrap()
}

#[test]
fn so2_exp_matches_closed_form_for_1000_angles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let j = &generators(GroupId::SO2)[0];
    for _ in 0..1000 {
        let theta = rng.gen_range(-PI..=PI);
        let e = exp_matrix(&j.scale(theta)).unwrap();
        assert!(e.max_abs_diff(&rotation(theta)) < 1e-12, "θ = {theta}");
    }
}

/// `Σ Aᵏ/k!` with Kahan-compensated accumulation per entry.
fn compensated_series(a: &Matrix, terms: usize) -> Matrix {
    let n = a.rows();
    let mut sum = Matrix::identity(n).into_vec();
    let mut comp = vec![0.0; n * n];
    let mut term = Matrix::identity(n);
    for k in 1..terms {
        term = term.matmul(a).scale(1.0 / k as f64);
        for (i, v) in term.as_slice().iter().enumerate() {
            let y = v - comp[i];
            let t = sum[i] + y;
            comp[i] = (t - sum[i]) - y;
            sum[i] = t;
        }
    }
    Matrix::from_vec(n, n, sum)
}

#[test]
fn quarter_turn_matches_compensated_series() {
    let a = generators(GroupId::SO2)[0].scale(PI / 2.0);
    let series = compensated_series(&a, 40);
    let e = exp_matrix(&a).unwrap();
    assert!(e.max_abs_diff(&series) < 1e-15);
    assert!(e.max_abs_diff(&Matrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]])) < 1e-15);
}

#[test]
fn exp_matches_series_on_all_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for id in GroupId::ALL {
        for _ in 0..20 {
            let c: Vec<f64> = (0..id.descriptor().algebra_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = element(id, c);
            let e = exp_matrix(&x.matrix).unwrap();
            assert!(e.max_abs_diff(&compensated_series(&x.matrix, 60)) < 1e-12);
        }
    }
}

#[test]
fn point_action_composes_over_100_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for id in GroupId::ALL {
        let d = id.descriptor();
        for _ in 0..100 {
            let mut draw = || {
                let c: Vec<f64> = (0..d.algebra_dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
                element(id, c).exp()
            };
            let (g, h) = (draw(), draw());
            let p = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let lhs = act_point(&g.compose(&h), p);
            let rhs = act_point(&g, act_point(&h, p));
            assert!((lhs[0] - rhs[0]).abs() < 1e-12 && (lhs[1] - rhs[1]).abs() < 1e-12);
        }
    }
}

/// Least-squares coefficients of `m` in the span of `basis`, with the
/// residual norm.
fn project(basis: &[Matrix], m: &Matrix) -> (Vec<f64>, f64) {
    let k = basis.len();
    let mut gram = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    let dot = |a: &Matrix, b: &Matrix| a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum::<f64>();
    for i in 0..k {
        rhs[i] = dot(&basis[i], m);
        for j in 0..k {
            gram[i][j] = dot(&basis[i], &basis[j]);
        }
    }
    // Gaussian elimination on the small Gram system.
    for c in 0..k {
        let piv = (c..k).max_by(|&a, &b| gram[a][c].abs().total_cmp(&gram[b][c].abs())).unwrap();
        gram.swap(c, piv);
        rhs.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = gram[r][c] / gram[c][c];
                for j in 0..k {
                    gram[r][j] -= f * gram[c][j];
                }
                rhs[r] -= f * rhs[c];
            }
        }
    }
    let coeffs: Vec<f64> = (0..k).map(|i| rhs[i] / gram[i][i]).collect();
    let mut fit = Matrix::zeros(m.rows(), m.cols());
    for (b, c) in basis.iter().zip(&coeffs) {
        fit = fit.add(&b.scale(*c));
    }
    (coeffs, m.sub(&fit).frobenius())
}

#[test]
fn se2_commutators_close_in_the_algebra() {
    let basis = generators(GroupId::SE2);
    for a in &basis {
        for b in &basis {
            let (_, residual) = project(&basis, &a.commutator(b));
            assert!(residual < 1e-14);
        }
    }
    // [R, X] = Y and [R, Y] = −X with the generator order (R, X, Y).
    let (c, _) = project(&basis, &basis[0].commutator(&basis[1]));
    assert_eq!(c, vec![0.0, 0.0, 1.0]);
    let (c, _) = project(&basis, &basis[0].commutator(&basis[2]));
    assert_eq!(c, vec![0.0, -1.0, 0.0]);
}

proptest! {
    #[test]
    fn exp_is_a_homomorphism_on_lines(
        group in 0usize..3,
        c in proptest::collection::vec(-1.5f64..1.5, 3),
        s in -1.0f64..1.0,
        t in -1.0f64..1.0,
    ) {
        let id = GroupId::ALL[group];
        let dim = id.descriptor().algebra_dim;
        let x = element(id, c[..dim].to_vec());
        let lhs = exp_matrix(&x.matrix.scale(s + t)).unwrap();
        let rhs = exp_matrix(&x.matrix.scale(s)).unwrap().matmul(&exp_matrix(&x.matrix.scale(t)).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn so2_exp_is_orthogonal_with_unit_determinant(theta in -10.0f64..10.0) {
        let e = element(GroupId::SO2, vec![theta]).exp().matrix;
        prop_assert!(e.transpose().matmul(&e).max_abs_diff(&Matrix::identity(2)) < 1e-13);
        prop_assert!((e.det() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn log_inverts_exp_inside_the_cut(
        theta in -(PI - 1e-6)..(PI - 1e-6),
        tx in -3.0f64..3.0,
        ty in -3.0f64..3.0,
    ) {
        for (id, c) in [
            (GroupId::SO2, vec![theta]),
            (GroupId::SE2, vec![theta, tx, ty]),
            (GroupId::T2, vec![tx, ty]),
        ] {
            let g: GroupElement = element(id, c.clone()).exp();
            let back = log_closed_form(&g).unwrap();
            for (a, b) in back.coeffs.iter().zip(&c) {
                prop_assert!((a - b).abs() < 1e-9, "{id}: {a} vs {b}");
            }
        }
    }
}
