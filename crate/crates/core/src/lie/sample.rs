use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::group::{AlgebraElement, GroupDescriptor, GroupId, Interval};
use super::LieError;

/// A finite set of Lie algebra points used to discretize the convolution
/// integral. Regenerating with the same seed reproduces the same samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraSampleSet {
    pub group: GroupDescriptor,
    pub bounds: Vec<Interval>,
    pub samples: Vec<AlgebraElement>,
    pub seed: u64,
}

impl AlgebraSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The four quarter turns `{0, π/2, π, 3π/2}·J` of SO2, in that order.
    pub fn c4_grid() -> Self {
        let group = GroupId::SO2.descriptor();
        let samples = (0..4)
            .map(|k| AlgebraElement::new(group, vec![k as f64 * PI / 2.0]).expect("so2"))
            .collect();
        Self {
            group,
            bounds: vec![Interval::new(0.0, 1.5 * PI)],
            samples,
            seed: 0,
        }
    }

    /// Builds a set from explicit coefficient vectors, checking they lie in
    /// `bounds`.
    pub fn from_coeffs(
        group: GroupDescriptor,
        bounds: Vec<Interval>,
        coeffs: Vec<Vec<f64>>,
    ) -> Result<Self, LieError> {
        check_bounds(&group, &bounds)?;
        if coeffs.is_empty() {
            return Err(LieError::InvalidArgument("empty sample set".into()));
        }
        let samples = coeffs
            .into_iter()
            .map(|c| {
                if c.iter().zip(&bounds).any(|(v, b)| !b.contains(*v)) {
                    return Err(LieError::InvalidArgument(format!(
                        "sample {c:?} lies outside the bounds"
                    )));
                }
                AlgebraElement::new(group, c)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            group,
            bounds,
            samples,
            seed: 0,
        })
    }

    /// True if every sample is one of the C4 grid angles (SO2 only).
    pub fn is_c4_grid(&self) -> bool {
        self.group.id == GroupId::SO2
            && self.samples.iter().all(|s| {
                let q = s.coeffs[0] / (PI / 2.0);
                (q - q.round()).abs() < 1e-12
            })
    }
}

fn check_bounds(group: &GroupDescriptor, bounds: &[Interval]) -> Result<(), LieError> {
    if bounds.len() != group.algebra_dim {
        return Err(LieError::InvalidArgument(format!(
            "{} needs {} bound intervals, got {}",
            group.id,
            group.algebra_dim,
            bounds.len()
        )));
    }
    for b in bounds {
        if !(b.lo.is_finite() && b.hi.is_finite()) || b.lo >= b.hi {
            return Err(LieError::InvalidArgument(format!(
                "degenerate or inverted interval [{}, {}]",
                b.lo, b.hi
            )));
        }
    }
    Ok(())
}

/// Draws `count` i.i.d. points, uniform per coordinate inside `bounds`.
pub fn sample_algebra(
    group: GroupDescriptor,
    bounds: &[Interval],
    count: usize,
    seed: u64,
) -> Result<AlgebraSampleSet, LieError> {
    check_bounds(&group, bounds)?;
    if count == 0 {
        return Err(LieError::InvalidArgument("sample count must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..count)
        .map(|_| {
            let coeffs = bounds.iter().map(|b| rng.gen_range(b.lo..=b.hi)).collect();
            AlgebraElement::new(group, coeffs).expect("length matches")
        })
        .collect();
    Ok(AlgebraSampleSet {
        group,
        bounds: bounds.to_vec(),
        samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn so2() -> GroupDescriptor {
        GroupId::SO2.descriptor()
    }

    #[test]
    fn samples_lie_in_bounds() {
        let b = [Interval::new(-PI, PI)];
        let s = sample_algebra(so2(), &b, 4, 7).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.samples.iter().all(|x| b[0].contains(x.coeffs[0])));
    }

    #[test]
    fn sampling_is_deterministic() {
        let b = GroupId::SE2.descriptor().default_bounds();
        let a = sample_algebra(GroupId::SE2.descriptor(), &b, 16, 11).unwrap();
        let c = sample_algebra(GroupId::SE2.descriptor(), &b, 16, 11).unwrap();
        let bits = |s: &AlgebraSampleSet| -> Vec<u64> {
            s.samples
                .iter()
                .flat_map(|x| x.coeffs.iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&c));
        let d = sample_algebra(GroupId::SE2.descriptor(), &b, 16, 12).unwrap();
        assert_ne!(bits(&a), bits(&d));
    }

    #[test]
    fn sample_mean_within_three_sigma() {
        let n = 100_000;
        let s = sample_algebra(so2(), &[Interval::new(-PI, PI)], n, 1).unwrap();
        let mean = s.samples.iter().map(|x| x.coeffs[0]).sum::<f64>() / n as f64;
        // Uniform on [−π, π] has σ = π/√3.
        let sigma = PI / 3f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn bad_bounds_are_rejected() {
        assert!(sample_algebra(so2(), &[Interval::new(1.0, 1.0)], 3, 0).is_err());
        assert!(sample_algebra(so2(), &[Interval::new(2.0, 1.0)], 3, 0).is_err());
        assert!(sample_algebra(so2(), &[], 3, 0).is_err());
        assert!(sample_algebra(so2(), &[Interval::new(0.0, 1.0)], 0, 0).is_err());
    }

    #[test]
    fn c4_grid_shape() {
        let g = AlgebraSampleSet::c4_grid();
        assert_eq!(g.len(), 4);
        assert!(g.is_c4_grid());
        for s in &g.samples {
            assert!(g.bounds[0].contains(s.coeffs[0]));
        }
    }
}
