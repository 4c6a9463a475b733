//! `d(f(g·x), g·f(x))` over sampled group elements and inputs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MetricsError, REPORT_VERSION};
use crate::gconv::{HeadConfig, Lift, Model, ModelInput};
use crate::lie::{
    act_image, act_point, log_closed_form, sample_algebra, GroupDescriptor, GroupElement, GroupId,
    Image, Interval, Resample,
};

/// How a group element acts on model outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputAction {
    /// `g·y = y`; the defect measures invariance.
    Trivial,
    /// Outputs are plane points acted on by `act_point`.
    Point,
    Unsupported,
}

/// A model together with the group actions on its input and output spaces.
pub trait EquivariantModel {
    type Input: Clone;

    fn evaluate(&self, inputs: &[Self::Input]) -> Result<Vec<Vec<f64>>, MetricsError>;

    fn act_on_input(&self, g: &GroupElement, x: &Self::Input) -> Result<Self::Input, MetricsError>;

    fn output_action(&self) -> OutputAction;
}

/// Which group elements the meter draws.
#[derive(Clone, Debug, PartialEq)]
pub enum GroupSampler {
    /// `exp` of uniform algebra draws; group default bounds when `None`.
    Algebra(Option<Vec<Interval>>),
    /// Uniform over the four quarter turns (SO2).
    QuarterTurns,
    /// A fixed list, cycled if shorter than the requested count.
    Explicit(Vec<GroupElement>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementDefect {
    pub coeffs: Vec<f64>,
    /// Worst defect over all inputs for this element.
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub report_version: u32,
    pub group: GroupId,
    pub n_group_samples: usize,
    pub n_inputs: usize,
    pub max_defect: f64,
    pub mean_defect: f64,
    pub per_element: Vec<ElementDefect>,
}

fn coeffs_of(g: &GroupElement) -> Vec<f64> {
    if let Ok(x) = log_closed_form(g) {
        return x.coeffs;
    }
    let (tx, ty) = g.translation_part();
    match g.group.id {
        GroupId::SO2 => vec![g.rotation_angle()],
        GroupId::SE2 => vec![g.rotation_angle(), tx, ty],
        GroupId::T2 => vec![tx, ty],
    }
}

fn draw_elements(
    group: GroupDescriptor,
    sampler: &GroupSampler,
    n: usize,
    seed: u64,
) -> Result<Vec<GroupElement>, MetricsError> {
    match sampler {
        GroupSampler::Algebra(bounds) => {
            let bounds = bounds.clone().unwrap_or_else(|| group.default_bounds());
            Ok(sample_algebra(group, &bounds, n, seed)?
                .samples
                .iter()
                .map(|x| x.exp())
                .collect())
        }
        GroupSampler::QuarterTurns => {
            if group.id != GroupId::SO2 {
                return Err(MetricsError::InvalidArgument(
                    "quarter turns are SO2 elements".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n)
                .map(|_| GroupElement::rotation(f64::from(rng.gen_range(0..4u8)) * PI / 2.0))
                .collect())
        }
        GroupSampler::Explicit(list) => {
            if list.is_empty() {
                return Err(MetricsError::InvalidArgument("no group elements given".into()));
            }
            if list.iter().any(|g| g.group != group) {
                return Err(MetricsError::InvalidArgument(
                    "explicit elements belong to another group".into(),
                ));
            }
            Ok(list.iter().cycle().take(n.max(1)).cloned().collect())
        }
    }
}

fn act_output(action: OutputAction, g: &GroupElement, y: &[f64]) -> Result<Vec<f64>, MetricsError> {
    match action {
        OutputAction::Trivial => Ok(y.to_vec()),
        OutputAction::Point if y.len() == 2 => {
            let q = act_point(g, [y[0], y[1]]);
            Ok(q.to_vec())
        }
        OutputAction::Point => Err(MetricsError::UnsupportedAction(format!(
            "point action on a {}-dimensional output",
            y.len()
        ))),
        OutputAction::Unsupported => Err(MetricsError::UnsupportedAction(
            "model output carries no group action".into(),
        )),
    }
}

/// Euclidean defect `‖f(g·x) − g·f(x)‖` for every sampled `(g, x)` pair.
pub fn equivariance_error<M: EquivariantModel>(
    model: &M,
    group: GroupDescriptor,
    inputs: &[M::Input],
    n_group_samples: usize,
    sampler: &GroupSampler,
    seed: u64,
) -> Result<EquivarianceReport, MetricsError> {
    let action = model.output_action();
    if action == OutputAction::Unsupported {
        return Err(MetricsError::UnsupportedAction(
            "model output carries no group action".into(),
        ));
    }
    if inputs.is_empty() || n_group_samples == 0 {
        return Err(MetricsError::InvalidArgument(
            "need at least one input and one group sample".into(),
        ));
    }
    let elements = draw_elements(group, sampler, n_group_samples, seed)?;
    let base = model.evaluate(inputs)?;
    let mut per_element = Vec::with_capacity(elements.len());
    let (mut total, mut count, mut max) = (0.0, 0usize, 0.0f64);
    for g in &elements {
        let moved = inputs
            .iter()
            .map(|x| model.act_on_input(g, x))
            .collect::<Result<Vec<_>, _>>()?;
        let out = model.evaluate(&moved)?;
        let mut worst = 0.0f64;
        for (fy, y) in out.iter().zip(&base) {
            let gy = act_output(action, g, y)?;
            let d = fy
                .iter()
                .zip(&gy)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if !d.is_finite() {
                return Err(MetricsError::Numerical("non-finite model output".into()));
            }
            worst = worst.max(d);
            total += d;
            count += 1;
        }
        max = max.max(worst);
        per_element.push(ElementDefect {
            coeffs: coeffs_of(g),
            defect: worst,
        });
    }
    Ok(EquivarianceReport {
        report_version: REPORT_VERSION,
        group: group.id,
        n_group_samples: elements.len(),
        n_inputs: inputs.len(),
        max_defect: max,
        mean_defect: total / count as f64,
        per_element,
    })
}

/// A plane map `ℝ² → ℝ²` with the point action on both sides.
pub struct PlaneMap<F: Fn([f64; 2]) -> [f64; 2]>(pub F);

impl<F: Fn([f64; 2]) -> [f64; 2]> EquivariantModel for PlaneMap<F> {
    type Input = [f64; 2];

    fn evaluate(&self, inputs: &[[f64; 2]]) -> Result<Vec<Vec<f64>>, MetricsError> {
        Ok(inputs.iter().map(|&p| (self.0)(p).to_vec()).collect())
    }

    fn act_on_input(&self, g: &GroupElement, x: &[f64; 2]) -> Result<[f64; 2], MetricsError> {
        Ok(act_point(g, *x))
    }

    fn output_action(&self) -> OutputAction {
        OutputAction::Point
    }
}

/// A trained image model; inputs are moved with `act_image`.
pub struct ImageModel<'a> {
    pub model: &'a Model,
    pub resample: Resample,
}

impl EquivariantModel for ImageModel<'_> {
    type Input = Image;

    fn evaluate(&self, inputs: &[Image]) -> Result<Vec<Vec<f64>>, MetricsError> {
        Ok(self.model.predict(ModelInput::Images(inputs))?)
    }

    fn act_on_input(&self, g: &GroupElement, x: &Image) -> Result<Image, MetricsError> {
        Ok(act_image(g, x, self.resample)?)
    }

    fn output_action(&self) -> OutputAction {
        match (&self.model.lift, &self.model.arch.head) {
            (Lift::Image(_), HeadConfig::Classify { .. }) => OutputAction::Trivial,
            (Lift::Image(_), HeadConfig::Regress) => OutputAction::Point,
            _ => OutputAction::Unsupported,
        }
    }
}

/// A time-input model. Time carries no group action, so measuring it is
/// always an unsupported-action error.
pub struct TimeModel<'a> {
    pub model: &'a Model,
}

impl EquivariantModel for TimeModel<'_> {
    type Input = f64;

    fn evaluate(&self, inputs: &[f64]) -> Result<Vec<Vec<f64>>, MetricsError> {
        Ok(self.model.predict(ModelInput::Times(inputs))?)
    }

    fn act_on_input(&self, _g: &GroupElement, _x: &f64) -> Result<f64, MetricsError> {
        Err(MetricsError::UnsupportedAction("no group action on time inputs".into()))
    }

    fn output_action(&self) -> OutputAction {
        OutputAction::Unsupported
    }
}
