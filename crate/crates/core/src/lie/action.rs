//! Left actions of group elements on plane points and on images.

use serde::{Deserialize, Serialize};

use super::group::{GroupElement, GroupId};
use super::LieError;

/// `g · p` for a point of the plane. Homogeneous groups append a 1, apply the
/// 3×3 matrix and drop the last coordinate.
pub fn act_point(g: &GroupElement, p: [f64; 2]) -> [f64; 2] {
    let m = &g.matrix;
    match g.group.id {
        GroupId::SO2 => [
            m.get(0, 0) * p[0] + m.get(0, 1) * p[1],
            m.get(1, 0) * p[0] + m.get(1, 1) * p[1],
        ],
        GroupId::SE2 | GroupId::T2 => [
            m.get(0, 0) * p[0] + m.get(0, 1) * p[1] + m.get(0, 2),
            m.get(1, 0) * p[0] + m.get(1, 1) * p[1] + m.get(1, 2),
        ],
    }
}

/// An `H × W × C` grid of samples, row-major with channels innermost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, LieError> {
        if data.len() != height * width * channels || height == 0 || width == 0 || channels == 0
        {
            return Err(LieError::InvalidArgument(format!(
                "image buffer of {} values does not fit {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[(r * self.width + c) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: f64) {
        self.data[(r * self.width + c) * self.channels + ch] = v;
    }

    /// Rotation / translation center `((H−1)/2, (W−1)/2)` in (row, col).
    pub fn center(&self) -> (f64, f64) {
        ((self.height as f64 - 1.0) / 2.0, (self.width as f64 - 1.0) / 2.0)
    }

    /// Reads `(row, col)` with zero outside the grid.
    fn get_or_zero(&self, r: isize, c: isize, ch: usize) -> f64 {
        if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
            0.0
        } else {
            self.get(r as usize, c as usize, ch)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    #[default]
    Bilinear,
    /// Lossless index permutation; only for quarter turns of square images.
    ExactC4,
}

/// `(g · img)(p) = img(g⁻¹ p)` with `p` measured from the image center,
/// x to the right and y up, in pixel units.
pub fn act_image(g: &GroupElement, img: &Image, method: Resample) -> Result<Image, LieError> {
    match method {
        Resample::ExactC4 => {
            let k = g.quarter_turns(1e-9).ok_or_else(|| {
                LieError::InvalidArgument("exact_c4 needs a quarter-turn rotation".into())
            })?;
            rotate_quarter_turns(img, k)
        }
        Resample::Bilinear => Ok(bilinear(g, img)),
    }
}

/// Rotates a square image counter-clockwise by `k` quarter turns.
pub fn rotate_quarter_turns(img: &Image, k: u8) -> Result<Image, LieError> {
    if img.height != img.width {
        return Err(LieError::InvalidArgument(format!(
            "exact_c4 needs a square image, got {}x{}",
            img.height, img.width
        )));
    }
    let n = img.height;
    let mut out = Image::zeros(n, n, img.channels);
    for r in 0..n {
        for c in 0..n {
            let (sr, sc) = match k % 4 {
                0 => (r, c),
                1 => (c, n - 1 - r),
                2 => (n - 1 - r, n - 1 - c),
                _ => (n - 1 - c, r),
            };
            for ch in 0..img.channels {
                out.set(r, c, ch, img.get(sr, sc, ch));
            }
        }
    }
    Ok(out)
}

fn bilinear(g: &GroupElement, img: &Image) -> Image {
    let inv = g.inverse();
    let (cy, cx) = img.center();
    let mut out = Image::zeros(img.height, img.width, img.channels);
    for r in 0..img.height {
        for c in 0..img.width {
            let p = [c as f64 - cx, cy - r as f64];
            let q = act_point(&inv, p);
            let (sx, sy) = (cx + q[0], cy - q[1]);
            let (c0, r0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - c0, sy - r0);
            let (c0, r0) = (c0 as isize, r0 as isize);
            for ch in 0..img.channels {
                let v00 = img.get_or_zero(r0, c0, ch);
                let v01 = img.get_or_zero(r0, c0 + 1, ch);
                let v10 = img.get_or_zero(r0 + 1, c0, ch);
                let v11 = img.get_or_zero(r0 + 1, c0 + 1, ch);
                let top = v00 * (1.0 - fx) + v01 * fx;
                let bottom = v10 * (1.0 - fx) + v11 * fx;
                out.set(r, c, ch, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ramp(n: usize) -> Image {
        let data = (0..n * n * 2).map(|i| (i as f64 * 0.37).sin()).collect();
        Image::from_vec(n, n, 2, data).unwrap()
    }

    #[test]
    fn identity_point() {
        let g = GroupElement::rotation(0.0);
        assert_eq!(act_point(&g, [1.0, 2.0]), [1.0, 2.0]);
    }

    #[test]
    fn quarter_rotation_point() {
        let q = act_point(&GroupElement::rotation(PI / 2.0), [1.0, 0.0]);
        assert!(q[0].abs() < 1e-12 && (q[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translation_point() {
        let g = GroupElement::translation(3.0, -1.0);
        assert_eq!(act_point(&g, [1.0, 2.0]), [4.0, 1.0]);
    }

    #[test]
    fn identity_image_is_unchanged() {
        let img = ramp(7);
        let id = GroupElement::rotation(0.0);
        assert_eq!(act_image(&id, &img, Resample::Bilinear).unwrap(), img);
        assert_eq!(act_image(&id, &img, Resample::ExactC4).unwrap(), img);
    }

    #[test]
    fn four_exact_quarter_turns_restore_the_image() {
        let img = ramp(6);
        let g = GroupElement::rotation(PI / 2.0);
        let mut cur = img.clone();
        for _ in 0..4 {
            cur = act_image(&g, &cur, Resample::ExactC4).unwrap();
        }
        assert_eq!(cur, img);
    }

    #[test]
    fn exact_c4_rejects_other_angles_and_rectangles() {
        let img = ramp(5);
        assert!(act_image(&GroupElement::rotation(0.4), &img, Resample::ExactC4).is_err());
        let rect = Image::zeros(4, 5, 1);
        let g = GroupElement::rotation(PI / 2.0);
        assert!(act_image(&g, &rect, Resample::ExactC4).is_err());
    }

    #[test]
    fn bilinear_quarter_turn_agrees_with_permutation() {
        let img = ramp(8);
        let g = GroupElement::rotation(PI / 2.0);
        let a = act_image(&g, &img, Resample::Bilinear).unwrap();
        let b = act_image(&g, &img, Resample::ExactC4).unwrap();
        let diff = a.data.iter().zip(&b.data).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn bilinear_rotation_of_constant_is_constant_in_interior() {
        let img = Image::from_vec(9, 9, 1, vec![0.75; 81]).unwrap();
        let g = GroupElement::rotation(PI / 2.0);
        let out = act_image(&g, &img, Resample::Bilinear).unwrap();
        for v in &out.data {
            assert!((v - 0.75).abs() < 1e-12);
        }
        // A generic angle keeps interior pixels constant as well.
        let out = act_image(&GroupElement::rotation(0.6), &img, Resample::Bilinear).unwrap();
        for r in 3..6 {
            for c in 3..6 {
                assert!((out.get(r, c, 0) - 0.75).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quarter_turn_moves_right_edge_to_top() {
        // A pixel to the right of center ends up above it after +90°.
        let mut img = Image::zeros(5, 5, 1);
        img.set(2, 4, 0, 1.0);
        let out = rotate_quarter_turns(&img, 1).unwrap();
        assert_eq!(out.get(0, 2, 0), 1.0);
    }
}
