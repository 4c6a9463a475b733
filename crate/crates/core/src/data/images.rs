//! Labeled image sets: synthetic rotated glyphs, IDX ingestion and the
//! `LADS1` container.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::lie::{act_image, rotate_quarter_turns, GroupElement, Image, Resample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledImageSet {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// `synthetic` or the source path.
    pub meta: String,
}

impl LabeledImageSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.images.len() != self.labels.len() {
            return Err(DataError::Consistency(format!(
                "{} images but {} labels",
                self.images.len(),
                self.labels.len()
            )));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(DataError::Consistency(format!(
                "label {l} outside {} classes",
                self.classes
            )));
        }
        if let Some(first) = self.images.first() {
            if self
                .images
                .iter()
                .any(|i| (i.height, i.width, i.channels) != (first.height, first.width, first.channels))
            {
                return Err(DataError::Consistency("images differ in shape".into()));
            }
        }
        Ok(())
    }

    /// Samples `[from, to)` as a new set.
    pub fn slice(&self, from: usize, to: usize) -> LabeledImageSet {
        LabeledImageSet {
            images: self.images[from..to].to_vec(),
            labels: self.labels[from..to].to_vec(),
            classes: self.classes,
            meta: self.meta.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleLaw {
    /// Uniform on `[0, 2π)`, bilinear resampling.
    Uniform,
    /// Uniform over quarter turns, exact permutation.
    C4,
}

impl std::str::FromStr for AngleLaw {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(AngleLaw::Uniform),
            "c4" => Ok(AngleLaw::C4),
            other => Err(DataError::Config(format!("unknown angle law `{other}`"))),
        }
    }
}

pub const GLYPH_NAMES: [&str; 10] = [
    "bar", "l_shape", "ring", "cross", "t_shape", "triangle", "square", "dot", "arc", "z_shape",
];

type Seg = ([f64; 2], [f64; 2]);

fn polyline(pts: &[[f64; 2]]) -> Vec<Seg> {
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}

fn seg_dist(p: [f64; 2], (a, b): Seg) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Distance from `p` (unit-disk coordinates) to the stroke of glyph `class`.
fn glyph_distance(class: usize, p: [f64; 2]) -> f64 {
    let segs = |s: Vec<Seg>| s.into_iter().map(|s| seg_dist(p, s)).fold(f64::INFINITY, f64::min);
    let r = p[0].hypot(p[1]);
    match class {
        0 => segs(vec![([0.0, -0.7], [0.0, 0.7])]),
        1 => segs(polyline(&[[-0.3, 0.6], [-0.3, -0.45], [0.4, -0.45]])),
        2 => (r - 0.55).abs(),
        3 => segs(vec![([-0.6, 0.0], [0.6, 0.0]), ([0.0, -0.6], [0.0, 0.6])]),
        4 => segs(vec![([-0.5, 0.5], [0.5, 0.5]), ([0.0, 0.5], [0.0, -0.6])]),
        5 => segs(polyline(&[[0.0, 0.6], [-0.55, -0.4], [0.55, -0.4], [0.0, 0.6]])),
        6 => segs(polyline(&[[-0.4, -0.4], [0.4, -0.4], [0.4, 0.4], [-0.4, 0.4], [-0.4, -0.4]])),
        7 => (r - 0.2).max(0.0),
        8 => {
            let ang = p[1].atan2(p[0]);
            if ang >= 0.0 {
                (r - 0.5).abs()
            } else {
                let ends = [[0.5, 0.0], [-0.5, 0.0]];
                ends.iter().map(|e| (p[0] - e[0]).hypot(p[1] - e[1])).fold(f64::INFINITY, f64::min)
            }
        }
        _ => segs(polyline(&[[-0.45, 0.5], [0.45, 0.5], [-0.45, -0.5], [0.45, -0.5]])),
    }
}

/// Renders glyph `class` upright on a `size × size` single-channel grid with
/// one pixel of anti-aliasing.
pub fn render_glyph(class: usize, size: usize) -> Image {
    let radius = (size as f64 - 1.0) / 2.0;
    let half_width = 0.09 + 0.5 / radius;
    let mut img = Image::zeros(size, size, 1);
    for r in 0..size {
        for c in 0..size {
            let p = [(c as f64 - radius) / radius, (radius - r as f64) / radius];
            let d = glyph_distance(class, p);
            let v = ((half_width - d) * radius + 0.5).clamp(0.0, 1.0);
            img.set(r, c, 0, v);
        }
    }
    img
}

/// `n_per_class` rotated copies of each of the first `classes` glyphs,
/// interleaved by class.
pub fn synthetic_rotated_patterns(
    n_per_class: usize,
    classes: usize,
    size: usize,
    angle_law: AngleLaw,
    seed: u64,
) -> Result<LabeledImageSet, DataError> {
    if !(2..=10).contains(&classes) {
        return Err(DataError::Config(format!("class count {classes} outside 2..=10")));
    }
    if size < 8 {
        return Err(DataError::Config(format!("image size {size} below 8")));
    }
    if n_per_class == 0 {
        return Err(DataError::Config("n_per_class must be positive".into()));
    }
    let bases: Vec<Image> = (0..classes).map(|k| render_glyph(k, size)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n_per_class * classes);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for _ in 0..n_per_class {
        for (k, base) in bases.iter().enumerate() {
            let img = match angle_law {
                AngleLaw::Uniform => {
                    let angle = rng.gen_range(0.0..2.0 * PI);
                    act_image(&GroupElement::rotation(angle), base, Resample::Bilinear)?
                }
                AngleLaw::C4 => rotate_quarter_turns(base, rng.gen_range(0..4u8))?,
            };
            images.push(img);
            labels.push(k);
        }
    }
    Ok(LabeledImageSet {
        images,
        labels,
        classes,
        meta: "synthetic".into(),
    })
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| DataError::Length(format!("{what}: header truncated")))
}

/// Parses an IDX image file (`0x00000803`) into `[0, 1]` grids.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image>, DataError> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES {
        return Err(DataError::Format(format!("image file magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let px = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * px {
        return Err(DataError::Length(format!(
            "expected {} pixel bytes, found {}",
            n * px,
            body.len()
        )));
    }
    if px == 0 {
        return Err(DataError::Format("zero-sized images".into()));
    }
    body.chunks_exact(px)
        .map(|c| {
            Image::from_vec(rows, cols, 1, c.iter().map(|&b| f64::from(b) / 255.0).collect())
                .map_err(DataError::from)
        })
        .collect()
}

/// Parses an IDX label file (`0x00000801`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, DataError> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS {
        return Err(DataError::Format(format!("label file magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(DataError::Length(format!(
            "expected {n} label bytes, found {}",
            body.len()
        )));
    }
    Ok(body.iter().map(|&b| usize::from(b)).collect())
}

pub fn load_idx_images(images_path: &Path, labels_path: &Path) -> Result<LabeledImageSet, DataError> {
    let images = parse_idx_images(&std::fs::read(images_path)?)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(DataError::Consistency(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(LabeledImageSet {
        images,
        labels,
        classes,
        meta: images_path.display().to_string(),
    })
}

pub const LADS_MAGIC: &[u8; 5] = b"LADS1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LadsHeader {
    count: usize,
    height: usize,
    width: usize,
    channels: usize,
    classes: usize,
    meta: String,
}

/// `b"LADS1" | u32 LE header length | JSON header | u32 LE labels | f64 LE pixels`
pub fn write_image_set<W: Write>(set: &LabeledImageSet, mut w: W) -> Result<(), DataError> {
    set.validate()?;
    let first = set
        .images
        .first()
        .ok_or_else(|| DataError::Consistency("cannot store an empty set".into()))?;
    let header = LadsHeader {
        count: set.len(),
        height: first.height,
        width: first.width,
        channels: first.channels,
        classes: set.classes,
        meta: set.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| DataError::Format(e.to_string()))?;
    let mut buf = Vec::with_capacity(9 + json.len() + set.len() * (4 + first.data.len() * 8));
    buf.extend_from_slice(LADS_MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for &l in &set.labels {
        buf.extend_from_slice(&(l as u32).to_le_bytes());
    }
    for img in &set.images {
        for v in &img.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_image_set<R: Read>(mut r: R) -> Result<LabeledImageSet, DataError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 9 || &bytes[..5] != LADS_MAGIC {
        return Err(DataError::Format("not a dataset container (bad magic)".into()));
    }
    let len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let rest = &bytes[9..];
    if rest.len() < len {
        return Err(DataError::Length("truncated dataset header".into()));
    }
    let h: LadsHeader =
        serde_json::from_slice(&rest[..len]).map_err(|e| DataError::Format(e.to_string()))?;
    let px = h.height * h.width * h.channels;
    let body = &rest[len..];
    if body.len() != h.count * (4 + px * 8) {
        return Err(DataError::Length(format!(
            "expected {} payload bytes, found {}",
            h.count * (4 + px * 8),
            body.len()
        )));
    }
    let (lab, pix) = body.split_at(h.count * 4);
    let labels = lab
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let images = pix
        .chunks_exact(px * 8)
        .map(|c| {
            let data = c
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            Image::from_vec(h.height, h.width, h.channels, data).map_err(DataError::from)
        })
        .collect::<Result<_, _>>()?;
    let set = LabeledImageSet {
        images,
        labels,
        classes: h.classes,
        meta: h.meta,
    };
    set.validate()?;
    Ok(set)
}

pub fn save_image_set(set: &LabeledImageSet, path: &Path) -> Result<(), DataError> {
    let mut buf = Vec::new();
    write_image_set(set, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_image_set(path: &Path) -> Result<LabeledImageSet, DataError> {
    read_image_set(std::fs::File::open(path)?)
}
