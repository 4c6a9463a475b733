//! Binary model checkpoints.
//!
//! Layout, little-endian:
//!
//! ```text
//! b"LACV1" | u8 group tag | u32 json length | arch config JSON | f64 × params
//! ```
//!
//! Parameters follow declaration order and their count is implied by the
//! architecture.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{build_model, ArchitectureConfig, Model};
use super::ModelError;
use crate::lie::GroupId;

pub const MAGIC: &[u8; 5] = b"LACV1";

pub fn write_checkpoint<W: Write>(model: &Model, mut w: W) -> Result<(), ModelError> {
    let json = serde_json::to_vec(&model.arch).map_err(|e| ModelError::Format(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| ModelError::Format("config too large".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&[model.arch.group.tag()])?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(model.params.numel() * 8);
    for v in model.params.flatten() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Model, ModelError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let fail = |m: &str| ModelError::Format(m.to_string());
    if bytes.len() < 10 || &bytes[..5] != MAGIC {
        return Err(fail("not a model checkpoint (bad magic)"));
    }
    let tag = GroupId::from_tag(bytes[5]).ok_or_else(|| fail("unknown group tag"))?;
    let len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let body = &bytes[10..];
    if body.len() < len {
        return Err(fail("truncated architecture header"));
    }
    let arch: ArchitectureConfig =
        serde_json::from_slice(&body[..len]).map_err(|e| ModelError::Format(e.to_string()))?;
    if arch.group != tag {
        return Err(fail("group tag disagrees with the architecture"));
    }
    let mut model = build_model(&arch)?;
    let raw = &body[len..];
    if raw.len() != model.params.numel() * 8 {
        return Err(ModelError::Format(format!(
            "expected {} parameter bytes, found {}",
            model.params.numel() * 8,
            raw.len()
        )));
    }
    let flat: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(fail("non-finite parameter"));
    }
    model.params.load_flat(&flat);
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model, ModelError> {
    read_checkpoint(std::fs::File::open(path)?)
}
