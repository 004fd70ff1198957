//! Binary checkpoints for trained per-task models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic          8  b"CELLARCK"
//! version        u32
//! variant        u32 length + UTF-8 name (e.g. "v3_large")
//! seed           u64   task seed; parameter order derives from the variant
//! iterations     u32
//! train log-loss f64
//! palette size   u32
//! wall seconds   f64
//! param count    u32
//! per parameter: u32 length + UTF-8 name, u32 ndim, u64 × ndim dims,
//!                f32 × product(dims) values in row-major order
//! ```
//!
//! Loading rebuilds the variant's architecture from its name and fills every
//! parameter in visitation order, verifying names and shapes as it goes, so a
//! checkpoint from a different layout fails loudly instead of half-applying.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::engram::{VariantName, VariantSpec};
use crate::trainer::{derive_stream_seed, TrainedModel};

const MAGIC: &[u8; 8] = b"CELLARCK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o failed: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint names unknown variant: {0}")]
    UnknownVariant(#[from] crate::engram::VariantError),
    #[error("string field is not valid UTF-8")]
    BadString,
    #[error("parameter count mismatch: file has {found}, model has {expected}")]
    ParamCount { expected: usize, found: usize },
    #[error("parameter name mismatch: expected {expected:?}, found {found:?}")]
    ParamName { expected: String, found: String },
    #[error("parameter {name:?} shape mismatch: expected {expected:?}, found {found:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("string or dimension field has implausible size {0}")]
    FieldTooLarge(u64),
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, CheckpointError> {
    let len = r.read_u32::<LittleEndian>()?;
    if len > 4096 {
        return Err(CheckpointError::FieldTooLarge(len as u64));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| CheckpointError::BadString)
}

/// Serializes a trained model's parameters and training metadata.
pub fn save_checkpoint(
    path: &Path,
    trained: &TrainedModel<f32>,
    palette_size: u32,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    write_str(&mut w, trained.variant.name.as_str())?;
    w.write_u64::<LittleEndian>(trained.seed)?;
    w.write_u32::<LittleEndian>(trained.iterations_run as u32)?;
    w.write_f64::<LittleEndian>(trained.final_train_log_loss)?;
    w.write_u32::<LittleEndian>(palette_size)?;
    w.write_f64::<LittleEndian>(trained.wall_seconds)?;

    // Copy the parameters out through the mutable visitor.
    let mut params: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    let mut model = trained.model.clone();
    model.visit_params(&mut |name, param, _| {
        params.push((
            name.to_string(),
            param.shape().to_vec(),
            param.iter().copied().collect(),
        ));
    });

    w.write_u32::<LittleEndian>(params.len() as u32)?;
    for (name, shape, data) in &params {
        write_str(&mut w, name)?;
        w.write_u32::<LittleEndian>(shape.len() as u32)?;
        for &d in shape {
            w.write_u64::<LittleEndian>(d as u64)?;
        }
        for &v in data {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back into a ready-to-score trained model (the
/// per-iteration log is not persisted) plus the palette size it was trained
/// against.
pub fn load_checkpoint(path: &Path) -> Result<(TrainedModel<f32>, u32), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let variant_name: VariantName = read_str(&mut r)?.parse()?;
    let seed = r.read_u64::<LittleEndian>()?;
    let iterations = r.read_u32::<LittleEndian>()? as usize;
    let final_train_log_loss = r.read_f64::<LittleEndian>()?;
    let palette_size = r.read_u32::<LittleEndian>()?;
    let wall_seconds = r.read_f64::<LittleEndian>()?;

    let spec = VariantSpec::of(variant_name);
    let mut model = spec.build::<f32>(derive_stream_seed(seed, "init"));

    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut loaded: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name = read_str(&mut r)?;
        let ndim = r.read_u32::<LittleEndian>()?;
        if ndim > 8 {
            return Err(CheckpointError::FieldTooLarge(ndim as u64));
        }
        let mut shape = Vec::with_capacity(ndim as usize);
        let mut total = 1usize;
        for _ in 0..ndim {
            let d = r.read_u64::<LittleEndian>()?;
            if d > 1 << 20 {
                return Err(CheckpointError::FieldTooLarge(d));
            }
            shape.push(d as usize);
            total *= d as usize;
        }
        let mut data = vec![0f32; total];
        r.read_f32_into::<LittleEndian>(&mut data)?;
        loaded.push((name, shape, data));
    }

    let mut expected = 0usize;
    model.visit_params(&mut |_, _, _| expected += 1);
    if loaded.len() != expected {
        return Err(CheckpointError::ParamCount {
            expected,
            found: loaded.len(),
        });
    }
    let mut err: Option<CheckpointError> = None;
    let mut next = loaded.into_iter();
    model.visit_params(&mut |name, mut param, _| {
        if err.is_some() {
            return;
        }
        let (file_name, shape, data) = next.next().expect("count checked above");
        if file_name != name {
            err = Some(CheckpointError::ParamName {
                expected: name.to_string(),
                found: file_name,
            });
            return;
        }
        if shape != param.shape() {
            err = Some(CheckpointError::ParamShape {
                name: file_name,
                expected: param.shape().to_vec(),
                found: shape,
            });
            return;
        }
        for (slot, v) in param.iter_mut().zip(data) {
            *slot = v;
        }
    });
    if let Some(e) = err {
        return Err(e);
    }

    Ok((
        TrainedModel {
            variant: spec,
            seed,
            iterations_run: iterations,
            model,
            final_train_log_loss,
            log: Vec::new(),
            wall_seconds,
        },
        palette_size,
    ))
}
