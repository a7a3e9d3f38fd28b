//! Little-endian binary containers for lip features and fusion checkpoints.
//!
//! LIPF: `"LIPF"`, u32 version = 1, u32 T, u32 d, then `T·d` f32 row-major.
//!
//! MFMP: `"MFMP"`, u32 version = 1, u32 tokens (44), u32 d, u32 classes (45),
//! then f32 payloads in field order: projection weights (44·d), projection
//! bias (d), λ (1), head weights (d·45), head bias (45).

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::domain::{NUM_CLASSES, NUM_TOKENS};
use crate::fusion::{FusionParams, LipFeatures};

pub const LIPF_MAGIC: &[u8; 4] = b"LIPF";
pub const MFMP_MAGIC: &[u8; 4] = b"MFMP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: String, found: String },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("bad header: {0}")]
    Header(String),
    #[error("trailing bytes after payload")]
    Trailing,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, FormatError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>, FormatError> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write_f32s<W: Write>(
    w: &mut W,
    values: impl IntoIterator<Item = f32>,
) -> Result<(), FormatError> {
    let mut buf = Vec::new();
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn check_magic<R: Read>(r: &mut R, expected: &[u8; 4]) -> Result<(), FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != expected {
        return Err(FormatError::Magic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::Version(version));
    }
    Ok(())
}

fn check_end<R: Read>(r: &mut R) -> Result<(), FormatError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(FormatError::Trailing),
    }
}

pub fn read_lipf<R: Read>(mut r: R) -> Result<LipFeatures, FormatError> {
    check_magic(&mut r, LIPF_MAGIC)?;
    let frames = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    let values = read_f32s(&mut r, frames * dim)?;
    check_end(&mut r)?;
    LipFeatures::new(frames, dim, values).map_err(|e| FormatError::Header(e.to_string()))
}

pub fn write_lipf<W: Write>(mut w: W, lip: &LipFeatures) -> Result<(), FormatError> {
    w.write_all(LIPF_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(lip.frames() as u32).to_le_bytes())?;
    w.write_all(&(lip.dim() as u32).to_le_bytes())?;
    write_f32s(&mut w, lip.values().iter().copied())
}

pub fn read_mfmp<R: Read>(mut r: R) -> Result<FusionParams, FormatError> {
    check_magic(&mut r, MFMP_MAGIC)?;
    let tokens = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    let classes = read_u32(&mut r)? as usize;
    if tokens != NUM_TOKENS || classes != NUM_CLASSES || dim == 0 {
        return Err(FormatError::Header(format!(
            "expected {NUM_TOKENS} tokens and {NUM_CLASSES} classes with d >= 1, found {tokens}/{classes}/d={dim}"
        )));
    }
    let n = FusionParams::zeros(dim).len();
    let flat: Vec<f64> = read_f32s(&mut r, n)?.into_iter().map(f64::from).collect();
    check_end(&mut r)?;
    FusionParams::from_flat(dim, &flat).map_err(|e| FormatError::Header(e.to_string()))
}

/// Parameters are narrowed to f32 on write.
pub fn write_mfmp<W: Write>(mut w: W, params: &FusionParams) -> Result<(), FormatError> {
    w.write_all(MFMP_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [NUM_TOKENS, params.dim(), NUM_CLASSES] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    write_f32s(&mut w, params.to_flat().into_iter().map(|v| v as f32))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_lipf(path: impl AsRef<Path>) -> Result<LipFeatures, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    read_lipf(bytes.as_slice())
}

pub fn save_lipf(path: impl AsRef<Path>, lip: &LipFeatures) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_lipf(&mut buf, lip)?;
    std::fs::write(path, buf).map_err(io_err(path))
}

pub fn load_mfmp(path: impl AsRef<Path>) -> Result<FusionParams, FormatError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    read_mfmp(bytes.as_slice())
}

pub fn save_mfmp(path: impl AsRef<Path>, params: &FusionParams) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_mfmp(&mut buf, params)?;
    std::fs::write(path, buf).map_err(io_err(path))
}
