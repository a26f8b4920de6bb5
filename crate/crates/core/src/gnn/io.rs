//! Versioned binary model files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `MKCMODEL`                        |
//! | 8      | 4    | u32 format version (currently 1)        |
//! | 12     | 4    | u32 layer count                         |
//! | 16     | 4    | u32 input dim                           |
//! | 20     | 4    | u32 hidden dim                          |
//! | 24     | 4    | u32 output dim (the model's k)          |
//! | 28     | 4    | u32 activation code (0 = relu)          |
//! | 32     | 8    | u64 parameter count P                   |
//! | 40     | 8·P  | f64 parameters                          |
//!
//! Parameters appear per layer: `Phi1` row-major, `Phi2` row-major, then
//! `gamma`, `beta`, `alpha` on normalized layers. Round-trips are bit-exact.

use std::fs;
use std::path::Path;

use super::{Activation, GnnArchitecture, GnnError, GnnParameters};

pub const MODEL_MAGIC: &[u8; 8] = b"MKCMODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 40;

/// Writes the model to `path`.
pub fn save_model(params: &GnnParameters, path: &Path) -> Result<(), GnnError> {
    let arch = params.arch();
    let data = params.data();
    let mut bytes = Vec::with_capacity(HEADER_LEN + 8 * data.len());
    bytes.extend_from_slice(MODEL_MAGIC);
    bytes.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(arch.layers as u32).to_le_bytes());
    bytes.extend_from_slice(&(arch.input_dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(arch.hidden_dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(arch.output_dim as u32).to_le_bytes());
    bytes.extend_from_slice(&arch.activation.code().to_le_bytes());
    bytes.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("in bounds"))
}

/// Reads a model written by [`save_model`], restoring parameters bit-exactly.
pub fn load_model(path: &Path) -> Result<GnnParameters, GnnError> {
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(GnnError::MalformedModel(format!(
            "file holds {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..8] != MODEL_MAGIC {
        return Err(GnnError::BadMagic);
    }
    let version = read_u32(&bytes, 8);
    if version != MODEL_FORMAT_VERSION {
        return Err(GnnError::VersionMismatch { found: version });
    }
    let activation_code = read_u32(&bytes, 28);
    let activation = Activation::from_code(activation_code).ok_or_else(|| {
        GnnError::MalformedModel(format!("unknown activation code {activation_code}"))
    })?;
    let arch = GnnArchitecture {
        layers: read_u32(&bytes, 12) as usize,
        input_dim: read_u32(&bytes, 16) as usize,
        hidden_dim: read_u32(&bytes, 20) as usize,
        output_dim: read_u32(&bytes, 24) as usize,
        activation,
    };
    arch.validate().map_err(|e| {
        GnnError::MalformedModel(format!("invalid architecture descriptor: {e}"))
    })?;

    let declared = u64::from_le_bytes(bytes[32..40].try_into().expect("in bounds")) as usize;
    if declared != arch.param_count() {
        return Err(GnnError::MalformedModel(format!(
            "header declares {declared} parameters, architecture implies {}",
            arch.param_count()
        )));
    }
    let expected_len = HEADER_LEN + 8 * declared;
    if bytes.len() != expected_len {
        return Err(GnnError::MalformedModel(format!(
            "file holds {} bytes, expected {expected_len}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunked by 8")))
        .collect();
    GnnParameters::from_data(arch, data)
}
