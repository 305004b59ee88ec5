//! Self-describing binary checkpoint for a trained model, plus a text
//! manifest listing every stored array.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   b"RMAE"
//! version u32 (currently 1)
//! dims    u32 x5: mod_order, n_streams, n_tx, n_rx, n_ris
//! power   f64
//! norm    u8: 0 = paper normalization, 1 = sqrt variant
//! count   u32 arrays, each: name_len u32, name utf-8, len u64, f64 x len
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{AutoencoderModel, ModelDims};
use crate::neuralnet::NormalizationMode;

const MAGIC: &[u8; 4] = b"RMAE";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {got} unsupported (expected {VERSION})")]
    VersionMismatch { got: u32 },
    #[error("checkpoint dimensions {got:?} do not match requested {want:?}")]
    DimensionMismatch { got: ModelDims, want: ModelDims },
    #[error("corrupted checkpoint: {0}")]
    Corrupted(String),
}

fn collect_arrays(model: &AutoencoderModel) -> Vec<(String, Vec<f64>)> {
    let mut arrays = Vec::new();
    for (prefix, net) in [
        ("ris_net", &model.ris_net),
        ("encoder", &model.encoder),
        ("decoder", &model.decoder),
    ] {
        net.visit_tensors(&mut |name, data| {
            arrays.push((format!("{prefix}.{name}"), data.to_vec()));
        });
    }
    arrays
}

/// Writes the model and a `<path>.manifest.txt` sidecar listing the arrays.
pub fn save_checkpoint(model: &AutoencoderModel, path: &Path) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let d = model.dims;
    for v in [d.mod_order, d.n_streams, d.n_tx, d.n_rx, d.n_ris] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&model.power.to_le_bytes())?;
    w.write_all(&[match model.norm_mode {
        NormalizationMode::Paper => 0u8,
        NormalizationMode::Sqrt => 1u8,
    }])?;
    let arrays = collect_arrays(model);
    w.write_all(&(arrays.len() as u32).to_le_bytes())?;
    let mut manifest = String::new();
    manifest.push_str(&format!(
        "checkpoint v{VERSION}: mod_order={} n_streams={} n_tx={} n_rx={} n_ris={} power={}\n",
        d.mod_order, d.n_streams, d.n_tx, d.n_rx, d.n_ris, model.power
    ));
    for (name, data) in &arrays {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(data.len() as u64).to_le_bytes())?;
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
        manifest.push_str(&format!("{name} len={}\n", data.len()));
    }
    w.flush()?;
    std::fs::write(manifest_path(path), manifest)?;
    Ok(())
}

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".manifest.txt");
    os.into()
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Restores a model, verifying that the stored dimensions match `expected`.
pub fn load_checkpoint(path: &Path, expected: &ModelDims) -> Result<AutoencoderModel, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch { got: version });
    }
    let dims = ModelDims {
        mod_order: read_u32(&mut r)? as usize,
        n_streams: read_u32(&mut r)? as usize,
        n_tx: read_u32(&mut r)? as usize,
        n_rx: read_u32(&mut r)? as usize,
        n_ris: read_u32(&mut r)? as usize,
    };
    if dims != *expected {
        return Err(CheckpointError::DimensionMismatch { got: dims, want: *expected });
    }
    let power = read_f64(&mut r)?;
    let mut mode_byte = [0u8; 1];
    r.read_exact(&mut mode_byte)?;
    let norm_mode = match mode_byte[0] {
        0 => NormalizationMode::Paper,
        1 => NormalizationMode::Sqrt,
        other => {
            return Err(CheckpointError::Corrupted(format!("unknown normalization tag {other}")))
        }
    };
    let n_arrays = read_u32(&mut r)? as usize;

    let mut stored = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 4096 {
            return Err(CheckpointError::Corrupted(format!("array name length {name_len}")));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| CheckpointError::Corrupted("array name not utf-8".into()))?;
        let len = read_u64(&mut r)? as usize;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(read_f64(&mut r)?);
        }
        stored.push((name, data));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CheckpointError::Corrupted("trailing bytes after arrays".into()));
    }

    // the seed is irrelevant: every tensor is overwritten below
    let mut model = AutoencoderModel::new(dims, power, norm_mode, 0);
    let mut cursor = 0usize;
    let mut fill = |expected_name: String, slot: &mut [f64]| -> Result<(), CheckpointError> {
        let (name, data) = stored
            .get(cursor)
            .ok_or_else(|| CheckpointError::Corrupted("missing arrays".into()))?;
        if *name != expected_name {
            return Err(CheckpointError::Corrupted(format!(
                "array order mismatch: found {name}, expected {expected_name}"
            )));
        }
        if data.len() != slot.len() {
            return Err(CheckpointError::Corrupted(format!(
                "array {name} has {} values, expected {}",
                data.len(),
                slot.len()
            )));
        }
        slot.copy_from_slice(data);
        cursor += 1;
        Ok(())
    };
    let mut status = Ok(());
    for (prefix, net) in [
        ("ris_net", &mut model.ris_net),
        ("encoder", &mut model.encoder),
        ("decoder", &mut model.decoder),
    ] {
        net.visit_tensors_mut(&mut |name, slot| {
            if status.is_ok() {
                status = fill(format!("{prefix}.{name}"), slot);
            }
        });
    }
    status?;
    if cursor != stored.len() {
        return Err(CheckpointError::Corrupted(format!(
            "{} extra arrays in checkpoint",
            stored.len() - cursor
        )));
    }
    Ok(model)
}
