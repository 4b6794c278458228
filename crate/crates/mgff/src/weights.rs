//! Binary weight files and the optimizer-state sidecar.
//!
//! Weight file (all integers little-endian `u32`):
//!
//! ```text
//! "MGFF"  version  config_len  config (JSON, UTF-8)  record_count
//! record: name_len  name (UTF-8)  ndim  dims[ndim]  payload (f32 LE, row-major)
//! ```
//!
//! Every tensor of the parameter store is written, including batch-norm
//! running statistics and, when attached, `classifier.weight`. Values are
//! stored at single precision, so a load followed by a save reproduces the
//! file byte for byte.
//!
//! The optimizer sidecar (`<checkpoint>.opt`) uses the magic `"MGFO"`, a
//! version, a `u64` step counter and the same record layout with `f64`
//! payloads, one record per momentum buffer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use mgff_core::train::Sgd;
use mgff_core::{MgffTdnn, ModelConfig, ParamStore, Tensor};

use crate::error::{Context, Error, Result};

pub const MAGIC: &[u8; 4] = b"MGFF";
pub const OPTIMIZER_MAGIC: &[u8; 4] = b"MGFO";
pub const VERSION: u32 = 1;

/// Upper bound on names, ranks and header lengths, so a corrupt length
/// field fails fast instead of allocating gigabytes.
const MAX_HEADER_BYTES: usize = 1 << 20;
const MAX_RANK: usize = 8;

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| Error::WeightFormat(format!("{v} does not fit in 32 bits")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_bytes<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::WeightFormat("unexpected end of file".into()),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    Ok(u32::from_le_bytes(get_bytes(r)?) as usize)
}

fn get_vec(r: &mut impl Read, len: usize, what: &str) -> Result<Vec<u8>> {
    if len > MAX_HEADER_BYTES {
        return Err(Error::WeightFormat(format!(
            "{what} length {len} is implausible"
        )));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)
        .map_err(|_| Error::WeightFormat(format!("unexpected end of file in {what}")))?;
    Ok(b)
}

fn check_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let m: [u8; 4] = get_bytes(r)?;
    if &m != magic {
        return Err(Error::WeightFormat(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = get_u32(r)?;
    if version != VERSION as usize {
        return Err(Error::WeightFormat(format!(
            "unsupported version {version}"
        )));
    }
    Ok(())
}

fn put_record_head(w: &mut impl Write, name: &str, shape: &[usize]) -> Result<()> {
    put_u32(w, name.len())?;
    w.write_all(name.as_bytes())?;
    put_u32(w, shape.len())?;
    for &d in shape {
        put_u32(w, d)?;
    }
    Ok(())
}

fn get_record_head(r: &mut impl Read) -> Result<(String, Vec<usize>)> {
    let len = get_u32(r)?;
    let name = String::from_utf8(get_vec(r, len, "record name")?)
        .map_err(|_| Error::WeightFormat("record name is not UTF-8".into()))?;
    let ndim = get_u32(r)?;
    if ndim > MAX_RANK {
        return Err(Error::WeightFormat(format!(
            "record {name} has rank {ndim}"
        )));
    }
    let shape = (0..ndim).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
    Ok((name, shape))
}

fn numel(name: &str, shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::WeightFormat(format!("record {name} has an overflowing shape")))
}

/// Serialises every tensor of `model` to `w`.
pub fn write_model(w: &mut impl Write, model: &MgffTdnn) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION as usize)?;
    let config = serde_json::to_vec(model.config())?;
    put_u32(w, config.len())?;
    w.write_all(&config)?;
    let store = model.store();
    put_u32(w, store.len())?;
    for id in store.ids() {
        let t = store.get(id);
        put_record_head(w, store.name(id), t.shape())?;
        let mut payload = Vec::with_capacity(4 * t.numel());
        for &v in t.data() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&payload)?;
    }
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<MgffTdnn> {
    check_magic(r, MAGIC)?;
    let len = get_u32(r)?;
    let config: ModelConfig = serde_json::from_slice(&get_vec(r, len, "config")?)?;
    let count = get_u32(r)?;
    let mut records = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let (name, shape) = get_record_head(r)?;
        let n = numel(&name, &shape)?;
        let mut bytes = vec![
            0u8;
            n.checked_mul(4).ok_or_else(|| Error::WeightFormat(format!(
                "record {name} too large"
            )))?
        ];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::WeightFormat(format!("payload of {name} is truncated")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        records.push((name, Tensor::new(&shape, data)?));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::WeightFormat(
            "trailing bytes after the last record".into(),
        ));
    }
    Ok(MgffTdnn::from_named(config, records)?)
}

pub fn save_model(path: impl AsRef<Path>, model: &MgffTdnn) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).in_file(path)?);
    write_model(&mut w, model).in_file(path)?;
    w.flush().in_file(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MgffTdnn> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).in_file(path)?);
    read_model(&mut r).in_file(path)
}

/// Momentum buffers plus the number of steps already taken.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub sgd: Sgd,
}

/// Path of the optimizer sidecar belonging to `checkpoint`.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".opt");
    PathBuf::from(s)
}

pub fn write_optimizer(
    w: &mut impl Write,
    state: &OptimizerState,
    store: &ParamStore,
) -> Result<()> {
    w.write_all(OPTIMIZER_MAGIC)?;
    put_u32(w, VERSION as usize)?;
    w.write_all(&state.step.to_le_bytes())?;
    let buffers: Vec<(usize, &Tensor)> = state
        .sgd
        .velocities()
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.as_ref().map(|t| (i, t)))
        .collect();
    put_u32(w, buffers.len())?;
    let ids: Vec<_> = store.ids().collect();
    for (i, t) in buffers {
        let id = ids
            .get(i)
            .ok_or_else(|| Error::Invalid(format!("momentum buffer {i} has no parameter")))?;
        put_record_head(w, store.name(*id), t.shape())?;
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a sidecar, resolving buffer names against `store`.
pub fn read_optimizer(r: &mut impl Read, store: &ParamStore) -> Result<OptimizerState> {
    check_magic(r, OPTIMIZER_MAGIC)?;
    let step = u64::from_le_bytes(get_bytes(r)?);
    let count = get_u32(r)?;
    let mut velocity: Vec<Option<Tensor>> = vec![None; store.len()];
    for _ in 0..count {
        let (name, shape) = get_record_head(r)?;
        let id = store.find(&name).ok_or_else(|| {
            Error::WeightFormat(format!("momentum buffer for unknown parameter {name}"))
        })?;
        if store.get(id).shape() != shape.as_slice() {
            return Err(Error::WeightFormat(format!(
                "momentum buffer {name} has shape {shape:?}"
            )));
        }
        let n = numel(&name, &shape)?;
        let data = (0..n)
            .map(|_| get_bytes::<8>(r).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        velocity[id.index()] = Some(Tensor::new(&shape, data)?);
    }
    Ok(OptimizerState {
        step,
        sgd: Sgd::from_velocities(velocity),
    })
}

/// Writes the model to `path` and its optimizer state to the sidecar.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &MgffTdnn,
    state: &OptimizerState,
) -> Result<()> {
    let path = path.as_ref();
    save_model(path, model)?;
    let side = sidecar_path(path);
    let mut w = BufWriter::new(File::create(&side).in_file(&side)?);
    write_optimizer(&mut w, state, model.store()).in_file(&side)?;
    w.flush().in_file(&side)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MgffTdnn, OptimizerState)> {
    let path = path.as_ref();
    let model = load_model(path)?;
    let side = sidecar_path(path);
    let mut r = BufReader::new(File::open(&side).in_file(&side)?);
    let state = read_optimizer(&mut r, model.store()).in_file(&side)?;
    Ok((model, state))
}
