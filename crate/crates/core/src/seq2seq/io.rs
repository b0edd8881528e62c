//! Binary model file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic         8 bytes  "MOBSEQRN"
//! version       u32      1
//! task kind     u8
//! history       u32
//! horizon       u32
//! vocab         u32
//! hidden        u32
//! has scale     u8       0 or 1
//! scale min     f64
//! scale max     f64
//! param count   u64
//! params        f64 x param count, flat model layout
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::model::{Dims, RnnModel};
use crate::dataset::{DwellScale, TaskKind, TaskSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MOBSEQRN";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &RnnModel, out: &mut W) -> std::io::Result<()> {
    let t = &model.task;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&[t.kind.code()])?;
    for v in [t.history, t.horizon, t.vocab, model.dims.hidden] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    let (flag, scale) = match model.dwell_scale {
        Some(s) => (1u8, s),
        None => (0u8, DwellScale { min: 0.0, max: 0.0 }),
    };
    out.write_all(&[flag])?;
    out.write_all(&scale.min.to_le_bytes())?;
    out.write_all(&scale.max.to_le_bytes())?;
    out.write_all(&(model.params().len() as u64).to_le_bytes())?;
    for p in model.params() {
        out.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::ModelFormat(format!("truncated: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(input: &mut R) -> Result<usize> {
    Ok(u32::from_le_bytes(take(input)?) as usize)
}

pub fn read_model<R: Read>(input: &mut R) -> Result<RnnModel> {
    if &take::<8, _>(input)? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(input)?);
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let [code] = take::<1, _>(input)?;
    let kind = TaskKind::from_code(code)
        .ok_or_else(|| Error::ModelFormat(format!("unknown task kind {code}")))?;
    let history = read_u32(input)?;
    let horizon = read_u32(input)?;
    let vocab = read_u32(input)?;
    let hidden = read_u32(input)?;
    let task = TaskSpec::new(kind, history, horizon, vocab)
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    let [flag] = take::<1, _>(input)?;
    let min = f64::from_le_bytes(take(input)?);
    let max = f64::from_le_bytes(take(input)?);
    let dwell_scale = match flag {
        0 => None,
        1 => Some(DwellScale { min, max }),
        f => return Err(Error::ModelFormat(format!("bad scale flag {f}"))),
    };
    let count = u64::from_le_bytes(take(input)?) as usize;
    let dims = Dims::for_task(&task, hidden);
    if count != dims.param_count() {
        return Err(Error::ModelFormat(format!(
            "{count} parameters stored, {} expected",
            dims.param_count()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(f64::from_le_bytes(take(input)?));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(|e| Error::ModelFormat(e.to_string()))? != 0 {
        return Err(Error::ModelFormat("trailing bytes".into()));
    }
    RnnModel::from_parts(task, dims, dwell_scale, params)
}

pub fn save_model(model: &RnnModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<RnnModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&mut bytes.as_slice())
}
