//! `.wgt` weight files.
//!
//! Layout (little-endian): magic `WGT1`, version u16, entry count u32; then
//! per tensor: name length u16, UTF-8 name, rank u8, element count u32,
//! `rank` extents as u32, and the values as f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::graph::ModelGraph;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"WGT1";
pub const WEIGHTS_VERSION: u16 = 1;
pub const WEIGHTS_HEADER_LEN: usize = 4 + 2 + 4;
/// Fixed bytes per entry besides the name, extents and payload.
pub const WEIGHTS_ENTRY_OVERHEAD: usize = 2 + 1 + 4;

/// Exact size of the serialized weights of `model`.
pub fn weights_file_size(model: &ModelGraph) -> usize {
    WEIGHTS_HEADER_LEN
        + model
            .named_params()
            .iter()
            .map(|(name, t)| WEIGHTS_ENTRY_OVERHEAD + name.len() + t.rank() * 4 + t.len() * 4)
            .sum::<usize>()
}

pub fn write_weights<W: Write>(model: &ModelGraph, mut w: W) -> Result<()> {
    let params = model.named_params();
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_u16::<LittleEndian>(WEIGHTS_VERSION)?;
    w.write_u32::<LittleEndian>(params.len() as u32)?;
    for (name, t) in params {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidArgument(format!("tensor name {name:?} too long")))?;
        w.write_u16::<LittleEndian>(name_len)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(t.rank() as u8)?;
        w.write_u32::<LittleEndian>(t.len() as u32)?;
        for &d in t.shape() {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in t.data() {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn weights_to_bytes(model: &ModelGraph) -> Vec<u8> {
    let mut buf = Vec::with_capacity(weights_file_size(model));
    write_weights(model, &mut buf).expect("writing to memory cannot fail");
    buf
}

/// Reads weights into `model`, checking names and shapes against its layers.
pub fn read_weights<R: Read>(model: &mut ModelGraph, mut r: R) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::BadMagic {
            expected: "WGT1".into(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "weights version {version}"
        )));
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    let expected: Vec<(String, Vec<usize>)> = model
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if count != expected.len() {
        return Err(Error::ShapeMismatch(format!(
            "file holds {count} tensors, model {} has {}",
            model.name(),
            expected.len()
        )));
    }

    let mut loaded: Vec<Vec<f64>> = Vec::with_capacity(count);
    for (want_name, want_shape) in &expected {
        let name_len = r.read_u16::<LittleEndian>()? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Parse(e.to_string()))?;
        let rank = r.read_u8()? as usize;
        let elems = r.read_u32::<LittleEndian>()? as usize;
        let shape = (0..rank)
            .map(|_| r.read_u32::<LittleEndian>().map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        if &name != want_name || &shape != want_shape || elems != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {name:?} {shape:?} ({elems} values) does not match {want_name:?} {want_shape:?}"
            )));
        }
        let values = (0..elems)
            .map(|_| r.read_f32::<LittleEndian>().map(|v| v as f64))
            .collect::<std::io::Result<Vec<_>>>()?;
        loaded.push(values);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::DimMismatch("trailing bytes after weights".into()));
    }
    for (t, values) in model.params_mut().into_iter().zip(loaded) {
        t.data_mut().copy_from_slice(&values);
    }
    Ok(())
}

pub fn save_weights(model: &ModelGraph, path: impl AsRef<Path>) -> Result<()> {
    write_weights(model, BufWriter::new(File::create(path)?))
}

pub fn load_weights(model: &mut ModelGraph, path: impl AsRef<Path>) -> Result<()> {
    read_weights(model, BufReader::new(File::open(path)?))
}
