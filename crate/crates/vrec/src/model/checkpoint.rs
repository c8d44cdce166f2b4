//! Versioned self-describing checkpoint container.
//!
//! Layout: 8-byte magic, u32 format version, u64 JSON header length,
//! JSON header (architecture, feature schema, normalization constants),
//! then every tensor in the fixed traversal order as a u64 element
//! count followed by little-endian f64 data. Round-trips bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::domain::VEHICLE_DIM;
use crate::error::{Error, Result};
use crate::features::FeatureSchema;

use super::{ModelConfig, ModelParams, ModelTensors};

const MAGIC: &[u8; 8] = b"VRECKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    cfg: ModelConfig,
    schema: FeatureSchema,
    out_scale: [f64; 2],
    d: usize,
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    let header = Header {
        cfg: params.cfg.clone(),
        schema: params.schema.clone(),
        out_scale: params.out_scale,
        d: params.d(),
    };
    let header_json = serde_json::to_vec(&header)?;
    w.write_u64::<LittleEndian>(header_json.len() as u64)?;
    w.write_all(&header_json)?;
    let mut tensors = params.tensors.clone();
    for (_, _, data) in tensors.slices_mut() {
        w.write_u64::<LittleEndian>(data.len() as u64)?;
        for &v in data.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn truncated(what: &str) -> Error {
    Error::CheckpointTruncated(format!("unexpected end of file while reading {what}"))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != MAGIC {
        return Err(Error::Data("not a model checkpoint (bad magic)".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| truncated("version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: FORMAT_VERSION });
    }
    let header_len = r.read_u64::<LittleEndian>().map_err(|_| truncated("header length"))?;
    let mut header_buf = vec![0u8; header_len as usize];
    r.read_exact(&mut header_buf).map_err(|_| truncated("header"))?;
    let header: Header = serde_json::from_slice(&header_buf)?;

    if header.schema.d1 != VEHICLE_DIM {
        return Err(Error::Dimension(format!(
            "checkpoint vehicle dimension {} does not match build dimension {}",
            header.schema.d1, VEHICLE_DIM
        )));
    }
    if header.schema.d() != header.d {
        return Err(Error::Dimension(format!(
            "header D {} inconsistent with schema D {}",
            header.d,
            header.schema.d()
        )));
    }

    let mut tensors = ModelTensors::zeros(&header.cfg, header.d);
    for (name, _, data) in tensors.slices_mut() {
        let count = r
            .read_u64::<LittleEndian>()
            .map_err(|_| truncated(&name))?;
        if count as usize != data.len() {
            return Err(Error::Dimension(format!(
                "tensor {name}: stored {count} elements, expected {}",
                data.len()
            )));
        }
        for v in data.iter_mut() {
            *v = r.read_f64::<LittleEndian>().map_err(|_| truncated(&name))?;
        }
    }
    Ok(ModelParams {
        cfg: header.cfg,
        tensors,
        out_scale: header.out_scale,
        schema: header.schema,
    })
}
