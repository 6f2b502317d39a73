//! Versioned binary checkpoint: magic, format version, a JSON header with
//! the model config and catalog id maps, then every tensor as little-endian
//! `f64`. Values round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::data::Catalog;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NEGRECK\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub catalog: Catalog,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    catalog: Catalog,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.users.names() == other.users.names()
            && self.songs.names() == other.songs.names()
            && self.stations.names() == other.stations.names()
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn write_checkpoint<W: Write>(mut out: W, params: &ModelParams, catalog: &Catalog) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        config: params.config.clone(),
        catalog: catalog.clone(),
    })?;
    out.write_all(MAGIC).map_err(io)?;
    out.write_u32::<LittleEndian>(VERSION).map_err(io)?;
    out.write_u64::<LittleEndian>(header.len() as u64).map_err(io)?;
    out.write_all(&header).map_err(io)?;
    let names = params.tensor_names();
    let tensors = params.tensors();
    out.write_u32::<LittleEndian>(tensors.len() as u32).map_err(io)?;
    for (name, t) in names.iter().zip(tensors) {
        out.write_u32::<LittleEndian>(name.len() as u32).map_err(io)?;
        out.write_all(name.as_bytes()).map_err(io)?;
        out.write_u64::<LittleEndian>(t.len() as u64).map_err(io)?;
        for &x in t {
            out.write_f64::<LittleEndian>(x).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = input.read_u32::<LittleEndian>().map_err(io)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = input.read_u64::<LittleEndian>().map_err(io)? as usize;
    let mut header = vec![0u8; header_len];
    input.read_exact(&mut header).map_err(io)?;
    let header: Header = serde_json::from_slice(&header)?;
    header.config.validate()?;

    let mut params = ModelParams::zeros(&header.config);
    let names = params.tensor_names();
    let count = input.read_u32::<LittleEndian>().map_err(io)? as usize;
    if count != names.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {count}",
            names.len()
        )));
    }
    for (expected, t) in names.iter().zip(params.tensors_mut()) {
        let name_len = input.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name).map_err(io)?;
        if name != expected.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "expected tensor {expected}, found {}",
                String::from_utf8_lossy(&name)
            )));
        }
        let len = input.read_u64::<LittleEndian>().map_err(io)? as usize;
        if len != t.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {expected}: expected {} values, found {len}",
                t.len()
            )));
        }
        input.read_f64_into::<LittleEndian>(t).map_err(io)?;
    }
    Ok(Checkpoint {
        params,
        catalog: header.catalog,
    })
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, catalog: &Catalog) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(f), params, catalog)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let config = ModelConfig {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            max_len: 6,
            catalog_size: 11,
            station_count: 3,
            seed: 9,
            ..Default::default()
        };
        let mut params = ModelParams::init(&config);
        params.song.data[3] = f64::MIN_POSITIVE / 3.0;
        params.final_bias[0] = -0.0;
        let mut catalog = Catalog::default();
        catalog.song("a");
        catalog.station("st");
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &params, &catalog).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        let bits =
            |p: &ModelParams| -> Vec<u64> { p.tensors().iter().flat_map(|t| t.iter().map(|x| x.to_bits())).collect() };
        assert_eq!(bits(&back.params), bits(&params));
        assert_eq!(back.params.config, params.config);
        assert_eq!(back.catalog, catalog);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&b"not a checkpoint"[..]).is_err());
    }
}
