//! Versioned binary checkpoints.
//!
//! Layout: magic string, format version, architecture descriptor (config
//! JSON plus the block list with shapes), then the parameter blobs in
//! declared order as little-endian 32-bit floats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::model::{ModelParams, NetConfig, ParamBlock};

const MAGIC: &[u8; 8] = b"PITCASTN";
const VERSION: u32 = 1;

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    params.validate()?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;

    let config_json = serde_json::to_vec(&params.config)?;
    out.write_all(&(config_json.len() as u32).to_le_bytes())?;
    out.write_all(&config_json)?;

    out.write_all(&(params.blocks.len() as u32).to_le_bytes())?;
    for block in &params.blocks {
        let name = block.name.as_bytes();
        out.write_all(&(name.len() as u16).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&(block.shape.len() as u8).to_le_bytes())?;
        for &dim in &block.shape {
            out.write_all(&(dim as u32).to_le_bytes())?;
        }
    }
    for block in &params.blocks {
        for &v in &block.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::CorruptCheckpoint("unexpected end of file".into()))?;
    Ok(buf)
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact::<8>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_exact::<4>(&mut r)?);
    if version != VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: VERSION });
    }

    let config_len = u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize;
    let mut config_buf = vec![0u8; config_len];
    r.read_exact(&mut config_buf)
        .map_err(|_| Error::CorruptCheckpoint("truncated config".into()))?;
    let config: NetConfig = serde_json::from_slice(&config_buf)
        .map_err(|e| Error::CorruptCheckpoint(format!("config: {e}")))?;

    let n_blocks = u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize;
    let mut descriptors = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let name_len = u16::from_le_bytes(read_exact::<2>(&mut r)?) as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)
            .map_err(|_| Error::CorruptCheckpoint("truncated block name".into()))?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::CorruptCheckpoint("block name not utf-8".into()))?;
        let ndim = read_exact::<1>(&mut r)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize);
        }
        descriptors.push((name, shape));
    }

    if descriptors != config.block_layout() {
        return Err(Error::ArchitectureMismatch(
            "block list does not match architecture".into(),
        ));
    }

    let mut blocks = Vec::with_capacity(n_blocks);
    for (name, shape) in descriptors {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f32::from_le_bytes(read_exact::<4>(&mut r)?));
        }
        blocks.push(ParamBlock { name, shape, data });
    }

    let params = ModelParams { config, blocks };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::tests::{tiny_config, tiny_raster};
    use crate::nn::model::forward;

    #[test]
    fn round_trip_reproduces_forward_exactly() {
        let cfg = tiny_config();
        let params = ModelParams::init(cfg.clone(), 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&params, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded, params);

        let raster = tiny_raster(&cfg);
        let (a, la) = forward(&params, &raster, (4.0, 0.2, 0.0)).unwrap();
        let (b, lb) = forward(&loaded, &raster, (4.0, 0.2, 0.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);

        // Saving the loaded params yields byte-identical files.
        let path2 = dir.path().join("model2.ckpt");
        save(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn wrong_architecture_descriptor_rejected() {
        let cfg = tiny_config();
        let params = ModelParams::init(cfg, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&params, &path).unwrap();
        // Corrupt one block dimension in place: the first block descriptor
        // starts after magic(8) + version(4) + config length field.
        let mut bytes = std::fs::read(&path).unwrap();
        let config_len =
            u32::from_le_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]) as usize;
        let desc_start = 16 + config_len + 4;
        let name_len = u16::from_le_bytes([bytes[desc_start], bytes[desc_start + 1]]) as usize;
        let dim_pos = desc_start + 2 + name_len + 1;
        bytes[dim_pos] = bytes[dim_pos].wrapping_add(1);
        std::fs::write(&path, &bytes).unwrap();
        match load(&path) {
            Err(Error::ArchitectureMismatch(_)) => {}
            other => panic!("expected architecture mismatch, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let cfg = tiny_config();
        let params = ModelParams::init(cfg, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&params, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad_magic = dir.path().join("bad_magic.ckpt");
        std::fs::write(&bad_magic, &bytes).unwrap();
        assert!(matches!(load(&bad_magic), Err(Error::CorruptCheckpoint(_))));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99;
        let bad_version = dir.path().join("bad_version.ckpt");
        std::fs::write(&bad_version, &bytes).unwrap();
        assert!(matches!(
            load(&bad_version),
            Err(Error::CheckpointVersion { found: 99, expected: 1 })
        ));
    }
}
