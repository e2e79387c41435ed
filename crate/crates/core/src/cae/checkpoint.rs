//! DUPC checkpoints: `"DUPC"`, u32 version, u32 d, u32 hidden, u32 latent,
//! the eight f64 parameter blocks (w1 b1 w2 b2 w3 b3 w4 b4, row-major), then
//! a u32 length and the JSON-encoded training config. All little-endian.

use std::path::Path;

use super::model::{CaeConfig, CaeModel, Params};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MAGIC: [u8; 4] = *b"DUPC";
pub const VERSION: u32 = 1;

pub fn encode(model: &CaeModel) -> Result<Vec<u8>> {
    let p = &model.params;
    let cfg = serde_json::to_vec(&model.config)?;
    let mut out = Vec::with_capacity(20 + p.len() * 8 + 4 + cfg.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [p.input_dim(), p.hidden(), p.latent()] {
        let dim =
            u32::try_from(dim).map_err(|_| Error::Shape(format!("dimension {dim} too large")))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    for block in p.blocks() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<CaeModel> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if bytes.len() - pos < n {
            return Err(Error::Truncated {
                offset: pos,
                needed: n,
                available: bytes.len() - pos,
            });
        }
        pos += n;
        Ok(&bytes[pos - n..pos])
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]);

    let magic = take(4)?;
    if magic != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(magic);
        return Err(Error::BadMagic {
            expected: MAGIC,
            found,
        });
    }
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let d = u32_at(take(4)?) as usize;
    let hidden = u32_at(take(4)?) as usize;
    let latent = u32_at(take(4)?) as usize;
    if d == 0 || hidden == 0 || latent == 0 {
        return Err(Error::Shape(format!(
            "zero dimension in checkpoint ({d}, {hidden}, {latent})"
        )));
    }

    let mut params = Params::zeros(d, hidden, latent);
    for block in params.blocks_mut() {
        let raw = take(
            block
                .len()
                .checked_mul(8)
                .ok_or_else(|| Error::Shape("block overflows".into()))?,
        )?;
        for (v, b) in block.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
        }
    }
    let cfg_len = u32_at(take(4)?) as usize;
    let config: CaeConfig = serde_json::from_slice(take(cfg_len)?)?;
    if pos != bytes.len() {
        return Err(Error::TrailingBytes(bytes.len() - pos));
    }
    if !params.all_finite() {
        return Err(Error::NonFinite { row: 0 });
    }
    config.validate()?;
    Ok(CaeModel { params, config })
}

pub fn save(model: &CaeModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode(model)?)
}

pub fn load(path: &Path) -> Result<CaeModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = CaeConfig {
            lambda1: 0.5,
            seed: 3,
            ..Default::default()
        };
        let model = CaeModel::new(6, cfg).unwrap();
        let bytes = encode(&model).unwrap();
        assert_eq!(&bytes[..4], b"DUPC");
        let back = decode(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn config_is_echoed_as_json() {
        let model = CaeModel::new(4, CaeConfig::default()).unwrap();
        let bytes = encode(&model).unwrap();
        let tail = String::from_utf8_lossy(&bytes[bytes.len() - 200..]).into_owned();
        assert!(tail.contains("\"lr\":0.04"), "{tail}");
        assert!(tail.contains("\"epochs\":1000"), "{tail}");
        assert!(tail.contains("\"recon_loss\":\"cosine\""), "{tail}");
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let model = CaeModel::new(4, CaeConfig::default()).unwrap();
        let good = encode(&model).unwrap();
        for cut in 0..good.len() {
            assert!(decode(&good[..cut]).is_err());
        }
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::BadMagic { .. })));
        let mut long = good;
        long.push(0);
        assert!(matches!(decode(&long), Err(Error::TrailingBytes(1))));
    }
}
