//! Weights file: `EDLX`, u32 version, u64-prefixed JSON header (config and
//! vocabulary), u32 tensor count, then per tensor (u32 name length, name,
//! u32 rank, u64 dims, f32 data), then a CRC32 of everything before it.
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::{Model, ModelConfig, ModelError};
use crate::features::Vocab;

pub const MAGIC: &[u8; 4] = b"EDLX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        config: model.params.config.clone(),
        vocab: model.vocab.clone(),
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + model.params.count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(model.params.tensors.len() as u32).to_le_bytes());
    for t in &model.params.tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &dim in &t.shape {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::CorruptFile(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, wide: bool) -> Result<usize, ModelError> {
        let v = if wide { self.u64()? } else { self.u32()? as u64 };
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= self.buf.len())
            .ok_or_else(|| ModelError::CorruptFile(format!("implausible length {v}")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model, ModelError> {
    let corrupt = |m: String| ModelError::CorruptFile(m);
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing EDLX magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 12 {
        return Err(corrupt("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 8 };
    let hlen = r.len(true)?;
    let header: Header = serde_json::from_slice(r.take(hlen)?)
        .map_err(|e| corrupt(format!("header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| corrupt(e.to_string()))?;
    let mut vocab = header.vocab;
    vocab.freeze();
    let expected = ModelParams::<f32>::expected_shapes(&header.config, vocab.sizes());
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(corrupt(format!("{count} tensors, expected {}", expected.len())));
    }
    let mut params = ModelParams::<f32>::zeros(&header.config, vocab.sizes());
    for (slot, want) in params.tensors.iter_mut().zip(&expected) {
        let nlen = r.len(false)?;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| corrupt("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.len(false)?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.len(true)?);
        }
        if name != want.name || shape != want.shape {
            return Err(corrupt(format!(
                "tensor {name} {shape:?}, expected {} {:?}",
                want.name, want.shape
            )));
        }
        let raw = r.take(slot.data.len() * 4)?;
        for (v, c) in slot.data.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(c.try_into().unwrap());
        }
    }
    if r.pos != body.len() {
        return Err(corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }
    if !params.is_finite() {
        return Err(corrupt("non-finite weight".into()));
    }
    Ok(Model { params, vocab })
}

pub fn save(model: &Model, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model, ModelError> {
    let model = from_bytes(&std::fs::read(path)?)?;
    log::info!(
        "loaded {} ({} parameters)",
        path.display(),
        model.param_count()
    );
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> Model {
        let mut vocab = Vocab::new();
        vocab.featurize_text("Compte rendu du 12/05/2021 : RAS");
        vocab.freeze();
        let params = ModelParams::init(&ModelConfig::tiny(), vocab.sizes(), &mut ChaCha8Rng::seed_from_u64(9));
        Model { params, vocab }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = model();
        let back = from_bytes(&to_bytes(&m)).unwrap();
        assert_eq!(back, m);
        for (a, b) in m.params.tensors.iter().zip(&back.params.tensors) {
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.edlx");
        let m = model();
        save(&m, &path).unwrap();
        assert_eq!(load(&path).unwrap(), m);
    }

    #[test]
    fn truncation_is_corrupt() {
        let bytes = to_bytes(&model());
        for cut in [0, 3, 9, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(from_bytes(&bytes[..cut]), Err(ModelError::CorruptFile(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn flipped_bit_is_corrupt() {
        let mut bytes = to_bytes(&model());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        assert!(matches!(from_bytes(&bytes), Err(ModelError::CorruptFile(_))));
    }

    #[test]
    fn bumped_version_is_rejected() {
        let mut bytes = to_bytes(&model());
        bytes[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(ModelError::VersionMismatch { found, .. }) if found == FORMAT_VERSION + 1
        ));
    }
}
