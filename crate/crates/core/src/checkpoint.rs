//! Parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "CHRNCKPT"
//! version    u32      1
//! manifest   u64      length in bytes, followed by UTF-8 JSON:
//!                     {"params":[{"name","shape","offset","trainable"}]}
//! data       f64 LE   concatenated parameter values; `offset` is the byte
//!                     offset of each tensor from the start of this section
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"CHRNCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    params: Vec<ManifestEntry>,
}

pub fn write_to<W: Write>(store: &ParamStore, mut w: W) -> Result<()> {
    let mut offset = 0u64;
    let params = store
        .iter()
        .map(|(_, p)| {
            let e = ManifestEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                offset,
                trainable: p.trainable,
            };
            offset += 8 * p.value.len() as u64;
            e
        })
        .collect();
    let manifest = serde_json::to_vec(&Manifest { params })?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(manifest.len() as u64).to_le_bytes())?;
    w.write_all(&manifest)?;
    for (_, p) in store.iter() {
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_to(store, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads every tensor in the file, in manifest order.
pub fn read_from<R: Read>(mut r: R) -> Result<Vec<(ManifestEntry, Tensor)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let version = u32::from_le_bytes(u32b);
    if version != VERSION {
        return Err(Error::Schema {
            expected: VERSION,
            found: version,
        });
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let mut manifest = vec![0u8; u64::from_le_bytes(u64b) as usize];
    r.read_exact(&mut manifest)?;
    let manifest: Manifest = serde_json::from_slice(&manifest)?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;

    manifest
        .params
        .into_iter()
        .map(|e| {
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start + 8 * n;
            let bytes = data
                .get(start..end)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {} runs past end of data", e.name)))?;
            let values = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = Tensor::new(&e.shape, values)?;
            Ok((e, t))
        })
        .collect()
}

/// Overwrites every parameter of `store` with the checkpoint's value of the
/// same name. Missing names and shape disagreements are errors.
pub fn load_into(store: &mut ParamStore, path: &Path) -> Result<()> {
    let f = std::fs::File::open(path)?;
    let entries = read_from(std::io::BufReader::new(f))?;
    apply(store, entries)
}

pub fn apply(store: &mut ParamStore, entries: Vec<(ManifestEntry, Tensor)>) -> Result<()> {
    let mut seen = 0;
    for (e, t) in entries {
        let id = store
            .id(&e.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {}", e.name)))?;
        let p = store.get_mut(id);
        if p.value.shape() != t.shape() {
            return Err(Error::shape("checkpoint load", p.value.shape(), t.shape()));
        }
        p.value = t;
        p.trainable = e.trainable;
        seen += 1;
    }
    if seen != store.len() {
        return Err(Error::Checkpoint(format!("checkpoint has {seen} of {} parameters", store.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = ParamStore::new();
        s.normal("a.w", &[3, 4], 1.0, &mut rng);
        let b = s.add("a.b", Tensor::new(&[3], vec![f64::MIN_POSITIVE, -0.0, 1e300]).unwrap());
        s.get_mut(b).trainable = false;

        let mut buf = Vec::new();
        write_to(&s, &mut buf).unwrap();
        let entries = read_from(buf.as_slice()).unwrap();
        assert_eq!(entries.len(), 2);
        for ((e, t), (_, p)) in entries.iter().zip(s.iter()) {
            assert_eq!(e.name, p.name);
            assert_eq!(e.trainable, p.trainable);
            let bits: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = p.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, want);
        }
        assert_eq!(entries[1].0.offset, 96);
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        assert!(read_from(&b"NOTACKPT\x01\0\0\0"[..]).is_err());
        let mut bad = MAGIC.to_vec();
        bad.extend(7u32.to_le_bytes());
        assert!(matches!(read_from(bad.as_slice()), Err(Error::Schema { found: 7, .. })));
    }
}
