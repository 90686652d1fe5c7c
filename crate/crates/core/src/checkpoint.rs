//! Binary model checkpoints with a plain-text sidecar.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "POMOCKPT"  u32 version  u64 header_len  header (JSON)
//! u64 param_count
//! per param: u32 name_len  name  u64 rows  u64 cols  rows*cols f64
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use pomo_nn::{Matrix, ParamStore};
use serde_json::Value;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"POMOCKPT";
pub const VERSION: u32 = 1;

/// Refuse absurd sizes before allocating.
const MAX_PARAMS: u64 = 1 << 16;
const MAX_SCALARS: u64 = 1 << 31;

pub struct Checkpoint {
    pub header: Value,
    pub params: Vec<(String, Matrix)>,
}

pub fn encode(header: &Value, store: &ParamStore) -> Vec<u8> {
    let header = serde_json::to_vec(header).expect("header serialization cannot fail");
    let mut out = Vec::with_capacity(64 + header.len() + store.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
        for x in p.value.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn len(&mut self, limit: u64, what: &str) -> Result<usize> {
        let n = self.u64()?;
        if n > limit || n as usize > self.buf.len() {
            return Err(Error::Checkpoint(format!("{what} {n} is implausible")));
        }
        Ok(n as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = c.len(u64::MAX, "header length")?;
    let header: Value = serde_json::from_slice(c.take(hlen)?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let count = c.len(MAX_PARAMS, "parameter count")?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(nlen)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rows = c.u64()?;
        let cols = c.u64()?;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n <= MAX_SCALARS && n.saturating_mul(8) <= (bytes.len() - c.pos) as u64)
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "parameter {name} has implausible shape {rows}x{cols}"
                ))
            })?;
        let raw = c.take(n as usize * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        params.push((name, Matrix::from_vec(rows as usize, cols as usize, data)));
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(Checkpoint { header, params })
}

/// Copies checkpoint values into a store built with the same layout.
pub fn restore(store: &mut ParamStore, params: &[(String, Matrix)]) -> Result<()> {
    if params.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "model has {} parameters, checkpoint has {}",
            store.len(),
            params.len()
        )));
    }
    let ids: Vec<_> = store.ids().collect();
    for (id, (name, m)) in ids.into_iter().zip(params) {
        if store.name(id) != name || store.get(id).shape() != m.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter mismatch: model {} {:?} vs checkpoint {name} {:?}",
                store.name(id),
                store.get(id).shape(),
                m.shape()
            )));
        }
        *store.get_mut(id) = m.clone();
    }
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Writes the binary and a `key=value` sidecar next to it.
pub fn save(
    path: &Path,
    header: &Value,
    store: &ParamStore,
    sidecar: &[(String, String)],
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(header, store)).map_err(|e| Error::io(path, e))?;
    let text: String = sidecar.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let side = sidecar_path(path);
    fs::write(&side, text).map_err(|e| Error::io(side, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let mut store = ParamStore::new();
        store.add(
            "a",
            Matrix::from_vec(2, 2, vec![1.0, -2.5, 3.0, f64::MIN_POSITIVE]),
        );
        store.add("b.bias", Matrix::zeros(1, 3));
        let header = serde_json::json!({"kind": "test", "n": 3});
        let bytes = encode(&header, &store);
        let ck = decode(&bytes).unwrap();
        assert_eq!(ck.header, header);
        let mut other = ParamStore::new();
        other.add("a", Matrix::zeros(2, 2));
        other.add("b.bias", Matrix::zeros(1, 3));
        restore(&mut other, &ck.params).unwrap();
        assert_eq!(
            other.get(other.ids().next().unwrap()),
            store.get(store.ids().next().unwrap())
        );

        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut wrong = ParamStore::new();
        wrong.add("a", Matrix::zeros(2, 3));
        wrong.add("b.bias", Matrix::zeros(1, 3));
        assert!(restore(&mut wrong, &ck.params).is_err());
    }
}
