//! Binary weight container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "AUXKCKPT"
//! version  u32      1
//! n_meta   u32
//!   key    u32 length + UTF-8 bytes
//!   value  u32 length + UTF-8 bytes
//! n_arrays u32
//!   name   u32 length + UTF-8 bytes
//!   rows   u64
//!   cols   u64
//!   data   rows*cols × f64 (IEEE-754 bits, little-endian)
//! ```
//!
//! Values are stored as raw bits so a save/load round trip is bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{ParamStore, Shape};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"AUXKCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub arrays: Vec<(String, Shape, Vec<f64>)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(bad("truncated file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("invalid UTF-8 string"))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        Checkpoint {
            meta: BTreeMap::new(),
            arrays: store
                .iter()
                .map(|p| (p.name.clone(), p.shape, p.values.clone()))
                .collect(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(format!("missing metadata key {key}")))
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta(key)?
            .parse()
            .map_err(|_| bad(format!("metadata key {key} is not an integer")))
    }

    /// Rebuilds a store, preserving array order and names.
    pub fn to_store(&self) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, shape, values) in &self.arrays {
            store.add(name.clone(), *shape, values.clone());
        }
        store
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, shape, values) in &self.arrays {
            put_str(&mut out, name);
            out.extend_from_slice(&(shape.rows as u64).to_le_bytes());
            out.extend_from_slice(&(shape.cols as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            meta.insert(k, v);
        }
        let mut arrays = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let shape = Shape::new(r.u64()? as usize, r.u64()? as usize);
            let mut values = Vec::with_capacity(shape.len());
            for _ in 0..shape.len() {
                values.push(f64::from_bits(r.u64()?));
            }
            arrays.push((name, shape, values));
        }
        if r.pos != buf.len() {
            return Err(bad("trailing bytes after last array"));
        }
        Ok(Checkpoint { meta, arrays })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            values in proptest::collection::vec(any::<f64>(), 0..40),
            name in "[a-z.]{1,12}",
        ) {
            let ck = Checkpoint {
                meta: [("kind".to_string(), "test".to_string())].into(),
                arrays: vec![(name, Shape::row(values.len()), values.clone())],
            };
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.arrays[0].2), bits(&values));
            prop_assert_eq!(&back.meta, &ck.meta);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let mut bytes = Checkpoint::default().to_bytes();
        bytes.push(0);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
