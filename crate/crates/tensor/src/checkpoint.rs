//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MLAB1"            5 bytes magic
//! version            u8 (currently 1)
//! repeated until EOF:
//!   name_len         u32
//!   name             name_len bytes, UTF-8
//!   dtype            u8 (0 = f32)
//!   rank             u8
//!   dims             rank × u32
//!   payload          Π dims × f32
//! ```
//!
//! Records are written in parameter-name order, so equal stores produce
//! byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::{ParamStore, Real, Result, TensorError};

pub const MAGIC: &[u8; 5] = b"MLAB1";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

pub fn write_params<F: Real, W: Write>(params: &ParamStore<F>, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION])?;
    for (name, t) in params.iter() {
        let name_bytes = name.as_bytes();
        let rank = u8::try_from(t.ndim())
            .map_err(|_| TensorError::Checkpoint(format!("`{name}` has rank {}", t.ndim())))?;
        out.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
        out.write_all(name_bytes)?;
        out.write_all(&[DTYPE_F32, rank])?;
        for &d in t.shape() {
            let d = u32::try_from(d)
                .map_err(|_| TensorError::Checkpoint(format!("`{name}` dimension {d} too large")))?;
            out.write_all(&d.to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(t.len() * 4);
        for v in t.iter() {
            let v = v.to_f32().unwrap_or(f32::NAN);
            payload.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&payload)?;
    }
    Ok(())
}

pub fn read_params<R: Read>(mut input: R) -> Result<ParamStore<f32>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(5)? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = cur.take(1)?[0];
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut store = ParamStore::new();
    while !cur.at_end() {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| TensorError::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let head = cur.take(2)?;
        let (dtype, rank) = (head[0], head[1] as usize);
        if dtype != DTYPE_F32 {
            return Err(TensorError::Checkpoint(format!("`{name}`: unknown dtype code {dtype}")));
        }
        let dims = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let payload = cur.take(count * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = ArrayD::from_shape_vec(IxDyn(&dims), data).expect("sized");
        store.insert(name, t)?;
    }
    Ok(store)
}

pub fn save<F: Real>(params: &ParamStore<F>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ParamStore<f32>> {
    read_params(BufReader::new(File::open(path)?))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(TensorError::Checkpoint(format!("truncated at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_bytes() {
        let mut s = ParamStore::<f32>::new();
        s.insert("a", ArrayD::from_shape_vec(IxDyn(&[2]), vec![1.0, -0.5]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_params(&s, &mut buf).unwrap();
        let mut expected = b"MLAB1\x01".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.push(b'a');
        expected.extend([0u8, 1u8]);
        expected.extend(2u32.to_le_bytes());
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-0.5f32).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_params(&b"MLAB2\x01"[..]).is_err());
        let mut s = ParamStore::<f32>::new();
        s.insert("w", ArrayD::zeros(IxDyn(&[3, 3]))).unwrap();
        let mut buf = Vec::new();
        write_params(&s, &mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(matches!(read_params(&buf[..]), Err(TensorError::Checkpoint(_))));
    }

    #[test]
    fn empty_store_round_trips() {
        let mut buf = Vec::new();
        write_params(&ParamStore::<f32>::new(), &mut buf).unwrap();
        assert_eq!(buf, b"MLAB1\x01");
        assert!(read_params(&buf[..]).unwrap().is_empty());
    }
}
