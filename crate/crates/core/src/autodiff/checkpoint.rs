//! Binary container of named tensors.
//!
//! Layout (all integers little-endian):
//! `"LSXC"`, version `u32`, count `u32`, then per tensor: name length `u32`,
//! UTF-8 name, rank `u32`, extents `u64` each, precision tag `u8`
//! (4 = f32, 8 = f64), raw little-endian values.

use std::io::{Read, Write};

use super::{ParamSet, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LSXC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn tag(self) -> u8 {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("unknown precision tag {0}")]
    Precision(u8),
    #[error("tensor name is not UTF-8")]
    Name,
    #[error("malformed tensor `{0}`")]
    Malformed(String),
}

/// Writes tensors in name order, so equal sets produce identical bytes.
pub fn write_checkpoint<W: Write>(mut w: W, params: &ParamSet, precision: Precision) -> Result<(), CheckpointError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&[precision.tag()])?;
        let mut buf = Vec::with_capacity(t.len() * 8);
        for &x in t.data() {
            match precision {
                Precision::F32 => buf.extend_from_slice(&(x as f32).to_le_bytes()),
                Precision::F64 => buf.extend_from_slice(&x.to_le_bytes()),
            }
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamSet, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = read_u32(&mut r)?;
    let mut out = ParamSet::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::Name)?;
        let rank = read_u32(&mut r)?;
        let shape = (0..rank).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let n: usize = shape.iter().product();
        let data = match tag[0] {
            4 => {
                let mut buf = vec![0u8; n * 4];
                r.read_exact(&mut buf)?;
                buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()
            }
            8 => {
                let mut buf = vec![0u8; n * 8];
                r.read_exact(&mut buf)?;
                buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
            }
            other => return Err(CheckpointError::Precision(other)),
        };
        let t = Tensor::new(shape, data).map_err(|_| CheckpointError::Malformed(name.clone()))?;
        out.insert(name, t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("enc.w", Tensor::matrix(2, 3, vec![1.0, -2.5, 3.25, 0.0, 1e-9, 7.0]).unwrap());
        p.insert("bias", Tensor::vector(vec![0.5, -0.5]));
        p.insert("s", Tensor::scalar(42.0));
        p
    }

    #[test]
    fn round_trips_f64_exactly() {
        let p = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, Precision::F64).unwrap();
        assert_eq!(&buf[..4], b"LSXC");
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), p);
    }

    #[test]
    fn header_layout() {
        let mut p = ParamSet::new();
        p.insert("ab", Tensor::vector(vec![1.0]));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, Precision::F32).unwrap();
        let mut expected = b"LSXC".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(b"ab");
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u64.to_le_bytes());
        expected.push(4);
        expected.extend(1.0f32.to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn f32_storage_rounds_values() {
        let p = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, Precision::F32).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        let w = back.get("enc.w").unwrap();
        assert_eq!(w.data()[1], -2.5);
        assert_eq!(w.data()[4], 1e-9f32 as f64);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(read_checkpoint(&b"NOPE\x01\0\0\0"[..]), Err(CheckpointError::BadMagic)));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &sample(), Precision::F64).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_checkpoint(&buf[..]), Err(CheckpointError::Io(_))));
    }
}
