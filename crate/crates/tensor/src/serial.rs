//! GFT1 tensor file format.
//!
//! Layout: magic bytes "GFT1", u32 rank, rank x u64 little-endian extents,
//! then the f32 little-endian row-major payload. Used by checkpoints and
//! golden files.

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::shape::numel;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GFT1";

pub fn write_gft1<W: Write>(w: &mut W, shape: &[usize], data: &[f32]) -> Result<()> {
    if numel(shape) != data.len() {
        return Err(TensorError::Serial(format!(
            "shape {:?} does not match {} elements",
            shape,
            data.len()
        )));
    }
    let io = |e: std::io::Error| TensorError::Serial(e.to_string());
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(shape.len() as u32).to_le_bytes()).map_err(io)?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

pub fn read_gft1<R: Read>(r: &mut R) -> Result<(Vec<usize>, Vec<f32>)> {
    let io = |e: std::io::Error| TensorError::Serial(e.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(TensorError::Serial(format!(
            "bad magic {:?}, expected GFT1",
            magic
        )));
    }
    let mut rank_buf = [0u8; 4];
    r.read_exact(&mut rank_buf).map_err(io)?;
    let rank = u32::from_le_bytes(rank_buf) as usize;
    if rank > 16 {
        return Err(TensorError::Serial(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut ext = [0u8; 8];
        r.read_exact(&mut ext).map_err(io)?;
        shape.push(u64::from_le_bytes(ext) as usize);
    }
    let n = numel(&shape);
    let mut payload = vec![0u8; n * 4];
    r.read_exact(&mut payload).map_err(io)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((shape, data))
}

pub fn save_tensor(path: &std::path::Path, t: &Tensor) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| TensorError::Serial(e.to_string()))?;
    write_gft1(&mut f, t.shape(), t.data())
}

pub fn load_tensor(path: &std::path::Path) -> Result<Tensor> {
    let mut f = std::fs::File::open(path).map_err(|e| TensorError::Serial(e.to_string()))?;
    let (shape, data) = read_gft1(&mut f)?;
    Tensor::from_vec(&shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_header_bytes() {
        let mut buf = Vec::new();
        write_gft1(&mut buf, &[2, 3], &[0.0; 6]).unwrap();
        // "GFT1" + rank 2 (u32 LE) + extents 2, 3 (u64 LE each)
        assert_eq!(&buf[0..4], b"GFT1");
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &3u64.to_le_bytes());
        assert_eq!(buf.len(), 24 + 6 * 4);
    }

    #[test]
    fn roundtrip() {
        let mut buf = Vec::new();
        let data = vec![1.5, -2.25, 0.0, f32::MIN_POSITIVE];
        write_gft1(&mut buf, &[4], &data).unwrap();
        let (shape, back) = read_gft1(&mut buf.as_slice()).unwrap();
        assert_eq!(shape, vec![4]);
        assert_eq!(back, data);
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = b"NOPE\x00\x00\x00\x00".to_vec();
        assert!(read_gft1(&mut buf.as_slice()).is_err());
    }
}
