//! `MVT1` tensor files: magic `MVT1`, little-endian `u32` rank, `rank` ×
//! `u32` extents, then the `f32` little-endian payload in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Scalar, Tensor, TensorError};

pub const MVT1_MAGIC: &[u8; 4] = b"MVT1";

pub fn write_mvt1<T: Scalar, W: Write>(tensor: &Tensor<T>, mut w: W) -> Result<(), TensorError> {
    w.write_all(MVT1_MAGIC)?;
    w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
    for &extent in tensor.shape() {
        let extent = u32::try_from(extent)
            .map_err(|_| TensorError::Format(format!("extent {extent} exceeds u32")))?;
        w.write_all(&extent.to_le_bytes())?;
    }
    for v in tensor.data() {
        w.write_all(&(v.f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_mvt1<T: Scalar, R: Read>(mut r: R) -> Result<Tensor<T>, TensorError> {
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    if &word != MVT1_MAGIC {
        return Err(TensorError::Format(format!("bad magic {word:?}")));
    }
    r.read_exact(&mut word)?;
    let rank = u32::from_le_bytes(word) as usize;
    if rank > 16 {
        return Err(TensorError::Format(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut word)?;
        shape.push(u32::from_le_bytes(word) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut payload = vec![0u8; numel * 4];
    r.read_exact(&mut payload)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(TensorError::Format(format!("{} trailing bytes", rest.len())));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
        .collect();
    Tensor::new(&shape, data)
}

pub fn write_mvt1_file<T: Scalar>(tensor: &Tensor<T>, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mvt1(tensor, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_mvt1_file<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>, TensorError> {
    read_mvt1(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::<f32>::new(&[2, 1], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_mvt1(&t, &mut buf).unwrap();
        let mut expected = b"MVT1".to_vec();
        expected.extend(2u32.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-2.5f32).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_mvt1::<f32, _>(&b"MVT2\0\0\0\0"[..]).is_err());
        let t = Tensor::<f32>::zeros(&[3]);
        let mut buf = Vec::new();
        write_mvt1(&t, &mut buf).unwrap();
        buf.pop();
        assert!(read_mvt1::<f32, _>(&buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(shape in proptest::collection::vec(1usize..5, 0..4), seed in any::<u64>()) {
            let numel: usize = shape.iter().product();
            let data: Vec<f32> = (0..numel).map(|i| ((seed as f64 + i as f64) * 0.37).sin() as f32).collect();
            let t = Tensor::new(&shape, data).unwrap();
            let mut buf = Vec::new();
            write_mvt1(&t, &mut buf).unwrap();
            let back: Tensor<f32> = read_mvt1(&buf[..]).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
