//! Dense row-major tensors of rank 1 to 4 and the `RVFT` binary container.
//!
//! Values are held as `f64` in memory. Anything persisted goes through the
//! `RVFT` format, which stores 32-bit floats; parameters are kept on the `f32`
//! grid (see [`Tensor::round_to_f32`]) so that save/load is lossless.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAX_RANK: usize = 4;

const RVFT_MAGIC: &[u8; 4] = b"RVFT";
const RVFT_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::param(
            "shape",
            format!("rank must be in 1..={MAX_RANK}, got {shape:?}"),
        ));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::param(
            "shape",
            format!("extents must be positive, got {shape:?}"),
        ));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::dim("Tensor::new", shape, &[data.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Panics on an invalid shape; meant for shapes known to be valid.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = check_shape(shape).expect("valid shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = check_shape(shape).expect("valid shape");
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(C, H, W)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::dim("chw", &self.shape, &[0, 0, 0])),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n = check_shape(shape)?;
        if n != self.numel() {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn at3(&self, c: usize, y: usize, x: usize) -> f64 {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::dim("zip_map", &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.numel() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp01(&self) -> Tensor {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Snaps every value onto the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    /// Channel `c` of a rank-3 tensor as a `1×H×W` tensor.
    pub fn channel(&self, c: usize) -> Result<Tensor> {
        let (ch, h, w) = self.chw()?;
        if c >= ch {
            return Err(Error::param("channel", format!("{c} out of {ch}")));
        }
        let hw = h * w;
        Tensor::new(&[1, h, w], self.data[c * hw..(c + 1) * hw].to_vec())
    }

    pub fn write_rvft<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(RVFT_MAGIC)?;
        out.write_all(&[RVFT_VERSION, self.rank() as u8])?;
        for &d in &self.shape {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &self.data {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_rvft_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(6 + 4 * self.rank() + 4 * self.numel());
        self.write_rvft(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_rvft<R: Read>(mut input: R) -> Result<Tensor> {
        let fmt = |e: std::io::Error| Error::Format(format!("truncated RVFT stream: {e}"));
        let mut head = [0u8; 6];
        input.read_exact(&mut head).map_err(fmt)?;
        if &head[..4] != RVFT_MAGIC {
            return Err(Error::Format(format!("bad RVFT magic {:?}", &head[..4])));
        }
        if head[4] != RVFT_VERSION {
            return Err(Error::Format(format!(
                "unsupported RVFT version {}",
                head[4]
            )));
        }
        let rank = head[5] as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut word = [0u8; 4];
        for _ in 0..rank {
            input.read_exact(&mut word).map_err(fmt)?;
            shape.push(u32::from_le_bytes(word) as usize);
        }
        let n = check_shape(&shape).map_err(|e| Error::Format(e.to_string()))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut word).map_err(fmt)?;
            data.push(f32::from_le_bytes(word) as f64);
        }
        Tensor::new(&shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(&[2, 0], vec![]).is_err());
        assert!(Tensor::new(&[1, 1, 1, 1, 1], vec![0.0]).is_err());
        assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn rvft_layout_is_bit_exact() {
        let t = Tensor::new(&[2, 1], vec![1.0, -2.5]).unwrap();
        let bytes = t.to_rvft_bytes();
        let mut expected = b"RVFT".to_vec();
        expected.extend([1u8, 2]);
        expected.extend(2u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-2.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(Tensor::read_rvft(&bytes[..]).unwrap(), t);
    }

    #[test]
    fn rvft_rejects_garbage() {
        assert!(Tensor::read_rvft(&b"NOPE\x01\x01"[..]).is_err());
        let mut bytes = Tensor::zeros(&[3]).to_rvft_bytes();
        bytes.truncate(bytes.len() - 1);
        assert!(Tensor::read_rvft(&bytes[..]).is_err());
    }
}
