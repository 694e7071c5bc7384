//! Dense row-major `f64` tensors and the elementwise / matrix kernels the
//! layers are built from.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense N-dimensional array of `f64` in row-major order.
///
/// Volumes are stored as `[C, D, H, W]` with `W` varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from external data, rejecting zero extents, a length
    /// that disagrees with the shape, and non-finite values.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(Error::InvalidTensor(format!(
                "extents must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Internal constructor for data produced by this crate's own kernels.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() || shape.contains(&0) {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    /// Extents of a `[C, D, H, W]` volume tensor, or a shape error.
    pub fn volume_dims(&self, op: &'static str) -> Result<(usize, [usize; 3])> {
        match self.shape[..] {
            [c, d, h, w] => Ok((c, [d, h, w])),
            _ => Err(Error::shape(op, &self.shape, &[0, 0, 0, 0])),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add", &self.shape, &other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|v| v * s).collect())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Standard matrix product of `[m, k]` by `[k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = match self.shape[..] {
            [m, k] => (m, k),
            _ => return Err(Error::shape("matmul", &self.shape, &other.shape)),
        };
        let n = match other.shape[..] {
            [k2, n] if k2 == k => n,
            _ => return Err(Error::shape("matmul", &self.shape, &other.shape)),
        };
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let brow = &other.data[p * n..(p + 1) * n];
                for (o, b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor::from_parts(vec![m, n], out))
    }

    /// Concatenates tensors along axis 0; all trailing extents must agree.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidTensor("concat of zero tensors".into()))?;
        let tail = &first.shape[1..];
        let mut channels = 0;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for part in parts {
            if part.shape.len() != first.shape.len() || &part.shape[1..] != tail {
                return Err(Error::shape("concat_channels", &first.shape, &part.shape));
            }
            channels += part.shape[0];
            data.extend_from_slice(&part.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = channels;
        Ok(Tensor::from_parts(shape, data))
    }

    /// Inverse of [`Tensor::concat_channels`]: splits axis 0 into blocks of
    /// the given sizes.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Tensor>> {
        let total: usize = sizes.iter().sum();
        if total != self.shape[0] || sizes.contains(&0) {
            let mut want = self.shape.clone();
            want[0] = total;
            return Err(Error::shape("split_channels", &self.shape, &want));
        }
        let stride: usize = self.shape[1..].iter().product();
        let mut out = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &c in sizes {
            let mut shape = self.shape.clone();
            shape[0] = c;
            out.push(Tensor::from_parts(
                shape,
                self.data[start * stride..(start + c) * stride].to_vec(),
            ));
            start += c;
        }
        Ok(out)
    }

    /// Channel `c` of a tensor as a one-channel tensor.
    pub fn channel(&self, c: usize) -> Result<Tensor> {
        if c >= self.shape[0] {
            return Err(Error::shape("channel", &self.shape, &[c + 1]));
        }
        let stride: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Ok(Tensor::from_parts(
            shape,
            self.data[c * stride..(c + 1) * stride].to_vec(),
        ))
    }
}
