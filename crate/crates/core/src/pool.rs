//! 3D max pooling with recorded argmax locations, and global average pooling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::conv::output_extent;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Pooling window, stride and padding in `(depth, height, width)` order.
/// Padded positions never win the maximum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window: [usize; 3],
    pub stride: [usize; 3],
    #[serde(default)]
    pub padding: [usize; 3],
}

impl Default for PoolSpec {
    /// 2x2x2 window, stride 2, no padding.
    fn default() -> Self {
        Self::new(2, 2)
    }
}

impl PoolSpec {
    pub fn new(window: usize, stride: usize) -> Self {
        Self {
            window: [window; 3],
            stride: [stride; 3],
            padding: [0; 3],
        }
    }

    /// Stride-1 pooling that preserves extents (odd window).
    pub fn same(window: usize) -> Self {
        Self {
            window: [window; 3],
            stride: [1; 3],
            padding: [window / 2; 3],
        }
    }

    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        if self.window.contains(&0) || self.stride.contains(&0) {
            return Err(Error::Config(format!("pool window/stride must be >= 1, got {self:?}")));
        }
        let mut out = [0; 3];
        for a in 0..3 {
            if self.padding[a] >= self.window[a] {
                return Err(Error::Config(format!(
                    "pool padding {:?} must be smaller than window {:?}",
                    self.padding, self.window
                )));
            }
            out[a] = output_extent(input[a], self.window[a], self.stride[a], self.padding[a])
                .ok_or_else(|| Error::shape("maxpool3d window", &input, &self.window))?;
        }
        Ok(out)
    }
}

/// For every output voxel, the flat input index (channel included) of the
/// maximum that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndexMap {
    indices: Vec<usize>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
}

impl PoolIndexMap {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }
}

pub fn maxpool3d_forward(input: &Tensor, spec: &PoolSpec) -> Result<(Tensor, PoolIndexMap)> {
    let (c_n, [d, h, w]) = input.volume_dims("maxpool3d input")?;
    let [od_n, oh_n, ow_n] = spec.output_extents([d, h, w])?;
    let [kd_n, kh_n, kw_n] = spec.window;
    let [sd, sh, sw] = spec.stride;
    let [pd, ph, pw] = spec.padding;
    let x = input.data();
    let in_vol = d * h * w;
    let out_len = c_n * od_n * oh_n * ow_n;
    let mut out = Vec::with_capacity(out_len);
    let mut indices = Vec::with_capacity(out_len);

    for c in 0..c_n {
        let base = c * in_vol;
        for od in 0..od_n {
            let d0 = (od * sd) as isize - pd as isize;
            for oh in 0..oh_n {
                let h0 = (oh * sh) as isize - ph as isize;
                for ow in 0..ow_n {
                    let w0 = (ow * sw) as isize - pw as isize;
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    // Ascending (d, h, w) visits ascending flat indices, so the
                    // strict comparison keeps the lowest index among ties.
                    for kd in 0..kd_n {
                        let id = d0 + kd as isize;
                        if id < 0 || id >= d as isize {
                            continue;
                        }
                        for kh in 0..kh_n {
                            let ih = h0 + kh as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let row = base + (id as usize * h + ih as usize) * w;
                            for kw in 0..kw_n {
                                let iw = w0 + kw as isize;
                                if iw < 0 || iw >= w as isize {
                                    continue;
                                }
                                let idx = row + iw as usize;
                                if x[idx] > best || best_idx == usize::MAX {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    out.push(best);
                    indices.push(best_idx);
                }
            }
        }
    }
    let output_shape = vec![c_n, od_n, oh_n, ow_n];
    Ok((
        Tensor::from_parts(output_shape.clone(), out),
        PoolIndexMap {
            indices,
            input_shape: input.shape().to_vec(),
            output_shape,
        },
    ))
}

/// Routes each upstream gradient to its recorded argmax, accumulating where
/// windows overlap.
pub fn maxpool3d_backward(
    grad_output: &Tensor,
    index_map: &PoolIndexMap,
    input_shape: &[usize],
) -> Result<Tensor> {
    if grad_output.shape() != index_map.output_shape.as_slice() {
        return Err(Error::shape(
            "maxpool3d grad_output",
            grad_output.shape(),
            &index_map.output_shape,
        ));
    }
    if input_shape != index_map.input_shape.as_slice() {
        return Err(Error::shape("maxpool3d input_shape", input_shape, &index_map.input_shape));
    }
    let len: usize = input_shape.iter().product();
    let mut gx = vec![0.0; len];
    for (&idx, &g) in index_map.indices.iter().zip(grad_output.data()) {
        if idx >= len {
            return Err(Error::Internal(format!(
                "pool index {idx} outside input of {len} voxels"
            )));
        }
        gx[idx] += g;
    }
    Ok(Tensor::from_parts(input_shape.to_vec(), gx))
}

/// Mean over the spatial axes: `[C, D, H, W] -> [C]`.
pub fn global_avg_pool_forward(input: &Tensor) -> Result<Tensor> {
    let (c_n, [d, h, w]) = input.volume_dims("global_avg_pool input")?;
    let vol = d * h * w;
    let out = input
        .data()
        .chunks_exact(vol)
        .map(|ch| ch.iter().sum::<f64>() / vol as f64)
        .collect();
    Ok(Tensor::from_parts(vec![c_n], out))
}

pub fn global_avg_pool_backward(grad_output: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    if input_shape.len() != 4 || grad_output.shape() != [input_shape[0]] {
        return Err(Error::shape("global_avg_pool grad_output", grad_output.shape(), input_shape));
    }
    let vol: usize = input_shape[1..].iter().product();
    let mut gx = Vec::with_capacity(input_shape[0] * vol);
    for &g in grad_output.data() {
        gx.extend(core::iter::repeat_n(g / vol as f64, vol));
    }
    Ok(Tensor::from_parts(input_shape.to_vec(), gx))
}

/// Checks that every recorded index lies inside its output voxel's window.
pub fn index_map_is_consistent(map: &PoolIndexMap, spec: &PoolSpec) -> bool {
    let [c_n, d, h, w] = match map.input_shape[..] {
        [c, d, h, w] => [c, d, h, w],
        _ => return false,
    };
    let [_, od_n, oh_n, ow_n] = match map.output_shape[..] {
        [c, a, b, e] => [c, a, b, e],
        _ => return false,
    };
    let mut k = 0;
    for c in 0..c_n {
        for od in 0..od_n {
            for oh in 0..oh_n {
                for ow in 0..ow_n {
                    let idx = map.indices[k];
                    k += 1;
                    let (ci, rem) = (idx / (d * h * w), idx % (d * h * w));
                    let (id, ih, iw) = (rem / (h * w), (rem / w) % h, rem % w);
                    let inside = |i: usize, o: usize, a: usize| {
                        let start = (o * spec.stride[a]) as isize - spec.padding[a] as isize;
                        let i = i as isize;
                        i >= start && i < start + spec.window[a] as isize
                    };
                    if ci != c || !inside(id, od, 0) || !inside(ih, oh, 1) || !inside(iw, ow, 2) {
                        return false;
                    }
                }
            }
        }
    }
    true
}
