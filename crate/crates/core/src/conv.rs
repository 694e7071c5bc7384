//! 3D convolution (cross-correlation, no kernel flip) with symmetric zero
//! padding, and its exact adjoint.

use alloc::format;
use alloc::vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Kernel extents, strides and per-axis symmetric zero padding, in
/// `(depth, height, width)` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Default for ConvSpec {
    /// 3x3x3 kernel, stride 1, "same" padding.
    fn default() -> Self {
        Self::same(3)
    }
}

impl ConvSpec {
    /// Cubic odd kernel with stride 1 and padding that preserves extents.
    pub fn same(k: usize) -> Self {
        Self {
            kernel: [k; 3],
            stride: [1; 3],
            padding: [k / 2; 3],
        }
    }

    /// Cubic kernel, stride 1, no padding.
    pub fn valid(k: usize) -> Self {
        Self {
            kernel: [k; 3],
            stride: [1; 3],
            padding: [0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(Error::Config(format!(
                "kernel and stride extents must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        self.validate()?;
        let mut out = [0; 3];
        for a in 0..3 {
            out[a] = output_extent(input[a], self.kernel[a], self.stride[a], self.padding[a])
                .ok_or_else(|| {
                    Error::Config(format!(
                        "padded input {input:?} smaller than kernel {:?}",
                        self.kernel
                    ))
                })?;
        }
        Ok(out)
    }
}

/// `floor((input + 2 * padding - kernel) / stride) + 1`, or `None` when the
/// padded input is smaller than the kernel.
pub fn output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output positions `o` in `[lo, hi)` whose source index `o * stride + k - pad`
/// falls inside `[0, in_len)`.
pub(crate) fn valid_range(
    out_len: usize,
    in_len: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    if in_len + pad < k + 1 {
        return (0, 0);
    }
    let hi = ((in_len - 1 + pad - k) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

struct Geometry {
    c_in: usize,
    c_out: usize,
    input: [usize; 3],
    output: [usize; 3],
}

fn check_shapes(input: &Tensor, kernels: &Tensor, spec: &ConvSpec) -> Result<Geometry> {
    let (c_in, extents) = input.volume_dims("conv3d input")?;
    let (c_out, k_in, kext) = match kernels.shape()[..] {
        [co, ci, kd, kh, kw] => (co, ci, [kd, kh, kw]),
        _ => return Err(Error::shape("conv3d kernels", kernels.shape(), &[0, c_in, 0, 0, 0])),
    };
    if k_in != c_in {
        return Err(Error::shape("conv3d channels", input.shape(), kernels.shape()));
    }
    if kext != spec.kernel {
        return Err(Error::shape("conv3d kernel extent", kernels.shape(), &spec.kernel));
    }
    let output = spec.output_extents(extents)?;
    Ok(Geometry {
        c_in,
        c_out,
        input: extents,
        output,
    })
}

/// Gathers, for output plane `od`, every input value each kernel tap reads:
/// row `ci * k_vol + tap`, column `oh * ow_n + ow`. Padding reads as zero.
fn plane_columns(x: &[f64], g: &Geometry, spec: &ConvSpec, od: usize, col: &mut [f64]) {
    let [d, h, w] = g.input;
    let [_, oh_n, ow_n] = g.output;
    let [kd_n, kh_n, kw_n] = spec.kernel;
    let [sd, sh, sw] = spec.stride;
    let [pd, ph, pw] = spec.padding;
    let plane = oh_n * ow_n;
    let in_vol = d * h * w;
    col.fill(0.0);
    let mut r = 0;
    for ci in 0..g.c_in {
        let in_c = &x[ci * in_vol..(ci + 1) * in_vol];
        for kd in 0..kd_n {
            let id = (od * sd + kd) as isize - pd as isize;
            let d_ok = id >= 0 && (id as usize) < d;
            for kh in 0..kh_n {
                let (h_lo, h_hi) = valid_range(oh_n, h, kh, sh, ph);
                for kw in 0..kw_n {
                    if d_ok {
                        let (w_lo, w_hi) = valid_range(ow_n, w, kw, sw, pw);
                        let row = &mut col[r * plane..(r + 1) * plane];
                        for oh in h_lo..h_hi {
                            let ih = oh * sh + kh - ph;
                            let irow = &in_c[(id as usize * h + ih) * w..][..w];
                            let orow = &mut row[oh * ow_n..(oh + 1) * ow_n];
                            if sw == 1 {
                                let start = w_lo + kw - pw;
                                orow[w_lo..w_hi].copy_from_slice(&irow[start..start + (w_hi - w_lo)]);
                            } else {
                                for ow in w_lo..w_hi {
                                    orow[ow] = irow[ow * sw + kw - pw];
                                }
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

/// Inverse of `plane_columns`: adds each column entry back onto the input
/// position it was read from.
fn scatter_columns(col: &[f64], g: &Geometry, spec: &ConvSpec, od: usize, gx: &mut [f64]) {
    let [d, h, w] = g.input;
    let [_, oh_n, ow_n] = g.output;
    let [kd_n, kh_n, kw_n] = spec.kernel;
    let [sd, sh, sw] = spec.stride;
    let [pd, ph, pw] = spec.padding;
    let plane = oh_n * ow_n;
    let in_vol = d * h * w;
    let mut r = 0;
    for ci in 0..g.c_in {
        let gx_c = &mut gx[ci * in_vol..(ci + 1) * in_vol];
        for kd in 0..kd_n {
            let id = (od * sd + kd) as isize - pd as isize;
            let d_ok = id >= 0 && (id as usize) < d;
            for kh in 0..kh_n {
                let (h_lo, h_hi) = valid_range(oh_n, h, kh, sh, ph);
                for kw in 0..kw_n {
                    if d_ok {
                        let (w_lo, w_hi) = valid_range(ow_n, w, kw, sw, pw);
                        let row = &col[r * plane..(r + 1) * plane];
                        for oh in h_lo..h_hi {
                            let ih = oh * sh + kh - ph;
                            let grow = &mut gx_c[(id as usize * h + ih) * w..][..w];
                            let crow = &row[oh * ow_n..(oh + 1) * ow_n];
                            if sw == 1 {
                                let start = w_lo + kw - pw;
                                for (gv, cv) in grow[start..start + (w_hi - w_lo)].iter_mut().zip(&crow[w_lo..w_hi]) {
                                    *gv += cv;
                                }
                            } else {
                                for ow in w_lo..w_hi {
                                    grow[ow * sw + kw - pw] += crow[ow];
                                }
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

/// Output tile edge of the forward kernel.
const TILE: usize = 4;

/// `y += a * x`
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Dot product with four interleaved partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Convolves `input [C_in, D, H, W]` with `kernels [C_out, C_in, kd, kh, kw]`
/// and adds `bias [C_out]`.
pub fn conv3d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<Tensor> {
    let g = check_shapes(input, kernels, spec)?;
    if bias.shape() != [g.c_out] {
        return Err(Error::shape("conv3d bias", bias.shape(), &[g.c_out]));
    }
    let [od_n, oh_n, ow_n] = g.output;
    let plane = oh_n * ow_n;
    let out_vol = od_n * plane;
    let rows = g.c_in * spec.kernel.iter().product::<usize>();
    let wts = kernels.data();

    // Weights transposed to `[rows, c_out]` so a tile of output channels
    // reads contiguous values.
    let mut wt = vec![0.0; rows * g.c_out];
    for co in 0..g.c_out {
        for r in 0..rows {
            wt[r * g.c_out + co] = wts[co * rows + r];
        }
    }
    let mut out = vec![0.0; g.c_out * out_vol];
    let mut col = vec![0.0; rows * plane];
    for od in 0..od_n {
        plane_columns(input.data(), &g, spec, od, &mut col);
        let mut co = 0;
        while co < g.c_out {
            let tc = (g.c_out - co).min(TILE);
            let mut p = 0;
            while p < plane {
                let tp = (plane - p).min(TILE);
                let mut acc = [[0.0f64; TILE]; TILE];
                for (i, a) in acc.iter_mut().enumerate().take(tc) {
                    *a = [bias.data()[co + i]; TILE];
                }
                if tc == TILE && tp == TILE {
                    for r in 0..rows {
                        let c: &[f64; TILE] = col[r * plane + p..][..TILE].try_into().unwrap();
                        let w: &[f64; TILE] = wt[r * g.c_out + co..][..TILE].try_into().unwrap();
                        for i in 0..TILE {
                            for j in 0..TILE {
                                acc[i][j] += w[i] * c[j];
                            }
                        }
                    }
                } else {
                    for r in 0..rows {
                        for i in 0..tc {
                            let w = wt[r * g.c_out + co + i];
                            for j in 0..tp {
                                acc[i][j] += w * col[r * plane + p + j];
                            }
                        }
                    }
                }
                for (i, a) in acc.iter().enumerate().take(tc) {
                    out[(co + i) * out_vol + od * plane + p..][..tp].copy_from_slice(&a[..tp]);
                }
                p += tp;
            }
            co += tc;
        }
    }
    Ok(Tensor::from_parts(vec![g.c_out, od_n, oh_n, ow_n], out))
}

/// Gradients of a scalar loss with respect to a convolution's operands.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

pub fn conv3d_backward(
    input: &Tensor,
    kernels: &Tensor,
    spec: &ConvSpec,
    grad_output: &Tensor,
) -> Result<ConvGrads> {
    let g = check_shapes(input, kernels, spec)?;
    let expected = [g.c_out, g.output[0], g.output[1], g.output[2]];
    if grad_output.shape() != expected {
        return Err(Error::shape("conv3d grad_output", grad_output.shape(), &expected));
    }
    let [od_n, oh_n, ow_n] = g.output;
    let plane = oh_n * ow_n;
    let out_vol = od_n * plane;
    let rows = g.c_in * spec.kernel.iter().product::<usize>();
    let wts = kernels.data();
    let gy = grad_output.data();

    let mut gx = vec![0.0; input.len()];
    let mut gk = vec![0.0; kernels.len()];
    let gb: alloc::vec::Vec<f64> = (0..g.c_out).map(|co| gy[co * out_vol..(co + 1) * out_vol].iter().sum()).collect();
    let mut col = vec![0.0; rows * plane];
    let mut dcol = vec![0.0; rows * plane];

    for od in 0..od_n {
        plane_columns(input.data(), &g, spec, od, &mut col);
        dcol.fill(0.0);
        for co in 0..g.c_out {
            let grow = &gy[co * out_vol + od * plane..][..plane];
            let gk_c = &mut gk[co * rows..(co + 1) * rows];
            for (r, (gkv, &wgt)) in gk_c.iter_mut().zip(&wts[co * rows..(co + 1) * rows]).enumerate() {
                *gkv += dot(grow, &col[r * plane..(r + 1) * plane]);
                axpy(&mut dcol[r * plane..(r + 1) * plane], wgt, grow);
            }
        }
        scatter_columns(&dcol, &g, spec, od, &mut gx);
    }

    Ok(ConvGrads {
        input: Tensor::from_parts(input.shape().to_vec(), gx),
        kernels: Tensor::from_parts(kernels.shape().to_vec(), gk),
        bias: Tensor::from_parts(vec![g.c_out], gb),
    })
}
