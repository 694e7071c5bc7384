//! Volume downsampling. Extents are `[d, h, w]` with `w` varying fastest.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    #[default]
    Trilinear,
    /// Mean over 2x2x2 blocks; output extents are `ceil(n / 2)` and the
    /// target is ignored.
    Box2,
}

pub fn downsample(data: &[f64], src: [usize; 3], dst: [usize; 3], method: ResampleMethod) -> Result<(Vec<f64>, [usize; 3])> {
    match method {
        ResampleMethod::Trilinear => Ok((resample_trilinear(data, src, dst)?, dst)),
        ResampleMethod::Box2 => box_downsample2(data, src),
    }
}

/// Source coordinate sampled by target voxel `t` when `s` voxels map onto
/// `t_len`: centres are aligned, `x_s = (t + 1/2) s / t_len - 1/2`.
pub fn source_coordinate(t: usize, s: usize, t_len: usize) -> f64 {
    (t as f64 + 0.5) * s as f64 / t_len as f64 - 0.5
}

fn check(data: &[f64], src: [usize; 3]) -> Result<()> {
    if src.contains(&0) {
        return Err(Error::Config(format!("source extents {src:?} must be positive")));
    }
    if data.len() != src.iter().product::<usize>() {
        return Err(Error::shape("resample input", &[data.len()], &src));
    }
    Ok(())
}

/// Trilinear interpolation, applied as three separable linear passes.
/// Every output is a convex combination of inputs.
pub fn resample_trilinear(data: &[f64], src: [usize; 3], dst: [usize; 3]) -> Result<Vec<f64>> {
    check(data, src)?;
    if dst.contains(&0) || dst.iter().zip(&src).any(|(t, s)| t > s) {
        return Err(Error::Config(format!(
            "target extents {dst:?} must be positive and no larger than {src:?}"
        )));
    }
    let mut cur = data.to_vec();
    let mut shape = src;
    for axis in 0..3 {
        let (s_len, t_len) = (shape[axis], dst[axis]);
        if s_len == t_len {
            continue;
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let taps: Vec<(usize, usize, f64)> = (0..t_len)
            .map(|t| {
                let x = source_coordinate(t, s_len, t_len).clamp(0.0, (s_len - 1) as f64);
                let i0 = (libm::floor(x) as usize).min(s_len - 1);
                let i1 = (i0 + 1).min(s_len - 1);
                (i0, i1, x - i0 as f64)
            })
            .collect();
        let mut next = vec![0.0; outer * t_len * inner];
        for o in 0..outer {
            for (t, &(i0, i1, f)) in taps.iter().enumerate() {
                let a = &cur[(o * s_len + i0) * inner..][..inner];
                let b = &cur[(o * s_len + i1) * inner..][..inner];
                let out = &mut next[(o * t_len + t) * inner..][..inner];
                for ((y, &va), &vb) in out.iter_mut().zip(a).zip(b) {
                    *y = (1.0 - f) * va + f * vb;
                }
            }
        }
        cur = next;
        shape[axis] = t_len;
    }
    Ok(cur)
}

/// Averages 2x2x2 blocks; a trailing odd slice averages what it has.
pub fn box_downsample2(data: &[f64], src: [usize; 3]) -> Result<(Vec<f64>, [usize; 3])> {
    check(data, src)?;
    let [d, h, w] = src;
    let dst = [d.div_ceil(2), h.div_ceil(2), w.div_ceil(2)];
    let mut out = Vec::with_capacity(dst.iter().product());
    for od in 0..dst[0] {
        for oh in 0..dst[1] {
            for ow in 0..dst[2] {
                let (mut sum, mut count) = (0.0, 0usize);
                for id in 2 * od..(2 * od + 2).min(d) {
                    for ih in 2 * oh..(2 * oh + 2).min(h) {
                        for iw in 2 * ow..(2 * ow + 2).min(w) {
                            sum += data[(id * h + ih) * w + iw];
                            count += 1;
                        }
                    }
                }
                out.push(sum / count as f64);
            }
        }
    }
    Ok((out, dst))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let src = [7, 5, 9];
        let data = vec![0.37; 7 * 5 * 9];
        let out = resample_trilinear(&data, src, [3, 2, 4]).unwrap();
        assert_eq!(out.len(), 24);
        assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn box_extents() {
        let (_, dst) = box_downsample2(&vec![0.0; 121 * 145 * 121], [121, 145, 121]).unwrap();
        assert_eq!(dst, [61, 73, 61]);
    }

    #[test]
    fn rejects_upsampling() {
        assert!(matches!(
            resample_trilinear(&[0.0; 8], [2, 2, 2], [3, 2, 2]),
            Err(Error::Config(_))
        ));
        assert!(resample_trilinear(&[0.0; 8], [2, 2, 2], [0, 2, 2]).is_err());
    }
}
