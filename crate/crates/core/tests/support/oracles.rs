//! Deliberately naive reference implementations.

/// Direct 3D cross-correlation over explicit zero padding.
/// `x` is `[c, d, h, w]`, `k` is `[o, c, kd, kh, kw]`.
#[allow(clippy::too_many_arguments)]
pub fn conv3d(
    x: &[f64],
    xs: [usize; 4],
    k: &[f64],
    ks: [usize; 5],
    bias: &[f64],
    stride: [usize; 3],
    pad: [usize; 3],
) -> (Vec<f64>, [usize; 4]) {
    let [c_n, d, h, w] = xs;
    let [o_n, _, kd, kh, kw] = ks;
    let od = (d + 2 * pad[0] - kd) / stride[0] + 1;
    let oh = (h + 2 * pad[1] - kh) / stride[1] + 1;
    let ow = (w + 2 * pad[2] - kw) / stride[2] + 1;
    let mut out = vec![0.0; o_n * od * oh * ow];
    for o in 0..o_n {
        for z in 0..od {
            for y in 0..oh {
                for v in 0..ow {
                    let mut s = bias[o];
                    for c in 0..c_n {
                        for a in 0..kd {
                            for b in 0..kh {
                                for e in 0..kw {
                                    let iz = (z * stride[0] + a) as isize - pad[0] as isize;
                                    let iy = (y * stride[1] + b) as isize - pad[1] as isize;
                                    let ix = (v * stride[2] + e) as isize - pad[2] as isize;
                                    if iz < 0 || iy < 0 || ix < 0 {
                                        continue;
                                    }
                                    let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                    if iz >= d || iy >= h || ix >= w {
                                        continue;
                                    }
                                    s += x[((c * d + iz) * h + iy) * w + ix]
                                        * k[(((o * c_n + c) * kd + a) * kh + b) * kw + e];
                                }
                            }
                        }
                    }
                    out[((o * od + z) * oh + y) * ow + v] = s;
                }
            }
        }
    }
    (out, [o_n, od, oh, ow])
}

/// Max over each window ignoring padded positions; ties resolve to the
/// smallest flat input index.
pub fn maxpool3d(
    x: &[f64],
    xs: [usize; 4],
    window: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
) -> (Vec<f64>, Vec<usize>, [usize; 4]) {
    let [c_n, d, h, w] = xs;
    let ext = |n: usize, a: usize| (n + 2 * pad[a] - window[a]) / stride[a] + 1;
    let (od, oh, ow) = (ext(d, 0), ext(h, 1), ext(w, 2));
    let mut vals = Vec::new();
    let mut idx = Vec::new();
    for c in 0..c_n {
        for z in 0..od {
            for y in 0..oh {
                for v in 0..ow {
                    let mut cands = Vec::new();
                    for a in 0..window[0] {
                        for b in 0..window[1] {
                            for e in 0..window[2] {
                                let iz = (z * stride[0] + a) as isize - pad[0] as isize;
                                let iy = (y * stride[1] + b) as isize - pad[1] as isize;
                                let ix = (v * stride[2] + e) as isize - pad[2] as isize;
                                if iz < 0 || iy < 0 || ix < 0 || iz >= d as isize || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                cands.push(((c * d + iz as usize) * h + iy as usize) * w + ix as usize);
                            }
                        }
                    }
                    let best = cands.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max);
                    let at = *cands.iter().filter(|&&i| x[i] == best).min().unwrap();
                    vals.push(best);
                    idx.push(at);
                }
            }
        }
    }
    (vals, idx, [c_n, od, oh, ow])
}

/// Counts every (positive, negative) pair: 2 when ranked right, 1 on a
/// tie. Returns the count and the number of pairs times two.
pub fn auc_pairs(scores: &[f64], labels: &[u8]) -> (u64, u64) {
    let mut num = 0u64;
    let mut pairs = 0u64;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                num += 2;
            } else if scores[i] == scores[j] {
                num += 1;
            }
        }
    }
    (num, 2 * pairs)
}

pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (num, den) = auc_pairs(scores, labels);
    num as f64 / den as f64
}

/// Eigenvalues (descending) of the sample covariance, through nalgebra.
pub fn covariance_eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let m = nalgebra::DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = m.row_mean();
    let mut c = m.clone();
    for i in 0..n {
        let r = c.row(i) - &mean;
        c.set_row(i, &r);
    }
    let cov = (c.transpose() * &c) / (n as f64 - 1.0);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}
