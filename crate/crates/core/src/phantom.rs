//! Synthetic tissue-probability phantoms with a controllable group effect.
//!
//! Each subject is a nested ellipsoid: a WM core, a GM shell and a CSF rim,
//! with soft boundaries and a small per-subject size jitter. Class 1
//! subjects lose GM in a few Gaussian blobs at loci shared by every subject
//! generated from the same seed. Voxel noise is added last and values are
//! clipped to `[0, 1]`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;

/// Shell radii in normalised ellipsoid units.
const R_WM: f64 = 0.45;
const R_GM: f64 = 0.75;
const R_BRAIN: f64 = 0.95;
const EDGE: f64 = 0.035;
const AXES: [f64; 3] = [0.85, 0.95, 0.9];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    /// `[d, h, w]`
    pub extents: [usize; 3],
    pub effect_size: f64,
    pub noise: f64,
    pub seed: u64,
    pub blobs: usize,
    /// Blob standard deviation in voxels.
    pub blob_width: f64,
    /// Relative standard deviation of each subject's ellipsoid axes.
    pub jitter: f64,
    /// Largest per-axis translation of a subject's anatomy, in voxels. The
    /// blobs move with it.
    pub misregistration: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            extents: [16, 16, 16],
            effect_size: 0.4,
            noise: 0.05,
            seed: 0,
            blobs: 4,
            blob_width: 1.25,
            jitter: 0.02,
            misregistration: 0.25,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.extents.iter().any(|&e| e < 4) {
            return Err(Error::Config(format!("phantom extents {:?} must be at least 4", self.extents)));
        }
        for (name, v) in [
            ("effect size", self.effect_size),
            ("noise", self.noise),
            ("jitter", self.jitter),
            ("misregistration", self.misregistration),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} {v} must be >= 0")));
            }
        }
        if !(self.blob_width > 0.0) {
            return Err(Error::Config("blob width must be positive".into()));
        }
        Ok(())
    }

    /// Voxel centres of the atrophy blobs, `[d, h, w]`. They lie in the
    /// middle of the GM shell and depend only on the seed and extents.
    pub fn blob_centers(&self) -> Vec<[usize; 3]> {
        let mut rng = rng_from_seed(derive_seed(self.seed, 0xB10B));
        let r = (R_WM + R_GM) / 2.0;
        (0..self.blobs)
            .map(|_| {
                let mut dir = [0.0f64; 3];
                loop {
                    for c in &mut dir {
                        *c = StandardNormal.sample(&mut rng);
                    }
                    let norm = libm::sqrt(dir.iter().map(|c| c * c).sum::<f64>());
                    if norm > 1e-6 {
                        for c in &mut dir {
                            *c /= norm;
                        }
                        break;
                    }
                }
                let mut idx = [0usize; 3];
                for a in 0..3 {
                    let u = dir[a] * r * AXES[a];
                    let n = self.extents[a] as f64;
                    let x = (u + 1.0) * n / 2.0 - 0.5;
                    idx[a] = (libm::round(x).max(0.0) as usize).min(self.extents[a] - 1);
                }
                idx
            })
            .collect()
    }
}

fn smooth_step(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x / EDGE))
}

/// Three maps (GM, WM, CSF) as a `[3, d, h, w]` tensor. The random draws do
/// not depend on the label, so with zero effect size both classes share one
/// distribution.
pub fn generate_subject(spec: &PhantomSpec, label: u8, index: u64) -> Result<Tensor> {
    spec.validate()?;
    let [d, h, w] = spec.extents;
    let mut rng = rng_from_seed(derive_seed(spec.seed, index + 1));
    let mut axes = AXES;
    for a in &mut axes {
        let z: f64 = StandardNormal.sample(&mut rng);
        *a *= 1.0 + spec.jitter * z;
    }
    let m = spec.misregistration;
    let mut shift = [0.0f64; 3];
    for s in &mut shift {
        // Drawn even when m is zero so the stream does not depend on it.
        let u: f64 = rng.random_range(-1.0..1.0);
        *s = u * m;
    }
    let centers = spec.blob_centers();
    let vol = d * h * w;
    let mut data = alloc::vec![0.0; 3 * vol];
    let two_s2 = 2.0 * spec.blob_width * spec.blob_width;

    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let p = [z, y, x];
                let mut r2 = 0.0;
                for a in 0..3 {
                    let n = spec.extents[a] as f64;
                    let u = (p[a] as f64 + 0.5 - shift[a]) * 2.0 / n - 1.0;
                    r2 += (u / axes[a]) * (u / axes[a]);
                }
                let r = libm::sqrt(r2);
                let wm = smooth_step(R_WM - r);
                let gm_wm = smooth_step(R_GM - r);
                let brain = smooth_step(R_BRAIN - r);
                let mut gm = gm_wm - wm;
                let csf = brain - gm_wm;
                if label == 1 {
                    for c in &centers {
                        let dist2: f64 = (0..3).map(|a| { let e = p[a] as f64 - c[a] as f64 - shift[a]; e * e }).sum();
                        gm -= spec.effect_size * libm::exp(-dist2 / two_s2);
                    }
                }
                let i = (z * h + y) * w + x;
                data[i] = gm;
                data[vol + i] = wm;
                data[2 * vol + i] = csf;
            }
        }
    }
    for v in &mut data {
        let n: f64 = StandardNormal.sample(&mut rng);
        *v = (*v + spec.noise * n).clamp(0.0, 1.0);
    }
    Tensor::new(&[3, d, h, w], data)
}
