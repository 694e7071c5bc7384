//! Probability-map volumes and subjects.

use std::path::Path;

use brainvox_core::resample::{downsample, ResampleMethod};
use brainvox_core::Tensor;

use crate::error::{Error, Result};
use crate::nifti::{read_image, RANGE_SLACK};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Gm,
    Wm,
    Csf,
}

impl MapKind {
    pub const ALL: [MapKind; 3] = [MapKind::Gm, MapKind::Wm, MapKind::Csf];

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Gm => "gm",
            MapKind::Wm => "wm",
            MapKind::Csf => "csf",
        }
    }
}

/// One probability map. `extents` follow the NIfTI axes and `voxels` are in
/// file order, first axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub extents: [usize; 3],
    pub voxels: Vec<f64>,
    /// Voxels pulled back into [0, 1] on load.
    pub clamped: usize,
}

impl Volume {
    pub fn new(extents: [usize; 3], voxels: Vec<f64>) -> Result<Self> {
        if extents.contains(&0) || voxels.len() != extents.iter().product::<usize>() {
            return Err(Error::Config(format!(
                "{} voxels do not fill extents {extents:?}",
                voxels.len()
            )));
        }
        Ok(Self {
            extents,
            voxels,
            clamped: 0,
        })
    }

    /// Extents in the row-major `[d, h, w]` order the core crate uses.
    pub fn grid(&self) -> [usize; 3] {
        [self.extents[2], self.extents[1], self.extents[0]]
    }

    pub fn downsample(&self, target: [usize; 3], method: ResampleMethod) -> Result<Volume> {
        let rev = |e: [usize; 3]| [e[2], e[1], e[0]];
        let (voxels, got) = downsample(&self.voxels, self.grid(), rev(target), method)?;
        Ok(Volume {
            extents: rev(got),
            voxels,
            clamped: self.clamped,
        })
    }
}

/// Reads a map and enforces the [0, 1] range.
pub fn read_volume(path: &Path) -> Result<Volume> {
    let image = read_image(path)?;
    let mut voxels = image.data;
    let mut clamped = 0;
    for (index, v) in voxels.iter_mut().enumerate() {
        if (0.0..=1.0).contains(v) {
            continue;
        }
        if v.is_finite() && *v >= -RANGE_SLACK && *v <= 1.0 + RANGE_SLACK {
            *v = v.clamp(0.0, 1.0);
            clamped += 1;
        } else {
            return Err(Error::OutOfRange {
                path: path.into(),
                index,
                value: *v,
            });
        }
    }
    Ok(Volume {
        extents: image.header.extents,
        voxels,
        clamped,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    /// GM, WM, CSF.
    pub maps: [Volume; 3],
    pub label: u8,
}

impl Subject {
    pub fn new(id: String, maps: [Volume; 3], label: u8) -> Result<Self> {
        let e = maps[0].extents;
        for (m, k) in maps.iter().zip(MapKind::ALL).skip(1) {
            if m.extents != e {
                return Err(Error::SubjectShape {
                    id,
                    detail: format!("gm {:?} vs {} {:?}", e, k.name(), m.extents),
                });
            }
        }
        Ok(Self { id, maps, label })
    }

    pub fn extents(&self) -> [usize; 3] {
        self.maps[0].extents
    }

    /// `[3, d, h, w]` tensor, maps in GM, WM, CSF order.
    pub fn tensor(&self) -> Result<Tensor> {
        let [d, h, w] = self.maps[0].grid();
        let mut data = Vec::with_capacity(3 * d * h * w);
        for m in &self.maps {
            data.extend_from_slice(&m.voxels);
        }
        Ok(Tensor::new(&[3, d, h, w], data)?)
    }

    pub fn downsample(&self, target: [usize; 3], method: ResampleMethod) -> Result<Subject> {
        let [a, b, c] = &self.maps;
        Ok(Subject {
            id: self.id.clone(),
            maps: [a.downsample(target, method)?, b.downsample(target, method)?, c.downsample(target, method)?],
            label: self.label,
        })
    }
}
