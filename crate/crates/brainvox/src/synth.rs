//! Writes a phantom cohort as NIfTI files plus a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use brainvox_core::phantom::{generate_subject, PhantomSpec};

use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestRow};
use crate::nifti::{write_image, Datatype, Header};
use crate::volume::MapKind;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_per_class: usize,
    /// NIfTI axis order.
    pub extents: [usize; 3],
    pub effect_size: f64,
    pub noise: f64,
    pub seed: u64,
    pub blobs: usize,
    /// Per-subject translation jitter in voxels.
    pub misregistration: f64,
    pub datatype: Datatype,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let p = PhantomSpec::default();
        Self {
            n_per_class: 20,
            extents: p.extents,
            effect_size: p.effect_size,
            noise: p.noise,
            seed: 0,
            blobs: p.blobs,
            misregistration: p.misregistration,
            datatype: Datatype::Float32,
        }
    }
}

impl SynthSpec {
    pub fn phantom(&self) -> PhantomSpec {
        let e = self.extents;
        PhantomSpec {
            extents: [e[2], e[1], e[0]],
            effect_size: self.effect_size,
            noise: self.noise,
            seed: self.seed,
            blobs: self.blobs,
            misregistration: self.misregistration,
            ..PhantomSpec::default()
        }
    }
}

/// Subjects alternate between labels 0 and 1; ids are `sub-0000` onwards.
/// Returns the manifest path.
pub fn synth_generate(spec: &SynthSpec, out_dir: &Path) -> Result<(PathBuf, Manifest)> {
    if spec.n_per_class == 0 {
        return Err(Error::Config("need at least one subject per class".into()));
    }
    let phantom = spec.phantom();
    phantom.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let header = Header {
        descrip: "brainvox phantom".into(),
        ..Header::new(spec.extents, spec.datatype)
    };
    let n_vox: usize = spec.extents.iter().product();
    let mut rows = Vec::with_capacity(2 * spec.n_per_class);
    for i in 0..2 * spec.n_per_class {
        let label = (i % 2) as u8;
        let id = format!("sub-{i:04}");
        let t = generate_subject(&phantom, label, i as u64)?;
        let mut paths = Vec::with_capacity(3);
        for (m, kind) in MapKind::ALL.iter().enumerate() {
            let name = format!("{id}_{}.nii", kind.name());
            write_image(&out_dir.join(&name), &header, &t.data()[m * n_vox..(m + 1) * n_vox])?;
            paths.push(PathBuf::from(name));
        }
        rows.push(ManifestRow {
            id,
            paths: paths.try_into().expect("three maps"),
            label,
        });
    }
    let manifest = Manifest {
        rows,
        base: out_dir.to_path_buf(),
    };
    let path = out_dir.join("manifest.csv");
    manifest.write(&path)?;
    Ok((path, manifest))
}
