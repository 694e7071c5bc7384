//! Single-file NIfTI-1 (`.nii`) reading and writing.
//!
//! Only 3D volumes with int16, float32 or float64 voxels are handled. The
//! orientation fields are carried through but never applied.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
/// Header plus the four-byte extension flag.
pub const DATA_OFFSET: usize = 352;

pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;

/// Values this far outside [0, 1] are clamped with a warning; further out is
/// an error.
pub const RANGE_SLACK: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Datatype {
    Int16,
    #[default]
    Float32,
    Float64,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Int16 => DT_INT16,
            Datatype::Float32 => DT_FLOAT32,
            Datatype::Float64 => DT_FLOAT64,
        }
    }

    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            DT_INT16 => Some(Datatype::Int16),
            DT_FLOAT32 => Some(Datatype::Float32),
            DT_FLOAT64 => Some(Datatype::Float64),
            _ => None,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::Int16 => 2,
            Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }
}

/// Header fields that survive a round trip. Everything else is written as
/// zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    /// `dim[1..=3]`
    pub extents: [usize; 3],
    pub datatype: Datatype,
    /// `pixdim[1..=3]`, millimetres.
    pub voxel_size: [f32; 3],
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub srow: [[f32; 4]; 3],
    pub descrip: String,
}

impl Header {
    pub fn new(extents: [usize; 3], datatype: Datatype) -> Self {
        Self {
            extents,
            datatype,
            voxel_size: [1.0; 3],
            scl_slope: 1.0,
            scl_inter: 0.0,
            qform_code: 0,
            sform_code: 0,
            srow: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            descrip: String::new(),
        }
    }
}

/// A decoded volume: voxels in file order (first axis fastest) after
/// scaling, plus the header they came with.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiImage {
    pub header: Header,
    pub data: Vec<f64>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    big: bool,
}

impl Cursor<'_> {
    fn take<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.bytes[at..at + N]);
        if self.big {
            b.reverse();
        }
        b
    }
    fn i16(&self, at: usize) -> i16 {
        i16::from_le_bytes(self.take(at))
    }
    fn f32(&self, at: usize) -> f32 {
        f32::from_le_bytes(self.take(at))
    }
    fn f64(&self, at: usize) -> f64 {
        f64::from_le_bytes(self.take(at))
    }
}

/// Decodes a `.nii` image without range checks.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<NiftiImage> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_SIZE as u64,
            actual: bytes.len() as u64,
        });
    }
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let big = match (le, be) {
        (348, _) => false,
        (_, 348) => true,
        _ => {
            return Err(Error::BadHeaderSize {
                path: path.into(),
                found: le,
            })
        }
    };
    let c = Cursor { bytes, big };
    let magic: [u8; 4] = bytes[344..348].try_into().unwrap();
    if &magic != b"n+1\0" && &magic != b"ni1\0" {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
        });
    }
    let dim0 = c.i16(40);
    if dim0 != 3 {
        return Err(Error::BadDimensions { path: path.into(), dim0 });
    }
    let mut extents = [0usize; 3];
    for (a, e) in extents.iter_mut().enumerate() {
        let d = c.i16(42 + 2 * a);
        if d <= 0 {
            return Err(Error::BadDimensions { path: path.into(), dim0 });
        }
        *e = d as usize;
    }
    let code = c.i16(70);
    let datatype = Datatype::from_code(code).ok_or(Error::UnsupportedDatatype {
        path: path.into(),
        code,
    })?;
    let vox_offset = c.f32(108);
    let offset = if vox_offset > 0.0 { vox_offset as usize } else { DATA_OFFSET };
    let count: usize = extents.iter().product();
    let need = offset + count * datatype.bytes();
    if bytes.len() < need {
        return Err(Error::Truncated {
            path: path.into(),
            expected: need as u64,
            actual: bytes.len() as u64,
        });
    }
    let slope = c.f32(112);
    let inter = c.f32(116);
    let scale = |v: f64| {
        if slope == 0.0 || !slope.is_finite() {
            v
        } else {
            v * f64::from(slope) + f64::from(inter)
        }
    };
    let data = (0..count)
        .map(|i| {
            let at = offset + i * datatype.bytes();
            match datatype {
                Datatype::Int16 => scale(f64::from(c.i16(at))),
                Datatype::Float32 => scale(f64::from(c.f32(at))),
                Datatype::Float64 => scale(c.f64(at)),
            }
        })
        .collect();
    let mut srow = [[0.0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = c.f32(280 + 16 * r + 4 * k);
        }
    }
    let descrip = bytes[148..228].split(|&b| b == 0).next().unwrap_or(&[]);
    Ok(NiftiImage {
        header: Header {
            extents,
            datatype,
            voxel_size: [c.f32(80), c.f32(84), c.f32(88)],
            scl_slope: slope,
            scl_inter: inter,
            qform_code: c.i16(252),
            sform_code: c.i16(254),
            srow,
            descrip: String::from_utf8_lossy(descrip).into_owned(),
        },
        data,
    })
}

pub fn read_image(path: &Path) -> Result<NiftiImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

/// Encodes little-endian with magic `n+1`. Float voxels are stored as
/// given; int16 voxels as `round((v - scl_inter) / scl_slope)`.
pub fn encode(header: &Header, data: &[f64]) -> Result<Vec<u8>> {
    let count: usize = header.extents.iter().product();
    if data.len() != count {
        return Err(Error::Config(format!(
            "{} voxels given for extents {:?}",
            data.len(),
            header.extents
        )));
    }
    if header.extents.iter().any(|&e| e == 0 || e > i16::MAX as usize) {
        return Err(Error::Config(format!("extents {:?} not representable", header.extents)));
    }
    let dt = header.datatype;
    let mut b = vec![0u8; DATA_OFFSET + count * dt.bytes()];
    let put = |b: &mut [u8], at: usize, v: &[u8]| b[at..at + v.len()].copy_from_slice(v);
    put(&mut b, 0, &348i32.to_le_bytes());
    let mut dim = [1i16; 8];
    dim[0] = 3;
    for a in 0..3 {
        dim[a + 1] = header.extents[a] as i16;
    }
    for (i, d) in dim.iter().enumerate() {
        put(&mut b, 40 + 2 * i, &d.to_le_bytes());
    }
    put(&mut b, 70, &dt.code().to_le_bytes());
    put(&mut b, 72, &((dt.bytes() * 8) as i16).to_le_bytes());
    let mut pixdim = [1.0f32; 8];
    pixdim[1..4].copy_from_slice(&header.voxel_size);
    for (i, p) in pixdim.iter().enumerate() {
        put(&mut b, 76 + 4 * i, &p.to_le_bytes());
    }
    put(&mut b, 108, &(DATA_OFFSET as f32).to_le_bytes());
    put(&mut b, 112, &header.scl_slope.to_le_bytes());
    put(&mut b, 116, &header.scl_inter.to_le_bytes());
    // xyzt_units: millimetres
    b[123] = 2;
    let desc = header.descrip.as_bytes();
    put(&mut b, 148, &desc[..desc.len().min(79)]);
    put(&mut b, 252, &header.qform_code.to_le_bytes());
    put(&mut b, 254, &header.sform_code.to_le_bytes());
    for (r, row) in header.srow.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            put(&mut b, 280 + 16 * r + 4 * k, &v.to_le_bytes());
        }
    }
    put(&mut b, 344, b"n+1\0");

    let slope = if header.scl_slope == 0.0 { 1.0 } else { f64::from(header.scl_slope) };
    let inter = f64::from(header.scl_inter);
    for (i, &v) in data.iter().enumerate() {
        let at = DATA_OFFSET + i * dt.bytes();
        match dt {
            Datatype::Int16 => {
                let q = ((v - inter) / slope).round().clamp(f64::from(i16::MIN), f64::from(i16::MAX));
                put(&mut b, at, &(q as i16).to_le_bytes());
            }
            Datatype::Float32 => put(&mut b, at, &(v as f32).to_le_bytes()),
            Datatype::Float64 => put(&mut b, at, &v.to_le_bytes()),
        }
    }
    Ok(b)
}

pub fn write_image(path: &Path, header: &Header, data: &[f64]) -> Result<()> {
    let bytes = encode(header, data)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
