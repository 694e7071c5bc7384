use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad NIfTI magic {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: header size {found} is not 348")]
    BadHeaderSize { path: PathBuf, found: i32 },

    #[error("{path}: unsupported datatype code {code}")]
    UnsupportedDatatype { path: PathBuf, code: i16 },

    #[error("{path}: expected a 3D volume, dim[0] = {dim0}")]
    BadDimensions { path: PathBuf, dim0: i16 },

    #[error("{path}: truncated, need {expected} bytes but file has {actual}")]
    Truncated { path: PathBuf, expected: u64, actual: u64 },

    #[error("{path}: voxel {index} = {value} is outside [0, 1]")]
    OutOfRange { path: PathBuf, index: usize, value: f64 },

    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },

    #[error("manifest row {row}: duplicate subject id {id:?}")]
    DuplicateId { row: usize, id: String },

    #[error("manifest row {row}: missing file {path}")]
    MissingFile { row: usize, path: PathBuf },

    #[error("manifest row {row}: label {label:?} is not 0 or 1")]
    BadLabel { row: usize, label: String },

    #[error("subject {id}: map extents differ ({detail})")]
    SubjectShape { id: String, detail: String },

    #[error("{path}: not a model container")]
    ContainerMagic { path: PathBuf },

    #[error("{path}: unsupported container version {version}")]
    ContainerVersion { path: PathBuf, version: u32 },

    #[error("{path}: checksum mismatch")]
    Checksum { path: PathBuf },

    #[error("{path}: container truncated")]
    ContainerTruncated { path: PathBuf },

    #[error("{path}: malformed container: {message}")]
    ContainerFormat { path: PathBuf, message: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] brainvox_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Core(brainvox_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}
