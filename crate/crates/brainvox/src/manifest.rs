//! `id,gm,wm,csf,label` subject lists.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{read_volume, Subject};

pub const HEADER: [&str; 5] = ["id", "gm", "wm", "csf", "label"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub id: String,
    /// GM, WM, CSF as written (relative paths resolve against the manifest's
    /// directory).
    pub paths: [PathBuf; 3],
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    /// Directory relative paths are taken from.
    pub base: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.id.clone()).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Manifest {
            row: 0,
            message: e.to_string(),
        };
        w.write_record(HEADER).map_err(csv_err)?;
        for r in &self.rows {
            let p: Vec<String> = r.paths.iter().map(|p| p.to_string_lossy().into_owned()).collect();
            w.write_record([r.id.as_str(), &p[0], &p[1], &p[2], &r.label.to_string()])
                .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Manifest {
            row: 0,
            message: e.to_string(),
        })?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Parses and checks the rows; row numbers count the header as row 1.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(&text[..]);
    let header = reader.headers().map_err(|e| Error::Manifest {
        row: 1,
        message: e.to_string(),
    })?;
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(Error::Manifest {
            row: 1,
            message: format!("header must be {:?}, got {:?}", HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Manifest {
            row,
            message: e.to_string(),
        })?;
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::Manifest {
                row,
                message: "empty id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { row, id });
        }
        let label = match rec[4].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::BadLabel {
                    row,
                    label: other.to_string(),
                })
            }
        };
        let paths = [1, 2, 3].map(|k| PathBuf::from(rec[k].trim()));
        rows.push(ManifestRow { id, paths, label });
    }
    Ok(Manifest {
        rows,
        base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

/// Loads every subject in manifest order.
pub fn load_subjects(manifest: &Manifest) -> Result<Vec<Subject>> {
    manifest
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let row = i + 2;
            let mut maps = Vec::with_capacity(3);
            for p in &r.paths {
                let full = manifest.resolve(p);
                if !full.is_file() {
                    return Err(Error::MissingFile { row, path: full });
                }
                maps.push(read_volume(&full)?);
            }
            let maps: [_; 3] = maps.try_into().expect("three maps");
            Subject::new(r.id.clone(), maps, r.label)
        })
        .collect()
}

pub fn load_manifest(path: &Path) -> Result<Vec<Subject>> {
    load_subjects(&read_manifest(path)?)
}
