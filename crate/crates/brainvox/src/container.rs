//! Binary model container. Layout (all integers little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `BVMODEL\0` |
//! | 4 | u32 format version (1) |
//! | 4 | u32 header length `L` |
//! | L | UTF-8 JSON header |
//! | 4 | u32 tensor count `T` |
//! | T x | u32 rank `r`, `r` x u64 extents, then `prod(extents)` x f64 |
//! | 32 | SHA-256 of every preceding byte |
//!
//! The header records the member structure; every number a prediction
//! depends on travels in the tensors.

use std::fs;
use std::path::Path;

use brainvox_core::arch::ArchSpec;
use brainvox_core::baseline::{Kernel, PcaModel, SvmModel, SvmPipeline};
use brainvox_core::eval::{Classifier, ConstantModel, Ensemble};
use brainvox_core::train::{TrainConfig, TrainedModel};
use brainvox_core::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::DataConfig;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"BVMODEL\0";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug)]
pub enum SavedModel {
    Cnn(TrainedModel),
    Svm(SvmPipeline),
    Constant(ConstantModel),
}

impl Classifier for SavedModel {
    fn predict_proba(&self, x: &Tensor) -> brainvox_core::Result<f64> {
        match self {
            SavedModel::Cnn(m) => m.predict_proba(x),
            SavedModel::Svm(m) => m.predict_proba(x),
            SavedModel::Constant(m) => m.predict_proba(x),
        }
    }

    fn predict(&self, x: &Tensor) -> brainvox_core::Result<u8> {
        match self {
            SavedModel::Cnn(m) => Classifier::predict(m, x),
            SavedModel::Svm(m) => Classifier::predict(m, x),
            SavedModel::Constant(m) => m.predict(x),
        }
    }
}

/// What a container holds.
#[derive(Clone, Debug)]
pub enum Contents {
    Single(SavedModel),
    Ensemble(Ensemble<SavedModel>),
}

#[derive(Clone, Debug)]
pub struct Container {
    pub contents: Contents,
    /// Subjects the model(s) were trained on, for leakage warnings.
    pub training_ids: Vec<String>,
    /// Resampling applied to inputs before they reach the model.
    pub preprocess: DataConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    ensemble: bool,
    repeat: usize,
    training_ids: Vec<String>,
    preprocess: DataConfig,
    members: Vec<MemberHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum MemberHeader {
    Cnn {
        arch: ArchSpec,
        train: TrainConfig,
        loss_history: Vec<f64>,
        tensors: usize,
    },
    Svm {
        rbf: bool,
        /// Retained components per map.
        components: Vec<usize>,
    },
    Constant {
        class: u8,
    },
}

struct Raw {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Raw {
    fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }
}

fn member_parts(model: &SavedModel, tensors: &mut Vec<Raw>) -> Result<MemberHeader> {
    Ok(match model {
        SavedModel::Cnn(m) => {
            let arch = m
                .arch()
                .cloned()
                .ok_or_else(|| Error::Config("cannot save a network without its architecture".into()))?;
            let params = m.network().params();
            for p in &params {
                tensors.push(Raw::new(p.value.shape().to_vec(), p.value.data().to_vec()));
            }
            MemberHeader::Cnn {
                arch,
                train: m.config().clone(),
                loss_history: m.loss_history().to_vec(),
                tensors: params.len(),
            }
        }
        SavedModel::Svm(p) => {
            for pca in p.pcas() {
                let d = pca.n_features();
                tensors.push(Raw::new(vec![d], pca.mean().to_vec()));
                tensors.push(Raw::new(vec![pca.k(), d], pca.components().concat()));
                tensors.push(Raw::new(vec![pca.eigenvalues().len()], pca.eigenvalues().to_vec()));
            }
            let svm = p.svm();
            let svs = svm.support_vectors();
            let dim = svs.first().map_or(0, Vec::len);
            tensors.push(Raw::new(vec![svs.len(), dim], svs.concat()));
            tensors.push(Raw::new(vec![svs.len()], svm.dual_coef().to_vec()));
            let (rbf, gamma) = match svm.kernel() {
                Kernel::Linear => (false, 0.0),
                Kernel::Rbf { gamma } => (true, gamma),
            };
            tensors.push(Raw::new(vec![3], vec![svm.c(), svm.bias(), gamma]));
            MemberHeader::Svm {
                rbf,
                components: p.pcas().iter().map(PcaModel::k).collect(),
            }
        }
        SavedModel::Constant(m) => MemberHeader::Constant { class: m.class },
    })
}

pub fn encode(container: &Container) -> Result<Vec<u8>> {
    let (members, repeat, ensemble): (Vec<&SavedModel>, usize, bool) = match &container.contents {
        Contents::Single(m) => (vec![m], 0, false),
        Contents::Ensemble(e) => (e.members().iter().collect(), e.repeat(), true),
    };
    let mut tensors = Vec::new();
    let headers = members
        .iter()
        .map(|m| member_parts(m, &mut tensors))
        .collect::<Result<Vec<_>>>()?;
    let header = Header {
        ensemble,
        repeat,
        training_ids: container.training_ids.clone(),
        preprocess: container.preprocess,
        members: headers,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;

    let mut b = Vec::new();
    b.extend_from_slice(&MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&(json.len() as u32).to_le_bytes());
    b.extend_from_slice(&json);
    b.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        b.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &e in &t.shape {
            b.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in &t.data {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&b);
    b.extend_from_slice(&digest);
    Ok(b)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::ContainerTruncated { path: self.path.into() });
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Container> {
    let bad = |message: String| Error::ContainerFormat {
        path: path.into(),
        message,
    };
    if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::ContainerMagic { path: path.into() });
    }
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(Error::ContainerTruncated { path: path.into() });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::ContainerVersion {
            path: path.into(),
            version,
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum { path: path.into() });
    }
    let mut r = Reader {
        bytes: body,
        at: 12,
        path,
    };
    let len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(len)?).map_err(|e| bad(format!("header: {e}")))?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &e| a.checked_mul(e))
            .filter(|&n| n <= body.len() / 8)
            .ok_or(Error::ContainerTruncated { path: path.into() })?;
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        tensors.push(Raw { shape, data });
    }
    if r.at != body.len() {
        return Err(bad(format!("{} trailing bytes", body.len() - r.at)));
    }

    let mut it = tensors.into_iter();
    let mut next = |what: &str| it.next().ok_or_else(|| bad(format!("missing tensor for {what}")));
    let mut members = Vec::with_capacity(header.members.len());
    for m in header.members {
        members.push(match m {
            MemberHeader::Cnn {
                arch,
                train,
                loss_history,
                tensors,
            } => {
                let mut net = arch.build(0)?;
                let mut params = net.params_mut();
                if params.len() != tensors {
                    return Err(bad(format!("{} parameter tensors for {} slots", tensors, params.len())));
                }
                for p in params.iter_mut() {
                    let t = next("network parameter")?;
                    if t.shape != p.value.shape() {
                        return Err(bad(format!("parameter shape {:?} vs {:?}", t.shape, p.value.shape())));
                    }
                    p.value.data_mut().copy_from_slice(&t.data);
                }
                SavedModel::Cnn(TrainedModel::from_parts(net, Some(arch), train, loss_history))
            }
            MemberHeader::Svm { rbf, components } => {
                let mut pcas = Vec::with_capacity(components.len());
                for k in components {
                    let mean = next("PCA mean")?.data;
                    let comps = next("PCA components")?;
                    if comps.shape.len() != 2 || comps.shape[0] != k {
                        return Err(bad(format!("component block shape {:?}", comps.shape)));
                    }
                    let rows = if k == 0 {
                        Vec::new()
                    } else {
                        comps.data.chunks(comps.shape[1]).map(<[f64]>::to_vec).collect()
                    };
                    let eig = next("PCA eigenvalues")?.data;
                    pcas.push(PcaModel::from_parts(mean, rows, eig)?);
                }
                let svs = next("support vectors")?;
                let coef = next("dual coefficients")?.data;
                let scalars = next("SVM scalars")?.data;
                if svs.shape.len() != 2 || scalars.len() != 3 {
                    return Err(bad("SVM block shapes".into()));
                }
                let rows = if svs.shape[1] == 0 {
                    vec![Vec::new(); svs.shape[0]]
                } else {
                    svs.data.chunks(svs.shape[1]).map(<[f64]>::to_vec).collect()
                };
                let kernel = if rbf {
                    Kernel::Rbf { gamma: scalars[2] }
                } else {
                    Kernel::Linear
                };
                let svm = SvmModel::from_parts(kernel, scalars[0], rows, coef, scalars[1])?;
                SavedModel::Svm(SvmPipeline::from_parts(pcas, svm))
            }
            MemberHeader::Constant { class } => SavedModel::Constant(ConstantModel { class }),
        });
    }
    if next("").is_ok() {
        return Err(bad("unused tensors".into()));
    }
    let contents = if header.ensemble {
        Contents::Ensemble(Ensemble::new(members, header.repeat)?)
    } else {
        if members.len() != 1 {
            return Err(bad(format!("{} members in a single-model container", members.len())));
        }
        Contents::Single(members.pop().unwrap())
    };
    Ok(Container {
        contents,
        training_ids: header.training_ids,
        preprocess: header.preprocess,
    })
}

pub fn save(path: &Path, container: &Container) -> Result<()> {
    let bytes = encode(container)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Container> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}
