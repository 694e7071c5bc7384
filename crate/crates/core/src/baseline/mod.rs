//! Handcrafted-feature baseline: PCA reduction and SVM classification.

pub mod eigen;
mod grid;
mod pca;
mod pipeline;
mod svm;

pub use grid::{grid_search, GridCell, GridResult, KernelKind};
pub use pca::{pca_fit, pca_fit_with, PcaMethod, PcaModel};
pub use pipeline::{fit_map_pcas, map_features, SvmPipeline, SvmSettings};
pub use svm::{svm_fit, svm_fit_detailed, Kernel, SvmFit, SvmModel, KKT_TOLERANCE};
