//! The work behind each subcommand, callable without the argument parser.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use brainvox_core::eval::{
    independent_test, repeat_and_average, CnnFamily, ConstantFamily, Dataset, Ensemble, Metrics, ModelFamily,
    RepeatOutcome, SvmFamily, TestOutcome,
};
use brainvox_core::Tensor;

use crate::config::{DataConfig, FamilyChoice, RunConfig};
use crate::container::{self, Container, Contents, SavedModel};
use crate::error::{Error, Result};
use crate::manifest::{load_subjects, read_manifest};
use crate::report::{self, DataSummary};
use crate::volume::Subject;

pub struct LoadedData {
    pub dataset: Dataset,
    pub summary: DataSummary,
    /// Human-readable notes for stderr.
    pub warnings: Vec<String>,
}

fn prepare(subjects: Vec<Subject>, pre: &DataConfig) -> Result<(Vec<Subject>, Vec<String>)> {
    let mut warnings = Vec::new();
    let clamped: usize = subjects.iter().flat_map(|s| s.maps.iter()).map(|m| m.clamped).sum();
    if clamped > 0 {
        warnings.push(format!("{clamped} voxels slightly outside [0, 1] were clamped"));
    }
    let subjects = match pre.downsample {
        Some(t) => subjects
            .iter()
            .map(|s| s.downsample(t, pre.method.into()))
            .collect::<Result<Vec<_>>>()?,
        None => subjects,
    };
    Ok((subjects, warnings))
}

pub fn load_dataset(manifest: &Path, pre: &DataConfig) -> Result<LoadedData> {
    let rows = read_manifest(manifest)?;
    let (subjects, warnings) = prepare(load_subjects(&rows)?, pre)?;
    let Some(first) = subjects.first() else {
        return Err(Error::Manifest {
            row: 1,
            message: "no subjects".into(),
        });
    };
    let extents = first.extents();
    if let Some(s) = subjects.iter().find(|s| s.extents() != extents) {
        return Err(Error::SubjectShape {
            id: s.id.clone(),
            detail: format!("{:?} vs {:?} of {}", s.extents(), extents, first.id),
        });
    }
    let samples = subjects.iter().map(Subject::tensor).collect::<Result<Vec<Tensor>>>()?;
    let labels: Vec<u8> = subjects.iter().map(|s| s.label).collect();
    let ids = subjects.iter().map(|s| s.id.clone()).collect();
    let summary = DataSummary {
        subjects: labels.len(),
        positives: labels.iter().filter(|&&y| y == 1).count(),
        extents,
    };
    Ok(LoadedData {
        dataset: Dataset::new(samples, labels, ids)?,
        summary,
        warnings,
    })
}

pub struct CrossvalOutput {
    pub report: String,
    pub mean: Metrics,
    pub out_dir: PathBuf,
    pub warnings: Vec<String>,
}

fn run_family<F: ModelFamily>(
    family: &F,
    data: &Dataset,
    cfg: &RunConfig,
    wrap: impl FnMut(F::Model) -> SavedModel,
) -> Result<(RepeatOutcome<F::Model>, Ensemble<SavedModel>)>
where
    F::Model: Clone,
{
    let outcome = repeat_and_average(data, family, &cfg.cv)?;
    let ensemble = outcome.ensemble.clone().map(wrap);
    Ok((outcome, ensemble))
}

/// Runs the repeated nested cross-validation and writes `report.txt`,
/// `folds.csv`, `predictions.csv` and `ensemble.bvm` under the output
/// directory.
pub fn crossval(cfg: &RunConfig) -> Result<CrossvalOutput> {
    cfg.validate()?;
    let manifest = cfg.manifest.as_ref().expect("validated");
    let out_dir = cfg.out.clone().expect("validated");
    let loaded = load_dataset(manifest, &cfg.data)?;
    let data = &loaded.dataset;
    cfg.train.validate(data.len())?;
    let family = cfg.family()?;
    let name = cfg.family.clone().unwrap_or_default();

    macro_rules! finish {
        ($outcome:expr, $ensemble:expr) => {{
            let outcome = $outcome;
            let files = [
                ("report.txt", report::crossval_report(&name, &loaded.summary, &cfg.cv, &outcome, data.labels())),
                ("folds.csv", report::folds_csv(&outcome)?),
                ("predictions.csv", report::predictions_csv(&outcome, data.ids(), data.labels())?),
            ];
            fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            for (file, text) in &files {
                let p = out_dir.join(file);
                fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            }
            container::save(
                &out_dir.join("ensemble.bvm"),
                &Container {
                    contents: Contents::Ensemble($ensemble),
                    training_ids: data.ids().to_vec(),
                    preprocess: cfg.data,
                },
            )?;
            CrossvalOutput {
                report: files[0].1.clone(),
                mean: outcome.mean,
                out_dir: out_dir.clone(),
                warnings: loaded.warnings.clone(),
            }
        }};
    }

    Ok(match family {
        FamilyChoice::Cnn(arch) => {
            let [x, y, z] = loaded.summary.extents;
            let arch = arch.with_extent([z, y, x]);
            arch.parameter_count()?;
            let fam = CnnFamily {
                arch,
                train: cfg.train.clone(),
                learning_rates: cfg.learning_rates.clone(),
            };
            let (o, e) = run_family(&fam, data, cfg, SavedModel::Cnn)?;
            finish!(o, e)
        }
        FamilyChoice::Svm(settings) => {
            let (o, e) = run_family(&SvmFamily { settings }, data, cfg, SavedModel::Svm)?;
            finish!(o, e)
        }
        FamilyChoice::Constant(class) => {
            let (o, e) = run_family(&ConstantFamily { class }, data, cfg, SavedModel::Constant)?;
            finish!(o, e)
        }
    })
}

pub struct TestRun {
    pub report: String,
    pub outcome: TestOutcome,
    pub votes_csv: String,
    pub warnings: Vec<String>,
}

fn as_ensemble(contents: Contents) -> Result<Ensemble<SavedModel>> {
    Ok(match contents {
        Contents::Ensemble(e) => e,
        Contents::Single(m) => Ensemble::new(vec![m], 0)?,
    })
}

/// Majority-vote evaluation of a saved ensemble on a labeled manifest.
pub fn test(model: &Path, manifest: &Path) -> Result<TestRun> {
    let c = container::load(model)?;
    let loaded = load_dataset(manifest, &c.preprocess)?;
    let mut warnings = loaded.warnings;
    let trained: HashSet<&String> = c.training_ids.iter().collect();
    let shared = loaded.dataset.ids().iter().filter(|id| trained.contains(id)).count();
    if shared > 0 {
        warnings.push(format!(
            "{shared} of {} test subjects were used to train this ensemble; metrics are optimistic",
            loaded.dataset.len()
        ));
    }
    let ensemble = as_ensemble(c.contents)?;
    let outcome = independent_test(&ensemble, &loaded.dataset)?;
    let name = model.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(TestRun {
        report: report::test_report(&name, ensemble.len(), &loaded.summary, &outcome),
        votes_csv: report::votes_csv(&outcome, loaded.dataset.ids(), loaded.dataset.labels())?,
        outcome,
        warnings,
    })
}

/// `id,proba,class` lines for a single model, `id,vote_fraction,class`
/// lines for an ensemble.
pub fn predict(model: &Path, subjects: Vec<Subject>) -> Result<Vec<String>> {
    use brainvox_core::eval::Classifier;

    let c = container::load(model)?;
    let (subjects, _) = prepare(subjects, &c.preprocess)?;
    let mut lines = Vec::with_capacity(subjects.len());
    for s in &subjects {
        let x = s.tensor()?;
        lines.push(match &c.contents {
            Contents::Single(m) => {
                let p = m.predict_proba(&x)?;
                format!("{},{p:?},{}", s.id, m.predict(&x)?)
            }
            Contents::Ensemble(e) => {
                let v = e.vote(&x)?;
                format!("{},{},{}", s.id, v.positive_fraction, v.class)
            }
        });
    }
    Ok(lines)
}
