//! Plain-text tables and CSV logs. Metric columns are always acc, sp, se,
//! AUC in that order.

use brainvox_core::eval::{roc_auc, CvSettings, Metrics, RepeatOutcome, TestOutcome};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 4] = ["acc", "sp", "se", "AUC"];

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.4}")
    }
}

pub fn table_header() -> String {
    format!("{:<14}{:>8}{:>8}{:>8}{:>8}", "", COLUMNS[0], COLUMNS[1], COLUMNS[2], COLUMNS[3])
}

pub fn table_row(label: &str, m: &Metrics) -> String {
    format!(
        "{label:<14}{:>8}{:>8}{:>8}{:>8}",
        num(m.accuracy),
        num(m.specificity),
        num(m.sensitivity),
        num(m.auc)
    )
}

pub struct DataSummary {
    pub subjects: usize,
    pub positives: usize,
    pub extents: [usize; 3],
}

impl DataSummary {
    fn line(&self) -> String {
        let [x, y, z] = self.extents;
        format!(
            "subjects      {} ({} label 1, {} label 0), {x}x{y}x{z}",
            self.subjects,
            self.positives,
            self.subjects - self.positives
        )
    }
}

/// Counts summed over every fold of every repeat; AUC ranks each repeat's
/// pooled held-out probabilities and is averaged over repeats.
pub fn pooled<M>(out: &RepeatOutcome<M>, labels: &[u8]) -> Metrics {
    let aucs: Vec<f64> = out
        .repeats
        .iter()
        .map(|r| {
            let mut scores = Vec::new();
            let mut ys = Vec::new();
            for f in &r.folds {
                scores.extend(&f.probabilities);
                ys.extend(f.test_indices.iter().map(|&i| labels[i]));
            }
            roc_auc(&scores, &ys).unwrap_or(f64::NAN)
        })
        .collect();
    Metrics::from_confusion(out.mean.confusion, aucs.iter().sum::<f64>() / aucs.len() as f64)
}

pub fn crossval_report<M>(
    family: &str,
    data: &DataSummary,
    cv: &CvSettings,
    out: &RepeatOutcome<M>,
    labels: &[u8],
) -> String {
    let mut s = Vec::new();
    s.push(format!("family        {family}"));
    s.push(data.line());
    s.push(format!(
        "protocol      {}-fold outer, {}-fold inner, {} repeat(s), seed {}",
        cv.outer_folds, cv.inner_folds, cv.repeats, cv.seed
    ));
    s.push(format!("best repeat   {}", out.best_repeat));
    s.push(String::new());
    s.push(table_header());
    s.push(table_row("mean", &out.mean));
    s.push(table_row("pooled", &pooled(out, labels)));
    for r in &out.repeats {
        s.push(table_row(&format!("repeat {}", r.repeat), &r.mean));
    }
    s.push(String::new());
    s.join("\n")
}

fn to_csv(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// One row per (repeat, outer fold).
pub fn folds_csv<M>(out: &RepeatOutcome<M>) -> Result<String> {
    let mut rows = Vec::new();
    for r in &out.repeats {
        for f in &r.folds {
            let m = &f.metrics;
            rows.push(vec![
                r.repeat.to_string(),
                f.fold.to_string(),
                f.test_indices.len().to_string(),
                num(m.accuracy),
                num(m.specificity),
                num(m.sensitivity),
                num(m.auc),
                f.hyper.clone(),
            ]);
        }
    }
    to_csv(&["repeat", "fold", "n_test", "acc", "sp", "se", "auc", "hyper"], rows)
}

/// Held-out probability of every subject in every repeat. Probabilities are
/// written with round-trip precision.
pub fn predictions_csv<M>(out: &RepeatOutcome<M>, ids: &[String], labels: &[u8]) -> Result<String> {
    let mut rows = Vec::new();
    for r in &out.repeats {
        for f in &r.folds {
            for ((&i, p), c) in f.test_indices.iter().zip(&f.probabilities).zip(&f.predictions) {
                rows.push(vec![
                    r.repeat.to_string(),
                    f.fold.to_string(),
                    ids[i].clone(),
                    labels[i].to_string(),
                    format!("{p:?}"),
                    c.to_string(),
                ]);
            }
        }
    }
    to_csv(&["repeat", "fold", "id", "label", "probability", "class"], rows)
}

pub fn test_report(model: &str, members: usize, data: &DataSummary, out: &TestOutcome) -> String {
    let mut s = Vec::new();
    s.push(format!("ensemble      {model} ({members} members, majority vote)"));
    s.push(data.line());
    s.push(String::new());
    s.push(table_header());
    s.push(table_row("vote", &out.metrics));
    s.push(format!("AUC from mean member probability: {}", num(out.mean_proba_auc)));
    s.push(String::new());
    s.join("\n")
}

pub fn votes_csv(out: &TestOutcome, ids: &[String], labels: &[u8]) -> Result<String> {
    let rows = out
        .votes
        .iter()
        .zip(ids.iter().zip(labels))
        .map(|(v, (id, y))| {
            vec![
                id.clone(),
                y.to_string(),
                format!("{}", v.positive_fraction),
                v.class.to_string(),
                format!("{:?}", v.mean_proba),
            ]
        })
        .collect();
    to_csv(&["id", "label", "vote_fraction", "class", "mean_probability"], rows)
}
