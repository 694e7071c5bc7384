//! Command-line front end. `main` returns the process exit code: 0 on
//! success, 1 for runtime failures, 2 for usage and configuration errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::manifest::load_manifest;
use crate::nifti::Datatype;
use crate::pipeline;
use crate::synth::{synth_generate, SynthSpec};
use crate::volume::{read_volume, Subject};

#[derive(Parser, Debug)]
#[command(name = "brainvox", version, about = "3D CNN and SVM classifiers for tissue probability maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic two-class cohort and its manifest.
    GenSynth(GenSynth),
    /// Repeated nested cross-validation; saves the best repeat's ensemble.
    Crossval(Crossval),
    /// Evaluate a saved model on a labeled manifest by majority vote.
    Test(TestArgs),
    /// Print predictions for unlabeled subjects.
    Predict(Predict),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DtypeArg {
    Int16,
    Float32,
    Float64,
}

impl From<DtypeArg> for Datatype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::Int16 => Datatype::Int16,
            DtypeArg::Float32 => Datatype::Float32,
            DtypeArg::Float64 => Datatype::Float64,
        }
    }
}

fn parse_extents(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    let bad = || format!("expected three positive sizes like 16x16x16, got {s:?}");
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut e = [0; 3];
    for (slot, p) in e.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| bad())?;
        if *slot == 0 {
            return Err(bad());
        }
    }
    Ok(e)
}

#[derive(Args, Debug)]
struct GenSynth {
    /// Subjects per class.
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, value_parser = parse_extents, default_value = "16x16x16")]
    extents: [usize; 3],
    /// Mean gray-matter reduction inside the class-1 blobs.
    #[arg(long, default_value_t = 0.4)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    blobs: usize,
    /// Translation jitter per subject, in voxels.
    #[arg(long, default_value_t = 0.25)]
    misregistration: f64,
    #[arg(long, value_enum, default_value_t = DtypeArg::Float32)]
    datatype: DtypeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Crossval {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Also write report.txt and votes.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Predict {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with_all = ["id", "gm", "wm", "csf"], required_unless_present = "gm")]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "subject")]
    id: String,
    #[arg(long, requires_all = ["wm", "csf"])]
    gm: Option<PathBuf>,
    #[arg(long, requires = "gm")]
    wm: Option<PathBuf>,
    #[arg(long, requires = "gm")]
    csf: Option<PathBuf>,
}

fn warn(lines: &[String]) {
    for l in lines {
        eprintln!("warning: {l}");
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynth(a) => {
            let spec = SynthSpec {
                n_per_class: a.n,
                extents: a.extents,
                effect_size: a.delta,
                noise: a.noise,
                seed: a.seed,
                blobs: a.blobs,
                misregistration: a.misregistration,
                datatype: a.datatype.into(),
            };
            let (path, _) = synth_generate(&spec, &a.out)?;
            println!("{}", path.display());
        }
        Command::Crossval(a) => {
            let mut cfg = match &a.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if a.manifest.is_some() {
                cfg.manifest = a.manifest;
            }
            if a.family.is_some() {
                cfg.family = a.family;
            }
            if a.out.is_some() {
                cfg.out = a.out;
            }
            if let Some(s) = a.seed {
                cfg.cv.seed = s;
            }
            if let Some(r) = a.repeats {
                cfg.cv.repeats = r;
            }
            let out = pipeline::crossval(&cfg)?;
            warn(&out.warnings);
            print!("{}", out.report);
            eprintln!("wrote {}", out.out_dir.display());
        }
        Command::Test(a) => {
            let run = pipeline::test(&a.model, &a.manifest)?;
            warn(&run.warnings);
            print!("{}", run.report);
            if let Some(dir) = &a.out {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                write(&dir.join("report.txt"), &run.report)?;
                write(&dir.join("votes.csv"), &run.votes_csv)?;
            }
        }
        Command::Predict(a) => {
            let subjects = match (&a.manifest, &a.gm, &a.wm, &a.csf) {
                (Some(m), ..) => load_manifest(m)?,
                (None, Some(gm), Some(wm), Some(csf)) => {
                    let maps = [read_volume(gm)?, read_volume(wm)?, read_volume(csf)?];
                    // The label is unused for prediction.
                    vec![Subject::new(a.id.clone(), maps, 0)?]
                }
                _ => return Err(Error::Config("give --manifest or all of --gm, --wm, --csf".into())),
            };
            for line in pipeline::predict(&a.model, subjects)? {
                println!("{line}");
            }
        }
    }
    Ok(())
}

pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
