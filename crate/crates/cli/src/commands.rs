//! The pipeline stages behind each subcommand.
//!
//! Every stage reads its inputs from the run layout (see
//! [`RunLayout`](crate::config::RunLayout)) and clears its own output
//! directory first, so reruns with the same inputs and seed reproduce the
//! same files.

use std::fs;
use std::path::{Path, PathBuf};

use mixsr::degradation::{
    merge_datasets, synthesize_analytic, synthesize_lr, train_degradation as train_g, DegradationSpec, SyntheticFraction,
    SyntheticSet, MANIFEST_FILE, SIGMA_25,
};
use mixsr::image::{crop_subimages, load_image, save_image};
use mixsr::manifest::{build_manifest, Origin, Record, Split};
use mixsr::metrics::{validate, MetricSummary, SelfEnsemble};
use mixsr::training::{train, CheckpointPolicy, Direction, TrainOutcome};
use mixsr::{DatasetManifest, Weights};

use crate::config::{toy_degradation, ExperimentConfig, RunLayout, SynthesisSource};
use crate::error::{CliError, CliResult};
use crate::plot::plot_logs;
use crate::sweep::{DegradationType, SweepSpec, SweepValue};
use crate::toy::{self, ToyDirs};

pub const BEST_WEIGHTS: &str = "best.weights";
pub const FINAL_WEIGHTS: &str = "final.weights";
pub const LOG_FILE: &str = "train_log.csv";

fn reset_dir(dir: &Path) -> CliResult<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| mixsr::Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| mixsr::Error::io(dir, e))?;
    Ok(())
}

fn read_manifest(path: &Path, hint: &'static str) -> CliResult<DatasetManifest> {
    if !path.is_file() {
        return Err(CliError::EmptyDataset {
            path: path.to_owned(),
            hint,
        });
    }
    Ok(DatasetManifest::read(path)?)
}

fn read_nonempty(path: &Path, hint: &'static str) -> CliResult<DatasetManifest> {
    let manifest = read_manifest(path, hint)?;
    if manifest.is_empty() {
        return Err(CliError::EmptyDataset {
            path: path.to_owned(),
            hint,
        });
    }
    Ok(manifest)
}

const PREPARE_HINT: &str = "run `mixsr prepare` first";

/// Writes the procedural toy dataset under `root`.
pub fn make_toy(root: &Path, size: usize, seed: u64) -> CliResult<ToyDirs> {
    if size == 0 || size % mixsr::model::INTERNAL_SCALE != 0 {
        return Err(CliError::Usage(format!("toy image size {size} must be a positive multiple of 4")));
    }
    toy::write_toy_dataset(root, size, seed, &toy_degradation())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepareReport {
    pub train_images: usize,
    pub train_subimages: usize,
    pub val_images: usize,
    pub extra_images: usize,
    pub extra_subimages: usize,
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("paths.{key} must be set for prepare")))
}

fn crop_records(
    source: &DatasetManifest,
    out_dir: &Path,
    size: usize,
    stride: usize,
    split: Split,
) -> CliResult<DatasetManifest> {
    let hr_dir = out_dir.join("hr");
    let lr_dir = out_dir.join("lr");
    let mut records = Vec::new();
    for r in source.records() {
        let stem = r.image_id();
        let hr_crops = crop_subimages(&load_image(&r.hr_path)?, size, stride)?;
        let lr_crops = match &r.lr_path {
            Some(p) => {
                let lr = load_image(p)?;
                lr.same_dims(&load_image(&r.hr_path)?)?;
                Some(crop_subimages(&lr, size, stride)?)
            }
            None => None,
        };
        for (k, hr) in hr_crops.iter().enumerate() {
            let name = format!("{stem}_{k:04}.png");
            let hr_path = hr_dir.join(&name);
            fs::create_dir_all(&hr_dir).map_err(|e| mixsr::Error::io(&hr_dir, e))?;
            save_image(hr, &hr_path)?;
            let lr_path = match &lr_crops {
                Some(crops) => {
                    fs::create_dir_all(&lr_dir).map_err(|e| mixsr::Error::io(&lr_dir, e))?;
                    let p = lr_dir.join(&name);
                    save_image(&crops[k], &p)?;
                    Some(p)
                }
                None => None,
            };
            records.push(Record {
                hr_path,
                lr_path,
                origin: Origin::Observed,
                split,
            });
        }
    }
    Ok(DatasetManifest::new(records)?)
}

/// Crops training pairs and unpaired HR images into sub-images and writes
/// the train, val and extra manifests. Validation images stay whole.
pub fn prepare(cfg: &ExperimentConfig) -> CliResult<PrepareReport> {
    let layout = cfg.layout();
    let d = &cfg.data;
    let train_src = build_manifest(required(&d.train_hr, "train_hr")?, Some(required(&d.train_lr, "train_lr")?), Split::Train, Origin::Observed)?;
    let val = build_manifest(required(&d.val_hr, "val_hr")?, Some(required(&d.val_lr, "val_lr")?), Split::Val, Origin::Observed)?;
    let extra_src = match &d.extra_hr {
        Some(dir) => build_manifest(dir, None, Split::Train, Origin::Observed)?,
        None => DatasetManifest::default(),
    };

    reset_dir(&layout.prepared())?;
    let p = cfg.prepare;
    let train = crop_records(&train_src, &layout.prepared().join("train"), p.paired_size, p.paired_stride, Split::Train)?;
    let extra = crop_records(&extra_src, &layout.prepared().join("extra"), p.unpaired_size, p.unpaired_stride, Split::Train)?;
    train.write(layout.train_manifest())?;
    val.write(layout.val_manifest())?;
    extra.write(layout.extra_manifest())?;
    Ok(PrepareReport {
        train_images: train_src.len(),
        train_subimages: train.len(),
        val_images: val.len(),
        extra_images: extra_src.len(),
        extra_subimages: extra.len(),
    })
}

fn policy(dir: &Path, cfg: &ExperimentConfig) -> CheckpointPolicy {
    CheckpointPolicy {
        dir: Some(dir.to_owned()),
        every: cfg.checkpoint_every,
    }
}

/// Trains the degradation network `g` (HR in, LR out) on the observed
/// training pairs, validating on the swapped validation pairs.
pub fn train_degradation(cfg: &ExperimentConfig) -> CliResult<TrainOutcome<f32>> {
    let layout = cfg.layout();
    let train_m = read_nonempty(&layout.train_manifest(), PREPARE_HINT)?;
    let val_m = read_nonempty(&layout.val_manifest(), PREPARE_HINT)?;
    let dir = layout.degradation();
    reset_dir(&dir)?;
    Ok(train_g(&train_m, &val_m, cfg.model, &cfg.train, &policy(&dir, cfg))?)
}

fn synthesize_into(
    source: &SynthesisSource,
    layout: &RunLayout,
    hr: &DatasetManifest,
    out_dir: &Path,
    seed: u64,
) -> CliResult<SyntheticSet> {
    reset_dir(out_dir)?;
    match source {
        SynthesisSource::Learned { weights } => {
            let path = weights.clone().unwrap_or_else(|| layout.degradation().join(BEST_WEIGHTS));
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "degradation weights {} not found; run `mixsr train-degradation` first",
                    path.display()
                )));
            }
            let g = Weights::load(&path)?;
            Ok(synthesize_lr(&g, &path, hr, out_dir)?)
        }
        SynthesisSource::Analytic(spec) => Ok(synthesize_analytic(spec, hr, out_dir, seed)?),
    }
}

/// Degrades every extra HR sub-image into the synthetic set.
pub fn synthesize(cfg: &ExperimentConfig) -> CliResult<SyntheticSet> {
    let layout = cfg.layout();
    let extra = read_manifest(&layout.extra_manifest(), PREPARE_HINT)?;
    synthesize_into(&cfg.synthesis_source, &layout, &extra, &layout.synthetic(), cfg.train.seed)
}

/// Trains `f` on `observed` plus the configured fraction of `synthetic`,
/// writing logs and checkpoints into `dir`.
pub fn train_sr_with(
    cfg: &ExperimentConfig,
    observed: &DatasetManifest,
    synthetic: Option<&DatasetManifest>,
    dir: &Path,
) -> CliResult<TrainOutcome<f32>> {
    let layout = cfg.layout();
    let val_m = read_nonempty(&layout.val_manifest(), PREPARE_HINT)?;
    let empty = DatasetManifest::default();
    let merged = merge_datasets(observed, synthetic.unwrap_or(&empty), cfg.synthetic_fraction);
    if merged.is_empty() {
        return Err(CliError::EmptyDataset {
            path: layout.train_manifest(),
            hint: PREPARE_HINT,
        });
    }
    reset_dir(dir)?;
    merged.write(dir.join("train_manifest.tsv"))?;
    Ok(train(&merged, &val_m, cfg.model, &cfg.train, Direction::Sr, &policy(dir, cfg))?)
}

fn wants_synthetic(fraction: SyntheticFraction) -> bool {
    fraction != SyntheticFraction::Fraction(0.0)
}

fn synthetic_manifest(layout: &RunLayout) -> CliResult<DatasetManifest> {
    read_manifest(&layout.synthetic().join(MANIFEST_FILE), "run `mixsr synthesize` first")
}

/// Trains the SR network according to the preset.
pub fn train_sr(cfg: &ExperimentConfig) -> CliResult<TrainOutcome<f32>> {
    let layout = cfg.layout();
    let observed = read_nonempty(&layout.train_manifest(), PREPARE_HINT)?;
    let synthetic = if wants_synthetic(cfg.synthetic_fraction) {
        Some(synthetic_manifest(&layout)?)
    } else {
        None
    };
    train_sr_with(cfg, &observed, synthetic.as_ref(), &layout.sr())
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub summary: MetricSummary,
    pub csv: PathBuf,
}

/// Scores `weights` (default: the SR run's best checkpoint) on a manifest
/// (default: validation) and writes the per-image CSV.
pub fn evaluate(
    cfg: &ExperimentConfig,
    weights: Option<&Path>,
    manifest: Option<&Path>,
    self_ensemble: bool,
) -> CliResult<Evaluation> {
    let layout = cfg.layout();
    let weights_path = weights.map(Path::to_owned).unwrap_or_else(|| layout.sr().join(BEST_WEIGHTS));
    let model = Weights::load(&weights_path)?;
    let manifest_path = manifest.map(Path::to_owned).unwrap_or_else(|| layout.val_manifest());
    let records = read_nonempty(&manifest_path, PREPARE_HINT)?;
    let crop = cfg.train.val_crop;
    let summary = if self_ensemble {
        validate(&SelfEnsemble(&model), &records, crop)?
    } else {
        validate(&model, &records, crop)?
    };
    let dir = layout.eval();
    fs::create_dir_all(&dir).map_err(|e| mixsr::Error::io(&dir, e))?;
    let csv = dir.join(if self_ensemble { "metrics_self_ensemble.csv" } else { "metrics.csv" });
    fs::write(&csv, summary.to_csv()).map_err(|e| mixsr::Error::io(&csv, e))?;
    Ok(Evaluation { summary, csv })
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    /// `(curve label, log path)` per completed point.
    pub logs: Vec<(String, PathBuf)>,
    pub plot: PathBuf,
}

fn dir_name(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Runs one SR training per sweep value and overlays their curves. A
/// failing point stops the sweep; logs of earlier points stay on disk.
pub fn sweep(cfg: &ExperimentConfig, spec: &SweepSpec) -> CliResult<SweepReport> {
    let layout = cfg.layout();
    let base = layout.sweep(spec.axis);
    let observed = read_nonempty(&layout.train_manifest(), PREPARE_HINT)?;
    let mut logs = Vec::new();
    for (label, value) in &spec.values {
        let dir = base.join(dir_name(label));
        let run = || -> CliResult<()> {
            let mut point = cfg.clone();
            let mut train_m = observed.clone();
            let mut synthetic = None;
            match value {
                SweepValue::DataVolume(n) => {
                    if let Some(n) = n {
                        train_m = observed.take(*n);
                    }
                }
                SweepValue::ModelSize(c) => point.model.base_channels = *c,
                SweepValue::SyntheticVolume(f) => point.synthetic_fraction = *f,
                SweepValue::DegradationType(t) => {
                    point.synthetic_fraction = SyntheticFraction::All;
                    let source = match t {
                        DegradationType::Gaussian => SynthesisSource::Analytic(DegradationSpec::GaussianNoise { sigma: SIGMA_25 }),
                        DegradationType::Bicubic => SynthesisSource::Analytic(DegradationSpec::BicubicX4),
                        DegradationType::Learned => SynthesisSource::Learned { weights: None },
                    };
                    let extra = read_nonempty(&layout.extra_manifest(), PREPARE_HINT)?;
                    let set = synthesize_into(&source, &layout, &extra, &base.join(format!("{}_synthetic", dir_name(label))), cfg.train.seed)?;
                    synthetic = Some(set.manifest);
                }
            }
            if synthetic.is_none() && wants_synthetic(point.synthetic_fraction) {
                synthetic = Some(synthetic_manifest(&layout)?);
            }
            point.validate().map_err(CliError::Usage)?;
            train_sr_with(&point, &train_m, synthetic.as_ref(), &dir)?;
            Ok(())
        };
        run().map_err(|e| CliError::SweepPoint {
            point: format!("{}={label}", spec.axis),
            source: Box::new(e),
        })?;
        logs.push((format!("{}={label}", spec.axis), dir.join(LOG_FILE)));
    }
    let plot = base.join("curves.svg");
    plot_logs(&logs, &plot, &format!("validation PSNR, {} sweep", spec.axis))?;
    Ok(SweepReport { logs, plot })
}
