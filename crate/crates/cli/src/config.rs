//! Experiment configuration: a sectioned TOML file with a schema version.
//!
//! Values are resolved in layers: reference defaults, then the `scale`
//! overrides, then the method `preset`, then keys written in the file, then
//! command-line flags. Unknown keys anywhere are rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mixsr::degradation::{DegradationSpec, NoiseModel, SyntheticFraction, SIGMA_25};
use mixsr::mixup::MixupConfig;
use mixsr::model::ModelConfig;
use mixsr::training::TrainConfig;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::sweep::{SweepAxis, SweepSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "MIXSR_OUT";
const DEFAULT_OUTPUT: &str = "runs";

/// Method presets of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    /// No MixUp, no synthetic data.
    #[default]
    Baseline,
    Mixup,
    Synthesis,
    /// MixUp (alpha 1.2) plus all synthetic data.
    Full,
}

/// Compute scale: the full reference schedule or the desk-scale overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    #[default]
    Reference,
    Desk,
}

macro_rules! named_enum {
    ($ty:ident { $($variant:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub const NAMES: &'static [&'static str] = &[$($name),*];

            pub fn name(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),*
                }
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($ty::$variant),)*
                    other => Err(format!("unknown {} `{other}`, expected one of {}", stringify!($ty).to_lowercase(), Self::NAMES.join(", "))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(Preset { Baseline => "baseline", Mixup => "mixup", Synthesis => "synthesis", Full => "full" });
named_enum!(Scale { Reference => "reference", Desk => "desk" });

impl Preset {
    pub fn mixup_enabled(self) -> bool {
        matches!(self, Preset::Mixup | Preset::Full)
    }

    pub fn synthetic_fraction(self) -> SyntheticFraction {
        match self {
            Preset::Baseline | Preset::Mixup => SyntheticFraction::Fraction(0.0),
            Preset::Synthesis | Preset::Full => SyntheticFraction::All,
        }
    }
}

impl Scale {
    pub fn model(self) -> ModelConfig {
        match self {
            Scale::Reference => ModelConfig::default(),
            Scale::Desk => ModelConfig::tiny(),
        }
    }

    pub fn train(self) -> TrainConfig {
        match self {
            Scale::Reference => TrainConfig::default(),
            Scale::Desk => TrainConfig {
                batch_size: 8,
                patch_size: 32,
                total_iters: 5000,
                lr_init: 1e-3,
                lr_half_every: 2000,
                validate_every: 250,
                ..TrainConfig::default()
            },
        }
    }

    pub fn prepare(self) -> PrepareConfig {
        match self {
            Scale::Reference => PrepareConfig::default(),
            Scale::Desk => PrepareConfig {
                paired_size: 64,
                paired_stride: 32,
                unpaired_size: 64,
                unpaired_stride: 32,
            },
        }
    }
}

/// Sub-image cropping for `prepare`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepareConfig {
    pub paired_size: usize,
    pub paired_stride: usize,
    pub unpaired_size: usize,
    pub unpaired_stride: usize,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            paired_size: 200,
            paired_stride: 100,
            unpaired_size: 480,
            unpaired_stride: 240,
        }
    }
}

/// Raw dataset directories consumed by `prepare`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataPaths {
    pub train_hr: Option<PathBuf>,
    pub train_lr: Option<PathBuf>,
    pub val_hr: Option<PathBuf>,
    pub val_lr: Option<PathBuf>,
    /// Unpaired HR images for synthesis.
    pub extra_hr: Option<PathBuf>,
}

/// How the synthetic set is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthesisSource {
    /// The trained degradation network; `None` means the run's own
    /// `degradation/best.weights`.
    Learned { weights: Option<PathBuf> },
    Analytic(DegradationSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub scale: Scale,
    pub data: DataPaths,
    pub output: PathBuf,
    pub prepare: PrepareConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Save a checkpoint every this many iterations.
    pub checkpoint_every: Option<u64>,
    pub synthesis_source: SynthesisSource,
    pub synthetic_fraction: SyntheticFraction,
    pub sweep: Option<SweepSpec>,
}

/// Command-line overrides, applied last.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub scale: Option<Scale>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    preset: Option<String>,
    scale: Option<String>,
    #[serde(default)]
    paths: RawPaths,
    #[serde(default)]
    prepare: RawPrepare,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    train: RawTrain,
    #[serde(default)]
    mixup: RawMixup,
    #[serde(default)]
    degradation: RawDegradation,
    #[serde(default)]
    synthesis: RawSynthesis,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPaths {
    output: Option<PathBuf>,
    train_hr: Option<PathBuf>,
    train_lr: Option<PathBuf>,
    val_hr: Option<PathBuf>,
    val_lr: Option<PathBuf>,
    extra_hr: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPrepare {
    paired_size: Option<usize>,
    paired_stride: Option<usize>,
    unpaired_size: Option<usize>,
    unpaired_stride: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawModel {
    base_channels: Option<usize>,
    num_cascading_blocks: Option<usize>,
    rcabs_per_block: Option<usize>,
    attention_reduction: Option<usize>,
    global_skip: Option<bool>,
    encoder_skips: Option<bool>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    batch_size: Option<usize>,
    patch_size: Option<usize>,
    total_iters: Option<u64>,
    lr_init: Option<f64>,
    lr_half_every: Option<u64>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_eps: Option<f64>,
    validate_every: Option<u64>,
    val_crop: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    checkpoint_every: Option<u64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMixup {
    enabled: Option<bool>,
    alpha: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDegradation {
    kind: Option<String>,
    sigma: Option<f64>,
    sigma_read: Option<f64>,
    sigma_shot: Option<f64>,
    weights: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSynthesis {
    fraction: Option<NumberOrName>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: String,
    values: Vec<NumberOrName>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub(crate) enum NumberOrName {
    Int(i64),
    Float(f64),
    Name(String),
}

impl fmt::Display for NumberOrName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumberOrName::Int(v) => write!(f, "{v}"),
            NumberOrName::Float(v) => write!(f, "{v}"),
            NumberOrName::Name(v) => f.write_str(v),
        }
    }
}

/// Parses `"all"`, `"half"` or a number in `[0, 1]`.
pub fn parse_fraction(text: &str) -> Result<SyntheticFraction, String> {
    match text {
        "all" => Ok(SyntheticFraction::All),
        "half" => Ok(SyntheticFraction::Fraction(0.5)),
        _ => {
            let f: f64 = text.parse().map_err(|_| format!("invalid synthetic fraction `{text}`"))?;
            if (0.0..=1.0).contains(&f) {
                Ok(SyntheticFraction::Fraction(f))
            } else {
                Err(format!("synthetic fraction {f} outside [0, 1]"))
            }
        }
    }
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_owned())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ExperimentConfig {
    /// Defaults for a scale and preset, with outputs under `output`.
    pub fn preset(scale: Scale, preset: Preset, output: PathBuf) -> Self {
        let mut train = scale.train();
        train.mixup = if preset.mixup_enabled() {
            MixupConfig::default()
        } else {
            MixupConfig::disabled()
        };
        Self {
            preset,
            scale,
            data: DataPaths::default(),
            output,
            prepare: scale.prepare(),
            model: scale.model(),
            train,
            checkpoint_every: None,
            synthesis_source: SynthesisSource::Learned { weights: None },
            synthetic_fraction: preset.synthetic_fraction(),
            sweep: None,
        }
    }

    /// Loads and validates a config file.
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(path, e))?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::parse(&text, &base, overrides).map_err(|reason| CliError::config(path, reason))
    }

    /// Config used when no file is given.
    pub fn from_overrides(overrides: &Overrides) -> CliResult<Self> {
        Self::parse(&format!("schema_version = {SCHEMA_VERSION}\n"), Path::new(""), overrides)
            .map_err(|reason| CliError::config("<defaults>", reason))
    }

    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<Self, String> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        match raw.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}")),
            None => return Err("missing schema_version".into()),
        }
        let resolve = |p: PathBuf| absolute(&base_dir.join(p));

        let preset = match (overrides.preset, raw.preset) {
            (Some(p), _) => p,
            (None, Some(name)) => name.parse()?,
            (None, None) => Preset::default(),
        };
        let scale = match (overrides.scale, raw.scale) {
            (Some(s), _) => s,
            (None, Some(name)) => name.parse()?,
            (None, None) => Scale::default(),
        };
        let output = overrides
            .output
            .clone()
            .or(raw.paths.output.clone().map(resolve))
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
        let output = absolute(&output);
        let mut cfg = Self::preset(scale, preset, output);

        let p = raw.paths;
        cfg.data = DataPaths {
            train_hr: p.train_hr.map(resolve),
            train_lr: p.train_lr.map(resolve),
            val_hr: p.val_hr.map(resolve),
            val_lr: p.val_lr.map(resolve),
            extra_hr: p.extra_hr.map(resolve),
        };

        let r = raw.prepare;
        set(&mut cfg.prepare.paired_size, r.paired_size);
        set(&mut cfg.prepare.paired_stride, r.paired_stride);
        set(&mut cfg.prepare.unpaired_size, r.unpaired_size);
        set(&mut cfg.prepare.unpaired_stride, r.unpaired_stride);

        let m = raw.model;
        set(&mut cfg.model.base_channels, m.base_channels);
        set(&mut cfg.model.num_cascading_blocks, m.num_cascading_blocks);
        set(&mut cfg.model.rcabs_per_block, m.rcabs_per_block);
        set(&mut cfg.model.attention_reduction, m.attention_reduction);
        set(&mut cfg.model.global_skip, m.global_skip);
        set(&mut cfg.model.encoder_skips, m.encoder_skips);

        let t = raw.train;
        let tc = &mut cfg.train;
        set(&mut tc.batch_size, t.batch_size);
        set(&mut tc.patch_size, t.patch_size);
        set(&mut tc.total_iters, t.total_iters);
        set(&mut tc.lr_init, t.lr_init);
        set(&mut tc.lr_half_every, t.lr_half_every);
        set(&mut tc.adam_beta1, t.adam_beta1);
        set(&mut tc.adam_beta2, t.adam_beta2);
        set(&mut tc.adam_eps, t.adam_eps);
        set(&mut tc.validate_every, t.validate_every);
        set(&mut tc.val_crop, t.val_crop);
        set(&mut tc.seed, t.seed);
        tc.threads = t.threads;
        cfg.checkpoint_every = t.checkpoint_every;

        set(&mut cfg.train.mixup.enabled, raw.mixup.enabled);
        set(&mut cfg.train.mixup.alpha, raw.mixup.alpha);

        cfg.synthesis_source = parse_degradation(raw.degradation, &resolve)?;
        if let Some(f) = raw.synthesis.fraction {
            cfg.synthetic_fraction = parse_fraction(&f.to_string())?;
        }
        if let Some(s) = raw.sweep {
            let axis: SweepAxis = s.axis.parse()?;
            cfg.sweep = Some(SweepSpec::new(axis, s.values.iter().map(ToString::to_string).collect()).map_err(|e| e.to_string())?);
        }

        set(&mut cfg.train.seed, overrides.seed);
        if overrides.threads.is_some() {
            cfg.train.threads = overrides.threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.model.validate().map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())?;
        self.train.mixup.validate().map_err(|e| e.to_string())?;
        let p = &self.prepare;
        if p.paired_size == 0 || p.paired_stride == 0 || p.unpaired_size == 0 || p.unpaired_stride == 0 {
            return Err("prepare sizes and strides must be positive".into());
        }
        if self.checkpoint_every == Some(0) {
            return Err("train.checkpoint_every must be positive".into());
        }
        let d = &self.data;
        for path in [&d.train_hr, &d.train_lr, &d.val_hr, &d.val_lr, &d.extra_hr].into_iter().flatten() {
            if !path.is_dir() {
                return Err(format!("dataset directory {} does not exist", path.display()));
            }
        }
        if let SynthesisSource::Learned { weights: Some(w) } = &self.synthesis_source {
            if !w.is_file() {
                return Err(format!("degradation weights {} do not exist", w.display()));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> RunLayout {
        RunLayout::new(&self.output)
    }
}

fn parse_degradation(raw: RawDegradation, resolve: &impl Fn(PathBuf) -> PathBuf) -> Result<SynthesisSource, String> {
    let kind = raw.kind.as_deref().unwrap_or("learned");
    let reject = |key: &str, given: bool| {
        if given {
            Err(format!("degradation.{key} is not used by kind `{kind}`"))
        } else {
            Ok(())
        }
    };
    let noise_keys = raw.sigma_read.is_some() || raw.sigma_shot.is_some();
    match kind {
        "learned" => {
            reject("sigma", raw.sigma.is_some())?;
            reject("sigma_read/sigma_shot", noise_keys)?;
            Ok(SynthesisSource::Learned {
                weights: raw.weights.map(resolve),
            })
        }
        "bicubic_x4" => {
            reject("sigma", raw.sigma.is_some())?;
            reject("sigma_read/sigma_shot", noise_keys)?;
            reject("weights", raw.weights.is_some())?;
            Ok(SynthesisSource::Analytic(DegradationSpec::BicubicX4))
        }
        "gaussian_noise" => {
            reject("sigma_read/sigma_shot", noise_keys)?;
            reject("weights", raw.weights.is_some())?;
            Ok(SynthesisSource::Analytic(DegradationSpec::GaussianNoise {
                sigma: raw.sigma.unwrap_or(SIGMA_25),
            }))
        }
        "bicubic_x4_plus_noise" => {
            reject("weights", raw.weights.is_some())?;
            let noise = match raw.sigma {
                Some(sigma) => {
                    reject("sigma_read/sigma_shot", noise_keys)?;
                    NoiseModel::Gaussian { sigma }
                }
                None => {
                    let d = toy_noise();
                    NoiseModel::SignalDependent {
                        sigma_read: raw.sigma_read.unwrap_or(d.0),
                        sigma_shot: raw.sigma_shot.unwrap_or(d.1),
                    }
                }
            };
            Ok(SynthesisSource::Analytic(DegradationSpec::BicubicX4PlusNoise { noise }))
        }
        other => Err(format!(
            "unknown degradation kind `{other}`, expected learned, bicubic_x4, gaussian_noise or bicubic_x4_plus_noise"
        )),
    }
}

/// Default `(sigma_read, sigma_shot)` of the signal-dependent noise.
pub fn toy_noise() -> (f64, f64) {
    (0.01, 0.03)
}

/// The degradation used to fabricate the toy pairs.
pub fn toy_degradation() -> DegradationSpec {
    let (sigma_read, sigma_shot) = toy_noise();
    DegradationSpec::BicubicX4PlusNoise {
        noise: NoiseModel::SignalDependent { sigma_read, sigma_shot },
    }
}

/// File locations inside a run's output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_owned() }
    }

    pub fn prepared(&self) -> PathBuf {
        self.root.join("prepared")
    }

    pub fn train_manifest(&self) -> PathBuf {
        self.prepared().join("train.tsv")
    }

    pub fn val_manifest(&self) -> PathBuf {
        self.prepared().join("val.tsv")
    }

    pub fn extra_manifest(&self) -> PathBuf {
        self.prepared().join("extra.tsv")
    }

    pub fn degradation(&self) -> PathBuf {
        self.root.join("degradation")
    }

    pub fn synthetic(&self) -> PathBuf {
        self.root.join("synthetic")
    }

    pub fn sr(&self) -> PathBuf {
        self.root.join("sr")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn sweep(&self, axis: SweepAxis) -> PathBuf {
        self.root.join("sweep").join(axis.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, String> {
        ExperimentConfig::parse(text, Path::new("/base"), &Overrides::default())
    }

    #[test]
    fn minimal_file_gives_reference_baseline() {
        let cfg = parse("schema_version = 1\npaths.output = \"out\"").unwrap();
        assert_eq!(cfg.preset, Preset::Baseline);
        assert_eq!(cfg.model, ModelConfig::default());
        assert_eq!(cfg.train.total_iters, 500_000);
        assert!(!cfg.train.mixup.enabled);
        assert_eq!(cfg.synthetic_fraction, SyntheticFraction::Fraction(0.0));
        assert_eq!(cfg.output, PathBuf::from("/base/out"));
    }

    #[test]
    fn full_preset_enables_both_mechanisms() {
        let cfg = parse("schema_version = 1\npreset = \"full\"").unwrap();
        assert!(cfg.train.mixup.enabled);
        assert_eq!(cfg.train.mixup.alpha, 1.2);
        assert_eq!(cfg.synthetic_fraction, SyntheticFraction::All);
    }

    #[test]
    fn desk_scale_overrides() {
        let cfg = parse("schema_version = 1\nscale = \"desk\"").unwrap();
        assert_eq!(cfg.train.total_iters, 5000);
        assert_eq!(cfg.train.validate_every, 250);
        assert_eq!(cfg.model.base_channels, 16);
    }

    #[test]
    fn explicit_keys_beat_presets_and_flags_beat_keys() {
        let text = "schema_version = 1\npreset = \"full\"\n[mixup]\nenabled = false\n[train]\nseed = 3";
        let cfg = parse(text).unwrap();
        assert!(!cfg.train.mixup.enabled);
        assert_eq!(cfg.train.seed, 3);
        let flags = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        assert_eq!(ExperimentConfig::parse(text, Path::new(""), &flags).unwrap().train.seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("schema_version = 1\nlearning_rate = 1").is_err());
        assert!(parse("schema_version = 1\n[train]\nlr = 1").is_err());
        assert!(parse("schema_version = 1\n[bogus]\nx = 1").is_err());
    }

    #[test]
    fn schema_version_is_required() {
        assert!(parse("").unwrap_err().contains("schema_version"));
        assert!(parse("schema_version = 2").unwrap_err().contains("unsupported"));
    }

    #[test]
    fn missing_dataset_directory_fails() {
        let err = parse("schema_version = 1\n[paths]\ntrain_hr = \"/definitely/not/here\"").unwrap_err();
        assert!(err.contains("does not exist"));
    }

    #[test]
    fn degradation_keys_follow_kind() {
        assert!(parse("schema_version = 1\n[degradation]\nkind = \"bicubic_x4\"\nsigma = 0.1").is_err());
        let cfg = parse("schema_version = 1\n[degradation]\nkind = \"gaussian_noise\"").unwrap();
        assert_eq!(
            cfg.synthesis_source,
            SynthesisSource::Analytic(DegradationSpec::GaussianNoise { sigma: SIGMA_25 })
        );
    }

    #[test]
    fn fractions() {
        assert_eq!(parse_fraction("all"), Ok(SyntheticFraction::All));
        assert_eq!(parse_fraction("half"), Ok(SyntheticFraction::Fraction(0.5)));
        assert_eq!(parse_fraction("0.25"), Ok(SyntheticFraction::Fraction(0.25)));
        assert!(parse_fraction("1.5").is_err());
        let cfg = parse("schema_version = 1\n[synthesis]\nfraction = 0").unwrap();
        assert_eq!(cfg.synthetic_fraction, SyntheticFraction::Fraction(0.0));
    }

    #[test]
    fn sweep_section() {
        let cfg = parse("schema_version = 1\n[sweep]\naxis = \"synthetic_volume\"\nvalues = [0, \"half\", \"all\"]").unwrap();
        assert_eq!(cfg.sweep.unwrap().values.len(), 3);
        assert!(parse("schema_version = 1\n[sweep]\naxis = \"model_size\"\nvalues = [64, 32]").is_err());
        assert!(parse("schema_version = 1\n[sweep]\naxis = \"model_size\"\nvalues = []").is_err());
    }
}
