//! Degradation models: analytic degraders for ablations, and the learned
//! HR -> LR network used to synthesize pairs from unpaired HR images.

mod analytic;

pub use analytic::{add_gaussian_noise, add_signal_dependent_noise, bicubic_degrade, cubic, resize_bicubic};

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{load_image, save_image, ImageBuffer};
use crate::manifest::{DatasetManifest, Origin, Record, Split};
use crate::metrics::Restorer;
use crate::model::{ModelConfig, INTERNAL_SCALE};
use crate::rng::{Rng, Stream};
use crate::training::{train, CheckpointPolicy, Direction, TrainConfig, TrainOutcome};
use crate::Weights;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    /// Poisson-Gaussian approximation, see [`add_signal_dependent_noise`].
    SignalDependent { sigma_read: f64, sigma_shot: f64 },
}

impl NoiseModel {
    fn apply(&self, image: &ImageBuffer, rng: &mut Rng) -> Result<ImageBuffer> {
        match *self {
            NoiseModel::Gaussian { sigma } => add_gaussian_noise(image, sigma, rng),
            NoiseModel::SignalDependent { sigma_read, sigma_shot } => {
                add_signal_dependent_noise(image, sigma_read, sigma_shot, rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DegradationSpec {
    BicubicX4,
    GaussianNoise { sigma: f64 },
    BicubicX4PlusNoise { noise: NoiseModel },
    Learned { weights_path: PathBuf },
}

/// Sigma 25 on the 8-bit scale.
pub const SIGMA_25: f64 = 25.0 / 255.0;

impl DegradationSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            DegradationSpec::BicubicX4 => "bicubic_x4",
            DegradationSpec::GaussianNoise { .. } => "gaussian_noise",
            DegradationSpec::BicubicX4PlusNoise { .. } => "bicubic_x4_plus_noise",
            DegradationSpec::Learned { .. } => "learned",
        }
    }

    /// Applies an analytic degradation. Learned specs need their weights;
    /// use [`synthesize_lr`] for those.
    pub fn apply(&self, hr: &ImageBuffer, rng: &mut Rng) -> Result<ImageBuffer> {
        match self {
            DegradationSpec::BicubicX4 => bicubic_degrade(hr, 4),
            DegradationSpec::GaussianNoise { sigma } => add_gaussian_noise(hr, *sigma, rng),
            DegradationSpec::BicubicX4PlusNoise { noise } => noise.apply(&bicubic_degrade(hr, 4)?, rng),
            DegradationSpec::Learned { .. } => Err(Error::InvalidDegradation(
                "learned degradation needs loaded weights".into(),
            )),
        }
    }

    /// `key=value` lines describing the degradation.
    pub fn to_sidecar(&self, weights_checksum: Option<&str>) -> String {
        let mut out = format!("kind={}\n", self.kind());
        let noise = match self {
            DegradationSpec::GaussianNoise { sigma } => Some(NoiseModel::Gaussian { sigma: *sigma }),
            DegradationSpec::BicubicX4PlusNoise { noise } => Some(*noise),
            _ => None,
        };
        match noise {
            Some(NoiseModel::Gaussian { sigma }) => {
                let _ = writeln!(out, "noise=gaussian\nsigma={sigma}");
            }
            Some(NoiseModel::SignalDependent { sigma_read, sigma_shot }) => {
                let _ = writeln!(out, "noise=signal_dependent\nsigma_read={sigma_read}\nsigma_shot={sigma_shot}");
            }
            None => {}
        }
        if let DegradationSpec::Learned { weights_path } = self {
            let _ = writeln!(out, "weights_path={}", weights_path.display());
        }
        if let Some(sum) = weights_checksum {
            let _ = writeln!(out, "weights_checksum={sum}");
        }
        out
    }

    pub fn parse_sidecar(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidDegradation(m);
        let mut kv = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed line {line:?}")))?;
            kv.insert(k.trim(), v.trim());
        }
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| bad(format!("missing {k}")))?
                .parse()
                .map_err(|_| bad(format!("{k} is not a number")))
        };
        let noise = || -> Result<NoiseModel> {
            match kv.get("noise").copied() {
                Some("gaussian") => Ok(NoiseModel::Gaussian { sigma: num("sigma")? }),
                Some("signal_dependent") => Ok(NoiseModel::SignalDependent {
                    sigma_read: num("sigma_read")?,
                    sigma_shot: num("sigma_shot")?,
                }),
                other => Err(bad(format!("unknown noise model {other:?}"))),
            }
        };
        match kv.get("kind").copied() {
            Some("bicubic_x4") => Ok(DegradationSpec::BicubicX4),
            Some("gaussian_noise") => Ok(DegradationSpec::GaussianNoise { sigma: num("sigma")? }),
            Some("bicubic_x4_plus_noise") => Ok(DegradationSpec::BicubicX4PlusNoise { noise: noise()? }),
            Some("learned") => Ok(DegradationSpec::Learned {
                weights_path: kv
                    .get("weights_path")
                    .map(PathBuf::from)
                    .ok_or_else(|| bad("missing weights_path".into()))?,
            }),
            other => Err(bad(format!("unknown kind {other:?}"))),
        }
    }
}

/// Synthetic pairs plus the degradation that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub manifest: DatasetManifest,
    pub spec: DegradationSpec,
}

impl SyntheticSet {
    pub fn len(&self) -> usize {
        self.manifest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.is_empty()
    }
}

pub const SIDECAR_FILE: &str = "degradation.txt";
pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Trains `g` on observed pairs with inputs and targets swapped (HR in,
/// LR out); returns the best-validation checkpoint and the full outcome.
pub fn train_degradation(
    paired: &DatasetManifest,
    val: &DatasetManifest,
    model_config: ModelConfig,
    config: &TrainConfig,
    checkpoints: &CheckpointPolicy,
) -> Result<TrainOutcome<f32>> {
    if paired.is_empty() {
        return Err(Error::EmptyDataset);
    }
    train(paired, val, model_config, config, Direction::Degradation, checkpoints)
}

fn synthesize_with(
    hr_manifest: &DatasetManifest,
    out_dir: &Path,
    origin: Origin,
    spec: DegradationSpec,
    checksum: Option<&str>,
    mut degrade: impl FnMut(usize, &ImageBuffer) -> Result<ImageBuffer>,
) -> Result<SyntheticSet> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut names = HashSet::new();
    let mut records = Vec::with_capacity(hr_manifest.len());
    for (i, r) in hr_manifest.records().iter().enumerate() {
        let name = r
            .hr_path
            .file_name()
            .ok_or_else(|| Error::FileNotFound(r.hr_path.clone()))?
            .to_owned();
        if !names.insert(name.clone()) {
            return Err(Error::DuplicateRecord(r.hr_path.display().to_string()));
        }
        let hr = load_image(&r.hr_path)?;
        let lr = degrade(i, &hr)?;
        lr.same_dims(&hr)?;
        let lr_path = out_dir.join(&name);
        save_image(&lr, &lr_path)?;
        records.push(Record {
            hr_path: r.hr_path.clone(),
            lr_path: Some(lr_path),
            origin,
            split: Split::Train,
        });
    }
    let manifest = DatasetManifest::new(records)?;
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    let sidecar = out_dir.join(SIDECAR_FILE);
    fs::write(&sidecar, spec.to_sidecar(checksum)).map_err(|e| Error::io(&sidecar, e))?;
    Ok(SyntheticSet { manifest, spec })
}

/// Writes `g(y)` for every HR record into `out_dir` (8-bit PNG, same file
/// name) and returns the synthetic manifest. Any failing image aborts.
pub fn synthesize_lr(g: &Weights, weights_path: &Path, hr_manifest: &DatasetManifest, out_dir: &Path) -> Result<SyntheticSet> {
    let spec = DegradationSpec::Learned {
        weights_path: weights_path.to_owned(),
    };
    let checksum = g.checksum();
    synthesize_with(hr_manifest, out_dir, Origin::Synthetic, spec, Some(&checksum), |_, hr| {
        let (h, w) = hr.dims();
        if h % INTERNAL_SCALE != 0 || w % INTERNAL_SCALE != 0 {
            return Err(Error::NotDivisibleBy4 { height: h, width: w });
        }
        g.restore(hr)
    })
}

/// Same as [`synthesize_lr`] with an analytic degradation; image `i` uses
/// the noise stream `(seed, i)`.
pub fn synthesize_analytic(spec: &DegradationSpec, hr_manifest: &DatasetManifest, out_dir: &Path, seed: u64) -> Result<SyntheticSet> {
    let root = Rng::new(seed);
    synthesize_with(hr_manifest, out_dir, Origin::Analytic, spec.clone(), None, |i, hr| {
        spec.apply(hr, &mut root.derive(Stream::Noise, i as u64))
    })
}

/// How much of the synthetic set to merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticFraction {
    All,
    Fraction(f64),
}

impl SyntheticFraction {
    /// Number of records taken from a set of `n`: `ceil(fraction * n)`.
    pub fn count(self, n: usize) -> usize {
        match self {
            SyntheticFraction::All => n,
            SyntheticFraction::Fraction(f) => {
                let f = f.clamp(0.0, 1.0);
                // absorb representation error such as 0.3 * 10 = 3.0000000000000004
                (((f * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
            }
        }
    }
}

/// All observed records followed by the first `fraction` of the synthetic
/// records in manifest order.
pub fn merge_datasets(observed: &DatasetManifest, synthetic: &DatasetManifest, fraction: SyntheticFraction) -> DatasetManifest {
    let take = fraction.count(synthetic.len());
    observed
        .records()
        .iter()
        .cloned()
        .chain(synthetic.records().iter().take(take).cloned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize, origin: Origin) -> DatasetManifest {
        (0..n)
            .map(|i| Record {
                hr_path: format!("{origin}/{i}.png").into(),
                lr_path: Some(format!("{origin}/lr{i}.png").into()),
                origin,
                split: Split::Train,
            })
            .collect()
    }

    #[test]
    fn fraction_counts() {
        assert_eq!(SyntheticFraction::Fraction(0.0).count(10), 0);
        assert_eq!(SyntheticFraction::Fraction(0.5).count(10), 5);
        assert_eq!(SyntheticFraction::Fraction(0.3).count(10), 3);
        assert_eq!(SyntheticFraction::Fraction(0.25).count(10), 3);
        assert_eq!(SyntheticFraction::Fraction(1.0).count(10), 10);
        assert_eq!(SyntheticFraction::All.count(7), 7);
    }

    #[test]
    fn merge_keeps_observed_and_prefix_of_synthetic() {
        let obs = records(4, Origin::Observed);
        let syn = records(10, Origin::Synthetic);
        let merged = merge_datasets(&obs, &syn, SyntheticFraction::Fraction(0.5));
        assert_eq!(merged.len(), 9);
        assert_eq!(&merged.records()[..4], obs.records());
        assert_eq!(&merged.records()[4..], &syn.records()[..5]);
        assert_eq!(merge_datasets(&obs, &syn, SyntheticFraction::Fraction(0.0)), obs);
    }

    #[test]
    fn sidecar_round_trip() {
        let specs = [
            DegradationSpec::BicubicX4,
            DegradationSpec::GaussianNoise { sigma: SIGMA_25 },
            DegradationSpec::BicubicX4PlusNoise {
                noise: NoiseModel::SignalDependent {
                    sigma_read: 0.01,
                    sigma_shot: 0.04,
                },
            },
            DegradationSpec::Learned {
                weights_path: "g/best.weights".into(),
            },
        ];
        for s in specs {
            let text = s.to_sidecar(Some("abc"));
            assert!(text.starts_with(&format!("kind={}", s.kind())));
            assert_eq!(DegradationSpec::parse_sidecar(&text).unwrap(), s);
        }
        assert!(DegradationSpec::parse_sidecar("kind=blur").is_err());
    }

    #[test]
    fn learned_spec_cannot_be_applied_analytically() {
        let spec = DegradationSpec::Learned {
            weights_path: "x".into(),
        };
        let img = ImageBuffer::filled(4, 4, 0.5);
        assert!(spec.apply(&img, &mut Rng::new(0)).is_err());
    }
}
