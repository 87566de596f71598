//! L1 / Adam training loop with step-halving schedule, MixUp batches,
//! periodic central-crop validation and best-checkpoint tracking.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{load_image, random_augmented_patch, ImageBuffer, ImagePair};
use crate::manifest::DatasetManifest;
use crate::metrics::{evaluate_pair, MetricSummary, Restorer};
use crate::mixup::{mixup_batch, MixupConfig};
use crate::model::{ModelConfig, ModelWeights, Network, Tensor};
use crate::rng::{Rng, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patch_size: usize,
    pub total_iters: u64,
    pub lr_init: f64,
    pub lr_half_every: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub mixup: MixupConfig,
    pub validate_every: u64,
    /// Central crop used by validation.
    pub val_crop: usize,
    pub seed: u64,
    /// Worker threads for per-sample gradients; results do not depend on it.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            patch_size: 128,
            total_iters: 500_000,
            lr_init: 2e-4,
            lr_half_every: 100_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            mixup: MixupConfig::default(),
            validate_every: 1000,
            val_crop: 1000,
            seed: 0,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTrainConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.patch_size == 0 || self.patch_size % 4 != 0 {
            return bad(format!("patch_size {} must be a positive multiple of 4", self.patch_size));
        }
        if !(self.lr_init > 0.0) {
            return bad(format!("lr_init {} must be positive", self.lr_init));
        }
        if self.lr_half_every == 0 || self.validate_every == 0 {
            return bad("lr_half_every and validate_every must be positive".into());
        }
        if self.mixup.enabled {
            self.mixup.validate()?;
        }
        Ok(())
    }

    /// Short hex digest identifying a (model, training) configuration.
    pub fn config_hash(&self, model: &ModelConfig) -> String {
        let digest = Sha256::digest(format!("{model:?}|{self:?}").as_bytes());
        digest.iter().take(4).map(|b| format!("{b:02x}")).collect()
    }
}

/// Which way a pair is fed to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// LR in, HR target.
    Sr,
    /// HR in, LR target.
    Degradation,
}

/// Mean absolute difference over every sample of the batch.
pub fn l1_loss(pred: &[ImageBuffer], target: &[ImageBuffer]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} predictions, {} targets", pred.len(), target.len())));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(target) {
        if p.dims() != t.dims() {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", p.dims(), t.dims())));
        }
        sum += p
            .samples()
            .iter()
            .zip(t.samples())
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>();
        count += p.samples().len();
    }
    Ok(sum / count as f64)
}

/// `lr_init * 0.5^floor(iteration / lr_half_every)`.
pub fn lr_schedule(iteration: u64, config: &TrainConfig) -> f64 {
    config.lr_init * 0.5f64.powi((iteration / config.lr_half_every.max(1)) as i32)
}

/// Weights, Adam moments and early-stopping bookkeeping.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub weights: ModelWeights<T>,
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub iteration: u64,
    pub best_val_psnr: f64,
    pub best_iter: u64,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(weights: ModelWeights<T>) -> Self {
        let n = weights.len();
        Self {
            weights,
            first_moment: vec![T::zero(); n],
            second_moment: vec![T::zero(); n],
            iteration: 0,
            best_val_psnr: f64::NEG_INFINITY,
            best_iter: 0,
        }
    }
}

/// One bias-corrected Adam update; increments the iteration counter.
pub fn adam_step<T: Scalar>(state: &mut TrainState<T>, gradients: &[T], lr: f64, config: &TrainConfig) -> Result<()> {
    if gradients.len() != state.weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradients for {} parameters",
            gradients.len(),
            state.weights.len()
        )));
    }
    if let Some(i) = gradients.iter().position(|g| !g.is_finite()) {
        let parameter = state
            .weights
            .network()
            .params()
            .iter()
            .find(|s| i >= s.slot.offset && i < s.slot.offset + s.slot.len)
            .map(|s| s.name.clone())
            .unwrap_or_default();
        return Err(Error::NonFiniteGradient {
            iteration: state.iteration,
            parameter,
        });
    }
    let t = (state.iteration + 1) as i32;
    let b1 = T::from_f64_lossy(config.adam_beta1);
    let b2 = T::from_f64_lossy(config.adam_beta2);
    let c1 = T::from_f64_lossy(1.0 - config.adam_beta1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - config.adam_beta2.powi(t));
    let lr = T::from_f64_lossy(lr);
    let eps = T::from_f64_lossy(config.adam_eps);
    let one = T::one();
    let TrainState {
        weights,
        first_moment,
        second_moment,
        ..
    } = state;
    for (((w, m), v), &g) in weights
        .values_mut()
        .iter_mut()
        .zip(first_moment.iter_mut())
        .zip(second_moment.iter_mut())
        .zip(gradients)
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
    }
    state.iteration += 1;
    Ok(())
}

/// In-memory training pairs, oriented for the chosen direction.
#[derive(Debug, Clone)]
pub struct PairSource {
    pairs: Vec<ImagePair>,
}

impl PairSource {
    pub fn new(pairs: Vec<ImagePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self { pairs })
    }

    /// Loads every record; each must have an LR path.
    pub fn load(manifest: &DatasetManifest, direction: Direction) -> Result<Self> {
        let pairs = load_pairs(manifest, direction)?
            .into_iter()
            .map(|(_, p)| p)
            .collect();
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[ImagePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// `(image id, pair)` for each record, in manifest order.
pub fn load_pairs(manifest: &DatasetManifest, direction: Direction) -> Result<Vec<(String, ImagePair)>> {
    manifest
        .records()
        .iter()
        .map(|r| {
            let lr_path = r
                .lr_path
                .as_ref()
                .ok_or_else(|| Error::MissingCounterpart { hr: r.hr_path.clone() })?;
            let pair = ImagePair::new(load_image(lr_path)?, load_image(&r.hr_path)?)?;
            let pair = match direction {
                Direction::Sr => pair,
                Direction::Degradation => pair.swapped(),
            };
            Ok((r.image_id(), pair))
        })
        .collect()
}

/// `batch_size` records drawn with replacement, each dihedrally augmented
/// and patch-cropped, then MixUp per config.
pub fn assemble_batch(source: &PairSource, config: &TrainConfig, rng: &mut Rng) -> Result<Vec<ImagePair>> {
    if source.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let pair = &source.pairs[rng.below(source.len())];
        batch.push(random_augmented_patch(pair, config.patch_size, rng)?);
    }
    mixup_batch(batch, &config.mixup, rng)
}

/// Batch for a given iteration; depends only on the root seed and `iteration`.
pub fn batch_for_iteration(source: &PairSource, config: &TrainConfig, root: &Rng, iteration: u64) -> Result<Vec<ImagePair>> {
    let mut patch_rng = root.derive(Stream::Patch, iteration);
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let pair = &source.pairs[patch_rng.below(source.len())];
        batch.push(random_augmented_patch(pair, config.patch_size, &mut patch_rng)?);
    }
    let mut mix_rng = root.derive(Stream::Mixup, iteration);
    mixup_batch(batch, &config.mixup, &mut mix_rng)
}

/// L1 loss of the batch and its gradient with respect to every parameter.
///
/// Per-sample gradients are summed in batch order, so the result is
/// bitwise independent of the thread count.
pub fn batch_gradient<T: Scalar>(network: &Network, params: &[T], batch: &[ImagePair]) -> Result<(f64, Vec<T>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: usize = batch.iter().map(|p| p.lr().samples().len()).sum();
    let scale = T::from_f64_lossy(1.0 / total as f64);
    let sample = |pair: &ImagePair| -> Result<(f64, Vec<T>)> {
        let x = Tensor::<T>::from_image(pair.lr());
        let target = Tensor::<T>::from_image(pair.hr());
        let (pred, cache) = network.forward(params, &x)?;
        let mut abs_sum = 0.0;
        let mut dout = Tensor::zeros(pred.channels, pred.height, pred.width);
        for ((d, &p), &t) in dout.data.iter_mut().zip(&pred.data).zip(&target.data) {
            let diff = p - t;
            abs_sum += diff.abs().to_f64_lossy();
            *d = if diff > T::zero() {
                scale
            } else if diff < T::zero() {
                -scale
            } else {
                T::zero()
            };
        }
        let mut grads = vec![T::zero(); params.len()];
        network.backward(params, &cache, &dout, &mut grads)?;
        Ok((abs_sum, grads))
    };

    let chunk = rayon::current_num_threads().max(1);
    let mut loss_sum = 0.0;
    let mut grads = vec![T::zero(); params.len()];
    for group in batch.chunks(chunk) {
        let results: Vec<(f64, Vec<T>)> = if chunk == 1 {
            group.iter().map(sample).collect::<Result<_>>()?
        } else {
            group.par_iter().map(sample).collect::<Result<_>>()?
        };
        for (l, g) in results {
            loss_sum += l;
            for (a, b) in grads.iter_mut().zip(g) {
                *a = *a + b;
            }
        }
    }
    Ok((loss_sum / total as f64, grads))
}

/// Scores a restorer on loaded `(id, pair)` data with the central-crop protocol.
pub fn evaluate_pairs<R: Restorer + ?Sized>(model: &R, pairs: &[(String, ImagePair)], crop: usize) -> Result<MetricSummary> {
    let records = pairs
        .par_iter()
        .map(|(id, pair)| evaluate_pair(id.clone(), &model.restore(pair.lr())?, pair.hr(), crop))
        .collect::<Result<Vec<_>>>()?;
    MetricSummary::from_records(records)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_psnr: f64,
    pub val_ssim: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "iteration,learning_rate,train_loss,val_psnr,val_ssim";

impl LogRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:e},{:.8},{:.6},{:.6}",
            self.iteration, self.learning_rate, self.train_loss, self.val_psnr, self.val_ssim
        )
    }
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.to_csv_line());
        }
        out
    }

    /// Running maximum of `val_psnr`.
    pub fn best_val_psnr(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.val_psnr).reduce(f64::max)
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }
}

/// Where to write the incremental log and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct CheckpointPolicy {
    pub dir: Option<PathBuf>,
    /// Also save a checkpoint every this many iterations.
    pub every: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub best: ModelWeights<T>,
    pub last: ModelWeights<T>,
    pub log: TrainLog,
    pub best_iter: u64,
    pub best_val_psnr: f64,
}

/// Full training run.
///
/// Rows are logged at iteration 0, every `validate_every` iterations and at
/// the final iteration. `train_loss` of a row is the mean batch loss over
/// the steps since the previous row (for iteration 0, the loss of the first
/// batch at the initial weights).
pub fn train<T: Scalar>(
    train_manifest: &DatasetManifest,
    val_manifest: &DatasetManifest,
    model_config: ModelConfig,
    config: &TrainConfig,
    direction: Direction,
    checkpoints: &CheckpointPolicy,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    model_config.validate()?;
    let source = PairSource::load(train_manifest, direction)?;
    let val = load_pairs(val_manifest, direction)?;
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let root = Rng::new(config.seed);
    let weights = ModelWeights::<T>::init(model_config, &mut root.derive(Stream::Init, 0))?;
    train_from(weights, &source, &val, config, checkpoints)
}

/// Training loop on preloaded data, starting from `weights`.
pub fn train_from<T: Scalar>(
    weights: ModelWeights<T>,
    source: &PairSource,
    val: &[(String, ImagePair)],
    config: &TrainConfig,
    checkpoints: &CheckpointPolicy,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidTrainConfig(e.to_string()))?
            .install(|| run(weights, source, val, config, checkpoints)),
        None => run(weights, source, val, config, checkpoints),
    }
}

struct LogSink {
    dir: PathBuf,
    file: fs::File,
}

impl LogSink {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("train_log.csv");
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(file, "{LOG_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            dir: dir.to_owned(),
            file,
        })
    }

    fn append(&mut self, row: &LogRow) -> Result<()> {
        writeln!(self.file, "{}", row.to_csv_line()).map_err(|e| Error::io(self.dir.join("train_log.csv"), e))
    }
}

fn run<T: Scalar>(
    weights: ModelWeights<T>,
    source: &PairSource,
    val: &[(String, ImagePair)],
    config: &TrainConfig,
    checkpoints: &CheckpointPolicy,
) -> Result<TrainOutcome<T>> {
    let root = Rng::new(config.seed);
    let network = weights.network().clone();
    let hash = config.config_hash(weights.config());
    let mut sink = checkpoints.dir.as_deref().map(LogSink::create).transpose()?;
    let mut state = TrainState::new(weights);
    let mut best = state.weights.clone();
    let mut log = TrainLog::default();
    if config.total_iters == 0 {
        return Ok(TrainOutcome {
            last: state.weights,
            best,
            log,
            best_iter: 0,
            best_val_psnr: f64::NEG_INFINITY,
        });
    }

    let mut window_loss = 0.0;
    let mut window_steps = 0u64;
    while state.iteration <= config.total_iters {
        let it = state.iteration;
        let log_now = it % config.validate_every == 0 || it == config.total_iters;
        let step_result = if it < config.total_iters {
            let batch = batch_for_iteration(source, config, &root, it)?;
            Some(batch_gradient(&network, state.weights.values(), &batch)?)
        } else {
            None
        };
        if let Some((loss, _)) = &step_result {
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(it));
            }
        }

        if log_now {
            let train_loss = if it == 0 {
                step_result.as_ref().map(|r| r.0).unwrap_or(f64::NAN)
            } else {
                window_loss / window_steps.max(1) as f64
            };
            window_loss = 0.0;
            window_steps = 0;
            let summary = evaluate_pairs(&state.weights, val, config.val_crop)?;
            let row = LogRow {
                iteration: it,
                learning_rate: lr_schedule(it, config),
                train_loss,
                val_psnr: summary.mean_psnr.to_f64(),
                val_ssim: summary.mean_ssim,
            };
            if row.val_psnr > state.best_val_psnr {
                state.best_val_psnr = row.val_psnr;
                state.best_iter = it;
                best = state.weights.clone();
                if let Some(dir) = &checkpoints.dir {
                    best.save(dir.join("best.weights"))?;
                }
            }
            if let Some(s) = sink.as_mut() {
                s.append(&row)?;
            }
            log.rows.push(row);
        }
        if let (Some(every), Some(dir)) = (checkpoints.every, &checkpoints.dir) {
            if it > 0 && it % every == 0 {
                state.weights.save(dir.join(format!("ckpt_{it:08}_{hash}.weights")))?;
            }
        }

        let Some((loss, grads)) = step_result else { break };
        window_loss += loss;
        window_steps += 1;
        adam_step(&mut state, &grads, lr_schedule(it, config), config)?;
    }

    if let Some(dir) = &checkpoints.dir {
        state.weights.save(dir.join("final.weights"))?;
    }
    Ok(TrainOutcome {
        best,
        last: state.weights,
        log,
        best_iter: state.best_iter,
        best_val_psnr: state.best_val_psnr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_examples() {
        let a = ImageBuffer::filled(2, 2, 0.3);
        assert_eq!(l1_loss(&[a.clone()], &[a.clone()]).unwrap(), 0.0);
        let zero = ImageBuffer::filled(2, 2, 0.0);
        let one = ImageBuffer::filled(2, 2, 1.0);
        assert_eq!(l1_loss(&[zero.clone()], &[one.clone()]).unwrap(), 1.0);
        let half = ImageBuffer::filled(2, 2, 0.5);
        assert_eq!(l1_loss(&[zero, half.clone()], &[one, half]).unwrap(), 0.5);
        assert!(l1_loss(&[a.clone()], &[ImageBuffer::filled(2, 3, 0.0)]).is_err());
    }

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(0, &cfg), 2e-4);
        assert_eq!(lr_schedule(99_999, &cfg), 2e-4);
        assert_eq!(lr_schedule(100_000, &cfg), 1e-4);
        assert_eq!(lr_schedule(250_000, &cfg), 5e-5);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            patch_size: 30,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn scalar_state(w: f64) -> TrainState<f64> {
        let cfg = ModelConfig::tiny();
        let mut weights = ModelWeights::<f64>::zeros(cfg).unwrap();
        weights.values_mut()[0] = w;
        TrainState::new(weights)
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut state = scalar_state(0.0);
        let mut g = vec![0.0; state.weights.len()];
        g[0] = 1.0;
        adam_step(&mut state, &g, 0.1, &TrainConfig::default()).unwrap();
        assert!((state.weights.values()[0] - (-0.1 / (1.0 + 1e-8))).abs() < 1e-9);
        assert_eq!(state.iteration, 1);
        assert!(state.weights.values()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_zero_gradient_is_null_update() {
        let mut state = scalar_state(0.25);
        let before = state.weights.values().to_vec();
        let g = vec![0.0; state.weights.len()];
        adam_step(&mut state, &g, 0.1, &TrainConfig::default()).unwrap();
        assert_eq!(state.weights.values(), before.as_slice());
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn adam_rejects_bad_gradients() {
        let mut state = scalar_state(0.0);
        let mut g = vec![0.0; state.weights.len()];
        g[3] = f64::NAN;
        let err = adam_step(&mut state, &g, 0.1, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref parameter, .. } if parameter == "head.weight"));
        assert_eq!(state.iteration, 0);
        assert!(adam_step(&mut state, &[0.0; 3], 0.1, &TrainConfig::default()).is_err());
    }
}
