//! Adam training loop, evaluation and checkpointing.

pub mod adam;
pub mod checkpoint;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::Checkpoint;

use crate::ctc;
use crate::dataset::{Charset, WordSample};
use crate::error::{Error, Result};
use crate::imageproc::{compose_augmentations, default_policies, AugmentPolicy};
use crate::imageproc::{preprocess, GrayImage, NormalizedImage};
use crate::metrics::{EvalReport, ReportMeta, SampleRow};
use crate::metrics::{self, edit_distance};
use crate::network::{self, init_params, FrameMatrix, NetworkConfig, Parameters, FRAMES};
use crate::seed;

const SHUFFLE_TAG: u64 = 0x5_4ff1e;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Online augmentation policies; `None` selects the seven defaults, an
    /// empty list disables augmentation.
    pub augmentation: Option<Vec<AugmentPolicy>>,
    /// Stop after this many epochs without a validation-loss improvement.
    pub patience: Option<usize>,
    /// Rescale the batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
    /// Worker threads for per-sample work; 0 uses the global pool.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 0.001,
            max_epochs: 1000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            augmentation: None,
            patience: None,
            clip_norm: None,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("clip_norm must be positive".into()));
            }
        }
        self.policies().iter().try_for_each(AugmentPolicy::validate)
    }

    pub fn policies(&self) -> Vec<AugmentPolicy> {
        self.augmentation.clone().unwrap_or_else(default_policies)
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Network configuration, character set and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: NetworkConfig,
    pub charset: Charset,
    pub params: Parameters,
}

impl Model {
    pub fn new(config: NetworkConfig, charset: Charset, seed: u64) -> Result<Self> {
        if config.num_classes != charset.num_classes() {
            return Err(Error::CharsetMismatch(format!(
                "network has {} classes, charset {}",
                config.num_classes,
                charset.num_classes()
            )));
        }
        let params = init_params(&config, seed)?;
        Ok(Self { config, charset, params })
    }

    pub fn frames(&self, image: &NormalizedImage) -> Result<FrameMatrix> {
        network::forward(&self.params, image)
    }

    /// Preprocesses a raw crop and decodes it to text.
    pub fn predict(&self, image: &GrayImage, decoder: Decoder) -> Result<String> {
        let frames = self.frames(&preprocess(image))?;
        self.charset.decode(&decoder.decode(&frames))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoder {
    Greedy,
    Beam(usize),
}

impl Decoder {
    pub fn decode(self, frames: &FrameMatrix) -> Vec<usize> {
        match self {
            Decoder::Greedy => ctc::greedy_decode(frames),
            Decoder::Beam(w) => ctc::beam_decode(frames, w),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Decoder::Greedy => "greedy",
            Decoder::Beam(_) => "beam",
        }
    }

    pub fn beam_width(self) -> Option<usize> {
        match self {
            Decoder::Greedy => None,
            Decoder::Beam(w) => Some(w),
        }
    }
}

/// A word crop ready for training: raw pixels for augmentation, the
/// un-augmented network input, and encoded labels.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub id: String,
    pub transcript: String,
    pub raw: GrayImage,
    pub image: NormalizedImage,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub charset: Charset,
    pub samples: Vec<PreparedSample>,
}

impl Dataset {
    pub fn prepare<'a>(
        samples: impl IntoIterator<Item = &'a WordSample>,
        charset: &Charset,
    ) -> Result<Self> {
        let samples = samples
            .into_iter()
            .map(|s| {
                let labels = charset.encode(&s.transcript)?;
                ctc::check_producible(&labels, FRAMES)?;
                Ok(PreparedSample {
                    id: s.source_id.clone(),
                    transcript: s.transcript.clone(),
                    raw: s.image.clone(),
                    image: preprocess(&s.image),
                    labels,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            charset: charset.clone(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Model weights and optimizer moments evolving together.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        let adam = AdamState::new(&model.params);
        Self { model, adam }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sample CTC loss over the epoch.
    pub mean_loss: f64,
    pub batch_losses: Vec<f64>,
    pub steps: usize,
}

/// Sample order for `epoch`, a pure function of `(seed, epoch)`.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut seed::rng(seed::derive(&[seed, epoch as u64, SHUFFLE_TAG])));
    order
}

/// Seed for the augmentation draw of one sample in one epoch.
pub fn augmentation_seed(seed: u64, sample_id: &str, epoch: usize) -> u64 {
    seed::derive(&[seed, seed::hash_str(sample_id), epoch as u64])
}

fn sample_loss_and_grad(
    params: &Parameters,
    sample: &PreparedSample,
    policies: &[AugmentPolicy],
    aug_seed: u64,
) -> Result<(f64, Parameters)> {
    let augmented;
    let image = if policies.is_empty() {
        &sample.image
    } else {
        augmented = preprocess(&compose_augmentations(policies, &sample.raw, aug_seed));
        &augmented
    };
    let (frames, cache) = network::forward_cached(params, image)?;
    let ctc = ctc::ctc_grad(&frames, &sample.labels)?;
    let grads = network::backward_from_cache(params, &cache, &ctc.grad_logits)?;
    Ok((ctc.loss, grads))
}

fn global_norm(p: &Parameters) -> f64 {
    p.arrays()
        .iter()
        .flat_map(|(_, t)| t.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// One pass over `data` in shuffled mini-batches, one Adam step per batch.
pub fn train_epoch(
    state: &mut TrainState,
    data: &Dataset,
    epoch: usize,
    config: &TrainConfig,
) -> Result<EpochLog> {
    config.validate()?;
    if data.charset != state.model.charset {
        return Err(Error::CharsetMismatch(
            "training data and model use different character sets".into(),
        ));
    }
    let policies = config.policies();
    let hyper = config.hyper();
    let order = epoch_order(data.len(), config.seed, epoch);
    let mut batch_losses = Vec::new();
    let mut total = 0.0;
    for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
        let params = &state.model.params;
        let results: Vec<Result<(f64, Parameters)>> = chunk
            .par_iter()
            .map(|&i| {
                let s = &data.samples[i];
                sample_loss_and_grad(params, s, &policies, augmentation_seed(config.seed, &s.id, epoch))
            })
            .collect();
        let mut grads = params.zeros_like();
        let mut loss_sum = 0.0;
        for r in results {
            let (loss, g) = r.map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteLoss { epoch, batch },
                other => other,
            })?;
            loss_sum += loss;
            grads.add_assign(&g);
        }
        let n = chunk.len() as f64;
        let batch_loss = loss_sum / n;
        if !batch_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch });
        }
        grads.scale(1.0 / n);
        if let Some(c) = config.clip_norm {
            let norm = global_norm(&grads);
            if norm > c {
                grads.scale(c / norm);
            }
        }
        adam_step(&mut state.model.params, &grads, &mut state.adam, &hyper)?;
        total += loss_sum;
        batch_losses.push(batch_loss);
    }
    Ok(EpochLog {
        epoch,
        mean_loss: if data.is_empty() { 0.0 } else { total / data.len() as f64 },
        steps: batch_losses.len(),
        batch_losses,
    })
}

/// Loss, CER and WER of `model` on `data` without augmentation.
pub fn evaluate_split(model: &Model, split: &str, data: &Dataset, decoder: Decoder) -> Result<EvalReport> {
    if data.charset != model.charset {
        return Err(Error::CharsetMismatch(format!(
            "{split} split charset ({} symbols) differs from the model's ({} symbols)",
            data.charset.len(),
            model.charset.len()
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument(format!("{split} split is empty")));
    }
    let outputs: Vec<Result<(f64, String)>> = data
        .samples
        .par_iter()
        .map(|s| {
            let frames = model.frames(&s.image)?;
            let loss = ctc::ctc_loss(&frames, &s.labels)?;
            let hyp = model.charset.decode(&decoder.decode(&frames))?;
            Ok((loss, hyp))
        })
        .collect();
    let mut loss_sum = 0.0;
    let mut pairs = Vec::with_capacity(data.len());
    for (s, r) in data.samples.iter().zip(outputs) {
        let (loss, hyp) = r?;
        loss_sum += loss;
        pairs.push((s.transcript.clone(), hyp));
    }
    let samples = pairs
        .iter()
        .map(|(r, h)| SampleRow::new(r.clone(), h.clone(), edit_distance(r, h)))
        .collect();
    Ok(EvalReport {
        split: split.to_string(),
        decoder: decoder.name().to_string(),
        loss: loss_sum / data.len() as f64,
        cer: metrics::cer(&pairs)?,
        wer: metrics::wer(&pairs)?,
        samples,
        meta: ReportMeta {
            seed: 0,
            checkpoint: String::new(),
            beam_width: decoder.beam_width(),
            cer_denominator: "reference".into(),
            augmentation: "none".into(),
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_cer: f64,
    pub val_wer: f64,
}

pub const CURVE_HEADER: &str = "epoch,train_loss,val_loss,val_cer,val_wer";

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.val_loss, r.val_cer, r.val_wer
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Snapshot with the minimum validation loss (earliest on ties).
    pub best: Checkpoint,
    /// State after the final epoch.
    pub last: Checkpoint,
    pub curve: Vec<CurveRow>,
}

/// Trains from a fresh initialization seeded by `train.seed`.
pub fn fit(
    network: &NetworkConfig,
    train_cfg: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
    on_epoch: impl FnMut(&CurveRow) + Send,
) -> Result<FitResult> {
    train_cfg.validate()?;
    let model = Model::new(network.clone(), train.charset.clone(), train_cfg.seed)?;
    fit_from(TrainState::new(model), 0, train_cfg, train, val, on_epoch)
}

/// Continues training `state`, whose last completed epoch is `start_epoch`.
pub fn fit_from(
    state: TrainState,
    start_epoch: usize,
    train_cfg: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
    mut on_epoch: impl FnMut(&CurveRow) + Send,
) -> Result<FitResult> {
    train_cfg.validate()?;
    if train_cfg.max_epochs > start_epoch && val.is_empty() {
        return Err(Error::InvalidArgument("validation split is empty".into()));
    }
    let run = move || -> Result<FitResult> {
        let mut state = state;
        let snapshot = |s: &TrainState, epoch, best| Checkpoint {
            model: s.model.clone(),
            adam: s.adam.clone(),
            train: train_cfg.clone(),
            epoch,
            best_val_loss: best,
        };
        let mut best = snapshot(&state, start_epoch, None);
        let mut curve = Vec::new();
        let mut since_best = 0;
        for epoch in start_epoch + 1..=train_cfg.max_epochs {
            let log = train_epoch(&mut state, train, epoch, train_cfg)?;
            let report = evaluate_split(&state.model, "val", val, Decoder::Greedy)?;
            let row = CurveRow {
                epoch,
                train_loss: log.mean_loss,
                val_loss: report.loss,
                val_cer: report.cer,
                val_wer: report.wer,
            };
            on_epoch(&row);
            curve.push(row);
            if best.best_val_loss.map_or(true, |b| report.loss < b) {
                best = snapshot(&state, epoch, Some(report.loss));
                since_best = 0;
            } else {
                since_best += 1;
                if train_cfg.patience.is_some_and(|p| since_best >= p) {
                    break;
                }
            }
        }
        let last_epoch = curve.last().map_or(start_epoch, |r| r.epoch);
        let last = snapshot(&state, last_epoch, best.best_val_loss);
        Ok(FitResult { best, last, curve })
    };
    if train_cfg.threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(train_cfg.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run)
    }
}
