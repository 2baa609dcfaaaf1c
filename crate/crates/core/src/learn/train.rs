//! Minibatch training over rendered play sessions.
//!
//! Each anchor frame is paired with an adjacent frame from the same
//! session (the temporal positive). Both views get the attention-window
//! crop augmentation, then per-channel standardization. Utterances ride
//! along on anchor frames that have one.
//!
//! Per-anchor randomness is drawn in a fixed order (neighbor direction,
//! anchor crop, neighbor crop) so a run is reproducible from its seed
//! regardless of batch contents.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::model::{Batch, ModelConfig, ModelParams};
use super::optim::{AdamW, OptimConfig};
use super::scalar::Scalar;
use crate::render::{center_crop_augment, Image};
use crate::rng::{self, salt};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub temperature: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            temperature: 0.07,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            batch_size: 128,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        Ok(())
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..OptimConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Contrastive,
    /// Supervised reference: cross-entropy on the true category label.
    SupervisedOracle,
}

/// Borrowed view over a rendered training corpus: 8-bit frames in
/// session-major order plus per-frame utterance tokens and per-session
/// category labels.
pub struct TrainSet<'a> {
    pub resolution: usize,
    pub frames_per_session: usize,
    pub n_sessions: usize,
    pub images: &'a [u8],
    pub session_category: &'a [u32],
    pub utterances: &'a [Option<Vec<u32>>],
    pub channel_mean: [f32; 3],
    pub channel_std: [f32; 3],
}

impl<'a> TrainSet<'a> {
    pub fn frame_count(&self) -> usize {
        self.n_sessions * self.frames_per_session
    }

    pub fn validate(&self) -> Result<()> {
        let px = self.resolution * self.resolution * 3;
        if self.images.len() != self.frame_count() * px {
            return Err(Error::Config(format!(
                "image buffer holds {} bytes, expected {}",
                self.images.len(),
                self.frame_count() * px
            )));
        }
        if self.session_category.len() != self.n_sessions {
            return Err(Error::Config("one label per session required".into()));
        }
        if self.utterances.len() != self.frame_count() {
            return Err(Error::Config("one utterance slot per frame required".into()));
        }
        if self.channel_std.iter().any(|s| *s <= 0.0) {
            return Err(Error::Config("channel std must be positive".into()));
        }
        Ok(())
    }

    pub fn frame_image(&self, frame: usize) -> Image {
        let px = self.resolution * self.resolution * 3;
        Image::from_u8(self.resolution, &self.images[frame * px..(frame + 1) * px])
    }
}

/// Copy one augmented image into `rows` starting at pixel row `offset`,
/// standardizing each channel.
pub fn write_standardized<S: Scalar>(
    img: &Image,
    mean: &[f32; 3],
    std: &[f32; 3],
    rows: &mut Array2<S>,
    offset: usize,
) {
    let px = img.resolution * img.resolution;
    for p in 0..px {
        for c in 0..3 {
            let v = (img.data[p * 3 + c] - mean[c]) / std[c];
            rows[[offset + p, c]] = S::from_f64(v as f64);
        }
    }
}

/// Standardized single image as a (pixels, 3) matrix.
pub fn standardized_rows<S: Scalar>(img: &Image, mean: &[f32; 3], std: &[f32; 3]) -> Array2<S> {
    let px = img.resolution * img.resolution;
    let mut rows = Array2::zeros((px, 3));
    write_standardized(img, mean, std, &mut rows, 0);
    rows
}

/// Index of the temporal neighbor: the drawn direction, except at session
/// ends where only one side exists.
pub(crate) fn neighbor_index(t: usize, frames_per_session: usize, forward: bool) -> usize {
    if t == 0 {
        1
    } else if t == frames_per_session - 1 {
        t - 1
    } else if forward {
        t + 1
    } else {
        t - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub total: f64,
    pub cltt: f64,
    pub mmcl: f64,
    /// Fraction of anchors that carried an utterance.
    pub utterance_rate: f64,
}

pub struct TrainOutcome<S> {
    pub params: ModelParams<S>,
    pub trace: Vec<TraceRow>,
    /// Mean training accuracy in the final epoch (supervised mode only).
    pub oracle_accuracy: Option<f32>,
}

pub fn train<S: Scalar>(
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
    mode: TrainMode,
    data: &TrainSet,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    data.validate()?;
    if model_cfg.input_res != data.resolution {
        return Err(Error::Config("model and data resolution differ".into()));
    }
    let with_oracle = mode == TrainMode::SupervisedOracle;
    let mut params = ModelParams::<S>::init(model_cfg, with_oracle, cfg.seed)?;
    let mut opt = AdamW::new(&params, cfg.optim())?;
    let tau = S::from_f64(cfg.temperature);
    let fps = data.frames_per_session;
    let px = data.resolution * data.resolution;
    let n = cfg.batch_size;
    let views = if with_oracle { 1 } else { 2 };

    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut oracle_accuracy = None;
    for epoch in 0..cfg.epochs {
        let mut rng = rng::stream(cfg.seed, salt::TRAIN, epoch as u64);
        let mut order: Vec<u32> = (0..data.frame_count() as u32).collect();
        order.shuffle(&mut rng);

        let mut sums = (0.0f64, 0.0f64, 0.0f64);
        let mut batches = 0usize;
        let mut spoken = 0usize;
        let mut anchors = 0usize;
        let mut acc_sum = 0.0f32;
        for chunk in order.chunks_exact(n) {
            let mut images = Array2::<S>::zeros((views * n * px, 3));
            let mut utterances = Vec::new();
            let mut labels = Vec::with_capacity(n);
            for (i, &frame) in chunk.iter().enumerate() {
                let frame = frame as usize;
                let (session, t) = (frame / fps, frame % fps);
                labels.push(data.session_category[session]);
                // Fixed draw order per anchor; see module docs.
                let forward: bool = rng.random();
                let anchor = center_crop_augment(&data.frame_image(frame), &mut rng);
                write_standardized(
                    &anchor,
                    &data.channel_mean,
                    &data.channel_std,
                    &mut images,
                    i * px,
                );
                if !with_oracle {
                    let nt = neighbor_index(t, fps, forward);
                    let nframe = session * fps + nt;
                    let neighbor =
                        center_crop_augment(&data.frame_image(nframe), &mut rng);
                    write_standardized(
                        &neighbor,
                        &data.channel_mean,
                        &data.channel_std,
                        &mut images,
                        (n + i) * px,
                    );
                    if let Some(tokens) = &data.utterances[frame] {
                        utterances.push((i, tokens.clone()));
                        spoken += 1;
                    }
                }
            }
            anchors += n;

            if with_oracle {
                let (loss, acc, grads) =
                    params.oracle_grad(&images.view(), &labels).map_err(|e| match e {
                        Error::NonFinite(_) => Error::Diverged { epoch, loss: f64::NAN },
                        other => other,
                    })?;
                opt.step(&mut params, &grads);
                sums.0 += Scalar::to_f64(loss);
                acc_sum += acc;
            } else {
                let batch = Batch { images, n, utterances, labels };
                // A zero-norm embedding mid-run means the representation
                // collapsed; report it as divergence like a non-finite loss.
                let (parts, grads, caches) =
                    params.grad_full(&batch, tau).map_err(|e| match e {
                        Error::NonFinite(_) | Error::ZeroNorm(_) => {
                            Error::Diverged { epoch, loss: f64::NAN }
                        }
                        other => other,
                    })?;
                opt.step(&mut params, &grads);
                params.apply_bn_updates(&caches);
                sums.0 += Scalar::to_f64(parts.total);
                sums.1 += Scalar::to_f64(parts.cltt);
                sums.2 += Scalar::to_f64(parts.mmcl);
            }
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::Config(format!(
                "batch size {} exceeds the {} available frames",
                n,
                data.frame_count()
            )));
        }
        let row = TraceRow {
            epoch,
            total: sums.0 / batches as f64,
            cltt: sums.1 / batches as f64,
            mmcl: sums.2 / batches as f64,
            utterance_rate: spoken as f64 / anchors.max(1) as f64,
        };
        log::info!(
            "epoch {}: loss {:.4} (time {:.4}, speech {:.4}, spoken {:.2}%)",
            row.epoch,
            row.total,
            row.cltt,
            row.mmcl,
            100.0 * row.utterance_rate
        );
        if with_oracle {
            oracle_accuracy = Some(acc_sum / batches as f32);
        }
        trace.push(row);
    }
    Ok(TrainOutcome { params, trace, oracle_accuracy })
}
