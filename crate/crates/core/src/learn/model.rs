//! The joint model: a small convolutional image encoder shared by three
//! projection heads (temporal, image-to-text, text), plus a mean-pooled
//! token embedding for utterances and an optional supervised classifier
//! head used by the labeled reference model.
//!
//! Images move through the network as flattened NHWC matrices (rows =
//! batch * height * width, columns = channels), so every layer reduces to
//! matrix products against the same buffers.

use ndarray::{Array2, ArrayView2, Axis};

use super::loss::{cltt_loss_grad, cross_entropy, mmcl_loss_grad};
use super::nn::{relu, relu_backward, BatchNorm1d, BnCache, Conv2d, Embedding, Linear};
use super::scalar::{lit, Scalar};
use crate::rng::{self, salt, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_res: usize,
    pub conv_channels: [usize; 3],
    pub conv_kernel: [usize; 3],
    pub conv_stride: [usize; 3],
    pub conv_pad: [usize; 3],
    pub feat_dim: usize,
    pub head_hidden: usize,
    pub proj_dim: usize,
    pub token_dim: usize,
    pub vocab_size: usize,
    pub n_categories: usize,
}

impl ModelConfig {
    /// The configuration used for real runs: 64x64 input, three strided
    /// convolutions down to 4x4, 128-d features.
    pub fn standard(vocab_size: usize, n_categories: usize) -> ModelConfig {
        ModelConfig {
            input_res: 64,
            conv_channels: [16, 32, 64],
            conv_kernel: [4, 3, 3],
            conv_stride: [4, 2, 2],
            conv_pad: [0, 1, 1],
            feat_dim: 128,
            head_hidden: 256,
            proj_dim: 64,
            token_dim: 64,
            vocab_size,
            n_categories,
        }
    }

    /// A miniature configuration for gradient checks: 8x8 input, 8-d
    /// features, small enough that exhaustive finite differencing is fast.
    pub fn tiny(vocab_size: usize, n_categories: usize) -> ModelConfig {
        ModelConfig {
            input_res: 8,
            conv_channels: [4, 6, 8],
            conv_kernel: [3, 3, 3],
            conv_stride: [2, 2, 2],
            conv_pad: [1, 1, 1],
            feat_dim: 8,
            head_hidden: 10,
            proj_dim: 6,
            token_dim: 6,
            vocab_size,
            n_categories,
        }
    }

    /// Spatial size after each convolution; index 0 is the input.
    pub fn spatial_dims(&self) -> [usize; 4] {
        let mut d = [self.input_res; 4];
        for i in 0..3 {
            d[i + 1] =
                (d[i] + 2 * self.conv_pad[i] - self.conv_kernel[i]) / self.conv_stride[i] + 1;
        }
        d
    }

    pub fn flat_dim(&self) -> usize {
        let d = self.spatial_dims()[3];
        d * d * self.conv_channels[2]
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.spatial_dims();
        for (i, dim) in d.iter().enumerate() {
            if *dim == 0 {
                return Err(Error::Config(format!(
                    "convolution stage {} collapses to zero spatial size",
                    i
                )));
            }
        }
        for i in 0..3 {
            if self.conv_kernel[i] == 0 || self.conv_stride[i] == 0 {
                return Err(Error::Config("zero kernel or stride".into()));
            }
        }
        if self.vocab_size == 0 || self.n_categories < 2 {
            return Err(Error::Config("need a vocabulary and at least 2 categories".into()));
        }
        if self.feat_dim == 0 || self.proj_dim == 0 || self.head_hidden == 0 {
            return Err(Error::Config("zero-width layer".into()));
        }
        Ok(())
    }
}

/// Projection head: linear -> batchnorm -> relu -> linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<S> {
    pub lin1: Linear<S>,
    pub bn: BatchNorm1d<S>,
    pub lin2: Linear<S>,
}

pub struct HeadCache<S> {
    x: Array2<S>,
    bn: BnCache<S>,
    r: Array2<S>,
}

impl<S: Scalar> Head<S> {
    fn init(feat: usize, hidden: usize, proj: usize, rng: &mut Stream) -> Self {
        Head {
            lin1: Linear::init(feat, hidden, rng),
            bn: BatchNorm1d::new(hidden),
            lin2: Linear::init(hidden, proj, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        Head {
            lin1: self.lin1.zeros_like(),
            bn: self.bn.zeros_like(),
            lin2: self.lin2.zeros_like(),
        }
    }

    pub fn forward_train(&self, x: &ArrayView2<S>) -> (Array2<S>, HeadCache<S>) {
        let a = self.lin1.forward(x);
        let (y, bn) = self.bn.forward_train(&a.view());
        let r = relu(&y);
        let z = self.lin2.forward(&r.view());
        (z, HeadCache { x: x.to_owned(), bn, r })
    }

    pub fn forward_eval(&self, x: &ArrayView2<S>) -> Array2<S> {
        let a = self.lin1.forward(x);
        let y = self.bn.forward_eval(&a.view());
        let r = relu(&y);
        self.lin2.forward(&r.view())
    }

    pub fn backward(
        &self,
        cache: &HeadCache<S>,
        dz: &ArrayView2<S>,
        gacc: &mut Head<S>,
    ) -> Array2<S> {
        let dr = self.lin2.backward(&cache.r.view(), dz, &mut gacc.lin2);
        let dy = relu_backward(&cache.r, &dr);
        let da = self.bn.backward(&cache.bn, &dy.view(), &mut gacc.bn);
        self.lin1.backward(&cache.x.view(), &da.view(), &mut gacc.lin1)
    }
}

/// Three strided convolutions with relu, flattened into one linear layer.
/// No normalization layers, so training and evaluation forward passes are
/// identical: frozen-encoder feature extraction needs no mode switch.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionEncoder<S> {
    pub convs: Vec<Conv2d<S>>,
    pub fc: Linear<S>,
    pub input_res: usize,
}

pub struct VisionCache<S> {
    cols: Vec<Array2<S>>,
    act1: Array2<S>,
    act2: Array2<S>,
    fc_in: Array2<S>,
    dims: [usize; 4],
    batch: usize,
}

impl<S: Scalar> VisionEncoder<S> {
    fn init(cfg: &ModelConfig, rng: &mut Stream) -> Self {
        let mut convs = Vec::with_capacity(3);
        let mut in_c = 3;
        for i in 0..3 {
            convs.push(Conv2d::init(
                in_c,
                cfg.conv_channels[i],
                cfg.conv_kernel[i],
                cfg.conv_stride[i],
                cfg.conv_pad[i],
                rng,
            ));
            in_c = cfg.conv_channels[i];
        }
        let fc = Linear::init(cfg.flat_dim(), cfg.feat_dim, rng);
        VisionEncoder { convs, fc, input_res: cfg.input_res }
    }

    fn zeros_like(&self) -> Self {
        VisionEncoder {
            convs: self.convs.iter().map(|c| c.zeros_like()).collect(),
            fc: self.fc.zeros_like(),
            input_res: self.input_res,
        }
    }

    fn dims(&self) -> [usize; 4] {
        let mut d = [self.input_res; 4];
        for i in 0..3 {
            d[i + 1] = self.convs[i].out_dim(d[i]);
        }
        d
    }

    pub fn forward_train(&self, x: &ArrayView2<S>, batch: usize) -> (Array2<S>, VisionCache<S>) {
        let d = self.dims();
        assert_eq!(x.nrows(), batch * d[0] * d[0], "image rows mismatch");
        let (y1, c1) = self.convs[0].forward(x, batch, d[0], d[0]);
        let act1 = relu(&y1);
        let (y2, c2) = self.convs[1].forward(&act1.view(), batch, d[1], d[1]);
        let act2 = relu(&y2);
        let (y3, c3) = self.convs[2].forward(&act2.view(), batch, d[2], d[2]);
        let act3 = relu(&y3);
        let flat = d[3] * d[3] * self.convs[2].out_c;
        let fc_in = act3.into_shape_with_order((batch, flat)).unwrap();
        let feats = self.fc.forward(&fc_in.view());
        (feats, VisionCache { cols: vec![c1, c2, c3], act1, act2, fc_in, dims: d, batch })
    }

    pub fn encode(&self, x: &ArrayView2<S>, batch: usize) -> Array2<S> {
        self.forward_train(x, batch).0
    }

    pub fn backward(&self, cache: &VisionCache<S>, dfeats: &ArrayView2<S>, gacc: &mut Self) {
        let d = cache.dims;
        let b = cache.batch;
        let c3 = self.convs[2].out_c;
        let dflat = self.fc.backward(&cache.fc_in.view(), dfeats, &mut gacc.fc);
        let mut d3 = dflat.into_shape_with_order((b * d[3] * d[3], c3)).unwrap();
        // Relu mask for stage 3 against the (reshaped) activations.
        let a3 = cache.fc_in.view().into_shape_with_order((b * d[3] * d[3], c3)).unwrap();
        d3.zip_mut_with(&a3, |g, v| {
            if *v <= S::zero() {
                *g = S::zero();
            }
        });
        let mut d2 =
            self.convs[2].backward(&cache.cols[2], &d3.view(), b, d[2], d[2], &mut gacc.convs[2]);
        d2.zip_mut_with(&cache.act2, |g, v| {
            if *v <= S::zero() {
                *g = S::zero();
            }
        });
        let mut d1 =
            self.convs[1].backward(&cache.cols[1], &d2.view(), b, d[1], d[1], &mut gacc.convs[1]);
        d1.zip_mut_with(&cache.act1, |g, v| {
            if *v <= S::zero() {
                *g = S::zero();
            }
        });
        let _ = self.convs[0].backward(&cache.cols[0], &d1.view(), b, d[0], d[0], &mut gacc.convs[0]);
    }
}

/// All trainable state. A gradient accumulator is simply another
/// `ModelParams` with the same shapes, built by [`ModelParams::zeros_like`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub cfg: ModelConfig,
    pub vision: VisionEncoder<S>,
    /// Temporal projection over anchor/neighbor features.
    pub g1: Head<S>,
    /// Image-side projection into the shared image/text space.
    pub g2: Head<S>,
    /// Text-side projection into the shared image/text space.
    pub g3: Head<S>,
    pub embed: Embedding<S>,
    pub oracle: Option<Linear<S>>,
}

/// One training batch. Image rows hold the anchors first, then their
/// temporal neighbors, so row i pairs with row i + n. Utterances attach to
/// anchor indices.
pub struct Batch<S> {
    pub images: Array2<S>,
    pub n: usize,
    pub utterances: Vec<(usize, Vec<u32>)>,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<S> {
    pub total: S,
    pub cltt: S,
    /// Unweighted multimodal mean; the total applies the k/n weight.
    pub mmcl: S,
    /// Utterances present in the batch. Below 2 the multimodal term is
    /// skipped (a lone pair has no negatives).
    pub k: usize,
}

pub struct HeadBnCaches<S> {
    pub g1: BnCache<S>,
    pub g2: Option<BnCache<S>>,
    pub g3: Option<BnCache<S>>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn init(cfg: ModelConfig, with_oracle: bool, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::stream(seed, salt::INIT, 0);
        let vision = VisionEncoder::init(&cfg, &mut rng);
        let g1 = Head::init(cfg.feat_dim, cfg.head_hidden, cfg.proj_dim, &mut rng);
        let g2 = Head::init(cfg.feat_dim, cfg.head_hidden, cfg.proj_dim, &mut rng);
        let g3 = Head::init(cfg.token_dim, cfg.head_hidden, cfg.proj_dim, &mut rng);
        let embed = Embedding::init(cfg.vocab_size, cfg.token_dim, &mut rng);
        let oracle = if with_oracle {
            Some(Linear::init(cfg.feat_dim, cfg.n_categories, &mut rng))
        } else {
            None
        };
        Ok(ModelParams { cfg, vision, g1, g2, g3, embed, oracle })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            cfg: self.cfg,
            vision: self.vision.zeros_like(),
            g1: self.g1.zeros_like(),
            g2: self.g2.zeros_like(),
            g3: self.g3.zeros_like(),
            embed: self.embed.zeros_like(),
            oracle: self.oracle.as_ref().map(|o| o.zeros_like()),
        }
    }

    /// Flat views over every trainable tensor, in a fixed order. The bool
    /// marks whether weight decay applies (everything except normalization
    /// parameters and the token embedding table).
    pub fn visit_params(&self) -> Vec<(String, bool, &[S])> {
        let mut out: Vec<(String, bool, &[S])> = Vec::new();
        for (i, c) in self.vision.convs.iter().enumerate() {
            out.push((format!("conv{}.w", i + 1), true, c.w.as_slice().unwrap()));
            out.push((format!("conv{}.b", i + 1), true, c.b.as_slice().unwrap()));
        }
        out.push(("fc.w".into(), true, self.vision.fc.w.as_slice().unwrap()));
        out.push(("fc.b".into(), true, self.vision.fc.b.as_slice().unwrap()));
        for (name, h) in [("g1", &self.g1), ("g2", &self.g2), ("g3", &self.g3)] {
            out.push((format!("{name}.lin1.w"), true, h.lin1.w.as_slice().unwrap()));
            out.push((format!("{name}.lin1.b"), true, h.lin1.b.as_slice().unwrap()));
            out.push((format!("{name}.bn.gamma"), false, h.bn.gamma.as_slice().unwrap()));
            out.push((format!("{name}.bn.beta"), false, h.bn.beta.as_slice().unwrap()));
            out.push((format!("{name}.lin2.w"), true, h.lin2.w.as_slice().unwrap()));
            out.push((format!("{name}.lin2.b"), true, h.lin2.b.as_slice().unwrap()));
        }
        out.push(("embed.table".into(), false, self.embed.table.as_slice().unwrap()));
        if let Some(o) = &self.oracle {
            out.push(("oracle.w".into(), true, o.w.as_slice().unwrap()));
            out.push(("oracle.b".into(), true, o.b.as_slice().unwrap()));
        }
        out
    }

    /// Mutable counterpart of [`ModelParams::visit_params`]; same order.
    pub fn visit_params_mut(&mut self) -> Vec<(String, bool, &mut [S])> {
        let ModelParams { vision, g1, g2, g3, embed, oracle, .. } = self;
        let mut out: Vec<(String, bool, &mut [S])> = Vec::new();
        for (i, c) in vision.convs.iter_mut().enumerate() {
            out.push((format!("conv{}.w", i + 1), true, c.w.as_slice_mut().unwrap()));
            out.push((format!("conv{}.b", i + 1), true, c.b.as_slice_mut().unwrap()));
        }
        out.push(("fc.w".into(), true, vision.fc.w.as_slice_mut().unwrap()));
        out.push(("fc.b".into(), true, vision.fc.b.as_slice_mut().unwrap()));
        for (name, h) in [("g1", g1), ("g2", g2), ("g3", g3)] {
            out.push((format!("{name}.lin1.w"), true, h.lin1.w.as_slice_mut().unwrap()));
            out.push((format!("{name}.lin1.b"), true, h.lin1.b.as_slice_mut().unwrap()));
            out.push((format!("{name}.bn.gamma"), false, h.bn.gamma.as_slice_mut().unwrap()));
            out.push((format!("{name}.bn.beta"), false, h.bn.beta.as_slice_mut().unwrap()));
            out.push((format!("{name}.lin2.w"), true, h.lin2.w.as_slice_mut().unwrap()));
            out.push((format!("{name}.lin2.b"), true, h.lin2.b.as_slice_mut().unwrap()));
        }
        out.push(("embed.table".into(), false, embed.table.as_slice_mut().unwrap()));
        if let Some(o) = oracle {
            out.push(("oracle.w".into(), true, o.w.as_slice_mut().unwrap()));
            out.push(("oracle.b".into(), true, o.b.as_slice_mut().unwrap()));
        }
        out
    }

    /// Non-trainable state: batchnorm running statistics.
    pub fn visit_buffers(&self) -> Vec<(String, &[S])> {
        let mut out: Vec<(String, &[S])> = Vec::new();
        for (name, h) in [("g1", &self.g1), ("g2", &self.g2), ("g3", &self.g3)] {
            out.push((format!("{name}.bn.running_mean"), h.bn.running_mean.as_slice().unwrap()));
            out.push((format!("{name}.bn.running_var"), h.bn.running_var.as_slice().unwrap()));
        }
        out
    }

    pub fn visit_buffers_mut(&mut self) -> Vec<(String, &mut [S])> {
        let ModelParams { g1, g2, g3, .. } = self;
        let mut out: Vec<(String, &mut [S])> = Vec::new();
        for (name, h) in [("g1", g1), ("g2", g2), ("g3", g3)] {
            out.push((
                format!("{name}.bn.running_mean"),
                h.bn.running_mean.as_slice_mut().unwrap(),
            ));
            out.push((format!("{name}.bn.running_var"), h.bn.running_var.as_slice_mut().unwrap()));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.visit_params().iter().map(|(_, _, s)| s.len()).sum()
    }

    /// Encoder features for a stack of images (rows = batch * res * res).
    pub fn encode(&self, images: &ArrayView2<S>, batch: usize) -> Array2<S> {
        self.vision.encode(images, batch)
    }

    /// Eval-mode text embedding in the shared projection space.
    pub fn text_embedding(&self, token_lists: &[Vec<u32>]) -> Array2<S> {
        let pooled = self.embed.forward(token_lists);
        self.g3.forward_eval(&pooled.view())
    }

    /// Joint loss without gradients; batch statistics, no running updates.
    pub fn total_loss(&self, batch: &Batch<S>, temperature: S) -> Result<LossParts<S>> {
        self.grad_full(batch, temperature).map(|(parts, _, _)| parts)
    }

    /// Joint loss, gradients, and the batchnorm caches the training loop
    /// needs to update running statistics. Pure: `self` is untouched.
    pub fn grad_full(
        &self,
        batch: &Batch<S>,
        temperature: S,
    ) -> Result<(LossParts<S>, ModelParams<S>, HeadBnCaches<S>)> {
        let px = self.cfg.input_res * self.cfg.input_res;
        let n = batch.n;
        assert_eq!(batch.images.nrows(), 2 * n * px, "expected anchor+neighbor rows");
        let mut gacc = self.zeros_like();

        let (feats, vcache) = self.vision.forward_train(&batch.images.view(), 2 * n);
        let (z1, c1) = self.g1.forward_train(&feats.view());
        let (l_cltt, dz1) = cltt_loss_grad(&z1.view(), temperature)?;
        let mut dfeats = self.g1.backward(&c1, &dz1.view(), &mut gacc.g1);

        let k = batch.utterances.len();
        let mut l_mmcl = S::zero();
        let mut bn2 = None;
        let mut bn3 = None;
        if k >= 2 {
            let anchor_idx: Vec<usize> = batch.utterances.iter().map(|(i, _)| *i).collect();
            let tokens: Vec<Vec<u32>> =
                batch.utterances.iter().map(|(_, t)| t.clone()).collect();
            let anchor_feats = feats.select(Axis(0), &anchor_idx);
            let (z2, c2) = self.g2.forward_train(&anchor_feats.view());
            let pooled = self.embed.forward(&tokens);
            let (z3, c3) = self.g3.forward_train(&pooled.view());
            let (l, mut dz2, mut dz3) = mmcl_loss_grad(&z2.view(), &z3.view(), temperature)?;
            l_mmcl = l;
            let w = lit::<S>(k as f64 / n as f64);
            dz2 *= w;
            dz3 *= w;
            let danchor = self.g2.backward(&c2, &dz2.view(), &mut gacc.g2);
            let dpooled = self.g3.backward(&c3, &dz3.view(), &mut gacc.g3);
            self.embed.backward(&tokens, &dpooled.view(), &mut gacc.embed);
            for (row, &i) in anchor_idx.iter().enumerate() {
                let src = danchor.row(row);
                let mut dst = dfeats.row_mut(i);
                for j in 0..dst.len() {
                    dst[j] += src[j];
                }
            }
            bn2 = Some(c2.bn);
            bn3 = Some(c3.bn);
        } else if k == 1 {
            log::debug!("single utterance in batch; multimodal term skipped");
        }

        self.vision.backward(&vcache, &dfeats.view(), &mut gacc.vision);

        let total = l_cltt + lit::<S>(k as f64 / n as f64) * l_mmcl;
        if !total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss cltt={} mmcl={}",
                l_cltt, l_mmcl
            )));
        }
        let parts = LossParts { total, cltt: l_cltt, mmcl: l_mmcl, k };
        Ok((parts, gacc, HeadBnCaches { g1: c1.bn, g2: bn2, g3: bn3 }))
    }

    pub fn grad(&self, batch: &Batch<S>, temperature: S) -> Result<(LossParts<S>, ModelParams<S>)> {
        self.grad_full(batch, temperature).map(|(p, g, _)| (p, g))
    }

    /// Supervised path: cross-entropy from encoder features through the
    /// classifier head. Images are single views (no neighbor rows).
    pub fn oracle_grad(
        &self,
        images: &ArrayView2<S>,
        labels: &[u32],
    ) -> Result<(S, f32, ModelParams<S>)> {
        let oracle = self
            .oracle
            .as_ref()
            .ok_or_else(|| Error::Config("model has no classifier head".into()))?;
        let px = self.cfg.input_res * self.cfg.input_res;
        let n = labels.len();
        assert_eq!(images.nrows(), n * px);
        let mut gacc = self.zeros_like();
        let (feats, vcache) = self.vision.forward_train(images, n);
        let logits = oracle.forward(&feats.view());
        let (loss, dlogits, acc) = cross_entropy(&logits.view(), labels);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("supervised loss {}", loss)));
        }
        let dfeats =
            oracle.backward(&feats.view(), &dlogits.view(), gacc.oracle.as_mut().unwrap());
        self.vision.backward(&vcache, &dfeats.view(), &mut gacc.vision);
        Ok((loss, acc, gacc))
    }

    /// Classifier accuracy on a stack of single-view images.
    pub fn oracle_accuracy(&self, images: &ArrayView2<S>, labels: &[u32]) -> Result<f32> {
        let oracle = self
            .oracle
            .as_ref()
            .ok_or_else(|| Error::Config("model has no classifier head".into()))?;
        let px = self.cfg.input_res * self.cfg.input_res;
        let n = labels.len();
        assert_eq!(images.nrows(), n * px);
        let feats = self.vision.encode(images, n);
        let logits = oracle.forward(&feats.view());
        let mut correct = 0usize;
        for (row, label) in logits.rows().into_iter().zip(labels) {
            let mut argmax = 0usize;
            for (k, v) in row.iter().enumerate() {
                if *v > row[argmax] {
                    argmax = k;
                }
            }
            if argmax == *label as usize {
                correct += 1;
            }
        }
        Ok(correct as f32 / n as f32)
    }

    /// Apply the batchnorm running-statistic updates from a real training
    /// step.
    pub fn apply_bn_updates(&mut self, caches: &HeadBnCaches<S>) {
        self.g1.bn.update_running(&caches.g1);
        if let Some(c) = &caches.g2 {
            self.g2.bn.update_running(c);
        }
        if let Some(c) = &caches.g3 {
            self.g3.bn.update_running(c);
        }
    }

    /// Upper bound on the encoder's Lipschitz constant: product over
    /// layers of ||W||_F times the patch-overlap factor sqrt(ceil(k/s)^2)
    /// (each input pixel lands in at most that many patches). Relu is
    /// 1-Lipschitz. Useful as a divergence diagnostic.
    pub fn lipschitz_bound(&self) -> f64 {
        let mut bound = 1.0f64;
        for c in &self.vision.convs {
            let overlap = c.k.div_ceil(c.stride);
            let fr: f64 = c
                .w
                .iter()
                .map(|v| {
                    let x = Scalar::to_f64(*v);
                    x * x
                })
                .sum::<f64>()
                .sqrt();
            bound *= overlap as f64 * fr;
        }
        let fc: f64 = self
            .vision
            .fc
            .w
            .iter()
            .map(|v| {
                let x = Scalar::to_f64(*v);
                x * x
            })
            .sum::<f64>()
            .sqrt();
        bound * fc
    }
}
