//! Frozen-encoder evaluation: instance splits, linear probes over encoder
//! features, and the block structure of the learned text space.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::lang::{tokenize, Template, Vocabulary};
use crate::learn::loss::cross_entropy;
use crate::learn::nn::Linear;
use crate::learn::train::write_standardized;
use crate::learn::ModelParams;
use crate::rng::{self, salt};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Instance splits

/// One repeat of the instance-level split: two thirds of each category's
/// instances are seen in training, the rest are held out for category
/// generalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub repeat_id: u32,
    pub train_instances: Vec<u32>,
    pub test_instances: Vec<u32>,
}

pub fn make_splits(
    n_instances: usize,
    instances_per_category: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Split>> {
    let m = instances_per_category;
    if m < 3 {
        return Err(Error::Config(
            "need at least 3 instances per category to split 2:1".into(),
        ));
    }
    if n_instances == 0 || n_instances % m != 0 {
        return Err(Error::Config(format!(
            "{} instances do not divide into categories of {}",
            n_instances, m
        )));
    }
    let n_train = 2 * m / 3;
    let mut splits = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = rng::stream(seed, salt::SPLIT, r as u64);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for cat in 0..n_instances / m {
            let mut ids: Vec<u32> = (0..m as u32).map(|i| (cat * m) as u32 + i).collect();
            ids.shuffle(&mut rng);
            train.extend_from_slice(&ids[..n_train]);
            test.extend_from_slice(&ids[n_train..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        splits.push(Split { repeat_id: r as u32, train_instances: train, test_instances: test });
    }
    Ok(splits)
}

// ---------------------------------------------------------------------------
// Feature sets

/// Encoder features with their provenance, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Array2<f32>,
    pub instance: Vec<u32>,
    pub category: Vec<u32>,
}

impl FeatureSet {
    pub fn validate(&self) -> Result<()> {
        if self.features.nrows() != self.instance.len()
            || self.features.nrows() != self.category.len()
        {
            return Err(Error::Config("feature rows and labels disagree".into()));
        }
        Ok(())
    }

    fn rows_for(&self, keep: &dyn Fn(u32) -> bool) -> Vec<usize> {
        (0..self.instance.len()).filter(|i| keep(self.instance[*i])).collect()
    }
}

/// Run frames through the frozen encoder in batches. `instance` and
/// `category` give one label per frame.
pub fn extract_features(
    params: &ModelParams<f32>,
    resolution: usize,
    images: &[u8],
    instance: &[u32],
    category: &[u32],
    channel_mean: [f32; 3],
    channel_std: [f32; 3],
) -> Result<FeatureSet> {
    let px = resolution * resolution;
    let frame_bytes = px * 3;
    if images.len() % frame_bytes != 0 {
        return Err(Error::Config("image buffer is not whole frames".into()));
    }
    let n = images.len() / frame_bytes;
    if n != instance.len() || n != category.len() {
        return Err(Error::Config("one label pair per frame required".into()));
    }
    let chunk = 256usize;
    let mut features = Array2::<f32>::zeros((n, params.cfg.feat_dim));
    let mut start = 0usize;
    while start < n {
        let count = chunk.min(n - start);
        let mut rows = Array2::<f32>::zeros((count * px, 3));
        for i in 0..count {
            let f = start + i;
            let img = crate::render::Image::from_u8(
                resolution,
                &images[f * frame_bytes..(f + 1) * frame_bytes],
            );
            write_standardized(&img, &channel_mean, &channel_std, &mut rows, i * px);
        }
        let feats = params.encode(&rows.view(), count);
        features.slice_mut(ndarray::s![start..start + count, ..]).assign(&feats);
        start += count;
    }
    Ok(FeatureSet { features, instance: instance.to_vec(), category: category.to_vec() })
}

// ---------------------------------------------------------------------------
// Linear probes

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { epochs: 20, batch_size: 256, learning_rate: 1e-2, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeTask {
    Category,
    Instance,
}

impl std::fmt::Display for ProbeTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProbeTask::Category => write!(f, "category"),
            ProbeTask::Instance => write!(f, "instance"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub task: ProbeTask,
    pub repeat_id: u32,
    pub accuracy: f32,
}

/// A fitted linear probe plus the feature standardization it was trained
/// under. Test features must pass through the same transform.
struct Probe {
    lin: Linear<f32>,
    mean: Vec<f32>,
    std: Vec<f32>,
}

impl Probe {
    fn standardize(&self, x: &Array2<f32>) -> Array2<f32> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    fn accuracy(&self, x: &Array2<f32>, y: &[u32]) -> f32 {
        let logits = self.lin.forward(&self.standardize(x).view());
        let mut correct = 0usize;
        for (row, label) in logits.rows().into_iter().zip(y) {
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
        correct as f32 / y.len().max(1) as f32
    }
}

/// Minibatch Adam on a single linear layer (softmax regression) over
/// standardized features. The problem is convex, so the weights start at
/// zero; the stream only orders the minibatches.
fn train_probe(
    x: &Array2<f32>,
    y: &[u32],
    n_classes: usize,
    cfg: &ProbeConfig,
    stream_index: u64,
) -> Result<Probe> {
    let n = x.nrows();
    assert_eq!(n, y.len());
    if n == 0 {
        return Err(Error::Config("empty probe training set".into()));
    }
    let dim = x.ncols();
    let mut mean = vec![0.0f32; dim];
    let mut std = vec![0.0f32; dim];
    for j in 0..dim {
        let col = x.column(j);
        let m = col.sum() as f64 / n as f64;
        let var = col.iter().map(|v| (*v as f64 - m).powi(2)).sum::<f64>() / n as f64;
        mean[j] = m as f32;
        std[j] = (var.sqrt() as f32).max(1e-4);
    }
    let mut probe = Probe { lin: Linear::<f32>::zeros(dim, n_classes), mean, std };
    let xs = probe.standardize(x);

    let mut rng = rng::stream(cfg.seed, salt::PROBE, stream_index);
    let (mut mw, mut vw) = (probe.lin.zeros_like(), probe.lin.zeros_like());
    let (b1, b2, eps) = (0.9f32, 0.999f32, 1e-8f32);
    let lr = cfg.learning_rate as f32;
    let mut t = 0i32;
    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select(Axis(0), chunk);
            let yb: Vec<u32> = chunk.iter().map(|i| y[*i]).collect();
            let logits = probe.lin.forward(&xb.view());
            let (loss, dlogits, _) = cross_entropy(&logits.view(), &yb);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("probe loss {}", loss)));
            }
            let mut gacc = probe.lin.zeros_like();
            let _ = probe.lin.backward(&xb.view(), &dlogits.view(), &mut gacc);
            t += 1;
            let (bc1, bc2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
            for (p, (m, (v, g))) in probe.lin.w.iter_mut().zip(
                mw.w.iter_mut().zip(vw.w.iter_mut().zip(gacc.w.iter())),
            ) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
            for (p, (m, (v, g))) in probe.lin.b.iter_mut().zip(
                mw.b.iter_mut().zip(vw.b.iter_mut().zip(gacc.b.iter())),
            ) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
        }
    }
    Ok(probe)
}

/// Category probe: fit on frames of the split's training instances, score
/// on held-out instances' held-out viewpoints. Chance is 1/n_categories.
pub fn probe_category(
    train: &FeatureSet,
    test: &FeatureSet,
    split: &Split,
    n_categories: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    train.validate()?;
    test.validate()?;
    let train_set: std::collections::HashSet<u32> =
        split.train_instances.iter().copied().collect();
    let test_set: std::collections::HashSet<u32> =
        split.test_instances.iter().copied().collect();
    let tr_rows = train.rows_for(&|i| train_set.contains(&i));
    let te_rows = test.rows_for(&|i| test_set.contains(&i));
    if te_rows.is_empty() {
        return Err(Error::Config("no test rows for category probe".into()));
    }
    let xtr = train.features.select(Axis(0), &tr_rows);
    let ytr: Vec<u32> = tr_rows.iter().map(|i| train.category[*i]).collect();
    let mut present = vec![false; n_categories];
    for c in &ytr {
        present[*c as usize] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::MissingClass(missing as u32));
    }
    let probe = train_probe(&xtr, &ytr, n_categories, cfg, u64::from(split.repeat_id) * 2)?;
    let xte = test.features.select(Axis(0), &te_rows);
    let yte: Vec<u32> = te_rows.iter().map(|i| test.category[*i]).collect();
    Ok(ProbeResult {
        task: ProbeTask::Category,
        repeat_id: split.repeat_id,
        accuracy: probe.accuracy(&xte, &yte),
    })
}

/// Instance probe: classes are the split's training instances, fit on
/// their play frames, scored on their held-out viewpoints. Chance is one
/// over the number of training instances.
pub fn probe_instance(
    train: &FeatureSet,
    test: &FeatureSet,
    split: &Split,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    train.validate()?;
    test.validate()?;
    let class_of: HashMap<u32, u32> = split
        .train_instances
        .iter()
        .enumerate()
        .map(|(k, id)| (*id, k as u32))
        .collect();
    let tr_rows = train.rows_for(&|i| class_of.contains_key(&i));
    let te_rows = test.rows_for(&|i| class_of.contains_key(&i));
    if tr_rows.is_empty() || te_rows.is_empty() {
        return Err(Error::Config("no rows for instance probe".into()));
    }
    let xtr = train.features.select(Axis(0), &tr_rows);
    let ytr: Vec<u32> = tr_rows.iter().map(|i| class_of[&train.instance[*i]]).collect();
    let probe =
        train_probe(&xtr, &ytr, class_of.len(), cfg, u64::from(split.repeat_id) * 2 + 1)?;
    let xte = test.features.select(Axis(0), &te_rows);
    let yte: Vec<u32> = te_rows.iter().map(|i| class_of[&test.instance[*i]]).collect();
    Ok(ProbeResult {
        task: ProbeTask::Instance,
        repeat_id: split.repeat_id,
        accuracy: probe.accuracy(&xte, &yte),
    })
}

// ---------------------------------------------------------------------------
// Text space structure

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextBlockAnalysis {
    /// Mean within-class cosine minus mean between-class cosine.
    pub score: f32,
    pub within: f32,
    pub between: f32,
}

/// Block contrast of a cosine similarity matrix whose rows are grouped by
/// class in equal blocks: mean same-class similarity (diagonal excluded)
/// minus mean cross-class similarity.
pub fn block_score(sim: &ArrayView2<f32>, rows_per_class: usize) -> TextBlockAnalysis {
    let n = sim.nrows();
    assert_eq!(n, sim.ncols());
    assert!(rows_per_class >= 1 && n % rows_per_class == 0);
    let (mut wsum, mut wcount) = (0.0f64, 0usize);
    let (mut bsum, mut bcount) = (0.0f64, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if i / rows_per_class == j / rows_per_class {
                wsum += sim[[i, j]] as f64;
                wcount += 1;
            } else {
                bsum += sim[[i, j]] as f64;
                bcount += 1;
            }
        }
    }
    let within = if wcount > 0 { (wsum / wcount as f64) as f32 } else { 0.0 };
    let between = if bcount > 0 { (bsum / bcount as f64) as f32 } else { 0.0 };
    TextBlockAnalysis { score: within - between, within, between }
}

/// Embed each category's name plus sampled utterances about it, and
/// measure how block-diagonal the cosine matrix is: did speech about the
/// same thing end up in the same place?
pub fn text_block_analysis(
    params: &ModelParams<f32>,
    names: &[String],
    templates: &[Template],
    vocab: &Vocabulary,
    utterances_per_class: usize,
    seed: u64,
) -> Result<TextBlockAnalysis> {
    if names.is_empty() || templates.is_empty() {
        return Err(Error::Config("need names and templates".into()));
    }
    let rows_per_class = utterances_per_class + 1;
    let mut lists: Vec<Vec<u32>> = Vec::with_capacity(names.len() * rows_per_class);
    for (c, name) in names.iter().enumerate() {
        let mut rng = rng::stream(seed, salt::TEXT, c as u64);
        lists.push(tokenize(name, vocab)?);
        for _ in 0..utterances_per_class {
            let t = rng.random_range(0..templates.len());
            lists.push(tokenize(&templates[t].instantiate(name), vocab)?);
        }
    }
    let z = params.text_embedding(&lists);
    let (zn, _) = crate::learn::loss::normalize_rows(&z.view())?;
    let sim = zn.dot(&zn.t());
    Ok(block_score(&sim.view(), rows_per_class))
}

// ---------------------------------------------------------------------------
// Embedding export

/// CSV with one row per frame: instance, category, then the feature
/// vector. f32 values print in shortest round-trip form.
pub fn export_embeddings(w: &mut impl Write, fs: &FeatureSet) -> Result<()> {
    fs.validate()?;
    write!(w, "instance_id,category_id")?;
    for j in 0..fs.features.ncols() {
        write!(w, ",f{}", j)?;
    }
    writeln!(w)?;
    for (i, row) in fs.features.rows().into_iter().enumerate() {
        write!(w, "{},{}", fs.instance[i], fs.category[i])?;
        for v in row {
            write!(w, ",{}", v)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn import_embeddings(r: impl BufRead) -> Result<FeatureSet> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty embedding file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "instance_id" || cols[1] != "category_id" {
        return Err(Error::Parse("bad embedding header".into()));
    }
    let dim = cols.len() - 2;
    let mut instance = Vec::new();
    let mut category = Vec::new();
    let mut values: Vec<f32> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::Parse(format!(
                "line {}: {} fields, expected {}",
                ln + 2,
                fields.len(),
                dim + 2
            )));
        }
        let bad =
            |what: &str| Error::Parse(format!("line {}: bad {}", ln + 2, what));
        instance.push(fields[0].parse::<u32>().map_err(|_| bad("instance id"))?);
        category.push(fields[1].parse::<u32>().map_err(|_| bad("category id"))?);
        for f in &fields[2..] {
            values.push(f.parse::<f32>().map_err(|_| bad("feature value"))?);
        }
    }
    let features = Array2::from_shape_vec((instance.len(), dim), values)
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok(FeatureSet { features, instance, category })
}
