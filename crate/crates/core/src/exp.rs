//! Experiment orchestration: a plain-text configuration format, rendered
//! dataset bundles, full training runs, frozen-encoder evaluation, and the
//! sweep/baseline drivers behind the command-line tool.
//!
//! A "bundle" holds everything derived from the world seed alone (objects,
//! sessions, rendered frames, labels). Utterances are assigned on top of a
//! bundle from the speech statistics, with one random stream per frame, so
//! sweeping speech parameters reuses identical images and aligned
//! randomness across grid points.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::eval::{
    extract_features, make_splits, probe_category, probe_instance, text_block_analysis,
    FeatureSet, ProbeConfig, ProbeResult, TextBlockAnalysis,
};
use crate::lang::{
    bundled_templates, sample_utterance, Referent, Template, Utterance, UtteranceStats,
    Vocabulary,
};
use crate::learn::{
    checkpoint, train, ModelConfig, ModelParams, TraceRow, TrainConfig, TrainMode,
    TrainOutcome, TrainSet,
};
use crate::playsim::{
    expand_entry, generate_dataset, generate_session, DatasetManifest, WorldConfig,
    FRAMES_PER_SESSION,
};
use crate::render::{build_world, render_frame, write_frames, Camera, Catalog, Scene};
use crate::rng::{self, salt};
use crate::{CategoryId, Error, Result};

// ---------------------------------------------------------------------------
// Configuration

/// Caregiver regime. Presets fix the speech statistics; `custom` keeps
/// whatever `speech.*` says; `oracle` trains the supervised reference
/// model instead of the contrastive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    None,
    Plausible,
    Ideal,
    Oracle,
    Custom,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::None => "none",
            Mode::Plausible => "plausible",
            Mode::Ideal => "ideal",
            Mode::Oracle => "oracle",
            Mode::Custom => "custom",
        };
        write!(f, "{}", s)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "none" => Ok(Mode::None),
            "plausible" => Ok(Mode::Plausible),
            "ideal" => Ok(Mode::Ideal),
            "oracle" => Ok(Mode::Oracle),
            "custom" => Ok(Mode::Custom),
            other => Err(Error::Config(format!("unknown mode {:?}", other))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub repeats: usize,
    pub probe_epochs: usize,
    pub block_utterances: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { repeats: 3, probe_epochs: 20, block_utterances: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub resolution: usize,
    pub stats: UtteranceStats,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub mode: Mode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldConfig { categories: 20, instances_per_category: 9, seed: 0 },
            resolution: 64,
            stats: UtteranceStats::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            mode: Mode::Plausible,
        }
    }
}

impl ExperimentConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {:?} for {}", value, key)))
        }
        match key {
            "world.categories" => self.world.categories = num(key, value)?,
            "world.instances_per_category" => {
                self.world.instances_per_category = num(key, value)?
            }
            "world.seed" => self.world.seed = num(key, value)?,
            "render.resolution" => self.resolution = num(key, value)?,
            "speech.p_sparse" => self.stats.p_sparse = num(key, value)?,
            "speech.p_correct" => self.stats.p_correct = num(key, value)?,
            "train.temperature" => self.train.temperature = num(key, value)?,
            "train.learning_rate" => self.train.learning_rate = num(key, value)?,
            "train.weight_decay" => self.train.weight_decay = num(key, value)?,
            "train.batch_size" => self.train.batch_size = num(key, value)?,
            "train.epochs" => self.train.epochs = num(key, value)?,
            "train.seed" => self.train.seed = num(key, value)?,
            "eval.repeats" => self.eval.repeats = num(key, value)?,
            "eval.probe_epochs" => self.eval.probe_epochs = num(key, value)?,
            "eval.block_utterances" => self.eval.block_utterances = num(key, value)?,
            "mode" => self.mode = value.parse()?,
            other => return Err(Error::Config(format!("unknown key {:?}", other))),
        }
        Ok(())
    }

    /// Apply the mode preset and validate everything.
    pub fn finalize(mut self) -> Result<ExperimentConfig> {
        self.stats = match self.mode {
            Mode::None => UtteranceStats { p_sparse: 0.0, p_correct: 0.5 },
            Mode::Plausible => UtteranceStats { p_sparse: 0.1, p_correct: 0.5 },
            Mode::Ideal => UtteranceStats { p_sparse: 0.1, p_correct: 1.0 },
            Mode::Oracle => UtteranceStats { p_sparse: 0.0, p_correct: 0.5 },
            Mode::Custom => self.stats,
        };
        self.world.validate()?;
        self.stats.validate()?;
        self.train.validate()?;
        if self.eval.repeats == 0 || self.eval.probe_epochs == 0 {
            return Err(Error::Config("eval.repeats and eval.probe_epochs must be positive".into()));
        }
        // The encoder geometry must survive this resolution.
        self.model_config(1).validate()?;
        Ok(self)
    }

    /// Canonical serialization: every key in fixed order. Parsing this
    /// text reproduces the config exactly.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        use fmt::Write as _;
        let _ = writeln!(s, "world.categories = {}", self.world.categories);
        let _ = writeln!(
            s,
            "world.instances_per_category = {}",
            self.world.instances_per_category
        );
        let _ = writeln!(s, "world.seed = {}", self.world.seed);
        let _ = writeln!(s, "render.resolution = {}", self.resolution);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "speech.p_sparse = {}", self.stats.p_sparse);
        let _ = writeln!(s, "speech.p_correct = {}", self.stats.p_correct);
        let _ = writeln!(s, "train.temperature = {}", self.train.temperature);
        let _ = writeln!(s, "train.learning_rate = {}", self.train.learning_rate);
        let _ = writeln!(s, "train.weight_decay = {}", self.train.weight_decay);
        let _ = writeln!(s, "train.batch_size = {}", self.train.batch_size);
        let _ = writeln!(s, "train.epochs = {}", self.train.epochs);
        let _ = writeln!(s, "train.seed = {}", self.train.seed);
        let _ = writeln!(s, "eval.repeats = {}", self.eval.repeats);
        let _ = writeln!(s, "eval.probe_epochs = {}", self.eval.probe_epochs);
        let _ = writeln!(s, "eval.block_utterances = {}", self.eval.block_utterances);
        s
    }

    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical().as_bytes()))
    }

    /// Encoder/head sizes for this experiment at the given vocabulary.
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let mut m = ModelConfig::standard(vocab_size, self.world.categories);
        m.input_res = self.resolution;
        m
    }

    pub fn run_id(&self) -> String {
        format!(
            "{}_ps{}_pc{}_s{}",
            self.mode, self.stats.p_sparse, self.stats.p_correct, self.train.seed
        )
    }
}

/// `key = value` lines; `#` starts a comment; unknown keys are errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value", i + 1))
        })?;
        cfg.set(key.trim(), value.trim())
            .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e)))?;
    }
    cfg.finalize()
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

// ---------------------------------------------------------------------------
// Dataset bundles

/// Everything derived from the world seed: the object catalog, the session
/// manifest, rendered frames, and labels. Speech-independent by design so
/// one bundle serves a whole sweep.
pub struct Bundle {
    pub world: WorldConfig,
    pub resolution: usize,
    pub catalog: Catalog,
    pub manifest: DatasetManifest,
    pub names: Vec<String>,
    pub templates: Vec<Template>,
    pub vocab: Vocabulary,
    /// Train frames, session-major, 8-bit HWC.
    pub train_images: Vec<u8>,
    pub train_session_instance: Vec<u32>,
    pub train_session_category: Vec<u32>,
    /// One static scene per test entry.
    pub test_images: Vec<u8>,
    pub test_instance: Vec<u32>,
    pub test_category: Vec<u32>,
    pub channel_mean: [f32; 3],
    pub channel_std: [f32; 3],
}

impl Bundle {
    pub fn train_frames(&self) -> usize {
        self.manifest.train.len() * FRAMES_PER_SESSION
    }

    pub fn train_set<'a>(&'a self, utterances: &'a [Option<Vec<u32>>]) -> TrainSet<'a> {
        TrainSet {
            resolution: self.resolution,
            frames_per_session: FRAMES_PER_SESSION,
            n_sessions: self.manifest.train.len(),
            images: &self.train_images,
            session_category: &self.train_session_category,
            utterances,
            channel_mean: self.channel_mean,
            channel_std: self.channel_std,
        }
    }
}

fn scene_tint(entry_seed: u64) -> [f32; 3] {
    let mut rng = rng::stream(entry_seed, salt::TINT, 0);
    let mut t = [0.0f32; 3];
    for v in t.iter_mut() {
        *v = rng.random_range(-0.03..=0.03f32);
    }
    t
}

use rand::Rng;

pub fn build_bundle(world: &WorldConfig, resolution: usize) -> Result<Bundle> {
    world.validate()?;
    let catalog = build_world(world)?;
    let manifest = generate_dataset(world)?;
    let names: Vec<String> = (0..world.categories)
        .map(|c| catalog.category_name(CategoryId(c as u32)).to_string())
        .collect();
    let templates = bundled_templates();
    let vocab = Vocabulary::build(&templates, &names);
    let m = world.instances_per_category;

    let px = resolution * resolution * 3;
    let mut train_images = Vec::with_capacity(manifest.train.len() * FRAMES_PER_SESSION * px);
    let mut train_session_instance = Vec::with_capacity(manifest.train.len());
    let mut train_session_category = Vec::with_capacity(manifest.train.len());
    for entry in &manifest.train {
        let spec = expand_entry(entry);
        let session = generate_session(&spec);
        let tint = scene_tint(entry.seed);
        let camera = Camera::facing(&session.frames[0].main_pose, resolution);
        let background: Vec<_> = spec
            .background_instances
            .iter()
            .zip(&spec.background_poses)
            .map(|(i, p)| (*i, *p))
            .collect();
        for frame in &session.frames {
            let scene = Scene {
                main: Some((spec.main_instance, frame.main_pose)),
                background: background.clone(),
                tint,
            };
            let img = render_frame(&catalog, &scene, &camera, frame.gaze_offset);
            train_images.extend_from_slice(&img.to_u8());
        }
        train_session_instance.push(entry.main_instance.0);
        train_session_category.push(entry.main_instance.category(m).0);
    }

    let mut test_images = Vec::with_capacity(manifest.test.len() * px);
    let mut test_instance = Vec::with_capacity(manifest.test.len());
    let mut test_category = Vec::with_capacity(manifest.test.len());
    for entry in &manifest.test {
        let spec = expand_entry(entry);
        let session = generate_session(&spec);
        let tint = scene_tint(entry.seed);
        let camera = Camera::facing(&session.frames[0].main_pose, resolution);
        let background: Vec<_> = spec
            .background_instances
            .iter()
            .zip(&spec.background_poses)
            .map(|(i, p)| (*i, *p))
            .collect();
        let frame = &session.frames[0];
        let scene = Scene {
            main: Some((spec.main_instance, frame.main_pose)),
            background,
            tint,
        };
        let img = render_frame(&catalog, &scene, &camera, frame.gaze_offset);
        test_images.extend_from_slice(&img.to_u8());
        test_instance.push(entry.main_instance.0);
        test_category.push(entry.main_instance.category(m).0);
    }

    // Channel statistics over the quantized training frames, the same
    // bytes the loader will see.
    let mut sums = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    for chunk in train_images.chunks_exact(3) {
        for c in 0..3 {
            let v = chunk[c] as f64 / 255.0;
            sums[c] += v;
            sq[c] += v * v;
        }
    }
    let count = (train_images.len() / 3).max(1) as f64;
    let mut channel_mean = [0.0f32; 3];
    let mut channel_std = [0.0f32; 3];
    for c in 0..3 {
        let mean = sums[c] / count;
        channel_mean[c] = mean as f32;
        channel_std[c] = ((sq[c] / count - mean * mean).max(0.0).sqrt() as f32).max(1e-3);
    }

    Ok(Bundle {
        world: *world,
        resolution,
        catalog,
        manifest,
        names,
        templates,
        vocab,
        train_images,
        train_session_instance,
        train_session_category,
        test_images,
        test_instance,
        test_category,
        channel_mean,
        channel_std,
    })
}

/// Draw the utterance (or silence) for every train frame. Each frame has
/// its own random stream keyed by session seed and frame index, so raising
/// `p_sparse` only adds utterances without reshuffling existing ones.
pub fn assign_utterances(bundle: &Bundle, stats: &UtteranceStats) -> Result<Vec<Option<Utterance>>> {
    stats.validate()?;
    let m = bundle.world.instances_per_category;
    let mut out = Vec::with_capacity(bundle.train_frames());
    for entry in &bundle.manifest.train {
        let main_cat = entry.main_instance.category(m);
        let bg_cats: Vec<CategoryId> =
            entry.background_instances.iter().map(|i| i.category(m)).collect();
        for t in 0..FRAMES_PER_SESSION {
            let mut rng = rng::stream(entry.seed, salt::UTTER, t as u64);
            out.push(sample_utterance(
                main_cat,
                &bg_cats,
                &bundle.names,
                stats,
                &bundle.templates,
                &bundle.vocab,
                &mut rng,
            )?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Runs

pub fn train_run(cfg: &ExperimentConfig, bundle: &Bundle) -> Result<TrainOutcome<f32>> {
    let utterances = assign_utterances(bundle, &cfg.stats)?;
    let tokens: Vec<Option<Vec<u32>>> =
        utterances.into_iter().map(|u| u.map(|u| u.token_ids)).collect();
    let data = bundle.train_set(&tokens);
    let mode = if cfg.mode == Mode::Oracle {
        TrainMode::SupervisedOracle
    } else {
        TrainMode::Contrastive
    };
    train::<f32>(cfg.model_config(bundle.vocab.len()), &cfg.train, mode, &data)
}

pub struct EvalOutput {
    pub probes: Vec<ProbeResult>,
    pub block: TextBlockAnalysis,
}

/// Probe-training features come from every 8th train frame (the encoder
/// is frozen; this is just downsampling for probe fitting speed), test
/// features from the held-out static scenes.
pub fn evaluate(
    cfg: &ExperimentConfig,
    bundle: &Bundle,
    params: &ModelParams<f32>,
) -> Result<EvalOutput> {
    let res = bundle.resolution;
    let px = res * res * 3;
    let stride = 8usize;
    let total = bundle.train_frames();
    let mut sub = Vec::with_capacity((total / stride + 1) * px);
    let mut instance = Vec::new();
    let mut category = Vec::new();
    let mut f = 0usize;
    while f < total {
        sub.extend_from_slice(&bundle.train_images[f * px..(f + 1) * px]);
        let session = f / FRAMES_PER_SESSION;
        instance.push(bundle.train_session_instance[session]);
        category.push(bundle.train_session_category[session]);
        f += stride;
    }
    let probe_train = extract_features(
        params,
        res,
        &sub,
        &instance,
        &category,
        bundle.channel_mean,
        bundle.channel_std,
    )?;
    let probe_test = extract_features(
        params,
        res,
        &bundle.test_images,
        &bundle.test_instance,
        &bundle.test_category,
        bundle.channel_mean,
        bundle.channel_std,
    )?;
    let splits = make_splits(
        bundle.world.instance_count(),
        bundle.world.instances_per_category,
        cfg.eval.repeats,
        cfg.train.seed,
    )?;
    let pcfg = ProbeConfig {
        epochs: cfg.eval.probe_epochs,
        seed: cfg.train.seed,
        ..ProbeConfig::default()
    };
    let mut probes = Vec::with_capacity(splits.len() * 2);
    for split in &splits {
        probes.push(probe_category(
            &probe_train,
            &probe_test,
            split,
            bundle.world.categories,
            &pcfg,
        )?);
        probes.push(probe_instance(&probe_train, &probe_test, split, &pcfg)?);
    }
    let block = text_block_analysis(
        params,
        &bundle.names,
        &bundle.templates,
        &bundle.vocab,
        cfg.eval.block_utterances,
        cfg.train.seed,
    )?;
    Ok(EvalOutput { probes, block })
}

/// Frozen test features for export.
pub fn test_features(bundle: &Bundle, params: &ModelParams<f32>) -> Result<FeatureSet> {
    extract_features(
        params,
        bundle.resolution,
        &bundle.test_images,
        &bundle.test_instance,
        &bundle.test_category,
        bundle.channel_mean,
        bundle.channel_std,
    )
}

pub const RESULTS_HEADER: &str = "run_id,task,mode,p_sparse,p_correct,repeat,value,config_hash";

pub fn result_rows(
    cfg: &ExperimentConfig,
    out: &EvalOutput,
    oracle_accuracy: Option<f32>,
) -> Vec<String> {
    let id = cfg.run_id();
    let hash = cfg.hash();
    let mut rows = Vec::new();
    for p in &out.probes {
        rows.push(format!(
            "{},{},{},{},{},{},{},{}",
            id, p.task, cfg.mode, cfg.stats.p_sparse, cfg.stats.p_correct, p.repeat_id,
            p.accuracy, hash
        ));
    }
    rows.push(format!(
        "{},text_block,{},{},{},0,{},{}",
        id, cfg.mode, cfg.stats.p_sparse, cfg.stats.p_correct, out.block.score, hash
    ));
    if let Some(acc) = oracle_accuracy {
        rows.push(format!(
            "{},oracle_train,{},{},{},0,{},{}",
            id, cfg.mode, cfg.stats.p_sparse, cfg.stats.p_correct, acc, hash
        ));
    }
    rows
}

// ---------------------------------------------------------------------------
// Commands

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub train_sessions: usize,
    pub test_scenes: usize,
    pub train_frames: usize,
    pub utterances: usize,
    pub main_referent_fraction: f32,
}

impl fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} train sessions ({} frames), {} test scenes, {} utterances ({:.1}% naming the held object)",
            self.train_sessions,
            self.train_frames,
            self.test_scenes,
            self.utterances,
            100.0 * self.main_referent_fraction
        )
    }
}

/// Render the dataset and write it out: `manifest.txt`, `vocab.txt`,
/// `utterances.txt`, optionally raw frames and PPM previews.
pub fn cmd_generate(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    cache_images: bool,
    previews: usize,
) -> Result<GenerateSummary> {
    fs::create_dir_all(out_dir)?;
    let bundle = build_bundle(&cfg.world, cfg.resolution)?;
    let mut w = BufWriter::new(fs::File::create(out_dir.join("manifest.txt"))?);
    bundle.manifest.write_to(&mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(out_dir.join("vocab.txt"))?);
    bundle.vocab.write_to(&mut w)?;
    w.flush()?;

    let utterances = assign_utterances(&bundle, &cfg.stats)?;
    let mut spoken = 0usize;
    let mut main_count = 0usize;
    let mut w = BufWriter::new(fs::File::create(out_dir.join("utterances.txt"))?);
    writeln!(w, "# session frame referent category text")?;
    for (f, u) in utterances.iter().enumerate() {
        if let Some(u) = u {
            spoken += 1;
            let referent = match u.refers_to {
                Referent::Main => {
                    main_count += 1;
                    "main"
                }
                Referent::Background => "background",
            };
            let text: Vec<&str> =
                u.token_ids.iter().map(|t| bundle.vocab.token(*t)).collect();
            writeln!(
                w,
                "{} {} {} {} {}",
                f / FRAMES_PER_SESSION,
                f % FRAMES_PER_SESSION,
                referent,
                bundle.names[u.named_category.0 as usize],
                text.join(" ")
            )?;
        }
    }
    w.flush()?;

    if cache_images {
        let mut w = BufWriter::new(fs::File::create(out_dir.join("frames.bin"))?);
        write_frames(&mut w, bundle.resolution, &bundle.train_images)?;
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(out_dir.join("test_frames.bin"))?);
        write_frames(&mut w, bundle.resolution, &bundle.test_images)?;
        w.flush()?;
    }
    let px = cfg.resolution * cfg.resolution * 3;
    for p in 0..previews.min(bundle.train_frames()) {
        let img = crate::render::Image::from_u8(
            cfg.resolution,
            &bundle.train_images[p * px..(p + 1) * px],
        );
        let mut w =
            BufWriter::new(fs::File::create(out_dir.join(format!("preview_{:04}.ppm", p)))?);
        img.write_ppm(&mut w)?;
        w.flush()?;
    }

    Ok(GenerateSummary {
        train_sessions: bundle.manifest.train.len(),
        test_scenes: bundle.manifest.test.len(),
        train_frames: bundle.train_frames(),
        utterances: spoken,
        main_referent_fraction: if spoken > 0 {
            main_count as f32 / spoken as f32
        } else {
            0.0
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub run_id: String,
    pub final_loss: Option<f64>,
    pub oracle_accuracy: Option<f32>,
    pub checkpoint: PathBuf,
}

/// Full training run; writes `checkpoint.bin` and `loss_trace.csv`.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainSummary> {
    fs::create_dir_all(out_dir)?;
    let bundle = build_bundle(&cfg.world, cfg.resolution)?;
    let outcome = train_run(cfg, &bundle)?;
    let ckpt = out_dir.join("checkpoint.bin");
    let mut w = BufWriter::new(fs::File::create(&ckpt)?);
    checkpoint::save(&mut w, &outcome.params, None, &cfg.canonical())?;
    w.flush()?;
    write_trace(&out_dir.join("loss_trace.csv"), &outcome.trace)?;
    Ok(TrainSummary {
        run_id: cfg.run_id(),
        final_loss: outcome.trace.last().map(|r| r.total),
        oracle_accuracy: outcome.oracle_accuracy,
        checkpoint: ckpt,
    })
}

fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "epoch,total,time_loss,speech_loss,utterance_rate")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.epoch, r.total, r.cltt, r.mmcl, r.utterance_rate
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Evaluate a checkpoint against its world; writes `results.csv`.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint_path: &Path,
    out_dir: &Path,
) -> Result<Vec<String>> {
    fs::create_dir_all(out_dir)?;
    let mut r = std::io::BufReader::new(fs::File::open(checkpoint_path)?);
    let (params, _, _) = checkpoint::load(&mut r)?;
    let bundle = build_bundle(&cfg.world, cfg.resolution)?;
    if params.cfg.vocab_size != bundle.vocab.len()
        || params.cfg.input_res != bundle.resolution
    {
        return Err(Error::Config(
            "checkpoint was trained on a different world or resolution".into(),
        ));
    }
    let out = evaluate(cfg, &bundle, &params)?;
    let rows = result_rows(cfg, &out, None);
    write_results(&out_dir.join("results.csv"), &rows)?;
    Ok(rows)
}

fn write_results(path: &Path, rows: &[String]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", RESULTS_HEADER)?;
    for row in rows {
        writeln!(w, "{}", row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub completed: Vec<String>,
    pub failed: Vec<(String, String)>,
    pub results: PathBuf,
}

/// Train and evaluate one configuration against an existing bundle,
/// appending result rows; errors are reported, not fatal, so a long sweep
/// survives a single bad run.
fn run_into(
    cfg: &ExperimentConfig,
    bundle: &Bundle,
    rows: &mut Vec<String>,
    summary: &mut BatchSummary,
) {
    let id = cfg.run_id();
    let outcome = match train_run(cfg, bundle) {
        Ok(o) => o,
        Err(e) => {
            log::error!("{}: training failed: {}", id, e);
            summary.failed.push((id, format!("train: {}", e)));
            return;
        }
    };
    match evaluate(cfg, bundle, &outcome.params) {
        Ok(out) => {
            rows.extend(result_rows(cfg, &out, outcome.oracle_accuracy));
            summary.completed.push(id);
        }
        Err(e) => {
            log::error!("{}: evaluation failed: {}", id, e);
            summary.failed.push((id, format!("eval: {}", e)));
        }
    }
}

/// The caregiver-regime comparison: none / plausible / ideal / oracle,
/// each over `seeds` replicate worlds.
pub fn cmd_baselines(
    cfg: &ExperimentConfig,
    seeds: u64,
    out_dir: &Path,
) -> Result<BatchSummary> {
    fs::create_dir_all(out_dir)?;
    let results = out_dir.join("results.csv");
    let mut summary =
        BatchSummary { completed: Vec::new(), failed: Vec::new(), results: results.clone() };
    let mut rows = Vec::new();
    for s in 0..seeds {
        let world = WorldConfig { seed: cfg.world.seed + s, ..cfg.world };
        let bundle = build_bundle(&world, cfg.resolution)?;
        for mode in [Mode::None, Mode::Plausible, Mode::Ideal, Mode::Oracle] {
            let run_cfg = ExperimentConfig {
                world,
                mode,
                train: TrainConfig { seed: cfg.train.seed + s, ..cfg.train },
                ..cfg.clone()
            }
            .finalize()?;
            run_into(&run_cfg, &bundle, &mut rows, &mut summary);
        }
    }
    write_results(&results, &rows)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Vary p_sparse, hold p_correct at its default.
    Sparsity,
    /// Vary p_correct, hold p_sparse at its default.
    Correctness,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<SweepAxis> {
        match s {
            "sparsity" => Ok(SweepAxis::Sparsity),
            "correctness" => Ok(SweepAxis::Correctness),
            other => Err(Error::Config(format!("unknown sweep axis {:?}", other))),
        }
    }
}

/// Sweep one speech statistic over `values`, `seeds` replicates each; the
/// bundle (images included) is shared across the whole grid per seed.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f32],
    seeds: u64,
    out_dir: &Path,
) -> Result<BatchSummary> {
    fs::create_dir_all(out_dir)?;
    let results = out_dir.join("results.csv");
    let mut summary =
        BatchSummary { completed: Vec::new(), failed: Vec::new(), results: results.clone() };
    let mut rows = Vec::new();
    for s in 0..seeds {
        let world = WorldConfig { seed: cfg.world.seed + s, ..cfg.world };
        let bundle = build_bundle(&world, cfg.resolution)?;
        for &v in values {
            let stats = match axis {
                SweepAxis::Sparsity => UtteranceStats { p_sparse: v, p_correct: 0.5 },
                SweepAxis::Correctness => UtteranceStats { p_sparse: 0.1, p_correct: v },
            };
            let run_cfg = ExperimentConfig {
                world,
                mode: Mode::Custom,
                stats,
                train: TrainConfig { seed: cfg.train.seed + s, ..cfg.train },
                ..cfg.clone()
            }
            .finalize()?;
            run_into(&run_cfg, &bundle, &mut rows, &mut summary);
        }
    }
    write_results(&results, &rows)?;
    Ok(summary)
}

/// Export frozen test-scene embeddings for a checkpoint as CSV.
pub fn cmd_export_embeddings(
    cfg: &ExperimentConfig,
    checkpoint_path: &Path,
    out_file: &Path,
) -> Result<usize> {
    let mut r = std::io::BufReader::new(fs::File::open(checkpoint_path)?);
    let (params, _, _) = checkpoint::load(&mut r)?;
    let bundle = build_bundle(&cfg.world, cfg.resolution)?;
    if params.cfg.vocab_size != bundle.vocab.len()
        || params.cfg.input_res != bundle.resolution
    {
        return Err(Error::Config(
            "checkpoint was trained on a different world or resolution".into(),
        ));
    }
    let fs_ = test_features(&bundle, &params)?;
    if let Some(dir) = out_file.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(out_file)?);
    crate::eval::export_embeddings(&mut w, &fs_)?;
    w.flush()?;
    Ok(fs_.features.nrows())
}
