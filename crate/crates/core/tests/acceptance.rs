//! The project's acceptance gate: nine go/no-go checks printed one line
//! each. Numeric tolerances are pinned here, next to the check they gate.
//!
//! Checks 5-7 and 9 train 21 full desk-scale models (about 7 per replicate
//! seed) and take a few hours on one core. Their per-run results are cached
//! in `target/acceptance_cache.csv` keyed by config hash - training is
//! bit-deterministic, so a rerun after an unrelated failure reuses them.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use playroom::exp::{
    build_bundle, cmd_eval, cmd_generate, cmd_train, evaluate, parse_config, train_run,
    ExperimentConfig, Mode,
};
use playroom::lang::{bundled_templates, sample_utterance, Referent, UtteranceStats, Vocabulary};
use playroom::learn::loss::{cltt_loss, mmcl_loss};
use playroom::learn::{Batch, ModelConfig, ModelParams, Scalar, TrainConfig};
use playroom::playsim::{
    expand_entry, generate_dataset, generate_session, positional_bounds, WorldConfig,
    SPEED_BOUNDS,
};
use playroom::rng::{salt, stream};
use playroom::CategoryId;

// Desk-scale experiment the trend criteria run at.
const DESK_CATEGORIES: usize = 20;
const DESK_INSTANCES: usize = 9;
const DESK_RESOLUTION: usize = 64;
const DESK_EPOCHS: usize = 10;
const DESK_BATCH: usize = 128;
const SEEDS: u64 = 3;

struct Criterion {
    number: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn main() {
    let t0 = Instant::now();
    let mut results: Vec<Criterion> = Vec::new();
    let mut record = |number, name: &'static str, pass: bool, detail: String| {
        println!(
            "acceptance {}: {} - {} ({})",
            number,
            if pass { "PASS" } else { "FAIL" },
            name,
            detail
        );
        results.push(Criterion { number, name, pass, detail });
    };

    let (pass, detail) = gradient_oracle();
    record(1, "gradient oracle", pass, detail);
    let (pass, detail) = loss_closed_forms();
    record(2, "loss closed forms", pass, detail);
    let (pass, detail) = speech_statistics();
    record(3, "speech statistics", pass, detail);
    let (pass, detail) = geometry_bounds();
    record(4, "geometry bounds", pass, detail);
    let (pass, detail) = determinism();
    record(8, "end-to-end determinism", pass, detail);

    // PLAYROOM_ACCEPTANCE=light skips the multi-hour trend block for quick
    // iteration; the skipped criteria count as failures so the light mode
    // can never masquerade as a full pass.
    let heavy = if std::env::var("PLAYROOM_ACCEPTANCE").as_deref() == Ok("light") {
        Err(playroom::Error::Config("skipped in light mode".into()))
    } else {
        trend_runs()
    };
    match heavy {
        Ok(h) => {
            let (pass, detail) = criterion_ordering(&h);
            record(5, "regime ordering", pass, detail);
            let (pass, detail) = criterion_endpoints(&h);
            record(6, "endpoint trends", pass, detail);
            let (pass, detail) = criterion_block_score(&h);
            record(7, "text block contrast", pass, detail);
            let (pass, detail) = criterion_chance_level(&h);
            record(9, "random-encoder chance level", pass, detail);
        }
        Err(e) => {
            for (n, name) in [
                (5, "regime ordering"),
                (6, "endpoint trends"),
                (7, "text block contrast"),
                (9, "random-encoder chance level"),
            ] {
                record(n, name, false, format!("trend runs failed: {}", e));
            }
        }
    }

    results.sort_by_key(|c| c.number);
    let failed: Vec<&Criterion> = results.iter().filter(|c| !c.pass).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        results.len() - failed.len(),
        results.len(),
        t0.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        for c in &failed {
            eprintln!("failed criterion {}: {} ({})", c.number, c.name, c.detail);
        }
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// 1. Analytic gradients vs central finite differences, f64, step 1e-4.

fn gradient_oracle() -> (bool, String) {
    let t = Instant::now();
    let cfg = ModelConfig::tiny(12, 3); // 8x8 input, 8-d features
    let mut params = ModelParams::<f64>::init(cfg, false, 1).unwrap();
    let mut rng = stream(2, salt::FRAMES, 0);
    let n = 2usize;
    let px = 8 * 8;
    let mut images = Array2::<f64>::zeros((2 * n * px, 3));
    for v in images.iter_mut() {
        *v = f64::standard_normal(&mut rng);
    }
    let batch = Batch {
        images,
        n,
        utterances: vec![(0, vec![1, 2, 3]), (1, vec![4, 5])],
        labels: vec![0, 1],
    };
    let tau = 0.07f64;
    let (_, analytic) = params.grad(&batch, tau).unwrap();
    let flat: Vec<(String, Vec<f64>)> = analytic
        .visit_params()
        .into_iter()
        .map(|(name, _, g)| (name, g.to_vec()))
        .collect();

    let h = 1e-4f64;
    let mut worst = (0.0f64, String::new());
    let mut count = 0usize;
    for (group, (name, grads)) in flat.iter().enumerate() {
        let mut num = 0.0f64;
        let mut na = 0.0f64;
        let mut nf = 0.0f64;
        for (idx, g) in grads.iter().enumerate() {
            {
                let mut v = params.visit_params_mut();
                v[group].2[idx] += h;
            }
            let up = params.total_loss(&batch, tau).unwrap().total;
            {
                let mut v = params.visit_params_mut();
                v[group].2[idx] -= 2.0 * h;
            }
            let down = params.total_loss(&batch, tau).unwrap().total;
            {
                let mut v = params.visit_params_mut();
                v[group].2[idx] += h;
            }
            let fd = (up - down) / (2.0 * h);
            num += (fd - g) * (fd - g);
            na += g * g;
            nf += fd * fd;
            count += 1;
        }
        // One relative error per parameter group, vector-norm based. The
        // elementwise quotient is the wrong metric at this step size: with
        // temperature 0.07 the loss carries third derivatives ~3e4, so on
        // small-gradient coordinates the O(h^2) truncation term alone
        // exceeds 1e-4 relative while saying nothing about the analytic
        // gradient (verified: the elementwise residue shrinks exactly as
        // h^2). The 1e-6 floor covers bias groups whose gradient batch norm
        // zeroes identically; there ||fd|| is bare rounding noise.
        let rel = num.sqrt() / na.sqrt().max(nf.sqrt()).max(1e-6);
        if rel > worst.0 {
            worst = (rel, name.clone());
        }
    }
    let elapsed = t.elapsed().as_secs_f64();
    let pass = worst.0 < 1e-4 && elapsed < 60.0;
    (
        pass,
        format!(
            "{} params in {} groups, max group rel err {:.2e} at {}, {:.1}s",
            count,
            flat.len(),
            worst.0,
            worst.1,
            elapsed
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Identical embeddings hit the closed-form loss values exactly.

fn loss_closed_forms() -> (bool, String) {
    let row = [0.3f64, -0.7, 0.2, 0.9, -0.1];
    let mut detail = String::new();
    let mut pass = true;
    for n in [2usize, 4, 8] {
        let z = Array2::from_shape_fn((2 * n, row.len()), |(_, j)| row[j]);
        let got = cltt_loss(&z.view(), 0.07).unwrap();
        let want = ((2 * n - 1) as f64).ln();
        pass &= (got - want).abs() < 1e-6;
        let _ = write!(detail, "time n={}: {:.8} vs ln{} ", n, got, 2 * n - 1);
    }
    for k in [2usize, 3, 5] {
        let z2 = Array2::from_shape_fn((k, row.len()), |(_, j)| row[j]);
        let z3 = z2.clone();
        let got = mmcl_loss(&z2.view(), &z3.view(), 0.07).unwrap();
        let want = ((2 * k - 1) as f64).ln();
        pass &= (got - want).abs() < 1e-6;
        let _ = write!(detail, "speech k={}: {:.8} vs ln{} ", k, got, 2 * k - 1);
    }
    (pass, detail.trim_end().to_string())
}

// ---------------------------------------------------------------------------
// 3. Naming frequency 0.10 +- 0.005 and correctness 0.50 +- 0.01 at 1e5.

fn speech_statistics() -> (bool, String) {
    let names: Vec<String> =
        ["ball", "cup", "duck", "sock"].iter().map(|s| s.to_string()).collect();
    let templates = bundled_templates();
    let vocab = Vocabulary::build(&templates, &names);
    let stats = UtteranceStats::default();
    let frames = 100_000usize;
    let (mut spoken, mut main) = (0usize, 0usize);
    for f in 0..frames {
        let mut rng = stream(31 + (f / 20) as u64, salt::UTTER, (f % 20) as u64);
        let bg: Vec<CategoryId> =
            (0..3).map(|k| CategoryId(((f + k + 1) % 4) as u32)).collect();
        if let Some(u) = sample_utterance(
            CategoryId((f % 4) as u32),
            &bg,
            &names,
            &stats,
            &templates,
            &vocab,
            &mut rng,
        )
        .unwrap()
        {
            spoken += 1;
            if u.refers_to == Referent::Main {
                main += 1;
            }
        }
    }
    let freq = spoken as f64 / frames as f64;
    let correct = main as f64 / spoken.max(1) as f64;
    let pass = (freq - 0.10).abs() < 0.005 && (correct - 0.50).abs() < 0.01;
    (
        pass,
        format!("frequency {:.4} (want 0.100+-0.005), main fraction {:.4} (want 0.500+-0.010)", freq, correct),
    )
}

// ---------------------------------------------------------------------------
// 4. 10^4 sessions, zero pose or speed bound violations.

fn geometry_bounds() -> (bool, String) {
    let t = Instant::now();
    // 840 instances x 12 sessions = 10080 rollouts.
    let cfg = WorldConfig { categories: 20, instances_per_category: 42, seed: 97 };
    let manifest = generate_dataset(&cfg).unwrap();
    let bounds = positional_bounds();
    let mut violations = 0usize;
    let mut sessions = 0usize;
    for entry in &manifest.train {
        let session = generate_session(&expand_entry(entry));
        let mut prev: Option<[f32; 6]> = None;
        for f in &session.frames {
            let p = f.main_pose;
            let pose = [p.distance, p.azimuth, p.elevation, p.yaw, p.pitch, p.roll];
            for (a, (lo, hi)) in bounds.iter().enumerate() {
                if pose[a] < *lo || pose[a] > *hi {
                    violations += 1;
                }
            }
            if let Some(q) = prev {
                for a in 0..6 {
                    // 1e-3 covers f32 rounding when the step is re-derived
                    // from absolute poses; the generator itself clamps.
                    if (pose[a] - q[a]).abs() > SPEED_BOUNDS[a] + 1e-3 {
                        violations += 1;
                    }
                }
            }
            prev = Some(pose);
        }
        sessions += 1;
    }
    let elapsed = t.elapsed().as_secs_f64();
    let pass = violations == 0 && sessions >= 10_000 && elapsed < 300.0;
    (
        pass,
        format!("{} sessions, {} violations, {:.1}s", sessions, violations, elapsed),
    )
}

// ---------------------------------------------------------------------------
// 8. Bit-identical manifests, loss traces, and result CSVs.

fn determinism() -> (bool, String) {
    let cfg = parse_config(
        "world.categories = 2\nworld.instances_per_category = 3\nworld.seed = 8\n\
         render.resolution = 16\nmode = plausible\ntrain.epochs = 1\n\
         train.batch_size = 16\ntrain.seed = 8\neval.repeats = 1\n\
         eval.probe_epochs = 3\neval.block_utterances = 3\n",
    )
    .unwrap();
    let base = std::env::temp_dir().join(format!("playroom-accept-{}", std::process::id()));
    let _ = fs::remove_dir_all(&base);
    let mut identical = true;
    let mut parts = Vec::new();
    let mut artifacts: Vec<Vec<u8>> = Vec::new();
    for pass_idx in 0..2 {
        let dir = base.join(format!("run{}", pass_idx));
        fs::create_dir_all(&dir).unwrap();
        cmd_generate(&cfg, &dir, false, 0).unwrap();
        cmd_train(&cfg, &dir).unwrap();
        cmd_eval(&cfg, &dir.join("checkpoint.bin"), &dir).unwrap();
        let mut blob = Vec::new();
        for f in ["manifest.txt", "loss_trace.csv", "results.csv", "checkpoint.bin"] {
            blob.push(fs::read(dir.join(f)).unwrap());
        }
        artifacts.push(blob.concat());
    }
    if artifacts[0] != artifacts[1] {
        identical = false;
        parts.push("artifact bytes differ".to_string());
    } else {
        parts.push(format!("{} artifact bytes identical across runs", artifacts[0].len()));
    }
    let _ = fs::remove_dir_all(&base);
    (identical, parts.join("; "))
}

// ---------------------------------------------------------------------------
// Shared training runs for criteria 5, 6, 7, 9.

#[derive(Debug, Clone, Copy)]
struct RunStats {
    category_accuracy: f64,
    block_score: f64,
}

struct TrendData {
    /// run label -> per-seed stats, in seed order.
    runs: HashMap<&'static str, Vec<RunStats>>,
    /// Untrained baselines per seed.
    untrained: Vec<RunStats>,
    /// Category-probe test rows per repeat (for the binomial band).
    test_rows_per_repeat: usize,
}

fn desk_config(mode: Mode, stats: UtteranceStats, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.world = WorldConfig {
        categories: DESK_CATEGORIES,
        instances_per_category: DESK_INSTANCES,
        seed,
    };
    cfg.resolution = DESK_RESOLUTION;
    cfg.mode = mode;
    cfg.stats = stats;
    cfg.train = TrainConfig {
        epochs: DESK_EPOCHS,
        batch_size: DESK_BATCH,
        seed,
        ..TrainConfig::default()
    };
    cfg.finalize().unwrap()
}

fn cache_path() -> PathBuf {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.pop();
    p.pop();
    p.join("target").join("acceptance_cache.csv")
}

fn load_cache() -> HashMap<String, RunStats> {
    let mut map = HashMap::new();
    if let Ok(text) = fs::read_to_string(cache_path()) {
        for line in text.lines() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() == 3 {
                if let (Ok(a), Ok(b)) = (f[1].parse(), f[2].parse()) {
                    map.insert(
                        f[0].to_string(),
                        RunStats { category_accuracy: a, block_score: b },
                    );
                }
            }
        }
    }
    map
}

fn append_cache(key: &str, s: RunStats) {
    if let Ok(mut f) =
        fs::OpenOptions::new().create(true).append(true).open(cache_path())
    {
        let _ = writeln!(f, "{},{},{}", key, s.category_accuracy, s.block_score);
    }
}

fn mean_category_accuracy(probes: &[playroom::eval::ProbeResult]) -> f64 {
    let cats: Vec<f64> = probes
        .iter()
        .filter(|p| p.task == playroom::eval::ProbeTask::Category)
        .map(|p| p.accuracy as f64)
        .collect();
    cats.iter().sum::<f64>() / cats.len() as f64
}

fn trend_runs() -> playroom::Result<TrendData> {
    let grid: Vec<(&'static str, Mode, UtteranceStats)> = vec![
        ("none", Mode::None, UtteranceStats::default()),
        ("plausible", Mode::Plausible, UtteranceStats::default()),
        ("ideal", Mode::Ideal, UtteranceStats::default()),
        ("oracle", Mode::Oracle, UtteranceStats::default()),
        ("sparse_full", Mode::Custom, UtteranceStats { p_sparse: 1.0, p_correct: 0.5 }),
        ("correct_low", Mode::Custom, UtteranceStats { p_sparse: 0.1, p_correct: 0.1 }),
        ("sparse_001", Mode::Custom, UtteranceStats { p_sparse: 0.01, p_correct: 0.5 }),
    ];
    let cache = load_cache();
    let mut data = TrendData {
        runs: HashMap::new(),
        untrained: Vec::new(),
        test_rows_per_repeat: DESK_CATEGORIES * (DESK_INSTANCES - 2 * DESK_INSTANCES / 3) * 5,
    };
    for seed in 0..SEEDS {
        // Skip the expensive bundle render when every run this seed needs
        // is already cached.
        let all_cached = grid
            .iter()
            .all(|(_, m, s)| cache.contains_key(&desk_config(*m, *s, seed).hash()))
            && cache.contains_key(&format!("untrained_{}", seed));
        let bundle = if all_cached {
            None
        } else {
            let t = Instant::now();
            let b = build_bundle(
                &WorldConfig {
                    categories: DESK_CATEGORIES,
                    instances_per_category: DESK_INSTANCES,
                    seed,
                },
                DESK_RESOLUTION,
            )?;
            eprintln!(
                "[trend] seed {}: bundle {} train frames in {:.0}s",
                seed,
                b.train_frames(),
                t.elapsed().as_secs_f64()
            );
            Some(b)
        };
        for (label, mode, stats) in &grid {
            let cfg = desk_config(*mode, *stats, seed);
            let key = cfg.hash();
            let stats = if let Some(s) = cache.get(&key) {
                eprintln!("[trend] seed {} {}: cached", seed, label);
                *s
            } else {
                let bundle = bundle.as_ref().unwrap();
                let t = Instant::now();
                let outcome = train_run(&cfg, bundle)?;
                let out = evaluate(&cfg, bundle, &outcome.params)?;
                let s = RunStats {
                    category_accuracy: mean_category_accuracy(&out.probes),
                    block_score: out.block.score as f64,
                };
                eprintln!(
                    "[trend] seed {} {}: category {:.4}, block {:.4} in {:.0}s",
                    seed,
                    label,
                    s.category_accuracy,
                    s.block_score,
                    t.elapsed().as_secs_f64()
                );
                append_cache(&key, s);
                s
            };
            data.runs.entry(*label).or_default().push(stats);
        }
        let ukey = format!("untrained_{}", seed);
        let ustats = if let Some(s) = cache.get(&ukey) {
            *s
        } else {
            let bundle = bundle.as_ref().unwrap();
            let cfg = desk_config(Mode::Plausible, UtteranceStats::default(), seed);
            let params = ModelParams::<f32>::init(
                cfg.model_config(bundle.vocab.len()),
                false,
                cfg.train.seed,
            )?;
            let out = evaluate(&cfg, bundle, &params)?;
            let s = RunStats {
                category_accuracy: mean_category_accuracy(&out.probes),
                block_score: out.block.score as f64,
            };
            eprintln!(
                "[trend] seed {} untrained: category {:.4}, block {:.4}",
                seed, s.category_accuracy, s.block_score
            );
            append_cache(&ukey, s);
            s
        };
        data.untrained.push(ustats);
    }
    Ok(data)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn accs<'a>(d: &'a TrendData, label: &str) -> Vec<f64> {
    d.runs[label].iter().map(|r| r.category_accuracy).collect()
}

// 5. oracle >= ideal >= plausible > none, the last by > 1 pooled std.
fn criterion_ordering(d: &TrendData) -> (bool, String) {
    let oracle = mean(&accs(d, "oracle"));
    let ideal = mean(&accs(d, "ideal"));
    let plausible = mean(&accs(d, "plausible"));
    let none_accs = accs(d, "none");
    let plaus_accs = accs(d, "plausible");
    let none = mean(&none_accs);
    let pooled =
        ((std_dev(&plaus_accs).powi(2) + std_dev(&none_accs).powi(2)) / 2.0).sqrt();
    let pass =
        oracle >= ideal && ideal >= plausible && plausible > none + pooled.max(1e-9);
    (
        pass,
        format!(
            "oracle {:.4} >= ideal {:.4} >= plausible {:.4} > none {:.4} + pooled std {:.4}",
            oracle, ideal, plausible, none, pooled
        ),
    )
}

// 6. Endpoints: p_sparse 1.0 > 0.0, and p_correct 1.0 > 0.1 at p_sparse 0.1.
// The coarse grid between the endpoints is reported alongside but not gated.
fn criterion_endpoints(d: &TrendData) -> (bool, String) {
    let sparse_hi = mean(&accs(d, "sparse_full"));
    let sparse_lo = mean(&accs(d, "none"));
    let correct_hi = mean(&accs(d, "ideal"));
    let correct_lo = mean(&accs(d, "correct_low"));
    let pass = sparse_hi > sparse_lo && correct_hi > correct_lo;
    (
        pass,
        format!(
            "gate p_sparse 1.0 {:.4} > 0.0 {:.4} and p_correct 1.0 {:.4} > 0.1 {:.4}; \
             ungated curves: sparsity 0/0.01/0.1/1.0 = {:.4}/{:.4}/{:.4}/{:.4}, \
             correctness 0.1/0.5/1.0 = {:.4}/{:.4}/{:.4}",
            sparse_hi,
            sparse_lo,
            correct_hi,
            correct_lo,
            sparse_lo,
            mean(&accs(d, "sparse_001")),
            mean(&accs(d, "plausible")),
            sparse_hi,
            correct_lo,
            mean(&accs(d, "plausible")),
            correct_hi
        ),
    )
}

// 7. Text block contrast: plausible > p_sparse=0.01 > untrained.
fn criterion_block_score(d: &TrendData) -> (bool, String) {
    let plausible = mean(&d.runs["plausible"].iter().map(|r| r.block_score).collect::<Vec<_>>());
    let sparse001 = mean(&d.runs["sparse_001"].iter().map(|r| r.block_score).collect::<Vec<_>>());
    let untrained = mean(&d.untrained.iter().map(|r| r.block_score).collect::<Vec<_>>());
    let pass = plausible > sparse001 && sparse001 > untrained;
    (
        pass,
        format!(
            "plausible {:.4} > p_sparse=0.01 {:.4} > untrained {:.4}",
            plausible, sparse001, untrained
        ),
    )
}

// 9. Untrained encoder probes at chance within 3 binomial stds.
fn criterion_chance_level(d: &TrendData) -> (bool, String) {
    let acc = mean(&d.untrained.iter().map(|r| r.category_accuracy).collect::<Vec<_>>());
    let p = 1.0 / DESK_CATEGORIES as f64;
    let sigma = (p * (1.0 - p) / d.test_rows_per_repeat as f64).sqrt();
    let pass = (acc - p).abs() <= 3.0 * sigma;
    (
        pass,
        format!(
            "accuracy {:.4} vs chance {:.4} +- {:.4} (3 sigma, n={})",
            acc,
            p,
            3.0 * sigma,
            d.test_rows_per_repeat
        ),
    )
}
