//! End-to-end runs of the experiment layer at miniature scale: config text
//! in, CSVs and checkpoints out, with determinism checked at the byte level.

use std::fs;
use std::path::PathBuf;

use playroom::exp::{
    self, build_bundle, cmd_baselines, cmd_eval, cmd_sweep, cmd_train, parse_config, Mode,
    SweepAxis,
};
use playroom::learn::checkpoint;

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("playroom-it-{}-{}", tag, std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

const SMALL: &str = "\
world.categories = 2
world.instances_per_category = 3
world.seed = 4
render.resolution = 16
mode = plausible
train.epochs = 1
train.batch_size = 16
train.seed = 4
eval.repeats = 1
eval.probe_epochs = 3
eval.block_utterances = 3
";

#[test]
fn identical_configs_give_bitwise_identical_artifacts() {
    let cfg = parse_config(SMALL).unwrap();
    let d1 = tmpdir("det1");
    let d2 = tmpdir("det2");
    cmd_train(&cfg, &d1).unwrap();
    cmd_train(&cfg, &d2).unwrap();
    let c1 = fs::read(d1.join("checkpoint.bin")).unwrap();
    let c2 = fs::read(d2.join("checkpoint.bin")).unwrap();
    assert_eq!(c1, c2, "checkpoints differ between identical runs");
    let t1 = fs::read(d1.join("loss_trace.csv")).unwrap();
    let t2 = fs::read(d2.join("loss_trace.csv")).unwrap();
    assert_eq!(t1, t2);
    let r1 = cmd_eval(&cfg, &d1.join("checkpoint.bin"), &d1).unwrap();
    let r2 = cmd_eval(&cfg, &d2.join("checkpoint.bin"), &d2).unwrap();
    assert_eq!(r1, r2);
    fs::remove_dir_all(&d1).unwrap();
    fs::remove_dir_all(&d2).unwrap();
}

#[test]
fn checkpoint_note_carries_the_full_config() {
    let cfg = parse_config(SMALL).unwrap();
    let dir = tmpdir("note");
    let summary = cmd_train(&cfg, &dir).unwrap();
    let mut r = std::io::BufReader::new(fs::File::open(&summary.checkpoint).unwrap());
    let (params, optim, note) = checkpoint::load(&mut r).unwrap();
    assert!(optim.is_none());
    assert_eq!(parse_config(&note).unwrap(), cfg);
    assert_eq!(params.cfg.input_res, 16);
    assert!(params.oracle.is_none());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn oracle_mode_trains_the_supervised_reference() {
    let mut cfg = parse_config(SMALL).unwrap();
    cfg.mode = Mode::Oracle;
    let cfg = cfg.finalize().unwrap();
    let dir = tmpdir("oracle");
    let summary = cmd_train(&cfg, &dir).unwrap();
    assert!(summary.oracle_accuracy.is_some());
    let mut r = std::io::BufReader::new(fs::File::open(&summary.checkpoint).unwrap());
    let (params, _, _) = checkpoint::load(&mut r).unwrap();
    assert!(params.oracle.is_some());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn mismatched_world_is_rejected_at_eval() {
    let cfg = parse_config(SMALL).unwrap();
    let dir = tmpdir("mismatch");
    let summary = cmd_train(&cfg, &dir).unwrap();
    let mut other = cfg.clone();
    other.resolution = 24;
    let other = other.finalize().unwrap();
    let err = cmd_eval(&other, &summary.checkpoint, &dir).unwrap_err();
    assert!(
        err.to_string().contains("different world or resolution"),
        "unexpected error: {}",
        err
    );
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_covers_its_grid_and_reuses_the_bundle() {
    let cfg = parse_config(SMALL).unwrap();
    let dir = tmpdir("sweep");
    let summary = cmd_sweep(&cfg, SweepAxis::Sparsity, &[0.0, 1.0], 1, &dir).unwrap();
    assert_eq!(summary.completed.len(), 2);
    assert!(summary.failed.is_empty());
    let text = fs::read_to_string(dir.join("results.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], exp::RESULTS_HEADER);
    // 2 grid points x (2 probe rows + 1 block row), custom mode.
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("custom_ps0_"));
    assert!(lines.iter().skip(1).all(|l| l.contains(",custom,")));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn baselines_cover_all_four_regimes() {
    let mut cfg = parse_config(SMALL).unwrap();
    cfg.eval.block_utterances = 2;
    let dir = tmpdir("baselines");
    let summary = cmd_baselines(&cfg, 1, &dir).unwrap();
    assert_eq!(summary.completed.len(), 4);
    assert!(summary.failed.is_empty());
    let text = fs::read_to_string(dir.join("results.csv")).unwrap();
    for mode in ["none", "plausible", "ideal", "oracle"] {
        assert!(
            text.lines().any(|l| l.contains(&format!(",{},", mode))),
            "no rows for mode {}",
            mode
        );
    }
    // Oracle runs contribute their training accuracy as an extra row.
    assert!(text.lines().any(|l| l.contains(",oracle_train,")));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bundles_share_imagery_across_speech_settings() {
    let cfg = parse_config(SMALL).unwrap();
    let bundle = build_bundle(&cfg.world, cfg.resolution).unwrap();
    // The bundle is speech-independent: the same struct serves every mode,
    // so sweeps compare models on identical pixels.
    let hash_before = exp::fnv1a64(&bundle.train_images);
    let _ = exp::assign_utterances(
        &bundle,
        &playroom::lang::UtteranceStats { p_sparse: 1.0, p_correct: 1.0 },
    )
    .unwrap();
    let _ = exp::assign_utterances(
        &bundle,
        &playroom::lang::UtteranceStats { p_sparse: 0.0, p_correct: 0.5 },
    )
    .unwrap();
    assert_eq!(exp::fnv1a64(&bundle.train_images), hash_before);
    assert_eq!(bundle.train_frames(), bundle.manifest.train.len() * 20);
}
