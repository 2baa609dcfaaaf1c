//! Play-session simulation: where objects start, how the held object moves,
//! and which frames exist.
//!
//! A session is 20 frames of one actor turning a single "main" object in
//! front of a cluttered floor. The main object's six pose coordinates follow
//! independent AR(1) (discretized Ornstein-Uhlenbeck) velocity processes
//! with per-axis speed bounds; positional coordinates are additionally
//! clamped to their initial sampling intervals so the object never drifts
//! out of comfortable reach. Test scenes are single frames with no motion
//! and a wider orientation range.
//!
//! Everything here is a pure function of seeds. A dataset is described by a
//! [`DatasetManifest`] whose entries carry independent derived seeds, so any
//! single session can be regenerated without touching the others.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{self, salt, Stream};
use crate::{Error, InstanceId, Result};

/// Frames per training session.
pub const FRAMES_PER_SESSION: usize = 20;
/// Training sessions generated per instance.
pub const SESSIONS_PER_INSTANCE: usize = 12;
/// Single-frame test scenes generated per instance.
pub const TEST_SCENES_PER_INSTANCE: usize = 5;

/// Pose axes in canonical order. All sampling and integration walks axes in
/// this order; changing it changes every generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Distance = 0,
    Azimuth = 1,
    Elevation = 2,
    Yaw = 3,
    Pitch = 4,
    Roll = 5,
}

pub const AXES: [Axis; 6] = [
    Axis::Distance,
    Axis::Azimuth,
    Axis::Elevation,
    Axis::Yaw,
    Axis::Pitch,
    Axis::Roll,
];

/// Per-frame speed bounds, indexed by `Axis`: meters for distance, degrees
/// for the rest.
pub const SPEED_BOUNDS: [f32; 6] = [0.05, 3.0, 3.0, 20.0, 4.0, 4.0];

/// Agent-relative 6-DoF object state. Distances in meters, angles in
/// degrees; azimuth 0 is straight ahead, elevation negative is below the
/// camera axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub distance: f32,
    pub azimuth: f32,
    pub elevation: f32,
    pub yaw: f32,
    pub pitch: f32,
    pub roll: f32,
}

impl Pose {
    fn to_array(self) -> [f32; 6] {
        [
            self.distance,
            self.azimuth,
            self.elevation,
            self.yaw,
            self.pitch,
            self.roll,
        ]
    }

    fn from_array(a: [f32; 6]) -> Self {
        Pose {
            distance: a[0],
            azimuth: a[1],
            elevation: a[2],
            yaw: a[3],
            pitch: a[4],
            roll: a[5],
        }
    }
}

/// Who a pose is sampled for; selects the bound set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseRole {
    MainTrain,
    MainTest,
    Background,
}

impl PoseRole {
    fn distance_range(self) -> (f32, f32) {
        match self {
            PoseRole::Background => (0.42, 0.875),
            _ => (0.25, 0.35),
        }
    }

    fn tilt_range(self) -> (f32, f32) {
        match self {
            PoseRole::MainTest => (-20.0, 20.0),
            _ => (-5.0, 5.0),
        }
    }
}

const AZIMUTH_RANGE: (f32, f32) = (-30.0, 30.0);
const ELEVATION_RANGE: (f32, f32) = (-30.0, -10.0);

/// One AR(1) velocity process: v' = (1-theta)v + sigma*eps, clamped to
/// +-speed_bound. theta is the recall strength; theta=1 forgets the past
/// completely each frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OUParams {
    pub theta: f32,
    pub sigma: f32,
    pub speed_bound: f32,
}

impl OUParams {
    /// Default process for an axis with a freshly drawn recall coefficient.
    /// sigma = speed_bound/2 keeps the clamp active but not dominant.
    pub fn for_axis(axis: Axis, theta: f32) -> Self {
        let bound = SPEED_BOUNDS[axis as usize];
        OUParams {
            theta,
            sigma: bound / 2.0,
            speed_bound: bound,
        }
    }
}

/// One frame of a session. `utterance_slot` indexes an utterance table once
/// the language stage has run; the simulator always leaves it empty.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameState {
    pub frame_index: usize,
    pub main_pose: Pose,
    /// Camera orientation jitter (yaw, pitch) in degrees, N(0, 2I).
    pub gaze_offset: (f32, f32),
    pub utterance_slot: Option<u32>,
}

/// Train sessions are 20-frame manipulation episodes; test entries are
/// single static scenes drawn from the wider orientation range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionRole {
    Train,
    Test,
}

/// Full description of one session's scene: who is present, where the
/// clutter sits, and the seeds/processes that drive the main object.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSpec {
    pub session_id: u64,
    pub role: SessionRole,
    pub main_instance: InstanceId,
    pub background_instances: Vec<InstanceId>,
    pub background_poses: Vec<Pose>,
    pub rng_seed: u64,
    pub ou_params: [OUParams; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaySession {
    pub spec: SessionSpec,
    /// Exactly 20 frames for train sessions, 1 for test scenes.
    pub frames: Vec<FrameState>,
}

/// Draw a starting pose. Draw order: distance, azimuth, elevation, yaw,
/// pitch, roll.
pub fn sample_initial_pose(rng: &mut Stream, role: PoseRole) -> Pose {
    let (d0, d1) = role.distance_range();
    let (t0, t1) = role.tilt_range();
    Pose {
        distance: rng.random_range(d0..=d1),
        azimuth: rng.random_range(AZIMUTH_RANGE.0..=AZIMUTH_RANGE.1),
        elevation: rng.random_range(ELEVATION_RANGE.0..=ELEVATION_RANGE.1),
        yaw: rng.random_range(0.0..360.0),
        pitch: rng.random_range(t0..=t1),
        roll: rng.random_range(t0..=t1),
    }
}

/// One AR(1) velocity update with clamping.
pub fn ou_step(v: f32, p: &OUParams, rng: &mut Stream) -> f32 {
    let eps: f32 = rng.sample(StandardNormal);
    ((1.0 - p.theta) * v + p.sigma * eps).clamp(-p.speed_bound, p.speed_bound)
}

fn sample_gaze(rng: &mut Stream) -> (f32, f32) {
    // Covariance 2*I: independent components with std sqrt(2).
    let s = std::f32::consts::SQRT_2;
    let gy: f32 = rng.sample(StandardNormal);
    let gp: f32 = rng.sample(StandardNormal);
    (gy * s, gp * s)
}

/// Positional clamp targets for the integrated main pose (distance,
/// azimuth, elevation). Orientation axes accumulate freely.
pub fn positional_bounds() -> [(f32, f32); 3] {
    let (d0, d1) = PoseRole::MainTrain.distance_range();
    [(d0, d1), AZIMUTH_RANGE, ELEVATION_RANGE]
}

/// Roll a session out from its spec. Deterministic in `spec.rng_seed`:
/// per frame the draws are the six axis velocities (frame >= 1) followed by
/// the gaze offset.
pub fn generate_session(spec: &SessionSpec) -> PlaySession {
    let mut rng = rng::stream(spec.rng_seed, salt::FRAMES, 0);
    let n_frames = match spec.role {
        SessionRole::Train => FRAMES_PER_SESSION,
        SessionRole::Test => 1,
    };
    let pose_role = match spec.role {
        SessionRole::Train => PoseRole::MainTrain,
        SessionRole::Test => PoseRole::MainTest,
    };

    let mut frames = Vec::with_capacity(n_frames);
    let mut pose = sample_initial_pose(&mut rng, pose_role).to_array();
    frames.push(FrameState {
        frame_index: 0,
        main_pose: Pose::from_array(pose),
        gaze_offset: sample_gaze(&mut rng),
        utterance_slot: None,
    });

    let mut vel = [0.0f32; 6];
    let bounds = positional_bounds();
    for t in 1..n_frames {
        for a in 0..6 {
            vel[a] = ou_step(vel[a], &spec.ou_params[a], &mut rng);
            pose[a] += vel[a];
        }
        for (a, (lo, hi)) in bounds.iter().enumerate() {
            // The clamp may shrink the realized step; the velocity state
            // keeps its unclamped value so motion can re-engage later.
            pose[a] = pose[a].clamp(*lo, *hi);
        }
        frames.push(FrameState {
            frame_index: t,
            main_pose: Pose::from_array(pose),
            gaze_offset: sample_gaze(&mut rng),
            utterance_slot: None,
        });
    }

    PlaySession {
        spec: spec.clone(),
        frames,
    }
}

/// World-level generation parameters shared by the simulator and renderer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorldConfig {
    pub categories: usize,
    pub instances_per_category: usize,
    pub seed: u64,
}

impl WorldConfig {
    pub fn instance_count(&self) -> usize {
        self.categories * self.instances_per_category
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories < 2 {
            return Err(Error::Config(format!(
                "need at least 2 categories, got {}",
                self.categories
            )));
        }
        if self.instances_per_category < 3 {
            return Err(Error::Config(format!(
                "need at least 3 instances per category, got {}",
                self.instances_per_category
            )));
        }
        Ok(())
    }
}

/// One manifest line: everything needed to regenerate a session except the
/// object catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub session_id: u64,
    pub role: SessionRole,
    pub seed: u64,
    pub main_instance: InstanceId,
    pub background_instances: Vec<InstanceId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub config: WorldConfig,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

/// Sample `k` distinct values from `0..n` (Floyd's algorithm), insertion
/// order. O(k) draws regardless of n.
fn sample_without_replacement(rng: &mut Stream, n: u64, k: usize) -> Vec<u64> {
    debug_assert!((k as u64) <= n);
    let mut chosen: Vec<u64> = Vec::with_capacity(k);
    for j in (n - k as u64)..n {
        let t = rng.random_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen
}

/// Pick the clutter for one session: 5..=20 other instances, uniform
/// without replacement.
fn pick_background(rng: &mut Stream, n_instances: usize, main: InstanceId) -> Vec<InstanceId> {
    let candidates = n_instances as u64 - 1;
    let hi = candidates.min(20) as usize;
    let count = rng.random_range(5..=hi);
    sample_without_replacement(rng, candidates, count)
        .into_iter()
        .map(|j| {
            // Skip over the main instance's slot.
            let id = if j >= main.0 as u64 { j + 1 } else { j };
            InstanceId(id as u32)
        })
        .collect()
}

/// Build the full session schedule: 12 train sessions per instance followed
/// by 5 test scenes per instance, with independent per-session seeds.
pub fn generate_dataset(config: &WorldConfig) -> Result<DatasetManifest> {
    config.validate()?;
    let n = config.instance_count();
    let mut train = Vec::with_capacity(n * SESSIONS_PER_INSTANCE);
    let mut test = Vec::with_capacity(n * TEST_SCENES_PER_INSTANCE);
    let mut session_id: u64 = 0;
    for inst in 0..n {
        for _ in 0..SESSIONS_PER_INSTANCE {
            train.push(make_entry(config, session_id, InstanceId(inst as u32), SessionRole::Train));
            session_id += 1;
        }
    }
    for inst in 0..n {
        for _ in 0..TEST_SCENES_PER_INSTANCE {
            test.push(make_entry(config, session_id, InstanceId(inst as u32), SessionRole::Test));
            session_id += 1;
        }
    }
    Ok(DatasetManifest {
        config: *config,
        train,
        test,
    })
}

fn make_entry(
    config: &WorldConfig,
    session_id: u64,
    main: InstanceId,
    role: SessionRole,
) -> ManifestEntry {
    let seed = rng::mix(config.seed, salt::SESSION_SEED, session_id);
    // Stream index 1 selects the clutter; index 0 is reserved for the
    // layout stream used by expand_entry, so hand-edited background lists
    // stay honored.
    let mut sel = rng::stream(seed, salt::SESSION_SPEC, 1);
    let background_instances = pick_background(&mut sel, config.instance_count(), main);
    ManifestEntry {
        session_id,
        role,
        seed,
        main_instance: main,
        background_instances,
    }
}

/// Derive the full scene description for a manifest entry. The recorded
/// background list is honored as-is; recall coefficients and clutter poses
/// come from the entry's own seed (draw order: six thetas, then one pose
/// per background instance).
pub fn expand_entry(entry: &ManifestEntry) -> SessionSpec {
    let mut rng = rng::stream(entry.seed, salt::SESSION_SPEC, 0);
    let mut ou = [OUParams::for_axis(Axis::Distance, 1.0); 6];
    for (a, axis) in AXES.iter().enumerate() {
        let theta = rng.random_range(0.1..=1.0f32);
        ou[a] = OUParams::for_axis(*axis, theta);
    }
    let background_poses = entry
        .background_instances
        .iter()
        .map(|_| sample_initial_pose(&mut rng, PoseRole::Background))
        .collect();
    SessionSpec {
        session_id: entry.session_id,
        role: entry.role,
        main_instance: entry.main_instance,
        background_instances: entry.background_instances.clone(),
        background_poses,
        rng_seed: entry.seed,
        ou_params: ou,
    }
}

impl DatasetManifest {
    /// Plain-text serialization:
    ///
    /// ```text
    /// # playroom manifest v1
    /// # categories=C instances_per_category=M seed=S
    /// train <session_id> <seed hex> <main id> <bg id>,<bg id>,...
    /// test  ...
    /// ```
    pub fn write_to(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "# playroom manifest v1")?;
        writeln!(
            w,
            "# categories={} instances_per_category={} seed={}",
            self.config.categories, self.config.instances_per_category, self.config.seed
        )?;
        for entry in self.train.iter().chain(self.test.iter()) {
            let role = match entry.role {
                SessionRole::Train => "train",
                SessionRole::Test => "test",
            };
            let bg: Vec<String> = entry
                .background_instances
                .iter()
                .map(|i| i.0.to_string())
                .collect();
            writeln!(
                w,
                "{} {} {:016x} {} {}",
                role,
                entry.session_id,
                entry.seed,
                entry.main_instance.0,
                bg.join(",")
            )?;
        }
        Ok(())
    }

    pub fn read_from(r: impl std::io::BufRead) -> Result<DatasetManifest> {
        let mut config: Option<WorldConfig> = None;
        let mut train = Vec::new();
        let mut test = Vec::new();
        let parse_err = |line_no: usize, msg: &str| {
            Error::Parse(format!("manifest line {}: {}", line_no, msg))
        };
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if rest.starts_with("categories=") {
                    config = Some(parse_config_line(rest, line_no)?);
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let role = match fields.next() {
                Some("train") => SessionRole::Train,
                Some("test") => SessionRole::Test,
                other => {
                    return Err(parse_err(line_no, &format!("bad role {:?}", other)));
                }
            };
            let session_id: u64 = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(line_no, "bad session id"))?;
            let seed = fields
                .next()
                .and_then(|s| u64::from_str_radix(s, 16).ok())
                .ok_or_else(|| parse_err(line_no, "bad seed"))?;
            let main: u32 = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(line_no, "bad main instance"))?;
            let bg: Vec<InstanceId> = fields
                .next()
                .ok_or_else(|| parse_err(line_no, "missing background list"))?
                .split(',')
                .map(|s| s.parse::<u32>().map(InstanceId))
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(line_no, "bad background list"))?;
            if bg.len() < 5 || bg.len() > 20 {
                return Err(parse_err(
                    line_no,
                    &format!("background count {} outside 5..=20", bg.len()),
                ));
            }
            if bg.contains(&InstanceId(main)) {
                return Err(parse_err(line_no, "main instance appears in background"));
            }
            let entry = ManifestEntry {
                session_id,
                role,
                seed,
                main_instance: InstanceId(main),
                background_instances: bg,
            };
            match role {
                SessionRole::Train => train.push(entry),
                SessionRole::Test => test.push(entry),
            }
        }
        let config = config
            .ok_or_else(|| Error::Parse("manifest missing config header".into()))?;
        Ok(DatasetManifest {
            config,
            train,
            test,
        })
    }
}

fn parse_config_line(rest: &str, line_no: usize) -> Result<WorldConfig> {
    let mut categories = None;
    let mut instances = None;
    let mut seed = None;
    for part in rest.split_whitespace() {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("manifest line {}: bad header", line_no)))?;
        match k {
            "categories" => categories = v.parse().ok(),
            "instances_per_category" => instances = v.parse().ok(),
            "seed" => seed = v.parse().ok(),
            _ => {}
        }
    }
    match (categories, instances, seed) {
        (Some(c), Some(m), Some(s)) => Ok(WorldConfig {
            categories: c,
            instances_per_category: m,
            seed: s,
        }),
        _ => Err(Error::Parse(format!(
            "manifest line {}: incomplete config header",
            line_no
        ))),
    }
}
