//! Parametric point-cloud objects and a small splat rasterizer.
//!
//! Objects are clouds of 64 colored points. A category is a template cloud
//! (a few anisotropic Gaussian clusters, whitened to shared first and second
//! moments), so category identity is pure shape. Every object in a world
//! wears the same 64-color palette; each instance binds it to positions by a
//! private shuffle, so color identifies instances but says nothing about
//! categories. Instances also jitter the template geometry, bounded so a
//! nearest-template classifier still recovers the category. Size, elongation,
//! and all color statistics match across categories by construction.
//! Rendering projects the transformed clouds through a pinhole camera and
//! composites depth-sorted Gaussian splats over a tinted gray background.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::playsim::{Pose, WorldConfig};
use crate::rng::{self, salt, Stream};
use crate::{CategoryId, Error, InstanceId, Result};

/// Points per object.
pub const POINTS_PER_OBJECT: usize = 64;
/// RMS radius every category template is normalized to, unit-ball units.
const CLOUD_RMS_RADIUS: f32 = 0.5;
/// Camera height above the floor, meters.
pub const CAMERA_HEIGHT: f32 = 0.4;

/// Bundled single-token object names, consumed in order by category id.
/// Categories beyond the list fall back to "toyN".
const CATEGORY_NAMES: &[&str] = &[
    "ball", "duck", "train", "block", "cup", "spoon", "bear", "dog", "cat", "car", "truck",
    "boat", "plane", "drum", "bell", "book", "sock", "shoe", "hat", "ring", "key", "comb",
    "brush", "clock", "frog", "fish", "bird", "horse", "sheep", "cow", "pig", "bunny", "doll",
    "top", "kite", "horn", "flute", "crayon", "chalk", "pail", "rake", "fork", "plate", "bowl",
    "bottle", "button", "whistle", "puzzle",
];

/// Tunable world-building knobs. Defaults are what experiments use; tests
/// override individual fields (e.g. zero noise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldParams {
    pub clusters: usize,
    pub cluster_center_radius: f32,
    pub cluster_scale_range: (f32, f32),
    pub base_scale: f32,
    /// Instance point-position noise std, unit-ball coordinates.
    pub shape_noise: f32,
    /// Instance scale multiplier range.
    pub scale_range: (f32, f32),
    /// Re-draw attempts before an instance is declared unidentifiable.
    pub identify_retries: u32,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            clusters: 3,
            cluster_center_radius: 0.55,
            cluster_scale_range: (0.08, 0.3),
            base_scale: 0.09,
            shape_noise: 0.06,
            scale_range: (1.0, 1.0),
            identify_retries: 16,
        }
    }
}

/// Category-level shape/color template.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryModel {
    pub category_id: CategoryId,
    pub name: String,
    pub points: Vec<[f32; 3]>,
    pub colors: Vec<[f32; 3]>,
    pub base_scale: f32,
}

/// One concrete object: the category template plus bounded perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceModel {
    pub instance_id: InstanceId,
    pub category_id: CategoryId,
    pub points: Vec<[f32; 3]>,
    pub colors: Vec<[f32; 3]>,
    pub scale: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub categories: Vec<CategoryModel>,
    pub instances: Vec<InstanceModel>,
    pub instances_per_category: usize,
}

impl Catalog {
    pub fn instance(&self, id: InstanceId) -> &InstanceModel {
        &self.instances[id.0 as usize]
    }

    pub fn category_name(&self, id: CategoryId) -> &str {
        &self.categories[id.0 as usize].name
    }
}

fn unit_ball_point(rng: &mut Stream, radius: f32) -> [f32; 3] {
    // Uniform in the ball: isotropic direction, radius ~ R * u^(1/3).
    let mut v = [0.0f32; 3];
    loop {
        for x in v.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            let u: f32 = rng.random_range(0.0..1.0f32);
            let r = radius * u.cbrt();
            return [v[0] / n * r, v[1] / n * r, v[2] / n * r];
        }
    }
}

/// Map a centered cloud to sample covariance (CLOUD_RMS_RADIUS^2/3) I via
/// Cholesky: solve L y = p per point and rescale. Cluster noise keeps the
/// covariance comfortably full-rank.
fn whiten_cloud(points: &mut [[f32; 3]]) {
    let n = points.len() as f32;
    let mut c = [[0.0f32; 3]; 3];
    for p in points.iter() {
        for a in 0..3 {
            for b in a..3 {
                c[a][b] += p[a] * p[b];
            }
        }
    }
    for a in 0..3 {
        for b in a..3 {
            c[a][b] /= n;
        }
    }
    let l00 = c[0][0].sqrt().max(1e-4);
    let l10 = c[0][1] / l00;
    let l11 = (c[1][1] - l10 * l10).max(1e-8).sqrt();
    let l20 = c[0][2] / l00;
    let l21 = (c[1][2] - l20 * l10) / l11;
    let l22 = (c[2][2] - l20 * l20 - l21 * l21).max(1e-8).sqrt();
    let s = CLOUD_RMS_RADIUS / 3f32.sqrt();
    for p in points.iter_mut() {
        let y0 = p[0] / l00;
        let y1 = (p[1] - l10 * y0) / l11;
        let y2 = (p[2] - l20 * y0 - l21 * y1) / l22;
        *p = [s * y0, s * y1, s * y2];
    }
}

fn build_category(
    id: u32,
    seed: u64,
    params: &WorldParams,
    palette: &[[f32; 3]],
) -> CategoryModel {
    let mut rng = rng::stream(seed, salt::CATEGORY, id as u64);
    let name = CATEGORY_NAMES
        .get(id as usize)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("toy{}", id));

    let mut centers = Vec::with_capacity(params.clusters);
    let mut scales = Vec::with_capacity(params.clusters);
    for _ in 0..params.clusters {
        centers.push(unit_ball_point(&mut rng, params.cluster_center_radius));
        let (lo, hi) = params.cluster_scale_range;
        scales.push([
            rng.random_range(lo..=hi),
            rng.random_range(lo..=hi),
            rng.random_range(lo..=hi),
        ]);
    }

    let mut points = Vec::with_capacity(POINTS_PER_OBJECT);
    for k in 0..POINTS_PER_OBJECT {
        let c = k % params.clusters;
        let mut p = [0.0f32; 3];
        for a in 0..3 {
            let eps: f32 = rng.sample(StandardNormal);
            p[a] = centers[c][a] + scales[c][a] * eps;
        }
        points.push(p);
    }
    // Center the cloud and whiten it to an isotropic sample covariance of
    // (CLOUD_RMS_RADIUS^2/3) I. Every category then shares identical first
    // and second moments - no silhouette size or elongation signature - and
    // RMS radius is exactly CLOUD_RMS_RADIUS by construction. Category
    // identity survives only in higher-order structure: where clusters sit
    // relative to each other.
    let mut mean = [0.0f32; 3];
    for p in &points {
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    for m in mean.iter_mut() {
        *m /= POINTS_PER_OBJECT as f32;
    }
    for p in points.iter_mut() {
        for a in 0..3 {
            p[a] -= mean[a];
        }
    }
    whiten_cloud(&mut points);
    // Templates wear the world palette in canonical order; the binding that
    // actually renders is drawn per instance, so colors carry no category
    // information at all.
    let colors = palette.to_vec();

    CategoryModel {
        category_id: CategoryId(id),
        name,
        points,
        colors,
        base_scale: params.base_scale,
    }
}

/// One palette per world, in antithetic pairs (u, 1-u) so its mean is
/// exactly mid-gray. Every object wears it; nothing ever gets own colors.
fn build_palette(seed: u64) -> Vec<[f32; 3]> {
    let mut rng = rng::stream(seed, salt::PALETTE, 0);
    let mut palette = Vec::with_capacity(POINTS_PER_OBJECT);
    for _ in 0..POINTS_PER_OBJECT / 2 {
        let u = [
            rng.random_range(0.0..1.0f32),
            rng.random_range(0.0..1.0f32),
            rng.random_range(0.0..1.0f32),
        ];
        palette.push(u);
        palette.push([1.0 - u[0], 1.0 - u[1], 1.0 - u[2]]);
    }
    palette
}

/// Squared template distance used for identifiability. Geometry only: color
/// bindings are instance-private, so they cannot witness the category.
fn template_distance_sq(points: &[[f32; 3]], cat: &CategoryModel) -> f32 {
    let mut d = 0.0f32;
    for k in 0..points.len() {
        for a in 0..3 {
            let dp = points[k][a] - cat.points[k][a];
            d += dp * dp;
        }
    }
    d
}

/// Nearest-template category of a point cloud.
pub fn classify_cloud(points: &[[f32; 3]], catalog: &Catalog) -> CategoryId {
    let mut best = (f32::INFINITY, CategoryId(0));
    for cat in &catalog.categories {
        let d = template_distance_sq(points, cat);
        if d < best.0 {
            best = (d, cat.category_id);
        }
    }
    best.1
}

/// Build the object catalog for a world. Deterministic in the seed;
/// instances are re-drawn until the identifiability check passes.
pub fn build_world(config: &WorldConfig) -> Result<Catalog> {
    build_world_with(config, &WorldParams::default())
}

pub fn build_world_with(config: &WorldConfig, params: &WorldParams) -> Result<Catalog> {
    config.validate()?;
    let palette = build_palette(config.seed);
    let categories: Vec<CategoryModel> = (0..config.categories as u32)
        .map(|c| build_category(c, config.seed, params, &palette))
        .collect();

    let mut catalog = Catalog {
        categories,
        instances: Vec::with_capacity(config.instance_count()),
        instances_per_category: config.instances_per_category,
    };

    for i in 0..config.instance_count() as u32 {
        let cat_id = InstanceId(i).category(config.instances_per_category);
        let template = &catalog.categories[cat_id.0 as usize];
        let mut rng = rng::stream(config.seed, salt::INSTANCE, i as u64);
        let mut accepted = None;
        for _ in 0..params.identify_retries {
            let scale_mult: f32 = rng.random_range(params.scale_range.0..=params.scale_range.1);
            let mut points = Vec::with_capacity(POINTS_PER_OBJECT);
            for k in 0..POINTS_PER_OBJECT {
                let mut p = template.points[k];
                for a in 0..3 {
                    let ep: f32 = rng.sample(StandardNormal);
                    p[a] += params.shape_noise * ep;
                }
                points.push(p);
            }
            // Each instance binds the palette to positions by its own
            // shuffle. The rendered color multiset is the same for every
            // object in the world; the binding is what tells instances
            // apart, and it says nothing about the category.
            let mut perm: Vec<usize> = (0..POINTS_PER_OBJECT).collect();
            perm.shuffle(&mut rng);
            let colors = perm.iter().map(|&k| template.colors[k]).collect();
            if classify_cloud(&points, &catalog) == cat_id {
                accepted = Some(InstanceModel {
                    instance_id: InstanceId(i),
                    category_id: cat_id,
                    points,
                    colors,
                    scale: template.base_scale * scale_mult,
                });
                break;
            }
        }
        match accepted {
            Some(inst) => catalog.instances.push(inst),
            None => return Err(Error::Identifiability(i, params.identify_retries)),
        }
    }
    Ok(catalog)
}

// ---------------------------------------------------------------------------
// Rasterization

/// Row-major H*W*3 image, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub resolution: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn filled(resolution: usize, rgb: [f32; 3]) -> Image {
        let mut data = Vec::with_capacity(resolution * resolution * 3);
        for _ in 0..resolution * resolution {
            data.extend_from_slice(&rgb);
        }
        Image { resolution, data }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.resolution + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Quantize to 8-bit, HWC order.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(resolution: usize, bytes: &[u8]) -> Image {
        assert_eq!(bytes.len(), resolution * resolution * 3);
        Image {
            resolution,
            data: bytes.iter().map(|b| *b as f32 / 255.0).collect(),
        }
    }

    /// Binary PPM (P6) preview.
    pub fn write_ppm(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "P6\n{} {}\n255", self.resolution, self.resolution)?;
        w.write_all(&self.to_u8())?;
        Ok(())
    }
}

/// Pinhole camera. Orientation is fixed per session at the main object's
/// initial direction; gaze jitter is added per frame at render time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub yaw: f32,
    pub pitch: f32,
    pub fov_deg: f32,
    pub resolution: usize,
}

impl Camera {
    pub fn facing(pose: &Pose, resolution: usize) -> Camera {
        Camera {
            yaw: pose.azimuth,
            pitch: pose.elevation,
            fov_deg: 60.0,
            resolution,
        }
    }
}

/// What to draw: the held object plus floor clutter. `tint` offsets the
/// gray backdrop per scene. An empty scene (no main, no background) renders
/// as plain backdrop.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub main: Option<(InstanceId, Pose)>,
    pub background: Vec<(InstanceId, Pose)>,
    pub tint: [f32; 3],
}

/// Splat compositing knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    /// Splat radius as a fraction of object scale.
    pub splat_frac: f32,
    /// Peak splat opacity.
    pub alpha: f32,
    pub background_gray: f32,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            splat_frac: 0.30,
            alpha: 0.85,
            background_gray: 0.5,
        }
    }
}

type Mat3 = [[f32; 3]; 3];

fn rot_x(t: f32) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(t: f32) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(t: f32) -> Mat3 {
    let (s, c) = t.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut m = [[0.0f32; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    m
}

fn mat_apply(m: &Mat3, p: [f32; 3]) -> [f32; 3] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
        m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
    ]
}

fn deg(x: f32) -> f32 {
    x.to_radians()
}

/// Object-to-camera-frame position. Camera sits at the origin; +z is the
/// zero-azimuth forward direction, +y up, floor at y = -CAMERA_HEIGHT.
/// The held object floats at the sampled ray endpoint; clutter keeps the
/// ray's horizontal components but rests on the floor.
fn object_center(pose: &Pose, scale: f32, on_floor: bool) -> [f32; 3] {
    let az = deg(pose.azimuth);
    let el = deg(pose.elevation);
    let horizontal = pose.distance * el.cos();
    let x = horizontal * az.sin();
    let z = horizontal * az.cos();
    if on_floor {
        [x, -CAMERA_HEIGHT + scale, z]
    } else {
        [x, pose.distance * el.sin(), z]
    }
}

fn pose_rotation(pose: &Pose) -> Mat3 {
    // yaw * pitch * roll, applied right-to-left to object-frame points.
    mat_mul(&rot_y(deg(pose.yaw)), &mat_mul(&rot_x(deg(pose.pitch)), &rot_z(deg(pose.roll))))
}

struct Splat {
    x: f32,
    y: f32,
    depth: f32,
    sigma: f32,
    color: [f32; 3],
    object: u32,
}

/// Project every point of every object into screen space.
fn gather_splats(
    catalog: &Catalog,
    scene: &Scene,
    camera: &Camera,
    gaze_offset: (f32, f32),
    params: &RenderParams,
) -> Vec<Splat> {
    let res = camera.resolution as f32;
    let focal = res / 2.0 / (deg(camera.fov_deg) / 2.0).tan();
    // World-to-camera: undo yaw, then level the pitch.
    let view = mat_mul(
        &rot_x(deg(camera.pitch + gaze_offset.1)),
        &rot_y(-deg(camera.yaw + gaze_offset.0)),
    );

    let mut splats = Vec::new();
    let mut draw = |object: u32, inst: &InstanceModel, pose: &Pose, on_floor: bool| {
        let rot = pose_rotation(pose);
        let center = object_center(pose, inst.scale, on_floor);
        for (p, c) in inst.points.iter().zip(inst.colors.iter()) {
            let local = mat_apply(&rot, *p);
            let world = [
                center[0] + inst.scale * local[0],
                center[1] + inst.scale * local[1],
                center[2] + inst.scale * local[2],
            ];
            let cam = mat_apply(&view, world);
            if cam[2] < 0.05 {
                continue; // behind or grazing the camera
            }
            let radius_px = focal * params.splat_frac * inst.scale / cam[2];
            splats.push(Splat {
                x: res / 2.0 + focal * cam[0] / cam[2],
                y: res / 2.0 - focal * cam[1] / cam[2],
                depth: cam[2],
                sigma: (radius_px / 2.0).max(0.3),
                color: *c,
                object,
            });
        }
    };

    if let Some((id, pose)) = &scene.main {
        draw(0, catalog.instance(*id), pose, false);
    }
    for (i, (id, pose)) in scene.background.iter().enumerate() {
        draw(i as u32 + 1, catalog.instance(*id), pose, true);
    }

    // Painter's order: far to near, index as deterministic tie-break.
    let mut order: Vec<u32> = (0..splats.len() as u32).collect();
    order.sort_unstable_by(|a, b| {
        splats[*b as usize]
            .depth
            .total_cmp(&splats[*a as usize].depth)
            .then(a.cmp(b))
    });
    order.into_iter().map(|i| {
        let s = &splats[i as usize];
        Splat { x: s.x, y: s.y, depth: s.depth, sigma: s.sigma, color: s.color, object: s.object }
    }).collect()
}

fn splat_bounds(s: &Splat, res: usize) -> Option<(usize, usize, usize, usize)> {
    let support = 2.5 * s.sigma;
    let x0 = (s.x - support).floor().max(0.0) as isize;
    let x1 = (s.x + support).ceil().min(res as f32 - 1.0) as isize;
    let y0 = (s.y - support).floor().max(0.0) as isize;
    let y1 = (s.y + support).ceil().min(res as f32 - 1.0) as isize;
    if x1 < 0 || y1 < 0 || x0 >= res as isize || y1 < y0 || x1 < x0 {
        return None;
    }
    Some((x0.max(0) as usize, x1 as usize, y0.max(0) as usize, y1 as usize))
}

/// Rasterize a scene. Pure function of its arguments.
pub fn render_frame(catalog: &Catalog, scene: &Scene, camera: &Camera, gaze_offset: (f32, f32)) -> Image {
    render_frame_with(catalog, scene, camera, gaze_offset, &RenderParams::default())
}

pub fn render_frame_with(
    catalog: &Catalog,
    scene: &Scene,
    camera: &Camera,
    gaze_offset: (f32, f32),
    params: &RenderParams,
) -> Image {
    let res = camera.resolution;
    let bg = [
        (params.background_gray + scene.tint[0]).clamp(0.0, 1.0),
        (params.background_gray + scene.tint[1]).clamp(0.0, 1.0),
        (params.background_gray + scene.tint[2]).clamp(0.0, 1.0),
    ];
    let mut img = Image::filled(res, bg);
    for s in gather_splats(catalog, scene, camera, gaze_offset, params) {
        let Some((x0, x1, y0, y1)) = splat_bounds(&s, res) else { continue };
        let inv2s2 = 1.0 / (2.0 * s.sigma * s.sigma);
        for py in y0..=y1 {
            let dy = py as f32 + 0.5 - s.y;
            for px in x0..=x1 {
                let dx = px as f32 + 0.5 - s.x;
                let w = (-(dx * dx + dy * dy) * inv2s2).exp();
                let a = params.alpha * w;
                let i = (py * res + px) * 3;
                for ch in 0..3 {
                    img.data[i + ch] = img.data[i + ch] * (1.0 - a) + s.color[ch] * a;
                }
            }
        }
    }
    for v in img.data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    img
}

/// Per-object pixel ownership: a pixel belongs to the object with the
/// largest accumulated splat weight, counted only where that weight is
/// non-negligible. Index 0 is the main object, then background in scene
/// order. Used to check that the held object visually dominates.
pub fn coverage_counts(
    catalog: &Catalog,
    scene: &Scene,
    camera: &Camera,
    gaze_offset: (f32, f32),
) -> Vec<usize> {
    let params = RenderParams::default();
    let res = camera.resolution;
    let n_objects = 1 + scene.background.len();
    let mut weight = vec![0.0f32; n_objects * res * res];
    for s in gather_splats(catalog, scene, camera, gaze_offset, &params) {
        let Some((x0, x1, y0, y1)) = splat_bounds(&s, res) else { continue };
        let inv2s2 = 1.0 / (2.0 * s.sigma * s.sigma);
        let plane = &mut weight[s.object as usize * res * res..(s.object as usize + 1) * res * res];
        for py in y0..=y1 {
            let dy = py as f32 + 0.5 - s.y;
            for px in x0..=x1 {
                let dx = px as f32 + 0.5 - s.x;
                plane[py * res + px] += (-(dx * dx + dy * dy) * inv2s2).exp();
            }
        }
    }
    let mut counts = vec![0usize; n_objects];
    for p in 0..res * res {
        let mut best = (0.05f32, None);
        for o in 0..n_objects {
            let w = weight[o * res * res + p];
            if w > best.0 {
                best = (w, Some(o));
            }
        }
        if let Some(o) = best.1 {
            counts[o] += 1;
        }
    }
    counts
}

/// Attention-model augmentation: with probability 1/2, crop a centered
/// square of side in [8%, 100%] of the image and scale it back up.
/// Draw order: accept coin, then crop fraction.
pub fn center_crop_augment(image: &Image, rng: &mut Stream) -> Image {
    let apply: f32 = rng.random_range(0.0..1.0);
    let frac: f32 = rng.random_range(0.08..=1.0f32);
    if apply >= 0.5 {
        return image.clone();
    }
    crop_and_resize(image, frac)
}

/// Deterministic core of the augmentation, exposed for testing.
pub fn crop_and_resize(image: &Image, frac: f32) -> Image {
    let res = image.resolution;
    let side = frac * res as f32;
    let center = res as f32 / 2.0;
    let mut out = Image::filled(res, [0.0; 3]);
    for oy in 0..res {
        let sy = center - side / 2.0 + (oy as f32 + 0.5) / res as f32 * side;
        for ox in 0..res {
            let sx = center - side / 2.0 + (ox as f32 + 0.5) / res as f32 * side;
            let rgb = bilinear(image, sx, sy);
            let i = (oy * res + ox) * 3;
            out.data[i..i + 3].copy_from_slice(&rgb);
        }
    }
    out
}

fn bilinear(image: &Image, sx: f32, sy: f32) -> [f32; 3] {
    let res = image.resolution;
    let u = sx - 0.5;
    let v = sy - 0.5;
    let x0 = u.floor();
    let y0 = v.floor();
    let tx = u - x0;
    let ty = v - y0;
    let clamp = |a: f32| (a.max(0.0) as usize).min(res - 1);
    let (x0i, x1i) = (clamp(x0), clamp(x0 + 1.0));
    let (y0i, y1i) = (clamp(y0), clamp(y0 + 1.0));
    let p00 = image.pixel(x0i, y0i);
    let p10 = image.pixel(x1i, y0i);
    let p01 = image.pixel(x0i, y1i);
    let p11 = image.pixel(x1i, y1i);
    let mut out = [0.0f32; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - tx) + p10[c] * tx;
        let bot = p01[c] * (1.0 - tx) + p11[c] * tx;
        out[c] = top * (1.0 - ty) + bot * ty;
    }
    out
}

// ---------------------------------------------------------------------------
// Frame tensor files

const FRAMES_MAGIC: &[u8; 4] = b"PRFB";

/// Dump 8-bit HWC frames as one binary tensor file:
/// magic "PRFB", u32 version=1, u32 count, u32 resolution, then
/// count*res*res*3 bytes. All integers little-endian.
pub fn write_frames(w: &mut impl std::io::Write, resolution: usize, frames: &[u8]) -> Result<()> {
    let frame_len = resolution * resolution * 3;
    assert_eq!(frames.len() % frame_len, 0);
    let count = (frames.len() / frame_len) as u32;
    w.write_all(FRAMES_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&(resolution as u32).to_le_bytes())?;
    w.write_all(frames)?;
    Ok(())
}

/// Read a frame tensor file back; returns (resolution, frame bytes).
pub fn read_frames(r: &mut impl std::io::Read) -> Result<(usize, Vec<u8>)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[0..4] != FRAMES_MAGIC {
        return Err(Error::Parse("bad frame file magic".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != 1 {
        return Err(Error::Parse(format!("unsupported frame file version {}", version)));
    }
    let count = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let resolution = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let mut data = vec![0u8; count * resolution * resolution * 3];
    r.read_exact(&mut data)?;
    Ok((resolution, data))
}
