//! Renderer-level checks that need a real generated world: determinism,
//! object visibility, and the anti-shortcut properties of the catalog
//! (color and scale must not give categories away).

use playroom::playsim::{expand_entry, generate_dataset, generate_session, WorldConfig};
use playroom::render::{build_world, render_frame, Camera, RenderParams, Scene};
use playroom::{CategoryId, InstanceId};

fn world() -> WorldConfig {
    WorldConfig { categories: 6, instances_per_category: 4, seed: 51 }
}

fn first_scene(cfg: &WorldConfig) -> (Scene, Camera) {
    let manifest = generate_dataset(cfg).unwrap();
    let spec = expand_entry(&manifest.train[0]);
    let session = generate_session(&spec);
    let frame = &session.frames[0];
    let background: Vec<_> = spec
        .background_instances
        .iter()
        .zip(&spec.background_poses)
        .map(|(i, p)| (*i, *p))
        .collect();
    let scene = Scene {
        main: Some((spec.main_instance, frame.main_pose)),
        background,
        tint: [0.0; 3],
    };
    (scene, Camera::facing(&frame.main_pose, 64))
}

#[test]
fn rendering_is_deterministic() {
    let cfg = world();
    let catalog = build_world(&cfg).unwrap();
    let (scene, camera) = first_scene(&cfg);
    let a = render_frame(&catalog, &scene, &camera, (0.3, -0.2));
    let b = render_frame(&catalog, &scene, &camera, (0.3, -0.2));
    assert_eq!(a.data, b.data);
    let c = render_frame(&catalog, &scene, &camera, (3.0, -0.2));
    assert_ne!(a.data, c.data, "gaze offset must move the image");
}

#[test]
fn held_object_dominates_the_image_center() {
    let cfg = world();
    let catalog = build_world(&cfg).unwrap();
    let (scene, camera) = first_scene(&cfg);
    let with = render_frame(&catalog, &scene, &camera, (0.0, 0.0));
    let without = render_frame(
        &catalog,
        &Scene { main: None, ..scene.clone() },
        &camera,
        (0.0, 0.0),
    );
    // Count pixels the main object changed, split into a center disc vs
    // the rim of the image.
    let res = 64usize;
    let (mut center, mut rim) = (0usize, 0usize);
    for y in 0..res {
        for x in 0..res {
            let i = (y * res + x) * 3;
            if (with.data[i] - without.data[i]).abs() > 1e-6
                || (with.data[i + 1] - without.data[i + 1]).abs() > 1e-6
                || (with.data[i + 2] - without.data[i + 2]).abs() > 1e-6
            {
                let (dx, dy) = (x as f32 - 31.5, y as f32 - 31.5);
                if (dx * dx + dy * dy).sqrt() < 20.0 {
                    center += 1;
                } else {
                    rim += 1;
                }
            }
        }
    }
    assert!(center > 120, "main object covers only {} center pixels", center);
    assert!(
        center > rim,
        "object should concentrate centrally: center {} rim {}",
        center,
        rim
    );
}

#[test]
fn every_instance_renders_visibly() {
    let cfg = world();
    let catalog = build_world(&cfg).unwrap();
    let pose = playroom::playsim::Pose {
        distance: 0.3,
        azimuth: 0.0,
        elevation: -20.0,
        yaw: 45.0,
        pitch: 0.0,
        roll: 0.0,
    };
    let camera = Camera::facing(&pose, 32);
    let params = RenderParams::default();
    for i in 0..cfg.instance_count() {
        let scene = Scene {
            main: Some((InstanceId(i as u32), pose)),
            background: vec![],
            tint: [0.0; 3],
        };
        let img = render_frame(&catalog, &scene, &camera, (0.0, 0.0));
        let touched = img
            .data
            .chunks_exact(3)
            .filter(|px| {
                (px[0] - params.background_gray).abs() > 1e-6
                    || (px[1] - params.background_gray).abs() > 1e-6
                    || (px[2] - params.background_gray).abs() > 1e-6
            })
            .count();
        assert!(touched > 30, "instance {} renders only {} pixels", i, touched);
    }
}

#[test]
fn object_colors_carry_no_category_hue() {
    // Every object in a world wears the exact same color multiset: the world
    // palette, whose antithetic pairs pin its mean at exactly mid-gray.
    // Instances differ only in which position wears which color, and that
    // binding is drawn per instance, so no color statistic - mean, spread,
    // histogram - can separate categories even in principle.
    let cfg = WorldConfig { categories: 8, instances_per_category: 6, seed: 77 };
    let catalog = build_world(&cfg).unwrap();
    let sorted_bits = |colors: &[[f32; 3]]| {
        let mut v: Vec<[u32; 3]> = colors.iter().map(|c| c.map(f32::to_bits)).collect();
        v.sort_unstable();
        v
    };
    let palette = sorted_bits(&catalog.categories[0].colors);
    let mut mean = [0.0f64; 3];
    for c in &catalog.categories[0].colors {
        for a in 0..3 {
            mean[a] += c[a] as f64 / catalog.categories[0].colors.len() as f64;
        }
    }
    for m in &mean {
        assert!((m - 0.5).abs() < 1e-6, "palette mean {} off mid-gray", m);
    }
    for cat in &catalog.categories[1..] {
        assert_eq!(cat.colors, catalog.categories[0].colors, "templates share the palette");
    }
    for inst in &catalog.instances {
        assert_eq!(sorted_bits(&inst.colors), palette, "instance color multiset differs");
    }
    // Sibling instances must still be told apart by their bindings.
    assert_ne!(catalog.instances[0].colors, catalog.instances[1].colors);
}

#[test]
fn shapes_are_size_normalized() {
    let cfg = world();
    let catalog = build_world(&cfg).unwrap();
    // Templates are normalized to RMS radius 0.5 exactly; instances add
    // small unnormalized shape noise on top.
    for cat in &catalog.categories {
        let n = cat.points.len() as f32;
        let rms = (cat
            .points
            .iter()
            .map(|p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
            .sum::<f32>()
            / n)
            .sqrt();
        assert!((rms - 0.5).abs() < 2e-3, "template rms radius {}", rms);
    }
    for inst in &catalog.instances {
        let n = inst.points.len() as f32;
        let rms = (inst
            .points
            .iter()
            .map(|p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
            .sum::<f32>()
            / n)
            .sqrt();
        assert!(
            rms > 0.42 && rms < 0.6,
            "instance {} rms radius {}",
            inst.instance_id,
            rms
        );
        assert_eq!(inst.scale, 0.09, "instance scale must stay fixed");
    }
}

#[test]
fn instances_of_a_category_share_structure_but_differ() {
    let cfg = world();
    let catalog = build_world(&cfg).unwrap();
    let a = catalog.instance(InstanceId(0));
    let b = catalog.instance(InstanceId(1));
    assert_eq!(a.category_id, b.category_id);
    assert_eq!(a.points.len(), b.points.len());
    assert_ne!(a.points, b.points);
    let other = catalog.instance(InstanceId(cfg.instances_per_category as u32));
    assert_ne!(other.category_id, a.category_id);
}

#[test]
fn category_names_are_unique_single_tokens() {
    let cfg = WorldConfig { categories: 20, instances_per_category: 3, seed: 5 };
    let catalog = build_world(&cfg).unwrap();
    let mut seen = std::collections::HashSet::new();
    for c in 0..cfg.categories {
        let name = catalog.category_name(CategoryId(c as u32));
        assert!(!name.is_empty() && !name.contains(' '));
        assert!(seen.insert(name.to_string()), "duplicate name {}", name);
    }
}
