use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvsplat::anchor::*;
use uvsplat::geometry::{Camera, Mat3, Vec2, Vec3, VertexOffsets};
use uvsplat::synth::{make_scene, Scene, SceneSpec, Shape, UvLayout};

fn atlas_scene(subdiv: u32) -> Scene {
    let mut spec = SceneSpec::new(Shape::Icosphere { subdiv });
    spec.uv_layout = UvLayout::PerFaceAtlas;
    make_scene(&spec).unwrap()
}

fn random_bary(rng: &mut impl Rng) -> Vec3 {
    let (a, b): (f64, f64) = (rng.gen(), rng.gen());
    let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
    Vec3::new(1.0 - a - b, a, b)
}

fn uv_attrs(res: usize, rng: &mut impl Rng) -> UvAttributeMap {
    let data = (0..res * res)
        .flat_map(|_| {
            let o = if rng.gen_bool(0.7) { rng.gen_range(0.1..1.0) } else { 0.0 };
            [rng.gen(), rng.gen(), rng.gen(), o, rng.gen_range(0.005..0.03)]
        })
        .collect();
    UvAttributeMap::new(res, data).unwrap()
}

fn anchored(scene: &Scene, seed: u64) -> GaussianSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attrs = uv_attrs(24, &mut rng);
    let colors = vec![[0.5; 3]; scene.mesh.num_vertices()];
    build_gaussians(&scene.mesh, scene.mesh.vertices(), &attrs, &colors).unwrap()
}

/// Barycentric coordinates of `p` in the triangle plane and the distance from
/// `p` to that plane.
fn locate_on_triangle(p: Vec3, [a, b, c]: [Vec3; 3]) -> (Vec3, f64) {
    let n = (b - a).cross(&(c - a));
    let area2 = n.norm_squared();
    let l1 = (p - a).cross(&(c - a)).dot(&n) / area2;
    let l2 = (b - a).cross(&(p - a)).dot(&n) / area2;
    (Vec3::new(1.0 - l1 - l2, l1, l2), (p - a).dot(&n).abs() / area2.sqrt())
}

#[test]
fn corner_uv_is_one_hot() {
    let scene = atlas_scene(1);
    for (fi, tri) in scene.mesh.uv_corners().iter().enumerate().take(20) {
        for (k, uv) in tri.iter().enumerate() {
            let (f, b) = uv_to_surface(&scene.mesh, *uv).unwrap();
            assert_eq!(f, fi);
            assert!((b[k] - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn uv_outside_every_chart_is_none() {
    let scene = atlas_scene(1);
    let index = UvIndex::new(&scene.mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut misses = 0;
    for _ in 0..2000 {
        let uv = Vec2::new(rng.gen(), rng.gen());
        let inside = scene.mesh.uv_corners().iter().any(|t| {
            let s = |a: Vec2, b: Vec2| (b.x - a.x) * (uv.y - a.y) - (b.y - a.y) * (uv.x - a.x);
            let (d0, d1, d2) = (s(t[0], t[1]), s(t[1], t[2]), s(t[2], t[0]));
            (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
        });
        if !inside {
            assert!(index.locate(uv).is_none(), "{uv:?}");
            misses += 1;
        }
    }
    assert!(misses > 0);
    assert!(index.locate(Vec2::new(-0.1, 0.5)).is_none());
    assert!(index.locate(Vec2::new(0.5, 1.5)).is_none());
}

#[test]
fn uv_round_trip() {
    let scene = atlas_scene(2);
    let index = UvIndex::new(&scene.mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let verts = scene.mesh.vertices();
    for _ in 0..1000 {
        let fi = rng.gen_range(0..scene.mesh.num_faces());
        let b = random_bary(&mut rng);
        let [t0, t1, t2] = scene.mesh.uv_corners()[fi];
        let uv = t0 * b.x + t1 * b.y + t2 * b.z;
        let [a, bb, c] = scene.mesh.faces()[fi].map(|i| verts[i]);
        let want = a * b.x + bb * b.y + c * b.z;
        let (f, got_b) = index.locate(uv).unwrap();
        let [a, bb, c] = scene.mesh.faces()[f].map(|i| verts[i]);
        let got = a * got_b.x + bb * got_b.y + c * got_b.z;
        assert!((got - want).norm() <= 1e-9);
    }
}

#[test]
fn drive_with_zero_coefficients_is_identity() {
    let scene = atlas_scene(2);
    let set = anchored(&scene, 3);
    let n = scene.mesh.num_vertices();
    let driven = drive(&set, &scene.model, &[0.0; 3], &VertexOffsets::zeros(n)).unwrap();
    assert_eq!(driven.positions, set.positions);
}

#[test]
fn drive_with_a_translation_translates() {
    let scene = atlas_scene(2);
    let mut set = anchored(&scene, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for o in set.offsets.iter_mut() {
        *o = Vec3::new(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02));
    }
    set.positions = resolve_positions(&set, &scene.mesh, scene.mesh.vertices()).unwrap();
    let shift = Vec3::new(0.3, -1.2, 0.7);
    let offsets = VertexOffsets(vec![shift; scene.mesh.num_vertices()]);
    let driven = drive(&set, &scene.model, &[0.0; 3], &offsets).unwrap();
    for (p, q) in driven.positions.iter().zip(&set.positions) {
        assert!((p - (q + shift)).norm() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn surface_splats_stay_on_their_triangles(seed in 0u64..10_000) {
        let scene = atlas_scene(2);
        let set = anchored(&scene, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let coeffs: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let offsets = VertexOffsets(
            (0..scene.mesh.num_vertices())
                .map(|_| Vec3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)))
                .collect(),
        );
        let driven = drive(&set, &scene.model, &coeffs, &offsets).unwrap();
        // recompute the driven vertices independently of deformed_vertices
        let verts: Vec<Vec3> = scene
            .mesh
            .vertices()
            .iter()
            .zip(&offsets.0)
            .map(|(v, d)| Vec3::new(v.x * (1.0 + coeffs[0]), v.y * (1.0 + coeffs[1]), v.z * (1.0 + coeffs[2])) + d)
            .collect();
        let mut surface = 0;
        for (a, p) in driven.anchors.iter().zip(&driven.positions) {
            match *a {
                Anchor::Surface { face, bary } => {
                    let tri = scene.mesh.faces()[face].map(|i| verts[i]);
                    let (got, dist) = locate_on_triangle(*p, tri);
                    prop_assert!(dist <= 1e-9);
                    prop_assert!((got - bary).amax() <= 1e-9);
                    prop_assert!(got.min() >= -1e-9);
                    surface += 1;
                }
                Anchor::Vertex(v) => prop_assert!((p - verts[v]).norm() <= 1e-12),
            }
        }
        prop_assert!(surface > 0);
    }

    #[test]
    fn rigid_motion_moves_splats_rigidly(seed in 0u64..10_000) {
        let scene = atlas_scene(2);
        let mut set = anchored(&scene, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for o in set.offsets.iter_mut() {
            *o = Vec3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
        }
        set.positions = resolve_positions(&set, &scene.mesh, scene.mesh.vertices()).unwrap();
        let axis = nalgebra::Unit::new_normalize(Vec3::new(rng.gen(), rng.gen(), rng.gen::<f64>() + 0.1));
        let rot: Mat3 = *nalgebra::Rotation3::from_axis_angle(&axis, rng.gen_range(-3.0..3.0)).matrix();
        let t = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let offsets = VertexOffsets(scene.mesh.vertices().iter().map(|v| rot * v + t - v).collect());
        let driven = drive(&set, &scene.model, &[0.0; 3], &offsets).unwrap();
        for (p, q) in driven.positions.iter().zip(&set.positions) {
            prop_assert!((p - (rot * q + t)).norm() <= 1e-12, "{}", (p - (rot * q + t)).norm());
        }
    }
}

fn pick<T: Copy>(v: &[T], order: &[usize]) -> Vec<T> {
    order.iter().map(|&i| v[i]).collect()
}

fn front_camera() -> Camera {
    Camera::look_at(Vec3::new(0.0, 0.0, 4.0), Vec3::zeros(), 80.0, 80.0, 48, 48).unwrap()
}

#[test]
fn render_ignores_input_order() {
    let scene = atlas_scene(2);
    let set = anchored(&scene, 5);
    let cam = front_camera();
    let img = render_gaussians(&set, &cam).unwrap();
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let shuffled = GaussianSet {
        anchors: pick(&set.anchors, &order),
        offsets: pick(&set.offsets, &order),
        scale: pick(&set.scale, &order),
        opacity: pick(&set.opacity, &order),
        color: pick(&set.color, &order),
        positions: pick(&set.positions, &order),
    };
    let img2 = render_gaussians(&shuffled, &cam).unwrap();
    for (a, b) in img.pixels.iter().zip(&img2.pixels) {
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() <= 1e-12);
        }
    }
}

#[test]
fn rendered_alpha_is_a_probability() {
    let scene = atlas_scene(2);
    let set = anchored(&scene, 6);
    set.validate(&scene.mesh).unwrap();
    let img = render_gaussians(&set, &front_camera()).unwrap();
    assert_eq!(img.pixels.len(), 48 * 48);
    let mut covered = 0;
    for p in &img.pixels {
        assert!((0.0..=1.0).contains(&p[3]));
        for k in 0..3 {
            assert!(p[k] >= 0.0 && p[k] <= p[3] + 1e-12);
        }
        if p[3] > 0.5 {
            covered += 1;
        }
    }
    assert!(covered > 100);
}

#[test]
fn malformed_sets_are_rejected() {
    let scene = atlas_scene(1);
    let mut set = anchored(&scene, 7);
    set.anchors[0] = Anchor::Vertex(scene.mesh.num_vertices());
    assert!(set.validate(&scene.mesh).is_err());
    let mut set = anchored(&scene, 7);
    set.opacity[0] = 1.5;
    assert!(set.validate(&scene.mesh).is_err());
    let mut set = anchored(&scene, 7);
    set.scale.pop();
    assert!(set.validate(&scene.mesh).is_err());
    assert!(UvAttributeMap::new(2, vec![0.0; 19]).is_err());
    let n = scene.mesh.num_vertices();
    let set = anchored(&scene, 7);
    assert!(drive(&set, &scene.model, &[0.0; 2], &VertexOffsets::zeros(n)).is_err());
}
