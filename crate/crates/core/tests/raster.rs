use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvsplat::geometry::*;
use uvsplat::raster::*;
use uvsplat::synth::{make_scene, SceneSpec, Shape};

fn camera() -> Camera {
    Camera::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), 40.0, 40.0, 48, 40).unwrap()
}

/// A random triangle near the origin, wound to face `cam`.
fn facing_triangle(rng: &mut ChaCha8Rng, cam: &Camera) -> [Vec3; 3] {
    loop {
        let mut t = [Vec3::zeros(); 3];
        for v in &mut t {
            *v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5));
        }
        let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
        if n.norm() < 0.05 {
            continue;
        }
        if n.dot(&(cam.center() - t[0])) < 0.0 {
            t.swap(1, 2);
        }
        return t;
    }
}

fn one_triangle_mesh(t: [Vec3; 3]) -> TriMesh {
    TriMesh::from_geometry(
        t.to_vec(),
        vec![[0, 1, 2]],
        vec![[Vec2::new(0.1, 0.1), Vec2::new(0.9, 0.2), Vec2::new(0.3, 0.8)]],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covered_pixels_reproject_to_their_centers(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam = camera();
        let t = facing_triangle(&mut rng, &cam);
        let mesh = one_triangle_mesh(t);
        let gb = rasterize(&mesh, &t, &cam).unwrap();
        for p in gb.covered() {
            let b = gb.bary[p];
            prop_assert!(b.iter().all(|&x| x >= 0.0));
            prop_assert!((b.sum() - 1.0).abs() <= 1e-6);
            prop_assert!((gb.normal[p].norm() - 1.0).abs() <= 1e-6);
            prop_assert!(gb.depth[p] > 0.0);
            prop_assert!((0.0..=1.0).contains(&gb.uv[p].x) && (0.0..=1.0).contains(&gb.uv[p].y));
            let x = t[0] * b[0] + t[1] * b[1] + t[2] * b[2];
            let pr = cam.project(&x);
            prop_assert!((pr.pixel - gb.pixel_center(p)).norm() <= 0.5);
        }
        for p in 0..gb.len() {
            if !gb.mask[p] {
                prop_assert!(gb.face_id[p].is_none());
            }
        }
    }

    /// Coverage equals the set of pixel centers strictly inside all three
    /// projected edges; random vertices make exact ties measure-zero.
    #[test]
    fn coverage_matches_edge_functions(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam = camera();
        let t = facing_triangle(&mut rng, &cam);
        let mesh = one_triangle_mesh(t);
        let gb = rasterize(&mesh, &t, &cam).unwrap();
        let s: Vec<Vec2> = t.iter().map(|v| cam.project(v).pixel).collect();
        let edge = |a: Vec2, b: Vec2, p: Vec2| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        let area = edge(s[0], s[1], s[2]);
        for p in 0..gb.len() {
            let c = gb.pixel_center(p);
            let e = [edge(s[1], s[2], c), edge(s[2], s[0], c), edge(s[0], s[1], c)];
            let inside = e.iter().all(|&x| x * area.signum() > 0.0);
            prop_assert_eq!(gb.mask[p], inside, "pixel {}", p);
        }
    }

    #[test]
    fn normal_vjp_matches_fd(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam = camera();
        let t = facing_triangle(&mut rng, &cam);
        let mesh = one_triangle_mesh(t);
        let gb = rasterize(&mesh, &t, &cam).unwrap();
        let Some(pixel) = gb.covered().next() else { return Ok(()); };
        let comp = rng.gen_range(0..3);
        let mut cot = vec![Vec3::zeros(); gb.len()];
        cot[pixel][comp] = 1.0;
        let grad = normal_map_vjp(&gb, &mesh, &t, &cot).unwrap();
        let h = 1e-6;
        for v in 0..3 {
            for c in 0..3 {
                let mut plus = t;
                let mut minus = t;
                plus[v][c] += h;
                minus[v][c] -= h;
                let np = render_normal_map(&gb, &mesh, &plus).unwrap().normals[pixel][comp];
                let nm = render_normal_map(&gb, &mesh, &minus).unwrap().normals[pixel][comp];
                let fd = (np - nm) / (2.0 * h);
                let an = grad[v][c];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                prop_assert!(rel <= 1e-5, "vertex {} coord {}: {} vs {}", v, c, an, fd);
            }
        }
    }
}

#[test]
fn rasterization_is_bit_identical() {
    let scene = make_scene(&SceneSpec::new(Shape::Ellipsoid { a: 1.0, b: 0.8, c: 1.2, subdiv: 3 })).unwrap();
    let opts = RigOptions { width: 96, height: 80, fov_deg: 50.0 };
    for cam in six_view_rig_with(4.0, Vec3::zeros(), &opts).unwrap() {
        let a = rasterize(&scene.mesh, scene.mesh.vertices(), &cam).unwrap();
        let b = rasterize(&scene.mesh, scene.mesh.vertices(), &cam).unwrap();
        assert_eq!(a.face_id, b.face_id);
        let bits = |g: &GBuffer| -> Vec<u64> {
            g.bary
                .iter()
                .chain(&g.normal)
                .flat_map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
                .chain(g.depth.iter().map(|x| x.to_bits()))
                .chain(g.uv.iter().flat_map(|v| [v.x.to_bits(), v.y.to_bits()]))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }
}

#[test]
fn frozen_normals_follow_rotation() {
    let scene = make_scene(&SceneSpec::new(Shape::Icosphere { subdiv: 2 })).unwrap();
    let cam = camera();
    let pos = scene.mesh.vertices();
    let gb = rasterize(&scene.mesh, pos, &cam).unwrap();
    let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::y_axis(), std::f64::consts::FRAC_PI_2);
    let rotated: Vec<Vec3> = pos.iter().map(|p| rot * p).collect();
    let before = render_normal_map(&gb, &scene.mesh, pos).unwrap();
    let after = render_normal_map(&gb, &scene.mesh, &rotated).unwrap();
    let mut checked = 0;
    for p in gb.covered() {
        assert!(after.valid[p]);
        assert!((after.normals[p] - rot * before.normals[p]).norm() <= 1e-12);
        checked += 1;
    }
    assert!(checked > 100);
}
