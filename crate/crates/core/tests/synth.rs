use proptest::prelude::*;
use uvsplat::geometry::{face_normals, six_view_rig_with, vertex_laplacian, Camera, RigOptions, Vec3};
use uvsplat::raster::rasterize;
use uvsplat::synth::*;

fn small_rig() -> Vec<Camera> {
    let opts = RigOptions {
        width: 40,
        height: 40,
        ..RigOptions::default()
    };
    six_view_rig_with(4.0, Vec3::zeros(), &opts).unwrap()
}

#[test]
fn analytic_normals_are_unit_and_outward() {
    let radii = (1.0, 0.8, 1.2);
    let cams = small_rig();
    for (cam, map) in cams.iter().zip(analytic_normal_maps(radii, &cams)) {
        let mut hits = 0;
        for (i, (n, m)) in map.normals.iter().zip(&map.mask).enumerate() {
            if !*m {
                assert_eq!(*n, Vec3::zeros());
                continue;
            }
            hits += 1;
            assert!((n.norm() - 1.0).abs() <= 1e-12);
            let pixel = nalgebra::Vector2::new((i % 40) as f64 + 0.5, (i / 40) as f64 + 0.5);
            let dir = cam.ray_direction(pixel);
            assert!(n.dot(&dir) < 0.0, "normal faces away at pixel {i}");
        }
        assert!(hits > 100);
    }
}

#[test]
fn ray_hits_land_on_the_surface() {
    let radii = (1.3, 0.7, 0.9);
    let origin = Vec3::new(0.2, -0.1, 5.0);
    for k in 0..50 {
        let t = k as f64 / 50.0 - 0.5;
        let dir = Vec3::new(t * 0.4, -t * 0.3, -1.0).normalize();
        if let Some((d, p)) = ray_ellipsoid(origin, dir, radii) {
            assert!(d > 0.0);
            assert!((p - (origin + dir * d)).norm() <= 1e-12);
            let f = (p.x / radii.0).powi(2) + (p.y / radii.1).powi(2) + (p.z / radii.2).powi(2);
            assert!((f - 1.0).abs() <= 1e-12);
            assert!(distance_to_ellipsoid(&p, radii) <= 1e-9);
        }
    }
    assert!(ray_ellipsoid(origin, Vec3::new(0.0, 1.0, 0.0), radii).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_meshes_are_well_formed(
        shape in prop_oneof![
            (0u32..=3).prop_map(|s| Shape::Icosphere { subdiv: s }),
            (0.5f64..1.5, 0.5f64..1.5, 0.5f64..1.5, 0u32..=2)
                .prop_map(|(a, b, c, subdiv)| Shape::Ellipsoid { a, b, c, subdiv }),
            (1usize..=8).prop_map(|n| Shape::Grid { n }),
        ],
        atlas in any::<bool>(),
    ) {
        let mut spec = SceneSpec::new(shape);
        if atlas {
            spec.uv_layout = UvLayout::PerFaceAtlas;
        }
        let scene = make_scene(&spec).unwrap();
        let mesh = &scene.mesh;
        let n = mesh.num_vertices();
        for f in mesh.faces() {
            prop_assert!(f.iter().all(|&i| i < n));
            prop_assert!(f[0] != f[1] && f[1] != f[2] && f[0] != f[2]);
        }
        for tri in mesh.uv_corners() {
            for uv in tri {
                prop_assert!((0.0..=1.0).contains(&uv.x) && (0.0..=1.0).contains(&uv.y));
            }
        }
        let mirror = mesh.mirror();
        for i in 0..n {
            prop_assert_eq!(mirror[mirror[i]], i);
            let (p, q) = (mesh.vertices()[i], mesh.vertices()[mirror[i]]);
            if mirror[i] != i {
                prop_assert!((p.x + q.x).abs() <= 1e-6 && (p.y - q.y).abs() <= 1e-6 && (p.z - q.z).abs() <= 1e-6);
            }
        }
        let fn_ = face_normals(mesh, mesh.vertices(), false).unwrap();
        prop_assert!(fn_.degenerate.is_empty());
        prop_assert!(vertex_laplacian(mesh, mesh.vertices()).is_ok());
        prop_assert_eq!(scene.model.coeffs_dim(), 3);
    }
}

#[test]
fn features_follow_the_rule() {
    let scene = make_scene(&SceneSpec::new(Shape::Icosphere { subdiv: 2 })).unwrap();
    let cam = &small_rig()[0];
    let gb = rasterize(&scene.mesh, scene.mesh.vertices(), cam).unwrap();
    let constant = view_features(&gb, &FeatureRule::Constant(0.25));
    let checker = view_features(&gb, &FeatureRule::Checkerboard { cells: 4 });
    let normals = view_features(&gb, &FeatureRule::NormalsAsRgb);
    for p in 0..40 * 40 {
        if gb.mask[p] {
            assert!(constant.pixel(p).iter().all(|&x| x == 0.25));
            assert_eq!(checker.pixel(p), &checker_color(gb.uv[p], 4)[..]);
            let n = gb.normal[p];
            for k in 0..3 {
                assert!((normals.pixel(p)[k] - (n[k] + 1.0) / 2.0).abs() <= 1e-12);
            }
        } else {
            assert!(constant.pixel(p).iter().all(|&x| x == 0.0));
        }
    }
}

#[test]
fn landmarks_are_visible_projections_of_the_target() {
    let radii = (1.0, 0.8, 1.2);
    let scene = make_scene(&SceneSpec::new(Shape::Icosphere { subdiv: 2 })).unwrap();
    let cams = small_rig();
    let lms = synth_landmarks(&scene.mesh, radii, &cams, 20, 1);
    assert!(!lms.is_empty());
    assert_eq!(lms, synth_landmarks(&scene.mesh, radii, &cams, 20, 1));
    for (v, c, px) in lms {
        let p = scene.mesh.vertices()[v];
        let target = Vec3::new(p.x * radii.0, p.y * radii.1, p.z * radii.2);
        assert!((cams[c].project(&target).pixel - px).norm() <= 1e-9);
        assert!(px.x >= 0.0 && px.y >= 0.0 && px.x < 40.0 && px.y < 40.0);
    }
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(make_scene(&SceneSpec::new(Shape::Grid { n: 0 })).is_err());
    assert!(make_scene(&SceneSpec::new(Shape::Ellipsoid { a: 1.0, b: -1.0, c: 1.0, subdiv: 1 })).is_err());
    let mut spec = SceneSpec::new(Shape::Icosphere { subdiv: 1 });
    spec.feature_rule = FeatureRule::Checkerboard { cells: 0 };
    assert!(make_scene(&spec).is_err());
}
