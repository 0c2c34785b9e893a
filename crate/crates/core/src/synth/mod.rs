//! Synthetic scenes and reference oracles for desk-scale verification.

pub mod oracle;
pub mod random;

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{BlendModel, Camera, Label, RegionWeights, TriMesh, Vec2, Vec3};
use crate::raster::{GBuffer, NormalMap};
use crate::uvsplat::FeatureMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Icosphere { subdiv: u32 },
    Ellipsoid { a: f64, b: f64, c: f64, subdiv: u32 },
    /// `n × n` quads on the plane z = 0 spanning `[-1, 1]²`, facing +Z.
    Grid { n: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UvLayout {
    /// Longitude/colatitude around +Y with the seam at the back (−Z).
    #[default]
    Spherical,
    /// Every face gets its own small triangle in a grid of cells.
    PerFaceAtlas,
}

/// Labels vertices by the angle between `v − centroid` and the +Z (front)
/// axis: below `face_deg` is face, below `boundary_deg` is boundary, the rest
/// is hair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelRule {
    pub face_deg: f64,
    pub boundary_deg: f64,
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule {
            face_deg: 35.0,
            boundary_deg: 50.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeatureRule {
    Checkerboard { cells: usize },
    NormalsAsRgb,
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub shape: Shape,
    pub uv_layout: UvLayout,
    pub label_rule: LabelRule,
    pub feature_rule: FeatureRule,
    pub region_weights: RegionWeights,
}

impl SceneSpec {
    pub fn new(shape: Shape) -> Self {
        SceneSpec {
            shape,
            uv_layout: UvLayout::Spherical,
            label_rule: LabelRule::default(),
            feature_rule: FeatureRule::Checkerboard { cells: 8 },
            region_weights: RegionWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.shape {
            Shape::Ellipsoid { a, b, c, .. } if !(a > 0.0 && b > 0.0 && c > 0.0) => {
                return Err(Error::InvalidConfig(format!(
                    "ellipsoid radii must be positive, got ({a}, {b}, {c})"
                )))
            }
            Shape::Grid { n: 0 } => return Err(Error::InvalidConfig("grid needs n >= 1".into())),
            _ => {}
        }
        if let FeatureRule::Checkerboard { cells: 0 } = self.feature_rule {
            return Err(Error::InvalidConfig("checkerboard needs cells >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub mesh: TriMesh,
    /// Template plus three axis-stretch fields: `basis_k[i] = x_i[k] · e_k`.
    pub model: BlendModel,
    /// Faces whose spherical UVs straddle the seam.
    pub seam_faces: Vec<bool>,
    /// Vertices without a mirror partner within tolerance (mapped to self).
    pub unpaired: Vec<usize>,
}

pub const MIRROR_TOLERANCE: f64 = 1e-6;

pub fn make_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (vertices, faces) = match spec.shape {
        Shape::Icosphere { subdiv } => icosphere(subdiv),
        Shape::Ellipsoid { a, b, c, subdiv } => {
            let (v, f) = icosphere(subdiv);
            (v.into_iter().map(|p| Vec3::new(p.x * a, p.y * b, p.z * c)).collect(), f)
        }
        Shape::Grid { n } => grid(n),
    };
    let (uv_corners, seam_faces) = match (spec.uv_layout, spec.shape) {
        (UvLayout::Spherical, Shape::Grid { .. }) => (planar_uvs(&vertices, &faces), vec![false; faces.len()]),
        (UvLayout::Spherical, _) => spherical_uvs(&vertices, &faces),
        (UvLayout::PerFaceAtlas, _) => (per_face_atlas(faces.len()), vec![false; faces.len()]),
    };
    let labels = label_vertices(&vertices, &spec.label_rule);
    let (mirror, unpaired) = mirror_pairs(&vertices);
    if !unpaired.is_empty() {
        log::warn!("{} vertices have no mirror partner; mapped to themselves", unpaired.len());
    }
    let lap_weights = spec.region_weights.weights_for(&labels);
    let mesh = TriMesh::new(vertices, faces, uv_corners, labels, mirror, lap_weights)?;
    let basis = (0..3)
        .map(|k| {
            mesh.vertices()
                .iter()
                .map(|v| {
                    let mut d = Vec3::zeros();
                    d[k] = v[k];
                    d
                })
                .collect()
        })
        .collect();
    let model = BlendModel::new(mesh.clone(), basis)?;
    Ok(Scene {
        mesh,
        model,
        seam_faces,
        unpaired,
    })
}

/// Unit icosphere: an icosahedron with `subdiv` rounds of 4-way midpoint
/// subdivision, outward winding.
pub fn icosphere(subdiv: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

fn grid(n: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / n as f64;
    let mut verts = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            verts.push(Vec3::new(coord(i), coord(j), 0.0));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut faces = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    (verts, faces)
}

fn planar_uvs(verts: &[Vec3], faces: &[[usize; 3]]) -> Vec<[Vec2; 3]> {
    // image-style v: world +Y maps to the top row
    faces
        .iter()
        .map(|f| {
            f.map(|i| {
                let p = verts[i];
                Vec2::new(((p.x + 1.0) * 0.5).clamp(0.0, 1.0), ((1.0 - p.y) * 0.5).clamp(0.0, 1.0))
            })
        })
        .collect()
}

fn spherical_uvs(verts: &[Vec3], faces: &[[usize; 3]]) -> (Vec<[Vec2; 3]>, Vec<bool>) {
    let mut seam = vec![false; faces.len()];
    let uvs = faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let dirs = f.map(|i| verts[i].normalize());
            let on_axis = dirs.map(|d| d.x * d.x + d.z * d.z < 1e-20);
            let mut u = dirs.map(|d| 0.5 + d.x.atan2(d.z) / (2.0 * PI));
            let v = dirs.map(|d| d.y.clamp(-1.0, 1.0).acos() / PI);
            // pole corners take the longitude of the rest of the face
            let known: Vec<f64> = (0..3).filter(|&k| !on_axis[k]).map(|k| u[k]).collect();
            if !known.is_empty() && known.len() < 3 {
                let mean = known.iter().sum::<f64>() / known.len() as f64;
                for k in 0..3 {
                    if on_axis[k] {
                        u[k] = mean;
                    }
                }
            }
            let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 0.5 {
                seam[fi] = true;
                for x in &mut u {
                    if *x < 0.5 {
                        *x = (*x + 1.0).min(1.0);
                    }
                }
            }
            [0, 1, 2].map(|k| Vec2::new(u[k].clamp(0.0, 1.0), v[k]))
        })
        .collect();
    (uvs, seam)
}

fn per_face_atlas(num_faces: usize) -> Vec<[Vec2; 3]> {
    let cells = (num_faces as f64).sqrt().ceil().max(1.0) as usize;
    let size = 1.0 / cells as f64;
    let pad = 0.1 * size;
    (0..num_faces)
        .map(|fi| {
            let x0 = (fi % cells) as f64 * size;
            let y0 = (fi / cells) as f64 * size;
            [
                Vec2::new(x0 + pad, y0 + pad),
                Vec2::new(x0 + size - pad, y0 + pad),
                Vec2::new(x0 + pad, y0 + size - pad),
            ]
        })
        .collect()
}

fn label_vertices(verts: &[Vec3], rule: &LabelRule) -> Vec<Label> {
    let centroid: Vec3 = verts.iter().sum::<Vec3>() / verts.len().max(1) as f64;
    verts
        .iter()
        .map(|v| {
            let d = v - centroid;
            let angle = if d.norm() < 1e-12 {
                90.0
            } else {
                (d.z / d.norm()).clamp(-1.0, 1.0).acos().to_degrees()
            };
            if angle < rule.face_deg {
                Label::Face
            } else if angle < rule.boundary_deg {
                Label::Boundary
            } else {
                Label::Hair
            }
        })
        .collect()
}

/// Pair each vertex with the nearest vertex to its x-negated position.
/// Pairs farther than [`MIRROR_TOLERANCE`] or not mutual map to self.
pub fn mirror_pairs(verts: &[Vec3]) -> (Vec<usize>, Vec<usize>) {
    let nearest: Vec<(usize, f64)> = verts
        .iter()
        .map(|v| {
            let target = Vec3::new(-v.x, v.y, v.z);
            verts
                .iter()
                .enumerate()
                .map(|(j, w)| (j, (w - target).norm()))
                .fold((usize::MAX, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        })
        .collect();
    let mut mirror: Vec<usize> = (0..verts.len()).collect();
    let mut unpaired = Vec::new();
    for (i, &(j, dist)) in nearest.iter().enumerate() {
        if dist <= MIRROR_TOLERANCE && nearest[j].0 == i {
            mirror[i] = j;
        } else {
            unpaired.push(i);
        }
    }
    (mirror, unpaired)
}

/// Exact ray-cast normals of the ellipsoid `x²/a² + y²/b² + z²/c² = 1`.
/// Missed pixels are `(0, 0, 0)` with the mask cleared.
pub fn analytic_normal_maps(radii: (f64, f64, f64), cameras: &[Camera]) -> Vec<NormalMap> {
    cameras.iter().map(|cam| analytic_normal_map(radii, cam)).collect()
}

/// First intersection of a ray with the ellipsoid, as (distance, point).
pub fn ray_ellipsoid(origin: Vec3, dir: Vec3, radii: (f64, f64, f64)) -> Option<(f64, Vec3)> {
    let s = Vec3::new(1.0 / radii.0, 1.0 / radii.1, 1.0 / radii.2);
    let o = origin.component_mul(&s);
    let d = dir.component_mul(&s);
    let qa = d.dot(&d);
    let qb = 2.0 * o.dot(&d);
    let qc = o.dot(&o) - 1.0;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = (-qb - sq) / (2.0 * qa);
    let t1 = (-qb + sq) / (2.0 * qa);
    let t = if t0 > 0.0 { t0 } else if t1 > 0.0 { t1 } else { return None };
    Some((t, origin + dir * t))
}

pub fn ellipsoid_normal(p: &Vec3, radii: (f64, f64, f64)) -> Vec3 {
    Vec3::new(
        p.x / (radii.0 * radii.0),
        p.y / (radii.1 * radii.1),
        p.z / (radii.2 * radii.2),
    )
    .normalize()
}

fn analytic_normal_map(radii: (f64, f64, f64), cam: &Camera) -> NormalMap {
    let eye = cam.center();
    let mut normals = vec![Vec3::zeros(); cam.width * cam.height];
    let mut mask = vec![false; cam.width * cam.height];
    for y in 0..cam.height {
        for x in 0..cam.width {
            let dir = cam.ray_direction(Vec2::new(x as f64 + 0.5, y as f64 + 0.5));
            if let Some((_, p)) = ray_ellipsoid(eye, dir, radii) {
                normals[y * cam.width + x] = ellipsoid_normal(&p, radii);
                mask[y * cam.width + x] = true;
            }
        }
    }
    NormalMap {
        width: cam.width,
        height: cam.height,
        normals,
        mask,
    }
}

/// Euclidean distance from `p` to the ellipsoid surface, found by
/// Newton iteration on the closest-point Lagrange condition.
pub fn distance_to_ellipsoid(p: &Vec3, radii: (f64, f64, f64)) -> f64 {
    let e = [radii.0, radii.1, radii.2];
    let q = [p.x.abs(), p.y.abs(), p.z.abs()];
    let inside = (q[0] / e[0]).powi(2) + (q[1] / e[1]).powi(2) + (q[2] / e[2]).powi(2) < 1.0;
    // closest point x_i = e_i² q_i / (e_i² + t); solve Σ (x_i/e_i)² = 1 for t
    let f = |t: f64| -> f64 {
        (0..3)
            .map(|i| (e[i] * q[i] / (e[i] * e[i] + t)).powi(2))
            .sum::<f64>()
            - 1.0
    };
    let emin2 = e.iter().map(|x| x * x).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = if inside {
        (-emin2, 0.0)
    } else {
        let qmax = q.iter().cloned().fold(0.0, f64::max);
        let emax = e.iter().cloned().fold(0.0, f64::max);
        (0.0, 2.0 * emax * qmax + emax * emax)
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // f is decreasing in t on the valid branch
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let x = Vec3::new(
        e[0] * e[0] * q[0] / (e[0] * e[0] + t),
        e[1] * e[1] * q[1] / (e[1] * e[1] + t),
        e[2] * e[2] * q[2] / (e[2] * e[2] + t),
    );
    (x - Vec3::new(q[0], q[1], q[2])).norm()
}

/// Per-pixel features for a rasterized view under a feature rule.
pub fn view_features(gbuffer: &GBuffer, rule: &FeatureRule) -> FeatureMap {
    let mut data = vec![0.0; gbuffer.len() * 3];
    for p in gbuffer.covered() {
        let f: [f64; 3] = match *rule {
            FeatureRule::Constant(c) => [c; 3],
            FeatureRule::NormalsAsRgb => {
                let n = gbuffer.normal[p];
                [(n.x + 1.0) * 0.5, (n.y + 1.0) * 0.5, (n.z + 1.0) * 0.5]
            }
            FeatureRule::Checkerboard { cells } => checker_color(gbuffer.uv[p], cells),
        };
        data[p * 3..p * 3 + 3].copy_from_slice(&f);
    }
    FeatureMap::new(gbuffer.width, gbuffer.height, 3, data).expect("finite features")
}

pub fn checker_color(uv: Vec2, cells: usize) -> [f64; 3] {
    let cu = ((uv.x * cells as f64).floor() as i64).min(cells as i64 - 1);
    let cv = ((uv.y * cells as f64).floor() as i64).min(cells as i64 - 1);
    if (cu + cv) % 2 == 0 {
        [0.9, 0.75, 0.2]
    } else {
        [0.1, 0.3, 0.85]
    }
}

/// Landmark correspondences for recovering `target` from a unit-sphere
/// template. Every face-labeled vertex is a landmark, plus up to `extra`
/// vertices drawn from the other regions. Each one targets the projection of
/// its axis-stretched position in every view that sees that position front-on
/// and inside the image.
pub fn synth_landmarks(
    template: &TriMesh,
    radii: (f64, f64, f64),
    cameras: &[Camera],
    extra: usize,
    seed: u64,
) -> Vec<(usize, usize, Vec2)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pool, mut rest): (Vec<usize>, Vec<usize>) =
        (0..template.num_vertices()).partition(|&i| template.labels()[i] == Label::Face);
    rest.shuffle(&mut rng);
    rest.truncate(extra);
    pool.extend(rest);
    pool.sort_unstable();
    let mut out = Vec::new();
    for &vi in &pool {
        let v = template.vertices()[vi];
        let target = Vec3::new(v.x * radii.0, v.y * radii.1, v.z * radii.2);
        let n = ellipsoid_normal(&target, radii);
        for (ci, cam) in cameras.iter().enumerate() {
            let pr = cam.project(&target);
            let facing = n.dot(&(cam.center() - target)) > 0.3 * (cam.center() - target).norm();
            let inside = pr.pixel.x >= 0.0
                && pr.pixel.y >= 0.0
                && pr.pixel.x < cam.width as f64
                && pr.pixel.y < cam.height as f64;
            if pr.in_front() && facing && inside {
                out.push((vi, ci, pr.pixel));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{face_normals, six_view_rig, vertex_laplacian};
    use crate::raster::rasterize;

    #[test]
    fn icosphere_counts() {
        for (s, v, f) in [(0, 12, 20), (1, 42, 80), (2, 162, 320), (3, 642, 1280)] {
            let (verts, faces) = icosphere(s);
            assert_eq!((verts.len(), faces.len()), (v, f));
        }
    }

    #[test]
    fn icosphere_winding_is_outward() {
        let (verts, faces) = icosphere(2);
        for f in &faces {
            let [a, b, c] = f.map(|i| verts[i]);
            let n = (b - a).cross(&(c - a));
            assert!(n.dot(&(a + b + c)) > 0.0);
        }
    }

    #[test]
    fn unit_ellipsoid_is_unit_sphere() {
        let scene = make_scene(&SceneSpec::new(Shape::Ellipsoid { a: 1.0, b: 1.0, c: 1.0, subdiv: 2 })).unwrap();
        for v in scene.mesh.vertices() {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_interior_laplacian_zero() {
        let scene = make_scene(&SceneSpec::new(Shape::Grid { n: 4 })).unwrap();
        let lap = vertex_laplacian(&scene.mesh, scene.mesh.vertices()).unwrap();
        for j in 1..4 {
            for i in 1..4 {
                assert!(lap.delta[j * 5 + i].norm() < 1e-15);
            }
        }
    }

    #[test]
    fn mirror_is_involution_and_complete_on_sphere() {
        let scene = make_scene(&SceneSpec::new(Shape::Icosphere { subdiv: 3 })).unwrap();
        let m = scene.mesh.mirror();
        assert!(scene.unpaired.is_empty());
        for (i, &j) in m.iter().enumerate() {
            assert_eq!(m[j], i);
            let (a, b) = (scene.mesh.vertices()[i], scene.mesh.vertices()[j]);
            assert!((a + Vec3::new(-2.0 * a.x, 0.0, 0.0) - b).norm() < 1e-6);
        }
    }

    #[test]
    fn axis_stretch_basis_reaches_ellipsoid() {
        let scene = make_scene(&SceneSpec::new(Shape::Icosphere { subdiv: 1 })).unwrap();
        let v = crate::geometry::deformed_vertices(
            &scene.model,
            &[0.0, -0.2, 0.2],
            &crate::geometry::VertexOffsets::zeros(scene.mesh.num_vertices()),
        )
        .unwrap();
        for (p, q) in v.iter().zip(scene.mesh.vertices()) {
            assert!((p - Vec3::new(q.x, 0.8 * q.y, 1.2 * q.z)).norm() < 1e-15);
        }
    }

    #[test]
    fn seam_faces_tagged_and_uvs_in_range() {
        let scene = make_scene(&SceneSpec::new(Shape::Icosphere { subdiv: 2 })).unwrap();
        assert!(scene.seam_faces.iter().any(|&s| s));
        assert!(scene.seam_faces.iter().any(|&s| !s));
    }

    #[test]
    fn labels_cover_all_regions() {
        let scene = make_scene(&SceneSpec::new(Shape::Icosphere { subdiv: 3 })).unwrap();
        for l in [Label::Face, Label::Boundary, Label::Hair] {
            assert!(scene.mesh.labels().contains(&l));
        }
        // the front pole is face, the back pole is hair
        let front = scene.mesh.vertices().iter().position(|v| v.z > 0.999).unwrap();
        let back = scene.mesh.vertices().iter().position(|v| v.z < -0.999).unwrap();
        assert_eq!(scene.mesh.labels()[front], Label::Face);
        assert_eq!(scene.mesh.labels()[back], Label::Hair);
    }

    #[test]
    fn sphere_center_ray_normal_faces_camera() {
        let cams = six_view_rig(4.0, Vec3::zeros()).unwrap();
        let maps = analytic_normal_maps((1.0, 1.0, 1.0), &cams[..1]);
        let cam = &cams[0];
        let p = cam.ray_direction(Vec2::new(cam.cx, cam.cy));
        let (_, hit) = ray_ellipsoid(cam.center(), p, (1.0, 1.0, 1.0)).unwrap();
        assert!((ellipsoid_normal(&hit, (1.0, 1.0, 1.0)) + p.normalize()).norm() < 1e-12);
        for (n, &m) in maps[0].normals.iter().zip(&maps[0].mask) {
            if m {
                assert!((n.norm() - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(*n, Vec3::zeros());
            }
        }
    }

    fn median_angle(subdiv: u32) -> f64 {
        let radii = (1.0, 0.8, 1.2);
        let scene = make_scene(&SceneSpec::new(Shape::Ellipsoid {
            a: radii.0,
            b: radii.1,
            c: radii.2,
            subdiv,
        }))
        .unwrap();
        let opts = crate::geometry::RigOptions {
            width: 96,
            height: 96,
            ..Default::default()
        };
        let cams = crate::geometry::six_view_rig_with(4.0, Vec3::zeros(), &opts).unwrap();
        let targets = analytic_normal_maps(radii, &cams);
        let mut angles = Vec::new();
        for (cam, target) in cams.iter().zip(&targets) {
            let gb = rasterize(&scene.mesh, scene.mesh.vertices(), cam).unwrap();
            for p in gb.covered() {
                if target.mask[p] {
                    angles.push(gb.normal[p].dot(&target.normals[p]).clamp(-1.0, 1.0).acos());
                }
            }
        }
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        angles[angles.len() / 2]
    }

    #[test]
    fn analytic_and_raster_normals_converge() {
        let errs: Vec<f64> = [2, 3, 4].iter().map(|&s| median_angle(s)).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        let dense = median_angle(5);
        assert!(dense < 0.02, "{dense}");
    }

    #[test]
    fn distance_to_ellipsoid_matches_sphere_case() {
        let p = Vec3::new(0.3, -2.0, 1.1);
        assert!((distance_to_ellipsoid(&p, (1.0, 1.0, 1.0)) - (p.norm() - 1.0)).abs() < 1e-12);
        let q = p * 0.2;
        assert!((distance_to_ellipsoid(&q, (1.0, 1.0, 1.0)) - (1.0 - q.norm())).abs() < 1e-12);
        // a point on the surface of a proper ellipsoid
        let s = Vec3::new(0.6, 0.8 * 0.8, 0.0);
        assert!(distance_to_ellipsoid(&s, (1.0, 0.8, 1.2)) < 1e-12);
        assert!((distance_to_ellipsoid(&Vec3::new(0.0, 0.0, 2.0), (1.0, 0.8, 1.2)) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SceneSpec::new(Shape::Icosphere { subdiv: 2 });
        let a = make_scene(&spec).unwrap();
        let b = make_scene(&spec).unwrap();
        assert_eq!(a.mesh.vertices(), b.mesh.vertices());
        assert_eq!(a.mesh.uv_corners(), b.mesh.uv_corners());
        let cams = six_view_rig(4.0, Vec3::zeros()).unwrap();
        assert_eq!(
            synth_landmarks(&a.mesh, (1.0, 0.8, 1.2), &cams, 20, 7),
            synth_landmarks(&b.mesh, (1.0, 0.8, 1.2), &cams, 20, 7)
        );
    }

    #[test]
    fn sphere_faces_all_nondegenerate() {
        let scene = make_scene(&SceneSpec::new(Shape::Icosphere { subdiv: 3 })).unwrap();
        let fnrm = face_normals(&scene.mesh, scene.mesh.vertices(), false).unwrap();
        assert!(fnrm.degenerate.is_empty());
    }
}
