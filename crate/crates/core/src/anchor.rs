//! Splat primitives anchored to a mesh, either to a vertex or to a point on a
//! face given by barycentric coordinates, plus a small depth-sorted
//! compositor to render them.

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::geometry::{deformed_vertices, BlendModel, Camera, TriMesh, Vec2, Vec3, VertexOffsets, NEAR_DEPTH};

/// Barycentric slack accepted when testing UV containment.
const UV_EDGE_TOL: f64 = 1e-12;

/// Bucket grid over UV space for point-in-triangle queries.
#[derive(Clone, Debug)]
pub struct UvIndex {
    cells: usize,
    buckets: Vec<Vec<usize>>,
    triangles: Vec<[Vec2; 3]>,
}

fn cell_of(x: f64, cells: usize) -> usize {
    ((x * cells as f64).floor().max(0.0) as usize).min(cells - 1)
}

/// Barycentric coordinates of `p` in the 2D triangle, or `None` when the
/// triangle has no area.
fn bary2(tri: &[Vec2; 3], p: Vec2) -> Option<Vec3> {
    let [a, b, c] = *tri;
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if det.abs() < 1e-300 {
        return None;
    }
    let l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
    let l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
    Some(Vec3::new(1.0 - l1 - l2, l1, l2))
}

impl UvIndex {
    pub fn new(mesh: &TriMesh) -> Self {
        let triangles = mesh.uv_corners().to_vec();
        let cells = ((triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 1024);
        let mut buckets = vec![Vec::new(); cells * cells];
        for (fi, tri) in triangles.iter().enumerate() {
            let (mut lo, mut hi) = (tri[0], tri[0]);
            for p in &tri[1..] {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            for cy in cell_of(lo.y, cells)..=cell_of(hi.y, cells) {
                for cx in cell_of(lo.x, cells)..=cell_of(hi.x, cells) {
                    buckets[cy * cells + cx].push(fi);
                }
            }
        }
        UvIndex {
            cells,
            buckets,
            triangles,
        }
    }

    /// Lowest-index face whose UV triangle contains `uv`, with the
    /// barycentric coordinates of `uv` in it (clamped and renormalized).
    pub fn locate(&self, uv: Vec2) -> Option<(usize, Vec3)> {
        if !(0.0..=1.0).contains(&uv.x) || !(0.0..=1.0).contains(&uv.y) {
            return None;
        }
        let bucket = &self.buckets[cell_of(uv.y, self.cells) * self.cells + cell_of(uv.x, self.cells)];
        for &fi in bucket {
            let Some(b) = bary2(&self.triangles[fi], uv) else {
                continue;
            };
            if b.iter().all(|&x| x >= -UV_EDGE_TOL) {
                let b = b.map(|x| x.max(0.0));
                return Some((fi, b / b.sum()));
            }
        }
        None
    }
}

/// Convenience wrapper building a throwaway index.
pub fn uv_to_surface(mesh: &TriMesh, uv: Vec2) -> Option<(usize, Vec3)> {
    UvIndex::new(mesh).locate(uv)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Anchor {
    Vertex(usize),
    Surface { face: usize, bary: Vec3 },
}

/// Anchored splats with their attributes and resolved world positions.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSet {
    pub anchors: Vec<Anchor>,
    /// Displacement in the anchor's local (tangent, bitangent, normal) frame.
    pub offsets: Vec<Vec3>,
    pub scale: Vec<f64>,
    pub opacity: Vec<f64>,
    pub color: Vec<[f64; 3]>,
    /// World-space centers for the mesh pose they were last resolved against.
    pub positions: Vec<Vec3>,
}

impl GaussianSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn validate(&self, mesh: &TriMesh) -> Result<()> {
        let n = self.anchors.len();
        check_len("splat offsets", n, self.offsets.len())?;
        check_len("splat scales", n, self.scale.len())?;
        check_len("splat opacities", n, self.opacity.len())?;
        check_len("splat colors", n, self.color.len())?;
        check_len("splat positions", n, self.positions.len())?;
        for (i, a) in self.anchors.iter().enumerate() {
            match *a {
                Anchor::Vertex(v) if v >= mesh.num_vertices() => {
                    return Err(Error::InvalidInput(format!("splat {i} anchors to missing vertex {v}")))
                }
                Anchor::Surface { face, bary } => {
                    if face >= mesh.num_faces() {
                        return Err(Error::InvalidInput(format!("splat {i} anchors to missing face {face}")));
                    }
                    if bary.iter().any(|&b| b < 0.0) || (bary.sum() - 1.0).abs() > 1e-6 {
                        return Err(Error::InvalidInput(format!("splat {i} has invalid barycentric {bary:?}")));
                    }
                }
                _ => {}
            }
            if !(self.scale[i] > 0.0) || !self.scale[i].is_finite() {
                return Err(Error::InvalidInput(format!("splat {i} scale must be > 0")));
            }
            if !(0.0..=1.0).contains(&self.opacity[i]) {
                return Err(Error::InvalidInput(format!("splat {i} opacity outside [0, 1]")));
            }
            if self.color[i].iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::InvalidInput(format!("splat {i} color outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Orthonormal (tangent, bitangent, normal) frame built from a normal and a
/// reference direction. Falls back to a fixed axis when they are parallel.
fn frame(normal: Vec3, reference: Vec3) -> [Vec3; 3] {
    let n = if normal.norm() > 0.0 { normal.normalize() } else { Vec3::z() };
    let mut t = reference - n * n.dot(&reference);
    if t.norm() < 1e-12 {
        let axis = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        t = axis - n * n.dot(&axis);
    }
    let t = t.normalize();
    [t, n.cross(&t), n]
}

fn face_frame(mesh: &TriMesh, positions: &[Vec3], face: usize) -> [Vec3; 3] {
    let [a, b, c] = mesh.faces()[face].map(|i| positions[i]);
    frame((b - a).cross(&(c - a)), b - a)
}

fn vertex_frame(mesh: &TriMesh, positions: &[Vec3], incident: &[Vec<usize>], v: usize) -> [Vec3; 3] {
    let normal: Vec3 = incident[v]
        .iter()
        .map(|&f| {
            let [a, b, c] = mesh.faces()[f].map(|i| positions[i]);
            (b - a).cross(&(c - a))
        })
        .sum();
    let reference = mesh.neighbors()[v]
        .first()
        .map(|&j| positions[j] - positions[v])
        .unwrap_or_else(Vec3::x);
    frame(normal, reference)
}

fn incident_faces(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut inc = vec![Vec::new(); mesh.num_vertices()];
    for (fi, f) in mesh.faces().iter().enumerate() {
        for &v in f {
            inc[v].push(fi);
        }
    }
    inc
}

/// World position of every splat for the given vertex positions.
pub fn resolve_positions(set: &GaussianSet, mesh: &TriMesh, positions: &[Vec3]) -> Result<Vec<Vec3>> {
    check_len("positions", mesh.num_vertices(), positions.len())?;
    let incident = incident_faces(mesh);
    Ok(set
        .anchors
        .iter()
        .zip(&set.offsets)
        .map(|(a, off)| {
            let (base, fr) = match *a {
                Anchor::Vertex(v) => (positions[v], vertex_frame(mesh, positions, &incident, v)),
                Anchor::Surface { face, bary } => {
                    let [p0, p1, p2] = mesh.faces()[face].map(|i| positions[i]);
                    (p0 * bary.x + p1 * bary.y + p2 * bary.z, face_frame(mesh, positions, face))
                }
            };
            if *off == Vec3::zeros() {
                base
            } else {
                base + fr[0] * off.x + fr[1] * off.y + fr[2] * off.z
            }
        })
        .collect())
}

/// Texel attributes for the UV branch: `res × res × 5` as
/// (r, g, b, opacity, scale).
#[derive(Clone, Debug, PartialEq)]
pub struct UvAttributeMap {
    pub res: usize,
    pub data: Vec<f64>,
}

pub const UV_ATTR_CHANNELS: usize = 5;

impl UvAttributeMap {
    pub fn new(res: usize, data: Vec<f64>) -> Result<Self> {
        check_len("uv attribute map", res * res * UV_ATTR_CHANNELS, data.len())?;
        for (t, px) in data.chunks(UV_ATTR_CHANNELS).enumerate() {
            if px.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("uv attribute texel {t} is not finite")));
            }
            if !(0.0..=1.0).contains(&px[3]) {
                return Err(Error::InvalidInput(format!(
                    "uv attribute texel {t} opacity {} outside [0, 1]",
                    px[3]
                )));
            }
        }
        Ok(UvAttributeMap { res, data })
    }

    pub fn texel(&self, t: usize) -> &[f64] {
        &self.data[t * UV_ATTR_CHANNELS..(t + 1) * UV_ATTR_CHANNELS]
    }
}

/// One splat per vertex plus one per covered texel with positive opacity.
///
/// Vertex splats are opaque with radius half the mean incident edge length.
/// Texel splats sit at the surface point under the texel center and take
/// color, opacity and scale from the attribute map.
pub fn build_gaussians(
    mesh: &TriMesh,
    positions: &[Vec3],
    attributes: &UvAttributeMap,
    vertex_colors: &[[f64; 3]],
) -> Result<GaussianSet> {
    check_len("positions", mesh.num_vertices(), positions.len())?;
    check_len("vertex colors", mesh.num_vertices(), vertex_colors.len())?;
    let mut set = GaussianSet {
        anchors: Vec::new(),
        offsets: Vec::new(),
        scale: Vec::new(),
        opacity: Vec::new(),
        color: Vec::new(),
        positions: Vec::new(),
    };
    for (v, ring) in mesh.neighbors().iter().enumerate() {
        let mean_edge = if ring.is_empty() {
            1e-3
        } else {
            ring.iter().map(|&j| (positions[j] - positions[v]).norm()).sum::<f64>() / ring.len() as f64
        };
        set.anchors.push(Anchor::Vertex(v));
        set.scale.push((0.5 * mean_edge).max(1e-9));
        set.opacity.push(1.0);
        set.color.push(vertex_colors[v].map(|c| c.clamp(0.0, 1.0)));
    }
    let index = UvIndex::new(mesh);
    let r = attributes.res;
    for t in 0..r * r {
        let px = attributes.texel(t);
        if px[3] <= 0.0 {
            continue;
        }
        let uv = Vec2::new(((t % r) as f64 + 0.5) / r as f64, ((t / r) as f64 + 0.5) / r as f64);
        let Some((face, bary)) = index.locate(uv) else {
            continue;
        };
        if !(px[4] > 0.0) {
            return Err(Error::InvalidInput(format!("uv attribute texel {t} has scale {} <= 0", px[4])));
        }
        set.anchors.push(Anchor::Surface { face, bary });
        set.scale.push(px[4]);
        set.opacity.push(px[3]);
        set.color.push([px[0], px[1], px[2]].map(|c| c.clamp(0.0, 1.0)));
    }
    set.offsets = vec![Vec3::zeros(); set.anchors.len()];
    set.positions = resolve_positions(&set, mesh, positions)?;
    Ok(set)
}

/// Re-pose the splats on the mesh produced by `coeffs` and `offsets`.
pub fn drive(set: &GaussianSet, model: &BlendModel, coeffs: &[f64], offsets: &VertexOffsets) -> Result<GaussianSet> {
    let positions = deformed_vertices(model, coeffs, offsets)?;
    let mut out = set.clone();
    out.positions = resolve_positions(set, model.template(), &positions)?;
    Ok(out)
}

/// Premultiplied RGBA image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbaImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 4]>,
}

struct Projected {
    center: Vec2,
    radius: f64,
    depth: f64,
    index: usize,
}

/// Front-to-back alpha compositing of isotropic Gaussian discs.
pub fn render_gaussians(set: &GaussianSet, camera: &Camera) -> Result<RgbaImage> {
    camera.validate()?;
    let n = set.len();
    check_len("splat positions", n, set.positions.len())?;
    let mut splats: Vec<Projected> = (0..n)
        .filter_map(|i| {
            let pr = camera.project(&set.positions[i]);
            if pr.depth <= NEAR_DEPTH || set.opacity[i] <= 0.0 {
                return None;
            }
            let radius = set.scale[i] * camera.fx / pr.depth;
            (radius > 0.0 && radius.is_finite()).then_some(Projected {
                center: pr.pixel,
                radius,
                depth: pr.depth,
                index: i,
            })
        })
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<Vec<[f64; 4]>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let py = y as f64 + 0.5;
            let live: Vec<&Projected> = splats
                .iter()
                .filter(|s| (py - s.center.y).abs() <= s.radius)
                .collect();
            (0..w)
                .map(|x| {
                    let px = x as f64 + 0.5;
                    let mut rgb = [0.0; 3];
                    let mut transmit = 1.0;
                    for s in &live {
                        let d2 = (px - s.center.x).powi(2) + (py - s.center.y).powi(2);
                        if d2 > s.radius * s.radius {
                            continue;
                        }
                        let sigma = s.radius / 2.0;
                        let a = set.opacity[s.index] * (-d2 / (2.0 * sigma * sigma)).exp();
                        if a <= 0.0 {
                            continue;
                        }
                        let c = set.color[s.index];
                        for k in 0..3 {
                            rgb[k] += transmit * a * c[k];
                        }
                        transmit *= 1.0 - a;
                        if transmit == 0.0 {
                            break;
                        }
                    }
                    [rgb[0], rgb[1], rgb[2], 1.0 - transmit]
                })
                .collect()
        })
        .collect();
    Ok(RgbaImage {
        width: w,
        height: h,
        pixels: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;

    fn two_tri_mesh() -> TriMesh {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let uv = |x: f64, y: f64| Vec2::new(x, y);
        TriMesh::from_geometry(
            v,
            vec![[0, 1, 2], [0, 2, 3]],
            vec![
                [uv(0.0, 0.0), uv(0.5, 0.0), uv(0.5, 0.5)],
                [uv(0.0, 0.0), uv(0.5, 0.5), uv(0.0, 0.5)],
            ],
        )
        .unwrap()
    }

    fn front_cam(w: usize) -> Camera {
        Camera::new(w as f64, w as f64, w as f64 / 2.0, w as f64 / 2.0, Mat3::identity(), Vec3::zeros(), w, w).unwrap()
    }

    fn single(pos: Vec3, scale: f64, opacity: f64, color: [f64; 3]) -> GaussianSet {
        GaussianSet {
            anchors: vec![Anchor::Vertex(0)],
            offsets: vec![Vec3::zeros()],
            scale: vec![scale],
            opacity: vec![opacity],
            color: vec![color],
            positions: vec![pos],
        }
    }

    fn concat(a: GaussianSet, b: GaussianSet) -> GaussianSet {
        let mut out = a;
        out.anchors.extend(b.anchors);
        out.offsets.extend(b.offsets);
        out.scale.extend(b.scale);
        out.opacity.extend(b.opacity);
        out.color.extend(b.color);
        out.positions.extend(b.positions);
        out
    }

    #[test]
    fn corner_uv_gives_one_hot() {
        let mesh = two_tri_mesh();
        let (f, b) = uv_to_surface(&mesh, Vec2::new(0.5, 0.0)).unwrap();
        assert_eq!(f, 0);
        assert_eq!(b, Vec3::new(0.0, 1.0, 0.0));
        assert!(uv_to_surface(&mesh, Vec2::new(0.9, 0.9)).is_none());
    }

    #[test]
    fn zero_opacity_map_gives_vertex_splats_only() {
        let mesh = two_tri_mesh();
        let attrs = UvAttributeMap::new(4, vec![0.0; 4 * 4 * 5]).unwrap();
        let set = build_gaussians(&mesh, mesh.vertices(), &attrs, &[[0.5; 3]; 4]).unwrap();
        assert_eq!(set.len(), 4);
        assert!(set.anchors.iter().all(|a| matches!(a, Anchor::Vertex(_))));
    }

    #[test]
    fn splat_count_matches_covered_texels() {
        let mesh = two_tri_mesh();
        let mut data = vec![0.0; 4 * 4 * 5];
        for t in 0..16 {
            data[t * 5 + 3] = 0.5;
            data[t * 5 + 4] = 0.1;
        }
        let attrs = UvAttributeMap::new(4, data).unwrap();
        let set = build_gaussians(&mesh, mesh.vertices(), &attrs, &[[0.5; 3]; 4]).unwrap();
        // uv square [0, 0.5]² holds the texel centers of the top-left 2×2 block
        assert_eq!(set.len(), 4 + 4);
        set.validate(&mesh).unwrap();
    }

    #[test]
    fn single_opaque_splat_peak_is_its_color() {
        let set = single(Vec3::new(0.0, 0.0, 2.0), 0.2, 1.0, [0.2, 0.6, 0.9]);
        let img = render_gaussians(&set, &front_cam(33)).unwrap();
        let px = img.pixels[16 * 33 + 16];
        for k in 0..3 {
            assert!((px[k] - set.color[0][k]).abs() < 1e-12);
        }
        assert!((px[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn front_half_red_over_blue() {
        let red = single(Vec3::new(0.0, 0.0, 1.0), 0.1, 0.5, [1.0, 0.0, 0.0]);
        let blue = single(Vec3::new(0.0, 0.0, 2.0), 0.2, 1.0, [0.0, 0.0, 1.0]);
        for set in [concat(red.clone(), blue.clone()), concat(blue, red)] {
            let img = render_gaussians(&set, &front_cam(33)).unwrap();
            let px = img.pixels[16 * 33 + 16];
            assert!((px[0] - 0.5).abs() < 1e-12 && px[1] == 0.0 && (px[2] - 0.5).abs() < 1e-12);
            assert!((px[3] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_set_is_transparent() {
        let set = GaussianSet {
            anchors: vec![],
            offsets: vec![],
            scale: vec![],
            opacity: vec![],
            color: vec![],
            positions: vec![],
        };
        let img = render_gaussians(&set, &front_cam(8)).unwrap();
        assert!(img.pixels.iter().all(|p| *p == [0.0; 4]));
    }

    #[test]
    fn offsets_follow_local_frame() {
        let mesh = two_tri_mesh();
        let mut set = single(Vec3::zeros(), 0.1, 1.0, [0.5; 3]);
        set.anchors = vec![Anchor::Surface {
            face: 0,
            bary: Vec3::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        }];
        set.offsets = vec![Vec3::new(0.0, 0.0, 0.25)];
        let p = resolve_positions(&set, &mesh, mesh.vertices()).unwrap();
        assert!((p[0] - Vec3::new(2.0 / 3.0, 1.0 / 3.0, 0.25)).norm() < 1e-15);
    }
}
