//! Deterministic software rasterizer producing per-pixel G-buffers.
//!
//! Pixel centers sit at `(x + 0.5, y + 0.5)`. Coverage uses edge functions with
//! a top-left tie rule, so two triangles sharing an edge never both claim a
//! pixel center lying exactly on it. The nearest face wins the depth test;
//! equal depths keep the lower face index. Barycentrics are perspective
//! corrected, which places the interpolated 3D point exactly on the pixel ray.
//! Faces with any vertex behind the near depth are dropped whole (no clipping).

use crate::error::{check_len, Result};
use crate::geometry::{
    face_normals, triangle_normal, triangle_normal_jacobian, Camera, TriMesh, Vec2, Vec3,
};

/// Per-pixel rasterization output, row-major with `index = y * width + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    pub face_id: Vec<Option<usize>>,
    pub bary: Vec<Vec3>,
    pub uv: Vec<Vec2>,
    pub normal: Vec<Vec3>,
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
}

impl GBuffer {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        GBuffer {
            width,
            height,
            face_id: vec![None; n],
            bary: vec![Vec3::zeros(); n],
            uv: vec![Vec2::zeros(); n],
            normal: vec![Vec3::zeros(); n],
            depth: vec![0.0; n],
            mask: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Indices of covered pixels in row-major order.
    pub fn covered(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn covered_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn pixel_center(&self, index: usize) -> Vec2 {
        Vec2::new(
            (index % self.width) as f64 + 0.5,
            (index / self.width) as f64 + 0.5,
        )
    }

    /// World-space surface point seen at a covered pixel.
    pub fn surface_point(&self, camera: &Camera, index: usize) -> Vec3 {
        camera.unproject(self.pixel_center(index), self.depth[index])
    }

    /// Mark a pixel covered by `face` with the given attributes.
    pub fn set(&mut self, index: usize, face: usize, bary: Vec3, uv: Vec2, normal: Vec3, depth: f64) {
        self.face_id[index] = Some(face);
        self.bary[index] = bary;
        self.uv[index] = uv;
        self.normal[index] = normal;
        self.depth[index] = depth;
        self.mask[index] = true;
    }
}

#[inline]
fn edge(a: &Vec2, b: &Vec2, p: &Vec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Top-left rule for an edge of a triangle with positive `edge()` area in
/// image coordinates (y down).
#[inline]
fn is_top_left(a: &Vec2, b: &Vec2) -> bool {
    let dy = b.y - a.y;
    let dx = b.x - a.x;
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Screen-space coverage test for one pixel center. Returns the affine
/// barycentrics in the triangle's own vertex order when covered.
pub fn coverage(screen: &[Vec2; 3], p: &Vec2) -> Option<Vec3> {
    let area = edge(&screen[0], &screen[1], &screen[2]);
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    // Work in a positively oriented order and map back at the end.
    let order: [usize; 3] = if area > 0.0 { [0, 1, 2] } else { [0, 2, 1] };
    let s = order.map(|k| screen[k]);
    let area = area.abs();
    let mut w = [0.0; 3];
    for k in 0..3 {
        let a = &s[(k + 1) % 3];
        let b = &s[(k + 2) % 3];
        let e = edge(a, b, p);
        if e < 0.0 || (e == 0.0 && !is_top_left(a, b)) {
            return None;
        }
        w[k] = e / area;
    }
    let mut out = Vec3::zeros();
    for k in 0..3 {
        out[order[k]] = w[k];
    }
    Some(out)
}

pub fn rasterize(mesh: &TriMesh, positions: &[Vec3], camera: &Camera) -> Result<GBuffer> {
    check_len("positions", mesh.num_vertices(), positions.len())?;
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let mut gb = GBuffer::empty(w, h);
    let normals = face_normals(mesh, positions, false)?.normals;
    let eye = camera.center();

    for (fi, face) in mesh.faces().iter().enumerate() {
        let n = normals[fi];
        if n == Vec3::zeros() {
            continue;
        }
        let p = face.map(|i| positions[i]);
        if n.dot(&(eye - p[0])) <= 0.0 {
            continue;
        }
        let proj = p.map(|q| camera.project(&q));
        if proj.iter().any(|q| !q.in_front()) {
            continue;
        }
        let screen = proj.map(|q| q.pixel);
        let inv_z = proj.map(|q| 1.0 / q.depth);

        let min_x = screen.iter().map(|s| s.x).fold(f64::INFINITY, f64::min);
        let max_x = screen.iter().map(|s| s.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = screen.iter().map(|s| s.y).fold(f64::INFINITY, f64::min);
        let max_y = screen.iter().map(|s| s.y).fold(f64::NEG_INFINITY, f64::max);
        if max_x < 0.0 || max_y < 0.0 || min_x > w as f64 || min_y > h as f64 {
            continue;
        }
        let x0 = ((min_x - 0.5).floor().max(0.0)) as usize;
        let y0 = ((min_y - 0.5).floor().max(0.0)) as usize;
        let x1 = ((max_x - 0.5).ceil().max(0.0) as usize).min(w - 1);
        let y1 = ((max_y - 0.5).ceil().max(0.0) as usize).min(h - 1);
        let uvs = &mesh.uv_corners()[fi];

        for y in y0..=y1 {
            for x in x0..=x1 {
                let center = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let Some(lambda) = coverage(&screen, &center) else {
                    continue;
                };
                let persp = Vec3::new(lambda[0] * inv_z[0], lambda[1] * inv_z[1], lambda[2] * inv_z[2]);
                let s = persp.sum();
                let depth = 1.0 / s;
                let idx = y * w + x;
                if gb.mask[idx] && gb.depth[idx] <= depth {
                    continue;
                }
                let bary = persp / s;
                let uv = uvs[0] * bary[0] + uvs[1] * bary[1] + uvs[2] * bary[2];
                let uv = Vec2::new(uv.x.clamp(0.0, 1.0), uv.y.clamp(0.0, 1.0));
                gb.set(idx, fi, bary, uv, n, depth);
            }
        }
    }
    Ok(gb)
}

/// Normal image with a validity mask, e.g. a supervision target.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Vec3>,
    pub mask: Vec<bool>,
}

impl NormalMap {
    /// Valid wherever the stored normal is not the zero background.
    pub fn from_normals(width: usize, height: usize, normals: Vec<Vec3>) -> Self {
        let mask = normals.iter().map(|n| n.norm() > 0.5).collect();
        NormalMap {
            width,
            height,
            normals,
            mask,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Normals re-evaluated from `positions` on the frozen face ids of a G-buffer.
#[derive(Clone, Debug)]
pub struct NormalRender {
    pub normals: Vec<Vec3>,
    /// Covered pixels whose frozen face is still non-degenerate.
    pub valid: Vec<bool>,
}

pub fn render_normal_map(gbuffer: &GBuffer, mesh: &TriMesh, positions: &[Vec3]) -> Result<NormalRender> {
    check_len("positions", mesh.num_vertices(), positions.len())?;
    let mut face_cache: Vec<Option<Option<Vec3>>> = vec![None; mesh.num_faces()];
    let mut normals = vec![Vec3::zeros(); gbuffer.len()];
    let mut valid = vec![false; gbuffer.len()];
    for idx in gbuffer.covered() {
        let fi = gbuffer.face_id[idx].expect("covered pixel without face");
        let n = *face_cache[fi].get_or_insert_with(|| {
            let [a, b, c] = mesh.faces()[fi].map(|i| positions[i]);
            triangle_normal(&a, &b, &c)
        });
        if let Some(n) = n {
            normals[idx] = n;
            valid[idx] = true;
        }
    }
    Ok(NormalRender { normals, valid })
}

/// Vector-Jacobian product of [`render_normal_map`]: given `∂L/∂n` per pixel,
/// returns `∂L/∂v` per vertex. Visibility stays frozen.
pub fn normal_map_vjp(
    gbuffer: &GBuffer,
    mesh: &TriMesh,
    positions: &[Vec3],
    grad_normals: &[Vec3],
) -> Result<Vec<Vec3>> {
    check_len("positions", mesh.num_vertices(), positions.len())?;
    check_len("normal gradient", gbuffer.len(), grad_normals.len())?;
    let mut per_face = vec![Vec3::zeros(); mesh.num_faces()];
    let mut touched = vec![false; mesh.num_faces()];
    for idx in gbuffer.covered() {
        let fi = gbuffer.face_id[idx].expect("covered pixel without face");
        per_face[fi] += grad_normals[idx];
        touched[fi] = true;
    }
    let mut grad = vec![Vec3::zeros(); positions.len()];
    for (fi, g) in per_face.iter().enumerate() {
        if !touched[fi] {
            continue;
        }
        let face = mesh.faces()[fi];
        let [a, b, c] = face.map(|i| positions[i]);
        if let Some((_, jac)) = triangle_normal_jacobian(&a, &b, &c) {
            for k in 0..3 {
                grad[face[k]] += jac[k].transpose() * g;
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;

    fn cam(w: usize, h: usize) -> Camera {
        Camera::new(w as f64, h as f64, w as f64 / 2.0, h as f64 / 2.0, Mat3::identity(), Vec3::zeros(), w, h).unwrap()
    }

    fn tri_mesh(points: Vec<Vec3>, faces: Vec<[usize; 3]>) -> TriMesh {
        let uv = vec![[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]; faces.len()];
        TriMesh::from_geometry(points, faces, uv).unwrap()
    }

    #[test]
    fn zero_faces_gives_empty_buffer() {
        let mesh = TriMesh::from_geometry(vec![Vec3::zeros()], vec![], vec![]).unwrap();
        let gb = rasterize(&mesh, mesh.vertices(), &cam(4, 4)).unwrap();
        assert_eq!(gb.covered_count(), 0);
        assert!(gb.face_id.iter().all(|f| f.is_none()));
    }

    #[test]
    fn behind_camera_is_empty() {
        let pts = vec![Vec3::new(-1.0, -1.0, -2.0), Vec3::new(-1.0, 1.0, -2.0), Vec3::new(1.0, -1.0, -2.0)];
        let mesh = tri_mesh(pts.clone(), vec![[0, 1, 2]]);
        assert_eq!(rasterize(&mesh, &pts, &cam(8, 8)).unwrap().covered_count(), 0);
        let mesh = tri_mesh(pts.clone(), vec![[0, 2, 1]]);
        assert_eq!(rasterize(&mesh, &pts, &cam(8, 8)).unwrap().covered_count(), 0);
    }

    #[test]
    fn back_faces_are_culled() {
        // Facing the camera means the normal points toward -z.
        let pts = vec![Vec3::new(-1.0, -1.0, 2.0), Vec3::new(-1.0, 1.0, 2.0), Vec3::new(1.0, -1.0, 2.0)];
        let front = tri_mesh(pts.clone(), vec![[0, 1, 2]]);
        let back = tri_mesh(pts.clone(), vec![[0, 2, 1]]);
        let c = cam(8, 8);
        assert!(rasterize(&front, &pts, &c).unwrap().covered_count() > 0);
        assert_eq!(rasterize(&back, &pts, &c).unwrap().covered_count(), 0);
    }

    #[test]
    fn vertex_at_pixel_center_gives_one_hot_bary() {
        let c = cam(8, 8);
        // pixel (2,2) center is (2.5, 2.5) -> camera ray ((2.5-4)/8, (2.5-4)/8, 1)
        let z = 2.0;
        let at = |px: f64, py: f64| Vec3::new((px - 4.0) / 8.0 * z, (py - 4.0) / 8.0 * z, z);
        // the vertex is the top-left corner of the projected triangle, so the
        // top-left rule keeps the pixel center sitting on it
        let pts = vec![at(2.5, 2.5), at(6.0, 2.5), at(2.5, 6.0)];
        let mesh = tri_mesh(pts.clone(), vec![[0, 2, 1]]);
        let gb = rasterize(&mesh, &pts, &c).unwrap();
        let idx = 2 * 8 + 2;
        assert!(gb.mask[idx]);
        assert!((gb.bary[idx] - Vec3::x()).norm() < 1e-9, "{:?}", gb.bary[idx]);
    }

    #[test]
    fn nearer_face_wins() {
        let c = cam(8, 8);
        let near = [Vec3::new(-2.0, -2.0, 1.0), Vec3::new(-2.0, 2.0, 1.0), Vec3::new(2.0, -2.0, 1.0)];
        let far = near.map(|p| p * 2.0);
        let pts: Vec<Vec3> = far.iter().chain(near.iter()).copied().collect();
        let mesh = tri_mesh(pts.clone(), vec![[0, 1, 2], [3, 4, 5]]);
        let gb = rasterize(&mesh, &pts, &c).unwrap();
        assert!(gb.covered_count() > 0);
        for idx in gb.covered() {
            assert_eq!(gb.face_id[idx], Some(1));
            assert!((gb.depth[idx] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_edge_pixels_claimed_once() {
        // Two triangles splitting a square along a diagonal that passes through
        // pixel centers exactly.
        let c = Camera::new(1.0, 1.0, 0.0, 0.0, Mat3::identity(), Vec3::zeros(), 8, 8).unwrap();
        let z = 1.0;
        let pts = vec![
            Vec3::new(0.5, 0.5, z),
            Vec3::new(6.5, 0.5, z),
            Vec3::new(6.5, 6.5, z),
            Vec3::new(0.5, 6.5, z),
        ];
        // both wound so that the normal faces -z
        let mesh = tri_mesh(pts.clone(), vec![[0, 2, 1], [0, 3, 2]]);
        let gb = rasterize(&mesh, &pts, &c).unwrap();
        let a = rasterize(&tri_mesh(pts.clone(), vec![[0, 2, 1]]), &pts, &c).unwrap();
        let b = rasterize(&tri_mesh(pts.clone(), vec![[0, 3, 2]]), &pts, &c).unwrap();
        let overlap = a.mask.iter().zip(&b.mask).filter(|(x, y)| **x && **y).count();
        assert_eq!(overlap, 0);
        assert_eq!(gb.covered_count(), a.covered_count() + b.covered_count());
    }

    #[test]
    fn flat_triangle_normal_map() {
        let pts = vec![Vec3::new(-1.0, -1.0, 2.0), Vec3::new(-1.0, 1.0, 2.0), Vec3::new(1.0, -1.0, 2.0)];
        let mesh = tri_mesh(pts.clone(), vec![[0, 1, 2]]);
        let gb = rasterize(&mesh, &pts, &cam(8, 8)).unwrap();
        let nr = render_normal_map(&gb, &mesh, &pts).unwrap();
        for idx in gb.covered() {
            assert!(nr.valid[idx]);
            assert!((nr.normals[idx] - (-Vec3::z())).norm() < 1e-12);
        }
    }
}
