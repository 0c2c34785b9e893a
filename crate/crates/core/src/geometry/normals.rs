use super::{Mat3, Vec3};
use crate::error::{check_len, Result};
use crate::geometry::TriMesh;

/// Faces with area at or below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Unit normal of triangle `(a, b, c)` by the right-hand rule, or `None` when
/// the triangle is degenerate.
pub fn triangle_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<Vec3> {
    let cross = (b - a).cross(&(c - a));
    let len = cross.norm();
    if 0.5 * len <= DEGENERATE_AREA {
        return None;
    }
    Some(cross / len)
}

/// Unit normal together with `∂n/∂a`, `∂n/∂b`, `∂n/∂c` (3×3 each).
pub fn triangle_normal_jacobian(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<(Vec3, [Mat3; 3])> {
    let e1 = b - a;
    let e2 = c - a;
    let cross = e1.cross(&e2);
    let len = cross.norm();
    if 0.5 * len <= DEGENERATE_AREA {
        return None;
    }
    let n = cross / len;
    // d(normalize(x))/dx = (I - n nᵀ) / |x|
    let proj = (Mat3::identity() - n * n.transpose()) / len;
    let d_b = -skew(&e2);
    let d_c = skew(&e1);
    let d_a = -(d_b + d_c);
    Some((n, [proj * d_a, proj * d_b, proj * d_c]))
}

#[derive(Clone, Debug)]
pub struct FaceNormals {
    pub normals: Vec<Vec3>,
    /// Faces whose area fell at or below [`DEGENERATE_AREA`]; their normal is zero.
    pub degenerate: Vec<usize>,
    /// Per-face `[∂n/∂v0, ∂n/∂v1, ∂n/∂v2]`, present when requested.
    pub jacobians: Option<Vec<[Mat3; 3]>>,
}

pub fn face_normals(mesh: &TriMesh, positions: &[Vec3], with_jacobian: bool) -> Result<FaceNormals> {
    check_len("positions", mesh.num_vertices(), positions.len())?;
    let mut normals = Vec::with_capacity(mesh.num_faces());
    let mut degenerate = Vec::new();
    let mut jacobians = with_jacobian.then(|| Vec::with_capacity(mesh.num_faces()));
    for (fi, f) in mesh.faces().iter().enumerate() {
        let [a, b, c] = f.map(|i| positions[i]);
        match triangle_normal_jacobian(&a, &b, &c) {
            None => {
                degenerate.push(fi);
                normals.push(Vec3::zeros());
                if let Some(js) = jacobians.as_mut() {
                    js.push([Mat3::zeros(); 3]);
                }
            }
            Some((n, j)) => {
                normals.push(n);
                if let Some(js) = jacobians.as_mut() {
                    js.push(j);
                }
            }
        }
    }
    if !degenerate.is_empty() {
        log::warn!("{} degenerate faces", degenerate.len());
    }
    Ok(FaceNormals {
        normals,
        degenerate,
        jacobians,
    })
}
