use std::fmt;
use std::str::FromStr;

use super::{Vec2, Vec3};
use crate::error::{check_len, Error, Result};

/// Semantic region of a vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Face,
    Hair,
    Boundary,
    Other,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Face, Label::Hair, Label::Boundary, Label::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Face => "face",
            Label::Hair => "hair",
            Label::Boundary => "boundary",
            Label::Other => "other",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "face" => Ok(Label::Face),
            "hair" => Ok(Label::Hair),
            "boundary" => Ok(Label::Boundary),
            "other" => Ok(Label::Other),
            _ => Err(format!("unknown label `{s}`")),
        }
    }
}

/// Indexed triangle mesh with a per-corner UV atlas and per-vertex semantics.
///
/// Construction validates every invariant, so a `TriMesh` in hand is always
/// well formed. The 1-ring adjacency is computed once and cached.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    uv_corners: Vec<[Vec2; 3]>,
    labels: Vec<Label>,
    mirror: Vec<usize>,
    lap_weights: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl TriMesh {
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        uv_corners: Vec<[Vec2; 3]>,
        labels: Vec<Label>,
        mirror: Vec<usize>,
        lap_weights: Vec<f64>,
    ) -> Result<Self> {
        let n = vertices.len();
        check_len("uv_corners", faces.len(), uv_corners.len())?;
        check_len("labels", n, labels.len())?;
        check_len("mirror", n, mirror.len())?;
        check_len("lap_weights", n, lap_weights.len())?;
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references a vertex out of range (n = {n})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} repeats a vertex: {f:?}"
                )));
            }
        }
        for (fi, uvs) in uv_corners.iter().enumerate() {
            for uv in uvs {
                if !(0.0..=1.0).contains(&uv.x) || !(0.0..=1.0).contains(&uv.y) {
                    return Err(Error::InvalidMesh(format!(
                        "face {fi} has uv ({}, {}) outside [0,1]^2",
                        uv.x, uv.y
                    )));
                }
            }
        }
        for (i, &m) in mirror.iter().enumerate() {
            if m >= n || mirror[m] != i {
                return Err(Error::InvalidMesh(format!(
                    "mirror map is not an involution at vertex {i}"
                )));
            }
        }
        if let Some(i) = lap_weights.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMesh(format!(
                "lap weight of vertex {i} is negative or not finite"
            )));
        }
        let neighbors = build_neighbors(n, &faces);
        Ok(TriMesh {
            vertices,
            faces,
            uv_corners,
            labels,
            mirror,
            lap_weights,
            neighbors,
        })
    }

    /// Mesh with every vertex labeled `other`, identity mirror map and unit
    /// Laplacian weights.
    pub fn from_geometry(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        uv_corners: Vec<[Vec2; 3]>,
    ) -> Result<Self> {
        let n = vertices.len();
        Self::new(
            vertices,
            faces,
            uv_corners,
            vec![Label::Other; n],
            (0..n).collect(),
            vec![1.0; n],
        )
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn uv_corners(&self) -> &[[Vec2; 3]] {
        &self.uv_corners
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn mirror(&self) -> &[usize] {
        &self.mirror
    }

    pub fn lap_weights(&self) -> &[f64] {
        &self.lap_weights
    }

    /// Sorted, deduplicated 1-ring of each vertex under edge adjacency.
    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    /// Label shared by at least two corners of the face, if any.
    pub fn face_majority_label(&self, face: usize) -> Option<Label> {
        let [a, b, c] = self.faces[face].map(|i| self.labels[i]);
        if a == b || a == c {
            Some(a)
        } else if b == c {
            Some(b)
        } else {
            None
        }
    }

    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        check_len("vertices", self.vertices.len(), vertices.len())?;
        let mut out = self.clone();
        out.vertices = vertices;
        Ok(out)
    }

    pub fn with_semantics(
        mut self,
        labels: Vec<Label>,
        mirror: Vec<usize>,
        lap_weights: Vec<f64>,
    ) -> Result<Self> {
        let vertices = std::mem::take(&mut self.vertices);
        Self::new(
            vertices,
            self.faces,
            self.uv_corners,
            labels,
            mirror,
            lap_weights,
        )
    }

    pub fn with_lap_weights(&self, lap_weights: Vec<f64>) -> Result<Self> {
        self.clone()
            .with_semantics(self.labels.clone(), self.mirror.clone(), lap_weights)
    }
}

fn build_neighbors(n: usize, faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for ring in &mut adj {
        ring.sort_unstable();
        ring.dedup();
    }
    adj
}

/// Template mesh plus a linear displacement basis.
#[derive(Clone, Debug)]
pub struct BlendModel {
    template: TriMesh,
    basis: Vec<Vec<Vec3>>,
}

impl BlendModel {
    pub fn new(template: TriMesh, basis: Vec<Vec<Vec3>>) -> Result<Self> {
        for field in &basis {
            check_len("blendshape basis field", template.num_vertices(), field.len())?;
        }
        Ok(BlendModel { template, basis })
    }

    pub fn template(&self) -> &TriMesh {
        &self.template
    }

    pub fn basis(&self) -> &[Vec<Vec3>] {
        &self.basis
    }

    pub fn coeffs_dim(&self) -> usize {
        self.basis.len()
    }
}

/// Per-vertex free-form displacement added on top of the blendshape result.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexOffsets(pub Vec<Vec3>);

impl VertexOffsets {
    pub fn zeros(n: usize) -> Self {
        VertexOffsets(vec![Vec3::zeros(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean_magnitude(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().map(|d| d.norm()).sum::<f64>() / self.0.len() as f64
    }
}

/// `template + Σ_j coeffs_j · basis_j + offsets`, vertex by vertex.
pub fn deformed_vertices(
    model: &BlendModel,
    coeffs: &[f64],
    offsets: &VertexOffsets,
) -> Result<Vec<Vec3>> {
    check_len("blend coefficients", model.coeffs_dim(), coeffs.len())?;
    check_len("vertex offsets", model.template.num_vertices(), offsets.len())?;
    if let Some(i) = offsets.0.iter().position(|d| !d.iter().all(|x| x.is_finite())) {
        return Err(Error::InvalidInput(format!("offset {i} is not finite")));
    }
    let mut out: Vec<Vec3> = model.template.vertices().to_vec();
    for (c, field) in coeffs.iter().zip(&model.basis) {
        if *c == 0.0 {
            continue;
        }
        for (v, d) in out.iter_mut().zip(field) {
            *v += d * *c;
        }
    }
    for (v, d) in out.iter_mut().zip(&offsets.0) {
        *v += d;
    }
    Ok(out)
}

/// Uniform Laplacian coordinates and the vertices that had no neighbor.
#[derive(Clone, Debug)]
pub struct Laplacian {
    pub delta: Vec<Vec3>,
    pub isolated: Vec<usize>,
}

/// `δ_i = v_i − mean(1-ring of i)`; isolated vertices get `δ_i = 0`.
pub fn vertex_laplacian(mesh: &TriMesh, positions: &[Vec3]) -> Result<Laplacian> {
    check_len("positions", mesh.num_vertices(), positions.len())?;
    let mut delta = Vec::with_capacity(positions.len());
    let mut isolated = Vec::new();
    for (i, ring) in mesh.neighbors().iter().enumerate() {
        if ring.is_empty() {
            isolated.push(i);
            delta.push(Vec3::zeros());
            continue;
        }
        let sum: Vec3 = ring.iter().map(|&j| positions[j]).sum();
        delta.push(positions[i] - sum / ring.len() as f64);
    }
    if !isolated.is_empty() {
        log::warn!("{} isolated vertices have no Laplacian", isolated.len());
    }
    Ok(Laplacian { delta, isolated })
}

/// Laplacian weight per semantic region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionWeights {
    pub face: f64,
    pub hair: f64,
    pub boundary: f64,
    pub other: f64,
}

impl Default for RegionWeights {
    fn default() -> Self {
        RegionWeights {
            face: 0.01,
            hair: 1.0,
            boundary: 2.0,
            other: 0.1,
        }
    }
}

impl RegionWeights {
    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Face => self.face,
            Label::Hair => self.hair,
            Label::Boundary => self.boundary,
            Label::Other => self.other,
        }
    }

    pub fn set(&mut self, label: Label, w: f64) {
        match label {
            Label::Face => self.face = w,
            Label::Hair => self.hair = w,
            Label::Boundary => self.boundary = w,
            Label::Other => self.other = w,
        }
    }

    pub fn weights_for(&self, labels: &[Label]) -> Vec<f64> {
        labels.iter().map(|&l| self.get(l)).collect()
    }
}
