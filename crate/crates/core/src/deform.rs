//! Normal-guided deformation of a blendshape mesh by per-vertex offsets.
//!
//! The objective combines a masked normal loss against per-view target normal
//! maps, a landmark reprojection loss with a bilateral symmetry term, and a
//! region-weighted uniform Laplacian. Visibility is frozen between periodic
//! re-rasterizations, so gradients flow through face normals only.

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::geometry::{
    deformed_vertices, vertex_laplacian, BlendModel, Camera, Label, RegionWeights, TriMesh, Vec2, Vec3,
    VertexOffsets,
};
use crate::raster::{normal_map_vjp, rasterize, render_normal_map, GBuffer, NormalMap};

#[derive(Clone, Debug, PartialEq)]
pub struct DeformConfig {
    pub lambda_nml: f64,
    pub lambda_lmk: f64,
    pub lambda_lap: f64,
    pub symmetry_weight: f64,
    pub lr: f64,
    pub iters: usize,
    pub reraster_every: usize,
    pub region_weights: RegionWeights,
    /// Target normals are given in each view's camera frame instead of world.
    pub camera_space_targets: bool,
}

impl Default for DeformConfig {
    fn default() -> Self {
        DeformConfig {
            lambda_nml: 1.0,
            lambda_lmk: 0.1,
            lambda_lap: 0.5,
            symmetry_weight: 0.1,
            lr: 1e-3,
            iters: 500,
            reraster_every: 25,
            region_weights: RegionWeights::default(),
            camera_space_targets: false,
        }
    }
}

impl DeformConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_nml", self.lambda_nml),
            ("lambda_lmk", self.lambda_lmk),
            ("lambda_lap", self.lambda_lap),
            ("symmetry_weight", self.symmetry_weight),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.iters < 1 {
            return Err(Error::InvalidConfig("iters must be at least 1".into()));
        }
        if self.reraster_every < 1 {
            return Err(Error::InvalidConfig("reraster_every must be at least 1".into()));
        }
        for l in Label::ALL {
            let w = self.region_weights.get(l);
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidConfig(format!("region weight for {l} must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub vertex: usize,
    pub camera: usize,
    pub target: Vec2,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LandmarkSet {
    pub entries: Vec<Landmark>,
}

impl LandmarkSet {
    pub fn new(entries: Vec<Landmark>) -> Self {
        LandmarkSet { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self, num_vertices: usize, cameras: &[Camera]) -> Result<()> {
        for (i, l) in self.entries.iter().enumerate() {
            if l.vertex >= num_vertices {
                return Err(Error::InvalidInput(format!(
                    "landmark {i} references vertex {} of {num_vertices}",
                    l.vertex
                )));
            }
            let cam = cameras.get(l.camera).ok_or_else(|| {
                Error::InvalidInput(format!("landmark {i} references camera {} of {}", l.camera, cameras.len()))
            })?;
            let t = l.target;
            if !(t.x >= 0.0 && t.y >= 0.0 && t.x < cam.width as f64 && t.y < cam.height as f64) {
                return Err(Error::InvalidInput(format!(
                    "landmark {i} target ({}, {}) is outside the {}x{} image",
                    t.x, t.y, cam.width, cam.height
                )));
            }
        }
        Ok(())
    }
}

/// A scalar loss and its gradient with respect to every vertex position.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<Vec3>,
}

impl LossGrad {
    fn zero(n: usize) -> Self {
        LossGrad {
            value: 0.0,
            grad: vec![Vec3::zeros(); n],
        }
    }
}

/// Covered pixels whose frozen face is not majority-labeled `face`.
pub fn semantic_pixel_mask(gbuffer: &GBuffer, mesh: &TriMesh) -> Vec<bool> {
    gbuffer
        .face_id
        .iter()
        .map(|f| match f {
            Some(fi) => mesh.face_majority_label(*fi) != Some(Label::Face),
            None => false,
        })
        .collect()
}

/// Mean squared distance between rendered and target normals over the pixels
/// that are covered, semantically unmasked, valid in the target and still
/// non-degenerate, pooled across views.
pub fn normal_loss(
    gbuffers: &[GBuffer],
    mesh: &TriMesh,
    positions: &[Vec3],
    targets: &[NormalMap],
    masks: &[Vec<bool>],
) -> Result<LossGrad> {
    check_len("target normal maps", gbuffers.len(), targets.len())?;
    check_len("semantic masks", gbuffers.len(), masks.len())?;
    check_len("positions", mesh.num_vertices(), positions.len())?;
    for (k, (gb, (t, m))) in gbuffers.iter().zip(targets.iter().zip(masks)).enumerate() {
        if t.width != gb.width || t.height != gb.height || m.len() != gb.len() {
            return Err(Error::InvalidInput(format!(
                "view {k}: target {}x{} / mask {} do not match the {}x{} G-buffer",
                t.width,
                t.height,
                m.len(),
                gb.width,
                gb.height
            )));
        }
    }
    // per view: (sum of squared errors, pixel count, ∂(sum)/∂n per pixel)
    let per_view: Vec<(f64, usize, Vec<Vec3>)> = gbuffers
        .par_iter()
        .zip(targets)
        .zip(masks)
        .map(|((gb, target), mask)| -> Result<_> {
            let render = render_normal_map(gb, mesh, positions)?;
            let mut sum = 0.0;
            let mut count = 0;
            let mut g = vec![Vec3::zeros(); gb.len()];
            for p in gb.covered() {
                if !(mask[p] && target.mask[p] && render.valid[p]) {
                    continue;
                }
                let r = render.normals[p] - target.normals[p];
                sum += r.norm_squared();
                count += 1;
                g[p] = 2.0 * r;
            }
            Ok((sum, count, g))
        })
        .collect::<Result<_>>()?;
    let count: usize = per_view.iter().map(|v| v.1).sum();
    if count == 0 {
        log::warn!("normal loss has no unmasked pixels");
        return Ok(LossGrad::zero(positions.len()));
    }
    let inv = 1.0 / count as f64;
    let value = per_view.iter().map(|v| v.0).sum::<f64>() * inv;
    let grads: Vec<Vec<Vec3>> = gbuffers
        .par_iter()
        .zip(&per_view)
        .map(|(gb, (_, _, g))| {
            let scaled: Vec<Vec3> = g.iter().map(|v| v * inv).collect();
            normal_map_vjp(gb, mesh, positions, &scaled)
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![Vec3::zeros(); positions.len()];
    for g in &grads {
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok(LossGrad { value, grad })
}

/// Landmark reprojection plus symmetry loss. The second element lists
/// landmark entries skipped because their vertex was behind the camera.
pub fn landmark_loss(
    positions: &[Vec3],
    landmarks: &LandmarkSet,
    cameras: &[Camera],
    mirror: &[usize],
    symmetry_weight: f64,
) -> Result<(LossGrad, Vec<usize>)> {
    check_len("mirror map", positions.len(), mirror.len())?;
    landmarks.validate(positions.len(), cameras)?;
    let mut out = LossGrad::zero(positions.len());
    let mut skipped = Vec::new();
    let mut used = 0;
    let mut proj_grad = vec![Vec3::zeros(); positions.len()];
    let mut proj_sum = 0.0;
    for (i, l) in landmarks.entries.iter().enumerate() {
        let cam = &cameras[l.camera];
        let v = positions[l.vertex];
        let pr = cam.project(&v);
        if !pr.in_front() {
            skipped.push(i);
            continue;
        }
        let r = pr.pixel - l.target;
        proj_sum += r.norm_squared();
        proj_grad[l.vertex] += cam.project_jacobian(&v).transpose() * (2.0 * r);
        used += 1;
    }
    if !skipped.is_empty() {
        log::warn!("{} landmarks are behind their camera and were skipped", skipped.len());
    }
    if used > 0 {
        let inv = 1.0 / used as f64;
        out.value += proj_sum * inv;
        for (g, p) in out.grad.iter_mut().zip(&proj_grad) {
            *g += p * inv;
        }
    }
    if symmetry_weight > 0.0 && !positions.is_empty() {
        let scale = symmetry_weight / positions.len() as f64;
        let mut sum = 0.0;
        for (i, &m) in mirror.iter().enumerate() {
            let pm = positions[m];
            let r = positions[i] - Vec3::new(-pm.x, pm.y, pm.z);
            sum += r.norm_squared();
            out.grad[i] += 2.0 * scale * r;
            out.grad[m] -= 2.0 * scale * Vec3::new(-r.x, r.y, r.z);
        }
        out.value += scale * sum;
    }
    Ok((out, skipped))
}

/// `Σ_i w_i ‖δ_i‖²` with `w_i` taken from the region weight of vertex `i`.
pub fn laplacian_loss(mesh: &TriMesh, positions: &[Vec3], region_weights: &RegionWeights) -> Result<LossGrad> {
    let weights = region_weights.weights_for(mesh.labels());
    laplacian_loss_weighted(mesh, positions, &weights)
}

pub fn laplacian_loss_weighted(mesh: &TriMesh, positions: &[Vec3], weights: &[f64]) -> Result<LossGrad> {
    check_len("Laplacian weights", mesh.num_vertices(), weights.len())?;
    let lap = vertex_laplacian(mesh, positions)?;
    let mut out = LossGrad::zero(positions.len());
    for (i, (d, ring)) in lap.delta.iter().zip(mesh.neighbors()).enumerate() {
        let w = weights[i];
        if w == 0.0 || ring.is_empty() {
            continue;
        }
        out.value += w * d.norm_squared();
        let g = 2.0 * w * d;
        out.grad[i] += g;
        let share = g / ring.len() as f64;
        for &j in ring {
            out.grad[j] -= share;
        }
    }
    Ok(out)
}

/// One view of supervision for [`optimize_offsets`].
#[derive(Clone, Debug)]
pub struct DeformView {
    pub camera: Camera,
    pub target: NormalMap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    pub total: f64,
    pub nml: f64,
    pub lmk: f64,
    pub lap: f64,
}

#[derive(Clone, Debug)]
pub struct DeformResult {
    pub offsets: VertexOffsets,
    /// Losses before each step, plus one final entry for the returned offsets.
    pub trace: Vec<LossRecord>,
    /// Losses at the start of each re-rasterization epoch.
    pub epoch_losses: Vec<f64>,
    /// Set when the run stopped early on a non-finite loss.
    pub aborted: Option<String>,
}

struct Objective<'a> {
    mesh: &'a TriMesh,
    views: Vec<(Camera, NormalMap)>,
    landmarks: &'a LandmarkSet,
    cameras: Vec<Camera>,
    lap_weights: Vec<f64>,
    /// Vertices the normal term may move.
    nml_gate: Vec<bool>,
    /// Vertices the Laplacian term may move.
    lap_gate: Vec<bool>,
    config: &'a DeformConfig,
}

struct Frozen {
    gbuffers: Vec<GBuffer>,
    masks: Vec<Vec<bool>>,
}

impl Objective<'_> {
    fn rasterize(&self, positions: &[Vec3]) -> Result<Frozen> {
        let gbuffers: Vec<GBuffer> = self
            .views
            .par_iter()
            .map(|(cam, _)| rasterize(self.mesh, positions, cam))
            .collect::<Result<_>>()?;
        let masks = gbuffers.iter().map(|gb| semantic_pixel_mask(gb, self.mesh)).collect();
        Ok(Frozen { gbuffers, masks })
    }

    fn evaluate(&self, frozen: &Frozen, positions: &[Vec3]) -> Result<(LossRecord, Vec<Vec3>)> {
        let cfg = self.config;
        let n = positions.len();
        let mut grad = vec![Vec3::zeros(); n];
        let mut rec = LossRecord {
            iter: 0,
            total: 0.0,
            nml: 0.0,
            lmk: 0.0,
            lap: 0.0,
        };
        if cfg.lambda_nml > 0.0 {
            let targets: Vec<NormalMap> = self.views.iter().map(|v| v.1.clone()).collect();
            let l = normal_loss(&frozen.gbuffers, self.mesh, positions, &targets, &frozen.masks)?;
            rec.nml = l.value;
            for (i, g) in l.grad.iter().enumerate() {
                if self.nml_gate[i] {
                    grad[i] += cfg.lambda_nml * g;
                }
            }
        }
        if cfg.lambda_lmk > 0.0 {
            let (l, _) = landmark_loss(positions, self.landmarks, &self.cameras, self.mesh.mirror(), cfg.symmetry_weight)?;
            rec.lmk = l.value;
            for (a, g) in grad.iter_mut().zip(&l.grad) {
                *a += cfg.lambda_lmk * g;
            }
        }
        if cfg.lambda_lap > 0.0 {
            let l = laplacian_loss_weighted(self.mesh, positions, &self.lap_weights)?;
            rec.lap = l.value;
            for (i, g) in l.grad.iter().enumerate() {
                if self.lap_gate[i] {
                    grad[i] += cfg.lambda_lap * g;
                }
            }
        }
        rec.total = cfg.lambda_nml * rec.nml + cfg.lambda_lmk * rec.lmk + cfg.lambda_lap * rec.lap;
        Ok((rec, grad))
    }
}

fn all_finite(rec: &LossRecord, grad: &[Vec3]) -> bool {
    rec.total.is_finite() && grad.iter().all(|g| g.iter().all(|x| x.is_finite()))
}

/// Adam on the per-vertex offsets with blend coefficients held fixed.
///
/// Face-labeled vertices take no update from the normal term, and vertices
/// whose region weight is zero take no update from the Laplacian term.
pub fn optimize_offsets(
    model: &BlendModel,
    coeffs: &[f64],
    views: &[DeformView],
    landmarks: &LandmarkSet,
    config: &DeformConfig,
) -> Result<DeformResult> {
    let weights = config.region_weights.weights_for(model.template().labels());
    optimize_offsets_weighted(model, coeffs, views, landmarks, config, &weights)
}

/// Like [`optimize_offsets`] but with explicit per-vertex Laplacian weights in
/// place of the config's region weights.
pub fn optimize_offsets_weighted(
    model: &BlendModel,
    coeffs: &[f64],
    views: &[DeformView],
    landmarks: &LandmarkSet,
    config: &DeformConfig,
    lap_weights: &[f64],
) -> Result<DeformResult> {
    config.validate()?;
    check_len("laplacian weights", model.template().num_vertices(), lap_weights.len())?;
    if let Some(w) = lap_weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidConfig(format!("laplacian weight {w} must be finite and >= 0")));
    }
    if views.is_empty() {
        return Err(Error::InvalidInput("deformation needs at least one view".into()));
    }
    let mesh = model.template();
    let n = mesh.num_vertices();
    let cameras: Vec<Camera> = views.iter().map(|v| v.camera.clone()).collect();
    landmarks.validate(n, &cameras)?;
    let targets = views
        .iter()
        .map(|v| {
            let mut t = v.target.clone();
            if config.camera_space_targets {
                let rt = v.camera.rotation.transpose();
                for (nrm, m) in t.normals.iter_mut().zip(&t.mask) {
                    if *m {
                        *nrm = rt * *nrm;
                    }
                }
            }
            t
        })
        .collect::<Vec<_>>();
    let lap_weights = lap_weights.to_vec();
    let objective = Objective {
        mesh,
        views: cameras.iter().cloned().zip(targets).collect(),
        landmarks,
        cameras: cameras.clone(),
        nml_gate: mesh.labels().iter().map(|&l| l != Label::Face).collect(),
        lap_gate: lap_weights.iter().map(|&w| w > 0.0).collect(),
        lap_weights,
        config,
    };

    let (b1, b2, adam_eps) = (0.9, 0.999, 1e-8);
    let mut offsets = VertexOffsets::zeros(n);
    let mut m = vec![Vec3::zeros(); n];
    let mut v = vec![Vec3::zeros(); n];
    let mut trace = Vec::with_capacity(config.iters + 1);
    let mut epoch_losses = Vec::new();
    let mut frozen: Option<Frozen> = None;
    let mut aborted = None;

    for it in 0..config.iters {
        let positions = deformed_vertices(model, coeffs, &offsets)?;
        if it % config.reraster_every == 0 || frozen.is_none() {
            frozen = Some(objective.rasterize(&positions)?);
        }
        let (mut rec, grad) = objective.evaluate(frozen.as_ref().unwrap(), &positions)?;
        rec.iter = it;
        if !all_finite(&rec, &grad) {
            let msg = format!("non-finite loss at iteration {it}; keeping the last finite offsets");
            log::error!("{msg}");
            aborted = Some(msg);
            break;
        }
        if it % config.reraster_every == 0 {
            epoch_losses.push(rec.total);
        }
        trace.push(rec);
        let t = (it + 1) as i32;
        let (c1, c2) = (1.0 - f64::powi(b1, t), 1.0 - f64::powi(b2, t));
        let mut next = offsets.clone();
        for i in 0..n {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i].component_mul(&grad[i]);
            for k in 0..3 {
                let step = config.lr * (m[i][k] / c1) / ((v[i][k] / c2).sqrt() + adam_eps);
                next.0[i][k] -= step;
            }
        }
        if next.0.iter().any(|d| !d.iter().all(|x| x.is_finite())) {
            let msg = format!("non-finite offsets after iteration {it}; keeping the last finite offsets");
            log::error!("{msg}");
            aborted = Some(msg);
            break;
        }
        offsets = next;
    }
    if aborted.is_none() {
        let positions = deformed_vertices(model, coeffs, &offsets)?;
        let frozen = objective.rasterize(&positions)?;
        let (mut rec, _) = objective.evaluate(&frozen, &positions)?;
        rec.iter = config.iters;
        if rec.total.is_finite() {
            epoch_losses.push(rec.total);
            trace.push(rec);
        }
    }
    Ok(DeformResult {
        offsets,
        trace,
        epoch_losses,
        aborted,
    })
}
