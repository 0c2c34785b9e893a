//! End-to-end stages behind the command line: synthesize a scene, deform the
//! template toward it, splat the views into UV space, anchor splats on the
//! result and render them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::anchor::{build_gaussians, render_gaussians, GaussianSet, RgbaImage, UvAttributeMap, UV_ATTR_CHANNELS};
use crate::deform::{optimize_offsets_weighted, DeformConfig, DeformResult, DeformView, Landmark, LandmarkSet, LossRecord};
use crate::error::{Error, Result};
use crate::geometry::{deformed_vertices, six_view_rig_with, BlendModel, Camera, RigOptions, TriMesh, Vec3, VertexOffsets};
use crate::io::text::{
    deform_config_from, fusion_config_from, labels_to_text, landmarks_to_text, pipeline_keys, save_camera,
    scene_spec_from, write_text, KeyValues,
};
use crate::io::views::{save_features, save_gbuffer, save_splats, ViewEntry, ViewManifest};
use crate::io::{image, pfm, save_obj, save_uvt, Tensor};
use crate::raster::{rasterize, GBuffer, NormalMap};
use crate::synth::{analytic_normal_maps, make_scene, synth_landmarks, view_features, SceneSpec, Shape};
use crate::uvsplat::{fuse_views, FeatureMap, FusionConfig, FusionOutput, ViewInput, SIX_VIEW_GAMMA};

/// Everything one `pipeline` run is configured by.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSpec {
    pub scene: SceneSpec,
    /// Square view size in pixels.
    pub image_res: usize,
    /// Rig radius.
    pub distance: f64,
    /// Non-face landmark vertices added to the face ones.
    pub landmarks_extra: usize,
    pub deform: DeformConfig,
    /// An empty prior list means "pick by view count".
    pub fusion: FusionConfig,
    pub splat_scale: f64,
    pub splat_opacity: f64,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec {
            scene: SceneSpec::new(Shape::Ellipsoid {
                a: 1.0,
                b: 0.8,
                c: 1.2,
                subdiv: 3,
            }),
            image_res: 256,
            distance: 4.0,
            landmarks_extra: 96,
            deform: DeformConfig::default(),
            fusion: FusionConfig {
                gamma: Vec::new(),
                ..FusionConfig::default()
            },
            splat_scale: 0.01,
            splat_opacity: 1.0,
        }
    }
}

impl PipelineSpec {
    pub fn from_key_values(kv: &KeyValues, path: &Path) -> Result<Self> {
        kv.only(&pipeline_keys(), path)?;
        let mut spec = PipelineSpec {
            scene: scene_spec_from(kv, path)?,
            deform: deform_config_from(kv, path)?,
            fusion: fusion_config_from(kv, path)?,
            ..PipelineSpec::default()
        };
        spec.deform.region_weights = spec.scene.region_weights;
        if let Some(v) = kv.get("image_res", path)? {
            spec.image_res = v;
        }
        if let Some(v) = kv.get("distance", path)? {
            spec.distance = v;
        }
        if let Some(v) = kv.get("landmarks_extra", path)? {
            spec.landmarks_extra = v;
        }
        if let Some(v) = kv.get("splat_scale", path)? {
            spec.splat_scale = v;
        }
        if let Some(v) = kv.get("splat_opacity", path)? {
            spec.splat_opacity = v;
        }
        spec.validate().map_err(|e| Error::parse(path, 0, e.to_string()))?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.deform.validate()?;
        if self.image_res < 1 {
            return Err(Error::InvalidConfig("image_res must be at least 1".into()));
        }
        if !(self.distance > 1.0) || !self.distance.is_finite() {
            return Err(Error::InvalidConfig(format!("distance must be > 1, got {}", self.distance)));
        }
        if !(self.splat_scale > 0.0) || !self.splat_scale.is_finite() {
            return Err(Error::InvalidConfig(format!("splat_scale must be > 0, got {}", self.splat_scale)));
        }
        if !(0.0..=1.0).contains(&self.splat_opacity) {
            return Err(Error::InvalidConfig(format!("splat_opacity must be in [0, 1], got {}", self.splat_opacity)));
        }
        Ok(())
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let opts = RigOptions {
            width: self.image_res,
            height: self.image_res,
            ..RigOptions::default()
        };
        six_view_rig_with(self.distance, Vec3::zeros(), &opts)
    }
}

/// Prior weights for `n` views when none are configured: the six-view
/// defaults for the standard rig, equal weights otherwise.
pub fn with_view_priors(config: &FusionConfig, n: usize) -> FusionConfig {
    let mut out = config.clone();
    if out.gamma.is_empty() {
        out.gamma = if n == SIX_VIEW_GAMMA.len() {
            SIX_VIEW_GAMMA.to_vec()
        } else {
            vec![1.0; n]
        };
    }
    out
}

/// A synthesized scene: the template to deform and its observations.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub model: BlendModel,
    /// Target vertex positions in the template's topology.
    pub target: Vec<Vec3>,
    pub cameras: Vec<Camera>,
    pub normals: Vec<NormalMap>,
    /// Rasterized target, one per camera.
    pub gbuffers: Vec<GBuffer>,
    pub features: Vec<FeatureMap>,
    pub landmarks: LandmarkSet,
}

impl SynthData {
    pub fn template(&self) -> &TriMesh {
        self.model.template()
    }
}

/// Build the template, its target and the observations of the target. An
/// ellipsoid target is an axis-stretched unit icosphere, so it shares the
/// template's topology, UVs and labels, and its normal maps are analytic.
pub fn synthesize(spec: &PipelineSpec, seed: u64) -> Result<SynthData> {
    spec.validate()?;
    let (template_shape, radii) = match spec.scene.shape {
        Shape::Ellipsoid { a, b, c, subdiv } => (Shape::Icosphere { subdiv }, Some((a, b, c))),
        Shape::Icosphere { subdiv } => (Shape::Icosphere { subdiv }, Some((1.0, 1.0, 1.0))),
        grid @ Shape::Grid { .. } => (grid, None),
    };
    let scene = make_scene(&SceneSpec {
        shape: template_shape,
        ..spec.scene.clone()
    })?;
    let model = scene.model;
    let cameras = spec.cameras()?;
    let target = match radii {
        Some((a, b, c)) => deformed_vertices(&model, &[a - 1.0, b - 1.0, c - 1.0], &VertexOffsets::zeros(model.template().num_vertices()))?,
        None => model.template().vertices().to_vec(),
    };
    let mesh = model.template();
    let gbuffers: Vec<GBuffer> = cameras
        .par_iter()
        .map(|cam| rasterize(mesh, &target, cam))
        .collect::<Result<_>>()?;
    let normals = match radii {
        Some(r) => analytic_normal_maps(r, &cameras),
        None => gbuffers
            .iter()
            .map(|gb| {
                let n = gb.normal.iter().zip(&gb.mask).map(|(n, &m)| if m { *n } else { Vec3::zeros() }).collect();
                NormalMap::from_normals(gb.width, gb.height, n)
            })
            .collect(),
    };
    let features = gbuffers.iter().map(|gb| view_features(gb, &spec.scene.feature_rule)).collect();
    let landmarks = match radii {
        Some(r) => synth_landmarks(mesh, r, &cameras, spec.landmarks_extra, seed)
            .into_iter()
            .map(|(vertex, camera, target)| Landmark { vertex, camera, target })
            .collect(),
        None => Vec::new(),
    };
    Ok(SynthData {
        model,
        target,
        cameras,
        normals,
        gbuffers,
        features,
        landmarks: LandmarkSet::new(landmarks),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Write a synthesized scene as the files the individual commands read.
pub fn write_synth(dir: &Path, data: &SynthData) -> Result<()> {
    create_dir(dir)?;
    let mesh = data.template();
    save_obj(&dir.join("template.obj"), mesh, mesh.vertices())?;
    save_obj(&dir.join("target.obj"), mesh, &data.target)?;
    write_text(&dir.join("labels.txt"), &labels_to_text(mesh.labels(), mesh.mirror(), mesh.lap_weights()))?;
    write_text(&dir.join("landmarks.txt"), &landmarks_to_text(&data.landmarks))?;
    let basis = data.model.basis();
    let flat: Vec<f64> = basis.iter().flatten().flat_map(|d| [d.x, d.y, d.z]).collect();
    save_uvt(&dir.join("basis.uvt"), &Tensor::from_f64(vec![basis.len(), mesh.num_vertices(), 3], &flat)?)?;
    let mut manifest = ViewManifest::default();
    for (k, cam) in data.cameras.iter().enumerate() {
        let entry = ViewEntry {
            camera: format!("cam_{k}.txt"),
            normals: Some(format!("normals_{k}.pfm")),
            gbuffer: Some(format!("gbuffer_{k}")),
            features: Some(format!("features_{k}.uvt")),
        };
        save_camera(&dir.join(&entry.camera), cam)?;
        pfm::save_pfm(&dir.join(entry.normals.as_ref().unwrap()), &pfm::normal_map_to_image(&data.normals[k]))?;
        save_gbuffer(&dir.join(entry.gbuffer.as_ref().unwrap()), &data.gbuffers[k])?;
        save_features(&dir.join(entry.features.as_ref().unwrap()), &data.features[k])?;
        manifest.views.push(entry);
    }
    manifest.save(&dir.join("views.json"))
}

/// Deform a template mesh toward the target normals; returns the final
/// positions with the optimizer record.
pub fn deform_mesh(
    template: &TriMesh,
    cameras: &[Camera],
    normals: &[NormalMap],
    landmarks: &LandmarkSet,
    config: &DeformConfig,
    lap_weights: &[f64],
) -> Result<(Vec<Vec3>, DeformResult)> {
    crate::error::check_len("normal maps", cameras.len(), normals.len())?;
    let model = BlendModel::new(template.clone(), Vec::new())?;
    let views: Vec<DeformView> = cameras
        .iter()
        .zip(normals)
        .map(|(camera, target)| DeformView {
            camera: camera.clone(),
            target: target.clone(),
        })
        .collect();
    let result = optimize_offsets_weighted(&model, &[], &views, landmarks, config, lap_weights)?;
    if let Some(msg) = &result.aborted {
        log::warn!("{msg}");
    }
    let positions = deformed_vertices(&model, &[], &result.offsets)?;
    Ok((positions, result))
}

pub fn trace_csv(trace: &[LossRecord]) -> String {
    let mut out = String::from("iter,total,nml,lmk,lap\n");
    for r in trace {
        let _ = writeln!(out, "{},{},{},{},{}", r.iter, r.total, r.nml, r.lmk, r.lap);
    }
    out
}

/// Fuse per-view features through the given G-buffers.
pub fn splat(gbuffers: &[GBuffer], cameras: &[Camera], features: &[FeatureMap], config: &FusionConfig) -> Result<FusionOutput> {
    crate::error::check_len("cameras", gbuffers.len(), cameras.len())?;
    crate::error::check_len("feature maps", gbuffers.len(), features.len())?;
    let config = with_view_priors(config, gbuffers.len());
    let inputs: Vec<ViewInput> = gbuffers
        .iter()
        .zip(cameras)
        .zip(features)
        .map(|((gbuffer, camera), features)| ViewInput { gbuffer, camera, features })
        .collect();
    let (out, _) = fuse_views(&inputs, &config)?;
    let uncovered = out.coverage.iter().filter(|c| !**c).count();
    log::info!("fused {}x{} texels, {uncovered} without coverage", out.res, out.res);
    Ok(out)
}

/// Write `fused.uvt`, `weight.uvt` and their PNG previews.
pub fn write_fusion(dir: &Path, out: &FusionOutput) -> Result<()> {
    create_dir(dir)?;
    let r = out.res;
    save_uvt(&dir.join("fused.uvt"), &Tensor::from_f64(vec![r, r, out.channels], &out.features)?)?;
    save_uvt(&dir.join("weight.uvt"), &Tensor::from_f64(vec![r, r], &out.total_weight)?)?;
    image::save_features(&dir.join("fused.png"), &FeatureMap::new(r, r, out.channels, out.features.clone())?)?;
    image::save_features(&dir.join("weight.png"), &FeatureMap::new(r, r, 1, out.total_weight.clone())?)
}

/// Splat attributes from a fused map: color from the first three channels,
/// the given opacity on covered texels (zero elsewhere) and a fixed scale.
pub fn uv_attributes(out: &FusionOutput, opacity: f64, scale: f64) -> Result<UvAttributeMap> {
    let c = out.channels;
    let mut data = Vec::with_capacity(out.res * out.res * UV_ATTR_CHANNELS);
    for t in 0..out.res * out.res {
        let f = out.texel(t);
        data.extend_from_slice(&[f[0], f[1.min(c - 1)], f[2.min(c - 1)]]);
        data.push(if out.coverage[t] { opacity } else { 0.0 });
        data.push(scale);
    }
    UvAttributeMap::new(out.res, data)
}

/// Attribute map from a `[res, res, 5]` tensor.
pub fn uv_attributes_from_tensor(t: &Tensor, path: &Path) -> Result<UvAttributeMap> {
    if t.dims.len() != 3 || t.dims[0] != t.dims[1] || t.dims[2] != UV_ATTR_CHANNELS {
        return Err(Error::format(path, 4, format!("attribute map needs dims [res, res, {UV_ATTR_CHANNELS}], found {:?}", t.dims)));
    }
    UvAttributeMap::new(t.dims[0], t.to_f64()).map_err(|e| Error::format(path, 8, e.to_string()))
}

/// Per-vertex colors read from the attribute map at each vertex's first UV
/// corner, nearest texel.
pub fn vertex_colors(mesh: &TriMesh, attrs: &UvAttributeMap) -> Vec<[f64; 3]> {
    let mut colors = vec![[0.5; 3]; mesh.num_vertices()];
    let mut seen = vec![false; mesh.num_vertices()];
    let r = attrs.res;
    for (f, corners) in mesh.faces().iter().zip(mesh.uv_corners()) {
        for (&v, uv) in f.iter().zip(corners) {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            let x = ((uv.x * r as f64) as usize).min(r - 1);
            let y = ((uv.y * r as f64) as usize).min(r - 1);
            let px = attrs.texel(y * r + x);
            colors[v] = [px[0], px[1], px[2]];
        }
    }
    colors
}

pub fn anchor(mesh: &TriMesh, positions: &[Vec3], attrs: &UvAttributeMap) -> Result<GaussianSet> {
    build_gaussians(mesh, positions, attrs, &vertex_colors(mesh, attrs))
}

pub fn render(set: &GaussianSet, camera: &Camera) -> Result<RgbaImage> {
    render_gaussians(set, camera)
}

/// What a pipeline run produced.
#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub files: Vec<PathBuf>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub splats: usize,
    pub uncovered_texels: usize,
}

/// Run every stage and write its outputs under `out_dir`: the synthesized
/// scene in `scene/`, then `out.obj`, `trace.csv`, `fused.uvt`, `weight.uvt`,
/// `attrs.uvt`, `splats.uvt`, `render.png` and the PNG previews.
pub fn run_pipeline(spec: &PipelineSpec, seed: u64, out_dir: &Path) -> Result<PipelineReport> {
    create_dir(out_dir)?;
    log::info!("synth");
    let data = synthesize(spec, seed)?;
    write_synth(&out_dir.join("scene"), &data)?;
    let mesh = data.template();

    log::info!("deform: {} iterations", spec.deform.iters);
    let weights = spec.deform.region_weights.weights_for(mesh.labels());
    let (positions, result) = deform_mesh(mesh, &data.cameras, &data.normals, &data.landmarks, &spec.deform, &weights)?;
    save_obj(&out_dir.join("out.obj"), mesh, &positions)?;
    write_text(&out_dir.join("trace.csv"), &trace_csv(&result.trace))?;

    log::info!("splat");
    let gbuffers: Vec<GBuffer> = data
        .cameras
        .par_iter()
        .map(|cam| rasterize(mesh, &positions, cam))
        .collect::<Result<_>>()?;
    let fused = splat(&gbuffers, &data.cameras, &data.features, &spec.fusion)?;
    write_fusion(out_dir, &fused)?;

    log::info!("anchor");
    let attrs = uv_attributes(&fused, spec.splat_opacity, spec.splat_scale)?;
    save_uvt(&out_dir.join("attrs.uvt"), &Tensor::from_f64(vec![attrs.res, attrs.res, UV_ATTR_CHANNELS], &attrs.data)?)?;
    let deformed = mesh.with_vertices(positions.clone())?;
    let set = anchor(&deformed, &positions, &attrs)?;
    save_splats(&out_dir.join("splats.uvt"), &set)?;

    log::info!("render {} splats", set.len());
    let img = render(&set, &data.cameras[0])?;
    image::save_rgba(&out_dir.join("render.png"), &img)?;

    let files = ["out.obj", "trace.csv", "fused.uvt", "weight.uvt", "fused.png", "weight.png", "attrs.uvt", "splats.uvt", "render.png"]
        .iter()
        .map(|f| out_dir.join(f))
        .collect();
    Ok(PipelineReport {
        files,
        initial_loss: result.trace.first().map_or(f64::NAN, |r| r.total),
        final_loss: result.trace.last().map_or(f64::NAN, |r| r.total),
        splats: set.len(),
        uncovered_texels: fused.coverage.iter().filter(|c| !**c).count(),
    })
}
