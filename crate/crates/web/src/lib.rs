//! Browser bindings: fuse the six rig views of a checkered sphere into a UV
//! map, inspect one view's share of the fusion weight, and render splats
//! anchored to the sphere while driving its blendshapes.

use uvsplat::anchor::GaussianSet;
use uvsplat::geometry::{six_view_rig_with, Camera, RigOptions, TriMesh, Vec3, VertexOffsets};
use uvsplat::pipeline;
use uvsplat::raster::{rasterize, GBuffer};
use uvsplat::synth::{make_scene, view_features, FeatureRule, SceneSpec, Shape};
use uvsplat::uvsplat::{
    build_pyramid, fuse_views, hole_fill, FeatureMap, FusionConfig, FusionMode, FusionOutput, ViewInput,
};
use uvsplat::geometry::BlendModel;
use uvsplat::Result;
use wasm_bindgen::prelude::*;

pub const UV_RES: usize = 128;
const SPLAT_SCALE: f64 = 0.012;

pub struct Scene {
    mesh: TriMesh,
    model: BlendModel,
    views: Vec<(GBuffer, Camera, FeatureMap)>,
    splats: GaussianSet,
    last: Option<FusionOutput>,
}

fn config(n: usize, levels: usize, tau: f64, raw: bool) -> FusionConfig {
    FusionConfig {
        gamma: if n == 6 { FusionConfig::default().gamma } else { vec![1.0; n] },
        base_res: UV_RES,
        num_levels: levels,
        density_tau: tau,
        mode: if raw { FusionMode::RawLevels } else { FusionMode::HoleFilled },
        ..FusionConfig::default()
    }
}

fn to_byte(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Scene {
    pub fn new(view_res: usize) -> Result<Self> {
        let scene = make_scene(&SceneSpec::new(Shape::Icosphere { subdiv: 3 }))?;
        let opts = RigOptions {
            width: view_res,
            height: view_res,
            ..RigOptions::default()
        };
        let mut views = Vec::new();
        for cam in six_view_rig_with(4.0, Vec3::zeros(), &opts)? {
            let gb = rasterize(&scene.mesh, scene.mesh.vertices(), &cam)?;
            let f = view_features(&gb, &FeatureRule::Checkerboard { cells: 8 });
            views.push((gb, cam, f));
        }
        let mut out = Scene {
            splats: GaussianSet {
                anchors: Vec::new(),
                offsets: Vec::new(),
                scale: Vec::new(),
                opacity: Vec::new(),
                color: Vec::new(),
                positions: Vec::new(),
            },
            mesh: scene.mesh,
            model: scene.model,
            views,
            last: None,
        };
        out.fuse(4, 1.0, false)?;
        Ok(out)
    }

    fn inputs(&self) -> Vec<ViewInput<'_>> {
        self.views
            .iter()
            .map(|(gbuffer, camera, features)| ViewInput { gbuffer, camera, features })
            .collect()
    }

    /// Fuse every view and re-anchor the splats to the new map. Returns the
    /// map as RGBA; texels no view reached are transparent.
    pub fn fuse(&mut self, levels: usize, tau: f64, raw: bool) -> Result<Vec<u8>> {
        let cfg = config(self.views.len(), levels, tau, raw);
        let (out, _) = fuse_views(&self.inputs(), &cfg)?;
        let attrs = pipeline::uv_attributes(&out, 1.0, SPLAT_SCALE)?;
        self.splats = pipeline::anchor(&self.mesh, self.mesh.vertices(), &attrs)?;
        let mut rgba = Vec::with_capacity(UV_RES * UV_RES * 4);
        for t in 0..UV_RES * UV_RES {
            let f = out.texel(t);
            rgba.extend_from_slice(&[to_byte(f[0]), to_byte(f[1]), to_byte(f[2])]);
            rgba.push(if out.coverage[t] { 255 } else { 0 });
        }
        self.last = Some(out);
        Ok(rgba)
    }

    pub fn uncovered(&self) -> usize {
        self.last.as_ref().map_or(0, |o| o.coverage.iter().filter(|c| !**c).count())
    }

    /// Fraction of the hole-filled fusion weight contributed by one view, as
    /// a grayscale RGBA image.
    pub fn view_share(&self, view: usize, levels: usize, tau: f64) -> Result<Vec<u8>> {
        let cfg = config(self.views.len(), levels, tau, false);
        cfg.validate()?;
        if view >= self.views.len() {
            return Err(uvsplat::Error::InvalidInput(format!("no view {view}")));
        }
        let weights: Vec<Vec<f64>> = self
            .views
            .iter()
            .zip(&cfg.gamma)
            .map(|((gb, cam, f), g)| {
                let filled = hole_fill(&build_pyramid(gb, cam, f, &cfg)?, &cfg);
                Ok(filled.confidence.iter().zip(&filled.weight).map(|(c, w)| g * c * w).collect())
            })
            .collect::<Result<_>>()?;
        let mut rgba = Vec::with_capacity(UV_RES * UV_RES * 4);
        for t in 0..UV_RES * UV_RES {
            let total: f64 = weights.iter().map(|w| w[t]).sum();
            let share = if total > cfg.epsilon { weights[view][t] / total } else { 0.0 };
            let v = to_byte(share);
            rgba.extend_from_slice(&[v, v, v, if total > cfg.epsilon { 255 } else { 0 }]);
        }
        Ok(rgba)
    }

    /// Stretch the sphere along x, y, z by the given blend coefficients and
    /// render its splats from a camera orbiting at `yaw_deg`.
    pub fn drive(&self, coeffs: [f64; 3], yaw_deg: f64, res: usize) -> Result<Vec<u8>> {
        let n = self.mesh.num_vertices();
        let driven = uvsplat::anchor::drive(&self.splats, &self.model, &coeffs, &VertexOffsets::zeros(n))?;
        let a = yaw_deg.to_radians();
        let f = res as f64 * 1.6;
        let cam = Camera::look_at(Vec3::new(a.sin(), 0.3, a.cos()) * 4.5, Vec3::zeros(), f, f, res, res)?;
        let img = pipeline::render(&driven, &cam)?;
        let bg = [0.09, 0.1, 0.12];
        let mut rgba = Vec::with_capacity(res * res * 4);
        for p in &img.pixels {
            for k in 0..3 {
                rgba.push(to_byte(p[k] + (1.0 - p[3]) * bg[k]));
            }
            rgba.push(255);
        }
        Ok(rgba)
    }

    pub fn splat_count(&self) -> usize {
        self.splats.len()
    }
}

fn js(e: uvsplat::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(view_res: usize) -> std::result::Result<Demo, JsError> {
        Ok(Demo {
            scene: Scene::new(view_res).map_err(js)?,
        })
    }

    #[wasm_bindgen(js_name = uvRes)]
    pub fn uv_res(&self) -> usize {
        UV_RES
    }

    pub fn fuse(&mut self, levels: usize, tau: f64, raw: bool) -> std::result::Result<Vec<u8>, JsError> {
        self.scene.fuse(levels, tau, raw).map_err(js)
    }

    pub fn uncovered(&self) -> usize {
        self.scene.uncovered()
    }

    #[wasm_bindgen(js_name = viewShare)]
    pub fn view_share(&self, view: usize, levels: usize, tau: f64) -> std::result::Result<Vec<u8>, JsError> {
        self.scene.view_share(view, levels, tau).map_err(js)
    }

    pub fn drive(&self, a: f64, b: f64, c: f64, yaw_deg: f64, res: usize) -> std::result::Result<Vec<u8>, JsError> {
        self.scene.drive([a, b, c], yaw_deg, res).map_err(js)
    }

    #[wasm_bindgen(js_name = splatCount)]
    pub fn splat_count(&self) -> usize {
        self.scene.splat_count()
    }
}
