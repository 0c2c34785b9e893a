//! View manifests, G-buffer directories, feature tensors and splat tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anchor::{Anchor, GaussianSet};
use crate::error::{Error, Result};
use crate::geometry::{Camera, Vec2, Vec3};
use crate::raster::{GBuffer, NormalMap};
use crate::uvsplat::FeatureMap;

use super::image::{save_mask, save_normals};
use super::pfm::{image_to_normal_map, load_pfm};
use super::text::load_camera;
use super::uvt::{load_uvt, save_uvt, Tensor};

/// One entry of `views.json`. Paths are relative to the manifest.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ViewEntry {
    pub camera: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gbuffer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ViewManifest {
    pub views: Vec<ViewEntry>,
    #[serde(skip)]
    pub base: PathBuf,
}

impl ViewManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = super::text::read_text(path)?;
        let mut m: ViewManifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if m.views.is_empty() {
            return Err(Error::parse(path, 1, "no views listed"));
        }
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        super::text::write_text(path, &(json + "\n"))
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base.join(rel)
    }

    fn required<'a>(&self, field: &'a Option<String>, what: &str, k: usize) -> Result<PathBuf> {
        field
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::InvalidInput(format!("view {k} has no `{what}` entry")))
    }

    pub fn camera(&self, k: usize) -> Result<Camera> {
        load_camera(&self.resolve(&self.views[k].camera))
    }

    pub fn normals(&self, k: usize) -> Result<NormalMap> {
        let path = self.required(&self.views[k].normals, "normals", k)?;
        image_to_normal_map(&load_pfm(&path)?, &path)
    }

    pub fn gbuffer(&self, k: usize) -> Result<GBuffer> {
        load_gbuffer(&self.required(&self.views[k].gbuffer, "gbuffer", k)?)
    }

    pub fn features(&self, k: usize) -> Result<FeatureMap> {
        load_features(&self.required(&self.views[k].features, "features", k)?)
    }
}

/// Feature maps are stored as `[height, width, channels]`.
pub fn save_features(path: &Path, map: &FeatureMap) -> Result<()> {
    save_uvt(path, &Tensor::from_f64(vec![map.height(), map.width(), map.channels()], map.data())?)
}

pub fn load_features(path: &Path) -> Result<FeatureMap> {
    let t = load_uvt(path)?;
    if t.dims.len() != 3 {
        return Err(Error::format(path, 4, format!("feature tensor needs 3 dims, found {}", t.dims.len())));
    }
    FeatureMap::new(t.dims[1], t.dims[0], t.dims[2], t.to_f64()).map_err(|e| Error::format(path, 8, e.to_string()))
}

/// Write a G-buffer as one tensor per channel plus normal and mask previews.
pub fn save_gbuffer(dir: &Path, gb: &GBuffer) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = (gb.height, gb.width);
    let face: Vec<f64> = gb.face_id.iter().map(|f| f.map_or(-1.0, |f| f as f64)).collect();
    let flat3 = |v: &[Vec3]| v.iter().flat_map(|x| [x.x, x.y, x.z]).collect::<Vec<f64>>();
    let uv: Vec<f64> = gb.uv.iter().flat_map(|x| [x.x, x.y]).collect();
    let mask: Vec<f64> = gb.mask.iter().map(|&m| m as u8 as f64).collect();
    save_uvt(&dir.join("face_id.uvt"), &Tensor::from_f64(vec![h, w], &face)?)?;
    save_uvt(&dir.join("bary.uvt"), &Tensor::from_f64(vec![h, w, 3], &flat3(&gb.bary))?)?;
    save_uvt(&dir.join("uv.uvt"), &Tensor::from_f64(vec![h, w, 2], &uv)?)?;
    save_uvt(&dir.join("normal.uvt"), &Tensor::from_f64(vec![h, w, 3], &flat3(&gb.normal))?)?;
    save_uvt(&dir.join("depth.uvt"), &Tensor::from_f64(vec![h, w], &gb.depth)?)?;
    save_uvt(&dir.join("mask.uvt"), &Tensor::from_f64(vec![h, w], &mask)?)?;
    save_normals(&dir.join("normal.png"), w, h, &gb.normal, &gb.mask)?;
    save_mask(&dir.join("mask.png"), w, h, &gb.mask)
}

fn load_channel(dir: &Path, name: &str, h: usize, w: usize, c: usize) -> Result<Vec<f64>> {
    let path = dir.join(name);
    let t = load_uvt(&path)?;
    let expect: Vec<usize> = if c == 1 { vec![h, w] } else { vec![h, w, c] };
    if t.dims != expect {
        return Err(Error::format(&path, 4, format!("expected dims {expect:?}, found {:?}", t.dims)));
    }
    Ok(t.to_f64())
}

/// Load a G-buffer directory, rejecting inconsistent channels.
pub fn load_gbuffer(dir: &Path) -> Result<GBuffer> {
    let face_path = dir.join("face_id.uvt");
    let face = load_uvt(&face_path)?;
    if face.dims.len() != 2 {
        return Err(Error::format(&face_path, 4, "face_id needs dims [height, width]"));
    }
    let (h, w) = (face.dims[0], face.dims[1]);
    let bary = load_channel(dir, "bary.uvt", h, w, 3)?;
    let uv = load_channel(dir, "uv.uvt", h, w, 2)?;
    let normal = load_channel(dir, "normal.uvt", h, w, 3)?;
    let depth = load_channel(dir, "depth.uvt", h, w, 1)?;
    let mask = load_channel(dir, "mask.uvt", h, w, 1)?;
    let mut gb = GBuffer::empty(w, h);
    for i in 0..h * w {
        let f = face.data[i];
        let offset = 12 + 4 * i;
        let m = mask[i];
        if f == -1.0 {
            if m != 0.0 {
                return Err(Error::format(&face_path, offset, format!("pixel {i} is masked but has no face")));
            }
            continue;
        }
        if f < 0.0 || f.fract() != 0.0 || m != 1.0 {
            return Err(Error::format(&face_path, offset, format!("pixel {i} has invalid face id {f} or mask {m}")));
        }
        let b = Vec3::new(bary[3 * i], bary[3 * i + 1], bary[3 * i + 2]);
        if b.iter().any(|&x| x < -1e-6) || (b.sum() - 1.0).abs() > 1e-5 {
            return Err(Error::format(dir.join("bary.uvt"), 12 + 12 * i, format!("pixel {i} barycentrics {b:?} invalid")));
        }
        let u = Vec2::new(uv[2 * i], uv[2 * i + 1]);
        if !(0.0..=1.0).contains(&u.x) || !(0.0..=1.0).contains(&u.y) {
            return Err(Error::format(dir.join("uv.uvt"), 16 + 8 * i, format!("pixel {i} uv outside [0, 1]")));
        }
        let n = Vec3::new(normal[3 * i], normal[3 * i + 1], normal[3 * i + 2]);
        if (n.norm() - 1.0).abs() > 1e-5 {
            return Err(Error::format(dir.join("normal.uvt"), 16 + 12 * i, format!("pixel {i} normal is not unit length")));
        }
        if !(depth[i] > 0.0) {
            return Err(Error::format(dir.join("depth.uvt"), 12 + 4 * i, format!("pixel {i} depth {} <= 0", depth[i])));
        }
        gb.set(i, f as usize, b, u, n, depth[i]);
    }
    Ok(gb)
}

const SPLAT_COLUMNS: usize = 16;

/// Splats as a `[count, 16]` table with columns kind (0 vertex, 1 surface),
/// index, b0 b1 b2, offset xyz, scale, opacity, r g b, position xyz.
pub fn splats_to_tensor(set: &GaussianSet) -> Result<Tensor> {
    let mut data = Vec::with_capacity(set.len() * SPLAT_COLUMNS);
    for i in 0..set.len() {
        let (kind, index, b) = match set.anchors[i] {
            Anchor::Vertex(v) => (0.0, v as f64, Vec3::zeros()),
            Anchor::Surface { face, bary } => (1.0, face as f64, bary),
        };
        let o = set.offsets[i];
        let c = set.color[i];
        let p = set.positions[i];
        data.extend_from_slice(&[
            kind, index, b.x, b.y, b.z, o.x, o.y, o.z, set.scale[i], set.opacity[i], c[0], c[1], c[2], p.x, p.y, p.z,
        ]);
    }
    Tensor::from_f64(vec![set.len(), SPLAT_COLUMNS], &data)
}

pub fn save_splats(path: &Path, set: &GaussianSet) -> Result<()> {
    save_uvt(path, &splats_to_tensor(set)?)
}

pub fn load_splats(path: &Path) -> Result<GaussianSet> {
    let t = load_uvt(path)?;
    if t.dims.len() != 2 || t.dims[1] != SPLAT_COLUMNS {
        return Err(Error::format(path, 4, format!("splat table needs dims [count, {SPLAT_COLUMNS}], found {:?}", t.dims)));
    }
    let mut set = GaussianSet {
        anchors: Vec::new(),
        offsets: Vec::new(),
        scale: Vec::new(),
        opacity: Vec::new(),
        color: Vec::new(),
        positions: Vec::new(),
    };
    let header = 4 + 4 + 8;
    for (i, row) in t.data.chunks(SPLAT_COLUMNS).enumerate() {
        let r: Vec<f64> = row.iter().map(|&x| x as f64).collect();
        let at = |col: usize| header + 4 * (i * SPLAT_COLUMNS + col);
        if r[1] < 0.0 || r[1].fract() != 0.0 {
            return Err(Error::format(path, at(1), format!("splat {i} has invalid anchor index {}", r[1])));
        }
        let anchor = match r[0] {
            0.0 => Anchor::Vertex(r[1] as usize),
            1.0 => Anchor::Surface {
                face: r[1] as usize,
                bary: Vec3::new(r[2], r[3], r[4]),
            },
            k => return Err(Error::format(path, at(0), format!("splat {i} has unknown kind {k}"))),
        };
        if !(r[8] > 0.0) {
            return Err(Error::format(path, at(8), format!("splat {i} scale {} <= 0", r[8])));
        }
        if !(0.0..=1.0).contains(&r[9]) {
            return Err(Error::format(path, at(9), format!("splat {i} opacity {} outside [0, 1]", r[9])));
        }
        set.anchors.push(anchor);
        set.offsets.push(Vec3::new(r[5], r[6], r[7]));
        set.scale.push(r[8]);
        set.opacity.push(r[9]);
        set.color.push([r[10], r[11], r[12]]);
        set.positions.push(Vec3::new(r[13], r[14], r[15]));
    }
    Ok(set)
}
