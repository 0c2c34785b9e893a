//! Line-oriented text formats: key=value files (cameras, configs, scene
//! specs), the labels sidecar and landmark lists.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::deform::{DeformConfig, Landmark, LandmarkSet};
use crate::error::{Error, Result};
use crate::geometry::{Camera, Label, Mat3, RegionWeights, Vec2, Vec3};
use crate::synth::{FeatureRule, SceneSpec, Shape, UvLayout};
use crate::uvsplat::FusionConfig;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `key = value` entries with their 1-based line numbers. `#` starts a comment.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: Vec<(usize, String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(path, i + 1, format!("expected key=value, found `{line}`")));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::parse(path, i + 1, "empty key"));
            }
            if let Some((prev, ..)) = entries.iter().find(|e| e.1 == key) {
                return Err(Error::parse(path, i + 1, format!("duplicate key `{key}` (first on line {prev})")));
            }
            entries.push((i + 1, key, v.trim().to_string()));
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    fn find(&self, key: &str) -> Option<&(usize, String, String)> {
        self.entries.iter().find(|e| e.1 == key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.find(key).is_some()
    }

    pub fn get<T: FromStr>(&self, key: &str, path: &Path) -> Result<Option<T>> {
        match self.find(key) {
            None => Ok(None),
            Some((line, _, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(path, *line, format!("bad value `{v}` for `{key}`"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        self.get(key, path)?
            .ok_or_else(|| Error::parse(path, 0, format!("missing key `{key}`")))
    }

    pub fn list(&self, key: &str, path: &Path) -> Result<Option<Vec<f64>>> {
        match self.find(key) {
            None => Ok(None),
            Some((line, _, v)) => v
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| Error::parse(path, *line, format!("bad list `{v}` for `{key}`"))),
        }
    }

    /// Reject keys outside `known`, naming the line of the first stray key.
    pub fn only(&self, known: &[&str], path: &Path) -> Result<()> {
        match self.entries.iter().find(|e| !known.contains(&e.1.as_str())) {
            Some((line, k, _)) => Err(Error::parse(path, *line, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.find(key).map(|e| e.0).unwrap_or(0)
    }
}

const CAMERA_KEYS: [&str; 18] = [
    "fx", "fy", "cx", "cy", "width", "height", "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22", "tx",
    "ty", "tz",
];

/// Camera in the JSON layout, with the same keys as the text file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub r00: f64,
    pub r01: f64,
    pub r02: f64,
    pub r10: f64,
    pub r11: f64,
    pub r12: f64,
    pub r20: f64,
    pub r21: f64,
    pub r22: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl From<&Camera> for CameraFile {
    fn from(c: &Camera) -> Self {
        let r = &c.rotation;
        CameraFile {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            r00: r[(0, 0)],
            r01: r[(0, 1)],
            r02: r[(0, 2)],
            r10: r[(1, 0)],
            r11: r[(1, 1)],
            r12: r[(1, 2)],
            r20: r[(2, 0)],
            r21: r[(2, 1)],
            r22: r[(2, 2)],
            tx: c.translation.x,
            ty: c.translation.y,
            tz: c.translation.z,
        }
    }
}

impl CameraFile {
    pub fn to_camera(&self) -> Result<Camera> {
        let rotation = Mat3::new(
            self.r00, self.r01, self.r02, self.r10, self.r11, self.r12, self.r20, self.r21, self.r22,
        );
        Camera::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            rotation,
            Vec3::new(self.tx, self.ty, self.tz),
            self.width,
            self.height,
        )
    }
}

pub fn camera_to_text(camera: &Camera) -> String {
    let f = CameraFile::from(camera);
    let v = serde_json::to_value(&f).expect("camera serializes");
    let mut out = String::new();
    for k in CAMERA_KEYS {
        let _ = writeln!(out, "{k}={}", v[k]);
    }
    out
}

pub fn parse_camera_text(text: &str, path: &Path) -> Result<Camera> {
    let kv = KeyValues::parse(text, path)?;
    kv.only(&CAMERA_KEYS, path)?;
    let f = |k: &str| kv.require::<f64>(k, path);
    let u = |k: &str| kv.require::<usize>(k, path);
    let file = CameraFile {
        fx: f("fx")?,
        fy: f("fy")?,
        cx: f("cx")?,
        cy: f("cy")?,
        width: u("width")?,
        height: u("height")?,
        r00: f("r00")?,
        r01: f("r01")?,
        r02: f("r02")?,
        r10: f("r10")?,
        r11: f("r11")?,
        r12: f("r12")?,
        r20: f("r20")?,
        r21: f("r21")?,
        r22: f("r22")?,
        tx: f("tx")?,
        ty: f("ty")?,
        tz: f("tz")?,
    };
    file.to_camera().map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Load a camera from key=value text, or from JSON when the file ends in
/// `.json`.
pub fn load_camera(path: &Path) -> Result<Camera> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let file: CameraFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        file.to_camera().map_err(|e| Error::parse(path, 0, e.to_string()))
    } else {
        parse_camera_text(&text, path)
    }
}

pub fn save_camera(path: &Path, camera: &Camera) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        let json = serde_json::to_string_pretty(&CameraFile::from(camera))?;
        write_text(path, &(json + "\n"))
    } else {
        write_text(path, &camera_to_text(camera))
    }
}

/// Per-vertex semantics from the labels sidecar.
#[derive(Clone, Debug, PartialEq)]
pub struct Semantics {
    pub labels: Vec<Label>,
    pub mirror: Vec<usize>,
    pub weights: Vec<f64>,
}

pub fn parse_labels(text: &str, path: &Path, num_vertices: usize) -> Result<Semantics> {
    let mut labels = vec![None; num_vertices];
    let mut mirror = vec![0; num_vertices];
    let mut weights = vec![0.0; num_vertices];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fail = |msg: String| Error::parse(path, i + 1, msg);
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(fail(format!("expected `index label mirror weight`, found {} fields", toks.len())));
        }
        let idx: usize = toks[0].parse().map_err(|_| fail(format!("bad vertex index `{}`", toks[0])))?;
        if idx >= num_vertices {
            return Err(fail(format!("vertex {idx} out of range ({num_vertices} vertices)")));
        }
        if labels[idx].is_some() {
            return Err(fail(format!("vertex {idx} listed twice")));
        }
        let label: Label = toks[1].parse().map_err(fail)?;
        let m: usize = toks[2].parse().map_err(|_| fail(format!("bad mirror index `{}`", toks[2])))?;
        if m >= num_vertices {
            return Err(fail(format!("mirror {m} out of range ({num_vertices} vertices)")));
        }
        let w: f64 = toks[3].parse().map_err(|_| fail(format!("bad weight `{}`", toks[3])))?;
        if !(w >= 0.0) || !w.is_finite() {
            return Err(fail(format!("weight {w} must be finite and >= 0")));
        }
        labels[idx] = Some(label);
        mirror[idx] = m;
        weights[idx] = w;
    }
    if let Some(missing) = labels.iter().position(|l| l.is_none()) {
        return Err(Error::parse(path, 0, format!("vertex {missing} has no label line")));
    }
    for (i, &m) in mirror.iter().enumerate() {
        if mirror[m] != i {
            return Err(Error::parse(path, 0, format!("mirror map is not an involution at vertex {i}")));
        }
    }
    Ok(Semantics {
        labels: labels.into_iter().map(Option::unwrap).collect(),
        mirror,
        weights,
    })
}

pub fn load_labels(path: &Path, num_vertices: usize) -> Result<Semantics> {
    parse_labels(&read_text(path)?, path, num_vertices)
}

pub fn labels_to_text(labels: &[Label], mirror: &[usize], weights: &[f64]) -> String {
    let mut out = String::new();
    for (i, ((l, m), w)) in labels.iter().zip(mirror).zip(weights).enumerate() {
        let _ = writeln!(out, "{i} {l} {m} {w}");
    }
    out
}

pub fn parse_landmarks(text: &str, path: &Path) -> Result<LandmarkSet> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fail = |msg: String| Error::parse(path, i + 1, msg);
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(fail(format!("expected `vertex camera u v`, found {} fields", toks.len())));
        }
        let vertex = toks[0].parse().map_err(|_| fail(format!("bad vertex `{}`", toks[0])))?;
        let camera = toks[1].parse().map_err(|_| fail(format!("bad camera `{}`", toks[1])))?;
        let u: f64 = toks[2].parse().map_err(|_| fail(format!("bad u `{}`", toks[2])))?;
        let v: f64 = toks[3].parse().map_err(|_| fail(format!("bad v `{}`", toks[3])))?;
        if !u.is_finite() || !v.is_finite() {
            return Err(fail("non-finite target".into()));
        }
        entries.push(Landmark {
            vertex,
            camera,
            target: Vec2::new(u, v),
        });
    }
    Ok(LandmarkSet::new(entries))
}

pub fn load_landmarks(path: &Path) -> Result<LandmarkSet> {
    parse_landmarks(&read_text(path)?, path)
}

pub fn landmarks_to_text(set: &LandmarkSet) -> String {
    let mut out = String::new();
    for l in &set.entries {
        let _ = writeln!(out, "{} {} {} {}", l.vertex, l.camera, l.target.x, l.target.y);
    }
    out
}

pub const FUSION_KEYS: [&str; 6] = ["gamma", "epsilon", "base_res", "num_levels", "density_tau", "mode"];

/// Fusion settings from key=value entries, starting from the defaults. The
/// prior list is left empty when absent so callers can size it per view.
pub fn fusion_config_from(kv: &KeyValues, path: &Path) -> Result<FusionConfig> {
    let mut cfg = FusionConfig {
        gamma: Vec::new(),
        ..FusionConfig::default()
    };
    if let Some(g) = kv.list("gamma", path)? {
        cfg.gamma = g;
    }
    if let Some(v) = kv.get("epsilon", path)? {
        cfg.epsilon = v;
    }
    if let Some(v) = kv.get("base_res", path)? {
        cfg.base_res = v;
    }
    if let Some(v) = kv.get("num_levels", path)? {
        cfg.num_levels = v;
    }
    if let Some(v) = kv.get("density_tau", path)? {
        cfg.density_tau = v;
    }
    if let Some(v) = kv.get("mode", path)? {
        cfg.mode = v;
    }
    Ok(cfg)
}

pub fn load_fusion_config(path: &Path) -> Result<FusionConfig> {
    let kv = KeyValues::load(path)?;
    kv.only(&FUSION_KEYS, path)?;
    fusion_config_from(&kv, path)
}

pub const DEFORM_KEYS: [&str; 12] = [
    "lambda_nml",
    "lambda_lmk",
    "lambda_lap",
    "symmetry_weight",
    "lr",
    "iters",
    "reraster_every",
    "w_face",
    "w_hair",
    "w_boundary",
    "w_other",
    "camera_space",
];

pub fn deform_config_from(kv: &KeyValues, path: &Path) -> Result<DeformConfig> {
    let mut cfg = DeformConfig::default();
    macro_rules! set {
        ($key:literal, $field:expr) => {
            if let Some(v) = kv.get($key, path)? {
                $field = v;
            }
        };
    }
    set!("lambda_nml", cfg.lambda_nml);
    set!("lambda_lmk", cfg.lambda_lmk);
    set!("lambda_lap", cfg.lambda_lap);
    set!("symmetry_weight", cfg.symmetry_weight);
    set!("lr", cfg.lr);
    set!("iters", cfg.iters);
    set!("reraster_every", cfg.reraster_every);
    set!("w_face", cfg.region_weights.face);
    set!("w_hair", cfg.region_weights.hair);
    set!("w_boundary", cfg.region_weights.boundary);
    set!("w_other", cfg.region_weights.other);
    set!("camera_space", cfg.camera_space_targets);
    cfg.validate().map_err(|e| Error::parse(path, 0, e.to_string()))?;
    Ok(cfg)
}

pub fn load_deform_config(path: &Path) -> Result<DeformConfig> {
    let kv = KeyValues::load(path)?;
    kv.only(&DEFORM_KEYS, path)?;
    deform_config_from(&kv, path)
}

pub const SCENE_KEYS: [&str; 16] = [
    "shape",
    "subdiv",
    "a",
    "b",
    "c",
    "n",
    "uv_layout",
    "face_deg",
    "boundary_deg",
    "features",
    "cells",
    "constant",
    "w_face",
    "w_hair",
    "w_boundary",
    "w_other",
];

/// Keys a pipeline spec accepts beyond the scene, deform and fusion ones.
pub const PIPELINE_KEYS: [&str; 5] = ["image_res", "distance", "landmarks_extra", "splat_scale", "splat_opacity"];

pub fn scene_spec_from(kv: &KeyValues, path: &Path) -> Result<SceneSpec> {
    let subdiv = kv.get("subdiv", path)?.unwrap_or(3);
    let shape = match kv.get::<String>("shape", path)?.as_deref().unwrap_or("icosphere") {
        "icosphere" => Shape::Icosphere { subdiv },
        "ellipsoid" => Shape::Ellipsoid {
            a: kv.get("a", path)?.unwrap_or(1.0),
            b: kv.get("b", path)?.unwrap_or(1.0),
            c: kv.get("c", path)?.unwrap_or(1.0),
            subdiv,
        },
        "grid" => Shape::Grid {
            n: kv.get("n", path)?.unwrap_or(8),
        },
        other => {
            return Err(Error::parse(path, kv.line_of("shape"), format!("unknown shape `{other}`")));
        }
    };
    let mut spec = SceneSpec::new(shape);
    spec.uv_layout = match kv.get::<String>("uv_layout", path)?.as_deref() {
        None | Some("spherical") => UvLayout::Spherical,
        Some("per_face_atlas") | Some("per-face-atlas") => UvLayout::PerFaceAtlas,
        Some(other) => {
            return Err(Error::parse(path, kv.line_of("uv_layout"), format!("unknown uv layout `{other}`")));
        }
    };
    if let Some(v) = kv.get("face_deg", path)? {
        spec.label_rule.face_deg = v;
    }
    if let Some(v) = kv.get("boundary_deg", path)? {
        spec.label_rule.boundary_deg = v;
    }
    spec.feature_rule = match kv.get::<String>("features", path)?.as_deref() {
        None | Some("checkerboard") => FeatureRule::Checkerboard {
            cells: kv.get("cells", path)?.unwrap_or(8),
        },
        Some("normals") | Some("normals_as_rgb") => FeatureRule::NormalsAsRgb,
        Some("constant") => FeatureRule::Constant(kv.get("constant", path)?.unwrap_or(1.0)),
        Some(other) => {
            return Err(Error::parse(path, kv.line_of("features"), format!("unknown feature rule `{other}`")));
        }
    };
    let mut rw = RegionWeights::default();
    if let Some(v) = kv.get("w_face", path)? {
        rw.face = v;
    }
    if let Some(v) = kv.get("w_hair", path)? {
        rw.hair = v;
    }
    if let Some(v) = kv.get("w_boundary", path)? {
        rw.boundary = v;
    }
    if let Some(v) = kv.get("w_other", path)? {
        rw.other = v;
    }
    spec.region_weights = rw;
    spec.validate().map_err(|e| Error::parse(path, 0, e.to_string()))?;
    Ok(spec)
}

pub fn load_scene_spec(path: &Path) -> Result<SceneSpec> {
    let kv = KeyValues::load(path)?;
    kv.only(&SCENE_KEYS, path)?;
    scene_spec_from(&kv, path)
}

/// Every key understood by `pipeline --spec`.
pub fn pipeline_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = SCENE_KEYS.to_vec();
    keys.extend(PIPELINE_KEYS);
    keys.extend(DEFORM_KEYS);
    keys.extend(FUSION_KEYS);
    keys.sort_unstable();
    keys.dedup();
    keys
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_text_round_trip() {
        let cam = crate::geometry::six_view_rig(3.0, Vec3::zeros()).unwrap()[1].clone();
        let back = parse_camera_text(&camera_to_text(&cam), Path::new("c.txt")).unwrap();
        assert_eq!(back, cam);
    }

    #[test]
    fn camera_text_errors() {
        let p = Path::new("c.txt");
        let cam = crate::geometry::six_view_rig(3.0, Vec3::zeros()).unwrap()[0].clone();
        let text = camera_to_text(&cam).replace("fx=", "fx=abc");
        assert!(parse_camera_text(&text, p).unwrap_err().to_string().contains("c.txt:1"));
        let text = camera_to_text(&cam).replace("r00=1", "r00=2");
        assert!(parse_camera_text(&text, p).is_err());
        assert!(parse_camera_text("fx=1\n", p).unwrap_err().to_string().contains("missing"));
    }

    #[test]
    fn labels_round_trip_and_errors() {
        let p = Path::new("l.txt");
        let text = labels_to_text(&[Label::Face, Label::Hair, Label::Other], &[1, 0, 2], &[0.01, 1.0, 0.1]);
        let s = parse_labels(&text, p, 3).unwrap();
        assert_eq!(s.labels, vec![Label::Face, Label::Hair, Label::Other]);
        assert_eq!(s.mirror, vec![1, 0, 2]);
        assert!(parse_labels("0 face 1 1\n1 face 1 1\n", p, 2).is_err());
        let e = parse_labels("0 face 0 1\n1 skin 1 1\n", p, 2).unwrap_err().to_string();
        assert!(e.contains("l.txt:2"), "{e}");
        assert!(parse_labels("0 face 0 -1\n", p, 1).is_err());
    }

    #[test]
    fn landmarks_round_trip() {
        let set = LandmarkSet::new(vec![Landmark {
            vertex: 3,
            camera: 1,
            target: Vec2::new(10.5, 0.25),
        }]);
        let p = Path::new("m.txt");
        assert_eq!(parse_landmarks(&landmarks_to_text(&set), p).unwrap(), set);
        assert!(parse_landmarks("1 2 3\n", p).unwrap_err().to_string().contains("m.txt:1"));
    }

    #[test]
    fn fusion_config_keys() {
        let p = Path::new("f.txt");
        let kv = KeyValues::parse("gamma = 1, 0.5\nbase_res=16\nmode=raw_levels\n", p).unwrap();
        let cfg = fusion_config_from(&kv, p).unwrap();
        assert_eq!(cfg.gamma, vec![1.0, 0.5]);
        assert_eq!(cfg.base_res, 16);
        assert_eq!(cfg.mode, crate::uvsplat::FusionMode::RawLevels);
        let kv = KeyValues::parse("gamma=1\nbogus=2\n", p).unwrap();
        assert!(kv.only(&FUSION_KEYS, p).unwrap_err().to_string().contains("f.txt:2"));
        assert!(KeyValues::parse("a=1\na=2\n", p).is_err());
    }

    #[test]
    fn scene_spec_keys() {
        let p = Path::new("s.txt");
        let kv = KeyValues::parse("shape=ellipsoid\na=1\nb=0.8\nc=1.2\nsubdiv=2\nfeatures=constant\nconstant=0.5\n", p).unwrap();
        let spec = scene_spec_from(&kv, p).unwrap();
        assert_eq!(spec.shape, Shape::Ellipsoid { a: 1.0, b: 0.8, c: 1.2, subdiv: 2 });
        assert_eq!(spec.feature_rule, FeatureRule::Constant(0.5));
        let kv = KeyValues::parse("shape=torus\n", p).unwrap();
        assert!(scene_spec_from(&kv, p).is_err());
    }
}
