use super::{FeatureMap, FusionConfig};
use crate::error::{check_len, Error, Result};
use crate::geometry::{Camera, Vec2};
use crate::raster::GBuffer;

/// Up to four (texel index, weight) pairs of a bilinear stencil. Taps landing
/// outside the map are dropped, as are taps with zero weight.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
    len: usize,
}

impl Taps {
    fn push(&mut self, index: usize, weight: f64) {
        self.index[self.len] = index;
        self.weight[self.len] = weight;
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(|k| (self.index[k], self.weight[k]))
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight[..self.len].iter().sum()
    }
}

/// Bilinear stencil of `uv` on a `res × res` grid with texel centers at
/// `(i + 0.5) / res`.
pub fn bilinear_taps(uv: Vec2, res: usize) -> Taps {
    let x = uv.x * res as f64 - 0.5;
    let y = uv.y * res as f64 - 0.5;
    let x0 = x.floor();
    let y0 = y.floor();
    let tx = x - x0;
    let ty = y - y0;
    let mut taps = Taps::default();
    let corners = [
        (x0, y0, (1.0 - tx) * (1.0 - ty)),
        (x0 + 1.0, y0, tx * (1.0 - ty)),
        (x0, y0 + 1.0, (1.0 - tx) * ty),
        (x0 + 1.0, y0 + 1.0, tx * ty),
    ];
    let limit = res as f64;
    for (cx, cy, w) in corners {
        if w == 0.0 || cx < 0.0 || cy < 0.0 || cx >= limit || cy >= limit {
            continue;
        }
        taps.push(cy as usize * res + cx as usize, w);
    }
    taps
}

/// Splatted feature sums `u` (`res × res × channels`) and density `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatLevel {
    pub res: usize,
    pub channels: usize,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
}

fn check_view(gbuffer: &GBuffer, features: &FeatureMap) -> Result<()> {
    if features.width() != gbuffer.width || features.height() != gbuffer.height {
        return Err(Error::InvalidInput(format!(
            "feature map is {}x{} but the G-buffer is {}x{}",
            features.width(),
            features.height(),
            gbuffer.width,
            gbuffer.height
        )));
    }
    Ok(())
}

pub fn splat_level(gbuffer: &GBuffer, features: &FeatureMap, res: usize) -> Result<SplatLevel> {
    check_view(gbuffer, features)?;
    if res < 1 {
        return Err(Error::InvalidInput("splat resolution must be at least 1".into()));
    }
    let c = features.channels();
    let mut u = vec![0.0; res * res * c];
    let mut d = vec![0.0; res * res];
    for p in gbuffer.covered() {
        let f = features.pixel(p);
        for (t, w) in bilinear_taps(gbuffer.uv[p], res).iter() {
            d[t] += w;
            for (acc, x) in u[t * c..(t + 1) * c].iter_mut().zip(f) {
                *acc += w * x;
            }
        }
    }
    Ok(SplatLevel { res, channels: c, u, d })
}

/// `max(0, n · v)` at a covered pixel, with `v` the unit direction from the
/// surface point toward the camera center.
pub fn confidence_score(gbuffer: &GBuffer, camera: &Camera, index: usize) -> f64 {
    let point = gbuffer.surface_point(camera, index);
    let to_eye = camera.center() - point;
    let len = to_eye.norm();
    if len == 0.0 {
        return 0.0;
    }
    gbuffer.normal[index].dot(&(to_eye / len)).max(0.0)
}

pub fn splat_confidence(gbuffer: &GBuffer, camera: &Camera, res: usize) -> Result<Vec<f64>> {
    if camera.width != gbuffer.width || camera.height != gbuffer.height {
        return Err(Error::InvalidInput(format!(
            "camera is {}x{} but the G-buffer is {}x{}",
            camera.width, camera.height, gbuffer.width, gbuffer.height
        )));
    }
    if res < 1 {
        return Err(Error::InvalidInput("splat resolution must be at least 1".into()));
    }
    let mut conf = vec![0.0; res * res];
    for p in gbuffer.covered() {
        let s = confidence_score(gbuffer, camera, p);
        if s == 0.0 {
            continue;
        }
        for (t, w) in bilinear_taps(gbuffer.uv[p], res).iter() {
            conf[t] += w * s;
        }
    }
    Ok(conf)
}

/// Resolutions `base_res / 2^l` for as many of the requested levels as stay
/// at least one texel wide. The flag reports whether levels were dropped.
pub fn level_resolutions(base_res: usize, num_levels: usize) -> (Vec<usize>, bool) {
    let res: Vec<usize> = (0..num_levels)
        .map_while(|l| {
            let r = base_res.checked_shr(l as u32).unwrap_or(0);
            (r >= 1).then_some(r)
        })
        .collect();
    let reduced = res.len() < num_levels;
    (res, reduced)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PyramidLevel {
    pub res: usize,
    /// Feature sums, `res × res × channels`.
    pub u: Vec<f64>,
    /// Density, `res × res`.
    pub d: Vec<f64>,
    /// Confidence sums, `res × res`.
    pub c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UVPyramid {
    pub base_res: usize,
    pub channels: usize,
    pub levels: Vec<PyramidLevel>,
}

impl UVPyramid {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
}

/// Splat features, density and confidence independently at every level.
pub fn build_pyramid(
    gbuffer: &GBuffer,
    camera: &Camera,
    features: &FeatureMap,
    config: &FusionConfig,
) -> Result<UVPyramid> {
    config.validate()?;
    check_len("G-buffer pixels", features.width() * features.height(), gbuffer.len())?;
    let (resolutions, reduced) = level_resolutions(config.base_res, config.num_levels);
    if reduced {
        log::warn!(
            "base resolution {} supports only {} of {} pyramid levels",
            config.base_res,
            resolutions.len(),
            config.num_levels
        );
    }
    let mut levels = Vec::with_capacity(resolutions.len());
    for res in resolutions {
        let SplatLevel { u, d, .. } = splat_level(gbuffer, features, res)?;
        let c = splat_confidence(gbuffer, camera, res)?;
        levels.push(PyramidLevel { res, u, d, c });
    }
    Ok(UVPyramid {
        base_res: config.base_res,
        channels: features.channels(),
        levels,
    })
}
