//! Slow scalar-loop reference implementations used to cross-check the fast
//! paths. Nothing here shares code with `uvsplat` beyond the input types.

use crate::error::{Error, Result};
use crate::geometry::{Camera, Vec3};
use crate::raster::GBuffer;
use crate::uvsplat::{FeatureMap, FusionConfig, FusionMode};

pub const ORACLE_MAX_RES: usize = 8;
pub const ORACLE_MAX_VIEWS: usize = 3;
pub const ORACLE_MAX_LEVELS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleFusion {
    pub res: usize,
    pub channels: usize,
    pub features: Vec<f64>,
    pub total_weight: Vec<f64>,
}

fn tent(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

/// Weight that a sample at `uv` puts on texel `(i, j)` of a `res²` grid.
fn splat_weight(u: f64, v: f64, i: usize, j: usize, res: usize) -> f64 {
    let r = res as f64;
    tent(u * r - 0.5 - i as f64) * tent(v * r - 0.5 - j as f64)
}

/// Weight of source cell `s` when resampling destination cell `i` from `src`
/// cells to `dst` cells along one axis, clamped at the borders.
fn resample_weight(i: usize, dst: usize, s: usize, src: usize) -> f64 {
    let x = (i as f64 + 0.5) * src as f64 / dst as f64 - 0.5;
    let x = x.max(0.0).min((src - 1) as f64);
    tent(x - s as f64)
}

fn resample_at(map: &[f64], src: usize, dst: usize, x: usize, y: usize, ch: usize, channels: usize) -> f64 {
    let mut acc = 0.0;
    for sy in 0..src {
        let wy = resample_weight(y, dst, sy, src);
        if wy == 0.0 {
            continue;
        }
        for sx in 0..src {
            let wx = resample_weight(x, dst, sx, src);
            if wx == 0.0 {
                continue;
            }
            acc += wy * wx * map[(sy * src + sx) * channels + ch];
        }
    }
    acc
}

fn view_direction_score(gb: &GBuffer, cam: &Camera, p: usize) -> f64 {
    let px = (p % gb.width) as f64 + 0.5;
    let py = (p / gb.width) as f64 + 0.5;
    let z = gb.depth[p];
    let xc = Vec3::new((px - cam.cx) / cam.fx * z, (py - cam.cy) / cam.fy * z, z);
    // world = Rᵀ (x_cam − t), eye = −Rᵀ t
    let mut world = Vec3::zeros();
    let mut eye = Vec3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            world[a] += cam.rotation[(b, a)] * (xc[b] - cam.translation[b]);
            eye[a] -= cam.rotation[(b, a)] * cam.translation[b];
        }
    }
    let d = eye - world;
    let len = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
    if len == 0.0 {
        return 0.0;
    }
    let n = gb.normal[p];
    ((n.x * d.x + n.y * d.y + n.z * d.z) / len).max(0.0)
}

struct Level {
    res: usize,
    u: Vec<f64>,
    d: Vec<f64>,
    c: Vec<f64>,
}

fn splat_all(gb: &GBuffer, cam: &Camera, f: &FeatureMap, res: usize) -> Level {
    let ch = f.channels();
    let mut u = vec![0.0; res * res * ch];
    let mut d = vec![0.0; res * res];
    let mut c = vec![0.0; res * res];
    for p in 0..gb.width * gb.height {
        if !gb.mask[p] {
            continue;
        }
        let score = view_direction_score(gb, cam, p);
        let (pu, pv) = (gb.uv[p].x, gb.uv[p].y);
        for j in 0..res {
            for i in 0..res {
                let w = splat_weight(pu, pv, i, j, res);
                if w == 0.0 {
                    continue;
                }
                let t = j * res + i;
                d[t] += w;
                c[t] += w * score;
                for k in 0..ch {
                    u[t * ch + k] += w * f.data()[p * ch + k];
                }
            }
        }
    }
    Level { res, u, d, c }
}

fn div_or_zero(num: f64, den: f64, eps: f64) -> f64 {
    if den > eps {
        num / den
    } else {
        0.0
    }
}

/// Coarse-to-fine fill of one view, texel by texel. Returns the finest
/// (features, weight, mean confidence).
fn fill_view(levels: &[Level], ch: usize, cfg: &FusionConfig) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let eps = cfg.epsilon;
    let last = levels.len() - 1;
    let lv = &levels[last];
    let n = lv.res * lv.res;
    let mut feat = vec![0.0; n * ch];
    let mut conf = vec![0.0; n];
    let mut omega = lv.d.clone();
    for t in 0..n {
        for k in 0..ch {
            feat[t * ch + k] = div_or_zero(lv.u[t * ch + k], lv.d[t], eps);
        }
        conf[t] = div_or_zero(lv.c[t], lv.d[t], eps);
    }
    for l in (0..last).rev() {
        let lv = &levels[l];
        let (src, dst) = (levels[l + 1].res, lv.res);
        let area = (src as f64 / dst as f64).powi(2);
        let wf: Vec<f64> = (0..src * src * ch).map(|i| omega[i / ch] * feat[i]).collect();
        let wc: Vec<f64> = (0..src * src).map(|i| omega[i] * conf[i]).collect();
        let mut nf = vec![0.0; dst * dst * ch];
        let mut nc = vec![0.0; dst * dst];
        let mut nw = vec![0.0; dst * dst];
        for y in 0..dst {
            for x in 0..dst {
                let t = y * dst + x;
                let d = lv.d[t];
                let alpha = (d / cfg.density_tau).min(1.0);
                let support = resample_at(&omega, src, dst, x, y, 0, 1);
                if support > 0.0 {
                    for k in 0..ch {
                        let own = div_or_zero(lv.u[t * ch + k], d, eps);
                        let coarse = resample_at(&wf, src, dst, x, y, k, ch) / support;
                        nf[t * ch + k] = alpha * own + (1.0 - alpha) * coarse;
                    }
                    let own = div_or_zero(lv.c[t], d, eps);
                    nc[t] = alpha * own + (1.0 - alpha) * resample_at(&wc, src, dst, x, y, 0, 1) / support;
                    nw[t] = alpha * d + (1.0 - alpha) * support * area;
                } else {
                    for k in 0..ch {
                        nf[t * ch + k] = div_or_zero(lv.u[t * ch + k], d, eps);
                    }
                    nc[t] = div_or_zero(lv.c[t], d, eps);
                    nw[t] = d;
                }
            }
        }
        feat = nf;
        conf = nc;
        omega = nw;
    }
    (feat, omega, conf)
}

/// Reference fusion of tiny instances: brute-force splatting over every texel,
/// texel-wise hole filling and the weighted average, in either fusion mode.
pub fn oracle_fuse(
    views: &[(&GBuffer, &Camera, &FeatureMap)],
    config: &FusionConfig,
) -> Result<OracleFusion> {
    config.validate()?;
    let res = config.base_res;
    if res > ORACLE_MAX_RES || views.len() > ORACLE_MAX_VIEWS || config.num_levels > ORACLE_MAX_LEVELS {
        return Err(Error::InvalidInput(format!(
            "oracle instance too large: res {res}, {} views, {} levels (limits {ORACLE_MAX_RES}, {ORACLE_MAX_VIEWS}, {ORACLE_MAX_LEVELS})",
            views.len(),
            config.num_levels
        )));
    }
    if views.is_empty() || views.len() != config.gamma.len() {
        return Err(Error::InvalidInput("oracle needs one gamma per view".into()));
    }
    let ch = views[0].2.channels();
    let mut level_res = Vec::new();
    let mut r = res;
    while level_res.len() < config.num_levels && r >= 1 {
        level_res.push(r);
        r /= 2;
    }
    let eps = config.epsilon;
    let n = res * res;
    let mut num = vec![0.0; n * ch];
    let mut total = vec![0.0; n];
    for (k, &(gb, cam, f)) in views.iter().enumerate() {
        let g = config.gamma[k];
        let levels: Vec<Level> = level_res.iter().map(|&r| splat_all(gb, cam, f, r)).collect();
        match config.mode {
            FusionMode::HoleFilled => {
                let (feat, omega, conf) = fill_view(&levels, ch, config);
                for t in 0..n {
                    let w = g * conf[t] * omega[t];
                    total[t] += w;
                    for c in 0..ch {
                        num[t * ch + c] += w * feat[t * ch + c];
                    }
                }
            }
            FusionMode::RawLevels => {
                for lv in &levels {
                    let area = (lv.res as f64 / res as f64).powi(2);
                    let mean_c: Vec<f64> = (0..lv.res * lv.res).map(|t| div_or_zero(lv.c[t], lv.d[t], eps)).collect();
                    for y in 0..res {
                        for x in 0..res {
                            let t = y * res + x;
                            let cw = g * area * resample_at(&mean_c, lv.res, res, x, y, 0, 1);
                            total[t] += cw * resample_at(&lv.d, lv.res, res, x, y, 0, 1);
                            for c in 0..ch {
                                num[t * ch + c] += cw * resample_at(&lv.u, lv.res, res, x, y, c, ch);
                            }
                        }
                    }
                }
            }
        }
    }
    let features = (0..n * ch).map(|i| div_or_zero(num[i], total[i / ch], eps)).collect();
    Ok(OracleFusion {
        res,
        channels: ch,
        features,
        total_weight: total,
    })
}

/// Largest relative error between `grad[i]` and the central difference of `f`
/// at `x` along each coordinate in `coords`. The relative error is
/// `|a − n| / max(|a|, |n|, floor)`.
pub fn oracle_gradcheck<F>(f: F, x: &[f64], grad: &[f64], coords: &[usize], h: f64, floor: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let a = grad[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}
