use rayon::prelude::*;

use super::fill::FillChain;
use super::{
    bilinear_taps, build_pyramid, guarded_ratio, hole_fill, upsample, upsample_adjoint, FeatureMap,
    FilledView, FusionConfig, FusionMode, UVPyramid,
};
use crate::error::{check_len, Error, Result};
use crate::geometry::{Camera, Vec2};
use crate::raster::GBuffer;

/// One observed view: geometry from rasterization plus its pixel features.
#[derive(Clone, Copy, Debug)]
pub struct ViewInput<'a> {
    pub gbuffer: &'a GBuffer,
    pub camera: &'a Camera,
    pub features: &'a FeatureMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionOutput {
    pub res: usize,
    pub channels: usize,
    /// Canonical UV features, `res × res × channels`.
    pub features: Vec<f64>,
    /// Sum of fusion weights over views (and levels).
    pub total_weight: Vec<f64>,
    /// Texels whose total weight exceeded epsilon; all others are zero.
    pub coverage: Vec<bool>,
}

impl FusionOutput {
    pub fn texel(&self, t: usize) -> &[f64] {
        &self.features[t * self.channels..(t + 1) * self.channels]
    }

    /// Texels whose fused feature vector is identically zero.
    pub fn zero_output_count(&self) -> usize {
        self.features
            .chunks(self.channels)
            .filter(|f| f.iter().all(|&v| v == 0.0))
            .count()
    }
}

/// Per-view linear coefficients mapping level sums to the fused map.
#[derive(Clone, Debug)]
enum ViewChain {
    /// `fused += ratio ⊙ fill(normalize(levels))`
    Filled { chain: FillChain, ratio: Vec<f64> },
    /// `fused += Σ_l q[l] ⊙ up_l(sums_l)`
    Raw { q: Vec<Vec<f64>> },
}

#[derive(Clone, Debug)]
struct ViewTape {
    width: usize,
    height: usize,
    /// Covered pixels and their UV coordinates, in pixel-major order.
    pixels: Vec<(usize, Vec2)>,
    level_res: Vec<usize>,
    chain: ViewChain,
}

/// Recorded geometry of a fusion forward pass. The fused map is linear in the
/// pixel features with coefficients fixed here.
#[derive(Clone, Debug)]
pub struct FusionTape {
    res: usize,
    channels: usize,
    views: Vec<ViewTape>,
}

fn check_views(pyramids: &[&UVPyramid], config: &FusionConfig) -> Result<(usize, usize, usize)> {
    config.validate()?;
    let first = pyramids
        .first()
        .ok_or_else(|| Error::InvalidInput("fusion needs at least one view".into()))?;
    check_len("view priors (gamma)", pyramids.len(), config.gamma.len())?;
    let (res, levels, channels) = (first.levels[0].res, first.levels.len(), first.channels);
    for (k, p) in pyramids.iter().enumerate() {
        if p.levels[0].res != res || p.levels.len() != levels || p.channels != channels {
            return Err(Error::InvalidInput(format!(
                "view {k} pyramid shape ({}, {} levels, {} channels) differs from view 0 ({res}, {levels}, {channels})",
                p.levels[0].res,
                p.levels.len(),
                p.channels
            )));
        }
    }
    Ok((res, levels, channels))
}

/// Level-`l` confidence normalized by density, upsampled to the base resolution
/// and scaled to base-texel area, together with the matching density.
fn raw_level_terms(pyramid: &UVPyramid, l: usize, res: usize, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
    let lv = &pyramid.levels[l];
    let mean_conf: Vec<f64> = lv
        .c
        .iter()
        .zip(&lv.d)
        .map(|(c, d)| guarded_ratio(*c, *d, epsilon))
        .collect();
    let area = (lv.res as f64 / res as f64).powi(2);
    let conf = upsample(&mean_conf, lv.res, res, 1)
        .into_iter()
        .map(|c| c * area)
        .collect();
    let dens = upsample(&lv.d, lv.res, res, 1);
    (conf, dens)
}

fn view_chains(
    pyramids: &[&UVPyramid],
    filled: &[&FilledView],
    config: &FusionConfig,
    res: usize,
) -> (Vec<ViewChain>, Vec<f64>) {
    let texels = res * res;
    let eps = config.epsilon;
    match config.mode {
        FusionMode::HoleFilled => {
            let weights: Vec<Vec<f64>> = filled
                .iter()
                .zip(&config.gamma)
                .map(|(f, g)| {
                    f.confidence
                        .iter()
                        .zip(&f.weight)
                        .map(|(c, w)| g * c * w)
                        .collect()
                })
                .collect();
            let mut total = vec![0.0; texels];
            for w in &weights {
                for (t, v) in total.iter_mut().zip(w) {
                    *t += v;
                }
            }
            let chains = weights
                .into_iter()
                .zip(filled)
                .map(|(w, f)| ViewChain::Filled {
                    chain: f.chain.clone(),
                    ratio: w.iter().zip(&total).map(|(w, t)| guarded_ratio(*w, *t, eps)).collect(),
                })
                .collect();
            (chains, total)
        }
        FusionMode::RawLevels => {
            // numerator coefficient per (view, level) before normalization
            let mut coef: Vec<Vec<Vec<f64>>> = Vec::with_capacity(pyramids.len());
            let mut total = vec![0.0; texels];
            for (p, g) in pyramids.iter().zip(&config.gamma) {
                let mut per_level = Vec::with_capacity(p.levels.len());
                for l in 0..p.levels.len() {
                    let (conf, dens) = raw_level_terms(p, l, res, eps);
                    for t in 0..texels {
                        total[t] += g * conf[t] * dens[t];
                    }
                    per_level.push(conf.into_iter().map(|c| g * c).collect::<Vec<f64>>());
                }
                coef.push(per_level);
            }
            let chains = coef
                .into_iter()
                .map(|levels| ViewChain::Raw {
                    q: levels
                        .into_iter()
                        .map(|c| c.iter().zip(&total).map(|(c, t)| guarded_ratio(*c, *t, eps)).collect())
                        .collect(),
                })
                .collect();
            (chains, total)
        }
    }
}

fn fused_from_chains(
    chains: &[ViewChain],
    level_sums: &[Vec<&[f64]>],
    level_res: &[usize],
    res: usize,
    channels: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; res * res * channels];
    for (chain, sums) in chains.iter().zip(level_sums) {
        match chain {
            ViewChain::Filled { chain, ratio } => {
                let x: Vec<Vec<f64>> = sums
                    .iter()
                    .enumerate()
                    .map(|(l, s)| chain.normalize(l, s, channels))
                    .collect();
                let filled = chain.forward(&x, channels);
                for (i, (o, v)) in out.iter_mut().zip(&filled).enumerate() {
                    *o += ratio[i / channels] * v;
                }
            }
            ViewChain::Raw { q } => {
                for (l, s) in sums.iter().enumerate() {
                    let up = upsample(s, level_res[l], res, channels);
                    for (i, (o, v)) in out.iter_mut().zip(&up).enumerate() {
                        *o += q[l][i / channels] * v;
                    }
                }
            }
        }
    }
    out
}

/// Fuse per-view pyramids (and their hole-filled versions) into one UV map.
pub fn fuse(views: &[(&UVPyramid, &FilledView)], config: &FusionConfig) -> Result<FusionOutput> {
    let pyramids: Vec<&UVPyramid> = views.iter().map(|v| v.0).collect();
    let filled: Vec<&FilledView> = views.iter().map(|v| v.1).collect();
    let (res, _, channels) = check_views(&pyramids, config)?;
    let (chains, total) = view_chains(&pyramids, &filled, config, res);
    let level_res: Vec<usize> = pyramids[0].levels.iter().map(|l| l.res).collect();
    let sums: Vec<Vec<&[f64]>> = pyramids
        .iter()
        .map(|p| p.levels.iter().map(|l| l.u.as_slice()).collect())
        .collect();
    let features = fused_from_chains(&chains, &sums, &level_res, res, channels);
    Ok(finish(res, channels, features, total, config.epsilon))
}

fn finish(res: usize, channels: usize, features: Vec<f64>, total: Vec<f64>, epsilon: f64) -> FusionOutput {
    let coverage: Vec<bool> = total.iter().map(|&w| w > epsilon).collect();
    let uncovered = coverage.iter().filter(|c| !**c).count();
    if uncovered == coverage.len() {
        log::warn!("fused UV map has no covered texel");
    }
    FusionOutput {
        res,
        channels,
        features,
        total_weight: total,
        coverage,
    }
}

/// Full differentiable path: splat every view into its pyramid (views run in
/// parallel), hole-fill, fuse, and record what the backward pass needs.
pub fn fuse_views(views: &[ViewInput<'_>], config: &FusionConfig) -> Result<(FusionOutput, FusionTape)> {
    config.validate()?;
    let pyramids: Vec<UVPyramid> = views
        .par_iter()
        .map(|v| build_pyramid(v.gbuffer, v.camera, v.features, config))
        .collect::<Result<_>>()?;
    let filled: Vec<FilledView> = pyramids.par_iter().map(|p| hole_fill(p, config)).collect();
    let pyr_refs: Vec<&UVPyramid> = pyramids.iter().collect();
    let filled_refs: Vec<&FilledView> = filled.iter().collect();
    let (res, _, channels) = check_views(&pyr_refs, config)?;
    let (chains, total) = view_chains(&pyr_refs, &filled_refs, config, res);
    let level_res: Vec<usize> = pyramids[0].levels.iter().map(|l| l.res).collect();
    let sums: Vec<Vec<&[f64]>> = pyramids
        .iter()
        .map(|p| p.levels.iter().map(|l| l.u.as_slice()).collect())
        .collect();
    let features = fused_from_chains(&chains, &sums, &level_res, res, channels);
    let tape = FusionTape {
        res,
        channels,
        views: views
            .iter()
            .zip(chains)
            .map(|(v, chain)| ViewTape {
                width: v.gbuffer.width,
                height: v.gbuffer.height,
                pixels: v.gbuffer.covered().map(|p| (p, v.gbuffer.uv[p])).collect(),
                level_res: level_res.clone(),
                chain,
            })
            .collect(),
    };
    Ok((finish(res, channels, features, total, config.epsilon), tape))
}

impl FusionTape {
    pub fn res(&self) -> usize {
        self.res
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    fn check_features(&self, features: &[FeatureMap]) -> Result<()> {
        check_len("views", self.views.len(), features.len())?;
        for (v, f) in self.views.iter().zip(features) {
            if f.width() != v.width || f.height() != v.height || f.channels() != self.channels {
                return Err(Error::InvalidInput(format!(
                    "feature map {}x{}x{} does not match recorded view {}x{}x{}",
                    f.width(),
                    f.height(),
                    f.channels(),
                    v.width,
                    v.height,
                    self.channels
                )));
            }
        }
        Ok(())
    }

    /// Re-evaluate the fused map for new pixel features on the recorded
    /// geometry.
    pub fn forward(&self, features: &[FeatureMap]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        let c = self.channels;
        let sums: Vec<Vec<Vec<f64>>> = self
            .views
            .iter()
            .zip(features)
            .map(|(v, f)| {
                v.level_res
                    .iter()
                    .map(|&r| {
                        let mut u = vec![0.0; r * r * c];
                        for &(p, uv) in &v.pixels {
                            let fp = f.pixel(p);
                            for (t, w) in bilinear_taps(uv, r).iter() {
                                for (acc, x) in u[t * c..(t + 1) * c].iter_mut().zip(fp) {
                                    *acc += w * x;
                                }
                            }
                        }
                        u
                    })
                    .collect()
            })
            .collect();
        let sum_refs: Vec<Vec<&[f64]>> = sums
            .iter()
            .map(|levels| levels.iter().map(|l| l.as_slice()).collect())
            .collect();
        let chains: Vec<ViewChain> = self.views.iter().map(|v| v.chain.clone()).collect();
        Ok(fused_from_chains(
            &chains,
            &sum_refs,
            &self.views[0].level_res,
            self.res,
            c,
        ))
    }

    /// Exact adjoint of [`FusionTape::forward`]: pixel-feature gradients of
    /// every view given the gradient of the fused map.
    pub fn backward(&self, grad_out: &[f64]) -> Result<Vec<FeatureMap>> {
        let c = self.channels;
        check_len("fused-map gradient", self.res * self.res * c, grad_out.len())?;
        self.views
            .par_iter()
            .map(|v| {
                let level_grads: Vec<Vec<f64>> = match &v.chain {
                    ViewChain::Filled { chain, ratio } => {
                        let g: Vec<f64> = grad_out
                            .iter()
                            .enumerate()
                            .map(|(i, g)| ratio[i / c] * g)
                            .collect();
                        chain
                            .adjoint(&g, c)
                            .into_iter()
                            .enumerate()
                            .map(|(l, gx)| chain.normalize(l, &gx, c))
                            .collect()
                    }
                    ViewChain::Raw { q } => q
                        .iter()
                        .zip(&v.level_res)
                        .map(|(ql, &r)| {
                            let g: Vec<f64> = grad_out
                                .iter()
                                .enumerate()
                                .map(|(i, g)| ql[i / c] * g)
                                .collect();
                            upsample_adjoint(&g, r, self.res, c)
                        })
                        .collect(),
                };
                let mut out = vec![0.0; v.width * v.height * c];
                for &(p, uv) in &v.pixels {
                    let dst = &mut out[p * c..(p + 1) * c];
                    for (gl, &r) in level_grads.iter().zip(&v.level_res) {
                        for (t, w) in bilinear_taps(uv, r).iter() {
                            for (o, g) in dst.iter_mut().zip(&gl[t * c..(t + 1) * c]) {
                                *o += w * g;
                            }
                        }
                    }
                }
                FeatureMap::new(v.width, v.height, c, out)
            })
            .collect()
    }
}
