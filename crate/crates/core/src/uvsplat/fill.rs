use super::{guarded_ratio, FusionConfig, UVPyramid};

/// 1D clamp-to-edge linear stencil of destination cell `i` (of `dst`) on a
/// source axis of `src` cells, both with centers at `(k + 0.5) / n`.
fn axis_taps(i: usize, dst: usize, src: usize) -> [(usize, f64); 2] {
    // x = (i + 0.5) / dst * src - 0.5, kept exact when src == dst
    let x = ((2 * i + 1) as f64 * src as f64 - dst as f64) / (2 * dst) as f64;
    let x = x.clamp(0.0, (src - 1) as f64);
    let x0 = (x.floor() as usize).min(src - 1);
    let x1 = (x0 + 1).min(src - 1);
    let t = x - x0 as f64;
    [(x0, 1.0 - t), (x1, t)]
}

/// Bilinear resampling of a `src_res²` map to `dst_res²`, clamped at the
/// borders. Weights at every destination texel sum to one.
pub fn upsample(src: &[f64], src_res: usize, dst_res: usize, channels: usize) -> Vec<f64> {
    debug_assert_eq!(src.len(), src_res * src_res * channels);
    let cols: Vec<_> = (0..dst_res).map(|i| axis_taps(i, dst_res, src_res)).collect();
    let mut out = vec![0.0; dst_res * dst_res * channels];
    for (y, ty) in cols.iter().enumerate() {
        for (x, tx) in cols.iter().enumerate() {
            let dst = &mut out[(y * dst_res + x) * channels..(y * dst_res + x + 1) * channels];
            for &(sy, wy) in ty {
                for &(sx, wx) in tx {
                    let w = wy * wx;
                    if w == 0.0 {
                        continue;
                    }
                    let s = (sy * src_res + sx) * channels;
                    for (o, v) in dst.iter_mut().zip(&src[s..s + channels]) {
                        *o += w * v;
                    }
                }
            }
        }
    }
    out
}

/// Transpose of [`upsample`].
pub fn upsample_adjoint(grad_dst: &[f64], src_res: usize, dst_res: usize, channels: usize) -> Vec<f64> {
    debug_assert_eq!(grad_dst.len(), dst_res * dst_res * channels);
    let cols: Vec<_> = (0..dst_res).map(|i| axis_taps(i, dst_res, src_res)).collect();
    let mut out = vec![0.0; src_res * src_res * channels];
    for (y, ty) in cols.iter().enumerate() {
        for (x, tx) in cols.iter().enumerate() {
            let g = &grad_dst[(y * dst_res + x) * channels..(y * dst_res + x + 1) * channels];
            for &(sy, wy) in ty {
                for &(sx, wx) in tx {
                    let w = wy * wx;
                    if w == 0.0 {
                        continue;
                    }
                    let s = (sy * src_res + sx) * channels;
                    for (o, v) in out[s..s + channels].iter_mut().zip(g) {
                        *o += w * v;
                    }
                }
            }
        }
    }
    out
}

/// Geometry-only coefficients of the coarse-to-fine fill recursion
///
/// ```text
/// out[L-1] = a[L-1] · x[L-1]
/// out[l]   = a[l] · x[l] + b[l] · up(ω[l+1] · out[l+1])
/// ```
///
/// where `x[l]` is a density-normalized level value. With `α = min(1, D/τ)`
/// and `up(ω[l+1]) > 0`, `a = α` and `b = (1 − α) / up(ω[l+1])`, so the coarse
/// contribution is a coverage-weighted average of the coarse texels. Without
/// coarse support the level keeps its own value.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct FillChain {
    pub res: Vec<usize>,
    pub inv_d: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
}

impl FillChain {
    pub fn new(pyramid: &UVPyramid, config: &FusionConfig) -> Self {
        let levels = &pyramid.levels;
        let n = levels.len();
        let eps = config.epsilon;
        let res: Vec<usize> = levels.iter().map(|l| l.res).collect();
        let inv_d: Vec<Vec<f64>> = levels
            .iter()
            .map(|l| l.d.iter().map(|&d| guarded_ratio(1.0, d, eps)).collect())
            .collect();
        let mut a = vec![Vec::new(); n];
        let mut b = vec![Vec::new(); n];
        let mut omega = vec![Vec::new(); n];

        a[n - 1] = levels[n - 1].d.iter().map(|&d| if d > eps { 1.0 } else { 0.0 }).collect();
        b[n - 1] = vec![0.0; res[n - 1] * res[n - 1]];
        omega[n - 1] = levels[n - 1].d.clone();

        for l in (0..n - 1).rev() {
            let up_w = upsample(&omega[l + 1], res[l + 1], res[l], 1);
            let area = (res[l + 1] as f64 / res[l] as f64).powi(2);
            let d = &levels[l].d;
            let texels = res[l] * res[l];
            let (mut al, mut bl, mut wl) = (vec![0.0; texels], vec![0.0; texels], vec![0.0; texels]);
            for t in 0..texels {
                let alpha = (d[t] / config.density_tau).min(1.0);
                if up_w[t] > 0.0 {
                    al[t] = alpha;
                    bl[t] = (1.0 - alpha) / up_w[t];
                    wl[t] = alpha * d[t] + (1.0 - alpha) * up_w[t] * area;
                } else {
                    al[t] = if d[t] > eps { 1.0 } else { 0.0 };
                    wl[t] = d[t];
                }
            }
            a[l] = al;
            b[l] = bl;
            omega[l] = wl;
        }
        FillChain { res, inv_d, a, b, omega }
    }

    pub fn num_levels(&self) -> usize {
        self.res.len()
    }

    /// Density-normalize raw level sums: `x = sums / D` where observed.
    pub fn normalize(&self, level: usize, sums: &[f64], channels: usize) -> Vec<f64> {
        let inv = &self.inv_d[level];
        sums.iter()
            .enumerate()
            .map(|(i, v)| v * inv[i / channels])
            .collect()
    }

    /// Run the recursion on normalized level values; returns the finest output.
    pub fn forward(&self, x: &[Vec<f64>], channels: usize) -> Vec<f64> {
        let n = self.num_levels();
        let mut out: Vec<f64> = scale_rows(&x[n - 1], &self.a[n - 1], channels);
        for l in (0..n - 1).rev() {
            let carried = scale_rows(&out, &self.omega[l + 1], channels);
            let up = upsample(&carried, self.res[l + 1], self.res[l], channels);
            out = x[l]
                .iter()
                .zip(&up)
                .enumerate()
                .map(|(i, (xv, uv))| {
                    let t = i / channels;
                    self.a[l][t] * xv + self.b[l][t] * uv
                })
                .collect();
        }
        out
    }

    /// Transpose of [`FillChain::forward`]: gradients w.r.t. each level's
    /// normalized values given the gradient of the finest output.
    pub fn adjoint(&self, grad_out: &[f64], channels: usize) -> Vec<Vec<f64>> {
        let n = self.num_levels();
        let mut grads = vec![Vec::new(); n];
        let mut g = grad_out.to_vec();
        for l in 0..n - 1 {
            grads[l] = scale_rows(&g, &self.a[l], channels);
            let gb = scale_rows(&g, &self.b[l], channels);
            let up_t = upsample_adjoint(&gb, self.res[l + 1], self.res[l], channels);
            g = scale_rows(&up_t, &self.omega[l + 1], channels);
        }
        grads[n - 1] = scale_rows(&g, &self.a[n - 1], channels);
        grads
    }
}

fn scale_rows(values: &[f64], per_texel: &[f64], channels: usize) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v * per_texel[i / channels])
        .collect()
}

/// One view after coarse-to-fine hole filling, at the base resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct FilledView {
    pub res: usize,
    pub channels: usize,
    /// Filled, density-normalized features (`res × res × channels`).
    pub features: Vec<f64>,
    /// Filled effective density; zero exactly where no level observed the texel.
    pub weight: Vec<f64>,
    /// Filled mean confidence in `[0, 1]`.
    pub confidence: Vec<f64>,
    pub(crate) chain: FillChain,
}

impl FilledView {
    /// Texels with positive filled density.
    pub fn coverage(&self) -> Vec<bool> {
        self.weight.iter().map(|&w| w > 0.0).collect()
    }
}

pub fn hole_fill(pyramid: &UVPyramid, config: &FusionConfig) -> FilledView {
    let chain = FillChain::new(pyramid, config);
    let c = pyramid.channels;
    if pyramid
        .levels
        .iter()
        .all(|l| l.d.iter().all(|&d| d <= config.epsilon))
    {
        log::warn!("view has no UV coverage at any pyramid level");
    }
    let x: Vec<Vec<f64>> = pyramid
        .levels
        .iter()
        .enumerate()
        .map(|(l, lv)| chain.normalize(l, &lv.u, c))
        .collect();
    let xc: Vec<Vec<f64>> = pyramid
        .levels
        .iter()
        .enumerate()
        .map(|(l, lv)| chain.normalize(l, &lv.c, 1))
        .collect();
    let features = chain.forward(&x, c);
    let confidence = chain.forward(&xc, 1);
    FilledView {
        res: pyramid.levels[0].res,
        channels: c,
        features,
        weight: chain.omega[0].clone(),
        confidence,
        chain,
    }
}
