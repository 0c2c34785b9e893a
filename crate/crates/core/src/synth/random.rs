//! Random G-buffers, cameras and feature maps for property checks.

use rand::Rng;

use crate::geometry::{Camera, Vec2, Vec3};
use crate::raster::GBuffer;
use crate::uvsplat::FeatureMap;

/// A camera on a sphere of radius 4 looking at the origin.
pub fn random_camera<R: Rng>(rng: &mut R, width: usize, height: usize) -> Camera {
    loop {
        let dir = random_unit(rng);
        if dir.y.abs() > 0.95 {
            continue;
        }
        let f = width.max(height) as f64;
        if let Ok(cam) = Camera::look_at(dir * 4.0, Vec3::zeros(), f, f, width, height) {
            return cam;
        }
    }
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A G-buffer with each pixel covered with probability `coverage`. UVs are
/// drawn uniformly from `[lo, hi]²`, normals uniformly from the sphere and
/// depths from `[1, 5]`.
pub fn random_gbuffer<R: Rng>(rng: &mut R, width: usize, height: usize, coverage: f64, lo: f64, hi: f64) -> GBuffer {
    let mut gb = GBuffer::empty(width, height);
    for i in 0..width * height {
        if !rng.gen_bool(coverage) {
            continue;
        }
        let b = Vec3::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)) + Vec3::repeat(1e-3);
        let uv = Vec2::new(rng.gen_range(lo..=hi), rng.gen_range(lo..=hi));
        gb.set(i, rng.gen_range(0..16), b / b.sum(), uv, random_unit(rng), rng.gen_range(1.0..5.0));
    }
    gb
}

pub fn random_features<R: Rng>(rng: &mut R, width: usize, height: usize, channels: usize) -> FeatureMap {
    let data = (0..width * height * channels).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FeatureMap::new(width, height, channels, data).expect("dimensions are positive")
}

/// One random view: G-buffer, camera and features of matching size.
pub fn random_view<R: Rng>(
    rng: &mut R,
    width: usize,
    height: usize,
    channels: usize,
    coverage: f64,
) -> (GBuffer, Camera, FeatureMap) {
    let gb = random_gbuffer(rng, width, height, coverage, 0.0, 1.0);
    let cam = random_camera(rng, width, height);
    let f = random_features(rng, width, height, channels);
    (gb, cam, f)
}
