//! 8-bit PNG previews.

use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, Rgb, Rgba};

use crate::anchor::RgbaImage;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::uvsplat::FeatureMap;

fn to_u8(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn dims(width: usize, height: usize) -> Result<(u32, u32)> {
    match (u32::try_from(width), u32::try_from(height)) {
        (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok((w, h)),
        _ => Err(Error::InvalidInput(format!("cannot write a {width}x{height} image"))),
    }
}

/// Write RGB values in [0, 1], row-major.
pub fn save_rgb(path: &Path, width: usize, height: usize, rgb: &[[f64; 3]]) -> Result<()> {
    crate::error::check_len("rgb pixels", width * height, rgb.len())?;
    let (w, h) = dims(width, height)?;
    let img = ImageBuffer::from_fn(w, h, |x, y| Rgb(rgb[(y * w + x) as usize].map(to_u8)));
    img.save_with_format(path, ImageFormat::Png).map_err(Into::into)
}

/// Write a premultiplied render as straight-alpha RGBA.
pub fn save_rgba(path: &Path, image: &RgbaImage) -> Result<()> {
    let (w, h) = dims(image.width, image.height)?;
    let img = ImageBuffer::from_fn(w, h, |x, y| {
        let [r, g, b, a] = image.pixels[(y * w + x) as usize];
        let un = |c: f64| if a > 0.0 { c / a } else { 0.0 };
        Rgba([to_u8(un(r)), to_u8(un(g)), to_u8(un(b)), to_u8(a)])
    });
    img.save_with_format(path, ImageFormat::Png).map_err(Into::into)
}

pub fn save_mask(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    crate::error::check_len("mask pixels", width * height, mask.len())?;
    let (w, h) = dims(width, height)?;
    let img = ImageBuffer::from_fn(w, h, |x, y| Luma([if mask[(y * w + x) as usize] { 255u8 } else { 0 }]));
    img.save_with_format(path, ImageFormat::Png).map_err(Into::into)
}

/// Normals mapped to colors by `(n + 1) / 2`; masked-out pixels are black.
pub fn save_normals(path: &Path, width: usize, height: usize, normals: &[Vec3], mask: &[bool]) -> Result<()> {
    let rgb: Vec<[f64; 3]> = normals
        .iter()
        .zip(mask)
        .map(|(n, &m)| if m { [(n.x + 1.0) / 2.0, (n.y + 1.0) / 2.0, (n.z + 1.0) / 2.0] } else { [0.0; 3] })
        .collect();
    save_rgb(path, width, height, &rgb)
}

/// First three channels (repeated when fewer), each min-max normalized.
pub fn save_features(path: &Path, map: &FeatureMap) -> Result<()> {
    let c = map.channels();
    let n = map.width() * map.height();
    let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 3];
    for (k, range) in ranges.iter_mut().enumerate() {
        let ch = k.min(c - 1);
        for i in 0..n {
            let v = map.pixel(i)[ch];
            range.0 = range.0.min(v);
            range.1 = range.1.max(v);
        }
    }
    let rgb: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let px = map.pixel(i);
            std::array::from_fn(|k| {
                let (lo, hi) = ranges[k];
                if hi > lo {
                    (px[k.min(c - 1)] - lo) / (hi - lo)
                } else {
                    0.0
                }
            })
        })
        .collect();
    save_rgb(path, map.width(), map.height(), &rgb)
}
