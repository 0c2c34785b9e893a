//! Portable float maps. Rows are stored bottom to top; this module always
//! writes little-endian (negative scale) and reads either byte order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::raster::NormalMap;

#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Top-to-bottom rows, channel-last.
    pub data: Vec<f32>,
}

pub fn encode_pfm(img: &FloatImage) -> Result<Vec<u8>> {
    let tag = match img.channels {
        3 => "PF",
        1 => "Pf",
        c => return Err(Error::InvalidInput(format!("PFM holds 1 or 3 channels, not {c}"))),
    };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row = img.width * img.channels;
    for y in (0..img.height).rev() {
        for x in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<FloatImage> {
    // header: three whitespace-terminated tokens after the tag
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, start, "truncated PFM header"));
        }
        tokens.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    // exactly one whitespace byte separates the header from the data
    pos += 1;
    let channels = match tokens[0].1.as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(Error::format(path, 0, "bad magic, expected PF or Pf")),
    };
    let num = |k: usize| -> Result<usize> {
        tokens[k]
            .1
            .parse()
            .map_err(|_| Error::format(path, tokens[k].0, format!("bad dimension `{}`", tokens[k].1)))
    };
    let (width, height) = (num(1)?, num(2)?);
    let scale: f32 = tokens[3]
        .1
        .parse()
        .map_err(|_| Error::format(path, tokens[3].0, "bad scale"))?;
    let little = scale < 0.0;
    let count = width * height * channels;
    if bytes.len() < pos || bytes.len() - pos != 4 * count {
        return Err(Error::format(
            path,
            pos.min(bytes.len()),
            format!("payload is {} bytes, expected {}", bytes.len().saturating_sub(pos), 4 * count),
        ));
    }
    let row = width * channels;
    let mut data = vec![0.0f32; count];
    for (i, c) in bytes[pos..].chunks_exact(4).enumerate() {
        let b: [u8; 4] = c.try_into().unwrap();
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        if !v.is_finite() {
            return Err(Error::format(path, pos + 4 * i, "value is not finite"));
        }
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(FloatImage {
        width,
        height,
        channels,
        data,
    })
}

pub fn save_pfm(path: &Path, img: &FloatImage) -> Result<()> {
    std::fs::write(path, encode_pfm(img)?).map_err(|e| Error::io(path, e))
}

pub fn load_pfm(path: &Path) -> Result<FloatImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn normal_map_to_image(map: &NormalMap) -> FloatImage {
    FloatImage {
        width: map.width,
        height: map.height,
        channels: 3,
        data: map
            .normals
            .iter()
            .zip(&map.mask)
            .flat_map(|(n, &m)| if m { [n.x as f32, n.y as f32, n.z as f32] } else { [0.0; 3] })
            .collect(),
    }
}

/// Normal map from a 3-channel image; zero pixels are background.
pub fn image_to_normal_map(img: &FloatImage, path: &Path) -> Result<NormalMap> {
    if img.channels != 3 {
        return Err(Error::format(path, 0, "normal maps need 3 channels"));
    }
    let normals = img
        .data
        .chunks(3)
        .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    Ok(NormalMap::from_normals(img.width, img.height, normals))
}
