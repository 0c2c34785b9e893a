//! Wavefront OBJ with `v`, `vt` and `f v/vt` records. Other records are
//! skipped; polygons are fan-triangulated.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{TriMesh, Vec2, Vec3};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjData {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub uv_corners: Vec<[Vec2; 3]>,
}

impl ObjData {
    pub fn into_mesh(self) -> Result<TriMesh> {
        TriMesh::from_geometry(self.vertices, self.faces, self.uv_corners)
    }
}

fn resolve_index(tok: &str, len: usize, what: &str) -> std::result::Result<usize, String> {
    let i: i64 = tok.parse().map_err(|_| format!("bad {what} index `{tok}`"))?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        len as i64 + i
    } else {
        return Err(format!("{what} index 0 is invalid"));
    };
    if idx < 0 || idx as usize >= len {
        return Err(format!("{what} index {i} out of range ({len} defined)"));
    }
    Ok(idx as usize)
}

fn floats<const N: usize>(rest: &[&str]) -> std::result::Result<[f64; N], String> {
    if rest.len() < N {
        return Err(format!("expected {N} numbers, found {}", rest.len()));
    }
    let mut out = [0.0f64; N];
    for (o, t) in out.iter_mut().zip(rest) {
        *o = t.parse().map_err(|_| format!("bad number `{t}`"))?;
        if !o.is_finite() {
            return Err(format!("non-finite number `{t}`"));
        }
    }
    Ok(out)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<ObjData> {
    let mut data = ObjData::default();
    let mut uvs: Vec<Vec2> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let toks: Vec<&str> = line.split_whitespace().collect();
        let Some((&head, rest)) = toks.split_first() else {
            continue;
        };
        let fail = |msg: String| Error::parse(path, ln + 1, msg);
        match head {
            "v" => {
                let [x, y, z] = floats::<3>(rest).map_err(fail)?;
                data.vertices.push(Vec3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = floats::<2>(rest).map_err(fail)?;
                uvs.push(Vec2::new(u, v));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(fail(format!("face needs at least 3 corners, found {}", rest.len())));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for tok in rest {
                    let mut parts = tok.split('/');
                    let v = resolve_index(parts.next().unwrap_or(""), data.vertices.len(), "vertex").map_err(fail)?;
                    let vt = match parts.next() {
                        Some(t) if !t.is_empty() => resolve_index(t, uvs.len(), "texture").map_err(fail)?,
                        _ => return Err(fail(format!("corner `{tok}` has no texture coordinate"))),
                    };
                    corners.push((v, vt));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    data.faces.push(tri.map(|c| c.0));
                    data.uv_corners.push(tri.map(|c| uvs[c.1]));
                }
            }
            _ => {}
        }
    }
    Ok(data)
}

pub fn load_obj(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let data = parse_obj(&text, path)?;
    data.into_mesh().map_err(|e| match e {
        Error::InvalidMesh(msg) => Error::parse(path, 0, msg),
        other => other,
    })
}

/// OBJ text for `positions` on the topology and UVs of `mesh`. Numbers use
/// the shortest representation that parses back to the same f64.
pub fn obj_string(mesh: &TriMesh, positions: &[Vec3]) -> String {
    let mut out = String::new();
    for p in positions {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    let mut uv_ids: HashMap<(u64, u64), usize> = HashMap::new();
    let mut uv_list = Vec::new();
    let corner_ids: Vec<[usize; 3]> = mesh
        .uv_corners()
        .iter()
        .map(|tri| {
            tri.map(|uv| {
                *uv_ids.entry((uv.x.to_bits(), uv.y.to_bits())).or_insert_with(|| {
                    uv_list.push(uv);
                    uv_list.len() - 1
                })
            })
        })
        .collect();
    for uv in &uv_list {
        let _ = writeln!(out, "vt {} {}", uv.x, uv.y);
    }
    for (f, t) in mesh.faces().iter().zip(&corner_ids) {
        let _ = writeln!(
            out,
            "f {}/{} {}/{} {}/{}",
            f[0] + 1,
            t[0] + 1,
            f[1] + 1,
            t[1] + 1,
            f[2] + 1,
            t[2] + 1
        );
    }
    out
}

pub fn save_obj(path: &Path, mesh: &TriMesh, positions: &[Vec3]) -> Result<()> {
    std::fs::write(path, obj_string(mesh, positions)).map_err(|e| Error::io(path, e))
}
