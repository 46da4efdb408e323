//! Wavefront OBJ subset: `v` lines and triangular `f` lines. Other
//! statements (normals, texture coordinates, groups, materials) are skipped.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{TriMesh, Vec3};

pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::with_capacity(40 * (mesh.vertices.len() + mesh.faces.len()));
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        let err = |d: &str| Error::format("obj", format!("line {}: {d}", lineno + 1));
        match tok.next() {
            Some("v") => {
                let mut c = [0.0f64; 3];
                for slot in &mut c {
                    *slot = tok
                        .next()
                        .ok_or_else(|| err("vertex needs 3 coordinates"))?
                        .parse()
                        .map_err(|_| err("bad vertex coordinate"))?;
                }
                vertices.push(Vec3::from(c));
            }
            Some("f") => {
                let idx = tok
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| err("bad face index"))?;
                        let n = vertices.len() as i64;
                        let resolved = if i > 0 { i - 1 } else { n + i };
                        if i == 0 || resolved < 0 || resolved >= n {
                            return Err(err("face index out of range"));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() != 3 {
                    return Err(err("only triangular faces are supported"));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces).map_err(|e| Error::format("obj", e.to_string()))
}
