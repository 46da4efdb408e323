//! Z-buffer rasterization of a mesh at pixel centers. Produces the same
//! coverage as casting one ray per pixel center, but in time proportional to
//! triangles plus covered pixels.
//!
//! Edge functions are evaluated in a canonical vertex order, and points
//! exactly on an edge are resolved by a fixed symbolic perturbation, so
//! triangles sharing an edge or a vertex never both miss a pixel center.

use crate::geometry::{CameraIntrinsics, CameraPose, TriMesh, Vec3};

/// Pixel window `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Rect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

/// Camera-space depth at every pixel center of `rect` (row-major over the
/// full sensor, `+∞` for misses). `None` when some vertex is not in front of
/// the camera, in which case callers fall back to ray casting.
pub(crate) fn rasterize_depth(mesh: &TriMesh, cam: &CameraIntrinsics, pose: &CameraPose, rect: Rect) -> Option<Vec<f32>> {
    let w = cam.width as usize;
    let mut depth = vec![f64::INFINITY; w * cam.height as usize];
    let mut proj = Vec::with_capacity(mesh.vertices.len());
    for v in &mesh.vertices {
        let c = pose.world_to_camera(v);
        if !(c.z > 1e-9) {
            return None;
        }
        proj.push(Vec3::new(cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy, c.z));
    }
    for f in &mesh.faces {
        raster_triangle(f, &proj, rect, w, &mut depth);
    }
    Some(depth.into_iter().map(|d| d as f32).collect())
}

#[inline]
fn edge(a: &Vec3, b: &Vec3, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

fn raster_triangle(f: &[usize; 3], proj: &[Vec3], rect: Rect, width: usize, depth: &mut [f64]) {
    let (p0, p1, p2) = (&proj[f[0]], &proj[f[1]], &proj[f[2]]);
    let area = edge(p0, p1, p2.x, p2.y);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let x_lo = p0.x.min(p1.x).min(p2.x).ceil().max(rect.x0 as f64);
    let x_hi = p0.x.max(p1.x).max(p2.x).floor().min(rect.x1 as f64 - 1.0);
    let y_lo = p0.y.min(p1.y).min(p2.y).ceil().max(rect.y0 as f64);
    let y_hi = p0.y.max(p1.y).max(p2.y).floor().min(rect.y1 as f64 - 1.0);
    if x_lo > x_hi || y_lo > y_hi {
        return;
    }
    let sigma = area.signum();
    // Edge k is opposite vertex k: (1,2), (2,0), (0,1).
    let pairs = [(f[1], f[2]), (f[2], f[0]), (f[0], f[1])];
    let edges: [(usize, usize, f64, f64); 3] = pairs.map(|(a, b)| {
        let (lo, hi, s) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let d = proj[hi] - proj[lo];
        // Sign of the edge function at p + ε(1, ε²): breaks exact ties.
        let tie = if d.y != 0.0 { -d.y.signum() } else { d.x.signum() };
        (lo, hi, sigma * s, tie)
    });
    let inv_z = [1.0 / p0.z, 1.0 / p1.z, 1.0 / p2.z];
    let inv_area = 1.0 / area;
    for y in y_lo as usize..=y_hi as usize {
        let py = y as f64;
        for x in x_lo as usize..=x_hi as usize {
            let px = x as f64;
            let mut b = [0.0f64; 3];
            let mut inside = true;
            for (k, &(lo, hi, sign, tie)) in edges.iter().enumerate() {
                let e = edge(&proj[lo], &proj[hi], px, py);
                let eff = if e != 0.0 { e } else { tie };
                if sign * eff <= 0.0 {
                    inside = false;
                    break;
                }
                b[k] = sign * sigma * e;
            }
            if !inside {
                continue;
            }
            let recip = (b[0] * inv_z[0] + b[1] * inv_z[1] + b[2] * inv_z[2]) * inv_area;
            let z = 1.0 / recip;
            let slot = &mut depth[y * width + x];
            if z < *slot {
                *slot = z;
            }
        }
    }
}
