//! Shared geometric vocabulary: events, pinhole cameras, poses, rays,
//! triangle meshes, point clouds and dense voxel grids.
//!
//! # Conventions
//!
//! * World frame is right-handed with +Y up; lengths are meters.
//! * Camera frame: +X right, +Y down, +Z forward (optical axis).
//! * A [`CameraPose`] stores `R` (camera-from-world rotation) and `T` such that
//!   `X_C = R (X_W + T)`; equivalently `X_W = R⁻¹ X_C − T`, so the camera
//!   center in world coordinates is `−T`.
//! * Pixel `(x, y)` is the cell centered on the integer image coordinate; the
//!   sensor covers `[-0.5, width - 0.5) × [-0.5, height - 0.5)`. Events
//!   back-project through their exact integer coordinates.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Event polarity: sign of the log-brightness change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }
}

/// One asynchronous brightness-change record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    /// Seconds.
    pub t: f64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: f64, polarity: Polarity) -> Self {
        Event { x, y, t, polarity }
    }
}

/// Checks the stream-level invariants: coordinates inside the sensor,
/// finite non-negative timestamps sorted in non-decreasing order.
pub fn validate_stream(events: &[Event], width: u32, height: u32) -> Result<()> {
    let mut last = 0.0f64;
    for (i, e) in events.iter().enumerate() {
        if u32::from(e.x) >= width || u32::from(e.y) >= height {
            return Err(Error::input(format!(
                "event {i} at ({}, {}) outside {width}x{height} sensor",
                e.x, e.y
            )));
        }
        if !e.t.is_finite() || e.t < 0.0 {
            return Err(Error::input(format!("event {i} has invalid time {}", e.t)));
        }
        if e.t < last {
            return Err(Error::input(format!(
                "event {i} out of order ({} after {last})",
                e.t
            )));
        }
        last = e.t;
    }
    Ok(())
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(width: u32, height: u32, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let cam = CameraIntrinsics {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.width > u32::from(u16::MAX) || self.height > u32::from(u16::MAX) {
            return Err(Error::input(format!(
                "sensor size {}x{} not in 1..=65535",
                self.width, self.height
            )));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::input("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < f64::from(self.width)) || !(self.cy >= 0.0 && self.cy < f64::from(self.height)) {
            return Err(Error::input("principal point outside the sensor"));
        }
        Ok(())
    }

    /// The 640×480 pinhole used by the reference dataset.
    pub fn reference() -> Self {
        CameraIntrinsics {
            width: 640,
            height: 480,
            fx: 250.0,
            fy: 250.0,
            cx: 320.0,
            cy: 240.0,
        }
    }

    /// Same field of view at a different resolution.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let w = (f64::from(self.width) * factor).round() as u32;
        let h = (f64::from(self.height) * factor).round() as u32;
        CameraIntrinsics::new(
            w,
            h,
            self.fx * factor,
            self.fy * factor,
            self.cx * factor,
            self.cy * factor,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && u < f64::from(self.width) - 0.5 && v >= -0.5 && v < f64::from(self.height) - 0.5
    }

    /// `K⁻¹ [u, v, 1]ᵀ`.
    pub fn unproject(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// World-to-camera transform `X_C = R (X_W + T)` plus a timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    /// Camera-from-world rotation `R`.
    pub rotation: Matrix3<f64>,
    /// `T`; the camera center is `−T`.
    pub translation: Vec3,
    pub t: f64,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3, t: f64) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(ortho <= 1e-9) || !((det - 1.0).abs() <= 1e-9) {
            return Err(Error::input(format!(
                "rotation is not proper orthonormal (|RᵀR−I|∞ = {ortho:e}, det = {det})"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) || !t.is_finite() {
            return Err(Error::input("pose has non-finite translation or time"));
        }
        Ok(CameraPose {
            rotation,
            translation,
            t,
        })
    }

    /// Builds the pose of a camera at `center` whose camera-to-world
    /// orientation is `orientation`.
    pub fn from_center(center: Vec3, orientation: &UnitQuaternion<f64>, t: f64) -> Self {
        CameraPose {
            rotation: orientation.to_rotation_matrix().into_inner().transpose(),
            translation: -center,
            t,
        }
    }

    pub fn center(&self) -> Vec3 {
        -self.translation
    }

    /// Camera-to-world orientation.
    pub fn orientation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation.transpose()))
    }

    pub fn world_to_camera(&self, x_w: &Vec3) -> Vec3 {
        self.rotation * (x_w + self.translation)
    }
}

/// Camera-to-world orientation of a camera at `eye` looking at `target`, with
/// world `up` mapped to image-up (camera −Y).
pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<UnitQuaternion<f64>> {
    let forward = target - eye;
    let fwd_norm = forward.norm();
    if !(fwd_norm > 0.0) {
        return Err(Error::input("look-at target coincides with the eye"));
    }
    let z = forward / fwd_norm;
    let x = z.cross(up);
    let x_norm = x.norm();
    if !(x_norm > 1e-12) {
        return Err(Error::input("look-at direction parallel to up vector"));
    }
    let x = x / x_norm;
    let y = z.cross(&x);
    let m = Matrix3::from_columns(&[x, y, z]);
    Ok(UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; fails on a zero or non-finite direction.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::domain("ray direction must be non-zero and finite"));
        }
        Ok(Ray {
            origin,
            direction: direction / n,
        })
    }

    pub fn direction(&self) -> &Vec3 {
        &self.direction
    }

    pub fn at(&self, s: f64) -> Vec3 {
        self.origin + self.direction * s
    }
}

pub(crate) fn camera_ray(cam: &CameraIntrinsics, pose: &CameraPose, u: f64, v: f64) -> Ray {
    let d = pose.rotation.transpose() * cam.unproject(u, v);
    Ray {
        origin: pose.center(),
        direction: d.normalize(),
    }
}

/// Back-projects pixel `(u, v)` to its world-space viewing ray
/// `{ s R⁻¹ K⁻¹ [u, v, 1]ᵀ − T : s ≥ 0 }` with unit direction.
pub fn pixel_to_ray(cam: &CameraIntrinsics, pose: &CameraPose, px: (f64, f64)) -> Result<Ray> {
    let (u, v) = px;
    if !cam.contains(u, v) {
        return Err(Error::domain(format!(
            "pixel ({u}, {v}) outside {}x{} sensor",
            cam.width, cam.height
        )));
    }
    Ok(camera_ray(cam, pose, u, v))
}

/// World point at camera-space depth `depth` along pixel `(u, v)`.
pub fn back_project(cam: &CameraIntrinsics, pose: &CameraPose, px: (f64, f64), depth: f64) -> Vec3 {
    pose.rotation.transpose() * (cam.unproject(px.0, px.1) * depth) - pose.translation
}

/// Projects a world point; returns pixel coordinates and camera-space depth.
pub fn project_point(cam: &CameraIntrinsics, pose: &CameraPose, x_w: &Vec3) -> Result<((f64, f64), f64)> {
    let xc = pose.world_to_camera(x_w);
    if !(xc.z > 0.0) {
        return Err(Error::BehindCamera { depth: xc.z });
    }
    let u = cam.fx * xc.x / xc.z + cam.cx;
    let v = cam.fy * xc.y / xc.z + cam.cy;
    Ok(((u, v), xc.z))
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }

    /// Parametric overlap `[t0, t1]` of the ray with the box, if any.
    pub fn intersect_ray(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            let o = ray.origin[i];
            let d = ray.direction[i];
            if d == 0.0 {
                if o < self.min[i] || o > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut a, mut b) = ((self.min[i] - o) * inv, (self.max[i] - o) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// Triangle mesh with validated indices and no zero-area faces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Validates face indices and drops degenerate (zero-area) faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::input(format!("non-finite mesh vertex {v:?}")));
        }
        let mut kept = Vec::with_capacity(faces.len());
        for (i, f) in faces.into_iter().enumerate() {
            if f.iter().any(|&k| k >= n) {
                return Err(Error::input(format!(
                    "face {i} references vertex out of range ({f:?}, {n} vertices)"
                )));
            }
            let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
            if (b - a).cross(&(c - a)).norm() > 0.0 {
                kept.push(f);
            }
        }
        Ok(TriMesh {
            vertices,
            faces: kept,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume; positive for closed meshes with outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0)
            .sum()
    }

    /// Area-weighted centroid of the surface.
    pub fn surface_centroid(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let w = 0.5 * (b - a).cross(&(c - a)).norm();
            acc += (a + b + c) * (w / 3.0);
            total += w;
        }
        if total > 0.0 {
            acc / total
        } else {
            Vec3::zeros()
        }
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Appends another mesh, offsetting its indices.
    pub fn append(&mut self, other: &TriMesh) {
        let off = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
    }

    /// Number of undirected edges not shared by exactly two faces.
    pub fn boundary_edge_count(&self) -> usize {
        use std::collections::HashMap;
        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        count.values().filter(|&&c| c != 2).count()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec3> {
        self.points.iter()
    }
}

impl From<Vec<Vec3>> for PointCloud {
    fn from(points: Vec<Vec3>) -> Self {
        PointCloud { points }
    }
}

/// Placement of a dense cubic lattice: min corner, voxel edge and counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec3,
    pub pitch: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Vec3, pitch: f64, dims: [usize; 3]) -> Result<Self> {
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::input(format!("voxel pitch must be positive, got {pitch}")));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::input(format!("grid dims must be non-zero, got {dims:?}")));
        }
        if dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(Error::input("grid cell count overflows"));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::input("grid origin must be finite"));
        }
        Ok(GridSpec { origin, pitch, dims })
    }

    /// A cube of `edge` meters centered on `center`, `n` cells per axis.
    pub fn cube(center: Vec3, edge: f64, n: usize) -> Result<Self> {
        GridSpec::new(center - Vec3::repeat(edge / 2.0), edge / n as f64, [n, n, n])
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn linear_index(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    pub fn cell_coords(&self, linear: usize) -> [usize; 3] {
        let x = linear % self.dims[0];
        let rest = linear / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn bounds(&self) -> Aabb {
        let ext = Vec3::new(
            self.dims[0] as f64 * self.pitch,
            self.dims[1] as f64 * self.pitch,
            self.dims[2] as f64 * self.pitch,
        );
        Aabb {
            min: self.origin,
            max: self.origin + ext,
        }
    }

    pub fn cell_bounds(&self, idx: [usize; 3]) -> Aabb {
        let min = self.origin
            + Vec3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * self.pitch;
        Aabb {
            min,
            max: min + Vec3::repeat(self.pitch),
        }
    }

    pub fn cell_center(&self, idx: [usize; 3]) -> Vec3 {
        self.origin
            + Vec3::new(
                idx[0] as f64 + 0.5,
                idx[1] as f64 + 0.5,
                idx[2] as f64 + 0.5,
            ) * self.pitch
    }
}

/// Index of the half-open cell containing `x_w`, or `None` outside the grid.
pub fn world_to_voxel(spec: &GridSpec, x_w: &Vec3) -> Option<[usize; 3]> {
    let mut idx = [0usize; 3];
    for i in 0..3 {
        let f = ((x_w[i] - spec.origin[i]) / spec.pitch).floor();
        if !(f >= 0.0 && f < spec.dims[i] as f64) {
            return None;
        }
        idx[i] = f as usize;
    }
    Some(idx)
}

/// Dense voxel lattice holding one value per cell, X-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    pub spec: GridSpec,
    pub cells: Vec<T>,
}

impl<T: Clone> VoxelGrid<T> {
    pub fn filled(spec: GridSpec, value: T) -> Self {
        VoxelGrid {
            cells: vec![value; spec.cell_count()],
            spec,
        }
    }
}

impl<T> VoxelGrid<T> {
    pub fn from_cells(spec: GridSpec, cells: Vec<T>) -> Result<Self> {
        if cells.len() != spec.cell_count() {
            return Err(Error::input(format!(
                "grid expects {} cells, got {}",
                spec.cell_count(),
                cells.len()
            )));
        }
        Ok(VoxelGrid { spec, cells })
    }

    pub fn get(&self, idx: [usize; 3]) -> &T {
        &self.cells[self.spec.linear_index(idx)]
    }

    pub fn get_mut(&mut self, idx: [usize; 3]) -> &mut T {
        let i = self.spec.linear_index(idx);
        &mut self.cells[i]
    }

    pub fn dims(&self) -> [usize; 3] {
        self.spec.dims
    }
}
