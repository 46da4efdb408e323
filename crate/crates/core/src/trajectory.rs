//! Camera trajectories: timed keyframes of camera center and orientation,
//! interpolated linearly in position and spherically in orientation.
//!
//! The on-disk form is CSV with header `t,cx,cy,cz,qw,qx,qy,qz`, where
//! `(cx, cy, cz)` is the camera center in the world frame and `q` the unit
//! camera-to-world rotation. Loading converts each row to the `(R, T = −C)`
//! convention of [`CameraPose`].

use std::fmt::Write as _;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geometry::{look_at, CameraPose, Vec3};

pub const TRAJECTORY_HEADER: &str = "t,cx,cy,cz,qw,qx,qy,qz";

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub t: f64,
    pub center: Vec3,
    /// Camera-to-world rotation.
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    keyframes: Vec<Keyframe>,
}

impl Trajectory {
    /// Requires at least two keyframes with strictly increasing times.
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self> {
        if keyframes.len() < 2 {
            return Err(Error::input("trajectory needs at least two keyframes"));
        }
        for (i, k) in keyframes.iter().enumerate() {
            if !k.t.is_finite() || !k.center.iter().all(|c| c.is_finite()) {
                return Err(Error::input(format!("keyframe {i} is not finite")));
            }
            if i > 0 && !(k.t > keyframes[i - 1].t) {
                return Err(Error::input(format!(
                    "keyframe times must be strictly increasing (row {i}: {} after {})",
                    k.t,
                    keyframes[i - 1].t
                )));
            }
        }
        Ok(Trajectory { keyframes })
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn start(&self) -> f64 {
        self.keyframes[0].t
    }

    pub fn end(&self) -> f64 {
        self.keyframes[self.keyframes.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    /// Mean keyframe frequency in Hz.
    pub fn keyframe_rate(&self) -> f64 {
        (self.keyframes.len() - 1) as f64 / self.duration()
    }

    /// Interpolated pose at `t`; times within `tolerance` outside the
    /// keyframe range clamp to the end points, anything further is `None`.
    pub fn pose_at(&self, t: f64, tolerance: f64) -> Option<CameraPose> {
        let (start, end) = (self.start(), self.end());
        if !t.is_finite() || t < start - tolerance || t > end + tolerance {
            return None;
        }
        let tc = t.clamp(start, end);
        let i = self
            .keyframes
            .partition_point(|k| k.t <= tc)
            .clamp(1, self.keyframes.len() - 1);
        let (a, b) = (&self.keyframes[i - 1], &self.keyframes[i]);
        let s = (tc - a.t) / (b.t - a.t);
        let center = a.center.lerp(&b.center, s);
        let orientation = a
            .orientation
            .try_slerp(&b.orientation, s, 1e-12)
            .unwrap_or(a.orientation);
        Some(CameraPose::from_center(center, &orientation, t))
    }

    /// Least-squares point closest to every keyframe's optical axis, or
    /// `None` when the axes are (nearly) parallel.
    pub fn fixation_point(&self) -> Option<Vec3> {
        let mut a = Matrix3::zeros();
        let mut b = Vec3::zeros();
        for k in &self.keyframes {
            let d = k.orientation * Vec3::z();
            let m = Matrix3::identity() - d * d.transpose();
            a += m;
            b += m * k.center;
        }
        let eig = a.symmetric_eigen();
        let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        if !(lo > 1e-6 * hi) {
            return None;
        }
        a.cholesky().map(|c| c.solve(&b))
    }

    /// Same path traversed `factor` times faster.
    pub fn sped_up(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::input("speed multiplier must be positive"));
        }
        let t0 = self.start();
        Trajectory::new(
            self.keyframes
                .iter()
                .map(|k| Keyframe {
                    t: t0 + (k.t - t0) / factor,
                    ..k.clone()
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_HEADER);
        out.push('\n');
        for k in &self.keyframes {
            let q = k.orientation.quaternion();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                k.t, k.center.x, k.center.y, k.center.z, q.w, q.i, q.j, q.k
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::format("trajectory", "empty file"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != TRAJECTORY_HEADER.split(',').collect::<Vec<_>>() {
            return Err(Error::format(
                "trajectory",
                format!("expected header `{TRAJECTORY_HEADER}`, got `{header}`"),
            ));
        }
        let mut keyframes = Vec::new();
        for (row, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format("trajectory", format!("row {row}: {e}")))?;
            if vals.len() != 8 {
                return Err(Error::format(
                    "trajectory",
                    format!("row {row}: expected 8 fields, got {}", vals.len()),
                ));
            }
            let q = Quaternion::new(vals[4], vals[5], vals[6], vals[7]);
            let n = q.norm();
            if !((n - 1.0).abs() < 1e-6) {
                return Err(Error::format(
                    "trajectory",
                    format!("row {row}: quaternion norm {n} is not 1"),
                ));
            }
            keyframes.push(Keyframe {
                t: vals[0],
                center: Vec3::new(vals[1], vals[2], vals[3]),
                orientation: UnitQuaternion::new_normalize(q),
            });
        }
        Trajectory::new(keyframes)
            .map_err(|e| Error::format("trajectory", e.to_string()))
    }
}

/// Circular orbit about the vertical axis through `target`, camera looking
/// at `target`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OrbitSpec {
    pub radius: f64,
    pub loops: f64,
    /// Seconds for the whole path at speed multiplier 1.
    pub duration: f64,
    /// Camera height above `target`.
    pub height: f64,
    pub target: [f64; 3],
    pub keyframes_per_loop: usize,
    /// Start angle about +Y, radians; 0 places the camera at `target − radius·Z`.
    pub phase: f64,
}

impl Default for OrbitSpec {
    /// Two loops at 1 m radius over 17.27 s (518 frames at 30 fps).
    fn default() -> Self {
        OrbitSpec {
            radius: 1.0,
            loops: 2.0,
            duration: 17.27,
            height: 0.0,
            target: [0.0; 3],
            keyframes_per_loop: 360,
            phase: 0.0,
        }
    }
}

impl OrbitSpec {
    pub fn build(&self) -> Result<Trajectory> {
        if !(self.radius > 0.0) {
            return Err(Error::input("orbit radius must be positive"));
        }
        if !(self.loops > 0.0) {
            return Err(Error::input("orbit needs a positive number of loops"));
        }
        if !(self.duration > 0.0) {
            return Err(Error::input("orbit duration must be positive"));
        }
        if self.keyframes_per_loop < 4 {
            return Err(Error::input("orbit needs at least 4 keyframes per loop"));
        }
        let target = Vec3::from(self.target);
        let n = (self.loops * self.keyframes_per_loop as f64).ceil() as usize;
        let mut keyframes = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let angle = self.phase + std::f64::consts::TAU * self.loops * s;
            let center = target
                + Vec3::new(
                    self.radius * angle.sin(),
                    self.height,
                    -self.radius * angle.cos(),
                );
            keyframes.push(Keyframe {
                t: s * self.duration,
                center,
                orientation: look_at(&center, &target, &Vec3::y())?,
            });
        }
        Trajectory::new(keyframes)
    }
}
