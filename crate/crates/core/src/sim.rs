//! Synthetic event camera: ray-casts an untextured mesh from a moving
//! pinhole camera and emits brightness-change events with a per-pixel
//! reference-level model, together with ground-truth contour labels derived
//! from rendered depth.
//!
//! Each pixel keeps the log intensity `L_ref` at which it last fired. When a
//! new sample moves the pixel to `L`, it emits `⌊|L − L_ref| / C⌋` events of
//! polarity `sign(L − L_ref)`. Event times are placed where the linearly
//! interpolated intensity between the two samples crosses each level, and
//! `L_ref` advances by the emitted multiples of `C`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::geometry::{camera_ray, project_point, CameraIntrinsics, CameraPose, Event, Polarity, TriMesh};
use crate::io::DepthImage;
use crate::raster::{rasterize_depth, Rect};
use crate::trajectory::Trajectory;

/// Static untextured subject in front of a uniform background.
#[derive(Debug, Clone)]
pub struct Scene {
    mesh: TriMesh,
    bvh: Bvh,
    pub log_intensity_fg: f64,
    pub log_intensity_bg: f64,
}

impl Scene {
    pub fn new(mesh: TriMesh, log_intensity_fg: f64, log_intensity_bg: f64) -> Result<Self> {
        if !(log_intensity_fg.is_finite() && log_intensity_bg.is_finite()) {
            return Err(Error::input("log intensities must be finite"));
        }
        if !((log_intensity_fg - log_intensity_bg).abs() > 0.0) {
            return Err(Error::input("foreground and background intensities must differ"));
        }
        let bvh = Bvh::build(&mesh);
        Ok(Scene {
            mesh,
            bvh,
            log_intensity_fg,
            log_intensity_bg,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    /// Scales the foreground contrast about the background level.
    pub fn illuminated(&self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::input("illumination scale must be positive"));
        }
        Ok(Scene {
            log_intensity_fg: self.log_intensity_bg + scale * (self.log_intensity_fg - self.log_intensity_bg),
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Contrast sensitivity `C` in log units.
    pub contrast: f64,
    /// Pose sampling frequency in Hz.
    pub sample_rate: f64,
    pub seed: u64,
    /// Multiplier on `|L_fg − L_bg|`.
    pub illumination_scale: f64,
    /// Depth jump (meters) treated as a discontinuity for contour labels.
    pub edge_threshold: f64,
    /// `s × s` sub-pixel samples integrated per pixel; 1 is point sampling.
    pub supersample: usize,
    /// Background noise events per pixel per second.
    pub noise_rate: f64,
    /// Keep a depth snapshot every this many samples (0 keeps none).
    pub depth_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            contrast: 0.2,
            sample_rate: 10_000.0,
            seed: 0,
            illumination_scale: 1.0,
            edge_threshold: 0.05,
            supersample: 1,
            noise_rate: 0.0,
            depth_every: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast > 0.0 && self.contrast.is_finite()) {
            return Err(Error::input("contrast sensitivity must be positive"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::input("sample rate must be positive"));
        }
        if !(self.illumination_scale > 0.0 && self.illumination_scale.is_finite()) {
            return Err(Error::input("illumination scale must be positive"));
        }
        if !(self.edge_threshold > 0.0) {
            return Err(Error::input("edge threshold must be positive"));
        }
        if self.supersample == 0 || self.supersample > 16 {
            return Err(Error::input("supersample must be in 1..=16"));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return Err(Error::input("noise rate must be non-negative"));
        }
        Ok(())
    }
}

/// Per-event ground-truth contour flags, index-aligned with the stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContourLabelSet {
    pub is_contour: Vec<bool>,
}

impl ContourLabelSet {
    pub fn len(&self) -> usize {
        self.is_contour.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_contour.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthSnapshot {
    /// Index of the pose sample the snapshot was rendered at.
    pub sample: usize,
    pub t: f64,
    pub depth: DepthImage,
}

/// Reference-level bookkeeping exposed for conservation checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub samples: usize,
    pub initial_log: Vec<f64>,
    pub final_log: Vec<f64>,
    pub final_reference: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub events: Vec<Event>,
    pub labels: ContourLabelSet,
    pub depth: Vec<DepthSnapshot>,
    pub state: SimState,
}

struct Rendered {
    depth: Vec<f32>,
    log: Vec<f64>,
}

/// Pixel window that can contain the subject.
fn footprint(scene: &Scene, cam: &CameraIntrinsics, pose: &CameraPose) -> Option<Rect> {
    if scene.bvh.is_empty() {
        return None;
    }
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in scene.bvh.bounds().corners() {
        match project_point(cam, pose, &c) {
            Ok(((u, v), _)) => {
                lo = (lo.0.min(u), lo.1.min(v));
                hi = (hi.0.max(u), hi.1.max(v));
            }
            // Box straddles the image plane: fall back to the whole sensor.
            Err(_) => return Some(Rect { x0: 0, x1: w, y0: 0, y1: h }),
        }
    }
    let clamp = |v: f64, n: usize| v.max(0.0).min(n as f64) as usize;
    let (x0, x1) = (clamp(lo.0.floor() - 1.0, w), clamp(hi.0.ceil() + 2.0, w));
    let (y0, y1) = (clamp(lo.1.floor() - 1.0, h), clamp(hi.1.ceil() + 2.0, h));
    (x0 < x1 && y0 < y1).then_some(Rect { x0, x1, y0, y1 })
}

/// Depth at pixel centers inside `rect`; rasterized when possible, ray cast
/// otherwise.
fn depth_in(scene: &Scene, cam: &CameraIntrinsics, pose: &CameraPose, rect: Rect) -> Vec<f32> {
    if let Some(d) = rasterize_depth(&scene.mesh, cam, pose, rect) {
        return d;
    }
    let w = cam.width as usize;
    let mut depth = vec![f32::INFINITY; w * cam.height as usize];
    depth
        .par_chunks_mut(w)
        .enumerate()
        .filter(|(y, _)| *y >= rect.y0 && *y < rect.y1)
        .for_each(|(y, row)| {
            for x in rect.x0..rect.x1 {
                let (u, v) = (x as f64, y as f64);
                if let Some(hit) = scene.bvh.intersect(&camera_ray(cam, pose, u, v)) {
                    // Ray distance to camera-space Z.
                    row[x] = (hit.distance / cam.unproject(u, v).norm()) as f32;
                }
            }
        });
    depth
}

fn render(scene: &Scene, cam: &CameraIntrinsics, pose: &CameraPose, supersample: usize) -> Rendered {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let Some(rect) = footprint(scene, cam, pose) else {
        return Rendered {
            depth: vec![f32::INFINITY; w * h],
            log: vec![scene.log_intensity_bg; w * h],
        };
    };
    let depth = depth_in(scene, cam, pose, rect);
    let s = supersample;
    if s == 1 {
        let log = depth
            .iter()
            .map(|d| if d.is_finite() { scene.log_intensity_fg } else { scene.log_intensity_bg })
            .collect();
        return Rendered { depth, log };
    }

    // Sub-pixel (i, j) of pixel (x, y) is pixel (s·x + i, s·y + j) of a
    // camera with s-times the resolution.
    let half = (s as f64 - 1.0) / 2.0;
    let fine = CameraIntrinsics {
        width: cam.width * s as u32,
        height: cam.height * s as u32,
        fx: cam.fx * s as f64,
        fy: cam.fy * s as f64,
        cx: cam.cx * s as f64 + half,
        cy: cam.cy * s as f64 + half,
    };
    let fine_rect = Rect { x0: rect.x0 * s, x1: rect.x1 * s, y0: rect.y0 * s, y1: rect.y1 * s };
    let fine_depth = depth_in(scene, &fine, pose, fine_rect);
    let (ifg, ibg) = (scene.log_intensity_fg.exp(), scene.log_intensity_bg.exp());
    let mut log = vec![scene.log_intensity_bg; w * h];
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            let mut covered = 0usize;
            for j in 0..s {
                let row = (y * s + j) * w * s;
                covered += (0..s).filter(|i| fine_depth[row + x * s + i].is_finite()).count();
            }
            if covered == s * s {
                log[y * w + x] = scene.log_intensity_fg;
            } else if covered > 0 {
                let frac = covered as f64 / (s * s) as f64;
                log[y * w + x] = (frac * ifg + (1.0 - frac) * ibg).ln();
            }
        }
    }
    Rendered { depth, log }
}

/// Camera-space depth per pixel; `+∞` where the ray misses the subject.
pub fn render_depth(scene: &Scene, cam: &CameraIntrinsics, pose: &CameraPose) -> DepthImage {
    DepthImage {
        width: cam.width as usize,
        height: cam.height as usize,
        data: render(scene, cam, pose, 1).depth,
    }
}

/// Log intensity: `L_fg` where the subject is seen, `L_bg` elsewhere.
pub fn render_log_intensity(scene: &Scene, cam: &CameraIntrinsics, pose: &CameraPose) -> Vec<f64> {
    render(scene, cam, pose, 1).log
}

/// Log of the mean linear intensity over `s × s` sub-pixel samples.
pub fn render_log_intensity_supersampled(scene: &Scene, cam: &CameraIntrinsics, pose: &CameraPose, supersample: usize) -> Vec<f64> {
    render(scene, cam, pose, supersample.max(1)).log
}

/// True when the 3×3 block around `(x, y)` mixes subject and background or
/// spans a depth jump of at least `threshold`.
pub fn near_depth_edge(depth: &[f32], width: usize, height: usize, x: usize, y: usize, threshold: f64) -> bool {
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    let (mut finite, mut infinite) = (false, false);
    for yy in y.saturating_sub(1)..(y + 2).min(height) {
        for xx in x.saturating_sub(1)..(x + 2).min(width) {
            let d = depth[yy * width + xx];
            if d.is_finite() {
                finite = true;
                lo = lo.min(d);
                hi = hi.max(d);
            } else {
                infinite = true;
            }
        }
    }
    (finite && infinite) || (finite && f64::from(hi - lo) >= threshold)
}

/// Sample times covering the trajectory, always including both end points.
pub fn sample_times(traj: &Trajectory, rate: f64) -> Vec<f64> {
    let (start, end) = (traj.start(), traj.end());
    let n = ((end - start) * rate + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| start + k as f64 / rate).collect();
    if end - times[times.len() - 1] > 1e-12 {
        times.push(end);
    }
    times
}

/// Runs the event simulator over the whole trajectory.
pub fn simulate_events(scene: &Scene, cam: &CameraIntrinsics, traj: &Trajectory, cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    cam.validate()?;
    let kf_rate = traj.keyframe_rate();
    if cfg.sample_rate < 2.0 * kf_rate {
        return Err(Error::input(format!(
            "sample rate {} Hz is below twice the keyframe rate ({kf_rate:.2} Hz)",
            cfg.sample_rate
        )));
    }
    let scene = scene.illuminated(cfg.illumination_scale)?;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let c = cfg.contrast;
    let times = sample_times(traj, cfg.sample_rate);
    let pose = |t: f64| {
        traj.pose_at(t, 1e-9)
            .ok_or_else(|| Error::input(format!("no pose at t = {t}")))
    };

    let first = render(&scene, cam, &pose(times[0])?, cfg.supersample);
    let initial_log = first.log.clone();
    let mut reference = first.log.clone();
    let mut prev_log = first.log;
    let mut depth_snapshots = Vec::new();
    if cfg.depth_every > 0 {
        depth_snapshots.push(DepthSnapshot {
            sample: 0,
            t: times[0],
            depth: DepthImage {
                width: w,
                height: h,
                data: first.depth,
            },
        });
    }

    let mut noise = noise_events(cam, traj, cfg);
    let mut noise_cursor = 0usize;
    let mut events = Vec::new();
    let mut labels = Vec::new();

    for k in 1..times.len() {
        let (t0, t1) = (times[k - 1], times[k]);
        let cur = render(&scene, cam, &pose(t1)?, cfg.supersample);
        let dt = t1 - t0;

        let mut batch: Vec<(Event, bool)> = reference
            .par_chunks_mut(w)
            .zip(prev_log.par_chunks(w))
            .enumerate()
            .flat_map_iter(|(y, (ref_row, prev_row))| {
                let mut out = Vec::new();
                for x in 0..w {
                    let l_new = cur.log[y * w + x];
                    let l_old = prev_row[x];
                    let delta = l_new - ref_row[x];
                    let n = (delta.abs() / c).floor();
                    if n < 1.0 {
                        continue;
                    }
                    let n = n as usize;
                    let sign = delta.signum();
                    let polarity = if sign > 0.0 { Polarity::Positive } else { Polarity::Negative };
                    let contour = near_depth_edge(&cur.depth, w, h, x, y, cfg.edge_threshold);
                    let slope = l_new - l_old;
                    for i in 1..=n {
                        let level = ref_row[x] + sign * c * i as f64;
                        let frac = if slope != 0.0 {
                            ((level - l_old) / slope).clamp(0.0, 1.0)
                        } else {
                            1.0
                        };
                        out.push((Event::new(x as u16, y as u16, t0 + frac * dt, polarity), contour));
                    }
                    ref_row[x] += sign * c * n as f64;
                }
                out
            })
            .collect();

        while noise_cursor < noise.len() && noise[noise_cursor].t <= t1 {
            batch.push((noise[noise_cursor], false));
            noise_cursor += 1;
        }
        batch.sort_by(|a, b| {
            a.0.t
                .total_cmp(&b.0.t)
                .then(a.0.y.cmp(&b.0.y))
                .then(a.0.x.cmp(&b.0.x))
        });
        for (e, l) in batch {
            events.push(e);
            labels.push(l);
        }

        if cfg.depth_every > 0 && k % cfg.depth_every == 0 {
            depth_snapshots.push(DepthSnapshot {
                sample: k,
                t: t1,
                depth: DepthImage {
                    width: w,
                    height: h,
                    data: cur.depth.clone(),
                },
            });
        }
        prev_log = cur.log;
    }
    noise.clear();

    Ok(SimOutput {
        events,
        labels: ContourLabelSet { is_contour: labels },
        depth: depth_snapshots,
        state: SimState {
            samples: times.len(),
            initial_log,
            final_log: prev_log,
            final_reference: reference,
        },
    })
}

/// Uniform background activity as a Poisson process over the sensor.
fn noise_events(cam: &CameraIntrinsics, traj: &Trajectory, cfg: &SimConfig) -> Vec<Event> {
    if cfg.noise_rate <= 0.0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6e6f_6973_65);
    let total_rate = cfg.noise_rate * cam.pixel_count() as f64;
    let mut t = traj.start();
    let mut out = Vec::new();
    loop {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        t += -u.ln() / total_rate;
        if t > traj.end() {
            break;
        }
        let x = rng.gen_range(0..cam.width) as u16;
        let y = rng.gen_range(0..cam.height) as u16;
        let polarity = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
        out.push(Event::new(x, y, t, polarity));
    }
    out
}

/// Exposure model for optional frame output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurConfig {
    /// View rotation (radians) within one exposure above which frames blur.
    pub threshold: f64,
    /// Largest rotation between consecutive sub-renders of a blurred frame.
    pub max_substep: f64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        BlurConfig {
            threshold: 0.05,
            max_substep: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    /// Number of renders averaged over the exposure.
    pub sub_renders: usize,
    /// Linear intensity, row-major.
    pub intensity: Vec<f64>,
}

impl Frame {
    /// 8-bit grayscale with `max_intensity` mapped to 255.
    pub fn to_gray8(&self, max_intensity: f64) -> Vec<u8> {
        self.intensity
            .iter()
            .map(|v| (v / max_intensity * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Renders `⌊duration · fps⌋` frames with exposure `1 / fps`; fast camera
/// motion averages several sub-renders across the exposure.
pub fn render_frames(scene: &Scene, cam: &CameraIntrinsics, traj: &Trajectory, fps: f64, blur: &BlurConfig) -> Result<Vec<Frame>> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::input("fps must be positive"));
    }
    let exposure = 1.0 / fps;
    let count = (traj.duration() * fps + 1e-9).floor() as usize;
    let tol = exposure + 1e-9;
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let t = traj.start() + i as f64 * exposure;
        let p0 = traj.pose_at(t, tol).ok_or_else(|| Error::input("frame outside trajectory"))?;
        let p1 = traj
            .pose_at((t + exposure).min(traj.end()), tol)
            .ok_or_else(|| Error::input("frame outside trajectory"))?;
        let motion = p0.orientation().angle_to(&p1.orientation());
        let subs = if motion > blur.threshold {
            (motion / blur.max_substep).ceil() as usize
        } else {
            1
        };
        let mut acc = vec![0.0f64; cam.pixel_count()];
        for s in 0..subs {
            let ts = if subs == 1 {
                t
            } else {
                t + exposure * (s as f64 + 0.5) / subs as f64
            };
            let pose = traj.pose_at(ts.min(traj.end()), tol).ok_or_else(|| Error::input("frame outside trajectory"))?;
            for (a, l) in acc.iter_mut().zip(render(scene, cam, &pose, 1).log) {
                *a += l.exp();
            }
        }
        for a in &mut acc {
            *a /= subs as f64;
        }
        frames.push(Frame {
            t,
            sub_renders: subs,
            intensity: acc,
        });
    }
    Ok(frames)
}
