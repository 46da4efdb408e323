//! Run configuration. One TOML file holds every stage's section; the
//! resolved configuration is stored in each artifact manifest, so a
//! manifest can stand in for the file it came from.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use evscan_core::carve::{default_grid, Attenuation, AttenuationMode, CarveConfig};
use evscan_core::contour::ContourProvider;
use evscan_core::fit::FitConfig;
use evscan_core::geometry::{CameraIntrinsics, GridSpec, Vec3};
use evscan_core::sim::SimConfig;
use evscan_core::toy::{ToySpec, JOINT_NAMES};
use evscan_core::trajectory::{OrbitSpec, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, UsageContext};
use crate::manifest::Manifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seed of the event simulator.
    pub seed: u64,
    pub subject: Subject,
    pub camera: Camera,
    pub orbit: Orbit,
    pub sim: Sim,
    pub contour: ContourProvider,
    pub carve: Carve,
    pub fit: Fit,
    pub eval: Eval,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            subject: Subject::default(),
            camera: Camera::default(),
            orbit: Orbit::default(),
            sim: Sim::default(),
            contour: ContourProvider::GtLabels,
            carve: Carve::default(),
            fit: Fit::default(),
            eval: Eval::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectKind {
    /// The built-in toy body model, posed by `beta` and `pose`.
    Toy,
    Sphere,
    /// A mesh read from `path`.
    Obj,
}

/// A joint given by index or by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JointRef {
    Index(usize),
    Name(String),
}

impl JointRef {
    pub fn resolve(&self, count: usize) -> anyhow::Result<usize> {
        let j = match self {
            JointRef::Index(j) => *j,
            JointRef::Name(n) => JOINT_NAMES
                .iter()
                .position(|m| m == n)
                .with_context(|| format!("unknown joint name `{n}`"))?,
        };
        ensure!(j < count, "joint {j} out of {count}");
        Ok(j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointPose {
    pub joint: JointRef,
    pub axis_angle: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Subject {
    pub kind: SubjectKind,
    pub path: Option<PathBuf>,
    /// Sphere radius in meters.
    pub radius: f64,
    /// Toy shape coefficients; missing trailing entries are zero.
    pub beta: Vec<f64>,
    pub pose: Vec<JointPose>,
    pub toy: ToySpec,
    /// The subject is centered on the orbit target, then moved by this.
    pub offset: [f64; 3],
    pub log_intensity_fg: f64,
    pub log_intensity_bg: f64,
}

impl Default for Subject {
    fn default() -> Self {
        Subject {
            kind: SubjectKind::Toy,
            path: None,
            radius: 0.3,
            beta: Vec::new(),
            pose: Vec::new(),
            toy: ToySpec::default(),
            offset: [0.0; 3],
            log_intensity_fg: 1.0,
            log_intensity_bg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Camera {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Resolution multiplier at a fixed field of view.
    pub scale: f64,
}

impl Default for Camera {
    fn default() -> Self {
        let c = CameraIntrinsics::reference();
        Camera {
            width: c.width,
            height: c.height,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            scale: 1.0,
        }
    }
}

impl Camera {
    pub fn intrinsics(&self) -> evscan_core::Result<CameraIntrinsics> {
        let base = CameraIntrinsics::new(self.width, self.height, self.fx, self.fy, self.cx, self.cy)?;
        if self.scale == 1.0 {
            Ok(base)
        } else {
            base.scaled(self.scale)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Orbit {
    pub radius: f64,
    pub loops: f64,
    /// Seconds for the whole path at speed multiplier 1.
    pub duration: f64,
    pub height: f64,
    pub keyframes_per_loop: usize,
    pub phase: f64,
    /// Traverses the same path this many times faster.
    pub speed_mult: f64,
}

impl Default for Orbit {
    fn default() -> Self {
        let o = OrbitSpec::default();
        Orbit {
            radius: o.radius,
            loops: o.loops,
            duration: o.duration,
            height: o.height,
            keyframes_per_loop: o.keyframes_per_loop,
            phase: o.phase,
            speed_mult: 1.0,
        }
    }
}

impl Orbit {
    pub fn trajectory(&self) -> evscan_core::Result<Trajectory> {
        let spec = OrbitSpec {
            radius: self.radius,
            loops: self.loops,
            duration: self.duration,
            height: self.height,
            target: [0.0; 3],
            keyframes_per_loop: self.keyframes_per_loop,
            phase: self.phase,
        };
        let traj = spec.build()?;
        if self.speed_mult == 1.0 {
            Ok(traj)
        } else {
            traj.sped_up(self.speed_mult)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sim {
    /// Contrast sensitivity in log units.
    pub contrast: f64,
    pub sample_rate: f64,
    /// One sequence per entry.
    pub illumination_scales: Vec<f64>,
    pub edge_threshold: f64,
    pub supersample: usize,
    pub noise_rate: f64,
    /// Store a depth map every this many pose samples; 0 stores none.
    pub depth_every: usize,
    /// Write grayscale frames at this rate.
    pub frames_fps: Option<f64>,
}

impl Default for Sim {
    fn default() -> Self {
        let s = SimConfig::default();
        Sim {
            contrast: s.contrast,
            sample_rate: s.sample_rate,
            illumination_scales: vec![1.0],
            edge_threshold: s.edge_threshold,
            supersample: s.supersample,
            noise_rate: s.noise_rate,
            depth_every: s.depth_every,
            frames_fps: None,
        }
    }
}

impl Sim {
    pub fn sim_config(&self, seed: u64, illumination_scale: f64) -> SimConfig {
        SimConfig {
            contrast: self.contrast,
            sample_rate: self.sample_rate,
            seed,
            illumination_scale,
            edge_threshold: self.edge_threshold,
            supersample: self.supersample,
            noise_rate: self.noise_rate,
            depth_every: self.depth_every,
        }
    }
}

/// Nine log-spaced illumination scales from 0.25 to 4.
pub fn illumination_ladder() -> Vec<f64> {
    (0..9).map(|k| 0.25 * 16f64.powf(k as f64 / 8.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Carve {
    /// Cells per axis.
    pub voxels: usize,
    /// Edge of the cubic grid in meters, centered on the orbit target;
    /// unset spans the orbit's inner diameter.
    pub edge: Option<f64>,
    pub attenuation: AttenuationMode,
    pub r0: f64,
    /// Absolute prune threshold; unset derives it from the weights.
    pub prune_threshold: Option<f64>,
    /// Time slices for the coarse view-bounds hull.
    pub view_windows: usize,
    /// Margin in pixels around each slice's event bounding box.
    pub view_margin: f64,
    /// Mesh only the occupied component nearest the orbit's fixation point.
    pub subject_only: bool,
}

impl Default for Carve {
    fn default() -> Self {
        Carve {
            voxels: 256,
            edge: None,
            attenuation: AttenuationMode::Inverse,
            r0: 1.0,
            prune_threshold: None,
            view_windows: 72,
            view_margin: 1.0,
            subject_only: true,
        }
    }
}

impl Carve {
    pub fn carve_config(&self, traj: &Trajectory) -> evscan_core::Result<CarveConfig> {
        let grid = match self.edge {
            Some(edge) => GridSpec::cube(Vec3::zeros(), edge, self.voxels)?,
            None => default_grid(traj, self.voxels)?,
        };
        let mut cfg = CarveConfig::new(grid, Attenuation::new(self.attenuation, self.r0)?);
        cfg.prune_threshold = self.prune_threshold;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Fit {
    /// Body model file; a toy-subject dataset supplies its own.
    pub model: Option<PathBuf>,
    #[serde(flatten)]
    pub optim: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Eval {
    /// Points sampled per mesh for the Chamfer distance.
    pub cd_samples: usize,
    pub cd_seed: u64,
}

impl Default for Eval {
    fn default() -> Self {
        Eval {
            cd_samples: evscan_core::metrics::DEFAULT_CD_SAMPLES,
            cd_seed: 0,
        }
    }
}

impl Config {
    /// Reads a TOML config, or the config recorded in a JSON manifest.
    /// Relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> CliResult<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))
            .usage("loading configuration")?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let m: Manifest = serde_json::from_str(&text)
                .with_context(|| format!("{} is not a manifest", path.display()))
                .usage("loading configuration")?;
            m.config
        } else {
            toml::from_str(&text)
                .with_context(|| format!("cannot parse {}", path.display()))
                .usage("loading configuration")?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = absolute(&base.join(&*p));
                }
            }
        };
        fix(&mut self.subject.path);
        fix(&mut self.fit.model);
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Replaces the carving, contour, fitting and evaluation sections with
    /// those of `other`.
    pub fn with_downstream(mut self, other: &Config) -> Config {
        self.contour = other.contour.clone();
        self.carve = other.carve.clone();
        self.fit = other.fit.clone();
        self.eval = other.eval.clone();
        self
    }

    /// Checks the simulation sections.
    pub fn validate_sim(&self) -> CliResult<()> {
        let check = || -> anyhow::Result<()> {
            self.camera.intrinsics()?;
            let traj = self.orbit.trajectory()?;
            ensure!(
                self.sim.sample_rate >= 2.0 * traj.keyframe_rate(),
                "sim.sample_rate {} Hz is below twice the keyframe rate ({:.2} Hz)",
                self.sim.sample_rate,
                traj.keyframe_rate()
            );
            ensure!(!self.sim.illumination_scales.is_empty(), "sim.illumination_scales is empty");
            for &s in &self.sim.illumination_scales {
                self.sim.sim_config(self.seed, s).validate()?;
            }
            if let Some(fps) = self.sim.frames_fps {
                ensure!(fps > 0.0 && fps.is_finite(), "sim.frames_fps must be positive");
            }
            let s = &self.subject;
            ensure!(
                s.log_intensity_fg.is_finite() && s.log_intensity_bg.is_finite() && s.log_intensity_fg != s.log_intensity_bg,
                "subject intensities must be finite and differ"
            );
            match s.kind {
                SubjectKind::Obj => ensure!(s.path.is_some(), "subject.kind = \"obj\" needs subject.path"),
                SubjectKind::Sphere => ensure!(s.radius > 0.0, "subject.radius must be positive"),
                SubjectKind::Toy => {}
            }
            Ok(())
        };
        check().usage("invalid configuration")
    }

    /// Checks the carving and contour sections.
    pub fn validate_carve(&self, traj: &Trajectory) -> CliResult<()> {
        let check = || -> anyhow::Result<()> {
            let c = &self.carve;
            if c.voxels == 0 || c.voxels > 1024 {
                bail!("carve.voxels must be in 1..=1024");
            }
            if let Some(e) = c.edge {
                ensure!(e > 0.0 && e.is_finite(), "carve.edge must be positive");
            }
            if let Some(t) = c.prune_threshold {
                ensure!(t > 0.0, "carve.prune_threshold must be positive");
            }
            ensure!(c.view_windows > 0, "carve.view_windows must be positive");
            ensure!(c.view_margin >= 0.0, "carve.view_margin must be non-negative");
            c.carve_config(traj)?;
            if let ContourProvider::ProbabilityFile { threshold } = self.contour {
                ensure!((0.0..=1.0).contains(&threshold), "contour threshold must be in [0, 1]");
            }
            Ok(())
        };
        check().usage("invalid configuration")
    }
}

pub fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

pub(crate) fn require_file(p: &Path, what: &str) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} {} does not exist", p.display())))
    }
}
