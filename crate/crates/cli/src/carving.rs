//! Contour filtering, carving and meshing over a dataset directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use evscan_core::carve::{accumulate, default_threshold, prune, view_bounds_region, CarveDiagnostics};
use evscan_core::contour::{filter_density, filter_gt, filter_probabilities, ContourProvider};
use evscan_core::geometry::{CameraIntrinsics, Event, GridSpec, Vec3, VoxelGrid};
use evscan_core::io::{decode_events, decode_grid, decode_labels, decode_probabilities, encode_events, encode_grid, write_obj, EventFile};
use evscan_core::sim::ContourLabelSet;
use evscan_core::surface::{marching_cubes, subject_component};
use evscan_core::trajectory::Trajectory;
use serde_json::json;

use crate::config::{absolute, Config};
use crate::error::{CliError, CliResult, UsageContext};
use crate::manifest::{Manifest, SequenceEntry};
use crate::simulate::{EVENTS, LABELS, PROBABILITIES, TRAJECTORY};

pub const CONTOUR_EVENTS: &str = "contour.evc";
pub const WEIGHTS: &str = "weights.evg";
pub const REGION: &str = "region.evg";
pub const OCCUPANCY: &str = "occupancy.evg";
pub const MESH: &str = "mesh.obj";

/// An opened dataset directory.
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub trajectory: Trajectory,
    pub camera: CameraIntrinsics,
}

impl Dataset {
    pub fn open(dir: &Path) -> CliResult<Dataset> {
        let manifest = Manifest::read(dir, "simulate")?;
        let text = fs::read_to_string(dir.join(TRAJECTORY)).usage("reading the dataset trajectory")?;
        let trajectory = Trajectory::from_csv(&text).usage("reading the dataset trajectory")?;
        let camera = manifest.config.camera.intrinsics().usage("dataset camera")?;
        Ok(Dataset {
            dir: absolute(dir),
            manifest,
            trajectory,
            camera,
        })
    }

    pub fn events(&self, seq: &str) -> anyhow::Result<EventFile> {
        let path = self.dir.join(seq).join(EVENTS);
        let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let file = decode_events(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        if u32::from(file.width) != self.camera.width || u32::from(file.height) != self.camera.height {
            bail!("{} was recorded at {}x{}, the dataset camera is {}x{}", path.display(), file.width, file.height, self.camera.width, self.camera.height);
        }
        Ok(file)
    }

    /// Contour events of one sequence according to `provider`.
    pub fn contour_events(&self, seq: &str, provider: &ContourProvider) -> CliResult<Vec<Event>> {
        let events = self.events(seq)?.events;
        let dir = self.dir.join(seq);
        let kept = match provider {
            ContourProvider::GtLabels => {
                let bytes = fs::read(dir.join(LABELS)).context("reading contour labels")?;
                let (_, _, labels) = decode_labels(&bytes).context("decoding contour labels")?;
                filter_gt(&events, &ContourLabelSet { is_contour: labels })
            }
            ContourProvider::ProbabilityFile { threshold } => {
                let path = dir.join(PROBABILITIES);
                if !path.is_file() {
                    return Err(CliError::usage(format!("contour probabilities {} do not exist", path.display())));
                }
                let probs = decode_probabilities(&fs::read(&path).context("reading probabilities")?)
                    .context("decoding probabilities")?;
                filter_probabilities(&events, &probs, *threshold)
            }
            ContourProvider::DensityHeuristic(d) => filter_density(&events, d),
        };
        Ok(kept.with_context(|| format!("filtering {seq}"))?)
    }
}

/// Writes the contour events of every sequence.
pub fn filter(dataset: &Path, cfg: Option<&Config>, out: &Path) -> CliResult<Manifest> {
    let ds = Dataset::open(dataset)?;
    let cfg = resolve(&ds, cfg);
    cfg.validate_carve(&ds.trajectory)?;
    fs::create_dir_all(out)?;
    let mut manifest = Manifest::new("filter", cfg.clone());
    manifest.inputs.insert("dataset".into(), ds.dir.clone());
    for seq in &ds.manifest.sequences {
        let kept = ds.contour_events(&seq.name, &cfg.contour)?;
        fs::create_dir_all(out.join(&seq.name))?;
        let file = EventFile {
            width: ds.camera.width as u16,
            height: ds.camera.height as u16,
            events: kept,
        };
        fs::write(out.join(&seq.name).join(CONTOUR_EVENTS), encode_events(&file))?;
        manifest.sequences.push(SequenceEntry {
            name: seq.name.clone(),
            info: json!({ "contour_events": file.events.len() }),
        });
    }
    manifest.write(out)?;
    Ok(manifest)
}

fn resolve(ds: &Dataset, cfg: Option<&Config>) -> Config {
    let base = ds.manifest.config.clone();
    match cfg {
        Some(c) => base.with_downstream(c),
        None => base,
    }
}

/// Result of pruning and meshing one weight grid.
struct Meshed {
    tau: f64,
    diagnostics: CarveDiagnostics,
    occupancy: VoxelGrid<u8>,
    kept: usize,
    vertices: usize,
    faces: usize,
}

/// Where the cameras look, used to tell the subject from unswept free space.
/// Falls back to the grid center when the axes do not meet inside the grid.
fn focus(traj: &Trajectory, grid: &GridSpec) -> Vec3 {
    let bounds = grid.bounds();
    traj.fixation_point()
        .filter(|p| bounds.contains(p))
        .unwrap_or_else(|| bounds.center())
}

fn prune_and_mesh(
    weights: &VoxelGrid<f64>,
    region: &VoxelGrid<u8>,
    tau: Option<f64>,
    focus: Option<&Vec3>,
    dir: &Path,
) -> CliResult<Meshed> {
    let tau = match tau.or_else(|| default_threshold(weights)) {
        Some(t) => t,
        None => return Err(CliError::Runtime(anyhow::anyhow!("no contour ray reached the grid"))),
    };
    let occupancy = prune(weights, tau, Some(region)).context("pruning")?;
    let diagnostics = CarveDiagnostics::of(&occupancy);
    let (subject, size) = match focus {
        Some(f) => subject_component(&occupancy, f),
        None => (occupancy.clone(), occupancy.cells.iter().filter(|&&c| c != 0).count()),
    };
    if size == 0 {
        return Err(CliError::Runtime(anyhow::anyhow!("carving removed every voxel")));
    }
    let mesh = marching_cubes(&subject, 0.5).context("marching cubes")?;
    fs::write(dir.join(OCCUPANCY), encode_grid(&occupancy))?;
    fs::write(dir.join(MESH), write_obj(&mesh))?;
    Ok(Meshed {
        tau,
        diagnostics,
        occupancy,
        kept: size,
        vertices: mesh.vertices.len(),
        faces: mesh.faces.len(),
    })
}

fn insufficient_rays_warning(seq: &str, d: &CarveDiagnostics) -> String {
    format!(
        "{seq}: insufficient rays, {:.2}% of occupied voxels lie outside the main component",
        100.0 * d.debris_fraction
    )
}

/// Filters, accumulates, prunes and meshes every sequence of a dataset.
pub fn carve(dataset: &Path, cfg: Option<&Config>, out: &Path) -> CliResult<Manifest> {
    let ds = Dataset::open(dataset)?;
    let cfg = resolve(&ds, cfg);
    cfg.validate_carve(&ds.trajectory)?;
    let carve_cfg = cfg.carve.carve_config(&ds.trajectory).usage("carve configuration")?;
    fs::create_dir_all(out)?;
    let mut manifest = Manifest::new("carve", cfg.clone());
    manifest.inputs.insert("dataset".into(), ds.dir.clone());
    let focus = focus(&ds.trajectory, &carve_cfg.grid);
    for seq in &ds.manifest.sequences {
        let dir = out.join(&seq.name);
        fs::create_dir_all(&dir)?;
        let contour = ds.contour_events(&seq.name, &cfg.contour)?;
        let acc = accumulate(&contour, &ds.trajectory, &ds.camera, &carve_cfg)
            .with_context(|| format!("accumulating {}", seq.name))?;
        let region = view_bounds_region(&contour, &ds.trajectory, &ds.camera, &carve_cfg.grid, cfg.carve.view_windows, cfg.carve.view_margin)
            .context("view bounds")?;
        fs::write(dir.join(WEIGHTS), encode_grid(&acc.weights))?;
        fs::write(dir.join(REGION), encode_grid(&region))?;
        let m = prune_and_mesh(&acc.weights, &region, carve_cfg.prune_threshold, cfg.carve.subject_only.then_some(&focus), &dir)
            .map_err(|e| stage_error(e, &seq.name))?;
        if m.diagnostics.insufficient_rays() {
            let w = insufficient_rays_warning(&seq.name, &m.diagnostics);
            log::warn!("{w}");
            manifest.warnings.push(w);
        }
        log::info!("{}: {} rays, {} voxels kept, mesh of {} faces", seq.name, acc.rays, m.kept, m.faces);
        manifest.sequences.push(SequenceEntry {
            name: seq.name.clone(),
            info: json!({
                "attenuation": cfg.carve.attenuation,
                "grid_dims": carve_cfg.grid.dims,
                "grid_origin": [carve_cfg.grid.origin.x, carve_cfg.grid.origin.y, carve_cfg.grid.origin.z],
                "pitch": carve_cfg.grid.pitch,
                "focus": [focus.x, focus.y, focus.z],
                "contour_events": contour.len(),
                "rays": acc.rays,
                "skipped": acc.skipped,
                "tau": m.tau,
                "occupied": m.diagnostics.occupied,
                "largest_component": m.diagnostics.largest_component,
                "subject_voxels": m.kept,
                "debris_fraction": m.diagnostics.debris_fraction,
                "insufficient_rays": m.diagnostics.insufficient_rays(),
                "mesh_vertices": m.vertices,
                "mesh_faces": m.faces,
            }),
        });
    }
    manifest.write(out)?;
    Ok(manifest)
}

fn stage_error(e: CliError, seq: &str) -> CliError {
    match e {
        CliError::Runtime(e) => CliError::Runtime(e.context(format!("carving {seq}"))),
        other => other,
    }
}

/// Re-extracts meshes from stored weight grids, optionally at a new
/// threshold.
pub fn mesh(carve_dir: &Path, tau: Option<f64>, out: &Path) -> CliResult<Manifest> {
    let src = Manifest::read(carve_dir, "carve")?;
    if let Some(t) = tau {
        if !(t > 0.0) {
            return Err(CliError::usage("--tau must be positive"));
        }
    }
    let tau = tau.or(src.config.carve.prune_threshold);
    fs::create_dir_all(out)?;
    let mut manifest = Manifest::new("mesh", src.config.clone());
    manifest.inputs.insert("carve".into(), absolute(carve_dir));
    manifest.inputs.insert("dataset".into(), src.input("dataset")?.to_path_buf());
    for seq in &src.sequences {
        let read = |name: &str| -> CliResult<VoxelGrid<f32>> {
            let path = carve_dir.join(&seq.name).join(name);
            let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display())).usage("carve artifacts")?;
            Ok(decode_grid(&bytes).with_context(|| format!("decoding {}", path.display()))?)
        };
        let w = read(WEIGHTS)?;
        let r = read(REGION)?;
        if w.spec != r.spec {
            return Err(CliError::Runtime(anyhow::anyhow!("{}: weight and region grids differ", seq.name)));
        }
        let weights = VoxelGrid {
            spec: w.spec,
            cells: w.cells.iter().map(|&c| f64::from(c)).collect(),
        };
        let region = VoxelGrid {
            spec: r.spec,
            cells: r.cells.iter().map(|&c| u8::from(c != 0.0)).collect(),
        };
        let dir = out.join(&seq.name);
        fs::create_dir_all(&dir)?;
        let focus = seq
            .info
            .get("focus")
            .and_then(|v| serde_json::from_value::<[f64; 3]>(v.clone()).ok())
            .map(Vec3::from)
            .unwrap_or_else(|| w.spec.bounds().center());
        let m = prune_and_mesh(&weights, &region, tau, src.config.carve.subject_only.then_some(&focus), &dir).map_err(|e| stage_error(e, &seq.name))?;
        if m.diagnostics.insufficient_rays() {
            let w = insufficient_rays_warning(&seq.name, &m.diagnostics);
            log::warn!("{w}");
            manifest.warnings.push(w);
        }
        let occupied = m.occupancy.cells.iter().filter(|&&c| c != 0).count();
        manifest.sequences.push(SequenceEntry {
            name: seq.name.clone(),
            info: json!({
                "tau": m.tau,
                "occupied": occupied,
                "subject_voxels": m.kept,
                "debris_fraction": m.diagnostics.debris_fraction,
                "insufficient_rays": m.diagnostics.insufficient_rays(),
                "mesh_faces": m.faces,
            }),
        });
    }
    manifest.write(out)?;
    Ok(manifest)
}
