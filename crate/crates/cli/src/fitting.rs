//! Body-model fitting on carved meshes, and evaluation against ground truth.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use evscan_core::body::{load_model, skin, BodyModel};
use evscan_core::fit::{fit as run_fit, initial_params, FitResult};
use evscan_core::geometry::TriMesh;
use evscan_core::io::{parse_obj, write_obj};
use evscan_core::metrics::{aggregate, chamfer_distance, pel_mpjpe, MetricsReport, SequenceMetrics};
use serde_json::json;

use crate::carving::MESH;
use crate::config::{absolute, require_file, Config};
use crate::error::{CliError, CliResult, UsageContext};
use crate::manifest::{read_json, write_json, JointsFile, Manifest, SequenceEntry};
use crate::simulate::{GT_JOINTS, MODEL, SUBJECT};

pub const FIT_RESULT: &str = "fit.json";
pub const FITTED_MESH: &str = "fitted.obj";
pub const JOINTS: &str = "joints.json";
pub const METRICS: &str = "metrics.json";

fn read_mesh(path: &Path) -> anyhow::Result<TriMesh> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_obj(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Picks the body model: explicit path, then the config, then the one a
/// toy-subject dataset ships with.
fn model_path(cfg: &Config, explicit: Option<&Path>, dataset: Option<&Path>) -> CliResult<PathBuf> {
    if let Some(p) = explicit.map(Path::to_path_buf).or_else(|| cfg.fit.model.clone()) {
        require_file(&p, "body model")?;
        return Ok(absolute(&p));
    }
    if let Some(p) = dataset.map(|d| d.join(MODEL)).filter(|p| p.is_file()) {
        return Ok(p);
    }
    Err(CliError::usage("no body model: pass --model or set fit.model"))
}

pub fn load_body_model(path: &Path) -> CliResult<BodyModel> {
    load_model(path).with_context(|| format!("loading {}", path.display())).usage("invalid body model")
}

/// Fits the body model to every sequence's carved mesh.
pub fn fit(input: &Path, cfg: Option<&Config>, model: Option<&Path>, out: &Path) -> CliResult<Manifest> {
    let src = Manifest::read(input, "carve").or_else(|_| Manifest::read(input, "mesh"))?;
    let cfg = match cfg {
        Some(c) => src.config.clone().with_downstream(c),
        None => src.config.clone(),
    };
    let dataset = src.inputs.get("dataset").cloned();
    let model_file = model_path(&cfg, model, dataset.as_deref())?;
    let body = load_body_model(&model_file)?;
    cfg.fit.optim.validate(&body).usage("invalid fit configuration")?;

    fs::create_dir_all(out)?;
    let mut manifest = Manifest::new("fit", cfg.clone());
    manifest.inputs.insert("meshes".into(), absolute(input));
    manifest.inputs.insert("model".into(), model_file);
    if let Some(d) = dataset {
        manifest.inputs.insert("dataset".into(), d);
    }
    for seq in &src.sequences {
        let target = read_mesh(&input.join(&seq.name).join(MESH))?;
        let init = initial_params(&body, &target).context("initial parameters")?;
        let res = run_fit(&body, &target, &init, &cfg.fit.optim).with_context(|| format!("fitting {}", seq.name))?;
        let posed = skin(&body, &res.params).context("posing the fit")?;
        let dir = out.join(&seq.name);
        fs::create_dir_all(&dir)?;
        write_json(&dir.join(FIT_RESULT), &res)?;
        fs::write(dir.join(FITTED_MESH), write_obj(&posed.mesh))?;
        write_json(&dir.join(JOINTS), &JointsFile::for_model(&body, &posed.joints))?;
        let last = res.loss_trace.last().copied().unwrap_or(f64::NAN);
        log::info!("{}: loss {:.4} -> {last:.4} over {} iterations", seq.name, res.loss_trace[0], res.loss_trace.len());
        manifest.sequences.push(SequenceEntry {
            name: seq.name.clone(),
            info: json!({
                "initial_loss": res.loss_trace[0],
                "final_loss": last,
                "iterations": res.loss_trace.len(),
                "converged": res.converged,
            }),
        });
    }
    manifest.write(out)?;
    Ok(manifest)
}

pub fn read_fit_result(dir: &Path) -> anyhow::Result<FitResult> {
    read_json(&dir.join(FIT_RESULT))
}

/// Where ground truth comes from when not given explicitly.
pub struct GroundTruth {
    pub joints: Option<PathBuf>,
    pub mesh: Option<PathBuf>,
}

/// Metrics of a fit, carve or mesh directory against ground truth.
pub fn eval(input: &Path, gt: &GroundTruth, cd_override: Option<usize>, out: Option<&Path>) -> CliResult<MetricsReport> {
    let path = input.join(crate::manifest::MANIFEST);
    let stage = read_json::<Manifest>(&path).map_err(CliError::Usage)?.stage;
    let src = Manifest::read(input, &stage)?;
    if !matches!(stage.as_str(), "fit" | "carve" | "mesh") {
        return Err(CliError::usage(format!("cannot evaluate a `{stage}` artifact")));
    }
    let dataset = src.inputs.get("dataset");
    let pick = |explicit: &Option<PathBuf>, name: &str| {
        explicit
            .clone()
            .or_else(|| dataset.map(|d| d.join(name)).filter(|p| p.is_file()))
    };
    let gt_joints_path = pick(&gt.joints, GT_JOINTS);
    let gt_mesh_path = pick(&gt.mesh, SUBJECT);
    for p in gt_joints_path.iter().chain(&gt_mesh_path) {
        require_file(p, "ground truth")?;
    }
    let gt_joints: Option<JointsFile> = gt_joints_path.as_deref().map(read_json).transpose().map_err(CliError::Usage)?;
    let gt_mesh = gt_mesh_path.as_deref().map(read_mesh).transpose().map_err(CliError::Usage)?;
    let n = cd_override.unwrap_or(src.config.eval.cd_samples);
    if n == 0 {
        return Err(CliError::usage("Chamfer sample count must be positive"));
    }
    let seed = src.config.eval.cd_seed;
    let carved_dir = match stage.as_str() {
        "fit" => src.inputs.get("meshes").cloned(),
        _ => Some(absolute(input)),
    };

    let mut per_sequence = Vec::new();
    for seq in &src.sequences {
        let mut m = SequenceMetrics {
            name: seq.name.clone(),
            pel_mpjpe_mm: None,
            cd_mm2: None,
            rms_mm: None,
            carved_cd_mm2: None,
        };
        let dir = input.join(&seq.name);
        if stage == "fit" {
            if let Some(gt_j) = &gt_joints {
                let est: JointsFile = read_json(&dir.join(JOINTS))?;
                est.check_matches(gt_j)
                    .usage(&format!("{}: joints do not match the ground truth", seq.name))?;
                m.pel_mpjpe_mm = Some(pel_mpjpe(&est.points(), &gt_j.points(), gt_j.pelvis).context("PEL-MPJPE")?);
            }
        }
        if let Some(gt_m) = &gt_mesh {
            if let Some(c) = &carved_dir {
                let carved = read_mesh(&c.join(&seq.name).join(MESH))?;
                m.carved_cd_mm2 = Some(chamfer_distance(gt_m, &carved, n, seed).context("Chamfer distance")?.cd_mm2);
            }
            let est_path = if stage == "fit" { dir.join(FITTED_MESH) } else { dir.join(MESH) };
            let report = chamfer_distance(gt_m, &read_mesh(&est_path)?, n, seed).context("Chamfer distance")?;
            m.cd_mm2 = Some(report.cd_mm2);
            m.rms_mm = Some(report.rms_mm);
        }
        per_sequence.push(m);
    }
    let report = aggregate(per_sequence);
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| input.join(METRICS));
    write_json(&out, &report)?;
    Ok(report)
}
