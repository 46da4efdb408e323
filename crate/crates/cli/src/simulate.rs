//! Dataset generation: subject mesh, trajectory, and per-illumination event
//! sequences with ground-truth labels.

use std::fs;
use std::path::Path;

use anyhow::Context;
use evscan_core::body::{skin, BodyModel, BodyParams};
use evscan_core::geometry::{TriMesh, Vec3};
use evscan_core::io::{encode_events, encode_labels, encode_model, encode_pfm, encode_pgm, parse_obj, write_obj, EventFile};
use evscan_core::shapes::uv_sphere;
use evscan_core::sim::{render_frames, simulate_events, BlurConfig, Scene};
use evscan_core::toy::make_toy_model;
use serde_json::json;

use crate::config::{absolute, require_file, Config, SubjectKind};
use crate::error::{CliResult, UsageContext};
use crate::manifest::{write_json, JointsFile, Manifest, SequenceEntry};

pub const TRAJECTORY: &str = "trajectory.csv";
pub const SUBJECT: &str = "subject.obj";
pub const MODEL: &str = "model.evm";
pub const GT_PARAMS: &str = "gt_params.json";
pub const GT_JOINTS: &str = "gt_joints.json";
pub const EVENTS: &str = "events.evc";
pub const LABELS: &str = "labels.evl";
/// Per-event contour probabilities from an external classifier.
pub const PROBABILITIES: &str = "probabilities.evp";

/// Subject geometry, plus the generating body parameters for model subjects.
pub struct SubjectMesh {
    pub mesh: TriMesh,
    pub truth: Option<Truth>,
}

pub struct Truth {
    pub model: BodyModel,
    pub params: BodyParams,
    pub joints: Vec<Vec3>,
}

/// Builds the subject centered on the orbit target and moved by the
/// configured offset.
pub fn build_subject(cfg: &Config) -> CliResult<SubjectMesh> {
    let s = &cfg.subject;
    let offset = Vec3::from(s.offset);
    let recenter = |mesh: TriMesh| -> anyhow::Result<TriMesh> {
        let b = mesh.bounds();
        let shift = offset - (b.min + b.max) / 2.0;
        Ok(TriMesh::new(mesh.vertices.iter().map(|v| v + shift).collect(), mesh.faces.clone())?)
    };
    match s.kind {
        SubjectKind::Sphere => Ok(SubjectMesh {
            mesh: uv_sphere(offset, s.radius, 256, 128),
            truth: None,
        }),
        SubjectKind::Obj => {
            let path = s.path.as_deref().expect("validated");
            require_file(path, "subject mesh")?;
            let text = fs::read_to_string(path).usage("reading the subject mesh")?;
            let mesh = parse_obj(&text).usage("parsing the subject mesh")?;
            Ok(SubjectMesh {
                mesh: recenter(mesh).usage("placing the subject")?,
                truth: None,
            })
        }
        SubjectKind::Toy => {
            let model = make_toy_model(&s.toy).usage("building the toy body")?;
            let mut params = BodyParams::zeros(&model);
            if s.beta.len() > params.beta.len() {
                return Err(crate::error::CliError::usage(format!(
                    "subject.beta has {} entries, the toy body takes {}",
                    s.beta.len(),
                    params.beta.len()
                )));
            }
            params.beta[..s.beta.len()].copy_from_slice(&s.beta);
            for p in &s.pose {
                let j = p.joint.resolve(model.joint_count()).usage("subject.pose")?;
                params.theta[3 * j..3 * j + 3].copy_from_slice(&p.axis_angle);
            }
            let rest = skin(&model, &params).usage("posing the subject")?;
            let b = rest.mesh.bounds();
            params.t = offset - (b.min + b.max) / 2.0;
            let posed = skin(&model, &params).usage("posing the subject")?;
            Ok(SubjectMesh {
                mesh: posed.mesh,
                truth: Some(Truth {
                    model,
                    params,
                    joints: posed.joints,
                }),
            })
        }
    }
}

/// Writes a dataset directory and returns its manifest.
pub fn simulate(cfg: &Config, out: &Path) -> CliResult<Manifest> {
    cfg.validate_sim()?;
    let subject = build_subject(cfg)?;
    let traj = cfg.orbit.trajectory().usage("invalid orbit")?;
    let cam = cfg.camera.intrinsics().usage("invalid camera")?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let mut manifest = Manifest::new("simulate", cfg.clone());
    if let Some(p) = &cfg.subject.path {
        manifest.inputs.insert("subject".into(), absolute(p));
    }
    fs::write(out.join(TRAJECTORY), traj.to_csv()).context("writing the trajectory")?;
    fs::write(out.join(SUBJECT), write_obj(&subject.mesh)).context("writing the subject mesh")?;
    if let Some(t) = &subject.truth {
        fs::write(out.join(MODEL), encode_model(&t.model)).context("writing the body model")?;
        write_json(&out.join(GT_PARAMS), &t.params)?;
        write_json(&out.join(GT_JOINTS), &JointsFile::for_model(&t.model, &t.joints))?;
    }

    let scene = Scene::new(subject.mesh, cfg.subject.log_intensity_fg, cfg.subject.log_intensity_bg)
        .usage("invalid scene")?;
    for (k, &scale) in cfg.sim.illumination_scales.iter().enumerate() {
        let name = format!("seq{k:02}");
        let dir = out.join(&name);
        fs::create_dir_all(&dir)?;
        let seed = cfg.seed.wrapping_add(k as u64);
        let sim = simulate_events(&scene, &cam, &traj, &cfg.sim.sim_config(seed, scale))
            .with_context(|| format!("simulating {name}"))?;
        let file = EventFile {
            width: cam.width as u16,
            height: cam.height as u16,
            events: sim.events,
        };
        fs::write(dir.join(EVENTS), encode_events(&file))?;
        fs::write(dir.join(LABELS), encode_labels(file.width, file.height, &sim.labels.is_contour))?;
        if !sim.depth.is_empty() {
            let depth_dir = dir.join("depth");
            fs::create_dir_all(&depth_dir)?;
            for snap in &sim.depth {
                fs::write(depth_dir.join(format!("{:06}.pfm", snap.sample)), encode_pfm(&snap.depth))?;
            }
        }
        let mut frame_count = 0;
        if let Some(fps) = cfg.sim.frames_fps {
            let lit = scene.illuminated(scale)?;
            let frames = render_frames(&lit, &cam, &traj, fps, &BlurConfig::default())?;
            let max = lit.log_intensity_fg.max(lit.log_intensity_bg).exp();
            let frame_dir = dir.join("frames");
            fs::create_dir_all(&frame_dir)?;
            for (i, f) in frames.iter().enumerate() {
                let pgm = encode_pgm(cam.width as usize, cam.height as usize, &f.to_gray8(max));
                fs::write(frame_dir.join(format!("{i:05}.pgm")), pgm)?;
            }
            frame_count = frames.len();
        }
        let contour = sim.labels.is_contour.iter().filter(|&&c| c).count();
        log::info!("{name}: {} events, {contour} on contours", file.events.len());
        manifest.sequences.push(SequenceEntry {
            name,
            info: json!({
                "illumination_scale": scale,
                "seed": seed,
                "events": file.events.len(),
                "contour_events": contour,
                "samples": sim.state.samples,
                "depth_maps": sim.depth.len(),
                "frames": frame_count,
            }),
        });
    }
    manifest.write(out)?;
    Ok(manifest)
}
