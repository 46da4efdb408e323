//! Artifact manifests and small JSON side files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context};
use evscan_core::body::BodyModel;
use evscan_core::geometry::Vec3;
use evscan_core::toy::JOINT_NAMES;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// Everything needed to regenerate an artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub config: Config,
    /// Upstream artifact directories and files, by role.
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub sequences: Vec<SequenceEntry>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    /// Subdirectory holding the sequence's files.
    pub name: String,
    #[serde(default)]
    pub info: serde_json::Value,
}

impl Manifest {
    pub fn new(stage: &str, config: Config) -> Self {
        Manifest {
            tool: "evscan".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            stage: stage.into(),
            config,
            inputs: BTreeMap::new(),
            sequences: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Reads `dir/manifest.json`, insisting on the given stage.
    pub fn read(dir: &Path, stage: &str) -> CliResult<Manifest> {
        let path = dir.join(MANIFEST);
        let m: Manifest = read_json(&path).map_err(CliError::Usage)?;
        if m.stage != stage {
            return Err(CliError::usage(format!(
                "{} is a `{}` artifact, expected `{stage}`",
                dir.display(),
                m.stage
            )));
        }
        Ok(m)
    }

    /// Writes the manifest and the resolved config beside it.
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        write_json(&dir.join(MANIFEST), self)?;
        std::fs::write(dir.join("config.toml"), self.config.to_toml()?)?;
        Ok(())
    }

    pub fn input(&self, role: &str) -> CliResult<&Path> {
        self.inputs
            .get(role)
            .map(PathBuf::as_path)
            .ok_or_else(|| CliError::usage(format!("manifest has no `{role}` input")))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Named joint positions in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointsFile {
    pub names: Vec<String>,
    /// Index of the joint used for pelvis alignment.
    pub pelvis: usize,
    pub positions: Vec<[f64; 3]>,
}

impl JointsFile {
    pub fn for_model(model: &BodyModel, joints: &[Vec3]) -> Self {
        let names = if model.joint_count() == JOINT_NAMES.len() {
            JOINT_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..model.joint_count()).map(|j| format!("joint_{j}")).collect()
        };
        let pelvis = model.parents().iter().position(Option::is_none).unwrap_or(0);
        JointsFile {
            names,
            pelvis,
            positions: joints.iter().map(|j| [j.x, j.y, j.z]).collect(),
        }
    }

    pub fn points(&self) -> Vec<Vec3> {
        self.positions.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect()
    }

    /// Rejects files whose joints are not in the same order as `other`.
    pub fn check_matches(&self, other: &JointsFile) -> anyhow::Result<()> {
        ensure!(
            self.positions.len() == other.positions.len(),
            "{} joints vs {} joints",
            self.positions.len(),
            other.positions.len()
        );
        ensure!(self.names == other.names, "joint orderings differ");
        ensure!(self.pelvis == other.pelvis, "pelvis indices differ");
        ensure!(self.names.len() == self.positions.len(), "joint names and positions differ in length");
        Ok(())
    }
}
