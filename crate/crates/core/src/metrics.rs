//! Evaluation metrics: joint position error after pelvis alignment, and the
//! Chamfer distance between two surfaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::nearest_all;
use crate::geometry::{PointCloud, TriMesh, Vec3};
use crate::kdtree::KdTree;
use crate::surface::sample_surface;

/// Samples per mesh for the Chamfer distance.
pub const DEFAULT_CD_SAMPLES: usize = 1_000_000;

/// Mean joint position error in millimeters.
pub fn mpjpe(est: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    if est.len() != gt.len() || est.is_empty() {
        return Err(Error::input(format!("{} estimated joints for {} ground-truth joints", est.len(), gt.len())));
    }
    let sum: f64 = est.iter().zip(gt).map(|(a, b)| (a - b).norm()).sum();
    Ok(sum / est.len() as f64 * 1000.0)
}

/// Joints relative to the pelvis.
pub fn pel_align(joints: &[Vec3], pelvis: usize) -> Result<Vec<Vec3>> {
    let root = *joints
        .get(pelvis)
        .ok_or_else(|| Error::input(format!("pelvis index {pelvis} out of {} joints", joints.len())))?;
    Ok(joints.iter().map(|j| j - root).collect())
}

pub fn pel_mpjpe(est: &[Vec3], gt: &[Vec3], pelvis: usize) -> Result<f64> {
    mpjpe(&pel_align(est, pelvis)?, &pel_align(gt, pelvis)?)
}

/// Mean squared nearest-neighbor distance from `X` to `X̂` plus from `X̂`
/// to `X`, in m².
pub fn chamfer_distance_points(x: &PointCloud, x_hat: &PointCloud) -> Result<f64> {
    if x.is_empty() || x_hat.is_empty() {
        return Err(Error::input("chamfer distance needs two non-empty clouds"));
    }
    let mean = |from: &PointCloud, to: &PointCloud| {
        let tree = KdTree::new(to.points.clone());
        let d: Vec<f64> = nearest_all(&tree, &from.points).iter().map(|x| x.1).collect();
        d.iter().sum::<f64>() / d.len() as f64
    };
    Ok(mean(x, x_hat) + mean(x_hat, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChamferReport {
    /// Chamfer distance in mm².
    pub cd_mm2: f64,
    /// `√(CD/2)` in mm.
    pub rms_mm: f64,
}

impl ChamferReport {
    pub fn from_m2(cd: f64) -> Self {
        let cd_mm2 = cd * 1e6;
        ChamferReport {
            cd_mm2,
            rms_mm: (cd_mm2 / 2.0).sqrt(),
        }
    }
}

/// Chamfer distance between `n` area-uniform samples of each mesh. Both
/// meshes are sampled with the same seed.
pub fn chamfer_distance(gt: &TriMesh, est: &TriMesh, n: usize, seed: u64) -> Result<ChamferReport> {
    if gt.is_empty() || est.is_empty() {
        return Err(Error::input("chamfer distance needs two non-empty meshes"));
    }
    let x = sample_surface(gt, n, seed)?;
    let x_hat = sample_surface(est, n, seed)?;
    Ok(ChamferReport::from_m2(chamfer_distance_points(&x, &x_hat)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub name: String,
    pub pel_mpjpe_mm: Option<f64>,
    pub cd_mm2: Option<f64>,
    pub rms_mm: Option<f64>,
    /// Chamfer distance of the carved mesh, before fitting.
    pub carved_cd_mm2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pel_mpjpe_mm: Option<f64>,
    pub cd_mm2: Option<f64>,
    pub rms_mm: Option<f64>,
    pub carved_cd_mm2: Option<f64>,
    pub per_sequence: Vec<SequenceMetrics>,
}

/// Averages every metric over the sequences that report it.
pub fn aggregate(per_sequence: Vec<SequenceMetrics>) -> MetricsReport {
    let mean = |f: fn(&SequenceMetrics) -> Option<f64>| {
        let v: Vec<f64> = per_sequence.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    MetricsReport {
        pel_mpjpe_mm: mean(|s| s.pel_mpjpe_mm),
        cd_mm2: mean(|s| s.cd_mm2),
        rms_mm: mean(|s| s.rms_mm),
        carved_cd_mm2: mean(|s| s.carved_cd_mm2),
        per_sequence,
    }
}
