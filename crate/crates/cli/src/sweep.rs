//! End-to-end runs and parameter sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use evscan_core::carve::AttenuationMode;
use evscan_core::metrics::MetricsReport;
use serde::{Deserialize, Serialize};

use crate::carving::carve;
use crate::config::{absolute, Config};
use crate::error::{CliError, CliResult, UsageContext};
use crate::fitting::{eval, fit, GroundTruth};
use crate::manifest::{write_json, Manifest};
use crate::simulate::{simulate, MODEL};

/// Outcome of one end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub dataset: PathBuf,
    pub carve: PathBuf,
    pub fit: Option<PathBuf>,
    pub metrics: MetricsReport,
    pub insufficient_rays: bool,
}

/// Fitting runs when a body model is configured or the dataset carries one.
fn has_model(cfg: &Config, dataset: &Path) -> bool {
    cfg.fit.model.is_some() || dataset.join(MODEL).is_file()
}

/// Carving, fitting and evaluation of an existing dataset.
fn downstream(dataset: &Path, cfg: &Config, out: &Path) -> CliResult<PipelineRun> {
    let carve_dir = out.join("carve");
    let carved = carve(dataset, Some(cfg), &carve_dir)?;
    let fit_dir = if has_model(cfg, dataset) {
        let dir = out.join("fit");
        fit(&carve_dir, None, None, &dir)?;
        Some(dir)
    } else {
        None
    };
    let evaluated = fit_dir.as_deref().unwrap_or(&carve_dir);
    let gt = GroundTruth { joints: None, mesh: None };
    let metrics = eval(evaluated, &gt, None, Some(&out.join("metrics.json")))?;
    Ok(PipelineRun {
        dataset: absolute(dataset),
        carve: absolute(&carve_dir),
        fit: fit_dir.map(|d| absolute(&d)),
        metrics,
        insufficient_rays: !carved.warnings.is_empty(),
    })
}

/// Simulate, carve, fit when a model is available, and evaluate.
pub fn pipeline(cfg: &Config, out: &Path) -> CliResult<PipelineRun> {
    let dataset = out.join("dataset");
    simulate(cfg, &dataset)?;
    let run = downstream(&dataset, cfg, out)?;
    let mut manifest = Manifest::new("pipeline", cfg.clone());
    manifest.inputs.insert("dataset".into(), run.dataset.clone());
    manifest.inputs.insert("carve".into(), run.carve.clone());
    if let Some(f) = &run.fit {
        manifest.inputs.insert("fit".into(), f.clone());
    }
    manifest.write(out)?;
    Ok(run)
}

/// Axes of a sweep; every declared axis needs at least one value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    pub speed_mult: Option<Vec<f64>>,
    pub attenuation: Option<Vec<AttenuationMode>>,
    pub voxels: Option<Vec<usize>>,
    pub beta_dim: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Config file every cell starts from, relative to the sweep file.
    pub base: Option<PathBuf>,
    /// Inline base config, used when `base` is unset.
    pub config: Option<Config>,
    pub axes: Axes,
    /// A cell is an outlier when its CD exceeds this multiple of the median.
    #[serde(default = "default_outlier_factor")]
    pub outlier_factor: f64,
}

fn default_outlier_factor() -> f64 {
    5.0
}

impl SweepSpec {
    pub fn load(path: &Path) -> CliResult<(SweepSpec, Config)> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .usage("loading the sweep")?;
        let spec: SweepSpec = toml::from_str(&text).usage("parsing the sweep")?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let base = match (&spec.base, &spec.config) {
            (Some(b), _) => Config::load(&dir.join(b))?,
            (None, Some(c)) => {
                let mut c = c.clone();
                c.resolve_paths(dir);
                c
            }
            (None, None) => Config::default(),
        };
        Ok((spec, base))
    }

    /// Cartesian product of the declared axes over `base`, with the
    /// simulation-affecting axis outermost.
    pub fn cells(&self, base: &Config) -> CliResult<Vec<Cell>> {
        let a = &self.axes;
        let declared = [
            a.speed_mult.as_ref().map(Vec::len),
            a.attenuation.as_ref().map(Vec::len),
            a.voxels.as_ref().map(Vec::len),
            a.beta_dim.as_ref().map(Vec::len),
        ];
        if declared.iter().all(Option::is_none) {
            return Err(CliError::usage("sweep declares no axes"));
        }
        if declared.iter().flatten().any(|&n| n == 0) {
            return Err(CliError::usage("sweep axis with no values"));
        }
        if !(self.outlier_factor > 1.0) {
            return Err(CliError::usage("outlier_factor must exceed 1"));
        }
        let speeds = a.speed_mult.clone().unwrap_or(vec![base.orbit.speed_mult]);
        let atts = a.attenuation.clone().unwrap_or(vec![base.carve.attenuation]);
        let voxels = a.voxels.clone().unwrap_or(vec![base.carve.voxels]);
        let betas: Vec<Option<usize>> = match &a.beta_dim {
            Some(v) => v.iter().map(|&b| Some(b)).collect(),
            None => vec![base.fit.optim.beta_dim],
        };
        let mut cells = Vec::new();
        for &s in &speeds {
            for &att in &atts {
                for &n in &voxels {
                    for &b in &betas {
                        let mut cfg = base.clone();
                        cfg.orbit.speed_mult = s;
                        cfg.carve.attenuation = att;
                        cfg.carve.voxels = n;
                        cfg.fit.optim.beta_dim = b;
                        cells.push(Cell {
                            speed_mult: s,
                            attenuation: att,
                            voxels: n,
                            beta_dim: b,
                            config: cfg,
                        });
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub speed_mult: f64,
    pub attenuation: AttenuationMode,
    pub voxels: usize,
    pub beta_dim: Option<usize>,
    pub config: Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub speed_mult: f64,
    pub attenuation: AttenuationMode,
    pub voxels: usize,
    pub beta_dim: Option<usize>,
    pub pel_mpjpe_mm: Option<f64>,
    pub cd_mm2: Option<f64>,
    pub rms_mm: Option<f64>,
    pub carved_cd_mm2: Option<f64>,
    pub insufficient_rays: bool,
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub pel_mpjpe_mm: Option<f64>,
    pub cd_mm2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub mean: Means,
    pub mean_without_outliers: Means,
}

fn means<'a>(rows: impl Iterator<Item = &'a SweepRow> + Clone) -> Means {
    let avg = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Means {
        pel_mpjpe_mm: avg(rows.clone().filter_map(|r| r.pel_mpjpe_mm).collect()),
        cd_mm2: avg(rows.filter_map(|r| r.cd_mm2).collect()),
    }
}

/// Flags rows whose CD exceeds `factor` times the median CD.
pub fn flag_outliers(rows: &mut [SweepRow], factor: f64) {
    let mut cds: Vec<f64> = rows.iter().filter_map(|r| r.cd_mm2).collect();
    if cds.is_empty() {
        return;
    }
    cds.sort_by(f64::total_cmp);
    let n = cds.len();
    let median = if n % 2 == 1 { cds[n / 2] } else { 0.5 * (cds[n / 2 - 1] + cds[n / 2]) };
    for r in rows {
        r.outlier = r.cd_mm2.is_some_and(|c| c > factor * median);
    }
}

pub fn table(mut rows: Vec<SweepRow>, factor: f64) -> SweepTable {
    flag_outliers(&mut rows, factor);
    SweepTable {
        mean: means(rows.iter()),
        mean_without_outliers: means(rows.iter().filter(|r| !r.outlier)),
        rows,
    }
}

fn csv_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(t: &SweepTable) -> String {
    let mut out = String::from("speed_mult,attenuation,voxels,beta_dim,pel_mpjpe_mm,cd_mm2,rms_mm,carved_cd_mm2,insufficient_rays,outlier\n");
    for r in &t.rows {
        let att = serde_json::to_value(r.attenuation).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        out.push_str(&format!(
            "{},{att},{},{},{},{},{},{},{},{}\n",
            r.speed_mult,
            r.voxels,
            r.beta_dim.map(|b| b.to_string()).unwrap_or_default(),
            csv_field(r.pel_mpjpe_mm),
            csv_field(r.cd_mm2),
            csv_field(r.rms_mm),
            csv_field(r.carved_cd_mm2),
            r.insufficient_rays,
            r.outlier,
        ));
    }
    out
}

/// Runs every cell, simulating once per distinct speed.
pub fn sweep(spec: &SweepSpec, base: &Config, out: &Path) -> CliResult<SweepTable> {
    let cells = spec.cells(base)?;
    base.validate_sim()?;
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let mut current: Option<(f64, PathBuf)> = None;
    for (k, cell) in cells.iter().enumerate() {
        let dataset = match &current {
            Some((s, d)) if *s == cell.speed_mult => d.clone(),
            _ => {
                let d = out.join(format!("dataset-speed{}", cell.speed_mult));
                simulate(&cell.config, &d)?;
                current = Some((cell.speed_mult, d.clone()));
                d
            }
        };
        let dir = out.join(format!("cell{k:03}"));
        log::info!("cell {k}: speed {} attenuation {:?} voxels {} beta_dim {:?}", cell.speed_mult, cell.attenuation, cell.voxels, cell.beta_dim);
        let run = downstream(&dataset, &cell.config, &dir)?;
        rows.push(SweepRow {
            speed_mult: cell.speed_mult,
            attenuation: cell.attenuation,
            voxels: cell.voxels,
            beta_dim: cell.beta_dim,
            pel_mpjpe_mm: run.metrics.pel_mpjpe_mm,
            cd_mm2: run.metrics.cd_mm2,
            rms_mm: run.metrics.rms_mm,
            carved_cd_mm2: run.metrics.carved_cd_mm2,
            insufficient_rays: run.insufficient_rays,
            outlier: false,
        });
    }
    let t = table(rows, spec.outlier_factor);
    write_json(&out.join("results.json"), &t)?;
    fs::write(out.join("results.csv"), to_csv(&t)).context("writing results.csv")?;
    let mut manifest = Manifest::new("sweep", base.clone());
    manifest.inputs.insert("cells".into(), absolute(out));
    manifest.write(out)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cd: f64) -> SweepRow {
        SweepRow {
            speed_mult: 1.0,
            attenuation: AttenuationMode::Inverse,
            voxels: 128,
            beta_dim: None,
            pel_mpjpe_mm: Some(cd / 10.0),
            cd_mm2: Some(cd),
            rms_mm: None,
            carved_cd_mm2: None,
            insufficient_rays: false,
            outlier: false,
        }
    }

    #[test]
    fn outliers_are_five_times_the_median() {
        let t = table(vec![row(1.0), row(2.0), row(3.0), row(100.0)], 5.0);
        assert_eq!(t.rows.iter().map(|r| r.outlier).collect::<Vec<_>>(), [false, false, false, true]);
        assert_eq!(t.mean.cd_mm2, Some(26.5));
        assert_eq!(t.mean_without_outliers.cd_mm2, Some(2.0));
        let csv = to_csv(&t);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().starts_with("1,inverse,128,,0.1,1,"));
    }

    #[test]
    fn product_of_axes() {
        let spec: SweepSpec = toml::from_str(
            "[axes]\nattenuation = [\"none\", \"linear\", \"inverse\"]\nvoxels = [128, 256]\n",
        )
        .unwrap();
        let cells = spec.cells(&Config::default()).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1].attenuation, AttenuationMode::None);
        assert_eq!(cells[1].config.carve.voxels, 256);
    }

    #[test]
    fn empty_axes_are_config_errors() {
        let none: SweepSpec = toml::from_str("[axes]\n").unwrap();
        assert!(matches!(none.cells(&Config::default()), Err(CliError::Usage(_))));
        let empty: SweepSpec = toml::from_str("[axes]\nvoxels = []\n").unwrap();
        assert!(matches!(empty.cells(&Config::default()), Err(CliError::Usage(_))));
    }
}
