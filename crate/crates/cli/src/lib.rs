//! Command-line driver for the event-only scanning pipeline. Every stage
//! reads its inputs from artifact directories and writes a new one with a
//! manifest, so any stage can be rerun on its own.

pub mod carving;
pub mod config;
pub mod error;
pub mod fitting;
pub mod manifest;
pub mod simulate;
pub mod sweep;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use evscan_core::carve::AttenuationMode;
use evscan_core::contour::{ContourProvider, DensityConfig, DEFAULT_THRESHOLD};

use crate::config::{illumination_ladder, Config};
use crate::error::CliResult;
use crate::fitting::GroundTruth;
use crate::manifest::Manifest;
use crate::sweep::SweepSpec;

#[derive(Debug, Parser)]
#[command(name = "evscan", version, about = "Event-only 3D body scanning pipeline")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the subject along the orbit and write events and labels.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Select contour events from a dataset.
    Filter {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        contour: ContourFlags,
    },
    /// Filter, carve and mesh every sequence of a dataset.
    Carve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        contour: ContourFlags,
        #[command(flatten)]
        carve: CarveFlags,
    },
    /// Re-extract meshes from stored weight grids.
    Mesh {
        /// A carve output directory.
        #[arg(long)]
        carve: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Absolute prune threshold.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Fit the body model to carved meshes.
    Fit {
        /// A carve or mesh output directory.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        fit: FitFlags,
    },
    /// Compute PEL-MPJPE and Chamfer distance against ground truth.
    Eval {
        /// A fit, carve or mesh output directory.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gt_joints: Option<PathBuf>,
        #[arg(long)]
        gt_mesh: Option<PathBuf>,
        #[arg(long)]
        cd_samples: Option<usize>,
        /// Metrics file; defaults to metrics.json in the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline over the cartesian product of the declared axes.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, carve, fit and evaluate in one go.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        contour: ContourFlags,
        #[command(flatten)]
        carve: CarveFlags,
        #[command(flatten)]
        fit: FitFlags,
    },
}

#[derive(Debug, Default, Args)]
pub struct SimFlags {
    #[arg(long = "contrast-C")]
    pub contrast: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub orbit_radius: Option<f64>,
    #[arg(long)]
    pub orbit_loops: Option<f64>,
    #[arg(long)]
    pub speed_mult: Option<f64>,
    /// One sequence per value.
    #[arg(long = "illum-scale")]
    pub illum_scale: Vec<f64>,
    /// Nine log-spaced illumination scales from 0.25 to 4.
    #[arg(long, conflicts_with = "illum_scale")]
    pub illum_ladder: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SimFlags {
    pub fn apply(&self, cfg: &mut Config) {
        set(&mut cfg.sim.contrast, self.contrast);
        set(&mut cfg.sim.sample_rate, self.sample_rate);
        set(&mut cfg.orbit.radius, self.orbit_radius);
        set(&mut cfg.orbit.loops, self.orbit_loops);
        set(&mut cfg.orbit.speed_mult, self.speed_mult);
        set(&mut cfg.seed, self.seed);
        if !self.illum_scale.is_empty() {
            cfg.sim.illumination_scales = self.illum_scale.clone();
        }
        if self.illum_ladder {
            cfg.sim.illumination_scales = illumination_ladder();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProviderFlag {
    GtLabels,
    ProbabilityFile,
    DensityHeuristic,
}

#[derive(Debug, Default, Args)]
pub struct ContourFlags {
    #[arg(long, value_enum)]
    pub provider: Option<ProviderFlag>,
    /// Probability cutoff for the probability-file provider.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl ContourFlags {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(p) = self.provider {
            cfg.contour = match p {
                ProviderFlag::GtLabels => ContourProvider::GtLabels,
                ProviderFlag::ProbabilityFile => ContourProvider::ProbabilityFile { threshold: DEFAULT_THRESHOLD },
                ProviderFlag::DensityHeuristic => ContourProvider::DensityHeuristic(DensityConfig::default()),
            };
        }
        if let (Some(t), ContourProvider::ProbabilityFile { threshold }) = (self.threshold, &mut cfg.contour) {
            *threshold = t;
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct CarveFlags {
    #[arg(long, value_parser = parse_attenuation)]
    pub attenuation: Option<AttenuationMode>,
    /// Cells per grid axis.
    #[arg(long)]
    pub voxels: Option<usize>,
    /// Grid edge in meters.
    #[arg(long)]
    pub edge: Option<f64>,
}

fn parse_attenuation(s: &str) -> Result<AttenuationMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown attenuation `{s}` (none, linear, inverse)"))
}

impl CarveFlags {
    pub fn apply(&self, cfg: &mut Config) {
        set(&mut cfg.carve.attenuation, self.attenuation);
        set(&mut cfg.carve.voxels, self.voxels);
        if self.edge.is_some() {
            cfg.carve.edge = self.edge;
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct FitFlags {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub beta_dim: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub fit_seed: Option<u64>,
}

impl FitFlags {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(m) = &self.model {
            cfg.fit.model = Some(config::absolute(m));
        }
        if self.beta_dim.is_some() {
            cfg.fit.optim.beta_dim = self.beta_dim;
        }
        set(&mut cfg.fit.optim.iters, self.iters);
        set(&mut cfg.fit.optim.lr, self.lr);
        set(&mut cfg.fit.optim.n_samples, self.n_samples);
        set(&mut cfg.fit.optim.seed, self.fit_seed);
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn load_or_default(path: Option<&Path>) -> CliResult<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

/// The given config file, or the one recorded upstream.
fn load_or_upstream(path: Option<&Path>, upstream: &Path, stage: &str) -> CliResult<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Manifest::read(upstream, stage)?.config),
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    if let Ok(s) = serde_json::to_string_pretty(v) {
        println!("{s}");
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, out, sim } => {
            let mut cfg = load_or_default(config.as_deref())?;
            sim.apply(&mut cfg);
            let m = simulate::simulate(&cfg, &out)?;
            println!("wrote {} sequence(s) to {}", m.sequences.len(), out.display());
        }
        Command::Filter { dataset, out, config, contour } => {
            let mut cfg = load_or_upstream(config.as_deref(), &dataset, "simulate")?;
            contour.apply(&mut cfg);
            carving::filter(&dataset, Some(&cfg), &out)?;
            println!("wrote contour events to {}", out.display());
        }
        Command::Carve { dataset, out, config, contour, carve } => {
            let mut cfg = load_or_upstream(config.as_deref(), &dataset, "simulate")?;
            contour.apply(&mut cfg);
            carve.apply(&mut cfg);
            let m = carving::carve(&dataset, Some(&cfg), &out)?;
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote carved meshes to {}", out.display());
        }
        Command::Mesh { carve, out, tau } => {
            let m = carving::mesh(&carve, tau, &out)?;
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote meshes to {}", out.display());
        }
        Command::Fit { input, out, config, fit } => {
            let upstream = Manifest::read(&input, "carve").or_else(|_| Manifest::read(&input, "mesh"))?;
            let mut cfg = match &config {
                Some(p) => Config::load(p)?,
                None => upstream.config,
            };
            fit.apply(&mut cfg);
            fitting::fit(&input, Some(&cfg), None, &out)?;
            println!("wrote fits to {}", out.display());
        }
        Command::Eval { input, gt_joints, gt_mesh, cd_samples, out } => {
            let gt = GroundTruth { joints: gt_joints, mesh: gt_mesh };
            let report = fitting::eval(&input, &gt, cd_samples, out.as_deref())?;
            print_json(&report);
        }
        Command::Sweep { spec, out } => {
            let (spec, base) = SweepSpec::load(&spec)?;
            let t = sweep::sweep(&spec, &base, &out)?;
            print!("{}", sweep::to_csv(&t));
        }
        Command::Pipeline { config, out, sim, contour, carve, fit } => {
            let mut cfg = load_or_default(config.as_deref())?;
            sim.apply(&mut cfg);
            contour.apply(&mut cfg);
            carve.apply(&mut cfg);
            fit.apply(&mut cfg);
            if let Some(m) = &cfg.fit.model {
                config::require_file(m, "body model")?;
            }
            let run = sweep::pipeline(&cfg, &out)?;
            if run.insufficient_rays {
                eprintln!("warning: insufficient rays; see {}", run.carve.join(manifest::MANIFEST).display());
            }
            print_json(&run.metrics);
        }
    }
    Ok(())
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let cli = Cli::try_parse_from([
            "evscan", "pipeline", "--out", "x", "--contrast-C", "0.3", "--orbit-loops", "1", "--illum-scale", "0.5",
            "--illum-scale", "2", "--attenuation", "linear", "--voxels", "64", "--beta-dim", "4", "--provider",
            "probability-file", "--threshold", "0.8",
        ])
        .unwrap();
        let Command::Pipeline { sim, contour, carve, fit, .. } = cli.command else {
            panic!("parsed the wrong subcommand");
        };
        let mut cfg = Config::default();
        sim.apply(&mut cfg);
        contour.apply(&mut cfg);
        carve.apply(&mut cfg);
        fit.apply(&mut cfg);
        assert_eq!(cfg.sim.contrast, 0.3);
        assert_eq!(cfg.orbit.loops, 1.0);
        assert_eq!(cfg.sim.illumination_scales, [0.5, 2.0]);
        assert_eq!(cfg.carve.attenuation, AttenuationMode::Linear);
        assert_eq!(cfg.carve.voxels, 64);
        assert_eq!(cfg.fit.optim.beta_dim, Some(4));
        assert_eq!(cfg.contour, ContourProvider::ProbabilityFile { threshold: 0.8 });
    }

    #[test]
    fn bad_flags_exit_with_two() {
        assert_eq!(main_with(["evscan", "carve", "--dataset", "d", "--out", "o", "--attenuation", "cubic"]), 2);
        assert_eq!(main_with(["evscan", "frobnicate"]), 2);
        assert_eq!(main_with(["evscan", "--help"]), 0);
    }
}
