//! Selection of contour events from a raw stream.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Event;
use crate::sim::ContourLabelSet;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Where contour decisions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContourProvider {
    /// Simulator ground truth.
    GtLabels,
    /// Per-event probabilities from an external classifier.
    ProbabilityFile {
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    DensityHeuristic(DensityConfig),
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityConfig {
    /// Events per window.
    pub window: usize,
    /// Neighborhood radius in pixels.
    pub radius: f64,
    pub quantile: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            window: 10_000,
            radius: 3.0,
            quantile: 0.5,
        }
    }
}

pub fn filter_gt(events: &[Event], labels: &ContourLabelSet) -> Result<Vec<Event>> {
    if labels.len() != events.len() {
        return Err(Error::input(format!(
            "{} labels for {} events",
            labels.len(),
            events.len()
        )));
    }
    Ok(events
        .iter()
        .zip(&labels.is_contour)
        .filter(|(_, &c)| c)
        .map(|(e, _)| *e)
        .collect())
}

/// Keeps events whose contour probability is at least `threshold`.
pub fn filter_probabilities(events: &[Event], probabilities: &[f32], threshold: f64) -> Result<Vec<Event>> {
    if probabilities.len() != events.len() {
        return Err(Error::input(format!(
            "{} probabilities for {} events",
            probabilities.len(),
            events.len()
        )));
    }
    if let Some(i) = probabilities.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::input(format!(
            "probability {} at index {i} is outside [0, 1]",
            probabilities[i]
        )));
    }
    if threshold.is_nan() {
        return Err(Error::input("threshold is NaN"));
    }
    Ok(events
        .iter()
        .zip(probabilities)
        .filter(|(_, &p)| f64::from(p) >= threshold)
        .map(|(e, _)| *e)
        .collect())
}

/// Fallback without labels: within consecutive windows of `window` events,
/// keeps events whose neighborhood count (other events of the same window
/// within `radius` pixels) reaches the `quantile` of the window's counts.
pub fn filter_density(events: &[Event], cfg: &DensityConfig) -> Result<Vec<Event>> {
    if cfg.window == 0 {
        return Err(Error::input("density window must be positive"));
    }
    if !(cfg.radius >= 0.0) || !(0.0..=1.0).contains(&cfg.quantile) {
        return Err(Error::input("density radius must be non-negative and quantile in [0, 1]"));
    }
    let r = cfg.radius.floor() as i32;
    let r2 = cfg.radius * cfg.radius;
    let offsets: Vec<(i32, i32)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| f64::from(dx * dx + dy * dy) <= r2)
        .collect();
    let kept: Vec<Vec<Event>> = events
        .par_chunks(cfg.window)
        .map(|chunk| {
            let counts = neighborhood_counts(chunk, &offsets);
            let cut = nearest_rank(&counts, cfg.quantile);
            chunk
                .iter()
                .zip(&counts)
                .filter(|(_, &c)| c >= cut)
                .map(|(e, _)| *e)
                .collect()
        })
        .collect();
    Ok(kept.concat())
}

fn neighborhood_counts(chunk: &[Event], offsets: &[(i32, i32)]) -> Vec<u32> {
    let mut per_pixel: HashMap<(i32, i32), u32> = HashMap::new();
    for e in chunk {
        *per_pixel.entry((i32::from(e.x), i32::from(e.y))).or_default() += 1;
    }
    chunk
        .iter()
        .map(|e| {
            let (x, y) = (i32::from(e.x), i32::from(e.y));
            let total: u32 = offsets
                .iter()
                .filter_map(|(dx, dy)| per_pixel.get(&(x + dx, y + dy)))
                .sum();
            total - 1
        })
        .collect()
}

/// Nearest-rank quantile; `q = 0` gives the minimum.
fn nearest_rank(values: &[u32], q: f64) -> u32 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}
