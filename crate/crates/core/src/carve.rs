//! Ray carving. Every contour event defines a ray from the camera center
//! through its pixel; each voxel the ray passes through receives a weight
//! that depends on its distance from the camera. Voxels swept by many
//! contour rays lie outside the subject and are pruned.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{camera_ray, Aabb, CameraIntrinsics, Event, GridSpec, Ray, Vec3, VoxelGrid};
use crate::surface::largest_component;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttenuationMode {
    None,
    Linear,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attenuation {
    pub mode: AttenuationMode,
    /// Base influence of one ray.
    pub r0: f64,
}

impl Attenuation {
    pub fn new(mode: AttenuationMode, r0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::input("base ray influence r0 must be positive"));
        }
        Ok(Attenuation { mode, r0 })
    }
}

impl Default for Attenuation {
    fn default() -> Self {
        Attenuation {
            mode: AttenuationMode::Inverse,
            r0: 1.0,
        }
    }
}

/// Weight a ray contributes at distance `d` meters from the camera.
pub fn attenuate(att: &Attenuation, d: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::domain(format!("distance {d} is negative")));
    }
    Ok(weight(att, d))
}

#[inline]
fn weight(att: &Attenuation, d: f64) -> f64 {
    match att.mode {
        AttenuationMode::None => att.r0,
        AttenuationMode::Linear => (att.r0 - d).max(0.0),
        AttenuationMode::Inverse => att.r0 / (d + 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarveConfig {
    pub grid: GridSpec,
    pub attenuation: Attenuation,
    /// Absolute prune threshold; `None` derives it from the weights.
    pub prune_threshold: Option<f64>,
    /// Slack (seconds) when looking up poses for events at the trajectory ends.
    pub pose_tolerance: f64,
    /// Region considered occupied before carving; defaults to the whole grid.
    pub region: Option<Aabb>,
}

impl CarveConfig {
    pub fn new(grid: GridSpec, attenuation: Attenuation) -> Self {
        CarveConfig {
            grid,
            attenuation,
            prune_threshold: None,
            pose_tolerance: 1e-6,
            region: None,
        }
    }
}

/// Cube centered on the mean camera position, with half-edge equal to the
/// closest horizontal approach of the camera path to that center.
pub fn default_grid(traj: &Trajectory, n: usize) -> Result<GridSpec> {
    let keys = traj.keyframes();
    let center = keys.iter().map(|k| k.center).sum::<Vec3>() / keys.len() as f64;
    let reach = keys
        .iter()
        .map(|k| {
            let d = k.center - center;
            (d.x * d.x + d.z * d.z).sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    if !(reach > 0.0) {
        return Err(Error::input("camera path passes through its own center"));
    }
    GridSpec::cube(center, 2.0 * reach, n)
}

/// Visits voxels whose interior meets the segment `[0, t_max]` of `ray`, in
/// order of increasing distance, with the distance at which the ray enters
/// each (clamped to 0 when the origin lies inside).
pub fn for_each_voxel(spec: &GridSpec, ray: &Ray, t_max: f64, mut visit: impl FnMut(usize, f64)) {
    let Some((t_in, t_out)) = spec.bounds().intersect_ray(ray) else {
        return;
    };
    let t_start = t_in.max(0.0);
    let t_end = t_out.min(t_max);
    if !(t_start < t_end) {
        return;
    }
    let dir = ray.direction();
    let n = spec.dims;
    let p = ray.at(t_start) - spec.origin;
    let mut idx = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_next = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let c = (p[a] / spec.pitch).floor() as i64;
        idx[a] = c.clamp(0, n[a] as i64 - 1);
        if dir[a] > 0.0 {
            step[a] = 1;
            t_next[a] = t_start + ((idx[a] + 1) as f64 * spec.pitch - p[a]) / dir[a];
            t_delta[a] = spec.pitch / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            t_next[a] = t_start + (idx[a] as f64 * spec.pitch - p[a]) / dir[a];
            t_delta[a] = -spec.pitch / dir[a];
        }
    }
    let mut t = t_start;
    loop {
        let axis = if t_next[0] <= t_next[1] && t_next[0] <= t_next[2] {
            0
        } else if t_next[1] <= t_next[2] {
            1
        } else {
            2
        };
        let exit = t_next[axis].min(t_end);
        if exit > t {
            visit(
                idx[0] as usize + n[0] * (idx[1] as usize + n[1] * idx[2] as usize),
                t,
            );
        }
        if t_next[axis] >= t_end {
            return;
        }
        t = t_next[axis];
        idx[axis] += step[axis];
        if idx[axis] < 0 || idx[axis] >= n[axis] as i64 {
            return;
        }
        t_next[axis] += t_delta[axis];
    }
}

/// Collected form of [`for_each_voxel`].
pub fn traverse_ray(spec: &GridSpec, ray: &Ray, t_max: f64) -> Vec<([usize; 3], f64)> {
    let mut out = Vec::new();
    for_each_voxel(spec, ray, t_max, |i, d| out.push((spec.cell_coords(i), d)));
    out
}

#[derive(Debug, Clone)]
pub struct Accumulation {
    pub weights: VoxelGrid<f64>,
    pub rays: usize,
    /// Events without a pose within tolerance of their timestamp.
    pub skipped: usize,
}

/// Largest working set of private partial grids, in bytes.
const PARTIAL_BUDGET: usize = 1 << 30;

/// Sums attenuated contour-ray weights over the grid.
pub fn accumulate(events: &[Event], traj: &Trajectory, cam: &CameraIntrinsics, cfg: &CarveConfig) -> Result<Accumulation> {
    cam.validate()?;
    let spec = cfg.grid;
    let cells = spec.cell_count();
    let workers = rayon::current_num_threads()
        .min(PARTIAL_BUDGET / (cells * std::mem::size_of::<f64>()).max(1))
        .max(1);
    let chunk = events.len().div_ceil(workers).max(1);

    let partials: Vec<(Vec<f64>, usize)> = events
        .par_chunks(chunk)
        .map(|part| {
            let mut grid = vec![0.0f64; cells];
            let mut skipped = 0usize;
            for e in part {
                let Some(pose) = traj.pose_at(e.t, cfg.pose_tolerance) else {
                    skipped += 1;
                    continue;
                };
                let ray = camera_ray(cam, &pose, f64::from(e.x), f64::from(e.y));
                for_each_voxel(&spec, &ray, f64::INFINITY, |i, d| {
                    grid[i] += weight(&cfg.attenuation, d);
                });
            }
            (grid, skipped)
        })
        .collect();

    let mut partials = partials.into_iter();
    let (mut weights, mut skipped) = partials.next().unwrap_or_else(|| (vec![0.0f64; cells], 0));
    for (grid, s) in partials {
        skipped += s;
        weights.par_iter_mut().zip(grid.par_iter()).for_each(|(w, g)| *w += g);
    }
    if !events.is_empty() && skipped as f64 > 0.01 * events.len() as f64 {
        return Err(Error::input(format!(
            "{skipped} of {} events fall outside the trajectory time range",
            events.len()
        )));
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} events outside the trajectory time range");
    }
    Ok(Accumulation {
        weights: VoxelGrid::from_cells(spec, weights)?,
        rays: events.len() - skipped,
        skipped,
    })
}

/// `0.05 ×` the median positive weight, or `None` when nothing was hit.
pub fn default_threshold(weights: &VoxelGrid<f64>) -> Option<f64> {
    let mut pos: Vec<f64> = weights.cells.iter().copied().filter(|&w| w > 0.0).collect();
    if pos.is_empty() {
        return None;
    }
    let mid = pos.len() / 2;
    let (_, m, _) = pos.select_nth_unstable_by(mid, f64::total_cmp);
    Some(0.05 * *m)
}

/// Occupancy: 1 where the weight is at most `tau` and the voxel belongs to
/// `region` (the whole grid when `None`).
pub fn prune(weights: &VoxelGrid<f64>, tau: f64, region: Option<&VoxelGrid<u8>>) -> Result<VoxelGrid<u8>> {
    if !(tau > 0.0) {
        return Err(Error::input("prune threshold must be positive"));
    }
    if let Some(r) = region {
        if r.spec != weights.spec {
            return Err(Error::input("region grid does not match the weight grid"));
        }
    }
    let cells = weights
        .cells
        .par_iter()
        .enumerate()
        .map(|(i, &w)| u8::from(w <= tau && region.map_or(true, |r| r.cells[i] != 0)))
        .collect();
    VoxelGrid::from_cells(weights.spec, cells)
}

/// Voxels whose centers lie in `b`.
pub fn box_region(spec: &GridSpec, b: &Aabb) -> VoxelGrid<u8> {
    let cells = (0..spec.cell_count())
        .into_par_iter()
        .map(|i| u8::from(b.contains(&spec.cell_center(spec.cell_coords(i)))))
        .collect();
    VoxelGrid { spec: *spec, cells }
}

/// Coarse visual hull from contour events alone. The stream is cut into
/// `windows` equal time slices; a voxel survives if, in every slice with
/// events, it projects inside the pixel bounding box of that slice's events
/// (grown by `margin` pixels) at the slice's middle pose.
///
/// Contour rays never cross space that every view sees outside the
/// silhouette on the same side (above and below the subject for a level
/// orbit), so weights alone cannot remove it.
///
/// Each slice has to hold enough motion for the whole outline to move by a
/// pixel or more. Outline parts moving along themselves (the top of a
/// sphere panning sideways) otherwise fire nothing in that slice and the box
/// clips the subject.
pub fn view_bounds_region(
    events: &[Event],
    traj: &Trajectory,
    cam: &CameraIntrinsics,
    spec: &GridSpec,
    windows: usize,
    margin: f64,
) -> Result<VoxelGrid<u8>> {
    if windows == 0 {
        return Err(Error::input("view-bound window count must be positive"));
    }
    let span = traj.duration() / windows as f64;
    let mut boxes = vec![(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY); windows];
    for e in events {
        let k = (((e.t - traj.start()) / span).floor() as i64).clamp(0, windows as i64 - 1) as usize;
        let b = &mut boxes[k];
        let (x, y) = (f64::from(e.x), f64::from(e.y));
        *b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
    }
    let views: Vec<_> = boxes
        .iter()
        .enumerate()
        .filter(|(_, b)| b.0.is_finite())
        .filter_map(|(k, b)| {
            let t = traj.start() + (k as f64 + 0.5) * span;
            traj.pose_at(t, 0.0).map(|p| (p, *b))
        })
        .collect();
    let cells = (0..spec.cell_count())
        .into_par_iter()
        .map(|i| {
            let x = spec.cell_center(spec.cell_coords(i));
            let inside = views.iter().all(|(pose, b)| {
                let c = pose.world_to_camera(&x);
                if c.z <= 0.0 {
                    return false;
                }
                let u = cam.fx * c.x / c.z + cam.cx;
                let v = cam.fy * c.y / c.z + cam.cy;
                u >= b.0 - margin && u <= b.2 + margin && v >= b.1 - margin && v <= b.3 + margin
            });
            u8::from(inside)
        })
        .collect();
    Ok(VoxelGrid { spec: *spec, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarveDiagnostics {
    pub occupied: usize,
    pub largest_component: usize,
    /// Occupied voxels outside the largest 6-connected component, as a
    /// fraction of all occupied voxels.
    pub debris_fraction: f64,
}

/// Debris fraction above which carving is reported as ray-starved.
pub const INSUFFICIENT_RAYS_BOUND: f64 = 1e-3;

impl CarveDiagnostics {
    pub fn of(occupancy: &VoxelGrid<u8>) -> Self {
        let occupied = occupancy.cells.iter().filter(|&&c| c != 0).count();
        let (_, largest) = largest_component(occupancy);
        CarveDiagnostics {
            occupied,
            largest_component: largest,
            debris_fraction: if occupied == 0 {
                0.0
            } else {
                (occupied - largest) as f64 / occupied as f64
            },
        }
    }

    /// Too few rays per voxel leave uncarved pockets scattered through the
    /// exterior, which show up as many small disconnected components.
    pub fn insufficient_rays(&self) -> bool {
        self.debris_fraction > INSUFFICIENT_RAYS_BOUND
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polarity;
    use crate::trajectory::Keyframe;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn attenuation_values() {
        let inv = Attenuation::new(AttenuationMode::Inverse, 1.0).unwrap();
        assert_eq!(attenuate(&inv, 0.0).unwrap(), 1.0);
        assert_eq!(attenuate(&inv, 1.0).unwrap(), 0.5);
        let lin = Attenuation::new(AttenuationMode::Linear, 1.0).unwrap();
        assert_eq!(attenuate(&lin, 2.0).unwrap(), 0.0);
        assert_eq!(attenuate(&lin, 0.25).unwrap(), 0.75);
        let none = Attenuation::new(AttenuationMode::None, 2.0).unwrap();
        assert_eq!(attenuate(&none, 7.0).unwrap(), 2.0);
        assert!(matches!(attenuate(&inv, -0.1), Err(Error::Domain(_))));
        assert!(Attenuation::new(AttenuationMode::None, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn inverse_is_strictly_decreasing(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            prop_assume!(a < b);
            let inv = Attenuation::default();
            prop_assert!(attenuate(&inv, a).unwrap() > attenuate(&inv, b).unwrap());
        }

        #[test]
        fn linear_is_non_negative(d in 0.0f64..10.0, r0 in 0.01f64..5.0) {
            let lin = Attenuation::new(AttenuationMode::Linear, r0).unwrap();
            let w = attenuate(&lin, d).unwrap();
            prop_assert!(w >= 0.0);
            if d >= r0 { prop_assert_eq!(w, 0.0); }
        }
    }

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new(Vec3::zeros(), 1.0 / n as f64, [n; 3]).unwrap()
    }

    #[test]
    fn axis_aligned_ray_through_cell_centers() {
        let spec = unit_grid(4);
        let ray = Ray::new(Vec3::new(-1.0, 0.375, 0.625), Vec3::x()).unwrap();
        let hits = traverse_ray(&spec, &ray, f64::INFINITY);
        assert_eq!(hits.len(), 4);
        for (k, (idx, d)) in hits.iter().enumerate() {
            assert_eq!(*idx, [k, 1, 2]);
            assert_relative_eq!(*d, 1.0 + 0.25 * k as f64, epsilon = 1e-12);
        }
        let miss = Ray::new(Vec3::new(-1.0, 2.0, 0.5), Vec3::x()).unwrap();
        assert!(traverse_ray(&spec, &miss, f64::INFINITY).is_empty());
        // Segment stops inside the second voxel.
        assert_eq!(traverse_ray(&spec, &ray, 1.3).len(), 2);
    }

    /// Slab interval of the ray inside a voxel, clipped to `[0, t_max]`.
    fn overlap(b: &Aabb, ray: &Ray, t_max: f64) -> (f64, f64) {
        let (mut t0, mut t1) = (0.0f64, t_max);
        for a in 0..3 {
            let o = ray.origin[a];
            let d = ray.direction()[a];
            if d == 0.0 {
                if o <= b.min[a] || o >= b.max[a] {
                    return (1.0, 0.0);
                }
                continue;
            }
            let (x, y) = ((b.min[a] - o) / d, (b.max[a] - o) / d);
            t0 = t0.max(x.min(y));
            t1 = t1.min(x.max(y));
        }
        (t0, t1)
    }

    #[test]
    fn traversal_matches_brute_force() {
        let spec = unit_grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut compared = 0;
        while compared < 1000 {
            let o = Vec3::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5));
            let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let Ok(ray) = Ray::new(o, d) else { continue };
            let t_max = if rng.gen_bool(0.3) { rng.gen_range(0.1..2.0) } else { f64::INFINITY };
            let mut expected = Vec::new();
            let mut grazing = false;
            for i in 0..spec.cell_count() {
                let c = spec.cell_coords(i);
                let (t0, t1) = overlap(&spec.cell_bounds(c), &ray, t_max);
                if (t1 - t0).abs() <= 1e-9 {
                    grazing = true;
                    break;
                }
                if t1 > t0 {
                    expected.push((c, t0));
                }
            }
            if grazing {
                continue;
            }
            expected.sort_by(|a, b| a.1.total_cmp(&b.1));
            let got = traverse_ray(&spec, &ray, t_max);
            let mut a: Vec<_> = got.iter().map(|g| g.0).collect();
            let mut b: Vec<_> = expected.iter().map(|e| e.0).collect();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
            assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));
            for (g, e) in got.iter().zip(&expected) {
                assert!((g.1 - e.1).abs() < 1e-9);
            }
            compared += 1;
        }
    }

    fn still_traj() -> Trajectory {
        let eye = Vec3::new(0.5, 0.5, -1.0);
        let q = crate::geometry::look_at(&eye, &Vec3::new(0.5, 0.5, 0.5), &Vec3::y()).unwrap();
        Trajectory::new(vec![
            Keyframe { t: 0.0, center: eye, orientation: q },
            Keyframe { t: 1.0, center: eye, orientation: q },
        ])
        .unwrap()
    }

    #[test]
    fn accumulate_basics_and_additivity() {
        let spec = unit_grid(16);
        let cam = CameraIntrinsics::new(20, 20, 20.0, 20.0, 10.0, 10.0).unwrap();
        let traj = still_traj();
        let none = CarveConfig::new(spec, Attenuation::new(AttenuationMode::None, 1.0).unwrap());
        let empty = accumulate(&[], &traj, &cam, &none).unwrap();
        assert!(empty.weights.cells.iter().all(|&w| w == 0.0));

        let one = [Event::new(10, 10, 0.5, Polarity::Positive)];
        let w = accumulate(&one, &traj, &cam, &none).unwrap().weights;
        assert!(w.cells.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(w.cells.iter().filter(|&&v| v == 1.0).count(), 16);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<Event> = (0..300)
            .map(|_| Event::new(rng.gen_range(0..20), rng.gen_range(0..20), rng.gen_range(0.0..1.0), Polarity::Positive))
            .collect();
        let b: Vec<Event> = a.iter().rev().copied().collect();
        for mode in [AttenuationMode::None, AttenuationMode::Inverse, AttenuationMode::Linear] {
            let cfg = CarveConfig::new(spec, Attenuation::new(mode, 1.0).unwrap());
            let wa = accumulate(&a, &traj, &cam, &cfg).unwrap().weights;
            let wb = accumulate(&b, &traj, &cam, &cfg).unwrap().weights;
            let ab: Vec<Event> = a.iter().chain(&b).copied().collect();
            let wab = accumulate(&ab, &traj, &cam, &cfg).unwrap().weights;
            for i in 0..spec.cell_count() {
                let sum = wa.cells[i] + wb.cells[i];
                if mode == AttenuationMode::None {
                    assert_eq!(wab.cells[i], sum);
                    assert_eq!(wab.cells[i], 2.0 * wa.cells[i]);
                } else {
                    assert!((wab.cells[i] - sum).abs() <= 1e-12 * sum.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn events_outside_the_trajectory() {
        let spec = unit_grid(8);
        let cam = CameraIntrinsics::new(20, 20, 20.0, 20.0, 10.0, 10.0).unwrap();
        let cfg = CarveConfig::new(spec, Attenuation::default());
        let mut events: Vec<Event> = (0..200).map(|i| Event::new(10, 10, i as f64 / 200.0, Polarity::Positive)).collect();
        events.push(Event::new(10, 10, 5.0, Polarity::Positive));
        let acc = accumulate(&events, &still_traj(), &cam, &cfg).unwrap();
        assert_eq!(acc.skipped, 1);
        events.push(Event::new(10, 10, 6.0, Polarity::Positive));
        events.push(Event::new(10, 10, 7.0, Polarity::Positive));
        assert!(accumulate(&events, &still_traj(), &cam, &cfg).is_err());
    }

    #[test]
    fn prune_cases() {
        let spec = unit_grid(4);
        let zero = VoxelGrid::filled(spec, 0.0);
        assert!(prune(&zero, 0.1, None).unwrap().cells.iter().all(|&c| c == 1));
        let high = VoxelGrid::filled(spec, 5.0);
        assert!(prune(&high, 0.1, None).unwrap().cells.iter().all(|&c| c == 0));
        let region = box_region(&spec, &Aabb { min: Vec3::zeros(), max: Vec3::new(0.5, 1.0, 1.0) });
        let occ = prune(&zero, 0.1, Some(&region)).unwrap();
        assert_eq!(occ.cells.iter().filter(|&&c| c == 1).count(), 32);
        assert!(prune(&zero, 0.0, None).is_err());
        assert_eq!(default_threshold(&zero), None);
        let mut w = zero.clone();
        w.cells[..3].copy_from_slice(&[1.0, 2.0, 3.0]);
        assert_eq!(default_threshold(&w), Some(0.1));
    }
}
