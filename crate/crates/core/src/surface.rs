//! Iso-surface extraction from voxel grids and area-uniform surface sampling.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriMesh, Vec3, VoxelGrid};
use crate::mc_tables::{CORNERS, EDGES, EDGE_TABLE, TRIANGLE_TABLE};

/// Marching cubes over the voxel centers. The grid is treated as surrounded
/// by one layer of empty cells so that solids touching the border still
/// produce closed surfaces. Iso-vertices sit at edge midpoints.
pub fn marching_cubes<T: Copy + Into<f64>>(grid: &VoxelGrid<T>, iso: f64) -> Result<TriMesh> {
    let spec = grid.spec;
    let n = spec.dims;
    if n.iter().any(|&d| d < 2) {
        return Err(Error::input("marching cubes needs at least 2 cells per axis"));
    }
    let value = |x: i64, y: i64, z: i64| -> f64 {
        if x < 0 || y < 0 || z < 0 || x >= n[0] as i64 || y >= n[1] as i64 || z >= n[2] as i64 {
            f64::NEG_INFINITY
        } else {
            (*grid.get([x as usize, y as usize, z as usize])).into()
        }
    };
    let position = |p: [i64; 3]| spec.origin + (Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) + Vec3::repeat(0.5)) * spec.pitch;

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    // Shared-edge vertex cache keyed by (lower sample, axis).
    let mut cache: HashMap<([i64; 3], u8), usize> = HashMap::new();
    for z in -1..n[2] as i64 {
        for y in -1..n[1] as i64 {
            for x in -1..n[0] as i64 {
                let mut case = 0usize;
                for (i, c) in CORNERS.iter().enumerate() {
                    if value(x + c[0] as i64, y + c[1] as i64, z + c[2] as i64) < iso {
                        case |= 1 << i;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut edge_vertex = [usize::MAX; 12];
                for (e, &(a, b)) in EDGES.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    let (ca, cb) = (CORNERS[a], CORNERS[b]);
                    let lo = [
                        x + ca[0].min(cb[0]) as i64,
                        y + ca[1].min(cb[1]) as i64,
                        z + ca[2].min(cb[2]) as i64,
                    ];
                    let axis = (0..3).find(|&k| ca[k] != cb[k]).unwrap() as u8;
                    edge_vertex[e] = *cache.entry((lo, axis)).or_insert_with(|| {
                        let mut hi = lo;
                        hi[axis as usize] += 1;
                        vertices.push((position(lo) + position(hi)) * 0.5);
                        vertices.len() - 1
                    });
                }
                for tri in TRIANGLE_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    faces.push([
                        edge_vertex[tri[0] as usize],
                        edge_vertex[tri[1] as usize],
                        edge_vertex[tri[2] as usize],
                    ]);
                }
            }
        }
    }
    let mut mesh = TriMesh::new(vertices, faces)?;
    if mesh.signed_volume() < 0.0 {
        for f in &mut mesh.faces {
            f.swap(1, 2);
        }
    }
    Ok(mesh)
}

/// Keeps only the largest 6-connected set of non-zero cells. Returns the
/// filtered grid and the size of that component. Ties go to the component
/// containing the lowest linear index.
pub fn largest_component(grid: &VoxelGrid<u8>) -> (VoxelGrid<u8>, usize) {
    let comps = components(grid);
    let best = comps.iter().reduce(|a, b| if b.size > a.size { b } else { a });
    keep(grid, best)
}

/// The component nearest `focus` (the point the cameras fixate), ties going
/// to the larger one. Components touching the grid border are passed over
/// unless nothing else is occupied.
///
/// Contour events only fire where the silhouette moves across the image, so
/// free space that no moving contour sweeps stays occupied: above and below
/// the subject for a planar orbit (reaching the border), and in concavities
/// such as the gap between arms and torso, where it forms closed blobs that
/// can outgrow the subject itself.
pub fn subject_component(grid: &VoxelGrid<u8>, focus: &Vec3) -> (VoxelGrid<u8>, usize) {
    let comps = components(grid);
    let all_border = comps.iter().all(|c| c.border);
    let spec = &grid.spec;
    let scored = comps.iter().filter(|c| all_border || !c.border).map(|c| {
        let d = c
            .cells
            .iter()
            .map(|&i| (spec.cell_center(spec.cell_coords(i)) - focus).norm())
            .fold(f64::INFINITY, f64::min);
        (d, c)
    });
    // Distances within half a voxel count as equal.
    let best = scored
        .reduce(|a, b| {
            let closer = if (a.0 - b.0).abs() <= 0.5 * spec.pitch { b.1.size > a.1.size } else { b.0 < a.0 };
            if closer {
                b
            } else {
                a
            }
        })
        .map(|(_, c)| c);
    keep(grid, best)
}

struct Component {
    size: usize,
    border: bool,
    cells: Vec<usize>,
}

fn components(grid: &VoxelGrid<u8>) -> Vec<Component> {
    let spec = grid.spec;
    let n = spec.dims;
    let mut label = vec![0u32; grid.cells.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..grid.cells.len() {
        if grid.cells[start] == 0 || label[start] != 0 {
            continue;
        }
        let id = out.len() as u32 + 1;
        label[start] = id;
        queue.push_back(start);
        let mut cells = Vec::new();
        let mut border = false;
        while let Some(i) = queue.pop_front() {
            cells.push(i);
            let [x, y, z] = spec.cell_coords(i);
            border |= x == 0 || y == 0 || z == 0 || x + 1 == n[0] || y + 1 == n[1] || z + 1 == n[2];
            let neighbors = [
                (x > 0).then(|| i - 1),
                (x + 1 < n[0]).then(|| i + 1),
                (y > 0).then(|| i - n[0]),
                (y + 1 < n[1]).then(|| i + n[0]),
                (z > 0).then(|| i - n[0] * n[1]),
                (z + 1 < n[2]).then(|| i + n[0] * n[1]),
            ];
            for j in neighbors.into_iter().flatten() {
                if grid.cells[j] != 0 && label[j] == 0 {
                    label[j] = id;
                    queue.push_back(j);
                }
            }
        }
        out.push(Component { size: cells.len(), border, cells });
    }
    out
}

fn keep(grid: &VoxelGrid<u8>, chosen: Option<&Component>) -> (VoxelGrid<u8>, usize) {
    let mut cells = vec![0u8; grid.cells.len()];
    let Some(c) = chosen else {
        return (VoxelGrid { spec: grid.spec, cells }, 0);
    };
    for &i in &c.cells {
        cells[i] = 1;
    }
    (VoxelGrid { spec: grid.spec, cells }, c.size)
}

/// A point on a mesh given by its face and barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub face: usize,
    pub bary: [f64; 3],
}

impl SurfaceSample {
    pub fn point(&self, mesh: &TriMesh) -> Vec3 {
        let [a, b, c] = mesh.triangle(self.face);
        a * self.bary[0] + b * self.bary[1] + c * self.bary[2]
    }
}

/// `n` area-uniform samples: face chosen proportionally to area, then a
/// uniform point within it.
pub fn sample_surface_barycentric(mesh: &TriMesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    if mesh.faces.is_empty() {
        return Err(Error::input("cannot sample an empty mesh"));
    }
    if n == 0 {
        return Err(Error::input("sample count must be positive"));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let r = rng.gen::<f64>() * total;
            let face = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
            let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            SurfaceSample {
                face,
                bary: [1.0 - u - v, u, v],
            }
        })
        .collect())
}

pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud> {
    Ok(PointCloud::new(
        sample_surface_barycentric(mesh, n, seed)?
            .iter()
            .map(|s| s.point(mesh))
            .collect(),
    ))
}
