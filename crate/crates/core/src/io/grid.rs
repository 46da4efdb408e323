//! Voxel grid dump:
//! `EVG1 | origin 3×f64 | pitch f64 | dims 3×u32 | cells f32 (X fastest)`.

use super::Reader;
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Vec3, VoxelGrid};

pub fn encode_grid<T: Copy + Into<f64>>(grid: &VoxelGrid<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 32 + 12 + 4 * grid.cells.len());
    out.extend_from_slice(b"EVG1");
    for v in grid.spec.origin.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&grid.spec.pitch.to_le_bytes());
    for &d in &grid.spec.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &c in &grid.cells {
        out.extend_from_slice(&(c.into() as f32).to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<VoxelGrid<f32>> {
    let mut r = Reader::new(bytes, "grid");
    r.magic(b"EVG1")?;
    let origin = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
    let pitch = r.f64()?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let spec = GridSpec::new(origin, pitch, dims).map_err(|e| Error::format("grid", e.to_string()))?;
    let n = spec.cell_count();
    if n.checked_mul(4) != Some(r.remaining()) {
        return Err(Error::format(
            "grid",
            format!("{n} cells declared but {} payload bytes", r.remaining()),
        ));
    }
    let mut cells = Vec::with_capacity(n);
    for _ in 0..n {
        cells.push(r.f32()?);
    }
    VoxelGrid::from_cells(spec, cells)
}
