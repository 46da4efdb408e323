//! Closed triangle-mesh primitives used as scan subjects and as building
//! blocks of the toy body model. All meshes are wound outward.

use nalgebra::Matrix3;

use crate::geometry::{TriMesh, Vec3};

/// Latitude/longitude sphere.
pub fn uv_sphere(center: Vec3, radius: f64, slices: usize, stacks: usize) -> TriMesh {
    let slices = slices.max(3);
    let stacks = stacks.max(2);
    let mut vertices = vec![center - Vec3::z() * radius];
    let mut rings = Vec::new();
    for i in 1..stacks {
        let polar = std::f64::consts::PI * i as f64 / stacks as f64;
        let (z, rho) = (-polar.cos() * radius, polar.sin() * radius);
        let start = vertices.len();
        for j in 0..slices {
            let phi = std::f64::consts::TAU * j as f64 / slices as f64;
            vertices.push(center + Vec3::new(rho * phi.cos(), rho * phi.sin(), z));
        }
        rings.push(start);
    }
    vertices.push(center + Vec3::z() * radius);
    let faces = stitch_rings(0, &rings, vertices.len() - 1, slices);
    TriMesh { vertices, faces }
}

fn stitch_rings(bottom: usize, rings: &[usize], top: usize, slices: usize) -> Vec<[usize; 3]> {
    let mut faces = Vec::with_capacity(2 * slices * (rings.len() + 1));
    let r0 = rings[0];
    for j in 0..slices {
        faces.push([bottom, r0 + (j + 1) % slices, r0 + j]);
    }
    for w in rings.windows(2) {
        let (a, b) = (w[0], w[1]);
        for j in 0..slices {
            let jn = (j + 1) % slices;
            faces.push([a + j, a + jn, b + jn]);
            faces.push([a + j, b + jn, b + j]);
        }
    }
    let rl = rings[rings.len() - 1];
    for j in 0..slices {
        faces.push([top, rl + j, rl + (j + 1) % slices]);
    }
    faces
}

/// Capsule mesh plus per-vertex bookkeeping used for skinning and joint
/// regression.
#[derive(Debug, Clone)]
pub struct CapsuleMesh {
    pub mesh: TriMesh,
    /// Signed distance of each vertex along the axis from the start point;
    /// negative on the start cap, above `length` on the end cap.
    pub axial: Vec<f64>,
    /// Vertex indices of every cylinder ring, from start to end. The first
    /// ring is centered on the start point and the last on the end point.
    pub cylinder_rings: Vec<Vec<usize>>,
    pub length: f64,
}

/// Closed capsule around the segment `a → b` with evenly spaced cylinder
/// rings.
pub fn capsule(a: Vec3, b: Vec3, radius: f64, slices: usize, cap_stacks: usize, cylinder_rings: usize) -> CapsuleMesh {
    let n = cylinder_rings.max(2);
    let length = (b - a).norm();
    let stations: Vec<f64> = (0..n).map(|i| length * i as f64 / (n - 1) as f64).collect();
    capsule_with_stations(a, b, radius, slices, cap_stacks, &stations)
}

/// Closed capsule with one cylinder ring at each axial distance in
/// `stations`, which must run from 0 to `|b − a|` in increasing order.
pub fn capsule_with_stations(a: Vec3, b: Vec3, radius: f64, slices: usize, cap_stacks: usize, stations: &[f64]) -> CapsuleMesh {
    assert!(stations.len() >= 2, "a capsule needs at least two rings");
    let slices = slices.max(3);
    let cap_stacks = cap_stacks.max(1);
    let axis = b - a;
    let length = axis.norm();
    let frame = frame_for(&axis);

    let mut local: Vec<(Vec3, f64)> = vec![(Vec3::new(0.0, 0.0, -radius), -radius)];
    let mut rings = Vec::new();
    let mut ring_rows = Vec::new();
    let push_ring = |z: f64, rho: f64, local: &mut Vec<(Vec3, f64)>| {
        let start = local.len();
        for j in 0..slices {
            let phi = std::f64::consts::TAU * j as f64 / slices as f64;
            local.push((Vec3::new(rho * phi.cos(), rho * phi.sin(), z), z));
        }
        start
    };
    for i in 1..cap_stacks {
        let ang = std::f64::consts::FRAC_PI_2 * i as f64 / cap_stacks as f64;
        rings.push(push_ring(-radius * ang.cos(), radius * ang.sin(), &mut local));
    }
    for &z in stations {
        let s = push_ring(z, radius, &mut local);
        rings.push(s);
        ring_rows.push((s..s + slices).collect::<Vec<_>>());
    }
    for i in (1..cap_stacks).rev() {
        let ang = std::f64::consts::FRAC_PI_2 * i as f64 / cap_stacks as f64;
        rings.push(push_ring(length + radius * ang.cos(), radius * ang.sin(), &mut local));
    }
    local.push((Vec3::new(0.0, 0.0, length + radius), length + radius));
    let top = local.len() - 1;
    let faces = stitch_rings(0, &rings, top, slices);
    let vertices = local.iter().map(|(p, _)| a + frame * p).collect();
    CapsuleMesh {
        mesh: TriMesh { vertices, faces },
        axial: local.iter().map(|&(_, z)| z).collect(),
        cylinder_rings: ring_rows,
        length,
    }
}

/// Rotation whose third column is the direction of `axis`.
fn frame_for(axis: &Vec3) -> Matrix3<f64> {
    let z = if axis.norm() > 0.0 { axis.normalize() } else { Vec3::z() };
    let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let x = helper.cross(&z).normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

/// Sphere with thin cylindrical spikes along the given unit directions; a
/// fixture with thin protrusions for carving tests.
pub fn spiky_sphere(center: Vec3, radius: f64, directions: &[Vec3], spike_length: f64, spike_radius: f64) -> TriMesh {
    let mut mesh = uv_sphere(center, radius, 48, 24);
    for d in directions {
        let d = d.normalize();
        let a = center + d * (radius * 0.8);
        let b = center + d * (radius + spike_length - spike_radius);
        mesh.append(&capsule(a, b, spike_radius, 12, 3, 2).mesh);
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_is_closed_and_outward() {
        let m = uv_sphere(Vec3::new(0.2, 0.0, 0.0), 0.5, 64, 32);
        assert_eq!(m.boundary_edge_count(), 0);
        let v = m.signed_volume();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
        assert!(v > 0.0 && (v - exact).abs() / exact < 0.01, "volume {v}");
    }

    #[test]
    fn capsule_is_closed_with_expected_volume() {
        let a = Vec3::new(0.1, 0.2, 0.3);
        let b = Vec3::new(0.4, -0.2, 0.5);
        let c = capsule(a, b, 0.05, 48, 12, 5);
        assert_eq!(c.mesh.boundary_edge_count(), 0);
        let len = (b - a).norm();
        let exact = std::f64::consts::PI * 0.0025 * len + 4.0 / 3.0 * std::f64::consts::PI * 0.05f64.powi(3);
        let v = c.mesh.signed_volume();
        assert!(v > 0.0 && (v - exact).abs() / exact < 0.02, "{v} vs {exact}");
        // First and last cylinder rings are centered on the segment ends.
        let centroid = |ring: &Vec<usize>| ring.iter().map(|&i| c.mesh.vertices[i]).sum::<Vec3>() / ring.len() as f64;
        assert_relative_eq!(centroid(&c.cylinder_rings[0]), a, epsilon = 1e-12);
        assert_relative_eq!(centroid(c.cylinder_rings.last().unwrap()), b, epsilon = 1e-12);
    }
}
