//! A license-free stand-in for SMPL: a capsule-limbed figure in a T-pose
//! with the SMPL joint tree (24 joints), ten interpretable shape directions
//! and no pose correctives.
//!
//! The figure stands on the XZ plane facing +Z with its left side on +X.
//! Each body part is a single capsule with a cylinder ring centered on every
//! joint it contains; those rings double as joint regressors, so joints at
//! `β = 0` land exactly on the constructor positions from [`toy_joints`].

use serde::{Deserialize, Serialize};

use crate::body::{BodyModel, ModelArrays};
use crate::error::{Error, Result};
use crate::geometry::{TriMesh, Vec3};
use crate::shapes::{capsule_with_stations, uv_sphere};

pub const JOINT_COUNT: usize = 24;
pub const SHAPE_DIMS: usize = 10;

/// Parent of every SMPL joint.
pub const SMPL_PARENTS: [Option<usize>; JOINT_COUNT] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

pub const PELVIS: usize = 0;
pub const L_KNEE: usize = 4;
pub const L_ELBOW: usize = 18;
pub const R_ELBOW: usize = 19;

/// Stature gained per unit of the first shape coefficient, in meters.
pub const STATURE_PER_UNIT: f64 = 0.10;

/// Body dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToySpec {
    pub ankle_height: f64,
    pub shin: f64,
    pub thigh: f64,
    pub hip_half_width: f64,
    pub leg_radius: f64,
    pub foot_length: f64,
    pub toe: f64,
    pub foot_radius: f64,
    pub torso_length: f64,
    pub torso_radius: f64,
    pub neck_length: f64,
    pub head_top: f64,
    pub head_radius: f64,
    pub collar_offset: f64,
    pub collar_drop: f64,
    pub clavicle: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub hand: f64,
    pub hand_tip: f64,
    pub arm_radius: f64,
    /// Vertices per ring.
    pub slices: usize,
    /// Rings per hemispherical cap, counting the pole.
    pub cap_stacks: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            ankle_height: 0.08,
            shin: 0.42,
            thigh: 0.42,
            hip_half_width: 0.09,
            leg_radius: 0.065,
            foot_length: 0.12,
            toe: 0.05,
            foot_radius: 0.04,
            torso_length: 0.52,
            torso_radius: 0.13,
            neck_length: 0.12,
            head_top: 0.08,
            head_radius: 0.1,
            collar_offset: 0.06,
            collar_drop: 0.05,
            clavicle: 0.12,
            upper_arm: 0.28,
            forearm: 0.25,
            hand: 0.08,
            hand_tip: 0.06,
            arm_radius: 0.045,
            slices: 24,
            cap_stacks: 4,
        }
    }
}

impl ToySpec {
    fn validate(&self) -> Result<()> {
        let dims = [
            self.ankle_height,
            self.shin,
            self.thigh,
            self.hip_half_width,
            self.leg_radius,
            self.foot_length,
            self.toe,
            self.foot_radius,
            self.torso_length,
            self.torso_radius,
            self.neck_length,
            self.head_top,
            self.head_radius,
            self.collar_offset,
            self.collar_drop,
            self.clavicle,
            self.upper_arm,
            self.forearm,
            self.hand,
            self.hand_tip,
            self.arm_radius,
        ];
        if !dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(Error::input("toy body dimensions must be positive"));
        }
        if self.slices < 3 || self.cap_stacks < 1 {
            return Err(Error::input("toy body needs at least 3 slices and 1 cap stack"));
        }
        Ok(())
    }

    /// The spec moved one unit along shape direction `k`.
    fn shifted(&self, k: usize) -> ToySpec {
        let mut s = *self;
        match k {
            // Stature: legs and torso; the sum is STATURE_PER_UNIT.
            0 => {
                s.shin += 0.04;
                s.thigh += 0.04;
                s.torso_length += 0.02;
            }
            1 => s.torso_radius += 0.02,
            2 => {
                s.upper_arm += 0.03;
                s.forearm += 0.03;
            }
            3 => {
                s.thigh += 0.03;
                s.shin += 0.03;
            }
            4 => s.clavicle += 0.03,
            5 => s.hip_half_width += 0.02,
            6 => s.head_radius += 0.015,
            7 => s.torso_length += 0.04,
            8 => s.arm_radius += 0.01,
            9 => {
                s.leg_radius += 0.012;
                s.foot_radius += 0.008;
            }
            _ => unreachable!("toy model has {SHAPE_DIMS} shape directions"),
        }
        s
    }
}

/// One capsule of the figure: an axis from `start` along `dir`, ring
/// stations along it, and the joints sitting on some of those stations.
struct Part {
    start: Vec3,
    dir: Vec3,
    radius: f64,
    stations: Vec<f64>,
    /// `(joint, station index)` in order along the axis. Each joint owns the
    /// stretch up to the next joint.
    joints: Vec<(usize, usize)>,
    /// Joint the first one blends into at the start of the capsule.
    upstream: Option<usize>,
}

/// Cumulative stations for segment lengths, with `sub` rings per segment.
fn stations(segments: &[f64], sub: usize) -> (Vec<f64>, Vec<usize>) {
    let mut out = vec![0.0];
    let mut marks = vec![0];
    let mut acc = 0.0;
    for &len in segments {
        for k in 1..=sub {
            out.push(acc + len * k as f64 / sub as f64);
        }
        acc += len;
        marks.push(out.len() - 1);
    }
    (out, marks)
}

fn parts(s: &ToySpec) -> Vec<Part> {
    let hip_y = s.ankle_height + s.shin + s.thigh;
    let neck_y = hip_y + s.torso_length;
    let mut out = Vec::new();

    let q = s.torso_length / 4.0;
    let (st, m) = stations(&[q, q, q, q], 2);
    out.push(Part {
        start: Vec3::new(0.0, hip_y, 0.0),
        dir: Vec3::y(),
        radius: s.torso_radius,
        stations: st,
        joints: vec![(0, m[0]), (3, m[1]), (6, m[2]), (9, m[3])],
        upstream: None,
    });
    // The neck joint sits on the torso's top ring but belongs to the head.
    let (st, m) = stations(&[s.neck_length, s.head_top], 1);
    out.push(Part {
        start: Vec3::new(0.0, neck_y, 0.0),
        dir: Vec3::y(),
        radius: s.head_radius,
        stations: st,
        joints: vec![(12, m[0]), (15, m[1])],
        upstream: Some(9),
    });

    for (sign, collar, shoulder, elbow, wrist, hand) in [(1.0, 13, 16, 18, 20, 22), (-1.0, 14, 17, 19, 21, 23)] {
        let (st, m) = stations(&[s.clavicle, s.upper_arm, s.forearm, s.hand, s.hand_tip], 3);
        out.push(Part {
            start: Vec3::new(sign * s.collar_offset, neck_y - s.collar_drop, 0.0),
            dir: Vec3::x() * sign,
            radius: s.arm_radius,
            stations: st,
            joints: vec![(collar, m[0]), (shoulder, m[1]), (elbow, m[2]), (wrist, m[3]), (hand, m[4])],
            upstream: Some(9),
        });
    }
    for (sign, hip, knee, ankle, foot) in [(1.0, 1, 4, 7, 10), (-1.0, 2, 5, 8, 11)] {
        let (st, m) = stations(&[s.thigh, s.shin], 3);
        out.push(Part {
            start: Vec3::new(sign * s.hip_half_width, hip_y, 0.0),
            dir: -Vec3::y(),
            radius: s.leg_radius,
            stations: st,
            joints: vec![(hip, m[0]), (knee, m[1])],
            upstream: Some(0),
        });
        let (st, m) = stations(&[s.foot_length, s.toe], 1);
        out.push(Part {
            start: Vec3::new(sign * s.hip_half_width, s.ankle_height, 0.0),
            dir: Vec3::z(),
            radius: s.foot_radius,
            stations: st,
            joints: vec![(ankle, m[0]), (foot, m[1])],
            upstream: Some(knee),
        });
    }
    out
}

/// Joint positions of the rest pose for `spec`.
pub fn toy_joints(spec: &ToySpec) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); JOINT_COUNT];
    for p in parts(spec) {
        for &(j, k) in &p.joints {
            out[j] = p.start + p.dir * p.stations[k];
        }
    }
    out
}

struct Built {
    mesh: TriMesh,
    /// Per vertex: part index and axial coordinate.
    axial: Vec<(usize, f64)>,
    /// Per joint: vertex indices of its ring.
    rings: Vec<Vec<usize>>,
}

fn build(spec: &ToySpec) -> Built {
    let mut mesh = TriMesh {
        vertices: Vec::new(),
        faces: Vec::new(),
    };
    let mut axial = Vec::new();
    let mut rings = vec![Vec::new(); JOINT_COUNT];
    for (pi, p) in parts(spec).iter().enumerate() {
        let end = p.start + p.dir * *p.stations.last().unwrap();
        let c = capsule_with_stations(p.start, end, p.radius, spec.slices, spec.cap_stacks, &p.stations);
        let offset = mesh.vertices.len();
        for &(j, k) in &p.joints {
            rings[j] = c.cylinder_rings[k].iter().map(|i| i + offset).collect();
        }
        axial.extend(c.axial.iter().map(|&z| (pi, z)));
        mesh.append(&c.mesh);
    }
    Built { mesh, axial, rings }
}

/// Skinning weights of a vertex at axial coordinate `z` on part `p`.
fn part_weights(p: &Part, z: f64, out: &mut [f64]) {
    let pos: Vec<f64> = p.joints.iter().map(|&(_, k)| p.stations[k]).collect();
    // Owning bone: the last joint at or before z.
    let owner = pos.iter().rposition(|&s| s <= z).unwrap_or(0);
    let mut w = vec![0.0; p.joints.len() + 1];
    w[owner + 1] = 1.0;
    // Half-width of the blend around each joint, kept inside both bones.
    let band = |k: usize| {
        let mut b = 0.5 * p.radius;
        if k > 0 {
            b = b.min(0.45 * (pos[k] - pos[k - 1]));
        }
        if k + 1 < pos.len() {
            b = b.min(0.45 * (pos[k + 1] - pos[k]));
        }
        b
    };
    for k in 0..pos.len() {
        let b = band(k);
        if (z - pos[k]).abs() < b && (k > 0 || p.upstream.is_some()) {
            let f = (z - (pos[k] - b)) / (2.0 * b);
            w.iter_mut().for_each(|x| *x = 0.0);
            w[k + 1] = f;
            w[k] = 1.0 - f;
        }
    }
    if let Some(u) = p.upstream {
        out[u] += w[0];
    }
    for (i, &(j, _)) in p.joints.iter().enumerate() {
        out[j] += w[i + 1];
    }
}

/// Builds the toy model for `spec`.
pub fn make_toy_model(spec: &ToySpec) -> Result<BodyModel> {
    spec.validate()?;
    let base = build(spec);
    let nv = base.mesh.vertices.len();
    let part_list = parts(spec);

    let mut shape_dirs = vec![0.0; nv * 3 * SHAPE_DIMS];
    for k in 0..SHAPE_DIMS {
        let moved = build(&spec.shifted(k));
        for (v, (a, b)) in base.mesh.vertices.iter().zip(&moved.mesh.vertices).enumerate() {
            let d = b - a;
            for c in 0..3 {
                shape_dirs[(v * 3 + c) * SHAPE_DIMS + k] = d[c];
            }
        }
    }

    let mut weights = vec![0.0; nv * JOINT_COUNT];
    for (v, &(pi, z)) in base.axial.iter().enumerate() {
        part_weights(&part_list[pi], z, &mut weights[v * JOINT_COUNT..(v + 1) * JOINT_COUNT]);
    }

    let mut regressor = vec![0.0; JOINT_COUNT * nv];
    for (j, ring) in base.rings.iter().enumerate() {
        for &v in ring {
            regressor[j * nv + v] = 1.0 / ring.len() as f64;
        }
    }

    BodyModel::new(ModelArrays {
        template: base.mesh.vertices,
        faces: base.mesh.faces,
        shape_dirs,
        num_betas: SHAPE_DIMS,
        pose_dirs: vec![0.0; nv * 3 * 9 * (JOINT_COUNT - 1)],
        regressor,
        weights,
        parents: SMPL_PARENTS.to_vec(),
    })
}

/// Radius gained per unit of the blob model's single shape coefficient.
pub const BLOB_RADIUS_PER_UNIT: f64 = 0.1;

/// One-joint sphere of `radius` whose only shape direction grows the radius
/// by [`BLOB_RADIUS_PER_UNIT`].
pub fn blob_model(center: Vec3, radius: f64) -> Result<BodyModel> {
    if !(radius > 0.0) {
        return Err(Error::input("blob radius must be positive"));
    }
    let mesh = uv_sphere(center, radius, 48, 24);
    let nv = mesh.vertices.len();
    let shape_dirs = mesh
        .vertices
        .iter()
        .flat_map(|p| ((p - center) / radius * BLOB_RADIUS_PER_UNIT).iter().copied().collect::<Vec<_>>())
        .collect();
    BodyModel::new(ModelArrays {
        template: mesh.vertices,
        faces: mesh.faces,
        shape_dirs,
        num_betas: 1,
        pose_dirs: Vec::new(),
        regressor: vec![1.0 / nv as f64; nv],
        weights: vec![1.0; nv],
        parents: vec![None],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{joints, skin, BodyParams};
    use approx::assert_relative_eq;

    fn stature(m: &TriMesh) -> f64 {
        let b = m.bounds();
        b.max.y - b.min.y
    }

    #[test]
    fn default_figure_is_closed_positive_and_large_enough() {
        let model = make_toy_model(&ToySpec::default()).unwrap();
        assert_eq!(model.joint_count(), 24);
        assert!(model.vertex_count() >= 2000, "{} vertices", model.vertex_count());
        let m = model.template_mesh();
        assert_eq!(m.boundary_edge_count(), 0);
        assert!(m.signed_volume() > 0.0);
        let h = stature(&m);
        assert!((1.5..2.0).contains(&h), "stature {h}");
    }

    #[test]
    fn rest_joints_are_the_constructor_positions() {
        let spec = ToySpec::default();
        let model = make_toy_model(&spec).unwrap();
        let got = joints(&model, &[0.0; SHAPE_DIMS]).unwrap();
        for (a, b) in got.iter().zip(toy_joints(&spec)) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        // Shape directions move joints like rebuilding with the shifted spec.
        for k in 0..SHAPE_DIMS {
            let mut beta = [0.0; SHAPE_DIMS];
            beta[k] = 1.0;
            let moved = joints(&model, &beta).unwrap();
            for (a, b) in moved.iter().zip(toy_joints(&spec.shifted(k))) {
                assert_relative_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn height_direction_adds_the_documented_stature() {
        let model = make_toy_model(&ToySpec::default()).unwrap();
        let mut p = BodyParams::zeros(&model);
        let h0 = stature(&skin(&model, &p).unwrap().mesh);
        p.beta[0] = 1.0;
        let h1 = stature(&skin(&model, &p).unwrap().mesh);
        assert_relative_eq!(h1 - h0, STATURE_PER_UNIT, epsilon = 1e-12);
        p.beta[0] = -0.5;
        let h2 = stature(&skin(&model, &p).unwrap().mesh);
        assert_relative_eq!(h0 - h2, 0.5 * STATURE_PER_UNIT, epsilon = 1e-12);
    }

    #[test]
    fn skinning_weights_are_a_partition_of_unity() {
        let model = make_toy_model(&ToySpec::default()).unwrap();
        let a = model.arrays();
        for row in a.weights.chunks(JOINT_COUNT) {
            assert!(row.iter().all(|&w| w >= 0.0));
            assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bent_elbow_rotates_the_forearm_about_the_elbow() {
        let spec = ToySpec::default();
        let model = make_toy_model(&spec).unwrap();
        let rest = model.template_mesh();
        let mut p = BodyParams::zeros(&model);
        // 90° about -Z: the left forearm (along +X) swings down to -Y.
        p.theta[3 * L_ELBOW + 2] = -std::f64::consts::FRAC_PI_2;
        let posed = skin(&model, &p).unwrap();
        let elbow = toy_joints(&spec)[L_ELBOW];
        let rot = |v: Vec3| {
            let d = v - elbow;
            elbow + Vec3::new(d.y, -d.x, d.z)
        };
        let a = model.arrays();
        let mut checked = 0;
        for v in 0..model.vertex_count() {
            let w = &a.weights[v * JOINT_COUNT..(v + 1) * JOINT_COUNT];
            if w[L_ELBOW] == 1.0 {
                assert_relative_eq!(posed.mesh.vertices[v], rot(rest.vertices[v]), epsilon = 1e-12);
                checked += 1;
            } else if w[L_ELBOW] == 0.0 && w[20] == 0.0 && w[22] == 0.0 {
                assert_relative_eq!(posed.mesh.vertices[v], rest.vertices[v], epsilon = 1e-12);
            }
        }
        assert!(checked >= 40, "{checked} rigid forearm vertices");
        assert_relative_eq!(posed.joints[20], rot(toy_joints(&spec)[20]), epsilon = 1e-12);
    }

    #[test]
    fn blob_shape_grows_the_radius() {
        let c = Vec3::new(0.1, 0.2, 0.3);
        let model = blob_model(c, 0.3).unwrap();
        let mut p = BodyParams::zeros(&model);
        p.beta[0] = 0.5;
        let m = skin(&model, &p).unwrap().mesh;
        for v in &m.vertices {
            assert_relative_eq!((v - c).norm(), 0.3 + 0.5 * BLOB_RADIUS_PER_UNIT, epsilon = 1e-12);
        }
        assert_relative_eq!(joints(&model, &[0.0]).unwrap()[0], c, epsilon = 1e-12);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let spec = ToySpec {
            shin: 0.0,
            ..ToySpec::default()
        };
        assert!(make_toy_model(&spec).is_err());
    }
}
