//! Parametric skinned body model: a template mesh deformed by shape and
//! pose-corrective blend shapes, joints regressed from the shaped template,
//! and linear blend skinning about the rest joints.
//!
//! Array layouts follow the SMPL release: shape directions are stored as
//! `V × 3 × S`, pose-corrective directions as `V × 3 × 9(J−1)` indexed by the
//! row-major entries of `R_j − I` for every non-root joint, the joint
//! regressor as `J × V` and skinning weights as `V × J`.

use std::path::Path;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{TriMesh, Vec3};

/// Rows of `𝒥` and `𝒲` must sum to one within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Vertices per parallel work unit. Reductions are summed chunk by chunk in
/// index order, so results do not depend on the thread count.
const CHUNK: usize = 512;

/// Raw model arrays, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArrays {
    pub template: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// `V × 3 × S`, flattened row-major.
    pub shape_dirs: Vec<f64>,
    pub num_betas: usize,
    /// `V × 3 × 9(J−1)`, flattened row-major.
    pub pose_dirs: Vec<f64>,
    /// `J × V`.
    pub regressor: Vec<f64>,
    /// `V × J`.
    pub weights: Vec<f64>,
    /// Parent of every joint; `None` only for the root at index 0.
    pub parents: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct BodyModel {
    arrays: ModelArrays,
    /// Non-zero skinning weights per vertex.
    influences: Vec<Vec<(usize, f64)>>,
    /// `𝒥 · T̄`.
    joint_template: Vec<Vec3>,
    /// `𝒥 · B_S`, laid out `J × 3 × S`.
    joint_shape_dirs: Vec<f64>,
    has_pose_dirs: bool,
}

impl BodyModel {
    /// Validates the arrays; errors name the offending field.
    pub fn new(arrays: ModelArrays) -> Result<Self> {
        let v = arrays.template.len();
        let j = arrays.parents.len();
        let s = arrays.num_betas;
        if v == 0 {
            return Err(Error::model("v_template", "no vertices"));
        }
        if j == 0 {
            return Err(Error::model("kintree_parents", "no joints"));
        }
        if arrays.template.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::model("v_template", "non-finite coordinate"));
        }
        if let Some(f) = arrays.faces.iter().position(|f| f.iter().any(|&i| i >= v)) {
            return Err(Error::model("f", format!("face {f} indexes past {v} vertices")));
        }
        check_len("shapedirs", &arrays.shape_dirs, v * 3 * s)?;
        check_len("posedirs", &arrays.pose_dirs, v * 3 * 9 * (j - 1))?;
        check_len("J_regressor", &arrays.regressor, j * v)?;
        check_len("weights", &arrays.weights, v * j)?;
        if arrays.parents[0].is_some() {
            return Err(Error::model("kintree_parents", "joint 0 must be the root"));
        }
        for (k, p) in arrays.parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < k => {}
                _ => {
                    return Err(Error::model(
                        "kintree_parents",
                        format!("joint {k} must have a parent with a smaller index, got {p:?}"),
                    ))
                }
            }
        }
        for (row, w) in arrays.weights.chunks(j).enumerate() {
            if w.iter().any(|&x| x < 0.0) {
                return Err(Error::model("weights", format!("row {row} has a negative weight")));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::model("weights", format!("row {row} sums to {sum}")));
            }
        }
        for (row, r) in arrays.regressor.chunks(v).enumerate() {
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::model("J_regressor", format!("row {row} sums to {sum}")));
            }
        }

        let influences = arrays
            .weights
            .chunks(j)
            .map(|w| w.iter().copied().enumerate().filter(|&(_, x)| x != 0.0).collect())
            .collect();
        let mut joint_template = vec![Vec3::zeros(); j];
        let mut joint_shape_dirs = vec![0.0; j * 3 * s];
        for (jj, row) in arrays.regressor.chunks(v).enumerate() {
            for (vi, &r) in row.iter().enumerate() {
                if r == 0.0 {
                    continue;
                }
                joint_template[jj] += arrays.template[vi] * r;
                for c in 0..3 {
                    let src = &arrays.shape_dirs[(vi * 3 + c) * s..(vi * 3 + c + 1) * s];
                    let dst = &mut joint_shape_dirs[(jj * 3 + c) * s..(jj * 3 + c + 1) * s];
                    for (d, x) in dst.iter_mut().zip(src) {
                        *d += r * x;
                    }
                }
            }
        }
        let has_pose_dirs = arrays.pose_dirs.iter().any(|&x| x != 0.0);
        Ok(BodyModel {
            arrays,
            influences,
            joint_template,
            joint_shape_dirs,
            has_pose_dirs,
        })
    }

    pub fn arrays(&self) -> &ModelArrays {
        &self.arrays
    }

    pub fn vertex_count(&self) -> usize {
        self.arrays.template.len()
    }

    pub fn joint_count(&self) -> usize {
        self.arrays.parents.len()
    }

    pub fn num_betas(&self) -> usize {
        self.arrays.num_betas
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.arrays.faces
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.arrays.parents
    }

    /// Rest mesh `T̄`.
    pub fn template_mesh(&self) -> TriMesh {
        TriMesh {
            vertices: self.arrays.template.clone(),
            faces: self.arrays.faces.clone(),
        }
    }
}

fn check_len(field: &str, data: &[f64], expected: usize) -> Result<()> {
    if data.len() != expected {
        return Err(Error::model(field, format!("{} values, expected {expected}", data.len())));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::model(field, "non-finite value"));
    }
    Ok(())
}

/// Reads an `EVM1` model file.
pub fn load_model(path: &Path) -> Result<BodyModel> {
    let bytes = std::fs::read(path)?;
    crate::io::decode_model(&bytes)
}

/// Shape `β`, per-joint axis-angle pose `θ` (root entry is the global
/// orientation) and a global translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub t: Vec3,
}

impl BodyParams {
    pub fn zeros(model: &BodyModel) -> Self {
        BodyParams {
            theta: vec![0.0; 3 * model.joint_count()],
            beta: vec![0.0; model.num_betas()],
            t: Vec3::zeros(),
        }
    }

    pub fn validate(&self, model: &BodyModel) -> Result<()> {
        if self.theta.len() != 3 * model.joint_count() {
            return Err(Error::input(format!(
                "theta has {} entries, model expects {}",
                self.theta.len(),
                3 * model.joint_count()
            )));
        }
        if self.beta.len() != model.num_betas() {
            return Err(Error::input(format!(
                "beta has {} entries, model expects {}",
                self.beta.len(),
                model.num_betas()
            )));
        }
        if !self.theta.iter().chain(&self.beta).chain(self.t.iter()).all(|x| x.is_finite()) {
            return Err(Error::input("non-finite body parameters"));
        }
        Ok(())
    }

    pub fn joint_rotation(&self, j: usize) -> Vec3 {
        Vec3::new(self.theta[3 * j], self.theta[3 * j + 1], self.theta[3 * j + 2])
    }

    /// Concatenation `θ ∥ β ∥ t`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.theta.clone();
        v.extend_from_slice(&self.beta);
        v.extend(self.t.iter());
        v
    }

    /// Inverse of [`BodyParams::to_vec`] for a model's dimensions.
    pub fn from_vec(model: &BodyModel, v: &[f64]) -> Result<Self> {
        let nt = 3 * model.joint_count();
        let nb = model.num_betas();
        if v.len() != nt + nb + 3 {
            return Err(Error::input(format!("{} parameters, expected {}", v.len(), nt + nb + 3)));
        }
        Ok(BodyParams {
            theta: v[..nt].to_vec(),
            beta: v[nt..nt + nb].to_vec(),
            t: Vec3::new(v[nt + nb], v[nt + nb + 1], v[nt + nb + 2]),
        })
    }
}

fn skew(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation matrix of an axis-angle vector.
pub fn rodrigues(w: &Vec3) -> Matrix3<f64> {
    let t2 = w.norm_squared();
    let (a, b) = if t2 < 1e-8 {
        // Taylor terms of sin θ / θ and (1 − cos θ) / θ².
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let t = t2.sqrt();
        (t.sin() / t, (1.0 - t.cos()) / t2)
    };
    let k = skew(w);
    Matrix3::identity() + k * a + k * k * b
}

/// `∂R/∂w_i` for `i = 0, 1, 2`.
pub fn rodrigues_derivatives(w: &Vec3) -> [Matrix3<f64>; 3] {
    let t2 = w.norm_squared();
    let e = [Vec3::x(), Vec3::y(), Vec3::z()];
    if t2 < 1e-20 {
        return e.map(|ei| skew(&ei));
    }
    let r = rodrigues(w);
    let k = skew(w);
    let i_minus_r = Matrix3::identity() - r;
    e.map(|ei| (k * w.dot(&ei) + skew(&w.cross(&(i_minus_r * ei)))) * r / t2)
}

/// `T̄ + B_S(β) + B_P(θ)`.
pub fn shaped_template(model: &BodyModel, beta: &[f64], theta: &[f64]) -> Result<Vec<Vec3>> {
    let params = BodyParams {
        theta: theta.to_vec(),
        beta: beta.to_vec(),
        t: Vec3::zeros(),
    };
    params.validate(model)?;
    let local = local_rotations(&params, model.joint_count());
    Ok(shape_vertices(model, beta, &local))
}

/// Rest joints `𝒥 · (T̄ + B_S(β))`.
pub fn joints(model: &BodyModel, beta: &[f64]) -> Result<Vec<Vec3>> {
    if beta.len() != model.num_betas() || !beta.iter().all(|b| b.is_finite()) {
        return Err(Error::input(format!(
            "beta must have {} finite entries",
            model.num_betas()
        )));
    }
    Ok(rest_joints(model, beta))
}

fn rest_joints(model: &BodyModel, beta: &[f64]) -> Vec<Vec3> {
    let s = model.num_betas();
    model
        .joint_template
        .iter()
        .enumerate()
        .map(|(j, base)| {
            let mut p = *base;
            for c in 0..3 {
                let dirs = &model.joint_shape_dirs[(j * 3 + c) * s..(j * 3 + c + 1) * s];
                p[c] += dirs.iter().zip(beta).map(|(d, b)| d * b).sum::<f64>();
            }
            p
        })
        .collect()
}

fn local_rotations(params: &BodyParams, joints: usize) -> Vec<Matrix3<f64>> {
    (0..joints).map(|j| rodrigues(&params.joint_rotation(j))).collect()
}

fn shape_vertices(model: &BodyModel, beta: &[f64], local: &[Matrix3<f64>]) -> Vec<Vec3> {
    let a = &model.arrays;
    let s = a.num_betas;
    let np = 9 * (model.joint_count() - 1);
    let pose_feature: Vec<f64> = if model.has_pose_dirs {
        local[1..]
            .iter()
            .flat_map(|r| {
                let d = r - Matrix3::identity();
                (0..9).map(move |m| d[(m / 3, m % 3)])
            })
            .collect()
    } else {
        Vec::new()
    };
    (0..a.template.len())
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|v| {
            let mut p = a.template[v];
            for c in 0..3 {
                let row = &a.shape_dirs[(v * 3 + c) * s..(v * 3 + c + 1) * s];
                p[c] += row.iter().zip(beta).map(|(d, b)| d * b).sum::<f64>();
                if model.has_pose_dirs {
                    let row = &a.pose_dirs[(v * 3 + c) * np..(v * 3 + c + 1) * np];
                    p[c] += row.iter().zip(&pose_feature).map(|(d, f)| d * f).sum::<f64>();
                }
            }
            p
        })
        .collect()
}

/// Posed mesh `M(β, θ)` and posed joint positions.
#[derive(Debug, Clone)]
pub struct Posed {
    pub mesh: TriMesh,
    pub joints: Vec<Vec3>,
}

/// Forward-pass intermediates needed by [`skin_backward`].
#[derive(Debug, Clone)]
pub struct SkinTape {
    params: BodyParams,
    shaped: Vec<Vec3>,
    rest: Vec<Vec3>,
    local: Vec<Matrix3<f64>>,
    global: Vec<Matrix3<f64>>,
}

pub fn skin(model: &BodyModel, params: &BodyParams) -> Result<Posed> {
    skin_with_tape(model, params).map(|(p, _)| p)
}

/// Linear blend skinning that also records what the reverse pass needs.
pub fn skin_with_tape(model: &BodyModel, params: &BodyParams) -> Result<(Posed, SkinTape)> {
    params.validate(model)?;
    let nj = model.joint_count();
    let local = local_rotations(params, nj);
    let shaped = shape_vertices(model, &params.beta, &local);
    let rest = rest_joints(model, &params.beta);

    // Forward kinematics: global rotation and posed position of every joint.
    let mut global = vec![Matrix3::identity(); nj];
    let mut posed = vec![Vec3::zeros(); nj];
    for j in 0..nj {
        match model.arrays.parents[j] {
            None => {
                global[j] = local[j];
                posed[j] = rest[j];
            }
            Some(p) => {
                global[j] = global[p] * local[j];
                posed[j] = posed[p] + global[p] * (rest[j] - rest[p]);
            }
        }
    }
    let t = params.t;
    let vertices: Vec<Vec3> = shaped
        .par_iter()
        .with_min_len(CHUNK)
        .zip(model.influences.par_iter())
        .map(|(x, inf)| {
            let mut out = t;
            for &(j, w) in inf {
                out += (global[j] * (x - rest[j]) + posed[j]) * w;
            }
            out
        })
        .collect();
    let joints = posed.iter().map(|p| p + t).collect();
    Ok((
        Posed {
            mesh: TriMesh {
                vertices,
                faces: model.arrays.faces.clone(),
            },
            joints,
        },
        SkinTape {
            params: params.clone(),
            shaped,
            rest,
            local,
            global,
        },
    ))
}

/// Per-chunk partial sums of the vertex terms of the reverse pass.
struct VertexAdjoints {
    d_global: Vec<Matrix3<f64>>,
    d_posed: Vec<Vec3>,
    d_rest: Vec<Vec3>,
    d_t: Vec3,
}

impl VertexAdjoints {
    fn zeros(nj: usize) -> Self {
        VertexAdjoints {
            d_global: vec![Matrix3::zeros(); nj],
            d_posed: vec![Vec3::zeros(); nj],
            d_rest: vec![Vec3::zeros(); nj],
            d_t: Vec3::zeros(),
        }
    }

    fn add(&mut self, o: &VertexAdjoints) {
        for (a, b) in self.d_global.iter_mut().zip(&o.d_global) {
            *a += b;
        }
        for (a, b) in self.d_posed.iter_mut().zip(&o.d_posed) {
            *a += b;
        }
        for (a, b) in self.d_rest.iter_mut().zip(&o.d_rest) {
            *a += b;
        }
        self.d_t += o.d_t;
    }
}

/// Gradient of a scalar with respect to `(θ, β, t)` given its gradients
/// with respect to the posed vertices and, optionally, the posed joints.
pub fn skin_backward(
    model: &BodyModel,
    tape: &SkinTape,
    grad_vertices: &[Vec3],
    grad_joints: Option<&[Vec3]>,
) -> Result<BodyParams> {
    let nv = model.vertex_count();
    let nj = model.joint_count();
    let s = model.num_betas();
    if grad_vertices.len() != nv {
        return Err(Error::input(format!("{} vertex gradients for {nv} vertices", grad_vertices.len())));
    }
    if let Some(g) = grad_joints {
        if g.len() != nj {
            return Err(Error::input(format!("{} joint gradients for {nj} joints", g.len())));
        }
    }
    let SkinTape { params, shaped, rest, local, global } = tape;

    // Vertex terms, including the gradient reaching the shaped template.
    let mut d_shaped = vec![Vec3::zeros(); nv];
    let partials: Vec<VertexAdjoints> = d_shaped
        .par_chunks_mut(CHUNK)
        .enumerate()
        .map(|(ci, out)| {
            let mut acc = VertexAdjoints::zeros(nj);
            for (k, ds) in out.iter_mut().enumerate() {
                let v = ci * CHUNK + k;
                let g = grad_vertices[v];
                acc.d_t += g;
                for &(j, w) in &model.influences[v] {
                    let wg = g * w;
                    let local_x = shaped[v] - rest[j];
                    acc.d_global[j] += wg * local_x.transpose();
                    acc.d_posed[j] += wg;
                    let back = global[j].transpose() * wg;
                    *ds += back;
                    acc.d_rest[j] -= back;
                }
            }
            acc
        })
        .collect();
    let mut adj = VertexAdjoints::zeros(nj);
    for p in &partials {
        adj.add(p);
    }
    let VertexAdjoints {
        d_global: mut d_g,
        d_posed: mut d_p,
        d_rest: mut d_j,
        mut d_t,
    } = adj;
    if let Some(gj) = grad_joints {
        for (dp, g) in d_p.iter_mut().zip(gj) {
            *dp += g;
            d_t += g;
        }
    }

    // Kinematic chain in reverse.
    let mut d_local = vec![Matrix3::zeros(); nj];
    for j in (0..nj).rev() {
        match model.arrays.parents[j] {
            None => {
                d_local[j] += d_g[j];
                d_j[j] += d_p[j];
            }
            Some(p) => {
                let gp = global[p];
                d_local[j] += gp.transpose() * d_g[j];
                let offset = rest[j] - rest[p];
                let dg = d_g[j] * local[j].transpose() + d_p[j] * offset.transpose();
                d_g[p] += dg;
                let dpj = d_p[j];
                d_p[p] += dpj;
                let back = gp.transpose() * dpj;
                d_j[j] += back;
                d_j[p] -= back;
            }
        }
    }

    // Pose-corrective blend shapes feed back into the local rotations.
    if model.has_pose_dirs {
        let np = 9 * (nj - 1);
        let pose_dirs = &model.arrays.pose_dirs;
        let feature_grad = d_shaped
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut acc = vec![0.0; np];
                for (k, g) in chunk.iter().enumerate() {
                    let v = ci * CHUNK + k;
                    for c in 0..3 {
                        let row = &pose_dirs[(v * 3 + c) * np..(v * 3 + c + 1) * np];
                        for (a, d) in acc.iter_mut().zip(row) {
                            *a += d * g[c];
                        }
                    }
                }
                acc
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(vec![0.0; np], |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            });
        for j in 1..nj {
            for m in 0..9 {
                d_local[j][(m / 3, m % 3)] += feature_grad[9 * (j - 1) + m];
            }
        }
    }

    let mut d_theta = vec![0.0; 3 * nj];
    for j in 0..nj {
        let dr = rodrigues_derivatives(&params.joint_rotation(j));
        for i in 0..3 {
            d_theta[3 * j + i] = d_local[j].component_mul(&dr[i]).sum();
        }
    }

    let shape_dirs = &model.arrays.shape_dirs;
    let mut d_beta = d_shaped
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = vec![0.0; s];
            for (k, g) in chunk.iter().enumerate() {
                let v = ci * CHUNK + k;
                for c in 0..3 {
                    let row = &shape_dirs[(v * 3 + c) * s..(v * 3 + c + 1) * s];
                    for (a, d) in acc.iter_mut().zip(row) {
                        *a += d * g[c];
                    }
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(vec![0.0; s], |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        });
    for (j, dj) in d_j.iter().enumerate() {
        for c in 0..3 {
            let row = &model.joint_shape_dirs[(j * 3 + c) * s..(j * 3 + c + 1) * s];
            for (a, d) in d_beta.iter_mut().zip(row) {
                *a += d * dj[c];
            }
        }
    }

    Ok(BodyParams {
        theta: d_theta,
        beta: d_beta,
        t: d_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two-bone chain along +x: vertices at x = 0..=4, joints at x = 0 and
    /// x = 2, with vertex 2 blended half and half.
    fn chain(betas: usize) -> ModelArrays {
        let template: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let mut weights = vec![0.0; 10];
        for v in 0..5 {
            let w1 = match v {
                0 | 1 => 0.0,
                2 => 0.5,
                _ => 1.0,
            };
            weights[v * 2] = 1.0 - w1;
            weights[v * 2 + 1] = w1;
        }
        let mut regressor = vec![0.0; 10];
        regressor[0] = 1.0;
        regressor[5 + 2] = 1.0;
        let mut shape_dirs = vec![0.0; 5 * 3 * betas];
        for v in 0..5 {
            for k in 0..betas {
                // Direction k stretches along x by (k + 1) per unit.
                shape_dirs[(v * 3) * betas + k] = v as f64 * (k + 1) as f64 * 0.1;
            }
        }
        ModelArrays {
            template,
            faces: vec![[0, 1, 2], [2, 3, 4]],
            shape_dirs,
            num_betas: betas,
            pose_dirs: vec![0.0; 5 * 3 * 9],
            regressor,
            weights,
            parents: vec![None, Some(0)],
        }
    }

    #[test]
    fn rodrigues_is_orthonormal_and_matches_the_series_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let w = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let r = rodrigues(&w);
            assert_relative_eq!(r.transpose() * r, Matrix3::identity(), epsilon = 1e-12);
            assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(r * w, w, epsilon = 1e-12);
        }
        for scale in [1e-3, 1e-5, 1e-7] {
            let w = Vec3::new(0.3, -0.5, 0.8) * scale;
            let first = Matrix3::identity() + skew(&w);
            assert!((rodrigues(&w) - first).norm() < 2.0 * w.norm_squared());
        }
        assert_relative_eq!(
            rodrigues(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2)) * Vec3::x(),
            Vec3::y(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rodrigues_derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-6;
        for k in 0..100 {
            let w = if k == 0 {
                Vec3::zeros()
            } else {
                Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            };
            let d = rodrigues_derivatives(&w);
            for i in 0..3 {
                let mut e = Vec3::zeros();
                e[i] = h;
                let fd = (rodrigues(&(w + e)) - rodrigues(&(w - e))) / (2.0 * h);
                assert!((fd - d[i]).norm() < 1e-8, "w {w:?} axis {i}");
            }
        }
    }

    #[test]
    fn rest_parameters_reproduce_the_template() {
        let model = BodyModel::new(chain(2)).unwrap();
        let p = BodyParams::zeros(&model);
        let posed = skin(&model, &p).unwrap();
        assert_eq!(posed.mesh.vertices, model.arrays().template);
        assert_eq!(posed.joints, vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)]);
        assert_eq!(shaped_template(&model, &[0.0, 0.0], &p.theta).unwrap(), model.arrays().template);
    }

    #[test]
    fn shape_blend_is_linear_and_moves_joints() {
        let model = BodyModel::new(chain(2)).unwrap();
        let zero = vec![0.0; 6];
        let a = shaped_template(&model, &[1.0, 0.0], &zero).unwrap();
        let b = shaped_template(&model, &[0.0, 2.0], &zero).unwrap();
        let ab = shaped_template(&model, &[1.0, 2.0], &zero).unwrap();
        for v in 0..5 {
            assert_relative_eq!(ab[v], a[v] + b[v] - model.arrays().template[v], epsilon = 1e-15);
        }
        // One-hot β adds exactly that direction.
        assert_relative_eq!(a[4].x, 4.0 + 0.4, epsilon = 1e-15);
        let j = joints(&model, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(j[1], Vec3::new(2.2, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn bending_the_child_joint_rotates_its_rigid_part_about_it() {
        let model = BodyModel::new(chain(0)).unwrap();
        let mut p = BodyParams::zeros(&model);
        p.theta[5] = std::f64::consts::FRAC_PI_2;
        let m = skin(&model, &p).unwrap().mesh;
        // Weight-one vertices rotate rigidly about the joint at x = 2.
        assert_relative_eq!(m.vertices[3], Vec3::new(2.0, 1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(m.vertices[4], Vec3::new(2.0, 2.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(m.vertices[1], Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        // The shared vertex sits on the joint and does not move.
        assert_relative_eq!(m.vertices[2], Vec3::new(2.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn root_rotation_and_translation_move_everything_rigidly() {
        let model = BodyModel::new(chain(1)).unwrap();
        let mut p = BodyParams::zeros(&model);
        p.beta[0] = 0.7;
        p.theta[3..6].copy_from_slice(&[0.2, -0.4, 0.1]);
        let base = skin(&model, &p).unwrap();
        p.theta[0..3].copy_from_slice(&[0.3, 1.1, -0.6]);
        p.t = Vec3::new(0.5, -1.0, 2.0);
        let moved = skin(&model, &p).unwrap();
        let r = rodrigues(&Vec3::new(0.3, 1.1, -0.6));
        let pivot = base.joints[0];
        for (a, b) in base.mesh.vertices.iter().zip(&moved.mesh.vertices) {
            assert_relative_eq!(*b, r * (a - pivot) + pivot + p.t, epsilon = 1e-12);
        }
        for (a, b) in base.joints.iter().zip(&moved.joints) {
            assert_relative_eq!(*b, r * (a - pivot) + pivot + p.t, epsilon = 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences_with_pose_correctives() {
        let mut arrays = chain(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        arrays.pose_dirs.iter_mut().for_each(|x| *x = rng.gen_range(-0.1..0.1));
        let model = BodyModel::new(arrays).unwrap();
        let mut p = BodyParams::zeros(&model);
        p.theta.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        p.beta = vec![0.3, -0.2];
        p.t = Vec3::new(0.1, 0.2, 0.3);
        let gv: Vec<Vec3> = (0..5).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let gj: Vec<Vec3> = (0..2).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let objective = |q: &BodyParams| {
            let s = skin(&model, q).unwrap();
            s.mesh.vertices.iter().zip(&gv).map(|(a, b)| a.dot(b)).sum::<f64>()
                + s.joints.iter().zip(&gj).map(|(a, b)| a.dot(b)).sum::<f64>()
        };
        let (_, tape) = skin_with_tape(&model, &p).unwrap();
        let g = skin_backward(&model, &tape, &gv, Some(&gj)).unwrap().to_vec();
        let x = p.to_vec();
        for i in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (objective(&BodyParams::from_vec(&model, &xp).unwrap())
                - objective(&BodyParams::from_vec(&model, &xm).unwrap()))
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "coordinate {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn invalid_arrays_name_their_field() {
        let mut a = chain(1);
        a.weights[0] = 0.9;
        match BodyModel::new(a) {
            Err(Error::Model { field, .. }) => assert_eq!(field, "weights"),
            other => panic!("unexpected {other:?}"),
        }
        let mut a = chain(1);
        a.regressor[0] = 0.5;
        assert!(matches!(BodyModel::new(a), Err(Error::Model { field, .. }) if field == "J_regressor"));
        let mut a = chain(1);
        a.parents = vec![None, Some(1)];
        assert!(matches!(BodyModel::new(a), Err(Error::Model { field, .. }) if field == "kintree_parents"));
        let mut a = chain(1);
        a.shape_dirs.pop();
        assert!(matches!(BodyModel::new(a), Err(Error::Model { field, .. }) if field == "shapedirs"));
        let mut a = chain(1);
        a.faces.push([0, 1, 9]);
        assert!(matches!(BodyModel::new(a), Err(Error::Model { field, .. }) if field == "f"));
    }

    #[test]
    fn params_reject_wrong_dimensions_and_non_finite_values() {
        let model = BodyModel::new(chain(2)).unwrap();
        let mut p = BodyParams::zeros(&model);
        p.beta.push(0.0);
        assert!(skin(&model, &p).is_err());
        let mut p = BodyParams::zeros(&model);
        p.theta[1] = f64::NAN;
        assert!(skin(&model, &p).is_err());
        let p = BodyParams::zeros(&model);
        assert_eq!(BodyParams::from_vec(&model, &p.to_vec()).unwrap(), p);
    }
}
