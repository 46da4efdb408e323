//! Fitting the body model to a target surface by minimizing the symmetric
//! Chamfer loss with Adam.
//!
//! The model surface is represented by area-weighted samples given as
//! (face, barycentric) pairs. Between refreshes the samples and their
//! nearest-neighbor correspondences stay fixed, so the loss is a smooth
//! function of the parameters with an exact analytic gradient.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{skin, skin_backward, skin_with_tape, BodyModel, BodyParams};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriMesh, Vec3};
use crate::kdtree::KdTree;
use crate::surface::{sample_surface, sample_surface_barycentric, SurfaceSample};

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub lr: f64,
    pub iters: usize,
    /// Points sampled on each surface.
    pub n_samples: usize,
    pub seed: u64,
    /// Shape coefficients optimized; the rest stay at zero. `None` uses all
    /// of the model's.
    pub beta_dim: Option<usize>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Iterations between fresh model samples and correspondences.
    pub resample_every: usize,
    pub gradient: GradientMode,
    /// Try eight yaw angles for the global orientation before optimizing.
    pub yaw_search: bool,
    /// Weight of an L2 penalty on β.
    pub beta_l2: f64,
    /// Step for the finite-difference gradient.
    pub fd_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lr: 0.01,
            iters: 1000,
            n_samples: 50_000,
            seed: 0,
            beta_dim: None,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            resample_every: 10,
            gradient: GradientMode::Analytic,
            yaw_search: false,
            beta_l2: 0.0,
            fd_step: 1e-5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, model: &BodyModel) -> Result<()> {
        if !(self.lr > 0.0) || self.iters == 0 || self.n_samples == 0 || self.resample_every == 0 {
            return Err(Error::input("lr, iters, n_samples and resample_every must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::input("Adam needs β₁, β₂ in [0, 1) and ε > 0"));
        }
        if !(self.beta_l2 >= 0.0) || !(self.fd_step > 0.0) {
            return Err(Error::input("beta_l2 must be non-negative and fd_step positive"));
        }
        if let Some(d) = self.beta_dim {
            if d > model.num_betas() {
                return Err(Error::input(format!(
                    "beta_dim {d} exceeds the model's {} shape coefficients",
                    model.num_betas()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: BodyParams,
    pub loss_trace: Vec<f64>,
    pub converged: bool,
}

fn sum_chunked(values: &[f64]) -> f64 {
    values
        .par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Nearest neighbor in `tree` of every point, as (index, squared distance).
pub fn nearest_all(tree: &KdTree, points: &[Vec3]) -> Vec<(usize, f64)> {
    points
        .par_iter()
        .with_min_len(CHUNK)
        .map(|p| tree.nearest(p).expect("tree is non-empty"))
        .collect()
}

/// `Σ_p min_q ‖p−q‖² + Σ_q min_p ‖p−q‖²`, with exact nearest neighbors.
pub fn chamfer_loss(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::input("chamfer loss needs two non-empty clouds"));
    }
    let tp = KdTree::new(p.points.clone());
    let tq = KdTree::new(q.points.clone());
    let a: Vec<f64> = nearest_all(&tq, &p.points).iter().map(|x| x.1).collect();
    let b: Vec<f64> = nearest_all(&tp, &q.points).iter().map(|x| x.1).collect();
    Ok(sum_chunked(&a) + sum_chunked(&b))
}

/// The target cloud with its search tree, built once per fit.
#[derive(Debug, Clone)]
pub struct Target {
    tree: KdTree,
}

impl Target {
    pub fn new(points: PointCloud) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input("empty target cloud"));
        }
        Ok(Target {
            tree: KdTree::new(points.points),
        })
    }

    pub fn points(&self) -> &[Vec3] {
        self.tree.points()
    }
}

/// Correspondences between model samples and target points.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    /// For each model sample, its nearest target point.
    pub to_target: Vec<usize>,
    /// For each target point, its nearest model sample.
    pub to_model: Vec<usize>,
}

fn sample_points(mesh: &TriMesh, samples: &[SurfaceSample]) -> Vec<Vec3> {
    samples.iter().map(|s| s.point(mesh)).collect()
}

pub fn correspondences(model_points: &[Vec3], target: &Target) -> Correspondences {
    let to_target = nearest_all(&target.tree, model_points).into_iter().map(|x| x.0).collect();
    let model_tree = KdTree::new(model_points.to_vec());
    let to_model = nearest_all(&model_tree, target.points()).into_iter().map(|x| x.0).collect();
    Correspondences { to_target, to_model }
}

fn frozen_loss(x: &[Vec3], target: &[Vec3], c: &Correspondences) -> f64 {
    let a: Vec<f64> = x.iter().zip(&c.to_target).map(|(p, &i)| (p - target[i]).norm_squared()).collect();
    let b: Vec<f64> = target.iter().zip(&c.to_model).map(|(q, &i)| (x[i] - q).norm_squared()).collect();
    sum_chunked(&a) + sum_chunked(&b)
}

fn beta_penalty(params: &BodyParams, weight: f64) -> f64 {
    if weight == 0.0 {
        return 0.0;
    }
    weight * params.beta.iter().map(|b| b * b).sum::<f64>()
}

/// Chamfer loss of the model samples against the target under fixed
/// correspondences, and its gradient with respect to `(θ, β, t)`.
pub fn loss_and_gradient(
    model: &BodyModel,
    params: &BodyParams,
    samples: &[SurfaceSample],
    target: &Target,
    corr: &Correspondences,
    beta_l2: f64,
) -> Result<(f64, BodyParams)> {
    let (posed, tape) = skin_with_tape(model, params)?;
    let x = sample_points(&posed.mesh, samples);
    let tp = target.points();
    let loss = frozen_loss(&x, tp, corr) + beta_penalty(params, beta_l2);

    // dL/dx for every sample, then scattered onto the face vertices.
    let mut gx: Vec<Vec3> = x.iter().zip(&corr.to_target).map(|(p, &i)| (p - tp[i]) * 2.0).collect();
    for (q, &i) in tp.iter().zip(&corr.to_model) {
        gx[i] += (x[i] - q) * 2.0;
    }
    let mut gv = vec![Vec3::zeros(); model.vertex_count()];
    for (s, g) in samples.iter().zip(&gx) {
        let f = model.faces()[s.face];
        for k in 0..3 {
            gv[f[k]] += g * s.bary[k];
        }
    }
    let mut grad = skin_backward(model, &tape, &gv, None)?;
    if beta_l2 != 0.0 {
        for (g, b) in grad.beta.iter_mut().zip(&params.beta) {
            *g += 2.0 * beta_l2 * b;
        }
    }
    Ok((loss, grad))
}

/// Loss at `params` with the given samples, recomputing correspondences.
pub fn sampled_loss(model: &BodyModel, params: &BodyParams, samples: &[SurfaceSample], target: &Target, beta_l2: f64) -> Result<(f64, Correspondences)> {
    let posed = skin(model, params)?;
    let x = sample_points(&posed.mesh, samples);
    let corr = correspondences(&x, target);
    Ok((frozen_loss(&x, target.points(), &corr) + beta_penalty(params, beta_l2), corr))
}

/// Central-difference gradient of [`sampled_loss`].
pub fn finite_difference_gradient(model: &BodyModel, params: &BodyParams, samples: &[SurfaceSample], target: &Target, beta_l2: f64, h: f64) -> Result<BodyParams> {
    let x0 = params.to_vec();
    let mut g = vec![0.0; x0.len()];
    for i in 0..x0.len() {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[i] += h;
        xm[i] -= h;
        let lp = sampled_loss(model, &BodyParams::from_vec(model, &xp)?, samples, target, beta_l2)?.0;
        let lm = sampled_loss(model, &BodyParams::from_vec(model, &xm)?, samples, target, beta_l2)?.0;
        g[i] = (lp - lm) / (2.0 * h);
    }
    BodyParams::from_vec(model, &g)
}

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            x[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Starting point: rest pose, mean shape, surface centroids aligned.
pub fn initial_params(model: &BodyModel, target_mesh: &TriMesh) -> Result<BodyParams> {
    if target_mesh.is_empty() {
        return Err(Error::input("empty target mesh"));
    }
    let mut p = BodyParams::zeros(model);
    p.t = target_mesh.surface_centroid() - model.template_mesh().surface_centroid();
    Ok(p)
}

/// Rotation about the vertical axis through the rest pelvis that best
/// matches the target, among eight evenly spaced yaw angles.
fn best_yaw(model: &BodyModel, init: &BodyParams, samples: &[SurfaceSample], target: &Target, beta_l2: f64) -> Result<BodyParams> {
    let mut best: Option<(f64, BodyParams)> = None;
    for k in 0..8 {
        let mut p = init.clone();
        let yaw = std::f64::consts::TAU * k as f64 / 8.0;
        let r = crate::body::rodrigues(&(Vec3::y() * yaw)) * crate::body::rodrigues(&init.joint_rotation(0));
        let aa = nalgebra::Rotation3::from_matrix_unchecked(r).scaled_axis();
        p.theta[..3].copy_from_slice(aa.as_slice());
        let loss = sampled_loss(model, &p, samples, target, beta_l2)?.0;
        if best.as_ref().map_or(true, |(l, _)| loss < *l) {
            best = Some((loss, p));
        }
    }
    Ok(best.expect("eight candidates").1)
}

/// Runs `cfg.iters` Adam steps on `(θ, β, t)` from `init`.
pub fn fit(model: &BodyModel, target_mesh: &TriMesh, init: &BodyParams, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate(model)?;
    init.validate(model)?;
    if target_mesh.is_empty() || target_mesh.area() <= 0.0 {
        return Err(Error::input("target mesh has no area"));
    }
    let target = Target::new(sample_surface(target_mesh, cfg.n_samples, cfg.seed)?)?;
    let beta_dim = cfg.beta_dim.unwrap_or(model.num_betas());
    let nt = 3 * model.joint_count();

    let resample = |params: &BodyParams, round: u64| -> Result<Vec<SurfaceSample>> {
        let mesh = skin(model, params)?.mesh;
        sample_surface_barycentric(&mesh, cfg.n_samples, cfg.seed.wrapping_add(1).wrapping_add(round))
    };

    let mut params = init.clone();
    params.beta[beta_dim..].iter_mut().for_each(|b| *b = 0.0);
    if cfg.yaw_search {
        let samples = resample(&params, 0)?;
        params = best_yaw(model, &params, &samples, &target, cfg.beta_l2)?;
    }

    let mut x = params.to_vec();
    let mut adam = Adam::new(x.len(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut trace = Vec::with_capacity(cfg.iters);
    let mut samples = Vec::new();
    let mut corr = None;
    for it in 0..cfg.iters {
        if it % cfg.resample_every == 0 {
            samples = resample(&params, (it / cfg.resample_every) as u64)?;
            corr = Some(sampled_loss(model, &params, &samples, &target, cfg.beta_l2)?.1);
        }
        let c = corr.as_ref().expect("set on the first iteration");
        let (loss, grad) = match cfg.gradient {
            GradientMode::Analytic => loss_and_gradient(model, &params, &samples, &target, c, cfg.beta_l2)?,
            GradientMode::FiniteDifference => {
                let (l, _) = sampled_loss(model, &params, &samples, &target, cfg.beta_l2)?;
                (l, finite_difference_gradient(model, &params, &samples, &target, cfg.beta_l2, cfg.fd_step)?)
            }
        };
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: it, loss });
        }
        trace.push(loss);
        let mut g = grad.to_vec();
        g[nt + beta_dim..nt + model.num_betas()].iter_mut().for_each(|v| *v = 0.0);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: it, loss });
        }
        adam.step(&mut x, &g);
        params = BodyParams::from_vec(model, &x)?;
        if params.validate(model).is_err() {
            return Err(Error::Divergence { iteration: it, loss: f64::NAN });
        }
    }
    let converged = is_converged(&trace);
    Ok(FitResult {
        params,
        loss_trace: trace,
        converged,
    })
}

/// The last tenth of the trace changed the loss by under 1% and the final
/// value does not exceed the first.
fn is_converged(trace: &[f64]) -> bool {
    let (Some(&first), Some(&last)) = (trace.first(), trace.last()) else {
        return false;
    };
    let k = (trace.len() / 10).max(1);
    let earlier = trace[trace.len().saturating_sub(k + 1)];
    last <= first && (earlier - last).abs() <= 0.01 * last.abs().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{blob_model, make_toy_model, ToySpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_chamfer(p: &[Vec3], q: &[Vec3]) -> f64 {
        let one = |a: &[Vec3], b: &[Vec3]| {
            a.iter()
                .map(|x| b.iter().map(|y| (x - y).norm_squared()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
        };
        one(p, q) + one(q, p)
    }

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect())
    }

    #[test]
    fn chamfer_loss_hand_cases_and_oracle() {
        let a = PointCloud::new(vec![Vec3::zeros()]);
        let b = PointCloud::new(vec![Vec3::x()]);
        assert_eq!(chamfer_loss(&a, &b).unwrap(), 2.0);
        assert_eq!(chamfer_loss(&a, &a).unwrap(), 0.0);
        assert!(chamfer_loss(&a, &PointCloud::new(Vec::new())).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let p = cloud(&mut rng, 200);
            let q = cloud(&mut rng, 200);
            let fast = chamfer_loss(&p, &q).unwrap();
            let slow = brute_chamfer(&p.points, &q.points);
            assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0));
            assert_relative_eq!(fast, chamfer_loss(&q, &p).unwrap(), max_relative = 1e-14);
        }
    }

    #[test]
    fn chamfer_loss_is_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = cloud(&mut rng, 300);
        let q = cloud(&mut rng, 250);
        let r = crate::body::rodrigues(&Vec3::new(0.4, -1.2, 0.7));
        let t = Vec3::new(3.0, -2.0, 0.5);
        let mv = |c: &PointCloud| PointCloud::new(c.points.iter().map(|x| r * x + t).collect());
        assert_relative_eq!(chamfer_loss(&p, &q).unwrap(), chamfer_loss(&mv(&p), &mv(&q)).unwrap(), max_relative = 1e-9);
    }

    #[test]
    fn first_adam_step_moves_by_the_learning_rate() {
        let mut adam = Adam::new(3, 0.01, 0.9, 0.999, 1e-8);
        let mut x = vec![1.0, 2.0, 3.0];
        adam.step(&mut x, &[1.0, 1.0, 1.0]);
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(a - b, -0.01 / (1.0 + 1e-8), epsilon = 1e-15);
        }
        let mut adam = Adam::new(2, 0.01, 0.9, 0.999, 1e-8);
        let mut y = vec![0.5, -0.5];
        adam.step(&mut y, &[0.0, 0.0]);
        assert_eq!(y, vec![0.5, -0.5]);
    }

    fn random_instance(model: &BodyModel, rng: &mut ChaCha8Rng) -> BodyParams {
        let mut p = BodyParams::zeros(model);
        p.theta.iter_mut().for_each(|x| *x = rng.gen_range(-0.3..0.3));
        p.beta.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        p.t = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        p
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let model = make_toy_model(&ToySpec::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mut checked, mut skipped) = (0, 0);
        for inst in 0..4 {
            let gt = random_instance(&model, &mut rng);
            let target = Target::new(sample_surface(&skin(&model, &gt).unwrap().mesh, 300, inst).unwrap()).unwrap();
            let p = random_instance(&model, &mut rng);
            let samples = sample_surface_barycentric(&skin(&model, &p).unwrap().mesh, 300, inst + 100).unwrap();
            let (_, corr) = sampled_loss(&model, &p, &samples, &target, 0.0).unwrap();
            let (_, g) = loss_and_gradient(&model, &p, &samples, &target, &corr, 0.0).unwrap();
            let fd = finite_difference_gradient(&model, &p, &samples, &target, 0.0, 1e-5).unwrap();
            let (g, fd) = (g.to_vec(), fd.to_vec());
            let scale = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
            let x = p.to_vec();
            for i in 0..x.len() {
                // Differences straddling a correspondence switch are not
                // derivatives of one smooth piece.
                let same = [1e-5, -1e-5].iter().all(|h| {
                    let mut xs = x.clone();
                    xs[i] += h;
                    let q = BodyParams::from_vec(&model, &xs).unwrap();
                    sampled_loss(&model, &q, &samples, &target, 0.0).unwrap().1 == corr
                });
                if !same {
                    skipped += 1;
                    continue;
                }
                assert!((g[i] - fd[i]).abs() <= 1e-4 * fd[i].abs().max(1e-6 * scale), "{} vs {}", g[i], fd[i]);
                checked += 1;
            }
        }
        assert!(checked > 300 && skipped < checked / 10, "{checked} checked, {skipped} skipped");
    }

    #[test]
    fn translation_gradient_points_toward_the_target() {
        let model = blob_model(Vec3::zeros(), 0.2).unwrap();
        let target_mesh = skin(&model, &BodyParams::zeros(&model)).unwrap().mesh;
        let target = Target::new(sample_surface(&target_mesh, 2000, 1).unwrap()).unwrap();
        let mut p = BodyParams::zeros(&model);
        p.t = Vec3::new(0.05, 0.0, 0.0);
        let samples = sample_surface_barycentric(&skin(&model, &p).unwrap().mesh, 2000, 2).unwrap();
        let (_, corr) = sampled_loss(&model, &p, &samples, &target, 0.0).unwrap();
        let (_, g) = loss_and_gradient(&model, &p, &samples, &target, &corr, 0.0).unwrap();
        assert!(g.t.x > 0.0, "moving +x away from the target must raise the loss");
    }

    #[test]
    fn symmetric_fixture_has_zero_gradient() {
        // Model samples coincide with the target points: a minimum.
        let model = blob_model(Vec3::zeros(), 0.2).unwrap();
        let p = BodyParams::zeros(&model);
        let mesh = skin(&model, &p).unwrap().mesh;
        let samples = sample_surface_barycentric(&mesh, 500, 3).unwrap();
        let pts: Vec<Vec3> = samples.iter().map(|s| s.point(&mesh)).collect();
        let target = Target::new(PointCloud::new(pts)).unwrap();
        let (_, corr) = sampled_loss(&model, &p, &samples, &target, 0.0).unwrap();
        let (loss, g) = loss_and_gradient(&model, &p, &samples, &target, &corr, 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.to_vec().iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-8);
    }

    #[test]
    fn fit_recovers_a_bent_elbow() {
        let model = make_toy_model(&ToySpec::default()).unwrap();
        let mut gt = BodyParams::zeros(&model);
        gt.theta[3 * crate::toy::L_ELBOW + 2] = -0.3;
        let posed = skin(&model, &gt).unwrap();
        let cfg = FitConfig {
            iters: 300,
            n_samples: 4000,
            ..FitConfig::default()
        };
        let res = fit(&model, &posed.mesh, &BodyParams::zeros(&model), &cfg).unwrap();
        assert_eq!(res.loss_trace.len(), 300);
        // Two independent samplings of one surface keep a loss near 2A/π, so
        // the reachable minimum is the loss at the true parameters.
        let target = Target::new(sample_surface(&posed.mesh, cfg.n_samples, cfg.seed).unwrap()).unwrap();
        let samples = sample_surface_barycentric(&posed.mesh, cfg.n_samples, 99).unwrap();
        let floor = sampled_loss(&model, &gt, &samples, &target, 0.0).unwrap().0;
        let last = *res.loss_trace.last().unwrap();
        assert!(last < 1.05 * floor && last < res.loss_trace[0], "loss {} -> {last}, floor {floor}", res.loss_trace[0]);
        let joints = skin(&model, &res.params).unwrap().joints;
        for (a, b) in joints.iter().zip(&posed.joints) {
            assert!((a - b).norm() < 0.02, "joint off by {}", (a - b).norm());
        }
    }

    #[test]
    fn fit_started_at_the_answer_stays_there() {
        let model = make_toy_model(&ToySpec::default()).unwrap();
        let mut gt = BodyParams::zeros(&model);
        gt.beta[0] = 0.5;
        gt.theta[3 * crate::toy::L_KNEE] = 0.4;
        let posed = skin(&model, &gt).unwrap();
        let cfg = FitConfig {
            iters: 200,
            n_samples: 3000,
            ..FitConfig::default()
        };
        let res = fit(&model, &posed.mesh, &gt, &cfg).unwrap();
        // Adam's first steps move every coordinate by about lr whatever the
        // gradient scale, so the loss spikes before settling back.
        let first = res.loss_trace[0];
        assert!(*res.loss_trace.last().unwrap() <= 2.0 * first, "{:?}", res.loss_trace);
        let joints = skin(&model, &res.params).unwrap().joints;
        for (a, b) in joints.iter().zip(&posed.joints) {
            assert!((a - b).norm() < 0.02);
        }
    }

    #[test]
    fn fit_is_deterministic_and_validates_its_config() {
        let model = blob_model(Vec3::zeros(), 0.2).unwrap();
        let mut gt = BodyParams::zeros(&model);
        gt.beta[0] = 0.5;
        let mesh = skin(&model, &gt).unwrap().mesh;
        let cfg = FitConfig {
            iters: 20,
            n_samples: 1000,
            ..FitConfig::default()
        };
        let init = initial_params(&model, &mesh).unwrap();
        let a = fit(&model, &mesh, &init, &cfg).unwrap();
        let b = fit(&model, &mesh, &init, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(fit(&model, &mesh, &init, &FitConfig { lr: 0.0, ..cfg.clone() }).is_err());
        assert!(fit(&model, &mesh, &init, &FitConfig { beta_dim: Some(2), ..cfg }).is_err());
        let json = serde_json::to_value(&a).unwrap();
        for key in ["theta", "beta", "t", "loss_trace", "converged"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn divergence_reports_the_iteration() {
        let model = blob_model(Vec3::zeros(), 0.2).unwrap();
        let mesh = crate::shapes::uv_sphere(Vec3::new(0.1, 0.0, 0.0), 0.3, 16, 8);
        let cfg = FitConfig {
            iters: 5,
            n_samples: 200,
            lr: 1e300,
            ..FitConfig::default()
        };
        let init = initial_params(&model, &mesh).unwrap();
        match fit(&model, &mesh, &init, &cfg) {
            Err(Error::Divergence { iteration, .. }) => assert!(iteration < 5),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
