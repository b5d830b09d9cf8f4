//! Forward kinematics, 6D rotations, rotation fitting and interpolation.

use nalgebra::{Quaternion, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::keypoints::Keypoint;
use crate::optim::{self, DescentSettings};
use crate::skeleton::SkeletonTree;
use crate::{par, Error, Mat3, Result, Vec3};

const DEGENERATE_NORM: f64 = 1e-9;
const SLERP_MIN_ANGLE: f64 = 1e-6;
/// Descent iterations between re-orthonormalizations of the 6D parameters.
const RENORMALIZE_EVERY: usize = 25;

/// First two columns of a rotation matrix, not necessarily orthonormal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation6D(pub [f64; 6]);

impl Rotation6D {
    pub fn identity() -> Self {
        Self([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    pub fn from_matrix(r: &Mat3) -> Self {
        Self([
            r[(0, 0)],
            r[(1, 0)],
            r[(2, 0)],
            r[(0, 1)],
            r[(1, 1)],
            r[(2, 1)],
        ])
    }

    fn columns(&self) -> (Vec3, Vec3) {
        let v = &self.0;
        (Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]))
    }

    /// Gram–Schmidt orthonormalization of the two columns; the third column
    /// is their cross product.
    pub fn to_matrix(&self) -> Result<Mat3> {
        let (a1, a2) = self.columns();
        gram_schmidt(&a1, &a2).map(|g| g.matrix())
    }
}

struct GramSchmidt {
    c1: Vec3,
    c2: Vec3,
    c3: Vec3,
    n1: f64,
    nu: f64,
    proj: f64,
}

impl GramSchmidt {
    fn matrix(&self) -> Mat3 {
        Mat3::from_columns(&[self.c1, self.c2, self.c3])
    }

    /// Gradient with respect to the two input columns given the gradient
    /// with respect to the output matrix.
    fn backward(&self, a2: &Vec3, g: &Mat3) -> (Vec3, Vec3) {
        let (g1, g2, g3) = (g.column(0).into_owned(), g.column(1).into_owned(), g.column(2).into_owned());
        let mut gc1 = g1 + self.c2.cross(&g3);
        let gc2 = g2 + g3.cross(&self.c1);
        let gu = (gc2 - self.c2 * self.c2.dot(&gc2)) / self.nu;
        let ga2 = gu - self.c1 * self.c1.dot(&gu);
        gc1 -= gu * self.proj + a2 * self.c1.dot(&gu);
        let ga1 = (gc1 - self.c1 * self.c1.dot(&gc1)) / self.n1;
        (ga1, ga2)
    }
}

fn gram_schmidt(a1: &Vec3, a2: &Vec3) -> Result<GramSchmidt> {
    let n1 = a1.norm();
    if !(n1 > DEGENERATE_NORM) {
        return Err(Error::Degenerate6D);
    }
    let c1 = a1 / n1;
    let proj = a2.dot(&c1);
    let u = a2 - c1 * proj;
    let nu = u.norm();
    if !(nu > DEGENERATE_NORM) {
        return Err(Error::Degenerate6D);
    }
    let c2 = u / nu;
    Ok(GramSchmidt {
        c1,
        c2,
        c3: c1.cross(&c2),
        n1,
        nu,
        proj,
    })
}

/// Root translation, per-joint rotations relative to the parent (the root's
/// entry is its global rotation) and per-joint intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub root_translation: Vec3,
    pub rotations: Vec<Mat3>,
    pub intensities: Vec<f64>,
}

impl Pose {
    pub fn identity(k: usize) -> Self {
        Self {
            root_translation: Vec3::zeros(),
            rotations: vec![Mat3::identity(); k],
            intensities: vec![1.0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.rotations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotionSequence {
    pub poses: Vec<Pose>,
}

/// Joint positions and accumulated global rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTransforms {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Mat3>,
}

fn check_pose(skeleton: &SkeletonTree, pose: &Pose) -> Result<()> {
    if pose.k() != skeleton.k() || pose.intensities.len() != skeleton.k() {
        return Err(Error::ShapeMismatch(format!(
            "pose has {} joints, skeleton has {}",
            pose.k(),
            skeleton.k()
        )));
    }
    Ok(())
}

/// Joint positions and global rotations for `pose`, traversing parents
/// before children.
pub fn forward_kinematics_full(skeleton: &SkeletonTree, pose: &Pose) -> Result<JointTransforms> {
    check_pose(skeleton, pose)?;
    let k = skeleton.k();
    let mut positions = vec![Vec3::zeros(); k];
    let mut rotations = vec![Mat3::identity(); k];
    for &v in skeleton.topological_order() {
        if v == skeleton.root() {
            rotations[v] = pose.rotations[v];
            positions[v] = pose.root_translation;
        } else {
            let p = skeleton.parent(v);
            rotations[v] = rotations[p] * pose.rotations[v];
            positions[v] = positions[p] + rotations[v] * skeleton.offsets[v];
        }
    }
    Ok(JointTransforms {
        positions,
        rotations,
    })
}

pub fn forward_kinematics(skeleton: &SkeletonTree, pose: &Pose) -> Result<Vec<Vec3>> {
    forward_kinematics_full(skeleton, pose).map(|j| j.positions)
}

/// Joint positions for every pose of a motion, frame-parallel.
pub fn forward_kinematics_motion(
    skeleton: &SkeletonTree,
    motion: &MotionSequence,
) -> Result<Vec<Vec<Vec3>>> {
    par::try_map_range(motion.poses.len(), |t| {
        forward_kinematics(skeleton, &motion.poses[t])
    })
}

/// Starting point for [`fit_pose_rotations`].
#[derive(Debug, Clone, Default, PartialEq)]
pub enum FitInit {
    /// Identity rotations, root translation at the target root.
    #[default]
    Identity,
    /// A given pose, e.g. the previous frame's fit.
    Pose(Pose),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    pub descent: DescentSettings,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            descent: DescentSettings {
                max_iters: 500,
                initial_step: 1.0,
                barzilai_borwein: true,
                ..DescentSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoseFit {
    pub pose: Pose,
    /// Weighted sum of squared joint errors at the returned pose.
    pub residual: f64,
    pub initial_residual: f64,
    pub iterations: usize,
}

/// Parameter vector layout: root translation (3), then six values per joint.
fn pose_to_params(pose: &Pose) -> Vec<f64> {
    let mut x = pose.root_translation.as_slice().to_vec();
    for r in &pose.rotations {
        x.extend_from_slice(&Rotation6D::from_matrix(r).0);
    }
    x
}

fn joint_params(x: &[f64], k: usize) -> (Vec3, Vec3) {
    let s = &x[3 + 6 * k..3 + 6 * k + 6];
    (Vec3::new(s[0], s[1], s[2]), Vec3::new(s[3], s[4], s[5]))
}

fn params_to_pose(x: &[f64], intensities: &[f64]) -> Result<Pose> {
    let k = intensities.len();
    let rotations = (0..k)
        .map(|j| {
            let (a1, a2) = joint_params(x, j);
            gram_schmidt(&a1, &a2).map(|g| g.matrix())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pose {
        root_translation: Vec3::new(x[0], x[1], x[2]),
        rotations,
        intensities: intensities.to_vec(),
    })
}

/// Replaces each joint's 6D pair by the first two columns of its rotation.
/// The objective is unchanged; the descent stays well scaled.
fn renormalize(x: &mut [f64], k: usize) -> Result<()> {
    for j in 0..k {
        let (a1, a2) = joint_params(x, j);
        let g = gram_schmidt(&a1, &a2)?;
        x[3 + 6 * j..6 + 6 * j].copy_from_slice(g.c1.as_slice());
        x[6 + 6 * j..9 + 6 * j].copy_from_slice(g.c2.as_slice());
    }
    Ok(())
}

/// `Σ_k w_k ‖FK(x)_k − target_k‖²` and its analytic gradient with respect to
/// the pose parameters.
pub fn fit_objective(
    skeleton: &SkeletonTree,
    x: &[f64],
    target: &[Vec3],
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let k = skeleton.k();
    let gs = (0..k)
        .map(|j| {
            let (a1, a2) = joint_params(x, j);
            gram_schmidt(&a1, &a2)
        })
        .collect::<Result<Vec<_>>>()?;
    let local: Vec<Mat3> = gs.iter().map(GramSchmidt::matrix).collect();
    let pose = Pose {
        root_translation: Vec3::new(x[0], x[1], x[2]),
        rotations: local.clone(),
        intensities: vec![1.0; k],
    };
    let fk = forward_kinematics_full(skeleton, &pose)?;

    let mut value = 0.0;
    // Gradient with respect to each joint position, later accumulated over
    // the subtree.
    let mut g_pos = vec![Vec3::zeros(); k];
    for j in 0..k {
        let e = fk.positions[j] - target[j];
        value += weights[j] * e.norm_squared();
        g_pos[j] = e * (2.0 * weights[j]);
    }
    let mut g_rot = vec![Mat3::zeros(); k];
    let order = skeleton.topological_order();
    for &v in order.iter().rev() {
        if v != skeleton.root() {
            g_rot[v] += g_pos[v] * skeleton.offsets[v].transpose();
            let p = skeleton.parent(v);
            let (gp, gr) = (g_pos[v], g_rot[v] * local[v].transpose());
            g_pos[p] += gp;
            g_rot[p] += gr;
        }
    }

    let mut grad = vec![0.0; x.len()];
    grad[..3].copy_from_slice(g_pos[skeleton.root()].as_slice());
    for v in 0..k {
        let g_local = if v == skeleton.root() {
            g_rot[v]
        } else {
            fk.rotations[skeleton.parent(v)].transpose() * g_rot[v]
        };
        let (_, a2) = joint_params(x, v);
        let (ga1, ga2) = gs[v].backward(&a2, &g_local);
        grad[3 + 6 * v..6 + 6 * v].copy_from_slice(ga1.as_slice());
        grad[6 + 6 * v..9 + 6 * v].copy_from_slice(ga2.as_slice());
    }
    Ok((value, grad))
}

/// Fits root translation and local rotations so that forward kinematics
/// matches `target`, weighting each joint by its intensity.
pub fn fit_pose_rotations(
    skeleton: &SkeletonTree,
    target: &[Keypoint],
    init: &FitInit,
    settings: &FitSettings,
) -> Result<PoseFit> {
    let k = skeleton.k();
    if target.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {k} joints",
            target.len()
        )));
    }
    if target.iter().any(|t| !t.mu.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidParameter("non-finite target".into()));
    }
    settings.descent.validate()?;
    let positions: Vec<Vec3> = target.iter().map(|t| t.mu).collect();
    let weights: Vec<f64> = target.iter().map(|t| t.alpha).collect();
    let start = match init {
        FitInit::Identity => Pose {
            root_translation: positions[skeleton.root()],
            ..Pose::identity(k)
        },
        FitInit::Pose(p) => {
            check_pose(skeleton, p)?;
            p.clone()
        }
    };
    let mut x = pose_to_params(&start);
    let mut initial_residual = None;
    let mut residual;
    let mut iterations = 0;
    loop {
        let chunk = DescentSettings {
            max_iters: (settings.descent.max_iters - iterations).min(RENORMALIZE_EVERY),
            ..settings.descent
        };
        let report = optim::minimize(
            x,
            |x| fit_objective(skeleton, x, &positions, &weights).unwrap_or((f64::INFINITY, vec![0.0; x.len()])),
            &chunk,
        );
        initial_residual.get_or_insert(report.initial_value);
        residual = report.value;
        iterations += report.iterations;
        x = report.x;
        renormalize(&mut x, k)?;
        if report.converged || iterations >= settings.descent.max_iters {
            break;
        }
    }
    let pose = params_to_pose(&x, &weights)?;
    Ok(PoseFit {
        pose,
        residual,
        initial_residual: initial_residual.unwrap_or(residual),
        iterations,
    })
}

/// `Σ_k α_k ‖FK(pose)_k − μ_k‖²` for a given pose.
pub fn pose_residual(skeleton: &SkeletonTree, pose: &Pose, target: &[Keypoint]) -> Result<f64> {
    if target.len() != skeleton.k() {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {} joints",
            target.len(),
            skeleton.k()
        )));
    }
    let joints = forward_kinematics(skeleton, pose)?;
    Ok(joints
        .iter()
        .zip(target)
        .map(|(j, t)| t.alpha * (j - t.mu).norm_squared())
        .sum())
}

/// Fits every frame independently from the identity initialization.
pub fn fit_motion(
    skeleton: &SkeletonTree,
    frames: &[Vec<Keypoint>],
    settings: &FitSettings,
) -> Result<(MotionSequence, Vec<f64>)> {
    let fits = par::try_map_range(frames.len(), |t| {
        fit_pose_rotations(skeleton, &frames[t], &FitInit::Identity, settings)
    })?;
    let residuals = fits.iter().map(|f| f.residual).collect();
    Ok((
        MotionSequence {
            poses: fits.into_iter().map(|f| f.pose).collect(),
        },
        residuals,
    ))
}

pub fn matrix_to_quaternion(r: &Mat3) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r))
}

/// Shortest-arc quaternion slerp; falls back to normalized lerp for arcs
/// below a microradian.
pub fn slerp_quaternion(
    a: &UnitQuaternion<f64>,
    b: &UnitQuaternion<f64>,
    t: f64,
) -> UnitQuaternion<f64> {
    let qa = a.quaternion().coords;
    let mut qb = b.quaternion().coords;
    let mut dot = qa.dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    let theta = dot.min(1.0).acos();
    let coords = if theta < SLERP_MIN_ANGLE {
        qa * (1.0 - t) + qb * t
    } else {
        let s = theta.sin();
        qa * (((1.0 - t) * theta).sin() / s) + qb * ((t * theta).sin() / s)
    };
    UnitQuaternion::from_quaternion(Quaternion::from(coords))
}

/// Interpolates local rotations by slerp and root translation and
/// intensities linearly.
pub fn slerp_pose(a: &Pose, b: &Pose, t: f64) -> Result<Pose> {
    if a.k() != b.k() || a.intensities.len() != b.intensities.len() {
        return Err(Error::ShapeMismatch("poses differ in joint count".into()));
    }
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    let rotations = a
        .rotations
        .iter()
        .zip(&b.rotations)
        .map(|(ra, rb)| {
            slerp_quaternion(&matrix_to_quaternion(ra), &matrix_to_quaternion(rb), t)
                .to_rotation_matrix()
                .into_inner()
        })
        .collect();
    Ok(Pose {
        root_translation: a.root_translation * (1.0 - t) + b.root_translation * t,
        rotations,
        intensities: a
            .intensities
            .iter()
            .zip(&b.intensities)
            .map(|(x, y)| (1.0 - t) * x + t * y)
            .collect(),
    })
}

/// Componentwise linear interpolation of keypoint positions and intensities.
pub fn lerp_keypoints(a: &[Keypoint], b: &[Keypoint], t: f64) -> Result<Vec<Keypoint>> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch("keypoint frames differ in K".into()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| Keypoint::new(x.mu * (1.0 - t) + y.mu * t, (1.0 - t) * x.alpha + t * y.alpha))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
        let axis = nalgebra::Unit::new_normalize(Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        Rotation3::from_axis_angle(&axis, rng.random_range(-3.0..3.0)).into_inner()
    }

    fn two_bone() -> SkeletonTree {
        SkeletonTree::from_offsets(
            0,
            vec![0, 0, 1],
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn rot6d_identity_and_scale() {
        assert_eq!(Rotation6D::identity().to_matrix().unwrap(), Mat3::identity());
        let r = Rotation6D([0.3, -1.0, 0.2, 0.5, 0.5, 0.1]);
        let s = Rotation6D([1.5, -5.0, 1.0, 0.5, 0.5, 0.1]);
        let t = Rotation6D([0.3, -1.0, 0.2, 2.5, 2.5, 0.5]);
        let m = r.to_matrix().unwrap();
        assert!((m - s.to_matrix().unwrap()).amax() < 1e-14);
        assert!((m - t.to_matrix().unwrap()).amax() < 1e-14);
        assert!(matches!(
            Rotation6D([0.0; 6]).to_matrix(),
            Err(Error::Degenerate6D)
        ));
        assert!(Rotation6D([1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).to_matrix().is_err());
    }

    #[test]
    fn rot6d_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let r = random_rotation(&mut rng);
            let back = Rotation6D::from_matrix(&r).to_matrix().unwrap();
            assert!((back - r).amax() < 1e-12);
            assert!((back.transpose() * back - Mat3::identity()).norm() < 1e-10);
            assert!((back.determinant() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fk_identity_is_offset_sum() {
        let s = two_bone();
        let p = forward_kinematics(&s, &Pose::identity(3)).unwrap();
        assert_eq!(p[2], Vec3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn fk_root_rotation() {
        let s = SkeletonTree::from_offsets(0, vec![0, 0], vec![Vec3::zeros(), Vec3::x()]).unwrap();
        let mut pose = Pose::identity(2);
        pose.root_translation = Vec3::new(1.0, 1.0, 1.0);
        pose.rotations[0] = Rotation3::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2).into_inner();
        let p = forward_kinematics(&s, &pose).unwrap();
        assert!((p[1] - Vec3::new(1.0, 2.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn fk_is_rigidly_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = two_bone();
        let mut pose = Pose::identity(3);
        for r in &mut pose.rotations {
            *r = random_rotation(&mut rng);
        }
        pose.root_translation = Vec3::new(0.2, -0.1, 0.3);
        let base = forward_kinematics(&s, &pose).unwrap();
        let g = random_rotation(&mut rng);
        let mut moved = pose.clone();
        moved.rotations[0] = g * pose.rotations[0];
        moved.root_translation = g * pose.root_translation;
        let out = forward_kinematics(&s, &moved).unwrap();
        for (a, b) in base.iter().zip(&out) {
            assert!((g * a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn canonical_target_has_zero_residual() {
        let s = two_bone();
        let joints = forward_kinematics(&s, &Pose::identity(3)).unwrap();
        let target: Vec<Keypoint> = joints.iter().map(|&p| Keypoint::new(p, 1.0)).collect();
        let fit = fit_pose_rotations(&s, &target, &FitInit::Identity, &FitSettings::default()).unwrap();
        assert_eq!(fit.initial_residual, 0.0);
        assert_eq!(fit.residual, 0.0);
    }

    #[test]
    fn incompatible_lengths_give_positive_residual() {
        let s = two_bone();
        let target = vec![
            Keypoint::new(Vec3::zeros(), 1.0),
            Keypoint::new(Vec3::new(3.0, 0.0, 0.0), 1.0),
            Keypoint::new(Vec3::new(3.0, 5.0, 0.0), 1.0),
        ];
        let fit = fit_pose_rotations(&s, &target, &FitInit::Identity, &FitSettings::default()).unwrap();
        assert!(fit.residual > 0.0);
        assert!(fit.residual <= fit.initial_residual);
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let mut a = Pose::identity(1);
        let mut b = Pose::identity(1);
        b.rotations[0] = Rotation3::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2).into_inner();
        b.root_translation = Vec3::new(2.0, 0.0, 0.0);
        b.intensities[0] = 0.0;
        a.intensities[0] = 1.0;
        assert_eq!(slerp_pose(&a, &b, 0.0).unwrap(), a);
        assert_eq!(slerp_pose(&a, &b, 1.0).unwrap(), b);
        let mid = slerp_pose(&a, &b, 0.5).unwrap();
        let expected = Rotation3::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2 / 2.0).into_inner();
        assert!((mid.rotations[0] - expected).amax() < 1e-12);
        assert_eq!(mid.root_translation, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(mid.intensities[0], 0.5);
    }

    #[test]
    fn slerp_angle_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let ra = random_rotation(&mut rng);
            let rb = random_rotation(&mut rng);
            let t: f64 = rng.random();
            let qa = matrix_to_quaternion(&ra);
            let qb = matrix_to_quaternion(&rb);
            let q = slerp_quaternion(&qa, &qb, t);
            let total = qa.angle_to(&qb);
            assert!((qa.angle_to(&q) - t * total).abs() < 1e-9);
        }
    }

    #[test]
    fn lerp_cases() {
        let a = vec![Keypoint::new(Vec3::zeros(), 1.0)];
        let b = vec![Keypoint::new(Vec3::new(2.0, 0.0, 0.0), 0.0)];
        assert_eq!(lerp_keypoints(&a, &b, 0.0).unwrap(), a);
        let m = lerp_keypoints(&a, &b, 0.5).unwrap();
        assert_eq!(m[0].mu, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(m[0].alpha, 0.5);
    }

    #[test]
    fn lerp_commutes_with_affine_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = Mat3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let c = Vec3::new(rng.random(), rng.random(), rng.random());
        let pts = |rng: &mut ChaCha8Rng| -> Vec<Keypoint> {
            (0..5)
                .map(|_| Keypoint::new(Vec3::new(rng.random(), rng.random(), rng.random()), 1.0))
                .collect()
        };
        let a = pts(&mut rng);
        let b = pts(&mut rng);
        let map = |v: &[Keypoint]| -> Vec<Keypoint> {
            v.iter().map(|k| Keypoint::new(m * k.mu + c, k.alpha)).collect()
        };
        let t = 0.37;
        let lhs = map(&lerp_keypoints(&a, &b, t).unwrap());
        let rhs = lerp_keypoints(&map(&a), &map(&b), t).unwrap();
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x.mu - y.mu).norm() < 1e-12);
        }
    }
}
