//! Distance-based skin weights and linear blend skinning.

use serde::{Deserialize, Serialize};

use crate::keypoints::Keypoint;
use crate::kinematics::JointTransforms;
use crate::{par, Error, Mat3, Result, Vec3};

pub const DEFAULT_EPSILON: f64 = 0.2;
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;
const MIN_SIGMA: f64 = 1e-12;

/// Dense `N_p × K` weights, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinWeights {
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
}

impl SkinWeights {
    pub fn new(k: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(i) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::ShapeMismatch(format!(
                "weight row {i} has {} entries, expected {k}",
                rows[i].len()
            )));
        }
        Ok(Self { k, rows })
    }

    pub fn vertex_count(&self) -> usize {
        self.rows.len()
    }

    pub fn check_normalized(&self) -> Result<()> {
        for (row, w) in self.rows.iter().enumerate() {
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE || w.iter().any(|&x| x < 0.0) {
                return Err(Error::WeightsNotNormalized { row, sum });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BonePositions {
    pub positions: Vec<Vec3>,
    /// Parent after hopping over low-intensity ancestors.
    pub parents: Vec<usize>,
    pub invalid: Vec<bool>,
}

/// Bone midpoints; a bone whose parent keypoint is below `epsilon` connects
/// to the nearest valid ancestor instead (or the root).
pub fn bone_positions(
    keypoints: &[Keypoint],
    parents: &[usize],
    root: usize,
    epsilon: f64,
) -> Result<BonePositions> {
    let k = keypoints.len();
    if parents.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{} parents for {k} keypoints",
            parents.len()
        )));
    }
    crate::skeleton::topological_order(root, parents)?;
    let invalid: Vec<bool> = keypoints.iter().map(|kp| kp.alpha < epsilon).collect();
    if invalid.iter().all(|&b| b) {
        return Err(Error::AllInvalid);
    }
    let mut effective = parents.to_vec();
    let mut positions = vec![Vec3::zeros(); k];
    for i in 0..k {
        if i == root {
            positions[i] = keypoints[i].mu;
            continue;
        }
        let mut j = parents[i];
        while j != root && invalid[j] {
            j = parents[j];
        }
        effective[i] = j;
        positions[i] = (keypoints[i].mu + keypoints[j].mu) * 0.5;
    }
    Ok(BonePositions {
        positions,
        parents: effective,
        invalid,
    })
}

/// Two-joint Gaussian weight of `child` against `parent`, written as a
/// logistic so that far vertices do not underflow.
fn child_weight(p: &Vec3, child: &Vec3, parent: &Vec3, sigma: f64) -> f64 {
    let s2 = 2.0 * sigma.max(MIN_SIGMA).powi(2);
    let dc = (p - child).norm_squared();
    let dp = (p - parent).norm_squared();
    1.0 / (1.0 + ((dc - dp) / s2).exp())
}

/// Nearest valid bone of `p`, lowest index on ties.
pub fn nearest_bone(p: &Vec3, bones: &BonePositions) -> usize {
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for (i, b) in bones.positions.iter().enumerate() {
        if bones.invalid[i] {
            continue;
        }
        let d = (p - b).norm_squared();
        if d < best_d || best == usize::MAX {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Per-vertex weights spread over the nearest bone's child and parent
/// joints. `kernel_sigma` defaults to half the child bone length.
pub fn skin_weights(
    vertices: &[Vec3],
    keypoints: &[Keypoint],
    parents: &[usize],
    root: usize,
    epsilon: f64,
    kernel_sigma: Option<f64>,
) -> Result<SkinWeights> {
    if let Some(s) = kernel_sigma {
        if !(s > 0.0) {
            return Err(Error::InvalidParameter(format!("kernel sigma {s} must be positive")));
        }
    }
    let k = keypoints.len();
    let bones = bone_positions(keypoints, parents, root, epsilon)?;
    let rows = par::map_slice(vertices, |p| {
        let mut row = vec![0.0; k];
        let child = nearest_bone(p, &bones);
        let parent = bones.parents[child];
        if child == root || bones.invalid[parent] {
            row[child] = 1.0;
            return row;
        }
        let mu_c = keypoints[child].mu;
        let mu_p = keypoints[parent].mu;
        let sigma = kernel_sigma.unwrap_or(0.5 * (mu_c - mu_p).norm());
        let wc = child_weight(p, &mu_c, &mu_p, sigma);
        row[child] = wc;
        row[parent] = 1.0 - wc;
        row
    });
    Ok(SkinWeights { k, rows })
}

/// Per-joint rigid map from the rest configuration to a posed one.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub rest_center: Vec3,
    pub posed_center: Vec3,
    identity_rotation: bool,
}

impl RigidTransform {
    pub fn between(rest_rotation: &Mat3, rest: Vec3, posed_rotation: &Mat3, posed: Vec3) -> Self {
        Self {
            rotation: posed_rotation * rest_rotation.transpose(),
            rest_center: rest,
            posed_center: posed,
            identity_rotation: rest_rotation == posed_rotation,
        }
    }

    /// Displacement of `p` under this transform.
    fn displacement(&self, p: &Vec3) -> Vec3 {
        let shift = self.posed_center - self.rest_center;
        if self.identity_rotation {
            shift
        } else {
            (self.rotation - Mat3::identity()) * (p - self.rest_center) + shift
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p + self.displacement(p)
    }
}

pub fn joint_transforms(rest: &JointTransforms, posed: &JointTransforms) -> Result<Vec<RigidTransform>> {
    if rest.positions.len() != posed.positions.len() {
        return Err(Error::ShapeMismatch("rest and posed joint counts differ".into()));
    }
    Ok((0..rest.positions.len())
        .map(|k| {
            RigidTransform::between(
                &rest.rotations[k],
                rest.positions[k],
                &posed.rotations[k],
                posed.positions[k],
            )
        })
        .collect())
}

/// Linear blend skinning: each vertex moves by the weighted sum of its
/// joints' rigid displacements.
pub fn lbs_deform(
    vertices: &[Vec3],
    weights: &SkinWeights,
    rest: &JointTransforms,
    posed: &JointTransforms,
) -> Result<Vec<Vec3>> {
    if weights.vertex_count() != vertices.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weight rows for {} vertices",
            weights.vertex_count(),
            vertices.len()
        )));
    }
    if weights.k != rest.positions.len() {
        return Err(Error::ShapeMismatch(format!(
            "weights have {} columns for {} joints",
            weights.k,
            rest.positions.len()
        )));
    }
    weights.check_normalized()?;
    let transforms = joint_transforms(rest, posed)?;
    Ok(par::map_range(vertices.len(), |i| {
        let p = vertices[i];
        let mut d = Vec3::zeros();
        for (k, &w) in weights.rows[i].iter().enumerate() {
            if w != 0.0 {
                d += transforms[k].displacement(&p) * w;
            }
        }
        p + d
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn kp(x: f64, y: f64, z: f64, a: f64) -> Keypoint {
        Keypoint::new(Vec3::new(x, y, z), a)
    }

    #[test]
    fn default_epsilon() {
        assert_eq!(DEFAULT_EPSILON, 0.2);
    }

    #[test]
    fn chain_bones() {
        let kps = [kp(0.0, 0.0, 0.0, 1.0), kp(1.0, 0.0, 0.0, 1.0), kp(2.0, 0.0, 0.0, 1.0)];
        let b = bone_positions(&kps, &[0, 0, 1], 0, 0.2).unwrap();
        assert_eq!(b.positions[0], Vec3::zeros());
        assert_eq!(b.positions[1], Vec3::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn invalid_parent_is_hopped() {
        let kps = [kp(0.0, 0.0, 0.0, 1.0), kp(1.0, 0.0, 0.0, 0.1), kp(2.0, 0.0, 0.0, 1.0)];
        let b = bone_positions(&kps, &[0, 0, 1], 0, 0.2).unwrap();
        assert_eq!(b.positions[2], Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(b.parents[2], 0);
        assert!(b.invalid[1]);
    }

    #[test]
    fn all_invalid_errors() {
        let kps = [kp(0.0, 0.0, 0.0, 0.0), kp(1.0, 0.0, 0.0, 0.1)];
        assert!(matches!(bone_positions(&kps, &[0, 0], 0, 0.2), Err(Error::AllInvalid)));
    }

    #[test]
    fn single_valid_bone_takes_all_weight() {
        let kps = [kp(0.0, 0.0, 0.0, 1.0), kp(1.0, 0.0, 0.0, 0.0)];
        let w = skin_weights(&[Vec3::new(3.0, 1.0, 0.0)], &kps, &[0, 0], 0, 0.2, None).unwrap();
        assert_eq!(w.rows[0], vec![1.0, 0.0]);
    }

    #[test]
    fn equidistant_vertex_splits_evenly() {
        let kps = [kp(0.0, 0.0, 0.0, 1.0), kp(2.0, 0.0, 0.0, 1.0)];
        let w = skin_weights(&[Vec3::new(1.0, 0.3, 0.0)], &kps, &[0, 0], 0, 0.2, None).unwrap();
        assert_eq!(w.rows[0], vec![0.5, 0.5]);
    }

    #[test]
    fn identity_pose_is_exact() {
        let rest = JointTransforms {
            positions: vec![Vec3::zeros(), Vec3::x()],
            rotations: vec![
                Mat3::identity(),
                Rotation3::from_axis_angle(&Vec3::y_axis(), 0.3).into_inner(),
            ],
        };
        let verts = vec![Vec3::new(0.3, 0.1, -0.2), Vec3::new(0.7, 0.4, 0.9)];
        let kps = [kp(0.0, 0.0, 0.0, 1.0), kp(1.0, 0.0, 0.0, 1.0)];
        let w = skin_weights(&verts, &kps, &[0, 0], 0, 0.2, None).unwrap();
        assert_eq!(lbs_deform(&verts, &w, &rest, &rest).unwrap(), verts);
    }

    #[test]
    fn unnormalized_weights_rejected() {
        let rest = JointTransforms {
            positions: vec![Vec3::zeros()],
            rotations: vec![Mat3::identity()],
        };
        let w = SkinWeights::new(1, vec![vec![0.7]]).unwrap();
        assert!(matches!(
            lbs_deform(&[Vec3::zeros()], &w, &rest, &rest),
            Err(Error::WeightsNotNormalized { row: 0, .. })
        ));
    }

    #[test]
    fn single_joint_weight_follows_joint() {
        let rest = JointTransforms {
            positions: vec![Vec3::zeros(), Vec3::x()],
            rotations: vec![Mat3::identity(); 2],
        };
        let r = Rotation3::from_axis_angle(&Vec3::z_axis(), 0.8).into_inner();
        let posed = JointTransforms {
            positions: vec![Vec3::zeros(), Vec3::new(0.0, 2.0, 0.0)],
            rotations: vec![Mat3::identity(), r],
        };
        let w = SkinWeights::new(2, vec![vec![0.0, 1.0]]).unwrap();
        let p = Vec3::new(1.5, 0.2, 0.1);
        let out = lbs_deform(&[p], &w, &rest, &posed).unwrap();
        let expected = r * (p - Vec3::x()) + Vec3::new(0.0, 2.0, 0.0);
        assert!((out[0] - expected).norm() < 1e-14);
    }
}
