//! Synthetic articulated rigs with known skeleton, poses and joints.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::kinematics::{forward_kinematics_full, MotionSequence, Pose};
use crate::skeleton::SkeletonTree;
use crate::voxelize::PointFrame;
use crate::{par, Error, Mat3, Result, Vec3};

pub const DEFAULT_POINTS_PER_BONE: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionParams {
    pub frames: usize,
    /// Peak joint angle in radians.
    pub amplitude: f64,
    /// Range of joint oscillation frequencies, in cycles per sequence.
    pub frequency: [f64; 2],
    pub capsule_radius: f64,
    pub points_per_bone: usize,
    pub seed: u64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            frames: 20,
            amplitude: 0.7,
            frequency: [0.5, 1.5],
            capsule_radius: 0.05,
            points_per_bone: DEFAULT_POINTS_PER_BONE,
            seed: 0,
        }
    }
}

impl MotionParams {
    fn validate(&self) -> Result<()> {
        if self.frames < 3 {
            return Err(Error::TooFew {
                what: "frames",
                needed: 3,
                got: self.frames,
            });
        }
        if !(self.capsule_radius > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter(
                "capsule radius must be positive and amplitude finite".into(),
            ));
        }
        let [lo, hi] = self.frequency;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "frequency range [{lo}, {hi}] is invalid"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRig {
    pub skeleton: SkeletonTree,
    pub motion: MotionSequence,
    /// Joint positions per frame.
    pub joints: Vec<Vec<Vec3>>,
    /// Surface samples per frame; the same points in every frame.
    pub surface: Vec<PointFrame>,
    /// Rest-pose sample positions.
    pub rest_points: Vec<Vec3>,
    /// Child joint of the bone each sample belongs to.
    pub bone_of_point: Vec<usize>,
}

impl SyntheticRig {
    pub fn frame_count(&self) -> usize {
        self.joints.len()
    }

    /// Rest-pose joint positions.
    pub fn rest_joints(&self) -> Vec<Vec3> {
        let k = self.skeleton.k();
        crate::kinematics::forward_kinematics(&self.skeleton, &Pose::identity(k))
            .expect("rig skeleton matches its own identity pose")
    }
}

/// Uniform samples inside the capsule of `radius` around segment `a`–`b`.
fn sample_capsule(a: &Vec3, b: &Vec3, radius: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let lo = a.inf(b).add_scalar(-radius);
    let hi = a.sup(b).add_scalar(radius);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = Vec3::new(
            rng.random_range(lo.x..=hi.x),
            rng.random_range(lo.y..=hi.y),
            rng.random_range(lo.z..=hi.z),
        );
        if segment_distance(&p, a, b) <= radius {
            out.push(p);
        }
    }
    out
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * s)).norm()
}

fn perturbed_axis(base: &Vec3, spread: f64, rng: &mut ChaCha8Rng) -> Unit<Vec3> {
    let jitter: [f64; 3] = UnitSphere.sample(rng);
    Unit::new_normalize(base + Vec3::from(jitter) * spread)
}

/// Builds the rig: seeded sinusoidal local rotations on every non-root joint,
/// rest-frame capsule samples carried rigidly by their bone.
fn animate(
    skeleton: SkeletonTree,
    bend_axes: Vec<Vec3>,
    params: &MotionParams,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticRig> {
    params.validate()?;
    let k = skeleton.k();
    let root = skeleton.root();
    let mut channels = Vec::with_capacity(k);
    for axis in &bend_axes {
        let axis = perturbed_axis(axis, 0.3, rng);
        let freq = rng.random_range(params.frequency[0]..=params.frequency[1]);
        let phase = rng.random_range(0.0..2.0 * PI);
        channels.push((axis, freq, phase));
    }
    let t_count = params.frames;
    let poses: Vec<Pose> = (0..t_count)
        .map(|t| {
            let mut pose = Pose::identity(k);
            for (j, (axis, freq, phase)) in channels.iter().enumerate() {
                if j == root {
                    continue;
                }
                let angle =
                    params.amplitude * (2.0 * PI * freq * t as f64 / t_count as f64 + phase).sin();
                pose.rotations[j] = Rotation3::from_axis_angle(axis, angle).into_inner();
            }
            pose
        })
        .collect();

    let rest = forward_kinematics_full(&skeleton, &Pose::identity(k))?;
    let mut rest_points = Vec::new();
    let mut bone_of_point = Vec::new();
    for c in 0..k {
        if c == root {
            continue;
        }
        let p = skeleton.parent(c);
        let pts = sample_capsule(
            &rest.positions[p],
            &rest.positions[c],
            params.capsule_radius,
            params.points_per_bone,
            rng,
        );
        bone_of_point.extend(std::iter::repeat_n(c, pts.len()));
        rest_points.extend(pts);
    }

    let frames = par::try_map_range(t_count, |t| forward_kinematics_full(&skeleton, &poses[t]))?;
    let surface = par::map_range(t_count, |t| {
        let fk = &frames[t];
        rest_points
            .iter()
            .zip(&bone_of_point)
            .map(|(q, &c)| {
                let p = skeleton.parent(c);
                fk.positions[p] + fk.rotations[c] * (q - rest.positions[p])
            })
            .collect::<Vec<_>>()
            .into()
    });
    Ok(SyntheticRig {
        joints: frames.into_iter().map(|f| f.positions).collect(),
        skeleton,
        motion: MotionSequence { poses },
        surface,
        rest_points,
        bone_of_point,
    })
}

/// A serial chain along +x with bones of the given lengths, rooted at one
/// end.
pub fn make_chain_rig(lengths: &[f64], params: &MotionParams) -> Result<SyntheticRig> {
    if lengths.is_empty() {
        return Err(Error::TooFew {
            what: "segments",
            needed: 1,
            got: 0,
        });
    }
    if lengths.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidParameter("bone lengths must be positive".into()));
    }
    let k = lengths.len() + 1;
    let parents: Vec<usize> = (0..k).map(|i| i.saturating_sub(1)).collect();
    let offsets = std::iter::once(Vec3::zeros())
        .chain(lengths.iter().map(|&l| Vec3::new(l, 0.0, 0.0)))
        .collect();
    let skeleton = SkeletonTree::from_offsets(0, parents, offsets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    animate(skeleton, vec![Vec3::z(); k], params, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StarParams {
    pub arms: usize,
    pub segments_per_arm: usize,
    pub segment_length: f64,
    /// Smallest allowed angle between two arm directions, in radians.
    pub min_arm_angle: f64,
}

impl Default for StarParams {
    fn default() -> Self {
        Self {
            arms: 3,
            segments_per_arm: 2,
            segment_length: 0.25,
            min_arm_angle: 1.2,
        }
    }
}

/// Arms radiating from a central root in seeded directions. Joint `0` is
/// the root; arm `a` occupies joints `1 + a·s ..= (a + 1)·s`.
pub fn make_star_rig(star: &StarParams, params: &MotionParams) -> Result<SyntheticRig> {
    if star.arms < 2 {
        return Err(Error::TooFew {
            what: "arms",
            needed: 2,
            got: star.arms,
        });
    }
    if star.segments_per_arm < 1 || !(star.segment_length > 0.0) {
        return Err(Error::InvalidParameter(
            "arms need at least one segment of positive length".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut dirs: Vec<Vec3> = Vec::with_capacity(star.arms);
    let mut attempts = 0;
    while dirs.len() < star.arms {
        let d = Vec3::from(UnitSphere.sample(&mut rng));
        attempts += 1;
        if dirs.iter().all(|e| e.dot(&d).clamp(-1.0, 1.0).acos() >= star.min_arm_angle) {
            dirs.push(d);
        } else if attempts > 100_000 {
            return Err(Error::InvalidParameter(format!(
                "cannot place {} arms with minimum angle {}",
                star.arms, star.min_arm_angle
            )));
        }
    }
    let s = star.segments_per_arm;
    let k = 1 + star.arms * s;
    let mut parents = vec![0; k];
    let mut offsets = vec![Vec3::zeros(); k];
    let mut bend = vec![Vec3::z(); k];
    for (a, d) in dirs.iter().enumerate() {
        // Bend axis perpendicular to the arm.
        let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let perp = d.cross(&helper).normalize();
        for i in 0..s {
            let j = 1 + a * s + i;
            parents[j] = if i == 0 { 0 } else { j - 1 };
            offsets[j] = d * star.segment_length;
            bend[j] = perp;
        }
    }
    let skeleton = SkeletonTree::from_offsets(0, parents, offsets)?;
    animate(skeleton, bend, params, &mut rng)
}

fn minimal_rotation(from: &Vec3, to: &Vec3) -> Mat3 {
    match Rotation3::rotation_between(from, to) {
        Some(r) => r.into_inner(),
        None => {
            let helper = if from.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            Rotation3::from_axis_angle(&Unit::new_normalize(from.cross(&helper)), PI).into_inner()
        }
    }
}

/// Surface points posed from joint positions alone: each bone's samples
/// follow the smallest rotation taking its rest direction to the new one,
/// pivoting about the parent joint.
pub fn body_from_joints(rig: &SyntheticRig, joints: &[Vec3]) -> Result<PointFrame> {
    let s = &rig.skeleton;
    if joints.len() != s.k() {
        return Err(Error::ShapeMismatch(format!(
            "{} joints for a {}-joint rig",
            joints.len(),
            s.k()
        )));
    }
    let rest = rig.rest_joints();
    let rotations: Vec<Mat3> = (0..s.k())
        .map(|c| {
            if c == s.root() {
                Mat3::identity()
            } else {
                let p = s.parent(c);
                minimal_rotation(&(rest[c] - rest[p]), &(joints[c] - joints[p]))
            }
        })
        .collect();
    Ok(rig
        .rest_points
        .iter()
        .zip(&rig.bone_of_point)
        .map(|(q, &c)| {
            let p = s.parent(c);
            joints[p] + rotations[c] * (q - rest[p])
        })
        .collect::<Vec<_>>()
        .into())
}
