//! Motion transfer between skeletons that share a topology.

use crate::kinematics::{forward_kinematics_full, MotionSequence};
use crate::skeleton::SkeletonTree;
use crate::{par, Error, Result, Vec3};

/// Checks that both skeletons have the same root and parents array.
pub fn check_topology(source: &SkeletonTree, target: &SkeletonTree) -> Result<()> {
    if source.k() != target.k() {
        return Err(Error::ShapeMismatch(format!(
            "source has {} joints, target has {}",
            source.k(),
            target.k()
        )));
    }
    // Roots are the unique self-parents, so a root mismatch shows up as a
    // parent mismatch.
    match source
        .parents()
        .iter()
        .zip(target.parents())
        .position(|(a, b)| a != b)
    {
        Some(index) => Err(Error::TopologyMismatch {
            index,
            source_parent: source.parent(index),
            target_parent: target.parent(index),
        }),
        None => Ok(()),
    }
}

/// Target skeleton carrying the source's unit offsets scaled by bone lengths
/// measured on `target_joints` (typically the target's first frame).
pub fn target_skeleton(source: &SkeletonTree, target_joints: &[Vec3]) -> Result<SkeletonTree> {
    if target_joints.len() != source.k() {
        return Err(Error::ShapeMismatch(format!(
            "{} target joints for {} source joints",
            target_joints.len(),
            source.k()
        )));
    }
    let offsets = (0..source.k())
        .map(|k| {
            if k == source.root() {
                Vec3::zeros()
            } else {
                let len = (target_joints[k] - target_joints[source.parent(k)]).norm();
                source.unit_offsets[k] * len
            }
        })
        .collect();
    SkeletonTree::new(
        source.root(),
        source.parents().to_vec(),
        source.unit_offsets.clone(),
        offsets,
        source.intensities.clone(),
    )
}

/// Replays the source motion's accumulated rotations and root translation
/// along the target's bone offsets, frame by frame.
pub fn retarget_motion(
    source: &SkeletonTree,
    motion: &MotionSequence,
    target: &SkeletonTree,
) -> Result<Vec<Vec<Vec3>>> {
    check_topology(source, target)?;
    par::try_map_range(motion.poses.len(), |t| {
        let pose = &motion.poses[t];
        let global = forward_kinematics_full(source, pose)?.rotations;
        let mut out = vec![Vec3::zeros(); target.k()];
        for &v in target.topological_order() {
            out[v] = if v == target.root() {
                pose.root_translation
            } else {
                out[target.parent(v)] + global[v] * target.offsets[v]
            };
        }
        Ok(out)
    })
}
