//! Chamfer distance, motion Chamfer distance and semantic consistency.

use serde::{Deserialize, Serialize};

use crate::keypoints::KeypointTracks;
use crate::voxelize::{voxel_difference, BBox, VoxelSequence};
use crate::{par, Error, Result, Vec3};

/// Squared unit-cube diagonal; the cost of a difference set that has no
/// counterpart on the other side.
pub const ONE_SIDED_PENALTY: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub per_frame: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci95: Option<f64>,
}

/// Half-width of the normal-approximation 95% interval of the mean.
pub fn ci95_half_width(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = par::ordered_sum(values) / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some(1.96 * (var / n as f64).sqrt())
}

/// Points sorted by x for pruned nearest-neighbor queries.
struct SortedCloud {
    points: Vec<Vec3>,
}

impl SortedCloud {
    fn new(points: &[Vec3]) -> Self {
        let mut points = points.to_vec();
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        Self { points }
    }

    fn nearest_squared(&self, p: &Vec3) -> f64 {
        let start = self.points.partition_point(|q| q.x < p.x);
        let mut best = f64::INFINITY;
        for q in &self.points[start..] {
            if (q.x - p.x).powi(2) > best {
                break;
            }
            best = best.min((p - q).norm_squared());
        }
        for q in self.points[..start].iter().rev() {
            if (q.x - p.x).powi(2) > best {
                break;
            }
            best = best.min((p - q).norm_squared());
        }
        best
    }
}

fn mean_nearest(from: &[Vec3], to: &SortedCloud) -> f64 {
    let d = par::map_slice(from, |p| to.nearest_squared(p));
    par::ordered_sum(&d) / from.len() as f64
}

/// Mean squared nearest-neighbor distance from `p` to `q` plus the same
/// from `q` to `p`.
pub fn chamfer(p: &[Vec3], q: &[Vec3]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(mean_nearest(p, &SortedCloud::new(q)) + mean_nearest(q, &SortedCloud::new(p)))
}

fn difference_term(gt: &[Vec3], pred: &[Vec3]) -> Result<f64> {
    match (gt.is_empty(), pred.is_empty()) {
        (true, true) => Ok(0.0),
        (false, false) => chamfer(gt, pred),
        _ => Ok(ONE_SIDED_PENALTY),
    }
}

/// Mean over consecutive frame pairs of the Chamfer distances between the
/// occupied and vacated cell sets of the two sequences, in unit-cube
/// coordinates.
pub fn motion_chamfer(gt: &VoxelSequence, pred: &VoxelSequence) -> Result<MetricReport> {
    let t = gt.frame_count();
    if t != pred.frame_count() {
        return Err(Error::ShapeMismatch(format!(
            "ground truth has {t} frames, prediction has {}",
            pred.frame_count()
        )));
    }
    if t < 2 {
        return Err(Error::TooFew {
            what: "frames",
            needed: 2,
            got: t,
        });
    }
    if gt.resolution() != pred.resolution() {
        return Err(Error::ResolutionMismatch {
            left: gt.resolution(),
            right: pred.resolution(),
        });
    }
    if gt.bbox != pred.bbox {
        return Err(Error::ShapeMismatch("sequences use different bounding boxes".into()));
    }
    let unit = BBox::unit();
    let per_frame = par::try_map_range(t - 1, |i| {
        let (gp, gm) = voxel_difference(&gt.frames[i + 1], &gt.frames[i], &unit)?;
        let (pp, pm) = voxel_difference(&pred.frames[i + 1], &pred.frames[i], &unit)?;
        Ok::<_, Error>(difference_term(&gp.points, &pp.points)? + difference_term(&gm.points, &pm.points)?)
    })?;
    Ok(MetricReport {
        metric: "motion_chamfer".into(),
        value: par::ordered_sum(&per_frame) / (t - 1) as f64,
        ci95: ci95_half_width(&per_frame),
        per_frame,
    })
}

/// For each ground-truth joint, the largest fraction of frames in which a
/// single keypoint is its nearest one, averaged over joints. `per_frame`
/// holds the per-joint scores.
pub fn sc_score(pred: &KeypointTracks, gt_joints: &[Vec<Vec3>]) -> Result<MetricReport> {
    let t = pred.t();
    if gt_joints.len() != t {
        return Err(Error::ShapeMismatch(format!(
            "{} ground-truth frames for {t} predicted frames",
            gt_joints.len()
        )));
    }
    let j = gt_joints.first().map_or(0, Vec::len);
    if j == 0 || pred.k() == 0 || t == 0 {
        return Err(Error::TooFew {
            what: "joints, keypoints and frames",
            needed: 1,
            got: 0,
        });
    }
    if gt_joints.iter().any(|f| f.len() != j) {
        return Err(Error::ShapeMismatch("ground-truth frames differ in joint count".into()));
    }
    let per_joint = par::map_range(j, |joint| {
        let mut counts = vec![0usize; pred.k()];
        for (frame, gt) in gt_joints.iter().enumerate() {
            let target = gt[joint];
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, kp) in pred.frame(frame).iter().enumerate() {
                let d = (kp.mu - target).norm_squared();
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            counts[best] += 1;
        }
        *counts.iter().max().unwrap_or(&0) as f64 / t as f64
    });
    Ok(MetricReport {
        metric: "sc_score".into(),
        value: par::ordered_sum(&per_joint) / j as f64,
        ci95: None,
        per_frame: per_joint,
    })
}
