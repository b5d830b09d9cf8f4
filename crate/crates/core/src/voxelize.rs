//! Point clouds to binary occupancy grids and back.
//!
//! All frames of a sequence share one bounding box. Normalized coordinates
//! map the box onto the unit cube; cells are half-open `[lo, hi)` except the
//! last cell on each axis, which also takes points on the max face.

use serde::{Deserialize, Serialize};

use crate::{par, Error, Result, Vec3};

/// Default grid resolution.
pub const DEFAULT_RESOLUTION: [usize; 3] = [64, 64, 64];

/// Smallest axis extent, relative to the coordinate magnitude, that a
/// bounding box is allowed to have.
const MIN_RELATIVE_EXTENT: f64 = 1.0e-8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointFrame {
    pub points: Vec<Vec3>,
}

impl PointFrame {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

impl From<Vec<Vec3>> for PointFrame {
    fn from(points: Vec<Vec3>) -> Self {
        Self { points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl BBox {
    pub fn unit() -> Self {
        Self {
            min: Vec3::zeros(),
            max: Vec3::new(1.0, 1.0, 1.0),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Maps a world point into the unit cube.
    pub fn normalize(&self, p: &Vec3) -> Vec3 {
        (p - self.min).component_div(&self.extent())
    }

    /// Inverse of [`BBox::normalize`].
    pub fn denormalize(&self, u: &Vec3) -> Vec3 {
        self.min + u.component_mul(&self.extent())
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }
}

/// Bounding box of every point in every frame.
///
/// Axes thinner than `padding` times the largest extent (or a tiny
/// magnitude-relative floor) are widened symmetrically to that width.
pub fn compute_shared_bbox(frames: &[PointFrame], padding: f64) -> Result<BBox> {
    if !(padding >= 0.0) {
        return Err(Error::InvalidParameter(format!("padding {padding}")));
    }
    let mut min = Vec3::repeat(f64::INFINITY);
    let mut max = Vec3::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for p in frames.iter().flat_map(|f| &f.points) {
        any = true;
        min = min.inf(p);
        max = max.sup(p);
    }
    if !any {
        return Err(Error::EmptySequence);
    }
    let extent = max - min;
    let largest = extent.max();
    for a in 0..3 {
        let magnitude = min[a].abs().max(max[a].abs()).max(1.0);
        let floor = (padding * largest).max(MIN_RELATIVE_EXTENT * magnitude);
        if extent[a] < floor {
            let center = 0.5 * (min[a] + max[a]);
            min[a] = center - 0.5 * floor;
            max[a] = center + 0.5 * floor;
        }
    }
    Ok(BBox { min, max })
}

/// Binary occupancy grid stored x-fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    resolution: [usize; 3],
    occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(resolution: [usize; 3]) -> Self {
        let n = resolution.iter().product();
        Self {
            resolution,
            occupancy: vec![false; n],
        }
    }

    pub fn from_occupancy(resolution: [usize; 3], occupancy: Vec<bool>) -> Result<Self> {
        let n: usize = resolution.iter().product();
        if occupancy.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} cells for resolution {resolution:?}",
                occupancy.len()
            )));
        }
        Ok(Self {
            resolution,
            occupancy,
        })
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn cell_count(&self) -> usize {
        self.occupancy.len()
    }

    pub fn linear_index(&self, cell: [usize; 3]) -> usize {
        let [gx, gy, _] = self.resolution;
        cell[0] + gx * (cell[1] + gy * cell[2])
    }

    pub fn cell_of(&self, index: usize) -> [usize; 3] {
        let [gx, gy, _] = self.resolution;
        [index % gx, (index / gx) % gy, index / (gx * gy)]
    }

    pub fn get(&self, cell: [usize; 3]) -> bool {
        self.occupancy[self.linear_index(cell)]
    }

    pub fn set(&mut self, cell: [usize; 3], value: bool) {
        let i = self.linear_index(cell);
        self.occupancy[i] = value;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Occupied cells in x-fastest order.
    pub fn occupied_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(i, _)| self.cell_of(i))
    }

    /// Cell centers of occupied cells in normalized coordinates.
    pub fn occupied_centers_normalized(&self) -> Vec<Vec3> {
        self.occupied_cells()
            .map(|c| cell_center_normalized(c, self.resolution))
            .collect()
    }
}

/// Center of `cell` in normalized coordinates: `(i + 0.5) / G` per axis.
pub fn cell_center_normalized(cell: [usize; 3], resolution: [usize; 3]) -> Vec3 {
    Vec3::new(
        (cell[0] as f64 + 0.5) / resolution[0] as f64,
        (cell[1] as f64 + 0.5) / resolution[1] as f64,
        (cell[2] as f64 + 0.5) / resolution[2] as f64,
    )
}

/// Cell containing a normalized point, with the max face clamped into the
/// last cell. `None` when the point is outside the unit cube.
pub fn cell_of_normalized(u: &Vec3, resolution: [usize; 3]) -> Option<[usize; 3]> {
    let mut cell = [0usize; 3];
    for a in 0..3 {
        if !(u[a] >= 0.0 && u[a] <= 1.0) {
            return None;
        }
        let g = resolution[a];
        cell[a] = ((u[a] * g as f64).floor() as usize).min(g - 1);
    }
    Some(cell)
}

/// A voxelized sequence. All frames share `bbox` and one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSequence {
    pub frames: Vec<VoxelGrid>,
    pub bbox: BBox,
}

impl VoxelSequence {
    pub fn new(frames: Vec<VoxelGrid>, bbox: BBox) -> Result<Self> {
        if let Some(first) = frames.first() {
            for f in &frames[1..] {
                if f.resolution() != first.resolution() {
                    return Err(Error::ResolutionMismatch {
                        left: first.resolution(),
                        right: f.resolution(),
                    });
                }
            }
        }
        Ok(Self { frames, bbox })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.frames
            .first()
            .map(|f| f.resolution())
            .unwrap_or([0; 3])
    }
}

fn check_resolution(resolution: [usize; 3]) -> Result<()> {
    if resolution.iter().any(|&g| g == 0) {
        return Err(Error::InvalidParameter(format!(
            "resolution {resolution:?} has a zero axis"
        )));
    }
    Ok(())
}

/// Voxelizes a single frame against `bbox`. `frame_index` is only used for
/// error reporting.
pub fn voxelize_frame(
    frame: &PointFrame,
    bbox: &BBox,
    resolution: [usize; 3],
    frame_index: usize,
) -> Result<VoxelGrid> {
    check_resolution(resolution)?;
    let mut grid = VoxelGrid::empty(resolution);
    for (i, p) in frame.points.iter().enumerate() {
        let cell = cell_of_normalized(&bbox.normalize(p), resolution).ok_or(
            Error::PointOutsideBox {
                frame: frame_index,
                point: i,
            },
        )?;
        grid.set(cell, true);
    }
    Ok(grid)
}

pub fn voxelize_sequence(
    frames: &[PointFrame],
    bbox: &BBox,
    resolution: [usize; 3],
) -> Result<VoxelSequence> {
    check_resolution(resolution)?;
    let grids = par::try_map_range(frames.len(), |t| {
        voxelize_frame(&frames[t], bbox, resolution, t)
    })?;
    VoxelSequence::new(grids, *bbox)
}

/// One world-space point per occupied cell, at the cell center.
pub fn sample_points_from_voxels(grid: &VoxelGrid, bbox: &BBox) -> PointFrame {
    grid.occupied_centers_normalized()
        .iter()
        .map(|u| bbox.denormalize(u))
        .collect::<Vec<_>>()
        .into()
}

/// Centers of cells that became occupied (`V⁺`) and that were vacated
/// (`V⁻`) between `previous` and `current`.
pub fn voxel_difference(
    current: &VoxelGrid,
    previous: &VoxelGrid,
    bbox: &BBox,
) -> Result<(PointFrame, PointFrame)> {
    if current.resolution() != previous.resolution() {
        return Err(Error::ResolutionMismatch {
            left: current.resolution(),
            right: previous.resolution(),
        });
    }
    let res = current.resolution();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (i, (&now, &before)) in current
        .occupancy()
        .iter()
        .zip(previous.occupancy())
        .enumerate()
    {
        if now != before {
            let p = bbox.denormalize(&cell_center_normalized(current.cell_of(i), res));
            if now {
                plus.push(p);
            } else {
                minus.push(p);
            }
        }
    }
    Ok((plus.into(), minus.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-3.0..2.0),
                    rng.random_range(0.0..10.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    fn random_grid(rng: &mut ChaCha8Rng, res: [usize; 3]) -> VoxelGrid {
        let n = res.iter().product();
        VoxelGrid::from_occupancy(res, (0..n).map(|_| rng.random_bool(0.2)).collect()).unwrap()
    }

    #[test]
    fn bbox_two_frames() {
        let frames = vec![
            PointFrame::new(vec![Vec3::zeros()]),
            PointFrame::new(vec![Vec3::new(1.0, 2.0, 3.0)]),
        ];
        let b = compute_shared_bbox(&frames, 0.0).unwrap();
        assert_eq!(b.min, Vec3::zeros());
        assert_eq!(b.max, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn bbox_single_point_is_non_degenerate() {
        let frames = vec![PointFrame::new(vec![Vec3::repeat(5.0)])];
        let b = compute_shared_bbox(&frames, 0.05).unwrap();
        for a in 0..3 {
            assert!(b.max[a] > b.min[a]);
            assert!((0.5 * (b.max[a] + b.min[a]) - 5.0).abs() < 1e-12);
        }
        assert!(b.contains(&Vec3::repeat(5.0)));
    }

    #[test]
    fn bbox_empty_sequence_errors() {
        let frames = vec![PointFrame::default(), PointFrame::default()];
        assert!(matches!(
            compute_shared_bbox(&frames, 0.0),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn bbox_matches_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 1000);
        let frames: Vec<PointFrame> = pts.chunks(100).map(|c| c.to_vec().into()).collect();
        let b = compute_shared_bbox(&frames, 0.0).unwrap();
        for a in 0..3 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in &pts {
                if p[a] < lo {
                    lo = p[a];
                }
                if p[a] > hi {
                    hi = p[a];
                }
            }
            assert_eq!(b.min[a], lo);
            assert_eq!(b.max[a], hi);
        }
    }

    #[test]
    fn center_point_lands_in_middle_cell() {
        let bbox = BBox::unit();
        let g = voxelize_frame(&vec![Vec3::repeat(0.5)].into(), &bbox, [4, 4, 4], 0).unwrap();
        assert_eq!(g.occupied_count(), 1);
        assert!(g.get([2, 2, 2]));
    }

    #[test]
    fn shared_cell_counts_once_and_max_face_clamps() {
        let bbox = BBox::unit();
        let pts = vec![
            Vec3::new(0.1, 0.1, 0.1),
            Vec3::new(0.11, 0.12, 0.1),
            Vec3::new(1.0, 1.0, 1.0),
        ];
        let g = voxelize_frame(&pts.into(), &bbox, [4, 4, 4], 0).unwrap();
        assert_eq!(g.occupied_count(), 2);
        assert!(g.get([0, 0, 0]));
        assert!(g.get([3, 3, 3]));
    }

    #[test]
    fn outside_point_reports_frame_and_index() {
        let bbox = BBox::unit();
        let frames = vec![
            PointFrame::new(vec![Vec3::repeat(0.5)]),
            PointFrame::new(vec![Vec3::repeat(0.5), Vec3::new(0.5, 1.5, 0.5)]),
        ];
        match voxelize_sequence(&frames, &bbox, [4, 4, 4]) {
            Err(Error::PointOutsideBox { frame, point }) => assert_eq!((frame, point), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn binning_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 1000);
        let frames = vec![PointFrame::new(pts.clone())];
        let bbox = compute_shared_bbox(&frames, 0.0).unwrap();
        let seq = voxelize_sequence(&frames, &bbox, [16, 16, 16]).unwrap();

        // Brute force: for every cell, test each point against the cell's
        // closed/half-open interval directly in world units.
        let ext = bbox.extent();
        let mut expected = vec![false; 16 * 16 * 16];
        for p in &pts {
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let w = ext[a] / 16.0;
                let mut found = 15;
                for i in 0..16 {
                    let lo = bbox.min[a] + i as f64 * w;
                    let hi = bbox.min[a] + (i + 1) as f64 * w;
                    if p[a] >= lo && p[a] < hi {
                        found = i;
                        break;
                    }
                }
                idx[a] = found;
            }
            expected[idx[0] + 16 * (idx[1] + 16 * idx[2])] = true;
        }
        // Boundary rounding can move a point across a cell edge by one ulp;
        // require agreement on all but a negligible number of cells.
        let diff = seq.frames[0]
            .occupancy()
            .iter()
            .zip(&expected)
            .filter(|(a, b)| a != b)
            .count();
        assert!(diff <= 2, "{diff} cells disagree");
        assert!(seq.frames[0].occupied_count() <= pts.len());
    }

    #[test]
    fn sample_gives_cell_center() {
        let mut g = VoxelGrid::empty([4, 4, 4]);
        g.set([2, 2, 2], true);
        let f = sample_points_from_voxels(&g, &BBox::unit());
        assert_eq!(f.points, vec![Vec3::repeat(0.625)]);
        assert!(sample_points_from_voxels(&VoxelGrid::empty([4, 4, 4]), &BBox::unit()).is_empty());
    }

    #[test]
    fn sample_then_voxelize_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bbox = BBox {
            min: Vec3::new(-2.0, 0.5, 3.0),
            max: Vec3::new(1.0, 0.75, 9.0),
        };
        for _ in 0..20 {
            let g = random_grid(&mut rng, [7, 5, 9]);
            let pts = sample_points_from_voxels(&g, &bbox);
            assert_eq!(pts.len(), g.occupied_count());
            let back = voxelize_frame(&pts, &bbox, g.resolution(), 0).unwrap();
            assert_eq!(back, g);
        }
    }

    #[test]
    fn difference_matches_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let res = [6, 6, 6];
        let a = random_grid(&mut rng, res);
        let b = random_grid(&mut rng, res);
        let (plus, minus) = voxel_difference(&a, &b, &BBox::unit()).unwrap();
        let set = |g: &VoxelGrid| -> std::collections::BTreeSet<[usize; 3]> {
            g.occupied_cells().collect()
        };
        let (sa, sb) = (set(&a), set(&b));
        let exp_plus: Vec<Vec3> = sa
            .difference(&sb)
            .map(|c| cell_center_normalized(*c, res))
            .collect();
        let exp_minus: Vec<Vec3> = sb
            .difference(&sa)
            .map(|c| cell_center_normalized(*c, res))
            .collect();
        let sort = |mut v: Vec<Vec3>| {
            v.sort_by(|p, q| p.iter().partial_cmp(q.iter()).unwrap());
            v
        };
        assert_eq!(sort(plus.points), sort(exp_plus));
        assert_eq!(sort(minus.points), sort(exp_minus));
    }

    #[test]
    fn difference_identical_and_one_added() {
        let mut a = VoxelGrid::empty([4, 4, 4]);
        a.set([1, 1, 1], true);
        let (p, m) = voxel_difference(&a, &a, &BBox::unit()).unwrap();
        assert!(p.is_empty() && m.is_empty());
        let mut b = a.clone();
        b.set([3, 0, 2], true);
        let (p, m) = voxel_difference(&b, &a, &BBox::unit()).unwrap();
        assert_eq!(p.points, vec![Vec3::new(0.875, 0.125, 0.625)]);
        assert!(m.is_empty());
        assert!(voxel_difference(&a, &VoxelGrid::empty([4, 4, 5]), &BBox::unit()).is_err());
    }
}
