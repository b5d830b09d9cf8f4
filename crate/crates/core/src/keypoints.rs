//! Keypoint placement and heatmap utilities.
//!
//! Keypoints live in normalized `[0, 1]³` coordinates of the sequence's
//! bounding box. [`optimize_keypoints`] places them by gradient descent on
//! the volume-fitting, separation and temporal-smoothness losses; the
//! heatmap helpers ([`gaussian_grid`], [`soft_argmax`], [`sparsity_loss`])
//! convert between keypoints and dense per-cell maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::optim::{self, DescentSettings};
use crate::voxelize::{cell_center_normalized, VoxelSequence};
use crate::{par, Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub mu: Vec3,
    pub alpha: f64,
}

impl Keypoint {
    pub fn new(mu: Vec3, alpha: f64) -> Self {
        Self { mu, alpha }
    }
}

/// Per-frame keypoints; every frame holds the same number `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointTracks {
    k: usize,
    frames: Vec<Vec<Keypoint>>,
}

impl KeypointTracks {
    pub fn new(frames: Vec<Vec<Keypoint>>) -> Result<Self> {
        let k = frames.first().map_or(0, Vec::len);
        if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != k) {
            return Err(Error::ShapeMismatch(format!(
                "frame {t} has {} keypoints, frame 0 has {k}",
                f.len()
            )));
        }
        for (t, f) in frames.iter().enumerate() {
            for (i, kp) in f.iter().enumerate() {
                if !kp.mu.iter().all(|v| v.is_finite()) || !(0.0..=1.0).contains(&kp.alpha) {
                    return Err(Error::InvalidParameter(format!(
                        "keypoint {i} of frame {t} is not finite or has alpha outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self { k, frames })
    }

    /// Tracks with unit intensity everywhere, from `positions[t][k]`.
    pub fn from_positions(positions: &[Vec<Vec3>]) -> Result<Self> {
        Self::new(
            positions
                .iter()
                .map(|f| f.iter().map(|&mu| Keypoint::new(mu, 1.0)).collect())
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Vec<Keypoint>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[Keypoint] {
        &self.frames[t]
    }

    pub fn positions(&self) -> Vec<Vec<Vec3>> {
        self.frames
            .iter()
            .map(|f| f.iter().map(|kp| kp.mu).collect())
            .collect()
    }

    /// Trajectory of keypoint `k` over all frames.
    pub fn track(&self, k: usize) -> Vec<Vec3> {
        self.frames.iter().map(|f| f[k].mu).collect()
    }

    pub fn intensity(&self, t: usize, k: usize) -> f64 {
        self.frames[t][k].alpha
    }
}

/// Non-negative scalar field over a grid, stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    resolution: [usize; 3],
    values: Vec<f64>,
}

impl Heatmap {
    pub fn new(resolution: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if values.len() != resolution.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for resolution {resolution:?}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "heatmap values must be non-negative".into(),
            ));
        }
        Ok(Self { resolution, values })
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn cell_of(&self, index: usize) -> [usize; 3] {
        let [gx, gy, _] = self.resolution;
        [index % gx, (index / gx) % gy, index / (gx * gy)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeypointConfig {
    pub k: usize,
    /// Gaussian width in cell units.
    pub sigma_g: f64,
    pub sigma_s: f64,
    pub lambda_vol: f64,
    pub lambda_sparse: f64,
    pub lambda_sep: f64,
    /// `None` means `0.1 * lambda_vol`.
    pub lambda_smooth: Option<f64>,
    pub descent: DescentSettings,
    /// Lloyd iterations used to carry the initialization from one frame to
    /// the next.
    pub propagation_iters: usize,
    pub seed: u64,
}

impl Default for KeypointConfig {
    fn default() -> Self {
        Self {
            k: 16,
            sigma_g: 1.5,
            sigma_s: 1250.0,
            lambda_vol: 10.0,
            lambda_sparse: 5.0,
            lambda_sep: 0.1,
            lambda_smooth: None,
            descent: DescentSettings {
                max_iters: 400,
                initial_step: 1.0,
                ..DescentSettings::default()
            },
            propagation_iters: 10,
            seed: 0,
        }
    }
}

impl KeypointConfig {
    pub fn smooth_weight(&self) -> f64 {
        self.lambda_smooth.unwrap_or(0.1 * self.lambda_vol)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if !(self.sigma_g > 0.0) || !(self.sigma_s >= 0.0) {
            return Err(Error::InvalidParameter(
                "sigma_g must be positive and sigma_s non-negative".into(),
            ));
        }
        let weights = [
            self.lambda_vol,
            self.lambda_sparse,
            self.lambda_sep,
            self.smooth_weight(),
        ];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("loss weights must be ≥ 0".into()));
        }
        self.descent.validate()
    }
}

/// Gaussian centered at `mu` (normalized coordinates), sampled at cell
/// centers. `sigma_g` is in cell units.
pub fn gaussian_grid(mu: &Vec3, sigma_g: f64, resolution: [usize; 3]) -> Result<Heatmap> {
    if !(sigma_g > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_g {sigma_g}")));
    }
    let [gx, gy, gz] = resolution;
    let center = Vec3::new(mu.x * gx as f64, mu.y * gy as f64, mu.z * gz as f64);
    let inv = 1.0 / (2.0 * sigma_g * sigma_g);
    let mut values = Vec::with_capacity(gx * gy * gz);
    for z in 0..gz {
        for y in 0..gy {
            for x in 0..gx {
                let c = Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                values.push((-(c - center).norm_squared() * inv).exp());
            }
        }
    }
    Heatmap::new(resolution, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftArgmax {
    pub keypoint: Keypoint,
    /// Set when the heatmap had no positive value.
    pub empty: bool,
}

/// Expected cell center under the heatmap read as a distribution over
/// cells; `alpha` is the peak value clamped to `[0, 1]`.
pub fn soft_argmax(heatmap: &Heatmap) -> SoftArgmax {
    let res = heatmap.resolution();
    let total: f64 = heatmap.values.iter().sum();
    if !(total > 0.0) {
        return SoftArgmax {
            keypoint: Keypoint::new(Vec3::repeat(0.5), 0.0),
            empty: true,
        };
    }
    let mut mu = Vec3::zeros();
    let mut peak = 0.0f64;
    for (i, &v) in heatmap.values.iter().enumerate() {
        if v > 0.0 {
            mu += cell_center_normalized(heatmap.cell_of(i), res) * (v / total);
            peak = peak.max(v);
        }
    }
    SoftArgmax {
        keypoint: Keypoint::new(mu, peak.clamp(0.0, 1.0)),
        empty: false,
    }
}

/// Mean entrywise L1 norm of `heatmaps[t][k]`.
pub fn sparsity_loss(heatmaps: &[Vec<Heatmap>]) -> f64 {
    let count: usize = heatmaps.iter().map(Vec::len).sum();
    if count == 0 {
        return 0.0;
    }
    let per_frame: Vec<f64> = heatmaps
        .iter()
        .map(|f| f.iter().map(|h| h.values.iter().map(|v| v.abs()).sum::<f64>()).sum())
        .collect();
    par::ordered_sum(&per_frame) / count as f64
}

/// Index of the keypoint nearest to `p`; ties go to the lowest index.
pub(crate) fn nearest(p: &Vec3, keypoints: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, mu) in keypoints.iter().enumerate() {
        let d = (p - mu).norm_squared();
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// One-directional Chamfer distance from each frame's points to that frame's
/// keypoints, averaged over frames, with its gradient with respect to
/// `positions[t][k]`.
pub fn volume_fitting_loss(
    positions: &[Vec<Vec3>],
    clouds: &[Vec<Vec3>],
) -> Result<(f64, Vec<Vec<Vec3>>)> {
    if positions.len() != clouds.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} keypoint frames vs {} point frames",
            positions.len(),
            clouds.len()
        )));
    }
    if let Some(t) = clouds.iter().position(Vec::is_empty) {
        return Err(Error::EmptyFrame { frame: t });
    }
    let t_count = positions.len();
    if t_count == 0 {
        return Ok((0.0, Vec::new()));
    }
    let per_frame = par::map_range(t_count, |t| {
        let kps = &positions[t];
        let cloud = &clouds[t];
        let scale = 1.0 / (t_count as f64 * cloud.len() as f64);
        let mut grad = vec![Vec3::zeros(); kps.len()];
        let mut sum = 0.0;
        for p in cloud {
            let (k, d) = nearest(p, kps);
            sum += d;
            grad[k] += (kps[k] - p) * (2.0 * scale);
        }
        (sum * scale, grad)
    });
    let value = per_frame.iter().fold(0.0, |acc, (v, _)| acc + v);
    Ok((value, per_frame.into_iter().map(|(_, g)| g).collect()))
}

/// Separation loss over centered trajectories and its gradient.
pub fn separation_loss(positions: &[Vec<Vec3>], sigma_s: f64) -> Result<(f64, Vec<Vec<Vec3>>)> {
    let t_count = positions.len();
    let k_count = positions.first().map_or(0, Vec::len);
    if k_count < 2 {
        return Err(Error::TooFew {
            what: "keypoints for the separation loss",
            needed: 2,
            got: k_count,
        });
    }
    let means: Vec<Vec3> = (0..k_count)
        .map(|k| positions.iter().map(|f| f[k]).sum::<Vec3>() / t_count as f64)
        .collect();
    let norm = 1.0 / (t_count * k_count * (k_count - 1)) as f64;

    let per_frame = par::map_range(t_count, |t| {
        let s: Vec<Vec3> = (0..k_count).map(|k| positions[t][k] - means[k]).collect();
        let mut value = 0.0;
        let mut grad_s = vec![Vec3::zeros(); k_count];
        for k in 0..k_count {
            for j in 0..k_count {
                if j == k {
                    continue;
                }
                let diff = s[k] - s[j];
                let e = (-sigma_s * diff.norm_squared()).exp();
                value += e;
                // Ordered pairs (k, j) and (j, k) each contribute.
                grad_s[k] += diff * (-4.0 * sigma_s * e * norm);
            }
        }
        (value * norm, grad_s)
    });

    let value = per_frame.iter().fold(0.0, |acc, (v, _)| acc + v);
    let grad_s: Vec<Vec<Vec3>> = per_frame.into_iter().map(|(_, g)| g).collect();
    // Chain through the temporal centering.
    let mean_grad: Vec<Vec3> = (0..k_count)
        .map(|k| grad_s.iter().map(|f| f[k]).sum::<Vec3>() / t_count as f64)
        .collect();
    let grad = grad_s
        .into_iter()
        .map(|f| f.iter().zip(&mean_grad).map(|(g, m)| g - m).collect())
        .collect();
    Ok((value, grad))
}

/// Sum of squared frame-to-frame displacements and its gradient.
pub fn smoothness_loss(positions: &[Vec<Vec3>]) -> (f64, Vec<Vec<Vec3>>) {
    let mut grad: Vec<Vec<Vec3>> = positions
        .iter()
        .map(|f| vec![Vec3::zeros(); f.len()])
        .collect();
    let mut value = 0.0;
    for t in 1..positions.len() {
        for k in 0..positions[t].len() {
            let d = positions[t][k] - positions[t - 1][k];
            value += d.norm_squared();
            grad[t][k] += d * 2.0;
            grad[t - 1][k] -= d * 2.0;
        }
    }
    (value, grad)
}

/// Farthest-point sampling; the first pick is drawn from `rng`, the rest
/// maximize the distance to the picked set (ties to the lowest index).
pub fn farthest_point_sampling(points: &[Vec3], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let first = rng.random_range(0..points.len());
    let mut picked = vec![first];
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| (p - points[first]).norm_squared())
        .collect();
    while picked.len() < k {
        let mut best = 0;
        for (i, d) in dist.iter().enumerate() {
            if *d > dist[best] {
                best = i;
            }
        }
        picked.push(best);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((p - points[best]).norm_squared());
        }
    }
    picked
}

fn lloyd_step(keypoints: &mut [Vec3], cloud: &[Vec3]) {
    let mut sums = vec![Vec3::zeros(); keypoints.len()];
    let mut counts = vec![0usize; keypoints.len()];
    for p in cloud {
        let (k, _) = nearest(p, keypoints);
        sums[k] += p;
        counts[k] += 1;
    }
    for ((kp, s), &c) in keypoints.iter_mut().zip(&sums).zip(&counts) {
        if c > 0 {
            *kp = s / c as f64;
        }
    }
}

/// Outcome of [`optimize_keypoints`].
#[derive(Debug, Clone)]
pub struct KeypointFit {
    pub tracks: KeypointTracks,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub initial_volume_loss: f64,
    pub final_volume_loss: f64,
    pub iterations: usize,
}

/// Normalized occupied cell centers for every frame.
pub fn frame_clouds(voxels: &VoxelSequence) -> Result<Vec<Vec<Vec3>>> {
    let clouds: Vec<Vec<Vec3>> = par::map_slice(&voxels.frames, |g| g.occupied_centers_normalized());
    if let Some(t) = clouds.iter().position(Vec::is_empty) {
        return Err(Error::EmptyFrame { frame: t });
    }
    Ok(clouds)
}

/// Initial positions: farthest-point sampling on frame 0, then Lloyd
/// iterations on every frame, each frame starting from the previous one's
/// result.
pub fn initial_positions(clouds: &[Vec<Vec3>], k: usize, propagation_iters: usize, seed: u64) -> Vec<Vec<Vec3>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kps: Vec<Vec3> = farthest_point_sampling(&clouds[0], k, &mut rng)
        .into_iter()
        .map(|i| clouds[0][i])
        .collect();
    let mut out = Vec::with_capacity(clouds.len());
    for cloud in clouds {
        for _ in 0..propagation_iters {
            lloyd_step(&mut kps, cloud);
        }
        out.push(kps.clone());
    }
    out
}

fn flatten(positions: &[Vec<Vec3>]) -> Vec<f64> {
    positions
        .iter()
        .flat_map(|f| f.iter().flat_map(|p| [p.x, p.y, p.z]))
        .collect()
}

fn unflatten(x: &[f64], k: usize) -> Vec<Vec<Vec3>> {
    x.chunks(3 * k)
        .map(|f| f.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
        .collect()
}

/// Weighted keypoint objective: `λ_vol L_vol + λ_sep L_sep + λ_smooth S`.
pub fn keypoint_objective(
    positions: &[Vec<Vec3>],
    clouds: &[Vec<Vec3>],
    config: &KeypointConfig,
) -> Result<(f64, Vec<Vec<Vec3>>)> {
    let (vol, mut grad) = volume_fitting_loss(positions, clouds)?;
    let mut value = config.lambda_vol * vol;
    for g in grad.iter_mut().flatten() {
        *g *= config.lambda_vol;
    }
    let k = positions.first().map_or(0, Vec::len);
    if k >= 2 && config.lambda_sep > 0.0 {
        let (sep, gs) = separation_loss(positions, config.sigma_s)?;
        value += config.lambda_sep * sep;
        for (g, s) in grad.iter_mut().flatten().zip(gs.iter().flatten()) {
            *g += s * config.lambda_sep;
        }
    }
    let w = config.smooth_weight();
    if w > 0.0 {
        let (sm, gs) = smoothness_loss(positions);
        value += w * sm;
        for (g, s) in grad.iter_mut().flatten().zip(gs.iter().flatten()) {
            *g += s * w;
        }
    }
    Ok((value, grad))
}

/// Places `config.k` keypoints per frame.
pub fn optimize_keypoints(voxels: &VoxelSequence, config: &KeypointConfig) -> Result<KeypointFit> {
    config.validate()?;
    if voxels.frame_count() == 0 {
        return Err(Error::EmptySequence);
    }
    let clouds = frame_clouds(voxels)?;
    let k = config.k;
    let init = initial_positions(&clouds, k, config.propagation_iters, config.seed);
    let (initial_volume_loss, _) = volume_fitting_loss(&init, &clouds)?;

    let report = optim::minimize(
        flatten(&init),
        |x| {
            let pos = unflatten(x, k);
            // Clouds are non-empty and shapes match, so this cannot fail.
            match keypoint_objective(&pos, &clouds, config) {
                Ok((v, g)) => (v, flatten(&g)),
                Err(_) => (f64::INFINITY, vec![0.0; x.len()]),
            }
        },
        &config.descent,
    );
    let positions = unflatten(&report.x, k);
    let (final_volume_loss, _) = volume_fitting_loss(&positions, &clouds)?;
    Ok(KeypointFit {
        tracks: KeypointTracks::from_positions(&positions)?,
        initial_objective: report.initial_value,
        final_objective: report.value,
        initial_volume_loss,
        final_volume_loss,
        iterations: report.iterations,
    })
}
