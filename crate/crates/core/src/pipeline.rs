//! End-to-end orchestration: point clouds in, artifacts out.
//!
//! Stages run strictly in order (voxelize, keypoints, affinity, skeleton,
//! fit, metrics). Each stage is also exposed on its own so that running
//! them one by one writes the same bytes as [`run_pipeline`].

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::affinity::{optimize_affinity, AffinityConfig, AffinitySet};
use crate::io::{self, AffinityJson, JointsJson, KeypointsJson, MotionJson, Provenance, SkeletonJson};
use crate::keypoints::{optimize_keypoints, KeypointConfig, KeypointTracks};
use crate::kinematics::{fit_motion, pose_residual, FitSettings, MotionSequence};
use crate::metrics::{ci95_half_width, sc_score, MetricReport};
use crate::skeleton::{extract_skeleton, SkeletonConfig, SkeletonTree};
use crate::skinning::DEFAULT_EPSILON;
use crate::voxelize::{compute_shared_bbox, voxelize_sequence, VoxelSequence, DEFAULT_RESOLUTION};
use crate::{canonical, par, Error, Result};

pub const VOXELS_FILE: &str = "voxels.nmvx";
pub const KEYPOINTS_FILE: &str = "keypoints.json";
pub const AFFINITY_FILE: &str = "affinity.json";
pub const SKELETON_FILE: &str = "skeleton.json";
pub const MOTION_FILE: &str = "motion.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Every tunable of a run. The top-level `seed` is used by every stage, and
/// `affinity.n` also sets the neighbor count of skeleton extraction; the
/// corresponding nested fields are overwritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Directory of per-frame `.ply` files.
    pub input: Option<PathBuf>,
    /// Directory that receives the artifacts.
    pub output: Option<PathBuf>,
    /// Optional per-frame ground-truth joints (JSON) for the SC score.
    pub ground_truth: Option<PathBuf>,
    pub resolution: [usize; 3],
    /// Minimum bounding-box extent per axis, relative to the largest one.
    pub padding: f64,
    pub seed: u64,
    /// Intensity threshold for skinning.
    pub epsilon: f64,
    pub keypoints: KeypointConfig,
    pub affinity: AffinityConfig,
    pub skeleton: SkeletonConfig,
    pub fit: FitSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: None,
            ground_truth: None,
            resolution: DEFAULT_RESOLUTION,
            padding: 0.0,
            seed: 0,
            epsilon: DEFAULT_EPSILON,
            keypoints: KeypointConfig::default(),
            affinity: AffinityConfig::default(),
            skeleton: SkeletonConfig::default(),
            fit: FitSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("config {}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    /// Copies the shared fields into the stage configs and checks ranges.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.keypoints.seed = c.seed;
        c.affinity.seed = c.seed;
        c.skeleton.seed = c.seed;
        c.skeleton.n = c.affinity.n;
        if c.resolution.iter().any(|&g| g == 0) {
            return Err(Error::InvalidParameter("resolution axes must be positive".into()));
        }
        if !(c.padding >= 0.0) || !(c.epsilon >= 0.0) {
            return Err(Error::InvalidParameter("padding and epsilon must be ≥ 0".into()));
        }
        c.keypoints.validate()?;
        c.affinity.validate(c.keypoints.k)?;
        c.fit.descent.validate()?;
        Ok(c)
    }

    /// SHA-256 of the canonical config with the output directory removed.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.resolved()?;
        c.output = None;
        let text = canonical::to_string(&c)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn provenance(&self) -> Result<Provenance> {
        Ok(Provenance {
            config_hash: self.hash()?,
            seed: self.seed,
        })
    }

    pub fn input_dir(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("no input directory configured".into()))
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("no output directory configured".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsJson {
    pub reports: Vec<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub artifacts: Vec<String>,
    pub config: PipelineConfig,
    pub provenance: Provenance,
}

/// In-memory results of a full run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub voxels: VoxelSequence,
    pub tracks: KeypointTracks,
    pub affinity: AffinitySet,
    pub skeleton: SkeletonTree,
    pub motion: MotionSequence,
    pub metrics: Vec<MetricReport>,
}

pub fn voxelize_stage(config: &PipelineConfig) -> Result<VoxelSequence> {
    let input = config.input_dir()?;
    let frames = io::read_ply_sequence(input)?;
    let bbox = compute_shared_bbox(&frames, config.padding)?;
    voxelize_sequence(&frames, &bbox, config.resolution)
}

pub fn keypoints_stage(config: &PipelineConfig, voxels: &VoxelSequence) -> Result<KeypointTracks> {
    Ok(optimize_keypoints(voxels, &config.keypoints)?.tracks)
}

pub fn affinity_stage(config: &PipelineConfig, tracks: &KeypointTracks) -> Result<AffinitySet> {
    Ok(optimize_affinity(tracks, &config.affinity)?.set)
}

pub fn skeleton_stage(
    config: &PipelineConfig,
    affinity: &AffinitySet,
    tracks: &KeypointTracks,
) -> Result<SkeletonTree> {
    Ok(extract_skeleton(&affinity.combined, tracks, &config.skeleton)?.skeleton)
}

pub fn fit_stage(
    config: &PipelineConfig,
    skeleton: &SkeletonTree,
    tracks: &KeypointTracks,
) -> Result<(MotionSequence, Vec<f64>)> {
    let (motion, _) = fit_motion(skeleton, tracks.frames(), &config.fit)?;
    // Score the rotations as they will be read back from motion.json.
    let stored = MotionJson::from_motion(&motion, None).to_motion()?;
    let residuals = frame_residuals(skeleton, &stored, tracks)?;
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::Numerical("rotation fit diverged".into()));
    }
    Ok((motion, residuals))
}

/// Per-frame fit residual of `motion` against the keypoint targets.
pub fn frame_residuals(
    skeleton: &SkeletonTree,
    motion: &MotionSequence,
    tracks: &KeypointTracks,
) -> Result<Vec<f64>> {
    if motion.poses.len() != tracks.t() {
        return Err(Error::ShapeMismatch(format!(
            "{} poses for {} keypoint frames",
            motion.poses.len(),
            tracks.t()
        )));
    }
    par::try_map_range(tracks.t(), |t| {
        pose_residual(skeleton, &motion.poses[t], tracks.frame(t))
    })
}

pub fn metrics_stage(
    config: &PipelineConfig,
    voxels: &VoxelSequence,
    tracks: &KeypointTracks,
    residuals: &[f64],
) -> Result<Vec<MetricReport>> {
    let mut reports = vec![MetricReport {
        metric: "fit_residual".into(),
        value: par::ordered_sum(residuals) / residuals.len().max(1) as f64,
        ci95: ci95_half_width(residuals),
        per_frame: residuals.to_vec(),
    }];
    if let Some(path) = &config.ground_truth {
        let gt: JointsJson = io::read_json(path)?;
        let normalized: Vec<Vec<_>> = gt
            .to_frames()?
            .iter()
            .map(|f| f.iter().map(|p| voxels.bbox.normalize(p)).collect())
            .collect();
        reports.push(sc_score(tracks, &normalized)?);
    }
    Ok(reports)
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Writes one artifact under the output directory.
pub fn write_artifact<T: Serialize>(config: &PipelineConfig, name: &str, value: &T) -> Result<()> {
    io::write_json(&config.output_dir()?.join(name), value)
}

/// Runs every stage and writes all artifacts plus a manifest.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    let config = stage("config", config.resolved())?;
    let out = config.output_dir()?.to_path_buf();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let prov = config.provenance()?;

    info!("voxelizing");
    let voxels = stage("voxelize", voxelize_stage(&config))?;
    io::write_nmvx(&out.join(VOXELS_FILE), &voxels)?;

    info!("optimizing keypoints");
    let tracks = stage("keypoints", keypoints_stage(&config, &voxels))?;
    write_artifact(&config, KEYPOINTS_FILE, &KeypointsJson::from_tracks(&tracks, Some(prov.clone())))?;

    info!("optimizing affinity");
    let affinity = stage("affinity", affinity_stage(&config, &tracks))?;
    write_artifact(&config, AFFINITY_FILE, &AffinityJson::from_set(&affinity, Some(prov.clone())))?;

    info!("extracting skeleton");
    let skeleton = stage("skeleton", skeleton_stage(&config, &affinity, &tracks))?;
    write_artifact(&config, SKELETON_FILE, &SkeletonJson::from_skeleton(&skeleton, Some(prov.clone())))?;

    info!("fitting rotations");
    let (motion, residuals) = stage("fit", fit_stage(&config, &skeleton, &tracks))?;
    write_artifact(&config, MOTION_FILE, &MotionJson::from_motion(&motion, Some(prov.clone())))?;

    let metrics = stage("metrics", metrics_stage(&config, &voxels, &tracks, &residuals))?;
    write_artifact(
        &config,
        METRICS_FILE,
        &MetricsJson {
            reports: metrics.clone(),
            provenance: Some(prov.clone()),
        },
    )?;

    write_manifest(&config, &prov)?;
    Ok(PipelineOutput {
        voxels,
        tracks,
        affinity,
        skeleton,
        motion,
        metrics,
    })
}

pub fn write_manifest(config: &PipelineConfig, prov: &Provenance) -> Result<()> {
    let manifest = Manifest {
        artifacts: [
            VOXELS_FILE,
            KEYPOINTS_FILE,
            AFFINITY_FILE,
            SKELETON_FILE,
            MOTION_FILE,
            METRICS_FILE,
        ]
        .map(String::from)
        .to_vec(),
        config: PipelineConfig {
            output: None,
            ..config.clone()
        },
        provenance: prov.clone(),
    };
    write_artifact(config, MANIFEST_FILE, &manifest)
}
