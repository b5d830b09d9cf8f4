use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kinetree::io::{
    self, AffinityJson, JointsJson, KeypointsJson, MotionJson, SkeletonJson, SkinWeightsJson,
};
use kinetree::keypoints::KeypointTracks;
use kinetree::kinematics::{
    forward_kinematics, forward_kinematics_full, lerp_keypoints, slerp_pose, MotionSequence,
};
use kinetree::metrics::motion_chamfer;
use kinetree::pipeline::{self, MetricsJson, PipelineConfig};
use kinetree::retarget::{retarget_motion, target_skeleton};
use kinetree::skeleton::{OffsetMode, SkeletonTree};
use kinetree::skinning::{lbs_deform, skin_weights};
use kinetree::synthgen::{make_chain_rig, make_star_rig, MotionParams, StarParams};
use kinetree::voxelize::{PointFrame, VoxelSequence};
use kinetree::Error;
use log::info;

#[derive(Parser)]
#[command(name = "kinetree", version, about = "Skeleton discovery and skeletal motion tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelize a directory of .ply frames into voxels.nmvx.
    Voxelize(Common),
    /// Optimize keypoints from voxels.nmvx into keypoints.json.
    Keypoints(Common),
    /// Regress affinity matrices from keypoints.json into affinity.json.
    Affinity(Common),
    /// Extract the skeleton into skeleton.json.
    Skeleton(Common),
    /// Fit per-frame rotations into motion.json.
    Fit(Common),
    /// Write metrics.json for the artifacts in the output directory.
    Eval(EvalArgs),
    /// Interpolate between two frames by pose slerp or keypoint lerp.
    Interpolate(InterpolateArgs),
    /// Replay a fitted motion on a skeleton with other bone lengths.
    Retarget(RetargetArgs),
    /// Compute skin weights and optionally deform vertices by LBS.
    Skin(SkinArgs),
    /// Write a synthetic rig as .ply frames plus ground-truth joints.
    Synth(SynthArgs),
    /// Run every stage in order.
    Run(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of .ply frames.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Ground-truth joints JSON for the SC score.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid cells per axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Keypoint count.
    #[arg(long)]
    k: Option<usize>,
    /// Neighbor count (number of decomposed affinity matrices).
    #[arg(long)]
    n: Option<usize>,
    /// Intensity threshold for skinning.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    offset_mode: Option<OffsetArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OffsetArg {
    Random,
    Observed,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Also report the motion Chamfer distance between two voxel files.
    #[arg(long, num_args = 2, value_names = ["GT", "PRED"])]
    motion_chamfer: Option<Vec<PathBuf>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Slerp,
    Lerp,
}

#[derive(Args)]
struct InterpolateArgs {
    /// Artifact directory holding skeleton.json, motion.json and keypoints.json.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    from: usize,
    #[arg(long)]
    to: usize,
    /// Frames produced, endpoints included.
    #[arg(long, default_value_t = 11)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Method::Slerp)]
    method: Method,
    /// Joints JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetargetArgs {
    #[arg(long)]
    skeleton: PathBuf,
    #[arg(long)]
    motion: PathBuf,
    /// Joints JSON whose first frame gives the target bone lengths.
    #[arg(long)]
    target: PathBuf,
    /// Joints JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SkinArgs {
    /// Artifact directory holding voxels.nmvx, keypoints.json, skeleton.json and
    /// motion.json.
    #[arg(long)]
    output: PathBuf,
    /// Vertices (.ply or .obj) in the pose of `rest_frame`.
    #[arg(long)]
    vertices: PathBuf,
    #[arg(long, default_value_t = 0)]
    rest_frame: usize,
    #[arg(long, default_value_t = kinetree::skinning::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Kernel width in normalized units; defaults to half the bone length.
    #[arg(long)]
    sigma: Option<f64>,
    /// Weights file (.nmsw, or .json for the JSON form).
    #[arg(long)]
    weights: PathBuf,
    /// Frame to deform the vertices to.
    #[arg(long, requires = "deformed")]
    to_frame: Option<usize>,
    /// Deformed vertices (.ply).
    #[arg(long, requires = "to_frame")]
    deformed: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Chain,
    Star,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Shape::Chain)]
    shape: Shape,
    /// Chain segment count, or segments per arm for a star.
    #[arg(long, default_value_t = 3)]
    segments: usize,
    /// Star arm count.
    #[arg(long, default_value_t = 3)]
    arms: usize,
    #[arg(long, default_value_t = 0.3)]
    segment_length: f64,
    #[arg(long, default_value_t = 20)]
    frames: usize,
    #[arg(long, default_value_t = 0.7)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.05)]
    capsule_radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving frame_NNNN.ply and joints.json.
    #[arg(long)]
    output: PathBuf,
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::InvalidParameter(_) => 2,
        Error::Numerical(_) | Error::Degenerate6D | Error::Disconnected | Error::RankInversion(_) => 4,
        _ => 3,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("NM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("NM_THREADS={value} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn load_config(c: &Common) -> Result<PipelineConfig, Error> {
    let mut config = match &c.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &c.input {
        config.input = Some(v.clone());
    }
    if let Some(v) = &c.output {
        config.output = Some(v.clone());
    }
    if let Some(v) = &c.ground_truth {
        config.ground_truth = Some(v.clone());
    }
    if let Some(v) = c.seed {
        config.seed = v;
    }
    if let Some(v) = c.resolution {
        config.resolution = [v; 3];
    }
    if let Some(v) = c.k {
        config.keypoints.k = v;
    }
    if let Some(v) = c.n {
        config.affinity.n = v;
    }
    if let Some(v) = c.epsilon {
        config.epsilon = v;
    }
    if let Some(v) = c.offset_mode {
        config.skeleton.offset_mode = match v {
            OffsetArg::Random => OffsetMode::Random,
            OffsetArg::Observed => OffsetMode::Observed,
        };
    }
    config.resolved()
}

fn artifact(config: &PipelineConfig, name: &str) -> Result<PathBuf, Error> {
    Ok(config.output_dir()?.join(name))
}

fn ensure_output(config: &PipelineConfig) -> Result<(), Error> {
    let dir = config.output_dir()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn read_tracks(config: &PipelineConfig) -> Result<KeypointTracks, Error> {
    io::read_json::<KeypointsJson>(&artifact(config, pipeline::KEYPOINTS_FILE)?)?.to_tracks()
}

fn read_skeleton(path: &Path) -> Result<SkeletonTree, Error> {
    io::read_json::<SkeletonJson>(path)?.to_skeleton()
}

fn read_motion(path: &Path) -> Result<MotionSequence, Error> {
    io::read_json::<MotionJson>(path)?.to_motion()
}

fn read_voxels(config: &PipelineConfig) -> Result<VoxelSequence, Error> {
    io::read_nmvx(&artifact(config, pipeline::VOXELS_FILE)?)
}

fn stage(c: &Common, name: &'static str) -> Result<(), Error> {
    let config = load_config(c)?;
    ensure_output(&config)?;
    let prov = config.provenance()?;
    match name {
        "voxelize" => {
            let voxels = pipeline::voxelize_stage(&config)?;
            io::write_nmvx(&artifact(&config, pipeline::VOXELS_FILE)?, &voxels)?;
        }
        "keypoints" => {
            let tracks = pipeline::keypoints_stage(&config, &read_voxels(&config)?)?;
            pipeline::write_artifact(&config, pipeline::KEYPOINTS_FILE, &KeypointsJson::from_tracks(&tracks, Some(prov)))?;
        }
        "affinity" => {
            let set = pipeline::affinity_stage(&config, &read_tracks(&config)?)?;
            pipeline::write_artifact(&config, pipeline::AFFINITY_FILE, &AffinityJson::from_set(&set, Some(prov)))?;
        }
        "skeleton" => {
            let set = io::read_json::<AffinityJson>(&artifact(&config, pipeline::AFFINITY_FILE)?)?.to_set()?;
            let skeleton = pipeline::skeleton_stage(&config, &set, &read_tracks(&config)?)?;
            pipeline::write_artifact(&config, pipeline::SKELETON_FILE, &SkeletonJson::from_skeleton(&skeleton, Some(prov)))?;
        }
        "fit" => {
            let skeleton = read_skeleton(&artifact(&config, pipeline::SKELETON_FILE)?)?;
            let (motion, _) = pipeline::fit_stage(&config, &skeleton, &read_tracks(&config)?)?;
            pipeline::write_artifact(&config, pipeline::MOTION_FILE, &MotionJson::from_motion(&motion, Some(prov)))?;
        }
        _ => unreachable!("unknown stage {name}"),
    }
    info!("{name} done");
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), Error> {
    let config = load_config(&args.common)?;
    let prov = config.provenance()?;
    let voxels = read_voxels(&config)?;
    let tracks = read_tracks(&config)?;
    let skeleton = read_skeleton(&artifact(&config, pipeline::SKELETON_FILE)?)?;
    let motion = read_motion(&artifact(&config, pipeline::MOTION_FILE)?)?;
    let residuals = pipeline::frame_residuals(&skeleton, &motion, &tracks)?;
    let mut reports = pipeline::metrics_stage(&config, &voxels, &tracks, &residuals)?;
    if let Some(paths) = &args.motion_chamfer {
        let gt = io::read_nmvx(&paths[0])?;
        let pred = io::read_nmvx(&paths[1])?;
        reports.push(motion_chamfer(&gt, &pred)?);
    }
    pipeline::write_artifact(
        &config,
        pipeline::METRICS_FILE,
        &MetricsJson {
            reports,
            provenance: Some(prov.clone()),
        },
    )?;
    pipeline::write_manifest(&config, &prov)
}

fn check_frame(index: usize, count: usize) -> Result<(), Error> {
    if index >= count {
        return Err(Error::InvalidParameter(format!(
            "frame {index} is out of range for {count} frames"
        )));
    }
    Ok(())
}

fn interpolate(args: &InterpolateArgs) -> Result<(), Error> {
    if args.steps < 2 {
        return Err(Error::InvalidParameter("steps must be at least 2".into()));
    }
    let fractions: Vec<f64> = (0..args.steps).map(|i| i as f64 / (args.steps - 1) as f64).collect();
    let frames = match args.method {
        Method::Slerp => {
            let skeleton = read_skeleton(&args.output.join(pipeline::SKELETON_FILE))?;
            let motion = read_motion(&args.output.join(pipeline::MOTION_FILE))?;
            check_frame(args.from.max(args.to), motion.poses.len())?;
            let (a, b) = (&motion.poses[args.from], &motion.poses[args.to]);
            fractions
                .iter()
                .map(|&t| forward_kinematics(&skeleton, &slerp_pose(a, b, t)?))
                .collect::<Result<Vec<_>, _>>()?
        }
        Method::Lerp => {
            let tracks = io::read_json::<KeypointsJson>(&args.output.join(pipeline::KEYPOINTS_FILE))?
                .to_tracks()?;
            check_frame(args.from.max(args.to), tracks.t())?;
            let (a, b) = (tracks.frame(args.from), tracks.frame(args.to));
            fractions
                .iter()
                .map(|&t| Ok(lerp_keypoints(a, b, t)?.iter().map(|k| k.mu).collect()))
                .collect::<Result<Vec<_>, Error>>()?
        }
    };
    io::write_json(&args.out, &JointsJson::from_frames(&frames))
}

fn retarget(args: &RetargetArgs) -> Result<(), Error> {
    let source = read_skeleton(&args.skeleton)?;
    let motion = read_motion(&args.motion)?;
    let target_frames = io::read_json::<JointsJson>(&args.target)?.to_frames()?;
    let first = target_frames
        .first()
        .ok_or_else(|| Error::Schema("field `frames`: no target frame".into()))?;
    let target = target_skeleton(&source, first)?;
    let frames = retarget_motion(&source, &motion, &target)?;
    let mut out = JointsJson::from_frames(&frames);
    out.root = Some(target.root());
    out.parents = Some(target.parents().to_vec());
    io::write_json(&args.out, &out)
}

fn skin(args: &SkinArgs) -> Result<(), Error> {
    let voxels = io::read_nmvx(&args.output.join(pipeline::VOXELS_FILE))?;
    let tracks = io::read_json::<KeypointsJson>(&args.output.join(pipeline::KEYPOINTS_FILE))?.to_tracks()?;
    let skeleton = read_skeleton(&args.output.join(pipeline::SKELETON_FILE))?;
    check_frame(args.rest_frame, tracks.t())?;
    let bbox = voxels.bbox;
    let vertices: Vec<_> = io::read_points(&args.vertices)?
        .points
        .iter()
        .map(|p| bbox.normalize(p))
        .collect();
    let weights = skin_weights(
        &vertices,
        tracks.frame(args.rest_frame),
        skeleton.parents(),
        skeleton.root(),
        args.epsilon,
        args.sigma,
    )?;
    if args.weights.extension().is_some_and(|e| e == "json") {
        io::write_json(&args.weights, &SkinWeightsJson::from_weights(&weights))?;
    } else {
        io::write_nmsw(&args.weights, &weights)?;
    }
    if let (Some(to), Some(path)) = (args.to_frame, &args.deformed) {
        let motion = read_motion(&args.output.join(pipeline::MOTION_FILE))?;
        check_frame(args.rest_frame.max(to), motion.poses.len())?;
        let rest = forward_kinematics_full(&skeleton, &motion.poses[args.rest_frame])?;
        let posed = forward_kinematics_full(&skeleton, &motion.poses[to])?;
        let moved = lbs_deform(&vertices, &weights, &rest, &posed)?;
        let world: Vec<_> = moved.iter().map(|u| bbox.denormalize(u)).collect();
        io::write_ply(path, &PointFrame::new(world))?;
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<(), Error> {
    let params = MotionParams {
        frames: args.frames,
        amplitude: args.amplitude,
        capsule_radius: args.capsule_radius,
        seed: args.seed,
        ..MotionParams::default()
    };
    let rig = match args.shape {
        Shape::Chain => make_chain_rig(&vec![args.segment_length; args.segments], &params)?,
        Shape::Star => make_star_rig(
            &StarParams {
                arms: args.arms,
                segments_per_arm: args.segments,
                segment_length: args.segment_length,
                ..StarParams::default()
            },
            &params,
        )?,
    };
    io::write_ply_sequence(&args.output, &rig.surface)?;
    let mut joints = JointsJson::from_frames(&rig.joints);
    joints.root = Some(rig.skeleton.root());
    joints.parents = Some(rig.skeleton.parents().to_vec());
    io::write_json(&args.output.join("joints.json"), &joints)
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Voxelize(c) => stage(&c, "voxelize"),
        Command::Keypoints(c) => stage(&c, "keypoints"),
        Command::Affinity(c) => stage(&c, "affinity"),
        Command::Skeleton(c) => stage(&c, "skeleton"),
        Command::Fit(c) => stage(&c, "fit"),
        Command::Eval(a) => eval(&a),
        Command::Interpolate(a) => interpolate(&a),
        Command::Retarget(a) => retarget(&a),
        Command::Skin(a) => skin(&a),
        Command::Synth(a) => synth(&a),
        Command::Run(c) => pipeline::run_pipeline(&load_config(&c)?).map(|_| ()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
