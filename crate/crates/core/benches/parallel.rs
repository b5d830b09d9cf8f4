use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kinetree::keypoints::{frame_clouds, initial_positions, volume_fitting_loss, Keypoint};
use kinetree::metrics::chamfer;
use kinetree::skinning::skin_weights;
use kinetree::synthgen::{make_star_rig, MotionParams, StarParams};
use kinetree::voxelize::{compute_shared_bbox, voxelize_sequence};
use rayon::ThreadPoolBuilder;

fn bench(c: &mut Criterion) {
    let star = StarParams {
        arms: 5,
        segments_per_arm: 3,
        ..StarParams::default()
    };
    let params = MotionParams {
        frames: 20,
        points_per_bone: 2000,
        ..MotionParams::default()
    };
    let rig = make_star_rig(&star, &params).unwrap();
    let bbox = compute_shared_bbox(&rig.surface, 0.0).unwrap();
    let voxels = voxelize_sequence(&rig.surface, &bbox, [48; 3]).unwrap();
    let clouds = frame_clouds(&voxels).unwrap();
    let kps = initial_positions(&clouds, 16, 2, 0);
    let joints: Vec<Keypoint> = rig.rest_joints().iter().map(|p| Keypoint::new(*p, 1.0)).collect();
    let parents = rig.skeleton.parents().to_vec();
    let root = rig.skeleton.root();

    let serial = ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let pooled = ThreadPoolBuilder::new().build().unwrap();
    let pools = [("sequential", &serial), ("parallel", &pooled)];

    let mut group = c.benchmark_group("voxelize");
    for (name, pool) in pools {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| voxelize_sequence(&rig.surface, &bbox, [48; 3]).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("volume_fitting_loss");
    for (name, pool) in pools {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| volume_fitting_loss(&kps, &clouds).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("chamfer");
    for (name, pool) in pools {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| chamfer(&rig.surface[0].points, &rig.surface[10].points).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("skin_weights");
    for (name, pool) in pools {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    skin_weights(&rig.rest_points, &joints, &parents, root, 0.2, None).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
