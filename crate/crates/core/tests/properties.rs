use kinetree::keypoints::{Keypoint, KeypointTracks};
use kinetree::kinematics::{forward_kinematics, lerp_keypoints, slerp_pose, Pose};
use kinetree::metrics::{chamfer, sc_score};
use kinetree::skeleton::SkeletonTree;
use kinetree::skinning::skin_weights;
use kinetree::{Mat3, Vec3};
use nalgebra::Rotation3;
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Mat3> {
    (vec3(), -3.1f64..3.1).prop_map(|(axis, angle)| {
        let axis = if axis.norm() > 1e-6 { axis.normalize() } else { Vec3::z() };
        Rotation3::new(axis * angle).into_inner()
    })
}

/// Parents where each node's parent has a lower index.
fn tree(max_k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<Vec3>)> {
    (2..=max_k).prop_flat_map(|k| {
        let parents = (0..k)
            .map(|i| if i == 0 { Just(0).boxed() } else { (0..i).boxed() })
            .collect::<Vec<_>>();
        (parents, proptest::collection::vec(vec3(), k))
    })
}

fn skeleton(parents: Vec<usize>, mut offsets: Vec<Vec3>) -> SkeletonTree {
    offsets[0] = Vec3::zeros();
    SkeletonTree::from_offsets(0, parents, offsets).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fk_preserves_bone_lengths(
        (parents, offsets) in tree(8),
        rots in proptest::collection::vec(rotation(), 8),
        root in vec3(),
    ) {
        let s = skeleton(parents, offsets);
        let k = s.k();
        let pose = Pose {
            root_translation: root,
            rotations: rots[..k].to_vec(),
            intensities: vec![1.0; k],
        };
        let joints = forward_kinematics(&s, &pose).unwrap();
        for c in 1..k {
            let len = (joints[c] - joints[s.parent(c)]).norm();
            prop_assert!((len - s.offsets[c].norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn fk_is_equivariant_under_root_rotation(
        (parents, offsets) in tree(6),
        rots in proptest::collection::vec(rotation(), 6),
        g in rotation(),
    ) {
        let s = skeleton(parents, offsets);
        let k = s.k();
        let pose = Pose {
            root_translation: Vec3::zeros(),
            rotations: rots[..k].to_vec(),
            intensities: vec![1.0; k],
        };
        let mut turned = pose.clone();
        turned.rotations[0] = g * pose.rotations[0];
        let a = forward_kinematics(&s, &pose).unwrap();
        let b = forward_kinematics(&s, &turned).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((g * p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn slerp_hits_endpoints(a in rotation(), b in rotation()) {
        let pa = Pose { root_translation: Vec3::zeros(), rotations: vec![a], intensities: vec![1.0] };
        let pb = Pose { root_translation: Vec3::x(), rotations: vec![b], intensities: vec![0.0] };
        prop_assert_eq!(slerp_pose(&pa, &pb, 0.0).unwrap(), pa.clone());
        prop_assert_eq!(slerp_pose(&pa, &pb, 1.0).unwrap(), pb.clone());
        let mid = slerp_pose(&pa, &pb, 0.5).unwrap().rotations[0];
        prop_assert!((mid.transpose() * mid - Mat3::identity()).abs().max() < 1e-10);
    }

    #[test]
    fn lerp_commutes_with_affine_maps(
        a in proptest::collection::vec(vec3(), 1..6),
        m in rotation(),
        shift in vec3(),
        scale in 0.1f64..3.0,
        t in 0.0f64..1.0,
    ) {
        let b: Vec<Vec3> = a.iter().map(|p| p * 2.0 + Vec3::y()).collect();
        let kp = |v: &[Vec3]| v.iter().map(|p| Keypoint::new(*p, 1.0)).collect::<Vec<_>>();
        let map = |p: &Vec3| m * p * scale + shift;
        let direct: Vec<Vec3> = lerp_keypoints(&kp(&a), &kp(&b), t).unwrap().iter().map(|k| map(&k.mu)).collect();
        let ma: Vec<Vec3> = a.iter().map(map).collect();
        let mb: Vec<Vec3> = b.iter().map(map).collect();
        let mapped = lerp_keypoints(&kp(&ma), &kp(&mb), t).unwrap();
        for (x, y) in direct.iter().zip(&mapped) {
            prop_assert!((x - y.mu).norm() < 1e-12);
        }
    }

    #[test]
    fn chamfer_is_symmetric_and_scales_quadratically(
        p in proptest::collection::vec(vec3(), 1..40),
        q in proptest::collection::vec(vec3(), 1..40),
        s in 0.1f64..4.0,
    ) {
        let pq = chamfer(&p, &q).unwrap();
        prop_assert_eq!(pq, chamfer(&q, &p).unwrap());
        prop_assert_eq!(chamfer(&p, &p).unwrap(), 0.0);
        let sp: Vec<Vec3> = p.iter().map(|x| x * s).collect();
        let sq: Vec<Vec3> = q.iter().map(|x| x * s).collect();
        let scaled = chamfer(&sp, &sq).unwrap();
        prop_assert!((scaled - s * s * pq).abs() <= 1e-9 * scaled.max(1.0));
    }

    #[test]
    fn sc_is_permutation_invariant(
        frames in proptest::collection::vec(proptest::collection::vec(vec3(), 4), 2..6),
        joints in proptest::collection::vec(proptest::collection::vec(vec3(), 3), 6),
    ) {
        let t = frames.len();
        let gt = &joints[..t];
        let tracks = KeypointTracks::from_positions(&frames).unwrap();
        let reversed: Vec<Vec<Vec3>> = frames.iter().map(|f| f.iter().rev().copied().collect()).collect();
        let a = sc_score(&tracks, gt).unwrap().value;
        let b = sc_score(&KeypointTracks::from_positions(&reversed).unwrap(), gt).unwrap().value;
        // Reversal only changes which index wins exact ties; random inputs have none.
        prop_assert_eq!(a, b);
        prop_assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn skin_weight_rows_sum_to_one(
        (parents, offsets) in tree(7),
        alphas in proptest::collection::vec(0.0f64..1.0, 7),
        verts in proptest::collection::vec(vec3(), 1..50),
    ) {
        let s = skeleton(parents, offsets);
        let k = s.k();
        let joints = forward_kinematics(&s, &Pose::identity(k)).unwrap();
        let kps: Vec<Keypoint> = joints.iter().zip(&alphas).map(|(p, a)| Keypoint::new(*p, *a)).collect();
        let mut kps = kps;
        kps[0].alpha = 1.0;
        let w = skin_weights(&verts, &kps, s.parents(), 0, 0.2, None).unwrap();
        for row in &w.rows {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
