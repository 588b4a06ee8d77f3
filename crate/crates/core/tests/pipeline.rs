mod common;

use approx::assert_abs_diff_eq;
use common::{frames, setup};
use demo_retarget::camera::{load_rgb_png, masked_point_cloud, project, DepthImage};
use demo_retarget::compositor::{render_robot, EditMode};
use demo_retarget::geometry::{RigidTransform, Vec3};
use demo_retarget::handpose::{HandKeypoints, HandMesh};
use demo_retarget::pipeline::*;
use demo_retarget::synth::{write_demo, SynthOptions};
use demo_retarget::Error;

#[test]
fn refinement_keeps_an_already_aligned_estimate() {
    let s = setup(SynthOptions { frames: 1, estimate_error: false, ..Default::default() });
    let mut inputs = FrameInputs::load(&s.demo.frames[0]).unwrap();
    let cloud = masked_point_cloud(&inputs.depth, &inputs.mask, &s.demo.intrinsics).unwrap();
    let step = cloud.points.len() / 778;
    let verts: Vec<Vec3> = (0..778).map(|i| cloud.points[i * step]).collect();
    inputs.mesh = HandMesh::new(verts).unwrap();
    let before = inputs.keypoints;
    let r = refine_hand_pose(&inputs, &s.demo.intrinsics, None, &s.cfg).unwrap();
    let h = r.icp.transform.to_homogeneous();
    assert_abs_diff_eq!(h, nalgebra::Matrix4::identity(), epsilon = 1e-9);
    for (a, b) in r.keypoints.points().iter().zip(before.points()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-6);
    }
}

#[test]
fn refinement_recovers_a_depth_offset() {
    let s = setup(SynthOptions { frames: 1, estimate_error: false, ..Default::default() });
    let mut inputs = FrameInputs::load(&s.demo.frames[0]).unwrap();
    let truth = inputs.keypoints;
    let ray = inputs.keypoints.get(0).normalize();
    let shift = RigidTransform::from_translation(ray * 0.03);
    inputs.keypoints = truth.transformed(&shift);
    inputs.mesh = HandMesh::new(inputs.mesh.vertices().iter().map(|v| shift.apply(v)).collect()).unwrap();
    let r = refine_hand_pose(&inputs, &s.demo.intrinsics, None, &s.cfg).unwrap();
    for (a, b) in r.keypoints.points().iter().zip(truth.points()) {
        assert!((a - b).norm() < 2e-3, "{:?} vs {:?}", a, b);
    }
}

#[test]
fn refinement_rejects_empty_depth() {
    let s = setup(frames(1));
    let mut inputs = FrameInputs::load(&s.demo.frames[0]).unwrap();
    inputs.depth = DepthImage::new(inputs.depth.width(), inputs.depth.height());
    let err = refine_hand_pose(&inputs, &s.demo.intrinsics, None, &s.cfg).unwrap_err();
    assert!(matches!(err, Error::EmptyCloud), "{err}");
}

#[test]
fn projective_init_moves_along_the_rays() {
    let s = setup(SynthOptions { frames: 1, estimate_error: false, ..Default::default() });
    let inputs = FrameInputs::load(&s.demo.frames[0]).unwrap();
    let verts = inputs.mesh.vertices();
    let ray = verts[400].normalize();
    let off = RigidTransform::from_translation(ray * -0.025);
    let init = projective_init(verts, &inputs.depth, &inputs.mask, &s.demo.intrinsics, &off);
    assert!((init.translation - Vec3::zeros()).norm() < 3e-3, "{:?}", init.translation);
    // nothing projects into the mask: unchanged
    let far = RigidTransform::from_translation(Vec3::new(5.0, 0.0, 0.0));
    assert_eq!(projective_init(verts, &inputs.depth, &inputs.mask, &s.demo.intrinsics, &far), far);
}

#[test]
fn corrupt_frame_is_isolated() {
    let s = setup(SynthOptions { frames: 12, corrupt_frames: vec![5], ..Default::default() });
    let samples =
        process_demo_collect(&s.demo, Some(&s.chain), &s.cfg, &[Variant::original()], Output::Images).unwrap();
    assert_eq!(samples.len(), 12);
    for (i, x) in samples.iter().enumerate() {
        assert_eq!(x.provenance.frame_index, i);
        if i == 5 {
            assert!(!x.valid && x.image.is_none() && x.action.is_none());
            assert!(x.note.as_deref().unwrap().contains("frame 5"));
        } else {
            assert!(x.valid, "frame {i}: {:?}", x.note);
            assert!(x.image.is_some() && x.joints.is_some());
        }
    }
}

#[test]
fn too_many_invalid_frames_fail_the_demo() {
    let s = setup(SynthOptions { frames: 4, corrupt_frames: vec![0, 1, 3], ..Default::default() });
    let err = process_demo_collect(&s.demo, None, &s.cfg, &[Variant::original()], Output::ActionsOnly).unwrap_err();
    assert!(matches!(err, Error::DemoInvalid { invalid: 3, total: 4, .. }), "{err}");
    let mut cfg = s.cfg.clone();
    cfg.max_invalid_fraction = 0.8;
    let samples = process_demo_collect(&s.demo, None, &cfg, &[Variant::original()], Output::ActionsOnly).unwrap();
    assert_eq!(samples.iter().filter(|x| x.valid).count(), 1);
}

#[test]
fn no_edit_keeps_the_input_outside_the_robot() {
    let mut s = setup(frames(3));
    s.cfg.edit_mode = EditMode::NoEdit;
    let samples =
        process_demo_collect(&s.demo, Some(&s.chain), &s.cfg, &[Variant::original()], Output::Images).unwrap();
    for (x, frame) in samples.iter().zip(&s.demo.frames) {
        let input = load_rgb_png(&frame.rgb).unwrap();
        let img = x.image.as_ref().unwrap();
        let layer = render_robot(
            &s.chain,
            x.joints.as_ref().unwrap(),
            x.action.unwrap().gripper,
            &s.demo.intrinsics,
            &s.demo.extrinsics,
        )
        .unwrap();
        let mut drawn = 0;
        for (px, py, p) in img.enumerate_pixels() {
            if layer.covered(px, py) && p == layer.rgb.get_pixel(px, py) {
                drawn += 1;
            } else {
                assert_eq!(p, input.get_pixel(px, py));
            }
        }
        assert!(drawn > 1000);
    }
}

#[test]
fn single_variant_augmentation_equals_plain_processing() {
    let mut s = setup(frames(3));
    s.cfg.augmentation.n_variants = 1;
    let plain =
        process_demo_collect(&s.demo, Some(&s.chain), &s.cfg, &[Variant::original()], Output::Images).unwrap();
    let mut augmented = Vec::new();
    let variants = augment_extrinsics(&s.demo, &s.chain, &s.cfg, &mut |x| {
        augmented.push(x.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(variants, vec![Variant::original()]);
    assert_eq!(plain, augmented);
}

#[test]
fn variant_plan_is_seeded_and_bounded() {
    let v = plan_variants("d1", 5, 0.2, 3);
    assert_eq!(v.len(), 5);
    assert_eq!(v[0], Variant::original());
    assert!(v.iter().enumerate().all(|(i, x)| x.index == i && x.base_shift.abs() <= 0.2));
    assert!(v[1..].iter().all(|x| x.base_shift != 0.0));
    assert_eq!(v, plan_variants("d1", 5, 0.2, 3));
    assert_ne!(v, plan_variants("d1", 5, 0.2, 4));
    assert_ne!(v, plan_variants("d2", 5, 0.2, 3));
    assert!(plan_variants("d1", 4, 0.0, 3).iter().all(|x| x.base_shift == 0.0));
}

#[test]
fn shifted_variant_sees_the_same_scene() {
    let s = setup(frames(1));
    let v = Variant { index: 1, base_shift: 0.13 };
    let e = v.extrinsics(&s.demo.extrinsics);
    let p_original = Vec3::new(0.4, 0.05, 0.2);
    let p_shifted = p_original - Vec3::new(0.13, 0.0, 0.0);
    let k = &s.demo.intrinsics;
    let a = project(&s.demo.extrinsics.robot_to_camera().apply(&p_original), k).unwrap();
    let b = project(&e.robot_to_camera().apply(&p_shifted), k).unwrap();
    assert_abs_diff_eq!(a.0, b.0, epsilon = 1e-9);
    assert_abs_diff_eq!(a.1, b.1, epsilon = 1e-9);
    assert_eq!(Variant::original().extrinsics(&s.demo.extrinsics), s.demo.extrinsics);
}

#[test]
fn preinpainted_background_is_used_when_requested() {
    let mut s = setup(SynthOptions { frames: 2, clean_background: true, ..Default::default() });
    s.cfg.use_preinpainted = true;
    let frame = &s.demo.frames[1];
    let inputs = FrameInputs::load(frame).unwrap();
    let (rgb, depth) = edit_frame(frame, &inputs.mask, &inputs.depth, &s.cfg).unwrap();
    assert_eq!(rgb, load_rgb_png(frame.inpainted.as_ref().unwrap()).unwrap());
    assert!((0..inputs.mask.height())
        .flat_map(|y| (0..inputs.mask.width()).map(move |x| (x, y)))
        .all(|(x, y)| !inputs.mask.get(x, y) || depth.get(x, y) == 0));
}

#[test]
fn demos_are_independent_of_processing_order() {
    let s = setup(frames(3));
    write_demo(s.tmp.path(), "d2", &s.chain, &SynthOptions { frames: 3, seed: 99, ..Default::default() }).unwrap();
    let mut cfg = s.cfg.clone();
    cfg.output = s.tmp.path().join("both");
    let both = run_dataset(&cfg, &[], RunKind::Edit).unwrap();
    assert!(both.failures.is_empty());
    assert_eq!(both.manifest.demos.len(), 2);
    cfg.output = s.tmp.path().join("one");
    run_dataset(&cfg, &["d2".to_string()], RunKind::Edit).unwrap();
    assert_eq!(
        common::tree(&s.tmp.path().join("both/demo_d2_v0")),
        common::tree(&s.tmp.path().join("one/demo_d2_v0"))
    );
}

#[test]
fn preview_renders_the_robot() {
    let s = setup(frames(2));
    let img = render_preview(&s.demo, 1, &s.chain, &s.cfg).unwrap();
    let input = load_rgb_png(&s.demo.frames[1].rgb).unwrap();
    assert_eq!(img.dimensions(), input.dimensions());
    assert_ne!(img, input);
    assert!(matches!(render_preview(&s.demo, 7, &s.chain, &s.cfg), Err(Error::OutOfRange(_))));
}

#[test]
fn keypoint_files_round_trip() {
    let s = setup(frames(1));
    let kp = HandKeypoints::load_json(&s.demo.frames[0].keypoints).unwrap();
    let path = s.tmp.path().join("kp.json");
    kp.save_json(&path).unwrap();
    assert_eq!(HandKeypoints::load_json(&path).unwrap(), kp);
}
