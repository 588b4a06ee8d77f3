use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::demo::{DemoRecord, FrameRef};
use crate::actions::{
    extract_action, fingertip_distance, postprocess_gripper, RobotAction, Trajectory,
    TrajectoryFrame,
};
use crate::camera::{
    load_rgb_png, masked_point_cloud, project, DepthImage, Extrinsics, Intrinsics, Mask, RgbImage,
};
use crate::compositor::{composite, dilate_mask, inpaint_fmm, mask_out, render_robot, EditMode};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::handpose::{constrain_finger_joints, HandKeypoints, HandMesh, HingeJoint};
use crate::registration::{build_spatial_index, icp_with_index, IcpResult};
use crate::robot::KinematicChain;

/// Per-frame inputs as produced by the upstream hand estimator and
/// segmenter.
#[derive(Debug, Clone)]
pub struct FrameInputs {
    pub depth: DepthImage,
    pub mask: Mask,
    pub keypoints: HandKeypoints,
    pub mesh: HandMesh,
}

impl FrameInputs {
    pub fn load(frame: &FrameRef) -> Result<Self> {
        Ok(Self {
            depth: DepthImage::load_png(&frame.depth)?,
            mask: Mask::load_png(&frame.mask)?,
            keypoints: HandKeypoints::load_json(&frame.keypoints)?,
            mesh: HandMesh::load_bin(&frame.verts)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub keypoints: HandKeypoints,
    pub icp: IcpResult,
    pub degenerate_joints: Vec<HingeJoint>,
}

/// Shifts `init` so that the source lands on the observed depth along the
/// camera rays: each source point is projected into the image, and where the
/// mask has a valid reading the displacement to the deprojected surface point
/// is recorded. The translation applied is the per-axis median displacement.
pub fn projective_init(
    source: &[Vec3],
    depth: &DepthImage,
    mask: &Mask,
    k: &Intrinsics,
    init: &RigidTransform,
) -> RigidTransform {
    let mut d: [Vec<f64>; 3] = Default::default();
    for p in source {
        let p = init.apply(p);
        let Ok((u, v, _)) = project(&p, k) else { continue };
        let (x, y) = (u.round(), v.round());
        if x < 0.0 || y < 0.0 || x >= k.width as f64 || y >= k.height as f64 {
            continue;
        }
        let (x, y) = (x as u32, y as u32);
        if !mask.get(x, y) {
            continue;
        }
        let Some(z) = depth.meters(x, y) else { continue };
        // the observed point on the same ray as p
        let observed = p * (z / p.z);
        for axis in 0..3 {
            d[axis].push(observed[axis] - p[axis]);
        }
    }
    if d[0].is_empty() {
        return *init;
    }
    let shift = Vec3::from_fn(|axis, _| median(&mut d[axis]));
    RigidTransform::from_translation(shift) * *init
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Aligns the estimated hand mesh to the masked depth cloud, moves the
/// keypoints by the same transform and applies the finger joint limits.
pub fn refine_hand_pose(
    inputs: &FrameInputs,
    k: &Intrinsics,
    prev: Option<&RigidTransform>,
    cfg: &PipelineConfig,
) -> Result<Refinement> {
    let dims = (k.width, k.height);
    if (inputs.depth.width(), inputs.depth.height()) != dims
        || (inputs.mask.width(), inputs.mask.height()) != dims
    {
        return Err(Error::DimensionMismatch(format!(
            "depth/mask do not match the {}x{} camera",
            k.width, k.height
        )));
    }
    let cloud = masked_point_cloud(&inputs.depth, &inputs.mask, k)?;
    let index = build_spatial_index(&cloud.points)?;
    let source = inputs.mesh.downsampled(cfg.max_source_points);
    let start = prev.copied().unwrap_or_else(RigidTransform::identity);
    let init = projective_init(&source, &inputs.depth, &inputs.mask, k, &start);
    let icp = icp_with_index(&source, &index, &init, &cfg.icp)?;
    if !icp.succeeded() {
        return Err(Error::DegenerateGeometry(format!("registration failed: {:?}", icp.status)));
    }
    let moved = inputs.keypoints.transformed(&icp.transform);
    let constrained = constrain_finger_joints(&moved, &cfg.joint_limits);
    Ok(Refinement {
        keypoints: constrained.keypoints,
        icp,
        degenerate_joints: constrained.degenerate,
    })
}

#[derive(Debug, Clone)]
pub struct ExtractedFrame {
    pub refinement: Option<Refinement>,
    /// Why the frame is invalid, when it is.
    pub failure: Option<String>,
}

/// Refines and extracts every frame in order, warm-starting registration
/// from the last successful frame, then applies the gripper rule over the
/// whole trajectory.
pub fn extract_trajectory(
    demo: &DemoRecord,
    cfg: &PipelineConfig,
) -> Result<(Trajectory, Vec<ExtractedFrame>)> {
    let mut prev: Option<RigidTransform> = None;
    let mut frames = Vec::with_capacity(demo.frames.len());
    let mut extracted = Vec::with_capacity(demo.frames.len());
    for frame in &demo.frames {
        let outcome = FrameInputs::load(frame)
            .and_then(|inputs| refine_hand_pose(&inputs, &demo.intrinsics, prev.as_ref(), cfg))
            .and_then(|r| {
                let action = extract_action(&r.keypoints, &demo.extrinsics, &cfg.gripper)?;
                Ok((r, action))
            });
        match outcome {
            Ok((r, action)) => {
                prev = Some(r.icp.transform);
                frames.push(TrajectoryFrame {
                    timestamp: frame.timestamp,
                    action: Some(action),
                    fingertip_distance: Some(fingertip_distance(&r.keypoints)),
                    valid: true,
                });
                extracted.push(ExtractedFrame {
                    refinement: Some(r),
                    failure: None,
                });
            }
            Err(e) => {
                let failure = Error::FrameInvalid {
                    index: frame.index,
                    reason: e.to_string(),
                };
                log::warn!("demo {}: {failure}", demo.id);
                frames.push(TrajectoryFrame {
                    timestamp: frame.timestamp,
                    action: None,
                    fingertip_distance: None,
                    valid: false,
                });
                extracted.push(ExtractedFrame {
                    refinement: None,
                    failure: Some(failure.to_string()),
                });
            }
        }
    }
    let invalid = frames.iter().filter(|f| !f.valid).count();
    if invalid as f64 > cfg.max_invalid_fraction * frames.len() as f64 {
        return Err(Error::DemoInvalid {
            demo: demo.id.clone(),
            invalid,
            total: frames.len(),
        });
    }
    let trajectory = Trajectory {
        demo_id: demo.id.clone(),
        frames,
    };
    Ok((postprocess_gripper(&trajectory, &cfg.gripper), extracted))
}

/// One camera/base placement of a demo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub index: usize,
    /// Base displacement along the original base x axis (m).
    pub base_shift: f64,
}

impl Variant {
    pub fn original() -> Self {
        Self {
            index: 0,
            base_shift: 0.0,
        }
    }

    /// Camera pose relative to the shifted base.
    pub fn extrinsics(&self, e: &Extrinsics) -> Extrinsics {
        if self.base_shift == 0.0 {
            return *e;
        }
        let shift = RigidTransform::from_translation(Vec3::new(-self.base_shift, 0.0, 0.0));
        Extrinsics::new(shift * e.camera_to_robot)
    }

    /// Re-expresses an action given in the original base frame.
    pub fn action(&self, a: &RobotAction) -> RobotAction {
        RobotAction {
            position: a.position - Vec3::new(self.base_shift, 0.0, 0.0),
            ..*a
        }
    }
}

/// Variant 0 is unshifted; the others draw a shift uniformly from
/// ±`max_shift_x`, seeded by the configured seed and the demo id.
pub fn plan_variants(demo_id: &str, n_variants: usize, max_shift_x: f64, seed: u64) -> Vec<Variant> {
    let digest = Sha256::digest(format!("{seed}:{demo_id}").as_bytes());
    let mut rng = ChaCha8Rng::from_seed(digest.into());
    (0..n_variants.max(1))
        .map(|index| Variant {
            index,
            base_shift: if index == 0 || max_shift_x == 0.0 {
                0.0
            } else {
                rng.gen_range(-max_shift_x..=max_shift_x)
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub source_demo: String,
    pub frame_index: usize,
    pub variant: usize,
    pub base_shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditedSample {
    pub provenance: Provenance,
    pub timestamp: f64,
    /// Absent for invalid frames and for action-only runs.
    pub image: Option<RgbImage>,
    /// In the variant's base frame; present whenever extraction succeeded.
    pub action: Option<RobotAction>,
    /// IK solution rendered for this frame.
    pub joints: Option<Vec<f64>>,
    pub valid: bool,
    pub note: Option<String>,
}

/// Scene RGB with the arm removed per `mode`, and the scene depth with the
/// (dilated) arm region cleared so the arm never occludes the robot.
pub fn edit_frame(
    frame: &FrameRef,
    mask: &Mask,
    depth: &DepthImage,
    cfg: &PipelineConfig,
) -> Result<(RgbImage, DepthImage)> {
    let region = dilate_mask(mask, cfg.mask_dilation);
    let rgb = match (&frame.inpainted, cfg.use_preinpainted) {
        (Some(path), true) => load_rgb_png(path)?,
        _ => {
            let rgb = load_rgb_png(&frame.rgb)?;
            match cfg.edit_mode {
                EditMode::InpaintFmm => inpaint_fmm(&rgb, &region, cfg.inpaint_radius)?,
                EditMode::MaskOnly => mask_out(&rgb, &region)?,
                EditMode::NoEdit => rgb,
            }
        }
    };
    let mut scene_depth = depth.clone();
    for y in 0..region.height() {
        for x in 0..region.width() {
            if region.get(x, y) {
                scene_depth.set(x, y, crate::camera::DEPTH_INVALID);
            }
        }
    }
    Ok((rgb, scene_depth))
}

/// Initial IK seed from the config, or zeros clamped into the limits.
pub fn home_configuration(chain: &KinematicChain, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    if cfg.robot.home.is_empty() {
        return Ok(chain.clamp(&vec![0.0; chain.dof()]));
    }
    if cfg.robot.home.len() != chain.dof() {
        return Err(Error::ConfigLengthMismatch {
            expected: chain.dof(),
            got: cfg.robot.home.len(),
        });
    }
    Ok(chain.clamp(&cfg.robot.home))
}

/// What to produce per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    ActionsOnly,
    Images,
}

/// Runs the whole pipeline for one demo and hands every sample, frame by
/// frame and variant by variant, to `sink`. IK warm starts run along each
/// variant's frame sequence and never across variants.
pub fn process_demo(
    demo: &DemoRecord,
    chain: Option<&KinematicChain>,
    cfg: &PipelineConfig,
    variants: &[Variant],
    output: Output,
    sink: &mut dyn FnMut(&EditedSample) -> Result<()>,
) -> Result<()> {
    let (trajectory, extracted) = extract_trajectory(demo, cfg)?;
    let render = match (output, chain) {
        (Output::Images, Some(chain)) => Some((chain, home_configuration(chain, cfg)?)),
        (Output::Images, None) => {
            return Err(Error::InvalidParameter("rendering needs a robot chain".into()))
        }
        (Output::ActionsOnly, _) => None,
    };
    let mut seeds: Vec<Option<Vec<f64>>> = vec![render.as_ref().map(|(_, home)| home.clone()); variants.len()];
    let variant_extrinsics: Vec<Extrinsics> = variants.iter().map(|v| v.extrinsics(&demo.extrinsics)).collect();

    for ((frame, traj), ext) in demo.frames.iter().zip(&trajectory.frames).zip(&extracted) {
        let base = |v: &Variant| EditedSample {
            provenance: Provenance {
                source_demo: demo.id.clone(),
                frame_index: frame.index,
                variant: v.index,
                base_shift: v.base_shift,
            },
            timestamp: frame.timestamp,
            image: None,
            action: traj.action.as_ref().map(|a| v.action(a)),
            joints: None,
            valid: traj.valid,
            note: ext.failure.clone(),
        };
        let Some((chain, _)) = render.as_ref().filter(|_| traj.valid) else {
            for v in variants {
                sink(&base(v))?;
            }
            continue;
        };
        let inputs = (DepthImage::load_png(&frame.depth)?, Mask::load_png(&frame.mask)?);
        let (scene_rgb, scene_depth) = edit_frame(frame, &inputs.1, &inputs.0, cfg)?;
        let samples: Vec<Result<EditedSample>> = variants
            .par_iter()
            .zip(seeds.par_iter_mut())
            .zip(variant_extrinsics.par_iter())
            .map(|((v, seed), e)| {
                let mut sample = base(v);
                let action = sample.action.expect("valid frames carry an action");
                let target = RigidTransform::new(action.rotation()?, action.position);
                let warm = seed.as_ref().expect("seeded when rendering");
                let ik = chain.inverse_kinematics(&target, warm, &cfg.ik)?;
                sample.joints = Some(ik.q.clone());
                if !ik.converged {
                    sample.valid = false;
                    sample.note = Some(format!(
                        "inverse kinematics did not converge (position error {:.4} m, rotation error {:.4} rad)",
                        ik.position_error, ik.rotation_error
                    ));
                    return Ok(sample);
                }
                *seed = Some(ik.q.clone());
                let layer = render_robot(chain, &ik.q, action.gripper, &demo.intrinsics, e)?;
                sample.image = Some(composite(&scene_rgb, &scene_depth, &layer, cfg.occlusion_eps)?);
                Ok(sample)
            })
            .collect();
        for s in samples {
            sink(&s?)?;
        }
    }
    Ok(())
}

/// Convenience wrapper collecting every sample in memory.
pub fn process_demo_collect(
    demo: &DemoRecord,
    chain: Option<&KinematicChain>,
    cfg: &PipelineConfig,
    variants: &[Variant],
    output: Output,
) -> Result<Vec<EditedSample>> {
    let mut out = Vec::new();
    process_demo(demo, chain, cfg, variants, output, &mut |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Variants of a demo drawn from the augmentation settings.
pub fn augment_extrinsics(
    demo: &DemoRecord,
    chain: &KinematicChain,
    cfg: &PipelineConfig,
    sink: &mut dyn FnMut(&EditedSample) -> Result<()>,
) -> Result<Vec<Variant>> {
    let a = &cfg.augmentation;
    let variants = plan_variants(&demo.id, a.n_variants, a.max_shift_x, a.rng_seed);
    process_demo(demo, Some(chain), cfg, &variants, Output::Images, sink)?;
    Ok(variants)
}

/// Single-frame overlay for inspection: registration starts from the
/// identity, the gripper uses the raw width and IK starts from home.
pub fn render_preview(
    demo: &DemoRecord,
    frame_index: usize,
    chain: &KinematicChain,
    cfg: &PipelineConfig,
) -> Result<RgbImage> {
    let frame = demo.frames.get(frame_index).ok_or_else(|| {
        Error::OutOfRange(format!("frame {frame_index} (demo has {})", demo.frames.len()))
    })?;
    let inputs = FrameInputs::load(frame)?;
    let refined = refine_hand_pose(&inputs, &demo.intrinsics, None, cfg).map_err(|e| Error::FrameInvalid {
        index: frame_index,
        reason: e.to_string(),
    })?;
    let action = extract_action(&refined.keypoints, &demo.extrinsics, &cfg.gripper)?;
    let target = RigidTransform::new(action.rotation()?, action.position);
    let ik = chain.inverse_kinematics(&target, &home_configuration(chain, cfg)?, &cfg.ik)?;
    if !ik.converged {
        log::warn!(
            "preview IK did not converge (position error {:.4} m); rendering the closest pose",
            ik.position_error
        );
    }
    let (scene_rgb, scene_depth) = edit_frame(frame, &inputs.mask, &inputs.depth, cfg)?;
    let layer = render_robot(chain, &ik.q, action.gripper, &demo.intrinsics, &demo.extrinsics)?;
    composite(&scene_rgb, &scene_depth, &layer, cfg.occlusion_eps)
}
