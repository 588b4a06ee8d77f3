//! Procedural demos with known ground truth: a Panda-like 7-joint arm, a
//! pinch-grasping hand rendered into RGB, depth and mask frames, and hand
//! estimates perturbed by a smooth rigid error the way a monocular
//! estimator would misplace them.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{save_rgb_png, DepthImage, Extrinsics, Intrinsics, Mask, RgbImage};
use crate::compositor::rasterize;
use crate::error::{Error, Result};
use crate::geometry::{encode_rot6d, RigidTransform, RotationMatrix, Vec3};
use crate::handpose::{HandKeypoints, HandMesh, NUM_KEYPOINTS};
use crate::mesh::TriangleMesh;
use crate::pipeline::{demo_dir_name, frame_file, DemoMeta, PipelineConfig};
use crate::robot::{
    ChainFile, GripperSpec, IkParams, JointSpec, KinematicChain, OffsetSpec, VisualSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub frames: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Perturb the hand estimates (otherwise they are exact).
    pub estimate_error: bool,
    /// Frames whose depth is blanked under the mask.
    pub corrupt_frames: Vec<usize>,
    /// Also write `inpainted/` frames showing the scene without the person.
    pub clean_background: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            frames: 100,
            seed: 7,
            width: 640,
            height: 480,
            estimate_error: true,
            corrupt_frames: Vec::new(),
            clean_background: false,
        }
    }
}

/// Generator ground truth for one frame (robot base frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame: usize,
    pub t: f64,
    pub p: [f64; 3],
    pub r6: [f64; 6],
    /// Fingertip distance (m).
    pub width: f64,
    /// A joint configuration reaching the pose.
    pub q: Vec<f64>,
}

impl GroundTruth {
    pub fn pose(&self) -> RigidTransform {
        RigidTransform::new(
            crate::geometry::decode_rot6d(&crate::geometry::Rotation6D(self.r6)).expect("valid by construction"),
            Vec3::from(self.p),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub chain: PathBuf,
    pub demo_id: String,
    pub ground_truth: Vec<GroundTruth>,
}

const CAMERA_EYE: [f64; 3] = [0.9, 0.3, 0.5];
const CAMERA_TARGET: [f64; 3] = [0.45, 0.0, 0.25];
const WORKSPACE_CENTER: [f64; 3] = [0.45, 0.0, 0.22];

const SKIN: [u8; 3] = [224, 172, 140];
const SLEEVE: [u8; 3] = [60, 80, 140];
const BACKGROUND: [u8; 3] = [30, 30, 35];

pub fn fixture_camera(width: u32, height: u32) -> (Intrinsics, Extrinsics) {
    let f = 600.0 * width as f64 / 640.0;
    let k = Intrinsics {
        fx: f,
        fy: f,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
        width,
        height,
    };
    let pose = RigidTransform::look_at(Vec3::from(CAMERA_EYE), Vec3::from(CAMERA_TARGET), Vec3::z())
        .expect("fixed camera is well posed");
    (k, Extrinsics::new(pose))
}

/// Box of half-width `r` around the segment `a`–`b`.
fn segment_box(a: Vec3, b: Vec3, r: f64) -> TriangleMesh {
    let d = b - a;
    let len = d.norm();
    if len < 1e-9 {
        return TriangleMesh::cuboid(a - Vec3::repeat(r), a + Vec3::repeat(r));
    }
    let z = d / len;
    let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let x = helper.cross(&z).normalize();
    let y = z.cross(&x);
    let rot = RotationMatrix::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[x, y, z]));
    TriangleMesh::cuboid(Vec3::new(-r, -r, -r), Vec3::new(r, r, len + r))
        .transformed(&RigidTransform::new(rot, a))
}

const JOINTS: [([f64; 3], [f64; 3], [f64; 2]); 7] = [
    ([0.0, 0.0, 0.333], [0.0, 0.0, 0.0], [-2.8973, 2.8973]),
    ([0.0, 0.0, 0.0], [-FRAC_PI_2, 0.0, 0.0], [-1.7628, 1.7628]),
    ([0.0, -0.316, 0.0], [FRAC_PI_2, 0.0, 0.0], [-2.8973, 2.8973]),
    ([0.0825, 0.0, 0.0], [FRAC_PI_2, 0.0, 0.0], [-3.0718, -0.0698]),
    ([-0.0825, 0.384, 0.0], [-FRAC_PI_2, 0.0, 0.0], [-2.8973, 2.8973]),
    ([0.0, 0.0, 0.0], [FRAC_PI_2, 0.0, 0.0], [-0.0175, 3.7525]),
    ([0.088, 0.0, 0.0], [FRAC_PI_2, 0.0, 0.0], [-2.8973, 2.8973]),
];
const EE_XYZ: [f64; 3] = [0.0, 0.0, 0.2104];
const EE_RPY: [f64; 3] = [0.0, 0.0, -FRAC_PI_4];

/// Writes the fixture arm (`arm.toml` plus link meshes) into `dir` and
/// returns the chain file path.
pub fn write_fixture_robot(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let save = |mesh: &TriangleMesh, name: &str| -> Result<PathBuf> {
        let path = dir.join(name);
        mesh.save(&path)?;
        Ok(PathBuf::from(name))
    };
    let base = segment_box(Vec3::zeros(), Vec3::from(JOINTS[0].0), 0.06);
    let mut joints = Vec::new();
    let ee = RigidTransform::from_xyz_rpy(EE_XYZ, EE_RPY);
    for (i, (xyz, rpy, limits)) in JOINTS.iter().enumerate() {
        let next = JOINTS.get(i + 1).map_or(Vec3::new(0.0, 0.0, 0.107), |j| Vec3::from(j.0));
        let mut mesh = segment_box(Vec3::zeros(), next, 0.045);
        if i == JOINTS.len() - 1 {
            mesh.append(
                &TriangleMesh::cuboid(Vec3::new(-0.022, -0.1, -0.105), Vec3::new(0.022, 0.1, -0.055))
                    .transformed(&ee),
            );
        }
        let ext = if i % 2 == 0 { "obj" } else { "stl" };
        joints.push(JointSpec {
            name: format!("joint{}", i + 1),
            axis: [0.0, 0.0, 1.0],
            origin_xyz: *xyz,
            origin_rpy: *rpy,
            limits: *limits,
            mesh: Some(save(&mesh, &format!("link{}.{ext}", i + 1))?),
            color: if i % 2 == 0 { [235, 235, 240] } else { [70, 72, 80] },
        });
    }
    let finger = TriangleMesh::cuboid(Vec3::new(-0.009, 0.0, -0.052), Vec3::new(0.009, 0.02, 0.0));
    let file = ChainFile {
        name: "fixture-panda".into(),
        base: Some(VisualSpec {
            mesh: save(&base, "base.obj")?,
            color: [70, 72, 80],
        }),
        joints,
        end_effector: OffsetSpec {
            origin_xyz: EE_XYZ,
            origin_rpy: EE_RPY,
        },
        gripper: GripperSpec {
            max_finger_travel: 0.04,
            opening_axis: [0.0, 1.0, 0.0],
            left_mesh: Some(save(&finger, "finger_left.stl")?),
            right_mesh: Some(save(
                &finger.transformed(&RigidTransform::from_xyz_rpy([0.0; 3], [0.0, 0.0, PI])),
                "finger_right.obj",
            )?),
            color: [210, 210, 215],
        },
    };
    let path = dir.join("arm.toml");
    let text = toml::to_string(&file).expect("chain file serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Hand keypoints in the gripper frame: the thumb and index finger lie in
/// the plane x = 0, the thumb runs along +z and the fingertips sit at
/// ±width/2 on the y axis.
pub fn hand_keypoints_local(width: f64) -> [Vec3; NUM_KEYPOINTS] {
    let h = width / 2.0;
    let mut kp = [Vec3::zeros(); NUM_KEYPOINTS];
    kp[0] = Vec3::new(0.0, 0.0, -0.16);
    for (i, (dy, z)) in [(0.0, -0.09), (-0.005, -0.06), (-0.005, -0.03), (0.0, 0.0)].iter().enumerate() {
        kp[1 + i] = Vec3::new(0.0, h + dy, *z);
    }
    for (i, (dy, z)) in [(-0.035, -0.085), (-0.03, -0.045), (-0.015, -0.02), (0.0, 0.0)].iter().enumerate() {
        kp[5 + i] = Vec3::new(0.0, -h + dy, *z);
    }
    for finger in 0..3 {
        let y = -h - 0.035 - 0.018 * (finger + 1) as f64;
        for (i, z) in [-0.09, -0.055, -0.035, -0.018].iter().enumerate() {
            kp[9 + 4 * finger + i] = Vec3::new(0.0, y + 0.004 * i as f64, *z);
        }
    }
    kp
}

fn hand_surface(y: f64, z: f64) -> f64 {
    0.012 * (1.0 - (y / 0.06).powi(2)) + 0.006 * (z * 2.0 * PI / 0.085).sin() + 0.004 * (y * 2.0 * PI / 0.05).cos()
}

fn hand_grid(ny: usize, nz: usize) -> Vec<Vec3> {
    let mut v = Vec::with_capacity(ny * nz);
    for iz in 0..nz {
        for iy in 0..ny {
            let y = -0.05 + 0.1 * iy as f64 / (ny - 1) as f64;
            let z = -0.17 + 0.17 * iz as f64 / (nz - 1) as f64;
            v.push(Vec3::new(hand_surface(y, z), y, z));
        }
    }
    v
}

/// The 778 estimator mesh vertices in the gripper frame.
pub fn hand_vertices_local() -> Vec<Vec3> {
    let mut v = hand_grid(26, 30);
    v.truncate(crate::handpose::NUM_MESH_VERTICES);
    v
}

fn hand_render_mesh() -> TriangleMesh {
    let (ny, nz) = (51, 59);
    let vertices = hand_grid(ny, nz);
    let mut triangles = Vec::new();
    for iz in 0..nz - 1 {
        for iy in 0..ny - 1 {
            let a = iz * ny + iy;
            triangles.push([a, a + 1, a + ny]);
            triangles.push([a + 1, a + ny + 1, a + ny]);
        }
    }
    TriangleMesh::new(vertices, triangles).expect("grid indices are in range")
}

fn arm_mesh() -> TriangleMesh {
    TriangleMesh::cuboid(Vec3::new(-0.045, -0.035, -0.45), Vec3::new(-0.012, 0.035, -0.1))
}

fn scene_meshes() -> Vec<(TriangleMesh, [u8; 3])> {
    let mut out = Vec::new();
    let mut light = TriangleMesh::default();
    let mut dark = light.clone();
    let cell = 0.1;
    for ix in -3..10 {
        for iy in -8..8 {
            let lo = Vec3::new(ix as f64 * cell, iy as f64 * cell, -0.01);
            let tile = TriangleMesh::cuboid(lo, lo + Vec3::new(cell, cell, 0.01));
            if (ix + iy) % 2 == 0 {
                light.append(&tile);
            } else {
                dark.append(&tile);
            }
        }
    }
    out.push((light, [180, 160, 120]));
    out.push((dark, [120, 100, 80]));
    out.push((
        TriangleMesh::cuboid(Vec3::new(-0.4, -1.2, -0.01), Vec3::new(-0.35, 1.2, 1.2)),
        [200, 205, 210],
    ));
    out.push((
        TriangleMesh::cuboid(Vec3::new(0.55, -0.25, 0.0), Vec3::new(0.65, -0.15, 0.08)),
        [200, 60, 50],
    ));
    out
}

/// Smooth pinch trajectory: gripper pose in the base frame and fingertip
/// distance at normalized time `s`.
fn ee_trajectory(s: f64, phase: &[f64; 8]) -> (RigidTransform, f64) {
    let tau = 2.0 * PI;
    let c = Vec3::from(WORKSPACE_CENTER);
    let p = c + Vec3::new(
        0.06 * (tau * s + phase[0]).sin(),
        0.08 * (0.5 * tau * s + phase[1]).sin(),
        0.05 * (1.5 * tau * s + phase[2]).sin(),
    );
    let to_camera = Vec3::from(CAMERA_EYE) - p;
    let x0 = Vec3::new(to_camera.x, to_camera.y, 0.0).normalize();
    let z0 = -Vec3::z();
    let y0 = z0.cross(&x0);
    let r0 = RotationMatrix::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[x0, y0, z0]));
    let wobble = RotationMatrix::from_axis_angle(&Vec3::x_axis(), 0.4 * (tau * s + phase[3]).sin())
        * RotationMatrix::from_axis_angle(&Vec3::y_axis(), 0.25 * (0.7 * tau * s + phase[4]).sin())
        * RotationMatrix::from_axis_angle(&Vec3::z_axis(), 0.25 * (1.2 * tau * s + phase[5]).sin());
    let width = 0.045 + 0.035 * (1.3 * tau * s + phase[6]).sin();
    (RigidTransform::new(r0 * wobble, p), width)
}

/// Smooth rigid error of the hand estimate (camera frame) about `centre`:
/// 2-4 cm along the viewing ray, up to 5 mm across it, up to 3 degrees.
fn estimate_error(s: f64, centre: &Vec3, phase: &[f64; 8], sign: f64) -> RigidTransform {
    let tau = 2.0 * PI;
    let ray = centre.normalize();
    let across1 = ray.cross(&Vec3::y()).normalize();
    let across2 = ray.cross(&across1);
    let depth = sign * (0.03 + 0.01 * (1.7 * tau * s + phase[0]).sin());
    let t = ray * depth
        + across1 * (0.0035 * (tau * s + phase[1]).sin())
        + across2 * (0.0035 * (0.8 * tau * s + phase[2]).cos());
    let w = Vec3::new(
        0.03 * (0.9 * tau * s + phase[3]).sin(),
        0.03 * (1.1 * tau * s + phase[4]).sin(),
        0.03 * (0.6 * tau * s + phase[5]).cos(),
    );
    let r = RotationMatrix::new(w);
    RigidTransform::new(r, centre - r * centre + t)
}

struct FrameRender {
    rgb: RgbImage,
    clean: RgbImage,
    depth: DepthImage,
    mask: Mask,
}

fn render_frame(
    person_to_camera: &RigidTransform,
    scene_to_camera: &RigidTransform,
    hand_mesh: &TriangleMesh,
    k: &Intrinsics,
) -> FrameRender {
    let scene: Vec<(TriangleMesh, [u8; 3])> = scene_meshes()
        .into_iter()
        .map(|(m, c)| (m.transformed(scene_to_camera), c))
        .collect();
    let person = vec![
        (hand_mesh.transformed(person_to_camera), SKIN),
        (arm_mesh().transformed(person_to_camera), SLEEVE),
    ];
    let everything: Vec<_> = scene.iter().chain(&person).cloned().collect();
    let full = rasterize(&everything, k);
    let person_layer = rasterize(&person, k);
    let clean_layer = rasterize(&scene, k);
    let fill = |layer: &crate::compositor::RenderLayer| {
        RgbImage::from_fn(k.width, k.height, |x, y| {
            if layer.covered(x, y) {
                *layer.rgb.get_pixel(x, y)
            } else {
                image::Rgb(BACKGROUND)
            }
        })
    };
    let mut depth = DepthImage::new(k.width, k.height);
    for y in 0..k.height {
        for x in 0..k.width {
            if full.covered(x, y) {
                let mm = (full.depth(x, y) * 1000.0).round();
                if mm >= 1.0 && mm <= u16::MAX as f64 {
                    depth.set(x, y, mm as u16);
                }
            }
        }
    }
    let mask = Mask::from_fn(k.width, k.height, |x, y| {
        person_layer.covered(x, y) && person_layer.depth(x, y) == full.depth(x, y)
    });
    FrameRender {
        rgb: fill(&full),
        clean: fill(&clean_layer),
        depth,
        mask,
    }
}

/// Solves IK along the trajectory, starting from a ready pose.
fn solve_trajectory(chain: &KinematicChain, poses: &[RigidTransform]) -> Result<Vec<Vec<f64>>> {
    let params = IkParams {
        max_iterations: 2000,
        pos_tol: 1e-5,
        rot_tol: 1e-5,
        ..IkParams::default()
    };
    let mut seed = vec![0.0, -0.3, 0.0, -2.2, 0.0, 2.0, FRAC_PI_4];
    let mut out = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let sol = chain.inverse_kinematics(pose, &seed, &params)?;
        if !sol.converged {
            return Err(Error::InvalidParameter(format!(
                "synthetic pose {i} is unreachable (error {:.2e} m)",
                sol.position_error
            )));
        }
        seed = sol.q.clone();
        out.push(sol.q);
    }
    Ok(out)
}

fn write_png_err(path: &Path) -> impl Fn(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `demo_<id>` under `input_root` and returns the ground truth,
/// which is also stored as `ground_truth.jsonl` in the demo directory.
pub fn write_demo(
    input_root: &Path,
    id: &str,
    chain: &KinematicChain,
    opts: &SynthOptions,
) -> Result<Vec<GroundTruth>> {
    if opts.frames == 0 {
        return Err(Error::InvalidParameter("a demo needs at least one frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let traj_phase: [f64; 8] = std::array::from_fn(|_| rng.gen_range(0.0..2.0 * PI));
    let err_phase: [f64; 8] = std::array::from_fn(|_| rng.gen_range(0.0..2.0 * PI));
    let err_sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };

    let (k, e) = fixture_camera(opts.width, opts.height);
    let robot_to_camera = e.robot_to_camera();
    let span = (opts.frames.max(2) - 1) as f64;
    let samples: Vec<(RigidTransform, f64)> =
        (0..opts.frames).map(|i| ee_trajectory(i as f64 / span, &traj_phase)).collect();
    let poses: Vec<RigidTransform> = samples.iter().map(|(p, _)| *p).collect();
    let qs = solve_trajectory(chain, &poses)?;

    let root = input_root.join(demo_dir_name(id));
    let dirs = ["rgb", "depth", "mask", "keypoints", "verts"];
    for d in dirs.iter().chain(opts.clean_background.then_some(&"inpainted")) {
        let p = root.join(d);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let hand_render = hand_render_mesh();
    let hand_verts = hand_vertices_local();
    let timestamps: Vec<f64> = (0..opts.frames).map(|i| i as f64 / 30.0).collect();
    let mut truth = Vec::with_capacity(opts.frames);
    for (i, ((pose, width), q)) in samples.iter().zip(qs).enumerate() {
        let to_camera = robot_to_camera * *pose;
        let frame = render_frame(&to_camera, &robot_to_camera, &hand_render, &k);
        let mut depth = frame.depth;
        if opts.corrupt_frames.contains(&i) {
            for y in 0..k.height {
                for x in 0..k.width {
                    if frame.mask.get(x, y) {
                        depth.set(x, y, 0);
                    }
                }
            }
        }
        let kp_cam: Vec<Vec3> = hand_keypoints_local(*width).iter().map(|p| to_camera.apply(p)).collect();
        let verts_cam: Vec<Vec3> = hand_verts.iter().map(|p| to_camera.apply(p)).collect();
        let err = if opts.estimate_error {
            let centre = crate::geometry::centroid(&verts_cam);
            estimate_error(i as f64 / span, &centre, &err_phase, err_sign)
        } else {
            RigidTransform::identity()
        };
        let kp_est = HandKeypoints::from_slice(&kp_cam.iter().map(|p| err.apply(p)).collect::<Vec<_>>())?;
        let mesh_est = HandMesh::new(verts_cam.iter().map(|p| err.apply(p)).collect())?;

        let rgb_path = frame_file(&root.join("rgb"), i, "png");
        frame.rgb.save(&rgb_path).map_err(write_png_err(&rgb_path))?;
        if opts.clean_background {
            save_rgb_png(&frame.clean, &frame_file(&root.join("inpainted"), i, "png"))?;
        }
        depth.save_png(&frame_file(&root.join("depth"), i, "png"))?;
        frame.mask.save_png(&frame_file(&root.join("mask"), i, "png"))?;
        kp_est.save_json(&frame_file(&root.join("keypoints"), i, "json"))?;
        mesh_est.save_bin(&frame_file(&root.join("verts"), i, "bin"))?;
        truth.push(GroundTruth {
            frame: i,
            t: timestamps[i],
            p: pose.translation.into(),
            r6: encode_rot6d(&pose.rotation).0,
            width: *width,
            q,
        });
    }
    let meta = DemoMeta {
        intrinsics: k,
        extrinsics: e.camera_to_robot.to_rows(),
        timestamps,
    };
    let meta_path = root.join("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta serializes"))
        .map_err(|e| Error::io(&meta_path, e))?;
    let gt_path = root.join("ground_truth.jsonl");
    let lines: Vec<String> = truth
        .iter()
        .map(|g| serde_json::to_string(g).expect("ground truth serializes"))
        .collect();
    std::fs::write(&gt_path, lines.join("\n") + "\n").map_err(|e| Error::io(&gt_path, e))?;
    Ok(truth)
}

pub fn read_ground_truth(demo_dir: &Path) -> Result<Vec<GroundTruth>> {
    let path = demo_dir.join("ground_truth.jsonl");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| Error::schema(&path, "ground truth", e.to_string())))
        .collect()
}

/// Robot, one demo and a `config.toml` pointing at both, all under `dir`.
/// The config's IK home is the first ground-truth configuration.
pub fn write_fixture(dir: &Path, demo_id: &str, opts: &SynthOptions) -> Result<Fixture> {
    let chain_path = write_fixture_robot(&dir.join("robot"))?;
    let chain = KinematicChain::load(&chain_path)?;
    let truth = write_demo(dir, demo_id, &chain, opts)?;
    let mut cfg = PipelineConfig::default();
    cfg.input_root = PathBuf::from(".");
    cfg.output = PathBuf::from("out");
    cfg.robot.chain = PathBuf::from("robot/arm.toml");
    cfg.robot.home = truth[0].q.clone();
    let config = dir.join("config.toml");
    std::fs::write(&config, cfg.to_toml()).map_err(|e| Error::io(&config, e))?;
    Ok(Fixture {
        dir: dir.to_path_buf(),
        config,
        chain: chain_path,
        demo_id: demo_id.to_string(),
        ground_truth: truth,
    })
}
