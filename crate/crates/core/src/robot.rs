//! Serial-arm kinematics and the chain description file.
//!
//! Chain file (TOML), paths relative to the file:
//!
//! ```toml
//! name = "arm"
//! [base]
//! mesh = "base.obj"
//! color = [90, 90, 90]
//! [[joints]]
//! name = "j1"
//! axis = [0, 0, 1]
//! origin_xyz = [0, 0, 0.33]
//! origin_rpy = [0, 0, 0]
//! limits = [-2.9, 2.9]
//! mesh = "link1.stl"
//! [end_effector]
//! origin_xyz = [0, 0, 0.2]
//! [gripper]
//! max_finger_travel = 0.04
//! opening_axis = [0, 1, 0]
//! left_mesh = "finger_left.obj"
//! right_mesh = "finger_right.obj"
//! ```
//!
//! The end-effector frame follows the action convention: z is the approach
//! direction and the fingers translate along `opening_axis`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Matrix6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_log, RigidTransform, RotationMatrix, Vec3};
use crate::mesh::TriangleMesh;

pub type Rgb = [u8; 3];

const DEFAULT_COLOR: Rgb = [200, 200, 205];

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    /// Parent frame to joint frame at zero angle.
    pub origin: RigidTransform,
    /// Unit rotation axis in the joint frame.
    pub axis: Vec3,
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualLink {
    pub mesh: TriangleMesh,
    pub color: Rgb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gripper {
    pub max_finger_travel: f64,
    /// Unit direction in the end-effector frame along which the left finger
    /// opens; the right finger moves opposite.
    pub opening_axis: Vec3,
    /// Finger meshes at the closed position, end-effector frame.
    pub fingers: [Option<VisualLink>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub name: String,
    pub joints: Vec<Joint>,
    pub base: Option<VisualLink>,
    /// Visual for the link moved by each joint, in that joint's frame.
    pub links: Vec<Option<VisualLink>>,
    pub ee_offset: RigidTransform,
    pub gripper: Gripper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    /// Pose of each joint frame after its rotation, base frame.
    pub link_poses: Vec<RigidTransform>,
    pub ee_pose: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IkParams {
    pub damping: f64,
    pub max_iterations: usize,
    /// Meters.
    pub pos_tol: f64,
    /// Radians.
    pub rot_tol: f64,
    pub step_scale: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            damping: 0.01,
            max_iterations: 200,
            pos_tol: 1e-3,
            rot_tol: 0.5_f64.to_radians(),
            step_scale: 1.0,
        }
    }
}

impl IkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.pos_tol > 0.0 && self.rot_tol > 0.0)
            || !(self.step_scale > 0.0 && self.step_scale <= 1.0)
        {
            return Err(Error::InvalidParameter(format!("bad IK parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: Vec<f64>,
    /// Meters.
    pub position_error: f64,
    /// Radians.
    pub rotation_error: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Error norm after each accepted step, starting with the seed.
    pub error_history: Vec<f64>,
}

fn rotation_about(axis: &Vec3, angle: f64) -> RotationMatrix {
    RotationMatrix::new(axis * angle)
}

/// Position and rotation error of `current` relative to `target`, base frame.
pub fn pose_error(target: &RigidTransform, current: &RigidTransform) -> (Vec3, Vec3) {
    let dp = target.translation - current.translation;
    let dr = rotation_log(&(target.rotation * current.rotation.inverse()));
    (dp, dr)
}

impl KinematicChain {
    pub fn new(joints: Vec<Joint>, ee_offset: RigidTransform, gripper: Gripper) -> Result<Self> {
        let n = joints.len();
        let chain = Self {
            name: "chain".into(),
            joints,
            base: None,
            links: vec![None; n],
            ee_offset,
            gripper,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::InvalidParameter("chain has no joints".into()));
        }
        if self.links.len() != self.joints.len() {
            return Err(Error::InvalidParameter("one visual slot per joint required".into()));
        }
        for j in &self.joints {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("joint {} axis is not unit", j.name)));
            }
            if !(j.limits[0] < j.limits[1]) {
                return Err(Error::InvalidParameter(format!("joint {} limits {:?}", j.name, j.limits)));
            }
        }
        let g = &self.gripper;
        if !(g.max_finger_travel >= 0.0) || (g.opening_axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("bad gripper description".into()));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn clamp(&self, q: &[f64]) -> Vec<f64> {
        q.iter()
            .zip(&self.joints)
            .map(|(&v, j)| v.clamp(j.limits[0], j.limits[1]))
            .collect()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.joints)
            .all(|(&v, j)| v >= j.limits[0] && v <= j.limits[1])
    }

    fn check_len(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::ConfigLengthMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Kinematics> {
        self.check_len(q)?;
        let mut pose = RigidTransform::identity();
        let mut link_poses = Vec::with_capacity(q.len());
        for (j, &angle) in self.joints.iter().zip(q) {
            pose = pose * j.origin * RigidTransform::from_rotation(rotation_about(&j.axis, angle));
            link_poses.push(pose);
        }
        Ok(Kinematics {
            ee_pose: pose * self.ee_offset,
            link_poses,
        })
    }

    /// Geometric Jacobian (6 × n, linear rows first) in the base frame.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let fk = self.forward_kinematics(q)?;
        Ok(self.jacobian_from(&fk))
    }

    fn jacobian_from(&self, fk: &Kinematics) -> DMatrix<f64> {
        let ee = fk.ee_pose.translation;
        let mut jac = DMatrix::zeros(6, self.dof());
        for (i, (j, pose)) in self.joints.iter().zip(&fk.link_poses).enumerate() {
            let axis = pose.rotation * j.axis;
            let linear = axis.cross(&(ee - pose.translation));
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&linear);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&axis);
        }
        jac
    }

    /// Damped least squares with joint-limit clamping. A step that does not
    /// reduce the error norm is halved until it does; the search stops when
    /// no reduction is found. Always returns the best configuration seen.
    pub fn inverse_kinematics(
        &self,
        target: &RigidTransform,
        seed: &[f64],
        params: &IkParams,
    ) -> Result<IkSolution> {
        self.check_len(seed)?;
        let error_of = |q: &[f64]| -> Result<(Vec3, Vec3, Kinematics)> {
            let fk = self.forward_kinematics(q)?;
            let (dp, dr) = pose_error(target, &fk.ee_pose);
            Ok((dp, dr, fk))
        };
        let norm = |dp: &Vec3, dr: &Vec3| (dp.norm_squared() + dr.norm_squared()).sqrt();
        let done = |dp: &Vec3, dr: &Vec3| dp.norm() < params.pos_tol && dr.norm() < params.rot_tol;

        let mut q = self.clamp(seed);
        let (mut dp, mut dr, mut fk) = error_of(&q)?;
        let mut history = vec![norm(&dp, &dr)];
        let mut iterations = 0;
        let lambda2 = params.damping * params.damping;
        while iterations < params.max_iterations && !done(&dp, &dr) {
            iterations += 1;
            let jac = self.jacobian_from(&fk);
            let e = DVector::from_iterator(6, dp.iter().chain(dr.iter()).copied());
            let jjt: Matrix6<f64> = (&jac * jac.transpose()).fixed_view::<6, 6>(0, 0).into_owned()
                + Matrix6::identity() * lambda2;
            let Some(chol) = jjt.cholesky() else { break };
            let y = chol.solve(&nalgebra::Vector6::from_iterator(e.iter().copied()));
            let dq = jac.transpose() * DVector::from_iterator(6, y.iter().copied());

            let current = norm(&dp, &dr);
            let mut step = params.step_scale;
            let mut accepted = None;
            while step > 1e-8 {
                let trial: Vec<f64> = q.iter().zip(dq.iter()).map(|(a, d)| a + step * d).collect();
                let trial = self.clamp(&trial);
                let (tp, tr, tfk) = error_of(&trial)?;
                if norm(&tp, &tr) < current {
                    accepted = Some((trial, tp, tr, tfk));
                    break;
                }
                step *= 0.5;
            }
            let Some((nq, np, nr, nfk)) = accepted else { break };
            (q, dp, dr, fk) = (nq, np, nr, nfk);
            history.push(norm(&dp, &dr));
        }
        Ok(IkSolution {
            converged: done(&dp, &dr),
            position_error: dp.norm(),
            rotation_error: dr.norm(),
            q,
            iterations,
            error_history: history,
        })
    }

    /// Displacement of each finger from closed for a normalized width.
    pub fn gripper_joint_from_width(&self, g: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::OutOfRange(format!("gripper width {g} not in [0, 1]")));
        }
        Ok(g * self.gripper.max_finger_travel)
    }

    /// Every visual mesh posed in the base frame, with its color.
    pub fn posed_visuals(&self, q: &[f64], g: f64) -> Result<Vec<(TriangleMesh, Rgb)>> {
        let fk = self.forward_kinematics(q)?;
        let travel = self.gripper_joint_from_width(g)?;
        let mut out = Vec::new();
        if let Some(base) = &self.base {
            out.push((base.mesh.clone(), base.color));
        }
        for (link, pose) in self.links.iter().zip(&fk.link_poses) {
            if let Some(link) = link {
                out.push((link.mesh.transformed(pose), link.color));
            }
        }
        for (finger, sign) in self.gripper.fingers.iter().zip([1.0, -1.0]) {
            if let Some(finger) = finger {
                let shift = RigidTransform::from_translation(self.gripper.opening_axis * (sign * travel));
                out.push((finger.mesh.transformed(&(fk.ee_pose * shift)), finger.color));
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ChainFile =
            toml::from_str(&text).map_err(|e| Error::schema(path, "chain", e.message()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        file.into_chain(dir, path)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualSpec {
    pub mesh: PathBuf,
    #[serde(default = "default_color")]
    pub color: Rgb,
}

fn default_color() -> Rgb {
    DEFAULT_COLOR
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub name: String,
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin_xyz: [f64; 3],
    #[serde(default)]
    pub origin_rpy: [f64; 3],
    pub limits: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
    #[serde(default = "default_color")]
    pub color: Rgb,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetSpec {
    #[serde(default)]
    pub origin_xyz: [f64; 3],
    #[serde(default)]
    pub origin_rpy: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperSpec {
    pub max_finger_travel: f64,
    #[serde(default = "default_opening_axis")]
    pub opening_axis: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_mesh: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_mesh: Option<PathBuf>,
    #[serde(default = "default_color")]
    pub color: Rgb,
}

fn default_opening_axis() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

/// On-disk chain description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<VisualSpec>,
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub end_effector: OffsetSpec,
    pub gripper: GripperSpec,
}

impl ChainFile {
    pub fn into_chain(self, dir: &Path, path: &Path) -> Result<KinematicChain> {
        let load = |p: &Path, color: Rgb| -> Result<VisualLink> {
            Ok(VisualLink {
                mesh: TriangleMesh::load(&dir.join(p))?,
                color,
            })
        };
        let unit = |v: [f64; 3], field: &str| -> Result<Vec3> {
            Vec3::from(v)
                .try_normalize(1e-12)
                .ok_or_else(|| Error::schema(path, field, "zero-length axis"))
        };
        let mut joints = Vec::new();
        let mut links = Vec::new();
        for j in &self.joints {
            joints.push(Joint {
                name: j.name.clone(),
                origin: RigidTransform::from_xyz_rpy(j.origin_xyz, j.origin_rpy),
                axis: unit(j.axis, &format!("joints.{}.axis", j.name))?,
                limits: j.limits,
            });
            links.push(j.mesh.as_deref().map(|m| load(m, j.color)).transpose()?);
        }
        let g = &self.gripper;
        let chain = KinematicChain {
            name: self.name.clone(),
            joints,
            base: self.base.as_ref().map(|b| load(&b.mesh, b.color)).transpose()?,
            links,
            ee_offset: RigidTransform::from_xyz_rpy(
                self.end_effector.origin_xyz,
                self.end_effector.origin_rpy,
            ),
            gripper: Gripper {
                max_finger_travel: g.max_finger_travel,
                opening_axis: unit(g.opening_axis, "gripper.opening_axis")?,
                fingers: [
                    g.left_mesh.as_deref().map(|m| load(m, g.color)).transpose()?,
                    g.right_mesh.as_deref().map(|m| load(m, g.color)).transpose()?,
                ],
            },
        };
        chain
            .validate()
            .map_err(|e| Error::schema(path, "chain", e.to_string()))?;
        Ok(chain)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn no_gripper() -> Gripper {
        Gripper {
            max_finger_travel: 0.04,
            opening_axis: Vec3::y(),
            fingers: [None, None],
        }
    }

    fn planar(lengths: &[f64]) -> KinematicChain {
        let mut joints = Vec::new();
        let mut prev = 0.0;
        for (i, &l) in lengths.iter().enumerate() {
            joints.push(Joint {
                name: format!("j{i}"),
                origin: RigidTransform::from_translation(Vec3::new(prev, 0.0, 0.0)),
                axis: Vec3::z(),
                limits: [-3.0, 3.0],
            });
            prev = l;
        }
        KinematicChain::new(joints, RigidTransform::from_translation(Vec3::new(prev, 0.0, 0.0)), no_gripper()).unwrap()
    }

    /// Random 7-joint chain with generic axes and offsets.
    pub(crate) fn random_chain(rng: &mut impl Rng) -> KinematicChain {
        let joints = (0..7)
            .map(|i| Joint {
                name: format!("j{i}"),
                origin: RigidTransform::from_xyz_rpy(
                    [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(0.05..0.3)],
                    [rng.gen_range(-3.0..3.0), rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0)],
                ),
                axis: Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.2..1.0)).normalize(),
                limits: [-2.8, 2.8],
            })
            .collect();
        KinematicChain::new(joints, RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.1)), no_gripper()).unwrap()
    }

    #[test]
    fn planar_forward_kinematics() {
        let chain = planar(&[1.0, 1.0]);
        let ee = |q: &[f64]| chain.forward_kinematics(q).unwrap().ee_pose.translation;
        assert_abs_diff_eq!(ee(&[0.0, 0.0]), Vec3::new(2.0, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(ee(&[FRAC_PI_2, 0.0]), Vec3::new(0.0, 2.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(ee(&[0.0, FRAC_PI_2]), Vec3::new(1.0, 1.0, 0.0), epsilon = 1e-15);
        assert!(matches!(
            chain.forward_kinematics(&[0.0]),
            Err(Error::ConfigLengthMismatch { expected: 2, got: 1 })
        ));
    }

    fn rodrigues(axis: &Vec3, angle: f64) -> nalgebra::Matrix4<f64> {
        let k = axis.cross_matrix();
        let r = nalgebra::Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m
    }

    #[test]
    fn forward_kinematics_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let chain = random_chain(&mut rng);
            let q: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.8..2.8)).collect();
            let mut m = nalgebra::Matrix4::identity();
            for (j, &a) in chain.joints.iter().zip(&q) {
                m = m * j.origin.to_homogeneous() * rodrigues(&j.axis, a);
            }
            m *= chain.ee_offset.to_homogeneous();
            let fk = chain.forward_kinematics(&q).unwrap();
            assert!((fk.ee_pose.to_homogeneous() - m).abs().max() < 1e-12);
        }
    }

    #[test]
    fn single_link_jacobian() {
        let chain = planar(&[1.0]);
        let j = chain.jacobian(&[0.0]).unwrap();
        assert_abs_diff_eq!(j.column(0).into_owned(), DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]), epsilon = 1e-15);
        let at_tip = planar(&[0.0]);
        let j = at_tip.jacobian(&[0.7]).unwrap();
        assert_eq!(j.fixed_view::<3, 1>(0, 0).norm(), 0.0);
    }

    /// Central differences of position and of the rotation's small-angle
    /// increment R(q+h) R(q-h)^T.
    pub(crate) fn finite_difference_jacobian(chain: &KinematicChain, q: &[f64], h: f64) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(6, q.len());
        for i in 0..q.len() {
            let mut qp = q.to_vec();
            let mut qm = q.to_vec();
            qp[i] += h;
            qm[i] -= h;
            let a = chain.forward_kinematics(&qp).unwrap().ee_pose;
            let b = chain.forward_kinematics(&qm).unwrap().ee_pose;
            let dp = (a.translation - b.translation) / (2.0 * h);
            let dr = rotation_log(&(a.rotation * b.rotation.inverse())) / (2.0 * h);
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&dp);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&dr);
        }
        jac
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let chain = random_chain(&mut rng);
            let q: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.8..2.8)).collect();
            let diff = (chain.jacobian(&q).unwrap() - finite_difference_jacobian(&chain, &q, 1e-6)).abs().max();
            assert!(diff < 1e-5, "{diff}");
        }
    }

    #[test]
    fn ik_fixed_point_and_unreachable() {
        let chain = planar(&[0.5, 0.5]);
        let seed = [0.3, -0.4];
        let target = chain.forward_kinematics(&seed).unwrap().ee_pose;
        let sol = chain.inverse_kinematics(&target, &seed, &IkParams::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.q, seed.to_vec());

        let far = RigidTransform::from_translation(Vec3::new(10.0, 0.0, 0.0));
        let sol = chain.inverse_kinematics(&far, &seed, &IkParams::default()).unwrap();
        assert!(!sol.converged);
        assert!(sol.position_error > 8.9);
        assert!(sol.error_history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn ik_recovers_random_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let chain = random_chain(&mut rng);
        let params = IkParams::default();
        let mut ok = 0;
        for _ in 0..50 {
            let q_star: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.5..2.5)).collect();
            let seed: Vec<f64> = q_star.iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
            let target = chain.forward_kinematics(&q_star).unwrap().ee_pose;
            let sol = chain.inverse_kinematics(&target, &seed, &params).unwrap();
            assert!(chain.within_limits(&sol.q));
            assert!(sol.error_history.windows(2).all(|w| w[1] < w[0]));
            if sol.converged {
                let (dp, dr) = pose_error(&target, &chain.forward_kinematics(&sol.q).unwrap().ee_pose);
                assert!(dp.norm() < 1e-3 && dr.norm() < params.rot_tol);
                ok += 1;
            }
        }
        assert!(ok >= 49, "{ok}");
    }

    #[test]
    fn gripper_width_map() {
        let chain = planar(&[1.0]);
        assert_eq!(chain.gripper_joint_from_width(0.0).unwrap(), 0.0);
        assert_eq!(chain.gripper_joint_from_width(1.0).unwrap(), 0.04);
        assert_eq!(chain.gripper_joint_from_width(0.5).unwrap(), 0.02);
        assert!(chain.gripper_joint_from_width(1.1).is_err());
        assert!(chain.gripper_joint_from_width(-0.1).is_err());
    }

    #[test]
    fn chain_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        TriangleMesh::cuboid(Vec3::new(-0.02, -0.02, 0.0), Vec3::new(0.02, 0.02, 0.3))
            .save_stl(&dir.path().join("link.stl"))
            .unwrap();
        TriangleMesh::cuboid(Vec3::new(-0.005, 0.0, -0.04), Vec3::new(0.005, 0.01, 0.0))
            .save_obj(&dir.path().join("finger.obj"))
            .unwrap();
        let text = r#"
name = "two-link"
[[joints]]
name = "shoulder"
axis = [0, 0, 2]
origin_xyz = [0, 0, 0.1]
limits = [-3, 3]
mesh = "link.stl"
color = [255, 0, 0]
[[joints]]
name = "elbow"
axis = [0, 1, 0]
origin_xyz = [0, 0, 0.3]
origin_rpy = [0, 0, 1.5707963267948966]
limits = [-2, 2]
[end_effector]
origin_xyz = [0, 0, 0.3]
[gripper]
max_finger_travel = 0.04
left_mesh = "finger.obj"
right_mesh = "finger.obj"
"#;
        let path = dir.path().join("arm.toml");
        std::fs::write(&path, text).unwrap();
        let chain = KinematicChain::load(&path).unwrap();
        assert_eq!(chain.dof(), 2);
        assert_eq!(chain.joints[0].axis, Vec3::z());
        assert!(chain.links[0].is_some() && chain.links[1].is_none());
        let ee = chain.forward_kinematics(&[0.0, 0.0]).unwrap().ee_pose.translation;
        assert_abs_diff_eq!(ee, Vec3::new(0.0, 0.0, 0.7), epsilon = 1e-12);
        let visuals = chain.posed_visuals(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(visuals.len(), 3);
        assert_eq!(visuals[0].1, [255, 0, 0]);

        std::fs::write(&path, text.replace("limits = [-2, 2]", "limits = [2, -2]")).unwrap();
        assert!(matches!(KinematicChain::load(&path), Err(Error::Schema { .. })));
        std::fs::write(&path, text.replace("mesh = \"link.stl\"", "mesh = \"gone.stl\"")).unwrap();
        assert!(KinematicChain::load(&path).is_err());
    }
}
