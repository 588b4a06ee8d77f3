//! End-effector actions from refined hand keypoints.
//!
//! Frame convention for the target orientation (columns of the rotation):
//! x is the normal of the plane through the thumb and index keypoints,
//! oriented toward the camera; z is the thumb axis, proximal to distal,
//! re-orthogonalised against x; y = z × x. Robot models must attach their
//! end-effector frame with the same convention.

use serde::{Deserialize, Serialize};

use crate::camera::{to_robot_frame, Extrinsics};
use crate::error::{Error, Result};
use crate::geometry::{
    decode_rot6d, encode_rot6d, fit_line, fit_plane_toward, Rotation6D, RotationMatrix, Vec3,
};
use crate::handpose::{fingertip_pair, HandKeypoints, INDEX, THUMB};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotAction {
    pub position: Vec3,
    pub orientation: Rotation6D,
    /// 0 closed, 1 fully open.
    pub gripper: f64,
}

impl RobotAction {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gripper) {
            return Err(Error::OutOfRange(format!("gripper {} not in [0, 1]", self.gripper)));
        }
        if self.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("non-finite position".into()));
        }
        let r = decode_rot6d(&self.orientation)?;
        crate::geometry::rotation_from_matrix(*r.matrix())?;
        Ok(())
    }

    pub fn rotation(&self) -> Result<RotationMatrix> {
        decode_rot6d(&self.orientation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperCalibration {
    /// Fingertip distance (m) that maps to a fully open gripper.
    pub max_width: f64,
    /// Frames at or below this percentile of a trajectory's fingertip
    /// distances are forced closed.
    pub close_percentile: f64,
}

impl Default for GripperCalibration {
    fn default() -> Self {
        Self {
            max_width: 0.08,
            close_percentile: 20.0,
        }
    }
}

impl GripperCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_width > 0.0) || !(0.0..=100.0).contains(&self.close_percentile) {
            return Err(Error::InvalidParameter(format!("bad gripper calibration {self:?}")));
        }
        Ok(())
    }
}

pub fn target_position(kp: &HandKeypoints) -> Vec3 {
    let (thumb, index) = fingertip_pair(kp);
    (thumb + index) / 2.0
}

/// Orientation with the plane normal facing the origin of the keypoint frame
/// (the camera).
pub fn target_orientation(kp: &HandKeypoints) -> Result<RotationMatrix> {
    target_orientation_toward(kp, &Vec3::zeros())
}

/// Orientation with the plane normal facing `viewpoint`.
pub fn target_orientation_toward(kp: &HandKeypoints, viewpoint: &Vec3) -> Result<RotationMatrix> {
    let pts: Vec<Vec3> = THUMB.iter().chain(INDEX.iter()).map(|&i| kp.get(i)).collect();
    let x = fit_plane_toward(&pts, viewpoint)?.normal;
    let thumb_axis = fit_line(&kp.thumb())?.direction;
    let z = thumb_axis - x * thumb_axis.dot(&x);
    let z = z.try_normalize(1e-9).ok_or_else(|| {
        Error::DegenerateGeometry("thumb axis is perpendicular to the finger plane".into())
    })?;
    let y = z.cross(&x);
    Ok(RotationMatrix::from_matrix_unchecked(
        nalgebra::Matrix3::from_columns(&[x, y, z]),
    ))
}

pub fn fingertip_distance(kp: &HandKeypoints) -> f64 {
    let (thumb, index) = fingertip_pair(kp);
    (thumb - index).norm()
}

pub fn raw_gripper_width(kp: &HandKeypoints, cal: &GripperCalibration) -> f64 {
    normalized_width(fingertip_distance(kp), cal)
}

fn normalized_width(distance: f64, cal: &GripperCalibration) -> f64 {
    (distance / cal.max_width).clamp(0.0, 1.0)
}

pub fn extract_action(
    kp_refined: &HandKeypoints,
    e: &Extrinsics,
    cal: &GripperCalibration,
) -> Result<RobotAction> {
    extract_action_toward(kp_refined, e, cal, &Vec3::zeros())
}

/// [`extract_action`] with an explicit camera centre in the keypoint frame.
pub fn extract_action_toward(
    kp_refined: &HandKeypoints,
    e: &Extrinsics,
    cal: &GripperCalibration,
    viewpoint: &Vec3,
) -> Result<RobotAction> {
    let rotation_cam = target_orientation_toward(kp_refined, viewpoint)?;
    let (position, rotation) = to_robot_frame(&target_position(kp_refined), &rotation_cam, e);
    Ok(RobotAction {
        position,
        orientation: encode_rot6d(&rotation),
        gripper: raw_gripper_width(kp_refined, cal),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub timestamp: f64,
    /// `None` when extraction failed for this frame.
    pub action: Option<RobotAction>,
    /// Fingertip distance in meters, before normalisation.
    pub fingertip_distance: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub demo_id: String,
    pub frames: Vec<TrajectoryFrame>,
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        for w in self.frames.windows(2) {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::OutOfRange(format!(
                    "timestamps not strictly increasing: {} then {}",
                    w[0].timestamp, w[1].timestamp
                )));
            }
        }
        Ok(())
    }
}

/// Nearest-rank percentile: the value at 1-based rank `⌈p/100 · n⌉` of the
/// sorted sample. `None` for an empty sample or a zero rank.
pub fn nearest_rank(values: &[f64], percentile: f64) -> Option<f64> {
    let rank = (percentile / 100.0 * values.len() as f64).ceil() as usize;
    if rank == 0 || values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Forces frames whose fingertip distance is at or below the configured
/// percentile of the trajectory to fully closed. Frames without a valid
/// action are ignored and left untouched.
pub fn postprocess_gripper(traj: &Trajectory, cal: &GripperCalibration) -> Trajectory {
    let usable = |f: &TrajectoryFrame| f.valid && f.action.is_some() && f.fingertip_distance.is_some();
    let distances: Vec<f64> = traj
        .frames
        .iter()
        .filter(|f| usable(f))
        .filter_map(|f| f.fingertip_distance)
        .collect();
    let mut out = traj.clone();
    let Some(threshold) = nearest_rank(&distances, cal.close_percentile) else {
        return out;
    };
    for frame in out.frames.iter_mut() {
        if !usable(frame) {
            continue;
        }
        if frame.fingertip_distance.is_some_and(|d| d <= threshold) {
            if let Some(a) = frame.action.as_mut() {
                a.gripper = 0.0;
            }
        }
    }
    out
}

/// One line of `actions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRecord {
    pub t: f64,
    pub p: Option<[f64; 3]>,
    pub r6: Option<[f64; 6]>,
    pub g: Option<f64>,
    pub valid: bool,
}

impl ActionRecord {
    pub fn new(t: f64, action: Option<&RobotAction>, valid: bool) -> Self {
        Self {
            t,
            p: action.map(|a| [a.position.x, a.position.y, a.position.z]),
            r6: action.map(|a| a.orientation.0),
            g: action.map(|a| a.gripper),
            valid,
        }
    }

    pub fn action(&self) -> Option<RobotAction> {
        Some(RobotAction {
            position: Vec3::from(self.p?),
            orientation: Rotation6D(self.r6?),
            gripper: self.g?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_distance, RigidTransform};
    use crate::handpose::tests::planar_hand;
    use crate::testutil::random_transform;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hand_with_tips(thumb: Vec3, index: Vec3) -> HandKeypoints {
        let mut kp = planar_hand();
        kp.0[4] = thumb;
        kp.0[8] = index;
        kp
    }

    #[test]
    fn position_is_tip_midpoint() {
        let kp = hand_with_tips(Vec3::new(0.10, 0.0, 0.50), Vec3::new(0.14, 0.0, 0.50));
        assert_abs_diff_eq!(target_position(&kp), Vec3::new(0.12, 0.0, 0.50), epsilon = 1e-15);
        let p = Vec3::new(0.3, -0.1, 0.7);
        assert_eq!(target_position(&hand_with_tips(p, p)), p);
    }

    /// Thumb along +x and index finger, all in the z = 0 plane.
    fn flat_pinch(z: f64) -> HandKeypoints {
        let mut kp = planar_hand();
        for (k, &i) in THUMB.iter().enumerate() {
            // symmetric zig-zag keeps the principal axis exactly on x
            let dy = [0.0, -0.004, -0.004, 0.0][k];
            kp.0[i] = Vec3::new(0.03 * k as f64, dy, z);
        }
        for (k, &i) in INDEX.iter().enumerate() {
            kp.0[i] = Vec3::new(0.02 * k as f64, -0.05 + 0.01 * (k * k) as f64, z);
        }
        kp
    }

    #[test]
    fn orientation_of_flat_pinch() {
        let r = target_orientation_toward(&flat_pinch(0.0), &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let m = r.matrix();
        assert_abs_diff_eq!(m.column(0).into_owned(), Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(m.column(2).into_owned(), Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(m.determinant(), 1.0, epsilon = 1e-12);
        // seen from the camera at the origin, the hand at z = 0.5 flips x
        let r = target_orientation(&flat_pinch(0.5)).unwrap();
        assert_abs_diff_eq!(r.matrix().column(0).into_owned(), Vec3::new(0.0, 0.0, -1.0), epsilon = 1e-12);
    }

    #[test]
    fn orientation_rejects_collinear_fingers() {
        let mut kp = planar_hand();
        for (k, &i) in THUMB.iter().chain(INDEX.iter()).enumerate() {
            kp.0[i] = Vec3::new(0.02 * k as f64, 0.0, 0.5);
        }
        assert!(matches!(target_orientation(&kp), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn orientation_rotates_with_the_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let kp = planar_hand();
        let viewpoint = Vec3::new(0.0, 0.0, 0.0);
        let r0 = target_orientation_toward(&kp, &viewpoint).unwrap();
        for _ in 0..100 {
            let t = random_transform(&mut rng);
            let r1 = target_orientation_toward(&kp.transformed(&t), &t.apply(&viewpoint)).unwrap();
            assert!(rotation_distance(&r1, &(t.rotation * r0)) < 1e-6);
        }
    }

    #[test]
    fn gripper_width_clamps() {
        let cal = GripperCalibration::default();
        let a = Vec3::new(0.0, 0.0, 0.5);
        assert_eq!(raw_gripper_width(&hand_with_tips(a, a + Vec3::new(0.08, 0.0, 0.0)), &cal), 1.0);
        assert_eq!(raw_gripper_width(&hand_with_tips(a, a), &cal), 0.0);
        assert_eq!(raw_gripper_width(&hand_with_tips(a, a + Vec3::new(0.12, 0.0, 0.0)), &cal), 1.0);
        assert_abs_diff_eq!(
            raw_gripper_width(&hand_with_tips(a, a + Vec3::new(0.0, 0.02, 0.0)), &cal),
            0.25,
            epsilon = 1e-12
        );
    }

    fn trajectory(distances: &[f64], cal: &GripperCalibration) -> Trajectory {
        Trajectory {
            demo_id: "t".into(),
            frames: distances
                .iter()
                .enumerate()
                .map(|(i, &d)| TrajectoryFrame {
                    timestamp: i as f64 * 0.1,
                    action: Some(RobotAction {
                        position: Vec3::zeros(),
                        orientation: Rotation6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
                        gripper: normalized_width(d, cal),
                    }),
                    fingertip_distance: Some(d),
                    valid: true,
                })
                .collect(),
        }
    }

    fn grippers(t: &Trajectory) -> Vec<f64> {
        t.frames.iter().map(|f| f.action.unwrap().gripper).collect()
    }

    #[test]
    fn percentile_closes_bottom_fifth() {
        let cal = GripperCalibration::default();
        let d: Vec<f64> = (1..=10).map(|c| c as f64 / 100.0).collect();
        let before = trajectory(&d, &cal);
        let after = postprocess_gripper(&before, &cal);
        let g = grippers(&after);
        assert_eq!(&g[..2], &[0.0, 0.0]);
        assert_eq!(&g[2..], &grippers(&before)[2..]);

        let flat = trajectory(&[0.05; 7], &cal);
        assert!(grippers(&postprocess_gripper(&flat, &cal)).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn percentile_skips_invalid_frames() {
        let cal = GripperCalibration::default();
        let mut t = trajectory(&[0.01, 0.02, 0.03, 0.04, 0.05, 0.06], &cal);
        t.frames[0].valid = false;
        t.frames[1].action = None;
        // usable distances 0.03..0.06, rank ceil(0.8) = 1 -> only 0.03 closes
        let g: Vec<Option<f64>> = postprocess_gripper(&t, &cal)
            .frames
            .iter()
            .map(|f| f.action.map(|a| a.gripper))
            .collect();
        assert_eq!(g[0], Some(normalized_width(0.01, &cal)));
        assert_eq!(g[1], None);
        assert_eq!(g[2], Some(0.0));
        assert!(g[3].unwrap() > 0.0);
    }

    #[test]
    fn nearest_rank_edges() {
        assert_eq!(nearest_rank(&[], 20.0), None);
        assert_eq!(nearest_rank(&[3.0, 1.0, 2.0], 0.0), None);
        assert_eq!(nearest_rank(&[3.0, 1.0, 2.0], 100.0), Some(3.0));
        assert_eq!(nearest_rank(&[3.0, 1.0, 2.0], 34.0), Some(2.0));
    }

    proptest::proptest! {
        #[test]
        fn percentile_matches_sort_oracle(seed in 0u64..10_000, n in 1usize..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cal = GripperCalibration::default();
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.1)).collect();
            let before = trajectory(&d, &cal);
            let after = postprocess_gripper(&before, &cal);
            // oracle: indices of the ceil(0.2 n) smallest distances
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
            let k = (0.2 * n as f64).ceil() as usize;
            let closed: std::collections::BTreeSet<usize> = order[..k].iter().copied().collect();
            for i in 0..n {
                let g0 = before.frames[i].action.unwrap().gripper;
                let g1 = after.frames[i].action.unwrap().gripper;
                proptest::prop_assert!(g1 <= g0);
                if closed.contains(&i) {
                    proptest::prop_assert_eq!(g1, 0.0);
                } else {
                    proptest::prop_assert_eq!(g1, g0);
                }
            }
        }

        #[test]
        fn extraction_is_equivariant(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cal = GripperCalibration::default();
            let kp = planar_hand();
            let e = Extrinsics::new(random_transform(&mut rng));
            let t = random_transform(&mut rng);
            let a0 = extract_action(&kp, &e, &cal).unwrap();
            // same hand seen from a camera frame moved by t
            let e1 = Extrinsics::new(e.camera_to_robot * t.inverse());
            let a1 = extract_action_toward(&kp.transformed(&t), &e1, &cal, &t.apply(&Vec3::zeros())).unwrap();
            proptest::prop_assert!((a0.position - a1.position).norm() < 1e-9);
            for k in 0..6 {
                proptest::prop_assert!((a0.orientation.0[k] - a1.orientation.0[k]).abs() < 1e-9);
            }
            proptest::prop_assert!((a0.gripper - a1.gripper).abs() < 1e-12);
            // position lies on the fingertip segment
            let (th, ix) = fingertip_pair(&kp);
            let p = target_position(&kp);
            proptest::prop_assert!(((p - th).norm() + (ix - p).norm() - (ix - th).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn extrinsics_cases() {
        let cal = GripperCalibration::default();
        let kp = planar_hand();
        let cam = extract_action(&kp, &Extrinsics::default(), &cal).unwrap();
        assert_abs_diff_eq!(cam.position, target_position(&kp), epsilon = 1e-15);
        assert_eq!(cam.orientation, encode_rot6d(&target_orientation(&kp).unwrap()));
        let shift = Vec3::new(0.2, -0.1, 0.4);
        let moved = extract_action(&kp, &Extrinsics::new(RigidTransform::from_translation(shift)), &cal).unwrap();
        assert_abs_diff_eq!(moved.position, cam.position + shift, epsilon = 1e-15);
        assert_eq!(moved.orientation, cam.orientation);
        moved.validate().unwrap();
    }

    #[test]
    fn record_round_trip() {
        let a = RobotAction {
            position: Vec3::new(0.1, 0.2, 0.3),
            orientation: Rotation6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            gripper: 0.4,
        };
        let rec = ActionRecord::new(1.5, Some(&a), true);
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(line, r#"{"t":1.5,"p":[0.1,0.2,0.3],"r6":[1.0,0.0,0.0,0.0,1.0,0.0],"g":0.4,"valid":true}"#);
        let back: ActionRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back.action(), Some(a));
        let empty = ActionRecord::new(2.0, None, false);
        assert_eq!(serde_json::to_string(&empty).unwrap(), r#"{"t":2.0,"p":null,"r6":null,"g":null,"valid":false}"#);
    }
}
