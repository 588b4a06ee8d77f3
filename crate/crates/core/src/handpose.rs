//! Hand keypoint and mesh containers, plus the hinge constraint applied to the
//! last joints of the thumb and index finger.
//!
//! Keypoints follow the 21-landmark right-hand layout: wrist, then four
//! joints per finger from thumb to pinky, each chain ordered proximal to
//! distal.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, RotationMatrix, Vec3};

pub const NUM_KEYPOINTS: usize = 21;
pub const NUM_MESH_VERTICES: usize = 778;
pub const MESH_FILE_BYTES: usize = NUM_MESH_VERTICES * 3 * 4;

pub const WRIST: usize = 0;
pub const THUMB: [usize; 4] = [1, 2, 3, 4];
pub const INDEX: [usize; 4] = [5, 6, 7, 8];
pub const THUMB_TIP: usize = 4;
pub const INDEX_TIP: usize = 8;

/// Allowed bone length range (m), exclusive.
pub const BONE_LENGTH_RANGE: (f64, f64) = (0.005, 0.12);

/// Parent→child pairs of the skeleton.
pub const BONES: [(usize, usize); 20] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 4),
    (0, 5),
    (5, 6),
    (6, 7),
    (7, 8),
    (0, 9),
    (9, 10),
    (10, 11),
    (11, 12),
    (0, 13),
    (13, 14),
    (14, 15),
    (15, 16),
    (0, 17),
    (17, 18),
    (18, 19),
    (19, 20),
];

/// Flexion plane is undefined when the two preceding bones are this close to
/// parallel.
const PARALLEL_BONES_EPS_RAD: f64 = 1e-4;
/// Out-of-plane offsets below this fraction of the bone length count as
/// already in plane.
const IN_PLANE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandKeypoints(pub [Vec3; NUM_KEYPOINTS]);

impl HandKeypoints {
    pub fn new(points: [Vec3; NUM_KEYPOINTS]) -> Result<Self> {
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::OutOfRange("non-finite keypoint".into()));
        }
        Ok(Self(points))
    }

    pub fn from_slice(points: &[Vec3]) -> Result<Self> {
        let arr: [Vec3; NUM_KEYPOINTS] = points.try_into().map_err(|_| {
            Error::DimensionMismatch(format!("expected 21 keypoints, got {}", points.len()))
        })?;
        Self::new(arr)
    }

    pub fn points(&self) -> &[Vec3; NUM_KEYPOINTS] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Vec3 {
        self.0[i]
    }

    pub fn transformed(&self, t: &RigidTransform) -> HandKeypoints {
        HandKeypoints(self.0.map(|p| t.apply(&p)))
    }

    /// Checks every skeleton bone against [`BONE_LENGTH_RANGE`].
    pub fn validate_bone_lengths(&self) -> Result<()> {
        let (lo, hi) = BONE_LENGTH_RANGE;
        for &(a, b) in &BONES {
            let len = (self.0[b] - self.0[a]).norm();
            if !(len > lo && len < hi) {
                return Err(Error::OutOfRange(format!(
                    "bone {a}->{b} has length {len:.4} m"
                )));
            }
        }
        Ok(())
    }

    pub fn thumb(&self) -> [Vec3; 4] {
        THUMB.map(|i| self.0[i])
    }

    pub fn index(&self) -> [Vec3; 4] {
        INDEX.map(|i| self.0[i])
    }

    /// JSON array of 21 `[x, y, z]` triples in meters.
    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: Vec<[f64; 3]> = serde_json::from_str(&text)
            .map_err(|e| Error::schema(path, "keypoints", e.to_string()))?;
        if raw.len() != NUM_KEYPOINTS {
            return Err(Error::schema(
                path,
                "keypoints",
                format!("expected 21 entries, found {}", raw.len()),
            ));
        }
        let pts: Vec<Vec3> = raw.into_iter().map(Vec3::from).collect();
        Self::from_slice(&pts).map_err(|e| Error::schema(path, "keypoints", e.to_string()))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let raw: Vec<[f64; 3]> = self.0.iter().map(|p| [p.x, p.y, p.z]).collect();
        let text = serde_json::to_string(&raw).expect("plain arrays serialize");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandMesh {
    vertices: Vec<Vec3>,
}

impl HandMesh {
    pub fn new(vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != NUM_MESH_VERTICES {
            return Err(Error::DimensionMismatch(format!(
                "expected {NUM_MESH_VERTICES} mesh vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::OutOfRange("non-finite mesh vertex".into()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    /// Every `stride`-th vertex so that at most `max_points` remain.
    pub fn downsampled(&self, max_points: usize) -> Vec<Vec3> {
        let stride = self.vertices.len().div_ceil(max_points.max(1)).max(1);
        self.vertices.iter().step_by(stride).copied().collect()
    }

    /// Little-endian f32, 778×3 row-major.
    pub fn load_bin(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != MESH_FILE_BYTES {
            return Err(Error::schema(
                path,
                "verts",
                format!("expected {MESH_FILE_BYTES} bytes, found {}", bytes.len()),
            ));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let verts = floats
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect();
        Self::new(verts).map_err(|e| Error::schema(path, "verts", e.to_string()))
    }

    pub fn save_bin(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(MESH_FILE_BYTES);
        for v in &self.vertices {
            for c in v.iter() {
                bytes.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Flexion range per hinged joint, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub thumb_ip: [f64; 2],
    pub index_pip: [f64; 2],
    pub index_dip: [f64; 2],
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            thumb_ip: [-5.0, 115.0],
            index_pip: [-5.0, 115.0],
            index_dip: [-5.0, 115.0],
        }
    }
}

impl JointLimits {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("thumb_ip", self.thumb_ip),
            ("index_pip", self.index_pip),
            ("index_dip", self.index_dip),
        ] {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "joint limit {name}: min {lo} must be below max {hi}"
                )));
            }
        }
        Ok(())
    }

    fn range_rad(&self, joint: HingeJoint) -> (f64, f64) {
        let [lo, hi] = match joint {
            HingeJoint::ThumbIp => self.thumb_ip,
            HingeJoint::IndexPip => self.index_pip,
            HingeJoint::IndexDip => self.index_dip,
        };
        (lo.to_radians(), hi.to_radians())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HingeJoint {
    ThumbIp,
    IndexPip,
    IndexDip,
}

impl HingeJoint {
    pub const ALL: [HingeJoint; 3] = [HingeJoint::ThumbIp, HingeJoint::IndexPip, HingeJoint::IndexDip];

    /// `[a, b, c, d]`: bones a→b and b→c span the plane, c→d is the distal
    /// bone.
    fn chain(self) -> [usize; 4] {
        match self {
            HingeJoint::ThumbIp => [1, 2, 3, 4],
            HingeJoint::IndexPip => [0, 5, 6, 7],
            HingeJoint::IndexDip => [5, 6, 7, 8],
        }
    }

    /// Keypoints carried along when the distal bone rotates.
    fn subtree(self) -> &'static [usize] {
        match self {
            HingeJoint::ThumbIp => &[4],
            HingeJoint::IndexPip => &[7, 8],
            HingeJoint::IndexDip => &[8],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedHand {
    pub keypoints: HandKeypoints,
    /// Joints whose flexion plane was undefined; left unmodified.
    pub degenerate: Vec<HingeJoint>,
}

/// Signed flexion of the distal bone of `joint`, in radians, or `None` if the
/// flexion plane is undefined.
pub fn flexion_angle(kp: &HandKeypoints, joint: HingeJoint) -> Option<f64> {
    let frame = HingeFrame::new(kp, joint)?;
    let v = kp.0[frame.d] - kp.0[frame.c];
    let w = v - frame.normal * v.dot(&frame.normal);
    Some(frame.angle_of(&w))
}

struct HingeFrame {
    c: usize,
    d: usize,
    /// Direction of the bone entering the joint.
    proximal: Vec3,
    normal: Vec3,
}

impl HingeFrame {
    fn new(kp: &HandKeypoints, joint: HingeJoint) -> Option<Self> {
        let [a, b, c, d] = joint.chain();
        let u1 = (kp.0[b] - kp.0[a]).try_normalize(0.0)?;
        let u2 = (kp.0[c] - kp.0[b]).try_normalize(0.0)?;
        let n = u1.cross(&u2);
        if n.norm() < PARALLEL_BONES_EPS_RAD.sin() {
            return None;
        }
        Some(Self {
            c,
            d,
            proximal: u2,
            normal: n.normalize(),
        })
    }

    fn angle_of(&self, in_plane: &Vec3) -> f64 {
        let s = self.normal.dot(&self.proximal.cross(in_plane));
        let c = self.proximal.dot(in_plane);
        s.atan2(c)
    }

    fn direction_at(&self, angle: f64) -> Vec3 {
        self.proximal * angle.cos() + self.normal.cross(&self.proximal) * angle.sin()
    }
}

/// Restricts the thumb IP and index PIP/DIP joints to single-axis flexion
/// within `limits`. Each distal bone is projected into the plane of the two
/// bones before it and its angle clamped; the keypoints beyond it follow
/// rigidly so all bone lengths are kept.
pub fn constrain_finger_joints(kp: &HandKeypoints, limits: &JointLimits) -> ConstrainedHand {
    let mut out = *kp;
    let mut degenerate = Vec::new();
    for joint in HingeJoint::ALL {
        let Some(frame) = HingeFrame::new(&out, joint) else {
            degenerate.push(joint);
            continue;
        };
        let c = out.0[frame.c];
        let v = out.0[frame.d] - c;
        let len = v.norm();
        let off_plane = v.dot(&frame.normal);
        let w = v - frame.normal * off_plane;
        if w.norm() <= IN_PLANE_REL_TOL * len {
            degenerate.push(joint);
            continue;
        }
        let angle = frame.angle_of(&w);
        let (lo, hi) = limits.range_rad(joint);
        let clamped = angle.clamp(lo, hi);
        if off_plane.abs() <= IN_PLANE_REL_TOL * len && clamped == angle {
            continue;
        }
        let new_dir = frame.direction_at(clamped);
        let rot = rotation_taking(&(v / len), &new_dir, &frame.normal);
        for &i in joint.subtree() {
            out.0[i] = c + rot * (out.0[i] - c);
        }
        out.0[frame.d] = c + new_dir * len;
    }
    ConstrainedHand {
        keypoints: out,
        degenerate,
    }
}

/// Shortest rotation taking unit `from` onto unit `to`; `fallback_axis` is
/// used when the two are opposite.
fn rotation_taking(from: &Vec3, to: &Vec3, fallback_axis: &Vec3) -> RotationMatrix {
    let axis = from.cross(to);
    let sin = axis.norm();
    let cos = from.dot(to);
    if sin <= f64::EPSILON {
        return if cos > 0.0 {
            RotationMatrix::identity()
        } else {
            RotationMatrix::new(fallback_axis * std::f64::consts::PI)
        };
    }
    RotationMatrix::new(axis / sin * sin.atan2(cos))
}

pub fn fingertip_pair(kp: &HandKeypoints) -> (Vec3, Vec3) {
    (kp.0[THUMB_TIP], kp.0[INDEX_TIP])
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::testutil::random_transform;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A hand lying in the z = 0.5 plane with gently flexed fingers.
    pub fn planar_hand() -> HandKeypoints {
        let mut pts = [Vec3::zeros(); NUM_KEYPOINTS];
        pts[0] = Vec3::new(0.0, 0.0, 0.5);
        // each finger: base offset, then three bones bending toward -x
        let bases = [
            (Vec3::new(0.03, 0.03, 0.5), 0.35),
            (Vec3::new(0.02, 0.09, 0.5), 0.0),
            (Vec3::new(0.0, 0.095, 0.5), -0.1),
            (Vec3::new(-0.02, 0.09, 0.5), -0.2),
            (Vec3::new(-0.035, 0.08, 0.5), -0.3),
        ];
        for (f, (base, heading)) in bases.iter().enumerate() {
            let first = 1 + 4 * f;
            pts[first] = *base;
            let mut dir: f64 = std::f64::consts::FRAC_PI_2 - heading;
            let mut p = *base;
            for k in 1..4 {
                dir += 0.3;
                p += Vec3::new(dir.cos(), dir.sin(), 0.0) * 0.03;
                pts[first + k] = p;
            }
        }
        HandKeypoints::new(pts).unwrap()
    }

    fn random_hand(rng: &mut impl Rng) -> HandKeypoints {
        let mut kp = planar_hand();
        for p in kp.0.iter_mut() {
            *p += Vec3::new(
                rng.gen_range(-0.008..0.008),
                rng.gen_range(-0.008..0.008),
                rng.gen_range(-0.008..0.008),
            );
        }
        kp
    }

    #[test]
    fn planar_hand_is_anatomical() {
        let kp = planar_hand();
        kp.validate_bone_lengths().unwrap();
        for j in HingeJoint::ALL {
            let a = flexion_angle(&kp, j).unwrap();
            assert!(a > 0.0 && a < 115f64.to_radians(), "{j:?} {a}");
        }
    }

    #[test]
    fn satisfied_hand_is_untouched() {
        let kp = planar_hand();
        let out = constrain_finger_joints(&kp, &JointLimits::default());
        assert!(out.degenerate.is_empty());
        for (a, b) in out.keypoints.0.iter().zip(kp.0.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn off_plane_tip_is_projected() {
        let kp = planar_hand();
        let mut moved = kp;
        moved.0[INDEX_TIP].z += 0.005;
        let len_before = (moved.0[8] - moved.0[7]).norm();
        let out = constrain_finger_joints(&moved, &JointLimits::default()).keypoints;
        // oracle: plane through keypoints 5, 6, 7 is z = 0.5
        assert_abs_diff_eq!(out.0[INDEX_TIP].z, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!((out.0[8] - out.0[7]).norm(), len_before, epsilon = 1e-9);
        for i in (0..NUM_KEYPOINTS).filter(|&i| i != INDEX_TIP) {
            assert_eq!(out.0[i], kp.0[i]);
        }
    }

    #[test]
    fn over_flexed_joint_is_clamped() {
        let kp = planar_hand();
        let mut bent = kp;
        // put the thumb tip at 130 degrees of flexion
        let frame = HingeFrame::new(&kp, HingeJoint::ThumbIp).unwrap();
        let len = (kp.0[4] - kp.0[3]).norm();
        bent.0[4] = kp.0[3] + frame.direction_at(130f64.to_radians()) * len;
        assert_abs_diff_eq!(
            flexion_angle(&bent, HingeJoint::ThumbIp).unwrap().to_degrees(),
            130.0,
            epsilon = 1e-9
        );
        let out = constrain_finger_joints(&bent, &JointLimits::default()).keypoints;
        assert_abs_diff_eq!(
            flexion_angle(&out, HingeJoint::ThumbIp).unwrap().to_degrees(),
            115.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn pip_rotation_carries_the_tip() {
        let kp = planar_hand();
        let mut bent = kp;
        bent.0[7].z += 0.01;
        bent.0[8].z += 0.02;
        let out = constrain_finger_joints(&bent, &JointLimits::default()).keypoints;
        for &(a, b) in &BONES {
            assert_abs_diff_eq!(
                (out.0[b] - out.0[a]).norm(),
                (bent.0[b] - bent.0[a]).norm(),
                epsilon = 1e-9
            );
        }
        assert_abs_diff_eq!(out.0[7].z, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.0[8].z, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn straight_finger_is_flagged_not_modified() {
        let mut kp = planar_hand();
        // make thumb bones 1->2 and 2->3 collinear
        let d = kp.0[2] - kp.0[1];
        kp.0[3] = kp.0[2] + d;
        kp.0[4] = kp.0[3] + Vec3::new(0.0, 0.0, 0.02);
        let out = constrain_finger_joints(&kp, &JointLimits::default());
        assert_eq!(out.degenerate, vec![HingeJoint::ThumbIp]);
        assert_eq!(out.keypoints.0[4], kp.0[4]);
    }

    #[test]
    fn fingertips() {
        let mut kp = planar_hand();
        kp.0[4] = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(fingertip_pair(&kp).0, Vec3::new(1.0, 2.0, 3.0));
        // mirror-symmetric tips about the palm plane z = 0.5
        kp.0[4] = Vec3::new(0.01, 0.12, 0.52);
        kp.0[8] = Vec3::new(0.01, 0.12, 0.48);
        let (t, i) = fingertip_pair(&kp);
        assert_abs_diff_eq!((t.z + i.z) / 2.0, 0.5, epsilon = 1e-15);
        assert_eq!((t.x, t.y), (i.x, i.y));
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let kp = planar_hand();
        let p = dir.path().join("kp.json");
        kp.save_json(&p).unwrap();
        assert_eq!(HandKeypoints::load_json(&p).unwrap(), kp);
        std::fs::write(&p, "[[0,0,0]]").unwrap();
        assert!(matches!(HandKeypoints::load_json(&p), Err(Error::Schema { .. })));

        let verts: Vec<Vec3> = (0..NUM_MESH_VERTICES).map(|i| Vec3::new(i as f64 * 0.25, 0.5, -1.0)).collect();
        let mesh = HandMesh::new(verts).unwrap();
        let p = dir.path().join("v.bin");
        mesh.save_bin(&p).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 9336);
        assert_eq!(HandMesh::load_bin(&p).unwrap(), mesh);
        std::fs::write(&p, [0u8; 12]).unwrap();
        assert!(matches!(HandMesh::load_bin(&p), Err(Error::Schema { .. })));
        assert_eq!(mesh.downsampled(2000).len(), 778);
        assert_eq!(mesh.downsampled(400).len(), 389);
    }

    proptest::proptest! {
        #[test]
        fn constraint_invariants(seed in 0u64..5_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let kp = random_hand(&mut rng);
            let limits = JointLimits { thumb_ip: [-5.0, 40.0], index_pip: [-5.0, 30.0], index_dip: [0.0, 25.0] };
            let once = constrain_finger_joints(&kp, &limits).keypoints;
            let twice = constrain_finger_joints(&once, &limits).keypoints;
            for (a, b) in once.0.iter().zip(twice.0.iter()) {
                proptest::prop_assert!((a - b).norm() < 1e-9);
            }
            for &(a, b) in &BONES {
                let before = (kp.0[b] - kp.0[a]).norm();
                let after = (once.0[b] - once.0[a]).norm();
                proptest::prop_assert!((before - after).abs() < 1e-9);
            }
            let t = random_transform(&mut rng);
            let moved_first = constrain_finger_joints(&kp.transformed(&t), &limits).keypoints;
            let moved_after = once.transformed(&t);
            for (a, b) in moved_first.0.iter().zip(moved_after.0.iter()) {
                proptest::prop_assert!((a - b).norm() < 1e-6);
            }
        }
    }
}
