//! 3D math shared by every stage: rigid transforms, the six-number rotation
//! codec used for action orientations, and least-squares plane/line fits.

use std::ops::Mul;

use nalgebra::{DMatrix, Matrix3, Matrix4, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type RotationMatrix = Rotation3<f64>;

/// Minimum angle between the two stored columns of a [`Rotation6D`].
pub const PARALLEL_EPS_RAD: f64 = 1e-6;
/// Singular-value floor below which a centered point set loses a dimension.
pub const SINGULAR_FLOOR: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-6;

/// First two columns of a rotation matrix, stored as `(a1, a2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rotation6D(pub [f64; 6]);

impl Rotation6D {
    pub fn first(&self) -> Vec3 {
        Vec3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn second(&self) -> Vec3 {
        Vec3::new(self.0[3], self.0[4], self.0[5])
    }
}

pub fn encode_rot6d(r: &RotationMatrix) -> Rotation6D {
    let m = r.matrix();
    Rotation6D([
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
    ])
}

/// Gram–Schmidt decoding of the two stored columns.
pub fn decode_rot6d(r: &Rotation6D) -> Result<RotationMatrix> {
    let a1 = r.first();
    let a2 = r.second();
    let n1 = a1.norm();
    let n2 = a2.norm();
    if !(n1.is_finite() && n2.is_finite()) {
        return Err(Error::DegenerateRotation6D("non-finite column"));
    }
    if n1 <= f64::MIN_POSITIVE || n2 <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateRotation6D("zero-length column"));
    }
    let sin_angle = a1.cross(&a2).norm() / (n1 * n2);
    if sin_angle < PARALLEL_EPS_RAD.sin() {
        return Err(Error::DegenerateRotation6D("columns are parallel"));
    }
    let c1 = a1 / n1;
    let c2 = (a2 - c1 * a2.dot(&c1)).normalize();
    let c3 = c1.cross(&c2);
    Ok(Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[
        c1, c2, c3,
    ])))
}

/// Checks that `m` is a proper rotation and wraps it.
pub fn rotation_from_matrix(m: Matrix3<f64>) -> Result<RotationMatrix> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateGeometry("rotation has non-finite entries".into()));
    }
    let err = (m.transpose() * m - Matrix3::identity()).amax();
    if err > ORTHONORMAL_TOL {
        return Err(Error::DegenerateGeometry(format!(
            "rotation is not orthonormal (max deviation {err:.3e})"
        )));
    }
    let det = m.determinant();
    if (det - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::DegenerateGeometry(format!(
            "rotation determinant is {det}"
        )));
    }
    Ok(Rotation3::from_matrix_unchecked(m))
}

/// Angle of the relative rotation `a⁻¹ b`, in radians.
pub fn rotation_distance(a: &RotationMatrix, b: &RotationMatrix) -> f64 {
    rotation_log(&(a.inverse() * b)).norm()
}

/// Axis times angle, accurate for small angles where `acos` of the trace
/// loses half the digits.
pub fn rotation_log(r: &RotationMatrix) -> Vec3 {
    let m = r.matrix();
    let v = 0.5 * Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let s = v.norm();
    let c = (m.trace() - 1.0) / 2.0;
    if c < 0.0 && s < 1e-6 {
        return r.scaled_axis();
    }
    if s == 0.0 {
        return Vec3::zeros();
    }
    v * (s.atan2(c) / s)
}

/// Element of SE(3): `p ↦ rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: RotationMatrix,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: RotationMatrix, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(RotationMatrix::identity(), Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(RotationMatrix::identity(), t)
    }

    pub fn from_rotation(r: RotationMatrix) -> Self {
        Self::new(r, Vec3::zeros())
    }

    /// Pose of a camera at `eye` looking at `target` (optical axis z, image
    /// y pointing down, away from `up`).
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(SINGULAR_FLOOR)
            .ok_or_else(|| Error::DegenerateGeometry("eye equals target".into()))?;
        let x = z
            .cross(&up)
            .try_normalize(SINGULAR_FLOOR)
            .ok_or_else(|| Error::DegenerateGeometry("view direction parallel to up".into()))?;
        let y = z.cross(&x);
        Ok(Self::new(
            RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])),
            eye,
        ))
    }

    /// Fixed-axis roll/pitch/yaw, `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self::new(
            Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]),
            Vec3::from(xyz),
        )
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r_inv = self.rotation.inverse();
        RigidTransform {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Rotates a direction; translation does not apply.
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::DegenerateGeometry(format!(
                "homogeneous bottom row is {bottom:?}"
            )));
        }
        let rotation = rotation_from_matrix(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        let translation: Vec3 = m.fixed_view::<3, 1>(0, 3).into_owned();
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateGeometry("non-finite translation".into()));
        }
        Ok(Self::new(rotation, translation))
    }

    /// Row-major 4×4, as stored in metadata files.
    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let m = self.to_homogeneous();
        std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
    }

    pub fn from_rows(rows: &[[f64; 4]; 4]) -> Result<Self> {
        Self::from_homogeneous(&Matrix4::from_fn(|r, c| rows[r][c]))
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

pub fn centroid(points: &[Vec3]) -> Vec3 {
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    sum / points.len() as f64
}

/// Singular values (descending) and matching right singular vectors of the
/// centered `n × 3` point matrix.
fn centered_svd(points: &[Vec3], c: &Vec3) -> Result<Vec<(f64, Vec3)>> {
    let m = DMatrix::from_fn(points.len(), 3, |i, j| points[i][j] - c[j]);
    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateGeometry("SVD did not converge".into()))?;
    let mut pairs: Vec<(f64, Vec3)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, Vec3::new(v_t[(i, 0)], v_t[(i, 1)], v_t[(i, 2)])))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(pairs)
}

/// Deterministic sign for a direction when the geometric convention is
/// undecided: the largest-magnitude component is made positive.
fn canonical_sign(v: Vec3) -> Vec3 {
    if v[v.iamax()] < 0.0 {
        -v
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub normal: Vec3,
    pub centroid: Vec3,
    pub rms: f64,
}

/// Least-squares plane, normal oriented toward the origin of the frame the
/// points are expressed in.
pub fn fit_plane(points: &[Vec3]) -> Result<PlaneFit> {
    fit_plane_toward(points, &Vec3::zeros())
}

/// Least-squares plane with the normal oriented so that
/// `normal · (viewpoint − centroid) > 0`.
pub fn fit_plane_toward(points: &[Vec3], viewpoint: &Vec3) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let c = centroid(points);
    let svd = centered_svd(points, &c)?;
    if svd.len() < 3 || svd[1].0 <= SINGULAR_FLOOR {
        return Err(Error::DegenerateGeometry("points are collinear".into()));
    }
    let mut normal = svd[2].1.normalize();
    let side = normal.dot(&(viewpoint - c));
    if side < 0.0 {
        normal = -normal;
    } else if side == 0.0 {
        normal = canonical_sign(normal);
    }
    let rms = (points
        .iter()
        .map(|p| (p - c).dot(&normal).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok(PlaneFit {
        normal,
        centroid: c,
        rms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub direction: Vec3,
    pub centroid: Vec3,
}

/// Principal direction of the points, oriented from the first listed point
/// toward the last.
pub fn fit_line(points: &[Vec3]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "line fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    let c = centroid(points);
    let svd = centered_svd(points, &c)?;
    if svd[0].0 <= SINGULAR_FLOOR {
        return Err(Error::DegenerateGeometry("all points coincide".into()));
    }
    let mut direction = svd[0].1.normalize();
    let span = points[points.len() - 1] - points[0];
    let along = direction.dot(&span);
    if along < 0.0 {
        direction = -direction;
    } else if along == 0.0 {
        direction = canonical_sign(direction);
    }
    Ok(LineFit {
        direction,
        centroid: c,
    })
}
