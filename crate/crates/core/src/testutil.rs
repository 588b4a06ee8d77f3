use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{RigidTransform, RotationMatrix, Vec3};

/// Uniformly distributed rotation (normalized Gaussian quaternion).
pub fn random_rotation(rng: &mut impl Rng) -> RotationMatrix {
    let n = Normal::new(0.0, 1.0).unwrap();
    let q = Quaternion::new(n.sample(rng), n.sample(rng), n.sample(rng), n.sample(rng));
    UnitQuaternion::from_quaternion(q).to_rotation_matrix()
}

pub fn random_transform(rng: &mut impl Rng) -> RigidTransform {
    RigidTransform::new(random_rotation(rng), random_vec(rng, 2.0))
}

pub fn random_vec(rng: &mut impl Rng, half_range: f64) -> Vec3 {
    Vec3::new(
        rng.gen_range(-half_range..half_range),
        rng.gen_range(-half_range..half_range),
        rng.gen_range(-half_range..half_range),
    )
}
