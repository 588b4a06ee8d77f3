//! Rigid point-set registration: closed-form alignment of corresponded
//! points and trimmed point-to-point ICP.

mod kdtree;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, RigidTransform, RotationMatrix, Vec3, SINGULAR_FLOOR};

pub use kdtree::{Neighbor, SpatialIndex};

pub fn build_spatial_index(points: &[Vec3]) -> Result<SpatialIndex> {
    SpatialIndex::build(points).ok_or(Error::EmptyCloud)
}

/// Rotation and translation (no scale) minimising `Σ‖T·src_i − dst_i‖²`.
/// Reflections are corrected so the rotation always has determinant +1.
pub fn umeyama_align(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "alignment needs at least 3 pairs, got {}",
            src.len()
        )));
    }
    let mu_s = centroid(src);
    let mu_d = centroid(dst);
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let sc = s - mu_s;
        cov += (d - mu_d) * sc.transpose();
        scatter += sc * sc.transpose();
    }
    let mut eig = SymmetricEigen::new(scatter).eigenvalues;
    eig.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if eig[1].max(0.0).sqrt() <= SINGULAR_FLOOR {
        return Err(Error::DegenerateGeometry(
            "source points are rank deficient".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let (Some(mut u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::DegenerateGeometry("SVD did not converge".into()));
    };
    if (u * v_t).determinant() < 0.0 {
        let smallest = svd.singular_values.imin();
        u.column_mut(smallest).neg_mut();
    }
    let rotation = RotationMatrix::from_matrix_unchecked(u * v_t);
    Ok(RigidTransform::new(rotation, mu_d - rotation * mu_s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the trimmed RMS changes by less than this (m).
    pub convergence_eps: f64,
    /// Pairs farther apart than this (m) are rejected.
    pub trim_distance: f64,
    pub min_correspondences: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_eps: 1e-6,
            trim_distance: 0.02,
            min_correspondences: 50,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 || !(self.convergence_eps > 0.0) || !(self.trim_distance > 0.0) {
            return Err(Error::InvalidParameter(format!("bad ICP parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IcpStatus {
    Converged,
    MaxIterations,
    TooFewCorrespondences,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps source points onto the target.
    pub transform: RigidTransform,
    /// RMS distance of the inlier pairs at `transform`.
    pub rms_error: f64,
    pub iterations_used: usize,
    pub inlier_fraction: f64,
    pub status: IcpStatus,
    /// Trimmed RMS, `sqrt(mean(min(d², trim²)))` over all source points, one
    /// entry per evaluated transform. Non-increasing.
    pub history: Vec<f64>,
}

impl IcpResult {
    pub fn succeeded(&self) -> bool {
        matches!(self.status, IcpStatus::Converged | IcpStatus::MaxIterations)
    }
}

struct Evaluation {
    inlier_src: Vec<Vec3>,
    inlier_dst: Vec<Vec3>,
    inlier_rms: f64,
    trimmed_rms: f64,
}

fn evaluate(
    source: &[Vec3],
    index: &SpatialIndex,
    transform: &RigidTransform,
    trim: f64,
) -> Evaluation {
    let matches: Vec<Neighbor> = source
        .par_iter()
        .map(|p| index.nearest(&transform.apply(p)))
        .collect();
    let mut inlier_src = Vec::new();
    let mut inlier_dst = Vec::new();
    let mut inlier_sq = 0.0;
    let mut trimmed_sq = 0.0;
    for (s, m) in source.iter().zip(&matches) {
        if m.distance <= trim {
            inlier_src.push(*s);
            inlier_dst.push(m.point);
            inlier_sq += m.distance * m.distance;
            trimmed_sq += m.distance * m.distance;
        } else {
            trimmed_sq += trim * trim;
        }
    }
    let inlier_rms = if inlier_src.is_empty() {
        f64::INFINITY
    } else {
        (inlier_sq / inlier_src.len() as f64).sqrt()
    };
    Evaluation {
        inlier_src,
        inlier_dst,
        inlier_rms,
        trimmed_rms: (trimmed_sq / source.len() as f64).sqrt(),
    }
}

/// Trimmed point-to-point ICP. Builds a spatial index over `target`.
pub fn icp(
    source: &[Vec3],
    target: &[Vec3],
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    let index = build_spatial_index(target)?;
    icp_with_index(source, &index, init, params)
}

/// ICP against a prebuilt target index.
///
/// Every iteration pairs each transformed source point with its nearest
/// target point, drops pairs beyond `trim_distance`, and re-solves the
/// alignment on the survivors. Failing iterations do not abort: the best
/// transform so far is returned with a status flag.
pub fn icp_with_index(
    source: &[Vec3],
    target: &SpatialIndex,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    params.validate()?;
    let required = params.min_correspondences.max(3);
    if source.len() < required {
        return Err(Error::TooFewCorrespondences {
            found: source.len(),
            required,
        });
    }

    let mut transform = *init;
    let mut history: Vec<f64> = Vec::new();
    let mut best: Option<IcpResult> = None;

    for iteration in 1..=params.max_iterations {
        let eval = evaluate(source, target, &transform, params.trim_distance);
        let n_inliers = eval.inlier_src.len();
        if n_inliers < required {
            return Ok(failed(best, transform, history, IcpStatus::TooFewCorrespondences, iteration));
        }
        let prev = history.last().copied().unwrap_or(f64::INFINITY);
        history.push(eval.trimmed_rms);
        let current = IcpResult {
            transform,
            rms_error: eval.inlier_rms,
            iterations_used: iteration,
            inlier_fraction: n_inliers as f64 / source.len() as f64,
            status: IcpStatus::Converged,
            history: history.clone(),
        };
        if eval.trimmed_rms < params.convergence_eps || prev - eval.trimmed_rms < params.convergence_eps {
            return Ok(current);
        }
        if iteration == params.max_iterations {
            return Ok(IcpResult {
                status: IcpStatus::MaxIterations,
                ..current
            });
        }
        best = Some(current);
        match umeyama_align(&eval.inlier_src, &eval.inlier_dst) {
            Ok(t) => transform = t,
            Err(_) => {
                return Ok(failed(best, transform, history, IcpStatus::Degenerate, iteration));
            }
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn failed(
    best: Option<IcpResult>,
    transform: RigidTransform,
    history: Vec<f64>,
    status: IcpStatus,
    iteration: usize,
) -> IcpResult {
    match best {
        Some(b) => IcpResult {
            status,
            iterations_used: iteration,
            ..b
        },
        None => IcpResult {
            transform,
            rms_error: f64::INFINITY,
            iterations_used: iteration,
            inlier_fraction: 0.0,
            status,
            history,
        },
    }
}
