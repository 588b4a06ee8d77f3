//! Robot rendering and image edits.

mod inpaint;

use image::Rgb;
use serde::{Deserialize, Serialize};

use crate::camera::{DepthImage, Extrinsics, Intrinsics, Mask, RgbImage};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::mesh::TriangleMesh;
use crate::robot::KinematicChain;

pub use inpaint::inpaint_fmm;

/// Triangles with a vertex closer than this (m) are not drawn.
pub const NEAR_PLANE: f64 = 0.01;
const AMBIENT: f64 = 0.3;
const DIFFUSE: f64 = 0.7;

/// Direction toward the light, camera frame: from above and behind the
/// camera.
pub fn light_direction() -> Vec3 {
    Vec3::new(0.3, -0.5, -1.0).normalize()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditMode {
    #[default]
    InpaintFmm,
    MaskOnly,
    NoEdit,
}

impl std::str::FromStr for EditMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inpaint_fmm" => Ok(Self::InpaintFmm),
            "mask_only" => Ok(Self::MaskOnly),
            "no_edit" => Ok(Self::NoEdit),
            _ => Err(Error::InvalidParameter(format!(
                "unknown edit mode {s:?} (inpaint_fmm, mask_only, no_edit)"
            ))),
        }
    }
}

/// Rendered color, depth (m, +inf where empty) and coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderLayer {
    pub rgb: RgbImage,
    depth: Vec<f64>,
}

impl RenderLayer {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            rgb: RgbImage::new(width, height),
            depth: vec![f64::INFINITY; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.rgb.width()
    }

    pub fn height(&self) -> u32 {
        self.rgb.height()
    }

    pub fn depth(&self, x: u32, y: u32) -> f64 {
        self.depth[(y * self.width() + x) as usize]
    }

    pub fn covered(&self, x: u32, y: u32) -> bool {
        self.depth(x, y).is_finite()
    }

    pub fn coverage(&self) -> Mask {
        Mask::from_fn(self.width(), self.height(), |x, y| self.covered(x, y))
    }

    pub fn covered_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }
}

fn shade(color: [u8; 3], normal: &Vec3) -> Rgb<u8> {
    let intensity = AMBIENT + DIFFUSE * normal.dot(&light_direction()).abs();
    Rgb(color.map(|c| (c as f64 * intensity).round().clamp(0.0, 255.0) as u8))
}

/// Z-buffer rasterization of camera-frame meshes. A pixel (x, y) samples the
/// image point (x, y) and is covered when it lies inside or on the edge of a
/// projected triangle. Depth is interpolated perspective-correctly; the
/// nearer surface wins and earlier triangles win exact ties.
pub fn rasterize(meshes: &[(TriangleMesh, [u8; 3])], k: &Intrinsics) -> RenderLayer {
    let mut layer = RenderLayer::empty(k.width, k.height);
    let (w, h) = (k.width as i64, k.height as i64);
    for (mesh, color) in meshes {
        for tri in &mesh.triangles {
            let p = tri.map(|i| mesh.vertices[i]);
            if p.iter().any(|v| !(v.z >= NEAR_PLANE)) {
                continue;
            }
            let Some(normal) = (p[1] - p[0]).cross(&(p[2] - p[0])).try_normalize(0.0) else {
                continue;
            };
            let s = p.map(|v| (k.fx * v.x / v.z + k.cx, k.fy * v.y / v.z + k.cy));
            let area = edge(s[0], s[1], s[2]);
            if area == 0.0 || !area.is_finite() {
                continue;
            }
            let fill = shade(*color, &normal);
            let x0 = s.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).ceil().max(0.0) as i64;
            let x1 = s.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max).floor().min((w - 1) as f64) as i64;
            let y0 = s.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).ceil().max(0.0) as i64;
            let y1 = s.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max).floor().min((h - 1) as f64) as i64;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let q = (x as f64, y as f64);
                    let b0 = edge(s[1], s[2], q) / area;
                    let b1 = edge(s[2], s[0], q) / area;
                    let b2 = edge(s[0], s[1], q) / area;
                    if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                        continue;
                    }
                    let z = 1.0 / (b0 / p[0].z + b1 / p[1].z + b2 / p[2].z);
                    let idx = (y * w + x) as usize;
                    if z < layer.depth[idx] {
                        layer.depth[idx] = z;
                        layer.rgb.put_pixel(x as u32, y as u32, fill);
                    }
                }
            }
        }
    }
    layer
}

fn edge(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Renders the chain at joint angles `q` and normalized gripper width `g`.
pub fn render_robot(
    chain: &KinematicChain,
    q: &[f64],
    g: f64,
    k: &Intrinsics,
    e: &Extrinsics,
) -> Result<RenderLayer> {
    k.validate()?;
    let to_camera: RigidTransform = e.robot_to_camera();
    let meshes: Vec<_> = chain
        .posed_visuals(q, g)?
        .into_iter()
        .map(|(mesh, color)| (mesh.transformed(&to_camera), color))
        .collect();
    Ok(rasterize(&meshes, k))
}

fn check_dims(what: &str, a: (u32, u32), b: (u32, u32)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Draws covered robot pixels in front of the scene. A robot pixel is kept
/// when its depth is below the scene depth plus `eps`, or when the scene
/// depth is missing.
pub fn composite(
    scene_rgb: &RgbImage,
    scene_depth: &DepthImage,
    layer: &RenderLayer,
    eps: f64,
) -> Result<RgbImage> {
    let dims = scene_rgb.dimensions();
    check_dims("scene depth", dims, (scene_depth.width(), scene_depth.height()))?;
    check_dims("render layer", dims, (layer.width(), layer.height()))?;
    let mut out = scene_rgb.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let robot = layer.depth(x, y);
        if !robot.is_finite() {
            continue;
        }
        let visible = match scene_depth.meters(x, y) {
            Some(scene) => robot < scene + eps,
            None => true,
        };
        if visible {
            *px = *layer.rgb.get_pixel(x, y);
        }
    }
    Ok(out)
}

/// Sets masked pixels to black.
pub fn mask_out(rgb: &RgbImage, mask: &Mask) -> Result<RgbImage> {
    check_dims("mask", rgb.dimensions(), (mask.width(), mask.height()))?;
    let mut out = rgb.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        if mask.get(x, y) {
            *px = Rgb([0, 0, 0]);
        }
    }
    Ok(out)
}

/// Dilation by a (2k+1)² square, computed separably.
pub fn dilate_mask(mask: &Mask, k: u32) -> Mask {
    if k == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let k = k as i64;
    let rows = Mask::from_fn(mask.width(), mask.height(), |x, y| {
        let x = x as i64;
        ((x - k).max(0)..=(x + k).min(w - 1)).any(|xx| mask.get(xx as u32, y))
    });
    Mask::from_fn(mask.width(), mask.height(), |x, y| {
        let y = y as i64;
        ((y - k).max(0)..=(y + k).min(h - 1)).any(|yy| rows.get(x, yy as u32))
    })
}
