//! Pinhole camera model and the image containers that travel with it.
//!
//! Depth is stored the way commodity RGBD sensors emit it: 16-bit unsigned
//! millimeters with 0 meaning "no reading". No lens distortion is modelled;
//! frames are assumed rectified.

use std::path::Path;

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, RotationMatrix, Vec3};

pub use image::RgbImage;

/// Depth sentinel for a missing reading.
pub const DEPTH_INVALID: u16 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad intrinsics {self:?}")))
        }
    }
}

/// Pose of the camera expressed in the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Extrinsics {
    pub camera_to_robot: RigidTransform,
}

impl Extrinsics {
    pub fn new(camera_to_robot: RigidTransform) -> Self {
        Self { camera_to_robot }
    }

    pub fn robot_to_camera(&self) -> RigidTransform {
        self.camera_to_robot.inverse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    data: Vec<u16>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![DEPTH_INVALID; (width * height) as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u16>) -> Result<Self> {
        if data.len() != (width * height) as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} depth values for {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, mm: u16) {
        self.data[(y * self.width + x) as usize] = mm;
    }

    /// Depth in meters, `None` for the missing-reading sentinel.
    pub fn meters(&self, x: u32, y: u32) -> Option<f64> {
        match self.get(x, y) {
            DEPTH_INVALID => None,
            mm => Some(mm as f64 / 1000.0),
        }
    }

    pub fn as_raw(&self) -> &[u16] {
        &self.data
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.into(),
            source,
        })?;
        let img = match img {
            image::DynamicImage::ImageLuma16(buf) => buf,
            other => {
                return Err(Error::schema(
                    path,
                    "depth",
                    format!("expected 16-bit single-channel PNG, got {:?}", other.color()),
                ))
            }
        };
        let (w, h) = img.dimensions();
        Self::from_raw(w, h, img.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width, self.height, self.data.clone())
                .expect("buffer size checked at construction");
        buf.save(path).map_err(|source| Error::Image {
            path: path.into(),
            source,
        })
    }
}

/// Binary per-pixel mask; `true` marks hand/arm pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    /// Nonzero pixels of an 8-bit single-channel PNG are set.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.into(),
            source,
        })?;
        let img = match img {
            image::DynamicImage::ImageLuma8(buf) => buf,
            other => {
                return Err(Error::schema(
                    path,
                    "mask",
                    format!("expected 8-bit single-channel PNG, got {:?}", other.color()),
                ))
            }
        };
        let (w, h) = img.dimensions();
        Ok(Self {
            width: w,
            height: h,
            data: img.into_raw().into_iter().map(|v| v != 0).collect(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width, self.height, raw).expect("size");
        buf.save(path).map_err(|source| Error::Image {
            path: path.into(),
            source,
        })
    }
}

pub fn load_rgb_png(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })?;
    match img {
        image::DynamicImage::ImageRgb8(buf) => Ok(buf),
        other => Err(Error::schema(
            path,
            "rgb",
            format!("expected 8-bit RGB PNG, got {:?}", other.color()),
        )),
    }
}

pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

/// Points in the camera frame, meters, all with `z > 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn deproject(u: f64, v: f64, depth_m: f64, k: &Intrinsics) -> Result<Vec3> {
    if !(depth_m > 0.0) {
        return Err(Error::InvalidDepth(depth_m));
    }
    Ok(Vec3::new(
        (u - k.cx) * depth_m / k.fx,
        (v - k.cy) * depth_m / k.fy,
        depth_m,
    ))
}

/// Returns `(u, v, z)`. No clipping to the image bounds.
pub fn project(p: &Vec3, k: &Intrinsics) -> Result<(f64, f64, f64)> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera(p.z));
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy, p.z))
}

/// One point per masked pixel with a valid reading, in row-major order.
pub fn masked_point_cloud(depth: &DepthImage, mask: &Mask, k: &Intrinsics) -> Result<PointCloud> {
    if depth.width() != mask.width() || depth.height() != mask.height() {
        return Err(Error::DimensionMismatch(format!(
            "depth {}x{} vs mask {}x{}",
            depth.width(),
            depth.height(),
            mask.width(),
            mask.height()
        )));
    }
    let mut points = Vec::new();
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            if !mask.get(x, y) {
                continue;
            }
            if let Some(z) = depth.meters(x, y) {
                points.push(deproject(x as f64, y as f64, z, k)?);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(PointCloud::new(points))
}

pub fn to_robot_frame(
    position: &Vec3,
    rotation: &RotationMatrix,
    e: &Extrinsics,
) -> (Vec3, RotationMatrix) {
    (
        e.camera_to_robot.apply(position),
        e.camera_to_robot.rotation * rotation,
    )
}
