use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{Extrinsics, Intrinsics};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// `meta.json` of an input demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoMeta {
    pub intrinsics: Intrinsics,
    /// Camera pose in the robot base frame, 4×4 row-major.
    pub extrinsics: [[f64; 4]; 4],
    pub timestamps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRef {
    pub index: usize,
    pub timestamp: f64,
    pub rgb: PathBuf,
    pub depth: PathBuf,
    pub mask: PathBuf,
    pub keypoints: PathBuf,
    pub verts: PathBuf,
    /// Arm-removed RGB from an external editor, when present.
    pub inpainted: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoRecord {
    pub id: String,
    pub root: PathBuf,
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
    pub frames: Vec<FrameRef>,
}

pub fn frame_file(dir: &Path, index: usize, ext: &str) -> PathBuf {
    dir.join(format!("{index:06}.{ext}"))
}

pub fn demo_dir_name(id: &str) -> String {
    format!("demo_{id}")
}

impl DemoRecord {
    /// Indexes `root/demo_<id>` and checks that every frame asset exists.
    pub fn load(input_root: &Path, id: &str) -> Result<Self> {
        let root = input_root.join(demo_dir_name(id));
        let meta_path = root.join("meta.json");
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DemoMeta = serde_json::from_str(&text)
            .map_err(|e| Error::schema(&meta_path, "meta", e.to_string()))?;
        meta.intrinsics
            .validate()
            .map_err(|e| Error::schema(&meta_path, "intrinsics", e.to_string()))?;
        let camera_to_robot = RigidTransform::from_rows(&meta.extrinsics)
            .map_err(|e| Error::schema(&meta_path, "extrinsics", e.to_string()))?;
        if meta.timestamps.is_empty() {
            return Err(Error::schema(&meta_path, "timestamps", "demo has no frames"));
        }
        for (i, w) in meta.timestamps.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::schema(
                    &meta_path,
                    "timestamps",
                    format!("not strictly increasing at frame {}", i + 1),
                ));
            }
        }
        let inpainted_dir = root.join("inpainted");
        let has_inpainted = inpainted_dir.is_dir();
        let mut frames = Vec::with_capacity(meta.timestamps.len());
        for (index, &timestamp) in meta.timestamps.iter().enumerate() {
            let frame = FrameRef {
                index,
                timestamp,
                rgb: frame_file(&root.join("rgb"), index, "png"),
                depth: frame_file(&root.join("depth"), index, "png"),
                mask: frame_file(&root.join("mask"), index, "png"),
                keypoints: frame_file(&root.join("keypoints"), index, "json"),
                verts: frame_file(&root.join("verts"), index, "bin"),
                inpainted: has_inpainted.then(|| frame_file(&inpainted_dir, index, "png")),
            };
            for p in [&frame.rgb, &frame.depth, &frame.mask, &frame.keypoints, &frame.verts]
                .into_iter()
                .chain(frame.inpainted.as_ref())
            {
                if !p.is_file() {
                    return Err(Error::schema(p, "frame", format!("missing asset for frame {index}")));
                }
            }
            frames.push(frame);
        }
        Ok(Self {
            id: id.to_string(),
            root,
            intrinsics: meta.intrinsics,
            extrinsics: Extrinsics::new(camera_to_robot),
            frames,
        })
    }

    /// Ids of every `demo_<id>` directory under `input_root`, sorted.
    pub fn discover(input_root: &Path) -> Result<Vec<String>> {
        let entries = std::fs::read_dir(input_root).map_err(|e| Error::io(input_root, e))?;
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(input_root, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_prefix("demo_") {
                if entry.path().join("meta.json").is_file() {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
