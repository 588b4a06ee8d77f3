//! On-disk dataset of edited samples.
//!
//! ```text
//! out/manifest.json
//! out/config.toml                      settings the dataset was produced with
//! out/demo_<id>_v<k>/meta.json         variant extrinsics and base shift
//! out/demo_<id>_v<k>/actions.jsonl     one action record per source frame
//! out/demo_<id>_v<k>/joints.jsonl      rendered joint configuration per frame
//! out/demo_<id>_v<k>/frames/%06d.png   valid frames only
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::demo::frame_file;
use super::process::{EditedSample, Provenance, Variant};
use crate::actions::ActionRecord;
use crate::camera::{load_rgb_png, save_rgb_png, Extrinsics, Intrinsics};
use crate::compositor::EditMode;
use crate::error::{Error, Result};
use crate::geometry::{rotation_log, RigidTransform};
use crate::robot::KinematicChain;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotInfo {
    pub model_id: String,
    pub chain_path: Option<PathBuf>,
    pub dof: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IkTolerance {
    pub pos_tol: f64,
    pub rot_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDemo {
    /// Directory name, `demo_<id>_v<k>`.
    pub name: String,
    pub source_demo: String,
    pub variant: usize,
    pub base_shift: f64,
    pub frame_count: usize,
    pub valid_count: usize,
    pub config_hash: String,
    pub intrinsics: Intrinsics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub robot: RobotInfo,
    pub ik: IkTolerance,
    pub edit_mode: EditMode,
    /// Whether frames were rendered (false for action-only runs).
    pub images: bool,
    pub config_hash: String,
    pub demos: Vec<ManifestDemo>,
}

/// `meta.json` of one output variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantMeta {
    pub source_demo: String,
    pub variant: usize,
    pub base_shift: f64,
    /// Camera pose in the shifted base frame, 4×4 row-major.
    pub extrinsics: [[f64; 4]; 4],
    pub intrinsics: Intrinsics,
    pub edit_mode: EditMode,
    pub frame_count: usize,
    pub valid_count: usize,
}

/// One line of `joints.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointRecord {
    pub frame: usize,
    pub q: Option<Vec<f64>>,
    pub note: Option<String>,
}

pub fn variant_dir_name(source_demo: &str, variant: usize) -> String {
    format!("demo_{source_demo}_v{variant}")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path, "json", e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn is_variant_dir(name: &str) -> bool {
    name.strip_prefix("demo_")
        .and_then(|rest| rest.rsplit_once("_v"))
        .is_some_and(|(_, k)| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()))
}

pub struct DatasetWriter {
    root: PathBuf,
    robot: RobotInfo,
    ik: IkTolerance,
    edit_mode: EditMode,
    images: bool,
    config_hash: String,
}

impl DatasetWriter {
    /// Prepares `root`: removes the manifest and variant directories of any
    /// previous run and records the config.
    pub fn create(root: &Path, cfg: &PipelineConfig, robot: RobotInfo, images: bool) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            if entry.path().is_dir() && is_variant_dir(&entry.file_name().to_string_lossy()) {
                std::fs::remove_dir_all(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            }
        }
        let manifest = root.join("manifest.json");
        if manifest.exists() {
            std::fs::remove_file(&manifest).map_err(|e| Error::io(&manifest, e))?;
        }
        let mut content = cfg.clone();
        content.output = PathBuf::new();
        let config_path = root.join("config.toml");
        std::fs::write(&config_path, content.to_toml()).map_err(|e| Error::io(&config_path, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            robot,
            ik: IkTolerance {
                pos_tol: cfg.ik.pos_tol,
                rot_tol: cfg.ik.rot_tol,
            },
            edit_mode: cfg.edit_mode,
            images,
            config_hash: cfg.content_hash(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn demo(
        &self,
        source_demo: &str,
        intrinsics: &Intrinsics,
        extrinsics: &Extrinsics,
        variants: &[Variant],
    ) -> Result<DemoWriter> {
        let variants = variants
            .iter()
            .map(|v| {
                let name = variant_dir_name(source_demo, v.index);
                let dir = self.root.join(&name);
                if dir.exists() {
                    std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                }
                std::fs::create_dir_all(dir.join("frames")).map_err(|e| Error::io(&dir, e))?;
                let open = |file: &str| -> Result<BufWriter<File>> {
                    let path = dir.join(file);
                    Ok(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
                };
                Ok(VariantWriter {
                    actions: open("actions.jsonl")?,
                    joints: open("joints.jsonl")?,
                    meta: VariantMeta {
                        source_demo: source_demo.to_string(),
                        variant: v.index,
                        base_shift: v.base_shift,
                        extrinsics: v.extrinsics(extrinsics).camera_to_robot.to_rows(),
                        intrinsics: *intrinsics,
                        edit_mode: self.edit_mode,
                        frame_count: 0,
                        valid_count: 0,
                    },
                    name,
                    dir,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DemoWriter {
            variants,
            config_hash: self.config_hash.clone(),
        })
    }

    /// Writes the manifest listing `demos` sorted by name.
    pub fn finish(self, mut demos: Vec<ManifestDemo>) -> Result<Manifest> {
        demos.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            robot: self.robot,
            ik: self.ik,
            edit_mode: self.edit_mode,
            images: self.images,
            config_hash: self.config_hash,
            demos,
        };
        write_json(&self.root.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

struct VariantWriter {
    name: String,
    dir: PathBuf,
    meta: VariantMeta,
    actions: BufWriter<File>,
    joints: BufWriter<File>,
}

/// Writes the variants of one source demo. Samples must arrive in frame
/// order within each variant.
pub struct DemoWriter {
    variants: Vec<VariantWriter>,
    config_hash: String,
}

impl DemoWriter {
    pub fn push(&mut self, sample: &EditedSample) -> Result<()> {
        let p = &sample.provenance;
        let w = self
            .variants
            .iter_mut()
            .find(|w| w.meta.variant == p.variant)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant {}", p.variant)))?;
        if p.frame_index != w.meta.frame_count {
            return Err(Error::InvalidParameter(format!(
                "{}: expected frame {}, got {}",
                w.name, w.meta.frame_count, p.frame_index
            )));
        }
        let actions_path = w.dir.join("actions.jsonl");
        let record = ActionRecord::new(sample.timestamp, sample.action.as_ref(), sample.valid);
        let line = serde_json::to_string(&record).expect("plain data serializes");
        writeln!(w.actions, "{line}").map_err(|e| Error::io(&actions_path, e))?;
        let joints_path = w.dir.join("joints.jsonl");
        let joints = JointRecord {
            frame: p.frame_index,
            q: sample.joints.clone(),
            note: sample.note.clone(),
        };
        let line = serde_json::to_string(&joints).expect("plain data serializes");
        writeln!(w.joints, "{line}").map_err(|e| Error::io(&joints_path, e))?;
        if let Some(img) = &sample.image {
            save_rgb_png(img, &frame_file(&w.dir.join("frames"), p.frame_index, "png"))?;
        }
        w.meta.frame_count += 1;
        w.meta.valid_count += usize::from(sample.valid);
        Ok(())
    }

    pub fn finish(self) -> Result<Vec<ManifestDemo>> {
        self.variants
            .into_iter()
            .map(|mut w| {
                for (file, f) in [("actions.jsonl", &mut w.actions), ("joints.jsonl", &mut w.joints)] {
                    f.flush().map_err(|e| Error::io(w.dir.join(file), e))?;
                }
                write_json(&w.dir.join("meta.json"), &w.meta)?;
                Ok(ManifestDemo {
                    name: w.name,
                    source_demo: w.meta.source_demo,
                    variant: w.meta.variant,
                    base_shift: w.meta.base_shift,
                    frame_count: w.meta.frame_count,
                    valid_count: w.meta.valid_count,
                    config_hash: self.config_hash.clone(),
                    intrinsics: w.meta.intrinsics,
                })
            })
            .collect()
    }

    /// Deletes everything written so far (used when the demo fails).
    pub fn discard(self) -> Result<()> {
        for w in self.variants {
            drop(w.actions);
            drop(w.joints);
            std::fs::remove_dir_all(&w.dir).map_err(|e| Error::io(&w.dir, e))?;
        }
        Ok(())
    }
}

/// Writes already-collected samples as a complete dataset. Samples are
/// grouped by source demo; each source demo needs its intrinsics and
/// original extrinsics in `cameras`.
pub fn write_dataset(
    root: &Path,
    cfg: &PipelineConfig,
    robot: RobotInfo,
    samples: &[EditedSample],
    cameras: &BTreeMap<String, (Intrinsics, Extrinsics)>,
) -> Result<Manifest> {
    let images = samples.iter().any(|s| s.image.is_some());
    let writer = DatasetWriter::create(root, cfg, robot, images)?;
    let mut by_demo: BTreeMap<&str, Vec<&EditedSample>> = BTreeMap::new();
    for s in samples {
        by_demo.entry(&s.provenance.source_demo).or_default().push(s);
    }
    let mut entries = Vec::new();
    for (demo, group) in by_demo {
        let (k, e) = cameras
            .get(demo)
            .ok_or_else(|| Error::InvalidParameter(format!("no camera for demo {demo}")))?;
        let mut variants: Vec<Variant> = Vec::new();
        for s in &group {
            if !variants.iter().any(|v| v.index == s.provenance.variant) {
                variants.push(Variant {
                    index: s.provenance.variant,
                    base_shift: s.provenance.base_shift,
                });
            }
        }
        variants.sort_by_key(|v| v.index);
        let mut dw = writer.demo(demo, k, e, &variants)?;
        for s in group {
            dw.push(s)?;
        }
        entries.extend(dw.finish()?);
    }
    writer.finish(entries)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join("manifest.json");
    let manifest: Manifest = read_json(&path)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::schema(
            &path,
            "format_version",
            format!("unsupported version {}", manifest.format_version),
        ));
    }
    Ok(manifest)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line)
                .map_err(|e| Error::schema(path, format!("line {}", i + 1), e.to_string()))
        })
        .collect()
}

fn missing(path: &Path, what: &str) -> Error {
    Error::schema(path, what, "referenced by the manifest but missing")
}

/// Samples of one manifest entry, in frame order.
pub fn read_variant(root: &Path, entry: &ManifestDemo, images: bool) -> Result<Vec<EditedSample>> {
    let dir = root.join(&entry.name);
    let meta_path = dir.join("meta.json");
    if !meta_path.is_file() {
        return Err(missing(&meta_path, "meta"));
    }
    let meta: VariantMeta = read_json(&meta_path)?;
    let actions_path = dir.join("actions.jsonl");
    let joints_path = dir.join("joints.jsonl");
    for p in [&actions_path, &joints_path] {
        if !p.is_file() {
            return Err(missing(p, "records"));
        }
    }
    let actions: Vec<ActionRecord> = read_jsonl(&actions_path)?;
    let joints: Vec<JointRecord> = read_jsonl(&joints_path)?;
    if actions.len() != entry.frame_count || joints.len() != entry.frame_count {
        return Err(Error::schema(
            &actions_path,
            "frame_count",
            format!(
                "manifest lists {} frames, found {} actions and {} joint records",
                entry.frame_count,
                actions.len(),
                joints.len()
            ),
        ));
    }
    actions
        .into_iter()
        .zip(joints)
        .enumerate()
        .map(|(i, (a, j))| {
            let image = if images && a.valid {
                let path = frame_file(&dir.join("frames"), i, "png");
                if !path.is_file() {
                    return Err(missing(&path, "frame"));
                }
                Some(load_rgb_png(&path)?)
            } else {
                None
            };
            Ok(EditedSample {
                provenance: Provenance {
                    source_demo: meta.source_demo.clone(),
                    frame_index: i,
                    variant: meta.variant,
                    base_shift: meta.base_shift,
                },
                timestamp: a.t,
                image,
                action: a.action(),
                joints: j.q,
                valid: a.valid,
                note: j.note,
            })
        })
        .collect()
}

/// The manifest and every sample, variant by variant in manifest order.
pub fn read_dataset(root: &Path) -> Result<(Manifest, impl Iterator<Item = Result<EditedSample>>)> {
    let manifest = read_manifest(root)?;
    let root = root.to_path_buf();
    let entries = manifest.demos.clone();
    let images = manifest.images;
    let samples = entries.into_iter().flat_map(move |entry| {
        let items: Vec<Result<EditedSample>> = match read_variant(&root, &entry, images) {
            Ok(samples) => samples.into_iter().map(Ok).collect(),
            Err(e) => vec![Err(e)],
        };
        items
    });
    Ok((manifest, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub demo: Option<String>,
    pub frame: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoSummary {
    pub name: String,
    pub frame_count: usize,
    pub valid_count: usize,
    pub invalid_rate: f64,
    /// Share of valid frames with a fully closed gripper.
    pub closed_fraction: f64,
    /// Position bounds over valid frames, `None` without valid frames.
    pub bbox_min: Option<[f64; 3]>,
    pub bbox_max: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub demos: Vec<DemoSummary>,
    /// Skipped checks and other remarks that are not failures.
    pub notes: Vec<String>,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for d in &self.demos {
            s.push_str(&format!(
                "{}: {} frames, {} valid ({:.1}% invalid), gripper closed on {:.1}%",
                d.name,
                d.frame_count,
                d.valid_count,
                100.0 * d.invalid_rate,
                100.0 * d.closed_fraction
            ));
            if let (Some(lo), Some(hi)) = (d.bbox_min, d.bbox_max) {
                s.push_str(&format!(
                    ", positions [{:.3}, {:.3}, {:.3}]..[{:.3}, {:.3}, {:.3}]",
                    lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]
                ));
            }
            s.push('\n');
        }
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        for i in &self.issues {
            let at = match (&i.demo, i.frame) {
                (Some(d), Some(f)) => format!("{d} frame {f}: "),
                (Some(d), None) => format!("{d}: "),
                _ => String::new(),
            };
            s.push_str(&format!("issue: {at}{}\n", i.message));
        }
        s.push_str(if self.is_ok() { "OK\n" } else { "FAILED\n" });
        s
    }
}

struct Issues(Vec<ValidationIssue>);

impl Issues {
    fn add(&mut self, demo: Option<&str>, frame: Option<usize>, message: impl Into<String>) {
        self.0.push(ValidationIssue {
            demo: demo.map(str::to_string),
            frame,
            message: message.into(),
        });
    }
}

fn summarize(name: &str, records: &[ActionRecord]) -> DemoSummary {
    let valid: Vec<&ActionRecord> = records.iter().filter(|r| r.valid).collect();
    let closed = valid.iter().filter(|r| r.g == Some(0.0)).count();
    let positions: Vec<[f64; 3]> = valid.iter().filter_map(|r| r.p).collect();
    let bound = |f: fn(f64, f64) -> f64, init: f64| {
        (!positions.is_empty()).then(|| {
            let mut b = [init; 3];
            for p in &positions {
                for a in 0..3 {
                    b[a] = f(b[a], p[a]);
                }
            }
            b
        })
    };
    let n = records.len();
    DemoSummary {
        name: name.to_string(),
        frame_count: n,
        valid_count: valid.len(),
        invalid_rate: if n == 0 { 0.0 } else { (n - valid.len()) as f64 / n as f64 },
        closed_fraction: if valid.is_empty() { 0.0 } else { closed as f64 / valid.len() as f64 },
        bbox_min: bound(f64::min, f64::INFINITY),
        bbox_max: bound(f64::max, f64::NEG_INFINITY),
    }
}

/// Checks a dataset for integrity and internal consistency. Only a missing
/// or unreadable manifest is an error; everything else is reported.
///
/// `chain` overrides the chain recorded in the manifest for the
/// forward-kinematics check, which is skipped when neither is available.
pub fn validate_dataset(root: &Path, chain: Option<&KinematicChain>) -> Result<ValidationReport> {
    let manifest = read_manifest(root)?;
    let mut issues = Issues(Vec::new());
    let mut notes = Vec::new();

    let config_path = root.join("config.toml");
    match std::fs::read(&config_path) {
        Ok(bytes) => {
            if hex::encode(Sha256::digest(&bytes)) != manifest.config_hash {
                issues.add(None, None, format!("{} does not match the manifest config hash", config_path.display()));
            }
        }
        Err(_) => issues.add(None, None, format!("{} is missing", config_path.display())),
    }

    let loaded_chain;
    let chain = match chain {
        Some(c) => Some(c),
        None => match &manifest.robot.chain_path {
            Some(p) if p.is_file() => match KinematicChain::load(p) {
                Ok(c) => {
                    loaded_chain = c;
                    Some(&loaded_chain)
                }
                Err(e) => {
                    issues.add(None, None, format!("cannot load robot chain: {e}"));
                    None
                }
            },
            _ => None,
        },
    };
    if chain.is_none() {
        notes.push("robot chain unavailable; forward-kinematics check skipped".into());
    }
    if let (Some(c), Some(dof)) = (chain, manifest.robot.dof) {
        if c.dof() != dof {
            issues.add(None, None, format!("chain has {} joints, manifest says {dof}", c.dof()));
        }
    }

    let mut seen = std::collections::BTreeSet::new();
    let mut summaries = Vec::new();
    let mut variant0: BTreeMap<String, (VariantMeta, Vec<ActionRecord>)> = BTreeMap::new();
    let mut shifted: Vec<(ManifestDemo, VariantMeta, Vec<ActionRecord>)> = Vec::new();
    for entry in &manifest.demos {
        let name = entry.name.as_str();
        let demo = Some(name);
        if !seen.insert(name) {
            issues.add(demo, None, "listed twice in the manifest");
            continue;
        }
        if name != variant_dir_name(&entry.source_demo, entry.variant) {
            issues.add(demo, None, "name does not match source demo and variant");
        }
        if entry.config_hash != manifest.config_hash {
            issues.add(demo, None, "config hash differs from the dataset config hash");
        }
        let dir = root.join(name);
        let meta: VariantMeta = match read_json(&dir.join("meta.json")) {
            Ok(m) => m,
            Err(e) => {
                issues.add(demo, None, e.to_string());
                continue;
            }
        };
        if meta.source_demo != entry.source_demo
            || meta.variant != entry.variant
            || meta.base_shift != entry.base_shift
            || meta.intrinsics != entry.intrinsics
            || meta.frame_count != entry.frame_count
            || meta.valid_count != entry.valid_count
        {
            issues.add(demo, None, "meta.json disagrees with the manifest");
        }
        if entry.variant == 0 && entry.base_shift != 0.0 {
            issues.add(demo, None, "variant 0 must not be shifted");
        }
        let records: Vec<ActionRecord> = match read_jsonl(&dir.join("actions.jsonl")) {
            Ok(r) => r,
            Err(e) => {
                issues.add(demo, None, e.to_string());
                continue;
            }
        };
        let joints: Option<Vec<JointRecord>> = match read_jsonl(&dir.join("joints.jsonl")) {
            Ok(j) => Some(j),
            Err(e) => {
                issues.add(demo, None, e.to_string());
                None
            }
        };
        if records.len() != entry.frame_count {
            issues.add(demo, None, format!("{} action records, manifest lists {}", records.len(), entry.frame_count));
        }
        let valid_count = records.iter().filter(|r| r.valid).count();
        if valid_count != entry.valid_count {
            issues.add(demo, None, format!("{valid_count} valid records, manifest lists {}", entry.valid_count));
        }

        for (i, r) in records.iter().enumerate() {
            let frame = Some(i);
            if !r.t.is_finite() {
                issues.add(demo, frame, "timestamp is not finite");
            }
            if i > 0 && !(r.t > records[i - 1].t) {
                issues.add(demo, frame, "timestamps are not strictly increasing");
            }
            match r.action() {
                Some(a) => {
                    if let Err(e) = a.validate() {
                        issues.add(demo, frame, format!("action invariant violated: {e}"));
                    }
                }
                None if r.valid => issues.add(demo, frame, "valid frame without an action"),
                None => {
                    if r.p.is_some() || r.r6.is_some() || r.g.is_some() {
                        issues.add(demo, frame, "partial action record");
                    }
                }
            }
            if manifest.images && r.valid {
                let path = frame_file(&dir.join("frames"), i, "png");
                match image::image_dimensions(&path) {
                    Ok(dims) if dims == (entry.intrinsics.width, entry.intrinsics.height) => {}
                    Ok((w, h)) => issues.add(
                        demo,
                        frame,
                        format!("image is {w}x{h}, camera is {}x{}", entry.intrinsics.width, entry.intrinsics.height),
                    ),
                    Err(_) => issues.add(demo, frame, format!("{} is missing or unreadable", path.display())),
                }
            }
        }

        if let Some(joints) = &joints {
            if joints.len() != records.len() {
                issues.add(demo, None, format!("{} joint records for {} frames", joints.len(), records.len()));
            }
            for (i, (j, r)) in joints.iter().zip(&records).enumerate() {
                if j.frame != i {
                    issues.add(demo, Some(i), format!("joint record numbered {}", j.frame));
                }
                if !(manifest.images && r.valid) {
                    continue;
                }
                let (Some(q), Some(chain), Some(a)) = (&j.q, chain, r.action()) else {
                    if j.q.is_none() {
                        issues.add(demo, Some(i), "rendered frame without a joint configuration");
                    }
                    continue;
                };
                let check = || -> Result<(f64, f64)> {
                    let ee = chain.forward_kinematics(q)?.ee_pose;
                    let target = RigidTransform::new(a.rotation()?, a.position);
                    let dr = rotation_log(&(ee.rotation.inverse() * target.rotation)).norm();
                    Ok(((ee.translation - target.translation).norm(), dr))
                };
                match check() {
                    Ok((dp, dr)) if dp <= manifest.ik.pos_tol && dr <= manifest.ik.rot_tol => {}
                    Ok((dp, dr)) => issues.add(
                        demo,
                        Some(i),
                        format!("rendered pose is {dp:.2e} m / {dr:.2e} rad from the action"),
                    ),
                    Err(e) => issues.add(demo, Some(i), format!("forward kinematics failed: {e}")),
                }
            }
        }

        summaries.push(summarize(name, &records));
        if entry.variant == 0 {
            variant0.insert(entry.source_demo.clone(), (meta, records));
        } else {
            shifted.push((entry.clone(), meta, records));
        }
    }

    for (entry, meta, records) in &shifted {
        let demo = Some(entry.name.as_str());
        let Some((meta0, records0)) = variant0.get(&entry.source_demo) else {
            notes.push(format!("{}: no variant 0 to compare against", entry.name));
            continue;
        };
        let expected = Variant {
            index: entry.variant,
            base_shift: entry.base_shift,
        }
        .extrinsics(&Extrinsics::new(RigidTransform::from_rows(&meta0.extrinsics)?));
        let got = RigidTransform::from_rows(&meta.extrinsics)?;
        let drift = (expected.camera_to_robot.to_homogeneous() - got.to_homogeneous()).abs().max();
        if drift > 1e-12 {
            issues.add(demo, None, "extrinsics are not the variant 0 camera shifted by the base shift");
        }
        if records.len() != records0.len() {
            issues.add(demo, None, "frame count differs from variant 0");
        }
        for (i, (r, r0)) in records.iter().zip(records0).enumerate() {
            if r.t != r0.t {
                issues.add(demo, Some(i), "timestamp differs from variant 0");
            }
            let (Some(p), Some(p0)) = (r.p, r0.p) else { continue };
            let moved = [p0[0] - entry.base_shift, p0[1], p0[2]];
            if p != moved || r.r6 != r0.r6 || r.g != r0.g {
                issues.add(demo, Some(i), "action is not the variant 0 action shifted by the base shift");
            }
        }
    }

    Ok(ValidationReport {
        demos: summaries,
        notes,
        issues: issues.0,
    })
}
