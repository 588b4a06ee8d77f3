use rayon::prelude::*;

use super::config::PipelineConfig;
use super::dataset::{DatasetWriter, Manifest, ManifestDemo, RobotInfo};
use super::demo::DemoRecord;
use super::process::{plan_variants, process_demo, Output, Variant};
use crate::error::{Error, Result};
use crate::robot::KinematicChain;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    /// Actions only, no rendering.
    ExtractActions,
    /// Edited images and actions for the recorded camera.
    Edit,
    /// Edited images and actions for every augmentation variant.
    Augment,
}

#[derive(Debug)]
pub struct RunReport {
    pub manifest: Manifest,
    /// Demos that produced no output, with the reason.
    pub failures: Vec<(String, Error)>,
}

fn robot_info(cfg: &PipelineConfig, chain: Option<&KinematicChain>) -> RobotInfo {
    RobotInfo {
        model_id: chain.map_or_else(|| "unspecified".to_string(), |c| c.name.clone()),
        chain_path: chain.map(|_| std::fs::canonicalize(&cfg.robot.chain).unwrap_or_else(|_| cfg.robot.chain.clone())),
        dof: chain.map(KinematicChain::dof),
    }
}

/// Processes `demo_ids` (every demo under the input root when empty) in
/// parallel and writes the dataset to `cfg.output`. A failing demo is
/// reported and left out; the others are still written.
pub fn run_dataset(cfg: &PipelineConfig, demo_ids: &[String], kind: RunKind) -> Result<RunReport> {
    cfg.validate()?;
    let ids = if demo_ids.is_empty() {
        DemoRecord::discover(&cfg.input_root)?
    } else {
        demo_ids.to_vec()
    };
    if ids.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no demos found under {}",
            cfg.input_root.display()
        )));
    }
    let chain = match kind {
        RunKind::ExtractActions if !cfg.robot.chain.is_file() => None,
        _ => Some(KinematicChain::load(&cfg.robot.chain)?),
    };
    let output = match kind {
        RunKind::ExtractActions => Output::ActionsOnly,
        RunKind::Edit | RunKind::Augment => Output::Images,
    };
    let writer = DatasetWriter::create(&cfg.output, cfg, robot_info(cfg, chain.as_ref()), output == Output::Images)?;

    let results: Vec<(String, Result<Vec<ManifestDemo>>)> = ids
        .par_iter()
        .map(|id| {
            let result = (|| {
                let demo = DemoRecord::load(&cfg.input_root, id)?;
                let variants = match kind {
                    RunKind::Augment => {
                        let a = &cfg.augmentation;
                        plan_variants(id, a.n_variants, a.max_shift_x, a.rng_seed)
                    }
                    _ => vec![Variant::original()],
                };
                let mut dw = writer.demo(id, &demo.intrinsics, &demo.extrinsics, &variants)?;
                match process_demo(&demo, chain.as_ref(), cfg, &variants, output, &mut |s| dw.push(s)) {
                    Ok(()) => dw.finish(),
                    Err(e) => {
                        dw.discard()?;
                        Err(e)
                    }
                }
            })();
            (id.clone(), result)
        })
        .collect();

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (id, result) in results {
        match result {
            Ok(e) => entries.extend(e),
            Err(e) => {
                log::error!("demo {id}: {e}");
                failures.push((id, e));
            }
        }
    }
    Ok(RunReport {
        manifest: writer.finish(entries)?,
        failures,
    })
}
