#![allow(dead_code)]

use std::path::Path;

use demo_retarget::pipeline::{DemoRecord, PipelineConfig};
use demo_retarget::robot::KinematicChain;
use demo_retarget::synth::{write_fixture, Fixture, SynthOptions};
use tempfile::TempDir;

pub struct Setup {
    pub tmp: TempDir,
    pub fixture: Fixture,
    pub cfg: PipelineConfig,
    pub demo: DemoRecord,
    pub chain: KinematicChain,
}

pub fn setup(opts: SynthOptions) -> Setup {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = write_fixture(tmp.path(), "d1", &opts).unwrap();
    let cfg = PipelineConfig::load(&fixture.config).unwrap();
    let demo = DemoRecord::load(&cfg.input_root, "d1").unwrap();
    let chain = KinematicChain::load(&fixture.chain).unwrap();
    Setup { tmp, fixture, cfg, demo, chain }
}

pub fn frames(n: usize) -> SynthOptions {
    SynthOptions { frames: n, ..SynthOptions::default() }
}

/// Every file under `dir`, relative path and contents, sorted by path.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
