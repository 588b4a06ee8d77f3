//! Demo loading, per-frame processing and the on-disk dataset format.

mod config;
mod dataset;
mod demo;
mod process;
mod run;

pub use config::{AugmentationConfig, PipelineConfig, RobotConfig};
pub use dataset::*;
pub use demo::{demo_dir_name, frame_file, DemoMeta, DemoRecord, FrameRef};
pub use process::*;
pub use run::{run_dataset, RunKind, RunReport};
