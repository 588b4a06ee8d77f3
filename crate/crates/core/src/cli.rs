//! Command-line front end.
//!
//! Exit codes: 0 success, 1 processing or validation failure, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::camera::save_rgb_png;
use crate::compositor::EditMode;
use crate::error::Result;
use crate::pipeline::{render_preview, run_dataset, validate_dataset, DemoRecord, PipelineConfig, RunKind};
use crate::robot::KinematicChain;
use crate::synth::{write_fixture, SynthOptions};

#[derive(Debug, Parser)]
#[command(name = "demo-retarget", version, about = "Turn human RGBD pinch demos into robot demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract end-effector actions without rendering.
    ExtractActions(RunArgs),
    /// Replace the arm with the robot and write images and actions.
    Edit(RunArgs),
    /// Like `edit`, once per randomly shifted robot base.
    Augment(AugmentArgs),
    /// Check a dataset and print per-demo statistics.
    Validate(ValidateArgs),
    /// Render one frame with the robot overlaid.
    RenderPreview(PreviewArgs),
    /// Write a synthetic demo, robot and config for testing.
    SynthDemo(SynthArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Pipeline config (TOML); defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding the demo_<id> folders.
    #[arg(long)]
    input_root: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(EditMode))]
    edit_mode: Option<EditMode>,
    /// Use the demos' inpainted/ frames as the edited background.
    #[arg(long)]
    use_preinpainted: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Demo id to process; repeatable. All demos when omitted.
    #[arg(long = "demo")]
    demos: Vec<String>,
    /// Dataset directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    variants: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest base shift along x (m).
    #[arg(long)]
    max_shift_x: Option<f64>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    dataset: PathBuf,
    /// Robot chain for the forward-kinematics check, overriding the one
    /// recorded in the manifest.
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct PreviewArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    demo: String,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// PNG to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory to create the fixture in.
    dir: PathBuf,
    #[arg(long, default_value = "synthetic")]
    id: String,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Frame whose depth is blanked; repeatable.
    #[arg(long = "corrupt")]
    corrupt: Vec<usize>,
    /// Hand estimates without error.
    #[arg(long)]
    exact_estimates: bool,
    /// Also write arm-free background frames.
    #[arg(long)]
    clean_background: bool,
}

enum Failure {
    Usage(String),
    Processing(String),
}

impl ConfigArgs {
    fn load(&self) -> std::result::Result<PipelineConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?,
            None => PipelineConfig::default(),
        };
        if let Some(root) = &self.input_root {
            cfg.input_root = root.clone();
        }
        if let Some(mode) = self.edit_mode {
            cfg.edit_mode = mode;
        }
        cfg.use_preinpainted |= self.use_preinpainted;
        Ok(cfg)
    }
}

impl RunArgs {
    fn load(&self) -> std::result::Result<PipelineConfig, Failure> {
        let mut cfg = self.config.load()?;
        if let Some(out) = &self.output {
            cfg.output = out.clone();
        }
        Ok(cfg)
    }
}

fn processing(e: crate::Error) -> Failure {
    Failure::Processing(e.to_string())
}

fn run_pipeline(cfg: PipelineConfig, demos: &[String], kind: RunKind) -> std::result::Result<(), Failure> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let report = run_dataset(&cfg, demos, kind).map_err(processing)?;
    for d in &report.manifest.demos {
        println!(
            "{}: {}/{} frames valid (base shift {:+.4} m)",
            d.name, d.valid_count, d.frame_count, d.base_shift
        );
    }
    println!("dataset written to {}", cfg.output.display());
    if report.failures.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = report.failures.iter().map(|(id, e)| format!("demo {id}: {e}")).collect();
        Err(Failure::Processing(msgs.join("\n")))
    }
}

fn execute(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::ExtractActions(args) => run_pipeline(args.load()?, &args.demos, RunKind::ExtractActions),
        Command::Edit(args) => run_pipeline(args.load()?, &args.demos, RunKind::Edit),
        Command::Augment(args) => {
            let mut cfg = args.run.load()?;
            let a = &mut cfg.augmentation;
            if let Some(n) = args.variants {
                a.n_variants = n;
            }
            if let Some(s) = args.seed {
                a.rng_seed = s;
            }
            if let Some(m) = args.max_shift_x {
                a.max_shift_x = m;
            }
            run_pipeline(cfg, &args.run.demos, RunKind::Augment)
        }
        Command::Validate(args) => {
            let chain = args
                .chain
                .as_deref()
                .map(KinematicChain::load)
                .transpose()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let report = validate_dataset(&args.dataset, chain.as_ref()).map_err(processing)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{}", report.to_text());
            }
            if report.is_ok() {
                Ok(())
            } else {
                Err(Failure::Processing(format!("{} issue(s) found", report.issues.len())))
            }
        }
        Command::RenderPreview(args) => {
            let cfg = args.config.load()?;
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let result = (|| -> Result<()> {
                let chain = KinematicChain::load(&cfg.robot.chain)?;
                let demo = DemoRecord::load(&cfg.input_root, &args.demo)?;
                let img = render_preview(&demo, args.frame, &chain, &cfg)?;
                save_rgb_png(&img, &args.output)
            })();
            result.map_err(processing)?;
            println!("preview written to {}", args.output.display());
            Ok(())
        }
        Command::SynthDemo(args) => {
            let opts = SynthOptions {
                frames: args.frames,
                seed: args.seed,
                estimate_error: !args.exact_estimates,
                corrupt_frames: args.corrupt,
                clean_background: args.clean_background,
                ..SynthOptions::default()
            };
            let fixture = write_fixture(&args.dir, &args.id, &opts).map_err(processing)?;
            println!("config: {}", fixture.config.display());
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Processing(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
