//! The `ogrg` command-line tool: dataset generation, training, evaluation,
//! prediction dumps, gradient checks and grasp simulation.

pub mod error;
pub mod gen_data;
pub mod heatmap;
pub mod infer;
pub mod run_config;
pub mod runs;
pub mod simulate;
pub mod train;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use ogrg_synth::{Bank, GenConfig};
use serde_json::json;

pub use error::{CliError, Result};
use run_config::{Mode, RunConfig};

/// Environment variable capping worker threads.
pub const THREADS_VAR: &str = "OGRG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ogrg", version, about = "Language-conditioned grasp grounding on synthetic tabletop scenes")]
pub struct Cli {
    /// Single-threaded, fixed-order execution for byte-identical outputs.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset directory.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: u64,
        /// Objects per scene, `N` or `A..B`.
        #[arg(long, default_value = "1..7")]
        objects: String,
        /// Comma-separated template classes.
        #[arg(long, default_value = "abs,rel,attr_base,attr_cls")]
        templates: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `test` draws table textures from the held-out bank.
        #[arg(long, default_value = "train")]
        split: String,
        /// Render side in pixels.
        #[arg(long, default_value_t = run_config::DEFAULT_RESOLUTION)]
        size: usize,
        /// Replace the contents of a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Print metrics as JSON, from a checkpoint or a prediction dump.
    Eval {
        #[arg(long, conflicts_with = "dump", required_unless_present = "dump")]
        checkpoint: Option<PathBuf>,
        /// Prediction dump written by `predict`.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Grasp-network checkpoint, for grasp metrics of a grounding-only model.
        #[arg(long, requires = "checkpoint")]
        mgn: Option<PathBuf>,
        /// Run config to use instead of the one beside the checkpoint.
        #[arg(long, requires = "checkpoint")]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "miou,oiou,j1,jany")]
        metrics: String,
    },
    /// Write masks, heatmaps and a prediction dump; report forward FPS.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mgn: Option<PathBuf>,
        /// Dataset directory.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Coordinates checked per input and seed.
        #[arg(long, default_value_t = 16)]
        coords: usize,
    },
    /// Grasp episodes on generated scenes, adjudicated by the oracle.
    Simulate {
        /// Grounding checkpoint (`--predictor model`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Grasp-network checkpoint.
        #[arg(long)]
        mgn: Option<PathBuf>,
        /// `model`, `gt-mask` or `oracle`.
        #[arg(long, default_value = "model")]
        predictor: String,
        #[arg(long, default_value_t = 200)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value = "4")]
        objects: String,
        #[arg(long, default_value = "abs")]
        templates: String,
        /// Scene render side; defaults to the checkpoint's resolution.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Print the run-config JSON schema or an example config.
    Config {
        #[arg(long, conflicts_with = "example", required_unless_present = "example")]
        print_schema: bool,
        /// `rgs`, `rga` or `mgn`.
        #[arg(long)]
        example: Option<String>,
    },
}

/// Worker threads: 1 under `--strict`, else `OGRG_THREADS` or the core count.
pub fn threads(strict: bool) -> Result<usize> {
    if strict {
        return Ok(1);
    }
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::usage(format!("{THREADS_VAR}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn parse_bank(split: &str) -> Result<Bank> {
    match split {
        "train" => Ok(Bank::Train),
        "test" => Ok(Bank::Test),
        _ => Err(CliError::usage(format!("split must be train or test, got {split:?}"))),
    }
}

fn parse_mode(s: &str) -> Result<Mode> {
    serde_json::from_value(json!(s)).map_err(|_| CliError::usage(format!("mode must be rgs, rga or mgn, got {s:?}")))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(v).expect("JSON values serialize"))?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = threads(cli.strict)?;
    match cli.command {
        Command::GenData {
            out,
            count,
            objects,
            templates,
            seed,
            split,
            size,
            force,
        } => {
            let args = gen_data::GenArgs {
                count,
                objects: gen_data::parse_objects(&objects)?,
                templates: gen_data::parse_templates(&templates)?,
                size,
                seed,
                bank: parse_bank(&split)?,
            };
            let n = gen_data::run(&out, &args, force, threads)?;
            eprintln!("wrote {n} samples to {}", out.display());
        }
        Command::Train { config, force } => {
            let s = train::run(&config, force)?;
            eprintln!("trained {} steps, final loss {:.5}", s.steps, s.final_loss);
        }
        Command::Eval {
            checkpoint,
            dump,
            mgn,
            config,
            data,
            metrics,
        } => {
            let which = infer::parse_metrics(&metrics)?;
            let source = match (&dump, &checkpoint) {
                (Some(d), _) => infer::Source::Dump(d),
                (None, Some(c)) => infer::Source::Checkpoint {
                    path: c,
                    mgn: mgn.as_deref(),
                    config: config.as_deref(),
                },
                (None, None) => return Err(CliError::usage("eval needs --checkpoint or --dump")),
            };
            print_json(&infer::eval(source, &data, &which)?.into())?;
        }
        Command::Predict {
            checkpoint,
            mgn,
            input,
            out,
            limit,
            force,
        } => {
            let r = infer::predict(&checkpoint, mgn.as_deref(), &input, &out, limit, force)?;
            print_json(&json!({
                "images": r.images,
                "resolution": r.resolution,
                "forward_fps": r.forward_fps,
                "reference_fps": infer::REFERENCE_FPS,
            }))?;
        }
        Command::Gradcheck { seeds, coords } => {
            if seeds == 0 || coords == 0 {
                return Err(CliError::usage("seeds and coords must be positive"));
            }
            let report = ogrg_core::gradsuite::run(seeds, coords, |c| {
                println!("{:<32} max rel err {:.3e} over {} coords", c.name, c.max_rel_err, c.coords)
            })?;
            let worst = report.max_rel_err();
            println!(
                "max relative error {worst:.3e} (tolerance {:e}) over {} cases, {seeds} seeds",
                ogrg_core::gradsuite::TOLERANCE,
                report.cases.len()
            );
            if !report.passed() {
                return Err(CliError::Numeric(format!("gradient check failed: max relative error {worst:.3e}")));
            }
        }
        Command::Simulate {
            checkpoint,
            mgn,
            predictor,
            episodes,
            seed,
            split,
            objects,
            templates,
            size,
        } => {
            let predictor = simulate::Predictor::parse(&predictor)?;
            let grounding = checkpoint.as_deref().map(|c| runs::load_run(c, None)).transpose()?;
            let grasp = mgn.as_deref().map(|c| runs::load_run(c, None)).transpose()?;
            let size = size
                .or(grounding.as_ref().map(|g| g.cfg.resolution))
                .or(grasp.as_ref().map(|g| g.cfg.resolution))
                .unwrap_or(run_config::DEFAULT_RESOLUTION);
            let range = gen_data::parse_objects(&objects)?;
            let cfg = GenConfig {
                size,
                min_objects: *range.start(),
                max_objects: *range.end(),
                templates: gen_data::parse_templates(&templates)?,
                allow_duplicates: true,
                bank: parse_bank(&split)?,
                seed,
            };
            let scenes = simulate::scenes(&cfg, episodes)?;
            let r = simulate::run(predictor, grounding.as_ref(), grasp.as_ref(), &scenes)?;
            print_json(&json!({
                "predictor": predictor.name(),
                "episodes": r.episodes,
                "success_rate": r.success_rate,
                "any_grasp_rate": r.any_rate,
            }))?;
        }
        Command::Config { print_schema, example } => {
            if print_schema {
                let schema = schemars::schema_for!(RunConfig);
                print_json(&serde_json::to_value(schema).expect("schema serializes"))?;
            } else if let Some(m) = example {
                print_json(&serde_json::to_value(RunConfig::example(parse_mode(&m)?)).expect("config serializes"))?;
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
