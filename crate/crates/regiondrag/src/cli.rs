//! `regiondrag` command line: `edit`, `map`, `bench`, `stats`, `serve`.
//!
//! Exit status is 0 on success, 1 for invalid input (including unparsable
//! flags and degenerate regions) and 2 when the pipeline itself fails.

use std::{
    ffi::OsString,
    net::SocketAddr,
    path::{Path, PathBuf},
    time::Duration,
};

use clap::{Args, Parser, Subcommand};
use regiondrag_core::{
    mapping::map_region_pairs,
    metrics::SearchScope,
    schedule::{build_sampler_grid, schedule_dump, NoiseSchedule, ScheduleFamily},
    EditConfig,
};
use serde::Serialize;
use serde_json::json;

use crate::{
    backends::{CodecChoice, Registry, BACKEND_ENV},
    dataset::load_dataset,
    edit::{execute_edit, load_config, ConfigOverrides, EditJob},
    error::{AppError, Result},
    formats::{region_pairs, MappingExport, RegionPairRecord, SessionExport},
    imageio,
    runner::{point_stats, run_benchmark, write_report, BenchOptions},
    service::{serve, AppState, ServiceConfig},
};

#[derive(Debug, Parser)]
#[command(name = "regiondrag", version, about = "Region-based drag image editing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drag the handle regions of an image onto their targets.
    Edit(EditArgs),
    /// Print the dense point mapping of region pairs.
    Map(MapArgs),
    /// Run a manifest of samples and report Mean Distance.
    Bench(BenchArgs),
    /// Equivalent-point statistics of a manifest, or the sampler schedule.
    Stats(StatsArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    /// Denoiser backend (default: toy).
    #[arg(long, env = BACKEND_ENV)]
    pub backend: Option<String>,
    /// identity, pool or pool:<factor>.
    #[arg(long, default_value = "pool")]
    pub codec: String,
    /// JSON file with EditConfig fields; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

impl EngineArgs {
    pub fn edit_config(&self) -> Result<EditConfig> {
        let base = match &self.config {
            Some(path) => load_config(path)?,
            None => EditConfig::default(),
        };
        let cfg = self.overrides.apply(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn codec(&self) -> Result<CodecChoice> {
        self.codec.parse()
    }

    fn registry(&self) -> Result<Registry> {
        let mut r = Registry::builtin();
        if let Some(name) = &self.backend {
            r.set_default(name)?;
        }
        Ok(r)
    }
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// JSON list of `{handle, target}` region records.
    #[arg(long)]
    pub regions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "")]
    pub prompt: String,
    /// Write the stage timings here instead of only printing them.
    #[arg(long)]
    pub timings: Option<PathBuf>,
    /// Write a session export (config, latent summaries, KV sizes).
    #[arg(long)]
    pub session_out: Option<PathBuf>,
    /// Include full latent values in the session export.
    #[arg(long, requires = "session_out")]
    pub session_data: bool,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub regions: PathBuf,
    /// Map on the image grid downscaled by this factor.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub latent_factor: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Fraction of mapped points kept, in (0, 1].
    #[arg(long)]
    pub subset: Option<f64>,
    /// Search the whole edited image instead of each pair's search mask.
    #[arg(long)]
    pub whole_image: bool,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, required_unless_present = "schedule")]
    pub manifest: Option<PathBuf>,
    /// Print `(t, alpha_bar, sigma)` for the configured grid.
    #[arg(long)]
    pub schedule: bool,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, default_value_t = 16 << 20)]
    pub max_body_bytes: usize,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    /// Concurrent edits (default: available cores).
    #[arg(long)]
    pub max_sessions: Option<usize>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

fn read_regions(path: &Path) -> Result<Vec<RegionPairRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::format("regions file", e))
}

fn write_json(value: &impl Serialize, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| AppError::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn edit(args: &EditArgs) -> Result<()> {
    let config = args.engine.edit_config()?;
    let job = EditJob {
        image: imageio::load_png(&args.image)?,
        pairs: region_pairs(&read_regions(&args.regions)?)?,
        prompt: args.prompt.clone(),
        config,
        backend: None,
        codec: args.engine.codec()?,
    };
    let result = execute_edit(&args.engine.registry()?, &job)?;
    std::fs::write(&args.out, &result.png).map_err(|e| AppError::io(&args.out, e))?;
    let session = &result.outcome.session;
    for w in &session.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.timings {
        write_json(&session.timings, Some(path))?;
    }
    if let Some(path) = &args.session_out {
        write_json(&SessionExport::new(session, args.session_data), Some(path))?;
    }
    write_json(
        &json!({
            "out": args.out,
            "seed": session.config.seed,
            "backend": result.backend,
            "codec": result.codec.to_string(),
            "mapped_points": session.mapping.len(),
            "cp_timesteps": session.cp_timesteps,
            "timings": session.timings,
            "warnings": session.warnings,
        }),
        None,
    )
}

fn map(args: &MapArgs) -> Result<()> {
    let pairs = region_pairs(&read_regions(&args.regions)?)?;
    let (mapping, conflicts) = map_region_pairs(&pairs, args.latent_factor)?;
    write_json(&MappingExport::new(&mapping, &conflicts), args.out.as_deref())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let dataset = load_dataset(&args.manifest)?;
    for r in &dataset.rejects {
        eprintln!("rejected line {} ({}): {}", r.line, r.id.as_deref().unwrap_or("?"), r.reason);
    }
    let opts = BenchOptions {
        config: args.engine.edit_config()?,
        backend: None,
        codec: args.engine.codec()?,
        workers: args.workers,
        subset: args.subset,
        scope: if args.whole_image { SearchScope::WholeImage } else { SearchScope::Masked },
    };
    let report = run_benchmark(&args.engine.registry()?, &dataset, &opts)?;
    write_report(&report, args.json.as_deref(), args.csv.as_deref())?;
    write_json(&report.aggregates, None)
}

fn stats(args: &StatsArgs) -> Result<()> {
    if args.schedule {
        let cfg = args.engine.edit_config()?;
        let schedule = NoiseSchedule::new(ScheduleFamily::SD15, cfg.total_trained_steps, cfg.eta)?;
        let grid = build_sampler_grid(&cfg)?;
        write_json(
            &json!({
                "schedule": schedule_dump(&schedule, &grid),
                "cp_timesteps": grid.copy_paste_timesteps(cfg.cp_mode),
                "warnings": grid.warnings(),
            }),
            None,
        )?;
    }
    if let Some(manifest) = &args.manifest {
        let dataset = load_dataset(manifest)?;
        for r in &dataset.rejects {
            eprintln!("rejected line {} ({}): {}", r.line, r.id.as_deref().unwrap_or("?"), r.reason);
        }
        write_json(&point_stats(&dataset)?, None)?;
    }
    Ok(())
}

fn serve_cmd(args: &ServeArgs) -> Result<()> {
    let mut limits = ServiceConfig {
        max_body_bytes: args.max_body_bytes,
        timeout: Duration::from_secs(args.timeout_secs),
        ..ServiceConfig::default()
    };
    if let Some(n) = args.max_sessions {
        limits.max_sessions = n;
    }
    let state = AppState::new(args.engine.registry()?, args.engine.edit_config()?, limits);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| AppError::io("<runtime>", e))?;
    runtime
        .block_on(serve(args.bind, state))
        .map_err(|e| AppError::io(args.bind.to_string(), e))
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Edit(a) => edit(a),
        Command::Map(a) => map(a),
        Command::Bench(a) => bench(a),
        Command::Stats(a) => stats(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

/// Parses `args` and runs the command, returning the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            match e.stage() {
                Some(stage) => eprintln!("error ({stage}): {e}"),
                None => eprintln!("error: {e}"),
            }
            e.exit_code()
        }
    }
}
