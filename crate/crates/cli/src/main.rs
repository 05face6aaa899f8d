use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use demultiple::harness::{
    self, ablate, compare_radon, evaluate, load_gathers, threads_from_env, train_experiment,
    write_table_csv, AblationGrid, ExperimentConfig, LabelledGather,
};
use demultiple::introspect::{all_block_stats, export_block, write_histogram_csv, write_stats_csv};
use demultiple::io::{load_checkpoint, write_dataset, write_pgm};
use demultiple::radon::{radon_demultiple, RadonConfig};
use demultiple::synthgen::{make_dataset, GatherPair, ParamSpace};
use demultiple::{Error, GatherGeometry};

#[derive(Parser)]
#[command(name = "demultiple", version, about = "U-net and Radon demultiple laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of (x, y, m) gather triplets.
    Generate(GenerateArgs),
    /// Train one experiment over all of its seeds.
    Train {
        /// Experiment TOML file.
        config: PathBuf,
    },
    /// Score a checkpoint on a labelled dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Optional CSV table (method, metric, mean, std).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Demultiple gathers with a checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        /// Output dataset: x = input, y = primaries, m = removed.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation grid.
    Ablate {
        /// Grid TOML file.
        grid: PathBuf,
    },
    /// Parabolic Radon demultiple.
    Radon {
        #[command(flatten)]
        input: InputArgs,
        /// Radon parameters (TOML); defaults if omitted.
        #[arg(long)]
        radon: Option<PathBuf>,
        /// Output dataset: x = input, y = primaries, m = removed.
        #[arg(long)]
        out: PathBuf,
    },
    /// Side-by-side U-net and Radon panels plus a metric table.
    Compare {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        radon: Option<PathBuf>,
        /// Process at most this many gathers.
        #[arg(long)]
        max_gathers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export filters, feature maps and weight statistics.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        /// Gather index within the input used for feature maps.
        #[arg(long, default_value_t = 0)]
        gather: usize,
        /// Block ids to export; all blocks if omitted.
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        filters: usize,
        #[arg(long, default_value_t = 4)]
        maps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameter-space TOML; defaults if omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    traces: usize,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    /// Sample interval in seconds.
    #[arg(long, default_value_t = 0.004)]
    dt: f64,
    /// Farthest offset in meters.
    #[arg(long, default_value_t = 3000.0)]
    max_offset: f64,
}

#[derive(Args)]
struct InputArgs {
    /// Dataset (.dmlt) or SEG-Y (.sgy/.segy) file.
    #[arg(long)]
    input: PathBuf,
    /// Traces per gather; required for SEG-Y.
    #[arg(long)]
    traces_per_gather: Option<usize>,
}

impl InputArgs {
    fn load(&self, geometry: &GatherGeometry) -> anyhow::Result<Vec<LabelledGather>> {
        load_gathers(&self.input, self.traces_per_gather, geometry)
            .with_context(|| format!("reading {}", self.input.display()))
    }
}

fn radon_config(path: &Option<PathBuf>) -> anyhow::Result<RadonConfig> {
    let cfg = match path {
        Some(p) => RadonConfig::from_file(p)?,
        None => RadonConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Layout SEG-Y input is fitted to before it reaches a model.
fn model_geometry() -> GatherGeometry {
    GatherGeometry::default()
}

fn write_split(path: &Path, gathers: &[LabelledGather], splits: Vec<(demultiple::Gather, demultiple::Gather)>) -> anyhow::Result<()> {
    let geometry = gathers
        .first()
        .map(|g| g.x.geometry.clone())
        .unwrap_or_default();
    let pairs: Vec<GatherPair> = gathers
        .iter()
        .zip(splits)
        .map(|(g, (y, m))| GatherPair {
            x: g.x.clone(),
            y,
            m,
            info: None,
        })
        .collect();
    write_dataset(path, &geometry, &pairs)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = threads_from_env();
    match cli.command {
        Command::Generate(a) => {
            let space = match &a.params {
                Some(p) => ParamSpace::from_file(p)?,
                None => ParamSpace::default(),
            };
            let geometry = GatherGeometry::regular(a.traces, a.samples, a.dt, a.max_offset);
            geometry.validate()?;
            make_dataset(&space, &geometry, a.n, a.seed, &a.out, threads)?;
            println!("wrote {} pairs to {}", a.n, a.out.display());
        }
        Command::Train { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let (curve, reports) = train_experiment(&cfg, threads)?;
            for r in &reports {
                println!(
                    "seed {}: final validation {} (input {})",
                    r.seed,
                    r.final_validation(),
                    r.baseline
                );
            }
            println!(
                "{} curve points written to {}",
                curve.points.len(),
                cfg.output_dir.join("curves.csv").display()
            );
        }
        Command::Eval {
            checkpoint,
            data,
            out,
        } => {
            let (model, transpose) = load_checkpoint(&checkpoint)?;
            let ds = demultiple::io::read_dataset(&data)?;
            let e = evaluate(&model, transpose, &ds.pairs)?;
            println!("input  {}", e.baseline);
            println!("model  {}", e.report);
            if let Some(out) = out {
                write_table_csv(&out, &[("input".into(), e.baseline), ("unet".into(), e.report)])?;
            }
        }
        Command::Infer {
            checkpoint,
            input,
            out,
        } => {
            let (model, transpose) = load_checkpoint(&checkpoint)?;
            let gathers = input.load(&model_geometry())?;
            let splits = gathers
                .iter()
                .map(|g| harness::demultiple_exact(&model, &g.x, transpose))
                .collect::<Result<Vec<_>, _>>()?;
            write_split(&out, &gathers, splits)?;
            println!("wrote {} gathers to {}", gathers.len(), out.display());
        }
        Command::Ablate { grid } => {
            let grid = AblationGrid::from_file(&grid)?;
            let report = ablate(&grid, threads)?;
            for c in report.curves() {
                println!("{}: {} curve points", c.run_id, c.points.len());
            }
            let failures = report.failures();
            if !failures.is_empty() {
                for (name, e) in &failures {
                    eprintln!("variant {name} failed: {e}");
                }
                anyhow::bail!(RuntimeFailure(format!("{} variant(s) failed", failures.len())));
            }
        }
        Command::Radon { input, radon, out } => {
            let cfg = radon_config(&radon)?;
            let gathers = input.load(&model_geometry())?;
            let mut splits = Vec::with_capacity(gathers.len());
            for (i, g) in gathers.iter().enumerate() {
                let r = radon_demultiple(&g.x, &cfg)?;
                if !r.stats.converged {
                    log::warn!("gather {i}: inversion stopped at residual {:.3e}", r.stats.relative_residual);
                }
                splits.push((r.primaries, r.multiples));
            }
            write_split(&out, &gathers, splits)?;
            println!("wrote {} gathers to {}", gathers.len(), out.display());
        }
        Command::Compare {
            checkpoint,
            input,
            radon,
            max_gathers,
            out,
        } => {
            let cfg = radon_config(&radon)?;
            let (model, transpose) = load_checkpoint(&checkpoint)?;
            let mut gathers = input.load(&model_geometry())?;
            if let Some(n) = max_gathers {
                gathers.truncate(n);
            }
            let report = compare_radon(&model, transpose, &cfg, &gathers, &out)?;
            for (method, r) in &report.table {
                println!("{method:<6} {r}");
            }
            println!("{} panels written to {}", report.panels.len(), out.display());
        }
        Command::Inspect {
            checkpoint,
            input,
            gather,
            blocks,
            filters,
            maps,
            seed,
            out,
        } => {
            let (model, transpose) = load_checkpoint(&checkpoint)?;
            let gathers = input.load(&model_geometry())?;
            let g = gathers
                .get(gather)
                .ok_or_else(|| Error::Config(format!("input has {} gathers, no index {gather}", gathers.len())))?;
            let blocks = if blocks.is_empty() {
                (0..model.n_blocks()).collect()
            } else {
                blocks
            };
            std::fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
            for &b in &blocks {
                export_block(&model, &g.x, transpose, b, filters, maps, seed, &out)?;
            }
            let stats = all_block_stats(&model)?;
            write_stats_csv(out.join("filter_stats.csv"), &stats)?;
            write_histogram_csv(out.join("filter_histograms.csv"), &stats)?;
            let clip = g.x.max_abs();
            write_pgm(
                out.join("input.pgm"),
                &harness::gather_image(g.x.data(), g.x.n_traces(), g.x.n_samples(), clip),
            )?;
            for s in &stats {
                println!(
                    "block {:>2}: mean {:+.4e} std {:.4e} skew {:+.3} excess kurtosis {:+.3}",
                    s.block_id, s.mean, s.std, s.skewness, s.excess_kurtosis
                );
            }
        }
    }
    Ok(())
}

/// Marks a failure that is not the user's fault even though no library
/// error carries it.
#[derive(Debug)]
struct RuntimeFailure(String);

impl std::fmt::Display for RuntimeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RuntimeFailure {}

/// 1 for bad input (flags, config, files), 2 for failures while running.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_user_error() => 1,
        Some(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
