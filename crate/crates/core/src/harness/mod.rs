//! Experiment orchestration: training over seeds, ablation grids,
//! evaluation, and the Radon comparison.

mod ablate;
mod compare;
mod config;
mod plot;
mod train;

use std::path::Path;

pub use ablate::{
    ablate, aggregate, plot_curves, read_curves_csv, run_seeds, seed_rows, train_experiment,
    write_curves_csv, AblationGrid, AblationReport, CurvePoint, MetricCurve, Variant, VariantOutcome,
};
pub use compare::{compare_radon, separate, write_table_csv, CompareReport, LabelledGather, Separation, PANELS};
pub use config::{ExperimentConfig, ModelSection, OptimizerSection};
pub use plot::{gather_image, line_plot, Series};
pub use train::{
    baseline, demultiple_exact, evaluate, gather_metrics, load_datasets, read_seed_csv, run_seed,
    train_seed, write_seed_csv, EpochRecord, Evaluation, SeedOutput, SeedRow, TrainReport, TRAIN_LOSS,
};

use crate::error::{Error, Result};
use crate::gather::GatherGeometry;
use crate::io::{read_dataset, read_segy_gathers};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "DEMUL_THREADS";

/// `DEMUL_THREADS` if set to a positive integer, else the number of
/// available cores.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn is_segy(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("sgy" | "segy")
    )
}

/// Gathers from a dataset file (labelled) or a SEG-Y file (unlabelled,
/// fitted to `geometry`, which needs `traces_per_gather`).
pub fn load_gathers(
    path: impl AsRef<Path>,
    traces_per_gather: Option<usize>,
    geometry: &GatherGeometry,
) -> Result<Vec<LabelledGather>> {
    let path = path.as_ref();
    if is_segy(path) {
        let tpg = traces_per_gather
            .ok_or_else(|| Error::Config("SEG-Y input needs traces_per_gather".into()))?;
        Ok(read_segy_gathers(path, tpg, geometry)?
            .into_iter()
            .map(|x| LabelledGather { x, y: None })
            .collect())
    } else {
        Ok(read_dataset(path)?
            .pairs
            .into_iter()
            .map(|p| LabelledGather { x: p.x, y: Some(p.y) })
            .collect())
    }
}
