use std::path::{Path, PathBuf};

use super::plot::gather_image;
use super::train::{demultiple_exact, gather_metrics};
use crate::error::{Error, Result};
use crate::gather::Gather;
use crate::io::write_pgm;
use crate::metrics::{GatherMetrics, Metric, MetricReport};
use crate::radon::{radon_demultiple, RadonConfig};
use crate::unet::Model;

/// Panel names, in the order they are written for each gather.
pub const PANELS: [&str; 5] = [
    "input",
    "unet_primaries",
    "unet_removed",
    "radon_primaries",
    "radon_removed",
];

/// A gather to process, with its multiple-free label when known.
#[derive(Clone, Debug)]
pub struct LabelledGather {
    pub x: Gather,
    pub y: Option<Gather>,
}

/// Both methods' split of one gather.
#[derive(Clone, Debug)]
pub struct Separation {
    pub unet: (Gather, Gather),
    pub radon: (Gather, Gather),
    pub radon_converged: bool,
}

pub fn separate(model: &Model, transpose: bool, radon: &RadonConfig, x: &Gather) -> Result<Separation> {
    let unet = demultiple_exact(model, x, transpose)?;
    let r = radon_demultiple(x, radon)?;
    Ok(Separation {
        unet,
        radon: (r.primaries, r.multiples),
        radon_converged: r.stats.converged,
    })
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub n_gathers: usize,
    pub panels: Vec<PathBuf>,
    /// `(method, report)` for `input`, `unet` and `radon`; empty when no
    /// gather has a label.
    pub table: Vec<(String, MetricReport)>,
}

/// Writes five panels per gather into `out_dir` and, for labelled
/// gathers, a `metrics.csv` table of each method's primaries against the
/// label. All panels of a gather share the input's amplitude scale.
pub fn compare_radon(
    model: &Model,
    transpose: bool,
    radon: &RadonConfig,
    gathers: &[LabelledGather],
    out_dir: impl AsRef<Path>,
) -> Result<CompareReport> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut panels = Vec::new();
    let mut scores: [Vec<GatherMetrics>; 3] = Default::default();
    for (i, g) in gathers.iter().enumerate() {
        let sep = separate(model, transpose, radon, &g.x)?;
        if !sep.radon_converged {
            log::warn!("gather {i}: Radon inversion stopped before converging");
        }
        let clip = g.x.max_abs();
        let views = [&g.x, &sep.unet.0, &sep.unet.1, &sep.radon.0, &sep.radon.1];
        for (name, view) in PANELS.iter().zip(views) {
            let path = out.join(format!("gather{i:04}_{name}.pgm"));
            write_pgm(&path, &gather_image(view.data(), view.n_traces(), view.n_samples(), clip))?;
            panels.push(path);
        }
        if let Some(y) = &g.y {
            scores[0].push(gather_metrics(y, &g.x)?);
            scores[1].push(gather_metrics(y, &sep.unet.0)?);
            scores[2].push(gather_metrics(y, &sep.radon.0)?);
        }
    }
    let mut table = Vec::new();
    if !scores[0].is_empty() {
        for (name, s) in ["input", "unet", "radon"].iter().zip(&scores) {
            table.push((name.to_string(), MetricReport::from_samples(s)));
        }
        write_table_csv(out.join("metrics.csv"), &table)?;
    }
    Ok(CompareReport {
        n_gathers: gathers.len(),
        panels,
        table,
    })
}

/// Columns `method, metric, mean, std`.
pub fn write_table_csv(path: impl AsRef<Path>, table: &[(String, MetricReport)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "metric", "mean", "std"])?;
    for (method, report) in table {
        for m in Metric::ALL {
            let s = report.get(m);
            w.write_record([method.as_str(), m.name(), &s.mean.to_string(), &s.std.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
