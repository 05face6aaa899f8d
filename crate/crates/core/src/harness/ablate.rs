use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::plot::{line_plot, Series};
use super::train::{load_datasets, run_seed, SeedRow, TrainReport, TRAIN_LOSS};
use crate::error::{Error, Result};
use crate::io::{write_pgm, Dataset};
use crate::metrics::Metric;

/// Mean and population standard deviation across seeds of one metric at
/// one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricCurve {
    pub run_id: String,
    pub points: Vec<CurvePoint>,
}

impl MetricCurve {
    pub fn series(&self, metric: &str) -> Vec<&CurvePoint> {
        self.points.iter().filter(|p| p.metric == metric).collect()
    }

    pub fn final_point(&self, metric: &str) -> Option<&CurvePoint> {
        self.series(metric).into_iter().max_by_key(|p| p.epoch)
    }
}

/// Groups rows by `(epoch, metric)` in order of first appearance and
/// summarizes each group over its seeds in row order.
pub fn aggregate(run_id: &str, rows: &[SeedRow]) -> MetricCurve {
    let mut keys: Vec<(usize, &str)> = Vec::new();
    let mut groups: HashMap<(usize, &str), Vec<f64>> = HashMap::new();
    for r in rows {
        let key = (r.epoch, r.metric.as_str());
        groups
            .entry(key)
            .or_insert_with(|| {
                keys.push(key);
                Vec::new()
            })
            .push(r.value);
    }
    let points = keys
        .into_iter()
        .map(|key| {
            let v = &groups[&key];
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
            CurvePoint {
                epoch: key.0,
                metric: key.1.to_string(),
                mean,
                std,
            }
        })
        .collect();
    MetricCurve {
        run_id: run_id.to_string(),
        points,
    }
}

/// Columns `epoch, metric, mean, std, run_id`.
pub fn write_curves_csv(path: impl AsRef<Path>, curves: &[MetricCurve]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "metric", "mean", "std", "run_id"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                p.epoch.to_string(),
                p.metric.clone(),
                p.mean.to_string(),
                p.std.to_string(),
                c.run_id.clone(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curves_csv(path: impl AsRef<Path>) -> Result<Vec<MetricCurve>> {
    #[derive(Deserialize)]
    struct Row {
        epoch: usize,
        metric: String,
        mean: f64,
        std: f64,
        run_id: String,
    }
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let mut curves: Vec<MetricCurve> = Vec::new();
    for row in r.deserialize::<Row>() {
        let row = row?;
        let point = CurvePoint {
            epoch: row.epoch,
            metric: row.metric,
            mean: row.mean,
            std: row.std,
        };
        match curves.iter_mut().find(|c| c.run_id == row.run_id) {
            Some(c) => c.points.push(point),
            None => curves.push(MetricCurve {
                run_id: row.run_id,
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

/// One PGM per metric with a mean line and dotted ±std band per curve.
pub fn plot_curves(dir: impl AsRef<Path>, curves: &[MetricCurve]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let names = std::iter::once(TRAIN_LOSS).chain(Metric::ALL.iter().map(|m| m.name()));
    let mut written = Vec::new();
    for name in names {
        let series: Vec<Series> = curves
            .iter()
            .map(|c| {
                let pts = c.series(name);
                Series {
                    points: pts.iter().map(|p| (p.epoch as f64, p.mean)).collect(),
                    band: Some(pts.iter().map(|p| p.std).collect()),
                }
            })
            .collect();
        if series.iter().all(|s| s.points.is_empty()) {
            continue;
        }
        let path = dir.join(format!("curve_{name}.pgm"));
        write_pgm(&path, &line_plot(&series))?;
        written.push(path);
    }
    Ok(written)
}

/// Runs every seed of `cfg` on up to `threads` threads. Results come back
/// in seed order and do not depend on the thread count.
pub fn run_seeds(
    cfg: &ExperimentConfig,
    train: &Dataset,
    val: &Dataset,
    threads: usize,
) -> Vec<Result<TrainReport>> {
    let n = cfg.seeds.len();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<TrainReport>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = run_seed(cfg, train, val, cfg.seeds[i]);
                slots.lock().expect("no poisoned slot")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned slot")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect()
}

/// Per-seed logs concatenated in seed order.
pub fn seed_rows(reports: &[TrainReport]) -> Vec<SeedRow> {
    reports.iter().flat_map(|r| r.rows()).collect()
}

/// Trains every seed of one experiment, writing per-seed logs, the
/// aggregated `curves.csv` and curve plots into its output directory.
pub fn train_experiment(
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<(MetricCurve, Vec<TrainReport>)> {
    cfg.validate()?;
    let (train, val) = load_datasets(cfg)?;
    train_on(cfg, &train, &val, "train", threads)
}

fn train_on(
    cfg: &ExperimentConfig,
    train: &Dataset,
    val: &Dataset,
    run_id: &str,
    threads: usize,
) -> Result<(MetricCurve, Vec<TrainReport>)> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    std::fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml())
        .map_err(|e| Error::io(&cfg.output_dir, e))?;
    let reports = run_seeds(cfg, train, val, threads)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let curve = aggregate(run_id, &seed_rows(&reports));
    write_curves_csv(cfg.output_dir.join("curves.csv"), std::slice::from_ref(&curve))?;
    plot_curves(&cfg.output_dir, std::slice::from_ref(&curve))?;
    Ok((curve, reports))
}

/// A named change to the base experiment, merged key by key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub set: toml::Table,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationGrid {
    pub base: ExperimentConfig,
    pub variants: Vec<Variant>,
}

fn merge(into: &mut toml::Table, delta: &toml::Table) {
    for (k, v) in delta {
        match (into.get_mut(k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            _ => {
                into.insert(k.clone(), v.clone());
            }
        }
    }
}

impl AblationGrid {
    /// Parses a grid file. `base` is either an inline experiment table or
    /// the path of an experiment file; relative paths resolve against
    /// `dir`.
    pub fn from_toml(text: &str, dir: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            base: toml::Value,
            #[serde(rename = "variant", default)]
            variants: Vec<Variant>,
        }
        let raw: Raw = toml::from_str(text)?;
        let base = match raw.base {
            toml::Value::String(p) => ExperimentConfig::from_file(dir.join(p))?,
            toml::Value::Table(t) => {
                let mut cfg: ExperimentConfig = t.try_into()?;
                cfg.validate()?;
                cfg.rebase(dir);
                cfg
            }
            other => {
                return Err(Error::Config(format!(
                    "grid base must be a table or a file path, got {}",
                    other.type_str()
                )))
            }
        };
        let grid = AblationGrid {
            base,
            variants: raw.variants,
        };
        grid.check_names()?;
        Ok(grid)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new("")))
    }

    fn check_names(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("grid has no variants".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.variants {
            let ok = !v.name.is_empty()
                && v.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
            if !ok {
                return Err(Error::Config(format!("variant name {:?} is not a plain file name", v.name)));
            }
            if !seen.insert(&v.name) {
                return Err(Error::Config(format!("duplicate variant name {:?}", v.name)));
            }
        }
        Ok(())
    }

    /// The base config with `variant` applied; its output goes to
    /// `<base output>/<variant name>`.
    pub fn variant_config(&self, variant: &Variant) -> Result<ExperimentConfig> {
        let mut table = toml::Table::try_from(&self.base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut table, &variant.set);
        let mut cfg: ExperimentConfig = table.try_into()?;
        cfg.output_dir = self.base.output_dir.join(&variant.name);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug)]
pub struct VariantOutcome {
    pub name: String,
    pub result: Result<MetricCurve>,
}

#[derive(Debug)]
pub struct AblationReport {
    pub outcomes: Vec<VariantOutcome>,
}

impl AblationReport {
    pub fn curves(&self) -> Vec<&MetricCurve> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect()
    }

    pub fn failures(&self) -> Vec<(&str, &Error)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err().map(|e| (o.name.as_str(), e)))
            .collect()
    }
}

/// Runs every variant over every seed. A failing variant is recorded and
/// the rest of the grid still runs. Writes `curves.csv` (all variants),
/// `summary.csv` (final epoch per variant) and curve plots into the base
/// output directory.
pub fn ablate(grid: &AblationGrid, threads: usize) -> Result<AblationReport> {
    let out = &grid.base.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut cache: HashMap<(PathBuf, PathBuf), (Dataset, Dataset)> = HashMap::new();
    let mut outcomes = Vec::new();
    for v in &grid.variants {
        let result = grid.variant_config(v).and_then(|cfg| {
            let key = (cfg.train_data.clone(), cfg.val_data.clone());
            if !cache.contains_key(&key) {
                let data = load_datasets(&cfg)?;
                cache.insert(key.clone(), data);
            }
            let (train, val) = &cache[&key];
            train_on(&cfg, train, val, &v.name, threads).map(|(c, _)| c)
        });
        if let Err(e) = &result {
            log::error!("variant {} failed: {e}", v.name);
        }
        outcomes.push(VariantOutcome {
            name: v.name.clone(),
            result,
        });
    }
    let report = AblationReport { outcomes };
    let curves: Vec<MetricCurve> = report.curves().into_iter().cloned().collect();
    write_curves_csv(out.join("curves.csv"), &curves)?;
    write_summary_csv(out.join("summary.csv"), &report)?;
    plot_curves(out, &curves)?;
    Ok(report)
}

/// Final-epoch mean ± std of each metric per variant, plus one row per
/// failed variant with its error.
fn write_summary_csv(path: impl AsRef<Path>, report: &AblationReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run_id", "metric", "final_mean", "final_std", "error"])?;
    for o in &report.outcomes {
        match &o.result {
            Ok(c) => {
                let names = std::iter::once(TRAIN_LOSS).chain(Metric::ALL.iter().map(|m| m.name()));
                for name in names {
                    if let Some(p) = c.final_point(name) {
                        w.write_record([o.name.as_str(), name, &p.mean.to_string(), &p.std.to_string(), ""])?;
                    }
                }
            }
            Err(e) => w.write_record([o.name.as_str(), "", "", "", &e.to_string()])?,
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
