use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gather::{split_exact, Gather};
use crate::io::{read_dataset, save_checkpoint, Dataset};
use crate::metrics::{mse, pcorr, snr_db, ssim, GatherMetrics, Metric, MetricReport, SSIM_RANGE};
use crate::nn::{Objective, OptimizerState};
use crate::synthgen::GatherPair;
use crate::tensor::{Graph, Tensor};
use crate::unet::{infer_demultiple, Model};

/// Name of the training-loss rows in per-seed logs.
pub const TRAIN_LOSS: &str = "train_loss";

/// One row of a per-seed log: `epoch, seed, metric, value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub epoch: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch.
    pub train_loss: f64,
    pub validation: MetricReport,
}

/// Outcome of training one seed.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    /// Every mini-batch loss in order.
    pub step_losses: Vec<f32>,
    /// Input-versus-label metrics, the do-nothing reference.
    pub baseline: MetricReport,
    pub model: Model,
}

impl TrainReport {
    pub fn final_validation(&self) -> &MetricReport {
        &self.history.last().expect("at least one epoch").validation
    }

    pub fn rows(&self) -> Vec<SeedRow> {
        let mut rows = Vec::new();
        for rec in &self.history {
            let mut push = |metric: &str, value| {
                rows.push(SeedRow {
                    epoch: rec.epoch,
                    seed: self.seed,
                    metric: metric.to_string(),
                    value,
                })
            };
            push(TRAIN_LOSS, rec.train_loss);
            for m in Metric::ALL {
                push(m.name(), rec.validation.get(m).mean);
            }
        }
        rows
    }
}

/// Metrics of `estimate` against `reference`. A constant estimate has no
/// defined peak correlation and scores 0 instead of failing the run.
pub fn gather_metrics(reference: &Gather, estimate: &Gather) -> Result<GatherMetrics> {
    let (r, e) = (reference.data(), estimate.data());
    let (rows, cols) = (reference.n_samples(), reference.n_traces());
    if e.len() != r.len() {
        return GatherMetrics::compute(reference, estimate);
    }
    let pc = match pcorr(r, e, rows, cols) {
        Ok((v, _)) => v,
        Err(Error::Metric { detail, .. }) => {
            log::warn!("pcorr undefined ({detail}); scoring 0");
            0.0
        }
        Err(e) => return Err(e),
    };
    Ok(GatherMetrics {
        mse: mse(r, e)?,
        snr_db: snr_db(r, e)?,
        ssim: ssim(r, e, rows, cols, SSIM_RANGE)?,
        pcorr: pc,
    })
}

/// Demultiple output of `model` on every pair, scored against `y`.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub per_pair: Vec<GatherMetrics>,
    pub report: MetricReport,
    pub baseline: MetricReport,
}

pub fn baseline(pairs: &[GatherPair]) -> Result<MetricReport> {
    let m = pairs
        .iter()
        .map(|p| gather_metrics(&p.y, &p.x))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_samples(&m))
}

pub fn evaluate(model: &Model, transpose: bool, pairs: &[GatherPair]) -> Result<Evaluation> {
    let objective = model.config.objective;
    let per_pair = pairs
        .iter()
        .map(|p| gather_metrics(&p.y, &infer_demultiple(model, &p.x, objective, transpose)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        report: MetricReport::from_samples(&per_pair),
        baseline: baseline(pairs)?,
        per_pair,
    })
}

/// Demultiple output split so that `primaries + removed == input`
/// exactly.
pub fn demultiple_exact(
    model: &Model,
    gather: &Gather,
    transpose: bool,
) -> Result<(Gather, Gather)> {
    let out = infer_demultiple(model, gather, model.config.objective, transpose)?;
    let estimate: Vec<f64> = gather
        .data()
        .iter()
        .zip(out.data())
        .map(|(&x, &o)| f64::from(x) - f64::from(o))
        .collect();
    let (p, r) = split_exact(gather.data(), &estimate);
    Ok((gather.with_data(p)?, gather.with_data(r)?))
}

fn batch_tensor(gathers: &[&Gather], transpose: bool) -> Result<Tensor<f32>> {
    let mut shape = gathers[0].to_tensor(transpose).shape().to_vec();
    shape[0] = gathers.len();
    let mut data = Vec::with_capacity(shape.iter().product());
    for g in gathers {
        data.extend_from_slice(g.to_tensor(transpose).data());
    }
    Tensor::new(shape, data)
}

/// One optimizer step on a mini-batch; returns the batch loss.
fn train_step(
    model: &mut Model,
    state: &mut OptimizerState<f32>,
    pairs: &[&GatherPair],
    objective: Objective,
    transpose: bool,
) -> Result<f32> {
    let inputs: Vec<&Gather> = pairs.iter().map(|p| &p.x).collect();
    let targets: Vec<Gather> = pairs
        .iter()
        .map(|p| p.x.with_data(objective.target(p.x.data(), p.y.data())))
        .collect::<Result<_>>()?;
    let x = batch_tensor(&inputs, transpose)?;
    let t = batch_tensor(&targets.iter().collect::<Vec<_>>(), transpose)?;
    let mut g = Graph::new();
    let bound = model.params.bind(&mut g);
    let xv = g.constant(x);
    let out = model.forward(&mut g, &bound, xv, Default::default())?;
    let tv = g.constant(t);
    let loss = g.mse_loss(out.output, tv)?;
    let value = g.value(loss).data()[0];
    g.backward(loss)?;
    let grads: Vec<Option<Vec<f32>>> = bound.iter().map(|&v| g.take_grad(v)).collect();
    // release the graph's references so the update is in place
    drop(g);
    let grads: Vec<Option<&[f32]>> = grads.iter().map(|g| g.as_deref()).collect();
    state.step(&mut model.params.data_mut(), &grads)?;
    Ok(value)
}

/// Trains one seed. `on_epoch` sees each record as soon as it exists.
pub fn train_seed(
    cfg: &ExperimentConfig,
    train: &Dataset,
    val: &Dataset,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let unet = cfg.unet()?;
    let mut model = Model::build(&unet, seed)?;
    let mut state = OptimizerState::new(cfg.optimizer.to_config());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let baseline = baseline(&val.pairs)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0f64;
        let mut batches = 0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&GatherPair> = chunk.iter().map(|&i| &train.pairs[i]).collect();
            let loss = train_step(&mut model, &mut state, &batch, unet.objective, cfg.transpose)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step, loss });
            }
            step_losses.push(loss);
            sum += f64::from(loss);
            batches += 1;
        }
        let validation = evaluate(&model, cfg.transpose, &val.pairs)?.report;
        let rec = EpochRecord {
            epoch,
            train_loss: sum / batches as f64,
            validation,
        };
        log::info!(
            "seed {seed} epoch {epoch}/{}: loss {:.4e}, val {}",
            cfg.epochs,
            rec.train_loss,
            rec.validation
        );
        on_epoch(&rec);
        history.push(rec);
    }
    Ok(TrainReport {
        seed,
        history,
        step_losses,
        baseline,
        model,
    })
}

pub fn write_seed_csv(path: impl AsRef<Path>, rows: &[SeedRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "seed", "metric", "value"])?;
    for r in rows {
        w.write_record([r.epoch.to_string(), r.seed.to_string(), r.metric.clone(), r.value.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_seed_csv(path: impl AsRef<Path>) -> Result<Vec<SeedRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Files written for one seed.
#[derive(Clone, Debug)]
pub struct SeedOutput {
    pub dir: PathBuf,
    pub metrics_csv: PathBuf,
    pub checkpoint: PathBuf,
}

impl SeedOutput {
    pub fn under(output_dir: &Path, seed: u64) -> Self {
        let dir = output_dir.join(format!("seed_{seed}"));
        SeedOutput {
            metrics_csv: dir.join("metrics.csv"),
            checkpoint: dir.join("model.dmlw"),
            dir,
        }
    }
}

/// Trains one seed and writes its log and checkpoint.
pub fn run_seed(cfg: &ExperimentConfig, train: &Dataset, val: &Dataset, seed: u64) -> Result<TrainReport> {
    let out = SeedOutput::under(&cfg.output_dir, seed);
    std::fs::create_dir_all(&out.dir).map_err(|e| Error::io(&out.dir, e))?;
    let report = train_seed(cfg, train, val, seed, |_| {})?;
    write_seed_csv(&out.metrics_csv, &report.rows())?;
    save_checkpoint(&out.checkpoint, &report.model, cfg.transpose)?;
    Ok(report)
}

/// Datasets named by the config, checked for matching geometry.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let train = read_dataset(&cfg.train_data)?;
    let val = read_dataset(&cfg.val_data)?;
    if train.geometry.n_traces != val.geometry.n_traces || train.geometry.n_samples != val.geometry.n_samples {
        return Err(Error::Config(format!(
            "training gathers are {}x{} but validation gathers are {}x{}",
            train.geometry.n_traces, train.geometry.n_samples, val.geometry.n_traces, val.geometry.n_samples
        )));
    }
    Ok((train, val))
}
