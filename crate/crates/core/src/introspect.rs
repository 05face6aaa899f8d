//! Looking inside a trained U-net: filter dumps, weight statistics and
//! per-block feature maps.

use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gather::Gather;
use crate::io::{normalize_to_u8, write_pgm, Image};
use crate::nn::Conv2dLayer;
use crate::tensor::Tensor;
use crate::unet::{ForwardOptions, Model};

/// Default histogram resolution.
pub const HISTOGRAM_BINS: usize = 32;

/// Equal-width bins from the minimum to the maximum weight.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    /// `counts.len() + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// A constant sample gets one degenerate bin `[v, v]`.
    pub fn of(values: &[f64], bins: usize) -> Self {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if values.is_empty() {
            return Histogram {
                edges: vec![0.0, 0.0],
                counts: vec![0],
            };
        }
        if !(hi > lo) || bins <= 1 {
            return Histogram {
                edges: vec![lo, hi],
                counts: vec![values.len()],
            };
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
        edges.push(hi);
        let mut counts = vec![0; bins];
        for &v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Moments and histogram of every convolution weight in one block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterStats {
    pub block_id: usize,
    /// Number of 2D kernels (one per output/input channel pair).
    pub n_filters: usize,
    pub n_weights: usize,
    pub mean: f64,
    pub std: f64,
    /// Zero when the weights have no spread.
    pub skewness: f64,
    /// Zero when the weights have no spread.
    pub excess_kurtosis: f64,
    pub histogram: Histogram,
}

impl FilterStats {
    pub fn of(block_id: usize, n_filters: usize, weights: &[f64]) -> Self {
        let n = weights.len() as f64;
        let mean = weights.iter().sum::<f64>() / n;
        let central = |p: i32| weights.iter().map(|w| (w - mean).powi(p)).sum::<f64>() / n;
        let var = central(2);
        let std = var.sqrt();
        let (skewness, excess_kurtosis) = if var > 0.0 {
            (central(3) / std.powi(3), central(4) / (var * var) - 3.0)
        } else {
            (0.0, 0.0)
        };
        FilterStats {
            block_id,
            n_filters,
            n_weights: weights.len(),
            mean,
            std,
            skewness,
            excess_kurtosis,
            histogram: Histogram::of(weights, HISTOGRAM_BINS),
        }
    }
}

/// One 2D kernel of a block.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterImage {
    /// 1 or 2: which convolution of the block.
    pub conv: usize,
    pub out_channel: usize,
    pub in_channel: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl FilterImage {
    /// Min-max normalized, each weight drawn as a `scale × scale` square.
    pub fn to_image(&self, scale: usize) -> Image {
        upscale(&normalize_to_u8(&self.values), self.width, self.height, scale.max(1))
    }
}

fn upscale(pixels: &[u8], width: usize, height: usize, scale: usize) -> Image {
    let (w, h) = (width * scale, height * scale);
    let pixels = (0..w * h)
        .map(|i| pixels[(i / w / scale) * width + (i % w) / scale])
        .collect();
    Image {
        width: w,
        height: h,
        pixels,
    }
}

fn kernels(model: &Model, block_id: usize) -> Result<Vec<(usize, &Conv2dLayer, &Tensor<f32>)>> {
    let block = model.block(block_id)?;
    Ok([(1, &block.conv1), (2, &block.conv2)]
        .into_iter()
        .map(|(i, conv)| (i, conv, model.params.get(conv.weight)))
        .collect())
}

/// Statistics of all weights (biases excluded) in `block_id`.
pub fn block_stats(model: &Model, block_id: usize) -> Result<FilterStats> {
    let layers = kernels(model, block_id)?;
    let weights: Vec<f64> = layers
        .iter()
        .flat_map(|(_, _, t)| t.data().iter().map(|&v| f64::from(v)))
        .collect();
    let n_filters = layers.iter().map(|(_, c, _)| c.out_channels * c.in_channels).sum();
    Ok(FilterStats::of(block_id, n_filters, &weights))
}

/// Stats for every block, in block-id order.
pub fn all_block_stats(model: &Model) -> Result<Vec<FilterStats>> {
    (0..model.n_blocks()).map(|b| block_stats(model, b)).collect()
}

/// `k` kernels of `block_id` chosen by seeded sampling without
/// replacement, plus the block's weight statistics.
pub fn dump_filters(
    model: &Model,
    block_id: usize,
    k: usize,
    seed: u64,
) -> Result<(Vec<FilterImage>, FilterStats)> {
    let stats = block_stats(model, block_id)?;
    if k > stats.n_filters {
        return Err(Error::TooMany {
            requested: k,
            available: stats.n_filters,
        });
    }
    let layers = kernels(model, block_id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, stats.n_filters, k).into_vec();
    picks.sort_unstable();
    let images = picks
        .into_iter()
        .map(|mut idx| {
            let (conv, layer, tensor) = layers
                .iter()
                .find(|(_, c, _)| {
                    let n = c.out_channels * c.in_channels;
                    if idx < n {
                        true
                    } else {
                        idx -= n;
                        false
                    }
                })
                .expect("index below filter count");
            let (kh, kw) = layer.kernel;
            let area = kh * kw;
            FilterImage {
                conv: *conv,
                out_channel: idx / layer.in_channels,
                in_channel: idx % layer.in_channels,
                height: kh,
                width: kw,
                values: tensor.data()[idx * area..(idx + 1) * area].to_vec(),
            }
        })
        .collect();
    Ok((images, stats))
}

/// One channel of a block's output activation (first batch item).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub block_id: usize,
    pub channel: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl FeatureMap {
    /// Per-map min-max normalization to 8-bit gray.
    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: normalize_to_u8(&self.values),
        }
    }
}

/// Picks `k` channels of block `block_id` from activations recorded by a
/// forward pass with capture enabled.
pub fn select_feature_maps(
    activations: Option<&[Arc<Tensor<f32>>]>,
    block_id: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<FeatureMap>> {
    let acts = activations.ok_or(Error::CaptureDisabled)?;
    let act = acts.get(block_id).ok_or(Error::NoSuchBlock(block_id))?;
    let [_, c, h, w] = act.dims4("feature_maps")?;
    if k > c {
        return Err(Error::TooMany {
            requested: k,
            available: c,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, c, k).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .map(|ch| FeatureMap {
            block_id,
            channel: ch,
            height: h,
            width: w,
            values: act.data()[ch * h * w..(ch + 1) * h * w].to_vec(),
        })
        .collect())
}

/// Runs `gather` through `model` with capture on and picks `k` channels
/// of block `block_id`.
pub fn feature_maps(
    model: &Model,
    gather: &Gather,
    transpose: bool,
    block_id: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<FeatureMap>> {
    model.block(block_id)?;
    let opts = ForwardOptions {
        capture: true,
        ..Default::default()
    };
    let (_, acts) = model.predict_with(&gather.to_tensor(transpose), opts)?;
    select_feature_maps(acts.as_deref(), block_id, k, seed)
}

/// Writes one row of moments per block.
pub fn write_stats_csv(path: impl AsRef<Path>, stats: &[FilterStats]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["block", "n_filters", "n_weights", "mean", "std", "skewness", "excess_kurtosis"])?;
    for s in stats {
        w.write_record([
            s.block_id.to_string(),
            s.n_filters.to_string(),
            s.n_weights.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.skewness.to_string(),
            s.excess_kurtosis.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes one row per histogram bin of every block.
pub fn write_histogram_csv(path: impl AsRef<Path>, stats: &[FilterStats]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["block", "bin_low", "bin_high", "count"])?;
    for s in stats {
        let h = &s.histogram;
        for (i, count) in h.counts.iter().enumerate() {
            w.write_record([
                s.block_id.to_string(),
                h.edges[i].to_string(),
                h.edges[i + 1].to_string(),
                count.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Files written by [`export_block`].
#[derive(Clone, Debug, Default)]
pub struct ExportSummary {
    pub filter_images: Vec<std::path::PathBuf>,
    pub feature_images: Vec<std::path::PathBuf>,
}

/// Dumps `k_filters` kernels and `k_maps` feature maps of one block as
/// PGM files under `dir`.
#[allow(clippy::too_many_arguments)]
pub fn export_block(
    model: &Model,
    gather: &Gather,
    transpose: bool,
    block_id: usize,
    k_filters: usize,
    k_maps: usize,
    seed: u64,
    dir: impl AsRef<Path>,
) -> Result<ExportSummary> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut summary = ExportSummary::default();
    let (filters, _) = dump_filters(model, block_id, k_filters, seed)?;
    for f in &filters {
        let path = dir.join(format!(
            "block{block_id}_conv{}_filter_o{}_i{}.pgm",
            f.conv, f.out_channel, f.in_channel
        ));
        write_pgm(&path, &f.to_image(16))?;
        summary.filter_images.push(path);
    }
    for m in feature_maps(model, gather, transpose, block_id, k_maps, seed)? {
        let path = dir.join(format!("block{block_id}_map_c{}.pgm", m.channel));
        write_pgm(&path, &m.to_image())?;
        summary.feature_images.push(path);
    }
    Ok(summary)
}
