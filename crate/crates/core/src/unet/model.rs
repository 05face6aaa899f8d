use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gather::Gather;
use crate::nn::{Conv2dLayer, ConvBlock, ConvTransposeLayer, Objective, Params};
use crate::tensor::{Graph, Padding, Tensor, Var};

use super::config::{DownMode, UNetConfig, UpMode};

#[derive(Clone, Debug, PartialEq)]
pub enum Down {
    Pool((usize, usize)),
    Conv(Conv2dLayer),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Up {
    Bilinear((usize, usize)),
    Transposed(ConvTransposeLayer),
}

/// Per-call switches for [`Model::forward`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    /// Keep every block's output.
    pub capture: bool,
    /// Feed zeros instead of the encoder features into every skip.
    pub zero_skips: bool,
}

pub struct ForwardOutput {
    pub output: Var,
    /// Block outputs in block order, when capture was requested.
    pub activations: Option<Vec<Arc<Tensor<f32>>>>,
}

/// Blocks are numbered encoder `0..L`, bottleneck `L`, decoder
/// `L+1..=2L` (shallowest decoder block last).
#[derive(Clone, Debug)]
pub struct Model {
    pub config: UNetConfig,
    pub params: Params<f32>,
    encoder: Vec<(ConvBlock, Down)>,
    bottleneck: ConvBlock,
    /// Deepest level first.
    decoder: Vec<(Up, ConvBlock)>,
    head: Conv2dLayer,
}

impl Model {
    pub fn build(config: &UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let schedule = &config.kernel_schedule.0;
        let mut encoder = Vec::with_capacity(schedule.len());
        let mut cin = 1;
        for (level, k) in schedule.iter().enumerate() {
            let c = config.channels(level);
            let block = ConvBlock::new(&mut params, &format!("enc{level}"), cin, c, &mut rng);
            let down = match config.down_mode {
                DownMode::Maxpool => Down::Pool(k.hw()),
                DownMode::StridedConv => Down::Conv(Conv2dLayer::new(
                    &mut params,
                    &format!("down{level}"),
                    c,
                    c,
                    k.hw(),
                    k.hw(),
                    Padding::Valid,
                    &mut rng,
                )),
            };
            encoder.push((block, down));
            cin = c;
        }
        let levels = schedule.len();
        let bottleneck = ConvBlock::new(&mut params, "bottleneck", cin, config.channels(levels), &mut rng);
        let mut decoder = Vec::with_capacity(levels);
        for (level, k) in schedule.iter().enumerate().rev() {
            let deep = config.channels(level + 1);
            let up = match config.up_mode {
                UpMode::Bilinear => Up::Bilinear(k.hw()),
                UpMode::TransposedConv => Up::Transposed(ConvTransposeLayer::new(
                    &mut params,
                    &format!("up{level}"),
                    deep,
                    k.hw(),
                    &mut rng,
                )),
            };
            let c = config.channels(level);
            let block = ConvBlock::new(&mut params, &format!("dec{level}"), deep + c, c, &mut rng);
            decoder.push((up, block));
        }
        let head = Conv2dLayer::new(
            &mut params,
            "head",
            config.channels(0),
            1,
            (1, 1),
            (1, 1),
            Padding::Same,
            &mut rng,
        );
        Ok(Model {
            config: config.clone(),
            params,
            encoder,
            bottleneck,
            decoder,
            head,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn n_blocks(&self) -> usize {
        2 * self.encoder.len() + 1
    }

    pub fn block(&self, id: usize) -> Result<&ConvBlock> {
        let levels = self.encoder.len();
        match id {
            i if i < levels => Ok(&self.encoder[i].0),
            i if i == levels => Ok(&self.bottleneck),
            i if i <= 2 * levels => Ok(&self.decoder[i - levels - 1].1),
            _ => Err(Error::NoSuchBlock(id)),
        }
    }

    /// Runs the network on `x` (`[N, 1, H, W]`) inside `g`, with `bound`
    /// from `self.params.bind(g)`.
    pub fn forward(
        &self,
        g: &mut Graph<f32>,
        bound: &[Var],
        x: Var,
        opts: ForwardOptions,
    ) -> Result<ForwardOutput> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 4 || shape[1] != 1 {
            return Err(Error::shape(
                "unet",
                format!("expected [N, 1, H, W] input, got {shape:?}"),
            ));
        }
        self.config.kernel_schedule.check_input(shape[2], shape[3])?;
        let mut captured = Vec::new();
        let mut keep = |g: &Graph<f32>, v: Var| {
            if opts.capture {
                captured.push(g.shared_value(v));
            }
        };
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = x;
        for (block, down) in &self.encoder {
            h = block.forward(g, bound, h)?;
            keep(g, h);
            skips.push(h);
            h = match down {
                Down::Pool(k) => g.maxpool2d(h, *k)?,
                Down::Conv(conv) => conv.forward(g, bound, h)?,
            };
        }
        h = self.bottleneck.forward(g, bound, h)?;
        keep(g, h);
        for (up, block) in &self.decoder {
            h = match up {
                Up::Bilinear(f) => g.bilinear_upsample(h, *f)?,
                Up::Transposed(t) => t.forward(g, bound, h)?,
            };
            let mut skip = skips.pop().expect("one skip per level");
            if opts.zero_skips {
                skip = g.constant(Tensor::zeros(g.value(skip).shape().to_vec()));
            }
            h = g.concat_channels(h, skip)?;
            h = block.forward(g, bound, h)?;
            keep(g, h);
        }
        let output = self.head.forward(g, bound, h)?;
        Ok(ForwardOutput {
            output,
            activations: opts.capture.then_some(captured),
        })
    }

    /// Forward pass on a batch outside of training.
    pub fn predict(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.predict_with(batch, ForwardOptions::default()).map(|(t, _)| t)
    }

    pub fn predict_with(
        &self,
        batch: &Tensor<f32>,
        opts: ForwardOptions,
    ) -> Result<(Tensor<f32>, Option<Vec<Arc<Tensor<f32>>>>)> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let x = g.constant(batch.clone());
        let out = self.forward(&mut g, &bound, x, opts)?;
        Ok((g.value(out.output).clone(), out.activations))
    }

    /// Replaces every weight tensor, keeping the architecture.
    pub fn load_weights(&mut self, blobs: Vec<Vec<f32>>) -> Result<()> {
        if blobs.len() != self.params.len() {
            return Err(Error::shape(
                "load_weights",
                format!("{} tensors for a model with {}", blobs.len(), self.params.len()),
            ));
        }
        for (i, blob) in blobs.into_iter().enumerate() {
            let t = self.params.get_mut(i);
            if blob.len() != t.numel() {
                return Err(Error::shape(
                    "load_weights",
                    format!("tensor {i} expects {} values, got {}", t.numel(), blob.len()),
                ));
            }
            t.data_mut().copy_from_slice(&blob);
        }
        Ok(())
    }
}

/// Demultiple one gather. `transpose` feeds the network `[trace, time]`
/// images instead of `[time, trace]`.
pub fn infer_demultiple(
    model: &Model,
    gather: &Gather,
    objective: Objective,
    transpose: bool,
) -> Result<Gather> {
    let pred = model.predict(&gather.to_tensor(transpose))?;
    let pred = Gather::from_image(gather.geometry.clone(), pred.data(), transpose)?;
    gather.with_data(objective.demultiple(gather.data(), pred.data()))
}
