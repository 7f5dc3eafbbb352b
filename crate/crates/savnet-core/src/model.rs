//! The joint attribute network: a VGG-style encoder producing a feature map
//! f(x), a global head (BaseMod) scoring all attributes from pooled
//! features, and a prototype head (ProtoMod) scoring each attribute by its
//! best-matching spatial location.
//!
//! Scores g and h are raw reals; consumers squash them with Sigmoid or Tanh
//! as their loss or inference rule requires.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::attributes::NUM_ATTRIBUTES;
use crate::audio::{MelSpectrogram, N_FRAMES, N_MELS};
use crate::tape::{GradientTape, NodeId, Padding};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Encoder layout: each block is `conv_count` 3x3 same-padding relu convs at
/// `channels` width, followed by one 2x2/2 max pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub blocks: Vec<(usize, usize)>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            blocks: vec![(16, 1), (32, 1), (64, 1)],
        }
    }
}

impl EncoderConfig {
    /// Parse the config-file syntax `16x1,32x1,64x1` (channels x convs).
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut blocks = Vec::new();
        for part in text.split(',') {
            let part = part.trim();
            let (c, n) = part
                .split_once('x')
                .ok_or_else(|| ModelError::Config(format!("bad encoder block `{part}`")))?;
            let channels: usize = c
                .trim()
                .parse()
                .map_err(|_| ModelError::Config(format!("bad channel count `{c}`")))?;
            let convs: usize = n
                .trim()
                .parse()
                .map_err(|_| ModelError::Config(format!("bad conv count `{n}`")))?;
            if channels == 0 || convs == 0 {
                return Err(ModelError::Config(format!("zero-sized block `{part}`")));
            }
            blocks.push((channels, convs));
        }
        if blocks.is_empty() {
            return Err(ModelError::Config(
                "encoder needs at least one block".into(),
            ));
        }
        Ok(Self { blocks })
    }

    pub fn to_config_string(&self) -> String {
        self.blocks
            .iter()
            .map(|(c, n)| format!("{c}x{n}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Output (C,H,W) for the fixed 80x100 input, or a config error if any
    /// pool would act on a dimension smaller than its window.
    pub fn feature_shape(&self) -> Result<(usize, usize, usize), ModelError> {
        if self.blocks.is_empty() {
            return Err(ModelError::Config(
                "encoder needs at least one block".into(),
            ));
        }
        let (mut h, mut w) = (N_MELS, N_FRAMES);
        for (i, &(channels, convs)) in self.blocks.iter().enumerate() {
            if channels == 0 || convs == 0 {
                return Err(ModelError::Config(format!("zero-sized block {i}")));
            }
            if h < 2 || w < 2 {
                return Err(ModelError::Config(format!(
                    "block {i}: spatial dims {h}x{w} too small to pool"
                )));
            }
            h /= 2;
            w /= 2;
        }
        Ok((self.blocks.last().unwrap().0, h, w))
    }
}

/// Everything init needs beyond the encoder: the width of the two hidden
/// BaseMod layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub basemod_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            basemod_hidden: 128,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub kernels: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// All learnable tensors plus the config that shaped them.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub convs: Vec<ConvLayer>,
    pub fc1: LinearLayer,
    pub fc2: LinearLayer,
    pub fc3: LinearLayer,
    /// K x C, one row per attribute.
    pub prototypes: Tensor,
}

fn glorot(rng: &mut ChaCha8Rng, dims: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    let n: usize = dims.iter().product();
    let data: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(dims, data).expect("finite init values")
}

/// Deterministic parameter initialization: Glorot-uniform weights, zero
/// biases, prototype rows ~ N(0, 1/sqrt(C)). Draw order is fixed (convs,
/// then the three linear layers, then prototypes), so a seed fully
/// determines every tensor.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams, ModelError> {
    let (c_out, _, _) = config.encoder.feature_shape()?;
    if config.basemod_hidden == 0 {
        return Err(ModelError::Config(
            "basemod hidden width must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut convs = Vec::new();
    let mut c_in = 1usize;
    for &(channels, count) in &config.encoder.blocks {
        for _ in 0..count {
            let kernels = glorot(&mut rng, vec![channels, c_in, 3, 3], c_in * 9, channels * 9);
            let bias = Tensor::zeros(vec![channels])?;
            convs.push(ConvLayer { kernels, bias });
            c_in = channels;
        }
    }

    let hidden = config.basemod_hidden;
    let fc1 = LinearLayer {
        weight: glorot(&mut rng, vec![hidden, c_out], c_out, hidden),
        bias: Tensor::zeros(vec![hidden])?,
    };
    let fc2 = LinearLayer {
        weight: glorot(&mut rng, vec![hidden, hidden], hidden, hidden),
        bias: Tensor::zeros(vec![hidden])?,
    };
    let fc3 = LinearLayer {
        weight: glorot(
            &mut rng,
            vec![NUM_ATTRIBUTES, hidden],
            hidden,
            NUM_ATTRIBUTES,
        ),
        bias: Tensor::zeros(vec![NUM_ATTRIBUTES])?,
    };

    let proto_dist = Normal::new(0.0, 1.0 / (c_out as f64).sqrt()).expect("positive std");
    let proto_data: Vec<f64> = (0..NUM_ATTRIBUTES * c_out)
        .map(|_| proto_dist.sample(&mut rng))
        .collect();
    let prototypes = Tensor::new(vec![NUM_ATTRIBUTES, c_out], proto_data)?;

    Ok(ModelParams {
        config: config.clone(),
        convs,
        fc1,
        fc2,
        fc3,
        prototypes,
    })
}

impl ModelParams {
    /// Named views of every learnable tensor, in a fixed order shared by the
    /// optimizer and the checkpoint format.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.kernels"), &layer.kernels));
            out.push((format!("conv{i}.bias"), &layer.bias));
        }
        for (name, layer) in [("fc1", &self.fc1), ("fc2", &self.fc2), ("fc3", &self.fc3)] {
            out.push((format!("basemod.{name}.weight"), &layer.weight));
            out.push((format!("basemod.{name}.bias"), &layer.bias));
        }
        out.push(("prototypes".to_string(), &self.prototypes));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.convs.iter_mut().enumerate() {
            out.push((format!("conv{i}.kernels"), &mut layer.kernels));
            out.push((format!("conv{i}.bias"), &mut layer.bias));
        }
        for (name, layer) in [
            ("fc1", &mut self.fc1),
            ("fc2", &mut self.fc2),
            ("fc3", &mut self.fc3),
        ] {
            out.push((format!("basemod.{name}.weight"), &mut layer.weight));
            out.push((format!("basemod.{name}.bias"), &mut layer.bias));
        }
        out.push(("prototypes".to_string(), &mut self.prototypes));
        out
    }

    /// Record every parameter as a leaf on `tape`. One bound model per
    /// sample tape; leaf order mirrors [`ModelParams::tensors`].
    pub fn bind(&self, tape: &mut GradientTape) -> BoundModel {
        let conv_blocks = self
            .config
            .encoder
            .blocks
            .iter()
            .map(|&(_, count)| count)
            .collect();
        let convs = self
            .convs
            .iter()
            .map(|l| (tape.leaf(l.kernels.clone()), tape.leaf(l.bias.clone())))
            .collect();
        let fcs = [&self.fc1, &self.fc2, &self.fc3]
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())));
        let prototypes = tape.leaf(self.prototypes.clone());
        BoundModel {
            conv_blocks,
            convs,
            fcs,
            prototypes,
        }
    }
}

/// Parameter leaves of one model on one tape.
pub struct BoundModel {
    /// Convs per block, to know where the pools go.
    conv_blocks: Vec<usize>,
    convs: Vec<(NodeId, NodeId)>,
    fcs: [(NodeId, NodeId); 3],
    pub prototypes: NodeId,
}

/// Node handles of one full forward pass.
pub struct ForwardPass {
    /// Feature map f(x), [C,H,W].
    pub f: NodeId,
    /// Global attribute scores g(x), [K].
    pub g: NodeId,
    /// Local attribute scores h(x), [K].
    pub h: NodeId,
    /// Similarity maps M, [K,H,W].
    pub maps: NodeId,
}

impl BoundModel {
    /// Parameter leaf ids in the same order as [`ModelParams::tensors`],
    /// so gradients line up with optimizer state.
    pub fn param_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.convs.len() * 2 + 7);
        for &(kernels, bias) in &self.convs {
            out.push(kernels);
            out.push(bias);
        }
        for &(weight, bias) in &self.fcs {
            out.push(weight);
            out.push(bias);
        }
        out.push(self.prototypes);
        out
    }

    /// Conv/pool stack: x [1,80,100] -> f [C,H,W].
    pub fn encode(&self, tape: &mut GradientTape, x: NodeId) -> Result<NodeId, TensorError> {
        let mut cur = x;
        let mut conv_idx = 0;
        for &count in &self.conv_blocks {
            for _ in 0..count {
                let (kernels, bias) = self.convs[conv_idx];
                conv_idx += 1;
                let z = tape.conv2d(cur, kernels, bias, Padding::Same)?;
                cur = tape.relu(z)?;
            }
            cur = tape.maxpool2d(cur)?;
        }
        Ok(cur)
    }

    /// Global head: GAP then two relu layers then a linear layer of width K.
    pub fn basemod(&self, tape: &mut GradientTape, f: NodeId) -> Result<NodeId, TensorError> {
        let pooled = tape.global_average_pool(f)?;
        let (w1, b1) = self.fcs[0];
        let z1 = tape.linear(pooled, w1, b1)?;
        let a1 = tape.relu(z1)?;
        let (w2, b2) = self.fcs[1];
        let z2 = tape.linear(a1, w2, b2)?;
        let a2 = tape.relu(z2)?;
        let (w3, b3) = self.fcs[2];
        tape.linear(a2, w3, b3)
    }

    /// Local head: similarity maps and their per-attribute spatial maxima.
    pub fn protomod(
        &self,
        tape: &mut GradientTape,
        f: NodeId,
    ) -> Result<(NodeId, NodeId), TensorError> {
        let maps = tape.similarity_maps(f, self.prototypes)?;
        let h = tape.spatial_max(maps)?;
        Ok((h, maps))
    }

    /// Full joint pass on a single tape, so gradients from either head flow
    /// into the shared encoder.
    pub fn forward(
        &self,
        tape: &mut GradientTape,
        x: &MelSpectrogram,
    ) -> Result<ForwardPass, TensorError> {
        let input = tape.leaf(x.values().clone());
        let f = self.encode(tape, input)?;
        let g = self.basemod(tape, f)?;
        let (h, maps) = self.protomod(tape, f)?;
        Ok(ForwardPass { f, g, h, maps })
    }
}

/// Forward-only outputs for evaluation and visualization.
pub struct Inference {
    pub g: [f64; NUM_ATTRIBUTES],
    pub h: [f64; NUM_ATTRIBUTES],
    pub maps: Tensor,
    /// Flat spatial argmax per attribute (first row-major on ties).
    pub argmax: Vec<usize>,
}

/// Run one clip through the model without keeping the tape.
pub fn infer(params: &ModelParams, x: &MelSpectrogram) -> Result<Inference, ModelError> {
    let mut tape = GradientTape::new();
    let bound = params.bind(&mut tape);
    let pass = bound.forward(&mut tape, x)?;
    let mut g = [0.0; NUM_ATTRIBUTES];
    g.copy_from_slice(tape.value(pass.g).data());
    let mut h = [0.0; NUM_ATTRIBUTES];
    h.copy_from_slice(tape.value(pass.h).data());
    let argmax = tape
        .spatial_argmax(pass.h)
        .expect("h is a spatial_max node")
        .to_vec();
    Ok(Inference {
        g,
        h,
        maps: tape.value(pass.maps).clone(),
        argmax,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
