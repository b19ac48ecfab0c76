//! Model definition, initialization, forward graph and checkpointing.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{bifpn_fuse, gam, serial, spp, swin_block, FusionWeights, GamParams, SppConfig, SwinParams, FUSION_EPS};
use crate::error::{Error, Result};
use crate::tensor::kernels::permute_map;
use crate::tensor::{Element, Graph, NodeId, Tensor};

/// Total stride of the three stride-2 stem convolutions.
pub const STRIDE: usize = 8;
/// Output channels per grid cell: objectness plus four box offsets.
pub const HEAD_CHANNELS: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Square input extent; must be a multiple of `STRIDE * window_size`.
    pub input_size: usize,
    pub stem_channels: usize,
    pub window_size: usize,
    pub num_heads: usize,
    /// Pyramid pooling between the fusion node and the head; `None`
    /// drops the block (the head then sees `stem_channels` channels).
    pub spp: Option<SppConfig>,
    pub gam_reduction: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            input_size: 128,
            stem_channels: 8,
            window_size: 8,
            num_heads: 2,
            spp: Some(SppConfig::default()),
            gam_reduction: 4,
        }
    }
}

impl DetectorConfig {
    pub fn grid(&self) -> usize {
        self.input_size / STRIDE
    }

    /// Channels entering the attention-gating block and the head.
    pub fn head_in_channels(&self) -> usize {
        match &self.spp {
            Some(cfg) => self.stem_channels * cfg.channel_factor(),
            None => self.stem_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_size % STRIDE != 0 {
            return Err(Error::Config(format!(
                "input size {} must be a positive multiple of {STRIDE}",
                self.input_size
            )));
        }
        if self.grid() % self.window_size != 0 {
            return Err(Error::Config(format!(
                "grid {} must be a multiple of the window size {}",
                self.grid(),
                self.window_size
            )));
        }
        if let Some(spp) = &self.spp {
            spp.validate()?;
        }
        if self.head_in_channels() % self.gam_reduction != 0 {
            return Err(Error::Config(format!(
                "head channels {} not divisible by gam reduction {}",
                self.head_in_channels(),
                self.gam_reduction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ConvBlock<T: Element> {
    k: Tensor<T>,
    b: Tensor<T>,
}

impl<T: Element> ConvBlock<T> {
    fn init(out_c: usize, in_c: usize, kernel: usize, rng: &mut ChaCha12Rng) -> Self {
        let s = (6.0 / (in_c * kernel * kernel) as f64).sqrt();
        Self {
            k: Tensor::uniform(&[out_c, in_c, kernel, kernel], -s, s, rng),
            b: Tensor::zeros(&[out_c]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Detector<T: Element> {
    pub cfg: DetectorConfig,
    stem: Vec<ConvBlock<T>>,
    swin: Vec<SwinParams<T>>,
    fusion: FusionWeights<T>,
    gam: GamParams<T>,
    head: ConvBlock<T>,
}

impl<T: Element> Detector<T> {
    /// Build with seeded initialization; the same seed gives bitwise
    /// identical parameters.
    pub fn build(cfg: DetectorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let c = cfg.stem_channels;
        let stem = vec![
            ConvBlock::init(c, 3, 3, &mut rng),
            ConvBlock::init(c, c, 3, &mut rng),
            ConvBlock::init(c, c, 3, &mut rng),
        ];
        let swin = vec![
            SwinParams::init(c, cfg.num_heads, cfg.window_size, &mut rng)?,
            SwinParams::init(c, cfg.num_heads, cfg.window_size, &mut rng)?,
        ];
        let fusion = FusionWeights::init(2, FUSION_EPS, &mut rng)?;
        let gam = GamParams::init(cfg.head_in_channels(), cfg.gam_reduction, &mut rng)?;
        let mut head = ConvBlock::init(HEAD_CHANNELS, cfg.head_in_channels(), 1, &mut rng);
        // objectness starts at the background prior so early steps train
        // discrimination instead of the base rate; width/height start at a
        // plausible cell size instead of half the image
        head.b.data_mut()[0] = crate::tensor::fe(-4.0);
        head.b.data_mut()[3] = crate::tensor::fe(-1.7);
        head.b.data_mut()[4] = crate::tensor::fe(-1.7);
        Ok(Self { cfg, stem, swin, fusion, gam, head })
    }

    /// Parameter tensors in registration order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = Vec::new();
        for (i, c) in self.stem.iter().enumerate() {
            out.push((format!("stem{i}_k"), &c.k));
            out.push((format!("stem{i}_b"), &c.b));
        }
        for (i, s) in self.swin.iter().enumerate() {
            for (name, t) in s.tensors() {
                out.push((format!("swin{i}_{name}"), t));
            }
        }
        out.push(("fusion_lambdas".into(), &self.fusion.lambdas));
        for (name, t) in self.gam.tensors() {
            out.push((format!("gam_{name}"), t));
        }
        out.push(("head_k".into(), &self.head.k));
        out.push(("head_b".into(), &self.head.b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out: Vec<(String, &mut Tensor<T>)> = Vec::new();
        for (i, c) in self.stem.iter_mut().enumerate() {
            out.push((format!("stem{i}_k"), &mut c.k));
            out.push((format!("stem{i}_b"), &mut c.b));
        }
        for (i, s) in self.swin.iter_mut().enumerate() {
            for (name, t) in s.tensors_mut() {
                out.push((format!("swin{i}_{name}"), t));
            }
        }
        out.push(("fusion_lambdas".into(), &mut self.fusion.lambdas));
        for (name, t) in self.gam.tensors_mut() {
            out.push((format!("gam_{name}"), t));
        }
        out.push(("head_k".into(), &mut self.head.k));
        out.push(("head_b".into(), &mut self.head.b));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn register(&self, g: &mut Graph<T>) -> Vec<NodeId> {
        self.tensors().into_iter().map(|(_, t)| g.leaf(t.clone())).collect()
    }

    /// Forward pass: `[N, 3, in, in] -> [N, 5, S, S]` head map. `ids` are
    /// the registered parameter nodes in `tensors()` order.
    pub fn forward(&self, g: &mut Graph<T>, x: NodeId, ids: &[NodeId]) -> Result<NodeId> {
        let n = g.value(x).shape()[0];
        let c = self.cfg.stem_channels;
        let s = self.cfg.grid();

        // three conv + relu + 2x2 pool stages, total stride 8
        let mut h = x;
        for i in 0..3 {
            h = g.conv2d(h, ids[2 * i], Some(ids[2 * i + 1]), 1, 1)?;
            h = g.relu(h);
            h = g.maxpool2d(h, 2, 2, 0)?;
        }
        let f0 = h; // [N, C, S, S]

        // attention pair operates in NHWC token layout
        let (to_nhwc, nhwc_shape) = permute_map(&[n, c, s, s], &[0, 2, 3, 1]);
        let mut t = g.remap(f0, Arc::new(to_nhwc), &nhwc_shape)?;
        let swin_ids = &ids[6..6 + 32];
        t = swin_block(g, t, &self.swin[0], &swin_ids[..16], 0)?;
        t = swin_block(g, t, &self.swin[1], &swin_ids[16..], self.cfg.window_size / 2)?;
        let (to_nchw, nchw_shape) = permute_map(&nhwc_shape, &[0, 3, 1, 2]);
        let f1 = g.remap(t, Arc::new(to_nchw), &nchw_shape)?;

        let (fused, _) = bifpn_fuse(g, &[f0, f1], &self.fusion, ids[38])?;
        let pooled = match &self.cfg.spp {
            Some(cfg) => spp(g, fused, cfg)?,
            None => fused,
        };
        let gated = gam(g, pooled, &self.gam, &ids[39..47])?;
        g.conv2d(gated, ids[47], Some(ids[48]), 1, 0)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let tensors = self.tensors();
        let refs: Vec<(String, &Tensor<T>)> = tensors.into_iter().collect();
        serial::save_params(path, &refs)
    }

    /// Load parameters by name into a freshly built model of the same
    /// configuration.
    pub fn load<P: AsRef<Path>>(cfg: DetectorConfig, path: P) -> Result<Self> {
        let mut model = Self::build(cfg, 0)?;
        let loaded = serial::load_params::<T, _>(path)?;
        let mut by_name: std::collections::BTreeMap<String, Tensor<T>> =
            loaded.into_iter().collect();
        for (name, slot) in model.tensors_mut() {
            let Some(t) = by_name.remove(&name) else {
                return Err(Error::Validation(format!("checkpoint missing tensor {name:?}")));
            };
            if t.shape() != slot.shape() {
                return Err(Error::Validation(format!(
                    "checkpoint tensor {name:?} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        if !by_name.is_empty() {
            return Err(Error::Validation(format!(
                "checkpoint has {} unexpected tensors",
                by_name.len()
            )));
        }
        Ok(model)
    }
}
