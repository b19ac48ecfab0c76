//! Spatial pyramid pooling: the identity path concatenated with stride-1
//! same-padded max pools at several kernel sizes, along the channel axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SppConfig {
    pub kernels: Vec<usize>,
}

impl Default for SppConfig {
    fn default() -> Self {
        Self { kernels: vec![5, 9, 13] }
    }
}

impl SppConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::Config("spp needs at least one pooling kernel".into()));
        }
        for &k in &self.kernels {
            if k % 2 == 0 || k < 3 {
                return Err(Error::Config(format!(
                    "spp kernels must be odd and >= 3, got {k}"
                )));
            }
        }
        Ok(())
    }

    /// Channel multiplier of the output (identity path + one per kernel).
    pub fn channel_factor(&self) -> usize {
        1 + self.kernels.len()
    }
}

/// `[N,C,H,W] -> [N, C * (1 + |kernels|), H, W]`.
pub fn spp<T: Element>(g: &mut Graph<T>, x: NodeId, cfg: &SppConfig) -> Result<NodeId> {
    cfg.validate()?;
    if g.value(x).rank() != 4 {
        return Err(Error::Shape(format!("spp expects NCHW, got {:?}", g.value(x).shape())));
    }
    let mut branches = vec![x];
    for &k in &cfg.kernels {
        branches.push(g.maxpool2d(x, k, 1, k / 2)?);
    }
    g.concat(&branches, 1)
}
