//! Windowed multi-head self-attention with cyclic shifting, and the
//! pre-norm residual block built from it.
//!
//! Tokens live in `[N, H, W, C]` layout. The grid is zero-padded to a
//! multiple of the window size; padded tokens are excluded from attention
//! by the same mask that blocks cross-origin pairs. When `shift > 0`,
//! attention between tokens that came from different unshifted windows is
//! masked to exactly zero. No relative position bias is used.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, NodeId, Tensor};
use crate::tensor::kernels;

/// Bookkeeping to undo a window partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowLayout {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    /// Padded extents (multiples of `m`).
    pub hp: usize,
    pub wp: usize,
    pub m: usize,
    pub shift: usize,
}

impl WindowLayout {
    pub fn new(n: usize, h: usize, w: usize, c: usize, m: usize, shift: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("window size must be positive".into()));
        }
        if shift >= m {
            return Err(Error::Config(format!("shift {shift} must be < window size {m}")));
        }
        Ok(Self {
            n,
            h,
            w,
            c,
            hp: h.div_ceil(m) * m,
            wp: w.div_ceil(m) * m,
            m,
            shift,
        })
    }

    pub fn wins_h(&self) -> usize {
        self.hp / self.m
    }

    pub fn wins_w(&self) -> usize {
        self.wp / self.m
    }

    /// Windows per sample.
    pub fn wins(&self) -> usize {
        self.wins_h() * self.wins_w()
    }

    /// Total window count across the batch.
    pub fn batch_wins(&self) -> usize {
        self.n * self.wins()
    }

    pub fn tokens_per_window(&self) -> usize {
        self.m * self.m
    }

    /// Pre-roll padded-grid coordinates of window `wi`'s token `t`
    /// (`wi` indexes windows within one sample).
    fn source_coords(&self, wi: usize, t: usize) -> (usize, usize) {
        let wy = wi / self.wins_w();
        let wx = wi % self.wins_w();
        let py = wy * self.m + t / self.m;
        let px = wx * self.m + t % self.m;
        ((py + self.shift) % self.hp, (px + self.shift) % self.wp)
    }

    /// Which unshifted window a token came from; `None` for padding.
    fn origin(&self, wi: usize, t: usize) -> Option<usize> {
        let (iy, ix) = self.source_coords(wi, t);
        if iy < self.h && ix < self.w {
            Some((iy / self.m) * self.wins_w() + ix / self.m)
        } else {
            None
        }
    }

    /// Index map from `[N,H,W,C]` input to `[B, M*M, C]` windows.
    pub fn partition_map(&self) -> Vec<Option<usize>> {
        let tokens = self.tokens_per_window();
        let mut map = vec![None; self.batch_wins() * tokens * self.c];
        for (o, slot) in map.iter_mut().enumerate() {
            let ci = o % self.c;
            let t = (o / self.c) % tokens;
            let b = o / (self.c * tokens);
            let ni = b / self.wins();
            let (iy, ix) = self.source_coords(b % self.wins(), t);
            if iy < self.h && ix < self.w {
                *slot = Some(((ni * self.h + iy) * self.w + ix) * self.c + ci);
            }
        }
        map
    }

    /// Index map from windows back to `[N,H,W,C]`; exact inverse of
    /// [`WindowLayout::partition_map`] on the unpadded region.
    pub fn unpartition_map(&self) -> Vec<Option<usize>> {
        let tokens = self.tokens_per_window();
        let mut map = vec![None; self.n * self.h * self.w * self.c];
        for (o, slot) in map.iter_mut().enumerate() {
            let ci = o % self.c;
            let ix = (o / self.c) % self.w;
            let iy = (o / (self.c * self.w)) % self.h;
            let ni = o / (self.c * self.w * self.h);
            let py = (iy + self.hp - self.shift) % self.hp;
            let px = (ix + self.wp - self.shift) % self.wp;
            let wi = (py / self.m) * self.wins_w() + px / self.m;
            let t = (py % self.m) * self.m + px % self.m;
            *slot = Some(((ni * self.wins() + wi) * tokens + t) * self.c + ci);
        }
        map
    }

    /// Attention mask for one spatial window: `true` blocks the pair.
    /// Cross-origin and real/pad pairs are blocked; pad tokens may attend
    /// each other so no softmax row ends up fully masked.
    pub fn attention_mask(&self, wi: usize) -> Vec<bool> {
        let tokens = self.tokens_per_window();
        let origins: Vec<Option<usize>> = (0..tokens).map(|t| self.origin(wi, t)).collect();
        let mut mask = vec![false; tokens * tokens];
        for i in 0..tokens {
            for j in 0..tokens {
                mask[i * tokens + j] = origins[i] != origins[j];
            }
        }
        mask
    }

    /// True if any pair in any window is masked.
    pub fn needs_mask(&self) -> bool {
        (0..self.wins()).any(|wi| self.attention_mask(wi).iter().any(|&b| b))
    }
}

/// Tile `[N,H,W,C]` tokens into `[B, M*M, C]` windows after a cyclic roll
/// by `-shift`, zero-padding the grid to multiples of `m`.
pub fn window_partition<T: Element>(
    x: &Tensor<T>,
    m: usize,
    shift: usize,
) -> Result<(Tensor<T>, WindowLayout)> {
    if x.rank() != 4 {
        return Err(Error::Shape(format!("window_partition expects [N,H,W,C], got {:?}", x.shape())));
    }
    let layout = WindowLayout::new(x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], m, shift)?;
    let windows = kernels::remap(
        x,
        &layout.partition_map(),
        &[layout.batch_wins(), layout.tokens_per_window(), layout.c],
    )?;
    Ok((windows, layout))
}

/// Exact inverse of [`window_partition`] on the unpadded region.
pub fn window_unpartition<T: Element>(windows: &Tensor<T>, layout: &WindowLayout) -> Result<Tensor<T>> {
    let expect = [layout.batch_wins(), layout.tokens_per_window(), layout.c];
    if windows.shape() != expect {
        return Err(Error::Shape(format!(
            "window_unpartition expects {expect:?}, got {:?}",
            windows.shape()
        )));
    }
    kernels::remap(
        windows,
        &layout.unpartition_map(),
        &[layout.n, layout.h, layout.w, layout.c],
    )
}

/// Parameters of one attention block. Projection weights are `[C, C]`
/// row-vector convention (`y = x W + b`); the MLP hidden width is `4C`.
#[derive(Debug, Clone)]
pub struct SwinParams<T: Element> {
    pub embed_dim: usize,
    pub num_heads: usize,
    pub window_size: usize,
    pub ln_eps: f64,
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub ln1_gamma: Tensor<T>,
    pub ln1_beta: Tensor<T>,
    pub ln2_gamma: Tensor<T>,
    pub ln2_beta: Tensor<T>,
    pub mlp_w1: Tensor<T>,
    pub mlp_b1: Tensor<T>,
    pub mlp_w2: Tensor<T>,
    pub mlp_b2: Tensor<T>,
}

impl<T: Element> SwinParams<T> {
    fn validate_dims(embed_dim: usize, num_heads: usize, window_size: usize) -> Result<()> {
        if window_size == 0 {
            return Err(Error::Config("window size must be positive".into()));
        }
        if num_heads == 0 || embed_dim % num_heads != 0 {
            return Err(Error::Config(format!(
                "embed dim {embed_dim} must be divisible by num_heads {num_heads}"
            )));
        }
        Ok(())
    }

    /// Zero-initialized parameters with identity layer-norm affine.
    pub fn zeros(embed_dim: usize, num_heads: usize, window_size: usize) -> Result<Self> {
        Self::validate_dims(embed_dim, num_heads, window_size)?;
        let c = embed_dim;
        Ok(Self {
            embed_dim,
            num_heads,
            window_size,
            ln_eps: 1e-5,
            wq: Tensor::zeros(&[c, c]),
            bq: Tensor::zeros(&[c]),
            wk: Tensor::zeros(&[c, c]),
            bk: Tensor::zeros(&[c]),
            wv: Tensor::zeros(&[c, c]),
            bv: Tensor::zeros(&[c]),
            wo: Tensor::zeros(&[c, c]),
            bo: Tensor::zeros(&[c]),
            ln1_gamma: Tensor::full(&[c], T::one()),
            ln1_beta: Tensor::zeros(&[c]),
            ln2_gamma: Tensor::full(&[c], T::one()),
            ln2_beta: Tensor::zeros(&[c]),
            mlp_w1: Tensor::zeros(&[c, 4 * c]),
            mlp_b1: Tensor::zeros(&[4 * c]),
            mlp_w2: Tensor::zeros(&[4 * c, c]),
            mlp_b2: Tensor::zeros(&[c]),
        })
    }

    pub fn init<R: Rng>(embed_dim: usize, num_heads: usize, window_size: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(embed_dim, num_heads, window_size)?;
        let c = embed_dim;
        let s = (6.0 / c as f64).sqrt();
        p.wq = Tensor::uniform(&[c, c], -s, s, rng);
        p.wk = Tensor::uniform(&[c, c], -s, s, rng);
        p.wv = Tensor::uniform(&[c, c], -s, s, rng);
        p.wo = Tensor::uniform(&[c, c], -s, s, rng);
        p.mlp_w1 = Tensor::uniform(&[c, 4 * c], -s, s, rng);
        let s2 = (6.0 / (4.0 * c as f64)).sqrt();
        p.mlp_w2 = Tensor::uniform(&[4 * c, c], -s2, s2, rng);
        Ok(p)
    }

    /// Parameter tensors in the fixed (name, tensor) order used everywhere:
    /// registration, gradient readback, updates and serialization.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln1_gamma", &self.ln1_gamma),
            ("ln1_beta", &self.ln1_beta),
            ("ln2_gamma", &self.ln2_gamma),
            ("ln2_beta", &self.ln2_beta),
            ("mlp_w1", &self.mlp_w1),
            ("mlp_b1", &self.mlp_b1),
            ("mlp_w2", &self.mlp_w2),
            ("mlp_b2", &self.mlp_b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![
            ("wq", &mut self.wq),
            ("bq", &mut self.bq),
            ("wk", &mut self.wk),
            ("bk", &mut self.bk),
            ("wv", &mut self.wv),
            ("bv", &mut self.bv),
            ("wo", &mut self.wo),
            ("bo", &mut self.bo),
            ("ln1_gamma", &mut self.ln1_gamma),
            ("ln1_beta", &mut self.ln1_beta),
            ("ln2_gamma", &mut self.ln2_gamma),
            ("ln2_beta", &mut self.ln2_beta),
            ("mlp_w1", &mut self.mlp_w1),
            ("mlp_b1", &mut self.mlp_b1),
            ("mlp_w2", &mut self.mlp_w2),
            ("mlp_b2", &mut self.mlp_b2),
        ]
    }

    /// Register every parameter as a graph leaf, in `tensors()` order.
    pub fn register(&self, g: &mut Graph<T>) -> Vec<NodeId> {
        self.tensors().into_iter().map(|(_, t)| g.leaf(t.clone())).collect()
    }
}

// indices into the `tensors()` order
const WQ: usize = 0;
const BQ: usize = 1;
const WK: usize = 2;
const BK: usize = 3;
const WV: usize = 4;
const BV: usize = 5;
const WO: usize = 6;
const BO: usize = 7;
const LN1_G: usize = 8;
const LN1_B: usize = 9;
const LN2_G: usize = 10;
const LN2_B: usize = 11;
const MLP_W1: usize = 12;
const MLP_B1: usize = 13;
const MLP_W2: usize = 14;
const MLP_B2: usize = 15;

pub struct WmsaOutput {
    pub out: NodeId,
    /// Attention probability nodes, one `[M*M, M*M]` tensor per
    /// (batch window, head), ordered window-major.
    pub attn_probs: Vec<NodeId>,
}

/// Per-window multi-head scaled dot-product attention over `[N,H,W,C]`
/// tokens. `ids` are the registered parameter nodes in `tensors()` order.
pub fn wmsa<T: Element>(
    g: &mut Graph<T>,
    x: NodeId,
    p: &SwinParams<T>,
    ids: &[NodeId],
    shift: usize,
) -> Result<WmsaOutput> {
    wmsa_with_mask(g, x, p, ids, shift, true)
}

/// `use_mask = false` skips mask construction entirely; only meaningful
/// for `shift = 0`, where the mask is a no-op by construction.
pub fn wmsa_with_mask<T: Element>(
    g: &mut Graph<T>,
    x: NodeId,
    p: &SwinParams<T>,
    ids: &[NodeId],
    shift: usize,
    use_mask: bool,
) -> Result<WmsaOutput> {
    SwinParams::<T>::validate_dims(p.embed_dim, p.num_heads, p.window_size)?;
    let shape = g.value(x).shape().to_vec();
    if shape.len() != 4 || shape[3] != p.embed_dim {
        return Err(Error::Shape(format!(
            "wmsa expects [N,H,W,{}], got {shape:?}",
            p.embed_dim
        )));
    }
    let layout = WindowLayout::new(shape[0], shape[1], shape[2], shape[3], p.window_size, shift)?;
    let c = p.embed_dim;
    let dh = c / p.num_heads;
    let tokens = layout.tokens_per_window();
    let b_total = layout.batch_wins();

    let windows = g.remap(x, Arc::new(layout.partition_map()), &[b_total, tokens, c])?;
    let flat = g.reshape(windows, &[b_total * tokens, c])?;

    let project = |g: &mut Graph<T>, w: usize, b: usize| -> Result<NodeId> {
        let h = g.matmul(flat, ids[w])?;
        g.add_row_bias(h, ids[b])
    };
    let q = project(g, WQ, BQ)?;
    let k = project(g, WK, BK)?;
    let v = project(g, WV, BV)?;

    let masks: Vec<Arc<Vec<bool>>> = if use_mask {
        (0..layout.wins()).map(|wi| Arc::new(layout.attention_mask(wi))).collect()
    } else {
        Vec::new()
    };

    // gather [tokens, dh] (or its transpose) for one window/head pair
    let head_map = |bw: usize, head: usize, transposed: bool| -> Arc<Vec<Option<usize>>> {
        let mut map = vec![None; tokens * dh];
        for (o, slot) in map.iter_mut().enumerate() {
            let (t, d) = if transposed { (o % tokens, o / tokens) } else { (o / dh, o % dh) };
            *slot = Some((bw * tokens + t) * c + head * dh + d);
        }
        Arc::new(map)
    };

    let scale = 1.0 / (dh as f64).sqrt();
    let mut attn_probs = Vec::with_capacity(b_total * p.num_heads);
    let mut window_outputs = Vec::with_capacity(b_total);
    for bw in 0..b_total {
        let mut head_outputs = Vec::with_capacity(p.num_heads);
        for head in 0..p.num_heads {
            let qh = g.remap(q, head_map(bw, head, false), &[tokens, dh])?;
            let kht = g.remap(k, head_map(bw, head, true), &[dh, tokens])?;
            let vh = g.remap(v, head_map(bw, head, false), &[tokens, dh])?;
            let logits = g.matmul(qh, kht)?;
            let logits = g.scale(logits, scale);
            let logits = if use_mask {
                g.mask_fill_neg_inf(logits, masks[bw % layout.wins()].clone())?
            } else {
                logits
            };
            let probs = g.softmax(logits, 1)?;
            attn_probs.push(probs);
            head_outputs.push(g.matmul(probs, vh)?);
        }
        let merged = g.concat(&head_outputs, 1)?;
        window_outputs.push(g.reshape(merged, &[1, tokens, c])?);
    }
    let stacked = g.concat(&window_outputs, 0)?;
    let flat_out = g.reshape(stacked, &[b_total * tokens, c])?;
    let projected = g.matmul(flat_out, ids[WO])?;
    let projected = g.add_row_bias(projected, ids[BO])?;
    let out = g.remap(
        projected,
        Arc::new(layout.unpartition_map()),
        &[layout.n, layout.h, layout.w, layout.c],
    )?;
    Ok(WmsaOutput { out, attn_probs })
}

/// Pre-norm residual block: `y = x + WMSA(LN(x)); out = y + MLP(LN(y))`.
/// Stacked pairs alternate `shift = 0` and `shift = M/2`.
pub fn swin_block<T: Element>(
    g: &mut Graph<T>,
    x: NodeId,
    p: &SwinParams<T>,
    ids: &[NodeId],
    shift: usize,
) -> Result<NodeId> {
    let shape = g.value(x).shape().to_vec();
    let c = p.embed_dim;
    let rows: usize = shape[..3].iter().product();

    let flat = g.reshape(x, &[rows, c])?;
    let ln1 = g.layer_norm(flat, ids[LN1_G], ids[LN1_B], p.ln_eps)?;
    let ln1 = g.reshape(ln1, &shape)?;
    let attn = wmsa(g, ln1, p, ids, shift)?;
    let y = g.add(x, attn.out)?;

    let yflat = g.reshape(y, &[rows, c])?;
    let ln2 = g.layer_norm(yflat, ids[LN2_G], ids[LN2_B], p.ln_eps)?;
    let h = g.matmul(ln2, ids[MLP_W1])?;
    let h = g.add_row_bias(h, ids[MLP_B1])?;
    let h = g.gelu(h);
    let h = g.matmul(h, ids[MLP_W2])?;
    let h = g.add_row_bias(h, ids[MLP_B2])?;
    let h = g.reshape(h, &shape)?;
    g.add(y, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, FD_EPS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn partition_4x4_m2_roundtrip() {
        let x = Tensor::<f64>::from_vec((0..16).map(|v| v as f64).collect())
            .reshape(&[1, 4, 4, 1])
            .unwrap();
        let (wins, layout) = window_partition(&x, 2, 0).unwrap();
        assert_eq!(wins.shape(), &[4, 4, 1]);
        let back = window_unpartition(&wins, &layout).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn partition_with_shift_is_a_permutation() {
        let x = Tensor::<f64>::from_vec((0..16).map(|v| v as f64).collect())
            .reshape(&[1, 4, 4, 1])
            .unwrap();
        let (wins, _) = window_partition(&x, 2, 1).unwrap();
        let mut seen: Vec<f64> = wins.data().to_vec();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want: Vec<f64> = (0..16).map(|v| v as f64).collect();
        assert_eq!(seen, want);
    }

    #[test]
    fn partition_pads_and_recovers_5x5() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let x = Tensor::<f64>::uniform(&[1, 5, 5, 2], -1.0, 1.0, &mut rng);
        let (wins, layout) = window_partition(&x, 4, 0).unwrap();
        assert_eq!((layout.hp, layout.wp), (8, 8));
        assert_eq!(wins.shape(), &[4, 16, 2]);
        let back = window_unpartition(&wins, &layout).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn partition_rejects_zero_window() {
        let x = Tensor::<f64>::zeros(&[1, 4, 4, 1]);
        assert!(window_partition(&x, 0, 0).is_err());
        assert!(window_partition(&x, 4, 4).is_err());
    }

    #[test]
    fn exhaustive_roundtrip_small_grids() {
        for h in 1..=16usize {
            for w in 1..=16usize {
                for &m in &[2usize, 4, 8] {
                    for &shift in &[0, m / 2] {
                        let x = Tensor::<f64>::from_vec((0..h * w).map(|v| v as f64 + 1.0).collect())
                            .reshape(&[1, h, w, 1])
                            .unwrap();
                        let (wins, layout) = window_partition(&x, m, shift).unwrap();
                        let back = window_unpartition(&wins, &layout).unwrap();
                        assert_eq!(back, x, "h={h} w={w} m={m} shift={shift}");
                    }
                }
            }
        }
    }

    #[test]
    fn wmsa_zero_weights_gives_zero_output() {
        let p = SwinParams::<f64>::zeros(4, 2, 2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = Tensor::uniform(&[1, 4, 4, 4], -1.0, 1.0, &mut rng);
        let mut g = Graph::new();
        let xid = g.leaf(x);
        let ids = p.register(&mut g);
        let out = wmsa(&mut g, xid, &p, &ids, 0).unwrap();
        assert!(g.value(out.out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let p = SwinParams::<f64>::init(8, 2, 4, &mut rng).unwrap();
        let x = Tensor::uniform(&[1, 6, 6, 8], -1.0, 1.0, &mut rng);
        let mut g = Graph::new();
        let xid = g.leaf(x);
        let ids = p.register(&mut g);
        for shift in [0, 2] {
            let out = wmsa(&mut g, xid, &p, &ids, shift).unwrap();
            for probs in &out.attn_probs {
                let t = g.value(*probs);
                let tokens = t.shape()[0];
                for row in 0..tokens {
                    let s: f64 = t.data()[row * tokens..(row + 1) * tokens].iter().sum();
                    assert!((s - 1.0).abs() < 1e-9, "row sum {s} at shift {shift}");
                }
            }
        }
    }

    #[test]
    fn shifted_mask_blocks_cross_origin_pairs_exactly() {
        // one window row of two windows: H = M, W = 2M, shift = M/2
        let m = 4;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let p = SwinParams::<f64>::init(4, 2, m, &mut rng).unwrap();
        let x = Tensor::uniform(&[1, m, 2 * m, 4], -1.0, 1.0, &mut rng);
        let mut g = Graph::new();
        let xid = g.leaf(x);
        let ids = p.register(&mut g);
        let out = wmsa(&mut g, xid, &p, &ids, m / 2).unwrap();
        let layout = WindowLayout::new(1, m, 2 * m, 4, m, m / 2).unwrap();
        let tokens = layout.tokens_per_window();
        for (idx, probs) in out.attn_probs.iter().enumerate() {
            let wi = idx / p.num_heads; // n = 1, window-major ordering
            let t = g.value(*probs);
            for i in 0..tokens {
                for j in 0..tokens {
                    if layout.origin(wi, i) != layout.origin(wi, j) {
                        assert_eq!(t.data()[i * tokens + j], 0.0, "window {wi} pair ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn unshifted_wmsa_equals_mask_disabled_path() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let p = SwinParams::<f64>::init(8, 4, 4, &mut rng).unwrap();
        let x = Tensor::uniform(&[1, 8, 8, 8], -1.0, 1.0, &mut rng);
        let mut g = Graph::new();
        let xid = g.leaf(x);
        let ids = p.register(&mut g);
        let masked = wmsa_with_mask(&mut g, xid, &p, &ids, 0, true).unwrap();
        let unmasked = wmsa_with_mask(&mut g, xid, &p, &ids, 0, false).unwrap();
        let a = g.value(masked.out);
        let b = g.value(unmasked.out);
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn swin_block_residual_identity_with_zero_weights() {
        let p = SwinParams::<f64>::zeros(4, 2, 2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let x = Tensor::uniform(&[1, 4, 4, 4], -1.0, 1.0, &mut rng);
        let mut g = Graph::new();
        let xid = g.leaf(x.clone());
        let ids = p.register(&mut g);
        let out = swin_block(&mut g, xid, &p, &ids, 0).unwrap();
        assert_eq!(g.value(out), &x);
    }

    #[test]
    fn swin_block_preserves_shape() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let p = SwinParams::<f64>::init(16, 4, 4, &mut rng).unwrap();
        let x = Tensor::uniform(&[1, 8, 8, 16], -1.0, 1.0, &mut rng);
        let mut g = Graph::new();
        let xid = g.leaf(x.clone());
        let ids = p.register(&mut g);
        for shift in [0, 2] {
            let out = swin_block(&mut g, xid, &p, &ids, shift).unwrap();
            assert_eq!(g.value(out).shape(), x.shape());
            assert!(g.value(out).is_finite());
        }
    }

    #[test]
    fn swin_block_gradients_match_fd() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let p = SwinParams::<f64>::init(4, 2, 2, &mut rng).unwrap();
        let x = Tensor::uniform(&[1, 4, 4, 4], -0.5, 0.5, &mut rng);
        let mut params = vec![x];
        params.extend(p.tensors().into_iter().map(|(_, t)| t.clone()));
        for shift in [0usize, 1] {
            let report = grad_check(
                |g, ids| {
                    let out = swin_block(g, ids[0], &p, &ids[1..], shift)?;
                    Ok(g.sum(out))
                },
                &params,
                FD_EPS,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "shift {shift}: {report:?}");
        }
    }
}
