//! Forward and backward kernels. Everything is a naive direct loop by
//! design; the workloads are desk-scale.

use crate::error::{Error, Result};
use crate::tensor::{fe, Element, Tensor};

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Shape(format!(
            "matmul expects rank-2 inputs, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul inner dims differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![T::zero(); m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        for p in 0..k {
            let av = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + av * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn transpose2<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data()[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out).unwrap()
}

/// Gradients of `c = a @ b` given `dc`: `(dc @ b^T, a^T @ dc)`.
pub fn matmul_backward<T: Element>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    dc: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let da = matmul(dc, &transpose2(b)).unwrap();
    let db = matmul(&transpose2(a), dc).unwrap();
    (da, db)
}

// ---------------------------------------------------------------------------
// conv2d (cross-correlation), NCHW
// ---------------------------------------------------------------------------

pub struct ConvDims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
}

pub fn conv2d_dims<T: Element>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<ConvDims> {
    if x.rank() != 4 || k.rank() != 4 {
        return Err(Error::Shape(format!(
            "conv2d expects NCHW input and OCKK kernel, got {:?} and {:?}",
            x.shape(),
            k.shape()
        )));
    }
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, kc, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
    if kc != c {
        return Err(Error::Shape(format!(
            "conv2d kernel channels {kc} do not match input channels {c}"
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Shape(format!("conv2d kernel extents must be odd, got {kh}x{kw}")));
    }
    if stride == 0 {
        return Err(Error::Shape("conv2d stride must be positive".into()));
    }
    let hp = h + 2 * pad;
    let wp = w + 2 * pad;
    if hp < kh || wp < kw || (hp - kh) % stride != 0 || (wp - kw) % stride != 0 {
        return Err(Error::Shape(format!(
            "conv2d output extent is not an integer for input {h}x{w}, kernel {kh}x{kw}, stride {stride}, pad {pad}"
        )));
    }
    Ok(ConvDims {
        n,
        c,
        h,
        w,
        o,
        kh,
        kw,
        oh: (hp - kh) / stride + 1,
        ow: (wp - kw) / stride + 1,
    })
}

pub fn conv2d<T: Element>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let d = conv2d_dims(x, k, stride, pad)?;
    if let Some(b) = bias {
        if b.shape() != [d.o] {
            return Err(Error::Shape(format!(
                "conv2d bias shape {:?} does not match {} output channels",
                b.shape(),
                d.o
            )));
        }
    }
    let xd = x.data();
    let kd = k.data();
    let mut out = vec![T::zero(); d.n * d.o * d.oh * d.ow];
    for ni in 0..d.n {
        for oi in 0..d.o {
            let b = bias.map(|b| b.data()[oi]).unwrap_or_else(T::zero);
            for oy in 0..d.oh {
                for ox in 0..d.ow {
                    let mut acc = b;
                    for ci in 0..d.c {
                        for ky in 0..d.kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            for kx in 0..d.kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= d.w as isize {
                                    continue;
                                }
                                let xi = ((ni * d.c + ci) * d.h + iy as usize) * d.w + ix as usize;
                                let ki = ((oi * d.c + ci) * d.kh + ky) * d.kw + kx;
                                acc = acc + xd[xi] * kd[ki];
                            }
                        }
                    }
                    out[((ni * d.o + oi) * d.oh + oy) * d.ow + ox] = acc;
                }
            }
        }
    }
    Tensor::new(vec![d.n, d.o, d.oh, d.ow], out)
}

/// Gradients of conv2d w.r.t. input, kernel and bias.
pub fn conv2d_backward<T: Element>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let d = conv2d_dims(x, k, stride, pad).expect("dims already validated in forward");
    let xd = x.data();
    let kd = k.data();
    let dyd = dy.data();
    let mut dx = vec![T::zero(); xd.len()];
    let mut dk = vec![T::zero(); kd.len()];
    let mut db = vec![T::zero(); d.o];
    for ni in 0..d.n {
        for oi in 0..d.o {
            for oy in 0..d.oh {
                for ox in 0..d.ow {
                    let g = dyd[((ni * d.o + oi) * d.oh + oy) * d.ow + ox];
                    db[oi] = db[oi] + g;
                    for ci in 0..d.c {
                        for ky in 0..d.kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            for kx in 0..d.kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= d.w as isize {
                                    continue;
                                }
                                let xi = ((ni * d.c + ci) * d.h + iy as usize) * d.w + ix as usize;
                                let ki = ((oi * d.c + ci) * d.kh + ky) * d.kw + kx;
                                dx[xi] = dx[xi] + g * kd[ki];
                                dk[ki] = dk[ki] + g * xd[xi];
                            }
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).unwrap(),
        Tensor::new(k.shape().to_vec(), dk).unwrap(),
        Tensor::new(vec![d.o], db).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// maxpool2d, NCHW; padding acts as -inf
// ---------------------------------------------------------------------------

pub struct PoolOut<T: Element> {
    pub out: Tensor<T>,
    /// Flat input index of the winning element per output element
    /// (first index wins ties); `None` if a window saw only padding.
    pub argmax: Vec<Option<usize>>,
}

pub fn maxpool2d<T: Element>(
    x: &Tensor<T>,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<PoolOut<T>> {
    if x.rank() != 4 {
        return Err(Error::Shape(format!("maxpool2d expects NCHW, got {:?}", x.shape())));
    }
    if kernel == 0 || stride == 0 {
        return Err(Error::Shape("maxpool2d kernel and stride must be positive".into()));
    }
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let hp = h + 2 * pad;
    let wp = w + 2 * pad;
    if kernel > hp || kernel > wp {
        return Err(Error::Shape(format!(
            "maxpool2d kernel {kernel} larger than padded input {hp}x{wp}"
        )));
    }
    let oh = (hp - kernel) / stride + 1;
    let ow = (wp - kernel) / stride + 1;
    let xd = x.data();
    let mut out = vec![T::zero(); n * c * oh * ow];
    let mut argmax = vec![None; n * c * oh * ow];
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_idx = None;
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xi = ((ni * c + ci) * h + iy as usize) * w + ix as usize;
                            if xd[xi] > best {
                                best = xd[xi];
                                best_idx = Some(xi);
                            }
                        }
                    }
                    let oidx = ((ni * c + ci) * oh + oy) * ow + ox;
                    out[oidx] = if best_idx.is_some() { best } else { T::zero() };
                    argmax[oidx] = best_idx;
                }
            }
        }
    }
    Ok(PoolOut {
        out: Tensor::new(vec![n, c, oh, ow], out)?,
        argmax,
    })
}

pub fn maxpool2d_backward<T: Element>(
    in_shape: &[usize],
    argmax: &[Option<usize>],
    dy: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape);
    let dxd = dx.data_mut();
    for (i, &g) in dy.data().iter().enumerate() {
        if let Some(idx) = argmax[i] {
            dxd[idx] = dxd[idx] + g;
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// softmax along an axis, with max subtraction; -inf logits get weight 0
// ---------------------------------------------------------------------------

/// Iterate over "lanes" of the given axis: returns (outer, axis_len, inner).
fn axis_lanes(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn softmax<T: Element>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= x.rank() {
        return Err(Error::Shape(format!(
            "softmax axis {axis} out of range for shape {:?}",
            x.shape()
        )));
    }
    let (outer, len, inner) = axis_lanes(x.shape(), axis);
    let xd = x.data();
    let mut out = vec![T::zero(); xd.len()];
    for oi in 0..outer {
        for ii in 0..inner {
            let at = |j: usize| (oi * len + j) * inner + ii;
            let mut m = T::neg_infinity();
            for j in 0..len {
                let v = xd[at(j)];
                if v.is_finite() && v > m {
                    m = v;
                }
            }
            if m == T::neg_infinity() {
                // entire lane is masked; leave the weights at zero
                continue;
            }
            let mut denom = T::zero();
            for j in 0..len {
                let v = xd[at(j)];
                let e = if v == T::neg_infinity() {
                    T::zero()
                } else {
                    (v - m).exp()
                };
                out[at(j)] = e;
                denom = denom + e;
            }
            for j in 0..len {
                out[at(j)] = out[at(j)] / denom;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn softmax_backward<T: Element>(y: &Tensor<T>, dy: &Tensor<T>, axis: usize) -> Tensor<T> {
    let (outer, len, inner) = axis_lanes(y.shape(), axis);
    let yd = y.data();
    let dyd = dy.data();
    let mut dx = vec![T::zero(); yd.len()];
    for oi in 0..outer {
        for ii in 0..inner {
            let at = |j: usize| (oi * len + j) * inner + ii;
            let mut dot = T::zero();
            for j in 0..len {
                dot = dot + yd[at(j)] * dyd[at(j)];
            }
            for j in 0..len {
                dx[at(j)] = yd[at(j)] * (dyd[at(j)] - dot);
            }
        }
    }
    Tensor::new(y.shape().to_vec(), dx).unwrap()
}

// ---------------------------------------------------------------------------
// layer norm over the last axis
// ---------------------------------------------------------------------------

pub fn layer_norm<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let d = *x.shape().last().ok_or_else(|| Error::Shape("layer_norm on rank-0".into()))?;
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::Shape(format!(
            "layer_norm affine shapes {:?}/{:?} do not match normalized extent {d}",
            gamma.shape(),
            beta.shape()
        )));
    }
    if eps <= 0.0 {
        return Err(Error::Config("layer_norm eps must be positive".into()));
    }
    let eps = fe::<T>(eps);
    let rows = x.len() / d;
    let xd = x.data();
    let gd = gamma.data();
    let bd = beta.data();
    let mut out = vec![T::zero(); xd.len()];
    let inv_d = fe::<T>(1.0 / d as f64);
    for r in 0..rows {
        let row = &xd[r * d..(r + 1) * d];
        let mean = row.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
        let var = row
            .iter()
            .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
            * inv_d;
        let inv_std = (var + eps).sqrt().recip();
        for j in 0..d {
            out[r * d + j] = gd[j] * (row[j] - mean) * inv_std + bd[j];
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn layer_norm_backward<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    eps: f64,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let d = *x.shape().last().unwrap();
    let rows = x.len() / d;
    let eps = fe::<T>(eps);
    let inv_d = fe::<T>(1.0 / d as f64);
    let xd = x.data();
    let gd = gamma.data();
    let dyd = dy.data();
    let mut dx = vec![T::zero(); xd.len()];
    let mut dgamma = vec![T::zero(); d];
    let mut dbeta = vec![T::zero(); d];
    for r in 0..rows {
        let row = &xd[r * d..(r + 1) * d];
        let dyr = &dyd[r * d..(r + 1) * d];
        let mean = row.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
        let var = row
            .iter()
            .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
            * inv_d;
        let inv_std = (var + eps).sqrt().recip();
        // xhat_j = (x_j - mean) * inv_std; dxhat_j = dy_j * gamma_j
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            let xhat = (row[j] - mean) * inv_std;
            let dxhat = dyr[j] * gd[j];
            dgamma[j] = dgamma[j] + dyr[j] * xhat;
            dbeta[j] = dbeta[j] + dyr[j];
            mean_dxhat = mean_dxhat + dxhat;
            mean_dxhat_xhat = mean_dxhat_xhat + dxhat * xhat;
        }
        mean_dxhat = mean_dxhat * inv_d;
        mean_dxhat_xhat = mean_dxhat_xhat * inv_d;
        for j in 0..d {
            let xhat = (row[j] - mean) * inv_std;
            let dxhat = dyr[j] * gd[j];
            dx[r * d + j] = (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv_std;
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).unwrap(),
        Tensor::new(vec![d], dgamma).unwrap(),
        Tensor::new(vec![d], dbeta).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

pub fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// relu'(0) = 0 by convention.
pub fn relu_grad<T: Element>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

/// Exact (erf-based) GELU, evaluated in f64.
pub fn gelu<T: Element>(x: T) -> T {
    let v = x.to_f64().unwrap();
    fe(0.5 * v * (1.0 + erf(v / std::f64::consts::SQRT_2)))
}

pub fn gelu_grad<T: Element>(x: T) -> T {
    let v = x.to_f64().unwrap();
    let phi = (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let cdf = 0.5 * (1.0 + erf(v / std::f64::consts::SQRT_2));
    fe(cdf + v * phi)
}

pub fn erf(x: f64) -> f64 {
    statrs::function::erf::erf(x)
}

// ---------------------------------------------------------------------------
// index remapping: the one primitive behind reshape/permute/roll/pad/
// window tiling/broadcast/gather. map[out_flat] = Some(in_flat) or None
// (meaning a zero-filled position). Backward is scatter-add, which also
// makes broadcast (repeated sources) come out right.
// ---------------------------------------------------------------------------

pub fn remap<T: Element>(
    x: &Tensor<T>,
    map: &[Option<usize>],
    out_shape: &[usize],
) -> Result<Tensor<T>> {
    let n: usize = out_shape.iter().product();
    if n != map.len() {
        return Err(Error::Shape(format!(
            "remap map length {} does not match output shape {out_shape:?}",
            map.len()
        )));
    }
    let xd = x.data();
    let data = map
        .iter()
        .map(|m| match m {
            Some(i) => xd[*i],
            None => T::zero(),
        })
        .collect();
    Tensor::new(out_shape.to_vec(), data)
}

pub fn remap_backward<T: Element>(
    dy: &Tensor<T>,
    map: &[Option<usize>],
    in_shape: &[usize],
) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape);
    let dxd = dx.data_mut();
    for (o, m) in map.iter().enumerate() {
        if let Some(i) = m {
            dxd[*i] = dxd[*i] + dy.data()[o];
        }
    }
    dx
}

/// Map for a permutation of axes.
pub fn permute_map(shape: &[usize], axes: &[usize]) -> (Vec<Option<usize>>, Vec<usize>) {
    let rank = shape.len();
    assert_eq!(axes.len(), rank);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let n: usize = shape.iter().product();
    let mut map = vec![None; n];
    let mut out_idx = vec![0usize; rank];
    for (flat, slot) in map.iter_mut().enumerate() {
        let mut rem = flat;
        for (i, s) in out_shape.iter().enumerate() {
            let stride: usize = out_shape[i + 1..].iter().product();
            out_idx[i] = rem / stride;
            rem %= stride;
            debug_assert!(out_idx[i] < *s);
        }
        let mut src = 0usize;
        for (i, &a) in axes.iter().enumerate() {
            src += out_idx[i] * in_strides[a];
        }
        *slot = Some(src);
    }
    (map, out_shape)
}

// ---------------------------------------------------------------------------
// concat along an axis
// ---------------------------------------------------------------------------

pub fn concat<T: Element>(xs: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    if xs.is_empty() {
        return Err(Error::Shape("concat of zero tensors".into()));
    }
    let rank = xs[0].rank();
    if axis >= rank {
        return Err(Error::Shape(format!("concat axis {axis} out of range")));
    }
    for x in xs {
        if x.rank() != rank {
            return Err(Error::Shape("concat rank mismatch".into()));
        }
        for a in 0..rank {
            if a != axis && x.shape()[a] != xs[0].shape()[a] {
                return Err(Error::Shape(format!(
                    "concat shape mismatch: {:?} vs {:?}",
                    x.shape(),
                    xs[0].shape()
                )));
            }
        }
    }
    let mut out_shape = xs[0].shape().to_vec();
    out_shape[axis] = xs.iter().map(|x| x.shape()[axis]).sum();
    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(out_shape.iter().product());
    for oi in 0..outer {
        for x in xs {
            let len = x.shape()[axis];
            let start = oi * len * inner;
            data.extend_from_slice(&x.data()[start..start + len * inner]);
        }
    }
    Tensor::new(out_shape, data)
}

/// Split `dy` back into per-input gradients for concat.
pub fn concat_backward<T: Element>(
    dy: &Tensor<T>,
    in_shapes: &[Vec<usize>],
    axis: usize,
) -> Vec<Tensor<T>> {
    let outer: usize = in_shapes[0][..axis].iter().product();
    let inner: usize = in_shapes[0][axis + 1..].iter().product();
    let total_axis: usize = in_shapes.iter().map(|s| s[axis]).sum();
    let mut grads: Vec<Tensor<T>> = in_shapes.iter().map(|s| Tensor::zeros(s)).collect();
    for oi in 0..outer {
        let mut offset = 0usize;
        for (gi, s) in in_shapes.iter().enumerate() {
            let len = s[axis];
            let dst = grads[gi].data_mut();
            let src_start = (oi * total_axis + offset) * inner;
            let dst_start = oi * len * inner;
            dst[dst_start..dst_start + len * inner]
                .copy_from_slice(&dy.data()[src_start..src_start + len * inner]);
            offset += len;
        }
    }
    grads
}

// ---------------------------------------------------------------------------
// spatial mean: NCHW -> NC
// ---------------------------------------------------------------------------

pub fn spatial_mean<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 4 {
        return Err(Error::Shape(format!("spatial_mean expects NCHW, got {:?}", x.shape())));
    }
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let inv = fe::<T>(1.0 / (h * w) as f64);
    let mut out = vec![T::zero(); n * c];
    for ni in 0..n {
        for ci in 0..c {
            let start = (ni * c + ci) * h * w;
            let s = x.data()[start..start + h * w]
                .iter()
                .fold(T::zero(), |a, &v| a + v);
            out[ni * c + ci] = s * inv;
        }
    }
    Tensor::new(vec![n, c], out)
}

pub fn spatial_mean_backward<T: Element>(in_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let inv = fe::<T>(1.0 / (h * w) as f64);
    let mut dx = Tensor::zeros(in_shape);
    let dxd = dx.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let g = dy.data()[ni * c + ci] * inv;
            let start = (ni * c + ci) * h * w;
            for v in &mut dxd[start..start + h * w] {
                *v = *v + g;
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// binary cross-entropy with logits, weighted mean
// ---------------------------------------------------------------------------

/// Numerically stable weighted BCE: sum_i w_i * bce(z_i, t_i) / sum_i w_i.
pub fn bce_with_logits<T: Element>(
    logits: &Tensor<T>,
    targets: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<T> {
    if logits.shape() != targets.shape() || logits.shape() != weights.shape() {
        return Err(Error::Shape("bce_with_logits shape mismatch".into()));
    }
    let mut acc = T::zero();
    let mut wsum = T::zero();
    for ((&z, &t), &w) in logits
        .data()
        .iter()
        .zip(targets.data())
        .zip(weights.data())
    {
        // max(z,0) - z*t + ln(1 + exp(-|z|))
        let loss = z.max(T::zero()) - z * t + (T::one() + (-z.abs()).exp()).ln();
        acc = acc + w * loss;
        wsum = wsum + w;
    }
    Ok(acc / wsum)
}

pub fn bce_with_logits_backward<T: Element>(
    logits: &Tensor<T>,
    targets: &Tensor<T>,
    weights: &Tensor<T>,
    dy: T,
) -> Tensor<T> {
    let wsum = weights.sum();
    let mut dz = Tensor::zeros(logits.shape());
    for (i, ((&z, &t), &w)) in logits
        .data()
        .iter()
        .zip(targets.data())
        .zip(weights.data())
        .enumerate()
    {
        dz.data_mut()[i] = dy * w * (sigmoid(z) - t) / wsum;
    }
    dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn matmul_identity() {
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&eye, &a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_rejects_mismatched_inner_dims() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("inner dims"), "{msg}");
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = Tensor::<f64>::uniform(&[1, 3, 5, 5], -1.0, 1.0, &mut rng);
        let mut k = Tensor::<f64>::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            k.data_mut()[c * 3 + c] = 1.0;
        }
        let y = conv2d(&x, &k, None, 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_constant_field_interior() {
        let c = 0.7;
        let x = Tensor::<f64>::full(&[1, 1, 7, 7], c);
        let k = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, None, 1, 1).unwrap();
        // interior pixel sees the full 3x3 window
        let v = y.data()[(3 * 7) + 3];
        assert!((v - c * 9.0).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_quadruple_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let x = Tensor::<f64>::uniform(&[1, 3, 8, 8], -1.0, 1.0, &mut rng);
        let k = Tensor::<f64>::uniform(&[2, 3, 3, 3], -1.0, 1.0, &mut rng);
        let y = conv2d(&x, &k, None, 1, 1).unwrap();
        // independent quadruple loop over output coords and taps
        for o in 0..2 {
            for oy in 0..8usize {
                for ox in 0..8usize {
                    let mut acc = 0.0;
                    for c in 0..3 {
                        for ky in 0..3usize {
                            for kx in 0..3usize {
                                let iy = oy as isize + ky as isize - 1;
                                let ix = ox as isize + kx as isize - 1;
                                if iy < 0 || iy >= 8 || ix < 0 || ix >= 8 {
                                    continue;
                                }
                                acc += x.data()[(c * 8 + iy as usize) * 8 + ix as usize]
                                    * k.data()[((o * 3 + c) * 3 + ky) * 3 + kx];
                            }
                        }
                    }
                    let got = y.data()[(o * 8 + oy) * 8 + ox];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_rejects_non_integer_output() {
        let x = Tensor::<f64>::zeros(&[1, 1, 6, 6]);
        let k = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        assert!(conv2d(&x, &k, None, 2, 0).is_err());
    }

    #[test]
    fn maxpool_constant_field() {
        let x = Tensor::<f64>::full(&[1, 1, 4, 4], 3.25);
        let p = maxpool2d(&x, 2, 2, 0).unwrap();
        assert!(p.out.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn maxpool_max_of_all() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool2d(&x, 2, 1, 0).unwrap();
        assert_eq!(p.out.shape(), &[1, 1, 1, 1]);
        assert_eq!(p.out.data(), &[4.0]);
        assert_eq!(p.argmax, vec![Some(3)]);
    }

    #[test]
    fn maxpool_matches_loop_oracle_same_pad() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = Tensor::<f64>::uniform(&[1, 1, 8, 8], -1.0, 1.0, &mut rng);
        let p = maxpool2d(&x, 5, 1, 2).unwrap();
        for oy in 0..8isize {
            for ox in 0..8isize {
                let mut best = f64::NEG_INFINITY;
                for dy in -2..=2isize {
                    for dx in -2..=2isize {
                        let (iy, ix) = (oy + dy, ox + dx);
                        if iy < 0 || iy >= 8 || ix < 0 || ix >= 8 {
                            continue;
                        }
                        best = best.max(x.data()[(iy * 8 + ix) as usize]);
                    }
                }
                assert_eq!(p.out.data()[(oy * 8 + ox) as usize], best);
            }
        }
    }

    #[test]
    fn maxpool_rejects_oversized_kernel() {
        let x = Tensor::<f64>::zeros(&[1, 1, 4, 4]);
        assert!(maxpool2d(&x, 7, 1, 1).is_err());
    }

    #[test]
    fn softmax_uniform_and_shift_invariant() {
        let x = Tensor::<f64>::from_vec(vec![0.0; 4]);
        let y = softmax(&x, 0).unwrap();
        for &v in y.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let x = Tensor::<f64>::uniform(&[6], -2.0, 2.0, &mut rng);
        let shifted = x.map(|v| v + 17.5);
        let a = softmax(&x, 0).unwrap();
        let b = softmax(&shifted, 0).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_matches_high_precision_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let x = Tensor::<f64>::uniform(&[6], -3.0, 3.0, &mut rng);
        let y = softmax(&x, 0).unwrap();
        // plain exp/sum recomputation without max subtraction
        let denom: f64 = x.data().iter().map(|v| v.exp()).sum();
        for (j, &v) in y.data().iter().enumerate() {
            assert!((v - x.data()[j].exp() / denom).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_treats_neg_inf_as_masked() {
        let x = Tensor::from_vec(vec![1.0, f64::NEG_INFINITY, 2.0]);
        let y = softmax(&x, 0).unwrap();
        assert_eq!(y.data()[1], 0.0);
        assert!((y.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_constant_token_returns_beta() {
        let x = Tensor::<f64>::full(&[2, 4], 3.0);
        let gamma = Tensor::<f64>::full(&[4], 1.7);
        let beta = Tensor::<f64>::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let y = layer_norm(&x, &gamma, &beta, 1e-5).unwrap();
        for r in 0..2 {
            for j in 0..4 {
                assert!((y.data()[r * 4 + j] - beta.data()[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn layer_norm_two_token_hand_case() {
        let x = Tensor::<f64>::new(vec![1, 2], vec![1.0, 3.0]).unwrap();
        let gamma = Tensor::full(&[2], 1.0);
        let beta = Tensor::zeros(&[2]);
        let y = layer_norm(&x, &gamma, &beta, 1e-5).unwrap();
        assert!((y.data()[0] - -1.0).abs() < 1e-4);
        assert!((y.data()[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn activations_fixed_points() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!((-3.0f64).max(0.0), 0.0);
        assert_eq!(relu_grad(-1.0f64), 0.0);
        assert_eq!(relu_grad(0.0f64), 0.0);
    }

    #[test]
    fn gelu_matches_series_erf_oracle() {
        // independent erf via its Taylor/continued series, summed in f64
        fn erf_series(x: f64) -> f64 {
            let mut term = x;
            let mut sum = x;
            for n in 1..200 {
                term *= -x * x / n as f64;
                sum += term / (2 * n + 1) as f64;
            }
            sum * 2.0 / std::f64::consts::PI.sqrt()
        }
        let mut worst: f64 = 0.0;
        for i in 0..=100 {
            let x = -5.0 + 10.0 * i as f64 / 100.0;
            let want = 0.5 * x * (1.0 + erf_series(x / std::f64::consts::SQRT_2));
            worst = worst.max((gelu(x) - want).abs());
        }
        assert!(worst < 1e-7, "max abs diff {worst}");
    }

    #[test]
    fn remap_roundtrip_permute() {
        let t = Tensor::<f64>::from_vec((0..24).map(|v| v as f64).collect())
            .reshape(&[2, 3, 4])
            .unwrap();
        let (map, out_shape) = permute_map(t.shape(), &[2, 0, 1]);
        let p = remap(&t, &map, &out_shape).unwrap();
        let (inv, back_shape) = permute_map(p.shape(), &[1, 2, 0]);
        let back = remap(&p, &inv, &back_shape).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn concat_then_split_is_identity() {
        let a = Tensor::<f64>::full(&[2, 2, 3], 1.0);
        let b = Tensor::<f64>::full(&[2, 1, 3], 2.0);
        let c = concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3, 3]);
        let parts = concat_backward(&c, &[a.shape().to_vec(), b.shape().to_vec()], 1);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn forward_ops_finite_on_finite_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let x = Tensor::<f64>::uniform(&[2, 3, 6, 6], -50.0, 50.0, &mut rng);
        let k = Tensor::<f64>::uniform(&[4, 3, 3, 3], -2.0, 2.0, &mut rng);
        assert!(conv2d(&x, &k, None, 1, 1).unwrap().is_finite());
        assert!(maxpool2d(&x, 3, 1, 1).unwrap().out.is_finite());
        assert!(softmax(&x, 3).unwrap().is_finite());
        assert!(x.map(gelu).is_finite());
        assert!(x.map(sigmoid).is_finite());
    }
}
