//! Differentiable layer kernels on NHWC tensors.
//!
//! Convolution is a gather of image patches into a `[B*Ho*Wo, k*k*C]` column
//! matrix followed by a GEMM; transposed convolution is the adjoint (GEMM then
//! scatter-add). Because gather and scatter-add are each other's derivative,
//! both layers are differentiable to any order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::autograd::{GatherIndex, Graph, Var, NO_SOURCE};
use crate::scalar::Scalar;

pub const NORM_EPS: f64 = 1e-5;

/// Spatial geometry of a patch map between an image and a grid of windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchGeometry {
    pub batch: usize,
    pub img_h: usize,
    pub img_w: usize,
    pub channels: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PatchGeometry {
    /// Index mapping each `(window, kh, kw, c)` column entry to its image
    /// element; out-of-image taps map to [`NO_SOURCE`].
    pub fn index(&self) -> GatherIndex {
        let &PatchGeometry {
            batch,
            img_h,
            img_w,
            channels,
            grid_h,
            grid_w,
            kernel,
            stride,
            padding,
        } = self;
        let cols = kernel * kernel * channels;
        let mut idx = Vec::with_capacity(batch * grid_h * grid_w * cols);
        for b in 0..batch {
            for oh in 0..grid_h {
                for ow in 0..grid_w {
                    for kh in 0..kernel {
                        let ih = (oh * stride + kh) as isize - padding as isize;
                        for kw in 0..kernel {
                            let iw = (ow * stride + kw) as isize - padding as isize;
                            let inside = ih >= 0
                                && iw >= 0
                                && (ih as usize) < img_h
                                && (iw as usize) < img_w;
                            for c in 0..channels {
                                idx.push(if inside {
                                    (((b * img_h + ih as usize) * img_w + iw as usize) * channels
                                        + c) as u32
                                } else {
                                    NO_SOURCE
                                });
                            }
                        }
                    }
                }
            }
        }
        GatherIndex::new(
            vec![batch, img_h, img_w, channels],
            vec![batch * grid_h * grid_w, cols],
            idx,
        )
    }
}

/// Memoized patch indices, keyed by geometry.
#[derive(Default)]
pub struct IndexCache {
    map: Mutex<HashMap<PatchGeometry, Arc<GatherIndex>>>,
}

impl IndexCache {
    pub fn get(&self, geom: PatchGeometry) -> Arc<GatherIndex> {
        let mut map = self.map.lock().expect("index cache poisoned");
        if map.len() > 64 {
            map.clear();
        }
        map.entry(geom)
            .or_insert_with(|| Arc::new(geom.index()))
            .clone()
    }
}

pub fn conv_out(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (size + 2 * padding)
        .checked_sub(kernel)
        .map(|v| v / stride + 1)
}

pub fn deconv_out(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    ((size.checked_sub(1)?) * stride + kernel).checked_sub(2 * padding)
}

fn dims4(g: &Graph<impl Scalar>, x: Var) -> (usize, usize, usize, usize) {
    match *g.shape(x) {
        [b, h, w, c] => (b, h, w, c),
        ref s => panic!("expected NHWC tensor, got {s:?}"),
    }
}

fn add_bias<T: Scalar>(g: &mut Graph<T>, y: Var, bias: Var) -> Var {
    let rows = g.shape(y)[0];
    let b = g.broadcast_rows(bias, rows);
    g.add(y, b)
}

/// `weight`: `[k*k*Cin, Cout]`, `bias`: `[Cout]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d<T: Scalar>(
    g: &mut Graph<T>,
    cache: &IndexCache,
    x: Var,
    weight: Var,
    bias: Var,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Var {
    let (b, h, w, c) = dims4(g, x);
    let oh = conv_out(h, kernel, stride, padding).expect("conv kernel larger than input");
    let ow = conv_out(w, kernel, stride, padding).expect("conv kernel larger than input");
    let geom = PatchGeometry {
        batch: b,
        img_h: h,
        img_w: w,
        channels: c,
        grid_h: oh,
        grid_w: ow,
        kernel,
        stride,
        padding,
    };
    let cols = g.gather(x, cache.get(geom));
    let y = g.matmul(cols, weight);
    let y = add_bias(g, y, bias);
    let cout = g.shape(y)[1];
    g.reshape(y, &[b, oh, ow, cout])
}

/// Transposed convolution. `weight`: `[Cin, k*k*Cout]`, `bias`: `[Cout]`.
#[allow(clippy::too_many_arguments)]
pub fn deconv2d<T: Scalar>(
    g: &mut Graph<T>,
    cache: &IndexCache,
    x: Var,
    weight: Var,
    bias: Var,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Var {
    let (b, h, w, cin) = dims4(g, x);
    let oh = deconv_out(h, kernel, stride, padding).expect("deconv geometry");
    let ow = deconv_out(w, kernel, stride, padding).expect("deconv geometry");
    let cout = g.shape(bias)[0];
    let geom = PatchGeometry {
        batch: b,
        img_h: oh,
        img_w: ow,
        channels: cout,
        grid_h: h,
        grid_w: w,
        kernel,
        stride,
        padding,
    };
    let flat = g.reshape(x, &[b * h * w, cin]);
    let cols = g.matmul(flat, weight);
    let y = g.scatter_add(cols, cache.get(geom));
    let y = g.reshape(y, &[b * oh * ow, cout]);
    let y = add_bias(g, y, bias);
    g.reshape(y, &[b, oh, ow, cout])
}

/// Max pooling without padding; the argmax routing is fixed at forward time.
pub fn max_pool<T: Scalar>(g: &mut Graph<T>, x: Var, size: usize, stride: usize) -> Var {
    let (b, h, w, c) = dims4(g, x);
    let oh = conv_out(h, size, stride, 0).expect("pool window larger than input");
    let ow = conv_out(w, size, stride, 0).expect("pool window larger than input");
    let data = g.value(x).data();
    let mut idx = Vec::with_capacity(b * oh * ow * c);
    for bi in 0..b {
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    let mut best_v = T::neg_infinity();
                    for di in 0..size {
                        for dj in 0..size {
                            let p = ((bi * h + i * stride + di) * w + j * stride + dj) * c + ch;
                            if best == usize::MAX || data[p] > best_v {
                                best = p;
                                best_v = data[p];
                            }
                        }
                    }
                    idx.push(best as u32);
                }
            }
        }
    }
    let index = GatherIndex::new(vec![b, h, w, c], vec![b, oh, ow, c], idx);
    g.gather(x, Arc::new(index))
}

/// Per-sample normalization over all non-batch features, then a per-channel
/// affine transform (channel = last axis).
pub fn layer_norm<T: Scalar>(g: &mut Graph<T>, x: Var, gamma: Var, beta: Var) -> Var {
    let shape = g.shape(x).to_vec();
    let b = shape[0];
    let f: usize = shape[1..].iter().product();
    let c = *shape.last().unwrap();
    let rows = g.reshape(x, &[b, f]);
    let normed = normalize_rows(g, rows, f);
    let per_ch = g.reshape(normed, &[b * f / c, c]);
    let y = affine_channels(g, per_ch, gamma, beta);
    g.reshape(y, &shape)
}

/// Normalization with statistics pooled over the batch (and spatial axes).
pub fn batch_norm<T: Scalar>(g: &mut Graph<T>, x: Var, gamma: Var, beta: Var) -> Var {
    let shape = g.shape(x).to_vec();
    let c = *shape.last().unwrap();
    let m = g.value(x).len() / c;
    let cols = g.reshape(x, &[m, c]);
    let inv_m = T::one() / T::from_usize_lossy(m);
    let mean = g.sum_rows(cols);
    let mean = g.scale(mean, inv_m);
    let mean = g.broadcast_rows(mean, m);
    let centered = g.sub(cols, mean);
    let sq = g.square(centered);
    let var = g.sum_rows(sq);
    let var = g.scale(var, inv_m);
    let var = g.add_scalar(var, T::lit(NORM_EPS));
    let inv = g.pow(var, T::lit(-0.5));
    let inv = g.broadcast_rows(inv, m);
    let normed = g.mul(centered, inv);
    let y = affine_channels(g, normed, gamma, beta);
    g.reshape(y, &shape)
}

fn normalize_rows<T: Scalar>(g: &mut Graph<T>, rows: Var, f: usize) -> Var {
    let inv_f = T::one() / T::from_usize_lossy(f);
    let mean = g.sum_cols(rows);
    let mean = g.scale(mean, inv_f);
    let mean = g.broadcast_cols(mean, f);
    let centered = g.sub(rows, mean);
    let sq = g.square(centered);
    let var = g.sum_cols(sq);
    let var = g.scale(var, inv_f);
    let var = g.add_scalar(var, T::lit(NORM_EPS));
    let inv = g.pow(var, T::lit(-0.5));
    let inv = g.broadcast_cols(inv, f);
    g.mul(centered, inv)
}

fn affine_channels<T: Scalar>(g: &mut Graph<T>, x: Var, gamma: Var, beta: Var) -> Var {
    let m = g.shape(x)[0];
    let gm = g.broadcast_rows(gamma, m);
    let y = g.mul(x, gm);
    add_bias(g, y, beta)
}

/// Reverses the order of rows (`flip_h`) and/or columns (`flip_w`) of a single
/// `[H, W, C]` image stored contiguously.
pub fn flip_image<T: Copy>(
    img: &mut [T],
    h: usize,
    w: usize,
    c: usize,
    flip_h: bool,
    flip_w: bool,
) {
    if !flip_h && !flip_w {
        return;
    }
    let src = img.to_vec();
    for i in 0..h {
        let si = if flip_h { h - 1 - i } else { i };
        for j in 0..w {
            let sj = if flip_w { w - 1 - j } else { j };
            let d = (i * w + j) * c;
            let s = (si * w + sj) * c;
            img[d..d + c].copy_from_slice(&src[s..s + c]);
        }
    }
}
