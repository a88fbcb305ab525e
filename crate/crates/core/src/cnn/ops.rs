//! Layer kernels of the golden model: convolution, fully-connected products,
//! ReLU, max pooling, and their backward counterparts.

use alloc::vec;
use alloc::vec::Vec;

use super::TrainParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Padding that keeps the spatial size for odd `k` at stride 1.
pub fn same_padding(kernel: usize) -> usize {
    kernel.saturating_sub(1) / 2
}

pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || input + 2 * padding < kernel {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

struct ConvGeometry {
    out_c: usize,
    in_c: usize,
    h: usize,
    w: usize,
    k: usize,
    ho: usize,
    wo: usize,
}

fn conv_geometry(input_shape: &[usize], weights: &Tensor, stride: usize, padding: usize) -> Result<ConvGeometry> {
    let ws = weights.shape();
    if input_shape.len() != 3 || ws.len() != 4 || ws[1] != input_shape[0] || ws[2] != ws[3] {
        return Err(Error::shape("conv", input_shape, ws));
    }
    if stride == 0 {
        return Err(Error::param("stride", "must be at least 1"));
    }
    let (h, w, k) = (input_shape[1], input_shape[2], ws[2]);
    let ho = conv_output_size(h, k, stride, padding).ok_or_else(|| Error::shape("conv", input_shape, ws))?;
    let wo = conv_output_size(w, k, stride, padding).ok_or_else(|| Error::shape("conv", input_shape, ws))?;
    Ok(ConvGeometry {
        out_c: ws[0],
        in_c: ws[1],
        h,
        w,
        k,
        ho,
        wo,
    })
}

/// `z[o,y,x] = Σ_{c,i,j} w[o,c,i,j]·a[c, y·s+i−p, x·s+j−p] + b[o]`.
pub fn conv_forward(input: &Tensor, weights: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = conv_geometry(input.shape(), weights, stride, padding)?;
    if bias.len() != g.out_c {
        return Err(Error::shape("conv bias", weights.shape(), bias.shape()));
    }
    let (x, wt, b) = (input.data(), weights.data(), bias.data());
    let mut out = vec![0.0; g.out_c * g.ho * g.wo];
    for o in 0..g.out_c {
        let plane = &mut out[o * g.ho * g.wo..(o + 1) * g.ho * g.wo];
        plane.iter_mut().for_each(|v| *v = b[o]);
        for c in 0..g.in_c {
            let src = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
            for i in 0..g.k {
                for j in 0..g.k {
                    let wv = wt[((o * g.in_c + c) * g.k + i) * g.k + j];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in 0..g.ho {
                        let iy = (y * stride + i) as isize - padding as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let orow = &mut plane[y * g.wo..(y + 1) * g.wo];
                        for (xo, ov) in orow.iter_mut().enumerate() {
                            let ix = (xo * stride + j) as isize - padding as isize;
                            if ix >= 0 && ix < g.w as isize {
                                *ov += wv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new([g.out_c, g.ho, g.wo], out)
}

/// Gradient with respect to the convolution input (transposed convolution).
pub fn conv_backward_input(
    delta: &Tensor,
    weights: &Tensor,
    input_shape: &[usize],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = conv_geometry(input_shape, weights, stride, padding)?;
    if delta.shape() != [g.out_c, g.ho, g.wo] {
        return Err(Error::shape("conv backward", delta.shape(), &[g.out_c, g.ho, g.wo]));
    }
    let (d, wt) = (delta.data(), weights.data());
    let mut dx = vec![0.0; g.in_c * g.h * g.w];
    for o in 0..g.out_c {
        for c in 0..g.in_c {
            for i in 0..g.k {
                for j in 0..g.k {
                    let wv = wt[((o * g.in_c + c) * g.k + i) * g.k + j];
                    for y in 0..g.ho {
                        let iy = (y * stride + i) as isize - padding as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for xo in 0..g.wo {
                            let ix = (xo * stride + j) as isize - padding as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dx[(c * g.h + iy as usize) * g.w + ix as usize] += wv * d[(o * g.ho + y) * g.wo + xo];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx)
}

/// `(∂w, ∂b)` of a convolution for one sample.
pub fn conv_weight_grad(
    delta: &Tensor,
    input: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor)> {
    let (out_c, in_c) = (delta.shape()[0], input.shape()[0]);
    let probe = Tensor::zeros([out_c, in_c, kernel, kernel]);
    let g = conv_geometry(input.shape(), &probe, stride, padding)?;
    if delta.shape() != [g.out_c, g.ho, g.wo] {
        return Err(Error::shape("conv weight grad", delta.shape(), &[g.out_c, g.ho, g.wo]));
    }
    let (d, x) = (delta.data(), input.data());
    let mut dw = vec![0.0; out_c * in_c * kernel * kernel];
    let mut db = vec![0.0; out_c];
    for o in 0..out_c {
        let dplane = &d[o * g.ho * g.wo..(o + 1) * g.ho * g.wo];
        db[o] = dplane.iter().sum();
        for c in 0..in_c {
            for i in 0..kernel {
                for j in 0..kernel {
                    let mut acc = 0.0;
                    for y in 0..g.ho {
                        let iy = (y * stride + i) as isize - padding as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for xo in 0..g.wo {
                            let ix = (xo * stride + j) as isize - padding as isize;
                            if ix >= 0 && ix < g.w as isize {
                                acc += dplane[y * g.wo + xo] * x[(c * g.h + iy as usize) * g.w + ix as usize];
                            }
                        }
                    }
                    dw[((o * in_c + c) * kernel + i) * kernel + j] = acc;
                }
            }
        }
    }
    Ok((Tensor::new([out_c, in_c, kernel, kernel], dw)?, Tensor::vector(db)))
}

/// `y = W·x + b` with `x` flattened.
pub fn fc_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let ws = weights.shape();
    if ws.len() != 2 || ws[1] != input.len() {
        return Err(Error::shape("fc", input.shape(), ws));
    }
    if bias.len() != ws[0] {
        return Err(Error::shape("fc bias", ws, bias.shape()));
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(ws[1])
        .zip(bias.data())
        .map(|(row, &b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect();
    Ok(Tensor::vector(out))
}

/// `Wᵀ·δ`.
pub fn fc_backward_input(delta: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let ws = weights.shape();
    if ws.len() != 2 || ws[0] != delta.len() {
        return Err(Error::shape("fc backward", delta.shape(), ws));
    }
    let mut out = vec![0.0; ws[1]];
    for (row, &d) in weights.data().chunks_exact(ws[1]).zip(delta.data()) {
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * d;
        }
    }
    Ok(Tensor::vector(out))
}

/// Outer product `δ·aᵀ` and `δ` itself.
pub fn fc_weight_grad(delta: &Tensor, input: &Tensor) -> (Tensor, Tensor) {
    let (n_out, n_in) = (delta.len(), input.len());
    let x = input.data();
    let mut dw = Vec::with_capacity(n_out * n_in);
    for &d in delta.data() {
        dw.extend(x.iter().map(|v| d * v));
    }
    (
        Tensor::new([n_out, n_in], dw).expect("outer product volume"),
        Tensor::vector(delta.data().to_vec()),
    )
}

#[inline]
pub fn relu_scalar(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// `σ′(z)`, taking the `z ≤ 0` branch at zero.
#[inline]
pub fn relu_derivative_scalar(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn relu(z: &Tensor) -> Tensor {
    z.map(relu_scalar)
}

pub fn relu_derivative(z: &Tensor) -> Tensor {
    z.map(relu_derivative_scalar)
}

/// Output of a max pool and, per output, the flat input index that won.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Max pooling over `window×window` patches. Trailing rows/columns that do
/// not fill a whole window are dropped.
pub fn max_pool(input: &Tensor, window: usize, stride: usize) -> Result<Pooled> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::shape("max_pool", s, &[window, window]));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if window == 0 || stride == 0 {
        return Err(Error::param("pool", "window and stride must be at least 1"));
    }
    if window > h || window > w {
        return Err(Error::shape("max_pool window", s, &[window, window]));
    }
    let (ho, wo) = ((h - window) / stride + 1, (w - window) / stride + 1);
    let x = input.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut argmax = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for y in 0..ho {
            for xo in 0..wo {
                let mut best = (ch * h + y * stride) * w + xo * stride;
                for i in 0..window {
                    for j in 0..window {
                        let idx = (ch * h + y * stride + i) * w + xo * stride + j;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new([c, ho, wo], out)?,
        argmax,
    })
}

/// Routes pooled gradients back to the winning inputs.
pub fn max_pool_backward(delta: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if delta.len() != argmax.len() {
        return Err(Error::shape("max_pool backward", delta.shape(), &[argmax.len()]));
    }
    let mut dx = Tensor::zeros(input_shape.to_vec());
    let n = dx.len();
    let buf = dx.data_mut();
    for (&idx, &d) in argmax.iter().zip(delta.data()) {
        if idx >= n {
            return Err(Error::shape("max_pool backward", input_shape, &[idx]));
        }
        buf[idx] += d;
    }
    Ok(dx)
}

/// Output-layer error for the quadratic cost: `(a − y) ⊙ σ′(z)`.
pub fn output_error(output: &Tensor, target: &Tensor, z: &Tensor) -> Result<Tensor> {
    output.expect_same_shape(target, "output_error")?;
    output.expect_same_shape(z, "output_error")?;
    let data = output
        .data()
        .iter()
        .zip(target.data())
        .zip(z.data())
        .map(|((a, y), &zv)| (a - y) * relu_derivative_scalar(zv))
        .collect();
    Tensor::new(output.shape().to_vec(), data)
}

/// `δˡ = ((wˡ⁺¹)ᵀ·δˡ⁺¹) ⊙ σ′(zˡ)`.
///
/// Rank-2 weights are a fully-connected layer (`z` may be any shape with the
/// right volume); rank-4 weights are a stride-1 "same" convolution.
pub fn backward_layer(delta_next: &Tensor, weights_next: &Tensor, z: &Tensor) -> Result<Tensor> {
    let back = match weights_next.rank() {
        2 => {
            if weights_next.shape()[1] != z.len() {
                return Err(Error::shape("backward_layer", weights_next.shape(), z.shape()));
            }
            fc_backward_input(delta_next, weights_next)?.reshape(z.shape().to_vec())?
        }
        4 => {
            let k = weights_next.shape()[2];
            conv_backward_input(delta_next, weights_next, z.shape(), 1, same_padding(k))?
        }
        _ => return Err(Error::shape("backward_layer", weights_next.shape(), z.shape())),
    };
    back.zip_map(z, "backward_layer", |g, zv| g * relu_derivative_scalar(zv))
}

/// Per-sample weight and bias gradient for a layer with the given weights.
pub fn layer_gradient(delta: &Tensor, activation_prev: &Tensor, weights: &Tensor) -> Result<(Tensor, Tensor)> {
    match weights.rank() {
        2 => {
            if weights.shape() != [delta.len(), activation_prev.len()] {
                return Err(Error::shape("layer_gradient", weights.shape(), &[delta.len(), activation_prev.len()]));
            }
            Ok(fc_weight_grad(delta, activation_prev))
        }
        4 => {
            let k = weights.shape()[2];
            let (dw, db) = conv_weight_grad(delta, activation_prev, k, 1, same_padding(k))?;
            dw.expect_same_shape(weights, "layer_gradient")?;
            Ok((dw, db))
        }
        _ => Err(Error::shape("layer_gradient", weights.shape(), delta.shape())),
    }
}

/// `w ← w − (η/m)·Σₓ δˣ·(aˣ)ᵀ`, `b ← b − (η/m)·Σₓ δˣ`.
pub fn sgd_update(
    weights: &Tensor,
    bias: &Tensor,
    deltas: &[Tensor],
    activations_prev: &[Tensor],
    params: &TrainParams,
) -> Result<(Tensor, Tensor)> {
    let m = deltas.len();
    if m == 0 {
        return Err(Error::param("batch", "sgd_update needs at least one sample"));
    }
    if activations_prev.len() != m {
        return Err(Error::shape("sgd_update batch", &[m], &[activations_prev.len()]));
    }
    let mut gw = Tensor::zeros(weights.shape().to_vec());
    let mut gb = Tensor::zeros(bias.shape().to_vec());
    for (d, a) in deltas.iter().zip(activations_prev) {
        let (dw, db) = layer_gradient(d, a, weights)?;
        accumulate(&mut gw, &dw);
        accumulate(&mut gb, &db);
    }
    let step = params.learning_rate / m as f64;
    let w = weights.zip_map(&gw, "sgd_update", |w, g| w - step * g)?;
    let b = bias.zip_map(&gb, "sgd_update", |b, g| b - step * g)?;
    Ok((w, b))
}

pub(crate) fn accumulate(into: &mut Tensor, add: &Tensor) {
    for (a, b) in into.data_mut().iter_mut().zip(add.data()) {
        *a += b;
    }
}
