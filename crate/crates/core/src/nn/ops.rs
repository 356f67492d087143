//! Forward and backward passes for the layer set used by the embedding
//! classifier: 2-D convolution (NHWC), dense, ReLU/SELU, global average
//! pooling, and softmax cross-entropy.
//!
//! Convolution and dense products run through a single-precision GEMM;
//! reductions (pooling, softmax normalizers, losses) accumulate in f64.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

#[allow(clippy::excessive_precision)]
pub const SELU_LAMBDA: f32 = 1.050_700_987_355_480_5;
#[allow(clippy::excessive_precision)]
pub const SELU_ALPHA: f32 = 1.673_263_242_354_377_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Selu,
}

/// Row-major matrix product `c = a(m x k) . b(k x n)`.
fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = a^T(m x k) . b(k x n)` where `a` is stored row-major as (k x m).
fn matmul_at_b(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, c: &mut [f32]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = a(m x k) . b^T(k x n)` where `b` is stored row-major as (n x k).
fn matmul_a_bt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) struct ConvDims {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

pub(crate) fn conv_dims(
    input_shape: &[usize],
    kernel_shape: &[usize],
    stride: usize,
    padding: Padding,
) -> Result<ConvDims> {
    if input_shape.len() != 4 {
        return Err(Error::Shape(format!("conv2d input must be NHWC, got {input_shape:?}")));
    }
    if kernel_shape.len() != 4 {
        return Err(Error::Shape(format!(
            "conv2d kernel must be KhKwCinCout, got {kernel_shape:?}"
        )));
    }
    if stride == 0 {
        return Err(Error::Shape("conv2d stride must be >= 1".into()));
    }
    let (batch, in_h, in_w, in_c) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let (k_h, k_w, kc_in, out_c) = (kernel_shape[0], kernel_shape[1], kernel_shape[2], kernel_shape[3]);
    if kc_in != in_c {
        return Err(Error::Shape(format!(
            "conv2d channel mismatch: input has {in_c}, kernel expects {kc_in}"
        )));
    }
    let (out_h, out_w, pad_top, pad_left) = match padding {
        Padding::Valid => {
            if in_h < k_h || in_w < k_w {
                return Err(Error::Shape(format!(
                    "valid conv needs input >= kernel, got {in_h}x{in_w} vs {k_h}x{k_w}"
                )));
            }
            ((in_h - k_h) / stride + 1, (in_w - k_w) / stride + 1, 0, 0)
        }
        Padding::Same => {
            let out_h = in_h.div_ceil(stride);
            let out_w = in_w.div_ceil(stride);
            let pad_h = ((out_h - 1) * stride + k_h).saturating_sub(in_h);
            let pad_w = ((out_w - 1) * stride + k_w).saturating_sub(in_w);
            (out_h, out_w, pad_h / 2, pad_w / 2)
        }
    };
    Ok(ConvDims {
        batch,
        in_h,
        in_w,
        in_c,
        k_h,
        k_w,
        out_c,
        out_h,
        out_w,
        pad_top,
        pad_left,
    })
}

/// Unfold input patches into a (batch*out_h*out_w) x (k_h*k_w*in_c) matrix.
fn im2col(input: &[f32], d: &ConvDims, stride: usize) -> Vec<f32> {
    let patch = d.k_h * d.k_w * d.in_c;
    let rows = d.batch * d.out_h * d.out_w;
    let mut cols = vec![0.0f32; rows * patch];
    let mut row = 0usize;
    for n in 0..d.batch {
        let in_base = n * d.in_h * d.in_w * d.in_c;
        for oh in 0..d.out_h {
            for ow in 0..d.out_w {
                let dst = &mut cols[row * patch..(row + 1) * patch];
                let mut p = 0usize;
                for kh in 0..d.k_h {
                    let ih = (oh * stride + kh) as isize - d.pad_top as isize;
                    for kw in 0..d.k_w {
                        let iw = (ow * stride + kw) as isize - d.pad_left as isize;
                        if ih >= 0 && (ih as usize) < d.in_h && iw >= 0 && (iw as usize) < d.in_w {
                            let src = in_base + ((ih as usize) * d.in_w + iw as usize) * d.in_c;
                            dst[p..p + d.in_c].copy_from_slice(&input[src..src + d.in_c]);
                        }
                        p += d.in_c;
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Scatter-add the column matrix back into input layout (adjoint of im2col).
fn col2im(cols: &[f32], d: &ConvDims, stride: usize) -> Vec<f32> {
    let patch = d.k_h * d.k_w * d.in_c;
    let mut input = vec![0.0f32; d.batch * d.in_h * d.in_w * d.in_c];
    let mut row = 0usize;
    for n in 0..d.batch {
        let in_base = n * d.in_h * d.in_w * d.in_c;
        for oh in 0..d.out_h {
            for ow in 0..d.out_w {
                let src = &cols[row * patch..(row + 1) * patch];
                let mut p = 0usize;
                for kh in 0..d.k_h {
                    let ih = (oh * stride + kh) as isize - d.pad_top as isize;
                    for kw in 0..d.k_w {
                        let iw = (ow * stride + kw) as isize - d.pad_left as isize;
                        if ih >= 0 && (ih as usize) < d.in_h && iw >= 0 && (iw as usize) < d.in_w {
                            let dst = in_base + ((ih as usize) * d.in_w + iw as usize) * d.in_c;
                            for c in 0..d.in_c {
                                input[dst + c] += src[p + c];
                            }
                        }
                        p += d.in_c;
                    }
                }
                row += 1;
            }
        }
    }
    input
}

/// Cross-correlation of an NHWC input with a KhKwCinCout kernel.
pub fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let d = conv_dims(input.shape(), kernel.shape(), stride, padding)?;
    let patch = d.k_h * d.k_w * d.in_c;
    let rows = d.batch * d.out_h * d.out_w;
    let cols = im2col(input.data(), &d, stride);
    let mut out = vec![0.0f32; rows * d.out_c];
    matmul(&cols, kernel.data(), rows, patch, d.out_c, &mut out);
    Tensor::from_vec(&[d.batch, d.out_h, d.out_w, d.out_c], out)
}

/// Gradients of `conv2d_forward` with respect to input and kernel.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let d = conv_dims(input.shape(), kernel.shape(), stride, padding)?;
    let patch = d.k_h * d.k_w * d.in_c;
    let rows = d.batch * d.out_h * d.out_w;
    if grad_out.shape() != [d.batch, d.out_h, d.out_w, d.out_c] {
        return Err(Error::Shape(format!(
            "conv2d grad_out shape {:?} does not match output {:?}",
            grad_out.shape(),
            [d.batch, d.out_h, d.out_w, d.out_c]
        )));
    }

    let cols = im2col(input.data(), &d, stride);

    // grad_kernel = cols^T . grad_out
    let mut grad_kernel = vec![0.0f32; patch * d.out_c];
    matmul_at_b(&cols, grad_out.data(), patch, rows, d.out_c, &mut grad_kernel);

    // grad_cols = grad_out . kernel^T, then fold back to input layout
    let mut grad_cols = vec![0.0f32; rows * patch];
    matmul_a_bt(grad_out.data(), kernel.data(), rows, d.out_c, patch, &mut grad_cols);
    let grad_input = col2im(&grad_cols, &d, stride);

    Ok((
        Tensor::from_vec(input.shape(), grad_input)?,
        Tensor::from_vec(kernel.shape(), grad_kernel)?,
    ))
}

/// `input (N x In) . weight (In x Out) + bias (Out)`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 {
        return Err(Error::Shape(format!(
            "dense expects (N,In)x(In,Out)+(Out), got {:?} {:?} {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let (n, d_in) = (input.shape()[0], input.shape()[1]);
    let (w_in, d_out) = (weight.shape()[0], weight.shape()[1]);
    if d_in != w_in || bias.shape()[0] != d_out {
        return Err(Error::Shape(format!(
            "dense dims disagree: input {:?}, weight {:?}, bias {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let mut out = vec![0.0f32; n * d_out];
    matmul(input.data(), weight.data(), n, d_in, d_out, &mut out);
    for row in out.chunks_mut(d_out) {
        for (o, b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Tensor::from_vec(&[n, d_out], out)
}

/// Gradients of `dense_forward`: (grad_input, grad_weight, grad_bias).
pub fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, d_in) = (input.shape()[0], input.shape()[1]);
    let d_out = weight.shape()[1];
    if grad_out.shape() != [n, d_out] {
        return Err(Error::Shape(format!(
            "dense grad_out shape {:?}, expected [{n}, {d_out}]",
            grad_out.shape()
        )));
    }
    let mut grad_weight = vec![0.0f32; d_in * d_out];
    matmul_at_b(input.data(), grad_out.data(), d_in, n, d_out, &mut grad_weight);

    let mut grad_input = vec![0.0f32; n * d_in];
    matmul_a_bt(grad_out.data(), weight.data(), n, d_out, d_in, &mut grad_input);

    let mut grad_bias = vec![0.0f64; d_out];
    for row in grad_out.data().chunks(d_out) {
        for (b, g) in grad_bias.iter_mut().zip(row) {
            *b += f64::from(*g);
        }
    }
    Ok((
        Tensor::from_vec(&[n, d_in], grad_input)?,
        Tensor::from_vec(&[d_in, d_out], grad_weight)?,
        Tensor::from_vec(&[d_out], grad_bias.into_iter().map(|b| b as f32).collect())?,
    ))
}

pub fn activation_forward(input: &Tensor, kind: Activation) -> Tensor {
    let data = input
        .data()
        .iter()
        .map(|&x| match kind {
            Activation::Relu => x.max(0.0),
            Activation::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
                }
            }
        })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

pub fn activation_backward(input: &Tensor, kind: Activation, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(input.shape(), grad_out.shape());
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| {
            let dydx = match kind {
                Activation::Relu => {
                    if x > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Activation::Selu => {
                    if x > 0.0 {
                        SELU_LAMBDA
                    } else {
                        SELU_LAMBDA * SELU_ALPHA * x.exp()
                    }
                }
            };
            g * dydx
        })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

/// Per-channel spatial mean: NHWC -> NC.
pub fn global_avg_pool_forward(input: &Tensor) -> Result<Tensor> {
    if input.rank() != 4 {
        return Err(Error::Shape(format!("pool input must be NHWC, got {:?}", input.shape())));
    }
    let (n, h, w, c) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    if h == 0 || w == 0 {
        return Err(Error::Shape("pool needs H,W >= 1".into()));
    }
    let spatial = h * w;
    let mut out = vec![0.0f32; n * c];
    for b in 0..n {
        let base = b * spatial * c;
        for ch in 0..c {
            let mut acc = 0.0f64;
            for s in 0..spatial {
                acc += f64::from(input.data()[base + s * c + ch]);
            }
            out[b * c + ch] = (acc / spatial as f64) as f32;
        }
    }
    Tensor::from_vec(&[n, c], out)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let (n, h, w, c) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let spatial = (h * w) as f32;
    let mut grad = vec![0.0f32; n * h * w * c];
    for b in 0..n {
        for ch in 0..c {
            let g = grad_out.data()[b * c + ch] / spatial;
            for s in 0..h * w {
                grad[b * h * w * c + s * c + ch] = g;
            }
        }
    }
    Tensor::from_vec(input_shape, grad)
}

pub struct SoftmaxXent {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    /// Row-stochastic class probabilities, N x K.
    pub probs: Tensor,
}

/// Numerically stable softmax + mean cross-entropy.
pub fn softmax_xent_forward(logits: &Tensor, labels: &[usize]) -> Result<SoftmaxXent> {
    if logits.rank() != 2 {
        return Err(Error::Shape(format!("logits must be N x K, got {:?}", logits.shape())));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Shape(format!("label {bad} out of range for {k} classes")));
    }
    let mut probs = vec![0.0f32; n * k];
    let mut loss = 0.0f64;
    for i in 0..n {
        let row = &logits.data()[i * k..(i + 1) * k];
        let max = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        let mut denom = 0.0f64;
        for &x in row {
            denom += f64::from(x - max).exp();
        }
        for (j, &x) in row.iter().enumerate() {
            probs[i * k + j] = (f64::from(x - max).exp() / denom) as f32;
        }
        loss -= f64::from(row[labels[i]] - max) - denom.ln();
    }
    Ok(SoftmaxXent {
        loss: loss / n as f64,
        probs: Tensor::from_vec(&[n, k], probs)?,
    })
}

/// Gradient of the mean cross-entropy with respect to the logits:
/// `(probs - one_hot) / N`.
pub fn softmax_xent_backward(probs: &Tensor, labels: &[usize]) -> Tensor {
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    let inv_n = 1.0 / n as f32;
    let mut grad = probs.data().to_vec();
    for (i, &label) in labels.iter().enumerate() {
        grad[i * k + label] -= 1.0;
    }
    for g in &mut grad {
        *g *= inv_n;
    }
    Tensor::from_vec(&[n, k], grad).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_fill(t: &mut Tensor, seed: u64, scale: f32) {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        for v in t.data_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = (((state >> 33) as f32 / (1u64 << 31) as f32) - 1.0) * scale;
        }
    }

    /// Independent nested-loop convolution oracle.
    fn conv_oracle(input: &Tensor, kernel: &Tensor, stride: usize, padding: Padding) -> Tensor {
        let d = conv_dims(input.shape(), kernel.shape(), stride, padding).unwrap();
        let mut out = Tensor::zeros(&[d.batch, d.out_h, d.out_w, d.out_c]);
        for n in 0..d.batch {
            for oh in 0..d.out_h {
                for ow in 0..d.out_w {
                    for co in 0..d.out_c {
                        let mut acc = 0.0f64;
                        for kh in 0..d.k_h {
                            for kw in 0..d.k_w {
                                let ih = (oh * stride + kh) as isize - d.pad_top as isize;
                                let iw = (ow * stride + kw) as isize - d.pad_left as isize;
                                if ih < 0 || iw < 0 || ih as usize >= d.in_h || iw as usize >= d.in_w {
                                    continue;
                                }
                                for ci in 0..d.in_c {
                                    let x = input.data()[((n * d.in_h + ih as usize) * d.in_w
                                        + iw as usize)
                                        * d.in_c
                                        + ci];
                                    let w = kernel.data()
                                        [((kh * d.k_w + kw) * d.in_c + ci) * d.out_c + co];
                                    acc += f64::from(x) * f64::from(w);
                                }
                            }
                        }
                        let idx = ((n * d.out_h + oh) * d.out_w + ow) * d.out_c + co;
                        out.data_mut()[idx] = acc as f32;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_1x1_identity_kernel() {
        let mut input = Tensor::zeros(&[2, 5, 4, 3]);
        lcg_fill(&mut input, 1, 1.0);
        // 1x1 kernel = identity over channels
        let mut kernel = Tensor::zeros(&[1, 1, 3, 3]);
        for c in 0..3 {
            kernel.data_mut()[c * 3 + c] = 1.0;
        }
        let out = conv2d_forward(&input, &kernel, 1, Padding::Same).unwrap();
        assert_eq!(out.shape(), input.shape());
        for (o, i) in out.data().iter().zip(input.data()) {
            assert!((o - i).abs() < 1e-6);
        }
    }

    #[test]
    fn conv_all_ones_on_constant_input() {
        let input = Tensor::from_vec(&[1, 6, 6, 1], vec![1.0; 36]).unwrap();
        let kernel = Tensor::from_vec(&[3, 3, 1, 1], vec![1.0; 9]).unwrap();
        let out = conv2d_forward(&input, &kernel, 1, Padding::Valid).unwrap();
        assert_eq!(out.shape(), &[1, 4, 4, 1]);
        for &v in out.data() {
            assert!((v - 9.0).abs() < 1e-6);
        }
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        for (stride, padding) in [(1, Padding::Valid), (1, Padding::Same), (2, Padding::Same)] {
            let mut input = Tensor::zeros(&[2, 5, 5, 3]);
            let mut kernel = Tensor::zeros(&[3, 3, 3, 4]);
            lcg_fill(&mut input, 7, 1.0);
            lcg_fill(&mut kernel, 13, 0.5);
            let fast = conv2d_forward(&input, &kernel, stride, padding).unwrap();
            let slow = conv_oracle(&input, &kernel, stride, padding);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b} (stride {stride})");
            }
        }
    }

    #[test]
    fn conv_shape_mismatch_rejected() {
        let input = Tensor::zeros(&[1, 5, 5, 2]);
        let kernel = Tensor::zeros(&[3, 3, 3, 4]);
        assert!(conv2d_forward(&input, &kernel, 1, Padding::Same).is_err());
        let kernel_ok = Tensor::zeros(&[3, 3, 2, 4]);
        assert!(conv2d_forward(&input, &kernel_ok, 0, Padding::Same).is_err());
    }

    #[test]
    fn dense_identity_and_bias() {
        let input = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut weight = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            weight.data_mut()[i * 3 + i] = 1.0;
        }
        let bias = Tensor::zeros(&[3]);
        let out = dense_forward(&input, &weight, &bias).unwrap();
        assert_eq!(out.data(), input.data());

        let zeros = Tensor::zeros(&[2, 3]);
        let bias = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let out = dense_forward(&zeros, &weight, &bias).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn dense_matches_matmul_oracle() {
        let mut input = Tensor::zeros(&[4, 6]);
        let mut weight = Tensor::zeros(&[6, 5]);
        let mut bias = Tensor::zeros(&[5]);
        lcg_fill(&mut input, 3, 1.0);
        lcg_fill(&mut weight, 5, 1.0);
        lcg_fill(&mut bias, 9, 0.2);
        let out = dense_forward(&input, &weight, &bias).unwrap();
        for n in 0..4 {
            for o in 0..5 {
                let mut acc = f64::from(bias.data()[o]);
                for i in 0..6 {
                    acc += f64::from(input.data()[n * 6 + i]) * f64::from(weight.data()[i * 5 + o]);
                }
                let got = out.data()[n * 5 + o];
                assert!((f64::from(got) - acc).abs() < 1e-5, "{got} vs {acc}");
            }
        }
    }

    #[test]
    fn activation_values() {
        let input = Tensor::from_vec(&[1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        let relu = activation_forward(&input, Activation::Relu);
        assert_eq!(relu.data(), &[0.0, 0.0, 2.0]);

        let selu = activation_forward(&input, Activation::Selu);
        assert_eq!(selu.data()[1], 0.0);
        // selu(1) = lambda
        let one = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let s1 = activation_forward(&one, Activation::Selu);
        assert!((s1.data()[0] - SELU_LAMBDA).abs() < 1e-6);
        // selu(-1) = lambda * alpha * (e^-1 - 1)
        let expect = f64::from(SELU_LAMBDA) * f64::from(SELU_ALPHA) * ((-1.0f64).exp() - 1.0);
        assert!((f64::from(selu.data()[0]) - expect).abs() < 1e-6);
        assert!((expect + 1.111_33).abs() < 1e-4);
    }

    #[test]
    fn pool_constant_and_squeeze() {
        let input = Tensor::from_vec(&[1, 2, 2, 2], vec![3.0; 8]).unwrap();
        let out = global_avg_pool_forward(&input).unwrap();
        assert_eq!(out.shape(), &[1, 2]);
        assert_eq!(out.data(), &[3.0, 3.0]);

        let single = Tensor::from_vec(&[2, 1, 1, 3], (0..6).map(|i| i as f32).collect()).unwrap();
        let out = global_avg_pool_forward(&single).unwrap();
        assert_eq!(out.shape(), &[2, 3]);
        assert_eq!(out.data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn pool_matches_mean_oracle() {
        let mut input = Tensor::zeros(&[2, 3, 4, 5]);
        lcg_fill(&mut input, 21, 1.0);
        let out = global_avg_pool_forward(&input).unwrap();
        for n in 0..2 {
            for c in 0..5 {
                let mut acc = 0.0f64;
                for s in 0..12 {
                    acc += f64::from(input.data()[n * 60 + s * 5 + c]);
                }
                let expect = acc / 12.0;
                assert!((f64::from(out.data()[n * 5 + c]) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn softmax_uniform_logits() {
        let k = 7;
        let logits = Tensor::from_vec(&[2, k], vec![0.3; 2 * k]).unwrap();
        let out = softmax_xent_forward(&logits, &[0, 6]).unwrap();
        for &p in out.probs.data() {
            assert!((f64::from(p) - 1.0 / k as f64).abs() < 1e-7);
        }
        assert!((out.loss - (k as f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn softmax_large_logit_stable() {
        let logits = Tensor::from_vec(&[1, 3], vec![1000.0, 0.0, -5.0]).unwrap();
        let out = softmax_xent_forward(&logits, &[0]).unwrap();
        assert!(out.loss.abs() < 1e-6);
        assert!(out.probs.is_finite());
        assert!((out.probs.data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut logits = Tensor::zeros(&[8, 11]);
        lcg_fill(&mut logits, 17, 4.0);
        let labels: Vec<usize> = (0..8).map(|i| i % 11).collect();
        let out = softmax_xent_forward(&logits, &labels).unwrap();
        for row in out.probs.data().chunks(11) {
            let sum: f64 = row.iter().map(|&p| f64::from(p)).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_label_out_of_range() {
        let logits = Tensor::zeros(&[1, 3]);
        assert!(softmax_xent_forward(&logits, &[3]).is_err());
    }
}
