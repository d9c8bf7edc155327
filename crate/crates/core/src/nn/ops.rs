//! Layer kernels, forward and backward.
//!
//! Layouts: 1D feature maps are `[length, channels]`, 2D feature maps are
//! `[height, width, channels]`. Convolution kernels are `[k, cin, cout]`
//! and `[k, k, cin, cout]`, so a flattened kernel is a `(k·cin) × cout`
//! (or `(k·k·cin) × cout`) matrix and both convolutions reduce to GEMM over
//! patch matrices.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2, ShapeBuilder};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// im2col scratch elements built per GEMM call in the 2D convolution.
const CONV2D_BLOCK_ELEMS: usize = 1 << 15;

fn view2(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix view of contiguous buffer")
}

fn view2_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("matrix view of contiguous buffer")
}

/// Parameter gradients of a learnable layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weight: Tensor,
    pub bias: Tensor,
}

fn check_bias(bias: &Tensor, cout: usize) -> Result<()> {
    if bias.shape() != [cout] {
        return Err(Error::ShapeMismatch(format!(
            "bias shape {:?}, expected [{cout}]",
            bias.shape()
        )));
    }
    Ok(())
}

fn fill_rows_with_bias(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_exact_mut(bias.len()) {
        row.copy_from_slice(bias);
    }
}

fn column_sums(data: &[f64], cols: usize) -> Vec<f64> {
    let mut sums = vec![0.0; cols];
    for row in data.chunks_exact(cols) {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    sums
}

// ---------------------------------------------------------------- conv1d

fn conv1d_dims(input: &Tensor, weight: &Tensor) -> Result<(usize, usize, usize, usize)> {
    input.expect_rank(2, "conv1d input")?;
    weight.expect_rank(3, "conv1d kernel")?;
    let (len, cin) = (input.shape()[0], input.shape()[1]);
    let (k, wcin, cout) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
    if wcin != cin {
        return Err(Error::ShapeMismatch(format!(
            "conv1d kernel expects {wcin} input channels, got {cin}"
        )));
    }
    if len < k {
        return Err(Error::InputTooShort {
            length: len,
            needed: k,
        });
    }
    Ok((len, cin, k, cout))
}

/// Valid (unpadded) 1D convolution: `[L, cin] → [L-k+1, cout]`.
pub fn conv1d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (len, cin, k, cout) = conv1d_dims(input, weight)?;
    check_bias(bias, cout)?;
    let out_len = len - k + 1;
    // Patch t is the contiguous slice input[t*cin .. (t+k)*cin].
    let patches = ArrayView2::from_shape(
        (out_len, k * cin).strides((cin, 1)),
        &input.data()[..(out_len - 1) * cin + k * cin],
    )
    .expect("overlapping patch view");
    let mut out = vec![0.0; out_len * cout];
    fill_rows_with_bias(&mut out, bias.data());
    general_mat_mul(
        1.0,
        &patches,
        &view2(weight.data(), k * cin, cout),
        1.0,
        &mut view2_mut(&mut out, out_len, cout),
    );
    Tensor::new(vec![out_len, cout], out)
}

pub fn conv1d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, ParamGrad)> {
    let (len, cin, k, cout) = conv1d_dims(input, weight)?;
    let out_len = len - k + 1;
    if grad_out.shape() != [out_len, cout] {
        return Err(Error::ShapeMismatch(format!(
            "conv1d upstream gradient {:?}, expected [{out_len}, {cout}]",
            grad_out.shape()
        )));
    }
    let patches = ArrayView2::from_shape(
        (out_len, k * cin).strides((cin, 1)),
        &input.data()[..(out_len - 1) * cin + k * cin],
    )
    .expect("overlapping patch view");
    let g = view2(grad_out.data(), out_len, cout);

    let mut gw = vec![0.0; k * cin * cout];
    general_mat_mul(
        1.0,
        &patches.t(),
        &g,
        0.0,
        &mut view2_mut(&mut gw, k * cin, cout),
    );

    let mut gpatch = vec![0.0; out_len * k * cin];
    general_mat_mul(
        1.0,
        &g,
        &view2(weight.data(), k * cin, cout).t(),
        0.0,
        &mut view2_mut(&mut gpatch, out_len, k * cin),
    );
    let mut gin = vec![0.0; len * cin];
    for (t, row) in gpatch.chunks_exact(k * cin).enumerate() {
        for (dst, v) in gin[t * cin..t * cin + k * cin].iter_mut().zip(row) {
            *dst += v;
        }
    }
    Ok((
        Tensor::new(vec![len, cin], gin)?,
        ParamGrad {
            weight: Tensor::new(weight.shape().to_vec(), gw)?,
            bias: Tensor::new(vec![cout], column_sums(grad_out.data(), cout))?,
        },
    ))
}

// ---------------------------------------------------------------- conv2d

struct Conv2dDims {
    h: usize,
    w: usize,
    cin: usize,
    k: usize,
    cout: usize,
}

impl Conv2dDims {
    fn patch_len(&self) -> usize {
        self.k * self.k * self.cin
    }

    /// Output pixels handled per im2col block.
    fn block_pixels(&self) -> usize {
        (CONV2D_BLOCK_ELEMS / self.patch_len()).clamp(1, self.h * self.w)
    }

    /// im2col for output pixels `p0..p0+n` (row-major) with zero padding.
    fn fill_patches(&self, input: &[f64], p0: usize, n: usize, patches: &mut [f64]) {
        let pad = (self.k / 2) as isize;
        let plen = self.patch_len();
        let cin = self.cin;
        for i in 0..n {
            let (y, x) = (((p0 + i) / self.w) as isize, ((p0 + i) % self.w) as isize);
            let patch = &mut patches[i * plen..][..plen];
            for ky in 0..self.k {
                let iy = y + ky as isize - pad;
                for kx in 0..self.k {
                    let ix = x + kx as isize - pad;
                    let dst = &mut patch[(ky * self.k + kx) * cin..][..cin];
                    if iy < 0 || ix < 0 || iy >= self.h as isize || ix >= self.w as isize {
                        dst.fill(0.0);
                    } else {
                        let src = (iy as usize * self.w + ix as usize) * cin;
                        dst.copy_from_slice(&input[src..src + cin]);
                    }
                }
            }
        }
    }

    /// Scatter-adds patch gradients back onto the input gradient.
    fn scatter_patches(&self, gpatches: &[f64], p0: usize, n: usize, gin: &mut [f64]) {
        let pad = (self.k / 2) as isize;
        let plen = self.patch_len();
        let cin = self.cin;
        for i in 0..n {
            let (y, x) = (((p0 + i) / self.w) as isize, ((p0 + i) % self.w) as isize);
            let patch = &gpatches[i * plen..][..plen];
            for ky in 0..self.k {
                let iy = y + ky as isize - pad;
                if iy < 0 || iy >= self.h as isize {
                    continue;
                }
                for kx in 0..self.k {
                    let ix = x + kx as isize - pad;
                    if ix < 0 || ix >= self.w as isize {
                        continue;
                    }
                    let src = &patch[(ky * self.k + kx) * cin..][..cin];
                    let dst = (iy as usize * self.w + ix as usize) * cin;
                    for (d, s) in gin[dst..dst + cin].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn conv2d_dims(input: &Tensor, weight: &Tensor) -> Result<Conv2dDims> {
    input.expect_rank(3, "conv2d input")?;
    weight.expect_rank(4, "conv2d kernel")?;
    let s = input.shape();
    let ws = weight.shape();
    if ws[0] != ws[1] || ws[0].is_multiple_of(2) {
        return Err(Error::ShapeMismatch(format!(
            "conv2d kernel must be square with odd size, got {ws:?}"
        )));
    }
    if ws[2] != s[2] {
        return Err(Error::ShapeMismatch(format!(
            "conv2d kernel expects {} input channels, got {}",
            ws[2], s[2]
        )));
    }
    if s[0] == 0 || s[1] == 0 {
        return Err(Error::ShapeMismatch(format!("conv2d input {s:?} is empty")));
    }
    Ok(Conv2dDims {
        h: s[0],
        w: s[1],
        cin: s[2],
        k: ws[0],
        cout: ws[3],
    })
}

/// Zero-padded "same" 2D correlation: `[H, W, cin] → [H, W, cout]`.
/// im2col in cache-sized blocks of output pixels, one GEMM per block.
pub fn conv2d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = conv2d_dims(input, weight)?;
    check_bias(bias, d.cout)?;
    let plen = d.patch_len();
    let kmat = view2(weight.data(), plen, d.cout);
    let total = d.h * d.w;
    let mut out = vec![0.0; total * d.cout];
    fill_rows_with_bias(&mut out, bias.data());

    let block = d.block_pixels();
    let mut patches = vec![0.0; block * plen];
    let mut p0 = 0;
    while p0 < total {
        let n = block.min(total - p0);
        d.fill_patches(input.data(), p0, n, &mut patches);
        general_mat_mul(
            1.0,
            &view2(&patches[..n * plen], n, plen),
            &kmat,
            1.0,
            &mut view2_mut(&mut out[p0 * d.cout..][..n * d.cout], n, d.cout),
        );
        p0 += n;
    }
    Tensor::new(vec![d.h, d.w, d.cout], out)
}

pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, ParamGrad)> {
    let d = conv2d_dims(input, weight)?;
    if grad_out.shape() != [d.h, d.w, d.cout] {
        return Err(Error::ShapeMismatch(format!(
            "conv2d upstream gradient {:?}, expected [{}, {}, {}]",
            grad_out.shape(),
            d.h,
            d.w,
            d.cout
        )));
    }
    let plen = d.patch_len();
    let kmat = view2(weight.data(), plen, d.cout);
    let total = d.h * d.w;
    let mut gw = vec![0.0; plen * d.cout];
    let mut gin = vec![0.0; total * d.cin];

    let block = d.block_pixels();
    let mut patches = vec![0.0; block * plen];
    let mut gpatches = vec![0.0; block * plen];
    let mut p0 = 0;
    while p0 < total {
        let n = block.min(total - p0);
        d.fill_patches(input.data(), p0, n, &mut patches);
        let g = view2(&grad_out.data()[p0 * d.cout..][..n * d.cout], n, d.cout);
        let p = view2(&patches[..n * plen], n, plen);
        general_mat_mul(1.0, &p.t(), &g, 1.0, &mut view2_mut(&mut gw, plen, d.cout));
        general_mat_mul(
            1.0,
            &g,
            &kmat.t(),
            0.0,
            &mut view2_mut(&mut gpatches[..n * plen], n, plen),
        );
        d.scatter_patches(&gpatches[..n * plen], p0, n, &mut gin);
        p0 += n;
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gin)?,
        ParamGrad {
            weight: Tensor::new(weight.shape().to_vec(), gw)?,
            bias: Tensor::new(vec![d.cout], column_sums(grad_out.data(), d.cout))?,
        },
    ))
}

// ---------------------------------------------------------------- pooling

/// Non-overlapping 1D max pooling over the length axis. A trailing partial
/// window is dropped. Returns the output and, per output element, the flat
/// input index of the winner (first maximum on ties).
pub fn maxpool1d_forward(input: &Tensor, pool: usize) -> Result<(Tensor, Vec<usize>)> {
    input.expect_rank(2, "maxpool1d input")?;
    let (len, c) = (input.shape()[0], input.shape()[1]);
    if pool < 1 || len < pool {
        return Err(Error::ExtentTooSmall {
            extent: len,
            window: pool,
        });
    }
    let out_len = len / pool;
    let x = input.data();
    let mut out = Vec::with_capacity(out_len * c);
    let mut routes = Vec::with_capacity(out_len * c);
    for t in 0..out_len {
        for ch in 0..c {
            let mut best = t * pool * c + ch;
            for i in 1..pool {
                let idx = (t * pool + i) * c + ch;
                if x[idx] > x[best] {
                    best = idx;
                }
            }
            out.push(x[best]);
            routes.push(best);
        }
    }
    Ok((Tensor::new(vec![out_len, c], out)?, routes))
}

/// Non-overlapping `pool×pool` max pooling; trailing rows/columns dropped.
pub fn maxpool2d_forward(input: &Tensor, pool: usize) -> Result<(Tensor, Vec<usize>)> {
    input.expect_rank(3, "maxpool2d input")?;
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if pool < 1 || h < pool || w < pool {
        return Err(Error::ExtentTooSmall {
            extent: h.min(w),
            window: pool,
        });
    }
    let (oh, ow) = (h / pool, w / pool);
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut routes = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = ((oy * pool) * w + ox * pool) * c + ch;
                for dy in 0..pool {
                    for dx in 0..pool {
                        let idx = ((oy * pool + dy) * w + ox * pool + dx) * c + ch;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                routes.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![oh, ow, c], out)?, routes))
}

/// Routes each upstream gradient element to its recorded winner.
pub fn maxpool_backward(
    input_shape: &[usize],
    routes: &[usize],
    grad_out: &Tensor,
) -> Result<Tensor> {
    if routes.len() != grad_out.len() {
        return Err(Error::ShapeMismatch(format!(
            "pool routing has {} entries for {} gradients",
            routes.len(),
            grad_out.len()
        )));
    }
    let mut gin = Tensor::zeros(input_shape);
    let g = gin.data_mut();
    for (&r, &v) in routes.iter().zip(grad_out.data()) {
        g[r] += v;
    }
    Ok(gin)
}

// ---------------------------------------------------------------- upsample

/// Nearest-neighbour upsampling: each pixel becomes a `factor×factor` block.
pub fn upsample_nearest_forward(input: &Tensor, factor: usize) -> Result<Tensor> {
    input.expect_rank(3, "upsample input")?;
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h * factor, w * factor);
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            let src = ((oy / factor) * w + ox / factor) * c;
            out.extend_from_slice(&x[src..src + c]);
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

/// Sums the upstream gradient over each `factor×factor` block.
pub fn upsample_nearest_backward(grad_out: &Tensor, factor: usize) -> Result<Tensor> {
    grad_out.expect_rank(3, "upsample gradient")?;
    let (oh, ow, c) = (
        grad_out.shape()[0],
        grad_out.shape()[1],
        grad_out.shape()[2],
    );
    if oh % factor != 0 || ow % factor != 0 {
        return Err(Error::ShapeMismatch(format!(
            "upsample gradient {:?} not divisible by {factor}",
            grad_out.shape()
        )));
    }
    let (h, w) = (oh / factor, ow / factor);
    let mut gin = Tensor::zeros(&[h, w, c]);
    let g = gin.data_mut();
    for (i, px) in grad_out.data().chunks_exact(c).enumerate() {
        let (oy, ox) = (i / ow, i % ow);
        let dst = ((oy / factor) * w + ox / factor) * c;
        for (d, v) in g[dst..dst + c].iter_mut().zip(px) {
            *d += v;
        }
    }
    Ok(gin)
}

// ---------------------------------------------------------------- concat

/// Concatenates along the channel (last) axis.
pub fn concat_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != sb.len() || sa.is_empty() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
        return Err(Error::ShapeMismatch(format!(
            "cannot concatenate {sa:?} and {sb:?}"
        )));
    }
    let (ca, cb) = (a.last_dim(), b.last_dim());
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (pa, pb) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)) {
        out.extend_from_slice(pa);
        out.extend_from_slice(pb);
    }
    let mut shape = sa.to_vec();
    *shape.last_mut().unwrap() = ca + cb;
    Tensor::new(shape, out)
}

/// Splits a concatenated gradient back into its two parts.
pub fn concat_backward(grad_out: &Tensor, first_channels: usize) -> Result<(Tensor, Tensor)> {
    let c = grad_out.last_dim();
    if first_channels > c {
        return Err(Error::ShapeMismatch(format!(
            "split at {first_channels} of {c} channels"
        )));
    }
    let cb = c - first_channels;
    let pixels = grad_out.len() / c.max(1);
    let mut ga = Vec::with_capacity(pixels * first_channels);
    let mut gb = Vec::with_capacity(pixels * cb);
    for px in grad_out.data().chunks_exact(c) {
        ga.extend_from_slice(&px[..first_channels]);
        gb.extend_from_slice(&px[first_channels..]);
    }
    let prefix = &grad_out.shape()[..grad_out.rank() - 1];
    let shape_a = prefix.iter().copied().chain([first_channels]).collect();
    let shape_b = prefix.iter().copied().chain([cb]).collect();
    Ok((Tensor::new(shape_a, ga)?, Tensor::new(shape_b, gb)?))
}

// ---------------------------------------------------------------- relu

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch("relu gradient shape".into()));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

// ---------------------------------------------------------------- dense

/// Fully connected layer over the flattened input: `F → K`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    weight.expect_rank(2, "dense weight")?;
    let (f, k) = (weight.shape()[0], weight.shape()[1]);
    if input.len() != f {
        return Err(Error::ShapeMismatch(format!(
            "dense layer expects {f} inputs, got {:?}",
            input.shape()
        )));
    }
    check_bias(bias, k)?;
    let mut out = bias.data().to_vec();
    for (x, row) in input.data().iter().zip(weight.data().chunks_exact(k)) {
        for (o, w) in out.iter_mut().zip(row) {
            *o += x * w;
        }
    }
    Tensor::new(vec![k], out)
}

pub fn dense_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, ParamGrad)> {
    let (f, k) = (weight.shape()[0], weight.shape()[1]);
    if grad_out.len() != k || input.len() != f {
        return Err(Error::ShapeMismatch("dense gradient shape".into()));
    }
    let g = grad_out.data();
    let mut gw = Vec::with_capacity(f * k);
    let mut gin = Vec::with_capacity(f);
    for (x, row) in input.data().iter().zip(weight.data().chunks_exact(k)) {
        gw.extend(g.iter().map(|gv| x * gv));
        gin.push(row.iter().zip(g).map(|(w, gv)| w * gv).sum());
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gin)?,
        ParamGrad {
            weight: Tensor::new(vec![f, k], gw)?,
            bias: Tensor::new(vec![k], g.to_vec())?,
        },
    ))
}

// ---------------------------------------------------------------- softmax / loss

/// Softmax over the last axis with max subtraction.
pub fn softmax_forward(input: &Tensor) -> Tensor {
    let k = input.last_dim();
    let mut out = input.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::new(input.shape().to_vec(), out).expect("same shape")
}

/// Vector-Jacobian product of the softmax: `p ⊙ (g − ⟨g, p⟩)` per row.
pub fn softmax_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if output.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch("softmax gradient shape".into()));
    }
    let k = output.last_dim();
    let mut gin = Vec::with_capacity(output.len());
    for (p, g) in output
        .data()
        .chunks_exact(k)
        .zip(grad_out.data().chunks_exact(k))
    {
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        gin.extend(p.iter().zip(g).map(|(pi, gi)| pi * (gi - dot)));
    }
    Tensor::new(output.shape().to_vec(), gin)
}

fn check_targets(probs: &Tensor, targets: &[u8]) -> Result<usize> {
    let k = probs.last_dim();
    let n = probs.len() / k.max(1);
    if targets.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {n} predictions",
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= k) {
        return Err(Error::ShapeMismatch(format!(
            "target class {t} with {k} outputs"
        )));
    }
    Ok(n)
}

/// Mean of `−ln p[target]` over all rows, with p clamped to [`PROB_FLOOR`].
pub fn cross_entropy(probs: &Tensor, targets: &[u8]) -> Result<f64> {
    let n = check_targets(probs, targets)?;
    let k = probs.last_dim();
    let total: f64 = probs
        .data()
        .chunks_exact(k)
        .zip(targets)
        .map(|(p, &t)| -p[t as usize].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / n as f64)
}

/// Gradient of the mean cross-entropy with respect to the softmax logits:
/// `(p − onehot) / rows`.
pub fn softmax_cross_entropy_grad(probs: &Tensor, targets: &[u8]) -> Result<Tensor> {
    let n = check_targets(probs, targets)?;
    let k = probs.last_dim();
    let inv = 1.0 / n as f64;
    let mut g = probs.data().to_vec();
    for (row, &t) in g.chunks_exact_mut(k).zip(targets) {
        row[t as usize] -= 1.0;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Tensor::new(probs.shape().to_vec(), g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Triple loop straight from the definition.
    fn conv1d_naive(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let (l, cin) = (x.shape()[0], x.shape()[1]);
        let (k, cout) = (w.shape()[0], w.shape()[2]);
        Tensor::from_fn(&[l - k + 1, cout], |idx| {
            let (t, o) = (idx / cout, idx % cout);
            let mut acc = b.data()[o];
            for i in 0..k {
                for c in 0..cin {
                    acc += x.data()[(t + i) * cin + c] * w.data()[(i * cin + c) * cout + o];
                }
            }
            acc
        })
    }

    fn conv2d_naive(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let (h, wd, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (k, cout) = (w.shape()[0], w.shape()[3]);
        let pad = (k / 2) as isize;
        Tensor::from_fn(&[h, wd, cout], |idx| {
            let o = idx % cout;
            let px = idx / cout;
            let (y, xx) = ((px / wd) as isize, (px % wd) as isize);
            let mut acc = b.data()[o];
            for ky in 0..k as isize {
                for kx in 0..k as isize {
                    let (iy, ix) = (y + ky - pad, xx + kx - pad);
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                        continue;
                    }
                    for c in 0..cin {
                        let xv = x.data()[((iy as usize) * wd + ix as usize) * cin + c];
                        let wv = w.data()[(((ky as usize) * k + kx as usize) * cin + c) * cout + o];
                        acc += xv * wv;
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn conv1d_sums_all_taps() {
        let x = Tensor::filled(&[3, 2], 1.0);
        let w = Tensor::filled(&[3, 2, 1], 1.0);
        let b = Tensor::filled(&[1], 0.5);
        let y = conv1d_forward(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[1, 1]);
        assert_eq!(y.data(), &[3.0 * 2.0 + 0.5]);
    }

    #[test]
    fn conv1d_shape_and_short_input() {
        let y = conv1d_forward(
            &Tensor::zeros(&[98, 1]),
            &Tensor::zeros(&[6, 1, 6]),
            &Tensor::zeros(&[6]),
        )
        .unwrap();
        assert_eq!(y.shape(), &[93, 6]);
        assert!(matches!(
            conv1d_forward(
                &Tensor::zeros(&[5, 1]),
                &Tensor::zeros(&[6, 1, 6]),
                &Tensor::zeros(&[6])
            ),
            Err(Error::InputTooShort {
                length: 5,
                needed: 6
            })
        ));
    }

    #[test]
    fn conv1d_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (l, cin, k, cout) in [(10, 3, 3, 4), (7, 1, 6, 2), (6, 5, 6, 3)] {
            let x = rand_tensor(&[l, cin], &mut rng);
            let w = rand_tensor(&[k, cin, cout], &mut rng);
            let b = rand_tensor(&[cout], &mut rng);
            let fast = conv1d_forward(&x, &w, &b).unwrap();
            assert!(fast.max_abs_diff(&conv1d_naive(&x, &w, &b)) < 1e-12);
        }
    }

    #[test]
    fn conv2d_delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor(&[4, 5, 2], &mut rng);
        let mut w = Tensor::zeros(&[3, 3, 2, 2]);
        // centre tap maps channel c to channel c
        for c in 0..2 {
            w.data_mut()[((3 + 1) * 2 + c) * 2 + c] = 1.0;
        }
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv2d_ones_counts_padding_overlap() {
        let x = Tensor::filled(&[4, 4, 1], 1.0);
        let w = Tensor::filled(&[3, 3, 1, 1], 1.0);
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[1])).unwrap();
        let at = |r: usize, c: usize| y.data()[r * 4 + c];
        assert_eq!(at(0, 0), 4.0);
        assert_eq!(at(0, 3), 4.0);
        assert_eq!(at(3, 3), 4.0);
        assert_eq!(at(0, 1), 6.0);
        assert_eq!(at(2, 0), 6.0);
        assert_eq!(at(1, 1), 9.0);
        assert_eq!(at(2, 2), 9.0);
    }

    #[test]
    fn conv2d_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(&[5, 5, 2], &mut rng);
        let w = rand_tensor(&[3, 3, 2, 3], &mut rng);
        let b = rand_tensor(&[3], &mut rng);
        let fast = conv2d_forward(&x, &w, &b).unwrap();
        assert!(fast.max_abs_diff(&conv2d_naive(&x, &w, &b)) < 1e-12);

        let w1 = rand_tensor(&[1, 1, 2, 3], &mut rng);
        let fast = conv2d_forward(&x, &w1, &b).unwrap();
        assert!(fast.max_abs_diff(&conv2d_naive(&x, &w1, &b)) < 1e-12);
    }

    #[test]
    fn conv_is_linear_without_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_tensor(&[6, 6, 2], &mut rng);
        let w = rand_tensor(&[3, 3, 2, 2], &mut rng);
        let zero = Tensor::zeros(&[2]);
        let base = conv2d_forward(&x, &w, &zero).unwrap();
        let scaled = conv2d_forward(&x.map(|v| 2.5 * v), &w, &zero).unwrap();
        assert!(scaled.max_abs_diff(&base.map(|v| 2.5 * v)) < 1e-12);

        let x1 = rand_tensor(&[9, 2], &mut rng);
        let w1 = rand_tensor(&[3, 2, 4], &mut rng);
        let zero = Tensor::zeros(&[4]);
        let base = conv1d_forward(&x1, &w1, &zero).unwrap();
        let scaled = conv1d_forward(&x1.map(|v| -0.5 * v), &w1, &zero).unwrap();
        assert!(scaled.max_abs_diff(&base.map(|v| -0.5 * v)) < 1e-12);
    }

    #[test]
    fn maxpool1d_drops_trailing() {
        let x = Tensor::new(vec![5, 1], vec![1.0, 3.0, 2.0, 2.0, 9.0]).unwrap();
        let (y, routes) = maxpool1d_forward(&x, 2).unwrap();
        assert_eq!(y.data(), &[3.0, 2.0]);
        assert_eq!(routes, vec![1, 2]);
        assert!(matches!(
            maxpool1d_forward(&Tensor::zeros(&[1, 3]), 2),
            Err(Error::ExtentTooSmall { .. })
        ));
    }

    #[test]
    fn maxpool_length_chain() {
        for (l, expect) in [(93, 46), (41, 20), (15, 7), (2, 1)] {
            let (y, _) = maxpool1d_forward(&Tensor::zeros(&[l, 2]), 2).unwrap();
            assert_eq!(y.shape()[0], expect);
        }
    }

    #[test]
    fn maxpool2d_constant_and_routes() {
        let (y, _) = maxpool2d_forward(&Tensor::filled(&[4, 6, 2], 3.0), 2).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2]);
        assert!(y.data().iter().all(|&v| v == 3.0));

        let x = Tensor::from_fn(&[2, 2, 1], |i| [0.5, 4.0, -1.0, 2.0][i]);
        let (y, routes) = maxpool2d_forward(&x, 2).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let g = maxpool_backward(x.shape(), &routes, &Tensor::filled(&[1, 1, 1], 7.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 7.0, 0.0, 0.0]);
    }

    #[test]
    fn upsample_replicates_blocks() {
        let y = upsample_nearest_forward(&Tensor::filled(&[1, 1, 2], 5.0), 2).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 5.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&[3, 4, 2], &mut rng);
        let y = upsample_nearest_forward(&x, 2).unwrap();
        for oy in 0..6 {
            for ox in 0..8 {
                for c in 0..2 {
                    assert_eq!(
                        y.data()[(oy * 8 + ox) * 2 + c],
                        x.data()[((oy / 2) * 4 + ox / 2) * 2 + c]
                    );
                }
            }
        }
        let g = upsample_nearest_backward(&Tensor::filled(&[6, 8, 2], 1.0), 2).unwrap();
        assert!(g.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn pool_after_upsample_is_identity_on_constants() {
        let x = Tensor::filled(&[3, 3, 2], -1.5);
        let (y, _) = maxpool2d_forward(&upsample_nearest_forward(&x, 2).unwrap(), 2).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn concat_and_split() {
        let a = Tensor::from_fn(&[2, 2, 1], |i| i as f64);
        let b = Tensor::from_fn(&[2, 2, 2], |i| 10.0 + i as f64);
        let c = concat_forward(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 2, 3]);
        assert_eq!(&c.data()[..6], &[0.0, 10.0, 11.0, 1.0, 12.0, 13.0]);
        let (ga, gb) = concat_backward(&c, 1).unwrap();
        assert_eq!((ga, gb), (a, b));
        assert!(concat_forward(&Tensor::zeros(&[2, 2, 1]), &Tensor::zeros(&[2, 3, 1])).is_err());
    }

    #[test]
    fn softmax_cases() {
        let p = softmax_forward(&Tensor::zeros(&[3]));
        for v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax_forward(&Tensor::new(vec![3], vec![1000.0, 0.0, 0.0]).unwrap());
        assert_eq!(p.data()[0], 1.0);
        assert!(p.all_finite());
        assert!(p.data()[1] < 1e-300);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_tensor(&[4, 3], &mut rng);
        let p = softmax_forward(&x);
        for (xr, pr) in x.data().chunks(3).zip(p.data().chunks(3)) {
            let z: f64 = xr.iter().map(|v| v.exp()).sum();
            for (a, b) in xr.iter().zip(pr) {
                assert!((a.exp() / z - b).abs() < 1e-15);
            }
            assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        let perfect = Tensor::new(vec![2, 3], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(cross_entropy(&perfect, &[0, 2]).unwrap() <= 1e-11);
        let uniform = Tensor::filled(&[4, 3], 1.0 / 3.0);
        assert!((cross_entropy(&uniform, &[0, 1, 2, 1]).unwrap() - 3f64.ln()).abs() < 1e-12);
        // a zero probability is clamped, not infinite
        assert!(
            (cross_entropy(&perfect, &[1, 2]).unwrap() - (-PROB_FLOOR.ln() / 2.0)).abs() < 1e-9
        );
        assert!(matches!(
            cross_entropy(&uniform, &[0]),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
