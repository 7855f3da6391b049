use rand::Rng;

use super::tensor::{Param, Scalar, TensorBuf};
use super::{join, Module, NnError};

/// Variance guard of instance normalization.
pub const IN_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.2;

fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize, NnError> {
    let padded = len + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return Err(NnError::ShapeMismatch(format!(
            "conv kernel {kernel} stride {stride} padding {padding} on length {len}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

fn im2col<T: Scalar>(x: &[T], cin: usize, len: usize, kernel: usize, stride: usize, padding: usize, lout: usize, cols: &mut [T]) {
    for ci in 0..cin {
        let xr = &x[ci * len..(ci + 1) * len];
        for k in 0..kernel {
            let row = &mut cols[(ci * kernel + k) * lout..(ci * kernel + k + 1) * lout];
            for (l, slot) in row.iter_mut().enumerate() {
                let pos = (l * stride + k) as isize - padding as isize;
                *slot = if pos >= 0 && (pos as usize) < len {
                    xr[pos as usize]
                } else {
                    T::zero()
                };
            }
        }
    }
}

fn col2im_add<T: Scalar>(cols: &[T], cin: usize, len: usize, kernel: usize, stride: usize, padding: usize, lout: usize, dx: &mut [T]) {
    for ci in 0..cin {
        for k in 0..kernel {
            let row = &cols[(ci * kernel + k) * lout..(ci * kernel + k + 1) * lout];
            for (l, &g) in row.iter().enumerate() {
                let pos = (l * stride + k) as isize - padding as isize;
                if pos >= 0 && (pos as usize) < len {
                    dx[ci * len + pos as usize] += g;
                }
            }
        }
    }
}

/// Cross-correlation of `x: [B, Cin, L]` with `weight: [Cout, Cin, K]`.
pub fn conv1d<T: Scalar>(
    x: &TensorBuf<T>,
    weight: &[T],
    bias: &[T],
    cout: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<TensorBuf<T>, NnError> {
    let [b, cin, len] = x.shape;
    if weight.len() != cout * cin * kernel || bias.len() != cout {
        return Err(NnError::ShapeMismatch(format!(
            "conv weight {} / bias {} for cout {cout} cin {cin} kernel {kernel}",
            weight.len(),
            bias.len()
        )));
    }
    let lout = conv_out_len(len, kernel, stride, padding)?;
    let ck = cin * kernel;
    let direct = kernel == 1 && stride == 1 && padding == 0;
    let mut cols = if direct { Vec::new() } else { vec![T::zero(); ck * lout] };
    let mut y = TensorBuf::zeros([b, cout, lout]);
    for bi in 0..b {
        let xs = x.sample(bi);
        let src: &[T] = if direct {
            xs
        } else {
            im2col(xs, cin, len, kernel, stride, padding, lout, &mut cols);
            &cols
        };
        let ys = y.sample_mut(bi);
        for (co, row) in ys.chunks_exact_mut(lout).enumerate() {
            row.iter_mut().for_each(|v| *v = bias[co]);
        }
        T::gemm(cout, ck, lout, T::one(), weight, ck as isize, 1, src, lout as isize, 1, T::one(), ys, lout as isize, 1);
    }
    Ok(y)
}

/// Backward of [`conv1d`]: accumulates into `dweight`/`dbias`, returns `dx`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<T: Scalar>(
    x: &TensorBuf<T>,
    weight: &[T],
    cout: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    dy: &TensorBuf<T>,
    dweight: &mut [T],
    dbias: &mut [T],
) -> TensorBuf<T> {
    let [b, cin, len] = x.shape;
    let lout = dy.shape[2];
    let ck = cin * kernel;
    let direct = kernel == 1 && stride == 1 && padding == 0;
    let mut cols = if direct { Vec::new() } else { vec![T::zero(); ck * lout] };
    let mut dcols = vec![T::zero(); ck * lout];
    let mut dx = TensorBuf::zeros(x.shape);
    for bi in 0..b {
        let dys = dy.sample(bi);
        for (co, row) in dys.chunks_exact(lout).enumerate() {
            dbias[co] += row.iter().copied().sum::<T>();
        }
        let xs = x.sample(bi);
        let src: &[T] = if direct {
            xs
        } else {
            im2col(xs, cin, len, kernel, stride, padding, lout, &mut cols);
            &cols
        };
        // dW += dY . cols^T
        T::gemm(cout, lout, ck, T::one(), dys, lout as isize, 1, src, 1, lout as isize, T::one(), dweight, ck as isize, 1);
        // dcols = W^T . dY
        if direct {
            T::gemm(ck, cout, lout, T::one(), weight, 1, ck as isize, dys, lout as isize, 1, T::zero(), dx.sample_mut(bi), lout as isize, 1);
        } else {
            T::gemm(ck, cout, lout, T::one(), weight, 1, ck as isize, dys, lout as isize, 1, T::zero(), &mut dcols, lout as isize, 1);
            col2im_add(&dcols, cin, len, kernel, stride, padding, lout, dx.sample_mut(bi));
        }
    }
    dx
}

/// Normalized activations and inverse standard deviations per (batch, channel).
#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub xhat: TensorBuf<T>,
    pub inv_std: Vec<T>,
}

pub fn instance_norm<T: Scalar>(x: &TensorBuf<T>) -> (TensorBuf<T>, NormCache<T>) {
    let [b, c, l] = x.shape;
    let n = T::from_usize(l).unwrap();
    let eps = T::lit(IN_EPS);
    let mut xhat = TensorBuf::zeros(x.shape);
    let mut inv_std = Vec::with_capacity(b * c);
    for bi in 0..b {
        for ci in 0..c {
            let row = x.row(bi, ci);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (o, &v) in xhat.row_mut(bi, ci).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
        }
    }
    (xhat.clone(), NormCache { xhat, inv_std })
}

pub fn instance_norm_backward<T: Scalar>(cache: &NormCache<T>, dy: &TensorBuf<T>) -> TensorBuf<T> {
    let [b, c, l] = dy.shape;
    let n = T::from_usize(l).unwrap();
    let mut dx = TensorBuf::zeros(dy.shape);
    for bi in 0..b {
        for ci in 0..c {
            let g = dy.row(bi, ci);
            let xh = cache.xhat.row(bi, ci);
            let mean_g = g.iter().copied().sum::<T>() / n;
            let mean_gx = g.iter().zip(xh).map(|(&a, &h)| a * h).sum::<T>() / n;
            let inv = cache.inv_std[bi * c + ci];
            for ((o, &gv), &h) in dx.row_mut(bi, ci).iter_mut().zip(g).zip(xh) {
                *o = inv * (gv - mean_g - h * mean_gx);
            }
        }
    }
    dx
}

/// `scale * instance_norm(x) + bias`, with `scale`/`bias` shaped `[B, C, 1]`.
pub fn adain<T: Scalar>(
    x: &TensorBuf<T>,
    scale: &TensorBuf<T>,
    bias: &TensorBuf<T>,
) -> Result<(TensorBuf<T>, NormCache<T>), NnError> {
    let [b, c, _] = x.shape;
    if scale.shape != [b, c, 1] || bias.shape != [b, c, 1] {
        return Err(NnError::ShapeMismatch(format!(
            "adain style {:?}/{:?} for input {:?}",
            scale.shape, bias.shape, x.shape
        )));
    }
    let (mut y, cache) = instance_norm(x);
    for bi in 0..b {
        for ci in 0..c {
            let (s, t) = (scale.at(bi, ci, 0), bias.at(bi, ci, 0));
            for v in y.row_mut(bi, ci) {
                *v = s * *v + t;
            }
        }
    }
    Ok((y, cache))
}

/// Returns `(dx, dscale, dbias)`.
pub fn adain_backward<T: Scalar>(
    cache: &NormCache<T>,
    scale: &TensorBuf<T>,
    dy: &TensorBuf<T>,
) -> (TensorBuf<T>, TensorBuf<T>, TensorBuf<T>) {
    let [b, c, _] = dy.shape;
    let mut dscale = TensorBuf::zeros([b, c, 1]);
    let mut dbias = TensorBuf::zeros([b, c, 1]);
    let mut dxhat = dy.clone();
    for bi in 0..b {
        for ci in 0..c {
            let g = dy.row(bi, ci);
            let xh = cache.xhat.row(bi, ci);
            dscale.values[bi * c + ci] = g.iter().zip(xh).map(|(&a, &h)| a * h).sum();
            dbias.values[bi * c + ci] = g.iter().copied().sum();
            let s = scale.at(bi, ci, 0);
            dxhat.row_mut(bi, ci).iter_mut().for_each(|v| *v *= s);
        }
    }
    (instance_norm_backward(cache, &dxhat), dscale, dbias)
}

pub fn leaky_relu<T: Scalar>(x: &TensorBuf<T>) -> TensorBuf<T> {
    let slope = T::lit(LEAKY_SLOPE);
    TensorBuf {
        shape: x.shape,
        values: x
            .values
            .iter()
            .map(|&v| if v > T::zero() { v } else { v * slope })
            .collect(),
    }
}

/// Gradient of leaky ReLU given its pre-activation input.
pub fn leaky_relu_backward<T: Scalar>(x: &TensorBuf<T>, dy: &TensorBuf<T>) -> TensorBuf<T> {
    let slope = T::lit(LEAKY_SLOPE);
    TensorBuf {
        shape: dy.shape,
        values: x
            .values
            .iter()
            .zip(&dy.values)
            .map(|(&v, &g)| if v > T::zero() { g } else { g * slope })
            .collect(),
    }
}

/// Nearest-neighbour upsampling by two along length.
pub fn upsample2<T: Scalar>(x: &TensorBuf<T>) -> TensorBuf<T> {
    let [b, c, l] = x.shape;
    let mut values = Vec::with_capacity(b * c * l * 2);
    for &v in &x.values {
        values.push(v);
        values.push(v);
    }
    TensorBuf {
        shape: [b, c, 2 * l],
        values,
    }
}

pub fn upsample2_backward<T: Scalar>(dy: &TensorBuf<T>) -> TensorBuf<T> {
    let [b, c, l2] = dy.shape;
    TensorBuf {
        shape: [b, c, l2 / 2],
        values: dy.values.chunks_exact(2).map(|p| p[0] + p[1]).collect(),
    }
}

pub fn global_avg_pool<T: Scalar>(x: &TensorBuf<T>) -> TensorBuf<T> {
    let [b, c, l] = x.shape;
    let n = T::from_usize(l).unwrap();
    TensorBuf {
        shape: [b, c, 1],
        values: x.values.chunks_exact(l).map(|r| r.iter().copied().sum::<T>() / n).collect(),
    }
}

pub fn global_avg_pool_backward<T: Scalar>(dy: &TensorBuf<T>, length: usize) -> TensorBuf<T> {
    let [b, c, _] = dy.shape;
    let n = T::from_usize(length).unwrap();
    let mut values = Vec::with_capacity(b * c * length);
    for &g in &dy.values {
        values.extend(std::iter::repeat_n(g / n, length));
    }
    TensorBuf {
        shape: [b, c, length],
        values,
    }
}

/// Trainable 1-D convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize, rng: &mut impl Rng) -> Self {
        Conv1d {
            weight: Param::he_normal(&[cout, cin, kernel], cin * kernel, rng),
            bias: Param::zeros(&[cout]),
            cin,
            cout,
            kernel,
            stride,
            padding,
        }
    }

    /// Odd kernel with "same" padding.
    pub fn same(cin: usize, cout: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        Self::new(cin, cout, kernel, stride, kernel / 2, rng)
    }

    pub fn forward(&self, x: &TensorBuf<T>) -> Result<TensorBuf<T>, NnError> {
        if x.channels() != self.cin {
            return Err(NnError::ShapeMismatch(format!(
                "conv expects {} channels, got {}",
                self.cin,
                x.channels()
            )));
        }
        conv1d(x, &self.weight.value, &self.bias.value, self.cout, self.kernel, self.stride, self.padding)
    }

    pub fn backward(&mut self, x: &TensorBuf<T>, dy: &TensorBuf<T>) -> TensorBuf<T> {
        conv1d_backward(
            x,
            &self.weight.value,
            self.cout,
            self.kernel,
            self.stride,
            self.padding,
            dy,
            &mut self.weight.grad,
            &mut self.bias.grad,
        )
    }
}

impl<T: Scalar> Module<T> for Conv1d<T> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        vec![(join(prefix, "weight"), &self.weight), (join(prefix, "bias"), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Fully connected layer on `[B, in, 1]` feature tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl<T: Scalar> Linear<T> {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: Param::he_normal(&[fan_out, fan_in], fan_in, rng),
            bias: Param::zeros(&[fan_out]),
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, x: &TensorBuf<T>) -> Result<TensorBuf<T>, NnError> {
        if x.sample_len() != self.fan_in {
            return Err(NnError::ShapeMismatch(format!(
                "linear expects {} features, got {}",
                self.fan_in,
                x.sample_len()
            )));
        }
        let b = x.batch();
        let mut y = TensorBuf::zeros([b, self.fan_out, 1]);
        for row in y.values.chunks_exact_mut(self.fan_out) {
            row.copy_from_slice(&self.bias.value);
        }
        // Y[b, o] += X[b, i] W[o, i]
        T::gemm(
            b,
            self.fan_in,
            self.fan_out,
            T::one(),
            &x.values,
            self.fan_in as isize,
            1,
            &self.weight.value,
            1,
            self.fan_in as isize,
            T::one(),
            &mut y.values,
            self.fan_out as isize,
            1,
        );
        Ok(y)
    }

    pub fn backward(&mut self, x: &TensorBuf<T>, dy: &TensorBuf<T>) -> TensorBuf<T> {
        let b = x.batch();
        let (fi, fo) = (self.fan_in, self.fan_out);
        for row in dy.values.chunks_exact(fo) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        // dW[o, i] += dY[b, o] X[b, i]
        T::gemm(fo, b, fi, T::one(), &dy.values, 1, fo as isize, &x.values, fi as isize, 1, T::one(), &mut self.weight.grad, fi as isize, 1);
        let mut dx = TensorBuf::zeros(x.shape);
        T::gemm(b, fo, fi, T::one(), &dy.values, fo as isize, 1, &self.weight.value, fi as isize, 1, T::zero(), &mut dx.values, fi as isize, 1);
        dx
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        vec![(join(prefix, "weight"), &self.weight), (join(prefix, "bias"), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// A bank of linear heads; each batch element selects one head.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadLinear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub heads: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl<T: Scalar> MultiHeadLinear<T> {
    pub fn new(heads: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        MultiHeadLinear {
            weight: Param::he_normal(&[heads, fan_out, fan_in], fan_in, rng),
            bias: Param::zeros(&[heads, fan_out]),
            heads,
            fan_in,
            fan_out,
        }
    }

    fn check(&self, x: &TensorBuf<T>, heads: &[usize]) -> Result<(), NnError> {
        if x.sample_len() != self.fan_in || heads.len() != x.batch() {
            return Err(NnError::ShapeMismatch(format!(
                "multi-head expects [{}, {}], got {:?} with {} head ids",
                heads.len(),
                self.fan_in,
                x.shape,
                heads.len()
            )));
        }
        if let Some(&h) = heads.iter().find(|&&h| h >= self.heads) {
            return Err(NnError::ShapeMismatch(format!("head {h} of {}", self.heads)));
        }
        Ok(())
    }

    pub fn forward(&self, x: &TensorBuf<T>, heads: &[usize]) -> Result<TensorBuf<T>, NnError> {
        self.check(x, heads)?;
        let (fi, fo) = (self.fan_in, self.fan_out);
        let mut y = TensorBuf::zeros([x.batch(), fo, 1]);
        for (bi, &h) in heads.iter().enumerate() {
            let w = &self.weight.value[h * fo * fi..(h + 1) * fo * fi];
            let xb = x.sample(bi);
            let yb = y.sample_mut(bi);
            yb.copy_from_slice(&self.bias.value[h * fo..(h + 1) * fo]);
            T::gemm(fo, fi, 1, T::one(), w, fi as isize, 1, xb, 1, 1, T::one(), yb, 1, 1);
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &TensorBuf<T>, heads: &[usize], dy: &TensorBuf<T>) -> TensorBuf<T> {
        let (fi, fo) = (self.fan_in, self.fan_out);
        let mut dx = TensorBuf::zeros(x.shape);
        for (bi, &h) in heads.iter().enumerate() {
            let g = dy.sample(bi);
            let xb = x.sample(bi);
            for (bg, &d) in self.bias.grad[h * fo..(h + 1) * fo].iter_mut().zip(g) {
                *bg += d;
            }
            let wg = &mut self.weight.grad[h * fo * fi..(h + 1) * fo * fi];
            T::gemm(fo, 1, fi, T::one(), g, 1, 1, xb, 1, 1, T::one(), wg, fi as isize, 1);
            let w = &self.weight.value[h * fo * fi..(h + 1) * fo * fi];
            T::gemm(1, fo, fi, T::one(), g, fo as isize, 1, w, fi as isize, 1, T::zero(), dx.sample_mut(bi), fi as isize, 1);
        }
        dx
    }
}

impl<T: Scalar> Module<T> for MultiHeadLinear<T> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        vec![(join(prefix, "weight"), &self.weight), (join(prefix, "bias"), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
