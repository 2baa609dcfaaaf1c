//! Network building blocks with hand-written reverse-mode gradients.
//!
//! Activations are `Array2<S>` in a flattened NHWC layout: rows are
//! batch-by-spatial positions, columns are channels. Convolutions lower to
//! im2col plus one GEMM, which keeps the whole forward/backward pass inside
//! matrix multiplies.
//!
//! Backward methods accumulate parameter gradients into a mirror of the
//! layer (same shapes, gradient values), so a gradient container is just
//! another instance of the model structure.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::scalar::{lit, Scalar};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub w: Array2<S>,
    pub b: Array1<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut Stream) -> Self {
        let bound = lit::<S>((6.0 / in_dim as f64).sqrt());
        let w = Array2::from_shape_fn((in_dim, out_dim), |_| {
            S::uniform(rng, -bound, bound)
        });
        Linear { w, b: Array1::zeros(out_dim) }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear { w: Array2::zeros((in_dim, out_dim)), b: Array1::zeros(out_dim) }
    }

    pub fn zeros_like(&self) -> Self {
        Linear { w: Array2::zeros(self.w.raw_dim()), b: Array1::zeros(self.b.raw_dim()) }
    }

    pub fn forward(&self, x: &ArrayView2<S>) -> Array2<S> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }

    /// Returns dx; accumulates dw/db into `gacc`.
    pub fn backward(
        &self,
        x: &ArrayView2<S>,
        dy: &ArrayView2<S>,
        gacc: &mut Linear<S>,
    ) -> Array2<S> {
        gacc.w += &x.t().dot(dy);
        gacc.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<S> {
    /// (k*k*in_c, out_c); row order is (ky, kx, channel).
    pub w: Array2<S>,
    pub b: Array1<S>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl<S: Scalar> Conv2d<S> {
    pub fn init(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut Stream,
    ) -> Self {
        let fan_in = k * k * in_c;
        let bound = lit::<S>((6.0 / fan_in as f64).sqrt());
        let w = Array2::from_shape_fn((fan_in, out_c), |_| S::uniform(rng, -bound, bound));
        Conv2d { w, b: Array1::zeros(out_c), in_c, out_c, k, stride, pad }
    }

    pub fn zeros_like(&self) -> Self {
        Conv2d {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
            ..*self
        }
    }

    pub fn out_dim(&self, in_dim: usize) -> usize {
        (in_dim + 2 * self.pad - self.k) / self.stride + 1
    }

    fn im2col(&self, x: &ArrayView2<S>, batch: usize, h: usize, w: usize) -> Array2<S> {
        let (oh, ow) = (self.out_dim(h), self.out_dim(w));
        let c = self.in_c;
        let patch = self.k * self.k * c;
        let mut cols = Array2::<S>::zeros((batch * oh * ow, patch));
        let xs = x.as_slice().expect("conv input must be standard layout");
        let cs = cols.as_slice_mut().unwrap();
        for bi in 0..batch {
            for oy in 0..oh {
                let iy0 = (oy * self.stride) as isize - self.pad as isize;
                for ox in 0..ow {
                    let ix0 = (ox * self.stride) as isize - self.pad as isize;
                    let row = ((bi * oh + oy) * ow + ox) * patch;
                    for ky in 0..self.k {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = (bi * h + iy as usize) * w;
                        for kx in 0..self.k {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let dst = row + (ky * self.k + kx) * c;
                            let src = (src_row + ix as usize) * c;
                            cs[dst..dst + c].copy_from_slice(&xs[src..src + c]);
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<S>, batch: usize, h: usize, w: usize) -> Array2<S> {
        let (oh, ow) = (self.out_dim(h), self.out_dim(w));
        let c = self.in_c;
        let patch = self.k * self.k * c;
        let mut dx = Array2::<S>::zeros((batch * h * w, c));
        let ds = dcols.as_slice().unwrap();
        let xs = dx.as_slice_mut().unwrap();
        for bi in 0..batch {
            for oy in 0..oh {
                let iy0 = (oy * self.stride) as isize - self.pad as isize;
                for ox in 0..ow {
                    let ix0 = (ox * self.stride) as isize - self.pad as isize;
                    let row = ((bi * oh + oy) * ow + ox) * patch;
                    for ky in 0..self.k {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = (bi * h + iy as usize) * w;
                        for kx in 0..self.k {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let src = row + (ky * self.k + kx) * c;
                            let dst = (src_row + ix as usize) * c;
                            for ch in 0..c {
                                xs[dst + ch] = xs[dst + ch] + ds[src + ch];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Returns (output, im2col cache). Output rows are (batch, oy, ox) in
    /// the same flattened layout as the input.
    pub fn forward(
        &self,
        x: &ArrayView2<S>,
        batch: usize,
        h: usize,
        w: usize,
    ) -> (Array2<S>, Array2<S>) {
        let cols = self.im2col(x, batch, h, w);
        let mut y = cols.dot(&self.w);
        y += &self.b;
        (y, cols)
    }

    /// Returns dx; accumulates dw/db into `gacc`.
    pub fn backward(
        &self,
        cols: &Array2<S>,
        dy: &ArrayView2<S>,
        batch: usize,
        h: usize,
        w: usize,
        gacc: &mut Conv2d<S>,
    ) -> Array2<S> {
        gacc.w += &cols.t().dot(dy);
        gacc.b += &dy.sum_axis(Axis(0));
        let dcols = dy.dot(&self.w.t());
        self.col2im(&dcols, batch, h, w)
    }
}

/// Per-feature standardization over the batch with learned scale/shift.
/// Training uses batch statistics (biased variance); evaluation uses the
/// tracked running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d<S> {
    pub gamma: Array1<S>,
    pub beta: Array1<S>,
    pub running_mean: Array1<S>,
    pub running_var: Array1<S>,
    pub momentum: S,
    pub eps: S,
}

pub struct BnCache<S> {
    pub xhat: Array2<S>,
    pub invstd: Array1<S>,
    pub mean: Array1<S>,
    pub var: Array1<S>,
}

impl<S: Scalar> BatchNorm1d<S> {
    pub fn new(dim: usize) -> Self {
        BatchNorm1d {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: lit(0.1),
            eps: lit(1e-5),
        }
    }

    pub fn zeros_like(&self) -> Self {
        BatchNorm1d {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
            running_mean: Array1::zeros(self.running_mean.raw_dim()),
            running_var: Array1::zeros(self.running_var.raw_dim()),
            momentum: self.momentum,
            eps: self.eps,
        }
    }

    /// Pure forward with batch statistics; running stats are only touched
    /// by [`BatchNorm1d::update_running`] so gradient checks stay
    /// side-effect free.
    pub fn forward_train(&self, x: &ArrayView2<S>) -> (Array2<S>, BnCache<S>) {
        let n = lit::<S>(x.nrows() as f64);
        let mean = x.sum_axis(Axis(0)) / n;
        let mut var = Array1::<S>::zeros(x.ncols());
        for row in x.rows() {
            for (j, v) in row.iter().enumerate() {
                let d = *v - mean[j];
                var[j] = var[j] + d * d;
            }
        }
        var.mapv_inplace(|v| v / n);
        let invstd = var.mapv(|v| S::one() / (v + self.eps).sqrt());
        let mut xhat = x.to_owned();
        for mut row in xhat.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean[j]) * invstd[j];
            }
        }
        let mut y = xhat.clone();
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.gamma[j] + self.beta[j];
            }
        }
        (y, BnCache { xhat, invstd, mean, var })
    }

    pub fn update_running(&mut self, cache: &BnCache<S>) {
        let m = self.momentum;
        let keep = S::one() - m;
        for j in 0..self.running_mean.len() {
            self.running_mean[j] = keep * self.running_mean[j] + m * cache.mean[j];
            self.running_var[j] = keep * self.running_var[j] + m * cache.var[j];
        }
    }

    pub fn forward_eval(&self, x: &ArrayView2<S>) -> Array2<S> {
        let mut y = x.to_owned();
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let invstd = S::one() / (self.running_var[j] + self.eps).sqrt();
                *v = (*v - self.running_mean[j]) * invstd * self.gamma[j] + self.beta[j];
            }
        }
        y
    }

    /// Returns dx; accumulates dgamma/dbeta into `gacc`.
    pub fn backward(
        &self,
        cache: &BnCache<S>,
        dy: &ArrayView2<S>,
        gacc: &mut BatchNorm1d<S>,
    ) -> Array2<S> {
        let n = lit::<S>(dy.nrows() as f64);
        let cols = dy.ncols();
        let mut dgamma = Array1::<S>::zeros(cols);
        let mut dbeta = Array1::<S>::zeros(cols);
        let mut sum_dxhat = Array1::<S>::zeros(cols);
        let mut sum_dxhat_xhat = Array1::<S>::zeros(cols);
        for (dyr, xr) in dy.rows().into_iter().zip(cache.xhat.rows()) {
            for j in 0..cols {
                let dxhat = dyr[j] * self.gamma[j];
                dgamma[j] = dgamma[j] + dyr[j] * xr[j];
                dbeta[j] = dbeta[j] + dyr[j];
                sum_dxhat[j] = sum_dxhat[j] + dxhat;
                sum_dxhat_xhat[j] = sum_dxhat_xhat[j] + dxhat * xr[j];
            }
        }
        let mut dx = Array2::<S>::zeros(dy.raw_dim());
        for ((mut dxr, dyr), xr) in dx
            .rows_mut()
            .into_iter()
            .zip(dy.rows())
            .zip(cache.xhat.rows())
        {
            for j in 0..cols {
                let dxhat = dyr[j] * self.gamma[j];
                dxr[j] = cache.invstd[j] / n
                    * (n * dxhat - sum_dxhat[j] - xr[j] * sum_dxhat_xhat[j]);
            }
        }
        gacc.gamma += &dgamma;
        gacc.beta += &dbeta;
        dx
    }
}

/// Token embedding table with mean pooling: the text encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<S> {
    pub table: Array2<S>,
}

impl<S: Scalar> Embedding<S> {
    pub fn init(vocab: usize, dim: usize, rng: &mut Stream) -> Self {
        let table =
            Array2::from_shape_fn((vocab, dim), |_| S::standard_normal(rng) * lit(0.1));
        Embedding { table }
    }

    pub fn zeros_like(&self) -> Self {
        Embedding { table: Array2::zeros(self.table.raw_dim()) }
    }

    /// Mean-pool each token list into one row.
    pub fn forward(&self, token_lists: &[Vec<u32>]) -> Array2<S> {
        let dim = self.table.ncols();
        let mut out = Array2::<S>::zeros((token_lists.len(), dim));
        for (k, tokens) in token_lists.iter().enumerate() {
            assert!(!tokens.is_empty(), "empty token list");
            let scale = S::one() / lit::<S>(tokens.len() as f64);
            let mut row = out.row_mut(k);
            for t in tokens {
                let src = self.table.row(*t as usize);
                for j in 0..dim {
                    row[j] = row[j] + src[j] * scale;
                }
            }
        }
        out
    }

    pub fn backward(&self, token_lists: &[Vec<u32>], dy: &ArrayView2<S>, gacc: &mut Embedding<S>) {
        for (k, tokens) in token_lists.iter().enumerate() {
            let scale = S::one() / lit::<S>(tokens.len() as f64);
            let dyr = dy.row(k);
            for t in tokens {
                let mut dst = gacc.table.row_mut(*t as usize);
                for j in 0..dst.len() {
                    dst[j] = dst[j] + dyr[j] * scale;
                }
            }
        }
    }
}

pub fn relu<S: Scalar>(x: &Array2<S>) -> Array2<S> {
    x.mapv(|v| if v > S::zero() { v } else { S::zero() })
}

/// Gradient through relu given its *output* (y > 0 iff x > 0).
pub fn relu_backward<S: Scalar>(y: &Array2<S>, dy: &Array2<S>) -> Array2<S> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, v| {
        if *v <= S::zero() {
            *d = S::zero();
        }
    });
    dx
}
