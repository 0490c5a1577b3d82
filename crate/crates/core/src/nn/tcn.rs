use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::config::{Head, TcnConfig};
use super::Real;
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-5;

fn cast<R: Real>(x: f64) -> R {
    R::from(x).expect("representable constant")
}

/// Same-padded dilated 1-D convolution over a (channels, frames) matrix.
/// Weights are stored as (taps, out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<R> {
    pub weight: Array3<R>,
    pub bias: Array1<R>,
    pub dilation: usize,
}

impl<R: Real> Conv1d<R> {
    pub fn zeros(cin: usize, cout: usize, taps: usize, dilation: usize) -> Self {
        Self {
            weight: Array3::zeros((taps, cout, cin)),
            bias: Array1::zeros(cout),
            dilation,
        }
    }

    fn init<G: Rng + ?Sized>(&mut self, rng: &mut G) {
        let (taps, _, cin) = self.weight.dim();
        let bound = 1.0 / ((cin * taps) as f64).sqrt();
        self.weight.mapv_inplace(|_| cast(rng.random_range(-bound..bound)));
        self.bias.mapv_inplace(|_| cast(rng.random_range(-bound..bound)));
    }

    fn taps(&self) -> usize {
        self.weight.dim().0
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().1
    }

    /// Frame offset of tap `k` and the output range where it is valid.
    fn tap_range(&self, k: usize, frames: usize) -> (isize, usize, usize) {
        let centre = (self.taps() - 1) / 2;
        let off = (k as isize - centre as isize) * self.dilation as isize;
        let lo = (-off).max(0) as usize;
        let hi = (frames as isize - off.max(0)).max(lo as isize) as usize;
        (off, lo.min(hi), hi)
    }

    pub fn forward(&self, x: ArrayView2<R>) -> Array2<R> {
        let frames = x.ncols();
        let mut out = Array2::zeros((self.out_channels(), frames));
        for (mut col, b) in out.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            col.fill(*b);
        }
        for k in 0..self.taps() {
            let (off, lo, hi) = self.tap_range(k, frames);
            if lo >= hi {
                continue;
            }
            let src = x.slice(s![.., (lo as isize + off) as usize..(hi as isize + off) as usize]);
            let mut dst = out.slice_mut(s![.., lo..hi]);
            general_mat_mul(R::one(), &self.weight.index_axis(Axis(0), k), &src, R::one(), &mut dst);
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns d(input).
    pub fn backward(
        &self,
        x: ArrayView2<R>,
        dout: ArrayView2<R>,
        grad: &mut Self,
        need_input: bool,
    ) -> Option<Array2<R>> {
        let frames = x.ncols();
        grad.bias += &dout.sum_axis(Axis(1));
        let mut dx = need_input.then(|| Array2::zeros(x.raw_dim()));
        for k in 0..self.taps() {
            let (off, lo, hi) = self.tap_range(k, frames);
            if lo >= hi {
                continue;
            }
            let src_range = (lo as isize + off) as usize..(hi as isize + off) as usize;
            let src = x.slice(s![.., src_range.clone()]);
            let d = dout.slice(s![.., lo..hi]);
            let mut gw = grad.weight.index_axis_mut(Axis(0), k);
            general_mat_mul(R::one(), &d, &src.t(), R::one(), &mut gw);
            if let Some(dx) = dx.as_mut() {
                let mut dst = dx.slice_mut(s![.., src_range]);
                general_mat_mul(
                    R::one(),
                    &self.weight.index_axis(Axis(0), k).t(),
                    &d,
                    R::one(),
                    &mut dst,
                );
            }
        }
        dx
    }
}

/// Dilated conv, per-channel normalization over time, ReLU, pointwise conv.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnLayer<R> {
    pub conv: Conv1d<R>,
    pub gamma: Array1<R>,
    pub beta: Array1<R>,
    pub pointwise: Conv1d<R>,
}

struct LayerCache<R> {
    input: Array2<R>,
    normed: Array2<R>,
    inv_std: Array1<R>,
    activated: Array2<R>,
}

impl<R: Real> TcnLayer<R> {
    fn zeros(cin: usize, hidden: usize, cout: usize, taps: usize, dilation: usize) -> Self {
        Self {
            conv: Conv1d::zeros(cin, hidden, taps, dilation),
            gamma: Array1::zeros(hidden),
            beta: Array1::zeros(hidden),
            pointwise: Conv1d::zeros(hidden, cout, 1, 1),
        }
    }

    fn forward(&self, x: Array2<R>, keep: bool) -> (Array2<R>, Option<LayerCache<R>>) {
        let h = self.conv.forward(x.view());
        let frames = R::from(h.ncols()).expect("frame count");
        let mut normed = h;
        let mut inv_std = Array1::zeros(normed.nrows());
        for (mut row, inv) in normed.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
            let mean = row.sum() / frames;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).fold(R::zero(), |a, b| a + b) / frames;
            *inv = R::one() / (var + cast(NORM_EPS)).sqrt();
            let i = *inv;
            row.mapv_inplace(|v| v * i);
        }
        let mut activated = normed.clone();
        for ((mut row, &g), &b) in activated
            .axis_iter_mut(Axis(0))
            .zip(self.gamma.iter())
            .zip(self.beta.iter())
        {
            row.mapv_inplace(|v| (g * v + b).max(R::zero()));
        }
        let out = self.pointwise.forward(activated.view());
        let cache = keep.then_some(LayerCache {
            input: x,
            normed,
            inv_std,
            activated,
        });
        (out, cache)
    }

    fn backward(&self, cache: &LayerCache<R>, dout: ArrayView2<R>, grad: &mut Self) -> Array2<R> {
        let mut d = self
            .pointwise
            .backward(cache.activated.view(), dout, &mut grad.pointwise, true)
            .expect("input gradient");
        // ReLU, then the affine part of the normalization.
        ndarray::Zip::from(&mut d).and(&cache.activated).for_each(|g, &a| {
            if a <= R::zero() {
                *g = R::zero();
            }
        });
        let frames = R::from(d.ncols()).expect("frame count");
        for (c, (mut drow, xhat)) in d
            .axis_iter_mut(Axis(0))
            .zip(cache.normed.axis_iter(Axis(0)))
            .enumerate()
        {
            grad.beta[c] += drow.sum();
            grad.gamma[c] += drow
                .iter()
                .zip(xhat)
                .map(|(&a, &b)| a * b)
                .fold(R::zero(), |x, y| x + y);
            drow.mapv_inplace(|v| v * self.gamma[c]);
            let mean_g = drow.sum() / frames;
            let mean_gx = drow
                .iter()
                .zip(xhat)
                .map(|(&a, &b)| a * b)
                .fold(R::zero(), |x, y| x + y)
                / frames;
            let inv = cache.inv_std[c];
            ndarray::Zip::from(&mut drow)
                .and(&xhat)
                .for_each(|g, &xh| *g = inv * (*g - mean_g - xh * mean_gx));
        }
        self.conv
            .backward(cache.input.view(), d.view(), &mut grad.conv, true)
            .expect("input gradient")
    }
}

/// Temporal convolutional network mapping (F, T) features to (C, T) outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Tcn<R> {
    config: TcnConfig,
    pub bottleneck: Conv1d<R>,
    pub blocks: Vec<Vec<TcnLayer<R>>>,
    pub head: Conv1d<R>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache<R> {
    input: Array2<R>,
    layers: Vec<Vec<LayerCache<R>>>,
    head_input: Array2<R>,
}

impl<R: Real> Tcn<R> {
    /// A network with every parameter set to zero.
    pub fn zeros(config: &TcnConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let blocks = (0..c.num_blocks)
            .map(|_| {
                (0..c.layers_per_block)
                    .map(|l| {
                        let (cin, cout) = c.layer_dims(l);
                        TcnLayer::zeros(cin, c.hidden_dim, cout, c.kernel_size, c.dilation(l))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            config: c.clone(),
            bottleneck: Conv1d::zeros(c.input_dim, c.bottleneck_dim, 1, 1),
            blocks,
            head: Conv1d::zeros(c.bottleneck_dim, c.output_dim, 1, 1),
        })
    }

    /// Uniform fan-in initialization, unit normalization gain.
    pub fn init<G: Rng + ?Sized>(config: &TcnConfig, rng: &mut G) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        net.bottleneck.init(rng);
        for layer in net.blocks.iter_mut().flatten() {
            layer.conv.init(rng);
            layer.gamma.fill(R::one());
            layer.pointwise.init(rng);
        }
        net.head.init(rng);
        Ok(net)
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Every trainable tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, R>)> {
        fn conv<'a, R: Real>(out: &mut Vec<(String, ArrayViewD<'a, R>)>, name: &str, c: &'a Conv1d<R>) {
            out.push((format!("{name}.weight"), c.weight.view().into_dyn()));
            out.push((format!("{name}.bias"), c.bias.view().into_dyn()));
        }
        let mut out = Vec::new();
        conv(&mut out, "bottleneck", &self.bottleneck);
        for (b, block) in self.blocks.iter().enumerate() {
            for (l, layer) in block.iter().enumerate() {
                let p = format!("block{b}.layer{l}");
                conv(&mut out, &format!("{p}.conv"), &layer.conv);
                out.push((format!("{p}.norm.gamma"), layer.gamma.view().into_dyn()));
                out.push((format!("{p}.norm.beta"), layer.beta.view().into_dyn()));
                conv(&mut out, &format!("{p}.pointwise"), &layer.pointwise);
            }
        }
        conv(&mut out, "head", &self.head);
        out
    }

    /// Mutable views in the same order as [`Tcn::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, R>> {
        let mut out = vec![
            self.bottleneck.weight.view_mut().into_dyn(),
            self.bottleneck.bias.view_mut().into_dyn(),
        ];
        for layer in self.blocks.iter_mut().flatten() {
            out.push(layer.conv.weight.view_mut().into_dyn());
            out.push(layer.conv.bias.view_mut().into_dyn());
            out.push(layer.gamma.view_mut().into_dyn());
            out.push(layer.beta.view_mut().into_dyn());
            out.push(layer.pointwise.weight.view_mut().into_dyn());
            out.push(layer.pointwise.bias.view_mut().into_dyn());
        }
        out.push(self.head.weight.view_mut().into_dyn());
        out.push(self.head.bias.view_mut().into_dyn());
        out
    }

    fn check_input(&self, x: &ArrayView2<R>) -> Result<()> {
        if x.nrows() != self.config.input_dim {
            return Err(Error::DimMismatch {
                expected: self.config.input_dim,
                got: x.nrows(),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidArgument("empty feature sequence".into()));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<R>, keep: bool) -> Result<(Array2<R>, Option<ForwardCache<R>>)> {
        self.check_input(&x)?;
        let mut z = self.bottleneck.forward(x);
        let mut layer_caches = Vec::new();
        for block in &self.blocks {
            let residual = z.clone();
            let mut caches = Vec::new();
            for layer in block {
                let (next, cache) = layer.forward(z, keep);
                z = next;
                caches.extend(cache);
            }
            z += &residual;
            layer_caches.push(caches);
        }
        let logits = self.head.forward(z.view());
        let cache = keep.then(|| ForwardCache {
            input: x.to_owned(),
            layers: layer_caches,
            head_input: z,
        });
        Ok((logits, cache))
    }

    /// Raw head outputs (logits or regression values), shape (C, T).
    pub fn logits(&self, x: ArrayView2<R>) -> Result<Array2<R>> {
        Ok(self.run(x, false)?.0)
    }

    /// Head outputs after the output nonlinearity: per-frame class
    /// posteriors or regression values.
    pub fn forward(&self, x: ArrayView2<R>) -> Result<Array2<R>> {
        let logits = self.logits(x)?;
        Ok(self.activate(logits))
    }

    pub fn activate(&self, mut logits: Array2<R>) -> Array2<R> {
        if self.config.head == Head::ClassPosterior {
            softmax_columns(&mut logits);
        }
        logits
    }

    /// Forward pass keeping activations for [`Tcn::backward`].
    pub fn forward_train(&self, x: ArrayView2<R>) -> Result<(Array2<R>, ForwardCache<R>)> {
        let (logits, cache) = self.run(x, true)?;
        Ok((logits, cache.expect("cache requested")))
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
    pub fn backward(&self, cache: &ForwardCache<R>, dlogits: ArrayView2<R>, grad: &mut Self) {
        let mut dz = self
            .head
            .backward(cache.head_input.view(), dlogits, &mut grad.head, true)
            .expect("input gradient");
        for b in (0..self.blocks.len()).rev() {
            let block = &self.blocks[b];
            let mut d = dz.clone();
            for l in (0..block.len()).rev() {
                d = block[l].backward(&cache.layers[b][l], d.view(), &mut grad.blocks[b][l]);
            }
            dz += &d;
        }
        self.bottleneck
            .backward(cache.input.view(), dz.view(), &mut grad.bottleneck, false);
    }

    pub fn scale(&mut self, factor: R) {
        for mut t in self.tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    pub fn fill_zero(&mut self) {
        for mut t in self.tensors_mut() {
            t.fill(R::zero());
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        let theirs = other.tensors();
        for (mut mine, (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            mine += &t;
        }
    }

    /// Converts every parameter to another float type.
    pub fn cast<S: Real>(&self) -> Tcn<S> {
        let mut out = Tcn::<S>::zeros(&self.config).expect("validated config");
        let src = self.tensors();
        for (mut dst, (_, t)) in out.tensors_mut().into_iter().zip(src) {
            ndarray::Zip::from(&mut dst)
                .and(&t)
                .for_each(|d, &v| *d = S::from(v).expect("finite"));
        }
        out
    }
}

/// In-place softmax over rows for each column.
pub fn softmax_columns<R: Real>(x: &mut Array2<R>) {
    for mut col in x.axis_iter_mut(Axis(1)) {
        let max = col.iter().fold(R::neg_infinity(), |a, &b| a.max(b));
        col.mapv_inplace(|v| (v - max).exp());
        let sum = col.sum();
        col.mapv_inplace(|v| v / sum);
    }
}
