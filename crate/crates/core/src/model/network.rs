use rand::Rng;
use serde::Serialize;

use super::loss::{bce_loss, cross_entropy_loss, hadamard_loss, ClassLabels, LossBreakdown, LossMode};
use crate::error::{Error, Result};
use crate::hadamard::TargetCode;
use crate::io::{Reader, Writer};
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
        }
    }
}

/// Fully connected layer `a = act(x Wᵀ + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(output, input),
            bias: vec![T::zero(); output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(x.rows(), self.output_dim());
        for i in 0..x.rows() {
            let xi = x.row(i);
            let oi = out.row_mut(i);
            for (o, (w, &b)) in oi.iter_mut().zip(self.weights.row_iter().zip(&self.bias)) {
                let z = crate::linalg::dot(w, xi) + b;
                *o = self.activation.apply(z);
            }
        }
        out
    }
}

/// Layer widths of a hash network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NetSpec {
    pub input_dim: usize,
    /// Hidden ReLU layer widths, in order.
    pub hidden: Vec<usize>,
    pub code_length: usize,
    pub num_classes: usize,
}

impl NetSpec {
    /// One hidden layer of width 256.
    pub fn with_default_hidden(input_dim: usize, code_length: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![256],
            code_length,
            num_classes,
        }
    }

    /// `(in, out, activation)` for every layer including the classifier.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, Activation)> {
        let mut shapes = Vec::new();
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            shapes.push((prev, h, Activation::Relu));
            prev = h;
        }
        shapes.push((prev, self.code_length, Activation::Tanh));
        shapes.push((self.code_length, self.num_classes, Activation::Identity));
        shapes
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.code_length == 0 || self.num_classes == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid(format!("all layer widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Feature layers ending in a tanh hash layer of width `K`, followed by a
/// linear classifier `K → C`.
///
/// Layers are stored in order; the last is the classifier and the one
/// before it is the hash layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HashNetwork<T> {
    layers: Vec<Dense<T>>,
}

/// Outputs of [`HashNetwork::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    /// Hash layer activations in `(−1, 1)`.
    pub codes: Matrix<T>,
    pub logits: Matrix<T>,
}

impl<T: Scalar> HashNetwork<T> {
    /// Glorot-uniform weights `U(±sqrt(6 / (fan_in + fan_out)))` from the
    /// `INIT` sub-stream of `seed`; zero biases.
    pub fn new(spec: &NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::sub_rng(seed, rng::stream::INIT);
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(input, output, activation)| {
                let limit = (6.0 / (input + output) as f64).sqrt();
                let weights = Matrix::from_fn(output, input, |_, _| {
                    T::from_f64_lossy(rng.gen_range(-limit..limit))
                });
                Dense {
                    weights,
                    bias: vec![T::zero(); output],
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// All-zero parameters with the given shape.
    pub fn zeros(spec: &NetSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(i, o, a)| Dense::zeros(i, o, a))
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::invalid("a hash network needs a hash layer and a classifier"));
        }
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::DimensionMismatch {
                    context: "consecutive layer widths",
                    expected: w[0].output_dim(),
                    actual: w[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::DimensionMismatch {
                    context: "bias length",
                    expected: l.output_dim(),
                    actual: l.bias.len(),
                });
            }
        }
        let n = layers.len();
        if layers[n - 2].activation != Activation::Tanh {
            return Err(Error::invalid("hash layer activation must be tanh"));
        }
        if layers[n - 1].activation != Activation::Identity {
            return Err(Error::invalid("classifier activation must be identity"));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn code_length(&self) -> usize {
        self.classifier().input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier().output_dim()
    }

    pub fn classifier(&self) -> &Dense<T> {
        self.layers.last().unwrap()
    }

    pub fn hash_layer(&self) -> &Dense<T> {
        &self.layers[self.layers.len() - 2]
    }

    pub fn spec(&self) -> NetSpec {
        let n = self.layers.len();
        NetSpec {
            input_dim: self.input_dim(),
            hidden: self.layers[..n - 2].iter().map(|l| l.output_dim()).collect(),
            code_length: self.code_length(),
            num_classes: self.num_classes(),
        }
    }

    /// True when `other` has identical layer shapes and activations.
    pub fn same_architecture<U: Scalar>(&self, other: &HashNetwork<U>) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.input_dim() == b.input_dim() && a.output_dim() == b.output_dim() && a.activation == b.activation
            })
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "input width",
                expected: self.input_dim(),
                actual: x.cols(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: &Matrix<T>) -> Vec<Matrix<T>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<ForwardOutput<T>> {
        self.check_input(x)?;
        let mut acts = self.activations(x);
        let logits = acts.pop().unwrap();
        let codes = acts.pop().unwrap();
        Ok(ForwardOutput { codes, logits })
    }

    /// Hash layer activations only.
    pub fn encode(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut a = x.clone();
        for layer in &self.layers[..n - 1] {
            a = layer.forward(&a);
        }
        Ok(a)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    /// Parameters in declaration order: per layer, weights row-major then bias.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "flat parameter count",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&params[off..off + w.len()]);
            off += w.len();
            let n = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn cast<U: Scalar>(&self) -> HashNetwork<U> {
        HashNetwork {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: l.weights.map(|v| U::from_f64_lossy(v.to_f64_lossy())),
                    bias: l.bias.iter().map(|&v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    /// HCMD encoding: magic, version 1, layer count, per-layer
    /// `(in, out, activation tag)`, then every parameter as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"HCMD", 1);
        w.u32(self.layers.len() as u32);
        for l in &self.layers {
            w.u32(l.input_dim() as u32);
            w.u32(l.output_dim() as u32);
            w.u8(l.activation.tag());
        }
        for p in self.flat_params() {
            w.f64(p.to_f64_lossy());
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (net, rest) = Self::from_bytes_prefix(bytes)?;
        if !rest.is_empty() {
            return Err(Error::Malformed {
                format: "HCMD",
                reason: format!("{} trailing bytes", rest.len()),
            });
        }
        Ok(net)
    }

    /// Decodes an HCMD block and returns the bytes that follow it.
    pub fn from_bytes_prefix(bytes: &[u8]) -> Result<(Self, &[u8])> {
        let mut r = Reader::open("HCMD", bytes, b"HCMD", 1)?;
        let count = r.u32()? as usize;
        r.require(count * 9)?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let input = r.u32()? as usize;
            let output = r.u32()? as usize;
            let tag = r.u8()?;
            let activation = Activation::from_tag(tag).ok_or_else(|| r.malformed(format!("unknown activation tag {tag}")))?;
            layers.push(Dense::zeros(input, output, activation));
        }
        let mut net = Self::from_layers(layers)?;
        let n = net.param_count();
        r.require(n * 8)?;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            params.push(T::from_f64_lossy(r.f64()?));
        }
        net.set_flat_params(&params)?;
        Ok((net, r.remaining()))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        crate::io::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let bytes = crate::io::read_file(path.as_ref())?;
        Ok(Self::from_bytes_prefix(&bytes)?.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

/// Gradients shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    pub layers: Vec<DenseGrad<T>>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros_like(net: &HashNetwork<T>) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| DenseGrad {
                    weights: Matrix::zeros(l.output_dim(), l.input_dim()),
                    bias: vec![T::zero(); l.output_dim()],
                })
                .collect(),
        }
    }

    /// Same declaration order as [`HashNetwork::flat_params`].
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        let expected: usize = self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "flat gradient count",
                expected,
                actual: values.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&values[off..off + w.len()]);
            off += w.len();
            let n = l.bias.len();
            l.bias.copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn congruent_with(&self, net: &HashNetwork<T>) -> bool {
        self.layers.len() == net.layers().len()
            && self.layers.iter().zip(net.layers()).all(|(g, l)| {
                g.weights.rows() == l.output_dim() && g.weights.cols() == l.input_dim() && g.bias.len() == l.output_dim()
            })
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.all_finite() && l.bias.iter().all(|v| v.is_finite()))
    }
}

/// Which terms of the combined objective are active.
///
/// The objective is `L_H + λ · L_cls`; with `hadamard = false` the `L_H`
/// term is dropped (reported as 0) and only the classifier path trains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Objective {
    pub lambda: f64,
    pub hadamard: bool,
}

impl Objective {
    pub fn combined(lambda: f64) -> Self {
        Self { lambda, hadamard: true }
    }
}

/// Loss and parameter gradients of `L_H + λ · L_cls` on one batch.
///
/// The classification gradient flows back through the classifier into the
/// hash activations, where the hadamard gradient is added; the sum is then
/// propagated through tanh and the feature layers.
pub fn backward<T: Scalar>(
    net: &HashNetwork<T>,
    x: &Matrix<T>,
    targets: &[TargetCode],
    labels: &ClassLabels,
    objective: Objective,
) -> Result<(LossBreakdown, GradientSet<T>)> {
    net.check_input(x)?;
    if labels.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            context: "label batch size",
            expected: x.rows(),
            actual: labels.len(),
        });
    }
    if objective.lambda < 0.0 || !objective.lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and non-negative, got {}", objective.lambda)));
    }
    let acts = net.activations(x);
    let n = net.layers.len();
    let logits = &acts[n];
    let codes = &acts[n - 1];

    let (cls_value, mut upstream) = match labels {
        ClassLabels::Classes(c) => cross_entropy_loss(logits, c)?,
        ClassLabels::MultiHot(m) => bce_loss(logits, m)?,
    };
    debug_assert!(matches!(labels.mode(), LossMode::CrossEntropy | LossMode::BinaryCrossEntropy));
    let lambda = T::from_f64_lossy(objective.lambda);
    upstream.as_mut_slice().iter_mut().for_each(|g| *g *= lambda);

    let hadamard = if objective.hadamard {
        Some(hadamard_loss(codes, targets)?)
    } else {
        None
    };

    let mut grads = GradientSet::zeros_like(net);
    // `upstream` holds dL/d(activation of layer l) while walking backwards.
    for l in (0..n).rev() {
        let layer = &net.layers[l];
        let out = &acts[l + 1];
        let input = &acts[l];
        if l == n - 2 {
            if let Some((_, gh)) = &hadamard {
                for (u, &h) in upstream.as_mut_slice().iter_mut().zip(gh.as_slice()) {
                    *u += h;
                }
            }
        }
        let mut delta = upstream;
        for (d, &a) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
            *d *= layer.activation.derivative_from_output(a);
        }
        let g = &mut grads.layers[l];
        for i in 0..delta.rows() {
            let di = delta.row(i);
            let xi = input.row(i);
            for (o, &d) in di.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                g.bias[o] += d;
                for (w, &xv) in g.weights.row_mut(o).iter_mut().zip(xi) {
                    *w += d * xv;
                }
            }
        }
        if l == 0 {
            break;
        }
        let mut prev = Matrix::zeros(delta.rows(), layer.input_dim());
        for i in 0..delta.rows() {
            let pi = prev.row_mut(i);
            for (o, &d) in delta.row(i).iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                for (p, &w) in pi.iter_mut().zip(layer.weights.row(o)) {
                    *p += d * w;
                }
            }
        }
        upstream = prev;
    }

    let h_value = hadamard.map(|(v, _)| v.to_f64_lossy()).unwrap_or(0.0);
    let breakdown = LossBreakdown::new(h_value, cls_value.to_f64_lossy(), objective.lambda);
    Ok((breakdown, grads))
}
