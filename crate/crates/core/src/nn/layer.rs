use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{conv3d_backward, conv3d_forward, ConvSpec};
use crate::error::{Error, Result};
use crate::pool::{
    global_avg_pool_backward, global_avg_pool_forward, maxpool3d_backward, maxpool3d_forward,
    PoolIndexMap, PoolSpec,
};
use crate::tensor::Tensor;

use super::blocks::{InceptionBlock, InceptionResnetBlock, ParallelBranches};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
}

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    role: ParamRole,
}

impl Param {
    pub fn weight(shape: &[usize]) -> Self {
        Self {
            value: Tensor::zeros(shape),
            grad: Tensor::zeros(shape),
            role: ParamRole::Weight,
        }
    }

    pub fn bias(len: usize) -> Self {
        Self {
            value: Tensor::zeros(&[len]),
            grad: Tensor::zeros(&[len]),
            role: ParamRole::Bias,
        }
    }

    pub fn role(&self) -> ParamRole {
        self.role
    }

    /// Inputs feeding each output unit: product of all but the leading extent.
    pub fn fan_in(&self) -> usize {
        self.value.shape()[1..].iter().product()
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }

    fn accumulate(&mut self, g: &Tensor) -> Result<()> {
        self.grad.add_assign(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv3d,
    MaxPool3d,
    Relu,
    Sigmoid,
    Flatten,
    Dense,
    GlobalAvgPool,
    /// Channel-concatenated parallel branches over the same input.
    Inception,
    /// Inception branches plus a residual add of the (projected) input.
    InceptionResnet,
    /// Input channels split across independent branches, outputs concatenated.
    ParallelBranches,
}

#[derive(Clone, Debug)]
pub struct Conv3d {
    pub weight: Param,
    pub bias: Param,
    pub spec: ConvSpec,
    input: Option<Tensor>,
}

impl Conv3d {
    pub fn new(in_channels: usize, out_channels: usize, spec: ConvSpec) -> Self {
        let [kd, kh, kw] = spec.kernel;
        Self {
            weight: Param::weight(&[out_channels, in_channels, kd, kh, kw]),
            bias: Param::bias(out_channels),
            spec,
            input: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub(crate) fn infer(&self, x: &Tensor) -> Result<Tensor> {
        conv3d_forward(x, &self.weight.value, &self.bias.value, &self.spec)
    }

    pub(crate) fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub(crate) fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or(Error::BackwardBeforeForward("Conv3d"))?;
        let grads = conv3d_backward(x, &self.weight.value, &self.spec, g)?;
        self.weight.accumulate(&grads.kernels)?;
        self.bias.accumulate(&grads.bias)?;
        Ok(grads.input)
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *input {
            [c, d, h, w] if c == self.in_channels() => {
                let [a, b, e] = self.spec.output_extents([d, h, w])?;
                Ok(vec![self.out_channels(), a, b, e])
            }
            _ => Err(Error::shape("conv3d channels", input, self.weight.value.shape())),
        }
    }

    pub(crate) fn clear(&mut self) {
        self.input = None;
    }
}

#[derive(Clone, Debug)]
pub struct MaxPool3d {
    pub spec: PoolSpec,
    map: Option<PoolIndexMap>,
}

impl MaxPool3d {
    pub fn new(spec: PoolSpec) -> Self {
        Self { spec, map: None }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu {
    input: Option<Tensor>,
}

#[derive(Clone, Debug, Default)]
pub struct Sigmoid {
    output: Option<Tensor>,
}

#[derive(Clone, Debug, Default)]
pub struct Flatten {
    shape: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default)]
pub struct GlobalAvgPool {
    shape: Option<Vec<usize>>,
}

/// Fully connected layer: `y = W x + b` with `W: [out, in]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Param::weight(&[outputs, inputs]),
            bias: Param::bias(outputs),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let n_in = self.inputs();
        if x.shape() != [n_in] {
            return Err(Error::shape("dense input", x.shape(), &[n_in]));
        }
        let w = self.weight.value.data();
        let xs = x.data();
        let out = self
            .bias
            .value
            .data()
            .iter()
            .enumerate()
            .map(|(o, b)| b + w[o * n_in..(o + 1) * n_in].iter().zip(xs).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        Ok(Tensor::from_parts(vec![self.outputs()], out))
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or(Error::BackwardBeforeForward("Dense"))?;
        let n_in = self.inputs();
        if g.shape() != [self.outputs()] {
            return Err(Error::shape("dense grad_output", g.shape(), &[self.outputs()]));
        }
        let mut gx = vec![0.0; n_in];
        let w = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        for (o, &go) in g.data().iter().enumerate() {
            let wrow = &w[o * n_in..(o + 1) * n_in];
            let gwrow = &mut gw[o * n_in..(o + 1) * n_in];
            for ((gwv, &xv), (&wv, gxv)) in gwrow.iter_mut().zip(x.data()).zip(wrow.iter().zip(gx.iter_mut())) {
                *gwv += go * xv;
                *gxv += wv * go;
            }
        }
        self.bias.accumulate(g)?;
        Ok(Tensor::from_parts(vec![n_in], gx))
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    };
    // Keep outputs strictly inside (0, 1) even where f64 saturates.
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// One node of a network's layer graph.
#[derive(Clone, Debug)]
pub enum Layer {
    Conv3d(Conv3d),
    MaxPool3d(MaxPool3d),
    Relu(Relu),
    Sigmoid(Sigmoid),
    Flatten(Flatten),
    Dense(Dense),
    GlobalAvgPool(GlobalAvgPool),
    Inception(InceptionBlock),
    InceptionResnet(InceptionResnetBlock),
    Parallel(ParallelBranches),
}

impl Layer {
    pub fn conv(in_channels: usize, out_channels: usize, spec: ConvSpec) -> Self {
        Layer::Conv3d(Conv3d::new(in_channels, out_channels, spec))
    }

    pub fn max_pool(spec: PoolSpec) -> Self {
        Layer::MaxPool3d(MaxPool3d::new(spec))
    }

    pub fn relu() -> Self {
        Layer::Relu(Relu::default())
    }

    pub fn sigmoid() -> Self {
        Layer::Sigmoid(Sigmoid::default())
    }

    pub fn flatten() -> Self {
        Layer::Flatten(Flatten::default())
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Layer::Dense(Dense::new(inputs, outputs))
    }

    pub fn global_avg_pool() -> Self {
        Layer::GlobalAvgPool(GlobalAvgPool::default())
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv3d(_) => LayerKind::Conv3d,
            Layer::MaxPool3d(_) => LayerKind::MaxPool3d,
            Layer::Relu(_) => LayerKind::Relu,
            Layer::Sigmoid(_) => LayerKind::Sigmoid,
            Layer::Flatten(_) => LayerKind::Flatten,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::GlobalAvgPool(_) => LayerKind::GlobalAvgPool,
            Layer::Inception(_) => LayerKind::Inception,
            Layer::InceptionResnet(_) => LayerKind::InceptionResnet,
            Layer::Parallel(_) => LayerKind::ParallelBranches,
        }
    }

    /// Forward pass without touching the activation cache.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv3d(l) => l.infer(x),
            Layer::MaxPool3d(l) => maxpool3d_forward(x, &l.spec).map(|(y, _)| y),
            Layer::Relu(_) => Ok(map(x, |v| v.max(0.0))),
            Layer::Sigmoid(_) => Ok(map(x, sigmoid)),
            Layer::Flatten(_) => x.clone().reshape(&[x.len()]),
            Layer::Dense(l) => l.infer(x),
            Layer::GlobalAvgPool(_) => global_avg_pool_forward(x),
            Layer::Inception(b) => b.infer(x),
            Layer::InceptionResnet(b) => b.infer(x),
            Layer::Parallel(b) => b.infer(x),
        }
    }

    /// Forward pass that caches what `backward` needs.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv3d(l) => l.forward(x),
            Layer::MaxPool3d(l) => {
                let (y, map) = maxpool3d_forward(x, &l.spec)?;
                l.map = Some(map);
                Ok(y)
            }
            Layer::Relu(l) => {
                l.input = Some(x.clone());
                Ok(map(x, |v| v.max(0.0)))
            }
            Layer::Sigmoid(l) => {
                let y = map(x, sigmoid);
                l.output = Some(y.clone());
                Ok(y)
            }
            Layer::Flatten(l) => {
                l.shape = Some(x.shape().to_vec());
                x.clone().reshape(&[x.len()])
            }
            Layer::Dense(l) => {
                let y = l.infer(x)?;
                l.input = Some(x.clone());
                Ok(y)
            }
            Layer::GlobalAvgPool(l) => {
                l.shape = Some(x.shape().to_vec());
                global_avg_pool_forward(x)
            }
            Layer::Inception(b) => b.forward(x),
            Layer::InceptionResnet(b) => b.forward(x),
            Layer::Parallel(b) => b.forward(x),
        }
    }

    /// Propagates `g` (gradient w.r.t. this layer's output) back to its input,
    /// accumulating parameter gradients along the way.
    pub fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv3d(l) => l.backward(g),
            Layer::MaxPool3d(l) => {
                let m = l.map.as_ref().ok_or(Error::BackwardBeforeForward("MaxPool3d"))?;
                maxpool3d_backward(g, m, m.input_shape())
            }
            Layer::Relu(l) => {
                let x = l.input.as_ref().ok_or(Error::BackwardBeforeForward("ReLU"))?;
                zip_map(g, x, "relu grad_output", |gv, xv| if xv > 0.0 { gv } else { 0.0 })
            }
            Layer::Sigmoid(l) => {
                let y = l.output.as_ref().ok_or(Error::BackwardBeforeForward("Sigmoid"))?;
                zip_map(g, y, "sigmoid grad_output", |gv, yv| gv * yv * (1.0 - yv))
            }
            Layer::Flatten(l) => {
                let s = l.shape.as_ref().ok_or(Error::BackwardBeforeForward("Flatten"))?;
                g.clone().reshape(s)
            }
            Layer::Dense(l) => l.backward(g),
            Layer::GlobalAvgPool(l) => {
                let s = l.shape.as_ref().ok_or(Error::BackwardBeforeForward("GlobalAvgPool"))?;
                global_avg_pool_backward(g, s)
            }
            Layer::Inception(b) => b.backward(g),
            Layer::InceptionResnet(b) => b.backward(g),
            Layer::Parallel(b) => b.backward(g),
        }
    }

    /// Output shape for a given input shape, computed without running the layer.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv3d(l) => l.output_shape(input),
            Layer::MaxPool3d(l) => match *input {
                [c, d, h, w] => {
                    let [a, b, e] = l.spec.output_extents([d, h, w])?;
                    Ok(vec![c, a, b, e])
                }
                _ => Err(Error::shape("maxpool3d input", input, &[0, 0, 0, 0])),
            },
            Layer::Relu(_) | Layer::Sigmoid(_) => Ok(input.to_vec()),
            Layer::Flatten(_) => Ok(vec![input.iter().product()]),
            Layer::Dense(l) => {
                if input != [l.inputs()] {
                    return Err(Error::shape("dense input", input, &[l.inputs()]));
                }
                Ok(vec![l.outputs()])
            }
            Layer::GlobalAvgPool(_) => match *input {
                [c, _, _, _] => Ok(vec![c]),
                _ => Err(Error::shape("global_avg_pool input", input, &[0, 0, 0, 0])),
            },
            Layer::Inception(b) => b.output_shape(input),
            Layer::InceptionResnet(b) => b.output_shape(input),
            Layer::Parallel(b) => b.output_shape(input),
        }
    }

    pub fn collect_params<'a>(&'a self, out: &mut Vec<&'a Param>) {
        match self {
            Layer::Conv3d(l) => {
                out.push(&l.weight);
                out.push(&l.bias);
            }
            Layer::Dense(l) => {
                out.push(&l.weight);
                out.push(&l.bias);
            }
            Layer::Inception(b) => b.collect_params(out),
            Layer::InceptionResnet(b) => b.collect_params(out),
            Layer::Parallel(b) => b.collect_params(out),
            _ => {}
        }
    }

    pub fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        match self {
            Layer::Conv3d(l) => {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
            Layer::Dense(l) => {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
            Layer::Inception(b) => b.collect_params_mut(out),
            Layer::InceptionResnet(b) => b.collect_params_mut(out),
            Layer::Parallel(b) => b.collect_params_mut(out),
            _ => {}
        }
    }

    pub fn collect_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        match self {
            Layer::Conv3d(_) | Layer::Dense(_) => {
                out.push(format!("{prefix}.weight"));
                out.push(format!("{prefix}.bias"));
            }
            Layer::Inception(b) => b.collect_param_names(prefix, out),
            Layer::InceptionResnet(b) => b.collect_param_names(prefix, out),
            Layer::Parallel(b) => b.collect_param_names(prefix, out),
            _ => {}
        }
    }

    /// Parameters owned by this layer (empty for parameter-free layers).
    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv3d(l) => l.clear(),
            Layer::MaxPool3d(l) => l.map = None,
            Layer::Relu(l) => l.input = None,
            Layer::Sigmoid(l) => l.output = None,
            Layer::Flatten(l) => l.shape = None,
            Layer::Dense(l) => l.input = None,
            Layer::GlobalAvgPool(l) => l.shape = None,
            Layer::Inception(b) => b.clear_cache(),
            Layer::InceptionResnet(b) => b.clear_cache(),
            Layer::Parallel(b) => b.clear_cache(),
        }
    }

    /// Folds the piecewise-linear state of the last forward pass (ReLU sign
    /// pattern, max-pool winners) into `hash`. Two inputs with equal
    /// signatures lie in the same linear region of the network.
    pub fn fold_signature(&self, hash: &mut u64) {
        match self {
            Layer::MaxPool3d(l) => {
                if let Some(m) = &l.map {
                    for &i in m.indices() {
                        fnv(hash, i as u64);
                    }
                }
            }
            Layer::Relu(l) => {
                if let Some(x) = &l.input {
                    for &v in x.data() {
                        fnv(hash, (v > 0.0) as u64);
                    }
                }
            }
            Layer::Inception(b) => b.fold_signature(hash),
            Layer::InceptionResnet(b) => b.fold_signature(hash),
            Layer::Parallel(b) => b.fold_signature(hash),
            _ => {}
        }
    }
}

fn fnv(hash: &mut u64, word: u64) {
    for byte in word.to_le_bytes() {
        *hash ^= byte as u64;
        *hash = hash.wrapping_mul(0x100_0000_01b3);
    }
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
}

fn zip_map(g: &Tensor, x: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if g.shape() != x.shape() {
        return Err(Error::shape(op, g.shape(), x.shape()));
    }
    Ok(Tensor::from_parts(
        x.shape().to_vec(),
        g.data().iter().zip(x.data()).map(|(&a, &b)| f(a, b)).collect(),
    ))
}

pub(crate) fn forward_seq(layers: &mut [Layer], x: &Tensor) -> Result<Tensor> {
    let mut cur = x.clone();
    for layer in layers {
        cur = layer.forward(&cur)?;
    }
    Ok(cur)
}

pub(crate) fn infer_seq(layers: &[Layer], x: &Tensor) -> Result<Tensor> {
    let mut cur = x.clone();
    for layer in layers {
        cur = layer.infer(&cur)?;
    }
    Ok(cur)
}

pub(crate) fn backward_seq(layers: &mut [Layer], g: &Tensor) -> Result<Tensor> {
    let mut cur = g.clone();
    for layer in layers.iter_mut().rev() {
        cur = layer.backward(&cur)?;
    }
    Ok(cur)
}

pub(crate) fn output_shape_seq(layers: &[Layer], input: &[usize]) -> Result<Vec<usize>> {
    let mut cur = input.to_vec();
    for layer in layers {
        cur = layer.output_shape(&cur)?;
    }
    Ok(cur)
}

pub(crate) fn names_seq(layers: &[Layer], prefix: &str, out: &mut Vec<String>) {
    for (i, layer) in layers.iter().enumerate() {
        let p = if prefix.is_empty() {
            format!("{i}")
        } else {
            format!("{prefix}.{i}")
        };
        layer.collect_param_names(&p, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero() {
        let mut s = Layer::sigmoid();
        let y = s.forward(&Tensor::scalar(0.0)).unwrap();
        assert_eq!(y.data(), &[0.5]);
        let g = s.backward(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(g.data(), &[0.25]);
    }

    #[test]
    fn sigmoid_stays_open_interval() {
        for z in [-1e308, -800.0, -40.0, 0.0, 40.0, 800.0, 1e308] {
            let s = sigmoid(z);
            assert!(s > 0.0 && s < 1.0, "sigmoid({z}) = {s}");
        }
    }

    #[test]
    fn relu_forward_backward() {
        let mut r = Layer::relu();
        let x = Tensor::new(&[2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(r.forward(&x).unwrap().data(), &[0.0, 2.0]);
        let g = r.backward(&Tensor::new(&[2], vec![5.0, 5.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 5.0]);
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        for mut layer in [
            Layer::relu(),
            Layer::sigmoid(),
            Layer::flatten(),
            Layer::dense(2, 1),
            Layer::conv(1, 1, ConvSpec::same(3)),
            Layer::max_pool(PoolSpec::default()),
            Layer::global_avg_pool(),
        ] {
            assert!(matches!(
                layer.backward(&Tensor::scalar(1.0)),
                Err(Error::BackwardBeforeForward(_))
            ));
        }
    }

    #[test]
    fn parameter_free_layers_report_no_params() {
        for layer in [Layer::relu(), Layer::sigmoid(), Layer::flatten(), Layer::global_avg_pool()] {
            assert!(layer.params().is_empty());
        }
        assert_eq!(Layer::dense(3, 2).params().len(), 2);
    }

    #[test]
    fn dense_gradient_shapes() {
        let mut d = Dense::new(3, 2);
        d.weight.value = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let mut layer = Layer::Dense(d);
        let x = Tensor::new(&[3], vec![1.0, 1.0, 2.0]).unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.data(), &[9.0, -0.5]);
        let gx = layer.backward(&Tensor::new(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(gx.data(), &[-1.0, 3.0, 3.0]);
        if let Layer::Dense(d) = &layer {
            assert_eq!(d.weight.grad.data(), &[1.0, 1.0, 2.0, 2.0, 2.0, 4.0]);
            assert_eq!(d.bias.grad.data(), &[1.0, 2.0]);
        }
    }
}
