use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

use super::layer::{
    backward_seq, forward_seq, infer_seq, names_seq, output_shape_seq, Layer, LayerKind, Param,
    ParamRole,
};

/// Ordered layers ending in a sigmoid, mapping one input volume to a
/// probability in (0, 1).
#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
}

impl Network {
    /// Validates the layer chain against `input_shape`: every shape must be
    /// well-defined, the pre-sigmoid output must be a single value, and the
    /// last layer must be a sigmoid.
    pub fn new(layers: Vec<Layer>, input_shape: &[usize]) -> Result<Self> {
        match layers.last() {
            Some(Layer::Sigmoid(_)) => {}
            _ => return Err(Error::Config("network must end with a sigmoid layer".into())),
        }
        let out = output_shape_seq(&layers, input_shape)?;
        if out.iter().product::<usize>() != 1 {
            return Err(Error::Config(alloc::format!(
                "network output must be a single value, got shape {out:?}"
            )));
        }
        Ok(Self {
            layers,
            input_shape: input_shape.to_vec(),
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(Layer::kind).collect()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::shape("network input", x.shape(), &self.input_shape));
        }
        Ok(())
    }

    fn body(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    /// Pre-sigmoid output for `x`, caching activations for `backward_logit`.
    pub fn forward_logit(&mut self, x: &Tensor) -> Result<f64> {
        self.check_input(x)?;
        let n = self.layers.len();
        let y = forward_seq(&mut self.layers[..n - 1], x)?;
        Ok(y.data()[0])
    }

    /// Backpropagates `d loss / d logit` and returns the input gradient.
    pub fn backward_logit(&mut self, grad_logit: f64) -> Result<Tensor> {
        let n = self.layers.len();
        let out_shape = output_shape_seq(self.body(), &self.input_shape)?;
        let g = Tensor::filled(&out_shape, grad_logit);
        backward_seq(&mut self.layers[..n - 1], &g)
    }

    /// Full forward pass including the sigmoid, with caching.
    pub fn forward(&mut self, x: &Tensor) -> Result<f64> {
        self.check_input(x)?;
        Ok(forward_seq(&mut self.layers, x)?.data()[0])
    }

    pub fn logit(&self, x: &Tensor) -> Result<f64> {
        self.check_input(x)?;
        Ok(infer_seq(self.body(), x)?.data()[0])
    }

    /// Probability of the positive class; does not touch any cache.
    pub fn predict_proba(&self, x: &Tensor) -> Result<f64> {
        self.check_input(x)?;
        Ok(infer_seq(&self.layers, x)?.data()[0])
    }

    pub fn predict_batch(&self, xs: &[Tensor]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }

    /// Every trainable tensor, each exactly once, in a stable order.
    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for l in &self.layers {
            l.collect_params(&mut out);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            l.collect_params_mut(&mut out);
        }
        out
    }

    /// Dotted paths of the parameters, aligned with [`Network::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        names_seq(&self.layers, "", &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn clear_cache(&mut self) {
        for l in &mut self.layers {
            l.clear_cache();
        }
    }

    /// Hash of the ReLU sign pattern and max-pool winners recorded by the last
    /// cached forward pass.
    pub fn activation_signature(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325;
        for l in &self.layers {
            l.fold_signature(&mut h);
        }
        h
    }
}

/// He-normal weights (standard deviation `sqrt(2 / fan_in)`) drawn from
/// ChaCha8 seeded with `seed`; biases zero. Parameters are visited in
/// registry order, so equal seeds give bit-identical networks.
pub fn init_parameters(network: &mut Network, seed: u64) {
    let mut rng = rng_from_seed(seed);
    for p in network.params_mut() {
        match p.role() {
            ParamRole::Bias => p.value.data_mut().fill(0.0),
            ParamRole::Weight => {
                let std = libm::sqrt(2.0 / p.fan_in() as f64);
                for v in p.value.data_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z * std;
                }
            }
        }
        p.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::ConvSpec;
    use crate::nn::blocks::{InceptionBlock, InceptionResnetBlock, InceptionWidths};
    use alloc::vec;

    fn tiny() -> Network {
        Network::new(
            vec![
                Layer::conv(1, 2, ConvSpec::same(3)),
                Layer::relu(),
                Layer::flatten(),
                Layer::dense(2 * 27, 1),
                Layer::sigmoid(),
            ],
            &[1, 3, 3, 3],
        )
        .unwrap()
    }

    #[test]
    fn requires_trailing_sigmoid_and_scalar_output() {
        assert!(Network::new(vec![Layer::flatten(), Layer::dense(8, 1)], &[1, 2, 2, 2]).is_err());
        assert!(Network::new(
            vec![Layer::flatten(), Layer::dense(8, 2), Layer::sigmoid()],
            &[1, 2, 2, 2]
        )
        .is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let mut a = tiny();
        let mut b = tiny();
        init_parameters(&mut a, 42);
        init_parameters(&mut b, 42);
        for (p, q) in a.params().iter().zip(b.params()) {
            assert_eq!(p.value, q.value);
        }
        let mut c = tiny();
        init_parameters(&mut c, 43);
        assert_ne!(a.params()[0].value, c.params()[0].value);
    }

    #[test]
    fn biases_zero_after_init() {
        let mut a = tiny();
        init_parameters(&mut a, 1);
        for p in a.params() {
            if p.role() == ParamRole::Bias {
                assert!(p.value.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn he_normal_standard_deviation() {
        let mut net = Network::new(
            vec![Layer::flatten(), Layer::dense(100, 100), Layer::relu(), Layer::dense(100, 1), Layer::sigmoid()],
            &[1, 1, 10, 10],
        )
        .unwrap();
        init_parameters(&mut net, 9);
        let w = net.params()[0].value.data();
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (w.len() - 1) as f64;
        let target = libm::sqrt(2.0 / 100.0);
        assert!((libm::sqrt(var) / target - 1.0).abs() < 0.05);
    }

    #[test]
    fn registry_covers_every_parameter_once() {
        let widths = InceptionWidths::default();
        let block = InceptionResnetBlock::standard(4, &widths).unwrap();
        let out_c = widths.output_channels();
        let net = Network::new(
            vec![
                Layer::InceptionResnet(block),
                Layer::conv(out_c, 1, ConvSpec::same(1)),
                Layer::global_avg_pool(),
                Layer::sigmoid(),
            ],
            &[4, 5, 5, 5],
        )
        .unwrap();
        // 4 branch convs + 2 reduction convs + projection + head = 8 convs.
        assert_eq!(net.params().len(), 16);
        let names = net.param_names();
        assert_eq!(names.len(), 16);
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 16);
        assert!(names.iter().any(|n| n == "0.projection.weight"));
    }

    #[test]
    fn inception_identity_branches() {
        let mut conv_a = crate::nn::Conv3d::new(1, 1, ConvSpec::same(1));
        conv_a.weight.value.data_mut()[0] = 1.0;
        let conv_b = conv_a.clone();
        let mut block = InceptionBlock::new(vec![
            vec![Layer::Conv3d(conv_a)],
            vec![Layer::Conv3d(conv_b)],
        ])
        .unwrap();
        let x = Tensor::filled(&[1, 4, 4, 4], 0.7);
        let y = block.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 4, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn inception_branch_mismatch_names_branch() {
        let block = InceptionBlock::new(vec![
            vec![Layer::conv(1, 1, ConvSpec::same(1))],
            vec![Layer::conv(1, 1, ConvSpec::valid(3))],
        ])
        .unwrap();
        let x = Tensor::zeros(&[1, 4, 4, 4]);
        match block.infer(&x) {
            Err(Error::BranchMismatch { branch, .. }) => assert_eq!(branch, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn residual_passthrough_with_zero_inception() {
        let widths = InceptionWidths::default();
        let c = widths.output_channels();
        let block = InceptionResnetBlock::standard(c, &widths).unwrap();
        assert!(block.projection.is_none());
        let n: usize = c * 4 * 4 * 4;
        let x = Tensor::new(&[c, 4, 4, 4], (0..n).map(|i| (i as f64 * 0.1).cos()).collect()).unwrap();
        assert_eq!(block.infer(&x).unwrap(), x);
        let zero = Tensor::zeros(&[c, 4, 4, 4]);
        assert!(block.infer(&zero).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
