//! Central finite-difference gradient checks.
//!
//! A coordinate is only compared when the perturbed forward passes keep the
//! same ReLU sign pattern and max-pool winners as the unperturbed one;
//! otherwise the difference quotient straddles a kink and says nothing about
//! the derivative.

use brainvox_core::arch::ArchSpec;
use brainvox_core::conv::ConvSpec;
use brainvox_core::nn::{InceptionBlock, InceptionResnetBlock, InceptionWidths, Layer, Network, ParallelBranches, Param};
use brainvox_core::pool::PoolSpec;
use brainvox_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;
/// Only guards the 0/0 case.
pub const FLOOR: f64 = 1e-12;

/// `|a - n| / max(|a| + |n|, floor)`
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

pub trait Probe {
    /// Scalar objective with activations cached.
    fn value(&mut self, x: &Tensor) -> f64;
    /// Gradient of the last `value` w.r.t. its input; parameter gradients
    /// accumulate into the params.
    fn backprop(&mut self) -> Tensor;
    fn signature(&self) -> u64;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

pub struct NetProbe<'a>(pub &'a mut Network);

impl Probe for NetProbe<'_> {
    fn value(&mut self, x: &Tensor) -> f64 {
        self.0.forward_logit(x).unwrap()
    }
    fn backprop(&mut self) -> Tensor {
        self.0.backward_logit(1.0).unwrap()
    }
    fn signature(&self) -> u64 {
        self.0.activation_signature()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.0.params_mut()
    }
}

/// Objective `sum(r * layer(x))` for fixed random weights `r`.
pub struct LayerProbe<'a> {
    pub layer: &'a mut Layer,
    pub weights: Option<Tensor>,
    pub seed: u64,
}

impl Probe for LayerProbe<'_> {
    fn value(&mut self, x: &Tensor) -> f64 {
        let y = self.layer.forward(x).unwrap();
        if self.weights.as_ref().is_none_or(|w| w.shape() != y.shape()) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
            let data = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            self.weights = Some(Tensor::new(y.shape(), data).unwrap());
        }
        let w = self.weights.as_ref().unwrap();
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    }
    fn backprop(&mut self) -> Tensor {
        let w = self.weights.clone().unwrap();
        self.layer.backward(&w).unwrap()
    }
    fn signature(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325;
        self.layer.fold_signature(&mut h);
        h
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        self.layer.collect_params_mut(&mut out);
        out
    }
}

#[derive(Debug, Default, Clone)]
pub struct Report {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl Report {
    pub fn merge(&mut self, other: Report) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.worst = self.worst.max(other.worst);
        self.failures.extend(other.failures);
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

enum Coord {
    Param(usize, usize),
    Input(usize),
}

/// Checks up to `params_per_seed` parameter tensors (rotating with `seed`
/// so that consecutive seeds cover all tensors) and `inputs` input voxels.
pub fn check<P: Probe>(probe: &mut P, x: &Tensor, seed: u64, params_per_seed: usize, inputs: usize) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in probe.params_mut() {
        p.zero_grad();
    }
    probe.value(x);
    let sig = probe.signature();
    let grad_x = probe.backprop();
    let grads: Vec<Vec<f64>> = probe.params_mut().iter().map(|p| p.grad.data().to_vec()).collect();
    let n_tensors = grads.len();


    let mut coords = Vec::new();
    if n_tensors > 0 {
        let stride = n_tensors.div_ceil(params_per_seed.max(1));
        let phase = (seed as usize) % stride;
        for t in (phase..n_tensors).step_by(stride) {
            coords.push((t, true));
        }
    }
    for _ in 0..inputs {
        coords.push((0, false));
    }

    let mut report = Report::default();
    for (t, is_param) in coords {
        for _attempt in 0..4 {
            let coord = if is_param {
                Coord::Param(t, rng.random_range(0..grads[t].len()))
            } else {
                Coord::Input(rng.random_range(0..x.len()))
            };
            let (analytic, plus, minus, sp, sm) = match coord {
                Coord::Param(t, i) => {
                    let orig = probe.params_mut()[t].value.data()[i];
                    probe.params_mut()[t].value.data_mut()[i] = orig + STEP;
                    let plus = probe.value(x);
                    let sp = probe.signature();
                    probe.params_mut()[t].value.data_mut()[i] = orig - STEP;
                    let minus = probe.value(x);
                    let sm = probe.signature();
                    probe.params_mut()[t].value.data_mut()[i] = orig;
                    (grads[t][i], plus, minus, sp, sm)
                }
                Coord::Input(i) => {
                    let mut xp = x.clone();
                    xp.data_mut()[i] += STEP;
                    let plus = probe.value(&xp);
                    let sp = probe.signature();
                    let mut xm = x.clone();
                    xm.data_mut()[i] -= STEP;
                    let minus = probe.value(&xm);
                    let sm = probe.signature();
                    (grad_x.data()[i], plus, minus, sp, sm)
                }
            };
            if sp != sig || sm != sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * STEP);
            let rel = rel_error(analytic, numeric, FLOOR);
            report.checked += 1;
            report.worst = report.worst.max(rel);
            if rel >= TOLERANCE {
                let what = match coord {
                    Coord::Param(t, i) => format!("param {t}[{i}]"),
                    Coord::Input(i) => format!("input[{i}]"),
                };
                report
                    .failures
                    .push(format!("seed {seed} {what}: analytic {analytic:e} numeric {numeric:e} rel {rel:e}"));
            }
            break;
        }
    }
    // Leave the probe's caches matching the unperturbed point.
    probe.value(x);
    report
}

pub fn random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

pub fn randomize_params(params: Vec<&mut Param>, seed: u64, bias_scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in params {
        let fan = p.fan_in().max(1) as f64;
        let std = (2.0 / fan).sqrt();
        for v in p.value.data_mut() {
            *v = rng.random_range(-1.0..1.0) * std * 1.7;
        }
        if p.role() == brainvox_core::nn::ParamRole::Bias {
            for v in p.value.data_mut() {
                *v = rng.random_range(-1.0..1.0) * bias_scale;
            }
        }
    }
}

pub struct LayerCase {
    pub name: &'static str,
    pub build: fn() -> Layer,
    pub input: &'static [usize],
}

fn small_widths() -> InceptionWidths {
    InceptionWidths {
        b1: 2,
        b3_reduce: 2,
        b3: 3,
        b5_reduce: 1,
        b5: 2,
        pool_proj: 2,
    }
}

pub fn layer_cases() -> Vec<LayerCase> {
    vec![
        LayerCase {
            name: "conv3d same 3x3x3",
            build: || Layer::conv(2, 3, ConvSpec::same(3)),
            input: &[2, 5, 4, 6],
        },
        LayerCase {
            name: "conv3d 2x2x2 stride 2",
            build: || {
                Layer::conv(
                    2,
                    2,
                    ConvSpec {
                        kernel: [2; 3],
                        stride: [2; 3],
                        padding: [0; 3],
                    },
                )
            },
            input: &[2, 6, 5, 5],
        },
        LayerCase {
            name: "conv3d anisotropic",
            build: || {
                Layer::conv(
                    1,
                    2,
                    ConvSpec {
                        kernel: [3, 2, 3],
                        stride: [1, 2, 3],
                        padding: [0, 1, 2],
                    },
                )
            },
            input: &[1, 5, 6, 7],
        },
        LayerCase {
            name: "maxpool3d 2x2x2",
            build: || Layer::max_pool(PoolSpec::default()),
            input: &[2, 4, 6, 5],
        },
        LayerCase {
            name: "maxpool3d 3x3x3 same",
            build: || Layer::max_pool(PoolSpec::same(3)),
            input: &[2, 4, 4, 4],
        },
        LayerCase {
            name: "maxpool3d 3 stride 2 pad 1",
            build: || {
                Layer::max_pool(PoolSpec {
                    window: [3; 3],
                    stride: [2; 3],
                    padding: [1; 3],
                })
            },
            input: &[1, 5, 6, 5],
        },
        LayerCase {
            name: "relu",
            build: Layer::relu,
            input: &[2, 3, 3, 3],
        },
        LayerCase {
            name: "sigmoid",
            build: Layer::sigmoid,
            input: &[2, 3, 3, 3],
        },
        LayerCase {
            name: "flatten",
            build: Layer::flatten,
            input: &[2, 3, 2, 3],
        },
        LayerCase {
            name: "dense",
            build: || Layer::dense(12, 5),
            input: &[12],
        },
        LayerCase {
            name: "global average pool",
            build: Layer::global_avg_pool,
            input: &[3, 3, 4, 2],
        },
        LayerCase {
            name: "inception block",
            build: || Layer::Inception(InceptionBlock::standard(3, &small_widths()).unwrap()),
            input: &[3, 5, 5, 5],
        },
        LayerCase {
            name: "inception-residual block (projection)",
            build: || Layer::InceptionResnet(InceptionResnetBlock::standard(3, &small_widths()).unwrap()),
            input: &[3, 5, 5, 5],
        },
        LayerCase {
            name: "inception-residual block (identity)",
            build: || Layer::InceptionResnet(InceptionResnetBlock::standard(9, &small_widths()).unwrap()),
            input: &[9, 4, 4, 4],
        },
        LayerCase {
            name: "parallel branches",
            build: || {
                let branch = || vec![Layer::conv(1, 2, ConvSpec::same(3)), Layer::relu(), Layer::max_pool(PoolSpec::default())];
                Layer::Parallel(ParallelBranches::new(vec![1, 1, 1], vec![branch(), branch(), branch()]).unwrap())
            },
            input: &[3, 4, 4, 4],
        },
    ]
}

/// Runs every layer case over `seeds` seeds.
pub fn layer_suite(seeds: u64) -> Vec<(String, Report)> {
    layer_cases()
        .into_iter()
        .map(|case| {
            let mut total = Report::default();
            for seed in 0..seeds {
                let mut layer = (case.build)();
                let mut params = Vec::new();
                layer.collect_params_mut(&mut params);
                randomize_params(params, seed, 0.1);
                let x = random_input(case.input, seed + 1000);
                // Centre inputs so ReLU and sigmoid see both signs.
                let x = Tensor::new(x.shape(), x.data().iter().map(|v| 2.0 * v - 1.0).collect()).unwrap();
                let mut probe = LayerProbe {
                    layer: &mut layer,
                    weights: None,
                    seed,
                };
                total.merge(check(&mut probe, &x, seed, 8, 3));
            }
            (case.name.to_string(), total)
        })
        .collect()
}

/// Every named architecture, single- and three-map, at `extent`.
pub fn arch_suite(seeds: u64, extent: usize) -> Vec<(String, Report)> {
    let mut out = Vec::new();
    for multi in [false, true] {
        for name in ArchSpec::NAMES {
            let spec = ArchSpec::named(name)
                .unwrap()
                .with_extent([extent; 3])
                .with_multi_channel(multi);
            let mut total = Report::default();
            for seed in 0..seeds {
                let mut net = spec.build(seed).unwrap();
                randomize_biases(&mut net, seed);
                let x = random_input(&spec.input_shape(), seed + 7);
                total.merge(check(&mut NetProbe(&mut net), &x, seed, 6, 2));
            }
            let label = if multi { format!("{name} (3 maps)") } else { name.to_string() };
            out.push((label, total));
        }
    }
    out
}

fn randomize_biases(net: &mut Network, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for p in net.params_mut() {
        if p.role() == brainvox_core::nn::ParamRole::Bias {
            for v in p.value.data_mut() {
                *v = rng.random_range(-0.05..0.05);
            }
        }
    }
}
