//! Builders for the seven named architectures (three sequential depths, two
//! inception depths, two inception-residual depths) and their three-map
//! variants.

use alloc::borrow::Cow;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::conv::ConvSpec;
use crate::error::{Error, Result};
use crate::nn::{
    init_parameters, output_shape_seq, InceptionBlock, InceptionResnetBlock, InceptionWidths, Layer, Network,
    ParallelBranches,
};
use crate::pool::PoolSpec;
use crate::tensor::Tensor;

/// Number of probability maps per subject (GM, WM, CSF).
pub const MAPS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Sequential,
    Inception,
    InceptionResnet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Flatten -> Dense(units) -> ReLU -> Dense(1) -> Sigmoid.
    FullyConnected,
    /// 1x1x1 conv to one channel -> global average pool -> Sigmoid.
    Conv,
}

/// Complete description of a network; everything except the family and depth
/// has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub family: Family,
    pub depth: usize,
    /// One feature-extractor branch per map (GM, WM, CSF) when set; otherwise
    /// the network sees the GM map only.
    #[serde(default)]
    pub multi_channel: bool,
    /// Spatial extents `[D, H, W]` of the input volumes.
    #[serde(default = "default_extent")]
    pub input_extent: [usize; 3],
    /// Filters of each sequential conv stage; only the first `depth` are used.
    #[serde(default = "default_conv_filters")]
    pub conv_filters: Vec<usize>,
    /// Filters of the stem conv ahead of the inception blocks.
    #[serde(default = "default_stem")]
    pub stem_filters: usize,
    #[serde(default)]
    pub inception: InceptionWidths,
    #[serde(default = "default_dense")]
    pub dense_units: usize,
    /// Cubic kernel extent of the main convolutions ("same" padding).
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default)]
    pub pool: PoolSpec,
    /// Max-pool after every inception block.
    #[serde(default = "default_true")]
    pub pool_after_block: bool,
}

fn default_extent() -> [usize; 3] {
    [61, 73, 61]
}
fn default_conv_filters() -> Vec<usize> {
    vec![16, 32, 64]
}
fn default_stem() -> usize {
    16
}
fn default_dense() -> usize {
    128
}
fn default_kernel() -> usize {
    3
}
fn default_true() -> bool {
    true
}

impl ArchSpec {
    pub fn new(family: Family, depth: usize) -> Self {
        Self {
            family,
            depth,
            multi_channel: false,
            input_extent: default_extent(),
            conv_filters: default_conv_filters(),
            stem_filters: default_stem(),
            inception: InceptionWidths::default(),
            dense_units: default_dense(),
            kernel: default_kernel(),
            pool: PoolSpec::default(),
            pool_after_block: true,
        }
    }

    /// Looks up one of `seq1..seq3`, `inception1..2`, `incres1..2`.
    pub fn named(name: &str) -> Option<Self> {
        let (family, depth) = match name {
            "seq1" => (Family::Sequential, 1),
            "seq2" => (Family::Sequential, 2),
            "seq3" => (Family::Sequential, 3),
            "inception1" => (Family::Inception, 1),
            "inception2" => (Family::Inception, 2),
            "incres1" => (Family::InceptionResnet, 1),
            "incres2" => (Family::InceptionResnet, 2),
            _ => return None,
        };
        Some(Self::new(family, depth))
    }

    pub const NAMES: [&'static str; 7] = [
        "seq1",
        "seq2",
        "seq3",
        "inception1",
        "inception2",
        "incres1",
        "incres2",
    ];

    pub fn name(&self) -> String {
        let stem = match self.family {
            Family::Sequential => "seq",
            Family::Inception => "inception",
            Family::InceptionResnet => "incres",
        };
        format!("{stem}{}", self.depth)
    }

    pub fn with_extent(mut self, extent: [usize; 3]) -> Self {
        self.input_extent = extent;
        self
    }

    pub fn with_multi_channel(mut self, multi: bool) -> Self {
        self.multi_channel = multi;
        self
    }

    pub fn head(&self) -> Head {
        match self.family {
            Family::Sequential => Head::FullyConnected,
            Family::Inception | Family::InceptionResnet => Head::Conv,
        }
    }

    pub fn input_channels(&self) -> usize {
        if self.multi_channel {
            MAPS
        } else {
            1
        }
    }

    pub fn input_shape(&self) -> [usize; 4] {
        let [d, h, w] = self.input_extent;
        [self.input_channels(), d, h, w]
    }

    pub fn validate(&self) -> Result<()> {
        let ok_depth = match self.family {
            Family::Sequential => (1..=3).contains(&self.depth),
            Family::Inception | Family::InceptionResnet => (1..=2).contains(&self.depth),
        };
        if !ok_depth {
            return Err(Error::Config(format!(
                "depth {} not available for {:?}",
                self.depth, self.family
            )));
        }
        if self.family == Family::Sequential && self.conv_filters.len() < self.depth {
            return Err(Error::Config(format!(
                "{} conv filter counts given for depth {}",
                self.conv_filters.len(),
                self.depth
            )));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel extent {} must be odd", self.kernel)));
        }
        if self.conv_filters.contains(&0) || self.stem_filters == 0 || self.dense_units == 0 {
            return Err(Error::Config("filter and unit counts must be positive".into()));
        }
        if self.input_extent.contains(&0) {
            return Err(Error::Config("input extents must be positive".into()));
        }
        self.inception.validate()
    }

    /// Trainable parameter count and pre-head feature shape, derived from
    /// the shape algebra alone (nothing is allocated).
    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self.plan()?.params)
    }

    fn plan(&self) -> Result<Plan> {
        self.validate()?;
        let k3 = self.kernel.pow(3);
        let conv = ConvSpec::same(self.kernel);
        let too_small = |e: Error| {
            Error::Config(format!(
                "input extent {:?} too small for {} ({e})",
                self.input_extent,
                self.name()
            ))
        };
        let mut c = 1usize;
        let mut s = self.input_extent;
        let mut params = 0usize;
        match self.family {
            Family::Sequential => {
                for &f in &self.conv_filters[..self.depth] {
                    params += f * c * k3 + f;
                    c = f;
                    s = conv.output_extents(s).map_err(too_small)?;
                    s = self.pool.output_extents(s).map_err(too_small)?;
                }
            }
            Family::Inception | Family::InceptionResnet => {
                let f = self.stem_filters;
                params += f * c * k3 + f;
                c = f;
                s = conv.output_extents(s).map_err(too_small)?;
                s = self.pool.output_extents(s).map_err(too_small)?;
                let w = &self.inception;
                for _ in 0..self.depth {
                    params += c * w.b1 + w.b1;
                    params += c * w.b3_reduce + w.b3_reduce + w.b3_reduce * 27 * w.b3 + w.b3;
                    params += c * w.b5_reduce + w.b5_reduce + w.b5_reduce * 125 * w.b5 + w.b5;
                    params += c * w.pool_proj + w.pool_proj;
                    let out = w.output_channels();
                    if self.family == Family::InceptionResnet && out != c {
                        params += c * out + out;
                    }
                    c = out;
                    if self.pool_after_block {
                        s = self.pool.output_extents(s).map_err(too_small)?;
                    }
                }
            }
        }
        let branches = self.input_channels();
        params *= branches;
        c *= branches;
        params += match self.head() {
            Head::FullyConnected => {
                let flat = c * s.iter().product::<usize>();
                flat * self.dense_units + self.dense_units + self.dense_units + 1
            }
            Head::Conv => c + 1,
        };
        Ok(Plan { params })
    }

    /// Layers mapping one map to features: the part replicated per map in
    /// the multi-channel variant.
    pub fn feature_extractor(&self) -> Result<Vec<Layer>> {
        self.validate()?;
        let conv = ConvSpec::same(self.kernel);
        let mut layers = Vec::new();
        match self.family {
            Family::Sequential => {
                let mut c = 1;
                for &f in &self.conv_filters[..self.depth] {
                    layers.push(Layer::conv(c, f, conv));
                    layers.push(Layer::relu());
                    layers.push(Layer::max_pool(self.pool));
                    c = f;
                }
            }
            Family::Inception | Family::InceptionResnet => {
                layers.push(Layer::conv(1, self.stem_filters, conv));
                layers.push(Layer::relu());
                layers.push(Layer::max_pool(self.pool));
                let mut c = self.stem_filters;
                for _ in 0..self.depth {
                    layers.push(if self.family == Family::Inception {
                        Layer::Inception(InceptionBlock::standard(c, &self.inception)?)
                    } else {
                        Layer::InceptionResnet(InceptionResnetBlock::standard(c, &self.inception)?)
                    });
                    c = self.inception.output_channels();
                    if self.pool_after_block {
                        layers.push(Layer::max_pool(self.pool));
                    }
                }
            }
        }
        Ok(layers)
    }

    fn feature_channels(&self) -> usize {
        match self.family {
            Family::Sequential => self.conv_filters[self.depth - 1],
            _ => self.inception.output_channels(),
        }
    }

    /// Builds the network with He-normal weights drawn from `seed`.
    pub fn build(&self, seed: u64) -> Result<Network> {
        self.plan()?;
        let mut layers = if self.multi_channel {
            let branches = (0..MAPS)
                .map(|_| self.feature_extractor())
                .collect::<Result<Vec<_>>>()?;
            vec![Layer::Parallel(ParallelBranches::new(vec![1; MAPS], branches)?)]
        } else {
            self.feature_extractor()?
        };
        let c = self.feature_channels() * self.input_channels();
        let input_shape = self.input_shape();
        match self.head() {
            Head::FullyConnected => {
                let feat = output_shape_seq(&layers, &input_shape)?;
                let flat: usize = feat.iter().product();
                layers.push(Layer::flatten());
                layers.push(Layer::dense(flat, self.dense_units));
                layers.push(Layer::relu());
                layers.push(Layer::dense(self.dense_units, 1));
            }
            Head::Conv => {
                layers.push(Layer::conv(c, 1, ConvSpec::same(1)));
                layers.push(Layer::global_avg_pool());
            }
        }
        layers.push(Layer::sigmoid());
        let mut net = Network::new(layers, &input_shape)?;
        init_parameters(&mut net, seed);
        Ok(net)
    }

    /// Adapts a three-map subject tensor to this network's input: the GM map
    /// alone for single-channel networks, all maps otherwise.
    pub fn prepare_input<'a>(&self, sample: &'a Tensor) -> Result<Cow<'a, Tensor>> {
        let want = self.input_shape();
        if sample.shape() == want {
            return Ok(Cow::Borrowed(sample));
        }
        if !self.multi_channel && sample.rank() == 4 && sample.shape()[0] == MAPS && sample.shape()[1..] == want[1..] {
            return Ok(Cow::Owned(sample.channel(0)?));
        }
        Err(Error::shape("model input", sample.shape(), &want))
    }
}

struct Plan {
    params: usize,
}

fn check_family(spec: &ArchSpec, family: Family, depth: usize) -> Result<ArchSpec> {
    let mut s = spec.clone();
    s.family = family;
    s.depth = depth;
    s.validate()?;
    Ok(s)
}

/// `depth` x (Conv + ReLU + MaxPool), then Flatten -> Dense(128) -> ReLU ->
/// Dense(1) -> Sigmoid.
pub fn build_sequential(depth: usize, spec: &ArchSpec, seed: u64) -> Result<Network> {
    check_family(spec, Family::Sequential, depth)?.build(seed)
}

/// Stem conv + pool, `depth` x (inception block + pool), 1x1x1 conv head.
pub fn build_inception(depth: usize, spec: &ArchSpec, seed: u64) -> Result<Network> {
    check_family(spec, Family::Inception, depth)?.build(seed)
}

pub fn build_inception_resnet(depth: usize, spec: &ArchSpec, seed: u64) -> Result<Network> {
    check_family(spec, Family::InceptionResnet, depth)?.build(seed)
}

/// Three independent copies of `base`'s feature extractor, one per map,
/// concatenated ahead of a single shared head.
pub fn build_multichannel(base: &ArchSpec, seed: u64) -> Result<Network> {
    base.clone().with_multi_channel(true).build(seed)
}
