//! Composite nodes: inception blocks, inception-residual blocks and the
//! per-channel parallel branches used for multi-map input.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::conv::ConvSpec;
use crate::error::{Error, Result};
use crate::pool::PoolSpec;
use crate::tensor::Tensor;

use super::layer::{
    backward_seq, forward_seq, infer_seq, names_seq, output_shape_seq, Conv3d, Layer, Param,
};

/// Filter counts of the four inception branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InceptionWidths {
    /// 1x1x1 branch.
    pub b1: usize,
    /// 1x1x1 reduction ahead of the 3x3x3 conv.
    pub b3_reduce: usize,
    pub b3: usize,
    /// 1x1x1 reduction ahead of the 5x5x5 conv.
    pub b5_reduce: usize,
    pub b5: usize,
    /// 1x1x1 projection after the 3x3x3 stride-1 max pool.
    pub pool_proj: usize,
}

impl Default for InceptionWidths {
    fn default() -> Self {
        Self {
            b1: 8,
            b3_reduce: 8,
            b3: 16,
            b5_reduce: 4,
            b5: 4,
            pool_proj: 4,
        }
    }
}

impl InceptionWidths {
    pub fn output_channels(&self) -> usize {
        self.b1 + self.b3 + self.b5 + self.pool_proj
    }

    pub fn validate(&self) -> Result<()> {
        if [self.b1, self.b3_reduce, self.b3, self.b5_reduce, self.b5, self.pool_proj].contains(&0) {
            return Err(Error::Config(format!("inception widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Parallel branches over one input, merged by channel concatenation.
#[derive(Clone, Debug)]
pub struct InceptionBlock {
    pub branches: Vec<Vec<Layer>>,
    channels: Option<Vec<usize>>,
}

impl InceptionBlock {
    pub fn new(branches: Vec<Vec<Layer>>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::Config("inception block needs at least one branch".into()));
        }
        Ok(Self {
            branches,
            channels: None,
        })
    }

    /// Four-branch 3D block: 1x1x1; 1x1x1 -> 3x3x3; 1x1x1 -> 5x5x5;
    /// 3x3x3 max pool -> 1x1x1. Every conv is followed by ReLU and all
    /// branches preserve spatial extents.
    pub fn standard(in_channels: usize, w: &InceptionWidths) -> Result<Self> {
        w.validate()?;
        let pw = ConvSpec::same(1);
        Self::new(alloc::vec![
            alloc::vec![Layer::conv(in_channels, w.b1, pw), Layer::relu()],
            alloc::vec![
                Layer::conv(in_channels, w.b3_reduce, pw),
                Layer::relu(),
                Layer::conv(w.b3_reduce, w.b3, ConvSpec::same(3)),
                Layer::relu(),
            ],
            alloc::vec![
                Layer::conv(in_channels, w.b5_reduce, pw),
                Layer::relu(),
                Layer::conv(w.b5_reduce, w.b5, ConvSpec::same(5)),
                Layer::relu(),
            ],
            alloc::vec![
                Layer::max_pool(PoolSpec::same(3)),
                Layer::conv(in_channels, w.pool_proj, pw),
                Layer::relu(),
            ],
        ])
    }

    fn merge(outs: &[Tensor]) -> Result<Tensor> {
        let expected = &outs[0].shape()[1..];
        for (i, o) in outs.iter().enumerate() {
            if o.rank() != outs[0].rank() || &o.shape()[1..] != expected {
                return Err(Error::BranchMismatch {
                    branch: i,
                    expected: expected.to_vec(),
                    got: o.shape()[1..].to_vec(),
                });
            }
        }
        let refs: Vec<&Tensor> = outs.iter().collect();
        Tensor::concat_channels(&refs)
    }

    pub(crate) fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let outs = self
            .branches
            .iter()
            .map(|b| infer_seq(b, x))
            .collect::<Result<Vec<_>>>()?;
        Self::merge(&outs)
    }

    pub(crate) fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let outs = self
            .branches
            .iter_mut()
            .map(|b| forward_seq(b, x))
            .collect::<Result<Vec<_>>>()?;
        let y = Self::merge(&outs)?;
        self.channels = Some(outs.iter().map(|o| o.shape()[0]).collect());
        Ok(y)
    }

    pub(crate) fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let channels = self
            .channels
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("InceptionBlock"))?;
        let parts = g.split_channels(channels)?;
        let mut gx: Option<Tensor> = None;
        for (branch, gp) in self.branches.iter_mut().zip(&parts) {
            let gb = backward_seq(branch, gp)?;
            match gx.as_mut() {
                Some(acc) => acc.add_assign(&gb)?,
                None => gx = Some(gb),
            }
        }
        gx.ok_or_else(|| Error::Internal("inception block without branches".into()))
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut channels = 0;
        let mut spatial: Option<Vec<usize>> = None;
        for (i, b) in self.branches.iter().enumerate() {
            let s = output_shape_seq(b, input)?;
            match &spatial {
                Some(sp) if sp.as_slice() != &s[1..] => {
                    return Err(Error::BranchMismatch {
                        branch: i,
                        expected: sp.clone(),
                        got: s[1..].to_vec(),
                    })
                }
                Some(_) => {}
                None => spatial = Some(s[1..].to_vec()),
            }
            channels += s[0];
        }
        let mut out = alloc::vec![channels];
        out.extend(spatial.unwrap_or_default());
        Ok(out)
    }

    pub(crate) fn collect_params<'a>(&'a self, out: &mut Vec<&'a Param>) {
        for l in self.branches.iter().flatten() {
            l.collect_params(out);
        }
    }

    pub(crate) fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for l in self.branches.iter_mut().flatten() {
            l.collect_params_mut(out);
        }
    }

    pub(crate) fn collect_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        for (i, b) in self.branches.iter().enumerate() {
            names_seq(b, &format!("{prefix}.branch{i}"), out);
        }
    }

    pub(crate) fn clear_cache(&mut self) {
        self.channels = None;
        for l in self.branches.iter_mut().flatten() {
            l.clear_cache();
        }
    }

    pub(crate) fn fold_signature(&self, hash: &mut u64) {
        for l in self.branches.iter().flatten() {
            l.fold_signature(hash);
        }
    }
}

/// `inception(x) + shortcut(x)`, where the shortcut is a 1x1x1 conv when the
/// channel counts differ and the identity otherwise.
#[derive(Clone, Debug)]
pub struct InceptionResnetBlock {
    pub inception: InceptionBlock,
    pub projection: Option<Conv3d>,
}

impl InceptionResnetBlock {
    pub fn new(inception: InceptionBlock, projection: Option<Conv3d>) -> Self {
        Self {
            inception,
            projection,
        }
    }

    pub fn standard(in_channels: usize, w: &InceptionWidths) -> Result<Self> {
        let inception = InceptionBlock::standard(in_channels, w)?;
        let out = w.output_channels();
        let projection = (out != in_channels).then(|| Conv3d::new(in_channels, out, ConvSpec::same(1)));
        Ok(Self::new(inception, projection))
    }

    pub(crate) fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let a = self.inception.infer(x)?;
        match &self.projection {
            Some(p) => a.add(&p.infer(x)?),
            None => a.add(x),
        }
    }

    pub(crate) fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let a = self.inception.forward(x)?;
        match &mut self.projection {
            Some(p) => a.add(&p.forward(x)?),
            None => a.add(x),
        }
    }

    pub(crate) fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let mut gx = self.inception.backward(g)?;
        match &mut self.projection {
            Some(p) => gx.add_assign(&p.backward(g)?)?,
            None => gx.add_assign(g)?,
        }
        Ok(gx)
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let a = self.inception.output_shape(input)?;
        let s = match &self.projection {
            Some(p) => p.output_shape(input)?,
            None => input.to_vec(),
        };
        if a != s {
            return Err(Error::shape("residual add", &a, &s));
        }
        Ok(a)
    }

    pub(crate) fn collect_params<'a>(&'a self, out: &mut Vec<&'a Param>) {
        self.inception.collect_params(out);
        if let Some(p) = &self.projection {
            out.push(&p.weight);
            out.push(&p.bias);
        }
    }

    pub(crate) fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.inception.collect_params_mut(out);
        if let Some(p) = &mut self.projection {
            out.push(&mut p.weight);
            out.push(&mut p.bias);
        }
    }

    pub(crate) fn collect_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        self.inception.collect_param_names(prefix, out);
        if self.projection.is_some() {
            out.push(format!("{prefix}.projection.weight"));
            out.push(format!("{prefix}.projection.bias"));
        }
    }

    pub(crate) fn clear_cache(&mut self) {
        self.inception.clear_cache();
        if let Some(p) = &mut self.projection {
            p.clear();
        }
    }

    pub(crate) fn fold_signature(&self, hash: &mut u64) {
        self.inception.fold_signature(hash);
    }
}

/// Splits the input's channels into consecutive groups, runs each group
/// through its own branch and concatenates the branch outputs.
#[derive(Clone, Debug)]
pub struct ParallelBranches {
    pub splits: Vec<usize>,
    pub branches: Vec<Vec<Layer>>,
    channels: Option<Vec<usize>>,
}

impl ParallelBranches {
    pub fn new(splits: Vec<usize>, branches: Vec<Vec<Layer>>) -> Result<Self> {
        if splits.len() != branches.len() || splits.is_empty() || splits.contains(&0) {
            return Err(Error::Config(format!(
                "{} channel groups for {} branches",
                splits.len(),
                branches.len()
            )));
        }
        Ok(Self {
            splits,
            branches,
            channels: None,
        })
    }

    fn split_input(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let total: usize = self.splits.iter().sum();
        if x.rank() == 0 || x.shape()[0] != total {
            let mut want = x.shape().to_vec();
            if let Some(c) = want.first_mut() {
                *c = total;
            }
            return Err(Error::shape("parallel branches input maps", x.shape(), &want));
        }
        x.split_channels(&self.splits)
    }

    pub(crate) fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let parts = self.split_input(x)?;
        let outs = self
            .branches
            .iter()
            .zip(&parts)
            .map(|(b, p)| infer_seq(b, p))
            .collect::<Result<Vec<_>>>()?;
        InceptionBlock::merge(&outs)
    }

    pub(crate) fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let parts = self.split_input(x)?;
        let outs = self
            .branches
            .iter_mut()
            .zip(&parts)
            .map(|(b, p)| forward_seq(b, p))
            .collect::<Result<Vec<_>>>()?;
        let y = InceptionBlock::merge(&outs)?;
        self.channels = Some(outs.iter().map(|o| o.shape()[0]).collect());
        Ok(y)
    }

    pub(crate) fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        let channels = self
            .channels
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("ParallelBranches"))?;
        let parts = g.split_channels(channels)?;
        let grads = self
            .branches
            .iter_mut()
            .zip(&parts)
            .map(|(b, gp)| backward_seq(b, gp))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor> = grads.iter().collect();
        Tensor::concat_channels(&refs)
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let total: usize = self.splits.iter().sum();
        if input.is_empty() || input[0] != total {
            return Err(Error::shape("parallel branches input maps", input, &[total]));
        }
        let mut channels = 0;
        let mut spatial: Option<Vec<usize>> = None;
        for (i, (b, &c)) in self.branches.iter().zip(&self.splits).enumerate() {
            let mut s_in = input.to_vec();
            s_in[0] = c;
            let s = output_shape_seq(b, &s_in)?;
            match &spatial {
                Some(sp) if sp.as_slice() != &s[1..] => {
                    return Err(Error::BranchMismatch {
                        branch: i,
                        expected: sp.clone(),
                        got: s[1..].to_vec(),
                    })
                }
                Some(_) => {}
                None => spatial = Some(s[1..].to_vec()),
            }
            channels += s[0];
        }
        let mut out = alloc::vec![channels];
        out.extend(spatial.unwrap_or_default());
        Ok(out)
    }

    pub(crate) fn collect_params<'a>(&'a self, out: &mut Vec<&'a Param>) {
        for l in self.branches.iter().flatten() {
            l.collect_params(out);
        }
    }

    pub(crate) fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for l in self.branches.iter_mut().flatten() {
            l.collect_params_mut(out);
        }
    }

    pub(crate) fn collect_param_names(&self, prefix: &str, out: &mut Vec<String>) {
        for (i, b) in self.branches.iter().enumerate() {
            names_seq(b, &format!("{prefix}.map{i}"), out);
        }
    }

    pub(crate) fn clear_cache(&mut self) {
        self.channels = None;
        for l in self.branches.iter_mut().flatten() {
            l.clear_cache();
        }
    }

    pub(crate) fn fold_signature(&self, hash: &mut u64) {
        for l in self.branches.iter().flatten() {
            l.fold_signature(hash);
        }
    }
}
