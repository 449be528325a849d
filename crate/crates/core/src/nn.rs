//! Feedforward networks built from blocks of `dense -> [batch-norm] ->
//! activation`.
//!
//! Two gradient paths exist. [`layer_local_grads`] differentiates a single
//! block with its input treated as a constant; it is the only gradient used
//! by HSIC training. [`backprop_grads`] runs the full chain rule through
//! every block and a softmax head, and serves the backprop baseline.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation and the activation output.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch-norm normalizes with statistics of the current batch.
    Train,
    /// Batch-norm normalizes with its running statistics.
    Eval,
}

/// Affine map `x·W + b` with `W` of shape `d_in x d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl DenseLayer {
    /// Uniform `±sqrt(6 / (d_in + d_out))` weights, zero bias.
    pub fn init(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        let data = (0..d_in * d_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        DenseLayer {
            w: Matrix::from_vec(d_in, d_out, data).expect("finite init"),
            b: vec![0.0; d_out],
        }
    }

    pub fn seeded(d_in: usize, d_out: usize, seed: u64) -> Self {
        Self::init(d_in, d_out, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn d_in(&self) -> usize {
        self.w.rows()
    }

    pub fn d_out(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.d_in() {
            return Err(Error::dim("dense forward", format!("{} input columns", self.d_in()), x.cols()));
        }
        let mut out = x.dot(&self.w);
        out.add_row_broadcast(&self.b);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Folds batch statistics into the running estimates. `var` is the biased
    /// batch variance; the running estimate stores the unbiased one.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64], m: usize) {
        let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
        let k = self.momentum;
        for i in 0..self.dim() {
            self.running_mean[i] = k * self.running_mean[i] + (1.0 - k) * mean[i];
            self.running_var[i] = k * self.running_var[i] + (1.0 - k) * var[i] * unbias;
        }
    }
}

/// Intermediate values of one block evaluated with batch statistics.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    /// Batch mean and biased variance of the dense output, when batch-norm
    /// is present.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
    /// Normalized dense output `x̂`, before `gamma`/`beta`.
    pub normalized: Option<Matrix>,
    inv_std: Option<Vec<f64>>,
    /// Input to the activation.
    pub pre_activation: Matrix,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub dense: DenseLayer,
    pub bn: Option<BatchNorm>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub w: Matrix,
    pub b: Vec<f64>,
}

fn col_stats(a: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let m = a.rows() as f64;
    let mean = a.col_means();
    let mut var = vec![0.0; a.cols()];
    for i in 0..a.rows() {
        for ((v, &x), &mu) in var.iter_mut().zip(a.row(i)).zip(&mean) {
            let d = x - mu;
            *v += d * d;
        }
    }
    for v in &mut var {
        *v /= m;
    }
    (mean, var)
}

impl Block {
    pub fn d_in(&self) -> usize {
        self.dense.d_in()
    }

    pub fn d_out(&self) -> usize {
        self.dense.d_out()
    }

    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        match mode {
            Mode::Train => Ok(self.trace(x)?.output),
            Mode::Eval => {
                let mut a = self.dense.forward(x)?;
                if let Some(bn) = &self.bn {
                    let scale: Vec<f64> = bn
                        .running_var
                        .iter()
                        .zip(&bn.gamma)
                        .map(|(v, g)| g / (v + bn.eps).sqrt())
                        .collect();
                    for i in 0..a.rows() {
                        for (j, v) in a.row_mut(i).iter_mut().enumerate() {
                            *v = (*v - bn.running_mean[j]) * scale[j] + bn.beta[j];
                        }
                    }
                }
                let act = self.activation;
                Ok(a.map(|v| act.apply(v)))
            }
        }
    }

    /// Forward pass with batch statistics, keeping what the backward pass
    /// needs.
    pub fn trace(&self, x: &Matrix) -> Result<BlockTrace> {
        let a = self.dense.forward(x)?;
        let (batch_stats, normalized, inv_std, pre) = match &self.bn {
            None => (None, None, None, a),
            Some(bn) => {
                if x.rows() < 2 {
                    return Err(Error::InvalidArgument(
                        "batch-norm in train mode needs at least 2 rows".into(),
                    ));
                }
                let (mean, var) = col_stats(&a);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
                let mut xhat = a;
                for i in 0..xhat.rows() {
                    for (j, v) in xhat.row_mut(i).iter_mut().enumerate() {
                        *v = (*v - mean[j]) * inv_std[j];
                    }
                }
                let mut pre = xhat.clone();
                for i in 0..pre.rows() {
                    for (j, v) in pre.row_mut(i).iter_mut().enumerate() {
                        *v = bn.gamma[j] * *v + bn.beta[j];
                    }
                }
                (Some((mean, var)), Some(xhat), Some(inv_std), pre)
            }
        };
        let act = self.activation;
        let output = pre.map(|v| act.apply(v));
        Ok(BlockTrace {
            batch_stats,
            normalized,
            inv_std,
            pre_activation: pre,
            output,
        })
    }

    pub fn update_running_stats(&mut self, trace: &BlockTrace) {
        if let (Some(bn), Some((mean, var))) = (self.bn.as_mut(), trace.batch_stats.as_ref()) {
            bn.update_running(mean, var, trace.output.rows());
        }
    }

    /// Chain rule through this block only. Returns the parameter gradients
    /// and the gradient with respect to the block input.
    pub fn backward(&self, x: &Matrix, trace: &BlockTrace, d_out: &Matrix) -> Result<(BlockGrads, Matrix)> {
        if d_out.shape() != trace.output.shape() {
            return Err(Error::dim(
                "block backward",
                format!("{:?}", trace.output.shape()),
                format!("{:?}", d_out.shape()),
            ));
        }
        let act = self.activation;
        let mut d_pre = d_out.clone();
        for ((g, &p), &o) in d_pre
            .as_mut_slice()
            .iter_mut()
            .zip(trace.pre_activation.as_slice())
            .zip(trace.output.as_slice())
        {
            *g *= act.derivative(p, o);
        }

        let (d_dense, gamma, beta) = match (&self.bn, &trace.normalized, &trace.inv_std) {
            (Some(bn), Some(xhat), Some(inv_std)) => {
                let m = d_pre.rows() as f64;
                let d_beta = d_pre.col_sums();
                let d_gamma = d_pre.hadamard(xhat).col_sums();
                // dx̂ = dy·γ; dx = inv_std/m · (m·dx̂ - Σdx̂ - x̂·Σ(dx̂∘x̂))
                let mut dxhat = d_pre;
                for i in 0..dxhat.rows() {
                    for (j, v) in dxhat.row_mut(i).iter_mut().enumerate() {
                        *v *= bn.gamma[j];
                    }
                }
                let sum_dxhat = dxhat.col_sums();
                let sum_dxhat_xhat = dxhat.hadamard(xhat).col_sums();
                let mut da = dxhat;
                for i in 0..da.rows() {
                    let xr = xhat.row(i).to_vec();
                    for (j, v) in da.row_mut(i).iter_mut().enumerate() {
                        *v = inv_std[j] / m * (m * *v - sum_dxhat[j] - xr[j] * sum_dxhat_xhat[j]);
                    }
                }
                (da, Some(d_gamma), Some(d_beta))
            }
            (None, _, _) => (d_pre, None, None),
            _ => {
                return Err(Error::InvalidArgument(
                    "block trace was not produced with batch statistics".into(),
                ))
            }
        };

        let w = x.t_dot(&d_dense);
        let b = d_dense.col_sums();
        let d_x = d_dense.dot_t(&self.dense.w);
        Ok((BlockGrads { w, b, gamma, beta }, d_x))
    }

    pub fn sgd_step(&mut self, grads: &BlockGrads, lr: f64) -> Result<()> {
        sgd_step(self.dense.w.as_mut_slice(), grads.w.as_slice(), lr)?;
        sgd_step(&mut self.dense.b, &grads.b, lr)?;
        match (&mut self.bn, &grads.gamma, &grads.beta) {
            (Some(bn), Some(dg), Some(db)) => {
                sgd_step(&mut bn.gamma, dg, lr)?;
                sgd_step(&mut bn.beta, db, lr)?;
            }
            (None, None, None) => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "gradient batch-norm layout does not match the block".into(),
                ))
            }
        }
        Ok(())
    }
}

/// `θ ← θ - lr·g`, element-wise.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim("sgd_step", params.len(), grads.len()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sgd_step: learning rate must be positive, got {lr}"
        )));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

impl DenseLayer {
    pub fn sgd_step(&mut self, grads: &DenseGrads, lr: f64) -> Result<()> {
        sgd_step(self.w.as_mut_slice(), grads.w.as_slice(), lr)?;
        sgd_step(&mut self.b, &grads.b, lr)
    }
}

/// Layer sizes plus the per-block options shared by every block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    /// `dims[0]` is the input size, `dims[i]` the output size of block `i`.
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl Architecture {
    pub fn new(dims: Vec<usize>, activation: Activation, batch_norm: bool) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "architecture needs at least 2 layer sizes, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(
                "architecture layer sizes must be positive".into(),
            ));
        }
        Ok(Architecture {
            dims,
            activation,
            batch_norm,
        })
    }

    /// Parses a dash separated list such as `784-256-256-10`.
    pub fn parse(arch: &str, activation: Activation, batch_norm: bool) -> Result<Self> {
        let dims = arch
            .trim()
            .split('-')
            .map(|p| {
                p.trim().parse::<usize>().map_err(|_| {
                    Error::InvalidArgument(format!("malformed architecture `{arch}`"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims, activation, batch_norm)
    }

    pub fn to_arch_string(&self) -> String {
        self.dims
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Outputs `Z₀..Z_L` of a forward pass, `Z₀` being the input.
#[derive(Debug, Clone)]
pub struct Activations {
    pub z: Vec<Matrix>,
}

impl Activations {
    pub fn last(&self) -> &Matrix {
        self.z.last().expect("at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    blocks: Vec<Block>,
}

impl Network {
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one block".into()));
        }
        for (i, pair) in blocks.windows(2).enumerate() {
            if pair[0].d_out() != pair[1].d_in() {
                return Err(Error::dim(
                    "Network::from_blocks",
                    format!("block {} input of {}", i + 1, pair[0].d_out()),
                    pair[1].d_in(),
                ));
            }
        }
        for b in &blocks {
            if b.dense.b.len() != b.d_out() || b.bn.as_ref().is_some_and(|bn| bn.dim() != b.d_out()) {
                return Err(Error::InvalidArgument("block parameter shapes are inconsistent".into()));
            }
        }
        Ok(Network { blocks })
    }

    /// Freshly initialized network; deterministic in `seed`.
    pub fn new(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = arch
            .dims
            .windows(2)
            .map(|w| Block {
                dense: DenseLayer::init(w[0], w[1], &mut rng),
                bn: arch.batch_norm.then(|| BatchNorm::new(w[1])),
                activation: arch.activation,
            })
            .collect();
        Network { blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn input_dim(&self) -> usize {
        self.blocks[0].d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.blocks[self.blocks.len() - 1].d_out()
    }

    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<Activations> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("forward", format!("{} input columns", self.input_dim()), x.cols()));
        }
        let mut z = Vec::with_capacity(self.blocks.len() + 1);
        z.push(x.clone());
        for block in &self.blocks {
            let next = block.forward(z.last().unwrap(), mode)?;
            z.push(next);
        }
        Ok(Activations { z })
    }

    /// Last representation `Z_L` only.
    pub fn output(&self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("forward", format!("{} input columns", self.input_dim()), x.cols()));
        }
        let mut cur = self.blocks[0].forward(x, mode)?;
        for block in &self.blocks[1..] {
            cur = block.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| {
                b.dense.w.as_slice().len() + b.dense.b.len() + b.bn.as_ref().map_or(0, |bn| 2 * bn.dim())
            })
            .sum()
    }
}

/// Gradients of a loss attached to the output of `block` with respect to
/// that block's parameters, treating `z_prev` as a constant.
pub fn layer_local_grads(block: &Block, z_prev: &Matrix, dl_dz: &Matrix, mode: Mode) -> Result<BlockGrads> {
    if mode == Mode::Eval && block.bn.is_some() {
        return Err(Error::InvalidArgument(
            "layer_local_grads: batch-norm gradients require train mode".into(),
        ));
    }
    let trace = block.trace(z_prev)?;
    let (grads, _) = block.backward(z_prev, &trace, dl_dz)?;
    Ok(grads)
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, onehot: &Matrix) -> Result<(f64, Matrix)> {
    if logits.shape() != onehot.shape() {
        return Err(Error::dim(
            "softmax_cross_entropy",
            format!("{:?}", logits.shape()),
            format!("{:?}", onehot.shape()),
        ));
    }
    let m = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        let t = onehot.row(i);
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            let p = (row[j] - log_z).exp();
            *g = (p - t[j]) / m;
            if t[j] != 0.0 {
                loss -= t[j] * (row[j] - log_z);
            }
        }
    }
    Ok((loss / m, grad))
}

#[derive(Debug, Clone)]
pub struct BackpropGrads {
    pub loss: f64,
    pub logits: Matrix,
    pub blocks: Vec<BlockGrads>,
    pub head: DenseGrads,
    /// Per block batch statistics, for running-stat updates.
    pub traces: Vec<BlockTrace>,
}

/// Full chain-rule gradients of the mean cross-entropy of `head(net(x))`.
pub fn backprop_grads(net: &Network, head: &DenseLayer, x: &Matrix, y_onehot: &Matrix) -> Result<BackpropGrads> {
    if head.d_in() != net.output_dim() {
        return Err(Error::dim("backprop_grads", format!("head input {}", net.output_dim()), head.d_in()));
    }
    if y_onehot.rows() != x.rows() || y_onehot.cols() != head.d_out() {
        return Err(Error::dim(
            "backprop_grads",
            format!("labels of shape {}x{}", x.rows(), head.d_out()),
            format!("{}x{}", y_onehot.rows(), y_onehot.cols()),
        ));
    }
    if x.cols() != net.input_dim() {
        return Err(Error::dim("backprop_grads", format!("{} input columns", net.input_dim()), x.cols()));
    }
    let mut inputs = Vec::with_capacity(net.depth());
    let mut traces: Vec<BlockTrace> = Vec::with_capacity(net.depth());
    let mut cur = x.clone();
    for block in net.blocks() {
        let t = block.trace(&cur)?;
        inputs.push(cur);
        cur = t.output.clone();
        traces.push(t);
    }
    let logits = head.forward(&cur)?;
    let (loss, d_logits) = softmax_cross_entropy(&logits, y_onehot)?;
    let head_grads = DenseGrads {
        w: cur.t_dot(&d_logits),
        b: d_logits.col_sums(),
    };
    let mut d = d_logits.dot_t(&head.w);
    let mut block_grads = Vec::with_capacity(net.depth());
    for (i, block) in net.blocks().iter().enumerate().rev() {
        let (g, d_in) = block.backward(&inputs[i], &traces[i], &d)?;
        block_grads.push(g);
        d = d_in;
    }
    block_grads.reverse();
    Ok(BackpropGrads {
        loss,
        logits,
        blocks: block_grads,
        head: head_grads,
        traces,
    })
}
