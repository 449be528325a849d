//! Trainers: layer-wise bottleneck training, the appended softmax head,
//! the multi-bandwidth ensemble, and the end-to-end cross-entropy baseline.

use std::fmt;
use std::str::FromStr;

use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::eval::{accuracy, class_means, classify, infer_permutation, nearest_mean, predict, PermutationMap};
use crate::hsic::{bottleneck, nhsic_from_caches, NhsicCache};
use crate::kernels::{KernelParams, DEFAULT_EPSILON};
use crate::linalg::Matrix;
use crate::nn::{backprop_grads, softmax_cross_entropy, DenseGrads, DenseLayer, Mode, Network};

/// Offset mixed into the run seed for the appended head, so it does not share
/// a stream with the network initialization.
pub const HEAD_SEED_OFFSET: u64 = 0x5EED_0F_4EAD;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Unformatted,
    Format,
    Backprop,
    /// Unformatted training of one ensemble branch.
    Branch(usize),
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Unformatted => f.write_str("unformatted"),
            Phase::Format => f.write_str("format"),
            Phase::Backprop => f.write_str("backprop"),
            Phase::Branch(k) => write!(f, "branch{k}"),
        }
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unformatted" => Ok(Phase::Unformatted),
            "format" => Ok(Phase::Format),
            "backprop" => Ok(Phase::Backprop),
            _ => s
                .strip_prefix("branch")
                .and_then(|k| k.parse().ok())
                .map(Phase::Branch)
                .ok_or_else(|| Error::Metrics(format!("unknown phase `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub nhsic_xz: f64,
    pub nhsic_yz: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub loss: Option<f64>,
}

pub trait MetricsSink {
    fn record(&mut self, record: MetricsRecord) -> Result<()>;
}

impl MetricsSink for Vec<MetricsRecord> {
    fn record(&mut self, record: MetricsRecord) -> Result<()> {
        self.push(record);
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _: MetricsRecord) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub beta: f64,
    pub sigma: f64,
    pub sigma_list: Vec<f64>,
    pub epsilon: f64,
    pub lr_hsic: f64,
    pub lr_format: f64,
    pub lr_backprop: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Feed each layer the activations computed at the start of the batch
    /// instead of re-forwarding through the layers updated before it.
    pub frozen_activations: bool,
    /// Size of the fixed training prefix the nHSIC monitors are computed on.
    pub monitor_size: usize,
    /// Train ensemble branches on separate threads.
    pub branch_parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 500.0,
            sigma: 5.0,
            sigma_list: vec![1.0, 5.0, 10.0],
            epsilon: DEFAULT_EPSILON,
            lr_hsic: 0.0003,
            lr_format: 0.01,
            lr_backprop: 0.1,
            batch_size: 128,
            epochs: 5,
            seed: 0,
            frozen_activations: false,
            monitor_size: 256,
            branch_parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // beta = 0 is meaningful: pure compression of the input
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be non-negative, got {}", self.beta)));
        }
        let positive = [
            ("sigma", self.sigma),
            ("epsilon", self.epsilon),
            ("lr_hsic", self.lr_hsic),
            ("lr_format", self.lr_format),
            ("lr_backprop", self.lr_backprop),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(bad) = self.sigma_list.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!("sigma_list entries must be positive, got {bad}")));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.monitor_size < 2 {
            return Err(Error::InvalidArgument("monitor_size must be at least 2".into()));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<KernelParams> {
        KernelParams::new(self.sigma, self.epsilon)
    }

    pub fn head_seed(&self) -> u64 {
        self.seed.wrapping_add(HEAD_SEED_OFFSET)
    }
}

/// Training split plus the held-out split accuracy is reported on.
#[derive(Debug, Clone, Copy)]
pub struct Split<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
}

impl<'a> Split<'a> {
    pub fn new(train: &'a Dataset, test: &'a Dataset) -> Result<Self> {
        if train.dim() != test.dim() || train.num_classes != test.num_classes {
            return Err(Error::Inconsistent(format!(
                "train is {} features / {} classes, test is {} / {}",
                train.dim(),
                train.num_classes,
                test.dim(),
                test.num_classes
            )));
        }
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidArgument("train and test splits must be non-empty".into()));
        }
        Ok(Split { train, test })
    }
}

/// `(nHSIC(Z, X), nHSIC(Z, Y))` for a representation of a fixed batch.
pub fn monitor_hsic(z: &Matrix, x: &Matrix, y_onehot: &Matrix, params: &KernelParams) -> Result<(f64, f64)> {
    let cz = NhsicCache::new(z, params)?;
    let cx = NhsicCache::new(x, params)?;
    let cy = NhsicCache::new(y_onehot, params)?;
    Ok((nhsic_from_caches(&cz, &cx)?, nhsic_from_caches(&cz, &cy)?))
}

/// A fixed monitoring batch with its input and label kernels precomputed.
pub struct Monitor {
    x: Matrix,
    cache_x: NhsicCache,
    cache_y: NhsicCache,
    params: KernelParams,
}

impl Monitor {
    pub fn new(data: &Dataset, size: usize, params: KernelParams) -> Result<Self> {
        let sub = data.head(size);
        if sub.len() < 2 {
            return Err(Error::InvalidArgument("monitoring batch needs at least 2 samples".into()));
        }
        let cache_x = NhsicCache::new(&sub.images, &params)?;
        let cache_y = NhsicCache::new(&sub.one_hot(), &params)?;
        Ok(Monitor {
            x: sub.images,
            cache_x,
            cache_y,
            params,
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.x
    }

    pub fn measure(&self, z: &Matrix) -> Result<(f64, f64)> {
        let cz = NhsicCache::new(z, &self.params)?;
        Ok((nhsic_from_caches(&cz, &self.cache_x)?, nhsic_from_caches(&cz, &self.cache_y)?))
    }
}

/// Accuracy of a network's last representation read out without a trained
/// head: by permutation when there is one output per class, otherwise by the
/// nearest class mean.
fn readout_scores(net: &Network, split: Split) -> Result<UnformattedOutcome> {
    let z_train = net.output(&split.train.images, Mode::Eval)?;
    let z_test = net.output(&split.test.images, Mode::Eval)?;
    if net.output_dim() == split.train.num_classes {
        let perm = infer_permutation(&z_train, &split.train.labels)?;
        Ok(UnformattedOutcome {
            train_acc: accuracy(&classify(&z_train, &perm)?, &split.train.labels)?,
            test_acc: accuracy(&classify(&z_test, &perm)?, &split.test.labels)?,
            permutation: Some(perm),
        })
    } else {
        let means = class_means(&z_train, &split.train.labels, split.train.num_classes)?;
        Ok(UnformattedOutcome {
            train_acc: accuracy(&nearest_mean(&z_train, &means)?, &split.train.labels)?,
            test_acc: accuracy(&nearest_mean(&z_test, &means)?, &split.test.labels)?,
            permutation: None,
        })
    }
}

/// Result of layer-wise training. The permutation is inferred on the
/// training split and is absent when the last layer is not one unit per
/// class.
#[derive(Debug, Clone, PartialEq)]
pub struct UnformattedOutcome {
    pub permutation: Option<PermutationMap>,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// One minibatch of layer-wise bottleneck updates. Each block only ever sees
/// the gradient of its own objective with respect to its own output.
pub fn unformatted_step(
    net: &mut Network,
    x: &Matrix,
    y_onehot: &Matrix,
    cfg: &TrainConfig,
    params: &KernelParams,
) -> Result<Vec<f64>> {
    let cache_x = NhsicCache::new(x, params)?;
    let cache_y = NhsicCache::new(y_onehot, params)?;
    let mut objectives = Vec::with_capacity(net.depth());
    let mut z_prev = x.clone();
    for (i, block) in net.blocks_mut().iter_mut().enumerate() {
        let trace = block.trace(&z_prev)?;
        let eval = bottleneck(&trace.output, &cache_x, &cache_y, cfg.beta, params).map_err(|e| {
            Error::Diverged(format!("layer {i} (sigma={}, beta={}): {e}", params.sigma, cfg.beta))
        })?;
        let (grads, _) = block.backward(&z_prev, &trace, &eval.grad)?;
        block.update_running_stats(&trace);
        block.sgd_step(&grads, cfg.lr_hsic)?;
        objectives.push(eval.objective);
        z_prev = if cfg.frozen_activations {
            trace.output
        } else {
            block.trace(&z_prev)?.output
        };
    }
    Ok(objectives)
}

/// Layer-wise bottleneck training with an explicit kernel, for any output
/// width. Records are tagged with `phase`.
pub fn layerwise_train(
    net: &mut Network,
    split: Split,
    cfg: &TrainConfig,
    params: KernelParams,
    phase: Phase,
    sink: &mut dyn MetricsSink,
) -> Result<UnformattedOutcome> {
    cfg.validate()?;
    if cfg.batch_size > split.train.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} exceeds training set of {}",
            cfg.batch_size,
            split.train.len()
        )));
    }
    let monitor = Monitor::new(split.train, cfg.monitor_size, params)?;
    let report = |net: &Network, epoch: usize, loss: Option<f64>, sink: &mut dyn MetricsSink| {
        let outcome = readout_scores(net, split)?;
        let (xz, yz) = monitor.measure(&net.output(monitor.inputs(), Mode::Eval)?)?;
        sink.record(MetricsRecord {
            epoch,
            phase,
            nhsic_xz: xz,
            nhsic_yz: yz,
            train_acc: outcome.train_acc,
            test_acc: outcome.test_acc,
            loss,
        })?;
        Ok::<_, Error>(outcome)
    };
    let mut outcome = report(net, 0, None, sink)?;
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in batches(split.train, cfg.batch_size, cfg.seed, epoch as u64)? {
            let obj = unformatted_step(net, &batch.x, &batch.y_onehot, cfg, &params)
                .map_err(|e| Error::Diverged(format!("epoch {epoch}: {e}")))?;
            total += obj.last().copied().unwrap_or(0.0);
            count += 1;
        }
        outcome = report(net, epoch, Some(total / count as f64), sink)?;
    }
    Ok(outcome)
}

/// Layer-wise bottleneck training with `cfg.sigma`. The reported loss is the
/// mean last-layer objective over the epoch.
pub fn unformatted_train(
    net: &mut Network,
    split: Split,
    cfg: &TrainConfig,
    sink: &mut dyn MetricsSink,
) -> Result<UnformattedOutcome> {
    if net.output_dim() != split.train.num_classes {
        return Err(Error::dim(
            "unformatted_train",
            format!("last layer of {} units (one per class)", split.train.num_classes),
            net.output_dim(),
        ));
    }
    layerwise_train(net, split, cfg, cfg.kernel()?, Phase::Unformatted, sink)
}

/// Frozen feature extractor feeding a head: a single network or the mean of
/// several.
pub trait Features {
    fn features(&self, x: &Matrix) -> Result<Matrix>;
}

impl Features for Network {
    fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.output(x, Mode::Eval)
    }
}

impl Features for [Network] {
    fn features(&self, x: &Matrix) -> Result<Matrix> {
        mean_output(self, x)
    }
}

/// Arithmetic mean of the branch outputs.
pub fn mean_output(branches: &[Network], x: &Matrix) -> Result<Matrix> {
    let first = branches
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble has no branches".into()))?;
    let mut sum = first.output(x, Mode::Eval)?;
    for b in &branches[1..] {
        let z = b.output(x, Mode::Eval)?;
        if z.shape() != sum.shape() {
            return Err(Error::dim("ensemble mean", format!("{:?}", sum.shape()), format!("{:?}", z.shape())));
        }
        sum.axpy(1.0, &z);
    }
    Ok(sum.scale(1.0 / branches.len() as f64))
}

fn head_scores(head: &DenseLayer, f_train: &Matrix, f_test: &Matrix, split: Split) -> Result<(f64, f64)> {
    let train = accuracy(&predict(&head.forward(f_train)?), &split.train.labels)?;
    let test = accuracy(&predict(&head.forward(f_test)?), &split.test.labels)?;
    Ok((train, test))
}

/// SGD on the cross-entropy of `softmax(head(features))`. The feature
/// extractor is only borrowed immutably.
pub fn format_train<F: Features + ?Sized>(
    frozen: &F,
    head: &mut DenseLayer,
    split: Split,
    cfg: &TrainConfig,
    sink: &mut dyn MetricsSink,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let f_train = frozen.features(&split.train.images)?;
    let f_test = frozen.features(&split.test.images)?;
    if f_train.cols() != head.d_in() || head.d_out() != split.train.num_classes {
        return Err(Error::dim(
            "format_train",
            format!("head of {}x{}", f_train.cols(), split.train.num_classes),
            format!("{}x{}", head.d_in(), head.d_out()),
        ));
    }
    let monitor = Monitor::new(split.train, cfg.monitor_size, cfg.kernel()?)?;
    let (xz, yz) = monitor.measure(&frozen.features(monitor.inputs())?)?;
    let train_set = Dataset::new(f_train.clone(), split.train.labels.clone(), split.train.num_classes)?;
    let record = |epoch, loss, head: &DenseLayer, sink: &mut dyn MetricsSink| -> Result<(f64, f64)> {
        let (train_acc, test_acc) = head_scores(head, &f_train, &f_test, split)?;
        sink.record(MetricsRecord {
            epoch,
            phase: Phase::Format,
            nhsic_xz: xz,
            nhsic_yz: yz,
            train_acc,
            test_acc,
            loss,
        })?;
        Ok((train_acc, test_acc))
    };
    let mut scores = record(0, None, head, sink)?;
    let seed = cfg.head_seed();
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in batches(&train_set, cfg.batch_size, seed, epoch as u64)? {
            let logits = head.forward(&batch.x)?;
            let (loss, d) = softmax_cross_entropy(&logits, &batch.y_onehot)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "format loss {loss} at epoch {epoch} (lr={})",
                    cfg.lr_format
                )));
            }
            let grads = DenseGrads {
                w: batch.x.t_dot(&d),
                b: d.col_sums(),
            };
            head.sgd_step(&grads, cfg.lr_format)?;
            total += loss;
            count += 1;
        }
        scores = record(epoch, Some(total / count as f64), head, sink)?;
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub branches: Vec<Network>,
    pub sigmas: Vec<f64>,
    pub head: DenseLayer,
}

impl Ensemble {
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        mean_output(&self.branches, x)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(predict(&self.head.forward(&self.features(x)?)?))
    }
}

/// One unformatted branch per entry of `cfg.sigma_list`, then a head on the
/// mean of their outputs. Branch `k` is initialized from `seed + k`.
pub fn multiscale_train(
    arch: &crate::nn::Architecture,
    split: Split,
    cfg: &TrainConfig,
    sink: &mut dyn MetricsSink,
) -> Result<(Ensemble, (f64, f64))> {
    cfg.validate()?;
    if cfg.sigma_list.is_empty() {
        return Err(Error::InvalidArgument("multi-scale training needs a non-empty sigma list".into()));
    }
    for (i, s) in cfg.sigma_list.iter().enumerate() {
        if cfg.sigma_list[..i].contains(s) {
            return Err(Error::InvalidArgument(format!("sigma {s} listed twice")));
        }
    }
    let run_branch = |k: usize, sigma: f64| -> Result<(Network, Vec<MetricsRecord>)> {
        let mut net = Network::new(arch, cfg.seed.wrapping_add(k as u64));
        let params = KernelParams::new(sigma, cfg.epsilon)?;
        let mut records = Vec::new();
        layerwise_train(&mut net, split, cfg, params, Phase::Branch(k), &mut records)?;
        Ok((net, records))
    };
    let results: Vec<Result<(Network, Vec<MetricsRecord>)>> = if cfg.branch_parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = cfg
                .sigma_list
                .iter()
                .enumerate()
                .map(|(k, &sigma)| s.spawn(move || run_branch(k, sigma)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Diverged("branch thread panicked".into()))))
                .collect()
        })
    } else {
        cfg.sigma_list
            .iter()
            .enumerate()
            .map(|(k, &sigma)| run_branch(k, sigma))
            .collect()
    };
    let mut branches = Vec::with_capacity(results.len());
    for r in results {
        let (net, records) = r?;
        for rec in records {
            sink.record(rec)?;
        }
        branches.push(net);
    }
    let d = branches[0].output_dim();
    let mut head = DenseLayer::seeded(d, split.train.num_classes, cfg.head_seed());
    let scores = format_train(branches.as_slice(), &mut head, split, cfg, sink)?;
    Ok((
        Ensemble {
            branches,
            sigmas: cfg.sigma_list.clone(),
            head,
        },
        scores,
    ))
}

/// End-to-end SGD on cross-entropy through `net` and `head`. The nHSIC
/// monitors are measured on `net`'s last representation.
pub fn backprop_train(
    net: &mut Network,
    head: &mut DenseLayer,
    split: Split,
    cfg: &TrainConfig,
    sink: &mut dyn MetricsSink,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    if head.d_in() != net.output_dim() || head.d_out() != split.train.num_classes {
        return Err(Error::dim(
            "backprop_train",
            format!("head of {}x{}", net.output_dim(), split.train.num_classes),
            format!("{}x{}", head.d_in(), head.d_out()),
        ));
    }
    let monitor = Monitor::new(split.train, cfg.monitor_size, cfg.kernel()?)?;
    let report = |net: &Network, head: &DenseLayer, epoch, loss, sink: &mut dyn MetricsSink| -> Result<(f64, f64)> {
        let f_train = net.output(&split.train.images, Mode::Eval)?;
        let f_test = net.output(&split.test.images, Mode::Eval)?;
        let (train_acc, test_acc) = head_scores(head, &f_train, &f_test, split)?;
        let (xz, yz) = monitor.measure(&net.output(monitor.inputs(), Mode::Eval)?)?;
        sink.record(MetricsRecord {
            epoch,
            phase: Phase::Backprop,
            nhsic_xz: xz,
            nhsic_yz: yz,
            train_acc,
            test_acc,
            loss,
        })?;
        Ok((train_acc, test_acc))
    };
    let mut scores = report(net, head, 0, None, sink)?;
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in batches(split.train, cfg.batch_size, cfg.seed, epoch as u64)? {
            let g = backprop_grads(net, head, &batch.x, &batch.y_onehot)?;
            if !g.loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "cross-entropy {} at epoch {epoch}, batch {count} (lr={})",
                    g.loss, cfg.lr_backprop
                )));
            }
            for ((block, grads), trace) in net.blocks_mut().iter_mut().zip(&g.blocks).zip(&g.traces) {
                block.update_running_stats(trace);
                block.sgd_step(grads, cfg.lr_backprop)?;
            }
            head.sgd_step(&g.head, cfg.lr_backprop)?;
            total += g.loss;
            count += 1;
        }
        scores = report(net, head, epoch, Some(total / count as f64), sink)?;
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::blobs;
    use crate::nn::{Activation, Architecture};

    fn toy() -> (Dataset, Dataset) {
        let all = blobs(240, 4, 3, 3.0, 0.4, 7).unwrap();
        let train = all.select(&(0..180).collect::<Vec<_>>());
        let test = all.select(&(180..240).collect::<Vec<_>>());
        (train, test)
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 30,
            epochs: 2,
            monitor_size: 60,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn phase_names_round_trip() {
        for p in [Phase::Unformatted, Phase::Format, Phase::Backprop, Phase::Branch(3)] {
            assert_eq!(p.to_string().parse::<Phase>().unwrap(), p);
        }
        assert!("nope".parse::<Phase>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr_hsic: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_epochs_leave_parameters_untouched() {
        let (train, test) = toy();
        let split = Split::new(&train, &test).unwrap();
        let arch = Architecture::parse("4-8-3", Activation::Relu, true).unwrap();
        let mut net = Network::new(&arch, 1);
        let init = net.clone();
        let mut sink = Vec::new();
        let c = TrainConfig { epochs: 0, ..cfg() };
        unformatted_train(&mut net, split, &c, &mut sink).unwrap();
        assert_eq!(net, init);
        assert_eq!(sink.len(), 1);
        assert_eq!(sink[0].epoch, 0);
    }

    #[test]
    fn output_width_must_match_classes() {
        let (train, test) = toy();
        let split = Split::new(&train, &test).unwrap();
        let arch = Architecture::parse("4-8-5", Activation::Relu, false).unwrap();
        let mut net = Network::new(&arch, 1);
        assert!(unformatted_train(&mut net, split, &cfg(), &mut NullSink).is_err());
    }

    #[test]
    fn monitors_of_constant_representation_vanish() {
        let (train, _) = toy();
        let p = KernelParams::with_sigma(5.0).unwrap();
        let z = Matrix::filled(train.len(), 3, 0.7);
        let (a, b) = monitor_hsic(&z, &train.images, &train.one_hot(), &p).unwrap();
        assert!(a.abs() < 1e-9 && b.abs() < 1e-9);
    }

    #[test]
    fn emits_one_row_per_epoch_plus_initial() {
        let (train, test) = toy();
        let split = Split::new(&train, &test).unwrap();
        let arch = Architecture::parse("4-8-3", Activation::Relu, true).unwrap();
        let mut net = Network::new(&arch, 2);
        let mut head = DenseLayer::seeded(3, 3, 9);
        let mut sink = Vec::new();
        backprop_train(&mut net, &mut head, split, &cfg(), &mut sink).unwrap();
        let epochs: Vec<usize> = sink.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 1, 2]);
        assert!(sink[0].loss.is_none() && sink[2].loss.is_some());
    }
}
