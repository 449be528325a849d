//! `hsicbt`: runs HSIC-bottleneck and baseline training on IDX datasets and
//! writes metrics, checkpoints and permutations to an output directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use hsic_core::data::{blobs, load_idx, Dataset, MNIST_CLASSES};
use hsic_core::eval::{self, metrics_row, PermutationMap, METRICS_HEADER};
use hsic_core::train::{
    backprop_train, format_train, layerwise_train, multiscale_train, unformatted_train, Split,
};
use hsic_core::{
    Activation, Architecture, Checkpoint, DenseLayer, Error, MetricsRecord, MetricsSink, Mode,
    Network, Phase, TrainConfig,
};

pub const DEFAULT_ARCH: &str = "784-256-256-256-256-256-10";
pub const TOY_ARCH: &str = "784-256-128-64-32-16-8-1";
pub const DEFAULT_DATASET: &str = "data/mnist";
pub const DEFAULT_OUTDIR: &str = "hsicbt-out";
pub const HIST_BINS: usize = 50;
/// Sizes of the synthetic `blobs` dataset when no limits are given.
pub const BLOBS_TRAIN: usize = 1000;
pub const BLOBS_TEST: usize = 300;
const BLOBS_SEED: u64 = 0xB10B5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    TrainUnformatted,
    TrainFormat,
    TrainBackprop,
    TrainMultiscale,
    Monitor,
    Toy1d,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TrainUnformatted => "train-unformatted",
            Command::TrainFormat => "train-format",
            Command::TrainBackprop => "train-backprop",
            Command::TrainMultiscale => "train-multiscale",
            Command::Monitor => "monitor",
            Command::Toy1d => "toy-1d",
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "hsicbt",
    version,
    about = "HSIC-bottleneck training without backpropagation, plus a backprop baseline",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Layer-wise HSIC training; classes read off by a fixed output permutation.
    TrainUnformatted(Flags),
    /// Train a softmax head on a frozen HSIC-trained network (from --checkpoint, or pretrained here).
    TrainFormat(Flags),
    /// End-to-end cross-entropy training with an appended head.
    TrainBackprop(Flags),
    /// One HSIC-trained branch per --sigma-list entry, head on the mean output.
    TrainMultiscale(Flags),
    /// Backprop training, printing the nHSIC(X,Z_L) and nHSIC(Y,Z_L) trajectory.
    Monitor(Flags),
    /// Train a network with a single output unit both ways and write per-class histograms.
    #[command(name = "toy-1d")]
    Toy1d(Flags),
}

/// Every option of every command. Unset options fall back to the config file,
/// then to defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// Layer sizes, e.g. 784-256-256-10
    #[arg(long)]
    pub arch: Option<String>,
    /// Directory with the four MNIST IDX files (optionally gzipped), or `blobs`
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub test_images: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Comma separated kernel widths for train-multiscale
    #[arg(long, value_delimiter = ',')]
    pub sigma_list: Option<Vec<f64>>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Learning rate of the command's main phase
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_hsic: Option<f64>,
    #[arg(long)]
    pub lr_format: Option<f64>,
    #[arg(long)]
    pub lr_backprop: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Unformatted epochs run by train-format when no --checkpoint is given
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    /// `key = value` file; keys are flag names without the dashes
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// relu, tanh or identity
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_batchnorm: Option<bool>,
    /// Train multi-scale branches on separate threads
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub branch_parallel: Option<bool>,
    /// Feed every layer the activations computed at the start of the batch
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub frozen_activations: Option<bool>,
    /// model.bin to start train-format from
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Use only the first N training samples
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Use only the first N test samples
    #[arg(long)]
    pub test_limit: Option<usize>,
    /// Number of training samples the nHSIC monitors use
    #[arg(long)]
    pub monitor_size: Option<usize>,
}

#[derive(Parser)]
#[command(no_binary_name = true)]
struct ConfigArgs {
    #[command(flatten)]
    flags: Flags,
}

macro_rules! merge_fields {
    ($hi:ident, $lo:ident; $($f:ident),*) => {
        Flags { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Flags {
    /// `self` wins over `lower`, field by field.
    fn over(self, lower: Flags) -> Flags {
        merge_fields!(self, lower; arch, dataset, images, labels, test_images, test_labels, beta,
            sigma, sigma_list, epsilon, lr, lr_hsic, lr_format, lr_backprop, batch_size, epochs,
            pretrain_epochs, seed, outdir, config, activation, no_batchnorm, branch_parallel,
            frozen_activations, checkpoint, train_limit, test_limit, monitor_size)
    }

    /// Moves `lr` onto the command's main learning rate unless that one is
    /// set explicitly in the same layer.
    fn resolve_lr(mut self, command: Command) -> Flags {
        if let Some(lr) = self.lr.take() {
            let slot = match command {
                Command::TrainUnformatted | Command::TrainMultiscale | Command::Toy1d => &mut self.lr_hsic,
                Command::TrainFormat => &mut self.lr_format,
                Command::TrainBackprop | Command::Monitor => &mut self.lr_backprop,
            };
            slot.get_or_insert(lr);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Blobs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub command: Command,
    pub dataset: String,
    pub data: DataSource,
    pub arch: Architecture,
    pub cfg: TrainConfig,
    pub outdir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub pretrain_epochs: usize,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

#[derive(Debug)]
pub enum ArgsError {
    /// Help or version requested, or clap rejected the arguments.
    Clap(clap::Error),
    Usage(String),
}

impl ArgsError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ArgsError::Clap(e) if !e.use_stderr() => 0,
            _ => 2,
        }
    }
}

impl std::fmt::Display for ArgsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArgsError::Clap(e) => write!(f, "{e}"),
            ArgsError::Usage(m) => write!(f, "error: {m}\n\nRun `hsicbt --help` for usage."),
        }
    }
}

fn usage(msg: impl Into<String>) -> ArgsError {
    ArgsError::Usage(msg.into())
}

/// Reads a `key = value` config file into flags. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Flags, ArgsError> {
    let mut argv = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected `key = value`", n + 1)))?;
        let key = key.trim();
        if key == "config" {
            return Err(usage(format!("config line {}: nested config files are not supported", n + 1)));
        }
        let value: Vec<&str> = value.split(',').map(str::trim).collect();
        argv.push(format!("--{key}={}", value.join(",")));
    }
    ConfigArgs::try_parse_from(argv)
        .map(|c| c.flags)
        .map_err(|e| usage(format!("in config file: {}", e.kind_message())))
}

trait KindMessage {
    fn kind_message(&self) -> String;
}

impl KindMessage for clap::Error {
    fn kind_message(&self) -> String {
        self.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string()
    }
}

/// `<dir>/<stem>.gz` when it exists, else the uncompressed file.
pub fn idx_path(dir: &Path, stem: &str) -> PathBuf {
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        gz
    } else {
        dir.join(stem)
    }
}

pub fn parse_args<I, T>(argv: I) -> Result<RunSpec, ArgsError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(ArgsError::Clap)?;
    let (command, flags) = match cli.command {
        Cmd::TrainUnformatted(f) => (Command::TrainUnformatted, f),
        Cmd::TrainFormat(f) => (Command::TrainFormat, f),
        Cmd::TrainBackprop(f) => (Command::TrainBackprop, f),
        Cmd::TrainMultiscale(f) => (Command::TrainMultiscale, f),
        Cmd::Monitor(f) => (Command::Monitor, f),
        Cmd::Toy1d(f) => (Command::Toy1d, f),
    };
    let file = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => Flags::default(),
    };
    let f = flags.resolve_lr(command).over(file.resolve_lr(command));
    build_spec(command, f)
}

fn build_spec(command: Command, f: Flags) -> Result<RunSpec, ArgsError> {
    let d = TrainConfig::default();
    let toy = command == Command::Toy1d;
    let activation = f
        .activation
        .unwrap_or(if toy { Activation::Tanh } else { Activation::Relu });
    let batch_norm = !f.no_batchnorm.unwrap_or(false);
    let arch_str = f.arch.unwrap_or_else(|| (if toy { TOY_ARCH } else { DEFAULT_ARCH }).to_string());
    let arch = Architecture::parse(&arch_str, activation, batch_norm).map_err(|e| usage(e.to_string()))?;
    let epochs = f.epochs.unwrap_or(d.epochs);
    let cfg = TrainConfig {
        beta: f.beta.unwrap_or(d.beta),
        sigma: f.sigma.unwrap_or(d.sigma),
        sigma_list: f.sigma_list.unwrap_or(d.sigma_list),
        epsilon: f.epsilon.unwrap_or(d.epsilon),
        lr_hsic: f.lr_hsic.unwrap_or(d.lr_hsic),
        lr_format: f.lr_format.unwrap_or(d.lr_format),
        lr_backprop: f.lr_backprop.unwrap_or(d.lr_backprop),
        batch_size: f.batch_size.unwrap_or(d.batch_size),
        epochs,
        seed: f.seed.unwrap_or(d.seed),
        frozen_activations: f.frozen_activations.unwrap_or(false),
        monitor_size: f.monitor_size.unwrap_or(d.monitor_size),
        branch_parallel: f.branch_parallel.unwrap_or(false),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if command == Command::TrainMultiscale && cfg.sigma_list.is_empty() {
        return Err(usage("--sigma-list must not be empty"));
    }
    let dataset = f.dataset.unwrap_or_else(|| DEFAULT_DATASET.to_string());
    let data = if dataset == "blobs" {
        DataSource::Blobs
    } else {
        let dir = PathBuf::from(&dataset);
        DataSource::Idx {
            images: f.images.unwrap_or_else(|| idx_path(&dir, "train-images-idx3-ubyte")),
            labels: f.labels.unwrap_or_else(|| idx_path(&dir, "train-labels-idx1-ubyte")),
            test_images: f.test_images.unwrap_or_else(|| idx_path(&dir, "t10k-images-idx3-ubyte")),
            test_labels: f.test_labels.unwrap_or_else(|| idx_path(&dir, "t10k-labels-idx1-ubyte")),
        }
    };
    if f.train_limit == Some(0) || f.test_limit == Some(0) {
        return Err(usage("--train-limit and --test-limit must be positive"));
    }
    Ok(RunSpec {
        command,
        dataset,
        data,
        arch,
        pretrain_epochs: f.pretrain_epochs.unwrap_or(epochs),
        cfg,
        outdir: f.outdir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTDIR)),
        checkpoint: f.checkpoint,
        train_limit: f.train_limit,
        test_limit: f.test_limit,
    })
}

fn list(v: &[f64]) -> String {
    v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

impl RunSpec {
    /// Effective configuration in the config-file syntax. Passing it back via
    /// `--config` with the same command reproduces the run.
    pub fn config_text(&self) -> String {
        let c = &self.cfg;
        let mut s = String::new();
        let _ = writeln!(s, "# hsicbt {} {}", self.command.name(), env!("CARGO_PKG_VERSION"));
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("arch", self.arch.to_arch_string());
        kv("activation", self.arch.activation.to_string());
        kv("no-batchnorm", (!self.arch.batch_norm).to_string());
        kv("dataset", self.dataset.clone());
        if let DataSource::Idx {
            images,
            labels,
            test_images,
            test_labels,
        } = &self.data
        {
            kv("images", images.display().to_string());
            kv("labels", labels.display().to_string());
            kv("test-images", test_images.display().to_string());
            kv("test-labels", test_labels.display().to_string());
        }
        if let Some(n) = self.train_limit {
            kv("train-limit", n.to_string());
        }
        if let Some(n) = self.test_limit {
            kv("test-limit", n.to_string());
        }
        kv("beta", c.beta.to_string());
        kv("sigma", c.sigma.to_string());
        kv("sigma-list", list(&c.sigma_list));
        kv("epsilon", c.epsilon.to_string());
        kv("lr-hsic", c.lr_hsic.to_string());
        kv("lr-format", c.lr_format.to_string());
        kv("lr-backprop", c.lr_backprop.to_string());
        kv("batch-size", c.batch_size.to_string());
        kv("epochs", c.epochs.to_string());
        kv("pretrain-epochs", self.pretrain_epochs.to_string());
        kv("seed", c.seed.to_string());
        kv("frozen-activations", c.frozen_activations.to_string());
        kv("monitor-size", c.monitor_size.to_string());
        kv("branch-parallel", c.branch_parallel.to_string());
        if let Some(p) = &self.checkpoint {
            kv("checkpoint", p.display().to_string());
        }
        kv("outdir", self.outdir.display().to_string());
        s
    }

    pub fn load_data(&self) -> hsic_core::Result<(Dataset, Dataset)> {
        let (train, test) = match &self.data {
            DataSource::Idx {
                images,
                labels,
                test_images,
                test_labels,
            } => (load_idx(images, labels)?, load_idx(test_images, test_labels)?),
            DataSource::Blobs => {
                let out = *self.arch.dims.last().unwrap();
                let classes = if out >= 2 { out } else { MNIST_CLASSES };
                let n_train = self.train_limit.unwrap_or(BLOBS_TRAIN);
                let n_test = self.test_limit.unwrap_or(BLOBS_TEST);
                let all = blobs(n_train + n_test, self.arch.dims[0], classes, 3.0, 0.5, BLOBS_SEED)?;
                let train: Vec<usize> = (0..n_train).collect();
                let test: Vec<usize> = (n_train..n_train + n_test).collect();
                (all.select(&train), all.select(&test))
            }
        };
        let train = match self.train_limit {
            Some(n) => train.head(n),
            None => train,
        };
        let test = match self.test_limit {
            Some(n) => test.head(n),
            None => test,
        };
        Ok((train, test))
    }
}

/// Streams metrics rows to `metrics.csv`, echoing them to stderr.
pub struct CsvSink {
    out: BufWriter<File>,
    path: PathBuf,
    pub records: Vec<MetricsRecord>,
    quiet: bool,
}

impl CsvSink {
    pub fn create(path: impl Into<PathBuf>, quiet: bool) -> hsic_core::Result<Self> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{METRICS_HEADER}").map_err(|e| io_err(&path, e))?;
        Ok(CsvSink {
            out,
            path,
            records: Vec::new(),
            quiet,
        })
    }

    pub fn finish(mut self) -> hsic_core::Result<Vec<MetricsRecord>> {
        self.out.flush().map_err(|e| io_err(&self.path, e))?;
        Ok(self.records)
    }
}

impl MetricsSink for CsvSink {
    fn record(&mut self, r: MetricsRecord) -> hsic_core::Result<()> {
        let row = metrics_row(&r);
        if !self.quiet {
            eprintln!("{row}");
        }
        writeln!(self.out, "{row}")
            .and_then(|_| self.out.flush())
            .map_err(|e| io_err(&self.path, e))?;
        self.records.push(r);
        Ok(())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> hsic_core::Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn permutation_text(perm: &PermutationMap) -> String {
    perm.class_to_output().iter().map(|o| format!("{o}\n")).collect()
}

/// `HIST_BINS` uniform bins over `[min, max]` of `values`; one count column
/// per class.
pub fn histogram_csv(values: &[f64], labels: &[usize], num_classes: usize) -> String {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0), lo.min(0.0) + 1.0) };
    let width = (hi - lo) / HIST_BINS as f64;
    let mut counts = vec![vec![0usize; num_classes]; HIST_BINS];
    for (&v, &l) in values.iter().zip(labels) {
        let b = (((v - lo) / width) as usize).min(HIST_BINS - 1);
        counts[b][l] += 1;
    }
    let mut s = String::from("bin_lo,bin_hi");
    for c in 0..num_classes {
        let _ = write!(s, ",class{c}");
    }
    s.push('\n');
    for (b, row) in counts.iter().enumerate() {
        let a = lo + b as f64 * width;
        let _ = write!(s, "{},{}", eval::format_sig(a), eval::format_sig(a + width));
        for n in row {
            let _ = write!(s, ",{n}");
        }
        s.push('\n');
    }
    s
}

/// What a run produced, for the caller's summary line.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<MetricsRecord>,
    pub train_acc: f64,
    pub test_acc: f64,
}

pub fn run(spec: &RunSpec) -> hsic_core::Result<RunSummary> {
    run_with(spec, false)
}

/// `quiet` suppresses the per-epoch echo on stderr.
pub fn run_with(spec: &RunSpec, quiet: bool) -> hsic_core::Result<RunSummary> {
    let out = &spec.outdir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_text(&out.join("config.txt"), &spec.config_text())?;
    let (train, test) = spec.load_data()?;
    let split = Split::new(&train, &test)?;
    let classes = train.num_classes;
    let cfg = &spec.cfg;
    let mut sink = CsvSink::create(out.join("metrics.csv"), quiet)?;
    let save_perm = |perm: &PermutationMap| write_text(&out.join("permutation.txt"), &permutation_text(perm));

    let (train_acc, test_acc) = match spec.command {
        Command::TrainUnformatted => {
            let mut net = Network::new(&spec.arch, cfg.seed);
            let o = unformatted_train(&mut net, split, cfg, &mut sink)?;
            let perm = o.permutation.expect("one output per class");
            save_perm(&perm)?;
            Checkpoint {
                networks: vec![net],
                head: None,
                permutation: Some(perm),
            }
            .save(out.join("model.bin"))?;
            (o.train_acc, o.test_acc)
        }
        Command::TrainFormat => {
            let (networks, permutation) = match &spec.checkpoint {
                Some(path) => {
                    let ck = Checkpoint::load(path)?;
                    (ck.networks, ck.permutation)
                }
                None => {
                    let mut net = Network::new(&spec.arch, cfg.seed);
                    let pre = TrainConfig {
                        epochs: spec.pretrain_epochs,
                        ..cfg.clone()
                    };
                    let o = unformatted_train(&mut net, split, &pre, &mut sink)?;
                    (vec![net], o.permutation)
                }
            };
            if networks[0].input_dim() != train.dim() {
                return Err(Error::Inconsistent(format!(
                    "checkpoint expects {} inputs, data has {}",
                    networks[0].input_dim(),
                    train.dim()
                )));
            }
            let mut head = DenseLayer::seeded(networks[0].output_dim(), classes, cfg.head_seed());
            let scores = if networks.len() == 1 {
                format_train(&networks[0], &mut head, split, cfg, &mut sink)?
            } else {
                format_train(networks.as_slice(), &mut head, split, cfg, &mut sink)?
            };
            if let Some(p) = &permutation {
                save_perm(p)?;
            }
            Checkpoint {
                networks,
                head: Some(head),
                permutation,
            }
            .save(out.join("model.bin"))?;
            scores
        }
        Command::TrainBackprop | Command::Monitor => {
            let mut net = Network::new(&spec.arch, cfg.seed);
            let mut head = DenseLayer::seeded(net.output_dim(), classes, cfg.head_seed());
            let scores = backprop_train(&mut net, &mut head, split, cfg, &mut sink)?;
            if spec.command == Command::Monitor {
                println!("epoch\tnhsic_xz\tnhsic_yz\ttrain_acc");
                for r in &sink.records {
                    println!("{}\t{:.6}\t{:.6}\t{:.4}", r.epoch, r.nhsic_xz, r.nhsic_yz, r.train_acc);
                }
            }
            Checkpoint {
                networks: vec![net],
                head: Some(head),
                permutation: None,
            }
            .save(out.join("model.bin"))?;
            scores
        }
        Command::TrainMultiscale => {
            let (ens, scores) = multiscale_train(&spec.arch, split, cfg, &mut sink)?;
            Checkpoint {
                networks: ens.branches,
                head: Some(ens.head),
                permutation: None,
            }
            .save(out.join("model.bin"))?;
            scores
        }
        Command::Toy1d => run_toy(spec, split, &mut sink)?,
    };
    let records = sink.finish()?;
    Ok(RunSummary {
        records,
        train_acc,
        test_acc,
    })
}

/// Trains the same architecture with the bottleneck objective and with
/// backprop (plus a head), then histograms each network's single output on
/// the test split.
fn run_toy(spec: &RunSpec, split: Split, sink: &mut CsvSink) -> hsic_core::Result<(f64, f64)> {
    let cfg = &spec.cfg;
    let out = &spec.outdir;
    let classes = split.train.num_classes;
    let mut hsic_net = Network::new(&spec.arch, cfg.seed);
    let o = layerwise_train(&mut hsic_net, split, cfg, cfg.kernel()?, Phase::Unformatted, sink)?;
    let mut bp_net = Network::new(&spec.arch, cfg.seed);
    let mut head = DenseLayer::seeded(bp_net.output_dim(), classes, cfg.head_seed());
    backprop_train(&mut bp_net, &mut head, split, cfg, sink)?;
    for (name, net) in [("unformatted", &hsic_net), ("backprop", &bp_net)] {
        let z = net.output(&split.test.images, Mode::Eval)?;
        let values = z.column(0);
        write_text(
            &out.join(format!("hist_{name}.csv")),
            &histogram_csv(&values, &split.test.labels, classes),
        )?;
    }
    Checkpoint::single(hsic_net).save(out.join("model.bin"))?;
    Checkpoint {
        networks: vec![bp_net],
        head: Some(head),
        permutation: None,
    }
    .save(out.join("model_backprop.bin"))?;
    Ok((o.train_acc, o.test_acc))
}

/// Parses `argv` (including the program name), runs, and returns the process
/// exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let spec = match parse_args(argv) {
        Ok(s) => s,
        Err(ArgsError::Clap(e)) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    match run(&spec) {
        Ok(s) => {
            println!(
                "{}: train accuracy {:.4}, test accuracy {:.4} ({})",
                spec.command.name(),
                s.train_acc,
                s.test_acc,
                spec.outdir.display()
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
