//! Reading class predictions off an unformatted network, and the metrics CSV.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::train::MetricsRecord;

pub const METRICS_HEADER: &str = "epoch,phase,nhsic_xz,nhsic_yz,train_acc,test_acc,loss";

/// Class `i` is read from output `class_to_output[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermutationMap {
    class_to_output: Vec<usize>,
}

impl PermutationMap {
    pub fn new(class_to_output: Vec<usize>) -> Result<Self> {
        let n = class_to_output.len();
        let mut seen = vec![false; n];
        for &o in &class_to_output {
            if o >= n || seen[o] {
                return Err(Error::InvalidArgument(format!(
                    "permutation {class_to_output:?} is not a bijection on 0..{n}"
                )));
            }
            seen[o] = true;
        }
        Ok(PermutationMap { class_to_output })
    }

    pub fn identity(n: usize) -> Self {
        PermutationMap {
            class_to_output: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.class_to_output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_to_output.is_empty()
    }

    pub fn class_to_output(&self) -> &[usize] {
        &self.class_to_output
    }

    pub fn output_of(&self, class: usize) -> usize {
        self.class_to_output[class]
    }

    pub fn output_to_class(&self) -> Vec<usize> {
        let mut inv = vec![0; self.len()];
        for (c, &o) in self.class_to_output.iter().enumerate() {
            inv[o] = c;
        }
        inv
    }

    /// Total class-mean activation picked up by this assignment.
    pub fn mass(&self, class_means: &Matrix) -> f64 {
        self.class_to_output
            .iter()
            .enumerate()
            .map(|(c, &o)| class_means[(c, o)])
            .sum()
    }
}

/// `num_classes x outputs` matrix of per-class mean activations.
pub fn class_means(z_last: &Matrix, labels: &[usize], num_classes: usize) -> Result<Matrix> {
    if z_last.rows() != labels.len() {
        return Err(Error::dim("class_means", format!("{} labels", z_last.rows()), labels.len()));
    }
    let mut sums = Matrix::zeros(num_classes, z_last.cols());
    let mut counts = vec![0usize; num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        counts[l] += 1;
        for (s, &v) in sums.row_mut(l).iter_mut().zip(z_last.row(i)) {
            *s += v;
        }
    }
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidArgument(format!(
            "class {missing} has no samples; cannot infer its output"
        )));
    }
    for (c, &n) in counts.iter().enumerate() {
        for s in sums.row_mut(c) {
            *s /= n as f64;
        }
    }
    Ok(sums)
}

/// Maximum-mass assignment of classes to outputs. When every class has a
/// distinct argmax this is the argmax map; collisions get the best bijection.
pub fn assign_from_means(means: &Matrix) -> Result<PermutationMap> {
    if !means.is_square() || means.rows() == 0 {
        return Err(Error::dim(
            "infer_permutation",
            "as many outputs as classes",
            format!("{}x{}", means.rows(), means.cols()),
        ));
    }
    if !means.is_finite() {
        return Err(Error::NonFinite {
            context: "class-mean activations".into(),
        });
    }
    let c = means.rows();
    let argmax: Vec<usize> = (0..c).map(|i| argmax(means.row(i))).collect();
    let mut taken = vec![false; c];
    if argmax.iter().all(|&o| !std::mem::replace(&mut taken[o], true)) {
        return PermutationMap::new(argmax);
    }
    PermutationMap::new(hungarian_max(means))
}

/// Row-to-column assignment maximizing the summed entries (shortest
/// augmenting paths with potentials).
fn hungarian_max(a: &Matrix) -> Vec<usize> {
    let n = a.rows();
    let cost = |i: usize, j: usize| -a[(i, j)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j]: row matched to column j (1-based, 0 = none)
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

pub fn infer_permutation(z_last: &Matrix, labels: &[usize]) -> Result<PermutationMap> {
    let c = z_last.cols();
    if c < 2 {
        return Err(Error::InvalidArgument(format!(
            "infer_permutation needs at least 2 outputs, got {c}"
        )));
    }
    let means = class_means(z_last, labels, c)?;
    assign_from_means(&means)
}

/// First index of the largest value.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn classify(z_last: &Matrix, perm: &PermutationMap) -> Result<Vec<usize>> {
    if z_last.cols() != perm.len() {
        return Err(Error::dim("classify", format!("{} outputs", perm.len()), z_last.cols()));
    }
    let inv = perm.output_to_class();
    Ok((0..z_last.rows()).map(|i| inv[argmax(z_last.row(i))]).collect())
}

/// Index of the closest row of `means` (squared Euclidean), per row of `z`.
pub fn nearest_mean(z: &Matrix, means: &Matrix) -> Result<Vec<usize>> {
    if z.cols() != means.cols() {
        return Err(Error::dim("nearest_mean", format!("{} columns", means.cols()), z.cols()));
    }
    Ok((0..z.rows())
        .map(|i| {
            let d: Vec<f64> = (0..means.rows())
                .map(|c| -z.row(i).iter().zip(means.row(c)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .collect();
            argmax(&d)
        })
        .collect())
}

/// Row-wise argmax of logits.
pub fn predict(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows()).map(|i| argmax(logits.row(i))).collect()
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim("accuracy", format!("{} labels", truth.len()), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// How cleanly each class concentrates on a single output: per class
/// `(top - second) / (top - bottom)` of its mean activation vector, averaged.
pub fn onehotness(z_last: &Matrix, labels: &[usize]) -> Result<f64> {
    let c = z_last.cols();
    if c < 2 {
        return Err(Error::InvalidArgument(format!("onehotness needs c >= 2, got {c}")));
    }
    let num_classes = labels.iter().max().map_or(0, |&l| l + 1).max(c);
    let means = class_means_present(z_last, labels, num_classes)?;
    if means.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for row in &means {
        let mut sorted = row.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let range = sorted[0] - sorted[c - 1];
        if range > 0.0 && range.is_finite() {
            total += ((sorted[0] - sorted[1]) / range).clamp(0.0, 1.0);
        }
    }
    Ok(total / means.len() as f64)
}

fn class_means_present(z: &Matrix, labels: &[usize], num_classes: usize) -> Result<Vec<Vec<f64>>> {
    if z.rows() != labels.len() {
        return Err(Error::dim("onehotness", format!("{} labels", z.rows()), labels.len()));
    }
    let mut sums = vec![vec![0.0; z.cols()]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &v) in sums[l].iter_mut().zip(z.row(i)) {
            *s += v;
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .filter(|&(_, n)| n > 0)
        .map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect())
}

/// `%.9g`-style formatting: 9 significant digits, trailing zeros removed.
pub fn format_sig(v: f64) -> String {
    const DIGITS: i32 = 9;
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One CSV line, without the newline.
pub fn metrics_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.epoch,
        r.phase,
        format_sig(r.nhsic_xz),
        format_sig(r.nhsic_yz),
        format_sig(r.train_acc),
        format_sig(r.test_acc),
        r.loss.map(format_sig).unwrap_or_default()
    )
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&metrics_row(r));
        out.push('\n');
    }
    out
}

pub fn write_metrics(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        other => {
            return Err(Error::Metrics(format!(
                "expected header `{METRICS_HEADER}`, found {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Metrics(format!("line {}: expected 7 fields, found {}", n + 2, f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Metrics(format!("line {}: `{s}`: {e}", n + 2)))
        };
        out.push(MetricsRecord {
            epoch: f[0]
                .trim()
                .parse()
                .map_err(|e| Error::Metrics(format!("line {}: epoch `{}`: {e}", n + 2, f[0])))?,
            phase: f[1].trim().parse()?,
            nhsic_xz: num(f[2])?,
            nhsic_yz: num(f[3])?,
            train_acc: num(f[4])?,
            test_acc: num(f[5])?,
            loss: if f[6].trim().is_empty() { None } else { Some(num(f[6])?) },
        });
    }
    Ok(out)
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text)
}
