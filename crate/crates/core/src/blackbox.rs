//! Sources of black-box predictions: stored values, a linear model, or a small
//! one-hidden-layer network that stands in for an unpublished production model.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{pairwise_sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Tanh => T::one() - a * a,
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// One-hidden-layer regression network on standardized inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub input_means: Vec<f64>,
    pub input_scales: Vec<f64>,
    /// hidden × inputs
    pub hidden_weights: Vec<Vec<f64>>,
    pub hidden_bias: Vec<f64>,
    pub activation: Activation,
    /// outputs × hidden
    pub output_weights: Vec<Vec<f64>>,
    pub output_bias: Vec<f64>,
    pub output_means: Vec<f64>,
    pub output_scales: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredictorSpec {
    /// Predictions stored in a CSV, one column per task.
    File { path: PathBuf, columns: Vec<String> },
    Linear {
        outputs: Vec<String>,
        /// outputs × inputs
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    Mlp {
        outputs: Vec<String>,
        #[serde(flatten)]
        params: MlpParams,
    },
}

impl PredictorSpec {
    /// Reads a predictor document; a relative `file` path resolves against the document's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: PredictorSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if let PredictorSpec::File { path: p, .. } = &mut spec {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn output_names(&self) -> Vec<String> {
        match self {
            PredictorSpec::File { columns, .. } => columns.clone(),
            PredictorSpec::Linear { outputs, .. } | PredictorSpec::Mlp { outputs, .. } => outputs.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PredictorSpec::File { columns, .. } => {
                if columns.is_empty() {
                    return Err(Error::InvalidArgument("file predictor names no columns".into()));
                }
            }
            PredictorSpec::Linear { outputs, weights, bias } => {
                if weights.len() != outputs.len() || bias.len() != outputs.len() {
                    return Err(Error::dims("linear predictor outputs", outputs.len(), weights.len()));
                }
                let d = weights.first().map_or(0, Vec::len);
                if weights.iter().any(|w| w.len() != d) {
                    return Err(Error::InvalidArgument("linear predictor rows differ in length".into()));
                }
            }
            PredictorSpec::Mlp { outputs, params: p } => {
                let d = p.input_means.len();
                let h = p.hidden_bias.len();
                let k = p.output_bias.len();
                let chained = p.input_scales.len() == d
                    && p.hidden_weights.len() == h
                    && p.hidden_weights.iter().all(|r| r.len() == d)
                    && p.output_weights.len() == k
                    && p.output_weights.iter().all(|r| r.len() == h)
                    && p.output_means.len() == k
                    && p.output_scales.len() == k
                    && outputs.len() == k;
                if !chained {
                    return Err(Error::InvalidArgument("network layer dimensions do not chain".into()));
                }
            }
        }
        Ok(())
    }

    /// One column per output, one row per instance.
    pub fn predict<T: Scalar>(&self, instances: &Matrix<T>) -> Result<Matrix<T>> {
        self.validate()?;
        match self {
            PredictorSpec::File { path, columns } => {
                let stored = read_columns::<T>(path, columns)?;
                if stored.rows() != instances.rows() {
                    return Err(Error::dims("stored predictions", instances.rows(), stored.rows()));
                }
                Ok(stored)
            }
            PredictorSpec::Linear { weights, bias, .. } => {
                let d = weights.first().map_or(0, Vec::len);
                if instances.cols() != d {
                    return Err(Error::dims("predictor inputs", d, instances.cols()));
                }
                let mut out = Matrix::zeros(instances.rows(), weights.len());
                for (i, x) in instances.row_iter().enumerate() {
                    for (k, (w, &b)) in weights.iter().zip(bias).enumerate() {
                        out[(i, k)] = w.iter().zip(x).fold(T::of(b), |acc, (&wj, &xj)| acc + T::of(wj) * xj);
                    }
                }
                Ok(out)
            }
            PredictorSpec::Mlp { params, .. } => {
                if instances.cols() != params.input_means.len() {
                    return Err(Error::dims("predictor inputs", params.input_means.len(), instances.cols()));
                }
                let net = Network::<T>::from_params(params);
                let z = standardize(instances, &params.input_means, &params.input_scales);
                let mut out = Matrix::zeros(instances.rows(), net.outputs());
                for i in 0..z.rows() {
                    let (_, y) = net.forward(z.row(i));
                    for k in 0..y.len() {
                        out[(i, k)] = y[k] * T::of(params.output_scales[k]) + T::of(params.output_means[k]);
                    }
                }
                Ok(out)
            }
        }
    }
}

fn read_columns<T: Scalar>(path: &Path, columns: &[String]) -> Result<Matrix<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let idx = columns
        .iter()
        .map(|c| header.iter().position(|h| h == c).ok_or_else(|| Error::MissingColumn(c.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for (&j, name) in idx.iter().zip(columns) {
            let cell = rec.get(j).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                row: r,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            data.push(T::of(v));
        }
        rows += 1;
    }
    Matrix::new(rows, columns.len(), data)
}

fn standardize<T: Scalar>(m: &Matrix<T>, means: &[f64], scales: &[f64]) -> Matrix<T> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (*v - T::of(means[j])) / T::of(scales[j]);
        }
    }
    out
}

fn column_stats<T: Scalar>(m: &Matrix<T>) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for j in 0..m.cols() {
        let col: Vec<f64> = m.column(j).iter().map(|v| v.to_f64_lossy()).collect();
        let mean = pairwise_sum(&col) / n;
        let sq: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
        let sd = (pairwise_sum(&sq) / n).sqrt();
        means.push(mean);
        scales.push(if sd > 0.0 { sd } else { 1.0 });
    }
    (means, scales)
}

#[derive(Debug, Clone)]
struct Network<T> {
    w1: Vec<T>,
    b1: Vec<T>,
    w2: Vec<T>,
    b2: Vec<T>,
    d: usize,
    h: usize,
    k: usize,
    act: Activation,
}

impl<T: Scalar> Network<T> {
    fn from_params(p: &MlpParams) -> Self {
        let conv = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        Network {
            w1: p.hidden_weights.iter().flat_map(|r| conv(r)).collect(),
            b1: conv(&p.hidden_bias),
            w2: p.output_weights.iter().flat_map(|r| conv(r)).collect(),
            b2: conv(&p.output_bias),
            d: p.input_means.len(),
            h: p.hidden_bias.len(),
            k: p.output_bias.len(),
            act: p.activation,
        }
    }

    fn outputs(&self) -> usize {
        self.k
    }

    fn forward(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let hidden: Vec<T> = (0..self.h)
            .map(|u| {
                let pre = self.w1[u * self.d..(u + 1) * self.d]
                    .iter()
                    .zip(x)
                    .fold(self.b1[u], |acc, (&w, &xi)| acc + w * xi);
                self.act.apply(pre)
            })
            .collect();
        let out = (0..self.k)
            .map(|o| {
                self.w2[o * self.h..(o + 1) * self.h]
                    .iter()
                    .zip(&hidden)
                    .fold(self.b2[o], |acc, (&w, &a)| acc + w * a)
            })
            .collect();
        (hidden, out)
    }

    /// Mean squared error over all outputs and its gradient, flattened as (w1, b1, w2, b2).
    fn loss_and_gradient(&self, x: &Matrix<T>, y: &Matrix<T>) -> (T, Vec<T>) {
        let (d, h, k) = (self.d, self.h, self.k);
        let mut g = vec![T::zero(); h * d + h + k * h + k];
        let (gw1, rest) = g.split_at_mut(h * d);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(k * h);
        let mut sq = Vec::with_capacity(x.rows());
        let norm = T::of((x.rows() * k) as f64);
        let two = T::of(2.0);
        for i in 0..x.rows() {
            let xi = x.row(i);
            let (hidden, out) = self.forward(xi);
            let mut delta_h = vec![T::zero(); h];
            let mut row_sq = T::zero();
            for o in 0..k {
                let r = out[o] - y[(i, o)];
                row_sq = row_sq + r * r;
                let dr = two * r / norm;
                gb2[o] = gb2[o] + dr;
                for u in 0..h {
                    gw2[o * h + u] = gw2[o * h + u] + dr * hidden[u];
                    delta_h[u] = delta_h[u] + dr * self.w2[o * h + u];
                }
            }
            sq.push(row_sq);
            for u in 0..h {
                let dz = delta_h[u] * self.act.derivative_from_output(hidden[u]);
                gb1[u] = gb1[u] + dz;
                for j in 0..d {
                    gw1[u * d + j] = gw1[u * d + j] + dz * xi[j];
                }
            }
        }
        (pairwise_sum(&sq) / norm, g)
    }

    fn step(&self, grad: &[T], rate: T) -> Self {
        let mut next = self.clone();
        let mut it = grad.iter();
        for p in next
            .w1
            .iter_mut()
            .chain(next.b1.iter_mut())
            .chain(next.w2.iter_mut())
            .chain(next.b2.iter_mut())
        {
            *p = *p - rate * *it.next().expect("gradient matches parameters");
        }
        next
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    /// Initial learning rate; adapted up on success and halved on a rejected step.
    pub step: f64,
    pub seed: u64,
    pub activation: Activation,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 16,
            epochs: 2000,
            step: 0.1,
            seed: 0,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTraining {
    pub spec: PredictorSpec,
    /// Standardized training MSE after each epoch; non-increasing.
    pub loss_history: Vec<f64>,
}

const MAX_BACKOFFS: usize = 40;

/// Full-batch gradient descent on mean squared error, with step backoff so that
/// the training loss never increases.
pub fn train_mlp<T: Scalar>(data: &Matrix<T>, labels: &Matrix<T>, output_names: &[String], config: &MlpConfig) -> Result<MlpTraining> {
    if data.rows() < 10 {
        return Err(Error::InvalidArgument(format!(
            "training the reference network needs at least 10 rows, got {}",
            data.rows()
        )));
    }
    if labels.rows() != data.rows() {
        return Err(Error::dims("training labels", data.rows(), labels.rows()));
    }
    if output_names.len() != labels.cols() {
        return Err(Error::dims("output names", labels.cols(), output_names.len()));
    }
    if !data.is_finite() || !labels.is_finite() {
        return Err(Error::NonFinite("training data".into()));
    }
    if config.hidden == 0 || !(config.step > 0.0) {
        return Err(Error::InvalidArgument("hidden units and step must be positive".into()));
    }
    let (in_means, in_scales) = column_stats(data);
    let (out_means, out_scales) = column_stats(labels);
    let x = standardize(data, &in_means, &in_scales);
    let y = standardize(labels, &out_means, &out_scales);
    let (d, h, k) = (data.cols(), config.hidden, labels.cols());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |fan_in: usize, count: usize| -> Vec<T> {
        let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
        (0..count).map(|_| T::of(normal.sample(&mut rng))).collect()
    };
    let mut net = Network {
        w1: draw(d, h * d),
        b1: vec![T::zero(); h],
        w2: draw(h, k * h),
        b2: vec![T::zero(); k],
        d,
        h,
        k,
        act: config.activation,
    };

    let (mut loss, mut grad) = net.loss_and_gradient(&x, &y);
    if !loss.is_finite() {
        return Err(Error::NonFinite("initial training loss".into()));
    }
    let mut rate = T::of(config.step);
    let mut history = Vec::with_capacity(config.epochs);
    'epochs: for _ in 0..config.epochs {
        let mut backoffs = 0;
        loop {
            let candidate = net.step(&grad, rate);
            let (c_loss, c_grad) = candidate.loss_and_gradient(&x, &y);
            if c_loss.is_finite() && c_loss <= loss {
                net = candidate;
                loss = c_loss;
                grad = c_grad;
                rate = rate * T::of(1.1);
                break;
            }
            rate = rate * T::of(0.5);
            backoffs += 1;
            if backoffs > MAX_BACKOFFS {
                if history.is_empty() {
                    return Err(Error::Optimization(
                        "training diverged: no step size decreases the loss".into(),
                    ));
                }
                // at a stationary point for this precision
                break 'epochs;
            }
        }
        history.push(loss.to_f64_lossy());
    }

    let to_rows = |v: &[T], cols: usize| -> Vec<Vec<f64>> {
        v.chunks(cols).map(|c| c.iter().map(|x| x.to_f64_lossy()).collect()).collect()
    };
    let to_vec = |v: &[T]| -> Vec<f64> { v.iter().map(|x| x.to_f64_lossy()).collect() };
    let spec = PredictorSpec::Mlp {
        outputs: output_names.to_vec(),
        params: MlpParams {
            input_means: in_means,
            input_scales: in_scales,
            hidden_weights: to_rows(&net.w1, d),
            hidden_bias: to_vec(&net.b1),
            activation: config.activation,
            output_weights: to_rows(&net.w2, h),
            output_bias: to_vec(&net.b2),
            output_means: out_means,
            output_scales: out_scales,
            seed: config.seed,
        },
    };
    Ok(MlpTraining {
        spec,
        loss_history: history,
    })
}
