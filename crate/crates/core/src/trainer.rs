//! Single-domain fitting and joint training of an Original explainer with its transfer.
//!
//! The joint objective is `L_O + L_T + λ·L_s`: mean squared errors of both
//! explainers against the black box plus an L1 pull of the transfer toward the
//! identity. The optimizer sees a pseudo-Huber smoothing `√(x²+ε²) − ε` of every
//! L1 term; reported losses use the exact L1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::algebra::{
    apply_affine, AffineTransfer, ExplainerFrame, LinearExplainer, MappingPartition, TransferKind, TransferParams,
};
use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, LstsqSolution, Matrix};
use crate::optimize::{minimize, MinimizeOptions, Objective};
use crate::preprocess::CenteredDataset;
use crate::scalar::{median, pairwise_sum, Scalar};

pub const DEFAULT_SMOOTHING: f64 = 1e-4;
pub const DEFAULT_INIT_STD: f64 = 0.1;

/// λ values used for the two reference applications.
pub mod reference_lambdas {
    pub const TASK_HEALTH: f64 = 0.1;
    pub const TASK_AIR: f64 = 10.0;
    pub const ATTRIBUTES_HEALTH: f64 = 100.0;
    pub const ATTRIBUTES_AIR: f64 = 30.0;
}

/// Least-squares surrogate with its centroid label fitted jointly.
pub fn fit_single<T: Scalar>(data: &CenteredDataset<T>) -> Result<LinearExplainer<T>> {
    fit_single_with_report(data).map(|(e, _)| e)
}

/// As [`fit_single`], also returning rank information. A rank-deficient design is
/// resolved by the minimum-norm solution.
pub fn fit_single_with_report<T: Scalar>(data: &CenteredDataset<T>) -> Result<(LinearExplainer<T>, LstsqSolution<T>)> {
    let n = data.n_attributes();
    let rows = data.len();
    if rows < n + 1 {
        return Err(Error::InvalidArgument(format!(
            "fitting {n} factors and a centroid needs at least {} rows, got {rows}",
            n + 1
        )));
    }
    if !data.relative_values.is_finite() || data.blackbox_predictions.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data".into()));
    }
    let mut design = Matrix::zeros(rows, n + 1);
    for i in 0..rows {
        let row = design.row_mut(i);
        row[..n].copy_from_slice(data.relative_values.row(i));
        row[n] = T::one();
    }
    let sol = lstsq_min_norm(&design, &data.blackbox_predictions)?;
    let explainer = LinearExplainer::new(
        data.schema.clone(),
        sol.coefficients[..n].to_vec(),
        sol.coefficients[n],
        data.attribute_means.clone(),
    )?;
    Ok((explainer, sol))
}

/// Mean squared error of an explainer against the black box on centered data.
pub fn explainer_mse<T: Scalar>(explainer: &LinearExplainer<T>, data: &CenteredDataset<T>) -> Result<T> {
    let mut sq = Vec::with_capacity(data.len());
    for (row, &y) in data.relative_values.row_iter().zip(&data.blackbox_predictions) {
        let r = explainer.predict_relative(row)? - y;
        sq.push(r * r);
    }
    if sq.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(pairwise_sum(&sq) / T::of(sq.len() as f64))
}

/// Exact L1 distance of the transfer from the identity, intercept entry included.
pub fn sparsity_loss<T: Scalar>(transfer: &AffineTransfer<T>) -> T {
    sparsity_loss_with(transfer, true)
}

pub fn sparsity_loss_with<T: Scalar>(transfer: &AffineTransfer<T>, penalize_intercept: bool) -> T {
    let abs = |x: T| x.abs();
    match &transfer.params {
        TransferParams::Translation { delta } => vector_penalty(delta, T::zero(), penalize_intercept, abs),
        TransferParams::Scaling { kappa } => vector_penalty(kappa, T::one(), penalize_intercept, abs),
        TransferParams::Mapping { m_chi, partition } => matrix_penalty(m_chi, partition, abs),
    }
}

fn vector_penalty<T: Scalar>(v: &[T], center: T, include_last: bool, f: impl Fn(T) -> T) -> T {
    let upto = if include_last { v.len() } else { v.len().saturating_sub(1) };
    v[..upto].iter().fold(T::zero(), |acc, &x| acc + f(x - center))
}

fn matrix_penalty<T: Scalar>(m: &Matrix<T>, partition: &MappingPartition, f: impl Fn(T) -> T) -> T {
    let target = partition.identity_target::<T>();
    m.as_slice()
        .iter()
        .zip(target.as_slice())
        .fold(T::zero(), |acc, (&x, &t)| acc + f(x - t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct LossBreakdown<T> {
    pub l_original: T,
    pub l_target: T,
    pub l_sparsity: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn total(&self, lambda: T) -> T {
        self.l_original + self.l_target + lambda * self.l_sparsity
    }

    pub fn faithfulness(&self) -> T {
        self.l_original + self.l_target
    }
}

/// Where each quantity lives in the flat parameter vector:
/// `[w_O (n_O), ȳ̃_O, transfer…]` with the transfer as `w_Δ`/`κ` (length `n_O + 1`)
/// or `M_χ` row-major (`n_O × n_T`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub kind: TransferKind,
    pub n_original: usize,
    pub n_target: usize,
}

impl ParamLayout {
    pub fn new(kind: TransferKind, n_original: usize, n_target: usize) -> Result<Self> {
        if kind != TransferKind::Attributes && n_original != n_target {
            return Err(Error::dims("target attributes", n_original, n_target));
        }
        Ok(ParamLayout {
            kind,
            n_original,
            n_target,
        })
    }

    pub fn len(&self) -> usize {
        self.transfer_offset() + self.transfer_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn transfer_offset(&self) -> usize {
        self.n_original + 1
    }

    pub fn transfer_len(&self) -> usize {
        match self.kind {
            TransferKind::Subspace | TransferKind::Task => self.n_original + 1,
            TransferKind::Attributes => self.n_original * self.n_target,
        }
    }
}

/// The joint objective over one Original/Target pair.
pub struct TransferObjective<'a, T: Scalar> {
    original: &'a CenteredDataset<T>,
    target: &'a CenteredDataset<T>,
    layout: ParamLayout,
    partition: MappingPartition,
    lambda: T,
    smoothing: T,
    penalize_intercept: bool,
}

struct Unpacked<T> {
    w_o: Vec<T>,
    c_o: T,
    w_t: Vec<T>,
    c_t: T,
}

impl<'a, T: Scalar> TransferObjective<'a, T> {
    pub fn new(original: &'a CenteredDataset<T>, target: &'a CenteredDataset<T>, kind: TransferKind, lambda: T) -> Result<Self> {
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be finite and ≥ 0, got {lambda}")));
        }
        let layout = ParamLayout::new(kind, original.n_attributes(), target.n_attributes())?;
        let partition = match kind {
            TransferKind::Attributes => MappingPartition::from_schemas(&original.schema, &target.schema),
            _ => {
                if original.schema.names() != target.schema.names() {
                    return Err(Error::InvalidSchema(format!(
                        "{kind} transfer relates explainers over the same attributes"
                    )));
                }
                MappingPartition::identity(layout.n_original)
            }
        };
        if original.is_empty() || target.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(TransferObjective {
            original,
            target,
            layout,
            partition,
            lambda,
            smoothing: T::of(DEFAULT_SMOOTHING),
            penalize_intercept: true,
        })
    }

    pub fn with_smoothing(mut self, smoothing: T) -> Self {
        self.smoothing = smoothing;
        self
    }

    pub fn with_intercept_penalty(mut self, penalize: bool) -> Self {
        self.penalize_intercept = penalize;
        self
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn partition(&self) -> &MappingPartition {
        &self.partition
    }

    fn check(&self, params: &[T]) -> Result<()> {
        if params.len() != self.layout.len() {
            return Err(Error::dims("parameter vector", self.layout.len(), params.len()));
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        Ok(())
    }

    fn unpack(&self, params: &[T]) -> Unpacked<T> {
        let n = self.layout.n_original;
        let w_o = params[..n].to_vec();
        let c_o = params[n];
        let tp = &params[self.layout.transfer_offset()..];
        let (w_t, c_t) = match self.layout.kind {
            TransferKind::Subspace => (w_o.iter().zip(tp).map(|(&w, &d)| w + d).collect(), c_o + tp[n]),
            TransferKind::Task => (w_o.iter().zip(tp).map(|(&w, &k)| k * w).collect(), tp[n] * c_o),
            TransferKind::Attributes => {
                let nt = self.layout.n_target;
                let mut w_t = vec![T::zero(); nt];
                for i in 0..n {
                    for j in 0..nt {
                        w_t[j] = w_t[j] + tp[i * nt + j] * w_o[i];
                    }
                }
                (w_t, c_o)
            }
        };
        Unpacked { w_o, c_o, w_t, c_t }
    }

    /// The transfer encoded in `params`.
    pub fn transfer_of(&self, params: &[T]) -> Result<AffineTransfer<T>> {
        self.check(params)?;
        let tp = params[self.layout.transfer_offset()..].to_vec();
        let frame = ExplainerFrame {
            schema: self.target.schema.clone(),
            attribute_means: self.target.attribute_means.clone(),
        };
        let t = match self.layout.kind {
            TransferKind::Subspace => AffineTransfer::translation(tp),
            TransferKind::Task => AffineTransfer::scaling(tp),
            TransferKind::Attributes => AffineTransfer::mapping(
                Matrix::new(self.layout.n_original, self.layout.n_target, tp)?,
                self.partition.clone(),
            ),
        };
        Ok(t.with_target(frame))
    }

    pub fn original_of(&self, params: &[T]) -> Result<LinearExplainer<T>> {
        self.check(params)?;
        let n = self.layout.n_original;
        LinearExplainer::new(
            self.original.schema.clone(),
            params[..n].to_vec(),
            params[n],
            self.original.attribute_means.clone(),
        )
    }

    /// Inverse of [`transfer_of`](Self::transfer_of)/[`original_of`](Self::original_of).
    pub fn pack(&self, original: &LinearExplainer<T>, transfer: &AffineTransfer<T>) -> Result<Vec<T>> {
        let mut p = original.extended_factors();
        match (&transfer.params, self.layout.kind) {
            (TransferParams::Translation { delta }, TransferKind::Subspace) => p.extend_from_slice(delta),
            (TransferParams::Scaling { kappa }, TransferKind::Task) => p.extend_from_slice(kappa),
            (TransferParams::Mapping { m_chi, .. }, TransferKind::Attributes) => p.extend_from_slice(m_chi.as_slice()),
            _ => return Err(Error::InvalidArgument("transfer variant does not match the objective kind".into())),
        }
        self.check(&p)?;
        Ok(p)
    }

    fn residuals(data: &CenteredDataset<T>, w: &[T], c: T) -> Vec<T> {
        data.relative_values
            .row_iter()
            .zip(&data.blackbox_predictions)
            .map(|(row, &y)| crate::scalar::dot(row, w) + c - y)
            .collect()
    }

    fn mse(res: &[T]) -> T {
        let sq: Vec<T> = res.iter().map(|&r| r * r).collect();
        pairwise_sum(&sq) / T::of(res.len() as f64)
    }

    /// `(2/N)·χᵀr` and `(2/N)·Σr`
    fn mse_gradient(data: &CenteredDataset<T>, res: &[T]) -> (Vec<T>, T) {
        let scale = T::of(2.0) / T::of(res.len() as f64);
        let g = data.relative_values.tr_mul_vec(res).expect("residuals match rows");
        (g.into_iter().map(|v| v * scale).collect(), pairwise_sum(res) * scale)
    }

    /// Transfer parameters of the identity transform.
    pub fn identity_parameters(&self) -> Vec<T> {
        let l = self.layout;
        match l.kind {
            TransferKind::Subspace => vec![T::zero(); l.transfer_len()],
            TransferKind::Task => vec![T::one(); l.transfer_len()],
            TransferKind::Attributes => self.partition.identity_target::<T>().into_vec(),
        }
    }

    fn penalty_slots(&self) -> Vec<(usize, T)> {
        // (offset within transfer params, identity value) for every penalized entry
        let l = self.layout;
        match l.kind {
            TransferKind::Subspace | TransferKind::Task => {
                let center = if l.kind == TransferKind::Task { T::one() } else { T::zero() };
                let upto = if self.penalize_intercept { l.n_original + 1 } else { l.n_original };
                (0..upto).map(|i| (i, center)).collect()
            }
            TransferKind::Attributes => {
                let target = self.partition.identity_target::<T>();
                target.as_slice().iter().copied().enumerate().collect()
            }
        }
    }

    /// `L_O`, `L_T` and the exact `L_s` at `params`.
    pub fn breakdown(&self, params: &[T]) -> Result<LossBreakdown<T>> {
        self.check(params)?;
        let u = self.unpack(params);
        let l_original = Self::mse(&Self::residuals(self.original, &u.w_o, u.c_o));
        let l_target = Self::mse(&Self::residuals(self.target, &u.w_t, u.c_t));
        let tp = &params[self.layout.transfer_offset()..];
        let l_sparsity = self
            .penalty_slots()
            .into_iter()
            .fold(T::zero(), |acc, (k, c)| acc + (tp[k] - c).abs());
        let b = LossBreakdown {
            l_original,
            l_target,
            l_sparsity,
        };
        if !b.total(self.lambda).is_finite() {
            return Err(Error::NonFinite("loss terms".into()));
        }
        Ok(b)
    }

    /// Exact-L1 total.
    pub fn exact_total(&self, params: &[T]) -> Result<T> {
        Ok(self.breakdown(params)?.total(self.lambda))
    }

    fn smooth_abs(&self, x: T) -> (T, T) {
        let eps = self.smoothing;
        let r = (x * x + eps * eps).sqrt();
        (r - eps, x / r)
    }

    /// Smoothed objective and its analytic gradient.
    pub fn smoothed(&self, params: &[T]) -> Result<(T, Vec<T>)> {
        self.check(params)?;
        let l = self.layout;
        let n = l.n_original;
        let u = self.unpack(params);
        let r_o = Self::residuals(self.original, &u.w_o, u.c_o);
        let r_t = Self::residuals(self.target, &u.w_t, u.c_t);
        let (g_o, gc_o) = Self::mse_gradient(self.original, &r_o);
        let (g_t, gc_t) = Self::mse_gradient(self.target, &r_t);

        let mut grad = vec![T::zero(); l.len()];
        grad[..n].copy_from_slice(&g_o);
        grad[n] = gc_o;
        let off = l.transfer_offset();
        let tp = &params[off..];
        match l.kind {
            TransferKind::Subspace => {
                for i in 0..n {
                    grad[i] = grad[i] + g_t[i];
                    grad[off + i] = g_t[i];
                }
                grad[n] = grad[n] + gc_t;
                grad[off + n] = gc_t;
            }
            TransferKind::Task => {
                for i in 0..n {
                    grad[i] = grad[i] + tp[i] * g_t[i];
                    grad[off + i] = u.w_o[i] * g_t[i];
                }
                grad[n] = grad[n] + tp[n] * gc_t;
                grad[off + n] = u.c_o * gc_t;
            }
            TransferKind::Attributes => {
                let nt = l.n_target;
                for i in 0..n {
                    let mut acc = T::zero();
                    for j in 0..nt {
                        acc = acc + tp[i * nt + j] * g_t[j];
                        grad[off + i * nt + j] = u.w_o[i] * g_t[j];
                    }
                    grad[i] = grad[i] + acc;
                }
                grad[n] = grad[n] + gc_t;
            }
        }
        let mut penalty = T::zero();
        for (k, c) in self.penalty_slots() {
            let (v, d) = self.smooth_abs(tp[k] - c);
            penalty = penalty + v;
            grad[off + k] = grad[off + k] + self.lambda * d;
        }
        let value = Self::mse(&r_o) + Self::mse(&r_t) + self.lambda * penalty;
        if !value.is_finite() {
            return Err(Error::NonFinite("smoothed objective".into()));
        }
        Ok((value, grad))
    }
}

impl<T: Scalar> Objective<T> for TransferObjective<'_, T> {
    fn value(&self, x: &[T]) -> T {
        self.smoothed(x).map(|(v, _)| v).unwrap_or_else(|_| T::nan())
    }

    fn value_and_gradient(&self, x: &[T]) -> (T, Vec<T>) {
        self.smoothed(x)
            .unwrap_or_else(|_| (T::nan(), vec![T::nan(); x.len()]))
    }
}

/// `L_O + L_T + λ·L_s` with exact L1.
pub fn loss_total<T: Scalar>(
    params: &[T],
    data_o: &CenteredDataset<T>,
    data_t: &CenteredDataset<T>,
    kind: TransferKind,
    lambda: T,
) -> Result<T> {
    TransferObjective::new(data_o, data_t, kind, lambda)?.exact_total(params)
}

/// Analytic gradient of the smoothed objective.
pub fn gradient<T: Scalar>(objective: &TransferObjective<'_, T>, params: &[T]) -> Result<Vec<T>> {
    objective.smoothed(params).map(|(_, g)| g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SnapThresholds<T> {
    pub delta_eps: T,
    pub scale_eps: T,
    pub map_eps: T,
}

impl<T: Scalar> SnapThresholds<T> {
    /// `delta_eps = 0.01·median|w_O|`, `scale_eps = 0.05`, `map_eps = 0.02`.
    pub fn defaults_for(original: &LinearExplainer<T>) -> Self {
        let abs: Vec<T> = original.factors.iter().map(|w| w.abs()).collect();
        SnapThresholds {
            delta_eps: T::of(0.01) * median(&abs).unwrap_or(T::zero()),
            scale_eps: T::of(0.05),
            map_eps: T::of(0.02),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snap<T> {
    Off,
    Defaults,
    Custom(SnapThresholds<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Convergence<T> {
    pub iterations: usize,
    pub function_evaluations: usize,
    pub final_gradient_norm: T,
    pub converged: bool,
    pub line_search_failed: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct TransferFit<T: Scalar> {
    pub kind: TransferKind,
    pub original: LinearExplainer<T>,
    pub transfer: AffineTransfer<T>,
    pub derived_target: LinearExplainer<T>,
    pub lambda: T,
    pub loss_breakdown: LossBreakdown<T>,
    pub convergence: Convergence<T>,
    pub penalize_intercept: bool,
    pub init_std: T,
    pub smoothing: T,
    /// Thresholds applied by the last snap, if any.
    pub snap: Option<SnapThresholds<T>>,
    /// Scaling entries whose Original factor is zero, leaving the scale undetermined.
    pub unidentifiable: Vec<usize>,
}

impl<T: Scalar> TransferFit<T> {
    pub fn total_loss(&self) -> T {
        self.loss_breakdown.total(self.lambda)
    }

    /// Recomputes every loss term against the training data.
    pub fn refresh_losses(&mut self, data_o: &CenteredDataset<T>, data_t: &CenteredDataset<T>) -> Result<()> {
        let obj = TransferObjective::new(data_o, data_t, self.kind, self.lambda)?.with_intercept_penalty(self.penalize_intercept);
        let params = obj.pack(&self.original, &self.transfer)?;
        self.loss_breakdown = obj.breakdown(&params)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions<T> {
    pub init_std: f64,
    pub smoothing: f64,
    pub penalize_intercept: bool,
    pub minimize: MinimizeOptions,
    pub snap: Snap<T>,
}

impl<T> Default for FitOptions<T> {
    fn default() -> Self {
        FitOptions {
            init_std: DEFAULT_INIT_STD,
            smoothing: DEFAULT_SMOOTHING,
            penalize_intercept: true,
            minimize: MinimizeOptions {
                max_iter: 3000,
                grad_tolerance: 1e-6,
                seed: 0,
            },
            snap: Snap::Defaults,
        }
    }
}

/// Joint fit with default options.
pub fn fit_transfer<T: Scalar>(
    data_o: &CenteredDataset<T>,
    data_t: &CenteredDataset<T>,
    kind: TransferKind,
    lambda: T,
    seed: u64,
) -> Result<TransferFit<T>> {
    fit_transfer_with(data_o, data_t, kind, lambda, seed, &FitOptions::default())
}

pub fn fit_transfer_with<T: Scalar>(
    data_o: &CenteredDataset<T>,
    data_t: &CenteredDataset<T>,
    kind: TransferKind,
    lambda: T,
    seed: u64,
    options: &FitOptions<T>,
) -> Result<TransferFit<T>> {
    if !(options.init_std >= 0.0) || !(options.smoothing > 0.0) {
        return Err(Error::InvalidArgument("init_std must be ≥ 0 and smoothing > 0".into()));
    }
    let objective = TransferObjective::new(data_o, data_t, kind, lambda)?
        .with_smoothing(T::of(options.smoothing))
        .with_intercept_penalty(options.penalize_intercept);
    let layout = objective.layout();
    let off = layout.transfer_offset();
    // BFGS runs on standardized attributes: parameters are `p = D·p̃` with D built
    // from column spreads, which leaves the objective and its minima unchanged.
    let spread_o = column_spread(&data_o.relative_values);
    let spread_t = column_spread(&data_t.relative_values);
    let mut d = vec![T::one(); layout.len()];
    for (j, &s) in spread_o.iter().enumerate() {
        d[j] = T::one() / s;
        if kind == TransferKind::Subspace {
            d[off + j] = T::one() / s;
        }
    }
    if kind == TransferKind::Attributes {
        let nt = layout.n_target;
        for (i, &so) in spread_o.iter().enumerate() {
            for (j, &st) in spread_t.iter().enumerate() {
                d[off + i * nt + j] = so / st;
            }
        }
    }
    // draws are taken in the standardized coordinates; transfer draws perturb the identity
    let mut x0 = initial_parameters::<T>(layout.len(), options.init_std, seed);
    for (k, v) in objective.identity_parameters().into_iter().enumerate() {
        x0[off + k] = x0[off + k] + v / d[off + k];
    }
    let scaled = Rescaled {
        inner: &objective,
        d: &d,
    };
    let mut min_opts = options.minimize;
    min_opts.seed = seed;
    let found = minimize(&scaled, &x0, &min_opts)?;
    let params: Vec<T> = found.solution.iter().zip(&d).map(|(&x, &s)| x * s).collect();
    let original = objective.original_of(&params)?;
    let transfer = objective.transfer_of(&params)?;
    let derived_target = apply_affine(&transfer, &original)?;
    let report = found.report;
    let mut fit = TransferFit {
        kind,
        unidentifiable: unidentifiable_entries(kind, &original),
        loss_breakdown: objective.breakdown(&params)?,
        original,
        transfer,
        derived_target,
        lambda,
        convergence: Convergence {
            iterations: report.iterations,
            function_evaluations: report.function_evaluations,
            final_gradient_norm: report.final_gradient_norm,
            converged: report.converged,
            line_search_failed: report.line_search_failed,
            seed,
        },
        penalize_intercept: options.penalize_intercept,
        init_std: T::of(options.init_std),
        smoothing: T::of(options.smoothing),
        snap: None,
    };
    let thresholds = match options.snap {
        Snap::Off => None,
        Snap::Defaults => Some(SnapThresholds::defaults_for(&fit.original)),
        Snap::Custom(t) => Some(t),
    };
    if let Some(t) = thresholds {
        fit = snap_sparse(&fit, &t)?;
        fit.refresh_losses(data_o, data_t)?;
    }
    Ok(fit)
}

struct Rescaled<'a, T: Scalar> {
    inner: &'a TransferObjective<'a, T>,
    d: &'a [T],
}

impl<T: Scalar> Objective<T> for Rescaled<'_, T> {
    fn value(&self, x: &[T]) -> T {
        self.value_and_gradient(x).0
    }

    fn value_and_gradient(&self, x: &[T]) -> (T, Vec<T>) {
        let p: Vec<T> = x.iter().zip(self.d).map(|(&a, &b)| a * b).collect();
        let (v, g) = self.inner.value_and_gradient(&p);
        (v, g.iter().zip(self.d).map(|(&a, &b)| a * b).collect())
    }
}

/// Root-mean-square of each centered column, 1 for constant columns.
fn column_spread<T: Scalar>(relative: &Matrix<T>) -> Vec<T> {
    let rows = T::of(relative.rows().max(1) as f64);
    (0..relative.cols())
        .map(|j| {
            let ss = relative.row_iter().fold(T::zero(), |acc, r| acc + r[j] * r[j]);
            let s = (ss / rows).sqrt();
            if s > T::zero() && s.is_finite() {
                s
            } else {
                T::one()
            }
        })
        .collect()
}

/// Independent draws from `N(0, std²)`, reproducible per seed.
pub fn initial_parameters<T: Scalar>(len: usize, std: f64, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("finite non-negative std");
    (0..len).map(|_| T::of(normal.sample(&mut rng))).collect()
}

fn unidentifiable_entries<T: Scalar>(kind: TransferKind, original: &LinearExplainer<T>) -> Vec<usize> {
    if kind != TransferKind::Task {
        return Vec::new();
    }
    let tiny = T::of(1e-6);
    original
        .extended_factors()
        .iter()
        .enumerate()
        .filter(|(_, w)| w.abs() <= tiny)
        .map(|(i, _)| i)
        .collect()
}

/// Rounds near-identity transfer entries to exact identity.
///
/// Mapping entries are only ever moved toward their own sparsity target (0, or 1
/// on paired shared attributes), so the exact sparsity loss cannot grow. Loss
/// terms that need data are left for [`TransferFit::refresh_losses`].
pub fn snap_sparse<T: Scalar>(fit: &TransferFit<T>, thresholds: &SnapThresholds<T>) -> Result<TransferFit<T>> {
    let SnapThresholds {
        delta_eps,
        scale_eps,
        map_eps,
    } = *thresholds;
    if delta_eps < T::zero() || scale_eps < T::zero() || map_eps < T::zero() {
        return Err(Error::InvalidArgument("snap thresholds must be non-negative".into()));
    }
    let mut out = fit.clone();
    match &mut out.transfer.params {
        TransferParams::Translation { delta } => {
            for d in delta.iter_mut().filter(|d| d.abs() <= delta_eps) {
                *d = T::zero();
            }
        }
        TransferParams::Scaling { kappa } => {
            for k in kappa.iter_mut().filter(|k| (**k - T::one()).abs() <= scale_eps) {
                *k = T::one();
            }
        }
        TransferParams::Mapping { m_chi, partition } => {
            for i in 0..m_chi.rows() {
                for j in 0..m_chi.cols() {
                    let m = m_chi[(i, j)];
                    if partition.is_identity_entry(i, j) {
                        if (m - T::one()).abs() <= map_eps {
                            m_chi[(i, j)] = T::one();
                        }
                    } else if m.abs() <= map_eps {
                        m_chi[(i, j)] = T::zero();
                    }
                }
            }
        }
    }
    out.derived_target = apply_affine(&out.transfer, &out.original)?;
    out.loss_breakdown.l_sparsity = sparsity_loss_with(&out.transfer, out.penalize_intercept);
    out.snap = Some(*thresholds);
    Ok(out)
}

/// Fits every λ of a grid concurrently; results come back in grid order.
pub fn fit_transfer_grid<T: Scalar>(
    data_o: &CenteredDataset<T>,
    data_t: &CenteredDataset<T>,
    kind: TransferKind,
    lambdas: &[T],
    seed: u64,
    options: &FitOptions<T>,
) -> Result<Vec<TransferFit<T>>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = lambdas
            .iter()
            .map(|&lambda| scope.spawn(move || fit_transfer_with(data_o, data_t, kind, lambda, seed, options)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fit thread panicked"))
            .collect()
    })
}

/// Index of the most faithful fit (smallest `L_O + L_T`); ties go to the larger λ.
pub fn most_faithful<T: Scalar>(fits: &[TransferFit<T>]) -> Option<usize> {
    (0..fits.len()).min_by(|&a, &b| {
        let fa = fits[a].loss_breakdown.faithfulness();
        let fb = fits[b].loss_breakdown.faithfulness();
        fa.partial_cmp(&fb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(fits[b].lambda.partial_cmp(&fits[a].lambda).unwrap_or(std::cmp::Ordering::Equal))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Domain;
    use crate::schema::AttributeSchema;

    fn dataset(rows: &[Vec<f64>], preds: Vec<f64>) -> CenteredDataset<f64> {
        let raw = Matrix::from_rows(rows).unwrap();
        let names: Vec<String> = (0..raw.cols()).map(|i| format!("x{i}")).collect();
        CenteredDataset::from_raw(AttributeSchema::from_names(&names).unwrap(), &raw, preds, Domain::Original).unwrap()
    }

    fn grid_rows(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![(i % 7) as f64 - 3.0, ((i * 5) % 11) as f64 * 0.5 - 2.0]).collect()
    }

    #[test]
    fn fit_single_exact_linear() {
        let rows = grid_rows(40);
        let ds = dataset(&rows, vec![0.0; 40]);
        let preds: Vec<f64> = ds.relative_values.row_iter().map(|r| 2.0 * r[0] - 3.0 * r[1] + 5.0).collect();
        let ds = CenteredDataset { blackbox_predictions: preds, ..ds };
        let e = fit_single(&ds).unwrap();
        assert!((e.factors[0] - 2.0).abs() < 1e-8);
        assert!((e.factors[1] + 3.0).abs() < 1e-8);
        assert!((e.centroid_label - 5.0).abs() < 1e-8);
    }

    #[test]
    fn fit_single_constant_predictions() {
        let ds = dataset(&grid_rows(20), vec![7.5; 20]);
        let e = fit_single(&ds).unwrap();
        assert!(e.factors.iter().all(|w| w.abs() < 1e-12));
        assert!((e.centroid_label - 7.5).abs() < 1e-12);
    }

    #[test]
    fn fit_single_needs_enough_rows() {
        let ds = dataset(&grid_rows(2), vec![1.0, 2.0]);
        assert!(fit_single(&ds).is_err());
    }

    #[test]
    fn fit_single_rank_deficient_reports_rank() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let preds: Vec<f64> = (0..10).map(|i| 5.0 * i as f64).collect();
        let (e, sol) = fit_single_with_report(&dataset(&rows, preds)).unwrap();
        assert!(sol.is_rank_deficient());
        // min-norm split of 5 = a + 2b is (1, 2)
        assert!((e.factors[0] - 1.0).abs() < 1e-9);
        assert!((e.factors[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sparsity_loss_examples() {
        assert_eq!(sparsity_loss(&AffineTransfer::translation(vec![0.0, 0.0, 3.0])), 3.0);
        let s = sparsity_loss(&AffineTransfer::scaling(vec![1.0f64, 1.0, 0.2, -0.2]));
        assert!((s - 2.0).abs() < 1e-12);
        assert_eq!(sparsity_loss_with(&AffineTransfer::translation(vec![0.0, 0.0, 3.0]), false), 0.0);
        let ident = AffineTransfer::<f64>::identity(TransferKind::Attributes, 3);
        assert_eq!(sparsity_loss(&ident), 0.0);
    }

    #[test]
    fn loss_total_perfect_fit() {
        let rows = grid_rows(30);
        let base = dataset(&rows, vec![0.0; 30]);
        let w = [1.5, -0.5];
        let y: Vec<f64> = base.relative_values.row_iter().map(|r| w[0] * r[0] + w[1] * r[1] + 2.0).collect();
        let o = CenteredDataset { blackbox_predictions: y.clone(), ..base.clone() };
        let t = CenteredDataset { blackbox_predictions: y, ..base };
        let params = [1.5, -0.5, 2.0, 0.0, 0.0, 0.0];
        assert_eq!(loss_total(&params, &o, &t, TransferKind::Subspace, 0.0).unwrap(), 0.0);

        // scaled target, κ = (2, 0, 1): L_s = 1 + 1 + 0 = 2, perfect data fit
        let y_t: Vec<f64> = o.relative_values.row_iter().map(|r| 2.0 * w[0] * r[0] + 2.0).collect();
        let t = CenteredDataset { blackbox_predictions: y_t, ..o.clone() };
        let params = [1.5, -0.5, 2.0, 2.0, 0.0, 1.0];
        let total = loss_total(&params, &o, &t, TransferKind::Task, 10.0).unwrap();
        assert!((total - 20.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn non_finite_parameter_is_reported_by_index() {
        let ds = dataset(&grid_rows(10), vec![1.0; 10]);
        let params = [0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0];
        match loss_total(&params, &ds, &ds, TransferKind::Subspace, 1.0) {
            Err(Error::NonFinite(msg)) => assert_eq!(msg, "parameter 1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn smoothed_abs_gradient_vanishes_at_zero() {
        let ds = dataset(&grid_rows(10), vec![0.0; 10]);
        let obj = TransferObjective::new(&ds, &ds, TransferKind::Subspace, 1.0).unwrap();
        let g = gradient(&obj, &[0.0; 6]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn snapping_respects_bands() {
        let ds = dataset(&grid_rows(12), (0..12).map(f64::from).collect());
        let mut fit = fit_transfer(&ds, &ds, TransferKind::Task, 0.1, 3).unwrap();
        fit.transfer.params = TransferParams::Scaling {
            kappa: vec![1.004, 1.6, 1.0],
        };
        let th = SnapThresholds {
            delta_eps: 0.0,
            scale_eps: 0.05,
            map_eps: 0.02,
        };
        let snapped = snap_sparse(&fit, &th).unwrap();
        match &snapped.transfer.params {
            TransferParams::Scaling { kappa } => assert_eq!(kappa, &vec![1.0, 1.6, 1.0]),
            _ => unreachable!(),
        }
        assert_eq!(snapped.derived_target, apply_affine(&snapped.transfer, &snapped.original).unwrap());
        let bad = SnapThresholds { scale_eps: -1.0, ..th };
        assert!(snap_sparse(&fit, &bad).is_err());
    }

    #[test]
    fn negative_lambda_rejected() {
        let ds = dataset(&grid_rows(10), vec![1.0; 10]);
        assert!(fit_transfer(&ds, &ds, TransferKind::Task, -1.0, 0).is_err());
    }

    #[test]
    fn initial_parameters_are_seeded() {
        let a: Vec<f64> = initial_parameters(50, 0.1, 42);
        let b: Vec<f64> = initial_parameters(50, 0.1, 42);
        let c: Vec<f64> = initial_parameters(50, 0.1, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let var = a.iter().map(|v| v * v).sum::<f64>() / 50.0;
        assert!(var > 0.002 && var < 0.03, "{var}");
    }
}
