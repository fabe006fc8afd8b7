//! `xferxai`: fit linear explainers, learn transfers between them, and export what the viewer reads.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use xferxai::algebra::{compose, to_homogeneous, HomogeneousTransform};
use xferxai::evaluate::{cross_validate, held_out, kfold_indices, CrossValidation, HeldOut, DEFAULT_FOLDS};
use xferxai::explain::{explain_transferred, render_explanation, FormulaMode};
use xferxai::io::{check_version, save_json, write_text};
use xferxai::metrics::MeanStd;
use xferxai::preprocess::{data_root, load_dataset, CenteredDataset, Dataset, DatasetManifest, Domain};
use xferxai::trainer::{fit_single, fit_transfer_grid, most_faithful, snap_sparse, FitOptions, Snap, SnapThresholds};
use xferxai::{
    explain_instance, export_ui_bundle, format_mapping_formula, train_mlp, Activation, AffineTransfer, LinearExplainer,
    Matrix, MlpConfig, TransferFit, TransferKind, TransferParams,
};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] xferxai::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use xferxai::Error as E;
        match self {
            CliError::Core(
                E::NonFinite(_) | E::ZeroVariance(_) | E::Undefined(_) | E::Optimization(_) | E::EmptyDataset,
            ) => 1,
            _ => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser)]
#[command(name = "xferxai", version, about = "Transferable linear explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a single-domain explainer and report held-out faithfulness.
    Fit(FitArgs),
    /// Jointly fit an Original explainer and its transfer to the Target domain.
    Transfer(TransferArgs),
    /// Multiply transfers into one homogeneous transform, first listed applied first.
    Compose(ComposeArgs),
    /// k-fold faithfulness of single versus transferable explainers.
    Evaluate(EvaluateArgs),
    /// Explain attribute values read from standard input, one instance per line.
    Simulate(SimulateArgs),
    /// Write the document the viewer loads.
    Export(ExportArgs),
    /// Train the reference network on the manifest's label columns.
    TrainMlp(TrainMlpArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RowDomain {
    All,
    Original,
    Target,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Subspace,
    Task,
    Attributes,
}

impl From<KindArg> for TransferKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Subspace => TransferKind::Subspace,
            KindArg::Task => TransferKind::Task,
            KindArg::Attributes => TransferKind::Attributes,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    domain: RowDomain,
    /// Prediction column to explain.
    #[arg(long, default_value_t = 0)]
    task: usize,
    /// Fit on the target attribute view instead of the main attributes.
    #[arg(long)]
    target_view: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// The held-out split is one of this many folds.
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SnapArgs {
    /// Translation entries at or below this magnitude become 0 (default 1% of the median |w_O|).
    #[arg(long)]
    snap_delta_eps: Option<f64>,
    /// Scales within this distance of 1 become 1.
    #[arg(long)]
    snap_scale_eps: Option<f64>,
    /// Mapping entries within this distance of their identity value snap to it.
    #[arg(long)]
    snap_map_eps: Option<f64>,
    #[arg(long, conflicts_with_all = ["snap_delta_eps", "snap_scale_eps", "snap_map_eps"])]
    no_snap: bool,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "lambda_grid", required_unless_present = "lambda_grid")]
    lambda: Option<f64>,
    /// Comma-separated λ values; the most faithful fit is written.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    snap: SnapArgs,
    /// Leave the centroid entry of the transfer out of the sparsity penalty.
    #[arg(long)]
    free_intercept: bool,
    #[arg(long, default_value_t = 3000)]
    max_iter: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ComposeArgs {
    /// Transfer-fit, transfer, or homogeneous documents in application order.
    #[arg(long = "fit", required = true, num_args = 1..)]
    fits: Vec<PathBuf>,
    /// Apply the listed documents last-to-first instead.
    #[arg(long)]
    reverse: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// A transfer-fit document, or an explainer document from `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// A transfer-fit document or an explainer document.
    #[arg(long)]
    fit: PathBuf,
    /// Which explainer of a transfer fit to use.
    #[arg(long, value_enum, default_value = "target")]
    domain: ExplainerSide,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExplainerSide {
    Original,
    Target,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Target-domain rows to include (0-based); defaults to the first `max_instances`.
    #[arg(long, value_delimiter = ',')]
    rows: Option<Vec<usize>>,
    #[arg(long, default_value_t = 20)]
    max_instances: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainMlpArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "tanh")]
    activation: ActivationArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ActivationArg {
    Tanh,
    Relu,
}

/// Output of `fit`.
#[derive(Serialize, Deserialize)]
struct ExplainerDoc {
    document: String,
    explainer: LinearExplainer<f64>,
    report: FitReport,
}

#[derive(Serialize, Deserialize)]
struct FitReport {
    r2: f64,
    mse: f64,
    train_rows: usize,
    test_rows: usize,
    split_seed: u64,
    folds: usize,
    task: usize,
    domain: RowDomain,
    target_view: bool,
}

#[derive(Serialize, Deserialize)]
struct GridRow {
    lambda: f64,
    l_original: f64,
    l_target: f64,
    l_sparsity: f64,
    total: f64,
    converged: bool,
}

/// Output of `transfer`.
#[derive(Serialize, Deserialize)]
struct TransferDoc {
    document: String,
    fit: TransferFit<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<GridRow>>,
}

#[derive(Serialize, Deserialize)]
struct Verification {
    factors: Vec<f64>,
    centroid: f64,
    sequential_factors: Vec<f64>,
    sequential_centroid: f64,
    composite_factors: Vec<f64>,
    composite_centroid: f64,
    max_abs_difference: f64,
    passed: bool,
}

#[derive(Serialize, Deserialize)]
struct ComposeDoc {
    document: String,
    order: Vec<String>,
    composite: HomogeneousTransform<f64>,
    verification: Verification,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EvaluationBody {
    Transfer(CrossValidation),
    Fixed { domain: String, folds: Vec<HeldOut> },
}

#[derive(Serialize, Deserialize)]
struct EvaluateDoc {
    document: String,
    folds: usize,
    seed: u64,
    fold_sizes: Vec<usize>,
    evaluation: EvaluationBody,
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_dataset(manifest_path: &Path) -> CliResult<Dataset<f64>> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = data_root(&manifest_dir(manifest_path));
    Ok(load_dataset(&manifest, &root)?)
}

fn select_centered(data: &Dataset<f64>, domain: RowDomain, task: usize, target_view: bool) -> CliResult<CenteredDataset<f64>> {
    let rows: Vec<usize> = match domain {
        RowDomain::All => (0..data.len()).collect(),
        RowDomain::Original => (0..data.len()).filter(|&i| data.domain_ids[i] == Domain::Original).collect(),
        RowDomain::Target => (0..data.len()).filter(|&i| data.domain_ids[i] == Domain::Target).collect(),
    };
    if rows.is_empty() {
        return Err(usage(format!("no rows in the {domain:?} domain")));
    }
    let subset = data.subset(&rows);
    Ok(if target_view {
        subset.centered_target_view()?
    } else {
        subset.centered(task)?
    })
}

fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let data = read_dataset(&a.manifest)?;
    let folds = kfold_indices(data.len(), a.folds, a.seed)?;
    let test_rows = &folds[0];
    let train_rows: Vec<usize> = (0..data.len()).filter(|i| test_rows.binary_search(i).is_err()).collect();
    let train = select_centered(&data.subset(&train_rows), a.domain, a.task, a.target_view)?;
    let test = select_centered(&data.subset(test_rows), a.domain, a.task, a.target_view)?;
    let explainer = fit_single(&train)?;
    let h = held_out(&explainer, &test)?;
    println!("held-out R2 = {:.6}  MSE = {:.6}  ({} train / {} test rows)", h.r2, h.mse, train.len(), test.len());
    let doc = ExplainerDoc {
        document: "explainer".into(),
        explainer,
        report: FitReport {
            r2: h.r2,
            mse: h.mse,
            train_rows: train.len(),
            test_rows: test.len(),
            split_seed: a.seed,
            folds: a.folds,
            task: a.task,
            domain: a.domain,
            target_view: a.target_view,
        },
    };
    save_json(&a.out, &doc)?;
    Ok(())
}

impl SnapArgs {
    fn is_custom(&self) -> bool {
        self.snap_delta_eps.is_some() || self.snap_scale_eps.is_some() || self.snap_map_eps.is_some()
    }

    /// Defaults for the fitted explainer, overridden by whichever thresholds were given.
    fn thresholds_for(&self, original: &LinearExplainer<f64>) -> SnapThresholds<f64> {
        let d = SnapThresholds::defaults_for(original);
        SnapThresholds {
            delta_eps: self.snap_delta_eps.unwrap_or(d.delta_eps),
            scale_eps: self.snap_scale_eps.unwrap_or(d.scale_eps),
            map_eps: self.snap_map_eps.unwrap_or(d.map_eps),
        }
    }
}

fn cmd_transfer(a: &TransferArgs) -> CliResult<()> {
    let lambdas: Vec<f64> = match (&a.lambda, &a.lambda_grid) {
        (Some(l), None) => vec![*l],
        (None, Some(g)) if !g.is_empty() => g.clone(),
        _ => return Err(usage("give --lambda or a non-empty --lambda-grid")),
    };
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(usage(format!("lambda must be a finite value ≥ 0, got {bad}")));
    }
    for eps in [a.snap.snap_delta_eps, a.snap.snap_scale_eps, a.snap.snap_map_eps].into_iter().flatten() {
        if !(eps >= 0.0) {
            return Err(usage(format!("snap thresholds must be ≥ 0, got {eps}")));
        }
    }
    let kind: TransferKind = a.kind.into();
    let data = read_dataset(&a.manifest)?;
    let pair = data.domain_pair(kind)?;
    let mut opts = FitOptions::<f64>::default();
    opts.penalize_intercept = !a.free_intercept;
    opts.minimize.max_iter = a.max_iter;
    opts.snap = if a.snap.no_snap || a.snap.is_custom() { Snap::Off } else { Snap::Defaults };
    let mut fits = fit_transfer_grid(&pair.original, &pair.target, kind, &lambdas, a.seed, &opts)?;
    if a.snap.is_custom() {
        for f in &mut fits {
            *f = snap_sparse(f, &a.snap.thresholds_for(&f.original))?;
            f.refresh_losses(&pair.original, &pair.target)?;
        }
    }
    for f in &fits {
        if !f.convergence.converged {
            eprintln!(
                "warning: λ = {} stopped after {} iterations with gradient norm {:.3e}",
                f.lambda, f.convergence.iterations, f.convergence.final_gradient_norm
            );
        }
    }
    let grid = if a.lambda_grid.is_some() {
        println!("lambda\tL_O\tL_T\tL_s\ttotal");
        let rows: Vec<GridRow> = fits
            .iter()
            .map(|f| {
                let b = &f.loss_breakdown;
                println!("{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}", f.lambda, b.l_original, b.l_target, b.l_sparsity, f.total_loss());
                GridRow {
                    lambda: f.lambda,
                    l_original: b.l_original,
                    l_target: b.l_target,
                    l_sparsity: b.l_sparsity,
                    total: f.total_loss(),
                    converged: f.convergence.converged,
                }
            })
            .collect();
        Some(rows)
    } else {
        None
    };
    let best = most_faithful(&fits).expect("at least one λ");
    let fit = fits.swap_remove(best);
    println!("selected λ = {}: {}", fit.lambda, describe_transfer(&fit));
    save_json(
        &a.out,
        &TransferDoc {
            document: "transfer_fit".into(),
            fit,
            grid,
        },
    )?;
    Ok(())
}

fn describe_transfer(fit: &TransferFit<f64>) -> String {
    let nums = |v: &[f64]| v.iter().map(|x| xferxai::explain::format_sig(*x, 3)).collect::<Vec<_>>().join(", ");
    match &fit.transfer.params {
        TransferParams::Translation { delta } => format!("delta = ({})", nums(delta)),
        TransferParams::Scaling { kappa } => format!("kappa = ({})", nums(kappa)),
        TransferParams::Mapping { m_chi, .. } => format!("{}×{} mapping", m_chi.rows(), m_chi.cols()),
    }
}

/// A document usable in `compose`, with the explainer it starts from when known.
struct Step {
    transform: HomogeneousTransform<f64>,
    start: Option<LinearExplainer<f64>>,
}

fn read_versioned(path: &Path) -> CliResult<Value> {
    let text = xferxai::io::read_text(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| xferxai::Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let version = value
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| usage(format!("{}: missing format_version", path.display())))?;
    check_version(version as u32)?;
    Ok(value)
}

fn parse_doc<D: serde::de::DeserializeOwned>(path: &Path, value: Value) -> CliResult<D> {
    serde_json::from_value(value).map_err(|e| {
        CliError::Core(xferxai::Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    })
}

fn read_step(path: &Path) -> CliResult<Step> {
    let value = read_versioned(path)?;
    match value.get("document").and_then(Value::as_str) {
        Some("transfer_fit") => {
            let doc: TransferDoc = parse_doc(path, value)?;
            Ok(Step {
                transform: to_homogeneous(&doc.fit.transfer)?,
                start: Some(doc.fit.original),
            })
        }
        Some("composite") => {
            let doc: ComposeDoc = parse_doc(path, value)?;
            Ok(Step {
                transform: doc.composite,
                start: None,
            })
        }
        _ if value.get("matrix").is_some() => Ok(Step {
            transform: parse_doc(path, value)?,
            start: None,
        }),
        _ if value.get("variant").is_some() => {
            let t: AffineTransfer<f64> = parse_doc(path, value)?;
            Ok(Step {
                transform: to_homogeneous(&t)?,
                start: None,
            })
        }
        _ => Err(usage(format!("{}: not a transfer, transfer-fit, or homogeneous document", path.display()))),
    }
}

fn cmd_compose(a: &ComposeArgs) -> CliResult<()> {
    let mut paths = a.fits.clone();
    if a.reverse {
        paths.reverse();
    }
    let steps = paths.iter().map(|p| read_step(p)).collect::<CliResult<Vec<_>>>()?;
    let slots = steps[0].transform.factor_slots();
    if let Some((i, s)) = steps.iter().enumerate().find(|(_, s)| s.transform.factor_slots() != slots) {
        return Err(usage(format!(
            "{} acts on {} factors but {} acts on {}; embed both in a shared attribute layout first \
             (attribute alignment across schemas is not inferred)",
            paths[i].display(),
            s.transform.factor_slots(),
            paths[0].display(),
            slots
        )));
    }
    let mut composite = steps[0].transform.clone();
    for s in &steps[1..] {
        composite = compose(&s.transform, &composite)?;
    }

    let (factors, centroid) = match &steps[0].start {
        Some(e) if e.len() == slots => (e.factors.clone(), e.centroid_label),
        _ => ((1..=slots).map(|i| i as f64).collect(), 1.0),
    };
    let mut seq = (factors.clone(), centroid);
    for s in &steps {
        seq = s.transform.apply(&seq.0, seq.1)?;
    }
    let direct = composite.apply(&factors, centroid)?;
    let diff = seq
        .0
        .iter()
        .zip(&direct.0)
        .map(|(a, b)| (a - b).abs())
        .chain(std::iter::once((seq.1 - direct.1).abs()))
        .fold(0.0, f64::max);
    let scale = seq.0.iter().chain(std::iter::once(&seq.1)).fold(1.0f64, |m, v| m.max(v.abs()));
    let passed = diff <= 1e-12 * scale;
    println!("composite of {} transforms; sequential vs composite max |Δ| = {diff:.3e} ({})", steps.len(), if passed { "ok" } else { "MISMATCH" });
    let doc = ComposeDoc {
        document: "composite".into(),
        order: paths.iter().map(|p| p.display().to_string()).collect(),
        composite,
        verification: Verification {
            factors,
            centroid,
            sequential_factors: seq.0,
            sequential_centroid: seq.1,
            composite_factors: direct.0,
            composite_centroid: direct.1,
            max_abs_difference: diff,
            passed,
        },
    };
    save_json(&a.out, &doc)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Core(xferxai::Error::NonFinite("composite disagrees with sequential application".into())))
    }
}

enum Loaded {
    Transfer(TransferDoc),
    Explainer(ExplainerDoc),
}

fn read_fit(path: &Path) -> CliResult<Loaded> {
    let value = read_versioned(path)?;
    match value.get("document").and_then(Value::as_str) {
        Some("transfer_fit") => Ok(Loaded::Transfer(parse_doc(path, value)?)),
        Some("explainer") => Ok(Loaded::Explainer(parse_doc(path, value)?)),
        _ => Err(usage(format!("{}: expected a transfer-fit or explainer document", path.display()))),
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let data = read_dataset(&a.manifest)?;
    let splits = kfold_indices(data.len(), a.folds, a.seed)?;
    let evaluation = match read_fit(&a.fit)? {
        Loaded::Transfer(doc) => {
            let fit = doc.fit;
            let mut opts = FitOptions::<f64>::default();
            opts.penalize_intercept = fit.penalize_intercept;
            opts.init_std = fit.init_std;
            opts.smoothing = fit.smoothing;
            opts.snap = if fit.snap.is_some() { Snap::Defaults } else { Snap::Off };
            let cv = cross_validate(&data, fit.kind, fit.lambda, a.folds, a.seed, &opts)?;
            print!("{}", cv.table()?);
            EvaluationBody::Transfer(cv)
        }
        Loaded::Explainer(doc) => {
            let r = &doc.report;
            let mut folds = Vec::new();
            for test in &splits {
                let centered = select_centered(&data.subset(test), r.domain, r.task, r.target_view)?;
                folds.push(held_out(&doc.explainer, &centered)?);
            }
            let r2: Vec<f64> = folds.iter().map(|h| h.r2).collect();
            let m: Vec<f64> = folds.iter().map(|h| h.mse).collect();
            println!("R2\t{}", MeanStd::of(&r2)?);
            println!("MSE\t{}", MeanStd::of(&m)?);
            EvaluationBody::Fixed {
                domain: format!("{:?}", r.domain).to_lowercase(),
                folds,
            }
        }
    };
    save_json(
        &a.out,
        &EvaluateDoc {
            document: "evaluation".into(),
            folds: a.folds,
            seed: a.seed,
            fold_sizes: splits.iter().map(Vec::len).collect(),
            evaluation,
        },
    )?;
    Ok(())
}

/// "v1, v2 v3 | ŷ": values separated by commas or spaces, optionally followed by the system prediction.
fn parse_line(line: &str, n: usize) -> CliResult<(Vec<f64>, Option<f64>)> {
    let (values, system) = match line.split_once('|') {
        Some((v, s)) => (v, Some(s.trim())),
        None => (line, None),
    };
    let parse = |tok: &str| -> CliResult<f64> {
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| usage(format!("cannot parse {tok:?} as a number")))
    };
    let parsed = values
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(parse)
        .collect::<CliResult<Vec<f64>>>()?;
    if parsed.len() != n {
        return Err(usage(format!("expected {n} values, got {}", parsed.len())));
    }
    let system = system.map(parse).transpose()?;
    Ok((parsed, system))
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let loaded = read_fit(&a.fit)?;
    let explainer = match (&loaded, a.domain) {
        (Loaded::Transfer(d), ExplainerSide::Target) => &d.fit.derived_target,
        (Loaded::Transfer(d), ExplainerSide::Original) => &d.fit.original,
        (Loaded::Explainer(d), _) => &d.explainer,
    };
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    let mut first = true;
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| xferxai::Error::Io {
            path: PathBuf::from("<stdin>"),
            source: e,
        })?;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (values, system) = parse_line(&line, explainer.len())?;
        let e = match (&loaded, a.domain) {
            (Loaded::Transfer(d), ExplainerSide::Target) => explain_transferred(&d.fit, &values, system)?,
            _ => explain_instance(explainer, &values, system)?,
        };
        if !first {
            writeln!(stdout).ok();
        }
        first = false;
        write!(stdout, "{}", render_explanation(&explainer.schema, &e)).ok();
        if let (Loaded::Transfer(d), ExplainerSide::Target) = (&loaded, a.domain) {
            if let TransferParams::Mapping { m_chi, .. } = &d.fit.transfer.params {
                for i in 0..m_chi.rows() {
                    if let Ok(f) = format_mapping_formula(m_chi, &d.fit.original.schema, &d.fit.derived_target.schema, i, FormulaMode::Values) {
                        writeln!(stdout, "{f}").ok();
                    }
                }
            }
        }
    }
    Ok(())
}

fn cmd_export(a: &ExportArgs) -> CliResult<()> {
    let fit = match read_fit(&a.fit)? {
        Loaded::Transfer(d) => d.fit,
        Loaded::Explainer(_) => return Err(usage("export needs a transfer-fit document")),
    };
    let data = read_dataset(&a.manifest)?;
    let target = data.domain_pair(fit.kind)?.target;
    let raw = target.raw_values();
    let rows: Vec<usize> = match &a.rows {
        Some(r) => r.clone(),
        None => (0..raw.rows().min(a.max_instances)).collect(),
    };
    if let Some(bad) = rows.iter().find(|&&r| r >= raw.rows()) {
        return Err(usage(format!("row {bad} out of range ({} target rows)", raw.rows())));
    }
    let instances: Vec<Vec<f64>> = rows.iter().map(|&r| raw.row(r).to_vec()).collect();
    let system: Vec<f64> = rows.iter().map(|&r| target.blackbox_predictions[r]).collect();
    let bundle = export_ui_bundle(&fit, &instances, &system, fit.kind)?;
    let text = serde_json::to_string_pretty(&bundle).map_err(xferxai::Error::from)? + "\n";
    write_text(&a.out, &text)?;
    println!("wrote {} instances to {}", bundle.instances.len(), a.out.display());
    Ok(())
}

fn cmd_train_mlp(a: &TrainMlpArgs) -> CliResult<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let label_names = manifest
        .label
        .as_ref()
        .map(|l| l.to_vec())
        .ok_or_else(|| usage("train-mlp needs `label` columns in the manifest"))?;
    let mut stripped = manifest.clone();
    // labels are the training targets; predictions are not needed yet
    stripped.predictions = Some(xferxai::preprocess::OneOrMany::Many(label_names.clone()));
    stripped.predictions_file = None;
    stripped.predictor = None;
    stripped.target_predictor = None;
    let root = data_root(&manifest_dir(&a.manifest));
    let data = load_dataset::<f64>(&stripped, &root)?;
    let labels: Vec<Vec<f64>> = (0..data.len())
        .map(|i| data.predictions.iter().map(|(_, v)| v[i]).collect())
        .collect();
    let labels = Matrix::from_rows(&labels)?;
    let config = MlpConfig {
        hidden: a.hidden,
        epochs: a.epochs,
        step: a.step,
        seed: a.seed,
        activation: match a.activation {
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Relu => Activation::Relu,
        },
    };
    let trained = train_mlp(&data.raw, &labels, &label_names, &config)?;
    let last = trained.loss_history.last().copied().unwrap_or(f64::NAN);
    println!("trained {} epochs; standardized training MSE {last:.6}", trained.loss_history.len());
    trained.spec.save(&a.out)?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Compose(a) => cmd_compose(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Export(a) => cmd_export(a),
        Command::TrainMlp(a) => cmd_train_mlp(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
