//! Per-instance explanations and the text shown for scales and mapping formulas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::algebra::{LinearExplainer, TransferKind, TransferParams};
use crate::error::{Error, Result};
use crate::io::FORMAT_VERSION;
use crate::linalg::Matrix;
use crate::schema::AttributeSchema;
use crate::scalar::{pairwise_sum, Scalar};
use crate::trainer::TransferFit;

/// Significant digits used for factors and scales in text output.
pub const DISPLAY_DIGITS: usize = 2;
/// Ratios within `1 + band` of 1 (either direction) display as "Similar".
pub const DEFAULT_SIMILAR_BAND: f64 = 0.05;
pub const MINUS: char = '\u{2212}';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Explanation<T: Scalar> {
    pub instance_raw: Vec<T>,
    pub relative_values: Vec<T>,
    pub factors: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_annotations: Option<Vec<String>>,
    pub partial_contributions: Vec<T>,
    pub centroid: T,
    pub explainer_estimate: T,
    pub system_prediction: Option<T>,
    pub percent_difference: Option<T>,
}

pub fn explain_instance<T: Scalar>(
    explainer: &LinearExplainer<T>,
    instance_raw: &[T],
    system_prediction: Option<T>,
) -> Result<Explanation<T>> {
    let relative = explainer.relative(instance_raw)?;
    let partials: Vec<T> = explainer.factors.iter().zip(&relative).map(|(&w, &x)| w * x).collect();
    let estimate = explainer.centroid_label + pairwise_sum(&partials);
    let percent = match system_prediction {
        Some(y) => Some(percent_difference(estimate, y)?),
        None => None,
    };
    Ok(Explanation {
        instance_raw: instance_raw.to_vec(),
        relative_values: relative,
        factors: explainer.factors.clone(),
        scale_annotations: None,
        partial_contributions: partials,
        centroid: explainer.centroid_label,
        explainer_estimate: estimate,
        system_prediction,
        percent_difference: percent,
    })
}

/// Explains an instance with the Target explainer of a fit; task fits also carry
/// the formatted scale of every factor.
pub fn explain_transferred<T: Scalar>(fit: &TransferFit<T>, instance_raw: &[T], system_prediction: Option<T>) -> Result<Explanation<T>> {
    let mut e = explain_instance(&fit.derived_target, instance_raw, system_prediction)?;
    if let TransferParams::Scaling { kappa } = &fit.transfer.params {
        let n = fit.derived_target.len();
        e.scale_annotations = Some(kappa[..n].iter().map(|&k| format_scale(k, DISPLAY_DIGITS)).collect());
    }
    Ok(e)
}

/// `100·(ỹ − ŷ)/ŷ`.
pub fn percent_difference<T: Scalar>(estimate: T, system: T) -> Result<T> {
    if system == T::zero() {
        return Err(Error::Undefined("percent difference against a zero system prediction".into()));
    }
    Ok(T::of(100.0) * (estimate - system) / system)
}

/// "15% Lower" style badge text.
pub fn format_percent<T: Scalar>(percent: T) -> String {
    let magnitude = format_sig(percent.abs().to_f64_lossy(), DISPLAY_DIGITS);
    match percent.partial_cmp(&T::zero()) {
        Some(std::cmp::Ordering::Less) => format!("{magnitude}% Lower"),
        Some(std::cmp::Ordering::Greater) => format!("{magnitude}% Higher"),
        _ => "0% Same".to_string(),
    }
}

/// Rounds to `digits` significant digits and drops trailing zeros.
pub fn format_sig(value: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if !value.is_finite() {
        return value.to_string();
    }
    if value == 0.0 {
        return "0".to_string();
    }
    // absorb representation noise such as 1/(1/x) before rounding
    let value: f64 = format!("{value:.12e}").parse().unwrap_or(value);
    let exponent = value.abs().log10().floor() as i32;
    let decimals = digits as i32 - 1 - exponent;
    let text = if decimals > 0 {
        format!("{:.*}", decimals as usize, value)
    } else {
        let unit = 10f64.powi(-decimals);
        format!("{:.0}", (value / unit).round() * unit)
    };
    let text = if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text
    };
    if text == "-0" {
        "0".to_string()
    } else {
        text
    }
}

pub fn format_scale<T: Scalar>(kappa: T, digits: usize) -> String {
    format_scale_with_band(kappa, digits, DEFAULT_SIMILAR_BAND)
}

/// Scale text: "5× Bigger", "5× Smaller", "1× Similar", with " (Opp)" for negative scales.
pub fn format_scale_with_band<T: Scalar>(kappa: T, digits: usize, band: f64) -> String {
    let k = kappa.to_f64_lossy();
    if k == 0.0 {
        return "0× (removed)".to_string();
    }
    if !k.is_finite() {
        return format!("{k}×");
    }
    let magnitude = k.abs();
    let ratio = magnitude.max(1.0 / magnitude);
    let body = if ratio <= 1.0 + band {
        "1× Similar".to_string()
    } else if magnitude > 1.0 {
        format!("{}× Bigger", format_sig(ratio, digits))
    } else {
        format!("{}× Smaller", format_sig(ratio, digits))
    };
    if k < 0.0 {
        body + " (Opp)"
    } else {
        body
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleDirection {
    Bigger,
    Smaller,
    Similar,
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleReading {
    /// The printed ratio, always ≥ 1 except for removed factors.
    pub ratio: f64,
    pub direction: ScaleDirection,
    pub opposite: bool,
}

impl ScaleReading {
    /// The signed scale the text stands for.
    pub fn kappa(&self) -> f64 {
        let magnitude = match self.direction {
            ScaleDirection::Bigger | ScaleDirection::Similar => self.ratio,
            ScaleDirection::Smaller => 1.0 / self.ratio,
            ScaleDirection::Removed => 0.0,
        };
        if self.opposite {
            -magnitude
        } else {
            magnitude
        }
    }
}

/// Inverse of [`format_scale`].
pub fn parse_scale(text: &str) -> Result<ScaleReading> {
    let bad = || Error::InvalidArgument(format!("not a scale annotation: {text:?}"));
    let trimmed = text.trim();
    let (body, opposite) = match trimmed.strip_suffix("(Opp)") {
        Some(rest) => (rest.trim_end(), true),
        None => (trimmed, false),
    };
    if body == "0× (removed)" {
        return Ok(ScaleReading {
            ratio: 0.0,
            direction: ScaleDirection::Removed,
            opposite,
        });
    }
    let (number, word) = body.split_once('×').ok_or_else(bad)?;
    let ratio: f64 = number.trim().parse().map_err(|_| bad())?;
    let direction = match word.trim() {
        "Bigger" => ScaleDirection::Bigger,
        "Smaller" => ScaleDirection::Smaller,
        "Similar" => ScaleDirection::Similar,
        _ => return Err(bad()),
    };
    Ok(ScaleReading {
        ratio,
        direction,
        opposite,
    })
}

/// Half a unit in the last printed digit of `ratio`.
pub fn display_tolerance(ratio: f64, digits: usize) -> f64 {
    if ratio == 0.0 {
        return 0.0;
    }
    let exponent = ratio.abs().log10().floor() as i32;
    0.5 * 10f64.powi(exponent - digits as i32 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormulaMode {
    Values,
    Factors,
}

impl std::str::FromStr for FormulaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "values" => Ok(FormulaMode::Values),
            "factors" => Ok(FormulaMode::Factors),
            other => Err(Error::InvalidArgument(format!("unknown formula mode {other:?}"))),
        }
    }
}

fn coefficient(value: f64) -> String {
    let text = format_sig(value.abs(), DISPLAY_DIGITS);
    if value < 0.0 && text != "0" {
        format!("({MINUS}{text})")
    } else {
        text
    }
}

/// Tooltip formula for one relation of `χ_O = M_χ·χ_T`.
///
/// Values mode reads row `index` (an Original attribute) as a combination of Target
/// values: "BMI = Weight (kg) × 0.3 + Height (cm) × (−0.2)". Factors mode reads
/// column `index` (a Target attribute) through the transpose:
/// "Weight (kg)'s Factor = BMI's Factor × 0.3".
pub fn format_mapping_formula<T: Scalar>(
    m_chi: &Matrix<T>,
    original: &AttributeSchema,
    target: &AttributeSchema,
    index: usize,
    mode: FormulaMode,
) -> Result<String> {
    if m_chi.shape() != (original.len(), target.len()) {
        return Err(Error::dims("mapping matrix shape", original.len() * target.len(), m_chi.rows() * m_chi.cols()));
    }
    let limit = match mode {
        FormulaMode::Values => original.len(),
        FormulaMode::Factors => target.len(),
    };
    if index >= limit {
        return Err(Error::InvalidArgument(format!("formula index {index} out of range {limit}")));
    }
    let terms: Vec<(String, f64)> = match mode {
        FormulaMode::Values => (0..target.len())
            .map(|j| (target.attribute(j).label(), m_chi[(index, j)].to_f64_lossy()))
            .collect(),
        FormulaMode::Factors => (0..original.len())
            .map(|i| (format!("{}'s Factor", original.attribute(i).label()), m_chi[(i, index)].to_f64_lossy()))
            .collect(),
    };
    let rhs: Vec<String> = terms
        .iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(label, c)| format!("{label} × {}", coefficient(*c)))
        .collect();
    if rhs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "mapping {} {index} has no nonzero entries",
            if mode == FormulaMode::Values { "row" } else { "column" }
        )));
    }
    Ok(match mode {
        FormulaMode::Values => format!("{} = {}", original.attribute(index).label(), rhs.join(" + ")),
        FormulaMode::Factors => format!("{} = {}'s Factor", rhs.join(" + "), target.attribute(index).label()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub enum BundleParameters<T> {
    Vector(Vec<T>),
    Matrix(Vec<Vec<T>>),
}

/// Display text for the transfer parameters. Translation and Scaling give one
/// entry per factor followed by the centroid; Mapping gives a formula per row and
/// per column, `null` where the row or column is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BundleFormatted {
    Entries(Vec<String>),
    Formulas {
        values: Vec<Option<String>>,
        factors: Vec<Option<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct BundleTransfer<T> {
    pub variant: String,
    pub parameters: BundleParameters<T>,
    pub formatted: BundleFormatted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct BundleInstance<T> {
    pub raw: Vec<T>,
    pub relative: Vec<T>,
    pub partials: Vec<T>,
    pub estimate: T,
    pub system: T,
    pub percent_diff: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayRange {
    pub min: f64,
    pub max: f64,
}

/// Self-contained document read by the viewer. Field names are a fixed contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct UiBundle<T: Scalar> {
    pub format_version: u32,
    pub kind: TransferKind,
    pub schema_original: AttributeSchema,
    pub schema_target: AttributeSchema,
    pub explainer_original: LinearExplainer<T>,
    pub explainer_target: LinearExplainer<T>,
    pub transfer: BundleTransfer<T>,
    /// Explained with the Target explainer.
    pub instances: Vec<BundleInstance<T>>,
    pub display: BTreeMap<String, DisplayRange>,
}

fn formatted_entries<T: Scalar>(values: &[T]) -> Vec<String> {
    values.iter().map(|v| format_sig(v.to_f64_lossy(), DISPLAY_DIGITS)).collect()
}

pub fn export_ui_bundle<T: Scalar>(
    fit: &TransferFit<T>,
    instances: &[Vec<T>],
    system_predictions: &[T],
    kind: TransferKind,
) -> Result<UiBundle<T>> {
    if kind != fit.kind || kind != fit.transfer.kind() {
        return Err(Error::InvalidArgument(format!(
            "bundle requested for {kind} but the fit is {}",
            fit.transfer.kind()
        )));
    }
    if instances.len() != system_predictions.len() {
        return Err(Error::dims("system predictions", instances.len(), system_predictions.len()));
    }
    fit.transfer.validate()?;
    let schema_original = fit.original.schema.clone();
    let schema_target = fit.derived_target.schema.clone();

    let (parameters, formatted) = match &fit.transfer.params {
        TransferParams::Translation { delta } => (BundleParameters::Vector(delta.clone()), BundleFormatted::Entries(formatted_entries(delta))),
        TransferParams::Scaling { kappa } => (
            BundleParameters::Vector(kappa.clone()),
            BundleFormatted::Entries(kappa.iter().map(|&k| format_scale(k, DISPLAY_DIGITS)).collect()),
        ),
        TransferParams::Mapping { m_chi, .. } => {
            let values = (0..m_chi.rows())
                .map(|i| format_mapping_formula(m_chi, &schema_original, &schema_target, i, FormulaMode::Values).ok())
                .collect();
            let factors = (0..m_chi.cols())
                .map(|j| format_mapping_formula(m_chi, &schema_original, &schema_target, j, FormulaMode::Factors).ok())
                .collect();
            (BundleParameters::Matrix(m_chi.to_rows()), BundleFormatted::Formulas { values, factors })
        }
    };

    let rendered = instances
        .iter()
        .zip(system_predictions)
        .map(|(raw, &y)| {
            let e = explain_instance(&fit.derived_target, raw, Some(y))?;
            Ok(BundleInstance {
                raw: e.instance_raw,
                relative: e.relative_values,
                partials: e.partial_contributions,
                estimate: e.explainer_estimate,
                system: y,
                percent_diff: e.percent_difference.expect("system prediction supplied"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut display = BTreeMap::new();
    for a in schema_original.attributes().iter().chain(schema_target.attributes()) {
        display.entry(a.name.clone()).or_insert(DisplayRange {
            min: a.display_min,
            max: a.display_max,
        });
    }

    Ok(UiBundle {
        format_version: FORMAT_VERSION,
        kind,
        schema_original,
        schema_target,
        explainer_original: fit.original.clone(),
        explainer_target: fit.derived_target.clone(),
        transfer: BundleTransfer {
            variant: kind.variant_name().to_string(),
            parameters,
            formatted,
        },
        instances: rendered,
        display,
    })
}

/// Multi-line plain-text rendering of an explanation, used by the CLI.
pub fn render_explanation<T: Scalar>(schema: &AttributeSchema, e: &Explanation<T>) -> String {
    let mut out = String::new();
    let headers = ["Attribute", "Value", "Relative", "Factor", "Partial"];
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (r, a) in schema.attributes().iter().enumerate() {
        let mut row = vec![
            a.label(),
            format_sig(e.instance_raw[r].to_f64_lossy(), 4),
            format_sig(e.relative_values[r].to_f64_lossy(), DISPLAY_DIGITS),
            format_sig(e.factors[r].to_f64_lossy(), DISPLAY_DIGITS),
            format_sig(e.partial_contributions[r].to_f64_lossy(), DISPLAY_DIGITS),
        ];
        if let Some(scales) = &e.scale_annotations {
            row.push(scales[r].clone());
        }
        rows.push(row);
    }
    let mut header: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    if e.scale_annotations.is_some() {
        header.push("Scale".into());
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain(std::iter::once(header[c].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    out.push_str(&line(&header));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out.push_str(&format!("Centroid: {}\n", format_sig(e.centroid.to_f64_lossy(), 4)));
    out.push_str(&format!("Estimate: {}\n", format_sig(e.explainer_estimate.to_f64_lossy(), 4)));
    if let (Some(y), Some(p)) = (e.system_prediction, e.percent_difference) {
        out.push_str(&format!("System: {} ({} than the system)\n", format_sig(y.to_f64_lossy(), 4), format_percent(p)));
    }
    out
}
