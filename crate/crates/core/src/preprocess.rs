//! Ingestion of tabular data, centering into relative values, and domain assignment.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algebra::TransferKind;
use crate::blackbox::PredictorSpec;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{pairwise_sum, Scalar};
use crate::schema::{Attribute, AttributeSchema};

/// Environment variable overriding the directory relative data paths resolve against.
pub const DATA_DIR_ENV: &str = "XFERXAI_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Original,
    Target,
}

/// Column-wise arithmetic mean.
pub fn compute_means<T: Scalar>(raw: &Matrix<T>) -> Result<Vec<T>> {
    if raw.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !raw.is_finite() {
        return Err(Error::NonFinite("raw attribute values".into()));
    }
    let n = T::of(raw.rows() as f64);
    Ok((0..raw.cols()).map(|j| pairwise_sum(&raw.column(j)) / n).collect())
}

/// `χᵢⱼ = xᵢⱼ − x̄ⱼ`
pub fn center<T: Scalar>(raw: &Matrix<T>, means: &[T]) -> Result<Matrix<T>> {
    if means.len() != raw.cols() {
        return Err(Error::dims("attribute means", raw.cols(), means.len()));
    }
    let mut out = raw.clone();
    for i in 0..out.rows() {
        for (v, &m) in out.row_mut(i).iter_mut().zip(means) {
            *v = *v - m;
        }
    }
    Ok(out)
}

/// Relative attribute values of one domain together with the black-box outputs to explain.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredDataset<T> {
    pub schema: AttributeSchema,
    pub relative_values: Matrix<T>,
    pub attribute_means: Vec<T>,
    pub raw_labels: Option<Vec<T>>,
    pub blackbox_predictions: Vec<T>,
    pub domain_ids: Vec<Domain>,
}

impl<T: Scalar> CenteredDataset<T> {
    /// Centers `raw` against its own column means.
    pub fn from_raw(schema: AttributeSchema, raw: &Matrix<T>, predictions: Vec<T>, domain: Domain) -> Result<Self> {
        let means = compute_means(raw)?;
        Self::with_means(schema, raw, means, predictions, None, vec![domain; raw.rows()])
    }

    pub fn with_means(
        schema: AttributeSchema,
        raw: &Matrix<T>,
        means: Vec<T>,
        predictions: Vec<T>,
        raw_labels: Option<Vec<T>>,
        domain_ids: Vec<Domain>,
    ) -> Result<Self> {
        if raw.cols() != schema.len() {
            return Err(Error::dims("dataset columns", schema.len(), raw.cols()));
        }
        let rows = raw.rows();
        if predictions.len() != rows {
            return Err(Error::dims("black-box predictions", rows, predictions.len()));
        }
        if domain_ids.len() != rows {
            return Err(Error::dims("domain assignment", rows, domain_ids.len()));
        }
        if let Some(l) = &raw_labels {
            if l.len() != rows {
                return Err(Error::dims("labels", rows, l.len()));
            }
        }
        let relative_values = center(raw, &means)?;
        Ok(CenteredDataset {
            schema,
            relative_values,
            attribute_means: means,
            raw_labels,
            blackbox_predictions: predictions,
            domain_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.relative_values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_attributes(&self) -> usize {
        self.relative_values.cols()
    }

    /// Raw attribute values, `χ + x̄`.
    pub fn raw_values(&self) -> Matrix<T> {
        let neg: Vec<T> = self.attribute_means.iter().map(|&m| -m).collect();
        center(&self.relative_values, &neg).expect("means match columns")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
}

impl RuleOp {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            RuleOp::Lt => value < threshold,
            RuleOp::Le => value <= threshold,
            RuleOp::Gt => value > threshold,
            RuleOp::Ge => value >= threshold,
        }
    }
}

/// Instances satisfying the rule belong to the Original domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRule {
    pub rule: String,
    pub op: RuleOp,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainSpec {
    Column(String),
    Rule(DomainRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeInfo {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub display_min: Option<f64>,
    pub display_max: Option<f64>,
}

/// Declares which CSV columns are attributes, labels, and black-box outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default)]
    pub format_version: Option<u32>,
    /// Data CSV, relative to the manifest directory or `XFERXAI_DATA_DIR`.
    pub data: String,
    pub attributes: Vec<String>,
    /// Second attribute view over the same rows (attribute transfer).
    #[serde(default)]
    pub target_attributes: Option<Vec<String>>,
    #[serde(default)]
    pub label: Option<OneOrMany>,
    /// One column per task.
    #[serde(default)]
    pub predictions: Option<OneOrMany>,
    /// Sidecar CSV holding the prediction columns, keyed by a `row` index column.
    #[serde(default)]
    pub predictions_file: Option<String>,
    /// Predictor document evaluated on the attributes instead of stored predictions.
    #[serde(default)]
    pub predictor: Option<String>,
    /// Predictor for the target attribute view, when it differs.
    #[serde(default)]
    pub target_predictor: Option<String>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default = "default_domain_names")]
    pub domain_names: [String; 2],
    #[serde(default)]
    pub attribute_info: Vec<AttributeInfo>,
}

fn default_domain_names() -> [String; 2] {
    ["original".to_string(), "target".to_string()]
}

impl DatasetManifest {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<manifest>"),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Directory relative paths resolve against: `XFERXAI_DATA_DIR` when set, else `fallback`.
pub fn data_root(fallback: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => fallback.to_path_buf(),
    }
}

pub fn resolve_path(root: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// A parsed table before any centering: one or two attribute views over the same rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub schema: AttributeSchema,
    pub raw: Matrix<T>,
    pub target_view: Option<(AttributeSchema, Matrix<T>)>,
    pub labels: Vec<(String, Vec<T>)>,
    pub predictions: Vec<(String, Vec<T>)>,
    /// Predictions of a separate target-view model (attribute transfer).
    pub target_predictions: Vec<(String, Vec<T>)>,
    pub domain_ids: Vec<Domain>,
    pub domain_names: [String; 2],
}

/// Original and Target training data for one transfer fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair<T> {
    pub original: CenteredDataset<T>,
    pub target: CenteredDataset<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.raw.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task_names(&self) -> Vec<&str> {
        self.predictions.iter().map(|(n, _)| n.as_str()).collect()
    }

    fn task(&self, index: usize) -> Result<&Vec<T>> {
        self.predictions
            .get(index)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::InvalidArgument(format!("dataset has no prediction task #{index}")))
    }

    fn first_label(&self) -> Option<Vec<T>> {
        self.labels.first().map(|(_, v)| v.clone())
    }

    /// All rows centered globally, explaining prediction task `task`.
    pub fn centered(&self, task: usize) -> Result<CenteredDataset<T>> {
        let means = compute_means(&self.raw)?;
        CenteredDataset::with_means(
            self.schema.clone(),
            &self.raw,
            means,
            self.task(task)?.clone(),
            self.first_label(),
            self.domain_ids.clone(),
        )
    }

    /// Rows of one domain, centered on that domain's own means.
    pub fn centered_domain(&self, domain: Domain, task: usize) -> Result<CenteredDataset<T>> {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| self.domain_ids[i] == domain).collect();
        if rows.is_empty() {
            return Err(Error::InvalidArgument(format!("no rows assigned to the {domain:?} domain")));
        }
        self.subset(&rows).centered(task)
    }

    /// The target attribute view centered on its own means.
    pub fn centered_target_view(&self) -> Result<CenteredDataset<T>> {
        let (schema, raw) = self
            .target_view
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("manifest declares no target_attributes".into()))?;
        let preds = match self.target_predictions.first() {
            Some((_, p)) => p.clone(),
            None => self.task(if self.predictions.len() > 1 { 1 } else { 0 })?.clone(),
        };
        let means = compute_means(raw)?;
        CenteredDataset::with_means(schema.clone(), raw, means, preds, self.first_label(), self.domain_ids.clone())
    }

    /// Training data for a transfer of the given kind.
    ///
    /// Subspace: rows split by domain, each centered on its own means. Task: all rows,
    /// global means, prediction tasks 0 and 1. Attributes: the two views, each centered
    /// independently.
    pub fn domain_pair(&self, kind: TransferKind) -> Result<DomainPair<T>> {
        match kind {
            TransferKind::Subspace => Ok(DomainPair {
                original: self.centered_domain(Domain::Original, 0)?,
                target: self.centered_domain(Domain::Target, 0)?,
            }),
            TransferKind::Task => {
                if self.predictions.len() < 2 {
                    return Err(Error::InvalidArgument("task transfer needs two prediction columns".into()));
                }
                Ok(DomainPair {
                    original: self.centered(0)?,
                    target: self.centered(1)?,
                })
            }
            TransferKind::Attributes => Ok(DomainPair {
                original: self.centered(0)?,
                target: self.centered_target_view()?,
            }),
        }
    }

    /// Rows by index, preserving every per-row field.
    pub fn subset(&self, rows: &[usize]) -> Dataset<T> {
        let pick = |v: &Vec<T>| rows.iter().map(|&i| v[i]).collect::<Vec<T>>();
        Dataset {
            schema: self.schema.clone(),
            raw: self.raw.select_rows(rows),
            target_view: self.target_view.as_ref().map(|(s, m)| (s.clone(), m.select_rows(rows))),
            labels: self.labels.iter().map(|(n, v)| (n.clone(), pick(v))).collect(),
            predictions: self.predictions.iter().map(|(n, v)| (n.clone(), pick(v))).collect(),
            target_predictions: self.target_predictions.iter().map(|(n, v)| (n.clone(), pick(v))).collect(),
            domain_ids: rows.iter().map(|&i| self.domain_ids[i]).collect(),
            domain_names: self.domain_names.clone(),
        }
    }

    /// Writes the table back out as CSV with the same column names plus a `domain`
    /// column, returning the manifest that re-reads it.
    pub fn to_csv_string(&self) -> (String, DatasetManifest) {
        let mut header: Vec<String> = self.schema.names().iter().map(|s| s.to_string()).collect();
        let mut target_names = None;
        if let Some((schema, _)) = &self.target_view {
            let extra: Vec<String> = schema
                .names()
                .iter()
                .filter(|n| self.schema.index_of(n).is_none())
                .map(|s| s.to_string())
                .collect();
            header.extend(extra);
            target_names = Some(schema.names().iter().map(|s| s.to_string()).collect::<Vec<_>>());
        }
        let label_names: Vec<String> = self.labels.iter().map(|(n, _)| n.clone()).collect();
        let pred_names: Vec<String> = self.predictions.iter().map(|(n, _)| n.clone()).collect();
        header.extend(label_names.iter().cloned());
        header.extend(pred_names.iter().cloned());
        header.push("domain".into());

        let mut out = String::new();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let mut cells: Vec<String> = self.raw.row(i).iter().map(|v| fmt_cell(*v)).collect();
            if let Some((schema, m)) = &self.target_view {
                for (j, name) in schema.names().iter().enumerate() {
                    if self.schema.index_of(name).is_none() {
                        cells.push(fmt_cell(m[(i, j)]));
                    }
                }
            }
            cells.extend(self.labels.iter().map(|(_, v)| fmt_cell(v[i])));
            cells.extend(self.predictions.iter().map(|(_, v)| fmt_cell(v[i])));
            let d = match self.domain_ids[i] {
                Domain::Original => &self.domain_names[0],
                Domain::Target => &self.domain_names[1],
            };
            cells.push(d.clone());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        let manifest = DatasetManifest {
            format_version: Some(1),
            data: "data.csv".into(),
            attributes: self.schema.names().iter().map(|s| s.to_string()).collect(),
            target_attributes: target_names,
            label: (!label_names.is_empty()).then_some(OneOrMany::Many(label_names)),
            predictions: (!pred_names.is_empty()).then_some(OneOrMany::Many(pred_names)),
            predictions_file: None,
            predictor: None,
            target_predictor: None,
            domain: Some(DomainSpec::Column("domain".into())),
            domain_names: self.domain_names.clone(),
            attribute_info: self
                .schema
                .attributes()
                .iter()
                .chain(self.target_view.iter().flat_map(|(s, _)| s.attributes().iter()))
                .map(|a| AttributeInfo {
                    name: a.name.clone(),
                    unit: a.unit.clone(),
                    display_min: Some(a.display_min),
                    display_max: Some(a.display_max),
                })
                .collect(),
        };
        (out, manifest)
    }
}

fn fmt_cell<T: Scalar>(v: T) -> String {
    // shortest representation that parses back to the same double
    format!("{:?}", v.to_f64_lossy())
}

struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        if header.iter().all(String::is_empty) || rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(CsvTable { header, rows })
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    fn numeric_column<T: Scalar>(&self, name: &str) -> Result<Vec<T>> {
        let j = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(j).map(String::as_str).unwrap_or("");
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(T::of(v)),
                    _ => Err(Error::NonNumericCell {
                        row: i,
                        column: name.to_string(),
                        value: cell.to_string(),
                    }),
                }
            })
            .collect()
    }

    fn text_column(&self, name: &str) -> Result<Vec<String>> {
        let j = self.index(name)?;
        Ok(self.rows.iter().map(|r| r.get(j).cloned().unwrap_or_default()).collect())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            let msg = e.to_string();
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => Error::Parse {
                    path: path.to_path_buf(),
                    message: msg,
                },
            }
        }
        _ => Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
    }
}

fn build_schema<T: Scalar>(names: &[String], raw: &Matrix<T>, info: &HashMap<&str, &AttributeInfo>) -> Result<AttributeSchema> {
    let mut attrs = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let col = raw.column(j);
        let lo = col.iter().fold(f64::INFINITY, |a, v| a.min(v.to_f64_lossy()));
        let hi = col.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.to_f64_lossy()));
        let (mut lo, mut hi) = (lo, hi);
        if !(lo < hi) {
            lo -= 1.0;
            hi += 1.0;
        }
        let meta = info.get(name.as_str());
        attrs.push(Attribute {
            name: name.clone(),
            unit: meta.map(|m| m.unit.clone()).unwrap_or_default(),
            display_min: meta.and_then(|m| m.display_min).unwrap_or(lo),
            display_max: meta.and_then(|m| m.display_max).unwrap_or(hi),
        });
    }
    AttributeSchema::new(attrs)
}

fn gather<T: Scalar>(table: &CsvTable, names: &[String]) -> Result<Matrix<T>> {
    let cols = names
        .iter()
        .map(|n| table.numeric_column::<T>(n))
        .collect::<Result<Vec<_>>>()?;
    let rows = table.rows.len();
    let mut m = Matrix::zeros(rows, names.len());
    for (j, col) in cols.iter().enumerate() {
        for i in 0..rows {
            m[(i, j)] = col[i];
        }
    }
    Ok(m)
}

fn predictions_from_sidecar<T: Scalar>(path: &Path, names: &[String], rows: usize) -> Result<Vec<(String, Vec<T>)>> {
    let side = CsvTable::read(path)?;
    let index = side.numeric_column::<f64>("row")?;
    let mut out = Vec::new();
    for name in names {
        let col = side.numeric_column::<T>(name)?;
        let mut values = vec![None; rows];
        for (k, &r) in index.iter().enumerate() {
            if r < 0.0 || r.fract() != 0.0 || r as usize >= rows {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("row index {r} out of range"),
                });
            }
            values[r as usize] = Some(col[k]);
        }
        let filled = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("no prediction for row {i}"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        out.push((name.clone(), filled));
    }
    Ok(out)
}

fn predictions_from_predictor<T: Scalar>(path: &Path, raw: &Matrix<T>) -> Result<Vec<(String, Vec<T>)>> {
    let spec = PredictorSpec::load(path)?;
    let outputs = spec.predict(raw)?;
    Ok(spec
        .output_names()
        .into_iter()
        .enumerate()
        .map(|(k, name)| (name, outputs.column(k)))
        .collect())
}

/// Reads the CSV and assembles every view the manifest declares.
pub fn load_dataset<T: Scalar>(manifest: &DatasetManifest, root: &Path) -> Result<Dataset<T>> {
    let path = resolve_path(root, &manifest.data);
    let table = CsvTable::read(&path)?;
    let rows = table.rows.len();
    let info: HashMap<&str, &AttributeInfo> = manifest.attribute_info.iter().map(|a| (a.name.as_str(), a)).collect();

    let raw = gather::<T>(&table, &manifest.attributes)?;
    let schema = build_schema(&manifest.attributes, &raw, &info)?;
    let target_view = match &manifest.target_attributes {
        Some(names) => {
            let m = gather::<T>(&table, names)?;
            Some((build_schema(names, &m, &info)?, m))
        }
        None => None,
    };

    let labels = match &manifest.label {
        Some(l) => l
            .to_vec()
            .into_iter()
            .map(|n| table.numeric_column::<T>(&n).map(|v| (n, v)))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };

    let predictions = match (&manifest.predictions, &manifest.predictions_file, &manifest.predictor) {
        (Some(names), None, None) => names
            .to_vec()
            .into_iter()
            .map(|n| table.numeric_column::<T>(&n).map(|v| (n, v)))
            .collect::<Result<Vec<_>>>()?,
        (Some(names), Some(side), None) => predictions_from_sidecar(&resolve_path(root, side), &names.to_vec(), rows)?,
        (None, None, Some(pred)) => predictions_from_predictor(&resolve_path(root, pred), &raw)?,
        (None, None, None) => {
            return Err(Error::InvalidArgument(
                "manifest needs `predictions` columns or a `predictor`".into(),
            ))
        }
        _ => {
            return Err(Error::InvalidArgument(
                "manifest must use exactly one of `predictions` or `predictor`".into(),
            ))
        }
    };

    let target_predictions = match (&manifest.target_predictor, &target_view) {
        (Some(pred), Some((_, m))) => predictions_from_predictor(&resolve_path(root, pred), m)?,
        (Some(_), None) => {
            return Err(Error::InvalidArgument(
                "target_predictor given without target_attributes".into(),
            ))
        }
        _ => Vec::new(),
    };

    let domain_ids = match &manifest.domain {
        None => vec![Domain::Original; rows],
        Some(DomainSpec::Column(col)) => table
            .text_column(col)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v == manifest.domain_names[0] {
                    Ok(Domain::Original)
                } else if v == manifest.domain_names[1] {
                    Ok(Domain::Target)
                } else {
                    Err(Error::UnknownDomain { row: i, value: v })
                }
            })
            .collect::<Result<Vec<_>>>()?,
        Some(DomainSpec::Rule(rule)) => {
            let values = table.numeric_column::<f64>(&rule.rule)?;
            values
                .into_iter()
                .map(|v| {
                    if rule.op.holds(v, rule.threshold) {
                        Domain::Original
                    } else {
                        Domain::Target
                    }
                })
                .collect()
        }
    };

    Ok(Dataset {
        schema,
        raw,
        target_view,
        labels,
        predictions,
        target_predictions,
        domain_ids,
        domain_names: manifest.domain_names.clone(),
    })
}

/// Parses and centers the CSV globally, explaining the first prediction task.
pub fn ingest_csv<T: Scalar>(path: &Path, manifest: &DatasetManifest) -> Result<CenteredDataset<T>> {
    let mut m = manifest.clone();
    m.data = path.to_string_lossy().into_owned();
    let root = path.parent().unwrap_or(Path::new("."));
    load_dataset::<T>(&m, root)?.centered(0)
}
