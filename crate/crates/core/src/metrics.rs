//! Faithfulness of surrogates against the black box, and the response measures
//! used when people forward-simulate an explainer.

use serde::{Deserialize, Serialize};

use crate::algebra::LinearExplainer;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{median, pairwise_sum, Scalar};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_SIMILAR_BAND: f64 = 0.1;
/// Ratio beyond which a factor counts as much bigger (or, inverted, much smaller).
pub const LARGE_RATIO: f64 = 1.5;
pub const DEFAULT_STRONG: f64 = 0.8;
pub const DEFAULT_WEAK: f64 = 0.1;
pub const LEVEL_RANGE: i8 = 2;

fn check_pair<T: Scalar>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dims("paired label vectors", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// `1 − SS_res/SS_tot`, with `SS_tot` about the mean of the black-box labels.
pub fn faithfulness_r2<T: Scalar>(xai_labels: &[T], ai_labels: &[T]) -> Result<T> {
    check_pair(xai_labels, ai_labels)?;
    let n = T::of(ai_labels.len() as f64);
    let mean = pairwise_sum(ai_labels) / n;
    let tot: Vec<T> = ai_labels.iter().map(|&y| (y - mean) * (y - mean)).collect();
    let ss_tot = pairwise_sum(&tot);
    if ss_tot == T::zero() {
        return Err(Error::ZeroVariance("black-box labels"));
    }
    let res: Vec<T> = xai_labels.iter().zip(ai_labels).map(|(&a, &b)| (a - b) * (a - b)).collect();
    Ok(T::one() - pairwise_sum(&res) / ss_tot)
}

pub fn mse<T: Scalar>(xai_labels: &[T], ai_labels: &[T]) -> Result<T> {
    check_pair(xai_labels, ai_labels)?;
    let res: Vec<T> = xai_labels.iter().zip(ai_labels).map(|(&a, &b)| (a - b) * (a - b)).collect();
    Ok(pairwise_sum(&res) / T::of(res.len() as f64))
}

/// A natural log taken of `max(x, ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue<T> {
    pub value: T,
    pub clamped: bool,
}

fn check_epsilon<T: Scalar>(epsilon: T) -> Result<()> {
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument("epsilon must be positive and finite".into()));
    }
    Ok(())
}

fn clamped_ln<T: Scalar>(x: T, epsilon: T) -> LogValue<T> {
    if x < epsilon {
        LogValue {
            value: epsilon.ln(),
            clamped: true,
        }
    } else {
        LogValue {
            value: x.ln(),
            clamped: false,
        }
    }
}

/// `ln max(|ẙ − ỹ|, ε)`.
pub fn log_unfaithfulness<T: Scalar>(participant: T, explainer: T, epsilon: T) -> Result<LogValue<T>> {
    check_epsilon(epsilon)?;
    Ok(clamped_ln((participant - explainer).abs(), epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord<T> {
    /// ẙ
    pub participant_label: T,
    /// y₌, the explainer output for the domain the participant was trained on
    pub aligned_xai_label: T,
    /// y≠, the explainer output for the other domain
    pub misaligned_xai_label: T,
    /// ỹ
    pub explainer_label: T,
    /// ŷ
    pub system_label: T,
}

impl<T: Scalar> ResponseRecord<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.participant_label,
            self.aligned_xai_label,
            self.misaligned_xai_label,
            self.explainer_label,
            self.system_label,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("response record".into()))
        }
    }

    pub fn swapped(&self) -> Self {
        ResponseRecord {
            aligned_xai_label: self.misaligned_xai_label,
            misaligned_xai_label: self.aligned_xai_label,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogWoa<T> {
    pub value: T,
    pub clamped_aligned: bool,
    pub clamped_misaligned: bool,
}

/// `ln|ẙ − y≠| − ln|ẙ − y₌|`; positive when the response sits closer to the aligned domain.
pub fn log_woa<T: Scalar>(record: &ResponseRecord<T>, epsilon: T) -> Result<LogWoa<T>> {
    check_epsilon(epsilon)?;
    record.validate()?;
    let far = clamped_ln((record.participant_label - record.misaligned_xai_label).abs(), epsilon);
    let near = clamped_ln((record.participant_label - record.aligned_xai_label).abs(), epsilon);
    Ok(LogWoa {
        value: far.value - near.value,
        clamped_aligned: near.clamped,
        clamped_misaligned: far.clamped,
    })
}

/// `ln max(100·|ẘ − w|/|w|, ε)`.
pub fn log_ape<T: Scalar>(recalled: T, true_factor: T, epsilon: T) -> Result<LogValue<T>> {
    check_epsilon(epsilon)?;
    if true_factor == T::zero() {
        return Err(Error::Undefined("percentage error against a zero factor".into()));
    }
    Ok(clamped_ln(T::of(100.0) * (recalled - true_factor).abs() / true_factor.abs(), epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorRelation {
    /// −2 much smaller … +2 much bigger.
    pub magnitude_level: i8,
    /// +1 same direction, −1 opposite.
    pub direction: i8,
}

/// Five-level magnitude of `w_t` relative to `w_o`, and whether the sign flips.
pub fn relation_of_factors<T: Scalar>(w_o: T, w_t: T, similar_band: T) -> Result<FactorRelation> {
    if w_o == T::zero() {
        return Err(Error::Undefined("relation to a zero Original factor".into()));
    }
    let large = T::of(LARGE_RATIO);
    let upper = T::one() + similar_band;
    if !(similar_band >= T::zero()) || upper >= large {
        return Err(Error::InvalidArgument(format!(
            "similar band must lie in [0, {})",
            LARGE_RATIO - 1.0
        )));
    }
    let r = (w_t / w_o).abs();
    let magnitude_level = if r > large {
        2
    } else if r > upper {
        1
    } else if r >= T::one() / upper {
        0
    } else if r >= T::one() / large {
        -1
    } else {
        -2
    };
    let direction = if w_t * w_o < T::zero() { -1 } else { 1 };
    Ok(FactorRelation {
        magnitude_level,
        direction,
    })
}

fn check_level(level: i8) -> Result<()> {
    if level.abs() > LEVEL_RANGE {
        return Err(Error::InvalidArgument(format!(
            "level {level} outside [-{LEVEL_RANGE}, {LEVEL_RANGE}]"
        )));
    }
    Ok(())
}

pub fn ordinal_error(response_level: i8, true_level: i8) -> Result<u8> {
    check_level(response_level)?;
    check_level(true_level)?;
    Ok((response_level - true_level).unsigned_abs())
}

/// Five-level reading of every mapping entry: ±2 strong, ±1 weak, 0 none.
pub fn correlation_levels<T: Scalar>(m_chi: &Matrix<T>, strong_threshold: T, weak_threshold: T) -> Result<Vec<Vec<i8>>> {
    if !(T::zero() < weak_threshold && weak_threshold < strong_threshold) {
        return Err(Error::InvalidArgument("correlation thresholds need 0 < weak < strong".into()));
    }
    Ok(m_chi
        .row_iter()
        .map(|row| {
            row.iter()
                .map(|&m| {
                    let level = if m.abs() >= strong_threshold {
                        2
                    } else if m.abs() >= weak_threshold {
                        1
                    } else {
                        0
                    };
                    if m < T::zero() {
                        -level
                    } else {
                        level
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapBin {
    Close,
    Far,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGap<T> {
    pub gaps: Vec<T>,
    pub median: T,
    pub bins: Vec<GapBin>,
}

/// `|ỹ_T − ỹ_O|` per instance, binned against the median (`close` iff gap ≥ median).
pub fn xai_domain_gap<T: Scalar>(
    explainer_o: &LinearExplainer<T>,
    explainer_t: &LinearExplainer<T>,
    instances: &Matrix<T>,
) -> Result<DomainGap<T>> {
    xai_domain_gap_views(explainer_o, instances, explainer_t, instances)
}

/// As [`xai_domain_gap`] when the two explainers read different attribute views of the same instances.
pub fn xai_domain_gap_views<T: Scalar>(
    explainer_o: &LinearExplainer<T>,
    instances_o: &Matrix<T>,
    explainer_t: &LinearExplainer<T>,
    instances_t: &Matrix<T>,
) -> Result<DomainGap<T>> {
    if instances_o.rows() != instances_t.rows() {
        return Err(Error::dims("instance views", instances_o.rows(), instances_t.rows()));
    }
    let gaps = instances_o
        .row_iter()
        .zip(instances_t.row_iter())
        .map(|(xo, xt)| Ok((explainer_t.predict_raw(xt)? - explainer_o.predict_raw(xo)?).abs()))
        .collect::<Result<Vec<T>>>()?;
    bin_gaps(gaps)
}

pub fn bin_gaps<T: Scalar>(gaps: Vec<T>) -> Result<DomainGap<T>> {
    let median = median(&gaps).ok_or(Error::EmptyDataset)?;
    let bins = gaps
        .iter()
        .map(|&g| if g >= median { GapBin::Close } else { GapBin::Far })
        .collect();
    Ok(DomainGap { gaps, median, bins })
}

/// Summary over a set of response records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    /// Explainer against the system.
    pub r2: T,
    pub mse: T,
    pub log_unfaithfulness: Vec<T>,
    pub log_woa: Vec<T>,
    pub epsilon_clamp_count: usize,
}

impl<T: Scalar> MetricsReport<T> {
    pub fn from_records(records: &[ResponseRecord<T>], epsilon: T) -> Result<Self> {
        let xai: Vec<T> = records.iter().map(|r| r.explainer_label).collect();
        let ai: Vec<T> = records.iter().map(|r| r.system_label).collect();
        let mut clamps = 0;
        let mut unfaithful = Vec::with_capacity(records.len());
        let mut woa = Vec::with_capacity(records.len());
        for r in records {
            r.validate()?;
            let u = log_unfaithfulness(r.participant_label, r.explainer_label, epsilon)?;
            let w = log_woa(r, epsilon)?;
            clamps += usize::from(u.clamped) + usize::from(w.clamped_aligned) + usize::from(w.clamped_misaligned);
            unfaithful.push(u.value);
            woa.push(w.value);
        }
        Ok(MetricsReport {
            r2: faithfulness_r2(&xai, &ai)?,
            mse: mse(&xai, &ai)?,
            log_unfaithfulness: unfaithful,
            log_woa: woa,
            epsilon_clamp_count: clamps,
        })
    }

    /// One row per record.
    pub fn to_table(&self) -> String {
        let mut out = String::from("record,log_unfaithfulness,log_woa\n");
        for (i, (u, w)) in self.log_unfaithfulness.iter().zip(&self.log_woa).enumerate() {
            out.push_str(&format!("{i},{u},{w}\n"));
        }
        out
    }
}

/// Mean and sample standard deviation, as "0.89 ± 0.01".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of<T: Scalar>(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let v: Vec<f64> = values.iter().map(|x| x.to_f64_lossy()).collect();
        let n = v.len() as f64;
        let mean = pairwise_sum(&v) / n;
        let std = if v.len() > 1 {
            let sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&sq) / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(MeanStd { mean, std })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mean = if self.mean.abs() < 0.005 { 0.0 } else { self.mean };
        write!(f, "{mean:.2} ± {:.2}", self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_examples() {
        assert_eq!(faithfulness_r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(faithfulness_r2(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(faithfulness_r2(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert!(matches!(faithfulness_r2(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::ZeroVariance(_))));
        assert!(faithfulness_r2::<f64>(&[], &[]).is_err());
        assert!(faithfulness_r2(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn unfaithfulness_examples() {
        let v = log_unfaithfulness(238.0, 228.0, 1e-6).unwrap();
        assert!((v.value - 10f64.ln()).abs() < 1e-12 && !v.clamped);
        let v = log_unfaithfulness(5.0f64, 5.0, 1e-6).unwrap();
        assert!((v.value + 13.815510557964274).abs() < 1e-12 && v.clamped);
        assert_eq!(log_unfaithfulness(3.0, 2.0, 1e-6).unwrap().value, 0.0);
        assert!(log_unfaithfulness(3.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn woa_examples() {
        let r = ResponseRecord {
            participant_label: 10.0,
            aligned_xai_label: 8.0,
            misaligned_xai_label: 4.0,
            explainer_label: 0.0,
            system_label: 0.0,
        };
        let v = log_woa(&r, 1e-6).unwrap().value;
        assert!((v - 3f64.ln()).abs() < 1e-12);
        assert_eq!(log_woa(&r.swapped(), 1e-6).unwrap().value, -v);
        let eq = ResponseRecord {
            aligned_xai_label: 16.0,
            ..r
        };
        assert_eq!(log_woa(&eq, 1e-6).unwrap().value, 0.0);
    }

    #[test]
    fn ape_examples() {
        assert!((log_ape(1.1, 1.0, 1e-6).unwrap().value - 10f64.ln()).abs() < 1e-9);
        assert!(log_ape(2.0, 2.0, 1e-6).unwrap().clamped);
        assert!((log_ape(6.0, 3.0, 1e-6).unwrap().value - 100f64.ln()).abs() < 1e-12);
        assert!(log_ape(1.0, 0.0, 1e-6).is_err());
    }

    #[test]
    fn relation_examples() {
        let r = relation_of_factors(15.0, -3.0, 0.1).unwrap();
        assert_eq!((r.magnitude_level, r.direction), (-2, -1));
        let r = relation_of_factors(2.0, 2.0, 0.1).unwrap();
        assert_eq!((r.magnitude_level, r.direction), (0, 1));
        let r = relation_of_factors(1.0, 1.3, 0.1).unwrap();
        assert_eq!((r.magnitude_level, r.direction), (1, 1));
        assert_eq!(relation_of_factors(1.0, 0.8, 0.1).unwrap().magnitude_level, -1);
        assert_eq!(relation_of_factors(1.0, 1.5, 0.1).unwrap().magnitude_level, 1);
        assert!(relation_of_factors(0.0, 1.0, 0.1).is_err());
        assert!(relation_of_factors(1.0, 1.0, 0.6).is_err());
    }

    #[test]
    fn ordinal_examples() {
        assert_eq!(ordinal_error(1, -1).unwrap(), 2);
        assert_eq!(ordinal_error(0, 0).unwrap(), 0);
        assert_eq!(ordinal_error(-2, 2).unwrap(), 4);
        assert!(ordinal_error(3, 0).is_err());
    }

    #[test]
    fn correlation_examples() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0, -0.7], vec![-0.9, 0.05, 0.1]]).unwrap();
        assert_eq!(correlation_levels(&m, 0.8, 0.1).unwrap(), vec![vec![2, 0, -1], vec![-2, 0, 1]]);
        assert!(correlation_levels(&m, 0.1, 0.8).is_err());
    }

    #[test]
    fn gap_binning() {
        let g = bin_gaps(vec![1.0, 3.0, 5.0]).unwrap();
        assert_eq!(g.median, 3.0);
        assert_eq!(g.bins, vec![GapBin::Far, GapBin::Close, GapBin::Close]);
        let single = bin_gaps(vec![2.5]).unwrap();
        assert_eq!(single.bins, vec![GapBin::Close]);
        assert!(bin_gaps::<f64>(vec![]).is_err());
    }

    #[test]
    fn table_format() {
        assert_eq!(MeanStd { mean: 0.891, std: 0.0112 }.to_string(), "0.89 ± 0.01");
        assert_eq!(MeanStd::of(&[1.0, 1.0]).unwrap().to_string(), "1.00 ± 0.00");
    }
}
