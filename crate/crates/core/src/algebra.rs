//! Linear explainers, affine transfers between them, and homogeneous composition.
//!
//! An explainer predicts `ỹ = wᵀχ + ȳ̃` over relative values `χ = x − x̄`. A transfer
//! maps the Original explainer's factors to the Target's: Translation adds `w_Δ`,
//! Scaling multiplies by `κ`, Mapping applies `M_χᵀ` where `χ_O = M_χ·χ_T`.
//! Translation and Scaling carry one extra trailing entry acting on the centroid
//! label; Mapping leaves the centroid unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{all_finite, dot, Scalar};
use crate::schema::AttributeSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct LinearExplainer<T> {
    pub schema: AttributeSchema,
    pub factors: Vec<T>,
    pub centroid_label: T,
    pub attribute_means: Vec<T>,
}

impl<T: Scalar> LinearExplainer<T> {
    pub fn new(schema: AttributeSchema, factors: Vec<T>, centroid_label: T, attribute_means: Vec<T>) -> Result<Self> {
        let e = LinearExplainer {
            schema,
            factors,
            centroid_label,
            attribute_means,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.schema.len();
        if self.factors.len() != n {
            return Err(Error::dims("explainer factors", n, self.factors.len()));
        }
        if self.attribute_means.len() != n {
            return Err(Error::dims("explainer attribute means", n, self.attribute_means.len()));
        }
        if !all_finite(&self.factors) || !all_finite(&self.attribute_means) || !self.centroid_label.is_finite() {
            return Err(Error::NonFinite("explainer parameters".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn frame(&self) -> ExplainerFrame<T> {
        ExplainerFrame {
            schema: self.schema.clone(),
            attribute_means: self.attribute_means.clone(),
        }
    }

    /// `χ = x − x̄`
    pub fn relative(&self, raw: &[T]) -> Result<Vec<T>> {
        if raw.len() != self.len() {
            return Err(Error::dims("instance", self.len(), raw.len()));
        }
        Ok(raw.iter().zip(&self.attribute_means).map(|(&x, &m)| x - m).collect())
    }

    /// `wᵀχ + ȳ̃`
    pub fn predict_relative(&self, relative: &[T]) -> Result<T> {
        if relative.len() != self.len() {
            return Err(Error::dims("relative instance", self.len(), relative.len()));
        }
        Ok(dot(&self.factors, relative) + self.centroid_label)
    }

    pub fn predict_raw(&self, raw: &[T]) -> Result<T> {
        self.predict_relative(&self.relative(raw)?)
    }

    /// Factors followed by the centroid label: the vector Translation and Scaling act on.
    pub fn extended_factors(&self) -> Vec<T> {
        let mut v = self.factors.clone();
        v.push(self.centroid_label);
        v
    }
}

/// The raw intercept `w⁽⁰⁾ = ȳ̃ − wᵀx̄` of the equivalent raw-value model.
pub fn recover_bias<T: Scalar>(explainer: &LinearExplainer<T>) -> T {
    explainer.centroid_label - dot(&explainer.factors, &explainer.attribute_means)
}

/// Attribute schema plus the means relative values are taken against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ExplainerFrame<T> {
    pub schema: AttributeSchema,
    pub attribute_means: Vec<T>,
}

/// Shared/unshared split of a mapping matrix. `shared_original[k]` and
/// `shared_target[k]` index the same attribute in the two schemas; every other
/// row/column belongs to an unshared block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingPartition {
    pub n_original: usize,
    pub n_target: usize,
    pub shared_original: Vec<usize>,
    pub shared_target: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingBlock {
    /// `M⊕`: shared Original attribute from shared Target attribute.
    Shared,
    /// `M⊖`
    Unshared,
    /// `M⊕⊖`: shared Original row, unshared Target column.
    SharedFromUnshared,
    /// `M⊖⊕`: unshared Original row, shared Target column.
    UnsharedFromShared,
}

impl MappingPartition {
    pub fn new(n_original: usize, n_target: usize, shared_original: Vec<usize>, shared_target: Vec<usize>) -> Result<Self> {
        let p = MappingPartition {
            n_original,
            n_target,
            shared_original,
            shared_target,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_schemas(original: &AttributeSchema, target: &AttributeSchema) -> Self {
        let (so, st) = original.shared_pairs(target).into_iter().unzip();
        MappingPartition {
            n_original: original.len(),
            n_target: target.len(),
            shared_original: so,
            shared_target: st,
        }
    }

    /// Everything unshared: no entry is expected to be 1.
    pub fn disjoint(n_original: usize, n_target: usize) -> Self {
        MappingPartition {
            n_original,
            n_target,
            shared_original: Vec::new(),
            shared_target: Vec::new(),
        }
    }

    /// Same attributes on both sides, paired by position.
    pub fn identity(n: usize) -> Self {
        MappingPartition {
            n_original: n,
            n_target: n,
            shared_original: (0..n).collect(),
            shared_target: (0..n).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shared_original.len() != self.shared_target.len() {
            return Err(Error::dims(
                "mapping partition shared pairs",
                self.shared_original.len(),
                self.shared_target.len(),
            ));
        }
        let check = |idx: &[usize], n: usize, side: &str| -> Result<()> {
            let mut seen = vec![false; n];
            for &i in idx {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!(
                        "mapping partition: {side} index {i} out of range or repeated"
                    )));
                }
            }
            Ok(())
        };
        check(&self.shared_original, self.n_original, "original")?;
        check(&self.shared_target, self.n_target, "target")
    }

    fn original_is_shared(&self, row: usize) -> bool {
        self.shared_original.contains(&row)
    }

    fn target_is_shared(&self, col: usize) -> bool {
        self.shared_target.contains(&col)
    }

    pub fn block_of(&self, row: usize, col: usize) -> MappingBlock {
        match (self.original_is_shared(row), self.target_is_shared(col)) {
            (true, true) => MappingBlock::Shared,
            (false, false) => MappingBlock::Unshared,
            (true, false) => MappingBlock::SharedFromUnshared,
            (false, true) => MappingBlock::UnsharedFromShared,
        }
    }

    /// True where the sparsity target is 1 (the diagonal of `M⊕`).
    pub fn is_identity_entry(&self, row: usize, col: usize) -> bool {
        self.shared_original
            .iter()
            .zip(&self.shared_target)
            .any(|(&r, &c)| r == row && c == col)
    }

    /// The sparsity target matrix: 1 on paired shared attributes, 0 elsewhere.
    pub fn identity_target<T: Scalar>(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n_original, self.n_target);
        for (&r, &c) in self.shared_original.iter().zip(&self.shared_target) {
            m[(r, c)] = T::one();
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransferParams<T> {
    Translation { delta: Vec<T> },
    Scaling { kappa: Vec<T> },
    Mapping { m_chi: Matrix<T>, partition: MappingPartition },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferKind {
    /// Data subspaces, related by Translation.
    Subspace,
    /// Prediction tasks, related by Scaling.
    Task,
    /// Attribute sets, related by Mapping.
    Attributes,
}

impl TransferKind {
    pub fn variant_name(self) -> &'static str {
        match self {
            TransferKind::Subspace => "translation",
            TransferKind::Task => "scaling",
            TransferKind::Attributes => "mapping",
        }
    }
}

impl std::str::FromStr for TransferKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subspace" | "translation" => Ok(TransferKind::Subspace),
            "task" | "scaling" => Ok(TransferKind::Task),
            "attributes" | "mapping" => Ok(TransferKind::Attributes),
            other => Err(Error::InvalidArgument(format!("unknown transfer kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for TransferKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransferKind::Subspace => "subspace",
            TransferKind::Task => "task",
            TransferKind::Attributes => "attributes",
        })
    }
}

/// `w_T = A·w_O + b`, specialised to one of the three interpretable forms.
///
/// `target` fixes the schema and attribute means of the produced explainer. When
/// absent, Translation and Scaling reuse the source frame, as does a square Mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransferDoc<T>", into = "TransferDoc<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct AffineTransfer<T: Scalar> {
    pub params: TransferParams<T>,
    pub target: Option<ExplainerFrame<T>>,
}

/// Wire form: `{variant, parameters, partition?, target?}`.
#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
struct TransferDoc<T: Scalar> {
    variant: String,
    parameters: ParameterDoc<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partition: Option<MappingPartition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<ExplainerFrame<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
enum ParameterDoc<T: Scalar> {
    Vector(Vec<T>),
    Matrix(Matrix<T>),
}

impl<T: Scalar> TryFrom<TransferDoc<T>> for AffineTransfer<T> {
    type Error = Error;
    fn try_from(doc: TransferDoc<T>) -> Result<Self> {
        let params = match (doc.variant.as_str(), doc.parameters, doc.partition) {
            ("translation", ParameterDoc::Vector(delta), None) => TransferParams::Translation { delta },
            ("scaling", ParameterDoc::Vector(kappa), None) => TransferParams::Scaling { kappa },
            ("mapping", ParameterDoc::Matrix(m_chi), partition) => {
                let partition = partition.unwrap_or_else(|| MappingPartition::disjoint(m_chi.rows(), m_chi.cols()));
                TransferParams::Mapping { m_chi, partition }
            }
            (v, _, _) => {
                return Err(Error::InvalidArgument(format!(
                    "transfer variant {v:?} with mismatched parameters"
                )))
            }
        };
        let t = AffineTransfer {
            params,
            target: doc.target,
        };
        t.validate()?;
        Ok(t)
    }
}

impl<T: Scalar> From<AffineTransfer<T>> for TransferDoc<T> {
    fn from(t: AffineTransfer<T>) -> Self {
        let (variant, parameters, partition) = match t.params {
            TransferParams::Translation { delta } => ("translation", ParameterDoc::Vector(delta), None),
            TransferParams::Scaling { kappa } => ("scaling", ParameterDoc::Vector(kappa), None),
            TransferParams::Mapping { m_chi, partition } => ("mapping", ParameterDoc::Matrix(m_chi), Some(partition)),
        };
        TransferDoc {
            variant: variant.to_string(),
            parameters,
            partition,
            target: t.target,
        }
    }
}

impl<T: Scalar> AffineTransfer<T> {
    pub fn translation(delta: Vec<T>) -> Self {
        AffineTransfer {
            params: TransferParams::Translation { delta },
            target: None,
        }
    }

    pub fn scaling(kappa: Vec<T>) -> Self {
        AffineTransfer {
            params: TransferParams::Scaling { kappa },
            target: None,
        }
    }

    pub fn mapping(m_chi: Matrix<T>, partition: MappingPartition) -> Self {
        AffineTransfer {
            params: TransferParams::Mapping { m_chi, partition },
            target: None,
        }
    }

    pub fn with_target(mut self, target: ExplainerFrame<T>) -> Self {
        self.target = Some(target);
        self
    }

    pub fn kind(&self) -> TransferKind {
        match self.params {
            TransferParams::Translation { .. } => TransferKind::Subspace,
            TransferParams::Scaling { .. } => TransferKind::Task,
            TransferParams::Mapping { .. } => TransferKind::Attributes,
        }
    }

    /// Identity transfer of the given kind for an `n`-attribute explainer.
    pub fn identity(kind: TransferKind, n: usize) -> Self {
        match kind {
            TransferKind::Subspace => Self::translation(vec![T::zero(); n + 1]),
            TransferKind::Task => Self::scaling(vec![T::one(); n + 1]),
            TransferKind::Attributes => Self::mapping(Matrix::identity(n), MappingPartition::identity(n)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.params {
            TransferParams::Translation { delta: v } | TransferParams::Scaling { kappa: v } => {
                if v.is_empty() {
                    return Err(Error::InvalidArgument("transfer vector needs the centroid entry".into()));
                }
                if !all_finite(v) {
                    return Err(Error::NonFinite("transfer parameters".into()));
                }
            }
            TransferParams::Mapping { m_chi, partition } => {
                partition.validate()?;
                if m_chi.shape() != (partition.n_original, partition.n_target) {
                    return Err(Error::dims("mapping matrix rows", partition.n_original, m_chi.rows()));
                }
                if !m_chi.is_finite() {
                    return Err(Error::NonFinite("mapping matrix".into()));
                }
            }
        }
        Ok(())
    }
}

/// Produces the Target explainer from the Original one.
pub fn apply_affine<T: Scalar>(transfer: &AffineTransfer<T>, source: &LinearExplainer<T>) -> Result<LinearExplainer<T>> {
    transfer.validate()?;
    source.validate()?;
    let n = source.len();
    let (factors, centroid) = match &transfer.params {
        TransferParams::Translation { delta } => {
            if delta.len() != n + 1 {
                return Err(Error::dims("translation vector", n + 1, delta.len()));
            }
            let f = source.factors.iter().zip(delta).map(|(&w, &d)| w + d).collect();
            (f, source.centroid_label + delta[n])
        }
        TransferParams::Scaling { kappa } => {
            if kappa.len() != n + 1 {
                return Err(Error::dims("scaling vector", n + 1, kappa.len()));
            }
            let f = source.factors.iter().zip(kappa).map(|(&w, &k)| k * w).collect();
            (f, kappa[n] * source.centroid_label)
        }
        TransferParams::Mapping { m_chi, .. } => (map_factors(m_chi, &source.factors)?, source.centroid_label),
    };
    let frame = match (&transfer.target, &transfer.params) {
        (Some(frame), _) => frame.clone(),
        (None, TransferParams::Mapping { m_chi, .. }) if m_chi.cols() != n => {
            return Err(Error::InvalidArgument(
                "a non-square mapping needs the target schema and means".into(),
            ))
        }
        (None, _) => source.frame(),
    };
    if !matches!(transfer.params, TransferParams::Mapping { .. }) && frame.schema.names() != source.schema.names() {
        return Err(Error::InvalidSchema(
            "translation and scaling relate explainers over the same attributes".into(),
        ));
    }
    LinearExplainer::new(frame.schema, factors, centroid, frame.attribute_means)
}

/// `χ_O = M_χ·χ_T`
pub fn map_values<T: Scalar>(m_chi: &Matrix<T>, chi_target: &[T]) -> Result<Vec<T>> {
    m_chi.mul_vec(chi_target)
}

/// `w_T = M_χᵀ·w_O`
pub fn map_factors<T: Scalar>(m_chi: &Matrix<T>, w_original: &[T]) -> Result<Vec<T>> {
    m_chi.tr_mul_vec(w_original)
}

/// Square homogeneous matrix acting on `(w_1 … w_k, ȳ̃, 1)`.
///
/// The first `k` slots hold factors (zero-padded when a mapping changes the
/// attribute count), the next slot the centroid label, the last the homogeneous 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HomogeneousDoc<T>", into = "HomogeneousDoc<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct HomogeneousTransform<T: Scalar> {
    matrix: Matrix<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
struct HomogeneousDoc<T: Scalar> {
    matrix: Matrix<T>,
}

impl<T: Scalar> TryFrom<HomogeneousDoc<T>> for HomogeneousTransform<T> {
    type Error = Error;
    fn try_from(doc: HomogeneousDoc<T>) -> Result<Self> {
        HomogeneousTransform::new(doc.matrix)
    }
}

impl<T: Scalar> From<HomogeneousTransform<T>> for HomogeneousDoc<T> {
    fn from(h: HomogeneousTransform<T>) -> Self {
        HomogeneousDoc { matrix: h.matrix }
    }
}

impl<T: Scalar> HomogeneousTransform<T> {
    pub fn new(matrix: Matrix<T>) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c || r < 2 {
            return Err(Error::InvalidArgument(format!(
                "homogeneous matrix must be square and at least 2x2, got {r}x{c}"
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite("homogeneous matrix".into()));
        }
        let last = matrix.row(r - 1);
        let ok = last[..r - 1].iter().all(|&v| v == T::zero()) && last[r - 1] == T::one();
        if !ok {
            return Err(Error::InvalidArgument("homogeneous matrix last row must be (0, …, 0, 1)".into()));
        }
        Ok(HomogeneousTransform { matrix })
    }

    /// From a linear part `A` over `(w; ȳ̃)` and an offset `b`.
    pub fn from_parts(linear: &Matrix<T>, offset: &[T]) -> Result<Self> {
        let m = linear.rows();
        if linear.cols() != m {
            return Err(Error::dims("homogeneous linear part", m, linear.cols()));
        }
        if offset.len() != m {
            return Err(Error::dims("homogeneous offset", m, offset.len()));
        }
        let mut h = Matrix::zeros(m + 1, m + 1);
        for i in 0..m {
            h.row_mut(i)[..m].copy_from_slice(linear.row(i));
            h[(i, m)] = offset[i];
        }
        h[(m, m)] = T::one();
        Self::new(h)
    }

    pub fn identity(factor_slots: usize) -> Self {
        HomogeneousTransform {
            matrix: Matrix::identity(factor_slots + 2),
        }
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn factor_slots(&self) -> usize {
        self.dim() - 2
    }

    /// Applies to `(factors; centroid; 1)`, zero-padding factors to the slot count.
    /// Returns all `factor_slots()` factor entries and the centroid.
    pub fn apply(&self, factors: &[T], centroid: T) -> Result<(Vec<T>, T)> {
        let k = self.factor_slots();
        if factors.len() > k {
            return Err(Error::dims("homogeneous factor slots", k, factors.len()));
        }
        let mut v = vec![T::zero(); k + 2];
        v[..factors.len()].copy_from_slice(factors);
        v[k] = centroid;
        v[k + 1] = T::one();
        let out = self.matrix.mul_vec(&v)?;
        Ok((out[..k].to_vec(), out[k]))
    }

    /// Re-indexes factor slots: slot `i` of `self` becomes slot `placement[i]` of a
    /// transform with `slots` factor slots. Slots nobody maps to stay zero. This is
    /// how callers align attribute indices before composing across schemas.
    pub fn embed(&self, slots: usize, placement: &[usize]) -> Result<Self> {
        let k = self.factor_slots();
        if placement.len() != k {
            return Err(Error::dims("slot placement", k, placement.len()));
        }
        if placement.iter().any(|&p| p >= slots) {
            return Err(Error::InvalidArgument("slot placement out of range".into()));
        }
        let map = |i: usize| -> usize {
            if i < k {
                placement[i]
            } else {
                slots + (i - k)
            }
        };
        let mut out = Matrix::zeros(slots + 2, slots + 2);
        for i in 0..k + 2 {
            for j in 0..k + 2 {
                out[(map(i), map(j))] = self.matrix[(i, j)];
            }
        }
        Self::new(out)
    }
}

/// Homogeneous form of a transfer.
pub fn to_homogeneous<T: Scalar>(transfer: &AffineTransfer<T>) -> Result<HomogeneousTransform<T>> {
    transfer.validate()?;
    match &transfer.params {
        TransferParams::Translation { delta } => HomogeneousTransform::from_parts(&Matrix::identity(delta.len()), delta),
        TransferParams::Scaling { kappa } => {
            HomogeneousTransform::from_parts(&Matrix::from_diagonal(kappa), &vec![T::zero(); kappa.len()])
        }
        TransferParams::Mapping { m_chi, .. } => {
            let (n_o, n_t) = m_chi.shape();
            let k = n_o.max(n_t);
            let mut a = Matrix::zeros(k + 1, k + 1);
            for i in 0..n_o {
                for j in 0..n_t {
                    a[(j, i)] = m_chi[(i, j)];
                }
            }
            a[(k, k)] = T::one();
            HomogeneousTransform::from_parts(&a, &vec![T::zero(); k + 1])
        }
    }
}

/// `𝒜₂·𝒜₁`: apply `first`, then `second`.
pub fn compose<T: Scalar>(second: &HomogeneousTransform<T>, first: &HomogeneousTransform<T>) -> Result<HomogeneousTransform<T>> {
    if second.dim() != first.dim() {
        return Err(Error::dims("composed transforms", second.dim(), first.dim()));
    }
    HomogeneousTransform::new(second.matrix.matmul(&first.matrix)?)
}
