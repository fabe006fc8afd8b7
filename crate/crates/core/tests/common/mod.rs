//! Synthetic data generators shared by the integration tests. Each generator is
//! also the oracle: it knows the factors and transfer that produced the labels.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use xferxai::preprocess::{compute_means, Domain};
use xferxai::{AttributeSchema, CenteredDataset, LinearExplainer, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn schema(prefix: &str, n: usize) -> AttributeSchema {
    AttributeSchema::from_names(&names(prefix, n)).unwrap()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, mean: f64, std: f64) -> Matrix<f64> {
    let normal = Normal::new(mean, std).unwrap();
    Matrix::new(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect()).unwrap()
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_explainer(rng: &mut ChaCha8Rng, n: usize) -> LinearExplainer<f64> {
    LinearExplainer::new(
        schema("x", n),
        uniform_vec(rng, n, -3.0, 3.0),
        rng.random_range(-10.0..10.0),
        uniform_vec(rng, n, -5.0, 5.0),
    )
    .unwrap()
}

/// Centred copy of `raw` using its own column means.
pub fn relative(raw: &Matrix<f64>) -> Matrix<f64> {
    let means = compute_means(raw).unwrap();
    xferxai::preprocess::center(raw, &means).unwrap()
}

fn noisy_linear(rng: &mut ChaCha8Rng, chi: &Matrix<f64>, w: &[f64], c: f64, noise: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
    chi.row_iter()
        .map(|row| {
            let clean: f64 = row.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() + c;
            if noise > 0.0 {
                clean + normal.sample(rng)
            } else {
                clean
            }
        })
        .collect()
}

pub struct TaskPair {
    pub original: CenteredDataset<f64>,
    pub target: CenteredDataset<f64>,
    pub w: Vec<f64>,
    /// One scale per attribute followed by the centroid scale.
    pub kappa: Vec<f64>,
    pub centroid: f64,
}

/// Same instances, two black-box tasks: `ŷ_O = wᵀχ + c`, `ŷ_T = (κ∘w)ᵀχ + κ_c·c`.
pub fn task_pair(seed: u64, rows: usize, w: &[f64], kappa: &[f64], centroid: f64, x_std: f64, noise: f64) -> TaskPair {
    assert_eq!(kappa.len(), w.len() + 1);
    let mut r = rng(seed);
    let raw = gaussian_matrix(&mut r, rows, w.len(), 10.0, x_std);
    let chi = relative(&raw);
    let w_t: Vec<f64> = w.iter().zip(kappa).map(|(w, k)| w * k).collect();
    let y_o = noisy_linear(&mut r, &chi, w, centroid, noise);
    let y_t = noisy_linear(&mut r, &chi, &w_t, kappa[w.len()] * centroid, noise);
    let s = schema("x", w.len());
    TaskPair {
        original: CenteredDataset::from_raw(s.clone(), &raw, y_o, Domain::Original).unwrap(),
        target: CenteredDataset::from_raw(s, &raw, y_t, Domain::Target).unwrap(),
        w: w.to_vec(),
        kappa: kappa.to_vec(),
        centroid,
    }
}

pub struct SubspacePair {
    pub original: CenteredDataset<f64>,
    pub target: CenteredDataset<f64>,
    pub w_o: Vec<f64>,
    pub delta: Vec<f64>,
}

/// Two disjoint sets of instances, each centred on itself, with factors differing by `delta`.
pub fn subspace_pair(seed: u64, rows: usize, w_o: &[f64], delta: &[f64], noise: f64) -> SubspacePair {
    let n = w_o.len();
    assert_eq!(delta.len(), n + 1);
    let mut r = rng(seed);
    let raw_o = gaussian_matrix(&mut r, rows, n, 0.0, 1.0);
    let raw_t = gaussian_matrix(&mut r, rows, n, 2.0, 1.5);
    let c_o = 20.0;
    let w_t: Vec<f64> = w_o.iter().zip(delta).map(|(w, d)| w + d).collect();
    let y_o = noisy_linear(&mut r, &relative(&raw_o), w_o, c_o, noise);
    let y_t = noisy_linear(&mut r, &relative(&raw_t), &w_t, c_o + delta[n], noise);
    let s = schema("x", n);
    SubspacePair {
        original: CenteredDataset::from_raw(s.clone(), &raw_o, y_o, Domain::Original).unwrap(),
        target: CenteredDataset::from_raw(s, &raw_t, y_t, Domain::Target).unwrap(),
        w_o: w_o.to_vec(),
        delta: delta.to_vec(),
    }
}

pub struct AttributePair {
    pub original: CenteredDataset<f64>,
    pub target: CenteredDataset<f64>,
    /// `x_O = M*·x_T` exactly.
    pub m_star: Matrix<f64>,
}

/// Paired views over the same instances. The Original view has `u = 0.3·p − 0.2·q`
/// plus two shared attributes; the Target view has `p, q` and the shared pair.
/// Both views explain the same black-box output.
pub fn attribute_pair(seed: u64, rows: usize, noise: f64) -> AttributePair {
    let mut r = rng(seed);
    let raw_t = gaussian_matrix(&mut r, rows, 4, 5.0, 2.0);
    let m_star = Matrix::from_rows(&[
        vec![0.3, -0.2, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap();
    let raw_o = Matrix::from_rows(&raw_t.row_iter().map(|x| m_star.mul_vec(x).unwrap()).collect::<Vec<_>>()).unwrap();
    let w = [4.0, -1.5, 2.0];
    let y = noisy_linear(&mut r, &relative(&raw_o), &w, 30.0, noise);
    let s_o = AttributeSchema::from_names(&["u", "s1", "s2"]).unwrap();
    let s_t = AttributeSchema::from_names(&["p", "q", "s1", "s2"]).unwrap();
    AttributePair {
        original: CenteredDataset::from_raw(s_o, &raw_o, y.clone(), Domain::Original).unwrap(),
        target: CenteredDataset::from_raw(s_t, &raw_t, y, Domain::Target).unwrap(),
        m_star,
    }
}

/// Central differences with step `h = 1e-5·max(1, |xᵢ|)`.
pub fn central_differences(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g.push((up - down) / (2.0 * h));
    }
    g
}

/// Largest componentwise `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Solves a square system by Gaussian elimination with partial pivoting.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

pub const AIR_ATTRIBUTES: [&str; 5] = ["SO2", "NO2", "CO", "O3", "WSPM"];
pub const AIR_TARGETS: [&str; 2] = ["PM2.5", "PM10"];
pub const AIR_ROWS: usize = 20_000;
pub const AIR_LAMBDA: f64 = 10.0;

pub struct AirParity {
    pub network_r2: [f64; 2],
    pub single: [f64; 2],
    pub transferable: [f64; 2],
    pub table: String,
}

/// Reference network on the pollutant readings, then 5-fold single vs task-transfer
/// explainers of its PM2.5/PM10 outputs.
pub fn air_parity(raw: &Matrix<f64>, labels: &Matrix<f64>, seed: u64) -> xferxai::Result<AirParity> {
    use xferxai::evaluate::cross_validate;
    use xferxai::trainer::FitOptions;
    use xferxai::{faithfulness_r2, train_mlp, Dataset, MlpConfig, TransferKind};

    let names: Vec<String> = ["pm25_hat", "pm10_hat"].iter().map(|s| s.to_string()).collect();
    let cfg = MlpConfig { seed, ..MlpConfig::default() };
    let net = train_mlp(raw, labels, &names, &cfg)?.spec;
    let outputs = net.predict(raw)?;
    let network_r2 = [
        faithfulness_r2(&outputs.column(0), &labels.column(0))?,
        faithfulness_r2(&outputs.column(1), &labels.column(1))?,
    ];
    let data = Dataset {
        schema: AttributeSchema::from_names(&AIR_ATTRIBUTES)?,
        raw: raw.clone(),
        target_view: None,
        labels: Vec::new(),
        predictions: vec![(names[0].clone(), outputs.column(0)), (names[1].clone(), outputs.column(1))],
        target_predictions: Vec::new(),
        domain_ids: vec![Domain::Original; raw.rows()],
        domain_names: ["original".into(), "target".into()],
    };
    let cv = cross_validate(&data, TransferKind::Task, AIR_LAMBDA, 5, seed, &FitOptions::default())?;
    Ok(AirParity {
        network_r2,
        single: [cv.original.single_r2()?.mean, cv.target.single_r2()?.mean],
        transferable: [cv.original.transferable_r2()?.mean, cv.target.transferable_r2()?.mean],
        table: cv.table()?,
    })
}

pub struct GradientAudit {
    pub worst_random: f64,
    pub worst_kink: f64,
    pub redrawn: usize,
}

/// Analytic vs central-difference gradients of the smoothed objective.
///
/// Random points are uniform on [−2, 2]; a penalized coordinate landing within 1e-2
/// of its kink is redrawn, since a step of 1e-5 is not small next to the 1e-4
/// smoothing width there. Kink points put every penalized coordinate within 3·ε of
/// its kink and difference with a five-point stencil of step 1e-2·ε instead.
pub fn audit_gradient(obj: &xferxai::trainer::TransferObjective<'_, f64>, rng: &mut ChaCha8Rng, points: usize) -> GradientAudit {
    use xferxai::trainer::{gradient, DEFAULT_SMOOTHING};
    let layout = obj.layout();
    let off = layout.transfer_offset();
    let kinks = obj.identity_parameters();
    let mut audit = GradientAudit { worst_random: 0.0, worst_kink: 0.0, redrawn: 0 };
    for _ in 0..points {
        let mut x = uniform_vec(rng, layout.len(), -2.0, 2.0);
        for (k, &c) in kinks.iter().enumerate() {
            while (x[off + k] - c).abs() < 1e-2 {
                x[off + k] = rng.random_range(-2.0..2.0);
                audit.redrawn += 1;
            }
        }
        let analytic = gradient(obj, &x).unwrap();
        let numeric = central_differences(|p| obj.smoothed(p).unwrap().0, &x);
        audit.worst_random = audit.worst_random.max(max_relative_error(&analytic, &numeric, 1e-6));

        let eps = DEFAULT_SMOOTHING;
        for (k, &c) in kinks.iter().enumerate() {
            x[off + k] = c + rng.random_range(-3.0 * eps..3.0 * eps);
        }
        let analytic = gradient(obj, &x).unwrap();
        let h = 1e-2 * eps;
        let mut probe = x.clone();
        let mut at = |i: usize, step: f64| {
            probe[i] = x[i] + step;
            let v = obj.smoothed(&probe).unwrap().0;
            probe[i] = x[i];
            v
        };
        // five-point stencil: truncation O(h⁴/ε⁴) instead of O(h²/ε²)
        let numeric: Vec<f64> = (0..x.len())
            .map(|i| (8.0 * (at(i, h) - at(i, -h)) - (at(i, 2.0 * h) - at(i, -2.0 * h))) / (12.0 * h))
            .collect();
        let kink_coords: Vec<usize> = (0..kinks.len()).map(|k| off + k).collect();
        let pick = |v: &[f64]| kink_coords.iter().map(|&i| v[i]).collect::<Vec<_>>();
        // below this size a component is dominated by the stencil's round-off, about eps·|f|/h
        let noise = 10.0 * f64::EPSILON * obj.smoothed(&x).unwrap().0.abs() / h;
        audit.worst_kink = audit.worst_kink.max(max_relative_error(&pick(&analytic), &pick(&numeric), noise / 1e-5));
    }
    audit
}
