//! Held-out faithfulness of single-domain and transferable explainers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{LinearExplainer, TransferKind};
use crate::error::{Error, Result};
use crate::metrics::{faithfulness_r2, mse, MeanStd};
use crate::preprocess::{CenteredDataset, Dataset};
use crate::scalar::Scalar;
use crate::trainer::{fit_single, fit_transfer_with, FitOptions};

pub const DEFAULT_FOLDS: usize = 5;

/// Test-row indices of each fold, from a seeded shuffle; every row appears in exactly one fold.
pub fn kfold_indices(rows: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > rows {
        return Err(Error::InvalidArgument(format!("cannot split {rows} rows into {folds} folds")));
    }
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, &row) in order.iter().enumerate() {
        out[pos % folds].push(row);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn complement(rows: usize, test: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; rows];
    for &i in test {
        mask[i] = false;
    }
    (0..rows).filter(|&i| mask[i]).collect()
}

/// Faithfulness of an explainer on rows it was not fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub r2: f64,
    pub mse: f64,
}

pub fn held_out<T: Scalar>(explainer: &LinearExplainer<T>, test: &CenteredDataset<T>) -> Result<HeldOut> {
    let raw = test.raw_values();
    let estimates = raw.row_iter().map(|x| explainer.predict_raw(x)).collect::<Result<Vec<T>>>()?;
    Ok(HeldOut {
        r2: faithfulness_r2(&estimates, &test.blackbox_predictions)?.to_f64_lossy(),
        mse: mse(&estimates, &test.blackbox_predictions)?.to_f64_lossy(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScores {
    pub domain: String,
    pub single: Vec<HeldOut>,
    pub transferable: Vec<HeldOut>,
}

impl DomainScores {
    pub fn single_r2(&self) -> Result<MeanStd> {
        MeanStd::of(&self.single.iter().map(|h| h.r2).collect::<Vec<_>>())
    }

    pub fn transferable_r2(&self) -> Result<MeanStd> {
        MeanStd::of(&self.transferable.iter().map(|h| h.r2).collect::<Vec<_>>())
    }

    pub fn single_mse(&self) -> Result<MeanStd> {
        MeanStd::of(&self.single.iter().map(|h| h.mse).collect::<Vec<_>>())
    }

    pub fn transferable_mse(&self) -> Result<MeanStd> {
        MeanStd::of(&self.transferable.iter().map(|h| h.mse).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub kind: TransferKind,
    pub folds: usize,
    pub seed: u64,
    pub lambda: f64,
    pub fold_sizes: Vec<usize>,
    pub original: DomainScores,
    pub target: DomainScores,
}

impl CrossValidation {
    /// Rows of "domain  single  transferable" in mean ± std form.
    pub fn table(&self) -> Result<String> {
        let mut out = String::from("domain\tmetric\tsingle\ttransferable\n");
        for d in [&self.original, &self.target] {
            out.push_str(&format!("{}\tR2\t{}\t{}\n", d.domain, d.single_r2()?, d.transferable_r2()?));
            let (s, t) = (d.single_mse()?, d.transferable_mse()?);
            out.push_str(&format!(
                "{}\tMSE\t{} ± {}\t{} ± {}\n",
                d.domain,
                crate::explain::format_sig(s.mean, 3),
                crate::explain::format_sig(s.std, 2),
                crate::explain::format_sig(t.mean, 3),
                crate::explain::format_sig(t.std, 2)
            ));
        }
        Ok(out)
    }
}

/// k-fold comparison of independently fitted explainers with a jointly fitted
/// Original/Target pair. Means are recomputed from the training rows of each fold.
pub fn cross_validate<T: Scalar>(
    data: &Dataset<T>,
    kind: TransferKind,
    lambda: T,
    folds: usize,
    seed: u64,
    options: &FitOptions<T>,
) -> Result<CrossValidation> {
    let splits = kfold_indices(data.len(), folds, seed)?;
    let names = match kind {
        TransferKind::Task => {
            let t = data.task_names();
            [t.first().copied().unwrap_or("original").to_string(), t.get(1).copied().unwrap_or("target").to_string()]
        }
        _ => data.domain_names.clone(),
    };
    let mut original = DomainScores {
        domain: names[0].clone(),
        single: Vec::new(),
        transferable: Vec::new(),
    };
    let mut target = DomainScores {
        domain: names[1].clone(),
        single: Vec::new(),
        transferable: Vec::new(),
    };
    for (f, test_rows) in splits.iter().enumerate() {
        let train = data.subset(&complement(data.len(), test_rows)).domain_pair(kind)?;
        let test = data.subset(test_rows).domain_pair(kind)?;
        let single_o = fit_single(&train.original)?;
        let single_t = fit_single(&train.target)?;
        let fit = fit_transfer_with(&train.original, &train.target, kind, lambda, seed.wrapping_add(f as u64), options)?;
        original.single.push(held_out(&single_o, &test.original)?);
        target.single.push(held_out(&single_t, &test.target)?);
        original.transferable.push(held_out(&fit.original, &test.original)?);
        target.transferable.push(held_out(&fit.derived_target, &test.target)?);
    }
    Ok(CrossValidation {
        kind,
        folds,
        seed,
        lambda: lambda.to_f64_lossy(),
        fold_sizes: splits.iter().map(Vec::len).collect(),
        original,
        target,
    })
}
