//! Nonparametric neighbor routers: KNN over soft targets and PRkNN over
//! pairwise model preferences of the neighbors.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2};

use super::{RouterKind, RouterModel, TrainingData};
use crate::error::{Error, Result};
use crate::fusion::FusionSpec;
use crate::nn::{softmax, ParamStore};

const FEATURES: usize = 0;
const TARGETS: usize = 1;
const QUALITY: usize = 1;
const COST: usize = 2;

/// Indices of the `k` rows of `features` closest to `x` (squared Euclidean),
/// nearest first; distance ties go to the lower row index.
pub fn nearest_neighbors(features: ArrayView2<f64>, x: &[f64], k: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = features
        .outer_iter()
        .enumerate()
        .map(|(i, row)| {
            let d = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            (d, i)
        })
        .collect();
    let k = k.min(dist.len());
    if k == 0 {
        return Vec::new();
    }
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, order);
        dist.truncate(k);
    }
    dist.sort_by(order);
    dist.into_iter().map(|(_, i)| i).collect()
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyTrainSet);
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in [1, {n}]")));
    }
    Ok(())
}

/// Stores the fused features and soft targets of the labeled samples.
pub fn train_knn(fusion: FusionSpec, data: &TrainingData, k: usize) -> Result<RouterModel> {
    let labeled = data.labeled();
    check_k(k, labeled.len())?;
    let (features, _) = fusion.forward(data.select_image(&labeled).view(), data.select_text(&labeled).view())?;
    let targets = data.target_matrix(&labeled);
    let mut params = ParamStore::new();
    params.push("features", features.nrows(), features.ncols(), features.into_raw_vec_and_offset().0);
    params.push("targets", targets.nrows(), targets.ncols(), targets.into_raw_vec_and_offset().0);
    Ok(RouterModel {
        kind: RouterKind::Knn,
        fusion,
        params,
        n_models: data.n_models(),
        k: Some(k),
        train_lambda: Some(data.lambda),
        config: None,
        fingerprint: String::new(),
    })
}

/// Mean soft target of the `k` nearest stored samples, renormalized.
pub(super) fn knn_predict(model: &RouterModel, x: &[f64]) -> Vec<f64> {
    let k = model.k.expect("knn has k");
    let features = model.params.view(FEATURES);
    let targets = model.params.view(TARGETS);
    let mut mean = vec![0.0; model.n_models];
    for i in nearest_neighbors(features, x, k) {
        for (m, t) in mean.iter_mut().zip(targets.row(i)) {
            *m += t;
        }
    }
    let z: f64 = mean.iter().sum();
    mean.iter_mut().for_each(|m| *m /= z);
    mean
}

/// Stores fused features with the full correctness and cost rows of every
/// training sample.
pub fn train_prknn(fusion: FusionSpec, data: &TrainingData, k: usize) -> Result<RouterModel> {
    check_k(k, data.len())?;
    let features = data.fused(&fusion)?;
    let mut params = ParamStore::new();
    params.push("features", features.nrows(), features.ncols(), features.into_raw_vec_and_offset().0);
    params.push("quality", data.len(), data.n_models(), data.quality.iter().copied().collect());
    params.push("cost", data.len(), data.n_models(), data.cost.iter().copied().collect());
    Ok(RouterModel {
        kind: RouterKind::Prknn,
        fusion,
        params,
        n_models: data.n_models(),
        k: Some(k),
        train_lambda: None,
        config: None,
        fingerprint: String::new(),
    })
}

/// Copeland scores from neighbor rows: model `a` is preferred to `b` on a
/// neighbor when only `a` is correct, or both are and `a` is cheaper. The
/// score of `a` counts the opponents it beats on majority minus those that
/// beat it.
pub fn prknn_scores(quality: ArrayView2<f64>, cost: ArrayView2<f64>, neighbors: &[usize]) -> Vec<f64> {
    let m = quality.ncols();
    let mut wins = Array2::<f64>::zeros((m, m));
    for &i in neighbors {
        let y = quality.row(i);
        let c = cost.row(i);
        for a in 0..m {
            for b in 0..m {
                if a == b {
                    continue;
                }
                let only_a = y[a] == 1.0 && y[b] == 0.0;
                let both_cheaper = y[a] == 1.0 && y[b] == 1.0 && c[a] < c[b];
                if only_a || both_cheaper {
                    wins[[a, b]] += 1.0;
                }
            }
        }
    }
    (0..m)
        .map(|a| {
            (0..m)
                .filter(|&b| b != a)
                .map(|b| match wins[[a, b]].partial_cmp(&wins[[b, a]]) {
                    Some(Ordering::Greater) => 1.0,
                    Some(Ordering::Less) => -1.0,
                    _ => 0.0,
                })
                .sum()
        })
        .collect()
}

pub(super) fn prknn_predict(model: &RouterModel, x: &[f64]) -> Vec<f64> {
    let k = model.k.expect("prknn has k");
    let neighbors = nearest_neighbors(model.params.view(FEATURES), x, k);
    softmax(&prknn_scores(model.params.view(QUALITY), model.params.view(COST), &neighbors))
}
