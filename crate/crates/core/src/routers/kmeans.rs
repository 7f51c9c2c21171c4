//! Nearest-centroid router with one centroid per candidate model.

use super::{RouterKind, RouterModel, TrainingData};
use crate::error::{Error, Result};
use crate::nn::ParamStore;

const CENTROIDS: usize = 0;
const ACTIVE: usize = 1;

/// Assigns every labeled sample to the argmax of its soft target (ties to
/// the model that is cheaper on that sample, then lower index) and averages
/// features per model. Models with no assigned sample are never routed to.
pub fn train_kmeans(fusion: crate::fusion::FusionSpec, data: &TrainingData) -> Result<RouterModel> {
    let labeled = data.labeled();
    if labeled.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let features = data.fused(&fusion)?;
    let m = data.n_models();
    let d = features.ncols();
    let mut sums = vec![0.0; m * d];
    let mut counts = vec![0usize; m];
    for &r in &labeled {
        let t = data.targets[r].as_ref().expect("labeled");
        let mut best = 0;
        for j in 1..m {
            let better = t[j] > t[best] || (t[j] == t[best] && data.cost[[r, j]] < data.cost[[r, best]]);
            if better {
                best = j;
            }
        }
        counts[best] += 1;
        for (s, f) in sums[best * d..(best + 1) * d].iter_mut().zip(features.row(r)) {
            *s += f;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::AllCentroidsEmpty);
    }
    for j in 0..m {
        if counts[j] > 0 {
            sums[j * d..(j + 1) * d].iter_mut().for_each(|s| *s /= counts[j] as f64);
        }
    }
    let mut params = ParamStore::new();
    params.push("centroids", m, d, sums);
    params.push("active", 1, m, counts.iter().map(|&c| f64::from(u8::from(c > 0))).collect());
    Ok(RouterModel {
        kind: RouterKind::Kmeans,
        fusion,
        params,
        n_models: m,
        k: None,
        train_lambda: Some(data.lambda),
        config: None,
        fingerprint: String::new(),
    })
}

/// One-hot on the nearest active centroid.
pub(super) fn kmeans_predict(model: &RouterModel, x: &[f64]) -> Vec<f64> {
    let centroids = model.params.view(CENTROIDS);
    let active = model.params.tensor(ACTIVE);
    let mut best: Option<(f64, usize)> = None;
    for (j, c) in centroids.outer_iter().enumerate() {
        if active[j] == 0.0 {
            continue;
        }
        let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, j));
        }
    }
    let mut out = vec![0.0; model.n_models];
    out[best.expect("at least one active centroid").1] = 1.0;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{FusionMethod, FusionSpec};
    use crate::soft_label::{soft_target, Lambda};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn make(points: Vec<[f64; 2]>, quality: Vec<[f64; 3]>) -> TrainingData {
        let n = points.len();
        let image = Array2::from_shape_fn((n, 2), |(i, j)| points[i][j]);
        let quality = Array2::from_shape_fn((n, 3), |(i, j)| quality[i][j]);
        let cost = Array2::from_shape_fn((n, 3), |(_, j)| 0.1 * (j + 1) as f64);
        let targets = (0..n)
            .map(|i| {
                let y: Vec<u8> = quality.row(i).iter().map(|&v| v as u8).collect();
                soft_target(&y, &cost.row(i).to_vec(), Lambda::INFINITY).ok().map(|t| t.probs)
            })
            .collect();
        TrainingData { rows: (0..n).collect(), text: image.clone(), image, quality, cost, targets, groups: vec![0; n], lambda: Lambda::INFINITY }
    }

    fn fusion() -> FusionSpec {
        FusionSpec::new(FusionMethod::OnlyImage, 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn separated_clusters_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = Vec::new();
        let mut q = Vec::new();
        for i in 0..100 {
            let left = i % 2 == 0;
            let cx = if left { -5.0 } else { 5.0 };
            pts.push([cx + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            q.push(if left { [1.0, 0.0, 1.0] } else { [0.0, 1.0, 1.0] });
        }
        let model = train_kmeans(fusion(), &make(pts, q)).unwrap();
        for (x, want) in [([-4.5, 0.3], 0usize), ([5.2, -0.4], 1)] {
            let p = model.predict(&x, &x).unwrap();
            assert_eq!(model.route(&p).0, want);
        }
        // model 2 is never the cheapest correct model
        assert_eq!(model.params.tensor(ACTIVE), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn single_sample_wins_everywhere() {
        let model = train_kmeans(fusion(), &make(vec![[0.0, 0.0]], vec![[0.0, 0.0, 1.0]])).unwrap();
        for x in [[-9.0, 1.0], [3.0, 3.0]] {
            assert_eq!(model.predict(&x, &x).unwrap(), vec![0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn all_unlabeled_is_empty() {
        let r = train_kmeans(fusion(), &make(vec![[0.0, 0.0]], vec![[0.0, 0.0, 0.0]]));
        assert!(matches!(r, Err(Error::EmptyTrainSet)));
    }
}
