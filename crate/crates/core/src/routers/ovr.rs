//! One-vs-rest router: an independent logistic regression per model
//! predicting whether that model answers correctly.

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{RouterKind, RouterModel, TrainConfig, TrainingData};
use crate::baselines::Decision;
use crate::error::{Error, Result};
use crate::fusion::FusionSpec;
use crate::nn::{column_sums, cosine_lr, AdamW, ParamStore};

const WEIGHTS: usize = 0;
const BIAS: usize = 1;
const CONSTANT_MASK: usize = 2;
const CONSTANT_RATE: usize = 3;
const MEAN_COST: usize = 4;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains all `M` classifiers at once; the loss is separable, so each column
/// sees only its own gradient. Columns with a single class get a constant
/// classifier at their empirical rate.
pub fn train_ovr(fusion: FusionSpec, data: &TrainingData, config: &TrainConfig) -> Result<RouterModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let features = data.fused(&fusion)?;
    let (n, d) = features.dim();
    let m = data.n_models();
    let rate: Vec<f64> = data.quality.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let mask: Vec<f64> = rate.iter().map(|&r| f64::from(u8::from(r == 0.0 || r == 1.0))).collect();
    let mean_cost = data.cost.mean_axis(Axis(0)).expect("non-empty").to_vec();

    let mut params = ParamStore::new();
    params.push("w", d, m, vec![0.0; d * m]);
    params.push("b", 1, m, vec![0.0; m]);
    params.push("constant_mask", 1, m, mask.clone());
    params.push("constant_rate", 1, m, rate);
    params.push("mean_cost", 1, m, mean_cost);

    // Only the weights and biases are optimized.
    let n_trainable = d * m + m;
    let mut opt = AdamW::new(n_trainable, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total = steps_per_epoch * config.epochs;
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let x = features.select(Axis(0), batch);
            let y = data.quality.select(Axis(0), batch);
            let logits = x.dot(&params.view(WEIGHTS)) + params.view(BIAS);
            let mut g = logits.mapv(sigmoid) - &y;
            for (j, &c) in mask.iter().enumerate() {
                if c == 1.0 {
                    g.column_mut(j).fill(0.0);
                }
            }
            g /= batch.len() as f64;
            let mut grad = vec![0.0; n_trainable];
            let gw = x.t().dot(&g);
            grad[..d * m].copy_from_slice(gw.as_slice().expect("standard layout"));
            grad[d * m..].copy_from_slice(column_sums(&g.view()).as_slice().expect("standard layout"));
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::DivergedGradient { step });
            }
            let lr = cosine_lr(config.learning_rate, step, total);
            opt.step(&mut params.values_mut()[..n_trainable], &grad, lr);
            step += 1;
        }
    }
    Ok(RouterModel {
        kind: RouterKind::Ovr,
        fusion,
        params,
        n_models: m,
        k: None,
        train_lambda: None,
        config: Some(config.clone()),
        fingerprint: String::new(),
    })
}

/// Independent per-model probabilities of a correct answer.
pub fn ovr_correctness(model: &RouterModel, x: &[f64]) -> Vec<f64> {
    let w = model.params.view(WEIGHTS);
    let b = model.params.tensor(BIAS);
    let mask = model.params.tensor(CONSTANT_MASK);
    let rate = model.params.tensor(CONSTANT_RATE);
    (0..model.n_models)
        .map(|j| {
            if mask[j] == 1.0 {
                rate[j]
            } else {
                let z: f64 = w.column(j).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[j];
                sigmoid(z)
            }
        })
        .collect()
}

pub(super) fn normalized(p: &[f64]) -> Vec<f64> {
    let z: f64 = p.iter().sum();
    if z > 0.0 {
        p.iter().map(|v| v / z).collect()
    } else {
        vec![1.0 / p.len() as f64; p.len()]
    }
}

pub(super) fn route(model: &RouterModel, probs: &[f64]) -> Decision {
    let cost = model.params.tensor(MEAN_COST);
    let mut best = 0;
    for j in 1..probs.len() {
        if probs[j] > probs[best] || (probs[j] == probs[best] && cost[j] < cost[best]) {
            best = j;
        }
    }
    Decision(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionMethod;
    use crate::soft_label::Lambda;
    use ndarray::Array2;
    use rand::Rng;

    fn ovr_correctness_batch(model: &RouterModel, z: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((z.nrows(), model.n_models));
        for (i, row) in z.outer_iter().enumerate() {
            out.row_mut(i).assign(&ndarray::Array1::from(ovr_correctness(model, &row.to_vec())));
        }
        out
    }

    fn separable(n: usize, seed: u64) -> TrainingData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        // model 0 correct iff x0 > 0; model 1 always correct; model 2 iff x1 < x0
        let quality = Array2::from_shape_fn((n, 3), |(i, j)| match j {
            0 => f64::from(u8::from(image[[i, 0]] > 0.0)),
            1 => 1.0,
            _ => f64::from(u8::from(image[[i, 1]] < image[[i, 0]])),
        });
        let cost = Array2::from_shape_fn((n, 3), |(_, j)| [0.3, 0.2, 0.1][j]);
        TrainingData {
            rows: (0..n).collect(),
            text: image.clone(),
            image,
            quality,
            cost,
            targets: vec![None; n],
            groups: vec![0; n],
            lambda: Lambda::ZERO,
        }
    }

    fn config() -> TrainConfig {
        TrainConfig { learning_rate: 0.1, epochs: 30, batch_size: 32, weight_decay: 0.0, ..TrainConfig::default() }
    }

    fn fusion() -> FusionSpec {
        FusionSpec::new(FusionMethod::OnlyImage, 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn separable_columns_are_learned() {
        let data = separable(400, 1);
        let model = train_ovr(fusion(), &data, &config()).unwrap();
        let z = data.fused(&model.fusion).unwrap();
        let p = ovr_correctness_batch(&model, &z);
        for j in [0, 2] {
            let acc = (0..data.len())
                .filter(|&i| (p[[i, j]] > 0.5) == (data.quality[[i, j]] == 1.0))
                .count() as f64
                / data.len() as f64;
            assert!(acc >= 0.95, "model {j}: {acc}");
        }
        // constant-correct column
        assert!(p.column(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn routing_matches_highest_correctness_probability() {
        let train = separable(400, 2);
        let model = train_ovr(fusion(), &train, &config()).unwrap();
        let held_out = separable(20, 3);
        let z = held_out.fused(&model.fusion).unwrap();
        let mean_cost = [0.3, 0.2, 0.1];
        for row in z.outer_iter() {
            let x = row.to_vec();
            // independent recomputation of the per-model probabilities
            let w = model.params.view(WEIGHTS);
            let b = model.params.tensor(BIAS);
            let raw: Vec<f64> = (0..3)
                .map(|j| if j == 1 { 1.0 } else { 1.0 / (1.0 + (-(w[[0, j]] * x[0] + w[[1, j]] * x[1] + b[j])).exp()) })
                .collect();
            let mut want = 0;
            for j in 1..3 {
                if raw[j] > raw[want] || (raw[j] == raw[want] && mean_cost[j] < mean_cost[want]) {
                    want = j;
                }
            }
            let probs = model.predict(&x, &x).unwrap();
            assert_eq!(model.route(&probs).0, want);
        }
    }
}
