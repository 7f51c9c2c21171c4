//! Self-checks run by `vlrb verify`: brute-force oracles, published-value
//! consistency and finite-difference gradients. Each check reports its
//! worst observed deviation against a fixed tolerance.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fusion::{FusionMethod, FusionSpec};
use crate::log_store::{ingest, make_split, BenchStore};
use crate::metrics::{build_report, rank_score};
use crate::pareto::{fit_frontier, Point};
use crate::par::{self, Exec};
use crate::pipeline::{RouterSpec, Workbench};
use crate::routers::{gradient_check, random_gradient_router, train_knn, train_prknn, GradientBatch, RouterKind, TrainConfig, TrainingData};
use crate::soft_label::{expected_cost, soft_target, verify_optimality, Lambda};
use crate::synth::{generate, SynthConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst deviation observed (check-specific units).
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

fn finish(name: &str, start: Instant, worst: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: worst <= tolerance,
        worst,
        tolerance,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Row with `n_correct` correct models among `m`, costs in `[0.01, 1]`.
pub fn random_row<R: Rng>(rng: &mut R, m: usize, n_correct: usize) -> (Vec<u8>, Vec<f64>) {
    let mut y = vec![0u8; m];
    for j in rand::seq::index::sample(rng, m, n_correct) {
        y[j] = 1;
    }
    let c = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
    (y, c)
}

/// Closed-form soft targets against the lattice minimizer of the
/// entropy-regularized expected cost.
pub fn soft_label_optimality(rows: usize, grid_step: f64, seed: u64, exec: Exec) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(Vec<u8>, Vec<f64>)> = (0..rows)
        .map(|_| {
            let m = rng.random_range(2..=6);
            let k = rng.random_range(2..=4.min(m));
            random_row(&mut rng, m, k)
        })
        .collect();
    let lambdas = [0.0, 1.0, 10.0, 100.0];
    let errs = par::try_map_range(exec, cases.len() * lambdas.len(), |t| {
        let (y, c) = &cases[t / lambdas.len()];
        verify_optimality(y, c, lambdas[t % lambdas.len()], 1.0, grid_step)
    })?;
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Ok(finish("soft-label optimality", start, worst, 2e-3, format!("{} rows × λ∈{{0,1,10,100}}, step {grid_step}", rows)))
}

/// λ = 0 is uniform over correct models; λ = ∞ is one-hot on the cheapest.
pub fn soft_label_limits(rows: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..rows {
        let m = rng.random_range(2..=8);
        let k = rng.random_range(1..=m);
        let (y, c) = random_row(&mut rng, m, k);
        let t0 = soft_target(&y, &c, Lambda::ZERO)?;
        let ti = soft_target(&y, &c, Lambda::INFINITY)?;
        let cheapest = (0..m).filter(|&j| y[j] == 1).min_by(|&a, &b| c[a].total_cmp(&c[b])).expect("k ≥ 1");
        for j in 0..m {
            let uniform = if y[j] == 1 { 1.0 / k as f64 } else { 0.0 };
            let one_hot = if j == cheapest { 1.0 } else { 0.0 };
            worst = worst.max((t0.probs[j] - uniform).abs()).max((ti.probs[j] - one_hot).abs());
        }
    }
    Ok(finish("soft-label limits", start, worst, 1e-15, format!("{rows} rows")))
}

/// Expected cost of the target never increases along the λ grid.
pub fn tilting_monotonicity(rows: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Lambda::default_grid();
    let mut worst: f64 = 0.0;
    for _ in 0..rows {
        let m = rng.random_range(2..=8);
        let k = rng.random_range(1..=m);
        let (y, c) = random_row(&mut rng, m, k);
        let costs = grid
            .iter()
            .map(|&l| Ok(expected_cost(&soft_target(&y, &c, l)?, &c)))
            .collect::<Result<Vec<_>>>()?;
        for w in costs.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
    }
    Ok(finish("tilting monotonicity", start, worst, 1e-12, format!("{rows} rows over the default λ grid")))
}

/// Published Cheapest row and the equal-argument identity.
pub fn rank_score_consistency(seed: u64) -> CheckResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let published = (rank_score(62.43, 100.0, 0.1) - 64.63).abs();
    let mut identity: f64 = 0.0;
    for _ in 0..100 {
        let a = rng.random_range(0.01..100.0);
        let b = rng.random_range(0.01..10.0);
        identity = identity.max((rank_score(a, a, b) - a).abs());
    }
    // Scale both deviations to their own tolerance so one number decides.
    let worst = (published / 0.05).max(identity / 1e-9);
    finish("rank-score consistency", start, worst, 1.0, format!("published |Δ| = {published:.4}, identity |Δ| = {identity:.2e}"))
}

/// Cost scaling leaves normalized cost, Rank Score and routing unchanged
/// when λ is rescaled by the inverse factor.
pub fn unit_invariance(seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let synth = generate(&SynthConfig { n_samples: 300, dim_text: 4, dim_image: 4, seed, ..SynthConfig::default() })?;
    let base = ingest(synth.records, &synth.prices)?;
    let split = make_split(&base, seed)?;
    let lambda = 1000.0;
    let config = TrainConfig { learning_rate: 1e-2, epochs: 2, mlp_hidden: 16, ..TrainConfig::default() };
    let run = |store: &BenchStore, lambda: Lambda| -> Result<Vec<(Vec<usize>, f64, f64)>> {
        let wb = Workbench { store, embeddings: &synth.embeddings, split: &split };
        let test = split.test();
        let mut out = Vec::new();
        for kind in [RouterKind::Knn, RouterKind::Kmeans, RouterKind::Linear] {
            let spec = RouterSpec { k: 5, ..RouterSpec::new(kind, FusionMethod::Concat, lambda, config.clone()) };
            let (model, _) = wb.train(&spec)?;
            let d = model.decide_with(Exec::Sequential, wb.embeddings, &test)?;
            let r = build_report(kind.name(), None, &d, store, &test, 0.1)?;
            out.push((d.iter().map(|x| x.0).collect(), r.cost_norm, r.rank_score));
        }
        let targets = (0..store.n_samples())
            .filter_map(|i| soft_target(store.quality_row(i), store.cost_row(i), lambda).ok())
            .map(|t| t.argmax())
            .collect();
        out.push((targets, 0.0, 0.0));
        Ok(out)
    };
    let reference = run(&base, Lambda::new(lambda)?)?;
    let mut worst: f64 = 0.0;
    for s in [0.01, 1.0, 100.0] {
        let scaled = run(&base.scaled_costs(s), Lambda::new(lambda / s)?)?;
        for (a, b) in reference.iter().zip(&scaled) {
            if a.0 != b.0 {
                worst = f64::INFINITY;
            }
            worst = worst.max((a.1 - b.1).abs()).max((a.2 - b.2).abs());
        }
    }
    Ok(finish("unit invariance", start, worst, 1e-9, "knn, kmeans, linear and target argmax; s ∈ {0.01, 1, 100}".into()))
}

/// Noise-free frontier recovery for (a, b, c) = (30, 2, 60).
pub fn pareto_recovery() -> Result<CheckResult> {
    let start = Instant::now();
    let truth = [30.0, 2.0, 60.0];
    let points: Vec<Point> = [0.1, 0.3, 0.7, 1.5, 3.0]
        .iter()
        .map(|&x| Point::new(x, truth[0] * (1.0 - f64::exp(-truth[1] * x)) + truth[2]))
        .collect();
    let fit = fit_frontier(&points)?;
    let rel = [fit.a, fit.b, fit.c].iter().zip(truth).map(|(g, t)| ((g - t) / t).abs()).fold(0.0, f64::max);
    let r2 = fit.r_squared.unwrap_or(f64::NEG_INFINITY);
    let worst = (rel / 1e-4).max(if r2 >= 0.999999 { 0.0 } else { f64::INFINITY });
    Ok(finish("pareto recovery", start, worst, 1.0, format!("max relative error {rel:.2e}, R² = {r2}")))
}

/// Finite-difference gradients for every gradient router over each
/// learnable fusion, at `points` random parameter draws.
pub fn gradient_checks(points: usize, seed: u64, exec: Exec) -> Result<CheckResult> {
    let start = Instant::now();
    let config = TrainConfig { mlp_hidden: 8, proj_dim: 4, ..TrainConfig::default() };
    let fusions = [FusionMethod::Concat, FusionMethod::WeightedAverage, FusionMethod::Gmu, FusionMethod::Mlb];
    let jobs: Vec<(RouterKind, FusionMethod, usize)> = RouterKind::GRADIENT
        .iter()
        .flat_map(|&k| fusions.iter().flat_map(move |&f| (0..points).map(move |p| (k, f, p))))
        .collect();
    let errs = par::try_map_range(exec, jobs.len(), |t| -> Result<f64> {
        let (kind, method, p) = jobs[t];
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let fusion = FusionSpec::with_hidden(method, 4, 4, 5, &mut rng)?;
        let mut model = random_gradient_router(kind, fusion, 3, &config, seed ^ p as u64)?;
        if method == FusionMethod::WeightedAverage {
            model.fusion.params.values_mut()[0] = rng.random_range(-2.0..2.0);
        }
        let b = 6;
        let image = Array2::from_shape_fn((b, 4), |_| rng.random_range(-1.0..1.0));
        let text = Array2::from_shape_fn((b, 4), |_| rng.random_range(-1.0..1.0));
        let mut targets = Array2::from_shape_fn((b, 3), |_| rng.random_range(0.0..1.0));
        for mut row in targets.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        let batch = GradientBatch { image, text, targets, groups: (0..b).map(|i| i % 2).collect() };
        Ok(gradient_check(&model, &batch, 400, seed)?.relative_error)
    })?;
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Ok(finish("gradient checks", start, worst, 1e-4, format!("{} router×fusion pairs × {points} points", RouterKind::GRADIENT.len() * fusions.len())))
}

/// KNN and PRkNN predictions against a full sort of all distances.
pub fn neighbor_oracles(n: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, d) = (4, 3);
    // Integer-valued features force distance ties.
    let image = Array2::from_shape_fn((n, d), |_| f64::from(rng.random_range(-3i32..=3)));
    let quality = Array2::from_shape_fn((n, m), |_| f64::from(rng.random_range(0u8..2)));
    let cost = Array2::from_shape_fn((n, m), |_| rng.random_range(0.01..1.0));
    let lambda = Lambda::new(5.0)?;
    let targets: Vec<Option<Vec<f64>>> = (0..n)
        .map(|i| {
            let y: Vec<u8> = quality.row(i).iter().map(|&v| v as u8).collect();
            soft_target(&y, &cost.row(i).to_vec(), lambda).ok().map(|t| t.probs)
        })
        .collect();
    let data = TrainingData {
        rows: (0..n).collect(),
        text: image.clone(),
        image: image.clone(),
        quality: quality.clone(),
        cost: cost.clone(),
        targets: targets.clone(),
        groups: vec![0; n],
        lambda,
    };
    let fusion = FusionSpec::new(FusionMethod::OnlyImage, d, d, &mut rng)?;
    let labeled: Vec<usize> = (0..n).filter(|&i| targets[i].is_some()).collect();
    let mut worst: f64 = 0.0;
    for k in [1, 5, 17] {
        let knn = train_knn(fusion.clone(), &data, k)?;
        let prknn = train_prknn(fusion.clone(), &data, k)?;
        for _ in 0..50 {
            let x: Vec<f64> = (0..d).map(|_| f64::from(rng.random_range(-3i32..=3))).collect();
            let sorted = |pool: &[usize]| {
                let mut all: Vec<(f64, usize)> = pool
                    .iter()
                    .enumerate()
                    .map(|(pos, &i)| (image.row(i).iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum(), pos))
                    .collect();
                all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                all.into_iter().take(k).map(|(_, pos)| pool[pos]).collect::<Vec<_>>()
            };
            let near = sorted(&labeled);
            let mut mean = vec![0.0; m];
            for &i in &near {
                for (a, t) in mean.iter_mut().zip(targets[i].as_ref().expect("labeled")) {
                    *a += t;
                }
            }
            let z: f64 = mean.iter().sum();
            let got = knn.predict(&x, &x)?;
            for (g, w) in got.iter().zip(&mean) {
                worst = worst.max((g - w / z).abs());
            }

            let all: Vec<usize> = (0..n).collect();
            let near = sorted(&all);
            let mut score = vec![0.0f64; m];
            for a in 0..m {
                for b in 0..m {
                    if a == b {
                        continue;
                    }
                    let (mut ab, mut ba) = (0, 0);
                    for &i in &near {
                        let pref = |p: usize, q: usize| {
                            let (yp, yq) = (quality[[i, p]], quality[[i, q]]);
                            (yp == 1.0 && yq == 0.0) || (yp == 1.0 && yq == 1.0 && cost[[i, p]] < cost[[i, q]])
                        };
                        ab += usize::from(pref(a, b));
                        ba += usize::from(pref(b, a));
                    }
                    score[a] += match ab.cmp(&ba) {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Less => -1.0,
                        std::cmp::Ordering::Equal => 0.0,
                    };
                }
            }
            let mx = score.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = score.iter().map(|s| (s - mx).exp()).collect();
            let ez: f64 = e.iter().sum();
            let got = prknn.predict(&x, &x)?;
            for (g, w) in got.iter().zip(&e) {
                worst = worst.max((g - w / ez).abs());
            }
        }
    }
    Ok(finish("neighbor oracles", start, worst, 0.0, format!("{n}-point store, k ∈ {{1, 5, 17}}")))
}

/// The full suite at the sizes used by the CLI.
pub fn run_all(seed: u64, exec: Exec) -> Result<Vec<CheckResult>> {
    Ok(vec![
        soft_label_optimality(20, 1e-3, seed, exec)?,
        soft_label_limits(1000, seed)?,
        tilting_monotonicity(1000, seed)?,
        rank_score_consistency(seed),
        unit_invariance(seed)?,
        pareto_recovery()?,
        gradient_checks(3, seed, exec)?,
        neighbor_oracles(200, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let exec = Exec::default();
        let checks = vec![
            soft_label_optimality(3, 1e-3, 1, exec).unwrap(),
            soft_label_limits(100, 1).unwrap(),
            tilting_monotonicity(100, 1).unwrap(),
            rank_score_consistency(1),
            pareto_recovery().unwrap(),
            gradient_checks(1, 1, exec).unwrap(),
            neighbor_oracles(60, 1).unwrap(),
            unit_invariance(1).unwrap(),
        ];
        for c in checks {
            assert!(c.passed, "{c:?}");
        }
    }
}
