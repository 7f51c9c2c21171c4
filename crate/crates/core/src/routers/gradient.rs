//! Gradient-trained heads (Linear, MLP, CosineCls, RouterDC, ZOOTER) with
//! hand-written backward passes. Learnable fusion parameters are trained
//! jointly with the head.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RouterKind, RouterModel, TrainConfig, TrainingData};
use crate::error::{Error, Result};
use crate::fusion::FusionSpec;
use crate::nn::{check_gradient, column_sums, cosine_lr, init_bound, AdamW, GradCheck, ParamStore};
use crate::soft_label::entropy;

const LIN_W: usize = 0;
const LIN_B: usize = 1;
const MLP_W1: usize = 0;
const MLP_B1: usize = 1;
const MLP_W2: usize = 2;
const MLP_B2: usize = 3;
const COS_P: usize = 0;
const COS_K: usize = 1;
const COS_LOG_TAU: usize = 2;

const NORM_EPS: f64 = 1e-12;

/// Inputs and targets of one optimization step.
#[derive(Clone, Debug)]
pub struct GradientBatch {
    pub image: Array2<f64>,
    pub text: Array2<f64>,
    pub targets: Array2<f64>,
    /// Dataset ordinal per row; positives for the RouterDC contrastive term.
    pub groups: Vec<usize>,
}

impl GradientBatch {
    /// Batch of the given labeled positions of `data`.
    pub fn from_data(data: &TrainingData, positions: &[usize]) -> Self {
        Self {
            image: data.select_image(positions),
            text: data.select_text(positions),
            targets: data.target_matrix(positions),
            groups: positions.iter().map(|&p| data.groups[p]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Full-data soft loss before training (entry 0) and after every epoch.
/// ZOOTER reports the KL form, i.e. the soft loss minus the mean target
/// entropy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

enum HeadCache {
    Linear,
    Mlp { pre: Array2<f64>, hidden: Array2<f64> },
    Cosine { uhat: Array2<f64>, unorm: Vec<f64>, khat: Array2<f64>, knorm: Vec<f64>, tau: f64, logits: Array2<f64> },
}

fn init_head<R: Rng>(kind: RouterKind, d: usize, m: usize, config: &TrainConfig, rng: &mut R) -> ParamStore {
    let mut p = ParamStore::new();
    match kind {
        RouterKind::Linear => {
            p.push_uniform(rng, "w", d, m, init_bound(d));
            p.push_uniform(rng, "b", 1, m, init_bound(d));
        }
        RouterKind::Mlp | RouterKind::Zooter => {
            let h = config.mlp_hidden;
            p.push_uniform(rng, "w1", d, h, init_bound(d));
            p.push_uniform(rng, "b1", 1, h, init_bound(d));
            p.push_uniform(rng, "w2", h, m, init_bound(h));
            p.push_uniform(rng, "b2", 1, m, init_bound(h));
        }
        RouterKind::Cosine | RouterKind::RouterDc => {
            let e = config.proj_dim;
            p.push_uniform(rng, "proj", d, e, init_bound(d));
            p.push_uniform(rng, "prototypes", m, e, init_bound(e));
            p.push("log_tau", 1, 1, vec![config.init_temperature.ln()]);
        }
        _ => unreachable!("not a gradient router"),
    }
    p
}

fn normalize_rows(a: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let mut out = a.clone();
    let mut norms = Vec::with_capacity(a.nrows());
    for mut row in out.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt().max(NORM_EPS);
        row.mapv_inplace(|v| v / n);
        norms.push(n);
    }
    (out, norms)
}

/// Backward of `x̂ = x/‖x‖` row by row.
fn normalize_backward(xhat: &Array2<f64>, norms: &[f64], dxhat: &Array2<f64>) -> Array2<f64> {
    let mut dx = dxhat.clone();
    for (i, mut row) in dx.axis_iter_mut(Axis(0)).enumerate() {
        let xh = xhat.row(i);
        let proj = xh.dot(&row);
        Zip::from(&mut row).and(&xh).for_each(|d, &x| *d = (*d - x * proj) / norms[i]);
    }
    dx
}

fn head_forward(model: &RouterModel, z: ArrayView2<f64>) -> (Array2<f64>, HeadCache) {
    let p = &model.params;
    match model.kind {
        RouterKind::Linear => (z.dot(&p.view(LIN_W)) + p.view(LIN_B), HeadCache::Linear),
        RouterKind::Mlp | RouterKind::Zooter => {
            let pre = z.dot(&p.view(MLP_W1)) + p.view(MLP_B1);
            let hidden = pre.mapv(|v| v.max(0.0));
            let logits = hidden.dot(&p.view(MLP_W2)) + p.view(MLP_B2);
            (logits, HeadCache::Mlp { pre, hidden })
        }
        RouterKind::Cosine | RouterKind::RouterDc => {
            let (uhat, unorm) = normalize_rows(&z.dot(&p.view(COS_P)));
            let (khat, knorm) = normalize_rows(&p.view(COS_K).to_owned());
            let tau = p.tensor(COS_LOG_TAU)[0].exp();
            let logits = uhat.dot(&khat.t()) / tau;
            (logits.clone(), HeadCache::Cosine { uhat, unorm, khat, knorm, tau, logits })
        }
        _ => unreachable!("not a gradient router"),
    }
}

/// Backward through the head. `g` is ∂L/∂logits and `duhat_extra` an extra
/// gradient on the normalized projections. Returns the head gradient and
/// ∂L/∂z.
fn head_backward(
    model: &RouterModel,
    z: ArrayView2<f64>,
    cache: &HeadCache,
    g: &Array2<f64>,
    duhat_extra: Option<&Array2<f64>>,
) -> (Vec<f64>, Array2<f64>) {
    let p = &model.params;
    let mut grad = p.zeros_like();
    let dz = match cache {
        HeadCache::Linear => {
            p.grad_view(&mut grad, LIN_W).assign(&z.t().dot(g));
            p.grad_view(&mut grad, LIN_B).assign(&column_sums(&g.view()));
            g.dot(&p.view(LIN_W).t())
        }
        HeadCache::Mlp { pre, hidden } => {
            p.grad_view(&mut grad, MLP_W2).assign(&hidden.t().dot(g));
            p.grad_view(&mut grad, MLP_B2).assign(&column_sums(&g.view()));
            let mut dh = g.dot(&p.view(MLP_W2).t());
            Zip::from(&mut dh).and(pre).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            p.grad_view(&mut grad, MLP_W1).assign(&z.t().dot(&dh));
            p.grad_view(&mut grad, MLP_B1).assign(&column_sums(&dh.view()));
            dh.dot(&p.view(MLP_W1).t())
        }
        HeadCache::Cosine { uhat, unorm, khat, knorm, tau, logits } => {
            let ds = g / *tau;
            let d_log_tau = -(g * logits).sum();
            let mut duhat = ds.dot(khat);
            if let Some(extra) = duhat_extra {
                duhat += extra;
            }
            let dkhat = ds.t().dot(uhat);
            let du = normalize_backward(uhat, unorm, &duhat);
            let dk = normalize_backward(khat, knorm, &dkhat);
            p.grad_view(&mut grad, COS_P).assign(&z.t().dot(&du));
            p.grad_view(&mut grad, COS_K).assign(&dk);
            grad[p.specs()[COS_LOG_TAU].offset] = d_log_tau;
            du.dot(&p.view(COS_P).t())
        }
    };
    (grad, dz)
}

fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Softmax over the router head for already-fused features.
pub(super) fn head_probabilities(model: &RouterModel, z: ArrayView2<f64>) -> Array2<f64> {
    let (logits, _) = head_forward(model, z);
    log_softmax_rows(&logits).mapv(f64::exp)
}

/// Normalized-temperature cross-entropy over sample pairs: anchors with at
/// least one same-group partner, all other batch rows as the candidates.
/// Returns the loss and its gradient with respect to `uhat`.
fn contrastive(uhat: &Array2<f64>, groups: &[usize], temperature: f64) -> (f64, Array2<f64>) {
    let b = uhat.nrows();
    let sim = uhat.dot(&uhat.t());
    let anchors: Vec<usize> = (0..b).filter(|&i| (0..b).any(|j| j != i && groups[j] == groups[i])).collect();
    let mut grad_s = Array2::<f64>::zeros((b, b));
    if anchors.is_empty() {
        return (0.0, Array2::zeros(uhat.raw_dim()));
    }
    let a = anchors.len() as f64;
    let mut loss = 0.0;
    for &i in &anchors {
        let logits: Vec<f64> = (0..b).map(|j| if j == i { f64::NEG_INFINITY } else { sim[[i, j]] / temperature }).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let positives: Vec<usize> = (0..b).filter(|&j| j != i && groups[j] == groups[i]).collect();
        let np = positives.len() as f64;
        loss -= positives.iter().map(|&p| logits[p] - lse).sum::<f64>() / np;
        for j in 0..b {
            if j == i {
                continue;
            }
            let soft = (logits[j] - lse).exp();
            let pos = if groups[j] == groups[i] { 1.0 / np } else { 0.0 };
            grad_s[[i, j]] = (soft - pos) / (a * temperature);
        }
    }
    let duhat = grad_s.dot(uhat) + grad_s.t().dot(uhat);
    (loss / a, duhat)
}

struct Objective {
    /// Training objective (soft loss plus any contrastive term).
    total: f64,
    /// Soft loss as reported in the history.
    reported: f64,
    head_grad: Vec<f64>,
    fusion_grad: Vec<f64>,
}

fn objective(model: &RouterModel, batch: &GradientBatch, want_grad: bool) -> Result<Objective> {
    let (z, fcache) = model.fusion.forward(batch.image.view(), batch.text.view())?;
    let (logits, cache) = head_forward(model, z.view());
    let logp = log_softmax_rows(&logits);
    let n = batch.len() as f64;
    let soft = -Zip::from(&batch.targets).and(&logp).fold(0.0, |acc, &t, &lp| if t > 0.0 { acc + t * lp } else { acc }) / n;
    let reported = if model.kind == RouterKind::Zooter {
        let h: f64 = batch.targets.outer_iter().map(|t| entropy(&t.to_vec())).sum::<f64>() / n;
        soft - h
    } else {
        soft
    };
    let config = model.config.clone().unwrap_or_default();
    let mut total = soft;
    let mut duhat = None;
    if model.kind == RouterKind::RouterDc && config.contrastive_weight > 0.0 {
        if let HeadCache::Cosine { uhat, .. } = &cache {
            let (l, g) = contrastive(uhat, &batch.groups, config.contrastive_temperature);
            total += config.contrastive_weight * l;
            duhat = Some(g * config.contrastive_weight);
        }
    }
    if !want_grad {
        return Ok(Objective { total, reported, head_grad: Vec::new(), fusion_grad: Vec::new() });
    }
    let g = (logp.mapv(f64::exp) - &batch.targets) / n;
    let (head_grad, dz) = head_backward(model, z.view(), &cache, &g, duhat.as_ref());
    let mut fusion_grad = model.fusion.params.zeros_like();
    model.fusion.backward(&fcache, dz.view(), &mut fusion_grad);
    Ok(Objective { total, reported, head_grad, fusion_grad })
}

/// Training objective of `model` on `batch`.
pub fn training_loss(model: &RouterModel, batch: &GradientBatch) -> Result<f64> {
    Ok(objective(model, batch, false)?.total)
}

/// Analytic gradient of [`training_loss`]: head parameters, then fusion
/// parameters.
pub fn training_gradient(model: &RouterModel, batch: &GradientBatch) -> Result<(Vec<f64>, Vec<f64>)> {
    let obj = objective(model, batch, true)?;
    Ok((obj.head_grad, obj.fusion_grad))
}

/// Trains a gradient router on the labeled rows of `data`.
pub fn train_gradient_router(
    kind: RouterKind,
    fusion: FusionSpec,
    data: &TrainingData,
    config: &TrainConfig,
) -> Result<(RouterModel, TrainHistory)> {
    if !kind.is_gradient_trained() {
        return Err(Error::InvalidArgument(format!("{kind} is not gradient-trained")));
    }
    config.validate()?;
    let labeled = data.labeled();
    if labeled.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let head = init_head(kind, fusion.output_dim(), data.n_models(), config, &mut rng);
    let mut model = RouterModel {
        kind,
        fusion,
        params: head,
        n_models: data.n_models(),
        k: None,
        train_lambda: Some(data.lambda),
        config: Some(config.clone()),
        fingerprint: String::new(),
    };
    let full = GradientBatch::from_data(data, &labeled);
    let mut history = TrainHistory { epoch_loss: vec![objective(&model, &full, false)?.reported], steps: 0 };

    let mut head_opt = AdamW::new(model.params.len(), config.weight_decay);
    let mut fusion_opt = AdamW::new(model.fusion.params.len(), config.weight_decay);
    let total_steps = labeled.len().div_ceil(config.batch_size) * config.epochs;
    let mut order = labeled;
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = GradientBatch::from_data(data, chunk);
            let obj = objective(&model, &batch, true)?;
            if !obj.total.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            if obj.head_grad.iter().chain(&obj.fusion_grad).any(|g| !g.is_finite()) {
                return Err(Error::DivergedGradient { step });
            }
            let lr = cosine_lr(config.learning_rate, step, total_steps);
            head_opt.step(model.params.values_mut(), &obj.head_grad, lr);
            fusion_opt.step(model.fusion.params.values_mut(), &obj.fusion_grad, lr);
            step += 1;
        }
        let loss = objective(&model, &full, false)?.reported;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        history.epoch_loss.push(loss);
    }
    history.steps = step;
    Ok((model, history))
}

/// Builds an untrained gradient router with parameters drawn from `seed`;
/// used to probe gradients at random points.
pub fn random_gradient_router(
    kind: RouterKind,
    fusion: FusionSpec,
    n_models: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<RouterModel> {
    if !kind.is_gradient_trained() {
        return Err(Error::InvalidArgument(format!("{kind} is not gradient-trained")));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_head(kind, fusion.output_dim(), n_models, config, &mut rng);
    if let Some(slot) = params.slot("log_tau") {
        // Spread the temperature so checks do not always sit at the init value.
        params.tensor_mut(slot)[0] += rng.random_range(-0.5..0.5);
    }
    Ok(RouterModel {
        kind,
        fusion,
        params,
        n_models,
        k: None,
        train_lambda: None,
        config: Some(config.clone()),
        fingerprint: String::new(),
    })
}

/// Compares the analytic gradient of the training objective (head and
/// fusion parameters together) with central differences on up to
/// `max_coords` randomly chosen coordinates.
pub fn gradient_check(model: &RouterModel, batch: &GradientBatch, max_coords: usize, seed: u64) -> Result<GradCheck> {
    let obj = objective(model, batch, true)?;
    let nh = model.params.len();
    let mut point = model.params.values().to_vec();
    point.extend_from_slice(model.fusion.params.values());
    let mut analytic = obj.head_grad;
    analytic.extend(obj.fusion_grad);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<usize> = if point.len() <= max_coords {
        (0..point.len()).collect()
    } else {
        let mut c = rand::seq::index::sample(&mut rng, point.len(), max_coords).into_vec();
        // Always probe every fusion parameter block when present.
        c.extend(nh..point.len().min(nh + 8));
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut probe = model.clone();
    Ok(check_gradient(&point, &analytic, &coords, 1e-6, |x| {
        probe.params.values_mut().copy_from_slice(&x[..nh]);
        probe.fusion.params.values_mut().copy_from_slice(&x[nh..]);
        objective(&probe, batch, false).expect("shapes checked").total
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionMethod;
    use crate::soft_label::{soft_target, Lambda};
    use ndarray::Array2;

    fn random_batch(rng: &mut ChaCha8Rng, b: usize, dv: usize, dq: usize, m: usize) -> GradientBatch {
        let image = Array2::from_shape_fn((b, dv), |_| rng.random_range(-1.0..1.0));
        let text = Array2::from_shape_fn((b, dq), |_| rng.random_range(-1.0..1.0));
        let mut targets = Array2::from_shape_fn((b, m), |_| rng.random_range(0.0..1.0));
        for mut row in targets.axis_iter_mut(Axis(0)) {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let groups = (0..b).map(|i| i % 3).collect();
        GradientBatch { image, text, targets, groups }
    }

    fn small_config() -> TrainConfig {
        TrainConfig { mlp_hidden: 16, proj_dim: 6, ..TrainConfig::default() }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = small_config();
        for kind in RouterKind::GRADIENT {
            for method in [FusionMethod::Concat, FusionMethod::Gmu, FusionMethod::Mlb, FusionMethod::WeightedAverage] {
                let fusion = FusionSpec::with_hidden(method, 4, 4, 5, &mut rng).unwrap();
                let model = random_gradient_router(kind, fusion, 3, &config, rng.random()).unwrap();
                let batch = random_batch(&mut rng, 8, 4, 4, 3);
                let check = gradient_check(&model, &batch, 200, 1).unwrap();
                assert!(check.relative_error <= 1e-4, "{kind}/{method}: {}", check.relative_error);
            }
        }
    }

    #[test]
    fn mlp_gradient_on_eight_dim_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fusion = FusionSpec::new(FusionMethod::OnlyImage, 8, 8, &mut rng).unwrap();
        let model = random_gradient_router(RouterKind::Mlp, fusion, 4, &TrainConfig::default(), 5).unwrap();
        let batch = random_batch(&mut rng, 1, 8, 8, 4);
        let check = gradient_check(&model, &batch, 400, 2).unwrap();
        assert!(check.relative_error <= 1e-4, "{}", check.relative_error);
    }

    #[test]
    fn cosine_logits_ignore_feature_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fusion = FusionSpec::new(FusionMethod::OnlyImage, 5, 5, &mut rng).unwrap();
        let model = random_gradient_router(RouterKind::Cosine, fusion, 4, &small_config(), 1).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = model.predict(&x, &x).unwrap();
        for s in [1e-3, 0.5, 7.0, 1e4] {
            let xs: Vec<f64> = x.iter().map(|v| v * s).collect();
            let p = model.predict(&xs, &xs).unwrap();
            assert!(base.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));
            assert_eq!(model.route(&p), model.route(&base));
        }
    }

    fn separable_data(n: usize, seed: u64) -> TrainingData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let quality = Array2::from_shape_fn((n, 2), |(i, j)| {
            let pos = image[[i, 0]] + 0.5 * image[[i, 1]] > 0.0;
            f64::from(u8::from(pos == (j == 0)))
        });
        let cost = Array2::from_elem((n, 2), 0.1);
        let targets = (0..n)
            .map(|i| {
                let y: Vec<u8> = quality.row(i).iter().map(|&v| v as u8).collect();
                Some(soft_target(&y, &cost.row(i).to_vec(), Lambda::ZERO).unwrap().probs)
            })
            .collect();
        TrainingData {
            rows: (0..n).collect(),
            text: image.clone(),
            image,
            quality,
            cost,
            targets,
            groups: (0..n).map(|i| i % 2).collect(),
            lambda: Lambda::ZERO,
        }
    }

    fn fast() -> TrainConfig {
        TrainConfig { learning_rate: 0.05, batch_size: 16, epochs: 5, mlp_hidden: 32, proj_dim: 8, ..TrainConfig::default() }
    }

    #[test]
    fn linear_separates_two_models() {
        let data = separable_data(500, 1);
        let fusion = FusionSpec::new(FusionMethod::OnlyImage, 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (model, _) = train_gradient_router(RouterKind::Linear, fusion, &data, &fast()).unwrap();
        let probs = model.predict_batch(data.image.view(), data.text.view()).unwrap();
        let hits = (0..data.len()).filter(|&i| data.quality[[i, model.route(&probs.row(i).to_vec()).0]] == 1.0).count();
        assert!(hits as f64 / data.len() as f64 >= 0.98, "{hits}");
    }

    #[test]
    fn training_lowers_loss_and_is_deterministic() {
        let data = separable_data(300, 2);
        for kind in RouterKind::GRADIENT {
            let fusion = FusionSpec::new(FusionMethod::OnlyImage, 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let (a, hist) = train_gradient_router(kind, fusion.clone(), &data, &fast()).unwrap();
            assert_eq!(hist.epoch_loss.len(), 6);
            assert!(hist.epoch_loss[5] < hist.epoch_loss[0], "{kind}: {:?}", hist.epoch_loss);
            let (b, _) = train_gradient_router(kind, fusion, &data, &fast()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zooter_history_is_shifted_soft_loss() {
        let data = separable_data(100, 5);
        let fusion = FusionSpec::new(FusionMethod::OnlyImage, 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (_, zh) = train_gradient_router(RouterKind::Zooter, fusion.clone(), &data, &fast()).unwrap();
        let (_, mh) = train_gradient_router(RouterKind::Mlp, fusion, &data, &fast()).unwrap();
        // one-hot targets have zero entropy, so the two coincide
        assert_eq!(zh.epoch_loss, mh.epoch_loss);
    }

    #[test]
    fn contrastive_skips_anchors_without_partners() {
        let u = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 0.0, 1.0, 0.6, 0.8]).unwrap();
        let (loss, grad) = contrastive(&u, &[0, 1, 2], 0.1);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn rejects_non_gradient_kinds() {
        let data = separable_data(10, 1);
        let fusion = FusionSpec::new(FusionMethod::OnlyImage, 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(train_gradient_router(RouterKind::Knn, fusion, &data, &fast()).is_err());
    }
}
