//! Training and evaluation of routers against a store, its embeddings and
//! a split, including the λ/k selection sweep on the dev split.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{Baseline, Decision};
use crate::error::{Error, Result};
use crate::fusion::{FusionMethod, FusionSpec, DEFAULT_FUSED_DIM};
use crate::log_store::{BenchStore, EmbeddingTable, SplitAssignment};
use crate::metrics::{build_report, throughput, EvalReport, ReportMeta};
use crate::par::{self, Exec};
use crate::routers::{train_router, training_fingerprint, RouterKind, RouterModel, TrainConfig, TrainHistory, TrainingData};
use crate::soft_label::Lambda;

/// Neighbor counts tried on the dev split.
pub const DEFAULT_K_GRID: [usize; 4] = [5, 10, 25, 50];

/// Salt separating the fusion-initialization stream from the head's.
const FUSION_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// A store with its embeddings and split.
#[derive(Clone, Copy)]
pub struct Workbench<'a> {
    pub store: &'a BenchStore,
    pub embeddings: &'a EmbeddingTable,
    pub split: &'a SplitAssignment,
}

/// Everything needed to train one router.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouterSpec {
    pub kind: RouterKind,
    pub fusion: FusionMethod,
    pub fusion_hidden: usize,
    pub lambda: Lambda,
    pub k: usize,
    pub config: TrainConfig,
}

impl RouterSpec {
    pub fn new(kind: RouterKind, fusion: FusionMethod, lambda: Lambda, config: TrainConfig) -> Self {
        Self { kind, fusion, fusion_hidden: DEFAULT_FUSED_DIM, lambda, k: DEFAULT_K_GRID[1], config }
    }
}

impl Workbench<'_> {
    pub fn train(&self, spec: &RouterSpec) -> Result<(RouterModel, Option<TrainHistory>)> {
        let rows = self.split.train();
        let data = TrainingData::new(self.store, self.embeddings, &rows, spec.lambda)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.config.seed ^ FUSION_SEED_SALT);
        let fusion = FusionSpec::with_hidden(
            spec.fusion,
            self.embeddings.dim_text(),
            self.embeddings.dim_image(),
            spec.fusion_hidden,
            &mut rng,
        )?;
        let (mut model, history) = train_router(spec.kind, fusion, &data, &spec.config, spec.k)?;
        model.fingerprint = training_fingerprint(self.store, self.split, spec.config.seed);
        model.quantize();
        Ok((model, history))
    }

    /// Report for `model` on `rows`, with the timing of its predict loop.
    pub fn evaluate(
        &self,
        model: &RouterModel,
        rows: &[usize],
        beta: f64,
        exec: Exec,
    ) -> Result<(EvalReport, ReportMeta)> {
        let start = Instant::now();
        let decisions = model.decide_with(exec, self.embeddings, rows)?;
        let seconds = start.elapsed().as_secs_f64().max(1e-9);
        let report = build_report(model.kind.name(), model.train_lambda, &decisions, self.store, rows, beta)?;
        let tokens: u64 = rows.iter().map(|&i| self.store.samples[i].prompt_tokens).sum();
        let meta = ReportMeta {
            throughput_ktok_s: throughput(tokens, seconds)?,
            predict_seconds: seconds,
            prompt_tokens: tokens,
            includes_embedding_time: false,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        Ok((report, meta))
    }

    pub fn baseline_decisions(&self, baseline: Baseline, rows: &[usize]) -> Result<Vec<Decision>> {
        baseline.decide(self.store, &self.split.train(), rows)
    }

    pub fn evaluate_baseline(&self, baseline: Baseline, rows: &[usize], beta: f64) -> Result<EvalReport> {
        let decisions = self.baseline_decisions(baseline, rows)?;
        build_report(baseline.name(), None, &decisions, self.store, rows, beta)
    }
}

/// One candidate of a sweep, scored on the dev split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub lambda: Lambda,
    pub k: Option<usize>,
    pub dev: EvalReport,
}

/// Outcome of a λ (and k) sweep: the dev-selected model and its test
/// report, plus every candidate's dev score.
#[derive(Clone, Debug)]
pub struct Selection {
    pub spec: RouterSpec,
    pub model: RouterModel,
    pub history: Option<TrainHistory>,
    pub test: EvalReport,
    pub meta: ReportMeta,
    pub candidates: Vec<Candidate>,
}

/// Trains one router per (λ, k) pair, picks the best dev Rank Score
/// (lower dev cost, then grid order, break ties) and reports it on test.
/// Routers that ignore λ or k get a single value of each. Candidates train
/// in parallel under `exec`; each is deterministic on its own.
pub fn sweep(
    bench: &Workbench<'_>,
    base: &RouterSpec,
    lambdas: &[Lambda],
    ks: &[usize],
    beta: f64,
    exec: Exec,
) -> Result<Selection> {
    let lambdas: Vec<Lambda> = if base.kind.uses_lambda() { lambdas.to_vec() } else { vec![base.lambda] };
    let n_train = bench.split.train().len();
    let ks: Vec<usize> = if base.kind.uses_k() {
        ks.iter().copied().filter(|&k| k <= n_train).collect()
    } else {
        vec![base.k]
    };
    if lambdas.is_empty() || ks.is_empty() {
        return Err(Error::InvalidArgument("empty sweep grid".into()));
    }
    let grid: Vec<(Lambda, usize)> = lambdas.iter().flat_map(|&l| ks.iter().map(move |&k| (l, k))).collect();
    let dev_rows = bench.split.dev();
    let trained = par::try_map_range(exec, grid.len(), |g| -> Result<_> {
        let (lambda, k) = grid[g];
        let spec = RouterSpec { lambda, k, ..base.clone() };
        let (model, history) = bench.train(&spec)?;
        let (dev, _) = bench.evaluate(&model, &dev_rows, beta, Exec::Sequential)?;
        Ok((spec, model, history, dev))
    })?;
    let best = (0..trained.len())
        .min_by(|&a, &b| {
            let (ra, rb) = (&trained[a].3, &trained[b].3);
            rb.rank_score
                .total_cmp(&ra.rank_score)
                .then(ra.avg_cost_display.total_cmp(&rb.avg_cost_display))
                .then(a.cmp(&b))
        })
        .expect("non-empty grid");
    let candidates = trained
        .iter()
        .map(|(spec, _, _, dev)| Candidate {
            lambda: spec.lambda,
            k: base.kind.uses_k().then_some(spec.k),
            dev: dev.clone(),
        })
        .collect();
    let (spec, model, history, _) = trained.into_iter().nth(best).expect("index in range");
    let (test, meta) = bench.evaluate(&model, &bench.split.test(), beta, exec)?;
    Ok(Selection { spec, model, history, test, meta, candidates })
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub router: String,
    pub trials: usize,
    pub avg_acc: (f64, f64),
    pub avg_cost_display: (f64, f64),
    pub rank_score: (f64, f64),
}

impl TrialSummary {
    pub fn from_reports(router: &str, reports: &[EvalReport]) -> Self {
        let col = |f: fn(&EvalReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
        Self {
            router: router.to_string(),
            trials: reports.len(),
            avg_acc: col(|r| r.avg_acc),
            avg_cost_display: col(|r| r.avg_cost_display),
            rank_score: col(|r| r.rank_score),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log_store::{ingest, make_split};
    use crate::synth::{generate, SynthConfig};

    fn fixture() -> (BenchStore, EmbeddingTable, SplitAssignment) {
        let bench = generate(&SynthConfig { n_samples: 400, dim_text: 4, dim_image: 4, ..SynthConfig::default() }).unwrap();
        let store = ingest(bench.records, &bench.prices).unwrap();
        let split = make_split(&store, 0).unwrap();
        (store, bench.embeddings, split)
    }

    #[test]
    fn sweep_is_deterministic_across_exec_modes() {
        let (store, emb, split) = fixture();
        let wb = Workbench { store: &store, embeddings: &emb, split: &split };
        let config = TrainConfig { learning_rate: 1e-2, epochs: 2, mlp_hidden: 16, ..TrainConfig::default() };
        let spec = RouterSpec::new(RouterKind::Mlp, FusionMethod::Concat, Lambda::ZERO, config);
        let grid = [Lambda::ZERO, Lambda::new(100.0).unwrap(), Lambda::INFINITY];
        let a = sweep(&wb, &spec, &grid, &DEFAULT_K_GRID, 0.1, Exec::Parallel).unwrap();
        let b = sweep(&wb, &spec, &grid, &DEFAULT_K_GRID, 0.1, Exec::Sequential).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.test, b.test);
        assert_eq!(a.candidates.len(), 3);
        let best = a.candidates.iter().map(|c| c.dev.rank_score).fold(f64::NEG_INFINITY, f64::max);
        assert!(a.candidates.iter().any(|c| c.lambda == a.spec.lambda && c.dev.rank_score == best));
    }

    #[test]
    fn knn_sweeps_over_k_only() {
        let (store, emb, split) = fixture();
        let wb = Workbench { store: &store, embeddings: &emb, split: &split };
        let spec = RouterSpec::new(RouterKind::Prknn, FusionMethod::Concat, Lambda::ZERO, TrainConfig::default());
        let sel = sweep(&wb, &spec, &Lambda::default_grid(), &DEFAULT_K_GRID, 0.1, Exec::default()).unwrap();
        assert_eq!(sel.candidates.len(), 4);
        assert!(sel.candidates.iter().all(|c| c.k.is_some()));
    }

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
