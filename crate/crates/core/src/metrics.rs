//! Accuracy, cost, normalized cost, Rank Score and throughput of a routing
//! policy, plus leaderboard tables.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::baselines::Decision;
use crate::error::{Error, Result};
use crate::log_store::{BenchStore, DISPLAY_SCALE};
use crate::soft_label::Lambda;

pub const DEFAULT_BETA: f64 = 0.1;

/// `(avg_acc in percent, avg_cost in dollars per sample)` of `decisions`
/// over `rows`.
pub fn evaluate(decisions: &[Decision], store: &BenchStore, rows: &[usize]) -> Result<(f64, f64)> {
    if decisions.len() != rows.len() {
        return Err(Error::DecisionCountMismatch { expected: rows.len(), found: decisions.len() });
    }
    if rows.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let mut hits = 0usize;
    let mut cost = 0.0;
    for (&i, d) in rows.iter().zip(decisions) {
        hits += usize::from(store.correct(i, d.0));
        cost += store.cost(i, d.0);
    }
    let n = rows.len() as f64;
    Ok((100.0 * hits as f64 / n, cost / n))
}

/// Log-scaled position of `avg_cost` between `c_max` (0) and `c_min` (100).
pub fn cost_norm(avg_cost: f64, c_min: f64, c_max: f64) -> f64 {
    if c_min == c_max {
        return 100.0;
    }
    let v = 100.0 * (c_max.log2() - avg_cost.log2()) / (c_max.log2() - c_min.log2());
    v.clamp(0.0, 100.0)
}

/// β-weighted harmonic mean of accuracy and normalized cost.
pub fn rank_score(avg_acc: f64, cost_norm: f64, beta: f64) -> f64 {
    let denom = beta * avg_acc + cost_norm;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta) * avg_acc * cost_norm / denom
    }
}

/// Thousands of prompt tokens routed per second.
pub fn throughput(total_prompt_tokens: u64, wall_seconds: f64) -> Result<f64> {
    if wall_seconds <= 0.0 || !wall_seconds.is_finite() {
        return Err(Error::ZeroDuration);
    }
    Ok(total_prompt_tokens as f64 / wall_seconds / 1000.0)
}

/// Cheapest and most expensive single-model mean cost over `rows`, in
/// display units ($/10K samples).
pub fn cost_range(store: &BenchStore, rows: &[usize]) -> Result<(f64, f64)> {
    if rows.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    if store.n_models() < 2 {
        return Err(Error::InvalidArgument("cost range needs at least two models".into()));
    }
    let (_, cost) = store.column_means(rows);
    let lo = cost.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cost.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo * DISPLAY_SCALE, hi * DISPLAY_SCALE))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub n_samples: usize,
    pub avg_acc: f64,
    pub avg_cost_display: f64,
}

/// Deterministic part of an evaluation. Wall-clock measurements live in
/// [`ReportMeta`] so re-running an evaluation reproduces this byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub router: String,
    pub lambda: Option<Lambda>,
    pub n_samples: usize,
    pub avg_acc: f64,
    pub avg_cost_per_sample: f64,
    pub avg_cost_display: f64,
    pub cost_norm: f64,
    pub rank_score: f64,
    pub beta: f64,
    pub cost_range: (f64, f64),
    pub per_dataset: BTreeMap<String, DatasetScore>,
}

/// Run-dependent measurements that accompany an [`EvalReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub throughput_ktok_s: f64,
    pub predict_seconds: f64,
    pub prompt_tokens: u64,
    /// Whether the timed region covers embedding extraction. Embeddings
    /// are precomputed here, so this is always false.
    pub includes_embedding_time: bool,
    pub created_unix: u64,
}

pub fn build_report(
    router: &str,
    lambda: Option<Lambda>,
    decisions: &[Decision],
    store: &BenchStore,
    rows: &[usize],
    beta: f64,
) -> Result<EvalReport> {
    let (avg_acc, avg_cost) = evaluate(decisions, store, rows)?;
    let (c_min, c_max) = cost_range(store, rows)?;
    let display = avg_cost * DISPLAY_SCALE;
    let cn = cost_norm(display, c_min, c_max);
    let names = store.datasets();
    let ids = store.dataset_ids();
    let mut per: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for (&i, d) in rows.iter().zip(decisions) {
        let e = per.entry(names[ids[i]].clone()).or_default();
        e.0 += 1;
        e.1 += usize::from(store.correct(i, d.0));
        e.2 += store.cost(i, d.0);
    }
    let per_dataset = per
        .into_iter()
        .map(|(name, (n, hits, cost))| {
            let score = DatasetScore {
                n_samples: n,
                avg_acc: 100.0 * hits as f64 / n as f64,
                avg_cost_display: cost / n as f64 * DISPLAY_SCALE,
            };
            (name, score)
        })
        .collect();
    Ok(EvalReport {
        router: router.to_string(),
        lambda,
        n_samples: rows.len(),
        avg_acc,
        avg_cost_per_sample: avg_cost,
        avg_cost_display: display,
        cost_norm: cn,
        rank_score: rank_score(avg_acc, cn, beta),
        beta,
        cost_range: (c_min, c_max),
        per_dataset,
    })
}

/// Field-wise mean of several reports of one router on the same rows,
/// e.g. repeated training trials. λ is kept only when every trial agrees.
pub fn mean_report(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports.first().ok_or(Error::EmptyInput)?;
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mut per_dataset = BTreeMap::new();
    for (name, s) in &first.per_dataset {
        let scores: Vec<&DatasetScore> = reports.iter().filter_map(|r| r.per_dataset.get(name)).collect();
        if scores.len() != reports.len() {
            return Err(Error::InvalidArgument(format!("dataset `{name}` missing from some reports")));
        }
        let k = scores.len() as f64;
        per_dataset.insert(
            name.clone(),
            DatasetScore {
                n_samples: s.n_samples,
                avg_acc: scores.iter().map(|s| s.avg_acc).sum::<f64>() / k,
                avg_cost_display: scores.iter().map(|s| s.avg_cost_display).sum::<f64>() / k,
            },
        );
    }
    Ok(EvalReport {
        router: first.router.clone(),
        lambda: first.lambda.filter(|l| reports.iter().all(|r| r.lambda == Some(*l))),
        n_samples: first.n_samples,
        avg_acc: mean(&|r| r.avg_acc),
        avg_cost_per_sample: mean(&|r| r.avg_cost_per_sample),
        avg_cost_display: mean(&|r| r.avg_cost_display),
        cost_norm: mean(&|r| r.cost_norm),
        rank_score: mean(&|r| r.rank_score),
        beta: first.beta,
        cost_range: first.cost_range,
        per_dataset,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub router: String,
    pub lambda: String,
    pub avg_acc: f64,
    /// $/10K samples.
    pub avg_cost: f64,
    pub rank_score: f64,
    pub rank: usize,
    pub throughput: Option<f64>,
}

impl LeaderboardRow {
    pub fn from_report(report: &EvalReport, throughput: Option<f64>) -> Self {
        Self {
            router: report.router.clone(),
            lambda: report.lambda.map_or_else(|| "-".to_string(), |l| l.to_string()),
            avg_acc: report.avg_acc,
            avg_cost: report.avg_cost_display,
            rank_score: report.rank_score,
            rank: 0,
            throughput,
        }
    }
}

/// Sorts rows by Rank Score (descending, lower cost first on ties) and
/// assigns ranks from 1. The oracle is listed first with rank 0, as a
/// reference rather than a competitor.
pub fn rank_rows(rows: &mut [LeaderboardRow]) {
    rows.sort_by(|a, b| {
        let oracle = (b.router == "oracle").cmp(&(a.router == "oracle"));
        oracle
            .then(b.rank_score.total_cmp(&a.rank_score))
            .then(a.avg_cost.total_cmp(&b.avg_cost))
            .then(a.router.cmp(&b.router))
    });
    let mut next = 1;
    for row in rows.iter_mut() {
        if row.router == "oracle" {
            row.rank = 0;
        } else {
            row.rank = next;
            next += 1;
        }
    }
}

pub fn write_leaderboard_csv<W: Write>(w: W, rows: &[LeaderboardRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["router", "lambda", "avg_acc", "avg_cost", "rank_score", "rank", "throughput"])?;
    for r in rows {
        out.write_record([
            r.router.clone(),
            r.lambda.clone(),
            format!("{:.2}", r.avg_acc),
            format!("{:.2}", r.avg_cost),
            format!("{:.2}", r.rank_score),
            r.rank.to_string(),
            r.throughput.map_or_else(String::new, |t| format!("{t:.2}")),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Group of a dataset name: the prefix before `/`, or `all`.
pub fn dataset_group(dataset: &str) -> &str {
    dataset.split_once('/').map_or("all", |(g, _)| g)
}

/// Per-dataset table for one group: two rows per dataset (accuracy and
/// cost) with one column per report.
pub fn write_group_csv<W: Write>(w: W, group: &str, reports: &[EvalReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["group".to_string(), "dataset".to_string(), "metric".to_string()];
    header.extend(reports.iter().map(|r| r.router.clone()));
    out.write_record(&header)?;
    let mut datasets: Vec<&String> = reports
        .iter()
        .flat_map(|r| r.per_dataset.keys())
        .filter(|d| dataset_group(d) == group)
        .collect();
    datasets.sort();
    datasets.dedup();
    for d in datasets {
        for (metric, pick) in [("avg_acc", 0), ("avg_cost", 1)] {
            let mut rec = vec![group.to_string(), d.clone(), metric.to_string()];
            for r in reports {
                rec.push(r.per_dataset.get(d).map_or_else(String::new, |s| {
                    let v = if pick == 0 { s.avg_acc } else { s.avg_cost_display };
                    format!("{v:.2}")
                }));
            }
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}
