use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use vlrb::baselines::Baseline;
use vlrb::fusion::FusionMethod;
use vlrb::log_store::{
    ingest as build_store, load_embeddings, make_split, manifest_path, read_prices, read_records, write_embeddings,
    write_prices, write_records, BenchStore, EmbeddingTable, ManifestRow, SplitAssignment,
};
use vlrb::metrics::{dataset_group, mean_report, rank_rows, write_group_csv, write_leaderboard_csv, EvalReport, LeaderboardRow, ReportMeta};
use vlrb::par::Exec;
use vlrb::pareto::{fit_frontier, pareto_set, sample_curve, write_curve_csv, FrontierFit, Point};
use vlrb::pipeline::{mean_std, sweep, Candidate, RouterSpec, TrialSummary, Workbench, DEFAULT_K_GRID};
use vlrb::routers::{load_checkpoint, save_checkpoint, training_fingerprint, RouterKind, TrainConfig, TrainHistory};
use vlrb::soft_label::Lambda;
use vlrb::synth::{generate, SynthConfig};
use vlrb::verify;

use crate::run::{sha256_bytes, write_file, Run};
use crate::{CliError, EvaluateArgs, IngestArgs, RunArgs, SplitArgs, SynthArgs, TrainArgs, VerifyArgs};

const STORE: &str = "store.json";
const SPLIT: &str = "split.json";
const EMBEDDINGS: &str = "embeddings.vlrb";

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("artifact serializes");
    out.push(b'\n');
    out
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn open_file(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| CliError::io(path, e))
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        n_samples: a.samples,
        n_models: a.models,
        n_datasets: a.datasets,
        dim_text: a.dim_text,
        dim_image: a.dim_image,
        cluster_affinity: a.affinity,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let bench = generate(&cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;

    let logs = a.out.join("logs.jsonl");
    let f = fs::File::create(&logs).map_err(|e| CliError::io(&logs, e))?;
    write_records(std::io::BufWriter::new(f), &bench.records)?;
    let prices = a.out.join("prices.csv");
    write_prices(fs::File::create(&prices).map_err(|e| CliError::io(&prices, e))?, &bench.prices)?;

    // Records are grouped by sample in first-appearance order, which is the
    // order ingest assigns to store rows.
    let mut rows: Vec<ManifestRow> = Vec::with_capacity(a.samples);
    for r in &bench.records {
        if rows.last().is_none_or(|m| m.dataset != r.dataset_name || m.index != r.sample_index) {
            rows.push(ManifestRow { dataset: r.dataset_name.clone(), index: r.sample_index });
        }
    }
    write_embeddings(&a.out.join(EMBEDDINGS), &bench.embeddings, Some(&rows))?;
    println!(
        "synth: {} samples × {} models → {}",
        a.samples,
        a.models,
        a.out.display()
    );
    Ok(())
}

pub fn ingest(a: &IngestArgs) -> Result<(), CliError> {
    let records = read_records(std::io::BufReader::new(open_file(&a.logs)?))?;
    let prices = read_prices(open_file(&a.prices)?)?;
    let store = build_store(records, &prices)?;

    let mut run = Run::create(&a.out)?;
    store.save_json(&run.path(STORE))?;
    run.manifest.store = Some(run.record(STORE)?);
    if let Some(src) = &a.embeddings {
        load_embeddings(src, &store)?;
        let dst = run.path(EMBEDDINGS);
        if fs::canonicalize(src).ok() != fs::canonicalize(&dst).ok() {
            fs::copy(src, &dst).map_err(|e| CliError::io(src, e))?;
            let sidecar = manifest_path(src);
            if sidecar.exists() {
                fs::copy(&sidecar, manifest_path(&dst)).map_err(|e| CliError::io(&sidecar, e))?;
            }
        }
        run.manifest.embeddings = Some(run.record(EMBEDDINGS)?);
        if manifest_path(&dst).exists() {
            let rel = manifest_path(Path::new(EMBEDDINGS));
            run.manifest.embeddings_manifest = Some(run.record(&rel.to_string_lossy())?);
        }
    }
    run.save()?;
    println!(
        "ingest: {} samples × {} models, {} datasets → {}",
        store.n_samples(),
        store.n_models(),
        store.datasets().len(),
        run.path(STORE).display()
    );
    Ok(())
}

fn load_store(run: &Run) -> Result<BenchStore, CliError> {
    let path = run.verified("store", run.manifest.store.as_ref())?;
    Ok(BenchStore::load_json(&path)?)
}

fn load_split(run: &Run, store: &BenchStore) -> Result<SplitAssignment, CliError> {
    let path = run.verified("split", run.manifest.split.as_ref())?;
    let split: SplitAssignment = read_json(&path)?;
    if split.assignment.len() != store.n_samples() {
        return Err(CliError::Validation(format!(
            "split covers {} samples but the store has {}",
            split.assignment.len(),
            store.n_samples()
        )));
    }
    Ok(split)
}

fn load_table(run: &Run, store: &BenchStore) -> Result<EmbeddingTable, CliError> {
    let path = run.verified("embeddings (ingest with --embeddings)", run.manifest.embeddings.as_ref())?;
    if let Some(m) = &run.manifest.embeddings_manifest {
        run.verified("embedding manifest", Some(m))?;
    }
    Ok(load_embeddings(&path, store)?)
}

pub fn split(a: &SplitArgs) -> Result<(), CliError> {
    let mut run = Run::open(&a.out)?;
    let store = load_store(&run)?;
    let split = make_split(&store, a.seed)?;
    write_file(&run.path(SPLIT), &to_json(&split))?;
    run.manifest.split = Some(run.record(SPLIT)?);
    run.manifest.seeds.insert("split".into(), a.seed);
    // Earlier checkpoints and reports were made against another split.
    run.manifest.checkpoints.clear();
    run.manifest.reports.clear();
    run.save()?;
    println!(
        "split: train {} / dev {} / test {} (seed {})",
        split.train().len(),
        split.dev().len(),
        split.test().len(),
        a.seed
    );
    Ok(())
}

/// Training record kept next to a router's checkpoints.
#[derive(Debug, Serialize, Deserialize)]
struct TrainRecord {
    spec: RouterSpec,
    lambda_grid: Vec<Lambda>,
    k_grid: Vec<usize>,
    trials: Vec<TrialRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrialRecord {
    seed: u64,
    checkpoint: String,
    lambda: Lambda,
    k: usize,
    history: Option<TrainHistory>,
    candidates: Vec<CandidateScore>,
}

/// Dev-split score of one sweep candidate.
#[derive(Debug, Serialize, Deserialize)]
struct CandidateScore {
    lambda: Lambda,
    k: Option<usize>,
    avg_acc: f64,
    avg_cost: f64,
    rank_score: f64,
}

impl From<&Candidate> for CandidateScore {
    fn from(c: &Candidate) -> Self {
        Self {
            lambda: c.lambda,
            k: c.k,
            avg_acc: c.dev.avg_acc,
            avg_cost: c.dev.avg_cost_display,
            rank_score: c.dev.rank_score,
        }
    }
}

fn parse_lambdas(raw: &str) -> Result<Vec<Lambda>, CliError> {
    raw.split(',')
        .map(|s| s.parse::<Lambda>().map_err(|e| CliError::BadArgs(e.to_string())))
        .collect()
}

/// Checkpoint set name: the router, suffixed with the fusion when it is not
/// the default concatenation.
fn set_name(kind: RouterKind, fusion: FusionMethod) -> String {
    if fusion == FusionMethod::Concat {
        kind.name().to_string()
    } else {
        format!("{}-{}", kind.name(), fusion.name())
    }
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let kind: RouterKind = a.router.parse().map_err(|e: vlrb::Error| CliError::BadArgs(e.to_string()))?;
    let fusion: FusionMethod = a.fusion.parse().map_err(|e: vlrb::Error| CliError::BadArgs(e.to_string()))?;
    if a.trials == 0 {
        return Err(CliError::BadArgs("--trials must be at least 1".into()));
    }
    let lambdas = match (&a.lambda, &a.lambda_grid) {
        (Some(l), _) => parse_lambdas(l)?,
        (None, Some(grid)) => parse_lambdas(grid)?,
        (None, None) => Lambda::default_grid(),
    };
    if lambdas.len() != 1 && a.lambda.is_some() {
        return Err(CliError::BadArgs("--lambda takes one value; use --lambda-grid for several".into()));
    }
    let ks: Vec<usize> = a.k.map_or_else(|| DEFAULT_K_GRID.to_vec(), |k| vec![k]);

    let mut config = TrainConfig::default();
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(lr) = a.lr {
        config.learning_rate = lr;
    }
    if let Some(b) = a.batch {
        config.batch_size = b;
    }
    config.validate()?;

    let mut run = Run::open(&a.out)?;
    let store = load_store(&run)?;
    let split = load_split(&run, &store)?;
    let table = load_table(&run, &store)?;
    let wb = Workbench { store: &store, embeddings: &table, split: &split };

    let name = set_name(kind, fusion);
    let base = RouterSpec::new(kind, fusion, lambdas[0], config);
    let mut record =
        TrainRecord { spec: base.clone(), lambda_grid: lambdas.clone(), k_grid: ks.clone(), trials: Vec::new() };
    let mut files = Vec::new();
    let dir = format!("checkpoints/{name}");
    let _ = fs::remove_dir_all(run.path(&dir));
    for t in 0..a.trials {
        let seed = a.seed + t as u64;
        let mut spec = base.clone();
        spec.config.seed = seed;
        let sel = sweep(&wb, &spec, &lambdas, &ks, vlrb::metrics::DEFAULT_BETA, Exec::default())?;
        let rel = format!("{dir}/trial{t}.vlrk");
        let path = run.path(&rel);
        fs::create_dir_all(path.parent().expect("checkpoint has a parent")).map_err(|e| CliError::io(&path, e))?;
        save_checkpoint(&path, &sel.model)?;
        files.push(run.record(&rel)?);
        println!(
            "train: {name} trial {t} (seed {seed}) λ={}{} dev RS {:.2}",
            sel.spec.lambda,
            if kind.uses_k() { format!(" k={}", sel.spec.k) } else { String::new() },
            sel.candidates
                .iter()
                .find(|c| c.lambda == sel.spec.lambda && c.k.is_none_or(|k| k == sel.spec.k))
                .map_or(f64::NAN, |c| c.dev.rank_score)
        );
        record.trials.push(TrialRecord {
            seed,
            checkpoint: rel,
            lambda: sel.spec.lambda,
            k: sel.spec.k,
            history: sel.history,
            candidates: sel.candidates.iter().map(CandidateScore::from).collect(),
        });
    }
    let record_rel = format!("{dir}/train.json");
    write_file(&run.path(&record_rel), &to_json(&record))?;
    files.push(run.record(&record_rel)?);

    run.manifest.checkpoints.insert(name.clone(), files);
    run.manifest.config_hashes.insert(name.clone(), sha256_bytes(&to_json(&base)));
    run.manifest.seeds.insert(format!("train/{name}"), a.seed);
    run.manifest.lambda_grid = lambdas;
    run.save()?;
    Ok(())
}

/// Everything `evaluate` records for one router or baseline.
#[derive(Debug, Serialize, Deserialize)]
struct RouterReport {
    router: String,
    summary: TrialSummary,
    mean: EvalReport,
    trials: Vec<EvalReport>,
}

fn write_report(run: &mut Run, name: &str, trials: Vec<EvalReport>, meta: Option<Vec<ReportMeta>>) -> Result<(), CliError> {
    let mut mean = mean_report(&trials)?;
    mean.router = name.to_string();
    let report = RouterReport { router: name.to_string(), summary: TrialSummary::from_reports(name, &trials), mean, trials };
    let rel = format!("reports/{name}.json");
    write_file(&run.path(&rel), &to_json(&report))?;
    if let Some(meta) = meta {
        write_file(&run.path(&format!("reports/{name}.meta.json")), &to_json(&meta))?;
    }
    let record = run.record(&rel)?;
    run.manifest.reports.insert(name.to_string(), record);
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    if !(a.beta > 0.0 && a.beta.is_finite()) {
        return Err(CliError::BadArgs(format!("--beta must be positive, got {}", a.beta)));
    }
    let mut run = Run::open(&a.out)?;
    let store = load_store(&run)?;
    let split = load_split(&run, &store)?;
    let test = split.test();

    let names: Vec<String> = match &a.router {
        Some(n) if run.manifest.checkpoints.contains_key(n) => vec![n.clone()],
        Some(n) => return Err(CliError::Missing(format!("no checkpoints for `{n}`; train it first"))),
        None => run.manifest.checkpoints.keys().cloned().collect(),
    };
    if !names.is_empty() {
        let table = load_table(&run, &store)?;
        let wb = Workbench { store: &store, embeddings: &table, split: &split };
        for name in names {
            let files = run.manifest.checkpoints[&name].clone();
            let record_file = files.iter().find(|f| f.path.ends_with("train.json"));
            let record: TrainRecord = read_json(&run.verified("training record", record_file)?)?;
            let mut reports = Vec::new();
            let mut metas = Vec::new();
            for trial in &record.trials {
                let file = files.iter().find(|f| f.path == trial.checkpoint);
                let model = load_checkpoint(&run.verified("checkpoint", file)?)?;
                if model.fingerprint != training_fingerprint(&store, &split, trial.seed) {
                    return Err(CliError::Validation(format!(
                        "{} was trained on a different store or split",
                        trial.checkpoint
                    )));
                }
                let (mut report, meta) = wb.evaluate(&model, &test, a.beta, Exec::default())?;
                report.router = name.clone();
                reports.push(report);
                metas.push(meta);
            }
            let s = TrialSummary::from_reports(&name, &reports);
            println!(
                "evaluate: {name} acc {:.2} ± {:.2}, cost {:.2} ± {:.2}, RS {:.2} ± {:.2} over {} trials",
                s.avg_acc.0, s.avg_acc.1, s.avg_cost_display.0, s.avg_cost_display.1, s.rank_score.0, s.rank_score.1, s.trials
            );
            write_report(&mut run, &name, reports, Some(metas))?;
        }
    }

    let wb_train = split.train();
    for b in Baseline::ALL {
        let decisions = b.decide(&store, &wb_train, &test)?;
        let report = vlrb::metrics::build_report(b.name(), None, &decisions, &store, &test, a.beta)?;
        write_report(&mut run, b.name(), vec![report], None)?;
    }
    run.save()?;
    Ok(())
}

fn load_reports(run: &Run) -> Result<Vec<(RouterReport, Option<Vec<ReportMeta>>)>, CliError> {
    if run.manifest.reports.is_empty() {
        return Err(CliError::Missing("run has no reports; run evaluate first".into()));
    }
    let mut out = Vec::new();
    for (name, record) in &run.manifest.reports {
        let report: RouterReport = read_json(&run.verified("report", Some(record))?)?;
        let meta_path = run.path(&format!("reports/{name}.meta.json"));
        let meta = if meta_path.exists() { Some(read_json(&meta_path)?) } else { None };
        out.push((report, meta));
    }
    Ok(out)
}

pub fn leaderboard(a: &RunArgs) -> Result<(), CliError> {
    let run = Run::open(&a.out)?;
    let reports = load_reports(&run)?;
    let mut rows: Vec<LeaderboardRow> = reports
        .iter()
        .map(|(r, meta)| {
            let throughput = meta.as_ref().map(|m| mean_std(&m.iter().map(|m| m.throughput_ktok_s).collect::<Vec<_>>()).0);
            LeaderboardRow::from_report(&r.mean, throughput)
        })
        .collect();
    rank_rows(&mut rows);

    let mut csv = Vec::new();
    write_leaderboard_csv(&mut csv, &rows)?;
    write_file(&run.path("leaderboard.csv"), &csv)?;

    let means: Vec<EvalReport> = rows
        .iter()
        .map(|row| reports.iter().find(|(r, _)| r.router == row.router).expect("row has a report").0.mean.clone())
        .collect();
    let mut groups: Vec<&str> = means.iter().flat_map(|r| r.per_dataset.keys()).map(|d| dataset_group(d)).collect();
    groups.sort();
    groups.dedup();
    for g in groups {
        let mut out = Vec::new();
        write_group_csv(&mut out, g, &means)?;
        write_file(&run.path(&format!("groups/{g}.csv")), &out)?;
    }

    println!("{:>4}  {:<16} {:>6} {:>15} {:>15} {:>15}", "rank", "router", "λ", "accuracy", "cost/10K", "rank score");
    for row in &rows {
        let s = &reports.iter().find(|(r, _)| r.router == row.router).expect("row has a report").0.summary;
        let pm = |(m, sd): (f64, f64)| if s.trials > 1 { format!("{m:.2} ± {sd:.2}") } else { format!("{m:.2}") };
        println!(
            "{:>4}  {:<16} {:>6} {:>15} {:>15} {:>15}",
            row.rank,
            row.router,
            row.lambda,
            pm(s.avg_acc),
            pm(s.avg_cost_display),
            pm(s.rank_score)
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct FrontierArtifact {
    points: BTreeMap<String, Point>,
    pareto: Vec<Point>,
    fit: Option<FrontierFit>,
    fit_error: Option<String>,
}

pub fn pareto(a: &RunArgs) -> Result<(), CliError> {
    let run = Run::open(&a.out)?;
    let reports = load_reports(&run)?;
    // The oracle is a reference, not an operating point anyone can reach.
    let points: BTreeMap<String, Point> = reports
        .iter()
        .filter(|(r, _)| r.router != Baseline::Oracle.name())
        .map(|(r, _)| (r.router.clone(), Point::new(r.mean.avg_cost_display, r.mean.avg_acc)))
        .collect();
    let all: Vec<Point> = points.values().copied().collect();
    let front = pareto_set(&all)?;
    let (fit, fit_error) = match fit_frontier(&all) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    if let Some(f) = &fit {
        let lo = all.iter().map(|p| p.cost).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(|p| p.cost).fold(f64::NEG_INFINITY, f64::max);
        let mut csv = Vec::new();
        write_curve_csv(&mut csv, &sample_curve(f, lo, hi, 100))?;
        write_file(&run.path("frontier.csv"), &csv)?;
        println!(
            "pareto: {} of {} points non-dominated; fit a={:.4} b={:.4} c={:.4} R²={}",
            front.len(),
            all.len(),
            f.a,
            f.b,
            f.c,
            f.r_squared.map_or_else(|| "n/a".to_string(), |r| format!("{r:.4}"))
        );
    } else {
        let _ = fs::remove_file(run.path("frontier.csv"));
        println!("pareto: {} of {} points non-dominated; no fit ({})", front.len(), all.len(), fit_error.as_deref().unwrap_or(""));
    }
    let artifact = FrontierArtifact { points, pareto: front, fit, fit_error };
    write_file(&run.path("frontier.json"), &to_json(&artifact))?;
    Ok(())
}

pub fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    let checks = verify::run_all(a.seed, Exec::default())?;
    let mut failed = Vec::new();
    for c in &checks {
        println!(
            "{} {:<28} worst {:.3e} (tolerance {:.1e}, {:.2} s) {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.worst,
            c.tolerance,
            c.seconds,
            c.detail
        );
        if !c.passed {
            failed.push(c.name.clone());
        }
    }
    println!("verify: {}/{} checks passed", checks.len() - failed.len(), checks.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("failed checks: {}", failed.join(", "))))
    }
}
