//! Synthetic benchmarks with a controllable amount of routable signal.
//!
//! Every sample belongs to a dataset cluster and has a latent difficulty
//! `δ ~ N(0, 1)`. Model `j` answers correctly with probability
//! `σ(s_j − δ + affinity · gain · [j specializes in the cluster])`.
//! Skills rise convexly with price rank, except that the most expensive
//! model sits just below the second most expensive one. Embeddings are a
//! per-cluster centroid plus isotropic noise, so the cluster (and with it
//! the specialist) is recoverable from features alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_store::{EmbeddingTable, PriceEntry, RecordLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_models: usize,
    pub n_datasets: usize,
    pub dim_text: usize,
    pub dim_image: usize,
    /// Skill gap between the cheapest and the strongest model.
    pub skill_spread: f64,
    /// Strength of the cluster–specialist match, in `[0, 1]`.
    pub cluster_affinity: f64,
    /// Input-token price range in dollars per 1M tokens.
    pub price_range: (f64, f64),
    pub token_range: (u64, u64),
    pub seed: u64,
    /// Logit bonus of a specialist at full affinity.
    pub specialist_gain: f64,
    /// Per-coordinate noise around the cluster centroid.
    pub embedding_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            n_models: 6,
            n_datasets: 4,
            dim_text: 16,
            dim_image: 16,
            skill_spread: 3.5,
            cluster_affinity: 0.9,
            price_range: (0.05, 15.0),
            token_range: (50, 1500),
            seed: 0,
            specialist_gain: 4.0,
            embedding_noise: 1.0,
        }
    }
}

const BASE_SKILL: f64 = -0.5;
const TOP_PENALTY: f64 = 0.35;
const SKILL_JITTER: f64 = 0.05;
const OUTPUT_PRICE_RATIO: f64 = 3.0;
const CENTROID_SCALE: f64 = 2.1;
const OUTPUT_TOKEN_RANGE: (u64, u64) = (10, 500);

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_samples == 0 || self.n_datasets == 0 || self.dim_text == 0 || self.dim_image == 0 {
            return bad("sizes must be positive");
        }
        if self.n_models < 2 {
            return bad("need at least two models");
        }
        if !(0.0..=1.0).contains(&self.cluster_affinity) {
            return bad("cluster_affinity must lie in [0, 1]");
        }
        let (lo, hi) = self.price_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("price range must be positive and ordered");
        }
        let (tlo, thi) = self.token_range;
        if tlo == 0 || thi < tlo {
            return bad("token range must be positive and ordered");
        }
        if !self.skill_spread.is_finite() || !self.specialist_gain.is_finite() || !(self.embedding_noise >= 0.0) {
            return bad("skill and noise settings must be finite");
        }
        Ok(())
    }
}

/// A generated benchmark plus the ground truth behind it.
#[derive(Clone, Debug)]
pub struct SynthBench {
    pub records: Vec<RecordLog>,
    pub prices: Vec<PriceEntry>,
    pub embeddings: EmbeddingTable,
    /// Latent skill per model, in price order.
    pub skills: Vec<f64>,
    /// Cluster of each sample.
    pub clusters: Vec<usize>,
    /// True `P(correct)` per sample and model, row-major `N × M`.
    pub correct_prob: Vec<f64>,
}

impl SynthBench {
    /// Expected Oracle accuracy (percent): the chance that at least one
    /// model answers, averaged over samples.
    pub fn analytic_oracle_accuracy(&self) -> f64 {
        let m = self.prices.len();
        let total: f64 = self
            .correct_prob
            .chunks(m)
            .map(|row| 1.0 - row.iter().map(|p| 1.0 - p).product::<f64>())
            .sum();
        100.0 * total / (self.correct_prob.len() / m) as f64
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Skill of each price rank before jitter.
pub fn skill_curve(n_models: usize, spread: f64) -> Vec<f64> {
    if n_models == 2 {
        return vec![BASE_SKILL, BASE_SKILL + spread];
    }
    let top = n_models - 2;
    let mut s: Vec<f64> = (0..=top).map(|r| BASE_SKILL + spread * (r as f64 / top as f64).powi(3)).collect();
    s.push(s[top] - TOP_PENALTY);
    s
}

/// Price rank of the cheap model that specializes in `cluster`.
pub fn specialist(cluster: usize, n_models: usize) -> usize {
    cluster % (n_models.saturating_sub(2)).max(1)
}

pub fn generate(config: &SynthConfig) -> Result<SynthBench> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let m = config.n_models;
    let (lo, hi) = config.price_range;
    let prices: Vec<PriceEntry> = (0..m)
        .map(|r| {
            let t = r as f64 / (m - 1) as f64;
            let p = (lo.ln() + t * (hi.ln() - lo.ln())).exp();
            PriceEntry { model_name: format!("model-{r}"), price_in: p, price_out: p * OUTPUT_PRICE_RATIO }
        })
        .collect();
    let skills: Vec<f64> = skill_curve(m, config.skill_spread)
        .into_iter()
        .map(|s| s + rng.random_range(-SKILL_JITTER..SKILL_JITTER))
        .collect();

    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let centroid = |dim: usize, normal: &mut dyn FnMut() -> f64| -> Vec<Vec<f64>> {
        (0..config.n_datasets).map(|_| (0..dim).map(|_| normal() * CENTROID_SCALE).collect()).collect()
    };
    let text_centroids = centroid(config.dim_text, &mut normal);
    let image_centroids = centroid(config.dim_image, &mut normal);

    let width = config.dim_text + config.dim_image;
    let mut emb = Vec::with_capacity(config.n_samples * width);
    let mut records = Vec::with_capacity(config.n_samples * m);
    let mut clusters = Vec::with_capacity(config.n_samples);
    let mut correct_prob = Vec::with_capacity(config.n_samples * m);
    let mut counters = vec![0u64; config.n_datasets];
    let bonus = config.cluster_affinity * config.specialist_gain;
    let (tlo, thi) = config.token_range;
    for i in 0..config.n_samples {
        let cluster = rng.random_range(0..config.n_datasets);
        let difficulty: f64 = StandardNormal.sample(&mut rng);
        let index = counters[cluster];
        counters[cluster] += 1;
        clusters.push(cluster);
        for c in &text_centroids[cluster] {
            let noise: f64 = StandardNormal.sample(&mut rng);
            emb.push((c + config.embedding_noise * noise) as f32);
        }
        for c in &image_centroids[cluster] {
            let noise: f64 = StandardNormal.sample(&mut rng);
            emb.push((c + config.embedding_noise * noise) as f32);
        }
        let dataset = format!("g{}/cluster{}", cluster % 2, cluster);
        let prompt_tokens = rng.random_range(tlo..=thi);
        let star = specialist(cluster, m);
        for (j, price) in prices.iter().enumerate() {
            let logit = skills[j] - difficulty + if j == star { bonus } else { 0.0 };
            let p = sigmoid(logit);
            correct_prob.push(p);
            let correct = rng.random::<f64>() < p;
            let jitter = rng.random_range(0.9..1.1);
            let tokens_in = ((prompt_tokens as f64 * jitter).round() as u64).max(1);
            let tokens_out = rng.random_range(OUTPUT_TOKEN_RANGE.0..=OUTPUT_TOKEN_RANGE.1);
            records.push(RecordLog {
                dataset_name: dataset.clone(),
                sample_index: index,
                image_path: format!("images/{dataset}/{index}.png"),
                prompt: format!("synthetic query {i}"),
                model_name: price.model_name.clone(),
                model_output: if correct { "A".into() } else { "B".into() },
                correct,
                tokens_in,
                tokens_out,
            });
        }
    }
    let embeddings = EmbeddingTable::new(config.dim_text, config.dim_image, emb)?;
    Ok(SynthBench { records, prices, embeddings, skills, clusters, correct_prob })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::oracle_decision;
    use crate::log_store::ingest;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig { n_samples: 300, seed, ..SynthConfig::default() }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        let c = generate(&small(4)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.embeddings.container().to_bytes(), b.embeddings.container().to_bytes());
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn output_passes_ingest() {
        let bench = generate(&small(1)).unwrap();
        let store = ingest(bench.records.clone(), &bench.prices).unwrap();
        assert_eq!(store.n_samples(), 300);
        assert_eq!(store.n_models(), 6);
        assert_eq!(bench.embeddings.rows(), 300);
    }

    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }

    #[test]
    fn accuracy_tracks_skill() {
        for affinity in [0.0, 0.9] {
            let cfg = SynthConfig { n_samples: 2000, cluster_affinity: affinity, ..SynthConfig::default() };
            let bench = generate(&cfg).unwrap();
            let store = ingest(bench.records.clone(), &bench.prices).unwrap();
            let rows: Vec<usize> = (0..store.n_samples()).collect();
            let (acc, _) = store.column_means(&rows);
            let (ra, rs) = (ranks(&acc), ranks(&bench.skills));
            let n = acc.len() as f64;
            let d2: f64 = ra.iter().zip(&rs).map(|(a, b)| (a - b).powi(2)).sum();
            let rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
            assert!(rho >= 0.8, "affinity {affinity}: rho {rho}");
        }
    }

    #[test]
    fn oracle_accuracy_matches_analytic_value() {
        for affinity in [0.0, 0.5, 1.0] {
            let cfg = SynthConfig { n_samples: 4000, cluster_affinity: affinity, seed: 11, ..SynthConfig::default() };
            let bench = generate(&cfg).unwrap();
            let store = ingest(bench.records.clone(), &bench.prices).unwrap();
            let hits = (0..store.n_samples())
                .filter(|&i| {
                    let d = oracle_decision(store.quality_row(i), store.cost_row(i));
                    store.correct(i, d.0)
                })
                .count();
            let empirical = 100.0 * hits as f64 / store.n_samples() as f64;
            assert!((empirical - bench.analytic_oracle_accuracy()).abs() <= 2.0);
        }
    }

    #[test]
    fn strongest_is_not_most_expensive() {
        let s = skill_curve(6, 3.5);
        let best = (0..6).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert_eq!(best, 4);
        assert_eq!(skill_curve(2, 1.0), vec![BASE_SKILL, BASE_SKILL + 1.0]);
        assert_eq!((0..4).map(|c| specialist(c, 6)).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SynthConfig { n_models: 1, ..small(0) },
            SynthConfig { cluster_affinity: 1.5, ..small(0) },
            SynthConfig { price_range: (2.0, 1.0), ..small(0) },
            SynthConfig { token_range: (0, 5), ..small(0) },
        ] {
            assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
        }
    }
}
