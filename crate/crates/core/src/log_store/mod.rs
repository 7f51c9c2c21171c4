//! Inference logs, price sheets and the dense quality/cost matrices built
//! from them.

mod embeddings;
mod split;

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embeddings::{load_embeddings, manifest_path, write_embeddings, EmbeddingTable, ManifestRow};
pub use split::{make_split, SplitAssignment, SplitTag};

/// Per-sample cost is stored in dollars; reports show dollars per 10K samples.
pub const DISPLAY_SCALE: f64 = 1.0e4;

/// One sample–model inference outcome, as found in a JSON Lines log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordLog {
    #[serde(rename = "dataset")]
    pub dataset_name: String,
    #[serde(rename = "index")]
    pub sample_index: u64,
    pub image_path: String,
    pub prompt: String,
    #[serde(rename = "model")]
    pub model_name: String,
    #[serde(rename = "output")]
    pub model_output: String,
    pub correct: bool,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

/// Dollars per million input/output tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceEntry {
    #[serde(rename = "model")]
    pub model_name: String,
    pub price_in: f64,
    pub price_out: f64,
}

/// Dollar cost of one call.
pub fn compute_cost(tokens_in: u64, tokens_out: u64, price: &PriceEntry) -> f64 {
    tokens_in as f64 * price.price_in / 1.0e6 + tokens_out as f64 * price.price_out / 1.0e6
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub dataset: String,
    pub index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub dataset: String,
    pub index: u64,
    pub image_path: String,
    pub prompt: String,
    /// Mean of the per-model `tokens_in`, rounded; used for throughput.
    pub prompt_tokens: u64,
}

impl SampleInfo {
    pub fn key(&self) -> SampleKey {
        SampleKey { dataset: self.dataset.clone(), index: self.index }
    }
}

/// Dense quality matrix `Y` and cost matrix `C` over samples × models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchStore {
    pub samples: Vec<SampleInfo>,
    pub models: Vec<String>,
    /// Row-major `N × M`, entries in {0, 1}.
    quality: Vec<u8>,
    /// Row-major `N × M`, dollars per sample.
    cost: Vec<f64>,
}

impl BenchStore {
    /// Builds a store directly from matrices. Used by tests and generators.
    pub fn from_matrices(
        samples: Vec<SampleInfo>,
        models: Vec<String>,
        quality: Vec<u8>,
        cost: Vec<f64>,
    ) -> Result<Self> {
        let n = samples.len();
        let m = models.len();
        if quality.len() != n * m || cost.len() != n * m {
            return Err(Error::InvalidArgument(format!(
                "matrices must have {n}×{m} entries"
            )));
        }
        if quality.iter().any(|&q| q > 1) {
            return Err(Error::InvalidArgument("quality entries must be 0 or 1".into()));
        }
        if cost.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument("cost entries must be finite and positive".into()));
        }
        Ok(Self { samples, models, quality, cost })
    }

    /// Store with one row per entry of `y`/`c`, all in dataset `dataset`,
    /// models named `m0`, `m1`, ….
    pub fn from_rows(dataset: &str, y: &[Vec<u8>], c: &[Vec<f64>]) -> Result<Self> {
        let m = y.first().map_or(0, Vec::len);
        let samples = (0..y.len())
            .map(|i| SampleInfo {
                dataset: dataset.to_string(),
                index: i as u64,
                image_path: String::new(),
                prompt: String::new(),
                prompt_tokens: 1,
            })
            .collect();
        Self::from_matrices(samples, (0..m).map(|j| format!("m{j}")).collect(), y.concat(), c.concat())
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn quality_row(&self, i: usize) -> &[u8] {
        let m = self.n_models();
        &self.quality[i * m..(i + 1) * m]
    }

    pub fn cost_row(&self, i: usize) -> &[f64] {
        let m = self.n_models();
        &self.cost[i * m..(i + 1) * m]
    }

    pub fn correct(&self, i: usize, j: usize) -> bool {
        self.quality[i * self.n_models() + j] == 1
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.n_models() + j]
    }

    /// Same store with every cost multiplied by `s`.
    pub fn scaled_costs(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.cost.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// Distinct dataset names in first-appearance order.
    pub fn datasets(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for s in &self.samples {
            if !seen.contains(&s.dataset) {
                seen.push(s.dataset.clone());
            }
        }
        seen
    }

    /// Per-sample dataset ordinal (index into [`BenchStore::datasets`]).
    pub fn dataset_ids(&self) -> Vec<usize> {
        let names = self.datasets();
        let lookup: HashMap<&str, usize> =
            names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        self.samples.iter().map(|s| lookup[s.dataset.as_str()]).collect()
    }

    /// Column means of `Y` and `C` over `rows`.
    pub fn column_means(&self, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let m = self.n_models();
        let mut acc = vec![0.0; m];
        let mut cost = vec![0.0; m];
        for &i in rows {
            for j in 0..m {
                acc[j] += f64::from(self.quality_row(i)[j]);
                cost[j] += self.cost_row(i)[j];
            }
        }
        let n = rows.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        cost.iter_mut().for_each(|c| *c /= n);
        (acc, cost)
    }

    /// Content hash of `Y`, `C`, sample keys and model order.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for m in &self.models {
            h.update(m.as_bytes());
            h.update([0]);
        }
        for s in &self.samples {
            h.update(s.dataset.as_bytes());
            h.update([0]);
            h.update(s.index.to_le_bytes());
        }
        h.update(&self.quality);
        for c in &self.cost {
            h.update(c.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let store: BenchStore = serde_json::from_reader(std::io::BufReader::new(f))?;
        BenchStore::from_matrices(store.samples, store.models, store.quality, store.cost)
    }
}

struct PartialSample {
    info: SampleInfo,
    tokens_in_sum: u64,
    filled: Vec<bool>,
}

/// Builds the dense store. Samples keep first-appearance order; models keep
/// price-sheet order.
pub fn ingest<I>(records: I, prices: &[PriceEntry]) -> Result<BenchStore>
where
    I: IntoIterator<Item = RecordLog>,
{
    let mut model_index: HashMap<&str, usize> = HashMap::new();
    for (j, p) in prices.iter().enumerate() {
        let valid = p.price_in > 0.0 && p.price_out > 0.0 && p.price_in.is_finite() && p.price_out.is_finite();
        if !valid || model_index.insert(p.model_name.as_str(), j).is_some() {
            return Err(Error::InvalidPrice { model: p.model_name.clone() });
        }
    }
    let m = prices.len();

    let mut sample_index: HashMap<SampleKey, usize> = HashMap::new();
    let mut partial: Vec<PartialSample> = Vec::new();
    let mut quality: Vec<u8> = Vec::new();
    let mut cost: Vec<f64> = Vec::new();

    for rec in records {
        let Some(&j) = model_index.get(rec.model_name.as_str()) else {
            return Err(Error::MissingPrice { model: rec.model_name });
        };
        if !rec.prompt.is_empty() && rec.tokens_in == 0 {
            return Err(Error::InvalidRecord {
                dataset: rec.dataset_name,
                index: rec.sample_index,
                model: rec.model_name,
                reason: "tokens_in must be at least 1 for a non-empty prompt".into(),
            });
        }
        let key = SampleKey { dataset: rec.dataset_name.clone(), index: rec.sample_index };
        let i = *sample_index.entry(key).or_insert_with(|| {
            partial.push(PartialSample {
                info: SampleInfo {
                    dataset: rec.dataset_name.clone(),
                    index: rec.sample_index,
                    image_path: rec.image_path.clone(),
                    prompt: rec.prompt.clone(),
                    prompt_tokens: 0,
                },
                tokens_in_sum: 0,
                filled: vec![false; m],
            });
            quality.extend(std::iter::repeat_n(0, m));
            cost.extend(std::iter::repeat_n(0.0, m));
            partial.len() - 1
        });
        let slot = &mut partial[i];
        if slot.filled[j] {
            return Err(Error::DuplicateRecord {
                dataset: rec.dataset_name,
                index: rec.sample_index,
                model: rec.model_name,
            });
        }
        slot.filled[j] = true;
        slot.tokens_in_sum += rec.tokens_in;
        quality[i * m + j] = u8::from(rec.correct);
        cost[i * m + j] = compute_cost(rec.tokens_in, rec.tokens_out, &prices[j]);
    }

    let mut samples = Vec::with_capacity(partial.len());
    for p in partial {
        if p.filled.iter().any(|f| !f) {
            let missing = p
                .filled
                .iter()
                .zip(prices)
                .filter(|(f, _)| !**f)
                .map(|(_, pe)| pe.model_name.clone())
                .collect();
            return Err(Error::IncompleteSample {
                dataset: p.info.dataset,
                index: p.info.index,
                missing,
            });
        }
        let mut info = p.info;
        info.prompt_tokens = (p.tokens_in_sum as f64 / m as f64).round() as u64;
        samples.push(info);
    }
    // Zero-token records give zero cost; the store requires positive costs.
    if let Some(pos) = cost.iter().position(|&c| c <= 0.0) {
        let s = &samples[pos / m];
        return Err(Error::InvalidRecord {
            dataset: s.dataset.clone(),
            index: s.index,
            model: prices[pos % m].model_name.clone(),
            reason: "record has zero cost".into(),
        });
    }
    let models = prices.iter().map(|p| p.model_name.clone()).collect();
    Ok(BenchStore { samples, models, quality, cost })
}

/// Reads a JSON Lines log. Blank lines are skipped.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<RecordLog>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLog = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("log line {}: {e}", lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut w: W, records: &[RecordLog]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `model,price_in,price_out` CSV price sheet.
pub fn read_prices<R: Read>(reader: R) -> Result<Vec<PriceEntry>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["model", "price_in", "price_out"] {
        return Err(Error::Format(format!(
            "price sheet header must be model,price_in,price_out (got {})",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_prices<W: Write>(w: W, prices: &[PriceEntry]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in prices {
        wtr.serialize(p)?;
    }
    wtr.flush()?;
    Ok(())
}
