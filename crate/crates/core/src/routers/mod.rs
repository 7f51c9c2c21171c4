//! Learned routing policies. Every router maps a fused feature to a
//! probability distribution over the candidate models; the routed model is
//! the argmax.

mod checkpoint;
mod gradient;
mod kmeans;
mod knn;
mod ovr;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::baselines::Decision;
use crate::error::{Error, Result};
use crate::fusion::FusionSpec;
use crate::log_store::{BenchStore, EmbeddingTable};
use crate::nn::ParamStore;
use crate::par::{self, Exec};
use crate::soft_label::{argmax, soft_target, Lambda};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};
pub use gradient::{
    gradient_check, random_gradient_router, train_gradient_router, training_gradient, training_loss, GradientBatch,
    TrainHistory,
};
pub use kmeans::train_kmeans;
pub use knn::{nearest_neighbors, prknn_scores, train_knn, train_prknn};
pub use ovr::train_ovr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouterKind {
    Knn,
    Prknn,
    Kmeans,
    Ovr,
    Linear,
    Mlp,
    Cosine,
    RouterDc,
    Zooter,
}

impl RouterKind {
    pub const ALL: [RouterKind; 9] = [
        RouterKind::Knn,
        RouterKind::Prknn,
        RouterKind::Kmeans,
        RouterKind::Ovr,
        RouterKind::Linear,
        RouterKind::Mlp,
        RouterKind::Cosine,
        RouterKind::RouterDc,
        RouterKind::Zooter,
    ];

    pub const GRADIENT: [RouterKind; 5] =
        [RouterKind::Linear, RouterKind::Mlp, RouterKind::Cosine, RouterKind::RouterDc, RouterKind::Zooter];

    pub fn name(self) -> &'static str {
        match self {
            RouterKind::Knn => "knn",
            RouterKind::Prknn => "prknn",
            RouterKind::Kmeans => "kmeans",
            RouterKind::Ovr => "ovr",
            RouterKind::Linear => "linear",
            RouterKind::Mlp => "mlp",
            RouterKind::Cosine => "cosine",
            RouterKind::RouterDc => "routerdc",
            RouterKind::Zooter => "zooter",
        }
    }

    pub fn is_gradient_trained(self) -> bool {
        Self::GRADIENT.contains(&self)
    }

    /// Whether the router's training targets depend on λ.
    pub fn uses_lambda(self) -> bool {
        !matches!(self, RouterKind::Prknn | RouterKind::Ovr)
    }

    /// Whether the router takes a neighbor count.
    pub fn uses_k(self) -> bool {
        matches!(self, RouterKind::Knn | RouterKind::Prknn)
    }
}

impl fmt::Display for RouterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RouterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RouterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown router `{s}`")))
    }
}

fn default_mlp_hidden() -> usize {
    512
}
fn default_proj_dim() -> usize {
    64
}
fn default_tau() -> f64 {
    0.07
}
fn default_contrastive_weight() -> f64 {
    0.5
}
fn default_contrastive_temperature() -> f64 {
    0.1
}

/// Optimization settings shared by every trained router. The optimizer is
/// AdamW with a cosine-decayed learning rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_mlp_hidden")]
    pub mlp_hidden: usize,
    #[serde(default = "default_proj_dim")]
    pub proj_dim: usize,
    /// Initial prototype temperature τ_c for the cosine heads.
    #[serde(default = "default_tau")]
    pub init_temperature: f64,
    /// γ for the sample–sample contrastive term.
    #[serde(default = "default_contrastive_weight")]
    pub contrastive_weight: f64,
    #[serde(default = "default_contrastive_temperature")]
    pub contrastive_temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            batch_size: 16,
            weight_decay: 0.01,
            epochs: 5,
            seed: 0,
            mlp_hidden: default_mlp_hidden(),
            proj_dim: default_proj_dim(),
            init_temperature: default_tau(),
            contrastive_weight: default_contrastive_weight(),
            contrastive_temperature: default_contrastive_temperature(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0
            && self.batch_size > 0
            && self.weight_decay >= 0.0
            && self.epochs > 0
            && self.mlp_hidden > 0
            && self.proj_dim > 0
            && self.init_temperature > 0.0
            && self.contrastive_weight >= 0.0
            && self.contrastive_temperature > 0.0;
        if !positive {
            return Err(Error::InvalidConfig("training settings must be positive".into()));
        }
        if self.epochs > 1000 {
            return Err(Error::InvalidConfig(format!("epochs {} exceeds 1000", self.epochs)));
        }
        Ok(())
    }
}

/// Raw embeddings, correctness/cost rows and soft targets for a set of
/// samples.
#[derive(Clone, Debug)]
pub struct TrainingData {
    /// Store row index of each sample.
    pub rows: Vec<usize>,
    pub image: Array2<f64>,
    pub text: Array2<f64>,
    pub quality: Array2<f64>,
    pub cost: Array2<f64>,
    /// Soft target per sample; `None` when no model is correct.
    pub targets: Vec<Option<Vec<f64>>>,
    /// Dataset ordinal per sample.
    pub groups: Vec<usize>,
    pub lambda: Lambda,
}

impl TrainingData {
    pub fn new(store: &BenchStore, emb: &EmbeddingTable, rows: &[usize], lambda: Lambda) -> Result<Self> {
        if emb.rows() != store.n_samples() {
            return Err(Error::RowCountMismatch { expected: store.n_samples(), found: emb.rows() });
        }
        let m = store.n_models();
        let image = Array2::from_shape_fn((rows.len(), emb.dim_image()), |(r, c)| f64::from(emb.image(rows[r])[c]));
        let text = Array2::from_shape_fn((rows.len(), emb.dim_text()), |(r, c)| f64::from(emb.text(rows[r])[c]));
        let quality = Array2::from_shape_fn((rows.len(), m), |(r, j)| f64::from(store.quality_row(rows[r])[j]));
        let cost = Array2::from_shape_fn((rows.len(), m), |(r, j)| store.cost_row(rows[r])[j]);
        let targets = rows
            .iter()
            .map(|&i| match soft_target(store.quality_row(i), store.cost_row(i), lambda) {
                Ok(t) => Ok(Some(t.probs)),
                Err(Error::NoCorrectModel) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        let ids = store.dataset_ids();
        let groups = rows.iter().map(|&i| ids[i]).collect();
        Ok(Self { rows: rows.to_vec(), image, text, quality, cost, targets, groups, lambda })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_models(&self) -> usize {
        self.quality.ncols()
    }

    /// Positions (into this data set) of samples with a soft target.
    pub fn labeled(&self) -> Vec<usize> {
        (0..self.len()).filter(|&r| self.targets[r].is_some()).collect()
    }

    /// Targets of `positions` as a matrix.
    pub fn target_matrix(&self, positions: &[usize]) -> Array2<f64> {
        let m = self.n_models();
        Array2::from_shape_fn((positions.len(), m), |(r, j)| {
            self.targets[positions[r]].as_ref().expect("labeled position")[j]
        })
    }

    pub fn select_image(&self, positions: &[usize]) -> Array2<f64> {
        self.image.select(Axis(0), positions)
    }

    pub fn select_text(&self, positions: &[usize]) -> Array2<f64> {
        self.text.select(Axis(0), positions)
    }

    /// Fused features for every sample (frozen fusion parameters).
    pub fn fused(&self, fusion: &FusionSpec) -> Result<Array2<f64>> {
        Ok(fusion.forward(self.image.view(), self.text.view())?.0)
    }
}

/// A trained router: fusion, strategy parameters and provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct RouterModel {
    pub kind: RouterKind,
    pub fusion: FusionSpec,
    pub params: ParamStore,
    pub n_models: usize,
    /// Neighbor count for KNN/PRkNN.
    pub k: Option<usize>,
    pub train_lambda: Option<Lambda>,
    pub config: Option<TrainConfig>,
    /// Hash of the training data (Y, C, split, seed).
    pub fingerprint: String,
}

impl RouterModel {
    /// Probabilities over models for a batch of raw embeddings
    /// (`image`: B × dim_image, `text`: B × dim_text).
    pub fn predict_batch(&self, image: ArrayView2<f64>, text: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.predict_batch_with(Exec::default(), image, text)
    }

    pub fn predict_batch_with(&self, exec: Exec, image: ArrayView2<f64>, text: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (z, _) = self.fusion.forward(image, text)?;
        Ok(self.predict_fused(exec, z.view()))
    }

    /// Probabilities for one sample.
    pub fn predict(&self, image: &[f64], text: &[f64]) -> Result<Vec<f64>> {
        let z = self.fusion.fuse(image, text)?;
        let zb = Array2::from_shape_vec((1, z.len()), z).expect("row");
        Ok(self.predict_fused(Exec::Sequential, zb.view()).row(0).to_vec())
    }

    /// Probabilities for already-fused features.
    pub fn predict_fused(&self, exec: Exec, z: ArrayView2<f64>) -> Array2<f64> {
        let n = z.nrows();
        let m = self.n_models;
        let rows: Vec<Vec<f64>> = match self.kind {
            RouterKind::Knn => par::map_range(exec, n, |i| knn::knn_predict(self, &z.row(i).to_vec())),
            RouterKind::Prknn => par::map_range(exec, n, |i| knn::prknn_predict(self, &z.row(i).to_vec())),
            RouterKind::Kmeans => par::map_range(exec, n, |i| kmeans::kmeans_predict(self, &z.row(i).to_vec())),
            RouterKind::Ovr => par::map_range(exec, n, |i| ovr::normalized(&ovr::ovr_correctness(self, &z.row(i).to_vec()))),
            _ => {
                // Dense heads: run in row chunks so the matmuls stay batched.
                const CHUNK: usize = 256;
                let chunks = n.div_ceil(CHUNK);
                let parts = par::map_range(exec, chunks, |c| {
                    let lo = c * CHUNK;
                    let hi = (lo + CHUNK).min(n);
                    gradient::head_probabilities(self, z.slice(s![lo..hi, ..]))
                });
                let mut out = Array2::zeros((n, m));
                for (c, part) in parts.into_iter().enumerate() {
                    let lo = c * CHUNK;
                    out.slice_mut(s![lo..lo + part.nrows(), ..]).assign(&part);
                }
                return out;
            }
        };
        let mut out = Array2::zeros((n, m));
        for (i, r) in rows.into_iter().enumerate() {
            out.row_mut(i).assign(&ndarray::Array1::from(r));
        }
        out
    }

    /// Routed model for a probability vector. OVR breaks ties by the lower
    /// mean training cost; every other router by the lower index.
    pub fn route(&self, probs: &[f64]) -> Decision {
        if self.kind == RouterKind::Ovr {
            return ovr::route(self, probs);
        }
        Decision(argmax(probs))
    }

    /// Decisions for the given store rows.
    pub fn decide(&self, emb: &EmbeddingTable, rows: &[usize]) -> Result<Vec<Decision>> {
        self.decide_with(Exec::default(), emb, rows)
    }

    pub fn decide_with(&self, exec: Exec, emb: &EmbeddingTable, rows: &[usize]) -> Result<Vec<Decision>> {
        let image = Array2::from_shape_fn((rows.len(), emb.dim_image()), |(r, c)| f64::from(emb.image(rows[r])[c]));
        let text = Array2::from_shape_fn((rows.len(), emb.dim_text()), |(r, c)| f64::from(emb.text(rows[r])[c]));
        let probs = self.predict_batch_with(exec, image.view(), text.view())?;
        Ok(probs.axis_iter(Axis(0)).map(|p| self.route(&p.to_vec())).collect())
    }

    /// Rounds all parameters to float32 so a saved checkpoint reproduces the
    /// model exactly.
    pub fn quantize(&mut self) {
        self.params.quantize_f32();
        self.fusion.params.quantize_f32();
    }
}

/// Hash of the training inputs: the store contents, the split and the seed.
pub fn training_fingerprint(store: &BenchStore, split: &crate::log_store::SplitAssignment, seed: u64) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(store.fingerprint().as_bytes());
    h.update(serde_json::to_vec(&split.assignment).expect("split serializes"));
    h.update(split.seed.to_le_bytes());
    h.update(seed.to_le_bytes());
    hex::encode(h.finalize())
}

/// Trains any router kind on `data`.
pub fn train_router(
    kind: RouterKind,
    fusion: FusionSpec,
    data: &TrainingData,
    config: &TrainConfig,
    k: usize,
) -> Result<(RouterModel, Option<TrainHistory>)> {
    Ok(match kind {
        RouterKind::Knn => (train_knn(fusion, data, k)?, None),
        RouterKind::Prknn => (train_prknn(fusion, data, k)?, None),
        RouterKind::Kmeans => (train_kmeans(fusion, data)?, None),
        RouterKind::Ovr => (train_ovr(fusion, data, config)?, None),
        _ => {
            let (model, hist) = train_gradient_router(kind, fusion, data, config)?;
            (model, Some(hist))
        }
    })
}
