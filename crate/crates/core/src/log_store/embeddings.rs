use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchStore;
use crate::container::Container;
use crate::error::{Error, Result};

/// Precomputed text and image embeddings, one row per store sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    inner: Container,
}

/// Sidecar manifest entry identifying the sample behind a row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub dataset: String,
    pub index: u64,
}

impl EmbeddingTable {
    pub fn new(dim_text: usize, dim_image: usize, data: Vec<f32>) -> Result<Self> {
        if dim_text == 0 || dim_image == 0 {
            return Err(Error::Format("embedding dims must be positive".into()));
        }
        let width = dim_text + dim_image;
        if !data.len().is_multiple_of(width) {
            return Err(Error::Format("data does not fill whole rows".into()));
        }
        let rows = data.len() / width;
        let inner = Container::new(rows, dim_text, dim_image, data)?;
        if let Some((row, col)) = inner.first_non_finite() {
            return Err(Error::NonFiniteValue { row, col });
        }
        Ok(Self { inner })
    }

    pub fn from_container(c: Container) -> Result<Self> {
        if c.dim_a == 0 || c.dim_b == 0 {
            return Err(Error::Format("embedding dims must be positive".into()));
        }
        if let Some((row, col)) = c.first_non_finite() {
            return Err(Error::NonFiniteValue { row, col });
        }
        Ok(Self { inner: c })
    }

    pub fn rows(&self) -> usize {
        self.inner.rows
    }

    pub fn dim_text(&self) -> usize {
        self.inner.dim_a
    }

    pub fn dim_image(&self) -> usize {
        self.inner.dim_b
    }

    pub fn text(&self, i: usize) -> &[f32] {
        &self.inner.row(i)[..self.dim_text()]
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.inner.row(i)[self.dim_text()..]
    }

    pub fn container(&self) -> &Container {
        &self.inner
    }

    /// Per-row L2 norm of the concatenated (text, image) vector.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.rows())
            .map(|i| self.inner.row(i).iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt())
            .collect()
    }
}

/// `embeddings.vlrb` → `embeddings.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

pub fn write_embeddings(path: &Path, table: &EmbeddingTable, manifest: Option<&[ManifestRow]>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    table.inner.write_to(&mut f)?;
    f.flush()?;
    if let Some(rows) = manifest {
        let f = std::fs::File::create(manifest_path(path))?;
        serde_json::to_writer_pretty(f, rows)?;
    }
    Ok(())
}

/// Loads a `VLRB` embedding file and checks it against the store's sample
/// order. When a sidecar manifest exists, each row's (dataset, index) must
/// match the store.
pub fn load_embeddings(path: &Path, store: &BenchStore) -> Result<EmbeddingTable> {
    let bytes = std::fs::read(path)?;
    let table = EmbeddingTable::from_container(Container::from_bytes(&bytes)?)?;
    if table.rows() != store.n_samples() {
        return Err(Error::RowCountMismatch { expected: store.n_samples(), found: table.rows() });
    }
    let mpath = manifest_path(path);
    if mpath.exists() {
        let rows: Vec<ManifestRow> = serde_json::from_reader(std::fs::File::open(&mpath)?)?;
        if rows.len() != store.n_samples() {
            return Err(Error::RowCountMismatch { expected: store.n_samples(), found: rows.len() });
        }
        for (row, (m, s)) in rows.iter().zip(&store.samples).enumerate() {
            if m.dataset != s.dataset || m.index != s.index {
                return Err(Error::ManifestMismatch {
                    row,
                    expected: format!("({}, {})", s.dataset, s.index),
                    found: format!("({}, {})", m.dataset, m.index),
                });
            }
        }
    }
    Ok(table)
}
