//! Self-describing router checkpoint.
//!
//! Layout: magic `VLRK`, `u32` version, `u64` header length, a JSON
//! [`CheckpointHeader`], then one `VLRB` container per tensor in header
//! order (fusion tensors first, then head tensors).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RouterKind, RouterModel, TrainConfig};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::fusion::{FusionMethod, FusionSpec};
use crate::nn::{ParamStore, TensorSpec};
use crate::soft_label::Lambda;

const MAGIC: &[u8; 4] = b"VLRK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub group: String,
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: RouterKind,
    pub n_models: usize,
    pub k: Option<usize>,
    pub fusion_method: FusionMethod,
    pub dim_text: usize,
    pub dim_image: usize,
    pub fusion_hidden: usize,
    pub tensors: Vec<TensorEntry>,
    pub train_lambda: Option<Lambda>,
    pub config: Option<TrainConfig>,
    pub fingerprint: String,
}

fn entries<'a>(group: &str, store: &'a ParamStore) -> impl Iterator<Item = TensorEntry> + 'a {
    let group = group.to_string();
    store.specs().iter().map(move |s| TensorEntry { group: group.clone(), name: s.name.clone(), rows: s.rows, cols: s.cols })
}

pub fn write_checkpoint<W: Write>(w: &mut W, model: &RouterModel) -> Result<()> {
    let header = CheckpointHeader {
        kind: model.kind,
        n_models: model.n_models,
        k: model.k,
        fusion_method: model.fusion.method,
        dim_text: model.fusion.dim_text,
        dim_image: model.fusion.dim_image,
        fusion_hidden: model.fusion.hidden,
        tensors: entries("fusion", &model.fusion.params).chain(entries("head", &model.params)).collect(),
        train_lambda: model.train_lambda,
        config: model.config.clone(),
        fingerprint: model.fingerprint.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for store in [&model.fusion.params, &model.params] {
        for (i, s) in store.specs().iter().enumerate() {
            let data = store.tensor(i).iter().map(|&v| v as f32).collect();
            Container::new(s.rows, s.cols, 0, data)?.write_to(w)?;
        }
    }
    Ok(())
}

fn rebuild(entries: &[&TensorEntry], containers: Vec<Container>) -> Result<ParamStore> {
    let mut specs = Vec::new();
    let mut values = Vec::new();
    for (e, c) in entries.iter().zip(containers) {
        if c.rows != e.rows || c.width() != e.cols {
            return Err(Error::Checkpoint(format!("tensor `{}` has shape {}×{}, header says {}×{}", e.name, c.rows, c.width(), e.rows, e.cols)));
        }
        specs.push(TensorSpec { name: e.name.clone(), rows: e.rows, cols: e.cols, offset: values.len() });
        values.extend(c.data.iter().map(|&v| f64::from(v)));
    }
    ParamStore::from_parts(specs, values).ok_or_else(|| Error::Checkpoint("inconsistent tensor layout".into()))
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<RouterModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a router checkpoint".into()));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let len = usize::try_from(u64::from_le_bytes(buf8)).map_err(|_| Error::Checkpoint("header too large".into()))?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;

    let mut fusion_entries = Vec::new();
    let mut head_entries = Vec::new();
    for e in &header.tensors {
        match e.group.as_str() {
            "fusion" => fusion_entries.push(e),
            "head" => head_entries.push(e),
            g => return Err(Error::Checkpoint(format!("unknown tensor group `{g}`"))),
        }
    }
    let mut read = |n: usize| (0..n).map(|_| Container::read_from(r)).collect::<Result<Vec<_>>>();
    let fusion_c = read(fusion_entries.len())?;
    let head_c = read(head_entries.len())?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    let fusion = FusionSpec {
        method: header.fusion_method,
        dim_text: header.dim_text,
        dim_image: header.dim_image,
        hidden: header.fusion_hidden,
        params: rebuild(&fusion_entries, fusion_c)?,
    };
    Ok(RouterModel {
        kind: header.kind,
        fusion,
        params: rebuild(&head_entries, head_c)?,
        n_models: header.n_models,
        k: header.k,
        train_lambda: header.train_lambda,
        config: header.config,
        fingerprint: header.fingerprint,
    })
}

pub fn save_checkpoint(path: &Path, model: &RouterModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<RouterModel> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
