use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
}

impl SplitTag {
    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Dev => "dev",
            SplitTag::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub assignment: Vec<SplitTag>,
}

impl SplitAssignment {
    /// Sample indices carrying `tag`, ascending.
    pub fn indices(&self, tag: SplitTag) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == tag)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train(&self) -> Vec<usize> {
        self.indices(SplitTag::Train)
    }

    pub fn dev(&self) -> Vec<usize> {
        self.indices(SplitTag::Dev)
    }

    pub fn test(&self) -> Vec<usize> {
        self.indices(SplitTag::Test)
    }
}

/// Per-dataset shuffle followed by a 70/10/20 partition of each dataset.
pub fn make_split(store: &BenchStore, seed: u64) -> Result<SplitAssignment> {
    let ids = store.dataset_ids();
    let names = store.datasets();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); names.len()];
    for (i, &d) in ids.iter().enumerate() {
        groups[d].push(i);
    }
    if let Some((d, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 10) {
        return Err(Error::TooFewSamples { dataset: names[d].clone(), count: g.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![SplitTag::Test; store.n_samples()];
    for mut group in groups {
        group.shuffle(&mut rng);
        let n = group.len() as f64;
        let n_train = (0.7 * n).round() as usize;
        let n_dev = (0.1 * n).round() as usize;
        for (pos, &i) in group.iter().enumerate() {
            assignment[i] = if pos < n_train {
                SplitTag::Train
            } else if pos < n_train + n_dev {
                SplitTag::Dev
            } else {
                SplitTag::Test
            };
        }
    }
    Ok(SplitAssignment { seed, assignment })
}
