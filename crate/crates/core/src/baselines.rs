//! Training-free routing policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_store::BenchStore;

/// A routed model, as an index into the store's model list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decision(pub usize);

/// Cheapest correct model; with no correct model, the globally cheapest.
/// Cost ties go to the lowest index.
pub fn oracle_decision(y_row: &[u8], c_row: &[f64]) -> Decision {
    let pick = |allowed: &dyn Fn(usize) -> bool| {
        (0..c_row.len())
            .filter(|&j| allowed(j))
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if c_row[b] <= c_row[j] => Some(b),
                _ => Some(j),
            })
    };
    let choice = pick(&|j| y_row[j] == 1).or_else(|| pick(&|_| true));
    Decision(choice.expect("oracle needs at least one model"))
}

/// Highest mean training accuracy; ties by lower mean cost, then index.
pub fn strongest_model(store: &BenchStore, train: &[usize]) -> Result<Decision> {
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let (acc, cost) = store.column_means(train);
    Ok(Decision(best_by(&acc, &cost, |a, b| a > b, |a, b| a < b)))
}

/// Lowest mean training cost; ties by higher mean accuracy, then index.
pub fn cheapest_model(store: &BenchStore, train: &[usize]) -> Result<Decision> {
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let (acc, cost) = store.column_means(train);
    Ok(Decision(best_by(&cost, &acc, |a, b| a < b, |a, b| a > b)))
}

fn best_by(
    primary: &[f64],
    secondary: &[f64],
    better: impl Fn(f64, f64) -> bool,
    tie_better: impl Fn(f64, f64) -> bool,
) -> usize {
    let mut best = 0;
    for j in 1..primary.len() {
        let strictly = better(primary[j], primary[best]);
        let tied = primary[j] == primary[best] && tie_better(secondary[j], secondary[best]);
        if strictly || tied {
            best = j;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Oracle,
    Strongest,
    Cheapest,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Oracle, Baseline::Strongest, Baseline::Cheapest];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Oracle => "oracle",
            Baseline::Strongest => "strongest",
            Baseline::Cheapest => "cheapest",
        }
    }

    /// Decisions for `rows`; fixed-model policies are chosen on `train`.
    pub fn decide(self, store: &BenchStore, train: &[usize], rows: &[usize]) -> Result<Vec<Decision>> {
        Ok(match self {
            Baseline::Oracle => rows
                .iter()
                .map(|&i| oracle_decision(store.quality_row(i), store.cost_row(i)))
                .collect(),
            Baseline::Strongest => vec![strongest_model(store, train)?; rows.len()],
            Baseline::Cheapest => vec![cheapest_model(store, train)?; rows.len()],
        })
    }
}
