use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Subject-level assignment to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Subject id → fold id.
    pub assignments: BTreeMap<usize, usize>,
}

impl FoldPlan {
    /// Subject ids of `fold`, ascending.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        self.assignments.iter().filter(|&(_, &f)| f == fold).map(|(&id, _)| id).collect()
    }

    /// Subject ids outside `fold`, ascending.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        self.assignments.iter().filter(|&(_, &f)| f != fold).map(|(&id, _)| id).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in self.assignments.values() {
            s[f] += 1;
        }
        s
    }
}

/// Seeded shuffle, then round-robin: fold sizes differ by at most one.
pub fn make_folds(ids: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || k > ids.len() {
        return Err(Error::Validation(format!("cannot split {} subjects into {k} folds", ids.len())));
    }
    let mut order = ids.to_vec();
    order.sort_unstable();
    if order.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Validation("subject ids must be unique".into()));
    }
    order.shuffle(&mut seeds::stream(seed, "folds"));
    let assignments = order.iter().enumerate().map(|(i, &id)| (id, i % k)).collect();
    Ok(FoldPlan { k, seed, assignments })
}
