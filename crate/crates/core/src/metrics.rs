//! Token-collapse measures for generated sequences.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1 - unique n-grams / total n-grams`.
pub fn degeneration_score(ids: &[u32], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    if ids.len() < n {
        return Err(Error::SequenceTooShort { len: ids.len(), n });
    }
    let windows = ids.windows(n);
    let total = windows.len();
    let unique: HashSet<&[u32]> = ids.windows(n).collect();
    Ok(1.0 - unique.len() as f64 / total as f64)
}

/// Smallest period `p` such that the sequence ends with two copies of the
/// same `p`-token block, or `None` if it does not end in a repetition.
pub fn repeated_suffix_period(ids: &[u32]) -> Option<usize> {
    (1..=ids.len() / 2).find(|&p| {
        let n = ids.len();
        ids[n - 2 * p..n - p] == ids[n - p..]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerationMetrics {
    /// `(n, score)` for n in 2, 3, 4; orders longer than the sequence are omitted.
    pub ngram_repetition: Vec<(usize, f64)>,
    pub repeated_suffix_period: Option<usize>,
}

impl DegenerationMetrics {
    pub fn of(ids: &[u32]) -> Self {
        Self {
            ngram_repetition: (2..=4)
                .filter_map(|n| degeneration_score(ids, n).ok().map(|s| (n, s)))
                .collect(),
            repeated_suffix_period: repeated_suffix_period(ids),
        }
    }

    pub fn score(&self, n: usize) -> Option<f64> {
        self.ngram_repetition
            .iter()
            .find(|(k, _)| *k == n)
            .map(|(_, s)| *s)
    }
}
