use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::sketch::{ConstraintKind, ConstraintSequence};

type Key = (ConstraintKind, Vec<usize>);

fn key_set(seq: &ConstraintSequence) -> BTreeSet<Key> {
    seq.iter().map(|c| c.canonical_key()).collect()
}

fn iou(a: &BTreeSet<Key>, b: &BTreeSet<Key>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Mean pairwise intersection-over-union of constraint sets (values ignored,
/// symmetric refs sorted). Two empty sets count as identical.
pub fn miou(generations: &[ConstraintSequence]) -> Result<f64> {
    if generations.len() < 2 {
        return Err(Error::DegenerateK(generations.len()));
    }
    let sets: Vec<_> = generations.iter().map(key_set).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            total += iou(&sets[i], &sets[j]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Fraction of generations whose hash occurs exactly once in the group.
pub fn unique_fraction(hashes: &[String]) -> f64 {
    if hashes.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for h in hashes {
        *counts.entry(h.as_str()).or_default() += 1;
    }
    hashes.iter().filter(|h| counts[h.as_str()] == 1).count() as f64 / hashes.len() as f64
}
