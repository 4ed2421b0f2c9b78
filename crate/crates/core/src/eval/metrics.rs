use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sketch::ConstraintSequence;
use crate::solver::Category;

/// One scored generation.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    /// Decode or validation failures are reported as `NotSolvable`.
    pub category: Category,
    pub invalid: bool,
    pub oc_flag: bool,
    pub stable: bool,
    pub success: bool,
    pub hash: String,
    pub constraints: ConstraintSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleParams {
    pub k: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
}

/// Category rates are percentages over all samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub sketches: usize,
    pub samples: usize,
    pub fc_pct: f64,
    pub uc_pct: f64,
    pub oc_pct: f64,
    pub ns_pct: f64,
    pub stable_pct: f64,
    pub oc_flag_pct: f64,
    pub invalid_pct: f64,
    pub success_pct: f64,
    pub mean_constraints: f64,
    pub pass_at: BTreeMap<usize, f64>,
    pub unique_at_k: f64,
    pub miou_at_k: f64,
    pub params: SampleParams,
}

/// Probability that at least one of `k` draws without replacement from `n`
/// samples (of which `c` succeed) is a success.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> f64 {
    if n == 0 || k == 0 {
        return 0.0;
    }
    let k = k.min(n);
    if n - c < k {
        return 1.0;
    }
    let mut fail = 1.0;
    for i in (n - c + 1)..=n {
        fail *= 1.0 - k as f64 / i as f64;
    }
    1.0 - fail
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

impl MetricsTable {
    /// Aggregates `groups[s]` = the K outcomes for sketch `s`.
    pub fn from_groups(groups: &[Vec<SampleOutcome>], params: SampleParams) -> Self {
        let all: Vec<&SampleOutcome> = groups.iter().flatten().collect();
        let n = all.len();
        let count = |f: &dyn Fn(&SampleOutcome) -> bool| all.iter().filter(|o| f(o)).count();
        let mut ks: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2)).take_while(|&k| k < params.k).collect();
        ks.push(params.k.max(1));
        let pass_at = ks
            .into_iter()
            .map(|k| {
                let total: f64 = groups
                    .iter()
                    .map(|g| pass_at_k(g.len(), g.iter().filter(|o| o.success).count(), k))
                    .sum();
                (k, if groups.is_empty() { 0.0 } else { 100.0 * total / groups.len() as f64 })
            })
            .collect();
        let (mut unique, mut miou_sum, mut miou_n) = (0.0, 0.0, 0usize);
        for g in groups {
            let hashes: Vec<String> = g.iter().map(|o| o.hash.clone()).collect();
            unique += super::unique_fraction(&hashes);
            let seqs: Vec<ConstraintSequence> = g.iter().map(|o| o.constraints.clone()).collect();
            if let Ok(m) = super::miou(&seqs) {
                miou_sum += m;
                miou_n += 1;
            }
        }
        Self {
            sketches: groups.len(),
            samples: n,
            fc_pct: pct(count(&|o| o.category == Category::FullyConstrained), n),
            uc_pct: pct(count(&|o| o.category == Category::UnderConstrained), n),
            oc_pct: pct(count(&|o| o.category == Category::OverConstrained), n),
            ns_pct: pct(count(&|o| o.category == Category::NotSolvable), n),
            stable_pct: pct(count(&|o| o.stable), n),
            oc_flag_pct: pct(count(&|o| o.oc_flag), n),
            invalid_pct: pct(count(&|o| o.invalid), n),
            success_pct: pct(count(&|o| o.success), n),
            mean_constraints: if n == 0 { 0.0 } else { all.iter().map(|o| o.constraints.len()).sum::<usize>() as f64 / n as f64 },
            pass_at,
            unique_at_k: if groups.is_empty() { 0.0 } else { 100.0 * unique / groups.len() as f64 },
            miou_at_k: if miou_n == 0 { 0.0 } else { miou_sum / miou_n as f64 },
            params,
        }
    }

    pub fn pass_at_1(&self) -> f64 {
        self.pass_at.get(&1).copied().unwrap_or(0.0)
    }

    pub fn pass_at_max(&self) -> f64 {
        self.pass_at.values().last().copied().unwrap_or(0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}
