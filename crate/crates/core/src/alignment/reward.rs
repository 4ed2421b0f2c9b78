use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::sketch::{validate_constraint, ConstraintInstance, ConstraintSequence, Sketch};
use crate::solver::{incremental_apply, solve_with_bins, Category, SolveOptions, SolveReport};
use crate::tokenizer::{decode, item_spans, parse_structure, Token};

/// Reward shaping constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub r_unstable: f64,
    pub r_ns: f64,
    pub r_oc: f64,
    pub r_f: f64,
    pub constraintwise_penalty: f64,
    pub stability_bins: usize,
    pub overdim_penalty_enabled: bool,
    pub overdim_count_coeff: f64,
    pub overdim_ratio_coeff: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r_unstable: -0.25,
            r_ns: -1.0,
            r_oc: -1.0,
            r_f: -0.5,
            constraintwise_penalty: -1.0,
            stability_bins: 4,
            overdim_penalty_enabled: false,
            overdim_count_coeff: 0.05,
            overdim_ratio_coeff: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureMode {
    #[serde(rename = "NS")]
    NotSolvable,
    #[serde(rename = "OC")]
    OverConstrained,
    #[serde(rename = "F")]
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_curves: f64,
    pub r_points: f64,
    pub penalty: f64,
    pub total: f64,
    pub failure_mode: Option<FailureMode>,
}

impl RewardBreakdown {
    fn failure(mode: FailureMode, value: f64) -> Self {
        Self { r_curves: 0.0, r_points: 0.0, penalty: value, total: value, failure_mode: Some(mode) }
    }

    pub fn decode_failure(cfg: &RewardConfig) -> Self {
        Self::failure(FailureMode::Failure, cfg.r_f)
    }
}

/// Sequence reward from a solver report on the decoded sequence.
pub fn reward(report: &SolveReport, seq: &ConstraintSequence, entities: usize, cfg: &RewardConfig) -> RewardBreakdown {
    let status = &report.status;
    match status.category {
        Category::NotSolvable => return RewardBreakdown::failure(FailureMode::NotSolvable, cfg.r_ns),
        Category::OverConstrained => return RewardBreakdown::failure(FailureMode::OverConstrained, cfg.r_oc),
        _ => {}
    }
    let mut penalty = if status.stable { 0.0 } else { cfg.r_unstable };
    if cfg.overdim_penalty_enabled && !seq.is_empty() {
        penalty -= cfg.overdim_count_coeff * seq.len() as f64 / entities.max(1) as f64;
        penalty -= cfg.overdim_ratio_coeff * seq.dimension_count() as f64 / seq.len() as f64;
    }
    let (c, p) = (status.fc_curve_fraction.clamp(0.0, 1.0), status.fc_point_fraction.clamp(0.0, 1.0));
    RewardBreakdown { r_curves: c, r_points: p, penalty, total: c + p + penalty, failure_mode: None }
}

/// A generated token stream checked against its query sketch.
#[derive(Debug, Clone)]
pub struct Scored {
    pub constraints: Option<ConstraintSequence>,
    pub report: Option<SolveReport>,
    pub error: Option<Error>,
    pub reward: RewardBreakdown,
}

impl Scored {
    /// Fully constrained, not over-constrained and solvable.
    pub fn is_fc_clean(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.status.is_fc_clean())
    }

    /// Additionally stable.
    pub fn is_success(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.status.is_success())
    }

    pub fn category(&self) -> Category {
        self.report.as_ref().map_or(Category::NotSolvable, |r| r.status.category)
    }

    pub fn fc_curve_fraction(&self) -> f64 {
        self.report.as_ref().map_or(0.0, |r| r.status.fc_curve_fraction)
    }
}

/// Decodes, solves and rewards one token stream.
pub fn score_tokens(sketch: &Sketch, tokens: &[Token], opts: &SolveOptions, cfg: &RewardConfig) -> Scored {
    let seq = match decode(tokens, sketch) {
        Ok(s) => s,
        Err(e) => {
            return Scored { constraints: None, report: None, error: Some(e), reward: RewardBreakdown::decode_failure(cfg) }
        }
    };
    match solve_with_bins(sketch, &seq, opts, cfg.stability_bins) {
        Ok(report) => {
            let reward = reward(&report, &seq, sketch.len(), cfg);
            Scored { constraints: Some(seq), report: Some(report), error: None, reward }
        }
        Err(e) => Scored { constraints: Some(seq), report: None, error: Some(e), reward: RewardBreakdown::decode_failure(cfg) },
    }
}

/// Items that make the sketch not solvable or redundant, as found by
/// incremental application, each mapped to `cfg.constraintwise_penalty`.
pub fn constraintwise_penalties(
    sketch: &Sketch,
    seq: &ConstraintSequence,
    opts: &SolveOptions,
    cfg: &RewardConfig,
) -> BTreeMap<usize, f64> {
    let (_, dropped) = incremental_apply(sketch, seq, opts);
    dropped.into_iter().map(|i| (i, cfg.constraintwise_penalty)).collect()
}

/// Per-token penalties for a generated stream (one entry per emitted token,
/// SOS excluded). Semantically invalid items are penalized directly; the
/// valid remainder goes through incremental application unless the whole
/// sequence already solved cleanly.
pub fn token_penalties(sketch: &Sketch, tokens: &[Token], scored: &Scored, opts: &SolveOptions, cfg: &RewardConfig) -> Vec<f64> {
    let mut out = vec![0.0; tokens.len().saturating_sub(1)];
    if scored.report.as_ref().is_some_and(|r| r.status.solvable() && !r.status.oc_flag) {
        return out;
    }
    let Ok(items) = parse_structure(tokens, &sketch.kinds()) else { return out };
    let spans = item_spans(tokens);
    let mut bad: Vec<usize> = Vec::new();
    let mut valid_idx = Vec::new();
    let mut valid = Vec::new();
    for (i, (kind, refs)) in items.into_iter().enumerate() {
        let mut c = ConstraintInstance::new(kind, refs);
        if kind.is_dimension() {
            c.value = crate::sketch::measure_dimension(sketch, &c).ok();
        }
        if validate_constraint(sketch, &c).is_ok() {
            valid_idx.push(i);
            valid.push(c);
        } else {
            bad.push(i);
        }
    }
    let seq = ConstraintSequence { items: valid };
    for (j, _) in constraintwise_penalties(sketch, &seq, opts, cfg) {
        bad.push(valid_idx[j]);
    }
    for i in bad {
        if let Some(span) = spans.get(i) {
            for t in span.clone() {
                out[t - 1] += cfg.constraintwise_penalty;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SketchStatus;

    fn report(category: Category, stable: bool, c: f64, p: f64) -> SolveReport {
        SolveReport {
            status: SketchStatus {
                category,
                oc_flag: category == Category::OverConstrained,
                stable,
                per_entity_fc: Default::default(),
                fc_curve_fraction: c,
                fc_point_fraction: p,
            },
            solved_sketch: None,
            iterations: 0,
            final_residual_norm: 0.0,
            rank_analysis: None,
        }
    }

    #[test]
    fn documented_rewards() {
        let cfg = RewardConfig::default();
        let seq = ConstraintSequence::empty();
        assert_eq!(reward(&report(Category::FullyConstrained, true, 1.0, 1.0), &seq, 3, &cfg).total, 2.0);
        assert_eq!(reward(&report(Category::UnderConstrained, false, 0.5, 0.5), &seq, 3, &cfg).total, 0.75);
        let oc = reward(&report(Category::OverConstrained, true, 1.0, 1.0), &seq, 3, &cfg);
        assert_eq!((oc.total, oc.failure_mode), (-1.0, Some(FailureMode::OverConstrained)));
        assert_eq!(reward(&report(Category::NotSolvable, false, 0.0, 0.0), &seq, 3, &cfg).total, -1.0);
        assert_eq!(RewardBreakdown::decode_failure(&cfg).total, -0.5);
    }

    #[test]
    fn overdim_penalty_scales_with_counts() {
        let cfg = RewardConfig { overdim_penalty_enabled: true, ..Default::default() };
        let seq: ConstraintSequence = vec![
            ConstraintInstance::new(crate::sketch::ConstraintKind::Horizontal, vec![1]),
            ConstraintInstance::dim(crate::sketch::ConstraintKind::LengthDim, vec![1], 1.0),
        ]
        .into_iter()
        .collect();
        let r = reward(&report(Category::FullyConstrained, true, 1.0, 1.0), &seq, 4, &cfg);
        assert!((r.penalty - (-0.05 * 0.5 - 0.25 * 0.5)).abs() < 1e-12);
    }
}
