use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STD_EPS: f64 = 1e-8;

/// Per-token KL estimators against the reference policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlEstimator {
    /// `logp - ref_logp`, used inside the ReMax and RLOO rewards.
    LogRatio,
    /// `1/rho + ln(rho) - 1` with `rho = pi / pi_ref`, always non-negative.
    Grpo,
}

pub fn kl_per_token(logprobs: &[f64], ref_logprobs: &[f64], estimator: KlEstimator) -> Vec<f64> {
    logprobs
        .iter()
        .zip(ref_logprobs)
        .map(|(&lp, &rl)| {
            let d = lp - rl;
            match estimator {
                KlEstimator::LogRatio => d,
                KlEstimator::Grpo => (-d).exp() + d - 1.0,
            }
        })
        .collect()
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Subtracts the mean and divides by the population standard deviation;
/// a constant input maps to zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let (m, s) = mean_std(x);
    x.iter().map(|v| (v - m) / (s + STD_EPS)).collect()
}

/// Raw ReMax advantages `r - r_greedy`.
pub fn remax_raw_advantages(rewards: &[f64], greedy_rewards: &[f64]) -> Vec<f64> {
    rewards.iter().zip(greedy_rewards).map(|(r, b)| r - b).collect()
}

/// ReMax advantages standardized across the batch.
pub fn remax_advantages(rewards: &[f64], greedy_rewards: &[f64]) -> Vec<f64> {
    standardize(&remax_raw_advantages(rewards, greedy_rewards))
}

fn check_group(rewards: &[f64]) -> Result<()> {
    if rewards.len() < 2 {
        return Err(Error::DegenerateGroup(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("reward"));
    }
    Ok(())
}

/// Leave-one-out baselines, then standardized within the group.
pub fn rloo_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    check_group(rewards)?;
    let g = rewards.len() as f64;
    let total: f64 = rewards.iter().sum();
    let raw: Vec<f64> = rewards.iter().map(|r| r - (total - r) / (g - 1.0)).collect();
    Ok(standardize(&raw))
}

/// Group-relative advantages: rewards standardized within the group.
pub fn grpo_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    check_group(rewards)?;
    Ok(standardize(rewards))
}
