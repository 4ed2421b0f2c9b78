//! Solver-verified rewards and the alignment procedures: supervised
//! fine-tuning, expert iteration, DPO, ReMax, RLOO and GRPO.

mod config;
mod objectives;
mod pipeline;
mod reward;
mod train;

pub use config::{Algo, DpoConfig, ExitConfig, RlConfig, SupervisedConfig, TrainConfig};
pub use objectives::{
    grpo_advantages, kl_per_token, remax_advantages, remax_raw_advantages, rloo_advantages, standardize, KlEstimator,
};
pub use pipeline::{align, pretrain, supervised_finetune, train_queries};
pub use reward::{
    constraintwise_penalties, reward, score_tokens, token_penalties, FailureMode, RewardBreakdown, RewardConfig, Scored,
};
pub use train::{
    dpo_round, examples_from_records, exit_round, grpo_update, preference_pairs, remax_update, rloo_update, rollouts,
    sft_step, train_supervised, Example, LogEntry, PreferencePair, RlContext, RlTrainer, Rollout, RoundStats, StepStats,
    TrainLog,
};
