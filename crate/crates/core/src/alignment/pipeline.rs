use super::config::{Algo, TrainConfig};
use super::train::{dpo_round, examples_from_records, exit_round, train_supervised, RlTrainer, TrainLog};
use crate::datagen::{DatasetRecord, Split};
use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::sketch::Sketch;

/// Alignment queries: every training-split sketch, solvable or not.
pub fn train_queries(records: &[DatasetRecord]) -> Result<Vec<Sketch>> {
    records.iter().filter(|r| r.split == Split::Train).map(|r| r.sketch()).collect()
}

fn train_split(records: &[DatasetRecord]) -> Vec<DatasetRecord> {
    records.iter().filter(|r| r.split == Split::Train).cloned().collect()
}

/// Fresh model from `cfg.model`, trained on every solved training record.
pub fn pretrain(records: &[DatasetRecord], cfg: &TrainConfig, log: &mut TrainLog) -> Result<PolicyParams> {
    let mut params = PolicyParams::init(cfg.model.clone())?;
    let data = examples_from_records(&params, &train_split(records), |r| r.pretrain_eligible())?;
    train_supervised(&mut params, &data, &cfg.pretrain, cfg.seed ^ 0x9e37, log)?;
    Ok(params)
}

/// Supervised fine-tuning on fully constrained, stable training records.
pub fn supervised_finetune(
    mut params: PolicyParams,
    records: &[DatasetRecord],
    cfg: &TrainConfig,
    log: &mut TrainLog,
) -> Result<PolicyParams> {
    let data = examples_from_records(&params, &train_split(records), |r| r.sft_eligible())?;
    train_supervised(&mut params, &data, &cfg.sft, cfg.seed ^ 0x51f7, log)?;
    Ok(params)
}

/// Runs one alignment method to completion from `params`.
pub fn align(algo: Algo, mut params: PolicyParams, queries: &[Sketch], cfg: &TrainConfig, log: &mut TrainLog) -> Result<PolicyParams> {
    if queries.is_empty() {
        return Err(Error::Config("no alignment queries".into()));
    }
    match algo {
        Algo::Exit => {
            for round in 0..cfg.exit.rounds {
                exit_round(&mut params, queries, &cfg.exit, &cfg.reward, cfg.seed, round, log)?;
            }
            Ok(params)
        }
        Algo::Dpo => {
            // A round without pairs leaves the policy as it is; only a run in
            // which no round found any pair is an error.
            let mut trained = cfg.dpo.rounds == 0;
            for round in 0..cfg.dpo.rounds {
                match dpo_round(&mut params, queries, &cfg.dpo, &cfg.reward, cfg.seed, round, log) {
                    Ok(_) => trained = true,
                    Err(Error::NoPairs) => {}
                    Err(e) => return Err(e),
                }
            }
            if trained {
                Ok(params)
            } else {
                Err(Error::NoPairs)
            }
        }
        _ => {
            let mut trainer = RlTrainer::new(algo, params, cfg.rl.clone(), cfg.reward.clone(), cfg.seed)?;
            trainer.run(queries, cfg.rl.steps, log)?;
            Ok(trainer.params)
        }
    }
}
