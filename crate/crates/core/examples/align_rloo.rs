//! Fine-tunes the desk-scale policy, then runs 200 RLOO steps against the
//! solver reward and prints the training curve in blocks of 25 steps.

use std::path::Path;

use sketch_align::alignment::{pretrain, supervised_finetune, train_queries, Algo, RlTrainer, TrainConfig, TrainLog};
use sketch_align::datagen::{build_corpus, CorpusConfig};

fn main() -> sketch_align::Result<()> {
    let (records, _) = build_corpus(&CorpusConfig::default())?;
    let mut cfg = TrainConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/desk.toml"))?;
    cfg.rl.steps = 200;

    let mut log = TrainLog::memory();
    let sft = supervised_finetune(pretrain(&records, &cfg, &mut log)?, &records, &cfg, &mut log)?;
    let queries = train_queries(&records)?;
    let mut trainer = RlTrainer::new(Algo::Rloo, sft, cfg.rl.clone(), cfg.reward.clone(), cfg.seed)?;
    let mut rl_log = TrainLog::memory();
    for block in 1..=cfg.rl.steps / 25 {
        trainer.run(&queries, 25, &mut rl_log)?;
        let recent = &rl_log.entries[rl_log.entries.len() - 25..];
        let fc = recent.iter().map(|e| e.fc_rate).sum::<f64>() / 25.0;
        let reward = recent.iter().map(|e| e.mean_reward).sum::<f64>() / 25.0;
        println!("steps {:>3}: train FC {:.3}, mean reward {:.3}", block * 25, fc, reward);
    }
    Ok(())
}
