//! Pretrains and fine-tunes the desk-scale policy on a generated corpus,
//! saves the checkpoint and reports test metrics before and after
//! fine-tuning. Takes about a minute in release mode.

use std::path::Path;

use sketch_align::alignment::{pretrain, supervised_finetune, TrainConfig, TrainLog};
use sketch_align::datagen::{build_corpus, CorpusConfig, Split};
use sketch_align::eval::{eval_model, SampleParams};
use sketch_align::policy::save;
use sketch_align::sketch::Sketch;

fn main() -> sketch_align::Result<()> {
    let (records, _) = build_corpus(&CorpusConfig::default())?;
    let test: Vec<Sketch> = records.iter().filter(|r| r.split == Split::Test).map(|r| r.sketch()).collect::<Result<_, _>>()?;
    let cfg = TrainConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/desk.toml"))?;

    let mut log = TrainLog::memory();
    let base = pretrain(&records, &cfg, &mut log)?;
    let sft = supervised_finetune(base.clone(), &records, &cfg, &mut log)?;
    println!("{} optimizer steps logged", log.entries.len());

    let sp = SampleParams { k: 4, temperature: 1.0, top_p: 1.0, seed: 0 };
    for (name, p) in [("base", &base), ("sft", &sft)] {
        let m = eval_model(p, &test, &sp, &cfg.reward)?;
        println!("{name}: FC {:.1}%  pass@1 {:.1}%", m.fc_pct, m.pass_at_1());
    }
    let path = std::env::temp_dir().join("sketch_align_sft.json");
    save(&sft, &path)?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}
