//! Corpus, pretraining, SFT and every alignment method at desk scale, with a
//! metrics line per stage on the test split.
//!
//! Reads `configs/desk.toml` unless a config path is given as the first
//! argument. `PIPE_COUNT` sets the corpus size and `PIPE_ALGOS` picks the
//! alignment methods (comma-separated, default all five).

use std::path::PathBuf;
use std::time::Instant;

use sketch_align::alignment::{align, pretrain, supervised_finetune, train_queries, Algo, TrainConfig, TrainLog};
use sketch_align::datagen::{build_corpus, CorpusConfig, Split};
use sketch_align::eval::{eval_model, MetricsTable, SampleParams};
use sketch_align::sketch::Sketch;

fn show(name: &str, m: &MetricsTable, t: Instant) {
    println!(
        "{name:<6} FC {:5.1}  UC {:5.1}  OC {:5.1}  NS {:5.1}  invalid {:5.1}  pass@1 {:5.1}  pass@8 {:5.1}  unique {:.2}  ({:.0}s)",
        m.fc_pct,
        m.uc_pct,
        m.oc_pct,
        m.ns_pct,
        m.invalid_pct,
        m.pass_at_1(),
        m.pass_at_max(),
        m.unique_at_k,
        t.elapsed().as_secs_f64()
    );
}

fn main() -> sketch_align::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/desk.toml"));
    let cfg = TrainConfig::load(&path)?;
    let count = std::env::var("PIPE_COUNT").ok().and_then(|v| v.parse().ok()).unwrap_or(2000);
    let algos: Vec<Algo> = match std::env::var("PIPE_ALGOS") {
        Ok(list) => list.split(',').filter_map(Algo::from_name).collect(),
        Err(_) => Algo::ALL.to_vec(),
    };

    let t = Instant::now();
    let (records, stats) = build_corpus(&CorpusConfig { count, ..CorpusConfig::default() })?;
    println!("corpus: {} records, FC {:.3}, drop probability {:.3}", stats.records, stats.fc_fraction, stats.drop_prob);
    let test: Vec<Sketch> = records.iter().filter(|r| r.split == Split::Test).map(|r| r.sketch()).collect::<Result<_, _>>()?;
    let queries = train_queries(&records)?;
    let sp = SampleParams { k: 8, temperature: 1.0, top_p: 1.0, seed: 7 };
    let mut log = TrainLog::memory();

    let base = pretrain(&records, &cfg, &mut log)?;
    show("base", &eval_model(&base, &test, &sp, &cfg.reward)?, t);
    let sft = supervised_finetune(base, &records, &cfg, &mut log)?;
    show("sft", &eval_model(&sft, &test, &sp, &cfg.reward)?, t);
    for algo in algos {
        let p = align(algo, sft.clone(), &queries, &cfg, &mut log)?;
        show(algo.name(), &eval_model(&p, &test, &sp, &cfg.reward)?, t);
    }
    Ok(())
}
