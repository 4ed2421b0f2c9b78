//! Evaluates a policy on held-out sketches: category rates, Pass@K and the
//! two diversity measures. Pass a checkpoint path to evaluate it instead of
//! a freshly initialized model.

use sketch_align::alignment::RewardConfig;
use sketch_align::datagen::{build_corpus, CorpusConfig, Split};
use sketch_align::eval::{eval_model, SampleParams};
use sketch_align::policy::{load, PolicyConfig, PolicyParams};
use sketch_align::sketch::Sketch;

fn main() -> sketch_align::Result<()> {
    let params = match std::env::args().nth(1) {
        Some(path) => load(path.as_ref())?,
        None => PolicyParams::init(PolicyConfig { embed_dim: 16, feedforward_dim: 32, ..PolicyConfig::default() })?,
    };
    let (records, _) = build_corpus(&CorpusConfig { count: 200, ..CorpusConfig::default() })?;
    let test: Vec<Sketch> = records.iter().filter(|r| r.split == Split::Test).map(|r| r.sketch()).collect::<Result<_, _>>()?;
    let sp = SampleParams { k: 8, temperature: 1.0, top_p: 1.0, seed: 0 };
    let m = eval_model(&params, &test, &sp, &RewardConfig::default())?;
    println!("{}", m.to_json());
    Ok(())
}
