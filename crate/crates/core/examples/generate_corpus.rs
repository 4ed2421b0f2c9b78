//! Builds a small calibrated corpus and prints its statistics.

use sketch_align::datagen::{build_corpus, CorpusConfig};

fn main() -> sketch_align::Result<()> {
    let cfg = CorpusConfig { count: 400, ..CorpusConfig::default() };
    let (records, stats) = build_corpus(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    let first = &records[0];
    println!("first record: {} with {} constraints ({:?})", first.template.name(), first.constraints.len(), first.category);
    Ok(())
}
