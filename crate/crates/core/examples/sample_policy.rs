//! Samples constraint streams from an untrained policy and scores each one
//! with the solver reward. Samples always follow the token grammar but
//! can still name illegal operand combinations, which score as invalid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketch_align::alignment::{score_tokens, RewardConfig};
use sketch_align::datagen::{generate_sketch, Template};
use sketch_align::policy::{greedy_sequence, sample_sequence, PolicyConfig, PolicyParams, SampleOptions};
use sketch_align::solver::SolveOptions;

fn main() -> sketch_align::Result<()> {
    let params = PolicyParams::init(PolicyConfig { embed_dim: 16, feedforward_dim: 32, ..PolicyConfig::default() })?;
    println!("policy with {} parameters", params.param_count());
    let (sketch, _) = generate_sketch(Template::Rectangle, &mut ChaCha8Rng::seed_from_u64(4));
    let reward = RewardConfig::default();
    let opts = SampleOptions { temperature: 1.0, top_p: 0.9 };
    for seed in 0..4 {
        let t = sample_sequence(&params, &sketch, opts, seed)?;
        let s = score_tokens(&sketch, &t.tokens, &SolveOptions::default(), &reward);
        let cat = if s.report.is_some() { s.category().short() } else { "invalid" };
        println!("sample {seed}: {} tokens, logprob {:.2}, {cat}, reward {:.2}", t.tokens.len(), t.total_logprob(), s.reward.total);
    }
    let g = greedy_sequence(&params, &sketch)?;
    println!("greedy: {} tokens", g.tokens.len());
    Ok(())
}
