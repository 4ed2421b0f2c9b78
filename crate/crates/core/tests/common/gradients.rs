//! Finite-difference probes of every training objective on a tiny policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketch_align::alignment::{grpo_advantages, remax_advantages, rloo_advantages};
use sketch_align::policy::{
    loss_and_grad, loss_value, sample_sequence, sequence_logprob, PairTerm, PolicyConfig, PolicyParams, QueryLoss,
    SampleOptions, SeqObjective, SeqTerm,
};
use sketch_align::sketch::Sketch;

use super::template_fixtures;
use sketch_align::tokenizer::Token;

/// A config under 2k parameters.
pub fn small(seed: u64) -> PolicyParams {
    let p = PolicyParams::init(PolicyConfig {
        embed_dim: 4,
        encoder_layers: 1,
        decoder_layers: 1,
        heads: 2,
        feedforward_dim: 4,
        max_seq_len: 24,
        seed,
    })
    .unwrap();
    assert!(p.param_count() <= 2000, "{} parameters", p.param_count());
    p
}

/// Heads start near zero; scale them up so every tensor gets a visible gradient.
fn lively(seed: u64) -> PolicyParams {
    let mut p = small(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for i in 0..p.param_count() {
        let v = p.get_flat(i);
        p.set_flat(i, v + rng.gen_range(-0.3..0.3));
    }
    p
}

fn queries() -> Vec<Sketch> {
    template_fixtures(2)
        .into_iter()
        .map(|(_, s, _)| s)
        .filter(|s| s.len() <= 6)
        .take(2)
        .collect()
}

fn samples(params: &PolicyParams, sketch: &Sketch, n: usize, seed: u64) -> Vec<Vec<Token>> {
    (0..n)
        .map(|j| sample_sequence(params, sketch, SampleOptions::default(), seed * 100 + j as u64).unwrap().tokens)
        .collect()
}

/// Central differences on 50 random coordinates; returns the worst relative
/// error and insists that most probes hit parameters the loss depends on.
pub fn fd_check(params: &PolicyParams, batch: &[QueryLoss], seed: u64) -> f64 {
    let (_, grads) = loss_and_grad(params, batch).unwrap();
    let flat: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut live = 0;
    for _ in 0..50 {
        let i = rng.gen_range(0..params.param_count());
        let mut p = params.clone();
        let v = p.get_flat(i);
        p.set_flat(i, v + h);
        let up = loss_value(&p, batch).unwrap();
        p.set_flat(i, v - h);
        let down = loss_value(&p, batch).unwrap();
        let numeric = (up - down) / (2.0 * h);
        let scale = flat[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((flat[i] - numeric).abs() / scale);
        if flat[i].abs() > 1e-6 {
            live += 1;
        }
    }
    assert!(live >= 20, "only {live} probed coordinates carry gradient");
    worst
}

fn weighted(tokens: &[Token], w: f64) -> SeqTerm {
    SeqTerm { tokens: tokens.to_vec(), objective: SeqObjective::Weighted(vec![w; tokens.len() - 1]) }
}

pub fn sft_problem() -> (PolicyParams, Vec<QueryLoss>) {
    let p = lively(1);
    let batch: Vec<QueryLoss> = queries()
        .into_iter()
        .map(|s| {
            let mut q = QueryLoss::new(s.clone());
            q.sequences = samples(&p, &s, 2, 1).iter().map(|t| weighted(t, 0.05)).collect();
            q
        })
        .collect();
    (p, batch)
}

pub fn dpo_problem() -> (PolicyParams, Vec<QueryLoss>) {
    let p = lively(2);
    let reference = lively(3);
    let batch: Vec<QueryLoss> = queries()
        .into_iter()
        .map(|s| {
            let seqs = samples(&p, &s, 2, 2);
            let r = |t: &[Token]| sequence_logprob(&reference, &s, t).unwrap().0;
            let mut q = QueryLoss::new(s.clone());
            q.pairs.push(PairTerm {
                ref_chosen: r(&seqs[0]),
                ref_rejected: r(&seqs[1]),
                chosen: seqs[0].clone(),
                rejected: seqs[1].clone(),
                beta: 0.1,
                label_smoothing: 0.3,
                sft_weight: 0.05,
                scale: 0.5,
            });
            q
        })
        .collect();
    (p, batch)
}

pub fn remax_problem() -> (PolicyParams, Vec<QueryLoss>) {
    let p = lively(4);
    let qs = queries();
    let adv = remax_advantages(&[1.5, -0.5], &[0.2, 0.4]);
    let batch: Vec<QueryLoss> = qs
        .iter()
        .zip(&adv)
        .map(|(s, &a)| {
            let t = &samples(&p, s, 1, 4)[0];
            let mut q = QueryLoss::new(s.clone());
            q.sequences.push(SeqTerm {
                tokens: t.clone(),
                objective: SeqObjective::Weighted((0..t.len() - 1).map(|i| (a - if i % 3 == 0 { 1.0 } else { 0.0 }) / 2.0).collect()),
            });
            q
        })
        .collect();
    (p, batch)
}

pub fn rloo_problem() -> (PolicyParams, Vec<QueryLoss>) {
    let p = lively(5);
    let batch: Vec<QueryLoss> = queries()
        .into_iter()
        .map(|s| {
            let seqs = samples(&p, &s, 4, 5);
            let adv = rloo_advantages(&[2.0, 0.75, -1.0, -0.5]).unwrap();
            let mut q = QueryLoss::new(s.clone());
            q.sequences = seqs.iter().zip(&adv).map(|(t, &a)| weighted(t, a / 8.0)).collect();
            q
        })
        .collect();
    (p, batch)
}

pub fn grpo_problem() -> (PolicyParams, Vec<QueryLoss>) {
    let p = lively(6);
    // Samples and reference log-probabilities come from a nearby policy so
    // the ratios straddle the clip range.
    let mut reference = p.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for i in 0..reference.param_count() {
        let v = reference.get_flat(i);
        reference.set_flat(i, v + rng.gen_range(-0.05..0.05));
    }
    let batch: Vec<QueryLoss> = queries()
        .into_iter()
        .map(|s| {
            let seqs = samples(&reference, &s, 4, 6);
            let adv = grpo_advantages(&[2.0, 0.75, -1.0, 0.75]).unwrap();
            let mut q = QueryLoss::new(s.clone());
            q.sequences = seqs
                .iter()
                .zip(&adv)
                .map(|(t, &a)| SeqTerm {
                    tokens: t.clone(),
                    objective: SeqObjective::Clipped {
                        ref_logprobs: sequence_logprob(&reference, &s, t).unwrap().1,
                        advantages: vec![a; t.len() - 1],
                        eps: 0.2,
                        beta: 0.01,
                        scale: 1.0 / (8.0 * (t.len() - 1) as f64),
                    },
                })
                .collect();
            q
        })
        .collect();
    (p, batch)
}
