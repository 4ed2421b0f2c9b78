use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{allowed_range, column_token, plan_sequence, Encoded, PolicyParams};
use super::tape::Tape;
use crate::error::Result;
use crate::sketch::{PrimitiveKind, Sketch};
use crate::tokenizer::{encode_geometry, GrammarState, Token};

/// Decoding temperature and nucleus threshold. `temperature == 0` is argmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { temperature: 1.0, top_p: 1.0 }
    }
}

impl SampleOptions {
    pub const GREEDY: SampleOptions = SampleOptions { temperature: 0.0, top_p: 1.0 };
}

/// A sampled token stream with the untempered log-probability of every
/// emitted token (SOS excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tokens: Vec<Token>,
    pub logprobs: Vec<f64>,
}

impl Trajectory {
    pub fn total_logprob(&self) -> f64 {
        self.logprobs.iter().sum()
    }
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Picks an index of `logp` (already normalized) under the options.
fn choose(logp: &[f64], opts: SampleOptions, rng: &mut impl Rng) -> usize {
    if opts.temperature <= 0.0 {
        let mut best = 0;
        for (i, &v) in logp.iter().enumerate() {
            if v > logp[best] {
                best = i;
            }
        }
        return best;
    }
    let tempered = log_softmax(&logp.iter().map(|v| v / opts.temperature).collect::<Vec<_>>());
    let mut order: Vec<usize> = (0..logp.len()).collect();
    order.sort_by(|&a, &b| tempered[b].total_cmp(&tempered[a]).then(a.cmp(&b)));
    let mut kept = order.len();
    if opts.top_p < 1.0 {
        let mut mass = 0.0;
        for (i, &j) in order.iter().enumerate() {
            mass += tempered[j].exp();
            if mass >= opts.top_p {
                kept = i + 1;
                break;
            }
        }
    }
    let total: f64 = order[..kept].iter().map(|&j| tempered[j].exp()).sum();
    let mut u = rng.gen::<f64>() * total;
    for &j in &order[..kept] {
        u -= tempered[j].exp();
        if u <= 0.0 {
            return j;
        }
    }
    order[kept - 1]
}

/// Ancestral sampling under the structural grammar with a caller-owned RNG.
pub fn sample_with(
    params: &PolicyParams,
    enc: &Encoded,
    kinds: &[PrimitiveKind],
    opts: SampleOptions,
    rng: &mut impl Rng,
) -> Trajectory {
    let n = enc.primitive_count();
    let max_len = params.config.max_seq_len;
    let mut cache = params.start();
    let mut state = GrammarState::new();
    let mut tokens = vec![Token::SOS];
    let mut logprobs = Vec::new();
    loop {
        let input = *tokens.last().expect("starts with SOS");
        let logits = params.step(enc, &mut cache, input);
        let (lo, hi) = allowed_range(&state, tokens.len(), max_len, n);
        let logp = log_softmax(&logits[lo..hi]);
        let pick = choose(&logp, opts, rng);
        let tok = column_token(lo + pick);
        state.advance(tok, kinds).expect("mask admits only grammatical tokens");
        tokens.push(tok);
        logprobs.push(logp[pick]);
        if tok == Token::EOS {
            return Trajectory { tokens, logprobs };
        }
    }
}

pub fn sample_sequence(params: &PolicyParams, sketch: &Sketch, opts: SampleOptions, seed: u64) -> Result<Trajectory> {
    let enc = params.encode(sketch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_with(params, &enc, &sketch.kinds(), opts, &mut rng))
}

/// Argmax decoding.
pub fn greedy_sequence(params: &PolicyParams, sketch: &Sketch) -> Result<Trajectory> {
    sample_sequence(params, sketch, SampleOptions::GREEDY, 0)
}

/// Total and per-token log-probabilities of `tokens` under the sampling mask.
pub fn sequence_logprob(params: &PolicyParams, sketch: &Sketch, tokens: &[Token]) -> Result<(f64, Vec<f64>)> {
    let mut out = group_logprobs(params, sketch, &[tokens])?;
    let per = out.pop().expect("one sequence");
    Ok((per.iter().sum(), per))
}

/// Per-token log-probabilities of several sequences for one sketch, sharing
/// one encoder pass.
pub fn group_logprobs(params: &PolicyParams, sketch: &Sketch, seqs: &[&[Token]]) -> Result<Vec<Vec<f64>>> {
    let geom = encode_geometry(sketch)?;
    let kinds = sketch.kinds();
    let mut tape = Tape::new(&params.tensors);
    let enc = params.encode_on_tape(&mut tape, &geom);
    seqs.iter()
        .map(|toks| {
            let plan = plan_sequence(toks, &kinds, params.config.max_seq_len)?;
            let lp = params.decode_on_tape(&mut tape, enc, &plan);
            Ok(tape.value(lp).iter().copied().collect())
        })
        .collect()
}
