use super::model::{plan_sequence, PolicyParams};
use super::tape::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::sketch::Sketch;
use crate::tokenizer::{encode_geometry, Token};

/// Contribution of one sequence to the loss.
#[derive(Debug, Clone, PartialEq)]
pub enum SeqObjective {
    /// Adds `-sum_t w[t] * logp[t]`.
    Weighted(Vec<f64>),
    /// Adds `-scale * sum_t [min(rho A, clip(rho) A) - beta KL_t]` with
    /// `rho = exp(logp - ref_logp)`.
    Clipped { ref_logprobs: Vec<f64>, advantages: Vec<f64>, eps: f64, beta: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqTerm {
    pub tokens: Vec<Token>,
    pub objective: SeqObjective,
}

/// Smoothed DPO pair loss plus an SFT term on the chosen sequence, times `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTerm {
    pub chosen: Vec<Token>,
    pub rejected: Vec<Token>,
    pub ref_chosen: f64,
    pub ref_rejected: f64,
    pub beta: f64,
    pub label_smoothing: f64,
    pub sft_weight: f64,
    pub scale: f64,
}

/// All loss terms that share one query sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryLoss {
    pub sketch: Sketch,
    pub sequences: Vec<SeqTerm>,
    pub pairs: Vec<PairTerm>,
}

impl QueryLoss {
    pub fn new(sketch: Sketch) -> Self {
        Self { sketch, sequences: Vec::new(), pairs: Vec::new() }
    }
}

fn query_root(params: &PolicyParams, tape: &mut Tape, q: &QueryLoss) -> Result<Option<Var>> {
    let geom = encode_geometry(&q.sketch)?;
    let kinds = q.sketch.kinds();
    let max_len = params.config.max_seq_len;
    let enc = params.encode_on_tape(tape, &geom);
    let mut parts = Vec::new();
    let logprobs = |tape: &mut Tape, toks: &[Token]| -> Result<Var> {
        let plan = plan_sequence(toks, &kinds, max_len)?;
        Ok(params.decode_on_tape(tape, enc, &plan))
    };
    for s in &q.sequences {
        let lp = logprobs(tape, &s.tokens)?;
        let n = tape.value(lp).nrows();
        let part = match &s.objective {
            SeqObjective::Weighted(w) => {
                if w.len() != n {
                    return Err(Error::StructurallyInvalid(format!("{} weights for {n} tokens", w.len())));
                }
                tape.weighted_sum(lp, w.iter().map(|v| -v).collect())
            }
            SeqObjective::Clipped { ref_logprobs, advantages, eps, beta, scale } => {
                if ref_logprobs.len() != n || advantages.len() != n {
                    return Err(Error::StructurallyInvalid("per-token vectors do not match the sequence".into()));
                }
                let c = tape.clip_surrogate(lp, ref_logprobs.clone(), advantages.clone(), *eps, *beta);
                tape.weighted_sum(c, vec![-scale; n])
            }
        };
        parts.push(part);
    }
    for p in &q.pairs {
        let w = logprobs(tape, &p.chosen)?;
        let l = logprobs(tape, &p.rejected)?;
        let nw = tape.value(w).nrows();
        let sw = tape.sum(w);
        let sl = tape.sum(l);
        let neg_sl = tape.scale(sl, -1.0);
        let delta = tape.add(sw, neg_sl);
        let delta = tape.affine(delta, 1.0, -(p.ref_chosen - p.ref_rejected));
        let pos = tape.affine(delta, p.beta, 0.0);
        let pos = tape.log_sigmoid(pos);
        let neg = tape.affine(delta, -p.beta, 0.0);
        let neg = tape.log_sigmoid(neg);
        let a = tape.scale(pos, -(1.0 - p.label_smoothing) * p.scale);
        let b = tape.scale(neg, -p.label_smoothing * p.scale);
        let c = tape.scale(sw, -p.sft_weight * p.scale / nw as f64);
        let ab = tape.add(a, b);
        parts.push(tape.add(ab, c));
    }
    let mut it = parts.into_iter();
    let Some(mut root) = it.next() else { return Ok(None) };
    for p in it {
        root = tape.add(root, p);
    }
    Ok(Some(root))
}

/// Queries per gradient chunk; chunk sums are combined in order so the
/// result does not depend on how many threads ran.
const GRAD_CHUNK: usize = 8;

fn chunk_grad(params: &PolicyParams, chunk: &[QueryLoss]) -> Result<(f64, Vec<Mat>)> {
    let mut grads: Vec<Mat> = params.tensors.iter().map(|t| Mat::zeros(t.nrows(), t.ncols())).collect();
    let mut loss = 0.0;
    for q in chunk {
        let mut tape = Tape::new(&params.tensors);
        let Some(root) = query_root(params, &mut tape, q)? else { continue };
        let value = tape.scalar(root);
        if !value.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        loss += value;
        for (acc, g) in grads.iter_mut().zip(tape.backward(root)) {
            if let Some(g) = g {
                *acc += g;
            }
        }
    }
    Ok((loss, grads))
}

/// Scalar loss over all queries and its gradient, one matrix per tensor.
pub fn loss_and_grad(params: &PolicyParams, batch: &[QueryLoss]) -> Result<(f64, Vec<Mat>)> {
    let chunks: Vec<&[QueryLoss]> = batch.chunks(GRAD_CHUNK).collect();
    let parts = crate::par::par_map(&chunks, |c| chunk_grad(params, c));
    let mut grads: Vec<Mat> = params.tensors.iter().map(|t| Mat::zeros(t.nrows(), t.ncols())).collect();
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (acc, g) in grads.iter_mut().zip(g) {
            *acc += g;
        }
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((loss, grads))
}

/// Loss only, for finite-difference probes.
pub fn loss_value(params: &PolicyParams, batch: &[QueryLoss]) -> Result<f64> {
    let mut loss = 0.0;
    for q in batch {
        let mut tape = Tape::new(&params.tensors);
        if let Some(root) = query_root(params, &mut tape, q)? {
            loss += tape.scalar(root);
        }
    }
    Ok(loss)
}
