use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{Algo, DpoConfig, ExitConfig, RlConfig, SupervisedConfig};
use super::objectives::{grpo_advantages, kl_per_token, remax_advantages, rloo_advantages, KlEstimator};
use super::reward::{score_tokens, token_penalties, RewardConfig, Scored};
use crate::datagen::DatasetRecord;
use crate::error::{Error, Result};
use crate::par::{par_map, rng_for};
use crate::policy::{
    group_logprobs, loss_and_grad, plan_sequence, sample_with, Adam, PairTerm, PolicyParams, QueryLoss, SampleOptions,
    SeqObjective, SeqTerm, Trajectory,
};
use crate::sketch::Sketch;
use crate::solver::SolveOptions;
use crate::tokenizer::{encode_constraints, Token};

/// One line of the JSONL training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub mean_reward: f64,
    pub fc_rate: f64,
    pub kl: f64,
}

/// Collects log entries and optionally streams them to a JSONL file.
#[derive(Debug, Default)]
pub struct TrainLog {
    writer: Option<BufWriter<File>>,
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub fn memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        Ok(Self { writer: Some(BufWriter::new(File::create(path)?)), entries: Vec::new() })
    }

    pub fn push(&mut self, entry: LogEntry) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            serde_json::to_writer(&mut *w, &entry)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn next_step(&self) -> usize {
        self.entries.last().map_or(0, |e| e.step + 1)
    }
}

/// A teacher-forcing example.
pub type Example = (Sketch, Vec<Token>);

fn fits(params: &PolicyParams, ex: &Example) -> bool {
    plan_sequence(&ex.1, &ex.0.kinds(), params.config.max_seq_len).is_ok()
}

/// Token streams for records passing `keep`; records whose sequence does
/// not fit the model's length budget are skipped.
pub fn examples_from_records(
    params: &PolicyParams,
    records: &[DatasetRecord],
    keep: impl Fn(&DatasetRecord) -> bool,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| keep(r)) {
        let ex = (r.sketch()?, encode_constraints(&r.constraints)?);
        if fits(params, &ex) {
            out.push(ex);
        }
    }
    Ok(out)
}

/// Token-averaged negative log-likelihood over the batch.
fn nll_batch(batch: &[&Example]) -> Vec<QueryLoss> {
    let total: usize = batch.iter().map(|(_, t)| t.len() - 1).sum();
    let w = 1.0 / total.max(1) as f64;
    batch
        .iter()
        .map(|(sketch, tokens)| {
            let mut q = QueryLoss::new(sketch.clone());
            q.sequences.push(SeqTerm { tokens: tokens.clone(), objective: SeqObjective::Weighted(vec![w; tokens.len() - 1]) });
            q
        })
        .collect()
}

/// One optimizer step of teacher-forced cross-entropy.
pub fn sft_step(params: &mut PolicyParams, opt: &mut Adam, batch: &[&Example]) -> Result<f64> {
    let (loss, grads) = loss_and_grad(params, &nll_batch(batch))?;
    opt.step(&mut params.tensors, &grads)?;
    params.version += 1;
    Ok(loss)
}

fn adam(lr: f64, clip: Option<f64>) -> Adam {
    let opt = Adam::new(lr);
    match clip {
        Some(c) => opt.with_clip(c),
        None => opt,
    }
}

/// Shuffled minibatch epochs of [`sft_step`]; returns the mean loss of each epoch.
pub fn train_supervised(
    params: &mut PolicyParams,
    data: &[Example],
    cfg: &SupervisedConfig,
    seed: u64,
    log: &mut TrainLog,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Config("no training examples".into()));
    }
    let mut opt = adam(cfg.lr, cfg.clip_norm);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_for(seed, 0x5f7, epoch as u64));
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let loss = sft_step(params, &mut opt, &batch)?;
            log.push(LogEntry { step: log.next_step(), loss, mean_reward: 0.0, fc_rate: 0.0, kl: 0.0 })?;
            sum += loss;
            batches += 1;
        }
        epoch_losses.push(sum / batches as f64);
    }
    Ok(epoch_losses)
}

/// A sampled trajectory with its solver verdict and per-token penalties.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub scored: Scored,
    pub penalties: Vec<f64>,
}

impl Rollout {
    pub fn tokens(&self) -> &[Token] {
        &self.trajectory.tokens
    }
}

/// Draws `n` trajectories for one query and scores them. Sample `j` uses
/// its own generator stream, so results are independent of batching.
#[allow(clippy::too_many_arguments)]
pub fn rollouts(
    params: &PolicyParams,
    sketch: &Sketch,
    n: usize,
    opts: SampleOptions,
    seed: u64,
    stream: u64,
    reward: &RewardConfig,
    with_penalties: bool,
) -> Result<Vec<Rollout>> {
    let enc = params.encode(sketch)?;
    let kinds = sketch.kinds();
    let solve = SolveOptions::default();
    Ok((0..n)
        .map(|j| {
            let mut rng = rng_for(seed, stream, j as u64);
            let trajectory = sample_with(params, &enc, &kinds, opts, &mut rng);
            score_rollout(sketch, trajectory, &solve, reward, with_penalties)
        })
        .collect())
}

fn score_rollout(sketch: &Sketch, trajectory: Trajectory, solve: &SolveOptions, reward: &RewardConfig, with_penalties: bool) -> Rollout {
    let scored = score_tokens(sketch, &trajectory.tokens, solve, reward);
    let penalties = if with_penalties {
        token_penalties(sketch, &trajectory.tokens, &scored, solve, reward)
    } else {
        vec![0.0; trajectory.logprobs.len()]
    };
    Rollout { trajectory, scored, penalties }
}

/// Summary of one ExIt or DPO round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub samples: usize,
    /// Kept examples (ExIt) or preference pairs (DPO).
    pub kept: usize,
    pub fc_rate: f64,
    pub mean_reward: f64,
    pub final_loss: f64,
}

fn sample_all(
    params: &PolicyParams,
    queries: &[Sketch],
    k: usize,
    temperature: f64,
    seed: u64,
    phase: u64,
    reward: &RewardConfig,
) -> Result<Vec<Vec<Rollout>>> {
    let idx: Vec<usize> = (0..queries.len()).collect();
    let opts = SampleOptions { temperature, top_p: 1.0 };
    par_map(&idx, |&i| rollouts(params, &queries[i], k, opts, seed, (phase << 20) | i as u64, reward, false))
        .into_iter()
        .collect()
}

fn rates(groups: &[Vec<Rollout>]) -> (usize, f64, f64) {
    let all: Vec<&Rollout> = groups.iter().flatten().collect();
    let n = all.len().max(1) as f64;
    let fc = all.iter().filter(|r| r.scored.is_fc_clean()).count() as f64 / n;
    let mr = all.iter().map(|r| r.scored.reward.total).sum::<f64>() / n;
    (all.len(), fc, mr)
}

/// Expert iteration: sample `samples` sequences per query, keep the fully
/// constrained ones and fine-tune on them.
pub fn exit_round(
    params: &mut PolicyParams,
    queries: &[Sketch],
    cfg: &ExitConfig,
    reward: &RewardConfig,
    seed: u64,
    round: usize,
    log: &mut TrainLog,
) -> Result<RoundStats> {
    let groups = sample_all(params, queries, cfg.samples, cfg.temperature, seed, 0x100 + round as u64, reward)?;
    let (samples, fc_rate, mean_reward) = rates(&groups);
    let kept: Vec<Example> = queries
        .iter()
        .zip(&groups)
        .flat_map(|(q, g)| g.iter().filter(|r| r.scored.is_fc_clean()).map(|r| (q.clone(), r.tokens().to_vec())))
        .collect();
    let mut final_loss = 0.0;
    if !kept.is_empty() {
        let sup = SupervisedConfig { epochs: cfg.epochs, batch_size: cfg.batch_size, lr: cfg.lr, clip_norm: cfg.clip_norm };
        final_loss = *train_supervised(params, &kept, &sup, seed ^ (round as u64 + 1), log)?.last().unwrap_or(&0.0);
    }
    Ok(RoundStats { round, samples, kept: kept.len(), fc_rate, mean_reward, final_loss })
}

/// A chosen/rejected pair with reference log-probabilities.
#[derive(Debug, Clone)]
pub struct PreferencePair {
    pub query: usize,
    pub chosen: Vec<Token>,
    pub rejected: Vec<Token>,
    pub ref_chosen: f64,
    pub ref_rejected: f64,
}

/// Pairs fully constrained samples with distinct samples that constrain
/// fewer than `max_fc_curves` of the curves, within each query.
pub fn preference_pairs(groups: &[Vec<Rollout>], max_fc_curves: f64) -> Vec<PreferencePair> {
    let mut out = Vec::new();
    for (qi, g) in groups.iter().enumerate() {
        let mut chosen: Vec<&Rollout> = Vec::new();
        let mut rejected: Vec<&Rollout> = Vec::new();
        for r in g {
            if r.scored.is_fc_clean() {
                if !chosen.iter().any(|c| c.tokens() == r.tokens()) {
                    chosen.push(r);
                }
            } else if r.scored.fc_curve_fraction() < max_fc_curves && !rejected.iter().any(|c| c.tokens() == r.tokens()) {
                rejected.push(r);
            }
        }
        for (w, l) in chosen.iter().zip(&rejected) {
            out.push(PreferencePair {
                query: qi,
                chosen: w.tokens().to_vec(),
                rejected: l.tokens().to_vec(),
                ref_chosen: w.trajectory.total_logprob(),
                ref_rejected: l.trajectory.total_logprob(),
            });
        }
    }
    out
}

/// One DPO round: pairs are sampled from the current policy, which also
/// serves as the frozen reference for the round.
pub fn dpo_round(
    params: &mut PolicyParams,
    queries: &[Sketch],
    cfg: &DpoConfig,
    reward: &RewardConfig,
    seed: u64,
    round: usize,
    log: &mut TrainLog,
) -> Result<RoundStats> {
    // Reference log-probabilities come from the sampler and must be untempered
    // scores under the same policy, which holds for any temperature.
    let groups = sample_all(params, queries, cfg.samples, cfg.temperature, seed, 0x200 + round as u64, reward)?;
    let (samples, fc_rate, mean_reward) = rates(&groups);
    let pairs = preference_pairs(&groups, cfg.rejected_max_fc_curves);
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let mut opt = adam(cfg.lr, cfg.clip_norm);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut final_loss = 0.0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_for(seed, 0x2ff + round as u64, epoch as u64));
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let scale = 1.0 / chunk.len() as f64;
            let batch: Vec<QueryLoss> = chunk
                .iter()
                .map(|&i| {
                    let p = &pairs[i];
                    let mut q = QueryLoss::new(queries[p.query].clone());
                    q.pairs.push(PairTerm {
                        chosen: p.chosen.clone(),
                        rejected: p.rejected.clone(),
                        ref_chosen: p.ref_chosen,
                        ref_rejected: p.ref_rejected,
                        beta: cfg.beta,
                        label_smoothing: cfg.label_smoothing,
                        sft_weight: cfg.sft_weight,
                        scale,
                    });
                    q
                })
                .collect();
            let (loss, grads) = loss_and_grad(params, &batch)?;
            opt.step(&mut params.tensors, &grads)?;
            params.version += 1;
            final_loss = loss;
            log.push(LogEntry { step: log.next_step(), loss, mean_reward, fc_rate, kl: 0.0 })?;
        }
    }
    Ok(RoundStats { round, samples, kept: pairs.len(), fc_rate, mean_reward, final_loss })
}

/// Aggregates of one online RL step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub loss: f64,
    pub mean_reward: f64,
    pub fc_rate: f64,
    pub ns_oc_rate: f64,
    pub kl: f64,
}

struct Scored1 {
    rollouts: Vec<Rollout>,
    ref_logprobs: Vec<Vec<f64>>,
    baseline: Option<(Rollout, Vec<f64>)>,
}

fn kl_sum(lp: &[f64], rl: &[f64]) -> f64 {
    kl_per_token(lp, rl, KlEstimator::LogRatio).iter().sum()
}

fn step_stats(loss: f64, groups: &[Scored1], estimator: KlEstimator) -> StepStats {
    let all: Vec<(&Rollout, &Vec<f64>)> =
        groups.iter().flat_map(|g| g.rollouts.iter().zip(&g.ref_logprobs)).collect();
    let n = all.len().max(1) as f64;
    let (mut kl, mut tokens) = (0.0, 0usize);
    for (r, rl) in &all {
        kl += kl_per_token(&r.trajectory.logprobs, rl, estimator).iter().sum::<f64>();
        tokens += rl.len();
    }
    StepStats {
        loss,
        mean_reward: all.iter().map(|(r, _)| r.scored.reward.total).sum::<f64>() / n,
        fc_rate: all.iter().filter(|(r, _)| r.scored.is_fc_clean()).count() as f64 / n,
        ns_oc_rate: all.iter().filter(|(r, _)| !r.scored.is_fc_clean() && r.scored.reward.failure_mode.is_some()).count() as f64
            / n,
        kl: kl / tokens.max(1) as f64,
    }
}

fn apply(params: &mut PolicyParams, opt: &mut Adam, batch: &[QueryLoss]) -> Result<f64> {
    let (loss, grads) = loss_and_grad(params, batch)?;
    opt.step(&mut params.tensors, &grads)?;
    params.version += 1;
    Ok(loss)
}

fn weighted_term(r: &Rollout, adv: f64, scale: f64) -> SeqTerm {
    SeqTerm {
        tokens: r.tokens().to_vec(),
        objective: SeqObjective::Weighted(r.penalties.iter().map(|p| (adv + p) * scale).collect()),
    }
}

/// Sampling context shared by the online updates.
#[derive(Debug, Clone)]
pub struct RlContext<'a> {
    pub cfg: &'a RlConfig,
    pub reward: &'a RewardConfig,
    pub seed: u64,
    pub step: usize,
}

impl RlContext<'_> {
    fn opts(&self) -> SampleOptions {
        SampleOptions { temperature: self.cfg.temperature, top_p: 1.0 }
    }

    fn stream(&self, q: usize) -> u64 {
        ((self.step as u64) << 12) | q as u64
    }
}

fn ref_logprobs(reference: &PolicyParams, sketch: &Sketch, rs: &[Rollout]) -> Result<Vec<Vec<f64>>> {
    let toks: Vec<&[Token]> = rs.iter().map(|r| r.tokens()).collect();
    group_logprobs(reference, sketch, &toks)
}

/// ReMax: one sample per query against its greedy decode as the baseline.
pub fn remax_update(
    params: &mut PolicyParams,
    reference: &PolicyParams,
    opt: &mut Adam,
    queries: &[Sketch],
    ctx: &RlContext,
) -> Result<StepStats> {
    let kl_coef = ctx.cfg.kl_coef_for(Algo::Remax);
    let idx: Vec<usize> = (0..queries.len()).collect();
    let solve = SolveOptions::default();
    let groups: Vec<Scored1> = par_map(&idx, |&i| -> Result<Scored1> {
        let sketch = &queries[i];
        let rs = rollouts(params, sketch, 1, ctx.opts(), ctx.seed, ctx.stream(i), ctx.reward, ctx.cfg.constraintwise)?;
        let greedy = crate::policy::greedy_sequence(params, sketch)?;
        let greedy = score_rollout(sketch, greedy, &solve, ctx.reward, false);
        let mut rl = ref_logprobs(reference, sketch, &[rs[0].clone(), greedy.clone()])?;
        let greedy_ref = rl.pop().expect("two sequences");
        Ok(Scored1 { rollouts: rs, ref_logprobs: rl, baseline: Some((greedy, greedy_ref)) })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut rewards = Vec::new();
    let mut baselines = Vec::new();
    for g in &groups {
        let r = &g.rollouts[0];
        rewards.push(r.scored.reward.total - kl_coef * kl_sum(&r.trajectory.logprobs, &g.ref_logprobs[0]));
        let (b, brl) = g.baseline.as_ref().expect("remax baseline");
        baselines.push(b.scored.reward.total - kl_coef * kl_sum(&b.trajectory.logprobs, brl));
    }
    let adv = remax_advantages(&rewards, &baselines);
    let scale = 1.0 / queries.len() as f64;
    let batch: Vec<QueryLoss> = queries
        .iter()
        .zip(&groups)
        .zip(&adv)
        .map(|((q, g), &a)| {
            let mut ql = QueryLoss::new(q.clone());
            ql.sequences.push(weighted_term(&g.rollouts[0], a, scale));
            ql
        })
        .collect();
    let loss = apply(params, opt, &batch)?;
    Ok(step_stats(loss, &groups, KlEstimator::LogRatio))
}

fn group_rollouts(
    sampler: &PolicyParams,
    other: &PolicyParams,
    queries: &[Sketch],
    ctx: &RlContext,
) -> Result<Vec<Scored1>> {
    let idx: Vec<usize> = (0..queries.len()).collect();
    par_map(&idx, |&i| -> Result<Scored1> {
        let sketch = &queries[i];
        let rs = rollouts(sampler, sketch, ctx.cfg.group_size, ctx.opts(), ctx.seed, ctx.stream(i), ctx.reward, ctx.cfg.constraintwise)?;
        let rl = ref_logprobs(other, sketch, &rs)?;
        Ok(Scored1 { rollouts: rs, ref_logprobs: rl, baseline: None })
    })
    .into_iter()
    .collect()
}

/// RLOO: `group_size` samples per query with leave-one-out baselines.
pub fn rloo_update(
    params: &mut PolicyParams,
    reference: &PolicyParams,
    opt: &mut Adam,
    queries: &[Sketch],
    ctx: &RlContext,
) -> Result<StepStats> {
    let kl_coef = ctx.cfg.kl_coef_for(Algo::Rloo);
    let groups = group_rollouts(params, reference, queries, ctx)?;
    let scale = 1.0 / (queries.len() * ctx.cfg.group_size) as f64;
    let mut batch = Vec::with_capacity(queries.len());
    for (q, g) in queries.iter().zip(&groups) {
        let rewards: Vec<f64> = g
            .rollouts
            .iter()
            .zip(&g.ref_logprobs)
            .map(|(r, rl)| r.scored.reward.total - kl_coef * kl_sum(&r.trajectory.logprobs, rl))
            .collect();
        let adv = rloo_advantages(&rewards)?;
        let mut ql = QueryLoss::new(q.clone());
        ql.sequences = g.rollouts.iter().zip(&adv).map(|(r, &a)| weighted_term(r, a, scale)).collect();
        batch.push(ql);
    }
    let loss = apply(params, opt, &batch)?;
    Ok(step_stats(loss, &groups, KlEstimator::LogRatio))
}

/// GRPO: samples come from the reference policy; the clipped ratio
/// objective with a per-token KL penalty is optimized.
pub fn grpo_update(
    params: &mut PolicyParams,
    reference: &PolicyParams,
    opt: &mut Adam,
    queries: &[Sketch],
    ctx: &RlContext,
) -> Result<StepStats> {
    let kl_coef = ctx.cfg.kl_coef_for(Algo::Grpo);
    // Rollouts carry reference log-probabilities; `ref_logprobs` here holds
    // the current policy's, so the KL below is measured from the policy side.
    let mut groups = group_rollouts(reference, params, queries, ctx)?;
    let scale_q = 1.0 / (queries.len() * ctx.cfg.group_size) as f64;
    let mut batch = Vec::with_capacity(queries.len());
    for (q, g) in queries.iter().zip(&groups) {
        let rewards: Vec<f64> = g
            .rollouts
            .iter()
            .zip(&g.ref_logprobs)
            .map(|(r, cur)| r.scored.reward.total - kl_coef * kl_sum(cur, &r.trajectory.logprobs))
            .collect();
        let adv = grpo_advantages(&rewards)?;
        let mut ql = QueryLoss::new(q.clone());
        for (r, &a) in g.rollouts.iter().zip(&adv) {
            let len = r.penalties.len().max(1) as f64;
            ql.sequences.push(SeqTerm {
                tokens: r.tokens().to_vec(),
                objective: SeqObjective::Clipped {
                    ref_logprobs: r.trajectory.logprobs.clone(),
                    advantages: r.penalties.iter().map(|p| a + p).collect(),
                    eps: ctx.cfg.grpo_eps,
                    beta: ctx.cfg.grpo_beta,
                    scale: scale_q / len,
                },
            });
        }
        batch.push(ql);
    }
    let loss = apply(params, opt, &batch)?;
    // Report KL(policy || reference) with the policy log-probabilities first.
    for g in &mut groups {
        for (r, cur) in g.rollouts.iter_mut().zip(g.ref_logprobs.iter_mut()) {
            std::mem::swap(&mut r.trajectory.logprobs, cur);
        }
    }
    Ok(step_stats(loss, &groups, KlEstimator::Grpo))
}

/// Online RL driver: owns the policy, reference snapshot and optimizer, and
/// cycles through the query set in reshuffled epochs.
#[derive(Debug, Clone)]
pub struct RlTrainer {
    pub algo: Algo,
    pub params: PolicyParams,
    pub reference: PolicyParams,
    pub cfg: RlConfig,
    pub reward: RewardConfig,
    pub seed: u64,
    pub step: usize,
    opt: Adam,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl RlTrainer {
    pub fn new(algo: Algo, params: PolicyParams, cfg: RlConfig, reward: RewardConfig, seed: u64) -> Result<Self> {
        if !algo.is_online() {
            return Err(Error::Config(format!("{} is not an online RL algorithm", algo.name())));
        }
        if algo != Algo::Remax && cfg.group_size < 2 {
            return Err(Error::DegenerateGroup(cfg.group_size));
        }
        let opt = adam(cfg.lr, cfg.clip_norm);
        Ok(Self { algo, reference: params.clone(), params, cfg, reward, seed, step: 0, opt, order: Vec::new(), cursor: 0, epoch: 0 })
    }

    fn next_queries(&mut self, queries: &[Sketch], n: usize) -> Vec<Sketch> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.cursor >= self.order.len() {
                self.order = (0..queries.len()).collect();
                self.order.shuffle(&mut rng_for(self.seed, 0x300, self.epoch));
                self.epoch += 1;
                self.cursor = 0;
            }
            out.push(queries[self.order[self.cursor]].clone());
            self.cursor += 1;
        }
        out
    }

    /// One update on the next slice of queries.
    pub fn train_step(&mut self, queries: &[Sketch]) -> Result<StepStats> {
        if queries.is_empty() {
            return Err(Error::Config("no alignment queries".into()));
        }
        if self.step > 0 && self.cfg.ref_update_every > 0 && self.step.is_multiple_of(self.cfg.ref_update_every) {
            self.reference = self.params.clone();
        }
        let batch = self.next_queries(queries, self.cfg.queries_per_step(self.algo));
        let ctx = RlContext { cfg: &self.cfg, reward: &self.reward, seed: self.seed, step: self.step };
        let stats = match self.algo {
            Algo::Remax => remax_update(&mut self.params, &self.reference, &mut self.opt, &batch, &ctx)?,
            Algo::Rloo => rloo_update(&mut self.params, &self.reference, &mut self.opt, &batch, &ctx)?,
            Algo::Grpo => grpo_update(&mut self.params, &self.reference, &mut self.opt, &batch, &ctx)?,
            _ => unreachable!("checked in new"),
        };
        self.step += 1;
        Ok(stats)
    }

    /// Runs `steps` updates, logging each.
    pub fn run(&mut self, queries: &[Sketch], steps: usize, log: &mut TrainLog) -> Result<()> {
        for _ in 0..steps {
            let s = self.train_step(queries)?;
            log.push(LogEntry { step: log.next_step(), loss: s.loss, mean_reward: s.mean_reward, fc_rate: s.fc_rate, kl: s.kl })?;
        }
        Ok(())
    }
}
