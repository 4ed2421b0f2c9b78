//! Evaluation: category rates, Pass@K, diversity hashing and SVG rendering.

mod diversity;
mod metrics;
mod render;
mod wl;

pub use diversity::{miou, unique_fraction};
pub use metrics::{pass_at_k, MetricsTable, SampleOutcome, SampleParams};
pub use render::render_svg;
pub use wl::{wl_hash, DEFAULT_WL_BINS, WL_ITERATIONS};

use crate::alignment::{score_tokens, RewardConfig};
use crate::error::Result;
use crate::par::{par_map, rng_for};
use crate::policy::{sample_with, PolicyParams, SampleOptions};
use crate::sketch::{ConstraintSequence, Sketch};
use crate::solver::{Category, SolveOptions};
use crate::tokenizer::Token;

/// Scores one generated stream for the metrics table.
pub fn sample_outcome(sketch: &Sketch, tokens: &[Token], reward: &RewardConfig) -> SampleOutcome {
    let scored = score_tokens(sketch, tokens, &SolveOptions::default(), reward);
    let constraints = scored.constraints.clone().unwrap_or_else(ConstraintSequence::empty);
    let (category, oc_flag, stable) = match &scored.report {
        Some(r) => (r.status.category, r.status.oc_flag, r.status.stable),
        None => (Category::NotSolvable, false, false),
    };
    SampleOutcome {
        category,
        invalid: scored.report.is_none(),
        oc_flag,
        stable,
        success: scored.is_success(),
        hash: wl_hash(sketch, &constraints, DEFAULT_WL_BINS),
        constraints,
    }
}

/// Samples `sp.k` generations per sketch and aggregates the metrics.
pub fn eval_model(params: &PolicyParams, sketches: &[Sketch], sp: &SampleParams, reward: &RewardConfig) -> Result<MetricsTable> {
    let opts = SampleOptions { temperature: sp.temperature, top_p: sp.top_p };
    let idx: Vec<usize> = (0..sketches.len()).collect();
    let groups = par_map(&idx, |&i| -> Result<Vec<SampleOutcome>> {
        let sketch = &sketches[i];
        let enc = params.encode(sketch)?;
        let kinds = sketch.kinds();
        Ok((0..sp.k)
            .map(|j| {
                let mut rng = rng_for(sp.seed, 0x400 + i as u64, j as u64);
                let t = sample_with(params, &enc, &kinds, opts, &mut rng);
                sample_outcome(sketch, &t.tokens, reward)
            })
            .collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(MetricsTable::from_groups(&groups, sp.clone()))
}
