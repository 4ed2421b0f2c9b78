//! Synthetic sketch corpus: templates, degradation, preprocessing, dedup and splits.

mod templates;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::wl_hash;
use crate::sketch::{ConstraintSequence, Primitive, Sketch};
use crate::solver::{solve, Category, SolveOptions};

pub use templates::{generate_sketch, Template};

/// Quantization used to detect duplicate records.
pub const DEDUP_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One line of the dataset JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub template: Template,
    pub primitives: Vec<Primitive>,
    pub constraints: ConstraintSequence,
    pub split: Split,
    pub wl_hash: String,
    /// Solver category of (geometry, constraints) after preprocessing.
    pub category: Category,
    pub oc_flag: bool,
    pub stable: bool,
    /// Solved cleanly; unsolvable records are kept only as alignment queries.
    pub solvable: bool,
}

impl DatasetRecord {
    pub fn new(template: Template, sketch: &Sketch, constraints: ConstraintSequence) -> Self {
        Self {
            template,
            primitives: sketch.primitives.clone(),
            wl_hash: wl_hash(sketch, &constraints, DEDUP_BINS),
            constraints,
            split: Split::Train,
            category: Category::NotSolvable,
            oc_flag: false,
            stable: false,
            solvable: false,
        }
    }

    pub fn sketch(&self) -> Result<Sketch> {
        Sketch::new(self.primitives.clone())
    }

    /// Usable for pretraining: the geometry was solved against its constraints.
    pub fn pretrain_eligible(&self) -> bool {
        self.solvable
    }

    /// Usable for supervised fine-tuning: fully constrained, not over-constrained,
    /// solvable and stable.
    pub fn sft_eligible(&self) -> bool {
        self.solvable && self.category == Category::FullyConstrained && !self.oc_flag && self.stable
    }
}

/// Drops each item independently with probability `drop_prob`.
pub fn degrade_constraints(record: &DatasetRecord, drop_prob: f64, rng: &mut impl Rng) -> DatasetRecord {
    let mut out = record.clone();
    out.constraints = record.constraints.iter().filter(|_| rng.gen::<f64>() >= drop_prob).cloned().collect();
    out
}

/// Solves the record and stores the solved geometry and its diagnosis.
pub fn preprocess(record: &DatasetRecord, opts: &SolveOptions) -> DatasetRecord {
    let mut out = record.clone();
    out.solvable = false;
    out.category = Category::NotSolvable;
    let Ok(sketch) = record.sketch() else { return out };
    let Ok(report) = solve(&sketch, &record.constraints, opts) else { return out };
    out.category = report.status.category;
    out.oc_flag = report.status.oc_flag;
    out.stable = report.status.stable;
    if let Some(solved) = report.solved_sketch {
        out.primitives = solved.primitives;
        out.solvable = true;
        if let Ok(s) = out.sketch() {
            out.wl_hash = wl_hash(&s, &out.constraints, DEDUP_BINS);
        }
    }
    out
}

/// Keeps the first record of every WL hash, preserving order.
pub fn dedup(records: Vec<DatasetRecord>) -> Vec<DatasetRecord> {
    let mut seen = HashSet::new();
    records.into_iter().filter(|r| seen.insert(r.wl_hash.clone())).collect()
}

/// Deterministic shuffle by `seed`, then train/val/test by `ratios`.
pub fn split(mut records: Vec<DatasetRecord>, ratios: [f64; 3], seed: u64) -> Result<Vec<DatasetRecord>> {
    let total: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| *r < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be nonnegative and sum to 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    let n = records.len();
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    for (i, r) in records.iter_mut().enumerate() {
        r.split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub templates: Vec<Template>,
    pub count: usize,
    /// `None` calibrates the drop probability towards `target_fc`.
    pub drop_prob: Option<f64>,
    pub target_fc: f64,
    pub max_primitives: usize,
    pub split_ratios: [f64; 3],
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            templates: vec![
                Template::Rectangle,
                Template::Triangle,
                Template::Polyline,
                Template::ConcentricCircles,
                Template::LineArcChain,
            ],
            count: 2000,
            drop_prob: None,
            target_fc: 0.08,
            max_primitives: 8,
            split_ratios: [0.9, 0.05, 0.05],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub records: usize,
    pub drop_prob: f64,
    pub fc_fraction: f64,
    pub solvable_fraction: f64,
    pub mean_primitives: f64,
    pub mean_constraints: f64,
    pub category_counts: BTreeMap<String, usize>,
    pub kind_counts: BTreeMap<String, usize>,
    pub template_counts: BTreeMap<String, usize>,
    pub split_counts: BTreeMap<String, usize>,
}

pub fn corpus_stats(records: &[DatasetRecord], drop_prob: f64) -> CorpusStats {
    let n = records.len().max(1) as f64;
    let mut stats = CorpusStats {
        records: records.len(),
        drop_prob,
        fc_fraction: records.iter().filter(|r| r.category == Category::FullyConstrained).count() as f64 / n,
        solvable_fraction: records.iter().filter(|r| r.solvable).count() as f64 / n,
        mean_primitives: records.iter().map(|r| r.primitives.len()).sum::<usize>() as f64 / n,
        mean_constraints: records.iter().map(|r| r.constraints.len()).sum::<usize>() as f64 / n,
        category_counts: BTreeMap::new(),
        kind_counts: BTreeMap::new(),
        template_counts: BTreeMap::new(),
        split_counts: BTreeMap::new(),
    };
    for r in records {
        *stats.category_counts.entry(r.category.short().to_string()).or_default() += 1;
        *stats.template_counts.entry(r.template.name().to_string()).or_default() += 1;
        *stats.split_counts.entry(format!("{:?}", r.split).to_lowercase()).or_default() += 1;
        for c in r.constraints.iter() {
            *stats.kind_counts.entry(format!("{:?}", c.kind)).or_default() += 1;
        }
    }
    stats
}

/// Ground-truth record `i` of the stream for `seed`; templates whose size
/// can exceed `max_primitives` are skipped by the caller.
fn base_record(cfg: &CorpusConfig, templates: &[Template], i: u64) -> DatasetRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2 * i);
    let t = templates[rng.gen_range(0..templates.len())];
    let (sketch, seq) = generate_sketch(t, &mut rng);
    DatasetRecord::new(t, &sketch, seq)
}

/// Degrades, preprocesses and dedups records until `count` survive.
/// Uses common random numbers, so the FC fraction is monotone in `drop_prob`.
fn assemble(cfg: &CorpusConfig, drop_prob: f64) -> Result<Vec<DatasetRecord>> {
    let templates: Vec<Template> =
        cfg.templates.iter().copied().filter(|t| t.primitive_range().1 <= cfg.max_primitives).collect();
    if templates.is_empty() {
        return Err(Error::Config(format!("no template fits within {} primitives", cfg.max_primitives)));
    }
    let opts = SolveOptions::default();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(cfg.count);
    let mut i = 0u64;
    while out.len() < cfg.count {
        if i > 50 * cfg.count as u64 + 1000 {
            return Err(Error::Config("could not reach the requested count of distinct sketches".into()));
        }
        let base = base_record(cfg, &templates, i);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2 * i + 1);
        i += 1;
        let rec = preprocess(&degrade_constraints(&base, drop_prob, &mut rng), &opts);
        if seen.insert(rec.wl_hash.clone()) {
            out.push(rec);
        }
    }
    Ok(out)
}

fn fc_fraction(records: &[DatasetRecord]) -> f64 {
    records.iter().filter(|r| r.category == Category::FullyConstrained).count() as f64 / records.len().max(1) as f64
}

/// Bisection on the drop probability until the corpus FC fraction is
/// within 0.005 of `target`.
pub fn calibrate_drop_prob(cfg: &CorpusConfig, target: f64) -> Result<(f64, Vec<DatasetRecord>)> {
    let (mut lo, mut hi) = (0.0f64, 0.6f64);
    let mut best: Option<(f64, f64, Vec<DatasetRecord>)> = None;
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        let recs = assemble(cfg, mid)?;
        let fc = fc_fraction(&recs);
        let err = (fc - target).abs();
        if best.as_ref().is_none_or(|b| err < b.1) {
            best = Some((mid, err, recs));
        }
        if err <= 0.005 {
            break;
        }
        if fc > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (p, _, recs) = best.expect("at least one bisection step");
    Ok((p, recs))
}

/// Full pipeline: generate, degrade (calibrated if requested), preprocess,
/// dedup and split.
pub fn build_corpus(cfg: &CorpusConfig) -> Result<(Vec<DatasetRecord>, CorpusStats)> {
    let (p, recs) = match cfg.drop_prob {
        Some(p) => (p, assemble(cfg, p)?),
        None => calibrate_drop_prob(cfg, cfg.target_fc)?,
    };
    let recs = split(recs, cfg.split_ratios, cfg.seed)?;
    let stats = corpus_stats(&recs, p);
    Ok((recs, stats))
}

pub fn write_jsonl(records: &[DatasetRecord], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DatasetRecord>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::validate_sequence;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn every_template_recipe_is_fully_constrained_and_stable() {
        let mut r = rng();
        for t in Template::ALL {
            for _ in 0..20 {
                let (s, seq) = generate_sketch(t, &mut r);
                validate_sequence(&s, &seq).unwrap();
                let (lo, hi) = t.primitive_range();
                assert!(s.len() >= lo && s.len() <= hi);
                assert_eq!(s.primitives.iter().filter(|p| p.fixed).count(), 1);
                let rep = solve(&s, &seq, &SolveOptions::default()).unwrap();
                assert_eq!(rep.status.category, Category::FullyConstrained, "{t:?}");
                assert!(rep.status.stable && !rep.status.oc_flag, "{t:?}");
            }
        }
    }

    #[test]
    fn degrade_extremes() {
        let (s, seq) = generate_sketch(Template::Rectangle, &mut rng());
        let rec = DatasetRecord::new(Template::Rectangle, &s, seq);
        assert_eq!(degrade_constraints(&rec, 0.0, &mut rng()), rec);
        let empty = preprocess(&degrade_constraints(&rec, 1.0, &mut rng()), &SolveOptions::default());
        assert!(empty.constraints.is_empty());
        assert_eq!(empty.category, Category::UnderConstrained);
    }

    #[test]
    fn preprocess_resquares_a_perturbed_rectangle() {
        let (s, seq) = generate_sketch(Template::Rectangle, &mut rng());
        let mut rec = DatasetRecord::new(Template::Rectangle, &s, seq.clone());
        let untouched = preprocess(&rec, &SolveOptions::default());
        assert_eq!(untouched.primitives, rec.primitives);
        rec.primitives[2].params[0] += 0.05;
        rec.primitives[5].params[2] += 0.05;
        let fixed = preprocess(&rec, &SolveOptions::default());
        assert_eq!(fixed.category, Category::FullyConstrained);
        let p = &fixed.primitives;
        assert!((p[1].params[1] - p[0].params[1]).abs() < 1e-8);
        assert!((p[2].params[0] - p[1].params[0]).abs() < 1e-8);
    }

    #[test]
    fn dedup_is_order_stable_and_permutation_blind() {
        let (s, seq) = generate_sketch(Template::Triangle, &mut rng());
        let a = DatasetRecord::new(Template::Triangle, &s, seq.clone());
        let mut items = seq.items.clone();
        items.reverse();
        let b = DatasetRecord::new(Template::Triangle, &s, ConstraintSequence::new(items).unwrap());
        let (s2, seq2) = generate_sketch(Template::Triangle, &mut rng().clone());
        let mut c = DatasetRecord::new(Template::Triangle, &s2.translated(0.0, 0.0), seq2);
        c.primitives[1].params[0] += 1.0;
        c.wl_hash = wl_hash(&c.sketch().unwrap(), &c.constraints, DEDUP_BINS);
        let kept = dedup(vec![a.clone(), b, c.clone()]);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0], a);
    }

    #[test]
    fn splits_are_deterministic_and_cover() {
        let mut r = rng();
        let recs: Vec<_> = (0..40)
            .map(|_| {
                let (s, q) = generate_sketch(Template::Polyline, &mut r);
                DatasetRecord::new(Template::Polyline, &s, q)
            })
            .collect();
        let a = split(recs.clone(), [0.9, 0.05, 0.05], 3).unwrap();
        assert_eq!(a, split(recs.clone(), [0.9, 0.05, 0.05], 3).unwrap());
        assert_eq!(a.len(), 40);
        assert_eq!(a.iter().filter(|r| r.split == Split::Train).count(), 36);
        assert!(split(recs.clone(), [1.0, 0.0, 0.0], 3).unwrap().iter().all(|r| r.split == Split::Train));
        assert!(split(recs, [0.5, 0.0, 0.0], 3).is_err());
    }
}
