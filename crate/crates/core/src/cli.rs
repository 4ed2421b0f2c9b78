//! Command-line interface. Exit codes: 0 success, 2 usage error, 1 runtime error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::alignment::{align, pretrain, supervised_finetune, train_queries, Algo, TrainConfig, TrainLog};
use crate::datagen::{build_corpus, read_jsonl, write_jsonl, CorpusConfig, Split, Template};
use crate::error::{Error, Result};
use crate::eval::{eval_model, render_svg, SampleParams};
use crate::policy::{load, save};
use crate::sketch::{ConstraintSequence, Sketch, SketchDocument};
use crate::solver::{solve, SolveOptions};
use crate::tokenizer::Vocabulary;

#[derive(Debug, Parser)]
#[command(name = "sketch-align", version, about = "Solver-aligned constraint generation for 2D CAD sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic, deduplicated and split sketch corpus as JSONL.
    Datagen {
        /// Comma-separated template names; defaults to the small templates.
        #[arg(long, value_delimiter = ',')]
        templates: Vec<String>,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        /// Fixed drop probability; calibrated to `--target-fc` when omitted.
        #[arg(long)]
        drop_prob: Option<f64>,
        #[arg(long, default_value_t = 0.08)]
        target_fc: f64,
        #[arg(long, default_value_t = 8)]
        max_primitives: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a fresh policy on every solved training record.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Supervised fine-tuning on fully constrained, stable records.
    Sft {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Post-train with solver feedback.
    Align {
        #[arg(long, value_parser = ["exit", "dpo", "remax", "rloo", "grpo"])]
        algo: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Sample K generations per sketch and report the metrics table as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 1.0)]
        top_p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Which split to evaluate: train, val, test or all.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve a sketch and print the diagnosis as JSON.
    Solve {
        /// Sketch document with primitives and optionally constraints.
        #[arg(long)]
        sketch: PathBuf,
        /// JSON array of constraints; overrides those in the sketch document.
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve a sketch and draw it as SVG over the original geometry.
    Render {
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the token vocabulary as JSON.
    Vocab,
}

fn read_config(path: Option<&Path>) -> Result<TrainConfig> {
    path.map_or_else(|| Ok(TrainConfig::default()), TrainConfig::load)
}

fn open_log(path: Option<&Path>) -> Result<TrainLog> {
    path.map_or_else(|| Ok(TrainLog::memory()), TrainLog::to_file)
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n"))?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
            out.flush()?;
        }
    }
    Ok(())
}

fn load_document(sketch: &Path, constraints: Option<&Path>) -> Result<(Sketch, ConstraintSequence)> {
    let doc = SketchDocument::from_json(&std::fs::read_to_string(sketch)?)?;
    let seq = match constraints {
        Some(p) => ConstraintSequence::new(serde_json::from_str(&std::fs::read_to_string(p)?)?)?,
        None => doc.constraints.clone(),
    };
    Ok((doc.sketch()?, seq))
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    match s {
        "train" => Ok(Some(Split::Train)),
        "val" => Ok(Some(Split::Val)),
        "test" => Ok(Some(Split::Test)),
        "all" => Ok(None),
        other => Err(Error::Config(format!("unknown split {other:?}"))),
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Datagen { templates, count, drop_prob, target_fc, max_primitives, seed, out } => {
            let mut cfg = CorpusConfig { count, drop_prob, target_fc, max_primitives, seed, ..CorpusConfig::default() };
            if !templates.is_empty() {
                cfg.templates = templates
                    .iter()
                    .map(|t| Template::from_name(t).ok_or_else(|| Error::Config(format!("unknown template {t:?}"))))
                    .collect::<Result<_>>()?;
            }
            let (records, stats) = build_corpus(&cfg)?;
            write_jsonl(&records, &out)?;
            emit(&serde_json::to_string_pretty(&stats)?, None)
        }
        Command::Pretrain { data, config, out, log } => {
            let cfg = read_config(config.as_deref())?;
            let params = pretrain(&read_jsonl(&data)?, &cfg, &mut open_log(log.as_deref())?)?;
            save(&params, &out)
        }
        Command::Sft { data, init, config, out, log } => {
            let cfg = read_config(config.as_deref())?;
            let params = supervised_finetune(load(&init)?, &read_jsonl(&data)?, &cfg, &mut open_log(log.as_deref())?)?;
            save(&params, &out)
        }
        Command::Align { algo, data, init, config, out, log } => {
            let cfg = read_config(config.as_deref())?;
            let algo = Algo::from_name(&algo).ok_or_else(|| Error::Config(format!("unknown algorithm {algo:?}")))?;
            let queries = train_queries(&read_jsonl(&data)?)?;
            let params = align(algo, load(&init)?, &queries, &cfg, &mut open_log(log.as_deref())?)?;
            save(&params, &out)
        }
        Command::Eval { model, data, k, temperature, top_p, seed, split, report } => {
            let split = parse_split(&split)?;
            let sketches: Vec<Sketch> = read_jsonl(&data)?
                .iter()
                .filter(|r| split.is_none_or(|s| r.split == s))
                .map(|r| r.sketch())
                .collect::<Result<_>>()?;
            let sp = SampleParams { k, temperature, top_p, seed };
            let table = eval_model(&load(&model)?, &sketches, &sp, &Default::default())?;
            emit(&table.to_json(), report.as_deref())
        }
        Command::Solve { sketch, constraints, report } => {
            let (sketch, seq) = load_document(&sketch, constraints.as_deref())?;
            let r = solve(&sketch, &seq, &SolveOptions::default())?;
            emit(&serde_json::to_string_pretty(&r.to_json())?, report.as_deref())
        }
        Command::Render { sketch, constraints, out } => {
            let (sketch, seq) = load_document(&sketch, constraints.as_deref())?;
            let r = solve(&sketch, &seq, &SolveOptions::default())?;
            let solved = r.solved_sketch.as_ref().unwrap_or(&sketch);
            std::fs::write(out, render_svg(solved, &r.status, Some(&sketch)))?;
            Ok(())
        }
        Command::Vocab => emit(&Vocabulary::new().to_json(), None),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
