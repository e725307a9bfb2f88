use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::{EvaluateArgs, GridArgs, InputFormat, PrepareArgs, TagArgs, TrainArgs};
use crate::config::RunConfig;
use crate::corpus::{load_bio_file, load_offset_annotations, read_text, save_bio_file, split_holdout, AnnotatedSentence, DatasetSplit, Tag};
use crate::error::{Error, Result};
use crate::evaluation::{score_tag_output, EvalReport};
use crate::network::checkpoint;
use crate::par::{with_jobs, Execution};
use crate::tokenizer::{tokenize, TokenizerConfig};
use crate::training::grid::{grid_search, TrialOutcome};
use crate::training::{predict_corpus, train, TrainReport, TrainStatus};

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn tokenizer_config(config: Option<&Path>) -> Result<TokenizerConfig> {
    Ok(match config {
        Some(p) => RunConfig::load(p)?.tokenizer,
        None => TokenizerConfig::default(),
    })
}

pub fn cmd_prepare(args: &PrepareArgs, out: &mut dyn Write) -> Result<()> {
    let tokenizer = tokenizer_config(args.config.as_deref())?;
    let (sentences, report) = load_offset_annotations(&args.text, &args.annotations, &tokenizer)?;
    create_dir(&args.out_dir)?;
    save_bio_file(&args.out_dir.join("corpus.bio"), &sentences)?;
    if let Some(fraction) = args.holdout {
        let (train, validation) = split_holdout(&sentences, fraction, args.seed).map_err(|e| Error::Config(e.to_string()))?;
        save_bio_file(&args.out_dir.join("train.bio"), &train)?;
        save_bio_file(&args.out_dir.join("validation.bio"), &validation)?;
    }
    let rendered = report.render();
    write_file(&args.out_dir.join("alignment_report.txt"), &rendered)?;
    emit(out, &format!("sentences: {}\n{rendered}", sentences.len()))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub checkpoint: Option<PathBuf>,
    pub seconds: f64,
}

/// Trains one configuration and writes its artifacts into `dir`. The report
/// is written last, so its presence marks a finished run.
fn train_into(cfg: &RunConfig, split: &DatasetSplit, dir: &Path) -> Result<TrainOutcome> {
    create_dir(dir)?;
    write_file(&dir.join("config.toml"), cfg.to_toml()?)?;
    let mut model = cfg.build_model(split)?;
    let started = Instant::now();
    let report = train(&mut model, split, &cfg.train, &cfg.optimizer)?;
    let seconds = started.elapsed().as_secs_f64();
    write_file(&dir.join("train_log.jsonl"), report.epoch_log()?)?;
    let checkpoint = if report.diverged() {
        None
    } else {
        let path = dir.join("model.ckpt");
        checkpoint::save(&model, &path)?;
        Some(path)
    };
    write_file(
        &dir.join("timing.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "wall_clock_seconds": seconds }))? + "\n",
    )?;
    write_file(&dir.join("report.json"), report.summary_json()?)?;
    Ok(TrainOutcome {
        report,
        checkpoint,
        seconds,
    })
}

fn load_run_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn describe_status(status: &TrainStatus) -> String {
    match status {
        TrainStatus::Completed { reason } => format!("completed ({reason:?})"),
        TrainStatus::Diverged { epoch, batch, message } => {
            format!("diverged at epoch {epoch}, batch {batch}: {message}")
        }
    }
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainOutcome> {
    let cfg = load_run_config(&args.config, args.seed)?;
    let split = cfg.load_split()?;
    let outcome = with_jobs(args.jobs, || train_into(&cfg, &split, &args.out_dir))?;
    let r = &outcome.report;
    let mut text = String::new();
    let sizes = r.split_sizes;
    let _ = writeln!(text, "split: train {} / validation {} / test {}", sizes.train, sizes.validation, sizes.test);
    let _ = writeln!(text, "epochs: {}", r.epochs.len());
    let _ = writeln!(text, "status: {}", describe_status(&r.status));
    if let (Some(epoch), Some(f1)) = (r.best_epoch, r.best_validation_f1) {
        let _ = writeln!(text, "best validation macro-F1: {f1:.4} (epoch {epoch})");
    }
    if let Some(test) = &r.test {
        text.push_str("test:\n");
        text.push_str(&test.render_table());
    }
    emit(out, &text)?;
    if let TrainStatus::Diverged { message, .. } = &r.status {
        return Err(Error::Numeric(message.clone()));
    }
    Ok(outcome)
}

fn render_tagged(sentences: &[AnnotatedSentence], texts: &[String], predicted: &[Vec<Tag>]) -> String {
    let mut out = String::new();
    let mut current_doc = "";
    for ((s, text), tags) in sentences.iter().zip(texts).zip(predicted) {
        if s.doc_id != current_doc {
            let _ = writeln!(out, "-DOCSTART- {}\n", s.doc_id);
            current_doc = &s.doc_id;
        }
        for (tok, tag) in s.tokens.iter().zip(tags) {
            let _ = writeln!(out, "{}\t{}", tok.text, tag);
        }
        let spans = crate::corpus::bio_to_spans(tags);
        let _ = writeln!(out, "## spans: {}", spans.len());
        let chars: Vec<char> = text.chars().collect();
        for span in spans {
            let (start, end) = span.char_range(&s.tokens).expect("spans index the sentence");
            let surface: String = chars[start..end].iter().collect();
            let _ = writeln!(
                out,
                "## {}\ttokens {}-{}\tchars {}-{}\t{}",
                span.entity_type, span.token_start, span.token_end, start, end, surface
            );
        }
        out.push('\n');
    }
    out
}

pub fn cmd_tag(args: &TagArgs, out: &mut dyn Write) -> Result<()> {
    let model = checkpoint::load(&args.checkpoint)?;
    let (sentences, texts): (Vec<AnnotatedSentence>, Vec<String>) = match args.format {
        InputFormat::Text => {
            let tokenizer = tokenizer_config(args.config.as_deref())?;
            read_text(&args.input)?
                .lines()
                .filter_map(|line| {
                    let tokens = tokenize(line, &tokenizer);
                    (!tokens.is_empty()).then(|| {
                        let tags = vec![Tag::O; tokens.len()];
                        let s = AnnotatedSentence {
                            doc_id: String::new(),
                            tokens,
                            tags,
                        };
                        (s, line.to_string())
                    })
                })
                .unzip()
        }
        InputFormat::Bio => load_bio_file(&args.input)?
            .into_iter()
            .map(|s| {
                let text = s.tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
                (s, text)
            })
            .unzip(),
    };
    let predicted = with_jobs(args.jobs, || predict_corpus(&model, &sentences, Execution::Parallel))?;
    let rendered = render_tagged(&sentences, &texts, &predicted);
    match &args.output {
        Some(path) => write_file(path, rendered),
        None => emit(out, &rendered),
    }
}

fn check_aligned(gold: &[AnnotatedSentence], predicted: &[AnnotatedSentence], path: &Path) -> Result<()> {
    if gold.len() != predicted.len() {
        return Err(Error::Data(format!(
            "{}: {} sentences, gold has {}",
            path.display(),
            predicted.len(),
            gold.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        let same = g.tokens.len() == p.tokens.len() && g.tokens.iter().zip(&p.tokens).all(|(a, b)| a.text == b.text);
        if !same {
            return Err(Error::Data(format!(
                "{}: sentence {} does not match the gold tokens",
                path.display(),
                i + 1
            )));
        }
    }
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<EvalReport> {
    let gold = load_bio_file(&args.gold)?;
    let predicted: Vec<Vec<Tag>> = match (&args.predicted, &args.checkpoint) {
        (Some(path), _) => {
            let pred = load_bio_file(path)?;
            check_aligned(&gold, &pred, path)?;
            pred.into_iter().map(|s| s.tags).collect()
        }
        (None, Some(ckpt)) => {
            let model = checkpoint::load(ckpt)?;
            with_jobs(args.jobs, || predict_corpus(&model, &gold, Execution::Parallel))?
        }
        (None, None) => return Err(Error::Config("one of --predicted or --checkpoint is required".into())),
    };
    let gold_tags: Vec<Vec<Tag>> = gold.iter().map(|s| s.tags.clone()).collect();
    let report = score_tag_output(&gold_tags, &predicted)?;
    let table = report.render_table();
    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
        write_file(&dir.join("eval.txt"), &table)?;
        write_file(&dir.join("eval.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    emit(out, &table)?;
    Ok(report)
}

fn trial_dir(root: &Path, index: u64) -> PathBuf {
    root.join(format!("trial-{index:07}"))
}

pub fn cmd_grid(args: &GridArgs, out: &mut dyn Write) -> Result<Vec<TrialOutcome>> {
    let cfg = load_run_config(&args.config, args.seed)?;
    let grid = cfg
        .grid
        .clone()
        .ok_or_else(|| Error::Config(format!("{}: no [grid] section", args.config.display())))?;
    grid.validate()?;
    let split = cfg.load_split()?;
    create_dir(&args.out_dir)?;
    let budget = args.budget.unwrap_or(usize::MAX);
    let outcomes = grid_search(&grid, &cfg, budget, args.jobs, |index, trial| {
        let dir = trial_dir(&args.out_dir, index);
        let report_path = dir.join("report.json");
        if args.resume && report_path.exists() {
            let text = read_text(&report_path)?;
            return Ok(serde_json::from_str(&text)?);
        }
        let mut trial = trial.clone();
        trial.train.execution = Execution::Sequential;
        train_into(&trial, &split, &dir).map(|o| o.report)
    })?;

    let mut table = String::from("rank\ttrial\tvalidation_f1\ttest_f1\tstatus\n");
    for (rank, o) in outcomes.iter().enumerate() {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |f| format!("{f:.4}"));
        let status = match &o.report.status {
            TrainStatus::Completed { .. } => "completed",
            TrainStatus::Diverged { .. } => "diverged",
        };
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}",
            rank + 1,
            trial_dir(Path::new(""), o.index).display(),
            fmt(o.report.best_validation_f1),
            fmt(o.report.test.as_ref().map(|t| t.macro_f1)),
            status
        );
    }
    write_file(&args.out_dir.join("ranking.tsv"), &table)?;
    let summary: Vec<serde_json::Value> = outcomes
        .iter()
        .map(|o| {
            serde_json::json!({
                "trial": o.index,
                "validation_f1": o.report.best_validation_f1,
                "test_f1": o.report.test.as_ref().map(|t| t.macro_f1),
                "diverged": o.report.diverged(),
            })
        })
        .collect();
    write_file(&args.out_dir.join("ranking.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    emit(out, &table)?;
    Ok(outcomes)
}
