use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use seat_core::corpus::generate_corpus;
use seat_core::eval::{evaluate_full, EvalReport};
use seat_core::model::ModelCheckpoint;
use seat_core::trainer::{self, Method, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::LabConfig;
use crate::container::{encode_checkpoint, encode_mask, load_checkpoint};
use crate::corpus_io;
use crate::error::{CliError, Result};
use crate::exec::Threaded;
use crate::manifest::Recorder;
use crate::plot::scatter_svg;

#[derive(Debug, Parser)]
#[command(name = "seat", version, about = "Sparse entity-aware fine-tuning lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus directory.
    Gen(GenArgs),
    /// Pretrain the base model or fine-tune it with one method.
    Train(TrainArgs),
    /// Score a checkpoint and write per-layer projections.
    Eval(EvalArgs),
    /// Tabulate evaluated runs by method.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// pretrain, full_ft, sparse_ft, seat, full_kl_ep or sparse_kl_noep
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Base checkpoint; required for fine-tuning methods.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Runs root; the run lands in `<out>/<method>-<seed>`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset the FT score is computed on.
    #[arg(long, default_value = "finetune")]
    pub ft_dataset: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run directories holding `report.json`.
    #[arg(long, num_args = 2.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Markdown table; the CSV goes next to it with a `.csv` extension.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Compare runs generated from different corpora.
    #[arg(long)]
    pub force: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(&a).map(|_| ()),
        Command::Train(a) => train(&a).map(|_| ()),
        Command::Eval(a) => eval(&a).map(|_| ()),
        Command::Compare(a) => compare(&a).map(|_| ()),
    }
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("value serializes");
    v.push(b'\n');
    v
}

pub fn gen(args: &GenArgs) -> Result<PathBuf> {
    let mut cfg = LabConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.corpus.seed = seed;
    }
    let mut rec = Recorder::new(&args.out, args.force);
    let files = corpus_io::render(&generate_corpus(&cfg.corpus)?);
    rec.claim(files.iter().map(|(name, _)| *name))?;
    if let Some(p) = &args.config {
        rec.input(p)?;
    }
    for (name, bytes) in &files {
        rec.write(name, bytes)?;
    }
    rec.finish("gen", &cfg.hash(), Some(cfg.corpus.seed))?;
    Ok(args.out.clone())
}

#[derive(Debug, Serialize, Deserialize)]
struct RunConfig {
    method: String,
    config: LabConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<TrainConfig>,
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("entry serializes");
        out.push(b'\n');
    }
    out
}

/// Returns the run directory.
pub fn train(args: &TrainArgs) -> Result<PathBuf> {
    let mut cfg = LabConfig::load(args.config.as_deref())?;
    let method = if args.method == "pretrain" {
        None
    } else {
        Some(
            args.method
                .parse::<Method>()
                .map_err(|_| CliError::Usage(format!("unknown method {:?}", args.method)))?,
        )
    };
    if let Some(alpha) = args.alpha {
        cfg.finetune.alpha = alpha;
    }
    if let Some(seed) = args.seed {
        match method {
            None => {
                cfg.pretrain.seed = seed;
                cfg.model.seed = seed;
            }
            Some(_) => cfg.finetune.seed = seed,
        }
    }
    cfg.validate().map_err(|e| CliError::Config {
        path: "flags".to_string(),
        message: e.to_string(),
    })?;
    let seed = if method.is_some() { cfg.finetune.seed } else { cfg.pretrain.seed };
    let run_dir = args.out.join(format!("{}-{seed}", args.method));
    let mut rec = Recorder::new(&run_dir, args.force);

    match method {
        None => {
            if args.base.is_some() {
                return Err(CliError::Usage("--base is not used by pretrain".to_string()));
            }
            rec.claim(["config.json", "log.jsonl", "pretrain.json", "base.ckpt"])?;
            let corpus = corpus_io::load(&args.corpus)?;
            rec.input(&args.corpus)?;
            let exec = Threaded::from_env()?;
            let (base, report) = trainer::pretrain_base_with(&corpus, &cfg.model, &cfg.pretrain, &exec)?;
            let run_cfg = RunConfig {
                method: args.method.clone(),
                config: cfg.clone(),
                train: None,
            };
            rec.write("config.json", &pretty(&run_cfg))?;
            rec.write("log.jsonl", &jsonl(&report.epochs))?;
            rec.write("pretrain.json", &pretty(&report))?;
            rec.write("base.ckpt", &encode_checkpoint(&base))?;
        }
        Some(m) => {
            let base_path = args
                .base
                .as_deref()
                .ok_or_else(|| CliError::Usage(format!("method {m} requires --base")))?;
            let mut names = vec!["config.json", "log.jsonl", "record.json", "final.ckpt"];
            if m.is_sparse() {
                names.push("mask.ckpt");
            }
            rec.claim(names)?;
            let corpus = corpus_io::load(&args.corpus)?;
            let base = load_checkpoint(base_path)?;
            rec.input(&args.corpus)?;
            rec.input(base_path)?;
            let train_cfg = cfg.finetune.for_method(m);
            let outcome = trainer::train(&corpus, &base, &train_cfg)?;
            let run_cfg = RunConfig {
                method: args.method.clone(),
                config: cfg.clone(),
                train: Some(train_cfg),
            };
            rec.write("config.json", &pretty(&run_cfg))?;
            rec.write("log.jsonl", &jsonl(&outcome.record.epochs))?;
            rec.write("record.json", &pretty(&outcome.record))?;
            rec.write("final.ckpt", &encode_checkpoint(&outcome.checkpoint))?;
            if let Some(mask) = &outcome.mask {
                rec.write("mask.ckpt", &encode_mask(mask))?;
            }
        }
    }
    rec.finish("train", &cfg.hash(), Some(seed))?;
    Ok(run_dir)
}

pub const REPORT_FILE: &str = "report.json";

fn csv_bytes(rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    rows(&mut w).expect("in-memory CSV");
    w.into_inner().expect("in-memory CSV")
}

pub fn eval(args: &EvalArgs) -> Result<EvalReport> {
    let cfg = LabConfig::load(args.config.as_deref())?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    let base = load_checkpoint(&args.base)?;
    let corpus = corpus_io::load(&args.corpus)?;
    let layers = 1..=ckpt.config.n_layers;
    let mut names = vec![REPORT_FILE.to_string()];
    for l in layers.clone() {
        names.push(format!("pca_layer{l}.csv"));
        names.push(format!("pca_layer{l}.svg"));
    }
    let mut rec = Recorder::new(&args.out, args.force);
    rec.claim(names.iter().map(String::as_str))?;
    rec.input(&args.ckpt)?;
    rec.input(&args.base)?;
    rec.input(&args.corpus)?;

    let exec = Threaded::from_env()?;
    let evaluation = evaluate_full(&ckpt, &base, &corpus, &args.ft_dataset, &cfg.eval, &exec)?;
    let report = evaluation.report;
    rec.write(REPORT_FILE, &pretty(&report))?;
    for proj in &evaluation.projections {
        let k = proj.points.first().map_or(0, |p| p.coords.len());
        let bytes = csv_bytes(|w| {
            let mut header = vec!["dataset".to_string()];
            header.extend((1..=k).map(|i| format!("pc{i}")));
            w.write_record(&header)?;
            for p in &proj.points {
                let mut row = vec![p.dataset.clone()];
                row.extend(p.coords.iter().map(|c| c.to_string()));
                w.write_record(&row)?;
            }
            Ok(())
        });
        rec.write(&format!("pca_layer{}.csv", proj.layer), &bytes)?;
        let title = format!("{} layer {}", report.method, proj.layer);
        rec.write(&format!("pca_layer{}.svg", proj.layer), scatter_svg(proj, &title).as_bytes())?;
    }
    rec.finish("eval", &cfg.hash(), args.seed)?;
    Ok(report)
}

/// Mean metrics of one method's runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: String,
    pub runs: usize,
    pub ft_score: f64,
    pub idk_unverifiable: f64,
    pub idk_unseen: f64,
    pub separation_mean: f64,
    pub separation_final: f64,
}

pub fn compare_rows(reports: &[EvalReport]) -> Vec<CompareRow> {
    let mut by_method: BTreeMap<&str, Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        by_method.entry(&r.method).or_default().push(r);
    }
    by_method
        .into_iter()
        .map(|(method, rs)| {
            let mean = |f: &dyn Fn(&EvalReport) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
            CompareRow {
                method: method.to_string(),
                runs: rs.len(),
                ft_score: mean(&|r| r.ft_score),
                idk_unverifiable: mean(&|r| r.idk_unverifiable),
                idk_unseen: mean(&|r| r.idk_unseen),
                separation_mean: mean(&|r| r.mean_separation()),
                separation_final: mean(&|r| r.final_separation()),
            }
        })
        .collect()
}

pub fn markdown_table(rows: &[CompareRow]) -> String {
    let header = [
        "method",
        "runs",
        "FT score",
        "IDK (unverifiable)",
        "IDK (unseen)",
        "separation (mean)",
        "separation (final)",
    ];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.runs.to_string(),
                format!("{:.3}", r.ft_score),
                format!("{:.3}", r.idk_unverifiable),
                format!("{:.3}", r.idk_unseen),
                format!("{:.3}", r.separation_mean),
                format!("{:.3}", r.separation_final),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| cells.iter().map(|row| row[c].len()).chain([header[c].len()]).max().unwrap())
        .collect();
    let line = |row: &[String]| {
        let parts: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut out = line(&header.map(String::from));
    let rule: Vec<String> = widths
        .iter()
        .enumerate()
        .map(|(c, &w)| if c == 0 { format!(":{}", "-".repeat(w - 1)) } else { format!("{}:", "-".repeat(w - 1)) })
        .collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for row in &cells {
        out.push_str(&line(row));
    }
    out
}

fn read_report(dir: &Path) -> Result<EvalReport> {
    let path = dir.join(REPORT_FILE);
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::format(&path, e.to_string()))
}

pub fn compare(args: &CompareArgs) -> Result<Vec<CompareRow>> {
    if args.runs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two run directories".to_string()));
    }
    if args.out.extension().is_some_and(|e| e == "csv") {
        return Err(CliError::Usage("--out names the markdown table; the CSV is derived from it".to_string()));
    }
    let csv_path = args.out.with_extension("csv");
    let dir = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    let file_name = |p: &Path| p.file_name().unwrap().to_string_lossy().into_owned();
    let (md_name, csv_name) = (file_name(&args.out), file_name(&csv_path));
    let mut rec = Recorder::new(&dir, args.force);
    let stem = args.out.file_stem().unwrap().to_string_lossy().into_owned();
    rec.claim([md_name.as_str(), csv_name.as_str()])?;

    let mut reports = Vec::new();
    for run in &args.runs {
        reports.push(read_report(run)?);
        rec.input(&run.join(REPORT_FILE))?;
    }
    let hashes: std::collections::BTreeSet<&str> = reports.iter().map(|r| r.corpus_hash.as_str()).collect();
    if hashes.len() > 1 && !args.force {
        return Err(CliError::Usage(format!(
            "runs come from {} different corpora (pass --force to compare anyway)",
            hashes.len()
        )));
    }
    let rows = compare_rows(&reports);
    let table = markdown_table(&rows);
    let csv = csv_bytes(|w| {
        for r in &rows {
            w.serialize(r)?;
        }
        Ok(())
    });
    rec.write(&md_name, table.as_bytes())?;
    rec.write(&csv_name, &csv)?;
    print!("{table}");
    let config_hash = seat_core::fingerprint::sha256_hex(table.as_bytes());
    rec.finish(&format!("compare-{stem}"), &config_hash, args.seed)?;
    Ok(rows)
}

/// Loads a checkpoint; used by tests and tooling.
pub fn read_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    load_checkpoint(path)
}
