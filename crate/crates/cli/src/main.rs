//! `irsegrn` command-line tool. Machine-readable JSON goes to stdout,
//! diagnostics to stderr.
//!
//! Exit codes: 0 success, 2 usage/config/data error, 3 numeric failure.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irsegrn::data::{generate_synthetic, load_corpus, split_corpus, write_corpus};
use irsegrn::eval::{presentation_seed, summarize, InferenceConfig, ModelPredictor, Prediction};
use irsegrn::graph::{build_graph, ParagraphRecord};
use irsegrn::model::{ModelParams, Vocab};
use irsegrn::refine::{construct_irse_graph_observed, RefineMode, Refiner};
use irsegrn::train::{derive_seed, train_pipeline, EpochLog, Phase, TrainObserver};
use irsegrn::Error;
use log::info;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, SplitName};

pub const CONFIG_ENV: &str = "IRSEGRN_CONFIG";

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFiniteLoss { .. } | Error::NonFinite { .. } => 3,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::usage(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "irsegrn", version, about = "Sentence ordering over iteratively refined sentence-entity graphs")]
struct Cli {
    /// JSON run configuration; missing keys take defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-paragraph work (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus as JSONL.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured paragraph count.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run the three training phases.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Continue after the last phase checkpoint found in the directory.
        #[arg(long)]
        resume: bool,
    },
    /// Refine, decode and score a corpus split.
    Eval {
        #[command(flatten)]
        input: ModelInput,
        /// Also report first- and last-sentence accuracy.
        #[arg(long)]
        head_tail: bool,
    },
    /// Write one prediction per paragraph as JSONL.
    Predict {
        #[command(flatten)]
        input: ModelInput,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include per-step probabilities.
        #[arg(long)]
        steps: bool,
    },
    /// Show one paragraph's graph and, with a checkpoint, its refinement.
    InspectGraph {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Uncertain-set sizes per refinement iteration.
    RefineStats {
        #[command(flatten)]
        input: ModelInput,
    },
}

#[derive(Args, Debug)]
struct ModelInput {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Split of the corpus to read, using the configured ratios and seed.
    #[arg(long, value_enum)]
    split: Option<SplitName>,
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long, value_enum)]
    refine_mode: Option<ModeArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Full,
    InitialOnly,
    Frozen,
}

impl From<ModeArg> for RefineMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => RefineMode::Full,
            ModeArg::InitialOnly => RefineMode::InitialOnly,
            ModeArg::Frozen => RefineMode::Frozen,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    }
    .with_seed(cli.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let explicit_dims = cli.config.is_some();
    pool.install(|| match cli.command {
        Command::GenData { out, n } => cmd_gen_data(&cfg, &out, n),
        Command::Train { corpus, checkpoint_dir, resume } => cmd_train(&cfg, corpus, checkpoint_dir, resume),
        Command::Eval { input, head_tail } => cmd_eval(&cfg, &input, head_tail, explicit_dims),
        Command::Predict { input, out, steps } => cmd_predict(&cfg, &input, out.as_deref(), steps, explicit_dims),
        Command::InspectGraph { corpus, index, checkpoint } => cmd_inspect_graph(&cfg, corpus, index, checkpoint.as_deref()),
        Command::RefineStats { input } => cmd_refine_stats(&cfg, &input, explicit_dims),
    })
}

fn print_json<T: Serialize>(v: &T) -> CliResult {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer(&mut out, v)?;
    writeln!(out).map_err(|e| CliError::usage(e.to_string()))
}

fn cmd_gen_data(cfg: &RunConfig, out: &Path, n: Option<usize>) -> CliResult {
    let mut synth = cfg.synth.clone();
    if let Some(n) = n {
        synth.n_paragraphs = n;
    }
    let records = generate_synthetic(&synth)?;
    write_corpus(out, &records)?;
    print_json(&json!({ "records": records.len(), "path": out }))
}

fn load_records(cfg: &RunConfig, corpus: Option<&Path>) -> CliResult<Vec<ParagraphRecord>> {
    let path = corpus.unwrap_or(&cfg.paths.corpus);
    if !path.exists() {
        return Err(CliError::usage(format!("corpus {} not found", path.display())));
    }
    Ok(load_corpus(path)?)
}

type Splits = (Vec<ParagraphRecord>, Vec<ParagraphRecord>, Vec<ParagraphRecord>);

fn split(cfg: &RunConfig, records: &[ParagraphRecord]) -> CliResult<Splits> {
    Ok(split_corpus(records, cfg.split.ratios, cfg.split.seed)?)
}

pub fn checkpoint_path(dir: &Path, phase: Phase) -> PathBuf {
    dir.join(format!("phase_{}.json", phase.name()))
}

struct FileObserver {
    dir: PathBuf,
    log: BufWriter<File>,
}

impl TrainObserver for FileObserver {
    fn epoch(&mut self, log: &EpochLog) {
        if let Ok(line) = serde_json::to_string(log) {
            let _ = writeln!(self.log, "{line}");
            let _ = self.log.flush();
        }
        eprintln!("{} epoch {}: loss {:.5} val {:.4} ({:.0}s)", log.phase, log.epoch, log.train_loss, log.val_metric, log.wall_time);
    }

    fn phase_done(&mut self, phase: Phase, model: &ModelParams) -> irsegrn::Result<()> {
        model.save(&checkpoint_path(&self.dir, phase))
    }
}

fn cmd_train(cfg: &RunConfig, corpus: Option<PathBuf>, dir: Option<PathBuf>, resume: bool) -> CliResult {
    let records = load_records(cfg, corpus.as_deref())?;
    let (train, val, _) = split(cfg, &records)?;
    let dir = dir.unwrap_or_else(|| cfg.paths.checkpoint_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;

    let mut start = Phase::Initial;
    let mut model = None;
    if resume {
        for (done, next) in [(Phase::Iterative, Phase::Order), (Phase::Initial, Phase::Iterative)] {
            let p = checkpoint_path(&dir, done);
            if p.exists() {
                info!("resuming from {}", p.display());
                model = Some(ModelParams::load(&p)?);
                start = next;
                break;
            }
        }
    }
    let mut model = match model {
        Some(m) => m,
        None => {
            let mut m = ModelParams::new(cfg.dims, Vocab::from_corpus(&train), derive_seed(&[cfg.train.seed, 0x1417]))?;
            if let Some(p) = &cfg.paths.embeddings {
                let found = m.load_pretrained_embeddings(p)?;
                info!("{found} vocabulary tokens found in {}", p.display());
            }
            m
        }
    };
    let log_path = dir.join("train_log.jsonl");
    let log = File::options()
        .create(true)
        .append(resume)
        .write(true)
        .truncate(!resume)
        .open(&log_path)
        .map_err(|e| CliError::usage(format!("{}: {e}", log_path.display())))?;
    let mut obs = FileObserver {
        dir: dir.clone(),
        log: BufWriter::new(log),
    };
    let report = train_pipeline(&mut model, &train, &val, &cfg.train, &cfg.refine, start, &mut obs)?;
    print_json(&json!({
        "start_phase": start,
        "epochs": report.logs.len(),
        "val_pairwise_initial": report.val_pairwise_initial,
        "val_pairwise_refined": report.val_pairwise_refined,
        "val_tau": report.val_tau,
        "checkpoint": checkpoint_path(&dir, Phase::Order),
    }))
}

fn load_model(cfg: &RunConfig, path: &Path, explicit_dims: bool) -> CliResult<ModelParams> {
    let m = ModelParams::load(path)?;
    if explicit_dims && m.dims != cfg.dims {
        return Err(Error::Checkpoint(format!("checkpoint dims {:?} differ from configured dims {:?}", m.dims, cfg.dims)).into());
    }
    Ok(m)
}

fn select(cfg: &RunConfig, input: &ModelInput) -> CliResult<Vec<ParagraphRecord>> {
    let records = load_records(cfg, input.corpus.as_deref())?;
    let which = input.split.unwrap_or(cfg.eval.split);
    if which == SplitName::All {
        return Ok(records);
    }
    let (train, val, test) = split(cfg, &records)?;
    Ok(match which {
        SplitName::Train => train,
        SplitName::Val => val,
        _ => test,
    })
}

fn inference(cfg: &RunConfig, input: &ModelInput) -> CliResult<InferenceConfig> {
    let beam_width = input.beam_width.unwrap_or(cfg.eval.beam_width);
    if beam_width == 0 {
        return Err(CliError::usage("--beam-width must be at least 1"));
    }
    Ok(InferenceConfig {
        refine: cfg.refine,
        mode: input.refine_mode.map(Into::into).unwrap_or(cfg.eval.refine_mode),
        beam_width,
    })
}

fn predict_all(cfg: &RunConfig, model: &ModelParams, records: &[ParagraphRecord], inf: InferenceConfig, steps: bool) -> CliResult<Vec<Prediction>> {
    let predictor = ModelPredictor {
        model,
        config: inf,
        keep_steps: steps,
    };
    let seed = cfg.eval.seed;
    let preds: irsegrn::Result<Vec<Prediction>> = records
        .par_iter()
        .enumerate()
        .map(|(k, r)| {
            use irsegrn::eval::OrderPredictor;
            predictor.predict(r, presentation_seed(seed, k))
        })
        .collect();
    Ok(preds?)
}

fn cmd_eval(cfg: &RunConfig, input: &ModelInput, head_tail: bool, explicit_dims: bool) -> CliResult {
    let model = load_model(cfg, &input.checkpoint, explicit_dims)?;
    let records = select(cfg, input)?;
    let preds = predict_all(cfg, &model, &records, inference(cfg, input)?, false)?;
    print_json(&summarize(&preds, head_tail)?)
}

fn cmd_predict(cfg: &RunConfig, input: &ModelInput, out: Option<&Path>, steps: bool, explicit_dims: bool) -> CliResult {
    let model = load_model(cfg, &input.checkpoint, explicit_dims)?;
    let records = select(cfg, input)?;
    let preds = predict_all(cfg, &model, &records, inference(cfg, input)?, steps)?;
    match out {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(f);
            for pr in &preds {
                serde_json::to_writer(&mut w, pr)?;
                writeln!(w).map_err(|e| CliError::usage(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::usage(e.to_string()))?;
            print_json(&json!({ "predictions": preds.len(), "path": p }))
        }
        None => preds.iter().try_for_each(print_json),
    }
}

fn weight_rows(g: &irsegrn::graph::IrseGraph) -> Vec<serde_json::Value> {
    g.weight_table()
        .into_iter()
        .map(|(i, k, w)| json!({ "i": i, "k": k, "w_ik": w, "w_ki": 1.0 - w }))
        .collect()
}

fn cmd_inspect_graph(cfg: &RunConfig, corpus: Option<PathBuf>, index: usize, checkpoint: Option<&Path>) -> CliResult {
    let records = load_records(cfg, corpus.as_deref())?;
    let rec = records
        .get(index)
        .ok_or_else(|| CliError::usage(format!("index {index} out of range for {} records", records.len())))?;
    let (mut g, presented) = build_graph(rec, presentation_seed(cfg.eval.seed, index))?;
    let mut out = json!({
        "id": rec.id,
        "presented_order": presented,
        "sentences": g.num_sentences(),
        "entities": g.num_entities(),
        "ss_pairs": g.num_pairs(),
        "se_edges": g.se_edges.len(),
        "ee_edges": g.ee_edges.len(),
        "weights_before": weight_rows(&g),
    });
    if let Some(p) = checkpoint {
        let model = ModelParams::load(p)?;
        let refiner = Refiner::from_model(&model);
        let trace = construct_irse_graph_observed(&mut g, &refiner, &cfg.refine, |_, _| {})?;
        out["weights_after"] = json!(weight_rows(&g));
        out["trajectory"] = json!(std::iter::once(&trace.initial_vp).chain(&trace.trajectory).collect::<Vec<_>>());
        out["iterations"] = json!(trace.iterations);
    }
    print_json(&out)
}

fn cmd_refine_stats(cfg: &RunConfig, input: &ModelInput, explicit_dims: bool) -> CliResult {
    let model = load_model(cfg, &input.checkpoint, explicit_dims)?;
    let records = select(cfg, input)?;
    let seed = cfg.eval.seed;
    let rows: irsegrn::Result<Vec<serde_json::Value>> = records
        .par_iter()
        .enumerate()
        .map(|(k, r)| {
            let (mut g, _) = build_graph(r, presentation_seed(seed, k))?;
            let refiner = Refiner::from_model(&model);
            let trace = construct_irse_graph_observed(&mut g, &refiner, &cfg.refine, |_, _| {})?;
            Ok(json!({
                "id": r.id,
                "vp0": trace.initial_vp.len(),
                "sizes": trace.trajectory.iter().map(|s| s.len()).collect::<Vec<_>>(),
                "iterations": trace.iterations,
            }))
        })
        .collect();
    rows?.iter().try_for_each(print_json)
}
