//! The `hwr` command line: ingest a manifest, train, evaluate, predict,
//! benchmark the extractor × cell grid, and render augmentation sheets.

mod config;

pub use config::{BenchmarkPreset, ModelSpec, RunConfig};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_charset, extract_words, filter_by_length, load_manifest, split_dataset, synth_corpus,
    write_synthetic_pages, Charset, Split, SplitAssignment, SynthConfig, WordSample,
};
use crate::imageproc::{
    compose_augmentations, default_policies, load_policies, resize_to_canvas, AugmentPolicy,
    GrayImage, CANVAS_HEIGHT, CANVAS_WIDTH,
};
use crate::metrics::{estimate_flops, EvalReport};
use crate::network::CellKind;
use crate::seed;
use crate::trainer::{self, curve_csv, evaluate_split, Checkpoint, Dataset, Decoder};

pub const CHARSET_FILE: &str = "charset.json";
pub const SPLIT_FILE: &str = "split.json";
pub const INDEX_FILE: &str = "samples.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LAST_CHECKPOINT_FILE: &str = "last.ckpt";
pub const CURVE_FILE: &str = "loss_curve.csv";
pub const BENCHMARK_HEADER: &str =
    "model,rnn,flops_millions,train_loss,train_cer,train_wer,val_loss,val_cer,val_wer,test_loss,test_cer,test_wer";

#[derive(Debug, Parser)]
#[command(name = "hwr", version, about = "Handwritten word recognition with CNN + BiRNN + CTC")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for splitting, initialization, shuffling and augmentation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (also where ingested artifacts are read from).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a manifest, crop and filter words, build the charset and split.
    Ingest {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Render a synthetic corpus as page images plus a manifest.
    Synth {
        #[arg(long, default_value_t = 20)]
        alphabet: usize,
        #[arg(long, default_value_t = 500)]
        words: usize,
        #[arg(long, default_value_t = 20)]
        words_per_page: usize,
    },
    /// Train on the ingested train split, selecting by validation loss.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split and write JSON + CSV reports.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[command(flatten)]
        decoder: DecoderArgs,
    },
    /// Decode a single word image and print the text.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        decoder: DecoderArgs,
    },
    /// Train and evaluate every extractor preset × recurrent cell.
    Benchmark {
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Run grid cells concurrently.
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        decoder: DecoderArgs,
    },
    /// Write a 1×N PNG: the original crop followed by each policy applied alone.
    AugmentSheet {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        policies: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long, value_enum)]
    pub cell: Option<CellArg>,
    /// Stop after this many epochs without validation improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Disable online augmentation.
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Args)]
pub struct DecoderArgs {
    #[arg(long, value_enum, default_value_t = DecoderArg::Beam)]
    pub decoder: DecoderArg,
    #[arg(long, default_value_t = 10)]
    pub beam_width: usize,
}

impl DecoderArgs {
    pub fn decoder(&self) -> anyhow::Result<Decoder> {
        match self.decoder {
            DecoderArg::Greedy => Ok(Decoder::Greedy),
            DecoderArg::Beam if self.beam_width == 0 => bail!("--beam-width must be at least 1"),
            DecoderArg::Beam => Ok(Decoder::Beam(self.beam_width)),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DecoderArg {
    Greedy,
    Beam,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CellArg {
    Lstm,
    Gru,
}

impl From<CellArg> for CellKind {
    fn from(c: CellArg) -> Self {
        match c {
            CellArg::Lstm => CellKind::Lstm,
            CellArg::Gru => CellKind::Gru,
        }
    }
}

/// Transcripts and ids of the ingested samples, plus where they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleIndex {
    pub manifest: PathBuf,
    pub max_word_len: usize,
    pub samples: Vec<IndexEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IngestSummary {
    pub samples: usize,
    pub dropped: usize,
    pub charset_size: usize,
    /// Transcript length → count.
    pub length_histogram: BTreeMap<usize, usize>,
    pub split_sizes: [usize; 3],
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    match cli.command {
        Command::Ingest { manifest } => {
            if let Some(m) = manifest {
                cfg.manifest = Some(m);
            }
            let summary = cmd_ingest(&cfg)?;
            print_ingest(&summary);
        }
        Command::Synth {
            alphabet,
            words,
            words_per_page,
        } => {
            let synth = SynthConfig {
                alphabet_size: alphabet,
                word_count: words,
                seed: cfg.seed,
                ..SynthConfig::default()
            };
            let path = cmd_synth(&synth, &cfg.out, words_per_page)?;
            println!("wrote {}", path.display());
        }
        Command::Train(args) => {
            if let Some(n) = args.max_epochs {
                cfg.train.max_epochs = n;
            }
            if let Some(c) = args.cell {
                cfg.model.cell = c.into();
            }
            if args.patience.is_some() {
                cfg.train.patience = args.patience;
            }
            if args.clip_norm.is_some() {
                cfg.train.clip_norm = args.clip_norm;
            }
            if args.no_augment {
                cfg.train.augmentation = Some(Vec::new());
            }
            let fit = cmd_train(&cfg, |r| {
                eprintln!(
                    "epoch {:>4}  train_loss {:.4}  val_loss {:.4}  val_cer {:.4}  val_wer {:.4}",
                    r.epoch, r.train_loss, r.val_loss, r.val_cer, r.val_wer
                )
            })?;
            println!(
                "best epoch {} (val loss {}), checkpoint {}",
                fit.best.epoch,
                fit.best
                    .best_val_loss
                    .map_or("n/a".to_string(), |v| format!("{v:.6}")),
                cfg.out.join(CHECKPOINT_FILE).display()
            );
        }
        Command::Eval {
            checkpoint,
            split,
            decoder,
        } => {
            let ck = checkpoint.unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
            let report = cmd_eval(&cfg, &ck, split.into(), decoder.decoder()?)?;
            println!(
                "{} ({}): loss {:.6}  cer {:.6}  wer {:.6}",
                report.split, report.decoder, report.loss, report.cer, report.wer
            );
        }
        Command::Predict {
            checkpoint,
            image,
            decoder,
        } => {
            let ck = checkpoint.unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
            println!("{}", cmd_predict(&ck, &image, decoder.decoder()?)?);
        }
        Command::Benchmark {
            max_epochs,
            parallel,
            decoder,
        } => {
            if let Some(n) = max_epochs {
                cfg.train.max_epochs = n;
            }
            let rows = cmd_benchmark(&cfg, decoder.decoder()?, parallel)?;
            print!("{}", benchmark_csv(&rows));
            let failed: Vec<_> = rows.iter().filter(|r| r.error.is_some()).collect();
            if !failed.is_empty() {
                for r in &failed {
                    eprintln!("{} + {} failed: {}", r.model, r.rnn, r.error.as_deref().unwrap_or(""));
                }
                bail!("{} of {} benchmark cells failed", failed.len(), rows.len());
            }
        }
        Command::AugmentSheet {
            image,
            policies,
            output,
        } => {
            let policies = match policies.or(cfg.augmentation_policy.clone()) {
                Some(p) => load_policies(&p)?,
                None => default_policies(),
            };
            let output = output.unwrap_or_else(|| cfg.out.join("augment_sheet.png"));
            cmd_augment_sheet(&image, &policies, cfg.seed, &output)?;
            println!("wrote {}", output.display());
        }
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_ingest(s: &IngestSummary) {
    println!("samples: {} ({} dropped as longer than the limit)", s.samples, s.dropped);
    println!("charset size (C): {}", s.charset_size);
    println!(
        "split: train {} / val {} / test {}",
        s.split_sizes[0], s.split_sizes[1], s.split_sizes[2]
    );
    println!("length histogram:");
    for (len, n) in &s.length_histogram {
        println!("  {len:>2}: {n}");
    }
}

/// Load → extract → filter → charset → split, writing the three artifacts
/// into `cfg.out`.
pub fn cmd_ingest(cfg: &RunConfig) -> anyhow::Result<IngestSummary> {
    let manifest = cfg
        .manifest
        .as_ref()
        .context("no manifest given (use --manifest or set \"manifest\" in the config)")?;
    let pages = load_manifest(manifest)?;
    let all = extract_words(&pages)?;
    let total = all.len();
    let samples = filter_by_length(all, cfg.max_word_len);
    let charset = build_charset(&samples)?;
    let split = split_dataset(&samples, cfg.seed)?;
    ensure_dir(&cfg.out)?;
    charset.save(&cfg.out.join(CHARSET_FILE))?;
    split.save(&cfg.out.join(SPLIT_FILE))?;
    let manifest_path = std::fs::canonicalize(manifest).unwrap_or_else(|_| manifest.clone());
    let index = SampleIndex {
        manifest: manifest_path,
        max_word_len: cfg.max_word_len,
        samples: samples
            .iter()
            .map(|s| IndexEntry {
                id: s.source_id.clone(),
                text: s.transcript.clone(),
            })
            .collect(),
    };
    write_json(&cfg.out.join(INDEX_FILE), &index)?;
    let mut length_histogram = BTreeMap::new();
    for s in &samples {
        *length_histogram.entry(s.len()).or_insert(0) += 1;
    }
    Ok(IngestSummary {
        samples: samples.len(),
        dropped: total - samples.len(),
        charset_size: charset.len(),
        length_histogram,
        split_sizes: [split.train.len(), split.val.len(), split.test.len()],
    })
}

/// Renders a synthetic corpus into `dir` and returns the manifest path.
pub fn cmd_synth(synth: &SynthConfig, dir: &Path, words_per_page: usize) -> anyhow::Result<PathBuf> {
    let (samples, _) = synth_corpus(synth)?;
    write_synthetic_pages(&samples, dir, words_per_page)?;
    Ok(dir.join("manifest.json"))
}

/// Ingested samples reloaded from disk.
pub struct Corpus {
    pub charset: Charset,
    pub split: SplitAssignment,
    pub samples: Vec<WordSample>,
}

impl Corpus {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let charset = Charset::load(&dir.join(CHARSET_FILE))
            .with_context(|| format!("loading ingested charset from {} (run `ingest` first)", dir.display()))?;
        let split = SplitAssignment::load(&dir.join(SPLIT_FILE))?;
        let index: SampleIndex = read_json(&dir.join(INDEX_FILE))?;
        let pages = load_manifest(&index.manifest)?;
        let samples = filter_by_length(extract_words(&pages)?, index.max_word_len);
        let found: Vec<(&str, &str)> = samples
            .iter()
            .map(|s| (s.source_id.as_str(), s.transcript.as_str()))
            .collect();
        let expected: Vec<(&str, &str)> = index
            .samples
            .iter()
            .map(|e| (e.id.as_str(), e.text.as_str()))
            .collect();
        if found != expected {
            bail!(
                "{} no longer matches the sample index in {}; re-run `ingest`",
                index.manifest.display(),
                dir.display()
            );
        }
        Ok(Self {
            charset,
            split,
            samples,
        })
    }

    pub fn dataset(&self, split: Split, charset: &Charset) -> anyhow::Result<Dataset> {
        let selected = self.split.select(split, &self.samples)?;
        Ok(Dataset::prepare(selected, charset)?)
    }
}

/// Fits from scratch and writes the best and last checkpoints and the curve.
pub fn cmd_train(
    cfg: &RunConfig,
    on_epoch: impl FnMut(&trainer::CurveRow) + Send,
) -> anyhow::Result<trainer::FitResult> {
    let corpus = Corpus::load(&cfg.out)?;
    let train = corpus.dataset(Split::Train, &corpus.charset)?;
    let mut val = corpus.dataset(Split::Val, &corpus.charset)?;
    if val.is_empty() {
        eprintln!("validation split is empty; selecting on the training split");
        val = train.clone();
    }
    let tc = cfg.resolved_train()?;
    let network = cfg.model.network(corpus.charset.num_classes());
    let fit = trainer::fit(&network, &tc, &train, &val, on_epoch)?;
    fit.best.save(&cfg.out.join(CHECKPOINT_FILE))?;
    fit.last.save(&cfg.out.join(LAST_CHECKPOINT_FILE))?;
    let curve = cfg.out.join(CURVE_FILE);
    std::fs::write(&curve, curve_csv(&fit.curve))
        .with_context(|| format!("writing {}", curve.display()))?;
    write_json(
        &cfg.out.join("train_log.json"),
        &serde_json::json!({
            "selection": "minimum validation loss, earliest epoch on ties",
            "best_epoch": fit.best.epoch,
            "best_val_loss": fit.best.best_val_loss,
            "epochs_run": fit.curve.len(),
            "network": network,
            "train": tc,
        }),
    )?;
    Ok(fit)
}

/// Evaluates one split and writes `report_<split>_<decoder>.{json,csv}`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, split: Split, decoder: Decoder) -> anyhow::Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    let corpus = Corpus::load(&cfg.out)?;
    if corpus.charset != ck.model.charset {
        bail!(crate::Error::CharsetMismatch(format!(
            "checkpoint {} was trained on a different character set than the ingested corpus",
            checkpoint.display()
        )));
    }
    let data = corpus.dataset(split, &ck.model.charset)?;
    let mut report = evaluate_split(&ck.model, split.name(), &data, decoder)?;
    report.meta.seed = ck.train.seed;
    report.meta.checkpoint = ck.id()?;
    report.write(&cfg.out, &format!("report_{}_{}", split.name(), decoder.name()))?;
    Ok(report)
}

pub fn cmd_predict(checkpoint: &Path, image: &Path, decoder: Decoder) -> anyhow::Result<String> {
    let ck = Checkpoint::load(checkpoint)?;
    let img = GrayImage::load(image)?;
    Ok(ck.model.predict(&img, decoder)?)
}

/// One row of the benchmark table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub model: String,
    pub rnn: String,
    pub flops_millions: f64,
    /// `[loss, cer, wer]` for train, val and test; absent when the cell failed.
    pub metrics: Option<[[f64; 3]; 3]>,
    pub error: Option<String>,
}

pub fn benchmark_csv(rows: &[BenchmarkRow]) -> String {
    let mut out = format!("{BENCHMARK_HEADER}\n");
    for r in rows {
        let nums = match &r.metrics {
            Some(m) => m
                .iter()
                .flatten()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
            None => vec![""; 9].join(","),
        };
        out.push_str(&format!("{},{},{},{}\n", r.model, r.rnn, r.flops_millions, nums));
    }
    out
}

fn benchmark_cell(
    cfg: &RunConfig,
    corpus: &Corpus,
    splits: &[Dataset; 3],
    preset: &ModelSpec,
    decoder: Decoder,
) -> anyhow::Result<[[f64; 3]; 3]> {
    let network = preset.network(corpus.charset.num_classes());
    let tc = cfg.resolved_train()?;
    let val = if splits[1].is_empty() { &splits[0] } else { &splits[1] };
    let fit = trainer::fit(&network, &tc, &splits[0], val, |_| {})?;
    let mut out = [[0.0; 3]; 3];
    for (i, data) in splits.iter().enumerate() {
        if data.is_empty() {
            out[i] = [f64::NAN; 3];
            continue;
        }
        let r = evaluate_split(&fit.best.model, Split::ALL[i].name(), data, decoder)?;
        out[i] = [r.loss, r.cer, r.wer];
    }
    Ok(out)
}

/// Trains every preset × cell with the shared seed; failures become rows
/// carrying the error instead of aborting the grid.
pub fn cmd_benchmark(cfg: &RunConfig, decoder: Decoder, parallel: bool) -> anyhow::Result<Vec<BenchmarkRow>> {
    let corpus = Corpus::load(&cfg.out)?;
    let splits = [
        corpus.dataset(Split::Train, &corpus.charset)?,
        corpus.dataset(Split::Val, &corpus.charset)?,
        corpus.dataset(Split::Test, &corpus.charset)?,
    ];
    let mut cells = Vec::new();
    for preset in &cfg.benchmark_presets {
        for cell in [CellKind::Lstm, CellKind::Gru] {
            cells.push((preset.name.clone(), ModelSpec { cell, ..preset.model.clone() }));
        }
    }
    let run_cell = |(name, spec): &(String, ModelSpec)| {
        let network = spec.network(corpus.charset.num_classes());
        let flops = estimate_flops(&network).millions();
        let result = benchmark_cell(cfg, &corpus, &splits, spec, decoder);
        BenchmarkRow {
            model: name.clone(),
            rnn: spec.cell.name().to_string(),
            flops_millions: flops,
            metrics: result.as_ref().ok().copied(),
            error: result.err().map(|e| format!("{e:#}")),
        }
    };
    let rows: Vec<BenchmarkRow> = if parallel {
        cells.par_iter().map(run_cell).collect()
    } else {
        cells.iter().map(run_cell).collect()
    };
    ensure_dir(&cfg.out)?;
    let csv_path = cfg.out.join("benchmark.csv");
    std::fs::write(&csv_path, benchmark_csv(&rows))
        .with_context(|| format!("writing {}", csv_path.display()))?;
    write_json(&cfg.out.join("benchmark.json"), &rows)?;
    Ok(rows)
}

const SHEET_GAP: usize = 4;

/// Original crop plus one forced application of each policy, all resized to
/// the network canvas and laid out left to right.
pub fn augment_sheet(image: &GrayImage, policies: &[AugmentPolicy], seed_value: u64) -> GrayImage {
    let mut tiles = vec![resize_to_canvas(image)];
    for (i, p) in policies.iter().enumerate() {
        let forced = AugmentPolicy::new(p.kind.clone(), 1.0);
        let out = compose_augmentations(&[forced], image, seed::derive(&[seed_value, i as u64]));
        tiles.push(resize_to_canvas(&out));
    }
    let n = tiles.len();
    let width = n * CANVAS_WIDTH + (n - 1) * SHEET_GAP;
    let mut sheet = GrayImage::filled(CANVAS_HEIGHT, width, 128.0);
    for (t, tile) in tiles.iter().enumerate() {
        let x0 = t * (CANVAS_WIDTH + SHEET_GAP);
        for y in 0..CANVAS_HEIGHT {
            for x in 0..CANVAS_WIDTH {
                sheet.set(y, x0 + x, tile.get(y, x));
            }
        }
    }
    sheet
}

pub fn cmd_augment_sheet(
    image: &Path,
    policies: &[AugmentPolicy],
    seed_value: u64,
    output: &Path,
) -> anyhow::Result<()> {
    policies.iter().try_for_each(AugmentPolicy::validate)?;
    let img = GrayImage::load(image)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    augment_sheet(&img, policies, seed_value).save_png(output)?;
    Ok(())
}
