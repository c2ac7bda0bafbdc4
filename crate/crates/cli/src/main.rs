use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use chromaseq::document::{parse_crello, render_preview, sample_poster};
use chromaseq::eval::{evaluate, evaluate_checkpoint, synth_documents, EvalReport, SkipGram, SkipGramConfig, SynthConfig};
use chromaseq::model::{train, TrainConfig};
use chromaseq::recolor::{recolor_to_code, RecolorConfig};
use chromaseq::recommend::{recommend, RecommendMode, RecommendOptions, SlotRef};
use chromaseq::sequence::{read_corpus, write_corpus, ColorSequence, CorpusEntry};
use chromaseq::{extract_multi_palette, Checkpoint, ColorCode, GraphicDocument, ModelConfig, VocabConfig, Vocabulary};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "chromaseq", version, about = "Masked color model for layered graphic documents")]
struct Cli {
    /// Output format for results written to stdout.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the planted-rule synthetic corpus (documents and sequences).
    SynthData(SynthArgs),
    /// Build a color vocabulary from a corpus file.
    BuildVocab(VocabArgs),
    /// Train a masked color model.
    Train(TrainArgs),
    /// Score a checkpoint (or the skip-gram baseline) on a corpus.
    Evaluate(EvalArgs),
    /// Recommend colors for palette slots of a document.
    Recommend(RecommendArgs),
    /// Set a palette slot of a document to a color code.
    Recolor(RecolorArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    docs: usize,
    /// Seed of the planted color rules.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Share of documents following the cross-group rule.
    #[arg(long, default_value_t = 0.3)]
    segment_fraction: f64,
    /// Output directory for train/val/test.jsonl and spec.json.
    #[arg(long)]
    out: PathBuf,
    /// Also write the first N documents as JSON under OUT/docs.
    #[arg(long, default_value_t = 0)]
    write_docs: usize,
}

#[derive(Args)]
struct VocabArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 16)]
    bins: u8,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckpointArg {
    /// Model checkpoint.
    #[arg(long, env = "CHROMASEQ_CHECKPOINT")]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Validation corpus; used for best-of-runs selection and progress.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Vocabulary file; built from the corpus when omitted.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Seeds both initialization and data order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 256)]
    d_ff: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Drop segment embeddings (ablation).
    #[arg(long)]
    no_segments: bool,
    /// Add learned position embeddings.
    #[arg(long)]
    positions: bool,
    /// Train K runs and keep the lowest validation loss.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Epoch records as JSON lines; stderr when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    ck: OptCheckpoint,
    #[arg(long)]
    corpus: PathBuf,
    /// Only score entries with this tag.
    #[arg(long)]
    tag: Option<String>,
    /// Colors masked per sequence.
    #[arg(long, default_value_t = 1)]
    masked: usize,
    /// Also report accuracy@1 for 1..=K nested masks (0 = off).
    #[arg(long, default_value_t = 0)]
    table_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score the skip-gram baseline trained on this corpus instead of a checkpoint.
    #[arg(long)]
    skipgram: Option<PathBuf>,
}

#[derive(Args)]
struct OptCheckpoint {
    #[arg(long, env = "CHROMASEQ_CHECKPOINT")]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct DocArg {
    /// Document JSON, or `sample` for the bundled poster.
    #[arg(long)]
    doc: String,
    /// Read the document as a Crello-style template.
    #[arg(long)]
    crello: bool,
    /// Seed for palette extraction.
    #[arg(long, default_value_t = 0)]
    palette_seed: u64,
}

#[derive(Args)]
struct RecommendArgs {
    #[command(flatten)]
    ck: CheckpointArg,
    #[command(flatten)]
    doc: DocArg,
    /// Slot such as svg:0; repeat for several slots.
    #[arg(long = "slot", required = true)]
    slots: Vec<String>,
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Codes never to recommend; repeatable.
    #[arg(long)]
    exclude: Vec<String>,
    #[arg(long, value_enum, default_value_t = Mode::Simultaneous)]
    mode: Mode,
    #[arg(long, default_value_t = 0.0)]
    frequency_penalty: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Simultaneous,
    Iterative,
}

#[derive(Args)]
struct RecolorArgs {
    #[command(flatten)]
    ck: CheckpointArg,
    #[command(flatten)]
    doc: DocArg,
    #[arg(long)]
    slot: String,
    #[arg(long)]
    code: String,
    /// Recolored document JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write a PNG preview.
    #[arg(long)]
    preview: Option<PathBuf>,
    #[arg(long, default_value_t = 20.0)]
    tau: f64,
    #[arg(long, default_value_t = 4.0)]
    exponent: f64,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    ck: CheckpointArg,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "CHROMASEQ_PORT", default_value_t = 8080)]
    port: u16,
    /// Idle seconds before a session is dropped; 0 keeps sessions forever.
    #[arg(long, env = "CHROMASEQ_SESSION_TTL", default_value_t = 3600)]
    session_ttl: u64,
    /// Persist sessions as JSON files in this directory.
    #[arg(long)]
    persist_dir: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let f = cli.format;
    match cli.cmd {
        Cmd::SynthData(a) => synth_data(a, f),
        Cmd::BuildVocab(a) => build_vocab(a, f),
        Cmd::Train(a) => train_cmd(a, f),
        Cmd::Evaluate(a) => evaluate_cmd(a, f),
        Cmd::Recommend(a) => recommend_cmd(a, f),
        Cmd::Recolor(a) => recolor_cmd(a, f),
        Cmd::Serve(a) => serve_cmd(a),
    }
}

fn load_corpus(path: &Path) -> Result<Vec<CorpusEntry>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_corpus(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn sequences(entries: &[CorpusEntry]) -> Vec<ColorSequence> {
    entries.iter().map(|e| e.sequence).collect()
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_doc(a: &DocArg) -> Result<GraphicDocument> {
    if a.doc == "sample" {
        return Ok(sample_poster());
    }
    let path = Path::new(&a.doc);
    let doc = if a.crello {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        parse_crello(&bytes, path.parent())
    } else {
        GraphicDocument::load(path)
    };
    doc.with_context(|| format!("loading document {}", path.display()))
}

fn emit(f: Format, text: impl FnOnce() -> String, value: serde_json::Value) {
    match f {
        Format::Text => print!("{}", text()),
        Format::Json => println!("{value}"),
    }
}

fn synth_data(a: SynthArgs, f: Format) -> Result<()> {
    let mut cfg = SynthConfig::new(a.docs, a.seed);
    cfg.segment_fraction = a.segment_fraction;
    let (docs, spec) = synth_documents(&cfg)?;
    std::fs::create_dir_all(&a.out)?;
    let entries: Vec<CorpusEntry> = docs
        .iter()
        .map(|d| {
            Ok(CorpusEntry {
                sequence: ColorSequence::from_codes(&d.palettes)?,
                tag: Some(d.kind.tag().to_string()),
            })
        })
        .collect::<chromaseq::Result<_>>()?;
    let n = entries.len();
    let (n_train, n_val) = (n * 8 / 10, n / 10);
    let splits = [("train", &entries[..n_train]), ("val", &entries[n_train..n_train + n_val]), ("test", &entries[n_train + n_val..])];
    for (name, part) in splits {
        write_corpus(BufWriter::new(File::create(a.out.join(format!("{name}.jsonl")))?), part)?;
    }
    std::fs::write(a.out.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;
    if a.write_docs > 0 {
        let dir = a.out.join("docs");
        std::fs::create_dir_all(&dir)?;
        for (i, d) in docs.iter().take(a.write_docs).enumerate() {
            std::fs::write(dir.join(format!("{i:05}.json")), d.document.to_json())?;
        }
    }
    emit(
        f,
        || {
            format!(
                "wrote {n} documents to {} (train {}, val {}, test {})\nbest possible top-1 on segment documents: {:.3} with segments, {:.3} without\n",
                a.out.display(),
                splits[0].1.len(),
                splits[1].1.len(),
                splits[2].1.len(),
                spec.bayes.with_segments,
                spec.bayes.without_segments
            )
        },
        json!({"out": a.out, "train": splits[0].1.len(), "val": splits[1].1.len(), "test": splits[2].1.len(), "bayes": spec.bayes}),
    );
    Ok(())
}

fn build_vocab(a: VocabArgs, f: Format) -> Result<()> {
    let corpus = sequences(&load_corpus(&a.corpus)?);
    let vocab = Vocabulary::build(&corpus, VocabConfig::new(a.bins)?)?;
    std::fs::write(&a.out, serde_json::to_string_pretty(&vocab)?)?;
    emit(
        f,
        || format!("{} color codes ({} tokens) -> {}\n", vocab.num_colors(), vocab.len(), a.out.display()),
        json!({"colors": vocab.num_colors(), "tokens": vocab.len(), "out": a.out}),
    );
    Ok(())
}

fn train_cmd(a: TrainArgs, f: Format) -> Result<()> {
    let train_set = sequences(&load_corpus(&a.corpus)?);
    let val = match &a.val {
        Some(p) => sequences(&load_corpus(p)?),
        None => Vec::new(),
    };
    let vocab = match &a.vocab {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?).with_context(|| format!("reading vocabulary {}", p.display()))?,
        None => Vocabulary::build(&train_set, VocabConfig::default())?,
    };
    let mut mc = ModelConfig::new(vocab.len());
    mc.d_model = a.d_model;
    mc.n_layers = a.layers;
    mc.n_heads = a.heads;
    mc.d_ff = a.d_ff;
    mc.dropout = a.dropout;
    mc.use_segment_embeddings = !a.no_segments;
    mc.use_position_embeddings = a.positions;
    mc.seed = a.seed;
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        seed: a.seed,
        runs: a.runs,
        ..Default::default()
    };
    let mut log: Box<dyn Write> = match &a.log {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stderr()),
    };
    let mut log_err = None;
    let out = train(&train_set, &val, &vocab, &mc, &tc, |r| {
        let mut lines = vec![json!({"run": r.run, "epoch": r.epoch, "split": "train", "loss": r.train_loss})];
        if let (Some(loss), Some(acc)) = (r.val_loss, r.val_accuracy) {
            lines.push(json!({"run": r.run, "epoch": r.epoch, "split": "val", "loss": loss, "accuracy": acc}));
        }
        for l in lines {
            if let Err(e) = writeln!(log, "{l}") {
                log_err.get_or_insert(e);
            }
        }
    })?;
    log.flush()?;
    if let Some(e) = log_err {
        return Err(e).context("writing the training log");
    }
    out.checkpoint.save(&a.out)?;
    let last = out.history.iter().rfind(|r| r.run == out.best_run);
    emit(
        f,
        || {
            let mut s = format!("saved {} (run {} of {})\n", a.out.display(), out.best_run + 1, a.runs);
            if let Some(r) = last {
                s += &format!("final train loss {:.4}", r.train_loss);
                if let (Some(l), Some(acc)) = (r.val_loss, r.val_accuracy) {
                    s += &format!(", val loss {l:.4}, val top-1 {acc:.3}");
                }
                s.push('\n');
            }
            s
        },
        json!({"out": a.out, "best_run": out.best_run, "run_scores": out.run_scores, "final": last}),
    );
    Ok(())
}

fn evaluate_cmd(a: EvalArgs, f: Format) -> Result<()> {
    let mut entries = load_corpus(&a.corpus)?;
    if let Some(tag) = &a.tag {
        entries.retain(|e| e.tag.as_deref() == Some(tag.as_str()));
    }
    let corpus = sequences(&entries);
    let report: EvalReport = match (&a.skipgram, &a.ck.checkpoint) {
        (Some(train_path), _) => {
            let train_set = sequences(&load_corpus(train_path)?);
            let vocab = Vocabulary::build(&train_set, VocabConfig::default())?;
            let sg = SkipGram::train(&train_set, &vocab, &SkipGramConfig::default())?;
            evaluate(&sg, "skip-gram", &corpus, a.masked, a.table_max, a.seed)?
        }
        (None, Some(p)) => {
            let ck = load_checkpoint(p)?;
            evaluate_checkpoint(&ck, &p.display().to_string(), &corpus, a.masked, a.table_max, a.seed)?
        }
        (None, None) => bail!("pass --checkpoint (or set CHROMASEQ_CHECKPOINT) or --skipgram"),
    };
    report.check_monotone()?;
    emit(f, || report.to_text(), serde_json::to_value(&report)?);
    Ok(())
}

fn recommend_cmd(a: RecommendArgs, f: Format) -> Result<()> {
    let ck = load_checkpoint(&a.ck.checkpoint)?;
    let doc = load_doc(&a.doc)?;
    let slots: Vec<SlotRef> = a.slots.iter().map(|s| s.parse()).collect::<chromaseq::Result<_>>()?;
    let exclude: BTreeSet<ColorCode> = a.exclude.iter().map(|s| s.parse()).collect::<chromaseq::Result<_>>()?;
    let opts = RecommendOptions {
        n: a.n,
        mode: match a.mode {
            Mode::Simultaneous => RecommendMode::Simultaneous,
            Mode::Iterative => RecommendMode::Iterative,
        },
        frequency_penalty: a.frequency_penalty,
        exclude,
        palette_seed: a.doc.palette_seed,
    };
    let recs = recommend(&doc, &slots, &opts, &ck)?;
    emit(
        f,
        || {
            let mut s = String::new();
            for r in &recs {
                s += &format!("{} (current {})\n", r.slot, r.current);
                for c in &r.candidates {
                    s += &format!("  {}. {} {:<8} p={:.4}\n", c.rank, c.display, c.code.to_string(), c.probability);
                }
            }
            s
        },
        json!({ "recommendations": recs }),
    );
    Ok(())
}

fn recolor_cmd(a: RecolorArgs, f: Format) -> Result<()> {
    let ck = load_checkpoint(&a.ck.checkpoint)?;
    let doc = load_doc(&a.doc)?;
    let slot: SlotRef = a.slot.parse()?;
    let code: ColorCode = a.code.parse()?;
    let cfg = RecolorConfig { tau: a.tau, exponent: a.exponent };
    let out = recolor_to_code(&doc, slot, code, &ck, a.doc.palette_seed, &cfg)?;
    std::fs::write(&a.out, out.to_json())?;
    if let Some(p) = &a.preview {
        std::fs::write(p, render_preview(&out).encode_png())?;
    }
    let palettes = extract_multi_palette(&out, a.doc.palette_seed)?.to_json(ck.vocab().config());
    emit(
        f,
        || format!("{slot} -> {code}: wrote {}\n", a.out.display()),
        json!({"out": a.out, "preview": a.preview, "palettes": palettes}),
    );
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let ck = Arc::new(load_checkpoint(&a.ck.checkpoint)?);
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("parsing --host/--port")?;
    let cfg = chromaseq_server::ServerConfig {
        session_ttl: (a.session_ttl > 0).then(|| Duration::from_secs(a.session_ttl)),
        persist_dir: a.persist_dir,
        ..Default::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(chromaseq_server::serve(addr, ck, cfg))?;
    Ok(())
}
