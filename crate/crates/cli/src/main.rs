//! `outcrop`: compare images, run sessions and evaluate corpora from the
//! command line.
//!
//! Exit codes: 0 success, 1 other failure, 2 unreadable or undecodable
//! image, 3 dimension mismatch, 4 manifest error, 5 degenerate image,
//! 64 bad command-line usage.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use outcrop_core::error::{EvalError, ImageError, LibraryError, SimilarityError};
use outcrop_core::evaluation::{
    percent_grid, records_from_manifest, render_report, render_summary, run_corpus, summarize, sweep, ConfusionCounts,
    ConfusionSummary, Corpus, EvalReport, ReportFormat,
};
use outcrop_core::imagecore::{decode, resize_nearest, FormatHint};
use outcrop_core::library::{pair_path, MANIFEST_FILE};
use outcrop_core::similarity::classify;
use outcrop_core::texgen::{
    corpus_digest, default_templates, generate_corpus, write_corpus, DEFAULT_JITTER, DEFAULT_MASTER_SEED, DEFAULT_SIZE,
    DEFAULT_VARIANTS,
};
use outcrop_core::{
    Comparator, CompressionProfile, ImageBuffer, Juxtaposition, NoveltyThreshold, Session, SessionConfig,
};

#[derive(Parser)]
#[command(
    name = "outcrop",
    version,
    about = "Compression-based image similarity and novelty detection"
)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Opts {
    /// Novelty threshold in percent; scores at or above it are similar [default: 40]
    #[arg(long, global = true, env = "OUTCROP_THRESHOLD")]
    threshold: Option<f64>,
    /// DEFLATE level, 0 to 9
    #[arg(long, global = true, default_value_t = 6)]
    level: u32,
    /// Resize every image to WxH before comparing
    #[arg(long, global = true, value_parser = parse_dims)]
    resize: Option<(u32, u32)>,
    /// Joining direction: lr (left-right) or tb (top-bottom)
    #[arg(long, global = true, default_value = "lr")]
    juxtapose: Juxtaposition,
    /// Output format: text, json, csv or tsv
    #[arg(long, global = true, default_value = "text")]
    format: ReportFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Score one image against another
    Compare { a: PathBuf, b: PathBuf },
    /// Add images to a session, printing one verdict per image
    Ingest {
        #[arg(long)]
        session: PathBuf,
        /// Create the session directory
        #[arg(long)]
        new: bool,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Evaluate a labeled corpus, or summarize given confusion counts
    Eval {
        /// Corpus manifest (corpus.json)
        #[arg(required_unless_present = "counts", conflicts_with = "counts")]
        manifest: Option<PathBuf>,
        /// Confusion counts: below-threshold novel,similar,different then at-or-above novel,similar,different
        #[arg(long, value_parser = parse_counts)]
        counts: Option<[u64; 6]>,
        /// Print accuracies at every whole-percent threshold instead of the report
        #[arg(long)]
        sweep: bool,
        /// Write the output here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic texture corpus with truth labels
    GenTextures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SIZE)]
        size: u32,
        #[arg(long, default_value_t = DEFAULT_VARIANTS)]
        variants: usize,
        #[arg(long, default_value_t = DEFAULT_JITTER)]
        jitter: u8,
        #[arg(long, default_value_t = DEFAULT_MASTER_SEED)]
        seed: u64,
    },
    /// Run the HTTP session service
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory holding session directories
        #[arg(long, default_value = "sessions")]
        root: PathBuf,
        /// Static files to serve under /
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Attach or clear a label on a session entry
    Label {
        #[arg(long)]
        session: PathBuf,
        id: u64,
        /// Omit to clear. novel, similar or different also act as truth in reports.
        label: Option<String>,
    },
    /// Report a stored session, re-thresholded from its stored scores
    Report {
        #[arg(long)]
        session: PathBuf,
    },
}

fn parse_dims(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = outcrop_service::parse_dims(s)?;
    if w == 0 || h == 0 {
        return Err(format!("size must be at least 1x1, got {s}"));
    }
    Ok((w, h))
}

fn parse_counts(s: &str) -> Result<[u64; 6], String> {
    let values: Vec<u64> = s
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("bad count {v:?}")))
        .collect::<Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<u64>| format!("expected 6 comma-separated counts, got {}", v.len()))
}

/// Failure carrying its own exit code.
#[derive(Debug)]
struct Coded(u8, String);

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Coded {}

fn image_code(e: &ImageError) -> u8 {
    match e {
        ImageError::UnsupportedFormat(_) | ImageError::CorruptStream(_) => 2,
        ImageError::HeightMismatch { .. } | ImageError::WidthMismatch { .. } => 3,
        _ => 1,
    }
}

fn library_code(e: &LibraryError) -> u8 {
    match e {
        LibraryError::Image(e) => image_code(e),
        LibraryError::DegenerateImage { .. } => 5,
        LibraryError::DimensionMismatch { .. } => 3,
        LibraryError::Io { .. } | LibraryError::Manifest { .. } | LibraryError::ManifestVersionMismatch { .. } => 4,
        _ => 1,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(Coded(code, _)) = cause.downcast_ref::<Coded>() {
            return *code;
        }
        if let Some(e) = cause.downcast_ref::<ImageError>() {
            return image_code(e);
        }
        if let Some(e) = cause.downcast_ref::<SimilarityError>() {
            return match e {
                SimilarityError::Image(e) => image_code(e),
                SimilarityError::DegenerateImage { .. } => 5,
            };
        }
        if let Some(e) = cause.downcast_ref::<LibraryError>() {
            return library_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::Library(e) => library_code(e),
                EvalError::LengthMismatch { .. } | EvalError::Report(_) => 4,
            };
        }
    }
    1
}

impl Opts {
    fn threshold(&self) -> anyhow::Result<NoveltyThreshold> {
        match self.threshold {
            Some(t) => Ok(NoveltyThreshold::new(t)?),
            None => Ok(NoveltyThreshold::default()),
        }
    }

    fn config(&self) -> anyhow::Result<SessionConfig> {
        Ok(SessionConfig {
            profile: CompressionProfile::with_level(self.level)?,
            threshold: self.threshold()?,
            juxtaposition: self.juxtapose,
            canonical_dims: self.resize,
            parallel: true,
        })
    }
}

fn read_image(path: &Path) -> anyhow::Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| Coded(2, format!("cannot read {}: {e}", path.display())))?;
    let hint = path
        .extension()
        .and_then(|e| e.to_str())
        .map_or(FormatHint::Detect, FormatHint::from_extension);
    decode(&bytes, hint).with_context(|| format!("cannot decode {}", path.display()))
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Delimited rows, with a header line unless `header` is empty.
fn table(format: ReportFormat, header: &[&str], rows: &[Vec<String>]) -> String {
    let delim = if format == ReportFormat::Csv { b',' } else { b'\t' };
    let mut w = csv::WriterBuilder::new().delimiter(delim).from_writer(Vec::new());
    if !header.is_empty() {
        w.write_record(header).expect("in-memory write");
    }
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn compare(opts: &Opts, a: &Path, b: &Path) -> anyhow::Result<String> {
    let mut img_a = read_image(a)?;
    let mut img_b = read_image(b)?;
    if let Some((w, h)) = opts.resize {
        img_a = resize_nearest(&img_a, w, h)?;
        img_b = resize_nearest(&img_b, w, h)?;
    }
    let comparator = Comparator::new(CompressionProfile::with_level(opts.level)?, opts.juxtapose);
    let r = comparator.compare(&img_a, &img_b)?;
    let verdict = classify(r.score, opts.threshold()?);
    Ok(match opts.format {
        ReportFormat::Text => format!(
            "raw={} baseline={} score={} verdict={}\n",
            r.raw, r.baseline, r.score, verdict
        ),
        ReportFormat::Json => {
            let v = serde_json::json!({ "raw": r.raw, "baseline": r.baseline, "score": r.score, "verdict": verdict });
            format!("{v}\n")
        }
        f => table(
            f,
            &["raw", "baseline", "score", "verdict"],
            &[vec![
                r.raw.to_string(),
                r.baseline.to_string(),
                r.score.to_string(),
                verdict.to_string(),
            ]],
        ),
    })
}

fn open_session(opts: &Opts, dir: &Path, new: bool) -> anyhow::Result<Session> {
    if new {
        if dir.join(MANIFEST_FILE).exists() {
            bail!("{} already holds a session", dir.display());
        }
        let mut s = Session::new(opts.config()?);
        if let Some(name) = dir.file_name().and_then(|n| n.to_str()) {
            s.set_id(name);
        }
        return Ok(s);
    }
    let mut s = Session::load(dir)?;
    s.set_parallel(true);
    Ok(s)
}

fn ingest(opts: &Opts, dir: &Path, new: bool, images: &[PathBuf]) -> anyhow::Result<()> {
    let mut session = open_session(opts, dir, new)?;
    if new {
        session.save(dir)?;
    }
    let mut stdout = io::stdout().lock();
    if matches!(opts.format, ReportFormat::Csv | ReportFormat::Tsv) {
        write!(
            stdout,
            "{}",
            table(opts.format, &["id", "name", "verdict", "score", "best_match_id"], &[])
        )?;
    }
    for path in images {
        let name = display_name(path);
        let img = session.conform(read_image(path)?)?;
        let out = session.ingest(img, name.clone())?;
        if let Some(joint) = &out.joint {
            let p = pair_path(dir, out.id);
            fs::create_dir_all(p.parent().expect("pair path has a parent"))?;
            fs::write(&p, joint.image.to_png()).with_context(|| format!("cannot write {}", p.display()))?;
        }
        session.save(dir)?;

        let v = out.verdict;
        let best = v.best_match.map_or_else(|| "-".to_string(), |b| b.to_string());
        let line = match opts.format {
            ReportFormat::Text => {
                format!(
                    "{} {} {} score={} best={}\n",
                    out.id,
                    name,
                    v.kind.as_str().to_uppercase(),
                    v.score,
                    best
                )
            }
            ReportFormat::Json => {
                let v = serde_json::json!({
                    "id": out.id, "name": name, "verdict": v.kind, "score": v.score, "best_match_id": v.best_match
                });
                format!("{v}\n")
            }
            f => table(
                f,
                &[],
                &[vec![
                    out.id.to_string(),
                    name,
                    v.kind.to_string(),
                    v.score.to_string(),
                    best,
                ]],
            ),
        };
        stdout.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn render_sweep(format: ReportFormat, rows: &[(NoveltyThreshold, ConfusionSummary)]) -> String {
    let pct = |a: outcrop_core::evaluation::Accuracy| a.percent().map_or_else(|| "-".to_string(), |p| p.to_string());
    match format {
        ReportFormat::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|(t, s)| serde_json::json!({ "threshold": t, "summary": s }))
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&v).expect("sweep serializes"))
        }
        ReportFormat::Text => {
            let mut out = format!(
                "{:>9}  {:>8}  {:>10}  {:>10}  {:>7}\n",
                "threshold", "novelty", "similarity", "difference", "overall"
            );
            for (t, s) in rows {
                out.push_str(&format!(
                    "{:>9}  {:>8}  {:>10}  {:>10}  {:>7}\n",
                    t.to_string(),
                    pct(s.novelty),
                    pct(s.similarity),
                    pct(s.difference),
                    pct(s.overall)
                ));
            }
            out
        }
        f => table(
            f,
            &["threshold", "novelty", "similarity", "difference", "overall"],
            &rows
                .iter()
                .map(|(t, s)| {
                    vec![
                        t.to_string(),
                        pct(s.novelty),
                        pct(s.similarity),
                        pct(s.difference),
                        pct(s.overall),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
    }
}

fn eval(opts: &Opts, manifest: Option<&Path>, counts: Option<&[u64; 6]>, do_sweep: bool) -> anyhow::Result<String> {
    if let Some(c) = counts {
        let summary = summarize(ConfusionCounts([[c[0], c[1], c[2]], [c[3], c[4], c[5]]]));
        return Ok(match opts.format {
            ReportFormat::Json => format!(
                "{}\n",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            ),
            _ => render_summary(&summary),
        });
    }
    let path = manifest.expect("clap requires a manifest without --counts");
    let corpus = Corpus::load(path)?;
    let (report, _) = run_corpus(&corpus.images, corpus.truths.as_deref(), opts.config()?)?;
    if do_sweep {
        return Ok(render_sweep(opts.format, &sweep(&report.records, percent_grid())));
    }
    Ok(render_report(&report, opts.format))
}

fn report(opts: &Opts, dir: &Path) -> anyhow::Result<String> {
    let session = Session::load(dir)?;
    let manifest = session.manifest();
    let threshold = match opts.threshold {
        Some(_) => opts.threshold()?,
        None => manifest.threshold,
    };
    let report = EvalReport::from_records(records_from_manifest(&manifest), manifest.threshold).at_threshold(threshold);
    Ok(render_report(&report, opts.format))
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => Ok(io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let opts = &cli.opts;
    match &cli.command {
        Command::Compare { a, b } => emit(&compare(opts, a, b)?, None),
        Command::Ingest { session, new, images } => ingest(opts, session, *new, images),
        Command::Eval {
            manifest,
            counts,
            sweep,
            out,
        } => emit(
            &eval(opts, manifest.as_deref(), counts.as_ref(), *sweep)?,
            out.as_deref(),
        ),
        Command::GenTextures {
            out,
            size,
            variants,
            jitter,
            seed,
        } => {
            let corpus = generate_corpus(&default_templates(*size, *jitter), *variants, *seed)?;
            let manifest =
                write_corpus(out, &corpus).with_context(|| format!("cannot write corpus to {}", out.display()))?;
            emit(
                &format!("{}\nsha256 {}\n", manifest.display(), corpus_digest(&corpus)),
                None,
            )
        }
        Command::Serve { addr, root, ui } => {
            let config = outcrop_service::ServiceConfig {
                ui_dir: ui.clone(),
                ..outcrop_service::ServiceConfig::new(root)
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                println!("listening on http://{}", listener.local_addr()?);
                outcrop_service::serve(listener, config).await
            })?;
            Ok(())
        }
        Command::Label { session, id, label } => {
            let mut s = Session::load(session)?;
            s.set_label(*id, label.clone())?;
            s.save(session)?;
            Ok(())
        }
        Command::Report { session } => emit(&report(opts, session)?, None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(64);
        }
        // --help and --version
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
