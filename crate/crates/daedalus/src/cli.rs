//! Command line: ingestion, synthesis, offline projection and layout, label
//! import/export, evaluation and the HTTP server.
//!
//! Exit codes: 0 on success, 2 on usage or validation errors, 1 otherwise.
//! Logs go to standard error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use daedalus_core::labels::{LabelStore, MergePolicy, Stamp};
use daedalus_core::layout::{attribute_layout, bin_numeric_attribute, LayoutConfig};
use daedalus_core::projection::{project, ProjectionConfig};
use daedalus_core::selection::DEFAULT_STAT_BINS;
use daedalus_core::{Dataset, FacetKey};

use crate::coords::CoordFile;
use crate::eval::{embedding_purity, read_truth, Truth};
use crate::images::{load_images, DEFAULT_THUMB_EDGE};
use crate::labelio::{
    encode_snapshot, export_csv, now_ms, read_snapshot, write_atomic, LabelIoError, LabelRepo,
};
use crate::manifest::{load_dataset, manifest_path, write_dataset, IngestError};
use crate::schema::image_attributes;
use crate::service::{self, AppState, DEFAULT_WORKERS};
use crate::synth::{generate_synthetic, write_corpus, SynthConfig, SynthError};

#[derive(Debug, Parser)]
#[command(
    name = "daedalus",
    version,
    about = "Explore, project and label particle-image collections"
)]
struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a dataset manifest and write a dataset directory with thumbnails.
    Ingest {
        /// Manifest file, or a directory containing manifest.json.
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Longest thumbnail edge in pixels.
        #[arg(long, default_value_t = DEFAULT_THUMB_EDGE)]
        thumb_edge: u32,
    },
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Compute a 2D projection and write it as a coordinate file.
    Project {
        data: PathBuf,
        /// Comma-separated attributes; the numeric shape and size attributes when absent.
        #[arg(long, value_delimiter = ',')]
        attrs: Vec<String>,
        /// Label alphabet (by name) supervising the projection.
        #[arg(long)]
        alphabet: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 15)]
        neighbors: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        min_dist: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compute an attribute layout and write it as a coordinate file.
    Layout {
        data: PathBuf,
        /// Attribute or label alphabet name.
        #[arg(long)]
        attr: String,
        /// Target bin count for numeric attributes.
        #[arg(long, default_value_t = DEFAULT_STAT_BINS)]
        bins: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Export or import label snapshots.
    Labels {
        #[command(subcommand)]
        action: LabelsAction,
    },
    /// Serve the HTTP API over a dataset directory.
    Serve {
        #[arg(env = "DAEDALUS_DATA")]
        data: PathBuf,
        #[arg(long, env = "DAEDALUS_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Concurrent projection jobs.
        #[arg(long, env = "DAEDALUS_WORKERS", default_value_t = DEFAULT_WORKERS)]
        workers: usize,
    },
    /// Mean same-class k-NN purity of a projection against ground truth.
    EvalPurity {
        result: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Dataset directory used to order the truth file; the truth file
        /// must be in dataset order when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3000)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 70)]
    lots: usize,
    #[arg(long, default_value_t = 8)]
    suppliers: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    min_size: u32,
    #[arg(long, default_value_t = 1000)]
    max_size: u32,
    /// Pin a lot's particle count, e.g. `27=669`; repeatable.
    #[arg(long = "pin-lot", value_parser = parse_pin)]
    pinned: Vec<(usize, usize)>,
    /// Reference-scale corpus (overrides the counts above).
    #[arg(long)]
    reference: bool,
    /// Skip rendering images and thumbnails.
    #[arg(long)]
    no_images: bool,
    #[arg(long, default_value_t = DEFAULT_THUMB_EDGE)]
    thumb_edge: u32,
    #[arg(short, long)]
    output: PathBuf,
}

fn parse_pin(s: &str) -> Result<(usize, usize), String> {
    let (lot, count) = s.split_once('=').ok_or("expected LOT=COUNT")?;
    Ok((
        lot.trim().parse().map_err(|e| format!("lot: {e}"))?,
        count.trim().parse().map_err(|e| format!("count: {e}"))?,
    ))
}

#[derive(Debug, Subcommand)]
enum LabelsAction {
    /// Write the label snapshot (JSON) or the assignments (`.csv`).
    Export {
        file: PathBuf,
        #[arg(long, env = "DAEDALUS_DATA")]
        data: PathBuf,
    },
    /// Import a label snapshot into the dataset's label store.
    Import {
        file: PathBuf,
        #[arg(long, env = "DAEDALUS_DATA")]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Policy::Reject)]
        policy: Policy,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Policy {
    Reject,
    Theirs,
    Ours,
}

impl From<Policy> for MergePolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Reject => MergePolicy::Reject,
            Policy::Theirs => MergePolicy::Theirs,
            Policy::Ours => MergePolicy::Ours,
        }
    }
}

/// Runs the command line with `args` (including the program name) and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e:#}");
            exit_code(&e)
        }
    }
}

/// 2 for validation failures anywhere in the error chain, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> i32 {
    let validation = e.chain().any(|c| {
        c.is::<daedalus_core::Error>()
            || c.is::<SynthError>()
            || c.downcast_ref::<IngestError>().is_some_and(|i| {
                matches!(i, IngestError::Validation(_) | IngestError::Parse { .. })
            })
            || c.downcast_ref::<LabelIoError>()
                .is_some_and(|l| matches!(l, LabelIoError::Store { .. }))
            || c.is::<UsageError>()
    });
    if validation {
        2
    } else {
        1
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Ingest {
            manifest,
            output,
            thumb_edge,
        } => ingest(&manifest, &output, thumb_edge),
        Command::Synth(args) => synth(args),
        Command::Project {
            data,
            attrs,
            alphabet,
            seed,
            neighbors,
            epochs,
            min_dist,
            output,
        } => {
            let config = ProjectionConfig {
                seed,
                n_neighbors: neighbors,
                n_epochs: epochs,
                min_dist,
                ..Default::default()
            };
            project_cmd(&data, attrs, alphabet.as_deref(), &config, &output)
        }
        Command::Layout {
            data,
            attr,
            bins,
            output,
        } => layout_cmd(&data, &attr, bins, &output),
        Command::Labels { action } => labels_cmd(action),
        Command::Serve {
            data,
            port,
            host,
            workers,
        } => serve_cmd(&data, SocketAddr::new(host, port), workers),
        Command::EvalPurity {
            result,
            truth,
            k,
            data,
            json,
        } => eval_cmd(&result, &truth, k, data.as_deref(), json),
    }
}

fn ingest(manifest: &Path, output: &Path, thumb_edge: u32) -> anyhow::Result<()> {
    let dataset = load_dataset(manifest)?;
    let source = manifest_path(manifest)
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    log::info!("{} particles validated", dataset.len());
    write_dataset(&dataset, output)?;
    let same_dir = fs::canonicalize(&source).ok() == fs::canonicalize(output).ok();
    if !same_dir {
        for p in &dataset.particles {
            let (from, to) = (source.join(&p.image), output.join(&p.image));
            if from.is_file() {
                if let Some(parent) = to.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::copy(&from, &to).with_context(|| format!("copying {}", from.display()))?;
            }
        }
    }
    let (store, warnings) = load_images(&dataset, output, thumb_edge)?;
    for w in &warnings {
        log::warn!("missing image, placeholder used: {w}");
    }
    store.save(output)?;
    log::info!(
        "wrote {} ({} thumbnails, {} placeholders)",
        output.display(),
        store.len(),
        warnings.len()
    );
    Ok(())
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let config = if args.reference {
        SynthConfig {
            seed: args.seed,
            image_size: (args.min_size, args.max_size),
            ..SynthConfig::reference()
        }
    } else {
        SynthConfig {
            particles: args.n,
            classes: args.classes,
            lots: args.lots,
            suppliers: args.suppliers,
            image_size: (args.min_size, args.max_size),
            seed: args.seed,
            pinned_lots: args.pinned,
        }
    };
    let corpus = generate_synthetic(&config)?;
    write_corpus(&corpus, &args.output, args.thumb_edge, !args.no_images)?;
    log::info!(
        "wrote {} synthetic particles to {}",
        corpus.dataset.len(),
        args.output.display()
    );
    Ok(())
}

/// Opens the label store of a dataset directory without writing to it.
fn read_labels(data: &Path, dataset: &Dataset) -> anyhow::Result<LabelStore> {
    let dir = data.join(crate::labelio::LABEL_DIR);
    if !dir.exists() {
        return Ok(LabelStore::new(dataset.ids()));
    }
    let (_, labels, warnings) = LabelRepo::open(data, dataset.ids())?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(labels)
}

fn project_cmd(
    data: &Path,
    attrs: Vec<String>,
    alphabet: Option<&str>,
    config: &ProjectionConfig,
    output: &Path,
) -> anyhow::Result<()> {
    let dataset = load_dataset(data)?;
    let attrs = if attrs.is_empty() {
        image_attributes(&dataset.schema)
    } else {
        attrs
    };
    let labels = read_labels(data, &dataset)?;
    let alphabet = alphabet
        .map(|name| labels.alphabet_by_name(name).map(|a| a.id))
        .transpose()?;
    let started = std::time::Instant::now();
    let mut last = 0;
    let mut progress = |epoch: usize, total: usize| {
        let decile = epoch * 10 / total;
        if decile > last {
            last = decile;
            log::info!("epoch {epoch}/{total}");
        }
        true
    };
    let result = project(
        &dataset,
        &labels,
        &attrs,
        alphabet,
        config,
        None,
        &mut progress,
    )?;
    CoordFile::projection(result, &dataset.version()).write(output)?;
    log::info!(
        "projected {} particles in {:.1?} -> {}",
        dataset.len(),
        started.elapsed(),
        output.display()
    );
    Ok(())
}

fn layout_cmd(data: &Path, attr: &str, target_bins: usize, output: &Path) -> anyhow::Result<()> {
    let dataset = load_dataset(data)?;
    let labels = read_labels(data, &dataset)?;
    let key = match dataset.schema.get(attr) {
        Some(_) => FacetKey::attribute(attr),
        None => FacetKey::Alphabet(
            labels
                .alphabet_by_name(attr)
                .map_err(|_| daedalus_core::Error::UnknownAttribute(attr.into()))?
                .id,
        ),
    };
    let bins = match &key {
        FacetKey::Attribute(a) if dataset.schema.require(a)?.kind.is_numeric() => Some(
            bin_numeric_attribute(a, &dataset.numeric_column(a)?, target_bins)?,
        ),
        _ => None,
    };
    let layout = attribute_layout(
        &dataset,
        &labels,
        &key,
        bins.as_ref(),
        &LayoutConfig::default(),
    )?;
    log::info!("{} columns", layout.columns.len());
    CoordFile::layout(&layout, bins, &dataset.version()).write(output)?;
    Ok(())
}

fn labels_cmd(action: LabelsAction) -> anyhow::Result<()> {
    match action {
        LabelsAction::Export { file, data } => {
            let dataset = load_dataset(&data)?;
            let labels = read_labels(&data, &dataset)?;
            if file
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
            {
                let out = fs::File::create(&file)
                    .with_context(|| format!("creating {}", file.display()))?;
                export_csv(&labels, io::BufWriter::new(out))?;
            } else {
                write_atomic(&file, &encode_snapshot(&labels.export_snapshot()))
                    .with_context(|| format!("writing {}", file.display()))?;
            }
            log::info!(
                "exported {} assignments to {}",
                labels.assignments().len(),
                file.display()
            );
        }
        LabelsAction::Import { file, data, policy } => {
            let dataset = load_dataset(&data)?;
            let snapshot = read_snapshot(&file)?;
            let (mut repo, mut labels, _) = LabelRepo::open(&data, dataset.ids())?;
            let who = std::env::var("USER").unwrap_or_else(|_| "cli".into());
            labels.import_snapshot(&snapshot, policy.into(), &Stamp::new(&who, now_ms()))?;
            repo.sync(&labels)?;
            repo.write_snapshot(&labels)?;
            log::info!(
                "imported; store now has {} assignments",
                labels.assignments().len()
            );
        }
    }
    Ok(())
}

fn serve_cmd(data: &Path, addr: SocketAddr, workers: usize) -> anyhow::Result<()> {
    if workers == 0 {
        bail!(UsageError("--workers must be at least 1".into()));
    }
    let (state, warnings) = AppState::open(data, workers)?;
    for w in warnings {
        log::warn!("{w}");
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(service::serve(Arc::new(state), addr))
}

fn eval_cmd(
    result: &Path,
    truth_path: &Path,
    k: usize,
    data: Option<&Path>,
    json: bool,
) -> anyhow::Result<()> {
    let file = CoordFile::read(result).with_context(|| format!("reading {}", result.display()))?;
    let truth = match data {
        Some(dir) => read_truth(truth_path, &load_dataset(dir)?)?,
        None => {
            let mut reader = csv::Reader::from_path(truth_path)
                .with_context(|| format!("reading {}", truth_path.display()))?;
            let names = reader
                .records()
                .map(|r| Ok(r?.get(1).unwrap_or_default().to_string()))
                .collect::<anyhow::Result<Vec<_>>>()?;
            Truth::from_names(&names)
        }
    };
    if truth.classes.len() != file.coordinates.len() {
        bail!(UsageError(format!(
            "{} truth rows for {} coordinates",
            truth.classes.len(),
            file.coordinates.len()
        )));
    }
    if k == 0 || k >= truth.classes.len() {
        bail!(UsageError(format!(
            "k must satisfy 1 <= k < {}",
            truth.classes.len()
        )));
    }
    let purity = embedding_purity(&file.coordinates, &truth.classes, k)?;
    let mut out = io::stdout().lock();
    if json {
        let report = serde_json::json!({ "purity": purity, "k": k, "rows": truth.classes.len(), "classes": truth.names });
        writeln!(out, "{report}")?;
    } else {
        writeln!(out, "{purity:.6}")?;
    }
    Ok(())
}
