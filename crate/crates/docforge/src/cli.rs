//! The `docforge` command line.

use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use docforge_core::corrector::{build_index, DEFAULT_NGRAM_SIZE};
use docforge_core::doc_model::split_dataset;
use docforge_core::text_metrics::{evaluate_ocr, EvalOptions};
use docforge_core::FieldKind;

use crate::annotation_io::write_manifest;
use crate::backend::BackendKind;
use crate::index_store::save_index;
use crate::pipeline::{
    connect, detection_run_markdown, load_gazetteer_files, ocr_markdown, run_detection,
    run_markdown, run_pipeline, to_json, write_reports, LoadedConfig, Overrides, PipelineConfig,
    PipelineError, ReportFormat, Stage,
};

#[derive(Debug, Parser)]
#[command(name = "docforge", version, about = "Handwritten form field extraction toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration file.
    #[arg(long, global = true, env = "DOCFORGE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Backend kind, overriding the configuration.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for per-document processing.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Seed for dataset splitting.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition annotated documents into train/validation/test.
    Split {
        /// Directory of LabelMe annotation files; each `<doc_id>.json` is one document.
        #[arg(long)]
        annotations: PathBuf,
        /// Fraction of all documents held out for testing.
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        /// Fraction of the remaining documents used for validation.
        #[arg(long, default_value_t = 0.3)]
        validation_fraction: f64,
    },
    /// Score field detection on the configured split.
    EvaluateDetection,
    /// Run detection, recognition, correction and evaluation.
    Run,
    /// Build a TF-IDF index from gazetteer files.
    BuildGazetteer {
        /// Field the gazetteer belongs to.
        #[arg(long)]
        field: String,
        #[arg(long, default_value_t = DEFAULT_NGRAM_SIZE)]
        ngram_size: usize,
        /// Index file to write; defaults to `<out>/<field>.index.json`.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Score transcriptions given as `field<TAB>reference<TAB>hypothesis` lines.
    EvaluateOcr {
        input: PathBuf,
        #[arg(long)]
        case_insensitive: bool,
    },
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Config = 1,
    Backend = 2,
    PartialFailure = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn config_error(e: impl fmt::Display) -> CliError {
    CliError {
        exit: Exit::Config,
        message: e.to_string(),
    }
}

fn backend_error(e: impl fmt::Display) -> CliError {
    CliError {
        exit: Exit::Backend,
        message: e.to_string(),
    }
}

/// Runs a parsed command. `Ok` carries a non-fatal exit status, i.e. success
/// or partial document failure with reports written.
pub fn execute(cli: Cli) -> Result<Exit, CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Split {
            annotations,
            test_fraction,
            validation_fraction,
        } => cmd_split(g, &annotations, test_fraction, validation_fraction),
        Command::EvaluateDetection => cmd_evaluate_detection(g),
        Command::Run => cmd_run(g),
        Command::BuildGazetteer {
            field,
            ngram_size,
            output,
            files,
        } => cmd_build_gazetteer(g, &field, ngram_size, output, &files),
        Command::EvaluateOcr {
            input,
            case_insensitive,
        } => cmd_evaluate_ocr(g, &input, case_insensitive),
    }
}

fn workers(g: &GlobalArgs) -> usize {
    g.workers
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
}

fn load_config(g: &GlobalArgs) -> Result<LoadedConfig, CliError> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| config_error("this command needs --config"))?;
    let overrides = Overrides {
        backend_kind: g.backend,
        output_dir: g.out.clone(),
        ..Overrides::from_env()
    };
    PipelineConfig::load(path, &overrides).map_err(config_error)
}

/// `path` expressed relative to directory `from`; both must be absolute.
fn relative_to(path: &Path, from: &Path) -> PathBuf {
    let p: Vec<Component> = path.components().collect();
    let f: Vec<Component> = from.components().collect();
    let common = p.iter().zip(&f).take_while(|(a, b)| a == b).count();
    let mut out = PathBuf::new();
    for _ in common..f.len() {
        out.push("..");
    }
    for c in &p[common..] {
        out.push(c);
    }
    out
}

fn cmd_split(g: &GlobalArgs, dir: &Path, test: f64, val: f64) -> Result<Exit, CliError> {
    let listing = fs::read_dir(dir)
        .map_err(|e| config_error(format!("annotation directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = listing
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().and_then(|e| e.to_str()) == Some("json"))
        .collect();
    files.sort();
    let ids: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(str::to_string))
        .collect();
    let mut manifest = split_dataset(&ids, test, val, g.seed).map_err(config_error)?;

    let out_dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(config_error)?;
    let out_abs = out_dir.canonicalize().map_err(config_error)?;
    let ann_abs = dir.canonicalize().map_err(config_error)?;
    let ann_rel = relative_to(&ann_abs, &out_abs);
    for e in &mut manifest.entries {
        let p = ann_rel.join(format!("{}.json", e.doc_id));
        e.annotation = Some(p.to_string_lossy().replace('\\', "/"));
    }
    let path = out_dir.join("manifest.json");
    fs::write(&path, write_manifest(&manifest)).map_err(config_error)?;
    use docforge_core::doc_model::Split;
    println!(
        "{} documents: {} train, {} validation, {} test -> {}",
        manifest.entries.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Validation),
        manifest.count(Split::Test),
        path.display()
    );
    Ok(Exit::Success)
}

fn cmd_evaluate_detection(g: &GlobalArgs) -> Result<Exit, CliError> {
    let cfg = load_config(g)?;
    let backend = connect(&cfg.config.backend).map_err(backend_error)?;
    let report = match run_detection(&cfg, backend.as_ref(), workers(g)) {
        Ok(r) => r,
        Err(PipelineError::Detection(failures)) => {
            let mut msg = format!("detection aborted; {} document(s) failed:", failures.len());
            for f in &failures {
                msg.push_str(&format!("\n  {}: {}", f.doc_id, f.error));
            }
            let exit = if failures.iter().all(|f| f.stage == Stage::Annotation) {
                Exit::Config
            } else {
                Exit::Backend
            };
            return Err(CliError { exit, message: msg });
        }
        Err(e) => return Err(config_error(e)),
    };
    let written = write_reports(
        &cfg.config.output.dir,
        &cfg.config.output.formats,
        "detection",
        &to_json(&report),
        &detection_run_markdown(&report),
    )
    .map_err(config_error)?;
    if cfg.config.output.formats.contains(&ReportFormat::Markdown) {
        print!("{}", crate::pipeline::detection_markdown(&report.detection));
    }
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(Exit::Success)
}

fn cmd_run(g: &GlobalArgs) -> Result<Exit, CliError> {
    let cfg = load_config(g)?;
    let backend = connect(&cfg.config.backend).map_err(backend_error)?;
    let report = run_pipeline(&cfg, backend.as_ref(), workers(g)).map_err(config_error)?;
    let written = write_reports(
        &cfg.config.output.dir,
        &cfg.config.output.formats,
        "run_report",
        &to_json(&report),
        &run_markdown(&report),
    )
    .map_err(config_error)?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    println!(
        "{} document(s) evaluated, {} corrected field(s), {} failure(s)",
        report.documents,
        report.correction_log.len(),
        report.failures.len()
    );
    if report.failures.is_empty() {
        return Ok(Exit::Success);
    }
    for f in &report.failures {
        eprintln!("{}: {}", f.doc_id, f.error);
    }
    if report.documents == 0 && report.failures.iter().all(|f| f.backend_wide) {
        Err(backend_error("backend failed for every document"))
    } else {
        Ok(Exit::PartialFailure)
    }
}

fn cmd_build_gazetteer(
    g: &GlobalArgs,
    field: &str,
    ngram_size: usize,
    output: Option<PathBuf>,
    files: &[PathBuf],
) -> Result<Exit, CliError> {
    let kind = FieldKind::parse(field).map_err(config_error)?;
    let records = load_gazetteer_files(files, &kind).map_err(config_error)?;
    let index = build_index(&records, ngram_size).map_err(config_error)?;
    let path = output.unwrap_or_else(|| {
        g.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("."))
            .join(format!("{}.index.json", kind.label()))
    });
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(config_error)?;
    }
    fs::write(&path, save_index(&index)).map_err(config_error)?;
    println!(
        "indexed {} entries for {} ({}-grams) -> {}",
        index.len(),
        kind,
        ngram_size,
        path.display()
    );
    for e in index.unreachable_entries() {
        eprintln!(
            "warning: entry {:?} is shorter than {} characters and can never be retrieved",
            e.text, ngram_size
        );
    }
    Ok(Exit::Success)
}

fn cmd_evaluate_ocr(g: &GlobalArgs, input: &Path, case_insensitive: bool) -> Result<Exit, CliError> {
    let content = fs::read_to_string(input)
        .map_err(|e| config_error(format!("{}: {e}", input.display())))?;
    let mut rows = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [field, reference, hypothesis] = cols[..] else {
            return Err(config_error(format!(
                "{} line {}: expected field, reference and hypothesis separated by tabs",
                input.display(),
                i + 1
            )));
        };
        let kind = FieldKind::parse(field)
            .map_err(|e| config_error(format!("{} line {}: {e}", input.display(), i + 1)))?;
        rows.push((kind, reference.to_string(), hypothesis.to_string()));
    }
    let table = evaluate_ocr(&rows, EvalOptions { case_insensitive })
        .map_err(|e| config_error(format!("{}: {e}", input.display())))?;
    let md = ocr_markdown(&table);
    print!("{md}");
    if let Some(dir) = &g.out {
        write_reports(dir, &[ReportFormat::Json, ReportFormat::Markdown], "ocr", &to_json(&table), &md)
            .map_err(config_error)?;
    }
    Ok(Exit::Success)
}
