use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use base64::Engine;
use clap::{Args, Parser, Subcommand};
use figtab::bench::{
    apply_patches, echo_client, load_named_dataset, load_patches, render_reports, run_eval, ChartType, EvalOptions,
    MetricReport, RecordFilter, ReportFormat, Split, DEFAULT_RESAMPLES,
};
use figtab::export::{export_table, import_csv, import_json, import_tsv, ExportFormat, ExportOptions};
use figtab::metrics::Tolerance;
use figtab::pdf::{detect_figures, write_figures, DetectOptions, PdfDocument, DEFAULT_DPI};
use figtab::table::parse_reply;
use figtab::vlm::{BackendRegistry, PromptKind, PromptProfile, VlmClient};
use figtab_service::ServiceConfig;
use serde_json::json;
use tracing_subscriber::filter::Targets;
use tracing_subscriber::prelude::*;

#[derive(Debug, Parser)]
#[command(name = "figtab", version, about = "Chart figures in PDFs to editable tables")]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Config file (TOML): storage root, backends, default backend, log level.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Backend definitions (TOML or JSON); replaces those from --config.
    #[arg(long, global = true, value_name = "FILE")]
    backends: Option<PathBuf>,
    /// Log filter for stderr, e.g. `info` or `figtab=debug`.
    #[arg(long, global = true, value_name = "FILTER")]
    log_level: Option<String>,
    /// Run the HTTP service; same as the `serve` subcommand.
    #[arg(long)]
    serve: bool,
    #[arg(long, requires = "serve")]
    port: Option<u16>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find captioned figures in a PDF and write one PNG each plus manifest.json.
    Detect {
        #[arg(long)]
        pdf: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DPI)]
        dpi: u32,
    },
    /// Send one chart image to a backend and print the parsed table.
    Extract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        backend: Option<String>,
        #[arg(long, default_value = "simple")]
        prompt: PromptKind,
        /// Also write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a backend on a dataset manifest.
    Eval(EvalArgs),
    /// Convert a table (csv, tsv or json) to another format.
    Export {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        format: ExportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append the per-row confidence column.
        #[arg(long)]
        confidence: bool,
        /// Data-frame name in R output.
        #[arg(long, default_value = "extracted")]
        name: String,
    },
    /// Render one or more saved report JSON files together.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "markdown-table")]
        format: ReportFormat,
    },
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Backend name; `echo` answers every item with its own ground truth.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, default_value = "simple")]
    prompt: PromptKind,
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    /// Write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format printed on stdout (without --json).
    #[arg(long, default_value = "markdown-table")]
    format: ReportFormat,
    /// Ground-truth patch file (JSON lines).
    #[arg(long)]
    patches: Option<PathBuf>,
    #[arg(long = "chart-type", value_delimiter = ',')]
    chart_types: Vec<ChartType>,
    #[arg(long)]
    split: Option<Split>,
    #[arg(long)]
    limit: Option<usize>,
    /// Extraction cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// With the echo backend: scale every numeric cell by 1 + PERTURB.
    #[arg(long, allow_negative_numbers = true)]
    perturb: Option<f64>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    storage_root: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{1}")]
    Op(&'static str, String),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage_error",
            CliError::Op(c, _) => c,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if json {
                println!("{}", json!({ "error": e.code(), "detail": e.to_string() }));
            }
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Op(..) => 1,
            })
        }
    }
}

fn load_config(cli: &Cli) -> Result<ServiceConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ServiceConfig::load(p).map_err(|e| CliError::Op("config_error", e.to_string()))?,
        None => ServiceConfig::new("figtab-data"),
    };
    if let Some(p) = &cli.backends {
        cfg.registry = BackendRegistry::load(p).map_err(|e| CliError::Op("config_error", e.to_string()))?;
    }
    Ok(cfg)
}

/// `--log-level`, then the config file, then `RUST_LOG`, then `warn`.
fn init_logging(filter: Option<&str>) -> Result<(), CliError> {
    let spec = filter
        .map(str::to_string)
        .or_else(|| std::env::var("RUST_LOG").ok())
        .unwrap_or_else(|| "warn".to_string());
    let targets: Targets = spec
        .parse()
        .map_err(|e| CliError::Usage(format!("bad log filter `{spec}`: {e}")))?;
    let _ = tracing_subscriber::registry()
        .with(tracing_subscriber::fmt::layer().with_writer(std::io::stderr))
        .with(targets)
        .try_init();
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Runtime::new().map_err(|e| CliError::Op("runtime_error", e.to_string()))
}

fn print_json(v: &impl serde::Serialize) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(v).map_err(|e| CliError::Op("internal_error", e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn write_stdout(bytes: &[u8]) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Op("io_error", e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Op("io_error", format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli)?;
    init_logging(cli.log_level.as_deref().or(config.log_level.as_deref()))?;
    let json = cli.json;
    let command = match (&cli.command, cli.serve) {
        (Some(_), true) => return Err(CliError::Usage("--serve cannot be combined with a subcommand".into())),
        (None, true) => Command::Serve(ServeArgs {
            port: cli.port.unwrap_or(8080),
            host: "127.0.0.1".into(),
            storage_root: None,
        }),
        (None, false) => return Err(CliError::Usage("no command given; see `figtab --help`".into())),
        (Some(_), false) => cli.command.expect("checked above"),
    };
    match command {
        Command::Detect { pdf, out, dpi } => detect(&pdf, &out, dpi, json),
        Command::Extract {
            image,
            backend,
            prompt,
            out,
        } => extract(&config, &image, backend.as_deref(), prompt, out.as_deref(), json),
        Command::Eval(args) => eval(&config, args, json),
        Command::Export {
            table,
            format,
            out,
            confidence,
            name,
        } => export(&table, format, out.as_deref(), confidence, name, json),
        Command::Report { reports, format } => report(&reports, format, json),
        Command::Serve(args) => serve(config, args, json),
    }
}

fn detect(pdf: &Path, out: &Path, dpi: u32, json: bool) -> Result<(), CliError> {
    let bytes = std::fs::read(pdf).map_err(|e| CliError::Op("io_error", format!("{}: {e}", pdf.display())))?;
    let doc = PdfDocument::open(&bytes).map_err(|e| CliError::Op("malformed_pdf", e.to_string()))?;
    let regions = detect_figures(&doc, &DetectOptions { dpi, ..Default::default() })
        .map_err(|e| CliError::Op("malformed_pdf", e.to_string()))?;
    let source = pdf.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
    let manifest = write_figures(&regions, &source, out).map_err(|e| CliError::Op("io_error", e.to_string()))?;
    if json {
        return print_json(&manifest);
    }
    for f in &manifest.figures {
        let c = f.crop;
        println!(
            "page {:>3}  {:<12} [{:.0}, {:.0}, {:.0}, {:.0}]  {}",
            f.page + 1,
            f.label,
            c.x0,
            c.y0,
            c.x1,
            c.y1,
            f.image_path
        );
    }
    eprintln!("{} figure(s) written to {}", manifest.figures.len(), out.display());
    Ok(())
}

fn extract(
    config: &ServiceConfig,
    image: &Path,
    backend: Option<&str>,
    prompt: PromptKind,
    out: Option<&Path>,
    json: bool,
) -> Result<(), CliError> {
    let cfg = config
        .registry
        .resolve(backend)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .clone();
    let img = image::open(image)
        .map_err(|e| CliError::Op("image_error", format!("{}: {e}", image.display())))?
        .to_rgb8();
    let client = VlmClient::new(cfg).map_err(|e| CliError::Op("config_error", e.to_string()))?;
    let raw = runtime()?
        .block_on(client.extract(&img, &PromptProfile::for_kind(prompt)))
        .map_err(|e| CliError::Op(e.code(), e.to_string()))?;
    let mut table = parse_reply(&raw.response_text).map_err(|e| CliError::Op("empty_table", e.to_string()))?;
    table.source_figure = Some(image.display().to_string());
    if let Some(p) = out {
        let bytes = export_table(&table, ExportFormat::Json, &ExportOptions::default())
            .map_err(|e| CliError::Op("export_error", e.to_string()))?;
        write_file(p, &bytes)?;
    }
    if json {
        print_json(&json!({
            "backend": raw.backend,
            "provider": raw.provider,
            "model_id": raw.model_id,
            "prompt_kind": raw.prompt_kind,
            "latency": raw.latency,
            "attempts": raw.attempts,
            "request_id": raw.request_id,
            "response_text": raw.response_text,
            "table": table.to_json_form(),
            "warnings": table.warnings,
        }))
    } else {
        print!("{}", table.to_tsv());
        Ok(())
    }
}

fn eval(config: &ServiceConfig, args: EvalArgs, json: bool) -> Result<(), CliError> {
    if !(args.tolerance >= 0.0 && args.tolerance.is_finite()) {
        return Err(CliError::Usage(format!("--tolerance must be >= 0, got {}", args.tolerance)));
    }
    if args.parallelism == 0 {
        return Err(CliError::Usage("--parallelism must be at least 1".into()));
    }
    let (dataset, records) =
        load_named_dataset(&args.manifest).map_err(|e| CliError::Op("dataset_error", e.to_string()))?;
    let (records, patch_log) = match &args.patches {
        Some(p) => {
            let patches = load_patches(p).map_err(|e| CliError::Op("patch_error", e.to_string()))?;
            let outcome = apply_patches(records, &patches).map_err(|e| CliError::Op("patch_error", e.to_string()))?;
            (outcome.records, outcome.log)
        }
        None => (records, Vec::new()),
    };
    let records = RecordFilter {
        chart_types: args.chart_types.clone(),
        split: args.split,
        limit: args.limit,
    }
    .apply(records);

    let use_echo = args.backend.as_deref() == Some("echo") && config.registry.get("echo").is_none();
    if args.perturb.is_some() && !use_echo {
        return Err(CliError::Usage("--perturb only applies to the echo backend".into()));
    }
    let client = if use_echo {
        echo_client(&records, args.perturb).map_err(|e| CliError::Op("config_error", e.to_string()))?
    } else {
        let cfg = config
            .registry
            .resolve(args.backend.as_deref())
            .map_err(|e| CliError::Usage(e.to_string()))?;
        VlmClient::new(cfg.clone()).map_err(|e| CliError::Op("config_error", e.to_string()))?
    };
    let options = EvalOptions {
        tolerance: Tolerance {
            relative: args.tolerance,
            ..Default::default()
        },
        seed: args.seed,
        parallelism: args.parallelism,
        resamples: args.resamples,
        cache_dir: args.cache.clone(),
        dataset,
        patch_log,
        ..Default::default()
    };
    let report = runtime()?
        .block_on(run_eval(&records, &client, &PromptProfile::for_kind(args.prompt), &options))
        .map_err(|e| CliError::Op("eval_error", e.to_string()))?;
    if let Some(p) = &args.out {
        write_file(p, &figtab::bench::render_report(&report, ReportFormat::Json))?;
    }
    let format = if json { ReportFormat::Json } else { args.format };
    write_stdout(&figtab::bench::render_report(&report, format))
}

fn read_table(path: &Path) -> Result<figtab::table::DataTable, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Op("io_error", format!("{}: {e}", path.display())))?;
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let parsed = match ext.as_str() {
        "json" => import_json(&bytes),
        "csv" => import_csv(&bytes),
        _ => import_tsv(&bytes),
    };
    parsed.map_err(|e| CliError::Op("table_error", format!("{}: {e}", path.display())))
}

fn export(
    table: &Path,
    format: ExportFormat,
    out: Option<&Path>,
    confidence: bool,
    name: String,
    json: bool,
) -> Result<(), CliError> {
    let t = read_table(table)?;
    let opts = ExportOptions {
        include_confidence: confidence,
        table_name: name,
    };
    let bytes = export_table(&t, format, &opts).map_err(|e| CliError::Op("export_error", e.to_string()))?;
    match (out, json) {
        (Some(p), false) => write_file(p, &bytes),
        (Some(p), true) => {
            write_file(p, &bytes)?;
            print_json(&json!({ "format": format, "out": p, "bytes": bytes.len(), "rows": t.height() }))
        }
        (None, false) => write_stdout(&bytes),
        (None, true) => {
            let (encoding, content) = match String::from_utf8(bytes.clone()) {
                Ok(s) => ("utf-8", s),
                Err(_) => ("base64", base64::engine::general_purpose::STANDARD.encode(&bytes)),
            };
            print_json(&json!({ "format": format, "encoding": encoding, "content": content, "rows": t.height() }))
        }
    }
}

fn report(paths: &[PathBuf], format: ReportFormat, json: bool) -> Result<(), CliError> {
    let reports = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Op("io_error", format!("{}: {e}", p.display())))?;
            serde_json::from_str::<MetricReport>(&text)
                .map_err(|e| CliError::Op("report_error", format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let format = if json { ReportFormat::Json } else { format };
    write_stdout(&render_reports(&reports, format))
}

fn serve(mut config: ServiceConfig, args: ServeArgs, json: bool) -> Result<(), CliError> {
    if let Some(root) = args.storage_root {
        config.storage_root = root;
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad listen address: {e}")))?;
    if json {
        println!("{}", json!({ "listening": addr.to_string(), "storage_root": config.storage_root }));
    } else {
        eprintln!("serving on http://{addr} (storage {})", config.storage_root.display());
    }
    runtime()?
        .block_on(figtab_service::serve(config, addr))
        .map_err(|e| CliError::Op(e.code(), e.to_string()))
}
