//! Command-line front end: archive import, push-order computation, strategy
//! generation and validation, matrix runs, and report emission.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime error.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use pushlab::archive::{import_har, Archive, ResourceType};
use pushlab::experiment::{
    compare, emit_report, run_matrix, MatrixConfig, ReportFormat, ReportRow, StrategyInput,
    WebsiteInput,
};
use pushlab::netsim::{configure_presets, LinkConfig};
use pushlab::strategy::{
    compute_push_order, generate, validate, CriticalManifest, PushStrategy, RunTrace, StrategyKind,
    StrategyParams,
};

#[derive(Parser)]
#[command(
    name = "pushlab",
    about = "Deterministic HTTP/2 server-push laboratory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Import a HAR capture into an archive file.
    Import(ImportArgs),
    /// Compute a push order from recorded run traces.
    Order(OrderArgs),
    /// Generate a push strategy for an archive.
    Strategy(StrategyArgs),
    /// Check a strategy against an archive.
    Validate(ValidateArgs),
    /// Run a website x strategy matrix and emit a report.
    Run(RunArgs),
    /// Compare report rows against a baseline strategy.
    Compare(CompareArgs),
}

#[derive(Args)]
struct ImportArgs {
    /// HAR file to import.
    #[arg(long)]
    har: PathBuf,
    /// JSON object mapping authority to server IP, for entries without one.
    #[arg(long)]
    ip_map: Option<PathBuf>,
    /// Output archive path (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OrderArgs {
    /// JSON file holding an array of run traces.
    #[arg(long)]
    traces: PathBuf,
    /// Write the order as JSON instead of printing one URL per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StrategyArgs {
    #[arg(long)]
    archive: PathBuf,
    /// Strategy family, e.g. no_push, push_all, push_first_n, push_by_type.
    #[arg(long)]
    kind: String,
    /// Prefix length for push_first_n.
    #[arg(long)]
    n: Option<u32>,
    /// Comma-separated resource types for push_by_type.
    #[arg(long)]
    types: Option<String>,
    /// Critical-resource manifest (required by critical/optimized kinds).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Push order as a JSON array of URLs; defaults to recording order.
    #[arg(long)]
    order: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    archive: PathBuf,
    #[arg(long)]
    strategy: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Matrix configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Report format: csv, json, or plotdata.
    #[arg(long, default_value = "json")]
    format: String,
    /// Baseline strategy for comparisons.
    #[arg(long, default_value = "no_push")]
    baseline: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Report rows as JSON (the `rows` array of a json report).
    #[arg(long)]
    rows: PathBuf,
    #[arg(long, default_value = "no_push")]
    baseline: String,
}

/// Matrix configuration file.
#[derive(Deserialize)]
struct MatrixFile {
    websites: Vec<WebsiteEntry>,
    strategies: Vec<StrategyEntry>,
    #[serde(default)]
    link_preset: Option<String>,
    #[serde(default)]
    link: Option<LinkConfig>,
    #[serde(default)]
    runs: Option<u32>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    jitter_ms: Option<f64>,
    #[serde(default)]
    progress_weight: Option<f64>,
    #[serde(default)]
    js_delay_per_byte_ms: Option<f64>,
    #[serde(default)]
    timeout_ms: Option<f64>,
    #[serde(default)]
    report_mean_ci: bool,
}

#[derive(Deserialize)]
struct WebsiteEntry {
    name: String,
    archive: PathBuf,
    #[serde(default)]
    manifest: Option<PathBuf>,
    /// JSON array of URLs overriding the push order.
    #[serde(default)]
    order: Option<PathBuf>,
}

#[derive(Deserialize)]
struct StrategyEntry {
    #[serde(default)]
    kind: Option<StrategyKind>,
    #[serde(default)]
    n: Option<u32>,
    #[serde(default)]
    types: Option<BTreeSet<ResourceType>>,
    /// Fully specified strategy file (kind may be omitted).
    #[serde(default)]
    file: Option<PathBuf>,
    #[serde(default)]
    name: Option<String>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_types(spec: &str) -> Result<BTreeSet<ResourceType>, String> {
    spec.split(',')
        .map(|t| match t.trim() {
            "html" => Ok(ResourceType::Html),
            "css" => Ok(ResourceType::Css),
            "js" => Ok(ResourceType::Js),
            "image" => Ok(ResourceType::Image),
            "font" => Ok(ResourceType::Font),
            "other" => Ok(ResourceType::Other),
            bad => Err(format!("unknown resource type {bad}")),
        })
        .collect()
}

fn default_order(archive: &Archive) -> Vec<String> {
    archive
        .base_document()
        .and_then(|base| archive.pushable_set(&base.request.authority).ok())
        .map(|set| set.iter().map(|e| e.url()).collect())
        .unwrap_or_default()
}

fn cmd_import(args: &ImportArgs) -> Result<u8, String> {
    let har = std::fs::read_to_string(&args.har)
        .map_err(|e| format!("cannot read {}: {e}", args.har.display()))?;
    let ip_map: Option<BTreeMap<String, String>> = match &args.ip_map {
        Some(path) => Some(read_json(path)?),
        None => None,
    };
    let (archive, warnings) =
        import_har(&har, ip_map.as_ref()).map_err(|e| format!("import failed: {e}"))?;
    for warning in &warnings {
        eprintln!("warning: {}", warning.0);
    }
    archive
        .save(&args.out)
        .map_err(|e| format!("cannot save archive: {e}"))?;
    println!(
        "imported {} exchanges across {} origin groups",
        archive.exchanges().len(),
        archive.groups().count()
    );
    Ok(0)
}

fn cmd_order(args: &OrderArgs) -> Result<u8, String> {
    let traces: Vec<RunTrace> = read_json(&args.traces)?;
    let order = compute_push_order(&traces).map_err(|e| e.to_string())?;
    match &args.out {
        Some(path) => write_or_print(Some(path), &serde_json::to_string_pretty(&order).unwrap())?,
        None => {
            for url in &order {
                println!("{url}");
            }
        }
    }
    Ok(0)
}

fn cmd_strategy(args: &StrategyArgs) -> Result<u8, String> {
    let archive = Archive::load(&args.archive).map_err(|e| e.to_string())?;
    let kind: StrategyKind = serde_json::from_value(serde_json::Value::String(args.kind.clone()))
        .map_err(|_| format!("unknown strategy kind {}", args.kind))?;
    let manifest: Option<CriticalManifest> = match &args.manifest {
        Some(path) => Some(read_json(path)?),
        None => None,
    };
    let order: Vec<String> = match &args.order {
        Some(path) => read_json(path)?,
        None => default_order(&archive),
    };
    let params = StrategyParams {
        n: args.n,
        types: match &args.types {
            Some(spec) => parse_types(spec)?,
            None => BTreeSet::new(),
        },
    };
    let strategy =
        generate(kind, params, &archive, &order, manifest.as_ref()).map_err(|e| e.to_string())?;
    write_or_print(
        Some(&args.out),
        &serde_json::to_string_pretty(&strategy).unwrap(),
    )?;
    eprintln!(
        "wrote {} ({} directives)",
        args.out.display(),
        strategy.directives.len()
    );
    Ok(0)
}

fn cmd_validate(args: &ValidateArgs) -> Result<u8, String> {
    let archive = Archive::load(&args.archive).map_err(|e| e.to_string())?;
    let strategy: PushStrategy = read_json(&args.strategy)?;
    let violations = validate(&strategy, &archive);
    if violations.is_empty() {
        println!("ok");
        Ok(0)
    } else {
        for violation in &violations {
            eprintln!("violation: {violation}");
        }
        Ok(1)
    }
}

fn cmd_run(args: &RunArgs) -> Result<u8, String> {
    let matrix: MatrixFile = read_json(&args.config)?;
    let mut link = match (&matrix.link, &matrix.link_preset) {
        (Some(link), _) => *link,
        (None, Some(preset)) => *configure_presets()
            .get(preset)
            .ok_or_else(|| format!("unknown link preset {preset}"))?,
        (None, None) => configure_presets()["dsl"],
    };
    if let Some(jitter) = matrix.jitter_ms {
        link.jitter_ms = jitter;
    }

    let mut config = MatrixConfig::new(link);
    if let Some(runs) = matrix.runs {
        config.runs = runs;
    }
    if let Some(seed) = matrix.seed {
        config.seed = seed;
    }
    if let Ok(seed) = std::env::var("PUSHLAB_SEED") {
        config.seed = seed
            .parse()
            .map_err(|_| format!("PUSHLAB_SEED is not an integer: {seed}"))?;
    }
    if let Some(w) = matrix.progress_weight {
        config.progress_weight = w;
    }
    if let Some(delay) = matrix.js_delay_per_byte_ms {
        config.js_delay_per_byte_ms = delay;
    }
    if let Some(timeout) = matrix.timeout_ms {
        config.timeout_ms = timeout;
    }
    config.report_mean_ci = matrix.report_mean_ci;

    let mut websites = Vec::new();
    for entry in &matrix.websites {
        let archive = Archive::load(&entry.archive).map_err(|e| e.to_string())?;
        let manifest: Option<CriticalManifest> = match &entry.manifest {
            Some(path) => Some(read_json(path)?),
            None => None,
        };
        let order: Option<Vec<String>> = match &entry.order {
            Some(path) => Some(read_json(path)?),
            None => None,
        };
        websites.push(WebsiteInput {
            name: entry.name.clone(),
            archive,
            manifest,
            order,
        });
    }

    let mut strategies = Vec::new();
    for entry in &matrix.strategies {
        if let Some(path) = &entry.file {
            let strategy: PushStrategy = read_json(path)?;
            let name = entry
                .name
                .clone()
                .unwrap_or_else(|| strategy.kind.as_str().to_string());
            strategies.push(StrategyInput::Fixed { name, strategy });
        } else {
            let kind = entry
                .kind
                .ok_or_else(|| "strategy entry needs a kind or a file".to_string())?;
            strategies.push(StrategyInput::Generate {
                kind,
                params: StrategyParams {
                    n: entry.n,
                    types: entry.types.clone().unwrap_or_default(),
                },
            });
        }
    }

    let report = run_matrix(&websites, &strategies, &config).map_err(|e| e.to_string())?;
    for skipped in &report.skipped {
        eprintln!("skipped: {skipped}");
    }
    let format: ReportFormat = args
        .format
        .parse()
        .map_err(|e: pushlab::experiment::ExperimentError| e.to_string())?;
    let comparisons = if report.rows.iter().any(|r| r.strategy == args.baseline) {
        compare(&report.rows, &args.baseline).map_err(|e| e.to_string())?
    } else {
        Vec::new()
    };
    write_or_print(
        args.out.as_deref(),
        &emit_report(&report, &comparisons, format),
    )?;
    Ok(if report.skipped.is_empty() { 0 } else { 1 })
}

fn cmd_compare(args: &CompareArgs) -> Result<u8, String> {
    let rows: Vec<ReportRow> = read_json(&args.rows)?;
    let comparisons = compare(&rows, &args.baseline).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&comparisons).unwrap());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Import(args) => cmd_import(args),
        Command::Order(args) => cmd_order(args),
        Command::Strategy(args) => cmd_strategy(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
