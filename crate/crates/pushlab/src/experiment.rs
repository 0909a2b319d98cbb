//! Experiment harness: runs a website x strategy matrix of repeated page
//! loads, aggregates Page Load Time and SpeedIndex into report rows, and
//! emits comparisons against a baseline strategy.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::Archive;
use crate::browser::{compute_metrics, BrowserConfig, Metrics};
use crate::netsim::{run, LinkConfig, RunConfig};
use crate::strategy::{
    generate, validate, CriticalManifest, PushStrategy, StrategyError, StrategyKind, StrategyParams,
};

/// Median of a sample; an even count averages the two middle values.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean: sample standard deviation over sqrt(n).
/// Zero for a single observation.
pub fn stderr(values: &[f64]) -> f64 {
    let n = values.len();
    if n <= 1 || values.iter().all(|v| *v == values[0]) {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Mean with a normal-approximation 95% confidence half-width.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    (mean(values), 1.96 * stderr(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub website: String,
    pub strategy: String,
    /// Completed (non-timeout) runs out of those attempted.
    pub runs: u32,
    pub timeouts: u32,
    pub plt_median: f64,
    pub si_median: f64,
    pub plt_stderr: f64,
    pub si_stderr: f64,
    pub bytes_pushed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plt_mean_ci95: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub si_mean_ci95: Option<(f64, f64)>,
}

/// Relative change of a variant against the baseline strategy on the same
/// website; negative is an improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub website: String,
    pub baseline: String,
    pub variant: String,
    pub delta_plt: f64,
    pub delta_si: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub link: LinkConfig,
    /// Repetitions per cell; seeds are `seed + run_index`.
    pub runs: u32,
    pub seed: u64,
    /// Weight of first visual change in the progress function.
    pub progress_weight: f64,
    pub js_delay_per_byte_ms: f64,
    pub timeout_ms: f64,
    /// Attach mean and 95% CI columns to each row.
    pub report_mean_ci: bool,
}

impl MatrixConfig {
    pub fn new(link: LinkConfig) -> Self {
        MatrixConfig {
            link,
            runs: 31,
            seed: 0,
            progress_weight: 0.5,
            js_delay_per_byte_ms: 0.0,
            timeout_ms: 120_000.0,
            report_mean_ci: false,
        }
    }
}

/// One website under test: its archive, optional critical-resource
/// manifest, and optional push order (defaults to recording order).
pub struct WebsiteInput {
    pub name: String,
    pub archive: Archive,
    pub manifest: Option<CriticalManifest>,
    pub order: Option<Vec<String>>,
}

/// One strategy column: a family to generate per website, or a fully
/// specified strategy applied as-is.
#[derive(Debug, Clone)]
pub enum StrategyInput {
    Generate {
        kind: StrategyKind,
        params: StrategyParams,
    },
    Fixed {
        name: String,
        strategy: PushStrategy,
    },
}

impl StrategyInput {
    pub fn generate(kind: StrategyKind) -> Self {
        StrategyInput::Generate {
            kind,
            params: StrategyParams::default(),
        }
    }

    fn name(&self) -> String {
        match self {
            StrategyInput::Generate { kind, params } => match kind {
                StrategyKind::PushFirstN => {
                    format!("push_first_{}", params.n.unwrap_or(0))
                }
                _ => kind.as_str().to_string(),
            },
            StrategyInput::Fixed { name, .. } => name.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no row for baseline strategy {0}")]
    MissingBaseline(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("simulation failed: {0}")]
    Sim(String),
    #[error("unknown report format {0}")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MatrixReport {
    pub rows: Vec<ReportRow>,
    /// Cells skipped due to strategy violations, with the reasons.
    pub skipped: Vec<String>,
}

fn default_order(archive: &Archive) -> Vec<String> {
    archive
        .base_document()
        .and_then(|base| archive.pushable_set(&base.request.authority).ok())
        .map(|set| set.iter().map(|e| e.url()).collect())
        .unwrap_or_default()
}

/// Run every website x strategy cell. Runs within a cell execute in
/// parallel; results are ordered and seeded deterministically, so repeated
/// invocations produce identical reports.
pub fn run_matrix(
    websites: &[WebsiteInput],
    strategies: &[StrategyInput],
    config: &MatrixConfig,
) -> Result<MatrixReport, ExperimentError> {
    let mut report = MatrixReport::default();
    for website in websites {
        let order = website
            .order
            .clone()
            .unwrap_or_else(|| default_order(&website.archive));
        let above_fold = website
            .manifest
            .as_ref()
            .map(|m| m.above_fold.clone())
            .unwrap_or_default();
        for input in strategies {
            let name = input.name();
            let strategy = match input {
                StrategyInput::Fixed { strategy, .. } => strategy.clone(),
                StrategyInput::Generate { kind, params } => match generate(
                    *kind,
                    params.clone(),
                    &website.archive,
                    &order,
                    website.manifest.as_ref(),
                ) {
                    Ok(s) => s,
                    Err(e) => {
                        report
                            .skipped
                            .push(format!("{} / {}: {}", website.name, name, e));
                        continue;
                    }
                },
            };
            let violations = validate(&strategy, &website.archive);
            if !violations.is_empty() {
                let reasons: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                report.skipped.push(format!(
                    "{} / {}: {}",
                    website.name,
                    name,
                    reasons.join("; ")
                ));
                continue;
            }

            let results: Vec<Result<(Metrics, u64), String>> = (0..config.runs)
                .into_par_iter()
                .map(|i| {
                    let run_config = RunConfig {
                        link: config.link,
                        browser: BrowserConfig {
                            js_delay_per_byte_ms: config.js_delay_per_byte_ms,
                            progress_weight: config.progress_weight,
                        },
                        seed: config.seed + i as u64,
                        timeout_ms: config.timeout_ms,
                    };
                    run(&website.archive, &strategy, &run_config)
                        .map(|t| {
                            let m = compute_metrics(&t, &above_fold, config.progress_weight);
                            (m, t.bytes_pushed())
                        })
                        .map_err(|e| e.to_string())
                })
                .collect();

            let mut plts = Vec::new();
            let mut sis = Vec::new();
            let mut pushed = Vec::new();
            let mut timeouts = 0;
            for result in results {
                let (metrics, bytes) = result.map_err(ExperimentError::Sim)?;
                match (metrics.timed_out, metrics.plt_ms, metrics.speed_index_ms) {
                    (false, Some(plt), Some(si)) => {
                        plts.push(plt);
                        sis.push(si);
                        pushed.push(bytes);
                    }
                    _ => timeouts += 1,
                }
            }
            report.rows.push(ReportRow {
                website: website.name.clone(),
                strategy: name,
                runs: plts.len() as u32,
                timeouts,
                plt_median: median(&plts),
                si_median: median(&sis),
                plt_stderr: stderr(&plts),
                si_stderr: stderr(&sis),
                bytes_pushed: pushed.first().copied().unwrap_or(0),
                plt_mean_ci95: config.report_mean_ci.then(|| mean_ci95(&plts)),
                si_mean_ci95: config.report_mean_ci.then(|| mean_ci95(&sis)),
            });
        }
    }
    Ok(report)
}

/// Relative deltas of every strategy against `baseline` per website.
pub fn compare(rows: &[ReportRow], baseline: &str) -> Result<Vec<Comparison>, ExperimentError> {
    let mut by_site: BTreeMap<&str, Vec<&ReportRow>> = BTreeMap::new();
    for row in rows {
        by_site.entry(&row.website).or_default().push(row);
    }
    let mut comparisons = Vec::new();
    for (site, site_rows) in by_site {
        let base = site_rows
            .iter()
            .find(|r| r.strategy == baseline)
            .ok_or_else(|| ExperimentError::MissingBaseline(format!("{baseline} on {site}")))?;
        for row in &site_rows {
            if row.strategy == baseline {
                continue;
            }
            comparisons.push(Comparison {
                website: site.to_string(),
                baseline: baseline.to_string(),
                variant: row.strategy.clone(),
                delta_plt: (row.plt_median - base.plt_median) / base.plt_median,
                delta_si: (row.si_median - base.si_median) / base.si_median,
            });
        }
    }
    Ok(comparisons)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    /// Per-strategy cumulative distribution of SpeedIndex deltas, for
    /// plotting tools.
    PlotData,
}

impl std::str::FromStr for ReportFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "plotdata" => Ok(ReportFormat::PlotData),
            other => Err(ExperimentError::UnknownFormat(other.to_string())),
        }
    }
}

pub fn emit_report(
    report: &MatrixReport,
    comparisons: &[Comparison],
    format: ReportFormat,
) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(
                "website,strategy,runs,timeouts,plt_median_ms,si_median_ms,plt_stderr_ms,si_stderr_ms,bytes_pushed\n",
            );
            for row in &report.rows {
                out.push_str(&format!(
                    "{},{},{},{},{:.3},{:.3},{:.3},{:.3},{}\n",
                    row.website,
                    row.strategy,
                    row.runs,
                    row.timeouts,
                    row.plt_median,
                    row.si_median,
                    row.plt_stderr,
                    row.si_stderr,
                    row.bytes_pushed,
                ));
            }
            out
        }
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct Full<'a> {
                rows: &'a [ReportRow],
                comparisons: &'a [Comparison],
                skipped: &'a [String],
            }
            serde_json::to_string_pretty(&Full {
                rows: &report.rows,
                comparisons,
                skipped: &report.skipped,
            })
            .unwrap()
        }
        ReportFormat::PlotData => {
            let mut by_strategy: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for c in comparisons {
                by_strategy.entry(&c.variant).or_default().push(c.delta_si);
            }
            let mut out = String::from("strategy delta_si cum_frac\n");
            for (strategy, mut deltas) in by_strategy {
                deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let n = deltas.len() as f64;
                for (i, d) in deltas.iter().enumerate() {
                    out.push_str(&format!(
                        "{} {:.6} {:.6}\n",
                        strategy,
                        d,
                        (i + 1) as f64 / n
                    ));
                }
            }
            out
        }
    }
}
