//! Push strategies: declarative push directives, push-order computation from
//! traced runs, the strategy families used in the evaluation, and the
//! critical-CSS HTML rewrite.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{Archive, ResourceType};
use crate::html;

/// One resource to push: where in the order, and optionally at which byte
/// offset of the parent body (absent = push at parent start under default
/// scheduling).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushDirective {
    #[serde(rename = "url")]
    pub resource_url: String,
    pub rank: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interleave_offset: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    NoPush,
    NoPushOptimized,
    PushAll,
    PushAllOptimized,
    PushFirstN,
    PushByType,
    PushCritical,
    PushCriticalOptimized,
    Custom,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::NoPush => "no_push",
            StrategyKind::NoPushOptimized => "no_push_optimized",
            StrategyKind::PushAll => "push_all",
            StrategyKind::PushAllOptimized => "push_all_optimized",
            StrategyKind::PushFirstN => "push_first_n",
            StrategyKind::PushByType => "push_by_type",
            StrategyKind::PushCritical => "push_critical",
            StrategyKind::PushCriticalOptimized => "push_critical_optimized",
            StrategyKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub types: BTreeSet<ResourceType>,
}

/// Move non-critical stylesheets out of the head: the critical CSS becomes
/// the first stylesheet in the head, demoted sheets move to the end of the
/// body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalCssRewrite {
    pub critical_css_url: String,
    pub demoted_css_urls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushStrategy {
    pub kind: StrategyKind,
    #[serde(default)]
    pub params: StrategyParams,
    #[serde(default)]
    pub directives: Vec<PushDirective>,
    #[serde(rename = "rewrite", skip_serializing_if = "Option::is_none")]
    pub html_rewrite: Option<CriticalCssRewrite>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_path: Option<String>,
}

impl PushStrategy {
    pub fn no_push() -> Self {
        PushStrategy {
            kind: StrategyKind::NoPush,
            params: StrategyParams::default(),
            directives: Vec::new(),
            html_rewrite: None,
            manifest_path: None,
        }
    }

    pub fn uses_interleaving(&self) -> bool {
        self.directives
            .iter()
            .any(|d| d.interleave_offset.is_some())
    }
}

/// One critical resource from the manifest: push it, optionally at a byte
/// offset of the parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestResource {
    pub url: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interleave_offset: Option<u64>,
}

/// Human-authored description of above-the-fold content for one page:
/// ordered critical resources, the critical-CSS rewrite, and the resource
/// set the SpeedIndex proxy weighs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalManifest {
    #[serde(default)]
    pub resources: Vec<ManifestResource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewrite: Option<CriticalCssRewrite>,
    #[serde(default)]
    pub above_fold: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StrategyError {
    #[error("no traces provided")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("strategy kind {0} requires a critical-resource manifest")]
    MissingManifest(&'static str),
}

// ---------------------------------------------------------------------------
// Push-order computation from traced runs
// ---------------------------------------------------------------------------

/// One traced resource request: its parent in the browser's priority tree
/// (None = the tree root), the assigned weight, and when it was requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub resource_url: String,
    pub parent: Option<String>,
    pub weight: u16,
    pub request_time_ms: f64,
}

/// An ordered request trace from one run; the first entry is the base
/// document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub entries: Vec<TraceEntry>,
}

/// Per-trace rank: depth-first traversal of the dependency tree, children
/// visited in descending weight, insertion order on equal weights.
fn trace_ranks(trace: &RunTrace) -> BTreeMap<String, usize> {
    let mut children: BTreeMap<Option<&str>, Vec<&TraceEntry>> = BTreeMap::new();
    let urls: BTreeSet<&str> = trace
        .entries
        .iter()
        .map(|e| e.resource_url.as_str())
        .collect();
    for entry in &trace.entries {
        // Parents not present in the trace collapse to the root.
        let parent = entry
            .parent
            .as_deref()
            .filter(|p| urls.contains(p) && *p != entry.resource_url);
        children.entry(parent).or_default().push(entry);
    }
    for list in children.values_mut() {
        // Stable sort keeps insertion order among equal weights.
        list.sort_by_key(|e| std::cmp::Reverse(e.weight));
    }

    let mut ranks = BTreeMap::new();
    let mut stack: Vec<&TraceEntry> = children
        .get(&None)
        .map(|roots| roots.iter().rev().copied().collect())
        .unwrap_or_default();
    while let Some(entry) = stack.pop() {
        if ranks.contains_key(&entry.resource_url) {
            continue;
        }
        ranks.insert(entry.resource_url.clone(), ranks.len());
        if let Some(kids) = children.get(&Some(entry.resource_url.as_str())) {
            stack.extend(kids.iter().rev());
        }
    }
    ranks
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

/// Compute the push order across repeated traced runs. Each resource's final
/// rank is the median of its per-trace traversal ranks (the majority-vote
/// stand-in), ties broken by earliest mean request time, then URL. The base
/// document is excluded from the output.
pub fn compute_push_order(traces: &[RunTrace]) -> Result<Vec<String>, StrategyError> {
    if traces.is_empty() || traces.iter().all(|t| t.entries.is_empty()) {
        return Err(StrategyError::EmptyInput);
    }
    let base = traces
        .iter()
        .find(|t| !t.entries.is_empty())
        .map(|t| t.entries[0].resource_url.clone())
        .unwrap();

    let mut ranks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut times: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for trace in traces {
        for (url, rank) in trace_ranks(trace) {
            ranks.entry(url).or_default().push(rank);
        }
        for entry in &trace.entries {
            times
                .entry(entry.resource_url.clone())
                .or_default()
                .push(entry.request_time_ms);
        }
    }

    let mut scored: Vec<(f64, f64, String)> = ranks
        .into_iter()
        .filter(|(url, _)| *url != base)
        .map(|(url, mut rs)| {
            rs.sort_unstable();
            let t = &times[&url];
            let mean_time = t.iter().sum::<f64>() / t.len() as f64;
            (median(&rs), mean_time, url)
        })
        .collect();
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
            .then(a.2.cmp(&b.2))
    });
    Ok(scored.into_iter().map(|(_, _, url)| url).collect())
}

// ---------------------------------------------------------------------------
// Strategy generation
// ---------------------------------------------------------------------------

fn directives_from_order<'a>(urls: impl Iterator<Item = &'a str>) -> Vec<PushDirective> {
    urls.enumerate()
        .map(|(i, url)| PushDirective {
            resource_url: url.to_string(),
            rank: i as u32 + 1,
            interleave_offset: None,
        })
        .collect()
}

fn directives_from_manifest(manifest: &CriticalManifest) -> Vec<PushDirective> {
    manifest
        .resources
        .iter()
        .enumerate()
        .map(|(i, r)| PushDirective {
            resource_url: r.url.clone(),
            rank: i as u32 + 1,
            interleave_offset: r.interleave_offset,
        })
        .collect()
}

/// Generate a strategy of the given family. `order` is the computed push
/// order over pushable resources; critical kinds draw their directives from
/// the manifest instead.
pub fn generate(
    kind: StrategyKind,
    params: StrategyParams,
    archive: &Archive,
    order: &[String],
    manifest: Option<&CriticalManifest>,
) -> Result<PushStrategy, StrategyError> {
    let need_manifest = || manifest.ok_or(StrategyError::MissingManifest(kind.as_str()));
    let directives = match kind {
        StrategyKind::NoPush => Vec::new(),
        StrategyKind::NoPushOptimized => {
            need_manifest()?;
            Vec::new()
        }
        StrategyKind::PushAll => directives_from_order(order.iter().map(String::as_str)),
        StrategyKind::PushAllOptimized => {
            // Critical resources first (interleaved per manifest), then the
            // rest of the computed order after the parent completes.
            let manifest = need_manifest()?;
            let mut directives = directives_from_manifest(manifest);
            let critical: BTreeSet<&str> =
                manifest.resources.iter().map(|r| r.url.as_str()).collect();
            let next_rank = directives.len() as u32 + 1;
            directives.extend(
                order
                    .iter()
                    .filter(|u| !critical.contains(u.as_str()))
                    .enumerate()
                    .map(|(i, url)| PushDirective {
                        resource_url: url.clone(),
                        rank: next_rank + i as u32,
                        interleave_offset: None,
                    }),
            );
            directives
        }
        StrategyKind::PushFirstN => {
            let n = params
                .n
                .filter(|&n| n > 0)
                .ok_or_else(|| StrategyError::InvalidParam("push_first_n requires n > 0".into()))?;
            directives_from_order(order.iter().take(n as usize).map(String::as_str))
        }
        StrategyKind::PushByType => {
            if params.types.is_empty() {
                return Err(StrategyError::InvalidParam(
                    "push_by_type requires a non-empty type set".into(),
                ));
            }
            directives_from_order(order.iter().map(String::as_str).filter(|url| {
                archive
                    .find_by_url(url)
                    .map(|e| params.types.contains(&e.resource_type))
                    .unwrap_or(false)
            }))
        }
        StrategyKind::PushCritical | StrategyKind::PushCriticalOptimized => {
            directives_from_manifest(need_manifest()?)
        }
        StrategyKind::Custom => {
            return Err(StrategyError::InvalidParam(
                "custom strategies are authored as files, not generated".into(),
            ));
        }
    };
    let html_rewrite = match kind {
        StrategyKind::NoPushOptimized
        | StrategyKind::PushAllOptimized
        | StrategyKind::PushCriticalOptimized => {
            let manifest = need_manifest()?;
            manifest.rewrite.clone()
        }
        _ => None,
    };
    Ok(PushStrategy {
        kind,
        params,
        directives,
        html_rewrite,
        manifest_path: None,
    })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    Unpushable {
        url: String,
    },
    OffsetBeyondParent {
        url: String,
        offset: u64,
        parent_len: u64,
    },
    DuplicateRank {
        rank: u32,
    },
    UnknownResource {
        url: String,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Unpushable { url } => {
                write!(f, "{url} is beyond the pushing server's authority")
            }
            Violation::OffsetBeyondParent {
                url,
                offset,
                parent_len,
            } => write!(
                f,
                "{url}: interleave offset {offset} exceeds parent body length {parent_len}"
            ),
            Violation::DuplicateRank { rank } => write!(f, "duplicate rank {rank}"),
            Violation::UnknownResource { url } => write!(f, "{url} is not in the archive"),
        }
    }
}

/// Check a strategy against an archive: unpushable URLs, offsets beyond the
/// parent body, duplicate ranks. An empty list means valid.
pub fn validate(strategy: &PushStrategy, archive: &Archive) -> Vec<Violation> {
    let mut violations = Vec::new();
    let base = archive.base_document();
    let parent_len = base.map(|e| e.response.body.len() as u64).unwrap_or(0);
    let pushable: BTreeSet<String> = base
        .and_then(|b| archive.pushable_set(&b.request.authority).ok())
        .map(|set| set.iter().map(|e| e.url()).collect())
        .unwrap_or_default();

    let mut ranks = BTreeSet::new();
    for directive in &strategy.directives {
        if archive.find_by_url(&directive.resource_url).is_none() {
            violations.push(Violation::UnknownResource {
                url: directive.resource_url.clone(),
            });
        } else if !pushable.contains(&directive.resource_url) {
            violations.push(Violation::Unpushable {
                url: directive.resource_url.clone(),
            });
        }
        if let Some(offset) = directive.interleave_offset {
            if offset > parent_len {
                violations.push(Violation::OffsetBeyondParent {
                    url: directive.resource_url.clone(),
                    offset,
                    parent_len,
                });
            }
        }
        if !ranks.insert(directive.rank) {
            violations.push(Violation::DuplicateRank {
                rank: directive.rank,
            });
        }
    }
    violations
}

// ---------------------------------------------------------------------------
// Critical-CSS HTML rewriting
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RewriteError {
    #[error("document has no head element")]
    NoHead,
    #[error("document has no body close tag")]
    NoBodyEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteOutcome {
    pub html: Vec<u8>,
    /// Demoted URLs that were not referenced in the document.
    pub warnings: Vec<String>,
}

fn link_matches(tag: &html::Tag, url: &str) -> bool {
    html::is_stylesheet(tag) && tag.attr("href") == Some(url)
}

/// Insert the critical stylesheet as the first stylesheet in the head and
/// move every demoted stylesheet reference to just before `</body>`. All
/// other bytes are preserved; applying the same rewrite twice is a no-op.
pub fn apply_rewrite(
    html_body: &[u8],
    rewrite: &CriticalCssRewrite,
) -> Result<RewriteOutcome, RewriteError> {
    let tags = html::scan_tags(html_body);
    let head_open = tags
        .iter()
        .find(|t| !t.is_closing && t.name == "head")
        .ok_or(RewriteError::NoHead)?;
    let head_close = tags
        .iter()
        .find(|t| t.is_closing && t.name == "head")
        .map(|t| t.start)
        .unwrap_or(html_body.len());
    let body_close = tags
        .iter()
        .find(|t| t.is_closing && t.name == "body")
        .map(|t| t.start)
        .ok_or(RewriteError::NoBodyEnd)?;

    let mut warnings = Vec::new();

    // Demoted stylesheet tags, in document order, with their byte spans.
    let mut demoted: Vec<&html::Tag> = Vec::new();
    for url in &rewrite.demoted_css_urls {
        match tags.iter().find(|t| link_matches(t, url)) {
            Some(tag) => demoted.push(tag),
            None => warnings.push(format!("demoted stylesheet {url} not referenced")),
        }
    }
    demoted.sort_by_key(|t| t.start);
    demoted.dedup_by_key(|t| t.start);

    // Tags already sitting directly before </body> need no move; this is
    // what makes the rewrite idempotent.
    let critical_present = tags
        .iter()
        .any(|t| link_matches(t, &rewrite.critical_css_url));
    let first_head_sheet = tags
        .iter()
        .find(|t| {
            html::is_stylesheet(t)
                && t.start >= head_open.end
                && t.start < head_close
                && !demoted.iter().any(|d| d.start == t.start)
        })
        .map(|t| t.start);
    let critical_insert_at = if critical_present {
        None
    } else {
        Some(first_head_sheet.unwrap_or(head_close))
    };

    let mut moved: Vec<u8> = Vec::new();
    let mut cut: Vec<(usize, usize)> = Vec::new();
    for tag in &demoted {
        moved.extend_from_slice(&html_body[tag.start..tag.end]);
        cut.push((tag.start, tag.end));
    }

    let mut out = Vec::with_capacity(html_body.len() + 96);
    let critical_tag = format!(
        "<link rel=\"stylesheet\" href=\"{}\">",
        rewrite.critical_css_url
    );
    let mut pos = 0;
    for &(start, end) in &cut {
        let upto = start.min(html_body.len());
        emit_with_inserts(
            &mut out,
            html_body,
            &mut pos,
            upto,
            critical_insert_at,
            &critical_tag,
            body_close,
            &moved,
        );
        pos = end;
    }
    emit_with_inserts(
        &mut out,
        html_body,
        &mut pos,
        html_body.len(),
        critical_insert_at,
        &critical_tag,
        body_close,
        &moved,
    );
    Ok(RewriteOutcome {
        html: out,
        warnings,
    })
}

/// Copy `input[*pos..upto]`, inserting the critical link and the moved block
/// at their positions when crossed.
#[allow(clippy::too_many_arguments)]
fn emit_with_inserts(
    out: &mut Vec<u8>,
    input: &[u8],
    pos: &mut usize,
    upto: usize,
    critical_at: Option<usize>,
    critical_tag: &str,
    body_close: usize,
    moved: &[u8],
) {
    let mut marks: Vec<(usize, &[u8])> = Vec::new();
    if let Some(at) = critical_at {
        if at >= *pos && at <= upto && (at < upto || upto == input.len()) {
            marks.push((at, critical_tag.as_bytes()));
        }
    }
    if body_close >= *pos && body_close <= upto && !moved.is_empty() {
        marks.push((body_close, moved));
    }
    marks.sort_by_key(|&(at, _)| at);
    for (at, bytes) in marks {
        out.extend_from_slice(&input[*pos..at]);
        out.extend_from_slice(bytes);
        *pos = at;
    }
    out.extend_from_slice(&input[*pos..upto]);
    *pos = upto;
}
